"""Exception hierarchy shared by all zonetrack modules."""


class ZonetrackError(Exception):
    """Base class for every error raised by this package."""


class InvalidGeometryError(ZonetrackError):
    pass


class InsufficientDataError(ZonetrackError):
    pass


class InconsistentMapError(ZonetrackError):
    pass


class InvalidParameterError(ZonetrackError):
    pass


class AllocationInfeasibleError(ZonetrackError):
    def __init__(self, zone_id):
        super().__init__(f"no feasible channel for zone {zone_id}")
        self.zone_id = zone_id


class ProtocolViolationError(ZonetrackError):
    pass


class OutOfZoneError(ZonetrackError):
    pass


class InvalidPeriodError(ZonetrackError):
    pass


class UndefinedEfficiencyError(ZonetrackError):
    pass


class InvalidScenarioError(ZonetrackError):
    pass


class ConfigError(ZonetrackError):
    """Scenario document failed validation.

    ``path`` is the dotted key path and ``line`` the 1-based source line,
    when known.
    """

    def __init__(self, message, path="", line=None):
        where = path or "<root>"
        if line is not None:
            where = f"{where} (line {line})"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class MapFormatError(ZonetrackError):
    def __init__(self, filename, line, message):
        super().__init__(f"{filename}:{line}: {message}")
        self.filename = filename
        self.line = line


class SimulationInvariantError(ZonetrackError):
    def __init__(self, event, message):
        super().__init__(f"invariant violated while handling {event}: {message}")
        self.event = event
