"""Adaptive sounding, speed estimation, edge-aware receive periods and the
per-node energy accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .errors import InvalidParameterError, InvalidPeriodError, OutOfZoneError, UndefinedEfficiencyError
from .geometry import Position, Zone

SPEED_WINDOW = 5
REQUIRED_CONSECUTIVE = 3
DEFAULT_TRANSMIT_PERIOD = 1.0
EDGE_RECEIVE_PERIOD = 1.0
CENTER_RECEIVE_PERIOD = 3.0
STATIONARY_PERIOD = 3.0

# (exclusive upper speed bound, sounding period); anything faster gets FAST_PERIOD.
SPEED_BANDS = ((0.1, STATIONARY_PERIOD), (0.5, 2.0), (1.0, 1.0), (1.5, 0.5))
FAST_PERIOD = 0.2


@dataclass(frozen=True)
class TrackState:
    mn_id: int
    history: tuple[tuple[float, Position], ...] = ()
    speed_estimate: Optional[float] = None
    transmit_period: float = DEFAULT_TRANSMIT_PERIOD
    receive_period: float = CENTER_RECEIVE_PERIOD
    consecutive_band_hits: int = 0

    def __post_init__(self):
        times = [t for t, _ in self.history]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidParameterError(f"MN {self.mn_id}: history timestamps must increase")
        if not self.receive_period > 0:
            raise InvalidParameterError("receive_period must be positive")

    def observe(self, timestamp: float, position: Position, keep: int = 64) -> "TrackState":
        hist = (self.history + ((timestamp, position),))[-keep:]
        return replace(self, history=hist)


def estimate_speed(history: Sequence[tuple[float, Position]], window: int = SPEED_WINDOW) -> Optional[float]:
    """Path length over the last ``window`` estimates divided by elapsed time.

    Returns None when fewer than two estimates are available.
    """
    recent = list(history)[-window:]
    if len(recent) < 2:
        return None
    elapsed = recent[-1][0] - recent[0][0]
    if elapsed <= 0:
        return None
    path = math.fsum(a.distance_to(b) for (_, a), (_, b) in zip(recent, recent[1:]))
    return path / elapsed


def duty_cycle_for_speed(speed: float) -> float:
    if speed < 0:
        raise InvalidParameterError(f"speed must be >= 0, got {speed}")
    for upper, period in SPEED_BANDS:
        if speed < upper:
            return period
    return FAST_PERIOD


@dataclass(frozen=True)
class PeriodCommand:
    mn_id: int
    transmit_period: float


def maybe_adjust_sounding(
    track: TrackState, required_consecutive: int = REQUIRED_CONSECUTIVE
) -> tuple[TrackState, Optional[PeriodCommand]]:
    """Debounced sounding-period update from the current speed estimate."""
    if track.speed_estimate is None:
        return track, None
    target = duty_cycle_for_speed(track.speed_estimate)
    if target == track.transmit_period:
        return replace(track, consecutive_band_hits=0), None
    hits = track.consecutive_band_hits + 1
    if hits >= required_consecutive:
        return (
            replace(track, transmit_period=target, consecutive_band_hits=0),
            PeriodCommand(track.mn_id, target),
        )
    return replace(track, consecutive_band_hits=hits), None


def receive_period_for_position(
    position: Position,
    zone: Zone,
    edge_band: float = 2.0,
    edge_period: float = EDGE_RECEIVE_PERIOD,
    center_period: float = CENTER_RECEIVE_PERIOD,
) -> float:
    if not zone.contains(position):
        raise OutOfZoneError(f"({position.x}, {position.y}) is outside zone {zone.id}")
    if zone.polygon.border_distance(position) < edge_band:
        return edge_period
    return center_period


# -- energy -------------------------------------------------------------------

MODES = ("transmit", "receive", "sleep")


@dataclass(frozen=True)
class EnergyModel:
    voltage: float = 3.3
    current_tx: float = 0.110
    current_rx: float = 0.030
    current_sleep: float = 1e-6
    tx_duration: float = 1e-3

    def __post_init__(self):
        for name in ("voltage", "current_tx", "current_rx", "current_sleep", "tx_duration"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if not self.current_sleep < self.current_rx < self.current_tx:
            raise InvalidParameterError("expected sleep < receive < transmit current")

    def power(self, mode: str) -> float:
        current = {"transmit": self.current_tx, "receive": self.current_rx, "sleep": self.current_sleep}
        try:
            return self.voltage * current[mode]
        except KeyError:
            raise InvalidParameterError(f"unknown radio mode {mode!r}") from None


def sounding_energy(model: EnergyModel, period: float) -> float:
    """Joules spent per sounding cycle: one transmission, then sleep."""
    if period < model.tx_duration:
        raise InvalidPeriodError(f"sounding period {period} s is shorter than T_x {model.tx_duration} s")
    return model.power("transmit") * model.tx_duration + model.power("sleep") * (period - model.tx_duration)


def localization_efficiency(mean_error: float, energy: float) -> float:
    """Inverse squared error per joule."""
    if not (mean_error > 0 and energy > 0):
        raise UndefinedEfficiencyError(f"need positive error and energy, got {mean_error}, {energy}")
    return (1.0 / mean_error**2) / energy


@dataclass(frozen=True)
class EfficiencyReport:
    mean_error: float
    energy: float
    eta: float

    @classmethod
    def from_measurements(cls, mean_error: float, energy: float) -> "EfficiencyReport":
        return cls(mean_error, energy, localization_efficiency(mean_error, energy))


@dataclass(frozen=True)
class EnergyLedger:
    joules: dict = field(default_factory=lambda: dict.fromkeys(MODES, 0.0))
    seconds: dict = field(default_factory=lambda: dict.fromkeys(MODES, 0.0))

    @property
    def total(self) -> float:
        return math.fsum(self.joules[m] for m in MODES)

    @property
    def elapsed(self) -> float:
        return math.fsum(self.seconds[m] for m in MODES)


def ledger_accrue(ledger: EnergyLedger, mode: str, duration: float, model: EnergyModel) -> EnergyLedger:
    if duration < 0:
        raise InvalidParameterError(f"negative duration {duration}")
    power = model.power(mode)
    if duration == 0:
        return ledger
    joules = dict(ledger.joules)
    seconds = dict(ledger.seconds)
    joules[mode] += power * duration
    seconds[mode] += duration
    return EnergyLedger(joules, seconds)
