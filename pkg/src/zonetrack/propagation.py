"""Log-distance path loss with Gaussian shadowing, quantized to 8-bit RSSI."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParameterError
from .geometry import RSSI_MAX, RSSI_MIN, Position


@dataclass(frozen=True)
class PropagationModel:
    tx_power: float = 20.0  # dBm
    pl_d0: float = 60.0  # dB at d0
    d0: float = 1.0  # m
    exponent: float = 2.2
    shadowing_sigma: float = 3.0  # dB
    noise_floor: float = -75.0  # dBm; weaker signals are not heard

    def __post_init__(self):
        if not self.d0 > 0:
            raise InvalidParameterError(f"d0 must be positive, got {self.d0}")
        if not self.exponent > 0:
            raise InvalidParameterError(f"exponent must be positive, got {self.exponent}")
        if self.shadowing_sigma < 0:
            raise InvalidParameterError(f"shadowing_sigma must be >= 0, got {self.shadowing_sigma}")
        if self.noise_floor > RSSI_MIN:
            raise InvalidParameterError(f"noise_floor must be <= {RSSI_MIN} dBm, got {self.noise_floor}")

    def mean_rss(self, distance: float) -> float:
        d = max(distance, self.d0)
        return self.tx_power - self.pl_d0 - 10.0 * self.exponent * math.log10(d / self.d0)

    @property
    def hearing_range(self) -> float:
        """Distance at which the noiseless RSS drops to the noise floor."""
        margin = self.tx_power - self.pl_d0 - self.noise_floor
        return self.d0 * 10.0 ** (margin / (10.0 * self.exponent))


INDOOR = PropagationModel(exponent=2.2, shadowing_sigma=3.0)
OUTDOOR_LOS = PropagationModel(exponent=2.0, shadowing_sigma=2.0)
PRESETS = {"indoor": INDOOR, "outdoor": OUTDOOR_LOS}


def predict_rss(model: PropagationModel, tx: Position, rx: Position, noise_draw: float = 0.0) -> Optional[float]:
    """Received power in dBm, or None when below the hearing threshold."""
    rss = model.mean_rss(tx.distance_to(rx)) + noise_draw
    if rss < model.noise_floor:
        return None
    return rss


def quantize_rssi(rss: float) -> int:
    if not math.isfinite(rss):
        raise InvalidParameterError(f"cannot quantize non-finite RSS {rss}")
    # Nearest integer, halves toward -inf.
    q = math.ceil(rss - 0.5)
    return min(max(q, RSSI_MIN), RSSI_MAX)


def sample_rss(model: PropagationModel, tx: Position, rx: Position, rng: np.random.Generator) -> Optional[int]:
    noise = float(rng.normal(0.0, model.shadowing_sigma)) if model.shadowing_sigma > 0 else 0.0
    rss = predict_rss(model, tx, rx, noise)
    return None if rss is None else quantize_rssi(rss)


def sample_rss_vector(
    model: PropagationModel,
    tx: Position,
    receivers: list[Position],
    rng: np.random.Generator,
) -> list[Optional[int]]:
    """One draw per receiver, taken from ``rng`` in receiver order."""
    return [sample_rss(model, tx, rx, rng) for rx in receivers]
