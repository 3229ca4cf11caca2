"""Photon-pair source: pump-to-pair-rate calibration and transverse correlation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Operating point of the reference source: 2.5 W of 532 nm pump -> ~8.7e11 pairs/s.
REFERENCE_MAX_PUMP_MW = 2500.0
REFERENCE_MAX_PAIR_RATE = 8.7e11

# Correlation drops by 10 % at 30 um pair separation.
REFERENCE_SEPARATION_UM = 30.0
REFERENCE_CORRELATION = 0.90


@dataclass(frozen=True)
class SpdcSource:
    pairs_per_mW: float = REFERENCE_MAX_PAIR_RATE / REFERENCE_MAX_PUMP_MW
    max_pump_power_mW: float = REFERENCE_MAX_PUMP_MW
    pump_wavelength_nm: float = 532.0
    crystal_length_cm: float = 2.0
    pump_waist_um: float = 70.0
    center_wavelength_nm: float = 1064.0
    bandwidth_nm: float = 30.0

    def __post_init__(self):
        if not self.pairs_per_mW > 0:
            raise ValueError("pairs_per_mW must be positive")
        if not self.max_pump_power_mW > 0:
            raise ValueError("max pump power must be positive")

    @property
    def max_pair_rate(self) -> float:
        return pair_rate(self, self.max_pump_power_mW)


def pair_rate(src: SpdcSource, pump_power_mW) -> float:
    """Pairs per second at the given pump power; linear by construction."""
    p = np.asarray(pump_power_mW, dtype=float)
    if np.any(p < 0) or np.any(p > src.max_pump_power_mW):
        raise ValueError(
            f"pump power must lie in [0, {src.max_pump_power_mW}] mW, got {pump_power_mW}"
        )
    out = src.pairs_per_mW * p
    return float(out) if out.ndim == 0 else out


def calibrated_sigma(
    separation_um: float = REFERENCE_SEPARATION_UM, correlation: float = REFERENCE_CORRELATION
) -> float:
    """Gaussian width giving ``correlation`` at ``separation_um``."""
    if not 0 < correlation < 1:
        raise ValueError("anchor correlation must lie in (0, 1)")
    return separation_um / math.sqrt(2.0 * math.log(1.0 / correlation))


@dataclass(frozen=True)
class TransverseCorrelation:
    sigma_corr_um: float = calibrated_sigma()
    model_id: str = "gaussian"

    def __post_init__(self):
        if not self.sigma_corr_um > 0:
            raise ValueError("sigma_corr must be positive")


def transverse_correlation(tc: TransverseCorrelation, delta_x_um):
    dx = np.asarray(delta_x_um, dtype=float)
    out = np.exp(-(dx**2) / (2.0 * tc.sigma_corr_um**2))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AreaCheck:
    ok: bool
    min_correlation: float
    threshold: float = 0.5


def entanglement_area_check(
    tc: TransverseCorrelation, max_beam_radius_um: float, threshold: float = 0.5
) -> AreaCheck:
    """Whether A_e = A is tenable: most pairs stay correlated across the spot."""
    if max_beam_radius_um < 0:
        raise ValueError("beam radius must be nonnegative")
    c = transverse_correlation(tc, max_beam_radius_um)
    return AreaCheck(ok=bool(c >= threshold), min_correlation=c, threshold=threshold)
