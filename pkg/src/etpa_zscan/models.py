"""Absorption-rate laws and normalized axial fluorescence profiles."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .optics import (
    Detector,
    FormulaMode,
    GaussianBeam,
    effective_waist_spa,
    effective_waist_tpa,
    rayleigh_range,
)

AVOGADRO = 6.02214076e23
GM_CM4_S = 1e-50
UM_TO_CM = 1e-4
SPDC_CENTER_WAVELENGTH_UM = 1.064


class ProfileError(ValueError):
    """Raised when a profile width cannot be resolved on its grid."""


@dataclass(frozen=True)
class Sample:
    """Absorbing sample.

    ``half_thickness_d_um`` is the ``d`` of the axial profiles; the physical
    path length used in the rate laws is twice that.
    """

    concentration_cm3: float
    half_thickness_d_um: float
    tpa_cross_section_gm: float = 0.0
    etpa_cross_section_cm2: float | None = None

    def __post_init__(self):
        if not self.concentration_cm3 > 0:
            raise ValueError("concentration must be positive")
        if not self.half_thickness_d_um > 0:
            raise ValueError("half thickness must be positive")
        if self.tpa_cross_section_gm < 0:
            raise ValueError("TPA cross section must be nonnegative")
        if self.etpa_cross_section_cm2 is not None and self.etpa_cross_section_cm2 < 0:
            raise ValueError("ETPA cross section must be nonnegative")

    @classmethod
    def from_mM(cls, concentration_mM: float, half_thickness_d_um: float, **kw) -> "Sample":
        # mol/L -> molecules/cm^3: mM * 1e-3 mol/L * N_A / 1000 cm^3/L
        return cls(concentration_mM * 1e-3 * AVOGADRO / 1000.0, half_thickness_d_um, **kw)

    @property
    def path_length_cm(self) -> float:
        return 2.0 * self.half_thickness_d_um * UM_TO_CM

    @property
    def tpa_cross_section_cgs(self) -> float:
        return self.tpa_cross_section_gm * GM_CM4_S


@dataclass(frozen=True)
class PairFieldParams:
    entanglement_area_cm2: float
    coherence_time_s: float

    def __post_init__(self):
        if not self.entanglement_area_cm2 > 0:
            raise ValueError("entanglement area must be positive")
        if not self.coherence_time_s > 0:
            raise ValueError("coherence time must be positive")


@dataclass(frozen=True)
class AxialProfile:
    positions: np.ndarray
    values: np.ndarray
    normalization: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size == 0:
            raise ValueError("profile needs a nonempty 1-D grid")
        if pos.size > 1 and not np.all(np.diff(pos) > 0):
            raise ValueError("profile positions must be strictly increasing")


def beam_area_cm2(beam: GaussianBeam) -> float:
    """Focal area pi*w0**2 in cm**2."""
    return math.pi * (beam.waist_w0_um * UM_TO_CM) ** 2


def tpa_rate(sample: Sample, beam_area_A: float, laser_rate) -> float:
    """Classical two-photon absorption events per second."""
    if not beam_area_A > 0:
        raise ValueError("beam area must be positive")
    if np.any(np.asarray(laser_rate) < 0):
        raise ValueError("laser rate must be nonnegative")
    C, l, delta = sample.concentration_cm3, sample.path_length_cm, sample.tpa_cross_section_cgs
    return C * beam_area_A * l * delta * laser_rate**2 / beam_area_A**2


def etpa_cross_section(sample: Sample, pair_params: PairFieldParams) -> float:
    """sigma_e = delta / (A_e * T), in cm**2."""
    return sample.tpa_cross_section_cgs / (
        pair_params.entanglement_area_cm2 * pair_params.coherence_time_s
    )


def etpa_rate(
    sample: Sample, beam_area_A: float, pair_params: PairFieldParams | None, pair_rate
) -> float:
    """Entangled two-photon absorption events per second.

    With ``pair_params=None`` the sample's own ``etpa_cross_section_cm2`` is
    used and the entanglement area is taken equal to the beam area.
    """
    if not beam_area_A > 0:
        raise ValueError("beam area must be positive")
    if np.any(np.asarray(pair_rate) < 0):
        raise ValueError("pair rate must be nonnegative")
    C, l = sample.concentration_cm3, sample.path_length_cm
    if pair_params is None:
        if sample.etpa_cross_section_cm2 is None:
            raise ValueError("sample has no ETPA cross section and no pair parameters given")
        # A_e = A: sigma_e is already the per-area quantity
        return C * l * sample.etpa_cross_section_cm2 * pair_rate
    sigma_e = etpa_cross_section(sample, pair_params)
    return C * beam_area_A * l * sigma_e * pair_rate / beam_area_A


def _arctan_window(z, d, width):
    return np.arctan((z + d) / width) - np.arctan((z - d) / width)


def _normalize(z, raw, metadata) -> AxialProfile:
    raw = np.asarray(raw, dtype=float)
    peak = raw[np.argmax(np.abs(raw))]
    flipped = bool(peak < 0)
    if flipped:
        raw = -raw
        peak = -peak
    metadata = dict(metadata, sign_flipped=flipped)
    if peak == 0:
        return AxialProfile(z, raw, 0.0, metadata)
    return AxialProfile(z, raw / peak, float(peak), metadata)


def _grid(z_grid) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z_grid, dtype=float))
    if z.size == 0:
        raise ValueError("z grid is empty")
    if z.size > 1 and not np.all(np.diff(z) > 0):
        raise ValueError("z grid must be strictly increasing")
    return z


def spa_curve(z, d, w_z):
    return _arctan_window(z, d, w_z)


def tpa_curve(z, d, w_ztp, z_r):
    return w_ztp * _arctan_window(z, d, z_r) - z_r * _arctan_window(z, d, w_ztp)


def zscan_profile_spa(
    beam: GaussianBeam,
    det: Detector,
    sample: Sample,
    mode: FormulaMode | str = FormulaMode.CORRECTED,
    z_grid=None,
) -> AxialProfile:
    mode = FormulaMode.coerce(mode)
    z = _grid(z_grid)
    w_z = effective_waist_spa(beam, det, mode)
    raw = spa_curve(z, sample.half_thickness_d_um, w_z)
    return _normalize(z, raw, {"model": "spa", "mode": mode.value, "w_z_um": w_z})


def zscan_profile_tpa(
    beam: GaussianBeam,
    det: Detector,
    sample: Sample,
    mode: FormulaMode | str = FormulaMode.CORRECTED,
    z_grid=None,
) -> AxialProfile:
    mode = FormulaMode.coerce(mode)
    z = _grid(z_grid)
    w_ztp = effective_waist_tpa(beam, det, mode)
    z_r = rayleigh_range(beam)
    raw = tpa_curve(z, sample.half_thickness_d_um, w_ztp, z_r)
    meta = {"model": "tpa", "mode": mode.value, "w_ztp_um": w_ztp, "z_r_um": z_r}
    return _normalize(z, raw, meta)


def zscan_profile_etpa(
    beam: GaussianBeam,
    det: Detector,
    sample: Sample,
    mode: FormulaMode | str = FormulaMode.CORRECTED,
    z_grid=None,
) -> AxialProfile:
    """TPA-shaped profile evaluated at the SPDC centre wavelength (1064 nm)."""
    beam = dataclasses.replace(beam, wavelength_um=SPDC_CENTER_WAVELENGTH_UM)
    prof = zscan_profile_tpa(beam, det, sample, mode, z_grid)
    return dataclasses.replace(prof, metadata=dict(prof.metadata, model="etpa"))


PROFILE_MODELS = {
    "spa": zscan_profile_spa,
    "tpa": zscan_profile_tpa,
    "etpa": zscan_profile_etpa,
}


def zscan_profile(model: str, beam, det, sample, mode=FormulaMode.CORRECTED, z_grid=None):
    try:
        fn = PROFILE_MODELS[model]
    except KeyError:
        raise ValueError(f"unknown profile model {model!r}") from None
    return fn(beam, det, sample, mode, z_grid)


def profile_fwhm(profile: AxialProfile) -> float:
    """Full width at half maximum, linearly interpolated between samples."""
    z = np.asarray(profile.positions, dtype=float)
    y = np.asarray(profile.values, dtype=float)
    i = int(np.argmax(y))
    if i == 0 or i == y.size - 1:
        raise ProfileError("profile not resolvable: peak on grid boundary")
    half = 0.5 * y[i]

    left = np.nonzero(y[:i] < half)[0]
    right = np.nonzero(y[i + 1 :] < half)[0]
    if left.size == 0 or right.size == 0:
        raise ProfileError("profile not resolvable: half maximum not bracketed")
    lo = left[-1]
    hi = i + 1 + right[0]

    def crossing(a, b):
        return z[a] + (half - y[a]) * (z[b] - z[a]) / (y[b] - y[a])

    return float(crossing(hi - 1, hi) - crossing(lo, lo + 1))
