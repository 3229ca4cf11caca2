"""Gaussian-beam geometry and effective detection waists.

All lengths are held in micrometres. Wavelengths given in nm are converted
at construction (see :meth:`GaussianBeam.from_nm`).
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class FormulaMode(str, enum.Enum):
    """Which form of the effective-waist expressions to evaluate.

    ``PAPER`` evaluates the printed expression verbatim (pi**4 factors and
    the printed denominator grouping). ``CORRECTED`` uses pi**2 with standard
    precedence, which is dimensionally a length.
    """

    PAPER = "paper"
    CORRECTED = "corrected"

    @classmethod
    def coerce(cls, value: "FormulaMode | str") -> "FormulaMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown formula mode {value!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class GaussianBeam:
    wavelength_um: float
    waist_w0_um: float
    numerical_aperture: float

    def __post_init__(self):
        if not self.wavelength_um > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength_um}")
        if not self.waist_w0_um > 0:
            raise ValueError(f"waist must be positive, got {self.waist_w0_um}")
        if not 0 < self.numerical_aperture < 1:
            raise ValueError(
                f"numerical aperture must lie in (0, 1), got {self.numerical_aperture}"
            )

    @classmethod
    def from_nm(cls, wavelength_nm: float, waist_um: float, numerical_aperture: float):
        return cls(wavelength_nm * 1e-3, waist_um, numerical_aperture)

    @property
    def wavelength_nm(self) -> float:
        return self.wavelength_um * 1e3


@dataclass(frozen=True)
class Detector:
    radius_wd_um: float

    def __post_init__(self):
        if not self.radius_wd_um > 0:
            raise ValueError(f"detector radius must be positive, got {self.radius_wd_um}")


def rayleigh_range(beam: GaussianBeam) -> float:
    """Rayleigh range pi*w0**2/lambda in um."""
    return math.pi * beam.waist_w0_um**2 / beam.wavelength_um


def waist_at(beam: GaussianBeam, z):
    """1/e**2 beam radius at axial distance ``z`` (um) from the focus."""
    zr = rayleigh_range(beam)
    return beam.waist_w0_um * np.sqrt(1.0 + (np.asarray(z, dtype=float) / zr) ** 2)


def _waist_terms(beam: GaussianBeam, det: Detector):
    return (
        beam.wavelength_um,
        beam.waist_w0_um,
        beam.numerical_aperture,
        det.radius_wd_um,
    )


def effective_waist_spa(
    beam: GaussianBeam, det: Detector, mode: FormulaMode | str = FormulaMode.CORRECTED
) -> float:
    """Effective axial waist w_z for single-photon excitation (um)."""
    mode = FormulaMode.coerce(mode)
    lam, w0, na, wd = _waist_terms(beam, det)
    if mode is FormulaMode.CORRECTED:
        num = w0**2 + lam**2 / (4 * math.pi**2 * na**2) + 2 * wd**2
        den = lam**2 / (4 * math.pi**2 * w0**2) + na**2
    else:
        num = w0**2 + lam**2 / (4 * math.pi**4 * na**2) + 2 * wd**2
        den = lam**2 / ((4 * math.pi**4 * w0**2) + na**2)
    value = math.sqrt(num / den)
    log.debug("w_z[%s] = %.6g um", mode.value, value)
    return value


def effective_waist_tpa(
    beam: GaussianBeam, det: Detector, mode: FormulaMode | str = FormulaMode.CORRECTED
) -> float:
    """Effective axial waist w_zTP for two-photon excitation (um).

    ``beam.wavelength_um`` is the two-photon excitation wavelength.
    """
    mode = FormulaMode.coerce(mode)
    lam, w0, na, wd = _waist_terms(beam, det)
    if mode is FormulaMode.CORRECTED:
        num = w0**2 + lam**2 / (2 * math.pi**2 * na**2) + 2 * wd**2
        den = lam**2 / (4 * math.pi**2 * w0**2) + 2 * na**2
    else:
        num = w0**2 + lam**2 / (2 * math.pi**4 * na**2) + 2 * wd**2
        den = lam**2 / ((4 * math.pi**4 * w0**2) + 2 * na**2)
    value = math.sqrt(num / den)
    log.debug("w_zTP[%s] = %.6g um", mode.value, value)
    return value


def compare_modes(beam: GaussianBeam, det: Detector, two_photon: bool = False) -> dict:
    """Evaluate both formula modes and log their difference."""
    fn = effective_waist_tpa if two_photon else effective_waist_spa
    paper = fn(beam, det, FormulaMode.PAPER)
    corrected = fn(beam, det, FormulaMode.CORRECTED)
    log.info(
        "effective waist (%s): paper=%.6g um corrected=%.6g um diff=%.6g um",
        "tpa" if two_photon else "spa",
        paper,
        corrected,
        paper - corrected,
    )
    return {"paper": paper, "corrected": corrected, "difference": paper - corrected}
