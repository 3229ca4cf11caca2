"""Inverse analysis: attenuation-law fits, signature classification,
Z-scan profile fitting, model selection and cross-section estimation."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .models import Sample, beam_area_cm2, zscan_profile
from .optics import Detector, FormulaMode, GaussianBeam
from .simkit import CorrectedSeries

DEFAULT_RATIO_THRESHOLD = 0.8
MAX_ITERATIONS = 500
COST_RTOL = 1e-10
JAC_REL_STEP = 1e-6
RANK_RTOL = 1e-8
# Largest accepted change of a log-parameter per iteration (factor e**0.5).
MAX_LOG_STEP = 0.5

AREA_CONVENTION = "A = pi * w0**2 (w0 = 1/e^2 focal radius)"
# Quoted reference sigma_e*A value; kept only to flag that it is not reproduced.
REFERENCE_SIGMA_E_TIMES_A = 2e-34

FREE_PARAMETERS = ("d", "w0", "wd")


class RankError(np.linalg.LinAlgError):
    """Normal equations are singular: the requested parameters are not identifiable."""


@dataclass(frozen=True)
class Param:
    value: float
    sigma: float


@dataclass
class FitResult:
    model_id: str
    params: dict[str, Param]
    r_squared: float
    rmse: float
    converged: bool = True
    iterations: int = 0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_iterations: int = MAX_ITERATIONS
    provenance: dict = field(default_factory=dict)

    def value(self, name: str) -> float:
        return self.params[name].value

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "params": {
                k: {"value": _finite(p.value), "sigma": _finite(p.sigma)}
                for k, p in self.params.items()
            },
            "r_squared": _finite(self.r_squared),
            "rmse": _finite(self.rmse),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residuals": [float(r) for r in self.residuals],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        params = {
            k: Param(float(v["value"]), float("nan") if v["sigma"] is None else float(v["sigma"]))
            for k, v in d["params"].items()
        }
        return cls(
            model_id=d["model_id"],
            params=params,
            r_squared=float("nan") if d["r_squared"] is None else d["r_squared"],
            rmse=float("nan") if d["rmse"] is None else d["rmse"],
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            residuals=np.asarray(d.get("residuals", []), dtype=float),
            provenance=d.get("provenance", {}),
        )


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def goodness_of_fit(y, model) -> tuple[float, float, np.ndarray]:
    """(R**2, RMSE on peak-normalized data, residuals)."""
    y = np.asarray(y, dtype=float)
    res = y - np.asarray(model, dtype=float)
    ss_res = float(res @ res)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    peak = float(np.max(np.abs(y))) if y.size else 0.0
    scale = peak if peak > 0 else 1.0
    rmse = math.sqrt(ss_res / y.size) / scale
    return r2, rmse, res


# -- attenuation laws ------------------------------------------------------


def _points(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = [tuple(p) for p in points]
    x = np.array([p[0] for p in arr], dtype=float)
    y = np.array([p[1] for p in arr], dtype=float)
    if arr and len(arr[0]) > 2:
        s = np.array([p[2] for p in arr], dtype=float)
    else:
        s = np.ones_like(y)
    if np.unique(x).size < 2:
        raise RankError("need at least two distinct x values")
    good = s[s > 0]
    floor = good.min() if good.size else 1.0
    return x, y, np.where(s > 0, s, floor)


def _power_law_fit(points, power: int, model_id: str, intercept: bool) -> FitResult:
    x, y, s = _points(points)
    cols = [x**power] + ([np.ones_like(x)] if intercept else [])
    X = np.column_stack(cols)
    w = 1.0 / s
    Xw, yw = X * w[:, None], y * w
    coef, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < X.shape[1]:
        raise RankError("design matrix is rank deficient")
    model = X @ coef
    r2, rmse, res = goodness_of_fit(y, model)

    dof = x.size - X.shape[1]
    wres = res * w
    s2 = float(wres @ wres) / dof if dof > 0 else float("nan")
    cov = np.linalg.inv(Xw.T @ Xw) * s2
    sig = np.sqrt(np.diag(cov))
    names = ["a" if power == 1 else "b"] + (["c"] if intercept else [])
    params = {n: Param(float(v), float(e)) for n, v, e in zip(names, coef, sig)}
    return FitResult(model_id, params, r2, rmse, True, 0, res)


def fit_linear(points, intercept: bool = False) -> FitResult:
    """Weighted least squares ``y = a*x`` (``+ c`` with ``intercept``)."""
    return _power_law_fit(points, 1, "linear", intercept)


def fit_quadratic(points, intercept: bool = False) -> FitResult:
    """Weighted least squares ``y = b*x**2`` (``+ c`` with ``intercept``)."""
    return _power_law_fit(points, 2, "quadratic", intercept)


@dataclass(frozen=True)
class SignatureVerdict:
    verdict: str
    rmse_linear: float
    rmse_quadratic: float
    ratio_threshold_used: float
    r_squared_linear: float = float("nan")
    r_squared_quadratic: float = float("nan")

    def to_dict(self) -> dict:
        return {k: (_finite(v) if isinstance(v, float) else v) for k, v in dataclasses.asdict(self).items()}


def _verdict(rmse_lin: float, rmse_quad: float, threshold: float) -> str:
    if rmse_lin == rmse_quad:
        return "inconclusive"
    if rmse_lin <= threshold * rmse_quad:
        return "linear"
    if rmse_quad <= threshold * rmse_lin:
        return "quadratic"
    return "inconclusive"


def signature_verdict(series: CorrectedSeries, ratio_threshold: float = DEFAULT_RATIO_THRESHOLD):
    if len(series.x) < 4:
        raise ValueError("signature classification needs at least 4 points")
    norm = series.normalized()
    pts = list(zip(norm.x, norm.rate, norm.uncertainty))
    lin = fit_linear(pts)
    quad = fit_quadratic(pts)
    return SignatureVerdict(
        _verdict(lin.rmse, quad.rmse, ratio_threshold),
        lin.rmse,
        quad.rmse,
        ratio_threshold,
        lin.r_squared,
        quad.r_squared,
    )


def classify_signature(
    pump_series: CorrectedSeries,
    pair_series: CorrectedSeries,
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
) -> tuple[SignatureVerdict, SignatureVerdict]:
    """Verdicts for the pump- and pair-attenuation series.

    Genuine ETPA shows ``("linear", "quadratic")``; see :func:`confirms_etpa`.
    """
    return (
        signature_verdict(pump_series, ratio_threshold),
        signature_verdict(pair_series, ratio_threshold),
    )


def confirms_etpa(verdicts: tuple[SignatureVerdict, SignatureVerdict]) -> bool:
    pump, pair = verdicts
    return pump.verdict == "linear" and pair.verdict == "quadratic"


# -- Levenberg-Marquardt ---------------------------------------------------


def numeric_jacobian(fun: Callable, theta, rel_step: float = JAC_REL_STEP) -> np.ndarray:
    """Central-difference Jacobian of a vector function."""
    theta = np.asarray(theta, dtype=float)
    f0 = np.asarray(fun(theta), dtype=float)
    J = np.empty((f0.size, theta.size))
    for j in range(theta.size):
        h = rel_step * max(abs(theta[j]), 1.0)
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        J[:, j] = (np.asarray(fun(tp)) - np.asarray(fun(tm))) / (2 * h)
    return J


@dataclass
class LMResult:
    theta: np.ndarray
    cost: float
    jacobian: np.ndarray
    iterations: int
    converged: bool
    message: str


def check_rank(J: np.ndarray, rtol: float = RANK_RTOL) -> None:
    s = np.linalg.svd(J, compute_uv=False)
    if s.size and (s[0] == 0 or s[-1] < rtol * s[0]):
        raise RankError(
            f"singular normal equations (singular values {s[-1]:.3g} / {s[0] if s.size else 0:.3g})"
        )


def levenberg_marquardt(
    model: Callable,
    y,
    theta0,
    max_iter: int = MAX_ITERATIONS,
    ftol: float = COST_RTOL,
    rel_step: float = JAC_REL_STEP,
    max_step: float = MAX_LOG_STEP,
) -> LMResult:
    """Minimize ``sum((y - model(theta))**2)`` with Levenberg damping.

    Steps longer than ``max_step`` in any coordinate are rejected like steps
    that raise the cost, so the damping grows until the step is short enough.
    """
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta0, dtype=float).copy()

    def residual(t):
        return y - np.asarray(model(t), dtype=float)

    r = residual(theta)
    cost = 0.5 * float(r @ r)
    J = numeric_jacobian(model, theta, rel_step)
    check_rank(J)
    lam = 1e-3
    it = 0
    while it < max_iter:
        it += 1
        if cost == 0.0:
            return LMResult(theta, cost, J, it, True, "zero residual")
        A = J.T @ J
        g = J.T @ r
        # Identity damping keeps weakly determined directions near their
        # starting values until the well-determined ones have settled.
        D = np.eye(theta.size) * max(float(np.max(np.diag(A))), 1e-300)
        while True:
            try:
                step = np.linalg.solve(A + lam * D, g)
            except np.linalg.LinAlgError:
                step = np.full_like(theta, np.nan)
            t_new = theta + step
            c_new = math.inf
            if np.all(np.isfinite(step)) and np.max(np.abs(step)) <= max_step:
                try:
                    r_new = residual(t_new)
                    c_new = 0.5 * float(r_new @ r_new)
                except (ValueError, FloatingPointError, OverflowError):
                    pass  # trial left the valid parameter domain
            if math.isfinite(c_new) and c_new < cost:
                break
            lam *= 10.0
            if lam > 1e16:
                return LMResult(theta, cost, J, it, True, "no further decrease")
        rel = (cost - c_new) / cost
        theta, r, cost = t_new, r_new, c_new
        lam = max(lam / 10.0, 1e-12)
        J = numeric_jacobian(model, theta, rel_step)
        if rel < ftol:
            return LMResult(theta, cost, J, it, True, "relative cost change below tolerance")
    return LMResult(theta, cost, J, it, False, "iteration limit reached")


# -- Z-scan fitting --------------------------------------------------------


@dataclass(frozen=True)
class ZscanGeometry:
    beam: GaussianBeam
    detector: Detector
    sample: Sample

    def get(self, name: str) -> float:
        return {
            "d": self.sample.half_thickness_d_um,
            "w0": self.beam.waist_w0_um,
            "wd": self.detector.radius_wd_um,
        }[name]

    def with_params(self, **values) -> "ZscanGeometry":
        geo = self
        if "d" in values:
            geo = dataclasses.replace(
                geo, sample=dataclasses.replace(geo.sample, half_thickness_d_um=values["d"])
            )
        if "w0" in values:
            geo = dataclasses.replace(
                geo, beam=dataclasses.replace(geo.beam, waist_w0_um=values["w0"])
            )
        if "wd" in values:
            geo = dataclasses.replace(geo, detector=Detector(values["wd"]))
        return geo

    def params(self) -> dict[str, float]:
        return {k: self.get(k) for k in FREE_PARAMETERS}


def profile_model(model: str, geometry: ZscanGeometry, mode, free: Sequence[str], z):
    """Log-parameterized profile function ``theta -> normalized values``."""
    z = np.asarray(z, dtype=float)

    def fn(theta):
        vals = dict(zip(free, np.exp(theta)))
        geo = geometry.with_params(**vals)
        return zscan_profile(model, geo.beam, geo.detector, geo.sample, mode, z).values

    return fn


def _series_xy(series) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, CorrectedSeries):
        norm = series.normalized()
        return np.asarray(norm.x, float), np.asarray(norm.rate, float)
    z, y = (np.asarray(a, dtype=float) for a in series)
    peak = np.max(np.abs(y))
    return z, (y / peak if peak > 0 else y)


def fit_zscan(
    series,
    model: str,
    fixed: ZscanGeometry,
    free: Iterable[str] = FREE_PARAMETERS,
    initial_guess: dict | None = None,
    mode: FormulaMode | str = FormulaMode.CORRECTED,
    max_iter: int = MAX_ITERATIONS,
) -> FitResult:
    """Least-squares fit of a normalized axial profile.

    ``series`` is a :class:`CorrectedSeries` or a ``(z, y)`` pair; it is
    peak-normalized before fitting. Parameters named in ``free`` are fitted
    in log space starting from ``initial_guess`` (default: the values held by
    ``fixed``). Non-convergence is reported through ``converged=False``.
    """
    mode = FormulaMode.coerce(mode)
    free = tuple(free)
    unknown = set(free) - set(FREE_PARAMETERS)
    if unknown:
        raise ValueError(f"unknown free parameters {sorted(unknown)}")
    z, y = _series_xy(series)
    guess = fixed.params()
    guess.update({k: v for k, v in (initial_guess or {}).items() if k in free})
    if any(guess[k] <= 0 for k in free):
        raise ValueError("initial guesses must be positive")
    start = fixed.with_params(**{k: guess[k] for k in free})

    prov = {"model": model, "mode": mode.value, "free": list(free), "initial_guess": {k: guess[k] for k in free}}
    if not free:
        vals = zscan_profile(model, start.beam, start.detector, start.sample, mode, z).values
        r2, rmse, res = goodness_of_fit(y, vals)
        params = {k: Param(v, 0.0) for k, v in start.params().items()}
        return FitResult(model, params, r2, rmse, True, 0, res, max_iter, prov)

    fn = profile_model(model, start, mode, free, z)
    theta0 = np.log([guess[k] for k in free])
    lm = levenberg_marquardt(fn, y, theta0, max_iter=max_iter)
    best = np.exp(lm.theta)
    r2, rmse, res = goodness_of_fit(y, fn(lm.theta))

    dof = y.size - len(free)
    s2 = 2.0 * lm.cost / dof if dof > 0 else float("nan")
    try:
        cov = np.linalg.inv(lm.jacobian.T @ lm.jacobian) * s2
        sig_log = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        sig_log = np.full(len(free), np.inf)

    fitted = dict(zip(free, best))
    final = start.with_params(**fitted)
    params = {}
    for k in FREE_PARAMETERS:
        if k in fitted:
            i = free.index(k)
            params[k] = Param(float(best[i]), float(best[i] * sig_log[i]))
        else:
            params[k] = Param(final.get(k), 0.0)
    prov["message"] = lm.message
    return FitResult(model, params, r2, rmse, lm.converged, lm.iterations, res, max_iter, prov)


def fitted_geometry(result: FitResult, geometry: ZscanGeometry) -> ZscanGeometry:
    return geometry.with_params(**{k: p.value for k, p in result.params.items() if k in FREE_PARAMETERS})


@dataclass
class ModelRanking:
    ranked: list[FitResult]
    tie: bool
    ratio_threshold: float

    @property
    def best(self) -> FitResult:
        return self.ranked[0]

    def to_dict(self) -> dict:
        return {
            "ranking": [r.model_id for r in self.ranked],
            "tie": self.tie,
            "ratio_threshold": self.ratio_threshold,
            "fits": [r.to_dict() for r in self.ranked],
        }


def select_model(
    series,
    candidates: Sequence[str] = ("spa", "tpa"),
    fixed: ZscanGeometry | None = None,
    mode: FormulaMode | str = FormulaMode.CORRECTED,
    free: Iterable[str] = (),
    initial_guess: dict | None = None,
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
) -> ModelRanking:
    """Fit every candidate under the same free-parameter policy, rank by RMSE.

    All geometry is held fixed by default, as for ETPA data analysed with
    parameters carried over from classical reference scans.
    """
    if fixed is None:
        raise ValueError("a fixed geometry is required")
    z, _ = _series_xy(series)
    if z.size < 8:
        raise ValueError("model selection needs at least 8 points")
    free = tuple(free)
    fits = [fit_zscan(series, m, fixed, free, initial_guess, mode) for m in candidates]
    fits.sort(key=lambda f: f.rmse)
    tie = len(fits) > 1 and not fits[0].rmse < ratio_threshold * fits[1].rmse
    return ModelRanking(fits, bool(tie), ratio_threshold)


# -- cross sections --------------------------------------------------------


@dataclass
class CrossSectionReport:
    sigma_e_cm2: float
    sigma_e_times_A_cm4: float
    beam_area_cm2: float
    area_convention: str = AREA_CONVENTION
    reference_sigma_e_times_A: float = REFERENCE_SIGMA_E_TIMES_A
    reference_reproduced: bool = False
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def estimate_cross_section(
    slope: float,
    collection_efficiency: float,
    sample: Sample,
    beam: GaussianBeam,
) -> CrossSectionReport:
    """Invert the linear ETPA rate law (A_e = A) for sigma_e.

    ``slope`` is detected counts/s per incident pairs/s. The detected rate is
    ``efficiency * C * l * sigma_e * R_pair``.
    """
    if not slope > 0:
        raise ValueError("slope must be positive")
    if not 0 < collection_efficiency <= 1:
        raise ValueError("collection efficiency must lie in (0, 1]")
    C, l = sample.concentration_cm3, sample.path_length_cm
    sigma_e = slope / (collection_efficiency * C * l)
    area = beam_area_cm2(beam)
    product = sigma_e * area
    ratio = product / REFERENCE_SIGMA_E_TIMES_A
    return CrossSectionReport(
        sigma_e_cm2=sigma_e,
        sigma_e_times_A_cm4=product,
        beam_area_cm2=area,
        reference_reproduced=bool(0.5 <= ratio <= 2.0),
        provenance={
            "slope_counts_per_pair": slope,
            "collection_efficiency": collection_efficiency,
            "concentration_cm3": C,
            "path_length_cm": l,
            "waist_w0_um": beam.waist_w0_um,
            "wavelength_nm": beam.wavelength_nm,
        },
    )
