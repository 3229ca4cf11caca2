"""Monte Carlo propagation of counting noise into derived statistics."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .simkit import CorrectedSeries, CountSeries, NoiseModel, correct_counts

log = logging.getLogger(__name__)

MAX_DROP_FRACTION = 0.10


class MonteCarloError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResampleSpec:
    n_resamples: int = 1000
    seed: int = 0
    statistic_id: str = "statistic"

    def __post_init__(self):
        if self.n_resamples < 100:
            raise ValueError("n_resamples must be >= 100")


@dataclass(frozen=True)
class Propagated:
    value: np.ndarray | float
    std_dev: np.ndarray | float
    n_used: int
    n_dropped: int

    def __iter__(self):
        # allows ``value, sigma = propagate(...)``
        return iter((self.value, self.std_dev))


def _resample_counts(counts: np.ndarray, seed: int, index: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))
    return rng.poisson(counts)


def propagate(
    series: CountSeries,
    statistic: Callable[[CorrectedSeries], float | np.ndarray],
    spec: ResampleSpec = ResampleSpec(),
    noise: NoiseModel = NoiseModel(),
    workers: int = 1,
) -> Propagated:
    """Parametric Poisson resampling of every record's counts.

    Returns the statistic on the observed data and the sample standard
    deviation over resamples. Resample ``i`` always uses the stream keyed by
    ``(spec.seed, i)``, so results do not depend on ``workers``.
    """
    if not series.records:
        raise ValueError("series is empty")
    observed = series.counts

    def one(i):
        resampled = series.with_counts(_resample_counts(observed, spec.seed, i))
        try:
            return np.asarray(statistic(correct_counts(resampled, noise)), dtype=float)
        except Exception as exc:  # noqa: BLE001 - any statistic failure drops the resample
            log.debug("resample %d dropped: %s", i, exc)
            return None

    idx = range(spec.n_resamples)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(one, idx))
    else:
        outs = [one(i) for i in idx]

    kept = [o for o in outs if o is not None and np.all(np.isfinite(o))]
    dropped = spec.n_resamples - len(kept)
    if dropped > MAX_DROP_FRACTION * spec.n_resamples:
        raise MonteCarloError(
            f"{dropped}/{spec.n_resamples} resamples failed for {spec.statistic_id!r}"
        )
    value = np.asarray(statistic(correct_counts(series, noise)), dtype=float)
    std = np.std(np.stack(kept), axis=0, ddof=1)
    if value.ndim == 0:
        value, std = float(value), float(std)
    return Propagated(value, std, len(kept), dropped)
