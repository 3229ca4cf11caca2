"""Synthetic photon-counting experiments.

Every record draws from its own PCG64 stream keyed by ``(seed, index)``, so a
series is bit-identical regardless of how records are scheduled.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .models import AxialProfile

RNG_ID = "numpy.PCG64/SeedSequence(seed, spawn_key=(index, stream))"

KINDS = ("pump_attenuation", "pair_attenuation", "zscan")
CSV_COLUMNS = ["x", "counts", "exposure_s", "dark_counts"]

_SIGNAL, _DARK = 0, 1


@dataclass(frozen=True)
class NoiseModel:
    dark_rate: float = 200.0
    background_rate: float = 10.0

    def __post_init__(self):
        if self.dark_rate < 0 or self.background_rate < 0:
            raise ValueError("noise rates must be nonnegative")

    @property
    def total_rate(self) -> float:
        return self.dark_rate + self.background_rate


@dataclass(frozen=True)
class CountRecord:
    x: float
    counts: int
    exposure: float
    dark_counts: int = 0

    def __post_init__(self):
        if not self.exposure > 0:
            raise ValueError("exposure must be positive")
        if self.counts < 0 or self.dark_counts < 0:
            raise ValueError("counts must be nonnegative")


@dataclass(frozen=True)
class CountSeries:
    kind: str
    records: tuple[CountRecord, ...]
    seed: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown series kind {self.kind!r}")
        if not self.records:
            raise ValueError("series is empty")
        xs = [r.x for r in self.records]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("record x values must be unique and sorted")

    @property
    def x(self) -> np.ndarray:
        return np.array([r.x for r in self.records], dtype=float)

    @property
    def counts(self) -> np.ndarray:
        return np.array([r.counts for r in self.records], dtype=np.int64)

    @property
    def exposure(self) -> np.ndarray:
        return np.array([r.exposure for r in self.records], dtype=float)

    def with_counts(self, counts) -> "CountSeries":
        recs = tuple(
            CountRecord(r.x, int(c), r.exposure, r.dark_counts)
            for r, c in zip(self.records, counts)
        )
        return CountSeries(self.kind, recs, self.seed, self.provenance)


@dataclass(frozen=True)
class CorrectedSeries:
    kind: str
    x: np.ndarray
    rate: np.ndarray
    uncertainty: np.ndarray
    negative: np.ndarray

    @property
    def any_negative(self) -> bool:
        return bool(np.any(self.negative))

    def normalized(self) -> "CorrectedSeries":
        peak = np.max(np.abs(self.rate))
        if peak == 0:
            return self
        return CorrectedSeries(
            self.kind, self.x, self.rate / peak, self.uncertainty / peak, self.negative
        )


def record_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(index, stream))
    return np.random.Generator(np.random.PCG64(ss))


def _draw(mean: float, seed: int, index: int, stream: int, noiseless: bool) -> int:
    if noiseless:
        return int(round(mean))
    return int(record_rng(seed, index, stream).poisson(mean))


def attenuation_expectation(mode: str, factors, base_signal_rate: float) -> np.ndarray:
    """Noise-free signal rate for pump (linear) or pair (quadratic) attenuation."""
    f = np.asarray(factors, dtype=float)
    if mode == "pump":
        return base_signal_rate * f
    if mode == "pair":
        return base_signal_rate * f**2
    raise ValueError(f"attenuation mode must be 'pump' or 'pair', got {mode!r}")


def simulate_attenuation_series(
    mode: str,
    factors: Sequence[float],
    base_signal_rate: float,
    noise: NoiseModel = NoiseModel(),
    exposure: float = 2e4,
    seed: int = 0,
    noiseless: bool = False,
) -> CountSeries:
    f = np.asarray(factors, dtype=float)
    if f.size == 0:
        raise ValueError("no attenuation factors")
    if np.any((f < 0) | (f > 1)):
        raise ValueError("attenuation factors must lie in [0, 1]")
    if base_signal_rate < 0:
        raise ValueError("base signal rate must be nonnegative")
    order = np.argsort(f)
    f = f[order]
    signal = attenuation_expectation(mode, f, base_signal_rate)

    records = []
    for i, (fi, si) in enumerate(zip(f, signal)):
        mean = (si + noise.total_rate) * exposure
        counts = _draw(mean, seed, i, _SIGNAL, noiseless)
        dark = _draw(noise.dark_rate * exposure, seed, i, _DARK, noiseless)
        records.append(CountRecord(float(fi), counts, exposure, dark))
    prov = {
        "generator": "simulate_attenuation_series",
        "mode": mode,
        "base_signal_rate": base_signal_rate,
        "dark_rate": noise.dark_rate,
        "background_rate": noise.background_rate,
        "exposure_s": exposure,
        "noiseless": noiseless,
        "rng": RNG_ID,
    }
    return CountSeries(f"{mode}_attenuation", tuple(records), seed, prov)


def simulate_zscan(
    profile: AxialProfile,
    peak_rate: float,
    noise: NoiseModel = NoiseModel(),
    exposure: float = 1.0,
    repeats: int = 100,
    seed: int = 0,
    noiseless: bool = False,
) -> CountSeries:
    """Stage-scanned series; each position sums ``repeats`` exposures."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if peak_rate < 0:
        raise ValueError("peak rate must be nonnegative")
    z = np.asarray(profile.positions, dtype=float)
    vals = np.asarray(profile.values, dtype=float)

    records, spreads = [], []
    for i, (zi, vi) in enumerate(zip(z, vals)):
        mean = (peak_rate * vi + noise.total_rate) * exposure
        if noiseless:
            draws = np.full(repeats, int(round(mean)), dtype=np.int64)
            dark = int(round(noise.dark_rate * exposure * repeats))
        else:
            draws = record_rng(seed, i, _SIGNAL).poisson(mean, size=repeats)
            dark = int(record_rng(seed, i, _DARK).poisson(noise.dark_rate * exposure * repeats))
        spreads.append(float(np.std(draws, ddof=1)) if repeats > 1 else 0.0)
        records.append(CountRecord(float(zi), int(draws.sum()), exposure * repeats, dark))
    prov = {
        "generator": "simulate_zscan",
        "model": profile.metadata.get("model"),
        "peak_rate": peak_rate,
        "dark_rate": noise.dark_rate,
        "background_rate": noise.background_rate,
        "exposure_s": exposure,
        "repeats": repeats,
        "noiseless": noiseless,
        "rng": RNG_ID,
        "position_std_counts": spreads,
    }
    return CountSeries("zscan", tuple(records), seed, prov)


def correct_counts(series: CountSeries, noise: NoiseModel = NoiseModel()) -> CorrectedSeries:
    """Subtract configured dark and background rates; negative rates are kept."""
    counts = series.counts.astype(float)
    t = series.exposure
    rate = counts / t - noise.dark_rate - noise.background_rate
    unc = np.sqrt(counts) / t
    return CorrectedSeries(series.kind, series.x, rate, unc, rate < 0)


# -- CSV -------------------------------------------------------------------


def series_to_csv(series: CountSeries, extra_provenance: dict | None = None) -> str:
    buf = io.StringIO()
    prov = dict(series.provenance)
    if extra_provenance:
        prov.update(extra_provenance)
    buf.write("# provenance: " + json.dumps(prov, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "seed"])
    w.writerow([series.kind, series.seed])
    w.writerow(CSV_COLUMNS)
    for r in series.records:
        w.writerow([repr(float(r.x)), r.counts, repr(float(r.exposure)), r.dark_counts])
    return buf.getvalue()


def write_series_csv(series: CountSeries, path, extra_provenance: dict | None = None) -> None:
    Path(path).write_text(series_to_csv(series, extra_provenance))


def read_series_csv(path) -> CountSeries:
    text = Path(path).read_text()
    prov = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("# provenance:"):
            prov = json.loads(line.split(":", 1)[1])
        elif line.startswith("#") or not line.strip():
            continue
        else:
            lines.append(line)
    rows = list(csv.reader(lines))
    if len(rows) < 3 or rows[0] != ["kind", "seed"] or rows[2] != CSV_COLUMNS:
        raise ValueError(f"{path}: not a count-series CSV")
    kind, seed = rows[1][0], int(rows[1][1])
    records = tuple(
        CountRecord(float(x), int(c), float(t), int(dk)) for x, c, t, dk in rows[3:]
    )
    return CountSeries(kind, records, seed, prov)
