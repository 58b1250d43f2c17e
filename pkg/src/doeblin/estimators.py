"""Statistical layer: invariant-measure oracle, mean measures, K-function and resampling."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import CensoredError, InvalidBoundError, UsageError
from .measures import CountingMeasure
from .models import ChainModel, advance_array
from .noise import NoiseField

_EXCURSION_STRIDE = 1 << 32  # time offset separating parallel excursions in the noise field


@dataclass(frozen=True)
class EstimatorReport:
    states: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    n: int
    censored_fraction: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n <= 0:
            raise UsageError("an estimator report needs at least one sample")
        if (np.asarray(self.stderr) < 0).any():
            raise UsageError("standard errors must be nonnegative")

    def __getitem__(self, state: int) -> float:
        return float(self.estimate[self._pos(state)])

    def se(self, state: int) -> float:
        return float(self.stderr[self._pos(state)])

    def _pos(self, state: int) -> int:
        hits = np.flatnonzero(self.states == state)
        if hits.size == 0:
            raise KeyError(state)
        return int(hits[0])

    def rows(self):
        for s, e, se in zip(self.states.tolist(), self.estimate.tolist(), self.stderr.tolist()):
            yield s, e, se

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "estimate", "stderr", "n", "censored_fraction"])
        for s, e, se in self.rows():
            w.writerow([s, repr(e), repr(se), self.n, repr(self.censored_fraction)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "rows": [{"state": s, "estimate": e, "stderr": se} for s, e, se in self.rows()],
            "n": self.n,
            "censored_fraction": self.censored_fraction,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def invariant_measure_oracle(
    model: ChainModel,
    K: int,
    n_excursions: int,
    noise: NoiseField,
    cap: int = 1_000_000,
) -> EstimatorReport:
    """sigma_hat(j): mean number of visits to j during an excursion from s*, 0 <= j <= K.

    Excursions run in parallel; excursion e reads its noise at times
    e * 2**32 + k, so excursions never share a noise coordinate.  An
    excursion still away from s* after ``cap`` steps is stopped, counted
    censored, and contributes its partial visit counts.
    """
    if K < 0 or n_excursions < 1:
        raise UsageError("need K >= 0 and at least one excursion")
    s = model.s_star
    visits = np.zeros((n_excursions, K + 1), dtype=np.int64)
    if 0 <= s <= K:
        visits[:, s] = 1
    ids = np.arange(n_excursions, dtype=np.int64)
    x = np.full(n_excursions, s, dtype=np.int64)
    base = ids * _EXCURSION_STRIDE
    for k in range(cap):
        x = advance_array(model, noise, base[ids] + k, x)
        back = x == s
        ids, x = ids[~back], x[~back]
        if ids.size == 0:
            break
        inside = (x >= 0) & (x <= K)
        np.add.at(visits, (ids[inside], x[inside]), 1)
    censored = ids.size / n_excursions
    mean = visits.mean(axis=0)
    se = visits.std(axis=0, ddof=1) / math.sqrt(n_excursions) if n_excursions > 1 else np.zeros(K + 1)
    meta = {"model": model.spec, "seed": noise.seed, "coupling": noise.mode.value, "cap": cap}
    return EstimatorReport(np.arange(K + 1), mean, se, n_excursions, censored, meta)


def _dense(samples: Sequence, K: int, lo: int = 0) -> np.ndarray:
    mat = np.zeros((len(samples), K - lo + 1), dtype=np.int64)
    for r, m in enumerate(samples):
        m = getattr(m, "measure", m)
        for state, c in m.items():
            if lo <= state <= K:
                mat[r, state - lo] = c
    return mat


def mean_measure(samples: Sequence, K: int) -> EstimatorReport:
    """Per-state mean and standard error of sample counts on [0, K].

    Samples may be CountingMeasures or PerfectSamples; for the latter the
    fraction with censored status is reported.
    """
    if len(samples) < 2:
        raise UsageError("mean_measure needs at least two samples")
    mat = _dense(samples, K)
    n = len(samples)
    status = [getattr(m, "status", None) for m in samples]
    censored = sum(s == "censored" for s in status) / n
    return EstimatorReport(np.arange(K + 1), mat.mean(axis=0), mat.std(axis=0, ddof=1) / math.sqrt(n), n, censored)


def mean_from_counts(counts: np.ndarray, censored_fraction: float = 0.0) -> EstimatorReport:
    """Same as ``mean_measure`` for an already dense (samples x states) count matrix."""
    counts = np.asarray(counts)
    n = counts.shape[0]
    if n < 2:
        raise UsageError("need at least two samples")
    return EstimatorReport(
        np.arange(counts.shape[1]), counts.mean(axis=0), counts.std(axis=0, ddof=1) / math.sqrt(n), n, censored_fraction
    )


def pooled_z(a: EstimatorReport, b: EstimatorReport) -> np.ndarray:
    """|a - b| / sqrt(se_a^2 + se_b^2) per shared state; 0 where both are exact and equal."""
    diff = np.abs(a.estimate - b.estimate)
    pooled = np.sqrt(a.stderr**2 + b.stderr**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(pooled > 0, diff / np.where(pooled > 0, pooled, 1), np.where(diff > 0, np.inf, 0.0))
    return z


@dataclass(frozen=True)
class KEstimate:
    value: "float | None"  # None when undefined
    stderr: "float | None"
    n_conditioned: int
    n: int

    @property
    def defined(self) -> bool:
        return self.value is not None


def k_function(samples: Sequence, i: int, r: int, *, include_center: bool = False) -> KEstimate:
    """K_i(r) = mean of M((i-r, i+r)) over samples with M(i) == 1, divided by its overall mean.

    By default the atom at i itself is left out of both counts (the reduced
    form), which makes independent thinning give exactly 1; pass
    ``include_center=True`` for the literal open-interval count.  The
    standard error comes from the delta method on (mean XI, mean I, mean X).
    """
    if r < 1:
        raise UsageError("radius must be at least 1")
    if len(samples) < 2:
        raise UsageError("k_function needs at least two samples")
    mat = _dense(samples, i + r - 1, i - r + 1)
    centre = mat[:, r - 1]
    X = mat.sum(axis=1) - (0 if include_center else centre)
    I = (centre == 1).astype(float)
    n = len(samples)
    n_cond = int(I.sum())
    a, b, c = (X * I).mean(), I.mean(), X.mean()
    if n_cond == 0 or c == 0:
        return KEstimate(None, None, n_cond, n)
    value = a / (b * c)
    grad = np.array([1 / (b * c), -a / (b * b * c), -a / (b * c * c)])
    cov = np.cov(np.vstack([X * I, I, X]), ddof=1) / n
    var = float(grad @ cov @ grad)
    return KEstimate(float(value), math.sqrt(max(var, 0.0)), n_cond, n)


def biased_point_sample(sample, u: float):
    """State drawn with probability proportional to its multiplicity: first state whose
    cumulative count exceeds u times the total mass."""
    m = getattr(sample, "measure", sample)
    total = sum(m.values())
    if total == 0:
        raise UsageError("cannot pick a point from an empty sample")
    target = u * total
    acc = 0
    for state, c in m.items():
        acc += c
        if target < acc:
            return state
    return next(reversed(list(m.keys())))


@dataclass(frozen=True)
class RejectionResult:
    state: int
    attempts: int


def rejection_stationary_sample(
    taboo_sampler: Callable[[NoiseField], object],
    M_bound: float,
    max_attempts: int,
    noise: NoiseField,
) -> RejectionResult:
    """Draw T, pick Y proportionally to multiplicity, accept with probability |T| / M_bound.

    Attempt a uses the child field ``noise.child(a)`` for the taboo draw and
    ``noise.child(a, 1)`` for the pick and acceptance uniforms, so attempts
    are independent as the geometric-trials argument requires.
    """
    for a in range(max_attempts):
        T = taboo_sampler(noise.child(a))
        m = getattr(T, "measure", T)
        mass = sum(m.values())
        if mass > M_bound:
            raise InvalidBoundError(f"taboo sample of mass {mass} exceeds the bound {M_bound}")
        aux = noise.child(a, 1)
        y = biased_point_sample(m, aux.component(0, 0, 0))
        if aux.component(0, 0, 1) * M_bound < mass:
            return RejectionResult(y, a + 1)
    raise CensoredError(f"no acceptance within {max_attempts} attempts")


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
