"""Renewal Eternal Family Forests, their coupling with renewal bridge graphs,
and the oscillating walk that decides whether two renewal walks meet.

Vertex i of an EFF points to i + eta_i.  Under the coupling used here the
edge length at i is drawn from the noise at (i, s*), which is exactly the
uniform the renewal chain consumes when it leaves s* = 0 at time i.  So the
bridge path from (i, 0) first returns to 0 at time i + eta_i, and the
bridge state at time 0 of a path is the distance to its next renewal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bridge import BridgeGraph
from .distributions import JumpDistribution, make_distribution
from .errors import ResourceError, UsageError
from .measures import CountingMeasure
from .models import RenewalChain
from .monotone import CENSORED, EXACT, PerfectSample
from .noise import Coupling, NoiseField


@dataclass(frozen=True)
class EffGraph:
    """Vertices lo..hi (inclusive), each with one outgoing edge of length eta."""

    lo: int
    hi: int
    eta: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.eta) != self.hi - self.lo + 1:
            raise UsageError("edge array does not match the window")

    def __len__(self) -> int:
        return len(self.eta)

    def length(self, i: int) -> int:
        return int(self.eta[i - self.lo])

    def target(self, i: int) -> int:
        return i + self.length(i)

    def targets(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, dtype=np.int64) + self.eta

    def edges(self) -> list[tuple[int, int]]:
        return list(zip(range(self.lo, self.hi + 1), self.targets().tolist()))

    def __eq__(self, other):
        return (
            isinstance(other, EffGraph)
            and (self.lo, self.hi) == (other.lo, other.hi)
            and np.array_equal(self.eta, other.eta)
        )

    __hash__ = None


def _edge_lengths(dist: JumpDistribution, noise: NoiseField, lo: int, hi: int, s_star: int = 0) -> np.ndarray:
    if hi < lo:
        return np.zeros(0, dtype=np.int64)
    t = np.arange(lo, hi + 1, dtype=np.int64)
    return dist.quantile_array(noise.block(t, s_star, 1)[..., 0])


def sample_eff(dist, window: tuple[int, int], noise: NoiseField) -> EffGraph:
    """EFF on the vertices window[0]..window[1] with lengths read from the noise at (i, 0)."""
    lo, hi = window
    if hi < lo:
        raise UsageError("empty EFF window")
    dist = make_distribution(dist) if not isinstance(dist, JumpDistribution) else dist
    return EffGraph(lo, hi, _edge_lengths(dist, noise, lo, hi))


def couple_bridge_eft(bridge: BridgeGraph) -> EffGraph:
    """EFF whose edge at t has length (bridge jump at t) + 1, for t_min <= t < t_max."""
    if not isinstance(bridge.model, RenewalChain):
        raise UsageError("the EFT coupling is defined for renewal bridges only")
    lo, hi = bridge.t_min, bridge.t_max - 1
    return EffGraph(lo, hi, bridge.jumps().astype(np.int64) + 1)


def flying_edges(eff: EffGraph) -> set[tuple[int, int]]:
    """Edges (i, i + eta_i) with i < 0 < i + eta_i."""
    if eff.lo >= 0:
        raise UsageError("flying edges need a window with negative vertices")
    neg = np.arange(eff.lo, min(eff.hi, -1) + 1, dtype=np.int64)
    tgt = neg + eff.eta[: len(neg)]
    keep = tgt > 0
    return set(zip(neg[keep].tolist(), tgt[keep].tolist()))


def first_exit(eff: EffGraph, level: int, upto: "int | None" = None) -> np.ndarray:
    """For vertices lo..upto-1, the first point of the forward orbit that is >= level.

    Computed by pointer jumping, so the cost is O(n log n) array work.
    """
    upto = level if upto is None else upto
    n = upto - eff.lo
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    idx = np.arange(n, dtype=np.int64)
    nxt = idx + eff.lo + eff.eta[:n]
    term = nxt >= level
    ex = np.where(term, nxt, -1)
    ptr = np.where(term, idx, nxt - eff.lo)
    if (~term & (ptr >= n)).any():
        raise UsageError("orbit leaves the stored window before reaching the level")
    while True:
        live = np.flatnonzero(~term)
        if live.size == 0:
            return ex
        p = ptr[live]
        ex[live] = ex[p]
        term[live] = term[p]
        ptr[live] = ptr[p]


def descendant_count(eff: EffGraph, vertex: int, cap: int) -> tuple[int, bool]:
    """Number of window vertices whose orbit reaches ``vertex``; censored at cap."""
    if not eff.lo <= vertex <= eff.hi:
        raise UsageError(f"vertex {vertex} outside window [{eff.lo}, {eff.hi}]")
    count = int(np.count_nonzero(first_exit(eff, vertex) == vertex))
    if count >= cap:
        return cap, True
    return count, False


# -- exact renewal samplers ---------------------------------------------------


def _renewal_lengths(model: RenewalChain, noise: NoiseField, depth: int) -> np.ndarray:
    if noise.mode is Coupling.MAXIMAL_SHIFT:
        raise UsageError("the renewal chain is not translation invariant")
    return _edge_lengths(model.dist, noise, -depth, -1, model.s_star)


def renewal_taboo_sample(model: RenewalChain, noise: NoiseField, K: int, max_n: int) -> PerfectSample:
    """Taboo sample on [0, K]: one atom at j + eta_j for every j < 0 whose edge flies over 0.

    With every edge at most B long, starts below -(B - 1) return before time 0,
    so depth B - 1 is enough for exactness.
    """
    bound = model.dist.sampling_bound()
    need = bound - 1
    depth = min(max_n, need)
    eta = _renewal_lengths(model, noise, depth)
    y = np.arange(-depth, 0, dtype=np.int64) + eta
    y = y[(y >= 1) & (y <= K)]
    counts = np.bincount(y, minlength=K + 1) if K >= 0 else np.zeros(0, dtype=np.int64)
    counts[0] = 1
    nz = np.flatnonzero(counts)
    measure = CountingMeasure(zip(nz.tolist(), counts[nz].tolist()))
    status = EXACT if max_n >= need else CENSORED
    return PerfectSample(measure, status, depth, None, 0, {"sampling_bound": bound})


def renewal_potential_sample(model: RenewalChain, noise: NoiseField, K: int, max_n: int) -> PerfectSample:
    """Potential sample on [0, K] from the starts -max_n..-1.

    The start j lands on the first point >= 0 of its EFF orbit.  The sample is
    certified exact when max_n >= B and no vertex of the deepest band of width
    B lands in [0, K]: every deeper orbit must cross that band.
    """
    bound = model.dist.sampling_bound()
    depth = max_n
    eff = EffGraph(-depth, -1, _renewal_lengths(model, noise, depth)) if depth else None
    counts = np.zeros(K + 1, dtype=np.int64)
    counts[0] = 1
    exact = False
    if depth:
        ex = first_exit(eff, 0)
        inside = ex[ex <= K]
        counts += np.bincount(inside, minlength=K + 1)
        if depth >= bound:
            exact = bool(ex[:bound].min() > K)
    nz = np.flatnonzero(counts)
    measure = CountingMeasure(zip(nz.tolist(), counts[nz].tolist()))
    return PerfectSample(measure, EXACT if exact else CENSORED, depth, None, 0, {"sampling_bound": bound})


# -- oscillating walk and meeting experiment ------------------------------------


@dataclass(frozen=True)
class OscillatingWalkSpec:
    dist: JumpDistribution
    z0: int = 1
    horizon: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "dist", make_distribution(self.dist))


def oscillating_step(spec, z: int, u: float) -> int:
    """From z < 0 jump up by a q-distributed amount, from z >= 0 jump down."""
    dist = spec.dist if isinstance(spec, OscillatingWalkSpec) else make_distribution(spec)
    jump = dist.quantile(u)
    return z + jump if z < 0 else z - jump


@dataclass(frozen=True)
class MeetingResult:
    frequency: float
    ci_low: float
    ci_high: float
    trials: int
    horizon: int
    hit_times: np.ndarray = field(repr=False)  # steps to hit 0; -1 when not hit by the horizon

    def frequency_at(self, horizon: int) -> float:
        return float(np.mean((self.hit_times >= 0) & (self.hit_times <= horizon)))


def _normal_ci(hits: int, n: int, z: float = 1.96) -> tuple[float, float]:
    p = hits / n
    half = z * math.sqrt(p * (1 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)


def meeting_experiment(dist, z0: int, horizon: int, trials: int, noise: NoiseField, chunk: int = 4096) -> MeetingResult:
    """Fraction of trials in which the oscillating walk from z0 hits 0 within ``horizon`` steps.

    Trial k reads the uniform for its step n at noise coordinate (n, k), so
    the noise must be totally independent.
    """
    if z0 <= 0 or trials < 1:
        raise UsageError("meeting experiment needs z0 > 0 and trials >= 1")
    if noise.mode is not Coupling.TOTALLY_INDEPENDENT:
        raise UsageError("independent trials need totally_independent noise")
    dist = make_distribution(dist)
    hit = np.full(trials, -1, dtype=np.int64)
    for start in range(0, trials, chunk):
        ids = np.arange(start, min(start + chunk, trials), dtype=np.int64)
        z = np.full(ids.shape, z0, dtype=np.int64)
        for n in range(horizon):
            u = noise.block(n, ids, 1)[..., 0]
            j = dist.quantile_array(u)
            z = np.where(z < 0, z + j, z - j)
            met = z == 0
            if met.any():
                hit[ids[met]] = n + 1
                ids, z = ids[~met], z[~met]
                if ids.size == 0:
                    break
    hits = int(np.count_nonzero(hit >= 0))
    lo, hi = _normal_ci(hits, trials)
    return MeetingResult(hits / trials, lo, hi, trials, horizon, hit)


def two_walk_meeting(dist, z0: int, horizon: int, trials: int, noise: NoiseField) -> MeetingResult:
    """Cross-check oracle: two walks on one EFF per trial, the lagging walk advances.

    The edge at vertex v of trial k is read from noise coordinate (v, k).  A
    step is one advance of either walk, matching one step of the oscillating
    walk.  Positions beyond 2**62 raise, since they would overflow.
    """
    if noise.mode is not Coupling.TOTALLY_INDEPENDENT:
        raise UsageError("independent trials need totally_independent noise")
    dist = make_distribution(dist)
    ids = np.arange(trials, dtype=np.int64)
    a = np.zeros(trials, dtype=np.int64)
    b = np.full(trials, z0, dtype=np.int64)
    hit = np.full(trials, -1, dtype=np.int64)
    limit = 1 << 62
    for n in range(horizon):
        lag_a = a < b
        v = np.where(lag_a, a, b)
        j = dist.quantile_array(noise.block(v, ids, 1)[..., 0])
        if (v > limit - j).any():
            raise ResourceError("walk position overflow in the two-walk oracle")
        a = np.where(lag_a, a + j, a)
        b = np.where(lag_a, b, b + j)
        met = a == b
        if met.any():
            hit[ids[met]] = n + 1
            keep = ~met
            ids, a, b = ids[keep], a[keep], b[keep]
            if ids.size == 0:
                break
    hits = int(np.count_nonzero(hit >= 0))
    lo, hi = _normal_ci(hits, trials)
    return MeetingResult(hits / trials, lo, hi, trials, horizon, hit)


def edge_length_chi2(eff: EffGraph, dist: JumpDistribution, min_expected: float = 5.0) -> float:
    """p-value of a chi-square test of the edge lengths against ``dist``; sparse bins are pooled."""
    n = len(eff)
    top = int(eff.eta.max())
    obs = np.bincount(eff.eta, minlength=top + 2)[1:]
    probs = np.array([dist.pmf(k) for k in range(1, top + 1)])
    exp_ = n * probs
    # pool from the right until each bin holds enough expected mass
    o_bins, e_bins = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(obs[:top], exp_):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            o_bins.append(o_acc)
            e_bins.append(e_acc)
            o_acc = e_acc = 0.0
    tail_e = n * float(dist.sf(top))
    e_acc += tail_e
    if o_bins:
        o_bins[-1] += o_acc
        e_bins[-1] += e_acc
    o_bins, e_bins = np.array(o_bins), np.array(e_bins)
    e_bins *= o_bins.sum() / e_bins.sum()
    return float(stats.chisquare(o_bins, e_bins).pvalue)
