"""Backward (Loynes) construction of Taboo and Potential samples for monotone chains.

Under the common coupling, let L_n be the state at time 0 of the path
started at (-n, s*), with s* the least state.  L_n is nondecreasing in n and
every start -n lands on L_n, so the potential sample is the multiset
{L_n : n >= 0}.  The start -n contributes to the taboo sample when its path
does not revisit s* during (-n, 0].  Once some L_n exceeds the region bound
K, no deeper start can land in [0, K] and the restriction is final.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .measures import CountingMeasure
from .models import ChainModel, RenewalChain, WorkloadChain, advance, uniform_block
from .noise import Coupling, NoiseField

EXACT = "exact"
CENSORED = "censored"


@dataclass(frozen=True)
class Record:
    value: int
    index: int  # first backward depth n with L_n == value
    run: int  # number of consecutive depths with that value (partial when censored)


@dataclass(frozen=True)
class RecordDecomposition:
    records: tuple[Record, ...]  # values <= K with their full runs
    terminal: "Record | None"  # first record above K; its run is not explored
    censored: bool  # depth cap hit before a record exceeded K

    @property
    def terminated(self) -> bool:
        return self.terminal is not None

    def potential(self) -> CountingMeasure:
        return CountingMeasure({r.value: r.run for r in self.records})


@dataclass(frozen=True)
class PerfectSample:
    """A sample restricted to [0, K], with its status and the depth used."""

    measure: CountingMeasure
    status: str
    depth_used: int
    records: "RecordDecomposition | None" = None
    evaluations: int = 0  # distinct Loynes indices evaluated
    meta: dict = field(default_factory=dict, compare=False)

    def __iter__(self):
        return iter((self.measure, self.status))

    @property
    def exact(self) -> bool:
        return self.status == EXACT

    def to_dict(self) -> dict:
        out = {
            "atoms": [{"state": s, "count": c} for s, c in self.measure.items()],
            "status": self.status,
            "depth_used": self.depth_used,
            "records": [],
        }
        if self.records is not None:
            out["records"] = [{"value": r.value, "index": r.index, "run": r.run} for r in self.records.records]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _require_monotone(model: ChainModel, noise: NoiseField) -> None:
    if not model.monotone:
        raise UsageError(f"{model.spec} is not a monotone model")
    if not model.bounded_below:
        raise UsageError(f"{model.spec} has no least state; the backward construction needs s* minimal")
    if noise.mode is not Coupling.COMMON:
        raise UsageError(f"the backward construction needs common noise, got {noise.mode.value}")


class LoynesSequence:
    """Lazily extended L_0, L_1, ... together with the taboo flags R_1, R_2, ...

    The workload chain uses the running maximum of backward partial sums of
    service minus interarrival, computed in numpy blocks.  Other monotone
    chains use a coalescence sweep: the path from -(n+1) is followed forward
    only until it meets the current top path, which it then replaces on that
    stretch.
    """

    def __init__(self, model: ChainModel, noise: NoiseField, *, generic: bool = False):
        _require_monotone(model, noise)
        self.model = model
        self.noise = noise
        self._fast = isinstance(model, WorkloadChain) and not generic
        s = model.s_star
        self._n = 1  # number of computed values
        self._L = np.array([s], dtype=np.int64)
        self._R = np.array([False])  # R_0 unused; the vertex (0, s*) is added separately
        if self._fast:
            self._S_tail = 0  # partial sum down to the deepest computed depth
            self._M_tail = 0
        else:
            self._Ll = [s]
            self._Rl = [False]
            self._top = [s]  # _top[j] = state at time -j of the current top path
            self._vj = 0  # smallest j with _top[j] == s*

    def __len__(self) -> int:
        return self._n

    def _extend_fast(self, n: int) -> None:
        have = self._n - 1
        want = max(n, 2 * have, 64)
        depths = np.arange(have + 1, want + 1, dtype=np.int64)
        incr = self.model.increments(uniform_block(self.model, self.noise, -depths, 0))
        S = self._S_tail + np.cumsum(incr)
        M = np.maximum(np.maximum.accumulate(S), self._M_tail)
        L = np.maximum(M, 0)
        prev = np.concatenate([self._L[have : have + 1], L[:-1]])
        self._L = np.concatenate([self._L, L])
        self._R = np.concatenate([self._R, L > prev])
        self._S_tail, self._M_tail = int(S[-1]), int(M[-1])
        self._n = len(self._L)

    def _extend_generic(self, n: int) -> None:
        model, noise, s = self.model, self.noise, self.model.s_star
        top, Ll, Rl = self._top, self._Ll, self._Rl
        n = max(n, 2 * (len(Ll) - 1), 16)
        while len(Ll) <= n:
            m = len(Ll) - 1  # top path currently starts at -m
            x = advance(model, noise, -(m + 1), s)
            j = m
            while j >= 0 and x != top[j]:
                top[j] = x
                if j > 0:
                    x = advance(model, noise, -j, x)
                j -= 1
            top.append(s)
            if j >= 0 and self._vj <= j:
                Rl.append(False)  # met the top path before its last visit to s*
            else:
                Rl.append(True)
                self._vj = m + 1
            Ll.append(top[0])
        self._L = np.asarray(Ll, dtype=np.int64)
        self._R = np.asarray(Rl, dtype=bool)
        self._n = len(Ll)

    def ensure(self, n: int) -> None:
        if n >= self._n:
            (self._extend_fast if self._fast else self._extend_generic)(n)

    def value(self, n: int) -> int:
        if n < 0:
            raise UsageError("Loynes depth must be nonnegative")
        self.ensure(n)
        return int(self._L[n])

    def taboo_flag(self, n: int) -> bool:
        """True when the path from (-n, s*) avoids s* during (-n, 0]."""
        if n < 1:
            raise UsageError("taboo flags start at depth 1")
        self.ensure(n)
        return bool(self._R[n])

    def values(self, n: int) -> np.ndarray:
        self.ensure(n)
        return self._L[: n + 1]

    def flags(self, n: int) -> np.ndarray:
        self.ensure(n)
        return self._R[: n + 1]

    def first_above(self, K: int, max_n: int) -> "int | None":
        """Smallest n <= max_n with L_n > K, extending the sequence by doubling."""
        probe = 64
        while True:
            hi = min(probe, max_n)
            L = self.values(hi)
            above = np.flatnonzero(L > K)
            if above.size:
                return int(above[0])
            if hi == max_n:
                return None
            probe *= 2


def loynes_value(model: ChainModel, noise: NoiseField, n: int) -> int:
    """State at time 0 of the path started at (-n, s*)."""
    return LoynesSequence(model, noise).value(n)


def _linear_scan(seq: LoynesSequence, K: int, max_n: int):
    """Scan n = 0, 1, ... until L_n > K or the cap; returns (depth, terminal, records)."""
    stop = seq.first_above(K, max_n)
    depth = max_n if stop is None else stop
    L = seq.values(depth)
    body = L if stop is None else L[:-1]
    if body.size == 0:
        return depth, Record(int(L[0]), 0, 1), []
    starts = np.flatnonzero(np.diff(body, prepend=body[0] - 1))
    runs = np.diff(np.append(starts, len(body)))
    records = [Record(int(body[i]), int(i), int(r)) for i, r in zip(starts, runs)]
    terminal = None if stop is None else Record(int(L[stop]), stop, 1)
    return depth, terminal, records


def sample_taboo_pp(model: ChainModel, noise: NoiseField, K: int, max_n: int, **kw) -> PerfectSample:
    """Taboo sample restricted to [0, K]; exact once a record exceeds K within max_n."""
    if K < 0 or max_n < 0:
        raise UsageError("K and max_n must be nonnegative")
    if isinstance(model, RenewalChain):
        from .renewal import renewal_taboo_sample

        return renewal_taboo_sample(model, noise, K, max_n)
    seq = LoynesSequence(model, noise, **kw)
    depth, terminal, records = _linear_scan(seq, K, max_n)
    L = seq.values(depth)[1:]
    R = seq.flags(depth)[1:]
    hit = L[R & (L <= K)]
    u, c = np.unique(hit, return_counts=True)
    counts = dict(zip(u.tolist(), c.tolist()))
    counts[model.s_star] = counts.get(model.s_star, 0) + 1
    dec = RecordDecomposition(tuple(records), terminal, terminal is None)
    status = EXACT if terminal is not None else CENSORED
    return PerfectSample(CountingMeasure(counts), status, depth, dec, depth + 1)


def sample_potential_pp(
    model: ChainModel,
    noise: NoiseField,
    K: int,
    max_n: int,
    strategy: str = "linear",
    **kw,
) -> PerfectSample:
    """Potential sample restricted to [0, K]: atoms are record values, counts their run lengths."""
    if K < 0 or max_n < 0:
        raise UsageError("K and max_n must be nonnegative")
    if strategy not in ("linear", "exponential_search"):
        raise UsageError(f"unknown strategy {strategy!r}")
    if isinstance(model, RenewalChain):
        from .renewal import renewal_potential_sample

        return renewal_potential_sample(model, noise, K, max_n)
    seq = LoynesSequence(model, noise, **kw)
    if strategy == "linear":
        depth, terminal, records = _linear_scan(seq, K, max_n)
        evaluations = depth + 1
    else:
        depth, terminal, records, evaluations = _exponential_scan(seq, K, max_n)
    dec = RecordDecomposition(tuple(records), terminal, terminal is None)
    status = EXACT if terminal is not None else CENSORED
    return PerfectSample(dec.potential(), status, depth, dec, evaluations)


def _exponential_scan(seq: LoynesSequence, K: int, max_n: int):
    """Record boundaries by doubling then bisection; L_n is nondecreasing in n."""
    seen: set[int] = set()

    def L(n: int) -> int:
        seen.add(n)
        return seq.value(n)

    records = []
    a, v = 0, L(0)
    while True:
        # invariant: L(a) == v, a is the first index with that value, v <= K
        lo, step = a, 1
        while True:
            hi = min(a + step, max_n)
            if hi == lo:  # a == max_n
                records.append(Record(v, a, max_n - a + 1))
                return max_n, None, records, len(seen)
            if L(hi) > v:
                break
            lo = hi
            if hi == max_n:
                records.append(Record(v, a, max_n - a + 1))
                return max_n, None, records, len(seen)
            step *= 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if L(mid) > v:
                hi = mid
            else:
                lo = mid
        records.append(Record(v, a, hi - a))
        a, v = hi, L(hi)
        if v > K:
            return a, Record(v, a, 1), records, len(seen)


@dataclass(frozen=True)
class GapStats:
    gaps: np.ndarray  # differences between successive mass-adding depths
    censored: bool  # the depth cap cut the last gap short
    depth: int

    @property
    def mean(self) -> float:
        return float(self.gaps.mean()) if len(self.gaps) else math.nan


def backward_gap_stats(model: ChainModel, noise: NoiseField, n_events: int, max_n: int, **kw) -> GapStats:
    """Gaps between successive depths n whose start adds taboo mass (R_n true).

    Collection stops after n_events gaps or at depth max_n, whichever comes first.
    """
    seq = LoynesSequence(model, noise, **kw)
    flags = seq.flags(max_n)[1:]
    idx = np.flatnonzero(flags) + 1
    times = np.concatenate([[0], idx])
    gaps = np.diff(times)
    if len(gaps) >= n_events:
        return GapStats(gaps[:n_events].astype(np.int64), False, int(times[n_events]))
    return GapStats(gaps.astype(np.int64), True, max_n)
