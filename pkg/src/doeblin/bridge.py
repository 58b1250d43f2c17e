"""Windowed Bridge Graphs: the union of the paths started from every (t, s*).

Storage is column-sparse: only occupied states are kept, and two paths that
meet are stored once from the meeting vertex on.  Multiplicities are obtained by a backward pass
that resolves, for every start time, where its path sits at the target
column and whether it has revisited s* on the way; this is deliberately a
different computation from the forward push of the measure dynamics.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceError, UsageError
from .measures import CountingMeasure
from .models import ChainModel, RenewalChain, advance, advance_array, advance_column
from .noise import Coupling, NoiseField

DEFAULT_MAX_VERTICES = 20_000_000
_VECTOR_COLUMN = 48  # columns at least this wide are advanced with numpy


@dataclass(frozen=True)
class Path:
    start: int
    states: tuple[int, ...]
    first_return: "int | None"  # absolute time of the first visit to s* after start

    @property
    def horizon(self) -> int:
        return self.start + len(self.states) - 1

    @property
    def return_length(self) -> "int | None":
        return None if self.first_return is None else self.first_return - self.start

    def state_at(self, t: int) -> int:
        return self.states[t - self.start]


def trace_path(model: ChainModel, noise: NoiseField, start: int, horizon: int) -> Path:
    """Path from (start, s*) up to time ``horizon``."""
    if not start < horizon:
        raise UsageError("trace_path needs start < horizon")
    x = model.s_star
    states = [x]
    first = None
    for t in range(start, horizon):
        x = advance(model, noise, t, x)
        states.append(x)
        if first is None and x == model.s_star:
            first = t + 1
    return Path(start, tuple(states), first)


@dataclass(frozen=True)
class BridgeGraph:
    """Paths from (t, s*) for t_min <= t <= t_max, truncated at column t_max.

    Vertices are stored flat, column after column, each column sorted by
    state.  ``succ[v]`` is the flat index of the successor of vertex v (-1 in
    the last column) and ``star[k]`` the index of (t_min + k, s*).
    """

    model: ChainModel
    noise: NoiseField
    t_min: int
    t_max: int
    col_ptr: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    succ: np.ndarray = field(repr=False)
    star: np.ndarray = field(repr=False)

    def _k(self, t: int) -> int:
        if not self.t_min <= t <= self.t_max:
            raise UsageError(f"time {t} outside window [{self.t_min}, {self.t_max}]")
        return t - self.t_min

    def _span(self, t: int) -> tuple[int, int]:
        k = self._k(t)
        return int(self.col_ptr[k]), int(self.col_ptr[k + 1])

    def column(self, t: int) -> frozenset[int]:
        a, b = self._span(t)
        return frozenset(self.states[a:b].tolist())

    def column_array(self, t: int) -> np.ndarray:
        a, b = self._span(t)
        return self.states[a:b]

    def index(self, t: int, x: int) -> int:
        a, b = self._span(t)
        i = a + int(np.searchsorted(self.states[a:b], x))
        if i >= b or self.states[i] != x:
            raise KeyError((t, x))
        return i

    def successor(self, t: int, x: int) -> int:
        if t >= self.t_max:
            raise UsageError("the last column has no successors")
        return int(self.states[self.succ[self.index(t, x)]])

    def jump(self, t: int) -> int:
        """State reached at t + 1 by the path started at (t, s*)."""
        if t >= self.t_max:
            raise UsageError("the last column has no successors")
        return int(self.states[self.succ[self.star[self._k(t)]]])

    def jumps(self) -> np.ndarray:
        """``jump(t)`` for every t_min <= t < t_max."""
        return self.states[self.succ[self.star[:-1]]]

    def parents(self, t: int, y: int) -> list[int]:
        if t <= self.t_min:
            return []
        j = self.index(t, y)
        a, b = self._span(t - 1)
        return self.states[a:b][self.succ[a:b] == j].tolist()

    @property
    def n_vertices(self) -> int:
        return len(self.states)

    def vertices(self):
        for k in range(self.t_max - self.t_min + 1):
            a, b = int(self.col_ptr[k]), int(self.col_ptr[k + 1])
            for x in self.states[a:b].tolist():
                yield self.t_min + k, x

    def resolve(self, at: int) -> tuple[np.ndarray, np.ndarray]:
        """For every vertex in columns t_min..at: its state at column ``at`` and
        whether its path visits s* in columns [t, at].

        Pointer jumping: after round r each vertex points 2**r steps ahead
        (or to column ``at``), and ``acc`` ORs the s* indicator over the
        stretch already skipped.
        """
        k_at = self._k(at)
        a_at, end = int(self.col_ptr[k_at]), int(self.col_ptr[k_at + 1])
        is_s = self.states[:end] == self.model.s_star
        ptr = self.succ[:end].copy()
        ptr[a_at:end] = np.arange(a_at, end)
        acc = is_s.copy()
        while True:
            live = np.flatnonzero(ptr < a_at)
            if live.size == 0:
                break
            p = ptr[live]
            acc[live] |= acc[p]
            ptr[live] = ptr[p]
        return self.states[ptr], acc | is_s[ptr]

    def forward_counts(self):
        """Per column: (states, starts through each vertex, starts through it that have not yet returned to s*)."""
        s = self.model.s_star
        through = taboo = None
        for k in range(self.t_max - self.t_min + 1):
            a, b = int(self.col_ptr[k]), int(self.col_ptr[k + 1])
            st = self.states[a:b]
            nt = np.zeros(b - a, dtype=np.int64)
            nb = np.zeros(b - a, dtype=np.int64)
            if k:
                pa, pb = int(self.col_ptr[k - 1]), a
                dst = self.succ[pa:pb] - a
                np.add.at(nt, dst, through)
                np.add.at(nb, dst, taboo)
            j = int(self.star[k]) - a
            nt[j] += 1
            nb[j] = 1
            through, taboo = nt, nb
            yield self.t_min + k, st, through, taboo

    def to_csv(self) -> str:
        """One row per vertex: time,state,parent_time,parent_state,n_starts_through,taboo_flag.

        Vertices with several parents list them separated by ';'.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "state", "parent_time", "parent_state", "n_starts_through", "taboo_flag"])
        for t, st, through, taboo in self.forward_counts():
            rev: dict[int, list[int]] = {}
            if t > self.t_min:
                a, b = self._span(t - 1)
                c0 = self._span(t)[0]
                for x, j in zip(self.states[a:b].tolist(), self.succ[a:b].tolist()):
                    rev.setdefault(j - c0, []).append(x)
            for i, x in enumerate(st.tolist()):
                ps = rev.get(i, [])
                w.writerow([t, x, t - 1 if ps else "", ";".join(map(str, ps)), int(through[i]), int(taboo[i] > 0)])
        return buf.getvalue()


def build_bridge(
    model: ChainModel,
    noise: NoiseField,
    t_min: int,
    t_max: int,
    max_vertices: int = DEFAULT_MAX_VERTICES,
) -> BridgeGraph:
    """Union of the paths from (t, s*), t_min <= t <= t_max, over the columns t_min..t_max."""
    t_min, t_max = int(t_min), int(t_max)
    if not t_min < t_max:
        raise UsageError("build_bridge needs t_min < t_max")
    if isinstance(model, RenewalChain) and noise.mode is not Coupling.MAXIMAL_SHIFT:
        return _build_renewal(model, noise, t_min, t_max, max_vertices)
    s = model.s_star
    n_cols = t_max - t_min + 1
    col_ptr = np.zeros(n_cols + 1, dtype=np.int64)
    star = np.zeros(n_cols, dtype=np.int64)
    st_chunks, sc_chunks = [], []
    st_buf: list[int] = []
    sc_buf: list[int] = []

    def flush():
        if st_buf:
            st_chunks.append(np.array(st_buf, dtype=np.int64))
            sc_chunks.append(np.array(sc_buf, dtype=np.int64))
            st_buf.clear()
            sc_buf.clear()

    col: "list[int] | np.ndarray" = [s]
    star_pos = 0
    base = 0
    for k in range(n_cols - 1):
        t = t_min + k
        n = len(col)
        star[k] = base + star_pos
        if base + n > max_vertices:
            raise ResourceError(f"bridge exceeds {max_vertices} vertices at column {t}")
        if n >= _VECTOR_COLUMN:
            xs = np.asarray(col, dtype=np.int64)
            ys = advance_array(model, noise, t, xs)
            nxt = np.unique(np.append(ys, s))
            flush()
            st_chunks.append(xs)
            sc_chunks.append(np.searchsorted(nxt, ys) + base + n)
            star_pos = int(np.searchsorted(nxt, s))
            col = nxt if len(nxt) >= _VECTOR_COLUMN else nxt.tolist()
        else:
            ys = advance_column(model, noise, t, col)
            nxt = sorted(set(ys) | {s})
            pos = {v: i for i, v in enumerate(nxt)}
            off = base + n
            st_buf.extend(col)
            sc_buf.extend(off + pos[y] for y in ys)
            star_pos = pos[s]
            col = nxt
        base += n
        col_ptr[k + 1] = base
    n = len(col)
    if base + n > max_vertices:
        raise ResourceError(f"bridge exceeds {max_vertices} vertices at column {t_max}")
    star[n_cols - 1] = base + star_pos
    st_buf.extend(col.tolist() if isinstance(col, np.ndarray) else col)
    sc_buf.extend([-1] * n)
    flush()
    col_ptr[n_cols] = base + n
    states = np.concatenate(st_chunks)
    succ = np.concatenate(sc_chunks)
    return BridgeGraph(model, noise, t_min, t_max, col_ptr, states, succ, star)


def _build_renewal(model: RenewalChain, noise: NoiseField, t_min: int, t_max: int, max_vertices: int) -> BridgeGraph:
    """Vectorized construction for the renewal chain; same output as the column sweep.

    The path from (s, 0) runs down the diagonal state = d - t, d = s + eta_s,
    so the bridge is the time axis plus, for each diagonal d, the stretch of
    columns (min start on d, d).  Vertices are generated axis first, then
    diagonal by diagonal in time order, and finally sorted by (time, state).
    """
    n_cols = t_max - t_min + 1
    starts = np.arange(t_min, t_max, dtype=np.int64)
    eta = model.dist.quantile_array(noise.block(starts, model.s_star, 1)[..., 0])
    d = starts + eta
    diag, first = np.unique(d, return_index=True)
    smin = starts[first]
    t_lo = smin + 1
    t_hi = np.minimum(diag - 1, t_max)
    seg = np.maximum(t_hi - t_lo + 1, 0)
    # column sizes: the axis vertex plus every diagonal stretch alive at t
    live = seg > 0
    alive = np.zeros(n_cols + 1, dtype=np.int64)
    np.add.at(alive, t_lo[live] - t_min, 1)
    np.add.at(alive, t_hi[live] - t_min + 1, -1)
    col_sizes = 1 + np.cumsum(alive)[:n_cols]
    total = np.cumsum(col_sizes)
    if total[-1] > max_vertices:
        k = int(np.searchsorted(total, max_vertices, side="right"))
        raise ResourceError(f"bridge exceeds {max_vertices} vertices at column {t_min + k}")

    n_diag_v = int(seg.sum())
    seg_start = n_cols + np.concatenate([[0], np.cumsum(seg)[:-1]])  # generation index of each diagonal's first vertex
    T = np.empty(n_cols + n_diag_v, dtype=np.int64)
    X = np.empty_like(T)
    S = np.empty_like(T)
    T[:n_cols] = np.arange(t_min, t_max + 1)
    X[:n_cols] = 0
    owner = np.repeat(np.arange(len(diag)), seg)
    offs = np.arange(n_diag_v) - np.repeat(seg_start - n_cols, seg)
    T[n_cols:] = t_lo[owner] + offs
    X[n_cols:] = diag[owner] - T[n_cols:]
    # successors in generation numbering
    g = np.arange(n_cols + n_diag_v, dtype=np.int64)
    S[n_cols:] = g[n_cols:] + 1
    end_of_seg = X[n_cols:] == 1
    S[n_cols:][end_of_seg] = T[n_cols:][end_of_seg] + 1 - t_min
    ax = np.arange(n_cols - 1)
    tgt = d  # axis vertex (t, 0) jumps onto diagonal d at column t + 1
    di = np.searchsorted(diag, tgt)
    S[ax] = np.where(eta == 1, ax + 1, seg_start[di] + (starts + 1 - t_lo[di]))
    S[T == t_max] = -1
    order = np.lexsort((X, T))
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    states = X[order]
    succ = S[order]
    succ = np.where(succ >= 0, rank[np.maximum(succ, 0)], -1)
    col_ptr = np.concatenate([[0], np.cumsum(col_sizes)])
    star = rank[:n_cols]  # the axis vertices are generated first
    return BridgeGraph(model, noise, t_min, t_max, col_ptr, states, succ, star)


def s_set(bridge: BridgeGraph, at: int) -> frozenset[int]:
    """States occupied by the bridge at column ``at``."""
    return bridge.column(at)


def start_landings(bridge: BridgeGraph, at: int) -> tuple[np.ndarray, np.ndarray]:
    """For the starts t_min..at-1: state at column ``at`` and whether s* was revisited in (start, at]."""
    k = bridge._k(at)
    if k == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool)
    land, hit = bridge.resolve(at)
    nxt = bridge.succ[bridge.star[:k]]
    return land[nxt], hit[nxt]


def _count(values: np.ndarray, extra: int) -> CountingMeasure:
    u, c = np.unique(values, return_counts=True)
    out = dict(zip(u.tolist(), c.tolist()))
    out[extra] = out.get(extra, 0) + 1
    return CountingMeasure(out)


def taboo_and_potential(bridge: BridgeGraph, at: int) -> tuple[CountingMeasure, CountingMeasure]:
    """Windowed (taboo, potential) multiplicities at column ``at``."""
    s = bridge.model.s_star
    y, returned = start_landings(bridge, at)
    return _count(y[~returned], s), _count(y, s)


def multiplicities(bridge: BridgeGraph, at: int, kind: str) -> CountingMeasure:
    """Windowed taboo or potential multiplicities at column ``at``."""
    if kind not in ("taboo", "potential"):
        raise UsageError(f"kind must be 'taboo' or 'potential', got {kind!r}")
    tab, pot = taboo_and_potential(bridge, at)
    return tab if kind == "taboo" else pot


@dataclass(frozen=True)
class RecurrenceTimes:
    """First-return lengths T_t for starts t in [t_min, t_max), censored at ``cap``."""

    t_min: int
    t_max: int
    cap: int
    times: np.ndarray = field(repr=False)
    censored: np.ndarray = field(repr=False)

    def __getitem__(self, t: int) -> tuple[int, bool]:
        k = t - self.t_min
        return int(self.times[k]), bool(self.censored[k])

    def __len__(self) -> int:
        return len(self.times)

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    @property
    def mean_uncensored(self) -> float:
        ok = ~self.censored
        return float(self.times[ok].mean()) if ok.any() else float("nan")


def recurrence_times(model: ChainModel, noise: NoiseField, window: tuple[int, int], horizon_cap: int) -> RecurrenceTimes:
    """Vectorized first-return lengths of the paths from (t, s*), t in [window[0], window[1])."""
    if horizon_cap < 1:
        raise UsageError("horizon_cap must be at least 1")
    t_min, t_max = window
    starts = np.arange(t_min, t_max, dtype=np.int64)
    times = np.full(starts.shape, horizon_cap, dtype=np.int64)
    done = np.zeros(starts.shape, dtype=bool)
    idx = np.arange(len(starts))
    x = np.full(starts.shape, model.s_star, dtype=np.int64)
    for k in range(horizon_cap):
        if idx.size == 0:
            break
        x = advance_array(model, noise, starts[idx] + k, x)
        back = x == model.s_star
        times[idx[back]] = k + 1
        done[idx[back]] = True
        idx, x = idx[~back], x[~back]
    return RecurrenceTimes(t_min, t_max, horizon_cap, times, ~done)
