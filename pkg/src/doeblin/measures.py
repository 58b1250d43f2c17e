"""Integer-valued counting measures and the Taboo and Potential update maps."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping

from .errors import UsageError
from .models import ChainModel, advance_column
from .noise import NoiseField


class CountingMeasure(Mapping):
    """Finite sparse map state -> positive count.  Immutable and hashable.

    States are integers; negative states are accepted so that walks on Z
    (the lazy random walk) can carry measures too.
    """

    __slots__ = ("_d", "_hash")

    def __init__(self, data: "Mapping[int, int] | Iterable[tuple[int, int]] | None" = None):
        items = data.items() if isinstance(data, Mapping) else (data or ())
        d: dict[int, int] = {}
        for state, count in items:
            c = int(count)
            if c < 0:
                raise UsageError(f"negative count {count} at state {state}")
            if c:
                s = int(state)
                d[s] = d.get(s, 0) + c
        self._d = dict(sorted(d.items()))
        self._hash = None

    @classmethod
    def dirac(cls, state: int, count: int = 1) -> "CountingMeasure":
        return cls({state: count})

    def __getitem__(self, state):
        return self._d[state]

    def get(self, state, default=0):
        return self._d.get(state, default)

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __eq__(self, other):
        if isinstance(other, CountingMeasure):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._d.items()))
        return self._hash

    def __repr__(self):
        return f"CountingMeasure({self._d})"

    @property
    def mass(self) -> int:
        return sum(self._d.values())

    @property
    def support(self) -> frozenset[int]:
        return frozenset(self._d)

    @property
    def is_simple(self) -> bool:
        return all(c == 1 for c in self._d.values())

    def restrict(self, hi: int, lo: "int | None" = None) -> "CountingMeasure":
        """Restriction to states in [lo, hi] (no lower bound when lo is None)."""
        return CountingMeasure({s: c for s, c in self._d.items() if s <= hi and (lo is None or s >= lo)})

    def interval(self, a: int, b: int) -> int:
        """Mass of the open interval (a, b)."""
        return sum(c for s, c in self._d.items() if a < s < b)

    def __add__(self, other: "CountingMeasure") -> "CountingMeasure":
        out = dict(self._d)
        for s, c in other.items():
            out[s] = out.get(s, 0) + c
        return CountingMeasure(out)

    def __sub__(self, other: "CountingMeasure") -> "CountingMeasure":
        out = dict(self._d)
        for s, c in other.items():
            out[s] = out.get(s, 0) - c
        return CountingMeasure(out)

    def pairs(self) -> list[tuple[int, int]]:
        return list(self._d.items())

    def to_json(self) -> str:
        return json.dumps([[s, c] for s, c in self._d.items()])

    @classmethod
    def from_json(cls, text: str) -> "CountingMeasure":
        return cls((s, c) for s, c in json.loads(text))

    def to_csv(self) -> str:
        return "state,count\n" + "".join(f"{s},{c}\n" for s, c in self._d.items())


EMPTY = CountingMeasure()


def _push(M: Mapping, model: ChainModel, noise: NoiseField, t: int) -> dict[int, int]:
    out: dict[int, int] = {}
    xs = list(M)
    for x, y in zip(xs, advance_column(model, noise, t, xs)):
        out[y] = out.get(y, 0) + M[x]
    return out


def taboo_step(M: Mapping, model: ChainModel, noise: NoiseField, t: int) -> CountingMeasure:
    """Push M one step along column t, delete whatever enters s*, then put one unit at s*."""
    out = _push(M, model, noise, t)
    out[model.s_star] = 1
    return CountingMeasure(out)


def potential_step(M: Mapping, model: ChainModel, noise: NoiseField, t: int) -> CountingMeasure:
    """Push M one step along column t and add one unit at s*."""
    out = _push(M, model, noise, t)
    out[model.s_star] = out.get(model.s_star, 0) + 1
    return CountingMeasure(out)


def iterate_dynamics(M0: Mapping, kind: str, model: ChainModel, noise: NoiseField, t0: int, n_steps: int) -> CountingMeasure:
    """Apply the taboo or potential update with columns t0, ..., t0 + n_steps - 1."""
    if n_steps < 0:
        raise UsageError("n_steps must be nonnegative")
    update = {"taboo": taboo_step, "potential": potential_step}.get(kind)
    if update is None:
        raise UsageError(f"kind must be 'taboo' or 'potential', got {kind!r}")
    M = M0 if isinstance(M0, CountingMeasure) else CountingMeasure(M0)
    for k in range(n_steps):
        M = update(M, model, noise, t0 + k)
    return M
