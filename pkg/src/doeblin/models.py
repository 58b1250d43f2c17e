"""Countable-state Markov chains driven by uniforms: x_{t+1} = h(x_t, xi_t^x).

Every model exposes a scalar ``step`` and a vectorized ``step_array`` that
agree exactly.  The reference state s* is 0 for all built-in models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import JumpDistribution, make_distribution
from .errors import UsageError
from .noise import Coupling, NoiseField


@dataclass(frozen=True)
class ChainModel:
    """Base class; subclasses implement ``_h`` and ``_h_array``."""

    name: str = field(init=False, default="chain")
    s_star: int = field(init=False, default=0)
    width: int = field(init=False, default=1)
    monotone: bool = field(init=False, default=False)
    bounded_below: bool = field(init=False, default=True)
    translation_invariant: bool = field(init=False, default=False)

    @property
    def spec(self) -> str:
        return self.name

    def _check(self, u) -> None:
        if len(u) != self.width:
            raise UsageError(f"{self.spec} expects {self.width} uniform(s) per step, got {len(u)}")

    def step(self, x: int, u) -> int:
        """Next state from state x under the uniform vector u."""
        self._check(u)
        return int(self._h(int(x), u))

    def step_array(self, x, u) -> np.ndarray:
        """Vectorized ``step``; u has shape ``x.shape + (width,)``."""
        x = np.asarray(x, dtype=np.int64)
        u = np.asarray(u, dtype=float)
        if u.shape != x.shape + (self.width,):
            raise UsageError(f"uniform block of shape {u.shape} does not match states {x.shape} x {self.width}")
        return self._h_array(x, u)

    def uses_noise(self, x: int) -> bool:
        """False when h(x, .) is constant, so the noise at x need not be drawn."""
        return True

    def step_shared(self, x: np.ndarray, u) -> np.ndarray:
        """``step_array`` for many states sharing one uniform vector."""
        x = np.asarray(x, dtype=np.int64)
        return self.step_array(x, np.broadcast_to(np.asarray(u, dtype=float), x.shape + (self.width,)))

    def noise(self, seed: int, mode=Coupling.TOTALLY_INDEPENDENT) -> NoiseField:
        return NoiseField(seed, mode, self.width)

    def transition_row(self, x: int, tol: float = 1e-12) -> dict[int, float]:
        """Row x of the transition matrix, truncated once the remaining mass is below tol."""
        raise NotImplementedError

    def _h(self, x: int, u) -> int:
        raise NotImplementedError

    def _h_array(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


_ROW_CAP = 1 << 20


def _truncated_support(dist: JumpDistribution, tol: float) -> range:
    """Support up to the (1 - tol) quantile; heavy tails are cut at 2**20 values."""
    top = dist.quantile(min(1.0 - tol, 1.0 - 2.0**-53))
    return range(1, min(top, _ROW_CAP) + 1)


@dataclass(frozen=True)
class RenewalChain(ChainModel):
    """Jump from 0 to eta - 1, then descend by one until 0 is hit again."""

    dist: JumpDistribution = None

    def __post_init__(self):
        object.__setattr__(self, "name", f"renewal:{self.dist.spec}")

    def uses_noise(self, x: int) -> bool:
        return x == 0

    def _h(self, x, u):
        if x > 0:
            return x - 1
        if x < 0:
            raise UsageError(f"renewal chain has no state {x}")
        return self.dist.quantile(u[0]) - 1

    def _h_array(self, x, u):
        out = x - 1
        zero = x == 0
        if zero.any():
            out[zero] = self.dist.quantile_array(u[zero, 0]) - 1
        if (x < 0).any():
            raise UsageError("renewal chain has no negative states")
        return out

    def transition_row(self, x, tol=1e-12):
        if x > 0:
            return {x - 1: 1.0}
        return {k - 1: self.dist.pmf(k) for k in _truncated_support(self.dist, tol)}


@dataclass(frozen=True)
class LazyRandomWalk(ChainModel):
    """Walk on Z moving -1, 0, +1 with probability 1/3 each."""

    def __post_init__(self):
        object.__setattr__(self, "name", "lazyrw")
        object.__setattr__(self, "monotone", True)
        object.__setattr__(self, "bounded_below", False)
        object.__setattr__(self, "translation_invariant", True)

    def _h(self, x, u):
        return x + (0 if u[0] < 1 / 3 else 1 if u[0] < 2 / 3 else 2) - 1

    def _h_array(self, x, u):
        return x + (u[..., 0] >= 1 / 3) + (u[..., 0] >= 2 / 3) - 1

    def transition_row(self, x, tol=1e-12):
        return {x - 1: 1 / 3, x: 1 / 3, x + 1: 1 / 3}


@dataclass(frozen=True)
class ReflectedRandomWalk(ChainModel):
    """Simple symmetric walk on N reflected at 0; null recurrent with sigma == 1."""

    def __post_init__(self):
        object.__setattr__(self, "name", "reflectedrw")
        object.__setattr__(self, "monotone", True)

    def _h(self, x, u):
        return max(x - 1, 0) if u[0] < 0.5 else x + 1

    def _h_array(self, x, u):
        return np.where(u[..., 0] < 0.5, np.maximum(x - 1, 0), x + 1)

    def transition_row(self, x, tol=1e-12):
        if x == 0:
            return {0: 0.5, 1: 0.5}
        return {x - 1: 0.5, x + 1: 0.5}


@dataclass(frozen=True)
class WorkloadChain(ChainModel):
    """Lindley recursion W' = (W + service - interarrival)^+ with two uniforms per step."""

    service: JumpDistribution = None
    interarrival: JumpDistribution = None

    def __post_init__(self):
        object.__setattr__(self, "name", f"queue:{self.service.spec}:{self.interarrival.spec}")
        object.__setattr__(self, "width", 2)
        object.__setattr__(self, "monotone", True)

    @property
    def load(self) -> float:
        return self.service.mean / self.interarrival.mean

    def increments(self, u) -> np.ndarray:
        """service - interarrival for a block of uniform pairs."""
        u = np.asarray(u, dtype=float)
        return self.service.quantile_array(u[..., 0]) - self.interarrival.quantile_array(u[..., 1])

    def _h(self, x, u):
        return max(x + self.service.quantile(u[0]) - self.interarrival.quantile(u[1]), 0)

    def _h_array(self, x, u):
        return np.maximum(x + self.increments(u), 0)

    def step_shared(self, x, u):
        self._check(u)
        return np.maximum(np.asarray(x, dtype=np.int64) + (self.service.quantile(u[0]) - self.interarrival.quantile(u[1])), 0)

    def transition_row(self, x, tol=1e-12):
        row: dict[int, float] = {}
        for a in _truncated_support(self.service, tol):
            pa = self.service.pmf(a)
            for b in _truncated_support(self.interarrival, tol):
                y = max(x + a - b, 0)
                row[y] = row.get(y, 0.0) + pa * self.interarrival.pmf(b)
        return row


def parse_model(spec: "str | ChainModel") -> ChainModel:
    """Model from ``renewal:<dist>``, ``lazyrw``, ``reflectedrw`` or ``queue:<dist>:<dist>``."""
    if isinstance(spec, ChainModel):
        return spec
    text = str(spec).strip()
    head, _, rest = text.partition(":")
    head = head.lower()
    if head == "renewal":
        return RenewalChain(dist=make_distribution(rest))
    if head == "lazyrw" and not rest:
        return LazyRandomWalk()
    if head == "reflectedrw" and not rest:
        return ReflectedRandomWalk()
    if head == "queue":
        parts = rest.split(":")
        if len(parts) != 4:
            raise UsageError(f"queue spec must read queue:<kind>:<param>:<kind>:<param>, got {spec!r}")
        service = make_distribution(":".join(parts[:2]), require_aperiodic=False)
        inter = make_distribution(":".join(parts[2:]), require_aperiodic=False)
        return WorkloadChain(service=service, interarrival=inter)
    raise UsageError(f"unknown model spec {spec!r}")


def uniforms(model: ChainModel, noise: NoiseField, t: int, x: int) -> tuple[float, ...]:
    """The model's uniform vector at (t, x); the field's own width is irrelevant."""
    return tuple(noise.component(t, x, c) for c in range(model.width))


def uniform_block(model: ChainModel, noise: NoiseField, t, x) -> np.ndarray:
    return noise.block(t, x, model.width)


def _check_shift(model: ChainModel) -> None:
    if not model.translation_invariant:
        raise UsageError(f"maximal_shift coupling needs a translation-invariant model, not {model.spec}")


def advance(model: ChainModel, noise: NoiseField, t: int, x: int) -> int:
    """One edge of the Doeblin graph: (t, x) -> (t+1, h(x, xi_t^x))."""
    if noise.mode is Coupling.MAXIMAL_SHIFT:
        _check_shift(model)
        s = model.s_star
        return x + model.step(s, uniforms(model, noise, t, s)) - s
    if not model.uses_noise(x):
        return model.step(x, (0.0,) * model.width)
    return model.step(x, uniforms(model, noise, t, x))


def advance_array(model: ChainModel, noise: NoiseField, t, x) -> np.ndarray:
    """Vectorized ``advance`` over broadcast arrays of times and states."""
    x = np.asarray(x, dtype=np.int64)
    if noise.shares_columns and np.ndim(t) == 0:
        u = uniforms(model, noise, int(t), model.s_star)
        if noise.mode is Coupling.MAXIMAL_SHIFT:
            _check_shift(model)
            return x + (model.step(model.s_star, u) - model.s_star)
        return model.step_shared(x, u)
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), x.shape)
    if noise.mode is Coupling.MAXIMAL_SHIFT:
        _check_shift(model)
        s = model.s_star
        base = np.full(x.shape, s, dtype=np.int64)
        return x + model.step_array(base, uniform_block(model, noise, t, base)) - s
    return model.step_array(x, uniform_block(model, noise, t, x))


def advance_column(model: ChainModel, noise: NoiseField, t: int, states) -> list[int]:
    """Successors of several states in one column, drawing shared uniforms once."""
    if noise.mode is Coupling.MAXIMAL_SHIFT:
        _check_shift(model)
        s = model.s_star
        d = model.step(s, uniforms(model, noise, t, s)) - s
        return [x + d for x in states]
    if noise.shares_columns:
        u = uniforms(model, noise, t, model.s_star)
        return [model.step(x, u) for x in states]
    return [advance(model, noise, t, x) for x in states]
