"""Jump distributions on the positive integers and their inverse-cdf sampling.

Four families are supported: ``geo:p`` (P(k) = p (1-p)^(k-1)), ``poi:lam``
(1 + Poisson(lam)), ``zeta:a`` (P(k) proportional to k^-(a+1), so tails
decay like k^-a) and ``emp:v=p,...`` (an explicit finite list).

Sampling uses the generalized inverse ``quantile(u) = min{k : cdf(k) >= u}``.
The cdf is tabulated lazily; beyond the table the zeta family is inverted
through the Hurwitz zeta tail.
"""

from __future__ import annotations

import math
import threading
from functools import reduce

import numpy as np
from scipy import special, stats

from .errors import UsageError

# largest double strictly below 1, i.e. the largest uniform a NoiseField can emit
U_MAX = 1.0 - 2.0**-53

_TABLE_LIMIT = 1 << 16
_EMPIRICAL_TOL = 1e-12


class JumpDistribution:
    """Law of a jump length on {1, 2, ...}.

    Instances are immutable from the caller's point of view.  The cdf table
    grows on demand behind a lock, so sharing across threads is safe.
    """

    def __init__(self, kind: str, params: tuple, *, require_aperiodic: bool = True):
        self.kind = kind
        self.params = params
        self._lock = threading.Lock()
        if kind == "geo":
            (p,) = params
            if not 0.0 < p < 1.0:
                raise UsageError(f"geometric parameter must lie in (0,1), got {p}")
        elif kind == "poi":
            (lam,) = params
            if not lam > 0.0:
                raise UsageError(f"poisson parameter must be positive, got {lam}")
        elif kind == "zeta":
            (alpha,) = params
            if not alpha > 0.0:
                raise UsageError(f"zeta exponent must be positive, got {alpha}")
            self._zeta_norm = float(special.zeta(alpha + 1.0))
        elif kind == "emp":
            values, probs = params
            if len(values) == 0:
                raise UsageError("empirical distribution needs at least one atom")
            if any(v < 1 for v in values):
                raise UsageError("empirical support must lie in the positive integers")
            if len(set(values)) != len(values):
                raise UsageError("empirical values must be distinct")
            if any(not q > 0.0 for q in probs):
                raise UsageError("empirical probabilities must be positive")
            total = math.fsum(probs)
            if abs(total - 1.0) > _EMPIRICAL_TOL:
                raise UsageError(f"empirical probabilities sum to {total!r}, not 1")
            order = np.argsort(values)
            self._values = np.asarray(values, dtype=np.int64)[order]
            self._probs = np.asarray(probs, dtype=float)[order] / total
        else:
            raise UsageError(f"unknown distribution kind {kind!r}")
        if require_aperiodic and self.support_gcd() != 1:
            raise UsageError(f"support of {self.spec} has gcd {self.support_gcd()} != 1")
        self._cdf = np.empty(0)
        self._cdf_list: list[float] = []
        self._extend(64)

    # -- construction helpers -------------------------------------------------

    @property
    def spec(self) -> str:
        if self.kind == "emp":
            return "emp:" + ",".join(f"{v}={p:g}" for v, p in zip(self._values, self._probs))
        return f"{self.kind}:{self.params[0]:g}"

    def __repr__(self) -> str:
        return f"JumpDistribution({self.spec!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, JumpDistribution) and self.spec == other.spec

    def __hash__(self) -> int:
        return hash(self.spec)

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def support_gcd(self) -> int:
        if self.kind == "emp":
            return reduce(math.gcd, (int(v) for v in self._values))
        return 1  # every parametric family charges k = 1

    # -- analytic quantities ----------------------------------------------------

    def pmf(self, k: int) -> float:
        if k < 1:
            return 0.0
        if self.kind == "geo":
            p = self.params[0]
            return p * (1.0 - p) ** (k - 1)
        if self.kind == "poi":
            return float(stats.poisson.pmf(k - 1, self.params[0]))
        if self.kind == "zeta":
            return k ** -(self.params[0] + 1.0) / self._zeta_norm
        idx = np.searchsorted(self._values, k)
        if idx < len(self._values) and self._values[idx] == k:
            return float(self._probs[idx])
        return 0.0

    def sf(self, k):
        """P(eta > k), vectorized over k."""
        k = np.asarray(k, dtype=float)
        kk = np.maximum(k, 0.0)
        if self.kind == "geo":
            out = np.exp(kk * math.log1p(-self.params[0]))
        elif self.kind == "poi":
            out = stats.poisson.sf(kk - 1.0, self.params[0])
        elif self.kind == "zeta":
            out = special.zeta(self.params[0] + 1.0, kk + 1.0) / self._zeta_norm
        else:
            tail = np.concatenate([np.cumsum(self._probs[::-1])[::-1], [0.0]])
            idx = np.searchsorted(self._values, kk, side="right")
            out = tail[idx]
        out = np.where(k < 1, 1.0, out)
        return out if out.ndim else float(out)

    def cdf(self, k) -> float:
        if np.ndim(k) == 0:
            return 1.0 - self.sf(k)
        return 1.0 - self.sf(k)

    @property
    def mean(self) -> float:
        """Expected jump; ``math.inf`` flags an infinite mean."""
        if self.kind == "geo":
            return 1.0 / self.params[0]
        if self.kind == "poi":
            return 1.0 + self.params[0]
        if self.kind == "zeta":
            alpha = self.params[0]
            if alpha <= 1.0:
                return math.inf
            return float(special.zeta(alpha) / self._zeta_norm)
        return float(np.dot(self._values, self._probs))

    @property
    def has_finite_mean(self) -> bool:
        return math.isfinite(self.mean)

    # -- cdf table --------------------------------------------------------------

    def _extend(self, n: int) -> None:
        with self._lock:
            have = len(self._cdf)
            if n <= have:
                return
            if self.kind == "emp":
                top = int(self._values[-1])
                ks = np.arange(1, top + 1)
                idx = np.searchsorted(self._values, ks, side="right")
                cdf = np.concatenate([[0.0], np.cumsum(self._probs)])[idx]
                cdf[-1] = 1.0
            else:
                ks = np.arange(1, n + 1, dtype=float)
                cdf = 1.0 - np.asarray(self.sf(ks))
            self._cdf = cdf
            self._cdf_list = cdf.tolist()

    def _table_covers(self, u: float) -> bool:
        return self._cdf_list[-1] >= u

    def quantile(self, u: float) -> int:
        """min{k >= 1 : cdf(k) >= u} for u in [0, 1)."""
        if not 0.0 <= u < 1.0:
            raise UsageError(f"uniform must lie in [0,1), got {u}")
        while not self._table_covers(u):
            if len(self._cdf) >= _TABLE_LIMIT or self.kind == "emp":
                if self.kind == "zeta":
                    return int(self._zeta_tail_quantile(np.array([u]))[0])
                break
            self._extend(2 * len(self._cdf))
        cdf = self._cdf_list
        lo, hi = 0, len(cdf) - 1
        if cdf[hi] < u:  # table saturated below u (only possible for rounding-limited tails)
            return hi + 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cdf[mid] >= u:
                hi = mid
            else:
                lo = mid + 1
        return lo + 1

    def quantile_array(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.size == 0:
            return np.zeros(u.shape, dtype=np.int64)
        umax = float(u.max())
        while not self._table_covers(umax):
            if len(self._cdf) >= _TABLE_LIMIT or self.kind == "emp":
                break
            self._extend(2 * len(self._cdf))
        cdf = self._cdf
        out = np.searchsorted(cdf, u, side="left").astype(np.int64) + 1
        beyond = u > cdf[-1]
        if beyond.any():
            if self.kind == "zeta":
                out[beyond] = self._zeta_tail_quantile(u[beyond])
            else:
                out[beyond] = len(cdf) + 1
        return out

    def _zeta_tail_quantile(self, u: np.ndarray) -> np.ndarray:
        """Invert P(eta > k) <= 1 - u beyond the table through the Hurwitz tail.

        The midpoint approximation sum_{j>k} j^-s ~ (k+1/2)^(1-s)/(s-1) gives a
        starting point; an integer correction against scipy's Hurwitz zeta
        then enforces the min{k : sf(k) <= 1-u} convention.  Values are
        saturated at 2**62 so that downstream int64 arithmetic cannot wrap.
        """
        alpha = self.params[0]
        s = alpha + 1.0
        v = 1.0 - u
        guess = (alpha * self._zeta_norm * v) ** (-1.0 / alpha) - 0.5
        cap = float(1 << 62)
        k = np.floor(np.clip(guess, len(self._cdf), cap))
        small = k < 2.0**52
        if small.any():
            ks, vs = k[small], v[small]
            for _ in range(64):
                sf_k = special.zeta(s, ks + 1.0) / self._zeta_norm
                sf_prev = special.zeta(s, ks) / self._zeta_norm
                up = sf_k > vs
                down = (~up) & (sf_prev <= vs) & (ks > len(self._cdf))
                if not (up.any() or down.any()):
                    break
                ks = ks + up - down
            k[small] = ks
        return np.minimum(k, cap).astype(np.int64)

    def sampling_bound(self) -> int:
        """Largest value ``quantile`` can return for a uniform from a NoiseField."""
        return self.quantile(U_MAX)


def _parse_float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"cannot parse {what} from {text!r}") from None


def make_distribution(spec: "str | JumpDistribution", *, require_aperiodic: bool = True) -> JumpDistribution:
    """Build a distribution from ``geo:0.5``, ``poi:25``, ``zeta:0.75`` or ``emp:1=0.5,2=0.5``."""
    if isinstance(spec, JumpDistribution):
        return spec
    kind, _, rest = str(spec).strip().partition(":")
    kind = kind.lower()
    if not rest:
        raise UsageError(f"distribution spec {spec!r} lacks parameters")
    if kind in ("geo", "poi", "zeta"):
        return JumpDistribution(kind, (_parse_float(rest, kind),), require_aperiodic=require_aperiodic)
    if kind == "emp":
        values, probs = [], []
        for item in rest.split(","):
            v, eq, p = item.partition("=")
            if not eq:
                raise UsageError(f"empirical entry {item!r} must read value=probability")
            try:
                values.append(int(v))
            except ValueError:
                raise UsageError(f"empirical value {v!r} is not an integer") from None
            probs.append(_parse_float(p, "probability"))
        return JumpDistribution("emp", (tuple(values), tuple(probs)), require_aperiodic=require_aperiodic)
    raise UsageError(f"unknown distribution kind {kind!r} in {spec!r}")


def sample_jump(dist: JumpDistribution, u: float) -> int:
    """Inverse-cdf draw of a jump length from a single uniform."""
    return dist.quantile(u)
