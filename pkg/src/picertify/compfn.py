"""Scalar comparison functions (class K / K-infinity / L pieces) and KL bounds.

A :class:`ComparisonFn` is an immutable expression tree over a few primitive
kinds. Linear pieces are tracked symbolically through :attr:`ComparisonFn.gain`
so that compositions and inverses of linear gains stay exact; everything
else is evaluated numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ClassViolationError, DomainError, NotContractiveError, UnreachableError

TOL_INV = 1e-10
N_SCAN = 512
N_PROBE = 1024
BRACKET_CAP = 1e15

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class ComparisonFn:
    kind: str
    params: tuple = ()
    parts: tuple = ()
    fn: Callable | None = field(default=None, repr=False)
    s_max: float = math.inf
    name: str = ""

    def __call__(self, s):
        return evaluate(self, s)

    def __repr__(self):
        return f"ComparisonFn({self.describe()})"

    @property
    def gain(self) -> float | None:
        """Slope if the function is exactly ``s -> gain * s``, else None."""
        k = self.kind
        if k == "linear":
            return self.params[0]
        if k == "power":
            c, p = self.params
            return c if p == 1 else None
        if k == "scaled":
            g = self.parts[0].gain
            return None if g is None else self.params[0] * g
        if k == "sum":
            gs = [p.gain for p in self.parts]
            return None if any(g is None for g in gs) else float(sum(gs))
        if k == "composed":
            f, g = (p.gain for p in self.parts)
            return None if f is None or g is None else f * g
        if k == "inverse":
            g = self.parts[0].gain
            return None if not g else 1.0 / g
        if k == "contraction":
            g = self.parts[0].gain
            if g is None:
                return None
            rho = 1.0 - self.params[0] * g
            return rho if rho >= 0 else None
        return None

    @property
    def is_linear(self) -> bool:
        return self.gain is not None

    def describe(self) -> str:
        if self.name:
            return self.name
        k = self.kind
        if k == "linear":
            return f"{self.params[0]:.6g}*s"
        if k == "power":
            return f"{self.params[0]:.6g}*s^{self.params[1]:.6g}"
        if k == "scaled":
            return f"{self.params[0]:.6g}*({self.parts[0].describe()})"
        if k == "sum":
            return " + ".join(f"({p.describe()})" for p in self.parts)
        if k == "composed":
            return f"({self.parts[0].describe()}) o ({self.parts[1].describe()})"
        if k == "inverse":
            return f"inv({self.parts[0].describe()})"
        if k == "contraction":
            return f"max(0, s - {self.params[0]:.6g}*({self.parts[0].describe()}))"
        return "callable"

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "expr": self.describe()}
        if self.gain is not None:
            out["gain"] = self.gain
        return out

    def _eval(self, s):
        k = self.kind
        if k == "linear":
            return self.params[0] * s
        if k == "power":
            c, p = self.params
            return c * np.power(s, p)
        if k == "scaled":
            return self.params[0] * self.parts[0]._eval(s)
        if k == "sum":
            out = self.parts[0]._eval(s)
            for p in self.parts[1:]:
                out = out + p._eval(s)
            return out
        if k == "composed":
            f, g = self.parts
            return f._eval(g._eval(s))
        if k == "inverse":
            f = self.parts[0]
            if np.ndim(s) == 0:
                return invert(f, float(s))
            return np.array([invert(f, float(v)) for v in np.ravel(s)]).reshape(np.shape(s))
        if k == "contraction":
            return np.maximum(0.0, s - self.params[0] * self.parts[0]._eval(s))
        if k == "callable":
            return self.fn(s)
        raise ValueError(f"unknown kind {k!r}")


# -- constructors ---------------------------------------------------------

def linear(a: float, name: str = "") -> ComparisonFn:
    if a < 0:
        raise DomainError(f"negative gain {a}")
    return ComparisonFn("linear", (float(a),), name=name)


def identity() -> ComparisonFn:
    return linear(1.0, name="I")


def zero() -> ComparisonFn:
    return linear(0.0, name="0")


def power(p: float, c: float = 1.0) -> ComparisonFn:
    if p <= 0 or c <= 0:
        raise DomainError("power needs p > 0 and c > 0")
    return ComparisonFn("power", (float(c), float(p)))


def scaled(c: float, f: ComparisonFn) -> ComparisonFn:
    if c < 0:
        raise DomainError(f"negative scale {c}")
    if f.kind == "linear":
        return linear(c * f.params[0])
    return ComparisonFn("scaled", (float(c),), (f,), s_max=f.s_max)


def add(*fs: ComparisonFn) -> ComparisonFn:
    if all(f.kind == "linear" for f in fs):
        return linear(sum(f.params[0] for f in fs))
    return ComparisonFn("sum", (), tuple(fs), s_max=min(f.s_max for f in fs))


def compose(f: ComparisonFn, g: ComparisonFn) -> ComparisonFn:
    """``f o g``."""
    if f.kind == "linear" and f.params[0] == 1.0:
        return g
    if g.kind == "linear" and g.params[0] == 1.0:
        return f
    if f.kind == "linear" and g.kind == "linear":
        return linear(f.params[0] * g.params[0])
    return ComparisonFn("composed", (), (f, g), s_max=g.s_max)


def inverse(f: ComparisonFn) -> ComparisonFn:
    g = f.gain
    if g is not None and g > 0 and f.kind == "linear":
        return linear(1.0 / g)
    return ComparisonFn("inverse", (), (f,))


def contraction(g: ComparisonFn, c: float = 1.0) -> ComparisonFn:
    """``s -> max(0, s - c*g(s))``; the one-step decrease map of a Lyapunov bound."""
    return ComparisonFn("contraction", (float(c),), (g,), s_max=g.s_max)


def from_callable(fn: Callable, s_max: float = math.inf, name: str = "") -> ComparisonFn:
    """Wrap a vectorised numpy callable."""
    return ComparisonFn("callable", (), (), fn=fn, s_max=s_max, name=name)


# -- operations -----------------------------------------------------------

def evaluate(f: ComparisonFn, s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"negative or nan argument to {f.describe()}")
    if np.any(arr > f.s_max):
        raise DomainError(f"argument beyond domain [0, {f.s_max}] of {f.describe()}")
    out = f._eval(arr if arr.ndim else float(arr))
    return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)


def bisect_inverse(f: ComparisonFn, y: float, tol: float = TOL_INV) -> float:
    """Solve ``f(s) = y`` by bracketing bisection; upper bracket doubles from max(1, y)."""
    if y < 0:
        raise DomainError(f"cannot invert at negative value {y}")
    if y == 0:
        return 0.0
    target = tol * max(1.0, y)
    lo, hi = 0.0, max(1.0, y)
    if hi > f.s_max:
        hi = f.s_max
    while f._eval(hi) < y:
        if hi >= f.s_max:
            raise UnreachableError(f"{y} not reached by {f.describe()} on its domain")
        lo, hi = hi, min(2.0 * hi, f.s_max)
        if hi > BRACKET_CAP:
            raise UnreachableError(f"{y} not reached by {f.describe()} below {BRACKET_CAP:g}")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        fm = f._eval(mid)
        if abs(fm - y) <= target:
            return mid
        if fm < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return 0.5 * (lo + hi)


def invert(f: ComparisonFn, y: float, tol: float = TOL_INV) -> float:
    if y < 0:
        raise DomainError(f"cannot invert at negative value {y}")
    g = f.gain
    if g is not None:
        if g <= 0:
            if y == 0:
                return 0.0
            raise UnreachableError(f"{f.describe()} is identically zero")
        return y / g
    if f.kind == "power":
        c, p = f.params
        return (y / c) ** (1.0 / p)
    return bisect_inverse(f, y, tol)


def probe_grid(hi: float, n: int = N_PROBE) -> np.ndarray:
    return np.linspace(0.0, hi, n)


def is_nondecreasing(f: ComparisonFn, hi: float, n: int = N_PROBE, strict: bool = False) -> bool:
    if f.is_linear:
        g = f.gain
        return g > 0 if strict else g >= 0
    s = probe_grid(min(hi, f.s_max), n)
    v = f._eval(s)
    d = np.diff(v)
    return bool(np.all(d > 0) if strict else np.all(d >= -1e-14 * np.maximum(1.0, np.abs(v[1:]))))


def require_kinf(f: ComparisonFn, hi: float = 100.0, n: int = N_PROBE) -> None:
    """Raise ClassViolationError unless f(0)=0 and f is strictly increasing on the probe grid."""
    if f._eval(0.0) != 0.0:
        raise ClassViolationError(f"{f.describe()} is nonzero at zero")
    if not is_nondecreasing(f, hi, n, strict=True):
        raise ClassViolationError(f"{f.describe()} failed the strict monotonicity probe on [0, {hi}]")


def iterate_contraction(map: ComparisonFn, s, k: int):
    """``map^(k)(s)`` with a contraction check at every step."""
    x = np.asarray(s, dtype=float)
    if np.any(x < 0):
        raise DomainError("negative argument")
    for _ in range(int(k)):
        y = np.asarray(map._eval(x), dtype=float)
        if np.any(y > x * (1 + 1e-12) + 1e-300):
            bad = np.flatnonzero(np.ravel(y > x * (1 + 1e-12) + 1e-300))[0]
            raise NotContractiveError(
                f"map({np.ravel(x)[bad]:.6g}) = {np.ravel(y)[bad]:.6g} exceeds its argument")
        if np.any(y < 0):
            raise NotContractiveError("map produced a negative value")
        x = y
    return float(x) if x.ndim == 0 else x


def _golden_max(g, lo, hi, xtol):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    while b - a > xtol:
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _GOLDEN * (b - a)
            gd = g(d)
    return (c, gc) if gc >= gd else (d, gd)


def kl_bound(map: ComparisonFn, s: float, k: int, n_scan: int = N_SCAN, monotone: bool | None = None) -> float:
    """``max_{t in [0,s]} map^(k)(t)``.

    Short-circuits to ``map^(k)(s)`` when the map passes the monotonicity
    probe on [0, s]; otherwise scans ``n_scan`` points and refines the best
    one by golden-section search.
    """
    s = float(s)
    if k == 0 or s == 0.0:
        return iterate_contraction(map, s, k)
    if monotone is None:
        monotone = is_nondecreasing(map, s)
    if monotone:
        return iterate_contraction(map, s, k)
    grid = np.linspace(0.0, s, n_scan)
    vals = iterate_contraction(map, grid, k)
    j = int(np.argmax(vals))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, n_scan - 1)]
    _, best = _golden_max(lambda t: iterate_contraction(map, t, k), lo, hi, 1e-13 * max(s, 1.0))
    return float(max(vals[j], best))


@dataclass(frozen=True, eq=False)
class KLBound:
    """A class-KL candidate ``(s, k) -> outer(max_{t<=inner(s)} map^(k)(t))``.

    ``mode="exponential"`` instead represents ``gain * exp(-decay*k) * s``.
    """

    mode: str
    map: ComparisonFn | None = None
    outer: ComparisonFn = field(default_factory=identity)
    inner: ComparisonFn = field(default_factory=identity)
    gain: float = 1.0
    decay: float = 0.0
    n_scan: int = N_SCAN

    @classmethod
    def iterated(cls, map, outer=None, inner=None, n_scan=N_SCAN):
        return cls("iterated", map, outer or identity(), inner or identity(), n_scan=n_scan)

    @classmethod
    def exponential(cls, gain: float, decay: float):
        return cls("exponential", gain=float(gain), decay=float(decay))

    def closed_form(self) -> "KLBound":
        """Exponential equivalent of an iterated bound whose pieces are all linear."""
        if self.mode == "exponential":
            return self
        rho, go, gi = self.map.gain, self.outer.gain, self.inner.gain
        if rho is None or go is None or gi is None:
            raise ValueError("closed form needs linear map, outer and inner")
        decay = math.inf if rho == 0 else -math.log(rho)
        return KLBound.exponential(go * gi, decay)

    @property
    def monotone_map(self) -> bool:
        return self.map is not None and is_nondecreasing(self.map, 1e3)

    def value(self, s: float, k: int) -> float:
        if s < 0 or k < 0:
            raise DomainError("KL bound needs s >= 0 and k >= 0")
        if self.mode == "exponential":
            if k == 0:
                return self.gain * s
            return self.gain * math.exp(-self.decay * k) * s if self.decay < math.inf else 0.0
        inner = float(self.inner._eval(float(s)))
        return float(self.outer._eval(kl_bound(self.map, inner, k, self.n_scan)))

    def __call__(self, s, k):
        return self.value(s, k)

    def values(self, s: float, k_max: int) -> np.ndarray:
        """``[value(s, k) for k in 0..k_max]``, incrementally when the map is monotone."""
        if self.mode == "exponential":
            ks = np.arange(k_max + 1)
            with np.errstate(over="ignore"):
                out = self.gain * np.exp(-self.decay * ks) * s
            out[0] = self.gain * s
            return out
        if is_nondecreasing(self.map, max(float(self.inner._eval(float(s))), 1e-12)):
            x = float(self.inner._eval(float(s)))
            seq = [x]
            for _ in range(k_max):
                x = iterate_contraction(self.map, x, 1)
                seq.append(x)
            return np.asarray(self.outer._eval(np.asarray(seq)), dtype=float)
        return np.array([self.value(s, k) for k in range(k_max + 1)])

    def to_dict(self) -> dict:
        if self.mode == "exponential":
            return {"mode": "exponential", "gain": self.gain, "decay": self.decay}
        return {"mode": "iterated", "map": self.map.to_dict(), "outer": self.outer.to_dict(),
                "inner": self.inner.to_dict(), "n_scan": self.n_scan}


@dataclass(frozen=True)
class KLCheck:
    passed: bool
    worst_k_increase: float
    worst_s_decrease: float
    tail: float
    s_max: float
    k_max: int

    def to_dict(self):
        return dict(self.__dict__)


def check_kl_lattice(beta: KLBound, s_max: float, k_max: int = 200, n: int = 20,
                     k_probe: int = 5000, eps: float = 1e-6) -> KLCheck:
    """Probe-lattice test that ``beta`` is a valid KL candidate on (0, s_max] x [0, k_max]."""
    ss = np.linspace(s_max / n, s_max, n)
    ks = np.unique(np.linspace(0, k_max, n).astype(int))
    table = np.array([beta.values(s, k_max)[ks] for s in ss])
    scale = np.maximum(1.0, np.abs(table))
    k_inc = float(np.max(np.diff(table, axis=1) / scale[:, 1:], initial=0.0))
    s_dec = float(np.max(-np.diff(table, axis=0) / scale[1:, :], initial=0.0))
    tail = beta.value(s_max, k_probe)
    tol = 1e-12
    passed = k_inc <= tol and s_dec <= tol and tail < eps * max(1.0, beta.value(s_max, 0))
    return KLCheck(bool(passed), k_inc, s_dec, float(tail), float(s_max), int(k_max))
