"""Neutral difference equation model and forward simulation.

The equation is

    delta_ell( a(k) delta_ell^{m-1} z(k) ) + q(k) f(x(k - rho*ell)) = 0,
    z(k) = x(k) + p(k) x(k + s*ell),

posed on the lattice ``k_start + r*ell``.  All indices below are lattice
steps ``r``; ``point(r) = k_start + r*ell``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .coeff import BinOp, Expr, Num, Pow, Var, eval_coeff, to_text
from .errors import (
    InsufficientSamples,
    PreconditionViolated,
    SimulationOverflow,
    ZeroPivot,
)
from .lattice import LATTICE_SNAP, Lattice, LatticeSeq, delta_pow, point

OVERFLOW_LIMIT = 1e300

Coeff = Union[Expr, Callable]
_NODES = (Num, Var, BinOp, Pow)


def coeff_values(c: Coeff, k, ell: float, m: int):
    """Evaluate a coefficient (expression tree or ``fn(k, ell, m)``) at ``k``."""
    if isinstance(c, _NODES):
        val = eval_coeff(c, k, ell, m)
    else:
        val = c(k, ell, m)
    if np.ndim(k):
        return np.broadcast_to(np.asarray(val, dtype=float), np.shape(k)).copy()
    return float(val)


def coeff_label(c: Coeff) -> str:
    if isinstance(c, _NODES):
        return to_text(c)
    return getattr(c, "__name__", repr(c))


@dataclass(frozen=True)
class Nonlinearity:
    kind: str = "linear"
    L: float = 1.0

    KINDS = ("linear", "cubic_plus_linear")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown nonlinearity {self.kind!r}; expected one of {self.KINDS}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"gain L must be positive, got {self.L!r}")

    def __call__(self, u):
        if self.kind == "linear":
            return self.L * u
        return self.L * u + u * u * u


@dataclass(frozen=True)
class NeutralEquation:
    m: int
    ell: float
    rho: int
    shift_s: int
    a: Coeff
    p: Coeff
    q: Coeff
    f: Nonlinearity = field(default_factory=Nonlinearity)
    k_start: float = 0.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"order m must be an integer >= 2, got {self.m!r}")
        if not (self.ell > 0 and math.isfinite(self.ell)):
            raise ValueError(f"ell must be positive, got {self.ell!r}")
        if int(self.rho) != self.rho or self.rho < 1:
            raise ValueError(f"rho must be an integer >= 1, got {self.rho!r}")
        if int(self.shift_s) != self.shift_s:
            raise ValueError(f"neutral shift must be an integer, got {self.shift_s!r}")

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.k_start, self.ell, 0.0)

    def point(self, r):
        return self.k_start + np.asarray(r) * self.ell if np.ndim(r) else self.k_start + r * self.ell

    def a_at(self, k):
        return coeff_values(self.a, k, self.ell, self.m)

    def p_at(self, k):
        return coeff_values(self.p, k, self.ell, self.m)

    def q_at(self, k):
        return coeff_values(self.q, k, self.ell, self.m)

    def coeffs_on(self, r_lo: int, r_hi: int):
        ks = self.k_start + np.arange(r_lo, r_hi + 1) * self.ell
        return ks, self.a_at(ks), self.p_at(ks), self.q_at(ks)

    def validate_horizon(self, r_lo: int, r_hi: int) -> None:
        """Check a > 0, p >= 0 and q >= 0 at every step of ``[r_lo, r_hi]``."""
        ks, a, p, q = self.coeffs_on(r_lo, r_hi)
        for name, vals, bad in (("a", a, a <= 0), ("p", p, p < 0), ("q", q, q < 0)):
            if np.any(bad) or not np.all(np.isfinite(vals)):
                i = int(np.argmax(bad | ~np.isfinite(vals)))
                cond = "a > 0" if name == "a" else f"{name} >= 0"
                raise PreconditionViolated(
                    f"{cond} violated at k={ks[i]!r} ({name}={vals[i]!r})")

    def describe(self) -> str:
        return (f"m={self.m} ell={self.ell} rho={self.rho} s={self.shift_s} "
                f"a={coeff_label(self.a)} p={coeff_label(self.p)} q={coeff_label(self.q)} "
                f"f={self.f.kind}(L={self.f.L}) k_start={self.k_start}")


def required_window(eq: NeutralEquation) -> tuple[int, int]:
    """Lattice steps of ``x`` that must be supplied before stepping.

    The balance at step 0 links z at steps 0..m, i.e. x at steps
    ``min(0, s) .. m + max(0, s)``, and the delayed value x[-rho].  Exactly one
    of those x values is left unknown.
    """
    s, m, rho = eq.shift_s, eq.m, eq.rho
    if s <= 0:
        return min(s, -rho), m - 1
    return -rho, m + s - 1


def z_seq(eq: NeutralEquation, x: LatticeSeq) -> LatticeSeq:
    s = eq.shift_s
    lo = max(x.r_min, x.r_min - s)
    hi = min(x.r_max, x.r_max - s)
    if lo > hi:
        raise InsufficientSamples("x window too short to form any z value")
    steps = np.arange(lo, hi + 1)
    xv = x.values[lo - x.r_min:hi - x.r_min + 1]
    xs = x.values[lo + s - x.r_min:hi + s - x.r_min + 1]
    p = eq.p_at(eq.point(steps))
    return LatticeSeq(x.lattice, lo, xv + p * xs)


def _binomial_weights(n: int) -> np.ndarray:
    # delta^n u(r) = sum_i (-1)^(n-i) C(n, i) u(r + i)
    return np.array([(-1) ** (n - i) * math.comb(n, i) for i in range(n + 1)], dtype=float)


def binomial_delta(values, n: int) -> np.ndarray:
    """``delta^n`` of a plain array by the binomial formula (one output per full window)."""
    v = np.asarray(values, dtype=float)
    w = _binomial_weights(n)
    if v.size < n + 1:
        raise InsufficientSamples(f"need {n + 1} samples, have {v.size}")
    return np.array([float(np.dot(w, v[i:i + n + 1])) for i in range(v.size - n)])


def _check_init(eq: NeutralEquation, init: LatticeSeq, window: tuple[int, int]) -> None:
    r_lo, r_hi = window
    if (init.r_min, init.r_max) != (r_lo, r_hi):
        raise PreconditionViolated(
            f"initial data covers steps {init.r_min}..{init.r_max}, "
            f"equation needs exactly {r_lo}..{r_hi}")
    lat = init.lattice
    if abs(lat.ell - eq.ell) > LATTICE_SNAP * eq.ell or abs(lat.base - eq.k_start) > LATTICE_SNAP * max(1.0, abs(eq.k_start)):
        raise PreconditionViolated("initial data is not on the equation's lattice")


def simulate(eq: NeutralEquation, init: LatticeSeq, n_steps: int) -> LatticeSeq:
    """Extend ``init`` by ``n_steps`` lattice steps of the equation.

    Each step solves the balance at step ``r`` for the single new top value:
    A(r) = a(r) delta^{m-1} z(r) is formed binomially from the z window,
    A(r+1) = A(r) - q(r) f(x[r-rho]), then z[r+m] is isolated from
    delta^{m-1} z(r+1) = A(r+1)/a(r+1) and x is recovered from z.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    window = required_window(eq)
    _check_init(eq, init, window)
    r_lo, r_hi = window
    m, s, rho = eq.m, eq.shift_s, eq.rho
    total_hi = r_hi + n_steps

    # eager pivot validation over the whole horizon
    if n_steps:
        ks_a, a_all, _, _ = eq.coeffs_on(0, n_steps)
        if np.any(a_all == 0):
            i = int(np.argmax(a_all == 0))
            raise ZeroPivot(f"a(k) = 0 at k={ks_a[i]!r}")
        if np.any(a_all < 0) or not np.all(np.isfinite(a_all)):
            i = int(np.argmax(~(a_all > 0)))
            raise PreconditionViolated(f"a > 0 violated at k={ks_a[i]!r}")
        ks_p = eq.point(np.arange(m, m + n_steps))
        p_new = eq.p_at(ks_p)
        if s > 0 and np.any(p_new == 0):
            i = int(np.argmax(p_new == 0))
            raise ZeroPivot(f"p(k) = 0 at k={ks_p[i]!r} with an advanced neutral shift")
        if s == 0 and np.any(1 + p_new == 0):
            i = int(np.argmax(1 + p_new == 0))
            raise ZeroPivot(f"1 + p(k) = 0 at k={ks_p[i]!r}")
        q_all = eq.q_at(eq.point(np.arange(0, n_steps)))
    else:
        a_all = np.zeros(0)

    p_z = eq.p_at(eq.point(np.arange(0, m + n_steps)))
    x = np.empty(total_hi - r_lo + 1)
    x[: len(init)] = init.values
    z = np.empty(m + n_steps)
    xo = -r_lo  # array offset of step 0
    for r in range(m):
        z[r] = x[r + xo] + p_z[r] * x[r + s + xo]

    w = _binomial_weights(m - 1)
    w_low = w[:-1]
    f = eq.f
    filled_hi = r_hi
    # overflow is detected explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(n_steps):
            A_r = a_all[r] * float(np.dot(w, z[r:r + m]))
            A_next = A_r - q_all[r] * f(x[r - rho + xo])
            D = A_next / a_all[r + 1]
            R = r + m
            z_new = D - float(np.dot(w_low, z[r + 1:R]))
            z[R] = z_new
            if s < 0:
                x[R + xo] = z_new - p_z[R] * x[R + s + xo]
                new_hi = R
            elif s == 0:
                x[R + xo] = z_new / (1.0 + p_z[R])
                new_hi = R
            else:
                x[R + s + xo] = (z_new - x[R + xo]) / p_z[R]
                new_hi = R + s
            newest = x[new_hi + xo]
            if not (math.isfinite(newest) and abs(newest) <= OVERFLOW_LIMIT
                    and math.isfinite(z_new) and abs(z_new) <= OVERFLOW_LIMIT):
                partial = LatticeSeq(init.lattice, r_lo, x[: filled_hi - r_lo + 1])
                raise SimulationOverflow(
                    f"|x| exceeded {OVERFLOW_LIMIT:g} at step {new_hi}", partial=partial, step=new_hi)
            filled_hi = new_hi
    return LatticeSeq(init.lattice, r_lo, x)


def _a_delta(eq: NeutralEquation, x: LatticeSeq) -> LatticeSeq:
    z = z_seq(eq, x)
    d = delta_pow(z, eq.m - 1)
    a = eq.a_at(d.points())
    return LatticeSeq(x.lattice, d.r_min, a * d.values)


def a_delta_seq(eq: NeutralEquation, x: LatticeSeq) -> LatticeSeq:
    """``A(r) = a(r) delta^{m-1} z(r)`` over every step where it is defined."""
    return _a_delta(eq, x)


def residual(eq: NeutralEquation, x: LatticeSeq, r: int) -> float:
    """Left-hand side of the equation at step ``r``, by direct substitution."""
    m, s = eq.m, eq.shift_s
    lo = min(r, r + s, r - eq.rho)
    hi = max(r + m, r + m + s)
    if not x.covers(lo, hi):
        raise InsufficientSamples(
            f"residual at step {r} needs x on {lo}..{hi}, have {x.r_min}..{x.r_max}")
    zw = z_seq(eq, x.window(lo, hi)).window(r, r + m)
    d = delta_pow(zw, m - 1)
    k0, k1 = eq.point(r), eq.point(r + 1)
    A0 = eq.a_at(k0) * d[r]
    A1 = eq.a_at(k1) * d[r + 1]
    return (A1 - A0) + eq.q_at(k0) * eq.f(x[r - eq.rho])


def residual_seq(eq: NeutralEquation, x: LatticeSeq) -> LatticeSeq:
    """Residual at every step where the window allows it (vectorized)."""
    A = _a_delta(eq, x)
    lo = max(A.r_min, x.r_min + eq.rho)
    hi = A.r_max - 1
    if lo > hi:
        raise InsufficientSamples("window too short for any residual")
    steps = np.arange(lo, hi + 1)
    dA = A.values[lo + 1 - A.r_min:hi + 2 - A.r_min] - A.values[lo - A.r_min:hi + 1 - A.r_min]
    xd = x.values[lo - eq.rho - x.r_min:hi - eq.rho - x.r_min + 1]
    q = eq.q_at(eq.point(steps))
    return LatticeSeq(x.lattice, lo, dA + q * eq.f(xd))


def exact_alt_solution(lat: Lattice, n: int, r_min: int = 0) -> LatticeSeq:
    """Samples of ``(-1)^ceil(k/ell)`` at ``n`` lattice points from step ``r_min``."""
    vals = []
    for r in range(r_min, r_min + n):
        t = point(lat, r) / lat.ell
        near = round(t)
        c = near if abs(t - near) <= LATTICE_SNAP else math.ceil(t)
        vals.append(-1.0 if c % 2 else 1.0)
    return LatticeSeq(lat, r_min, np.array(vals))


# -- first-order companion -------------------------------------------------

@dataclass(frozen=True)
class FirstOrderEquation:
    """``delta_ell y(k) + L c(k) y(k - rho*ell) = 0`` on ``k_start + r*ell``."""

    ell: float
    rho: int
    coef: Coeff
    k_start: float = 0.0
    L: float = 1.0

    def __post_init__(self):
        if not (self.ell > 0 and math.isfinite(self.ell)):
            raise ValueError(f"ell must be positive, got {self.ell!r}")
        if int(self.rho) != self.rho or self.rho < 1:
            raise ValueError(f"rho must be an integer >= 1, got {self.rho!r}")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.k_start, self.ell, 0.0)

    def point(self, r):
        return self.k_start + np.asarray(r) * self.ell if np.ndim(r) else self.k_start + r * self.ell

    def coef_at(self, k):
        # ``m`` is not meaningful here; expressions referencing it see m = 1
        return self.L * coeff_values(self.coef, k, self.ell, 1)

    def coef_seq(self, n: int, r_min: int = 0) -> LatticeSeq:
        steps = np.arange(r_min, r_min + n)
        return LatticeSeq(self.lattice, r_min, self.coef_at(self.point(steps)))

    def validate_horizon(self, r_lo: int, r_hi: int) -> None:
        ks = self.point(np.arange(r_lo, r_hi + 1))
        c = self.coef_at(ks)
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            i = int(np.argmax(~(c >= 0)))
            raise PreconditionViolated(f"coefficient >= 0 violated at k={ks[i]!r}")

    def describe(self) -> str:
        return (f"first-order ell={self.ell} rho={self.rho} c={coeff_label(self.coef)} "
                f"L={self.L} k_start={self.k_start}")


def first_order_window(eq: FirstOrderEquation) -> tuple[int, int]:
    return -eq.rho, 0


def simulate_first_order(eq: FirstOrderEquation, init: LatticeSeq, n_steps: int) -> LatticeSeq:
    window = first_order_window(eq)
    if (init.r_min, init.r_max) != window:
        raise PreconditionViolated(
            f"initial data covers steps {init.r_min}..{init.r_max}, needs {window[0]}..{window[1]}")
    rho = eq.rho
    c = eq.coef_at(eq.point(np.arange(0, n_steps))) if n_steps else np.zeros(0)
    y = np.empty(len(init) + n_steps)
    y[: len(init)] = init.values
    o = rho
    for r in range(n_steps):
        nxt = y[r + o] - c[r] * y[r - rho + o]
        if not (math.isfinite(nxt) and abs(nxt) <= OVERFLOW_LIMIT):
            partial = LatticeSeq(init.lattice, -rho, y[: r + o + 1])
            raise SimulationOverflow(
                f"|y| exceeded {OVERFLOW_LIMIT:g} at step {r + 1}", partial=partial, step=r + 1)
        y[r + 1 + o] = nxt
    return LatticeSeq(init.lattice, -rho, y)


def first_order_residual_seq(eq: FirstOrderEquation, y: LatticeSeq) -> LatticeSeq:
    lo = y.r_min + eq.rho
    hi = y.r_max - 1
    if lo > hi:
        raise InsufficientSamples("window too short for any residual")
    steps = np.arange(lo, hi + 1)
    v = y.values
    d = v[lo + 1 - y.r_min:hi + 2 - y.r_min] - v[lo - y.r_min:hi + 1 - y.r_min]
    delayed = v[lo - eq.rho - y.r_min:hi - eq.rho - y.r_min + 1]
    return LatticeSeq(y.lattice, lo, d + eq.coef_at(eq.point(steps)) * delayed)
