"""Generalized difference calculus on the lattice ``k0 + j + r*ell``.

Sequences are finite sample windows indexed by the lattice step ``r``.  The
forward difference ``delta`` maps ``u(k)`` to ``u(k + ell) - u(k)`` and drops
the last sample instead of inventing a boundary value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    IndexOutOfWindow,
    InsufficientSamples,
    InvalidOrder,
    PreconditionViolated,
)

LATTICE_SNAP = 1e-9


@dataclass(frozen=True)
class Lattice:
    k0: float
    ell: float
    j: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.ell) and self.ell > 0):
            raise ValueError(f"lattice step must be positive, got {self.ell!r}")
        if not (0 <= self.j < self.ell):
            raise ValueError(f"residue offset must lie in [0, ell), got {self.j!r}")
        if not math.isfinite(self.k0):
            raise ValueError("k0 must be finite")

    @property
    def base(self) -> float:
        return self.k0 + self.j

    def step_of(self, k: float) -> int:
        """Lattice step of ``k``; raises if ``k`` is not on the lattice."""
        t = (k - self.base) / self.ell
        r = round(t)
        if abs(t - r) > LATTICE_SNAP * max(1.0, abs(t)):
            raise PreconditionViolated(f"k={k!r} is not a lattice point")
        return int(r)


def point(lat: Lattice, r: int) -> float:
    return lat.k0 + lat.j + r * lat.ell


@dataclass(frozen=True, eq=False)
class LatticeSeq:
    """Finite real sequence sampled at steps ``r_min .. r_min + len - 1``."""

    lattice: Lattice
    r_min: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size == 0:
            raise InsufficientSamples("a lattice sequence needs at least one sample")
        if not np.all(np.isfinite(vals)):
            raise ValueError("lattice sequences may not hold NaN or inf")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "r_min", int(self.r_min))

    @classmethod
    def from_function(cls, lattice: Lattice, r_min: int, n: int,
                      fn: Callable[[float], float]) -> "LatticeSeq":
        ks = [point(lattice, r) for r in range(r_min, r_min + n)]
        return cls(lattice, r_min, np.array([fn(k) for k in ks], dtype=float))

    def __len__(self) -> int:
        return self.values.size

    @property
    def r_max(self) -> int:
        return self.r_min + self.values.size - 1

    def steps(self) -> np.ndarray:
        return np.arange(self.r_min, self.r_max + 1)

    def points(self) -> np.ndarray:
        return self.lattice.base + self.steps() * self.lattice.ell

    def covers(self, r_lo: int, r_hi: int) -> bool:
        return self.r_min <= r_lo and r_hi <= self.r_max

    def __getitem__(self, r: int) -> float:
        if not (self.r_min <= r <= self.r_max):
            raise IndexOutOfWindow(f"step {r} outside window [{self.r_min}, {self.r_max}]")
        return float(self.values[r - self.r_min])

    def window(self, r_lo: int, r_hi: int) -> "LatticeSeq":
        if r_lo > r_hi or not self.covers(r_lo, r_hi):
            raise IndexOutOfWindow(
                f"sub-window [{r_lo}, {r_hi}] outside [{self.r_min}, {self.r_max}]")
        return LatticeSeq(self.lattice, r_lo,
                          self.values[r_lo - self.r_min:r_hi - self.r_min + 1])

    def tail(self, n: int) -> "LatticeSeq":
        if n < 1 or n > len(self):
            raise InsufficientSamples(f"cannot take a tail of {n} from {len(self)} samples")
        return self.window(self.r_max - n + 1, self.r_max)

    def with_values(self, values: Iterable[float]) -> "LatticeSeq":
        return LatticeSeq(self.lattice, self.r_min, np.asarray(list(values), dtype=float))

    def __repr__(self) -> str:
        return (f"LatticeSeq(r={self.r_min}..{self.r_max}, ell={self.lattice.ell}, "
                f"values={np.array2string(self.values, threshold=8)})")


def delta(u: LatticeSeq) -> LatticeSeq:
    if len(u) < 2:
        raise InsufficientSamples("delta needs at least two samples")
    return LatticeSeq(u.lattice, u.r_min, np.diff(u.values))


def delta_pow(u: LatticeSeq, n: int) -> LatticeSeq:
    if n < 0:
        raise InvalidOrder(f"difference order must be >= 0, got {n}")
    if len(u) < n + 1:
        raise InsufficientSamples(f"order-{n} difference needs {n + 1} samples, have {len(u)}")
    out = u
    for _ in range(n):
        out = delta(out)
    return out


def telescoped_sum(u: LatticeSeq, r1: int, r2: int) -> float:
    """Sum of ``u[r]`` over ``r1 <= r <= r2``.

    If ``u = delta(v)`` this equals ``v[r2 + 1] - v[r1]``.
    """
    if r1 > r2:
        raise IndexOutOfWindow(f"empty summation range [{r1}, {r2}]")
    if not u.covers(r1, r2):
        raise IndexOutOfWindow(f"range [{r1}, {r2}] outside [{u.r_min}, {u.r_max}]")
    return math.fsum(u.values[r1 - u.r_min:r2 - u.r_min + 1])


def gen_factorial(k: float, n: int, ell: float) -> float:
    """``k (k - ell) (k - 2 ell) ... (k - (n-1) ell)``; the empty product is 1."""
    if n < 0:
        raise InvalidOrder(f"factorial order must be >= 0, got {n}")
    out = 1.0
    for i in range(n):
        out *= k - i * ell
    return out


def taylor_kernel(x: float, i: int, ell: float) -> float:
    """``x_ell^(i) / (i! ell^i)``, the weight in the discrete Taylor formula."""
    return gen_factorial(x, i, ell) / (math.factorial(i) * ell ** i)


def _lattice_binomial(t: int, i: int) -> int:
    # taylor_kernel(t*ell, i, ell) == C(t, i) exactly for integer t >= 0.
    if t < i:
        return 0
    return math.comb(t, i)


def _to_scaled_ints(values: Sequence[float]) -> tuple[list[int], int]:
    ratios = [float(v).as_integer_ratio() for v in values]
    den = max(d for _, d in ratios)
    return [n * (den // d) for n, d in ratios], den


def taylor_eval(u: LatticeSeq, n: int, m: int, k: float) -> float:
    """Discrete Taylor expansion of ``delta^m u`` at ``k`` about the lattice base.

    Evaluates the boundary part
        sum_{i=m}^{n-1} (k-k0-j)^(i-m) / ((i-m)! ell^(i-m)) * delta^i u(k0+j)
    plus the remainder
        sum_{r=0}^{R-n+m} (k-k0-j-r ell-ell)^(n-m-1) / ((n-m-1)! ell^(n-m-1)) * delta^n u(k0+j+r ell)
    with ``R = (k-k0-j)/ell``.  The kernels are binomial coefficients on the
    lattice and can reach ~1e18 for windows of 64 samples, so the sum is
    accumulated exactly over the dyadic values of ``u`` and rounded once.
    """
    if n < 1 or not (0 <= m <= n - 1):
        raise InvalidOrder(f"need 0 <= m <= n-1, got m={m}, n={n}")
    lat = u.lattice
    R = lat.step_of(k)
    if R < 0:
        raise IndexOutOfWindow(f"k={k!r} precedes the expansion point {lat.base!r}")
    hi = max(n - 1, R + m)
    if not u.covers(0, hi):
        raise InsufficientSamples(
            f"expansion at step {R} needs samples 0..{hi}, have {u.r_min}..{u.r_max}")

    ints, den = _to_scaled_ints(u.values[-u.r_min:hi - u.r_min + 1])
    diffs = [ints]
    for _ in range(n):
        prev = diffs[-1]
        diffs.append([b - a for a, b in zip(prev, prev[1:])])

    total = 0
    for i in range(m, n):
        total += _lattice_binomial(R, i - m) * diffs[i][0]
    for r in range(0, R - n + m + 1):
        total += _lattice_binomial(R - r - 1, n - m - 1) * diffs[n][r]
    return float(Fraction(total, den))
