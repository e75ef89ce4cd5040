"""Finite-horizon observables: sign changes, difference sign patterns,
tail liminf/limsup estimates and series convergence classification.

Nothing here proves anything about infinite sequences; every result refers to
the sampled window it was computed on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientSamples, InvalidOrder, PreconditionViolated
from .lattice import LATTICE_SNAP, LatticeSeq, delta_pow, point, taylor_kernel

DEFAULT_ZERO_TOL = 1e-12
DEFAULT_TAIL_FRACTION = 0.25
DEFAULT_DIV_FLOOR = 0.0
TREND_DEADBAND = 0.01
SERIES_DIV_THRESHOLD = 1e-8
SERIES_REL_TOL = 1e-3

OSCILLATORY = "Oscillatory"
EVENTUALLY_POSITIVE = "EventuallyPositive"
EVENTUALLY_NEGATIVE = "EventuallyNegative"
UNDETERMINED = "Undetermined"

FINITE = "Finite"
PLUS_INFINITY = "PlusInfinity"
INCONCLUSIVE = "Inconclusive"

DIVERGENT = "Divergent"
CONVERGENT = "Convergent"


@dataclass(frozen=True)
class TrajectoryVerdict:
    kind: str
    last_sign_change_step: Optional[int]
    sign_change_count: int
    window: int
    horizon_step: int


def classify_trajectory(x: LatticeSeq, window_w: int,
                        zero_tol: float = DEFAULT_ZERO_TOL) -> TrajectoryVerdict:
    """Count strict sign changes over the trailing ``window_w`` samples."""
    if window_w < 4:
        raise ValueError(f"window must hold at least 4 samples, got {window_w}")
    if window_w > len(x):
        raise InsufficientSamples(f"window {window_w} longer than sequence ({len(x)})")
    tail = x.tail(window_w)
    vals = tail.values
    scale = float(np.max(np.abs(vals)))
    determinate = np.abs(vals) > zero_tol * scale
    steps = tail.steps()[determinate]
    signs = np.sign(vals[determinate])

    changes = np.nonzero(signs[1:] != signs[:-1])[0]
    count = int(changes.size)
    last = int(steps[changes[-1] + 1]) if count else None
    if count:
        kind = OSCILLATORY
    elif signs.size == window_w:
        kind = EVENTUALLY_POSITIVE if signs[0] > 0 else EVENTUALLY_NEGATIVE
    else:
        kind = UNDETERMINED
    return TrajectoryVerdict(kind, last, count, window_w, x.r_max)


# -- difference sign patterns ---------------------------------------------

def _sign_of(vals: np.ndarray, tol: float) -> Optional[int]:
    if np.all(vals > tol):
        return 1
    if np.all(vals < -tol):
        return -1
    if np.all(np.abs(vals) <= tol):
        return 0
    return None


def difference_signs(u: LatticeSeq, n: int, zero_tol: float = DEFAULT_ZERO_TOL,
                     trailing: Optional[int] = None) -> list[Optional[int]]:
    """Uniform sign (+1, -1, 0, or None if mixed) of delta^i u, i = 0..n.

    All orders are compared on the same trailing steps.  By default the
    trailing half of the steps where delta^n u exists (at least 4) is used.
    """
    if n < 0:
        raise InvalidOrder(f"order must be >= 0, got {n}")
    if len(u) < n + 4:
        raise InsufficientSamples(f"need at least {n + 4} samples, have {len(u)}")
    common = len(u) - n
    w = trailing if trailing is not None else max(4, common // 2)
    w = min(w, common)
    lo = u.r_min + common - w
    hi = u.r_min + common - 1
    tol = zero_tol * float(np.max(np.abs(u.values)))
    signs = []
    d = u
    for i in range(n + 1):
        if i:
            d = delta_pow(d, 1)
        signs.append(_sign_of(d.values[lo - d.r_min:hi - d.r_min + 1], tol))
    return signs


def kiguradze_index(u: LatticeSeq, n: int,
                    zero_tol: float = DEFAULT_ZERO_TOL) -> tuple[Optional[int], bool]:
    """Index ``m`` splitting the signs of the differences of a positive ``u``.

    ``m`` fits the pattern when delta^i u > 0 for 1 <= i <= m-1 and
    (-1)^(m+i) delta^i u > 0 for m <= i <= n-1 on the trailing window.  The
    parity rule asks n+m odd when delta^n u <= 0 (a vanishing top difference
    counts here) and even when delta^n u > 0.  Several ``m`` can fit at once
    (all differences positive fits both n-1 and n), so the smallest fitting
    ``m`` with the right parity is returned with ``consistent`` True; failing
    that, the smallest fitting ``m`` with ``consistent`` False.  Returns
    ``(None, False)`` if no ``m`` fits.
    """
    if n < 1:
        raise InvalidOrder(f"order must be >= 1, got {n}")
    if np.any(u.values <= 0):
        raise PreconditionViolated("kiguradze_index needs a positive sequence")
    signs = difference_signs(u, n, zero_tol)

    fitting = [m for m in range(0, n + 1)
               if all(signs[i] == 1 for i in range(1, m))
               and all(signs[i] is not None and (-1) ** (m + i) * signs[i] == 1
                       for i in range(m, n))]
    if not fitting:
        return None, False
    top = signs[n]
    if top is not None:
        want = 1 if top <= 0 else 0
        for m in fitting:
            if (n + m) % 2 == want:
                return m, True
    return fitting[0], False


def lemma210_bound_check(u: LatticeSeq, n: int, k1_step: int,
                         zero_tol: float = DEFAULT_ZERO_TOL) -> bool:
    """Check the lower bound u(k) >= (k-k1)^(n-1) / ((n-1)! ell^(n-1)) * delta^{n-1} u(2^(n-2) k).

    The scaled argument is rounded up to the next lattice point; steps whose
    rounded argument falls outside the window are skipped.
    """
    if n < 2:
        raise InvalidOrder(f"the bound needs n >= 2, got {n}")
    if len(u) < n + 1:
        raise InsufficientSamples(f"need at least {n + 1} samples")
    scale = float(np.max(np.abs(u.values)))
    if np.any(u.values <= 0):
        raise PreconditionViolated("u must be positive")
    top = delta_pow(u, n)
    if np.any(top.values > zero_tol * scale):
        raise PreconditionViolated(f"delta^{n} u must be <= 0 on the window")

    lat = u.lattice
    d = delta_pow(u, n - 1)
    k1 = point(lat, k1_step)
    factor = 2 ** (n - 2)
    slack = zero_tol * scale
    checked = 0
    for r in range(max(k1_step, u.r_min), u.r_max + 1):
        k = point(lat, r)
        t = (factor * k - lat.base) / lat.ell
        r_scaled = math.ceil(t - LATTICE_SNAP)
        if not (d.r_min <= r_scaled <= d.r_max):
            continue
        rhs = taylor_kernel(k - k1, n - 1, lat.ell) * d[r_scaled]
        checked += 1
        if u[r] < rhs - slack * max(1.0, abs(rhs) / max(scale, 1e-300)):
            return False
    if not checked:
        raise InsufficientSamples("no step has its scaled argument inside the window")
    return True


# -- tail limits ------------------------------------------------------------

@dataclass(frozen=True)
class LimitEstimate:
    kind: str
    value: Optional[float]
    tail_lo: float
    tail_hi: float
    trend: str
    tail_len: int


def tail_trend(vals: np.ndarray) -> str:
    """rising / falling / flat / mixed, from the means of the two tail halves.

    The halves have equal length (the middle sample of an odd tail is
    dropped) so a period-2 oscillation does not read as a trend.
    """
    half = vals.size // 2
    m1 = float(np.mean(vals[:half]))
    m2 = float(np.mean(vals[vals.size - half:]))
    d = np.diff(vals)
    tol = DEFAULT_ZERO_TOL * float(np.max(np.abs(vals)))
    non_monotone = bool(np.any(d > tol) and np.any(d < -tol))
    if abs(m2 - m1) <= TREND_DEADBAND * max(abs(m1), abs(m2)):
        return "mixed" if non_monotone else "flat"
    return "rising" if m2 > m1 else "falling"


def _tail(s: LatticeSeq, tail_fraction: float) -> np.ndarray:
    if not (0 < tail_fraction <= 1):
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    n = math.ceil(tail_fraction * len(s))
    if len(s) * tail_fraction < 8:
        raise InsufficientSamples(
            f"tail of {len(s)} samples at fraction {tail_fraction} is shorter than 8")
    return s.values[-n:]


def _estimate(s: LatticeSeq, tail_fraction: float, div_floor: float, upper: bool) -> LimitEstimate:
    tail = _tail(s, tail_fraction)
    lo, hi = float(np.min(tail)), float(np.max(tail))
    trend = tail_trend(tail)
    if trend == "rising":
        if lo > div_floor:
            return LimitEstimate(PLUS_INFINITY, None, lo, hi, trend, tail.size)
        return LimitEstimate(INCONCLUSIVE, None, lo, hi, trend, tail.size)
    return LimitEstimate(FINITE, hi if upper else lo, lo, hi, trend, tail.size)


def estimate_liminf(s: LatticeSeq, tail_fraction: float = DEFAULT_TAIL_FRACTION,
                    div_floor: float = DEFAULT_DIV_FLOOR) -> LimitEstimate:
    return _estimate(s, tail_fraction, div_floor, upper=False)


def estimate_limsup(s: LatticeSeq, tail_fraction: float = DEFAULT_TAIL_FRACTION,
                    div_floor: float = DEFAULT_DIV_FLOOR) -> LimitEstimate:
    return _estimate(s, tail_fraction, div_floor, upper=True)


# -- series -----------------------------------------------------------------

@dataclass(frozen=True)
class SeriesClass:
    """Verdict on a nonnegative series from its first N terms.

    ``partial_sum`` is the raw sum of the sampled terms.  For convergent
    series ``limit`` adds an extrapolated tail and ``tail_bracket_width`` is
    the half-width of the uncertainty interval around it.
    """

    kind: str
    partial_sum: float
    tail_bracket_width: Optional[float] = None
    limit: Optional[float] = None
    n_terms: int = 0


def _prefix(terms: np.ndarray, n: int) -> float:
    return math.fsum(terms[:n])


def extrapolated_tail(terms: np.ndarray) -> tuple[float, float]:
    """Estimate of the sum of all terms beyond the sample, with an error half-width.

    Aitken's delta-squared applied to the partial sums at N/4, N/2, N is exact
    for tails decaying like a power of N or geometrically in log N; repeating
    it one doubling earlier gives the uncertainty.
    """
    N = terms.size
    S = [_prefix(terms, N >> i) for i in range(4)]  # S_N, S_N/2, S_N/4, S_N/8

    def aitken(s_hi, s_mid, s_lo):
        d_hi, d_lo = s_hi - s_mid, s_mid - s_lo
        if d_hi == 0:
            return 0.0
        if not (0 < d_hi < d_lo):
            return math.inf
        return d_hi * d_hi / (d_lo - d_hi)

    t_now = aitken(S[0], S[1], S[2])
    t_prev = aitken(S[1], S[2], S[3])
    if not math.isfinite(t_now):
        return math.inf, math.inf
    if math.isfinite(t_prev):
        # previous estimate refers to the tail beyond N/2
        err = abs((S[1] + t_prev) - (S[0] + t_now))
    else:
        err = t_now
    eps_floor = 16 * np.finfo(float).eps * abs(S[0] + t_now)
    return t_now, 2.0 * err + eps_floor


def classify_series(terms: LatticeSeq, horizon_split: float = 0.5,
                    div_threshold: float = SERIES_DIV_THRESHOLD,
                    rel_tol: float = SERIES_REL_TOL) -> SeriesClass:
    """Divergent / Convergent / Inconclusive verdict on ``sum terms``."""
    t = terms.values
    N = t.size
    if N < 32:
        raise InsufficientSamples(f"need at least 32 terms, have {N}")
    if np.any(t < 0):
        raise PreconditionViolated("series terms must be nonnegative")
    if not (0 < horizon_split < 1):
        raise ValueError("horizon_split must lie in (0, 1)")

    S_N = math.fsum(t)
    S_half = _prefix(t, int(N * horizon_split))
    quarter = t[-max(1, N // 4):]
    if float(np.mean(quarter)) >= div_threshold:
        return SeriesClass(DIVERGENT, S_N, n_terms=N)
    if S_half > 0 and S_N - S_half >= 0.5 * S_half:
        return SeriesClass(DIVERGENT, S_N, n_terms=N)

    tol = DEFAULT_ZERO_TOL * float(np.max(quarter)) if quarter.size else 0.0
    decreasing = bool(np.all(np.diff(quarter) <= tol))
    if decreasing and t[-1] * N <= rel_tol * S_N:
        tail, width = extrapolated_tail(t)
        if not math.isfinite(tail):
            tail, width = 0.0, t[-1] * N
        return SeriesClass(CONVERGENT, S_N, width, S_N + tail, N)
    return SeriesClass(INCONCLUSIVE, S_N, n_terms=N)
