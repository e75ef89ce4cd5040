"""Oscillation criteria evaluated on a finite horizon, and the decision tree
that picks which of them apply to a given equation.

Every check turns an infinite-horizon condition (a liminf, limsup or series
divergence) into a verdict with a relative safety margin: Holds, Fails, or
Inconclusive when the estimate lands inside the margin.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from . import analysis as an
from .equation import FirstOrderEquation, NeutralEquation, coeff_values
from .errors import InsufficientSamples, OutOfDomain, PreconditionViolated
from .lattice import LatticeSeq

HOLDS = "Holds"
FAILS = "Fails"
INCONCLUSIVE = "Inconclusive"

ADVANCED = "advanced"
WITHIN_DELAY = "within_delay"
OTHER = "other"

DEFAULT_MARGIN = 0.05
DEFAULT_HORIZON = 4000
DEFAULT_DELTA_TERMS = 100_000
P_VARIATION_TOL = 1e-9


class CriterionId(str, enum.Enum):
    T31 = "T31"
    T33_liminf = "T33_liminf"
    T33_limsup = "T33_limsup"
    T35_liminf = "T35_liminf"
    T35_limsup = "T35_limsup"
    T37_series = "T37_series"
    T39_series = "T39_series"
    L29_liminf = "L29_liminf"
    L29_limsup = "L29_limsup"

    def __str__(self) -> str:
        return self.value


NEUTRAL_IDS = tuple(c for c in CriterionId if not c.value.startswith("L29"))
WINDOW_IDS = (CriterionId.T33_liminf, CriterionId.T33_limsup,
              CriterionId.T35_liminf, CriterionId.T35_limsup)
SERIES_IDS = (CriterionId.T37_series, CriterionId.T39_series)


@dataclass(frozen=True)
class CriteriaOptions:
    """Tunable constants and reading choices for the checks.

    ``lam`` of None means the default (1/2^(m-2))^(m-1).  ``t35_direction``
    is ``"mirror"`` (estimate must reach the threshold, like T33) or
    ``"printed"`` (estimate must stay below it).
    """

    lam: Optional[float] = None
    t35_direction: str = "mirror"
    t318_plain_factorial: bool = False
    l29_step_exponent: bool = False
    margin: float = DEFAULT_MARGIN
    delta_terms: int = DEFAULT_DELTA_TERMS
    tail_fraction: float = an.DEFAULT_TAIL_FRACTION

    def __post_init__(self):
        if self.t35_direction not in ("mirror", "printed"):
            raise ValueError(f"t35_direction must be 'mirror' or 'printed', got {self.t35_direction!r}")
        if self.lam is not None and not (0 < self.lam <= 1):
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam!r}")
        if not (0 <= self.margin < 1):
            raise ValueError(f"margin must lie in [0, 1), got {self.margin!r}")
        if self.delta_terms < 32:
            raise ValueError("delta_terms must be at least 32")

    def flags(self) -> dict:
        return {
            "lambda": self.lam,
            "t35_direction": self.t35_direction,
            "t318_plain_factorial": self.t318_plain_factorial,
            "l29_step_exponent": self.l29_step_exponent,
            "margin": self.margin,
            "delta_terms": self.delta_terms,
        }


Estimate = Union[an.LimitEstimate, an.SeriesClass, None]


@dataclass(frozen=True)
class CriterionReport:
    id: CriterionId
    horizon: int
    threshold: float
    estimate: Estimate
    verdict: str
    margin: float
    notes: tuple[str, ...] = ()
    applicable: bool = True
    direction: str = ">="
    beta: Optional[float] = None
    lam: Optional[float] = None

    @property
    def estimate_kind(self) -> str:
        return self.estimate.kind if self.estimate is not None else ""

    @property
    def estimate_value(self) -> Optional[float]:
        e = self.estimate
        if isinstance(e, an.LimitEstimate):
            return math.inf if e.kind == an.PLUS_INFINITY else e.value
        if isinstance(e, an.SeriesClass):
            return e.partial_sum
        return None


@dataclass(frozen=True)
class OverallVerdict:
    conclusion: str  # "OscillatoryBy" or "Inconclusive"
    cited: frozenset
    delta_class: Optional[an.SeriesClass]
    shift_regime: str
    reports: tuple[CriterionReport, ...]
    notes: tuple[str, ...] = ()

    @property
    def oscillatory(self) -> bool:
        return self.conclusion == "OscillatoryBy"

    def report(self, cid: CriterionId) -> CriterionReport:
        for r in self.reports:
            if r.id == cid:
                return r
        raise KeyError(cid)

    def describe(self) -> str:
        if self.oscillatory:
            return "OscillatoryBy(" + ", ".join(sorted(str(c) for c in self.cited)) + ")"
        return "Inconclusive"


# -- constants --------------------------------------------------------------

def shift_regime(s: int, rho: int) -> str:
    if s > 0:
        return ADVANCED
    if -rho <= s <= 0:
        return WITHIN_DELAY
    return OTHER


def default_lambda(m: int) -> float:
    return (1.0 / 2.0 ** (m - 2)) ** (m - 1)


def beta(m: int, ell: float, pbar: float) -> float:
    return (1.0 + pbar) * math.factorial(m - 1) * ell ** (m - 1)


def window_threshold_factor(rho: int, ell: float, step_exponent: bool = False) -> float:
    """``(x/(x+1))^(x+1)`` with x = rho*ell, or x = rho under the step-count reading."""
    x = float(rho) if step_exponent else rho * ell
    return (x / (x + 1.0)) ** (x + 1.0)


def p_bar(eq: NeutralEquation, horizon: int) -> tuple[float, list[str]]:
    """Largest p over the first ``horizon`` lattice points, with warnings."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    ks = eq.lattice.base + np.arange(horizon) * eq.ell
    p = np.asarray(coeff_values(eq.p, ks, eq.ell, eq.m), dtype=float)
    top = float(np.max(p))
    notes = []
    if float(np.max(p) - np.min(p)) > P_VARIATION_TOL * max(1.0, abs(top)):
        notes.append(f"p varies over the horizon; using its maximum {top!r} in beta")
    return top, notes


def _steps_points(eq, r_lo: int, n: int) -> np.ndarray:
    return eq.lattice.base + np.arange(r_lo, r_lo + n) * eq.ell


def _P_values(eq: NeutralEquation, ks: np.ndarray) -> np.ndarray:
    q1 = np.asarray(coeff_values(eq.q, ks, eq.ell, eq.m), dtype=float)
    q2 = np.asarray(coeff_values(eq.q, ks + eq.shift_s * eq.ell, eq.ell, eq.m), dtype=float)
    return np.minimum(q1, q2)


def _Q_values(eq: NeutralEquation, ks: np.ndarray) -> np.ndarray:
    return eq.f.L * _P_values(eq, ks)


def P_seq(eq: NeutralEquation, horizon: int, r_min: int = 0) -> LatticeSeq:
    """P(k) = min(q(k), q(k + s*ell)) on ``horizon`` steps from ``r_min``."""
    ks = _steps_points(eq, r_min, horizon)
    return LatticeSeq(eq.lattice, r_min, _P_values(eq, ks))


def Q_seq(eq: NeutralEquation, horizon: int, r_min: int = 0) -> LatticeSeq:
    ks = _steps_points(eq, r_min, horizon)
    return LatticeSeq(eq.lattice, r_min, _Q_values(eq, ks))


# -- delta ------------------------------------------------------------------

def _inverse_a(eq: NeutralEquation, r_lo: int, n: int) -> np.ndarray:
    ks = _steps_points(eq, r_lo, n)
    a = np.asarray(coeff_values(eq.a, ks, eq.ell, eq.m), dtype=float)
    if np.any(a <= 0):
        bad = int(np.argmax(a <= 0)) + r_lo
        raise PreconditionViolated(f"a must be positive on the summation range (step {bad})")
    return 1.0 / a


def delta_seq(eq: NeutralEquation, k_step: int = 0,
              max_terms: int = DEFAULT_DELTA_TERMS) -> tuple[float, float, an.SeriesClass]:
    """Tail sum of 1/a from lattice step ``k_step``.

    Returns (value, bracket, class).  For a convergent series ``value`` is the
    partial sum plus an extrapolated tail and the true sum lies within
    ``bracket`` of it; otherwise value and bracket are inf when divergent and
    the bare partial sum with an infinite bracket when undecided.
    """
    inv = _inverse_a(eq, k_step, max_terms)
    cls = an.classify_series(LatticeSeq(eq.lattice, k_step, inv))
    if cls.kind == an.CONVERGENT:
        return float(cls.limit), float(cls.tail_bracket_width), cls
    if cls.kind == an.DIVERGENT:
        return math.inf, math.inf, cls
    return cls.partial_sum, math.inf, cls


def _delta_profile(eq: NeutralEquation, n_steps: int, delta_terms: int):
    """delta at steps 0..n_steps-1, or None if the series is not convergent.

    The summed length does not depend on ``n_steps`` unless the request is
    long, so sums evaluated at different steps share one delta profile.
    """
    total = delta_terms if 2 * n_steps <= delta_terms else n_steps + delta_terms
    inv = _inverse_a(eq, 0, total)
    cls = an.classify_series(LatticeSeq(eq.lattice, 0, inv))
    if cls.kind != an.CONVERGENT:
        return cls, None
    beyond = cls.limit - cls.partial_sum
    suffix = np.cumsum(inv[::-1])[::-1]
    return cls, suffix[:n_steps] + beyond


# -- window sums ------------------------------------------------------------

def _window_terms(cid: CriterionId) -> int:
    return 0 if cid.value.endswith("liminf") else 1


def _window_summand(eq: NeutralEquation, ks: np.ndarray) -> np.ndarray:
    # (k - 2 rho ell)^(m-1) Q(k - rho ell) / a(k - 2 rho ell)
    base = ks - 2 * eq.rho * eq.ell
    a = np.asarray(coeff_values(eq.a, base, eq.ell, eq.m), dtype=float)
    if np.any(a <= 0):
        raise OutOfDomain("a must be positive at the shifted window arguments")
    return base ** (eq.m - 1) * _Q_values(eq, ks - eq.rho * eq.ell) / a


def moving_sum(v: np.ndarray, width: int) -> np.ndarray:
    """Sums of ``width`` consecutive entries, added term by term (no cumsum drift)."""
    n = v.size - width + 1
    out = np.zeros(n)
    for r in range(width):
        out = out + v[r:r + n]
    return out


def _moving_window(eq: NeutralEquation, cid: CriterionId, t_lo: int, n: int) -> np.ndarray:
    width = eq.rho + _window_terms(cid)
    g = _window_summand(eq, _steps_points(eq, t_lo, n + width - 1))
    return moving_sum(g, width)


def _series_start(eq: NeutralEquation) -> int:
    return max(eq.rho, -eq.shift_s, 0)


def _series_terms(eq: NeutralEquation, cid: CriterionId, n: int,
                  opts: CriteriaOptions, pbar: float):
    """Bracketed summands of the cumulative conditions at steps r0..r0+n-1."""
    m, ell, s = eq.m, eq.ell, eq.shift_s
    r0 = _series_start(eq)
    need = r0 + n + max(s, 0) + 2
    cls, dlt = _delta_profile(eq, need, opts.delta_terms)
    if dlt is None:
        return cls, None
    lam = opts.lam if opts.lam is not None else default_lambda(m)
    ks = _steps_points(eq, r0, n)
    r = np.arange(r0, r0 + n)
    scale = math.factorial(m - 2) * (1.0 if opts.t318_plain_factorial else ell ** (m - 2))
    a_next = np.asarray(coeff_values(eq.a, ks + ell, eq.ell, m), dtype=float)
    first = lam * dlt[r] * _Q_values(eq, ks) * (ks - eq.rho * ell) ** (m - 2) / scale
    if cid == CriterionId.T37_series:
        second = (1.0 + pbar) / (4.0 * a_next * dlt[r + 1])
    else:
        first = first * dlt[r + s]
        second = (1.0 + pbar) / (4.0 * a_next * dlt[r + 1 + s])
    return cls, first - second


def criterion_window_sum(cid: CriterionId, eq: NeutralEquation, k_step: int,
                         options: Optional[CriteriaOptions] = None) -> float:
    """The condition's sum evaluated at lattice step ``k_step``.

    Moving-window criteria sum rho (liminf forms) or rho+1 (limsup forms)
    summands starting at ``k_step``; cumulative criteria return the partial
    sum of their bracketed summand up to ``k_step``.
    """
    opts = options or CriteriaOptions()
    cid = CriterionId(cid)
    if cid in WINDOW_IDS:
        if k_step < 2 * eq.rho:
            raise OutOfDomain(f"window sums need k_step >= {2 * eq.rho}, got {k_step}")
        return math.fsum(_window_summand(
            eq, _steps_points(eq, k_step, eq.rho + _window_terms(cid))))
    if cid in SERIES_IDS:
        r0 = _series_start(eq)
        if k_step < r0:
            raise OutOfDomain(f"cumulative sums start at step {r0}, got {k_step}")
        pbar, _ = p_bar(eq, k_step + 1)
        _, terms = _series_terms(eq, cid, k_step - r0 + 1, opts, pbar)
        if terms is None:
            raise PreconditionViolated("delta does not converge; cumulative sum undefined")
        return math.fsum(terms)
    if cid == CriterionId.T31:
        return math.fsum(P_seq(eq, k_step + 1).values)
    raise OutOfDomain(f"{cid} is a first-order criterion")


# -- verdicts ---------------------------------------------------------------

def _compare(est: an.LimitEstimate, threshold: float, margin: float, direction: str) -> str:
    if est.kind == an.INCONCLUSIVE:
        return INCONCLUSIVE
    band = margin * abs(threshold)
    if est.kind == an.PLUS_INFINITY:
        above, below = True, False
    else:
        above = est.value >= threshold + band
        below = est.value <= threshold - band
    if direction == ">=":
        return HOLDS if above else FAILS if below else INCONCLUSIVE
    return HOLDS if below else FAILS if above else INCONCLUSIVE


def _inapplicable(cid, horizon, margin, why) -> CriterionReport:
    return CriterionReport(cid, horizon, math.nan, None, INCONCLUSIVE, margin,
                           (f"not applicable: {why}",), applicable=False)


def _regime_ok(cid: CriterionId, eq: NeutralEquation) -> Optional[str]:
    s, rho = eq.shift_s, eq.rho
    if cid in (CriterionId.T33_liminf, CriterionId.T33_limsup, CriterionId.T39_series) and s < 0:
        return f"needs an advanced or zero shift, s = {s}"
    if cid in (CriterionId.T35_liminf, CriterionId.T35_limsup, CriterionId.T37_series) \
            and not (-rho <= s <= 0):
        return f"needs -rho <= s <= 0, s = {s}, rho = {rho}"
    if cid in SERIES_IDS and eq.m < 2:
        return "cumulative conditions need m >= 2"
    return None


def check(cid: CriterionId, eq: NeutralEquation, horizon: int = DEFAULT_HORIZON,
          margin: Optional[float] = None,
          options: Optional[CriteriaOptions] = None) -> CriterionReport:
    """Evaluate one criterion on ``horizon`` samples of its defining sequence."""
    opts = options or CriteriaOptions()
    if margin is not None:
        opts = replace(opts, margin=margin)
    margin = opts.margin
    cid = CriterionId(cid)
    if cid in (CriterionId.L29_liminf, CriterionId.L29_limsup):
        return _inapplicable(cid, horizon, margin, "first-order criterion on a neutral equation")
    if horizon < 32:
        raise InsufficientSamples("criteria need a horizon of at least 32 steps")
    why = _regime_ok(cid, eq)
    if why:
        return _inapplicable(cid, horizon, margin, why)

    pbar, notes = p_bar(eq, horizon)
    if cid == CriterionId.T31:
        r0 = max(0, -eq.shift_s)
        P = P_seq(eq, horizon, r0)
        if np.any(P.values < 0):
            raise PreconditionViolated("q must be nonnegative")
        cls = an.classify_series(P)
        verdict = {an.DIVERGENT: HOLDS, an.CONVERGENT: FAILS}.get(cls.kind, INCONCLUSIVE)
        return CriterionReport(cid, horizon, math.inf, cls, verdict, margin, tuple(notes))

    lam = opts.lam if opts.lam is not None else default_lambda(eq.m)
    b = beta(eq.m, eq.ell, pbar)

    if cid in WINDOW_IDS:
        t_lo = 2 * eq.rho
        sums = LatticeSeq(eq.lattice, t_lo, _moving_window(eq, cid, t_lo, horizon))
        liminf = cid.value.endswith("liminf")
        est = (an.estimate_liminf if liminf else an.estimate_limsup)(sums, opts.tail_fraction)
        thr = b / lam if cid.value.startswith("T33") else b
        if liminf:
            thr *= window_threshold_factor(eq.rho, eq.ell, opts.l29_step_exponent)
        direction = ">="
        if cid.value.startswith("T35") and opts.t35_direction == "printed":
            direction = "<"
        verdict = _compare(est, thr, margin, direction)
        return CriterionReport(cid, horizon, thr, est, verdict, margin, tuple(notes),
                               direction=direction, beta=b, lam=lam)

    cls, terms = _series_terms(eq, cid, horizon, opts, pbar)
    if terms is None:
        notes.append(f"delta series is {cls.kind}; cumulative condition needs it convergent")
        return CriterionReport(cid, horizon, math.inf, None, INCONCLUSIVE, margin,
                               tuple(notes), beta=b, lam=lam)
    sums = LatticeSeq(eq.lattice, _series_start(eq), np.cumsum(terms))
    est = an.estimate_limsup(sums, opts.tail_fraction)
    verdict = {an.PLUS_INFINITY: HOLDS, an.FINITE: FAILS}.get(est.kind, INCONCLUSIVE)
    return CriterionReport(cid, horizon, math.inf, est, verdict, margin, tuple(notes),
                           beta=b, lam=lam)


# -- first-order threshold test --------------------------------------------

def lemma29_reports(pcoef: LatticeSeq, rho: int, ell: float,
                    margin: float = DEFAULT_MARGIN, step_exponent: bool = False,
                    tail_fraction: float = an.DEFAULT_TAIL_FRACTION
                    ) -> tuple[CriterionReport, CriterionReport]:
    """Both window tests for dy + p(k) y(k - rho ell) <= 0."""
    if rho < 1:
        raise ValueError("rho must be >= 1")
    if np.any(pcoef.values < 0):
        raise PreconditionViolated("the coefficient must be nonnegative")
    horizon = len(pcoef)
    out = []
    for cid, width, thr in (
        (CriterionId.L29_liminf, rho, window_threshold_factor(rho, ell, step_exponent)),
        (CriterionId.L29_limsup, rho + 1, 1.0),
    ):
        # window ending at (and, for the limsup form, including) step k
        sums = moving_sum(pcoef.values, width)
        seq = LatticeSeq(pcoef.lattice, pcoef.r_min + rho, sums)
        est = (an.estimate_liminf if cid == CriterionId.L29_liminf else an.estimate_limsup)(
            seq, tail_fraction)
        out.append(CriterionReport(cid, horizon, thr, est, _compare(est, thr, margin, ">="),
                                   margin))
    return out[0], out[1]


_RANK = {HOLDS: 2, INCONCLUSIVE: 1, FAILS: 0}


def lemma29_check(pcoef: LatticeSeq, rho: int, ell: float,
                  margin: float = DEFAULT_MARGIN, step_exponent: bool = False) -> CriterionReport:
    """Holds if either window test clears its threshold; the stronger report is returned."""
    lo, hi = lemma29_reports(pcoef, rho, ell, margin, step_exponent)
    return hi if _RANK[hi.verdict] > _RANK[lo.verdict] else lo


# -- decision tree ----------------------------------------------------------

def _theorem_groups(eq: NeutralEquation, delta_kind: str):
    """(theorem name, alternatives, required) for the applicable theorems."""
    s, rho = eq.shift_s, eq.rho
    groups = []
    if delta_kind == an.DIVERGENT:
        groups.append(("T31", (CriterionId.T31,), ()))
        if s >= 0:
            groups.append(("T33", (CriterionId.T33_liminf, CriterionId.T33_limsup), ()))
        if -rho <= s <= 0:
            groups.append(("T35", (CriterionId.T35_liminf, CriterionId.T35_limsup), ()))
    elif delta_kind == an.CONVERGENT:
        if -rho <= s <= 0:
            groups.append(("T37", (CriterionId.T35_liminf, CriterionId.T35_limsup),
                           (CriterionId.T37_series,)))
        if s >= 0:
            groups.append(("T39", (CriterionId.T33_liminf, CriterionId.T33_limsup),
                           (CriterionId.T39_series,)))
    else:
        groups.append(("T31", (CriterionId.T31,), ()))
    return groups


def overall(eq: Union[NeutralEquation, FirstOrderEquation], horizon: int = DEFAULT_HORIZON,
            options: Optional[CriteriaOptions] = None) -> OverallVerdict:
    """Run every criterion whose hypotheses the equation meets and aggregate."""
    opts = options or CriteriaOptions()
    if isinstance(eq, FirstOrderEquation):
        return overall_first_order(eq, horizon, opts)

    regime = shift_regime(eq.shift_s, eq.rho)
    notes = []
    _, _, dcls = delta_seq(eq, 0, opts.delta_terms)
    if dcls.kind == an.INCONCLUSIVE:
        notes.append("delta series undecided; only the criterion without a delta hypothesis runs")
    groups = _theorem_groups(eq, dcls.kind)
    needed = {c for _, alts, req in groups for c in alts + req}

    reports = []
    for cid in NEUTRAL_IDS:
        if cid not in needed:
            reports.append(_inapplicable(cid, horizon, opts.margin,
                                         f"delta {dcls.kind}, shift regime {regime}"))
            continue
        try:
            reports.append(check(cid, eq, horizon, options=opts))
        except (PreconditionViolated, OutOfDomain, InsufficientSamples) as exc:
            reports.append(CriterionReport(cid, horizon, math.nan, None, INCONCLUSIVE,
                                           opts.margin, (f"error: {exc}",)))
    by_id = {r.id: r for r in reports}

    cited = set()
    for name, alts, req in groups:
        holding = [c for c in alts if by_id[c].verdict == HOLDS]
        if holding and all(by_id[c].verdict == HOLDS for c in req):
            cited.update(holding)
            cited.update(req)
            notes.append(f"{name} conditions hold")
    conclusion = "OscillatoryBy" if cited else "Inconclusive"
    return OverallVerdict(conclusion, frozenset(cited), dcls, regime, tuple(reports), tuple(notes))


def overall_first_order(eq: FirstOrderEquation, horizon: int = DEFAULT_HORIZON,
                        options: Optional[CriteriaOptions] = None) -> OverallVerdict:
    opts = options or CriteriaOptions()
    pcoef = eq.coef_seq(horizon)
    reports = lemma29_reports(pcoef, eq.rho, eq.ell, opts.margin, opts.l29_step_exponent,
                              opts.tail_fraction)
    cited = frozenset(r.id for r in reports if r.verdict == HOLDS)
    conclusion = "OscillatoryBy" if cited else "Inconclusive"
    return OverallVerdict(conclusion, cited, None, OTHER, reports,
                          ("first-order mode: only the window threshold tests apply",))
