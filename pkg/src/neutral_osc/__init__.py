"""Oscillation analysis for neutral difference equations with a generalized
difference operator ``delta_ell u(k) = u(k + ell) - u(k)``."""

__version__ = "0.1.0"

from .analysis import (
    LimitEstimate,
    SeriesClass,
    TrajectoryVerdict,
    classify_series,
    classify_trajectory,
    estimate_liminf,
    estimate_limsup,
    kiguradze_index,
    lemma210_bound_check,
)
from .coeff import parse_coeff, to_text, eval_coeff
from .criteria import (
    CriteriaOptions,
    CriterionId,
    CriterionReport,
    OverallVerdict,
    check,
    delta_seq,
    lemma29_check,
    overall,
)
from .equation import (
    FirstOrderEquation,
    NeutralEquation,
    Nonlinearity,
    exact_alt_solution,
    residual,
    residual_seq,
    simulate,
)
from .lattice import Lattice, LatticeSeq, delta, delta_pow, taylor_eval, telescoped_sum
