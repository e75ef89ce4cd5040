import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from neutral_osc.coeff import parse_coeff
from neutral_osc.equation import (
    FirstOrderEquation,
    NeutralEquation,
    Nonlinearity,
    binomial_delta,
    exact_alt_solution,
    first_order_residual_seq,
    required_window,
    residual,
    residual_seq,
    simulate,
    simulate_first_order,
    z_seq,
    a_delta_seq,
)
from neutral_osc.errors import (
    InsufficientSamples,
    PreconditionViolated,
    SimulationOverflow,
    ZeroPivot,
)
from neutral_osc.lattice import Lattice, LatticeSeq, delta_pow

from oracles import ELL, K, alt_residual_coefficient, direct_residual, example_coefficients

FIXTURES = {
    "eeq1.1": (2, "k", "k-1", 4, 3, "0.25*2^m*(4*k^2+2*ell*(m+ell)*k+(m+1)*ell^2)", 3),
    "eeq1.1-corrected": (2, "k", "k-1", 4, 3, "0.25*2^m*(4*k^2+(2*ell+2*m*ell)*k+(m+1)*ell^2)", 3),
    "eeq1.2": (4, "k", "1", 2, 3, "2^m*(2*k+ell)", 3),
    "eeq1.3": (5, "k", "k+1", -1, 3, "0.25*2^m*(4*k^2+(2*ell+2*m*ell)*k+(m+1)*ell^2)", 3),
    "eeq1.4": (5, "k*(k+ell)", "4", -2, 6, "5*2^m*(k+ell)^2", 6),
    "eeq1.5": (4, "k*(k-ell)", "2", 2, 1, "3*2^m*k^2", 2),
}


def fixture(name, ell=1.0, m=None):
    m0, a, p, s, rho, q, ks = FIXTURES[name]
    return NeutralEquation(m=m or m0, ell=ell, rho=rho, shift_s=s, a=parse_coeff(a),
                           p=parse_coeff(p), q=parse_coeff(q), k_start=ks * ell)


def const(c):
    return parse_coeff(repr(float(c)))


def alt_window(eq, n):
    lo = min(eq.shift_s, -eq.rho, 0)
    return exact_alt_solution(eq.lattice, n - lo, lo)


def init_for(eq, values):
    lo, hi = required_window(eq)
    return LatticeSeq(eq.lattice, lo, np.asarray(values, dtype=float)[: hi - lo + 1])


# -- model ------------------------------------------------------------------

def test_equation_validation():
    base = dict(ell=1.0, rho=1, shift_s=0, a=const(1), p=const(0), q=const(1))
    with pytest.raises(ValueError):
        NeutralEquation(m=1, **base)
    with pytest.raises(ValueError):
        NeutralEquation(m=2, **{**base, "rho": 0})
    with pytest.raises(ValueError):
        NeutralEquation(m=2, **{**base, "ell": 0.0})
    with pytest.raises(ValueError):
        Nonlinearity("sine")
    eq = NeutralEquation(m=2, **{**base, "a": parse_coeff("k-5")})
    with pytest.raises(PreconditionViolated):
        eq.validate_horizon(0, 10)


@given(st.sampled_from(["linear", "cubic_plus_linear"]), st.floats(0.01, 10),
       st.floats(-1e3, 1e3).filter(lambda u: abs(u) > 1e-6))
def test_nonlinearity_sign_and_gain(kind, L, u):
    f = Nonlinearity(kind, L)
    assert u * f(u) > 0
    assert f(u) / u >= L * (1 - 1e-12)


@pytest.mark.parametrize("m, rho, s, want", [
    (2, 3, 0, (-3, 1)),
    (3, 1, -2, (-2, 2)),
    (4, 3, 2, (-3, 5)),
    (2, 1, 1, (-1, 2)),
])
def test_required_window(m, rho, s, want):
    eq = NeutralEquation(m=m, ell=1.0, rho=rho, shift_s=s, a=const(1), p=const(1), q=const(1))
    assert required_window(eq) == want


def test_required_window_leaves_exactly_one_unknown_per_step():
    # The balance at step r touches x on steps r + min(0, s) - rho .. r + m + max(0, s).
    for m in range(2, 6):
        for s in range(-3, 4):
            for rho in range(1, 4):
                eq = NeutralEquation(m=m, ell=1.0, rho=rho, shift_s=s, a=const(1),
                                     p=const(1), q=const(1))
                lo, hi = required_window(eq)
                touched_hi = m + max(0, s)
                touched_lo = min(0, s, -rho)
                assert lo == touched_lo
                assert hi == touched_hi - 1


def test_z_seq_examples():
    lat = Lattice(0.0, 1.0)
    x = LatticeSeq(lat, 0, [(-1.0) ** r for r in range(12)])
    eq0 = NeutralEquation(m=2, ell=1.0, rho=1, shift_s=0, a=const(1), p=const(0), q=const(0))
    np.testing.assert_array_equal(z_seq(eq0, x).values, x.values)
    eq2 = NeutralEquation(m=4, ell=1.0, rho=3, shift_s=2, a=const(1), p=const(1), q=const(0))
    z = z_seq(eq2, x)
    np.testing.assert_array_equal(z.values, 2 * x.values[:10])
    eq3 = NeutralEquation(m=5, ell=1.0, rho=3, shift_s=-1, a=const(1), p=parse_coeff("k+1"),
                          q=const(0))
    z = z_seq(eq3, x)
    assert z.r_min == 1
    np.testing.assert_array_equal(z.values, -z.points() * x.values[1:])


def test_binomial_delta_matches_repeated_differences():
    rng = np.random.default_rng(3)
    v = rng.normal(size=40)
    seq = LatticeSeq(Lattice(0.0, 1.0), 0, v)
    for n in range(6):
        np.testing.assert_allclose(binomial_delta(v, n), delta_pow(seq, n).values,
                                   rtol=1e-12, atol=1e-12 * 2 ** n)


# -- alternating-solution oracle -------------------------------------------

@pytest.mark.parametrize("name, m", [("eeq1.1-corrected", 2), ("eeq1.1-corrected", 4),
                                     ("eeq1.2", 4), ("eeq1.2", 6), ("eeq1.3", 5), ("eeq1.3", 7),
                                     ("eeq1.4", 5), ("eeq1.5", 4)])
def test_symbolic_cancellation_for_every_ell(name, m):
    c = example_coefficients(name, m)
    assert alt_residual_coefficient(m, c["a"], c["p"], c["q"], c["s"], c["rho"]) == 0


def test_displayed_first_example_cancels_only_at_unit_step():
    c = example_coefficients("eeq1.1", 2)
    general = alt_residual_coefficient(2, c["a"], c["p"], c["q"], c["s"], c["rho"])
    assert sp.factor(general) == sp.factor(-2 * ELL * K * (ELL - 1))
    assert alt_residual_coefficient(2, c["a"], c["p"], c["q"], c["s"], c["rho"], ell=1) == 0


@pytest.mark.parametrize("name", ["eeq1.2", "eeq1.3", "eeq1.4", "eeq1.5", "eeq1.1-corrected"])
@pytest.mark.parametrize("ell", [1.0, 2.0, 3.0])
def test_alternating_solution_residual_vanishes(name, ell):
    eq = fixture(name, ell)
    x = alt_window(eq, 220)
    res = residual_seq(eq, x)
    qmax = np.max(np.abs(eq.q_at(res.points())))
    assert np.max(np.abs(res.values)) <= 1e-9 * qmax


@pytest.mark.parametrize("ell", [2.0, 3.0])
def test_displayed_first_example_residual_matches_oracle(ell):
    eq = fixture("eeq1.1", ell)
    x = alt_window(eq, 60)
    res = residual_seq(eq, x)
    c = example_coefficients("eeq1.1", 2)
    coef = sp.lambdify(K, alt_residual_coefficient(2, c["a"], c["p"], c["q"], c["s"], c["rho"], ell=ell))
    want = np.array([coef(k) for k in res.points()]) * x.values[res.r_min - x.r_min:
                                                                 res.r_max - x.r_min + 1]
    np.testing.assert_allclose(res.values, want, rtol=1e-12)
    assert np.all(res.values != 0)


def test_residual_scalar_and_vector_agree():
    eq = fixture("eeq1.3", 2.0)
    rng = np.random.default_rng(0)
    x = LatticeSeq(eq.lattice, -3, rng.uniform(-1, 1, 40))
    res = residual_seq(eq, x)
    for r in range(res.r_min, res.r_max + 1):
        assert residual(eq, x, r) == pytest.approx(res[r], rel=1e-12, abs=1e-9)


def test_residual_against_direct_oracle():
    rng = np.random.default_rng(11)
    for _ in range(30):
        m = int(rng.integers(2, 6))
        s = int(rng.integers(-3, 4))
        rho = int(rng.integers(1, 4))
        ell = float(rng.choice([0.5, 1.0, 2.0]))
        eq = NeutralEquation(m=m, ell=ell, rho=rho, shift_s=s, a=parse_coeff("k+1"),
                             p=parse_coeff("0.5+0.1*k"), q=parse_coeff("2+k^2"),
                             f=Nonlinearity("cubic_plus_linear", 1.5), k_start=1.0)
        lo = min(s, -rho, 0)
        x = LatticeSeq(eq.lattice, lo, rng.uniform(-1, 1, 30))
        res = residual_seq(eq, x)
        ks = list(x.points())
        xs = list(x.values)
        for r in range(res.r_min, res.r_max + 1):
            want = direct_residual(m, rho, s, eq.a_at, eq.p_at, eq.q_at, eq.f, ks, xs, r - lo)
            assert res[r] == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_residual_reduces_to_plain_difference():
    eq = NeutralEquation(m=3, ell=1.0, rho=1, shift_s=0, a=const(1), p=const(0), q=const(0))
    rng = np.random.default_rng(5)
    x = LatticeSeq(eq.lattice, -1, rng.normal(size=20))
    res = residual_seq(eq, x)
    d = delta_pow(x, 3)
    for r in range(res.r_min, res.r_max + 1):
        assert res[r] == pytest.approx(d[r], rel=1e-12, abs=1e-12)


def test_residual_needs_window():
    eq = fixture("eeq1.2")
    x = alt_window(eq, 5)
    with pytest.raises(InsufficientSamples):
        residual(eq, x, 10)


# -- exact solution ---------------------------------------------------------

def test_exact_alt_solution_examples():
    np.testing.assert_array_equal(exact_alt_solution(Lattice(3.0, 1.0), 4).values, [-1, 1, -1, 1])
    np.testing.assert_array_equal(exact_alt_solution(Lattice(0.0, 2.0), 3).values, [1, -1, 1])


@given(st.floats(-100, 100), st.floats(0.1, 5), st.integers(-20, 20), st.integers(2, 60))
def test_exact_alt_solution_alternates(k0, ell, r_min, n):
    lat = Lattice(round(k0 / ell) * ell, ell)
    v = exact_alt_solution(lat, n, r_min).values
    assert np.all(v[1:] * v[:-1] < 0)


# -- simulation -------------------------------------------------------------

def test_null_dynamics_stay_zero():
    eq = NeutralEquation(m=3, ell=1.0, rho=2, shift_s=-1, a=const(1), p=const(0.5), q=const(0))
    lo, hi = required_window(eq)
    x = simulate(eq, LatticeSeq(eq.lattice, lo, np.zeros(hi - lo + 1)), 50)
    assert not np.any(x.values)


def test_second_difference_zero_continues_line():
    eq = NeutralEquation(m=2, ell=1.0, rho=1, shift_s=0, a=const(1), p=const(0), q=const(0))
    init = LatticeSeq(eq.lattice, -1, [5.0, 3.0, 7.0])
    x = simulate(eq, init, 20)
    np.testing.assert_allclose(x.values[1:], 3.0 + 4.0 * np.arange(x.r_max + 1), rtol=1e-14)


@pytest.mark.parametrize("ell", [1.0, 2.0, 3.0])
def test_simulation_reproduces_alternating_solution(ell):
    eq = fixture("eeq1.2", ell)
    lo, hi = required_window(eq)
    init = exact_alt_solution(eq.lattice, hi - lo + 1, lo)
    x = simulate(eq, init, 200)
    want = exact_alt_solution(eq.lattice, len(x), lo)
    assert np.max(np.abs(x.values - want.values)) <= 1e-9


def test_pivot_errors_are_eager():
    lat_init = lambda eq: LatticeSeq(eq.lattice, required_window(eq)[0],
                                     np.ones(required_window(eq)[1] - required_window(eq)[0] + 1))
    eq = NeutralEquation(m=2, ell=1.0, rho=1, shift_s=2, a=const(1), p=parse_coeff("k-10"), q=const(1))
    with pytest.raises(ZeroPivot):
        simulate(eq, lat_init(eq), 20)
    eq = NeutralEquation(m=2, ell=1.0, rho=1, shift_s=0, a=const(1), p=parse_coeff("k-11"), q=const(1))
    with pytest.raises(ZeroPivot):
        simulate(eq, lat_init(eq), 20)
    eq = NeutralEquation(m=2, ell=1.0, rho=1, shift_s=0, a=parse_coeff("k-7"), p=const(0), q=const(1))
    with pytest.raises(ZeroPivot):
        simulate(eq, lat_init(eq), 20)
    eq = NeutralEquation(m=2, ell=1.0, rho=1, shift_s=0, a=const(1), p=const(0), q=const(1))
    with pytest.raises(PreconditionViolated):
        simulate(eq, LatticeSeq(eq.lattice, 0, [1.0, 1.0]), 5)


def test_overflow_keeps_partial_trajectory():
    eq = NeutralEquation(m=2, ell=1.0, rho=1, shift_s=0, a=const(1), p=const(0), q=const(1e100),
                         k_start=1.0)
    init = LatticeSeq(eq.lattice, -1, [1.0, 1.0, 1.0])
    with pytest.raises(SimulationOverflow) as info:
        simulate(eq, init, 200)
    part = info.value.partial
    assert part is not None and part.r_min == -1
    assert np.all(np.abs(part.values) <= 1e300)
    assert info.value.step == part.r_max + 1


def _equations():
    coeffs = st.sampled_from(["1", "k", "1+0.5*k", "2+k^2", "0.5*k+ell"])
    return st.builds(
        lambda m, s, rho, ell, a, p, q, kind: NeutralEquation(
            m=m, ell=ell, rho=rho, shift_s=s, a=parse_coeff(a), p=parse_coeff(p),
            q=parse_coeff(q), f=Nonlinearity(kind, 1.0), k_start=1.0),
        st.integers(2, 5), st.integers(-3, 3), st.integers(1, 3), st.sampled_from([1.0, 2.0, 0.5]),
        coeffs, st.sampled_from(["0.5", "1", "0.1*k+0.2", "2"]), coeffs,
        st.sampled_from(["linear", "cubic_plus_linear"]))


@settings(max_examples=60, deadline=None)
@given(_equations(), st.integers(0, 2**32 - 1))
def test_simulation_round_trip(eq, seed):
    lo, hi = required_window(eq)
    init = LatticeSeq(eq.lattice, lo, np.random.default_rng(seed).uniform(-1, 1, hi - lo + 1))
    try:
        x = simulate(eq, init, 40)
    except SimulationOverflow:
        return
    res = residual_seq(eq, x)
    A = a_delta_seq(eq, x)
    scale = 1.0 + np.maximum.accumulate(np.abs(A.values))
    r_idx = res.steps() - A.r_min
    assert np.all(np.abs(res.values) <= 1e-8 * scale[r_idx + 1])


def test_first_order_simulation_and_residual():
    eq = FirstOrderEquation(ell=1.0, rho=2, coef=parse_coeff("0.1"))
    init = LatticeSeq(eq.lattice, -2, [1.0, 1.0, 1.0])
    y = simulate_first_order(eq, init, 30)
    assert y[1] == pytest.approx(1.0 - 0.1)
    assert np.max(np.abs(first_order_residual_seq(eq, y).values)) <= 1e-15
