import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallcell import config as C
from smallcell import coverage as V
from smallcell import equivalence as E
from smallcell import montecarlo as M

SC = E.build_scenario(C.default_scenario())


@pytest.fixture(scope="module")
def engine10():
    return V.CoverageEngine(SC.at_density(10.0))


def test_quadrature_spec_validation():
    V.QuadratureSpec()
    for bad in (dict(omega_max=0), dict(target_abs_tol=0.02), dict(omega_points=8), dict(y_grid=4)):
        with pytest.raises(ValueError):
            V.QuadratureSpec(**bad)


def test_asymptotic_values():
    # 4 sin(pi/2) / (2 pi) = 2 / pi
    assert V.asymptotic_coverage(4.0, 1.0) == pytest.approx(0.636619772367581, rel=1e-14)
    # mpmath evaluation of 2.42 sin(2 pi / 2.42) / (2 pi)
    assert V.asymptotic_coverage(2.42, 1.0) == pytest.approx(0.199748722552557, rel=1e-13)
    with pytest.raises(ValueError):
        V.asymptotic_coverage(2.42, 0.5)


def test_asymptotic_multislope_first_piece():
    p1, p2 = C.PathLossPiece(30.8, 2.7, 4.28, 2.0 + 1e-9), C.PathLossPiece(30.8, 2.7, 4.28, 4.0)
    two = C.default_scenario(pathloss=C.PathLossModel((C.PathLossPiece(30.8, 2.7, 4.28, 2.42), p2), (100.0,)))
    assert V.asymptotic_coverage_multislope(two, 1.0) == V.asymptotic_coverage(2.42, 1.0)
    dec = C.default_scenario(pathloss=C.PathLossModel((p2, C.PathLossPiece(30.8, 2.7, 4.28, 2.42)), (100.0,)))
    with pytest.raises(ValueError):
        V.asymptotic_coverage_multislope(dec, 1.0)


def test_charfunc_at_zero_is_one():
    assert V.charfunc_inv_sinr(SC, 200.0, C.L, 0.0) == 1.0 + 0j
    with pytest.raises(ValueError):
        V.charfunc_inv_sinr(SC, 0.0, C.L, 1.0)


@settings(max_examples=40, deadline=None)
@given(w=st.floats(-1e3, 1e3), y=st.floats(5.0, 2000.0))
def test_charfunc_bounded(w, y):
    for br in C.BRANCHES:
        assert abs(V.charfunc_inv_sinr(SC, y, br, w)) <= 1.0 + 1e-9


def _conditioned_inverse_sinr(sc, p, trials, rng, k_max=400):
    """1/SINR samples given serving power p, simulating the interferer powers as a PPP
    on (0, p): arrival k of a unit-rate process in count units c maps to the power q
    with M(q) - M(p) = c.  Powers beyond the k_max-th add their mean."""
    m_p = float(sc.count_above(p))
    zq = np.linspace(math.log(p), math.log(p) - 200, 40001)
    c = sc.count_above(np.exp(zq)) - m_p
    arrivals = np.cumsum(rng.exponential(size=(trials, k_max)), axis=1)
    q = np.exp(np.interp(arrivals, c, zq))
    # mean remainder: int_{c_K}^inf q(c) dc on the table
    qq = np.exp(zq)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (qq[1:] + qq[:-1]) * np.diff(c))])
    rem = cum[-1] - np.interp(arrivals[:, -1], c, cum)
    return (q.sum(axis=1) + rem + sc.config.noise) / p


def test_charfunc_matches_conditioned_simulation():
    sc = SC.at_density(10.0)
    y = 250.0 * 0.6                      # LoS serving point near the median
    p = y ** -sc.config.alpha(C.L)
    x = _conditioned_inverse_sinr(sc, p, 10**5, np.random.default_rng(11))
    for w in (0.5, 1.0, 5.0):
        emp = np.mean(np.exp(1j * w * x))
        ana = V.charfunc_inv_sinr(sc, y, C.L, w)
        assert abs(emp.real - ana.real) < 0.01
        assert abs(emp.imag - ana.imag) < 0.01


def test_result_components_add_up(engine10):
    r = engine10.coverage()
    assert not r.flagged
    assert r.p_c == pytest.approx(r.p_c_nl + r.p_c_l, abs=1e-12)
    assert r.p_c == pytest.approx(sum(r.per_component.values()), abs=1e-12)
    assert 0.0 <= r.p_c <= 1.0


def test_matches_monte_carlo_at_ten(engine10):
    est = M.estimate_coverage(C.default_scenario(lam=10.0), 20000, seed=4)
    assert abs(engine10.coverage().p_c - est.p) < 0.03


@pytest.mark.parametrize("lam", [100.0, 1000.0])
def test_huge_threshold(lam):
    assert V.CoverageEngine(SC.at_density(lam)).coverage(threshold=1e6).p_c < 0.01


def test_huge_threshold_lone_los_bs(engine10):
    # with step blockage a lone BS inside the LoS ball sees only NLoS interferers,
    # so p_c at 60 dB tends to P[exactly one BS within 250 m]
    mu = 10e-6 * math.pi * 250.0**2
    assert engine10.coverage(threshold=1e6).p_c == pytest.approx(mu * math.exp(-mu), abs=0.02)


def test_monotone_in_threshold(engine10):
    t = np.logspace(-1, 1.5, 6)
    pc = [engine10.coverage(threshold=x).p_c for x in t]
    assert all(a >= b - 1e-6 for a, b in zip(pc, pc[1:]))


@pytest.mark.parametrize("lam", [0.3, 30.0])
def test_sir_dominates_sinr(lam):
    eng = V.CoverageEngine(SC.at_density(lam))
    assert eng.coverage(noise=0.0).p_c >= eng.coverage().p_c - 1e-6


def test_coverage_probability_entry_point():
    r = V.coverage_probability(C.default_scenario(lam=10.0, metric=C.SIR))
    assert r.p_c == pytest.approx(V.CoverageEngine(SC.at_density(10.0)).coverage(noise=0.0).p_c, abs=1e-9)
    with pytest.raises(ValueError):
        V.coverage_probability(C.default_scenario(pathloss=C.PathLossModel((C.PathLossPiece(30.8, 2.7, 4.28, 2.0),))))


def test_los_only_nakagami_is_density_invariant():
    cfg = C.sirp_rayleigh(metric=C.SIR, blockage=C.Step(1e12))
    sc = E.build_scenario(cfg)
    for lam in (1.0, 100.0):
        assert V.CoverageEngine(sc.at_density(lam)).coverage().p_c == pytest.approx(
            V.asymptotic_coverage(2.42, 1.0), abs=2e-3)


def test_multislope_limit_at_extreme_density():
    p1, p2 = C.PathLossPiece(30.8, 2.7, 4.28, 2.42), C.PathLossPiece(30.8, 2.7, 4.28, 4.0)
    cfg = C.sirp_rayleigh(lam=1e5, metric=C.SIR, blockage=C.Step(1e9),
                          pathloss=C.PathLossModel((p1, p2), (1000.0,)))
    r = V.coverage_probability(cfg)
    assert abs(r.p_c - V.asymptotic_coverage_multislope(cfg, 1.0)) < 0.03


def test_ase_step_coverage_closed_form():
    # p_c = 1 up to u_max then 0; u_max on a panel edge so the quadrature sees a smooth piece
    u_max = math.exp(6.0)
    cfg = C.default_scenario(lam=7.0)
    got = V.ase_upper_bound(cfg, p_c_fn=lambda u: 1.0 if u <= u_max else 0.0)
    assert got == pytest.approx(7.0 / math.log(2) * math.log1p(u_max), rel=1e-5)


def test_ase_linear_in_lambda():
    f = lambda u: 1.0 / (1.0 + u) ** 0.7
    a = V.ase_upper_bound(C.default_scenario(lam=3.0), p_c_fn=f)
    b = V.ase_upper_bound(C.default_scenario(lam=6.0), p_c_fn=f)
    assert b == 2 * a


def test_generic_backend_two_slope_negexp_matches_simulation():
    p1, p2 = C.PathLossPiece(30.8, 2.7, 4.28, 2.42), C.PathLossPiece(30.8, 2.7, 4.28, 4.0)
    cfg = C.sirp_rayleigh(lam=50.0, pathloss=C.PathLossModel((p1, p2), (1000.0,)),
                          blockage=C.NegExp(1 / 141.4))
    r = V.coverage_probability(cfg)
    assert not r.flagged
    est = M.estimate_coverage(cfg, 20_000, seed=6)
    assert abs(r.p_c - est.p) < 0.03
