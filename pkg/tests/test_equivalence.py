import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from smallcell import channel as ch
from smallcell import config as C
from smallcell import equivalence as E

CFG = C.default_scenario()
B_NL, B_L = CFG.b_const(C.NL), CFG.b_const(C.L)

# Lambda([0, t]) per unit density (m^-2), evaluated with mpmath at 30 digits
# straight from the defining integral 2 pi int p(r) r P[H > (r/t)^alpha / B] dr.
ORACLE_L_LOGNORMAL = {10.0: 221.197759573941, 100.0: 22119.2200433089, 1000.0: 196348.678711908}
ORACLE_NL_LOGNORMAL = {1e3: 5105.56774282325, 1e4: 12338550.5320939, 1e5: 1253293657.75348}
ORACLE_L_RAYLEIGH_100 = 17640.9727157523


def test_equivalent_distance_trivial():
    assert E.equivalent_distance(100.0, 1.0, 1.0, 4.0) == 100.0
    assert E.equivalent_distance(100.0, 16.0, 1.0, 4.0) == pytest.approx(50.0)


@pytest.mark.parametrize("t,ref", ORACLE_L_LOGNORMAL.items())
def test_lognormal_los_oracle(t, ref):
    assert E.lognormal_measure(t, B_L, 2.42, 3.0, 250.0, C.L) == pytest.approx(ref, rel=1e-11)


@pytest.mark.parametrize("t,ref", ORACLE_NL_LOGNORMAL.items())
def test_lognormal_nlos_oracle(t, ref):
    assert E.lognormal_measure(t, B_NL, 4.28, 4.0, 250.0, C.NL) == pytest.approx(ref, rel=1e-11)


def test_nakagami_m1_oracle():
    assert E.nakagami_measure(100.0, B_L, 2.42, 1.0, 250.0, C.L) == pytest.approx(ORACLE_L_RAYLEIGH_100, rel=1e-11)


def test_printed_nlos_constant_disagrees_with_definition():
    # the NLoS constant with -1/M in place of +1/M is off by a large factor
    t = np.logspace(3, 5, 9)
    good = E.lognormal_measure(t, B_NL, 4.28, 4.0, 250.0, C.NL)
    printed = E.lognormal_measure(t, B_NL, 4.28, 4.0, 250.0, C.NL, printed=True)
    ref = np.array([ORACLE_NL_LOGNORMAL[k] for k in (1e3, 1e4, 1e5)])
    np.testing.assert_allclose(good[[0, 4, 8]], ref, rtol=1e-11)
    assert np.max(np.abs(printed / good - 1)) > 1.0


def _pairs():
    cases = []
    grid = np.logspace(0.5, 5, 50)
    for br in C.BRANCHES:
        cases.append(("lognormal", br, CFG, grid))
        cases.append(("nakagami-1", br, C.sirp_rayleigh(), grid))
        cases.append(("nakagami-rician", br, C.sirp_rician(10.0), grid))
    return cases


def _closed(kind, cfg, br):
    if kind == "lognormal":
        args = (cfg.b_const(br), cfg.alpha(br), cfg.gain(br).sigma_db, 250.0, br)
        return (lambda t: E.lognormal_measure(t, *args)), (lambda t: E.lognormal_intensity(t, *args))
    m = 1.0 if br == C.NL else cfg.gain_l.m if hasattr(cfg.gain_l, "m") else 1.0
    args = (cfg.b_const(br), cfg.alpha(br), m, 250.0, br)
    return (lambda t: E.nakagami_measure(t, *args)), (lambda t: E.nakagami_intensity(t, *args))


@pytest.mark.parametrize("kind,br", [(k, b) for k in ("lognormal", "nakagami-1") for b in C.BRANCHES])
def test_closed_forms_against_numeric_quick(kind, br):
    cfg = CFG if kind == "lognormal" else C.sirp_rayleigh()
    meas, inten = _closed(kind, cfg, br)
    t = np.logspace(0.5, 5, 8)
    lam = cfg.lambda_m2
    num = E.intensity_measure_numeric(cfg, br, t)
    got = lam * meas(t)
    mask = num > 1e-280
    np.testing.assert_allclose(got[mask], num[mask], rtol=1e-6)
    np.testing.assert_allclose(lam * inten(t)[mask], E.intensity_numeric(cfg, br, t)[mask], rtol=1e-6)


def test_rayleigh_nl_matches_nakagami_m1():
    t = np.logspace(2, 6, 30)
    np.testing.assert_allclose(E.rayleigh_nl_measure(t, B_NL, 4.28, 250.0),
                               E.nakagami_measure(t, B_NL, 4.28, 1.0, 250.0, C.NL), rtol=1e-10, atol=1e-300)
    np.testing.assert_allclose(E.rayleigh_nl_intensity(t, B_NL, 4.28, 250.0),
                               E.nakagami_intensity(t, B_NL, 4.28, 1.0, 250.0, C.NL), rtol=1e-10, atol=1e-300)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.0, 7.0), b=st.floats(0.0, 7.0))
def test_measure_monotone(a, b):
    lo, hi = sorted((10 ** a, 10 ** b))
    for br in C.BRANCHES:
        for f in (lambda t: E.lognormal_measure(t, CFG.b_const(br), CFG.alpha(br), CFG.gain(br).sigma_db, 250.0, br),
                  lambda t: E.nakagami_measure(t, CFG.b_const(br), CFG.alpha(br), 2.0, 250.0, br)):
            assert f(lo) <= f(hi) * (1 + 1e-12)


@pytest.mark.parametrize("br", C.BRANCHES)
@pytest.mark.parametrize("backend", [E.CF_LOGNORMAL, E.GENERIC])
def test_derivative_consistency(br, backend):
    sc = E.build_scenario(CFG, backend)
    pair = sc.pair(br)
    # LoS: the measure saturates at the finite LoS mass, so stay where it still grows
    t = np.logspace(0.5, 3.0, 12) if br == C.L else np.logspace(3, 5, 12)
    h = 1e-4 * t
    fd = (pair.measure(t + h) - pair.measure(t - h)) / (2 * h)
    np.testing.assert_allclose(pair.intensity(t), fd, rtol=1e-4)


def test_intensity_nonnegative():
    t = np.logspace(-3, 8, 200)
    for br in C.BRANCHES:
        assert np.all(E.build_scenario(CFG).pair(br).intensity(t) >= 0)


def test_table_backend_tracks_closed_form():
    gen = E.build_scenario(CFG, E.GENERIC)
    cf = E.build_scenario(CFG, E.CF_LOGNORMAL)
    for br, t in ((C.L, np.logspace(0, 5, 40)), (C.NL, np.logspace(2.5, 6, 40))):
        np.testing.assert_allclose(gen.pair(br).measure(t), cf.pair(br).measure(t), rtol=1e-5)


def _measure_over_gain(cfg, br, t):
    # independent route: integrate the LoS/NLoS area inside radius t (B H)^(1/alpha) over the law of H
    b, a = cfg.b_const(br), cfg.alpha(br)
    g = cfg.gain(br)

    def f(z):
        h = math.exp(z)
        rmax = t * (b * h) ** (1 / a)
        return 2 * math.pi * C.branch_mass(cfg.blockage, br, 0.0, rmax) * ch.density(g, h) * h

    return cfg.lambda_m2 * integrate.quad(f, -40, 8, limit=400, epsabs=0, epsrel=1e-10)[0]


@pytest.mark.parametrize("br,t", [(C.L, 50.0), (C.L, 300.0), (C.NL, 3e3), (C.NL, 3e4)])
def test_generic_numeric_negexp_blockage(br, t):
    cfg = C.sirp_rician(blockage=C.NegExp(1 / 141.4))
    assert E.pick_backend(cfg) == E.GENERIC
    got = E.intensity_measure_numeric(cfg, br, np.array([t]))[0]
    assert got == pytest.approx(_measure_over_gain(cfg, br, t), rel=1e-7)


def test_two_identical_pieces_equal_one_piece():
    p = C.PathLossPiece(30.8, 2.7, 4.28, 2.42)
    two = CFG.with_(pathloss=C.PathLossModel((p, p), (120.0,)))
    t = np.logspace(1, 5, 7)
    for br in C.BRANCHES:
        one = E.intensity_measure_numeric(CFG, br, t)
        split = E.intensity_measure_numeric(two, br, t)
        np.testing.assert_allclose(split, one, rtol=1e-8)


def test_strongest_power_cdf_properties():
    sc = E.build_scenario(CFG)
    g = np.logspace(-20, 8, 300)
    F = E.strongest_power_cdf(sc, g)
    assert np.all(np.diff(F) >= 0)
    assert F[0] >= 0 and F[-1] <= 1
    assert F[-1] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        E.strongest_power_cdf(sc, 0.0)
    q = E.strongest_power_quantile(sc, 0.5)
    assert E.strongest_power_cdf(sc, q) == pytest.approx(0.5, abs=1e-9)


def test_density_scaling():
    sc = E.build_scenario(CFG)
    t = np.logspace(1, 5, 9)
    a = sc.pair(C.L).measure(t)
    b = sc.at_density(20.0).pair(C.L).measure(t)
    np.testing.assert_allclose(b, 2 * a, rtol=1e-14)


def test_backend_selection():
    assert E.pick_backend(CFG) == E.CF_LOGNORMAL
    assert E.build_scenario(C.sirp_rayleigh()).backend == E.CF_NAKAGAMI
    assert E.build_scenario(C.sirp_rician()).backend == E.CF_RAYLEIGH_NL
    p = C.PathLossPiece(30.8, 2.7, 4.28, 2.42)
    assert E.pick_backend(CFG.with_(pathloss=C.PathLossModel((p, p), (100.0,)))) == E.GENERIC
    with pytest.raises(ValueError):
        E.closed_form_nakagami(CFG)
