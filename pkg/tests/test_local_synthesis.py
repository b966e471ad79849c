import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h2coord import matfun
from h2coord.local_synthesis import (AgentModel, Constraint, DelayDtc, SampledStatic, SampledWaveformHold,
                                     StaticGain, gamma0, invariant_zeros, normalize_feedthrough, predictor,
                                     solve_delay, solve_local, solve_sampled_opthold, solve_sampled_zoh,
                                     solve_unconstrained, validate)
from h2coord.oracle import pi_quadrature

from conftest import random_model, scalar_s1
from oracles import S1_ZOH_GAMMA_SQ_H05, S1_ZOH_XHAT_H05

SQ2M1 = np.sqrt(2) - 1
MU3 = np.ones(3) / np.sqrt(3)


def delay_closed(h):
    return 0.5 - np.exp(-2 * h) * (0.5 - SQ2M1)


def opthold_closed(h):
    return 0.5 - (1 - np.exp(-2 * h)) / (2 * h) * (0.5 - SQ2M1)


def test_constraint_validation():
    assert Constraint().h is None
    with pytest.raises(ValueError):
        Constraint.delay(0.0)
    with pytest.raises(ValueError):
        Constraint("bandwidth", 1.0)


def test_agent_model_dimension_checks():
    with pytest.raises(ValueError):
        AgentModel([[-1.0]], [[1.0]], [[1.0]], [[1.0], [0.0]], [[0.0]])


def test_validate_s1_all_pass(s1):
    rep = validate(s1, MU3, Constraint.delay(0.5))
    assert all(c.passed for c in rep.checks)
    assert rep.ok()


def test_validate_zero_weight_reports_index(s1):
    mu = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    rep = validate(s1, mu, Constraint())
    assert not rep["A3"].passed and "index 2" in rep["A3"].detail


def test_validate_unnormalized_weight(s1):
    assert not validate(s1, [1.0, 1.0], Constraint())["A3"].passed


def test_validate_unstable_a(s1):
    rep = validate(s1.replace(A=[[1.0]]), MU3, Constraint())
    assert not rep["A1"].passed and "1" in rep["A1"].detail
    assert not rep.ok()


def test_validate_nonsquare_bw_override():
    md = AgentModel([[0, 1], [-1, -2]], [[0], [1]], [[0], [1]], [[1, 0], [0, 1], [-1, -2]], [[0], [0], [1]])
    rep = validate(md, MU3, Constraint.zoh(0.5))
    assert not rep["A2"].passed
    assert not rep.ok() and rep.ok({"A2"})


def test_validate_a6_and_a7():
    md = AgentModel([[-1.0]], [[1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [2.0]])
    rep = validate(md, MU3, Constraint())
    assert not rep["A6"].passed
    # zoh does not require A6
    assert validate(md, MU3, Constraint.zoh(0.5)).ok()
    md7 = AgentModel([[-1.0, 0], [0, -2]], np.eye(2), [[1.0], [0.0]], [[0.0, 1.0]], [[0.0]])
    assert not validate(md7, MU3, Constraint.zoh(0.5))["A7"].passed


def test_a5_detects_imaginary_axis_zero():
    # z = C x + D u with C (sI - A)^{-1} B having zeros at +-j: numerator s^2 + 1
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -3.0, -3.0]])
    B = np.array([[0.0], [0.0], [1.0]])
    C = np.array([[1.0, 0.0, 1.0]])
    md = AgentModel(A, np.eye(3), B, C, [[0.0]])
    zeros = invariant_zeros(md.A, md.Bu, md.Cz, md.Dzu)
    np.testing.assert_allclose(sorted(zeros.imag), [-1, 1], atol=1e-8)
    rep = validate(md, MU3, Constraint())
    assert not rep["A5"].passed


def test_normalize_feedthrough():
    md = AgentModel([[-1.0]], [[1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [2.0]])
    md2, T = normalize_feedthrough(md)
    np.testing.assert_allclose(md2.Dzu.T @ md2.Dzu, np.eye(1))
    np.testing.assert_allclose(md2.Bu, md.Bu @ T)


def test_gamma0_examples(s1):
    g, Xbar = gamma0(s1)
    assert g**2 == pytest.approx(0.5, rel=1e-14)
    assert gamma0(s1.replace(Cz=[[0.0], [0.0]]))[0] == 0.0
    assert gamma0(s1.replace(Bw=[[2.0]]))[0] == pytest.approx(2 * g, rel=1e-14)


def test_unconstrained_s1(s1):
    sol = solve_unconstrained(s1)
    assert sol.gamma_opt_sq == pytest.approx(SQ2M1, abs=1e-13)
    assert sol.gamma_alpha == sol.gamma_opt
    assert isinstance(sol.controller, StaticGain)
    assert sol.controller.F[0, 0] == pytest.approx(-SQ2M1, abs=1e-13)
    z = solve_unconstrained(s1.replace(Cz=[[0.0], [0.0]]))
    assert z.gamma_opt == 0 and np.allclose(z.Falpha, 0)


def test_delay_s1(s1):
    sol = solve_delay(s1, 0.5)
    assert sol.gamma_alpha_sq == pytest.approx(0.5 - np.exp(-1) * (0.5 - SQ2M1), abs=1e-12)
    assert isinstance(sol.controller, DelayDtc)
    np.testing.assert_allclose(sol.controller.expAh, [[np.exp(-0.5)]], rtol=1e-14)


def test_delay_limits(s1):
    assert solve_delay(s1, 1e-6).gamma_alpha_sq == pytest.approx(SQ2M1, abs=1e-5)
    assert solve_delay(s1, 20.0).gamma_alpha_sq == pytest.approx(0.5, abs=1e-8)
    with pytest.raises(ValueError):
        solve_delay(s1, 0.0)


def test_delay_gamma_continuous_monotone(s1):
    hs = np.linspace(0.01, 5, 200)
    g = np.array([solve_delay(s1, h).gamma_alpha_sq for h in hs])
    np.testing.assert_allclose(g, delay_closed(hs), atol=1e-12)
    assert np.all(np.diff(g) > 0)


def test_zoh_s1_golden(s1):
    sol = solve_sampled_zoh(s1, 0.5)
    assert isinstance(sol.controller, SampledStatic)
    assert sol.XalphaHat[0, 0] == pytest.approx(S1_ZOH_XHAT_H05, abs=1e-10)
    assert sol.gamma_alpha_sq == pytest.approx(S1_ZOH_GAMMA_SQ_H05, abs=1e-8)
    assert sol.gamma_opt_sq == pytest.approx(SQ2M1, abs=1e-13)


def test_zoh_limit(s1):
    assert solve_sampled_zoh(s1, 1e-6).gamma_alpha_sq == pytest.approx(SQ2M1, abs=1e-5)


def test_opthold_s1(s1):
    sol = solve_sampled_opthold(s1, 0.5)
    assert isinstance(sol.controller, SampledWaveformHold)
    assert sol.gamma_alpha_sq == pytest.approx(0.5 - (1 - np.exp(-1)) * (0.5 - SQ2M1), abs=1e-12)
    assert solve_sampled_opthold(s1, 1e-6).gamma_alpha_sq == pytest.approx(SQ2M1, abs=1e-5)


@pytest.mark.parametrize("h", [0.1, 0.5, 1.0, 2.0])
def test_opthold_beats_zoh(s1, h):
    assert solve_sampled_opthold(s1, h).gamma_alpha_sq <= solve_sampled_zoh(s1, h).gamma_alpha_sq
    np.testing.assert_allclose(solve_sampled_opthold(s1, h).gamma_alpha_sq, opthold_closed(h), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["none", "delay", "zoh", "opthold"]),
       st.sampled_from([0.05, 0.5, 2.0]))
def test_ordering_chain(seed, kind, h):
    md = random_model(np.random.default_rng(seed))
    sol = solve_local(md, Constraint(kind, h))
    tol = 1e-10 * max(1.0, sol.gamma0_sq)
    assert sol.gamma_opt_sq <= sol.gamma_alpha_sq + tol
    assert sol.gamma_alpha_sq <= sol.gamma0_sq + tol
    assert np.linalg.eigvalsh(sol.Xbar - sol.Xalpha).min() >= -1e-9 * max(1, np.abs(sol.Xbar).max())


def test_waveform_continuity(s1):
    c = solve_sampled_opthold(s1, 0.5).controller
    np.testing.assert_allclose(c.waveform(0.0), c.F, rtol=1e-15)
    np.testing.assert_allclose(c.waveform(1e-9), c.F, rtol=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_pi_dc_gain_and_frequency_response(seed):
    md = random_model(np.random.default_rng(seed), n=3)
    h = 0.7
    Pi = solve_delay(md, h).controller.Pi
    _, Bh = matfun.discretize_pair(md.A, md.Bu, h)
    np.testing.assert_allclose(Pi.dc_gain(), Bh, atol=1e-12)
    for w in (0.0, 0.1, 1.0, 10.0):
        np.testing.assert_allclose(Pi.freq_response(1j * w), pi_quadrature(md.A, md.Bu, h, w), atol=1e-9)


def test_pi_no_blowup_at_eigenvalue_frequency():
    A = np.array([[-0.05, 2.0], [-2.0, -0.05]])
    md = AgentModel(A, np.eye(2), [[0.0], [1.0]], [[1.0, 0.0], [0.0, 0.0]], [[0.0], [1.0]])
    Pi = solve_delay(md, 1.0).controller.Pi
    # exactly at an eigenvalue the closed form is 0/0; the removable value must come back finite
    s = np.linalg.eigvals(A)[0]
    val = Pi.freq_response(s)
    assert np.all(np.isfinite(val))
    np.testing.assert_allclose(val, Pi._integral_form(s), atol=1e-10)
    np.testing.assert_allclose(Pi.freq_response(2j), pi_quadrature(A, md.Bu, 1.0, 2.0), atol=1e-9)


def test_predictor_homogeneous_flow(rng):
    md = random_model(rng, n=3)
    h = 0.6
    x0 = rng.standard_normal(3)
    xt = matfun.expm(md.A, h) @ x0
    np.testing.assert_allclose(predictor(md, x0, np.zeros((61, md.m)), h), xt, atol=1e-13)
    np.testing.assert_array_equal(predictor(md, x0, np.zeros((2, md.m)), 0.0), x0)


def test_predictor_with_input_second_order():
    md = scalar_s1()
    h, x0 = 0.5, 0.3
    # x' = -x + sin(3 t) from t = 0 to h, exact solution
    def exact(t):
        return x0 * np.exp(-t) + (np.exp(-t) * 3 + np.sin(3 * t) - 3 * np.cos(3 * t)) / 10
    errs = []
    for N in (50, 100, 200):
        th = np.linspace(0, h, N + 1)
        est = predictor(md, [x0], np.sin(3 * th)[:, None], h)[0]
        errs.append(abs(est - exact(h)))
    assert errs[-1] < 1e-5
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
