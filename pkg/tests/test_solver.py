import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kisblock.calibration import preset, preset_names
from kisblock.certify import regime_consistent, residual_certificate
from kisblock.errors import IndeterminateSystem, InvalidShock
from kisblock.model import ModelParams, ShockSpec
from kisblock.solver import (
    DS_SCALE, I, NV, SolveConfig, build_exogenous, check_determinacy, solve_path, stacked_jacobian,
    stacked_residual,
)

from oracles import backward_toy, c1_impact, fd_jacobian, taylor_principle_holds

BASE = preset("baseline_corrected").params
FIELDS = ("y_gap", "pi", "i_pol", "r_lend", "r_dep", "ds", "ds_fund", "tau_term", "mb", "price_level")


def _stack(path, i_bar=BASE.i_bar):
    cols = [getattr(path, f) for f in FIELDS]
    cols[FIELDS.index("i_pol")] = path.i_pol - i_bar
    return np.column_stack(cols)


def _same_regimes(a, b, noise=1e-12):
    # sign flips of a change that is zero up to rounding are not regime switches
    live = (np.abs(a.ds) > noise) | (np.abs(b.ds) > noise)
    return np.array_equal(a.zlb, b.zlb) and np.array_equal(a.depreciation[live], b.depreciation[live])


def test_zero_shocks_fixed_point():
    path, rep = solve_path(BASE, [])
    assert rep.converged and rep.iterations == 1
    assert rep.final_residual_norm == 0.0
    for f in ("y_gap", "pi", "r_lend", "r_dep", "ds", "tau_term", "mb", "price_level"):
        assert np.all(getattr(path, f) == 0.0), f
    assert np.all(path.i_pol == BASE.i_bar)
    assert not path.zlb.any()


def test_one_quarter_policy_shock_impact():
    p = BASE.replace(psi_L=0.7, lambda_lc=0.5, sigma_eff=3.0, kappa_nkpc=0.0, phi_y_0=0.0,
                     alpha_2=0.0, theta_c_plus=0.0, theta_c_minus=0.0)
    cfg = SolveConfig(horizon=2, check_determinacy=False)
    path, rep = solve_path(p, [ShockSpec("policy", 1.0, persistence=0.0)], cfg)
    assert rep.converged
    assert path.y_gap[0] == pytest.approx(-0.11667, abs=1e-5)
    assert path.y_gap[0] == pytest.approx(c1_impact(0.7, 0.5, 3.0), abs=1e-12)


@pytest.mark.parametrize("horizon", [2, 5, 12])
def test_backward_only_toy(horizon):
    p = BASE.replace(kappa_nkpc=0.0, iota_index=1.0, beta_disc=0.0, theta_c_plus=0.0,
                     theta_c_minus=0.0, phi_y_0=0.0, alpha_2=0.0)
    cfg = SolveConfig(horizon=horizon, check_determinacy=False)
    path, rep = solve_path(p, [ShockSpec("cost_push", 1.0, persistence=0.0)], cfg,
                           initial={"pi_lag": 0.5})
    assert rep.converged
    pi, y = backward_toy(0.5, 1.0, p.psi_L, p.lambda_lc, p.sigma_eff, p.phi_pi, horizon)
    np.testing.assert_allclose(path.pi, pi, atol=1e-10, rtol=0)
    np.testing.assert_allclose(path.y_gap, y, atol=1e-10, rtol=0)
    assert np.all(path.pi == pytest.approx(1.5, abs=1e-10))


def test_price_level_is_cumulated_inflation():
    path, _ = solve_path(BASE, [ShockSpec("policy", 1.0)])
    manual = np.zeros_like(path.pi)
    acc = 0.0
    for t, x in enumerate(path.pi):
        acc += x / 4.0
        manual[t] = acc
    np.testing.assert_allclose(path.price_level, manual, atol=1e-12)


@pytest.mark.parametrize("shock", [
    ShockSpec("policy", 0.5), ShockSpec("cost_push", 0.3), ShockSpec("uip", 0.2),
    ShockSpec("qe", 2.0), ShockSpec("foreign_qe", 1.0), ShockSpec("stress", 0.4),
    ShockSpec("fx", 0.01), ShockSpec("foreign_rate", 0.25), ShockSpec("term", 0.1),
])
def test_within_regime_linearity(shock):
    cfg = SolveConfig(horizon=120)
    p1, r1 = solve_path(BASE, [shock], cfg)
    double = ShockSpec(shock.target, 2 * shock.size, shock.timing, shock.persistence)
    p2, r2 = solve_path(BASE, [double], cfg)
    assert r1.converged and r2.converged
    assert _same_regimes(p1, p2)
    np.testing.assert_allclose(_stack(p2), 2 * _stack(p1), atol=1e-8, rtol=0)


def test_delayed_shock_continuation_matches_restart():
    # an anticipated shock moves the path before it lands, so the delayed
    # solution from the shock date onward must equal a fresh solve started
    # from the inherited state with the shock at date zero
    T, k = 200, 6
    delayed, _ = solve_path(BASE, [ShockSpec("policy", 1.0, timing=k)], SolveConfig(horizon=T))
    assert np.max(np.abs(delayed.y_gap[:k])) > 1e-4
    init = {"pi_lag": delayed.pi[k - 1], "spread_lag": delayed.spread[k - 1],
            "s_level_lag": DS_SCALE * delayed.ds_fund[:k].sum(), "tau_lag": delayed.tau_term[k - 1]}
    restart, rep = solve_path(BASE, [ShockSpec("policy", 1.0)], SolveConfig(horizon=T - k), initial=init)
    assert rep.converged
    a, b = _stack(delayed)[k:, :-1], _stack(restart)[:, :-1]
    np.testing.assert_allclose(a, b, atol=1e-8)


@pytest.mark.parametrize("name", [n for n in preset_names() if n != "dollarized_full"])
def test_residual_certificate_on_presets(name):
    p = preset(name).params
    for shock in (ShockSpec("policy", 1.0), ShockSpec("policy", -3.0), ShockSpec("fx", -0.05)):
        cfg = SolveConfig()
        path, rep = solve_path(p, [shock], cfg)
        if not rep.converged:
            continue
        cert = residual_certificate(p, path)
        assert max(cert.values()) <= cfg.tol, cert
        assert regime_consistent(path)
        assert np.array_equal(path.zlb, path.shadow_rate < 0.0)
        assert np.array_equal(path.depreciation, path.ds > 0.0)


def test_zlb_binds_under_large_easing():
    path, rep = solve_path(BASE, [ShockSpec("policy", -5.0)])
    assert rep.converged
    assert path.zlb.any()
    assert np.all(path.i_pol >= 0.0)
    assert np.all(path.i_pol[path.zlb] == 0.0)


@pytest.mark.parametrize("name", [n for n in preset_names() if n != "dollarized_full"])
def test_halving_damping_keeps_convergence(name):
    p = preset(name).params
    shocks = [ShockSpec("policy", -4.0)]
    _, full = solve_path(p, shocks, SolveConfig(damping=1.0))
    _, half = solve_path(p, shocks, SolveConfig(damping=0.5))
    if full.converged:
        assert half.converged


def test_analytic_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    p = BASE.replace(iota_index=0.3, alpha_2=0.4)
    T = 6
    shocks = [ShockSpec("policy", 0.3), ShockSpec("qe", 1.0), ShockSpec("fx", 0.002)]
    ex = build_exogenous(p, shocks, T)
    init = {"pi_lag": 0.1, "spread_lag": 0.05, "s_level_lag": 0.0, "tau_lag": 0.0,
            "lsap_dom_lag": 0.0, "lsap_for_lag": 0.0, "term_lag": 0.0}
    X = rng.normal(scale=0.5, size=(T, NV))
    X[:, I] += p.i_bar
    # keep every quarter clear of both kinks so central differences are valid
    X[:, 6] = np.where(np.abs(X[:, 6]) < 0.1, 0.3, X[:, 6])
    X[:, 5] = np.where(np.abs(X[:, 5]) < 0.1, 0.3, X[:, 5])

    def fun(v):
        return stacked_residual(p, v.reshape(T, NV), ex, init).ravel()

    J = stacked_jacobian(p, X, ex).toarray()
    np.testing.assert_allclose(J, fd_jacobian(fun, X.ravel()), atol=1e-7)


def test_nonconvergence_is_reported_not_raised():
    path, rep = solve_path(BASE, [ShockSpec("policy", -5.0)], SolveConfig(max_iter=1))
    assert not rep.converged and rep.iterations == 1
    assert rep.final_residual_norm > 1e-10


def test_indeterminate_system_raises():
    p = preset("dollarized_full").params
    with pytest.raises(IndeterminateSystem) as info:
        solve_path(p, [ShockSpec("policy", 1.0)])
    assert info.value.determinacy == "indeterminate"


def test_shock_outside_horizon_rejected():
    with pytest.raises(InvalidShock):
        solve_path(BASE, [ShockSpec("policy", 1.0, timing=10)], SolveConfig(horizon=10))


def test_unknown_initial_key_rejected():
    with pytest.raises(ValueError):
        solve_path(BASE, [], initial={"bogus": 1.0})


@pytest.mark.parametrize("kw", [dict(horizon=1), dict(tol=0.0), dict(max_iter=0),
                                dict(damping=0.0), dict(damping=1.5), dict(terminal="free")])
def test_solve_config_validation(kw):
    with pytest.raises(ValueError):
        SolveConfig(**kw)


# --- determinacy ---------------------------------------------------------------

def test_determinacy_examples():
    assert check_determinacy(BASE.replace(cbi=0.8)) == "determinate"
    # the rule already carries a one-for-one level response, so a gap
    # coefficient must go negative before the principle fails
    weak = BASE.replace(phi_pi_0=-0.5, phi_pi_1=0.0, phi_y_0=0.0)
    assert check_determinacy(weak) == "indeterminate"
    decoupled = BASE.replace(kappa_nkpc=0.0, theta_c_plus=0.0, theta_c_minus=0.0, cbi=0.8)
    assert check_determinacy(decoupled) == "determinate"


def test_half_gap_coefficient_still_determinate():
    p = BASE.replace(phi_pi_0=0.5, phi_pi_1=0.0, phi_y_0=0.0, theta_c_plus=0.0, theta_c_minus=0.0)
    assert taylor_principle_holds(p)
    assert check_determinacy(p) == "determinate"


def test_low_pass_through_breaks_principle():
    p = BASE.replace(psi_L=0.35, alpha_2=0.0, phi_pi_0=0.6, phi_pi_1=0.0, phi_y_0=0.0,
                     theta_c_plus=0.0, theta_c_minus=0.0)
    assert not taylor_principle_holds(p)
    assert check_determinacy(p) == "indeterminate"


@given(
    psi_L=st.floats(0.2, 1.0), psi_D=st.floats(0.2, 1.0), alpha_2=st.floats(0.0, 0.8),
    phi0=st.floats(-0.9, 2.0), phi_y=st.floats(0.0, 0.5), kappa=st.floats(0.005, 0.5),
    iota=st.floats(0.0, 0.9),
)
@settings(max_examples=60, deadline=None)
def test_determinacy_agrees_with_closed_economy_principle(psi_L, psi_D, alpha_2, phi0, phi_y, kappa, iota):
    p = BASE.replace(psi_L=psi_L, psi_D=psi_D, alpha_2=alpha_2, phi_pi_0=phi0, phi_pi_1=0.0,
                     phi_y_0=phi_y, phi_y_1=0.0, kappa_nkpc=kappa, iota_index=iota,
                     theta_c_plus=0.0, theta_c_minus=0.0)
    L = psi_L + alpha_2 * (psi_L - psi_D) / (1 - alpha_2)
    slope = kappa / ((1 - iota) * (1 - p.beta_disc))
    margin = L * ((1 + p.phi_pi) + p.phi_y / slope) - 1.0
    if abs(margin) < 1e-6:
        return
    expected = "determinate" if margin > 0 else "indeterminate"
    assert check_determinacy(p) == expected
