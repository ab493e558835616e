"""Independent check of a solved path against the one-period equations.

Walks the returned :class:`StatePath` period by period in plain Python,
calling the scalar equations directly.  Nothing from the stacked solver is
reused except the shared unit convention for exchange-rate changes.
"""

from __future__ import annotations

from . import model as mc
from .model import ModelParams
from .solver import DS_SCALE, StatePath


def residual_certificate(params: ModelParams, path: StatePath) -> dict[str, float]:
    """Max-abs residual of every equation along ``path``, keyed by equation."""
    T = path.horizon
    ex = path.exog
    init = path.initial
    worst = dict.fromkeys(("is", "nkpc", "taylor", "lending", "deposit", "uip",
                           "fxi", "term_premium", "mb", "price_level"), 0.0)

    def note(key: str, value: float) -> None:
        worst[key] = max(worst[key], abs(float(value)))

    ibar = params.i_bar
    pi_lag = init["pi_lag"]
    spread_lag = init["spread_lag"]
    tau_lag = init["tau_lag"]
    s_level = init["s_level_lag"]
    price = 0.0
    for t in range(T):
        y = float(path.y_gap[t])
        pi = float(path.pi[t])
        y_next = float(path.y_gap[t + 1]) if t + 1 < T else 0.0
        pi_next = float(path.pi[t + 1]) if t + 1 < T else 0.0
        ds_pp = float(path.ds[t]) * DS_SCALE
        dsf_pp = float(path.ds_fund[t]) * DS_SCALE
        tau = float(path.tau_term[t])

        note("is", mc.is_residual(params, y, y_next, path.r_lend[t], pi_next, tau, ex.nw[t], ex.h[t]))
        note("nkpc", mc.nkpc_residual(params, pi, pi_next, pi_lag, y, ds_pp, ex.cost_push[t]))
        _, floored = mc.taylor_rate(params, params.pi_star + pi, y, ex.eps_i[t])
        note("taylor", path.i_pol[t] - floored)
        r_lend, r_dep = mc.bank_rates(params, path.i_pol[t] - ibar, ex.ups[t], spread_lag, ex.eps_L[t])
        note("lending", path.r_lend[t] - r_lend)
        note("deposit", path.r_dep[t] - r_dep)
        if t >= 1:
            note("uip", mc.uip_residual(params, dsf_pp, path.i_pol[t - 1] - ibar,
                                        ex.i_for[t - 1], ex.zeta_dev[t - 1]))
        s_level += dsf_pp
        ds_mkt = dsf_pp + DS_SCALE * float(ex.fx[t])
        ds_real, d_mb = mc.fxi_apply(params, ds_mkt, ds_mkt)
        note("fxi", ds_pp - ds_real)
        note("mb", path.mb[t] - d_mb / DS_SCALE)
        note("term_premium", tau - mc.term_premium_step(params, tau_lag, ex.d_lsap_dom[t], ex.eps_tau[t]))
        price += pi / 4.0
        note("price_level", path.price_level[t] - price)

        pi_lag = pi
        spread_lag = float(path.r_lend[t] - path.r_dep[t])
        tau_lag = tau

    # level anchor: the fundamental rate returns to baseline one quarter past the horizon
    implied_last = (path.i_pol[T - 1] - ibar) - ex.i_for[T - 1] - ex.zeta_dev[T - 1]
    note("uip", s_level + implied_last)
    return worst


def regime_consistent(path: StatePath) -> bool:
    """ZLB flags match a negative shadow rate and depreciation flags match ``ds > 0``."""
    return bool(((path.shadow_rate < 0.0) == path.zlb).all() and ((path.ds > 0.0) == path.depreciation).all())
