"""Perfect-foresight path solver and determinacy check.

The whole horizon is stacked into one residual vector (nine equations per
quarter) and solved by semismooth Newton with an analytic sparse Jacobian.
Because the only nonlinearities are the zero floor on the policy rate and the
sign split in exchange-rate pass-through, each Newton step solves the model
exactly for the regime sequence implied by the current iterate; the loop
therefore doubles as regime-guess iteration.  Damping is halved whenever a
step raises the residual or a regime sequence recurs.

Exchange-rate changes are carried internally in annualized percentage points
(``DS_SCALE`` times the quarterly log change) so that UIP and pass-through
share the units of the interest rates.  The market exchange-rate level is
anchored to zero at the horizon.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import model as mc
from .errors import DeterminacyFailure, IndeterminateSystem, InvalidShock
from .model import ModelParams, ShockSpec, StatePoint

log = logging.getLogger(__name__)

DS_SCALE = 400.0
PERIODS_PER_YEAR = 4

# unknowns per period
Y, PI, I, RL, RD, DSF, DS, TAU, MB = range(9)
NV = 9
EQUATIONS = ("is", "nkpc", "taylor", "lending", "deposit", "uip", "fxi", "term_premium", "mb")

INITIAL_KEYS = ("pi_lag", "spread_lag", "s_level_lag", "tau_lag",
                "lsap_dom_lag", "lsap_for_lag", "term_lag")

_FLOOR_ROUNDING = 1e-12

# stock-type processes whose first difference enters the equations
_STOCK_LAGS = {"qe": "lsap_dom_lag", "foreign_qe": "lsap_for_lag", "term": "term_lag"}


@dataclass(frozen=True)
class SolveConfig:
    horizon: int = 200
    tol: float = 1e-10
    max_iter: int = 500
    damping: float = 1.0
    terminal: str = "zero"
    check_determinacy: bool = True
    stall_iter: int = 60

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 2:
            raise ValueError(f"horizon must be an integer >= 2, got {self.horizon}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if int(self.stall_iter) != self.stall_iter or self.stall_iter < 1:
            raise ValueError(f"stall_iter must be an integer >= 1, got {self.stall_iter}")
        if self.terminal != "zero":
            raise ValueError(f"only the 'zero' terminal condition is supported, got {self.terminal!r}")
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "max_iter", int(self.max_iter))

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "tol": self.tol, "max_iter": self.max_iter,
                "damping": self.damping, "terminal": self.terminal,
                "check_determinacy": self.check_determinacy, "stall_iter": self.stall_iter}


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual_norm: float
    zlb: np.ndarray
    depreciation: np.ndarray
    determinacy: str
    final_damping: float = 1.0

    @property
    def regime_path(self) -> list[tuple[bool, bool]]:
        return list(zip(self.zlb.tolist(), self.depreciation.tolist()))

    def to_dict(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "final_residual_norm": float(self.final_residual_norm),
            "determinacy": self.determinacy,
            "zlb_periods": int(self.zlb.sum()),
            "depreciation_periods": int(self.depreciation.sum()),
            "final_damping": float(self.final_damping),
        }


@dataclass
class ExogenousPaths:
    """Shock-driven inputs over the horizon, already in model units."""

    eps_i: np.ndarray
    cost_push: np.ndarray
    ups: np.ndarray
    lsap_for: np.ndarray
    d_lsap_for: np.ndarray
    fx: np.ndarray            # log fraction per quarter
    eps_L: np.ndarray
    eps_zeta: np.ndarray
    lsap_dom: np.ndarray
    d_lsap_dom: np.ndarray
    eps_tau: np.ndarray
    nw: np.ndarray
    h: np.ndarray
    i_for: np.ndarray
    zeta_dev: np.ndarray      # premium net of its intercept


@dataclass
class StatePath:
    """Solved trajectories.  Rates and inflation are annualized percentage
    points (deviations, except ``i_pol``/``shadow_rate`` which are levels);
    ``price_level`` is the percent deviation of the CPI level; ``ds`` and
    ``ds_mkt`` are quarterly log changes."""

    y_gap: np.ndarray
    pi: np.ndarray
    price_level: np.ndarray
    i_pol: np.ndarray
    shadow_rate: np.ndarray
    r_lend: np.ndarray
    r_dep: np.ndarray
    spread: np.ndarray
    ds: np.ndarray
    ds_mkt: np.ndarray
    ds_fund: np.ndarray
    tau_term: np.ndarray
    mb: np.ndarray
    ups_stress: np.ndarray
    lsap_dom: np.ndarray
    lsap_for: np.ndarray
    nw_gap: np.ndarray
    h_gap: np.ndarray
    i_foreign: np.ndarray
    zlb: np.ndarray
    depreciation: np.ndarray
    exog: ExogenousPaths = field(repr=False)
    initial: dict = field(default_factory=dict, repr=False)

    @property
    def horizon(self) -> int:
        return len(self.y_gap)

    @property
    def period(self) -> np.ndarray:
        return np.arange(self.horizon)

    def point(self, t: int) -> StatePoint:
        return StatePoint(
            y_gap=float(self.y_gap[t]), pi=float(self.pi[t]), i_pol=float(self.i_pol[t]),
            r_lend=float(self.r_lend[t]), r_dep=float(self.r_dep[t]), spread=float(self.spread[t]),
            ds=float(self.ds[t]), tau_term=float(self.tau_term[t]), mb=float(self.mb[t]),
            ups_stress=float(self.ups_stress[t]), lsap_dom=float(self.lsap_dom[t]),
            lsap_for=float(self.lsap_for[t]), nw_gap=float(self.nw_gap[t]), h_gap=float(self.h_gap[t]),
            i_foreign=float(self.i_foreign[t]),
        )


def _initial(initial: Mapping[str, float] | None) -> dict:
    out = dict.fromkeys(INITIAL_KEYS, 0.0)
    if initial:
        unknown = set(initial) - set(INITIAL_KEYS)
        if unknown:
            raise ValueError(f"unknown initial-condition keys: {sorted(unknown)}")
        out.update({k: float(v) for k, v in initial.items()})
    return out


def shock_process(params: ModelParams, shocks: Sequence[ShockSpec], target: str, horizon: int) -> np.ndarray:
    """Sum of the geometric impulse paths of all shocks hitting ``target``."""
    path = np.zeros(horizon)
    t = np.arange(horizon)
    for s in shocks:
        if s.target != target:
            continue
        rho = s.rho(params)
        k = t - s.timing
        live = k >= 0
        path[live] += s.size * np.power(rho, k[live]) if rho > 0 else s.size * (k[live] == 0)
    return path


def build_exogenous(params: ModelParams, shocks: Sequence[ShockSpec], horizon: int,
                    initial: Mapping[str, float] | None = None) -> ExogenousPaths:
    init = _initial(initial)
    for s in shocks:
        if not isinstance(s, ShockSpec):
            raise InvalidShock(f"expected ShockSpec, got {type(s).__name__}")
        if s.timing >= horizon:
            raise InvalidShock(f"shock on {s.target!r} at period {s.timing} lies outside horizon {horizon}")
    proc = {name: shock_process(params, shocks, name, horizon) for name in mc.SHOCK_TARGETS}

    def diff(name: str) -> np.ndarray:
        x = proc[name]
        return np.diff(x, prepend=init[_STOCK_LAGS[name]])

    d_lsap_for = diff("foreign_qe")
    ups = proc["stress"]
    zeta_dev = mc.uip_premium(params, d_lsap_for, ups, proc["uip"]) - params.zeta_0
    return ExogenousPaths(
        eps_i=proc["policy"], cost_push=proc["cost_push"], ups=ups,
        lsap_for=proc["foreign_qe"], d_lsap_for=d_lsap_for, fx=proc["fx"],
        eps_L=proc["lending"], eps_zeta=proc["uip"], lsap_dom=proc["qe"], d_lsap_dom=diff("qe"),
        eps_tau=diff("term"), nw=proc["net_worth"], h=proc["housing"], i_for=proc["foreign_rate"],
        zeta_dev=np.asarray(zeta_dev, dtype=float),
    )


def _lead(x: np.ndarray) -> np.ndarray:
    return np.append(x[1:], 0.0)


def _lag(x: np.ndarray, x0: float) -> np.ndarray:
    return np.concatenate(([x0], x[:-1]))


def _shadow(params: ModelParams, X: np.ndarray, ex: ExogenousPaths) -> np.ndarray:
    shadow, _ = mc.taylor_rate(params, params.pi_star + X[:, PI], X[:, Y], ex.eps_i)
    return shadow


def stacked_residual(params: ModelParams, X: np.ndarray, ex: ExogenousPaths, init: dict) -> np.ndarray:
    """Residuals of all equations, shape ``(T, 9)``; ``X`` has the same shape."""
    y, pi, i, rl, rd, dsf, ds, tau, mb = X.T
    T = X.shape[0]
    ibar = params.i_bar
    i_dev = i - ibar
    R = np.empty_like(X)
    R[:, 0] = mc.is_residual(params, y, _lead(y), rl, _lead(pi), tau, ex.nw, ex.h)
    R[:, 1] = mc.nkpc_residual(params, pi, _lead(pi), _lag(pi, init["pi_lag"]), y, ds, ex.cost_push)
    _, floored = mc.taylor_rate(params, params.pi_star + pi, y, ex.eps_i)
    R[:, 2] = i - floored
    lag_spread = _lag(rl - rd, init["spread_lag"])
    r_lend, r_dep = mc.bank_rates(params, i_dev, ex.ups, lag_spread, ex.eps_L)
    R[:, 3] = rl - r_lend
    R[:, 4] = rd - r_dep
    # UIP links the fundamental change next quarter to today's differential
    R_uip = np.empty(T)
    R_uip[1:] = mc.uip_residual(params, dsf[1:], i_dev[:-1], ex.i_for[:-1], ex.zeta_dev[:-1])
    implied_last = i_dev[-1] - ex.i_for[-1] - ex.zeta_dev[-1]
    # level anchor: market exchange rate back at baseline at the horizon
    R_uip[0] = init["s_level_lag"] + dsf.sum() + implied_last
    R[:, 5] = R_uip
    ds_mkt = dsf + DS_SCALE * ex.fx
    ds_fxi, d_mb = mc.fxi_apply(params, ds_mkt, ds_mkt)
    R[:, 6] = ds - ds_fxi
    R[:, 7] = tau - mc.term_premium_step(params, _lag(tau, init["tau_lag"]), ex.d_lsap_dom, ex.eps_tau)
    R[:, 8] = mb - d_mb / DS_SCALE
    return R


def stacked_jacobian(params: ModelParams, X: np.ndarray, ex: ExogenousPaths) -> sp.csc_matrix:
    T = X.shape[0]
    t = np.arange(T)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def add(eq: int, var: int, shift: int, value, tt: np.ndarray = t):
        tt = tt[(tt + shift >= 0) & (tt + shift < T)]
        v = np.broadcast_to(np.asarray(value, dtype=float), (T,))[tt]
        rows.append(tt * NV + eq)
        cols.append((tt + shift) * NV + var)
        vals.append(v)

    s = mc.is_slope(params)
    add(0, Y, 0, 1.0)
    add(0, Y, 1, -1.0)
    add(0, RL, 0, s)
    add(0, TAU, 0, s)
    add(0, PI, 1, -s)

    ds = X[:, DS]
    theta = np.where(ds > 0.0, params.theta_c_plus, params.theta_c_minus)
    add(1, PI, 0, 1.0 + params.beta_disc * params.iota_index)
    add(1, PI, 1, -params.beta_disc)
    add(1, PI, -1, -params.iota_index)
    add(1, Y, 0, -params.kappa_nkpc * params.xi_mc)
    add(1, DS, 0, -params.vartheta * theta)

    active = (_shadow(params, X, ex) > 0.0).astype(float)
    add(2, I, 0, 1.0)
    add(2, PI, 0, -(1.0 + params.phi_pi) * active)
    add(2, Y, 0, -params.phi_y * active)

    add(3, RL, 0, 1.0)
    add(3, I, 0, -params.psi_L)
    add(3, RL, -1, -params.alpha_2)
    add(3, RD, -1, params.alpha_2)
    add(4, RD, 0, 1.0)
    add(4, I, 0, -params.psi_D)

    tail = t[1:]
    add(5, DSF, 0, 1.0, tail)
    add(5, I, -1, -1.0, tail)
    rows.append(np.full(T, 5))
    cols.append(t * NV + DSF)
    vals.append(np.ones(T))
    rows.append(np.array([5]))
    cols.append(np.array([(T - 1) * NV + I]))
    vals.append(np.array([1.0]))

    add(6, DS, 0, 1.0)
    add(6, DSF, 0, -(1.0 - params.kappa_fxi))
    add(7, TAU, 0, 1.0)
    add(7, TAU, -1, -1.0)
    add(8, MB, 0, 1.0)
    add(8, DSF, 0, -(1.0 - params.eta_ster) * params.kappa_fxi * params.mb_scale / DS_SCALE)

    J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(T * NV, T * NV))
    return J.tocsc()


def _regimes(params: ModelParams, X: np.ndarray, ex: ExogenousPaths) -> tuple[np.ndarray, np.ndarray]:
    return _shadow(params, X, ex) < 0.0, X[:, DS] > 0.0


def _snap_floor(i: np.ndarray) -> np.ndarray:
    # a binding floor solved to rounding level can land a hair below zero;
    # larger violations come from unconverged iterates and are left visible
    return np.where((i < 0.0) & (i > -_FLOOR_ROUNDING), 0.0, i)


def _assemble_path(params: ModelParams, X: np.ndarray, ex: ExogenousPaths, init: dict) -> StatePath:
    shadow = _shadow(params, X, ex)
    zlb, dep = _regimes(params, X, ex)
    pi = X[:, PI].copy()
    ds_mkt = X[:, DSF] + DS_SCALE * ex.fx
    return StatePath(
        y_gap=X[:, Y].copy(), pi=pi, price_level=np.cumsum(pi) / PERIODS_PER_YEAR,
        i_pol=_snap_floor(X[:, I]), shadow_rate=shadow, r_lend=X[:, RL].copy(), r_dep=X[:, RD].copy(),
        spread=X[:, RL] - X[:, RD], ds=X[:, DS] / DS_SCALE, ds_mkt=ds_mkt / DS_SCALE,
        ds_fund=X[:, DSF] / DS_SCALE, tau_term=X[:, TAU].copy(), mb=X[:, MB].copy(),
        ups_stress=ex.ups.copy(), lsap_dom=ex.lsap_dom.copy(), lsap_for=ex.lsap_for.copy(),
        nw_gap=ex.nw.copy(), h_gap=ex.h.copy(), i_foreign=ex.i_for.copy(),
        zlb=zlb, depreciation=dep, exog=ex, initial=dict(init),
    )


def solve_path(params: ModelParams, shocks: Sequence[ShockSpec] = (), cfg: SolveConfig | None = None,
               *, initial: Mapping[str, float] | None = None) -> tuple[StatePath, SolveReport]:
    """Solve the stacked perfect-foresight system over ``cfg.horizon`` quarters.

    Returns the path and a report; a run that hits ``max_iter``, or whose best
    residual has not improved for ``stall_iter`` iterations, comes back with
    ``report.converged = False`` rather than raising.

    Raises
    ------
    InvalidShock
        A shock is timed outside the horizon.
    IndeterminateSystem
        The smooth linearization fails the eigenvalue count (only when
        ``cfg.check_determinacy``).
    """
    cfg = cfg or SolveConfig()
    shocks = list(shocks)
    init = _initial(initial)
    T = cfg.horizon
    ex = build_exogenous(params, shocks, T, init)

    determinacy = "unchecked"
    if cfg.check_determinacy:
        determinacy = check_determinacy(params)
        if determinacy != "determinate":
            raise IndeterminateSystem(
                f"smooth linearization is {determinacy} (phi_pi={params.phi_pi:.4g}, "
                f"phi_y={params.phi_y:.4g}, psi_L={params.psi_L:.4g})", determinacy)

    X = np.zeros((T, NV))
    X[:, I] = params.i_bar
    damping = cfg.damping
    seen: set[bytes] = set()
    norm = np.inf
    best, best_it = np.inf, 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        R = stacked_residual(params, X, ex, init)
        norm = float(np.max(np.abs(R)))
        if norm <= cfg.tol:
            converged = True
            break
        if it == cfg.max_iter:
            break
        if norm < 0.999 * best:
            best, best_it = norm, it
        elif it - best_it >= cfg.stall_iter:
            log.info("solve_path stalled at residual %.3e after %d iterations", norm, it)
            break
        zlb, dep = _regimes(params, X, ex)
        signature = np.packbits(np.concatenate([zlb, dep])).tobytes()
        if signature in seen and damping == cfg.damping and it > 2:
            # regime sequence recurred at full step: cycling between kinks
            damping = max(damping / 2.0, 1.0 / 64.0)
        seen.add(signature)
        J = stacked_jacobian(params, X, ex)
        try:
            dX = spla.spsolve(J, -R.ravel()).reshape(T, NV)
        except RuntimeError as exc:  # singular factorization
            log.warning("Jacobian factorization failed at iteration %d: %s", it, exc)
            break
        if not np.all(np.isfinite(dX)):
            log.warning("non-finite Newton step at iteration %d", it)
            break
        trial = X + damping * dX
        trial_norm = float(np.max(np.abs(stacked_residual(params, trial, ex, init))))
        if trial_norm > norm and damping > 1.0 / 64.0:
            damping /= 2.0
            trial = X + damping * dX
        X = trial

    if converged and norm > 0.0:
        # damped steps approach a binding floor geometrically; undamped
        # polishing steps take the residual down to rounding level
        for _ in range(3):
            dX = spla.spsolve(stacked_jacobian(params, X, ex), -stacked_residual(params, X, ex, init).ravel())
            trial = X + dX.reshape(T, NV)
            trial_norm = float(np.max(np.abs(stacked_residual(params, trial, ex, init))))
            if not trial_norm < norm:
                break
            X, norm = trial, trial_norm

    path = _assemble_path(params, X, ex, init)
    report = SolveReport(converged=converged, iterations=it, final_residual_norm=norm,
                         zlb=path.zlb.copy(), depreciation=path.depreciation.copy(),
                         determinacy=determinacy, final_damping=damping)
    if not converged:
        log.warning("solve_path did not converge: %d iterations, residual %.3e", it, norm)
    return path, report


# ---------------------------------------------------------------------------
# Determinacy
# ---------------------------------------------------------------------------

N_FORWARD = 3  # output gap, inflation, exchange-rate level
_UNIT_ROOT_TOL = 1e-7


def linear_system(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Smooth linearization ``A z_{t+1} = B z_t``.

    ``z_t = [pi_{t-1}, spread_{t-1}, s_{t-1}, y_t, pi_t, s_t]`` with ``s`` the
    fundamental exchange-rate level (annualized-point units).  The first three
    entries are predetermined.  The zero floor is ignored and pass-through
    uses the average of its two branches.
    """
    p = params
    s = mc.is_slope(p)
    ti_pi = 1.0 + p.phi_pi   # response of the policy rate to the inflation gap
    ti_y = p.phi_y
    c = p.vartheta * p.theta_bar * (1.0 - p.kappa_fxi)
    A = np.zeros((6, 6))
    B = np.zeros((6, 6))
    # lags roll forward
    A[0, 0] = 1.0
    B[0, 4] = 1.0
    A[2, 2] = 1.0
    B[2, 5] = 1.0
    # spread_t = (psi_L - psi_D) i_t + alpha_2 spread_{t-1}
    A[1, 1] = 1.0
    B[1, 1] = p.alpha_2
    B[1, 3] = (p.psi_L - p.psi_D) * ti_y
    B[1, 4] = (p.psi_L - p.psi_D) * ti_pi
    # IS: y_{t+1} + s pi_{t+1} = y_t + s (psi_L i_t + alpha_2 spread_{t-1})
    A[3, 3] = 1.0
    A[3, 4] = s
    B[3, 1] = s * p.alpha_2
    B[3, 3] = 1.0 + s * p.psi_L * ti_y
    B[3, 4] = s * p.psi_L * ti_pi
    # NKPC: beta pi_{t+1} = (1 + beta iota) pi_t - iota pi_{t-1} - kappa xi y_t - c (s_t - s_{t-1})
    A[4, 4] = p.beta_disc
    B[4, 0] = -p.iota_index
    B[4, 2] = c
    B[4, 3] = -p.kappa_nkpc * p.xi_mc
    B[4, 4] = 1.0 + p.beta_disc * p.iota_index
    B[4, 5] = -c
    # UIP: s_{t+1} - s_t = i_t
    A[5, 5] = 1.0
    B[5, 3] = ti_y
    B[5, 4] = ti_pi
    B[5, 5] = 1.0
    return A, B


def generalized_eigenvalues(params: ModelParams) -> np.ndarray:
    """Complex generalized eigenvalues of the smooth linearization
    (``inf`` where ``A`` is singular in that direction)."""
    A, B = linear_system(params)
    try:
        AA, BB, _, _ = scipy.linalg.qz(B, A, output="complex")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DeterminacyFailure(f"QZ decomposition failed: {exc}") from exc
    alpha = np.diag(AA)
    beta = np.diag(BB)
    if np.any((np.abs(alpha) < 1e-12) & (np.abs(beta) < 1e-12)):
        raise DeterminacyFailure("singular pencil: 0/0 generalized eigenvalue")
    finite = np.abs(beta) >= 1e-12
    out = np.full(alpha.shape, np.inf, dtype=complex)
    out[finite] = alpha[finite] / beta[finite]
    return out


def check_determinacy(params: ModelParams, *, unit_tol: float = 1e-9) -> str:
    """Classify the smooth system as ``determinate``, ``indeterminate`` or
    ``explosive``.

    The exchange-rate level carries an exact unit root (only its changes
    matter); it is removed and assigned to the forward block, since the level
    anchor pins it.  The remaining roots outside the unit circle are counted
    against the other two forward-looking variables.  Roots within
    ``unit_tol`` of the circle leave the path non-unique and are classed as
    indeterminate.
    """
    lam = generalized_eigenvalues(params)
    if np.any(np.isnan(lam)):
        raise DeterminacyFailure("eigenvalue computation produced NaN")
    dist = np.abs(lam - 1.0)
    k = int(np.argmin(dist))
    if dist[k] > _UNIT_ROOT_TOL:
        raise DeterminacyFailure(f"structural unit root not found (closest root {lam[k]})")
    mod = np.abs(np.delete(lam, k))
    if np.any(np.abs(mod - 1.0) <= unit_tol):
        return "indeterminate"
    n_unstable = int(np.sum(mod > 1.0)) + 1
    if n_unstable == N_FORWARD:
        return "determinate"
    return "indeterminate" if n_unstable < N_FORWARD else "explosive"
