"""Monte Carlo moments under repeated shock draws.

Expectations are certainty-equivalent: each quarter the endogenous variables
follow the linear decision rule of the smooth model (average pass-through,
no floor), recovered column by column from perfect-foresight responses to
unit states.  The zero floor and the pass-through sign split are then applied
to the realized quarter, and the realized values feed the next quarter's
state.

Every draw owns an independent random stream spawned from the master seed,
so results do not depend on how draws are batched.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import model as mc
from .errors import IndeterminateSystem
from .model import SHOCK_TARGETS, ModelParams, ShockSpec
from .solver import DS_SCALE, DSF, NV, PI, Y, SolveConfig, check_determinacy, solve_path

DEFAULT_SHOCK_STDS: Mapping[str, float] = MappingProxyType({
    "policy": 0.25,
    "cost_push": 0.5,
    "fx": 0.02,
})

# Endogenous predetermined states, then one current value per shock process,
# then the foreign-purchase stock whose first difference moves the premium.
# The term premium is not a separate state: starting from rest it equals
# -omega * LSAP + term shock level in every quarter.
_ENDO_STATES = ("pi_lag", "spread_lag", "s_level_lag")
_STOCK_STATES = (("foreign_qe", "lsap_for_lag"),)


@dataclass(frozen=True)
class SimConfig:
    n_draws: int = 2000
    sim_length: int = 400
    burn_in: int = 100
    seed: int = 0
    shock_stds: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_SHOCK_STDS))
    chunk_draws: int = 500

    def __post_init__(self):
        if int(self.n_draws) != self.n_draws or self.n_draws < 1:
            raise ValueError(f"n_draws must be an integer >= 1, got {self.n_draws}")
        if int(self.sim_length) != self.sim_length or self.sim_length < 1:
            raise ValueError(f"sim_length must be a positive integer, got {self.sim_length}")
        if int(self.burn_in) != self.burn_in or not 0 <= self.burn_in < self.sim_length:
            raise ValueError(f"burn_in must lie in [0, sim_length), got {self.burn_in}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        if self.chunk_draws < 1:
            raise ValueError("chunk_draws must be >= 1")
        unknown = set(self.shock_stds) - set(SHOCK_TARGETS)
        if unknown:
            raise ValueError(f"unknown shock targets in shock_stds: {sorted(unknown)}")
        stds = {k: float(v) for k, v in self.shock_stds.items()}
        if any(not np.isfinite(v) or v < 0 for v in stds.values()):
            raise ValueError(f"shock standard deviations must be finite and >= 0, got {stds}")
        object.__setattr__(self, "shock_stds", MappingProxyType(stds))

    def to_dict(self) -> dict:
        return {"n_draws": self.n_draws, "sim_length": self.sim_length, "burn_in": self.burn_in,
                "seed": self.seed, "shock_stds": dict(self.shock_stds), "chunk_draws": self.chunk_draws}


@dataclass(frozen=True)
class MomentReport:
    var_pi: float
    var_ds: float
    var_y: float
    mean_mb: float
    zlb_share: float
    n_obs: int

    def to_dict(self) -> dict:
        return asdict(self)


def _state_names() -> tuple[str, ...]:
    return _ENDO_STATES + SHOCK_TARGETS + tuple(lag for _, lag in _STOCK_STATES)


def smooth_params(params: ModelParams) -> ModelParams:
    """Same model with symmetric pass-through at the average of the two branches."""
    tb = params.theta_bar
    return params.replace(theta_c_plus=tb, theta_c_minus=tb)


def decision_rule(params: ModelParams, horizon: int = 200, scale: float = 0.1) -> np.ndarray:
    """Impact matrix ``G`` with ``X_t = G @ state_t`` for the smooth model.

    ``X_t`` holds the nine solver unknowns in deviation form (policy rate net
    of its steady state); columns follow :func:`_state_names`.
    """
    smooth = smooth_params(params)
    cfg = SolveConfig(horizon=horizon, check_determinacy=False)
    names = _state_names()
    G = np.empty((NV, len(names)))
    for j, name in enumerate(names):
        shocks: list[ShockSpec] = []
        initial: dict[str, float] = {}
        # FX pressure is a log fraction; keep its impulse comparable to the rest
        size = scale / DS_SCALE if name == "fx" else scale
        if name in SHOCK_TARGETS:
            shocks = [ShockSpec(name, size)]
        else:
            initial = {name: size}
        path, report = solve_path(smooth, shocks, cfg, initial=initial)
        if not report.converged or report.zlb.any():
            raise RuntimeError(f"decision-rule column {name!r} did not solve cleanly")
        col = np.array([path.y_gap[0], path.pi[0], path.i_pol[0] - smooth.i_bar, path.r_lend[0],
                        path.r_dep[0], path.ds_fund[0] * DS_SCALE, path.ds[0] * DS_SCALE,
                        path.tau_term[0], path.mb[0]])
        G[:, j] = col / size
    return G


def _simulate_chunk(params: ModelParams, G: np.ndarray, eps: np.ndarray) -> dict[str, np.ndarray]:
    n, L, _ = eps.shape
    nshock = len(SHOCK_TARGETS)
    rho = np.array([params.shock_persistences[t] for t in SHOCK_TARGETS])
    idx = {t: k for k, t in enumerate(SHOCK_TARGETS)}
    stock_idx = [idx[t] for t, _ in _STOCK_STATES]
    state = np.zeros((n, len(_ENDO_STATES) + nshock + len(_STOCK_STATES)))
    x_off = len(_ENDO_STATES)
    lag_off = x_off + nshock
    ibar = params.i_bar
    iota, beta = params.iota_index, params.beta_disc
    out = {k: np.empty((n, L)) for k in ("pi", "ds", "y", "mb", "zlb")}
    for t in range(L):
        x = state[:, x_off:lag_off] * rho + eps[:, t, :]
        state[:, x_off:lag_off] = x
        X = state @ G.T
        y, pi = X[:, Y], X[:, PI]
        dsf = X[:, DSF]
        # sign-split pass-through replaces the average branch in the realized quarter
        ds_mkt = dsf + DS_SCALE * x[:, idx["fx"]]
        ds, d_mb = mc.fxi_apply(params, ds_mkt, ds_mkt)
        kink = mc.erpt_contribution(params, ds) - params.vartheta * params.theta_bar * ds
        pi = pi + kink / (1.0 + beta * iota)
        shadow, i_pol = mc.taylor_rate(params, params.pi_star + pi, y, x[:, idx["policy"]])
        r_lend, r_dep = mc.bank_rates(params, i_pol - ibar, x[:, idx["stress"]], state[:, 1],
                                      x[:, idx["lending"]])
        out["pi"][:, t] = pi
        out["ds"][:, t] = ds / DS_SCALE
        out["y"][:, t] = y
        out["mb"][:, t] = d_mb / DS_SCALE
        out["zlb"][:, t] = shadow < 0.0
        # roll predetermined states forward
        state[:, 0] = pi
        state[:, 1] = r_lend - r_dep
        state[:, 2] = state[:, 2] + dsf
        state[:, lag_off:] = x[:, stock_idx]
    return out


def simulate_moments(params: ModelParams, cfg: SimConfig | None = None) -> MomentReport:
    """Post-burn-in sample moments pooled across all draws.

    Raises :class:`IndeterminateSystem` if the smooth model is not determinate.
    """
    cfg = cfg or SimConfig()
    det = check_determinacy(smooth_params(params))
    if det != "determinate":
        raise IndeterminateSystem(f"stochastic simulation needs a determinate model, got {det}", det)
    active = [t for t in SHOCK_TARGETS if cfg.shock_stds.get(t, 0.0) > 0.0]
    n_keep = cfg.sim_length - cfg.burn_in
    if not active:
        return MomentReport(0.0, 0.0, 0.0, 0.0, 0.0, cfg.n_draws * n_keep)

    G = decision_rule(params)
    stds = np.array([cfg.shock_stds[t] for t in active])
    cols = [SHOCK_TARGETS.index(t) for t in active]
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_draws)
    pieces: dict[str, list[np.ndarray]] = {k: [] for k in ("pi", "ds", "y", "mb", "zlb")}
    for start in range(0, cfg.n_draws, cfg.chunk_draws):
        block = children[start:start + cfg.chunk_draws]
        eps = np.zeros((len(block), cfg.sim_length, len(SHOCK_TARGETS)))
        for d, child in enumerate(block):
            eps[d][:, cols] = np.random.default_rng(child).standard_normal((cfg.sim_length, len(active))) * stds
        sim = _simulate_chunk(params, G, eps)
        for k in pieces:
            pieces[k].append(sim[k][:, cfg.burn_in:])
    pooled = {k: np.concatenate(v, axis=0).ravel() for k, v in pieces.items()}
    return MomentReport(
        var_pi=float(np.var(pooled["pi"], ddof=1)) if pooled["pi"].size > 1 else 0.0,
        var_ds=float(np.var(pooled["ds"], ddof=1)) if pooled["ds"].size > 1 else 0.0,
        var_y=float(np.var(pooled["y"], ddof=1)) if pooled["y"].size > 1 else 0.0,
        mean_mb=float(np.mean(pooled["mb"])),
        zlb_share=float(np.mean(pooled["zlb"])),
        n_obs=int(pooled["pi"].size),
    )
