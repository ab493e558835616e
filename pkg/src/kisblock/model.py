"""Parameters, state containers and one-period equations of the monetary block.

Every equation is written as a plain function of its arguments so that it can
be evaluated on scalars or, elementwise, on numpy arrays.  Nothing here knows
how the system is solved.

Units: interest rates, inflation, spreads and the term premium are annualized
percentage points; the output gap and the housing/net-worth gaps are percent;
exchange-rate changes are log fractions per quarter; asset purchases and the
monetary base are percent of GDP.  One period is one quarter.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import InvalidParams, InvalidShock

SHOCK_TARGETS: tuple[str, ...] = (
    "policy",        # epsilon_i, added to the shadow rate
    "cost_push",     # upsilon^pi in the Phillips curve
    "stress",        # financial stress index upsilon
    "foreign_qe",    # stock of foreign asset purchases LSAP*
    "fx",            # FX market pressure innovation xi (log fraction)
    "lending",       # epsilon^L in the lending-rate equation
    "uip",           # epsilon^zeta in the UIP premium
    "qe",            # stock of domestic asset purchases LSAP
    "term",          # term-premium innovation level
    "net_worth",     # net-worth gap driving the IS curve
    "housing",       # housing gap driving the IS curve
    "foreign_rate",  # foreign policy rate deviation i*
)

DEFAULT_PERSISTENCE = 0.5

# Directional slopes of the dollarization/debt maps; overridable per call.
M_PSI = 0.5
M_KAPPA = 0.3
B_REF = 0.6


def _default_persistences() -> Mapping[str, float]:
    return MappingProxyType({name: DEFAULT_PERSISTENCE for name in SHOCK_TARGETS})


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector of the monetary block.

    Defaults reproduce the corrected baseline before any dynamic fitting.
    Instances are immutable; use :meth:`replace` to derive variants.
    """

    # bank pass-through
    psi_L: float = 0.7
    psi_D: float = 0.6
    alpha_1: float = 0.3
    alpha_2: float = 0.3
    # IS curve
    lambda_lc: float = 0.5
    sigma_eff: float = 3.0
    chi_1: float = 0.1
    chi_2: float = 0.1
    # Phillips curve
    beta_disc: float = 0.99
    kappa_nkpc: float = 0.05
    xi_mc: float = 1.0
    iota_index: float = 0.0
    vartheta: float = 0.35
    theta_c_plus: float = 0.25
    theta_c_minus: float = 0.10
    # Taylor rule
    rho_nat: float = 1.0
    pi_star: float = 2.0
    phi_pi_0: float = 1.1
    phi_pi_1: float = 0.5
    phi_y_0: float = 0.25
    phi_y_1: float = 0.1
    cbi: float = 0.5
    # premia, QE, FX intervention
    zeta_0: float = 0.0
    zeta_qe: float = -0.2
    zeta_ups: float = 0.5
    omega_qe: float = 0.4
    kappa_fxi: float = 0.5
    eta_ster: float = 1.0
    mb_scale: float = 1.0
    # structure
    d_dollar: float = 0.0
    b_debt: float = B_REF
    risk_b: float = 0.02
    lending_premium: float = 0.0
    shock_persistences: Mapping[str, float] = field(default_factory=_default_persistences)

    def __post_init__(self):
        pers = dict(_default_persistences())
        unknown = set(self.shock_persistences) - set(SHOCK_TARGETS)
        if unknown:
            raise InvalidParams(f"unknown shock targets in shock_persistences: {sorted(unknown)}")
        pers.update({k: float(v) for k, v in self.shock_persistences.items()})
        object.__setattr__(self, "shock_persistences", MappingProxyType(pers))
        for f in dataclasses.fields(self):
            if f.name == "shock_persistences":
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise InvalidParams(f"{f.name} must be a real number, got {value!r}")
            value = float(value)
            if not np.isfinite(value):
                raise InvalidParams(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, value)
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise InvalidParams(msg)

        need(0.0 < self.psi_L <= 1.0, f"psi_L must lie in (0, 1], got {self.psi_L}")
        need(0.0 < self.psi_D <= 1.0, f"psi_D must lie in (0, 1], got {self.psi_D}")
        need(0.0 <= self.alpha_2 < 1.0, f"alpha_2 must lie in [0, 1), got {self.alpha_2}")
        need(0.0 < self.lambda_lc < 1.0, f"lambda_lc must lie in (0, 1), got {self.lambda_lc}")
        need(self.sigma_eff > 0.0, f"sigma_eff must be positive, got {self.sigma_eff}")
        need(0.0 <= self.beta_disc < 1.0, f"beta_disc must lie in [0, 1), got {self.beta_disc}")
        need(self.kappa_nkpc >= 0.0, f"kappa_nkpc must be non-negative, got {self.kappa_nkpc}")
        need(self.xi_mc >= 0.0, f"xi_mc must be non-negative, got {self.xi_mc}")
        need(0.0 <= self.iota_index <= 1.0, f"iota_index must lie in [0, 1], got {self.iota_index}")
        need(0.0 < self.vartheta < 1.0, f"vartheta must lie in (0, 1), got {self.vartheta}")
        need(0.0 <= self.theta_c_minus <= self.theta_c_plus < 1.0,
             f"need 0 <= theta_c_minus <= theta_c_plus < 1, got {self.theta_c_minus}, {self.theta_c_plus}")
        need(0.0 <= self.cbi <= 1.0, f"cbi must lie in [0, 1], got {self.cbi}")
        need(self.omega_qe > 0.0, f"omega_qe must be positive, got {self.omega_qe}")
        need(0.0 <= self.kappa_fxi <= 1.0, f"kappa_fxi must lie in [0, 1], got {self.kappa_fxi}")
        need(0.0 <= self.eta_ster <= 1.0, f"eta_ster must lie in [0, 1], got {self.eta_ster}")
        need(0.0 <= self.d_dollar <= 1.0, f"d_dollar must lie in [0, 1], got {self.d_dollar}")
        need(self.b_debt >= 0.0, f"b_debt must be non-negative, got {self.b_debt}")
        need(self.risk_b >= 0.0, f"risk_b must be non-negative, got {self.risk_b}")
        for name, rho in self.shock_persistences.items():
            need(0.0 <= rho < 1.0, f"persistence of {name} must lie in [0, 1), got {rho}")

    @property
    def phi_pi(self) -> float:
        return self.phi_pi_0 + self.phi_pi_1 * self.cbi

    @property
    def phi_y(self) -> float:
        return max(0.0, self.phi_y_0 - self.phi_y_1 * self.cbi)

    @property
    def i_bar(self) -> float:
        """Steady-state policy rate (inflation on target, zero gap)."""
        return self.rho_nat + self.pi_star

    @property
    def theta_bar(self) -> float:
        return 0.5 * (self.theta_c_plus + self.theta_c_minus)

    def replace(self, **changes) -> "ModelParams":
        if "shock_persistences" in changes:
            merged = dict(self.shock_persistences)
            merged.update(changes["shock_persistences"])
            changes["shock_persistences"] = merged
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["shock_persistences"] = dict(self.shock_persistences)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParams(f"unknown parameter names: {sorted(unknown)}")
        return cls(**dict(data))

    @classmethod
    def scalar_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls) if f.name != "shock_persistences")


@dataclass(frozen=True)
class StatePoint:
    """All endogenous and exogenous variables at one date, in deviation form
    (the policy rate is a level)."""

    y_gap: float = 0.0
    pi: float = 0.0
    i_pol: float = 0.0
    r_lend: float = 0.0
    r_dep: float = 0.0
    spread: float = 0.0
    ds: float = 0.0
    tau_term: float = 0.0
    mb: float = 0.0
    ups_stress: float = 0.0
    lsap_dom: float = 0.0
    lsap_for: float = 0.0
    nw_gap: float = 0.0
    h_gap: float = 0.0
    i_foreign: float = 0.0


@dataclass(frozen=True)
class ShockSpec:
    """An exogenous impulse: ``size`` hits ``target`` at period ``timing`` and
    then decays geometrically.  ``persistence=None`` defers to the model's
    ``shock_persistences`` entry for the target."""

    target: str
    size: float
    timing: int = 0
    persistence: float | None = None

    def __post_init__(self):
        if self.target not in SHOCK_TARGETS:
            raise InvalidShock(f"unknown shock target {self.target!r}; expected one of {SHOCK_TARGETS}")
        if isinstance(self.timing, bool) or int(self.timing) != self.timing or self.timing < 0:
            raise InvalidShock(f"timing must be a non-negative integer, got {self.timing!r}")
        object.__setattr__(self, "timing", int(self.timing))
        if not np.isfinite(float(self.size)):
            raise InvalidShock(f"shock size must be finite, got {self.size!r}")
        object.__setattr__(self, "size", float(self.size))
        if self.persistence is not None:
            p = float(self.persistence)
            if not 0.0 <= p < 1.0:
                raise InvalidShock(f"persistence must lie in [0, 1), got {self.persistence}")
            object.__setattr__(self, "persistence", p)

    def rho(self, params: ModelParams) -> float:
        return params.shock_persistences[self.target] if self.persistence is None else self.persistence

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# One-period equations
# ---------------------------------------------------------------------------


def bank_rates(params: ModelParams, i_dev, ups=0.0, lag_spread=0.0, eps_L=0.0, b_debt_dev=0.0):
    """Lending and deposit rate deviations given the policy-rate deviation.

    Stress, the lagged spread and the debt premium load on the lending rate
    only.
    """
    r_lend = (params.psi_L * i_dev + params.alpha_1 * ups + params.alpha_2 * lag_spread
              + params.risk_b * b_debt_dev + eps_L)
    r_dep = params.psi_D * i_dev
    return r_lend, r_dep


def is_slope(params: ModelParams) -> float:
    """Interest sensitivity of the IS curve, ``(1 - lambda) / sigma_eff``."""
    return (1.0 - params.lambda_lc) / params.sigma_eff


def is_residual(params: ModelParams, y_t, Ey_next, r_lend_t, Epi_next, tau_t=0.0, nw=0.0, h=0.0):
    return (y_t - Ey_next + is_slope(params) * (r_lend_t + tau_t - Epi_next)
            - params.chi_1 * nw - params.chi_2 * h)


def tradables_erpt(params: ModelParams, ds):
    """Sign-split pass-through of an exchange-rate change to tradables inflation."""
    return params.theta_c_plus * np.maximum(ds, 0.0) + params.theta_c_minus * np.minimum(ds, 0.0)


def erpt_contribution(params: ModelParams, ds):
    """CPI contribution of an exchange-rate change (tradables term times share)."""
    return params.vartheta * tradables_erpt(params, ds)


def nkpc_residual(params: ModelParams, pi_t, Epi_next, pi_lag, y_t, ds, cost_push=0.0):
    """Hybrid Phillips curve in quasi-differences,
    ``pi - iota pi_lag = beta (E pi' - iota pi) + kappa xi_mc y + ERPT + cost push``,
    which collapses to the purely forward-looking curve at ``iota = 0``."""
    # marginal cost proxied by xi_mc * output gap
    iota = params.iota_index
    rhs = (params.beta_disc * (Epi_next - iota * pi_t) + params.kappa_nkpc * params.xi_mc * y_t
           + erpt_contribution(params, ds) + cost_push)
    return pi_t - iota * pi_lag - rhs


def taylor_rate(params: ModelParams, pi_t, y_t, eps_i=0.0):
    """Institutional Taylor rule with a zero floor.

    ``pi_t`` is the inflation *level*.  Returns ``(shadow, floored)``.
    """
    shadow = (params.rho_nat + pi_t + params.phi_pi * (pi_t - params.pi_star)
              + params.phi_y * y_t + eps_i)
    return shadow, np.maximum(shadow, 0.0)


def uip_premium(params: ModelParams, d_lsap_for=0.0, ups=0.0, eps_zeta=0.0):
    return params.zeta_0 + params.zeta_qe * d_lsap_for + params.zeta_ups * ups + eps_zeta


def uip_residual(params: ModelParams, Eds_next, i_pol, i_for, zeta):
    """Residual of expected depreciation against the premium-adjusted rate
    differential; the caller keeps all four arguments in common units."""
    return Eds_next - (i_pol - i_for - zeta)


def fxi_apply(params: ModelParams, ds_mkt, xi):
    """Intervention leaning against market pressure ``xi``.

    Returns ``(ds, d_mb)``: the realized exchange-rate change and the
    unsterilized monetary-base contribution.
    """
    ds = ds_mkt - params.kappa_fxi * xi
    d_mb = (1.0 - params.eta_ster) * params.kappa_fxi * xi * params.mb_scale
    return ds, d_mb


def term_premium_step(params: ModelParams, tau_prev, d_lsap=0.0, eps_tau=0.0):
    return tau_prev - params.omega_qe * d_lsap + eps_tau


def structural_adjust(base: ModelParams, d_dollar: float, b_debt: float | None = None, *,
                      m_psi: float = M_PSI, m_kappa: float = M_KAPPA, b_ref: float = B_REF) -> ModelParams:
    """Map dollarization and public debt into transmission parameters.

    Dollarization weakens local lending pass-through and raises FX
    intervention intensity; debt above ``b_ref`` adds a lending-rate premium.
    """
    if not 0.0 <= d_dollar <= 1.0:
        raise InvalidParams(f"d_dollar must lie in [0, 1], got {d_dollar}")
    if b_debt is None:
        b_debt = base.b_debt
    if b_debt < 0.0:
        raise InvalidParams(f"b_debt must be non-negative, got {b_debt}")
    return base.replace(
        psi_L=base.psi_L * (1.0 - m_psi * d_dollar),
        kappa_fxi=min(1.0, base.kappa_fxi + m_kappa * d_dollar),
        lending_premium=base.risk_b * max(0.0, b_debt - b_ref),
        d_dollar=float(d_dollar),
        b_debt=float(b_debt),
    )
