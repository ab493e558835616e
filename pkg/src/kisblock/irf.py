"""Impulse responses, peak statistics and sacrifice ratios."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import model as mc
from .errors import NonConvergence, ZeroDenominator
from .model import ModelParams, ShockSpec
from .solver import SolveConfig, SolveReport, StatePath, solve_path

# An extremum counts as reached once within this fraction of its final size;
# this dates plateaus (e.g. the price level) at the start of the plateau.
PEAK_RTOL = 0.01


@dataclass(frozen=True)
class IrfSummary:
    peak_y: float
    peak_y_period: int
    peak_p: float
    peak_p_period: int
    sacrifice_ratio: float | None
    half_life: int | None

    def to_dict(self) -> dict:
        return asdict(self)


def signed_peak(x: np.ndarray, rtol: float = PEAK_RTOL) -> tuple[float, int]:
    """Signed extremum of largest magnitude and the first period at which the
    series comes within ``rtol`` of it (same sign)."""
    x = np.asarray(x, dtype=float)
    k = int(np.argmax(np.abs(x)))
    peak = float(x[k])
    if peak == 0.0:
        return 0.0, 0
    reached = np.nonzero(np.sign(x) == np.sign(peak))[0]
    reached = reached[np.abs(x[reached]) >= (1.0 - rtol) * abs(peak)]
    return peak, int(reached[0])


def half_life(x: np.ndarray, peak_period: int) -> int | None:
    """Quarters after the peak until ``|x|`` first falls below half its peak."""
    x = np.asarray(x, dtype=float)
    peak = abs(x[int(np.argmax(np.abs(x)))])
    if peak == 0.0:
        return None
    after = np.nonzero(np.abs(x[peak_period:]) < 0.5 * peak)[0]
    return int(after[0]) if after.size else None


def sacrifice_ratio(peak_y: float, peak_p: float) -> float:
    """Output cost per unit of price-level reduction, ``|peak_y| / |peak_p|``."""
    if peak_p == 0.0:
        raise ZeroDenominator("sacrifice ratio undefined: zero price-level effect")
    return abs(peak_y) / abs(peak_p)


def summarize(path: StatePath, rtol: float = PEAK_RTOL) -> IrfSummary:
    peak_y, ty = signed_peak(path.y_gap, rtol)
    peak_p, tp = signed_peak(path.price_level, rtol)
    sr = sacrifice_ratio(peak_y, peak_p) if peak_y != 0.0 and peak_p != 0.0 else None
    return IrfSummary(peak_y=peak_y, peak_y_period=ty, peak_p=peak_p, peak_p_period=tp,
                      sacrifice_ratio=sr, half_life=half_life(path.y_gap, ty))


def run_irf(params: ModelParams, shock: ShockSpec | list[ShockSpec] | None,
            cfg: SolveConfig | None = None) -> tuple[StatePath, IrfSummary, SolveReport]:
    """Solve the perfect-foresight response to ``shock`` and summarize it.

    Raises :class:`NonConvergence` if the solver hits its iteration cap.
    """
    if shock is None:
        shocks: list[ShockSpec] = []
    elif isinstance(shock, ShockSpec):
        shocks = [shock]
    else:
        shocks = list(shock)
    path, report = solve_path(params, shocks, cfg)
    if not report.converged:
        raise NonConvergence(
            f"IRF solve stopped after {report.iterations} iterations with residual "
            f"{report.final_residual_norm:.3e}", report)
    return path, summarize(path), report


def policy_irf(params: ModelParams, size: float = 1.0, cfg: SolveConfig | None = None):
    """Response to a ``size`` percentage-point policy-rate innovation at t=0."""
    return run_irf(params, ShockSpec("policy", size), cfg)


def analytic_impact_traction(params: ModelParams) -> tuple[float, float]:
    """Proportional proxies for the output and inflation sensitivities to the
    policy rate: ``((1-lambda)/sigma_eff * psi_L, phi_pi*kappa*xi_mc + vartheta*theta_bar)``.

    These are comparative-statics devices, not predictions of simulated peaks.
    """
    beta_y = mc.is_slope(params) * params.psi_L
    beta_pi = params.phi_pi * params.kappa_nkpc * params.xi_mc + params.vartheta * params.theta_bar
    return beta_y, beta_pi
