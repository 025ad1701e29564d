"""Piecewise drag-ratio evaluation and breakpoint resolution."""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import bisect

from app.config import get_config
from app.core.errors import DomainError, NoBreakpoint
from app.core.types import DragModel, VehicleSpec

logger = logging.getLogger(__name__)


def _check_gap(gap_m: float) -> None:
    if not math.isfinite(gap_m) or gap_m <= 0:
        raise DomainError(f"gap must be a positive finite distance, got {gap_m}")


def effective_breakpoint(model: DragModel, bracket: Optional[Tuple[float, float]] = None,
                         xtol: Optional[float] = None) -> float:
    """G_o when recorded, otherwise the root of a*G^b + c = 1 inside `bracket`.

    The bracket and tolerance default to `breakpoint_bracket_m` and `breakpoint_xtol_m`
    of the configuration.
    """
    if model.g_o_m is not None:
        return float(model.g_o_m)
    config = get_config()
    bracket = bracket or tuple(config.breakpoint_bracket_m)
    xtol = xtol or config.breakpoint_xtol_m

    def excess(gap):
        return model.a * gap ** model.b + model.c - 1.0

    lo, hi = bracket
    f_lo, f_hi = excess(lo), excess(hi)
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)):
        raise NoBreakpoint(f"branch is not finite on [{lo}, {hi}] m")
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise NoBreakpoint(
            f"a*G^b + c never reaches 1 on [{lo}, {hi}] m "
            f"(a={model.a}, b={model.b}, c={model.c})"
        )
    root = bisect(excess, lo, hi, xtol=xtol)
    logger.debug(f"Breakpoint resolved by bisection: {root:.6f} m")
    return float(root)


def drag_ratio(model: DragModel, gap_m: float) -> float:
    """C_D / C_D-infinity at `gap_m`; exactly 1.0 from the breakpoint on."""
    _check_gap(gap_m)
    if gap_m >= effective_breakpoint(model):
        return 1.0
    return min(float(model.branch(gap_m)), 1.0)


def drag_ratios(model: DragModel, gaps_m) -> np.ndarray:
    """Vectorised `drag_ratio`; the breakpoint is resolved once."""
    gaps = np.asarray(gaps_m, dtype=float)
    if np.any(~np.isfinite(gaps)) or np.any(gaps <= 0):
        raise DomainError("gaps must be positive finite distances")
    breakpoint_m = effective_breakpoint(model)
    below = gaps < breakpoint_m
    ratios = np.ones_like(gaps)
    ratios[below] = np.minimum(model.branch(gaps[below]), 1.0)
    return ratios


def drag_coefficient(spec: VehicleSpec, model: DragModel, gap_m: float) -> float:
    return spec.cd_infinity * drag_ratio(model, gap_m)
