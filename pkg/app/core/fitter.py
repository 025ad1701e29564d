"""Nonlinear least-squares fitting of the piecewise drag-ratio power law.

Two parameterisations are fitted:

* three parameters {a, b, c}: the plain power law a*G^b + c over every point;
  the breakpoint is found afterwards by extrapolating the curve to unity.
* four parameters {a, b, c, G_o}: points below G_o are compared against the
  power branch, points at or beyond it against 1.0. Candidates come from two
  families: tied starts, where c = 1 - a*G_o^b so the branch meets unity at G_o,
  and free-c branch fits for every split of the data at G_o, seeded by the tied
  results. The lowest RSS wins; continuity at G_o is validated afterwards and
  reported, not enforced.

Unbounded fits run a Levenberg-Marquardt loop with Marquardt scaling
(lambda starts at 1e-3, x10 on a rejected step, /10 on an accepted one).
Fits with a box on G_o run scipy's trust-region-reflective solver, whose
iterates stay strictly inside the box.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import least_squares

from app.core.drag_model import drag_ratios, effective_breakpoint
from app.core.errors import InvalidProblem, NoBreakpoint, NonConvergence
from app.core.types import (
    MIN_SERIES_POINTS,
    DragModel,
    MeasurementSeries,
    Position,
    SeriesKind,
    VehicleClass,
    digest,
    validate_model,
)

logger = logging.getLogger(__name__)

LAMBDA_INITIAL = 1e-3
LAMBDA_MAX = 1e16
LAMBDA_MIN = 1e-16
TIE_RTOL = 1e-9
TIE_ATOL = 1e-24
TIE_CAP = 1e-13
SYNTHETIC_RATIO_FLOOR = 0.05
B_GRID = np.concatenate([-np.geomspace(3.0, 0.01, 40), np.geomspace(0.01, 3.0, 40)])


class Tolerance(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gtol: float = Field(default=1e-10, gt=0)
    xtol: float = Field(default=1e-10, gt=0)
    ftol: float = Field(default=1e-10, gt=0)


class InitialGuess(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    a: Optional[float] = None
    b: Optional[float] = None
    c: Optional[float] = None
    g_o_m: Optional[float] = None


class FitProblem(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    data: MeasurementSeries
    include_g_o: bool = True
    g_o_bounds: Optional[Tuple[float, float]] = None
    initial_guess: Optional[InitialGuess] = None
    max_iterations: int = Field(default=200, ge=1)
    tolerance: Tolerance = Tolerance()
    multistart: int = Field(default=8, ge=1)
    multistart_span: float = Field(default=10.0, gt=1)
    # labels carried onto the fitted DragModel
    position: Position = Position.TRAIL
    platoon_size: int = Field(default=2, ge=2)
    vehicle_class: Optional[VehicleClass] = None

    def check(self) -> None:
        if self.data.kind != SeriesKind.DRAG_RATIO:
            raise InvalidProblem("fits need a drag-ratio series; invert fuel data first")
        if self.g_o_bounds is not None:
            lower, upper = self.g_o_bounds
            if not (0 < lower < upper) or not math.isfinite(upper):
                raise InvalidProblem(f"infeasible G_o bounds {self.g_o_bounds}: need 0 < lower < upper")
            guess = self.initial_guess.g_o_m if self.initial_guess else None
            if self.include_g_o and guess is not None and not lower <= guess <= upper:
                raise InvalidProblem(f"initial G_o {guess} lies outside bounds {self.g_o_bounds}")


class FitResult(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: DragModel
    residual_sum_squares: float
    iterations: int
    converged: bool
    active_bounds: List[str] = []
    method: str
    start_g_o_m: Optional[float] = None
    cost_trace: List[float] = []
    iterate_g_o_m: List[float] = []
    invariant_violations: List[str] = []
    data_digest: str = ""


class FitComparison(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    with_g_o: FitResult
    without_g_o: FitResult
    extrapolated_breakpoint_m: Optional[float] = None


# residuals and Jacobians


def power_law_residuals(params, gaps, values) -> np.ndarray:
    a, b, c = params
    return a * np.power(gaps, b) + c - values


def power_law_jacobian(params, gaps, values) -> np.ndarray:
    a, b, _ = params
    powered = np.power(gaps, b)
    return np.column_stack([powered, a * powered * np.log(gaps), np.ones_like(gaps)])


def tied_residuals(params, gaps, values) -> np.ndarray:
    """Residuals of the four-parameter form in (a, b, G_o), c tied by continuity."""
    a, b, g_o = params
    if not g_o > 0:
        return np.full_like(gaps, np.inf)
    below = gaps < g_o
    predicted = np.ones_like(gaps)
    predicted[below] = 1.0 + a * (np.power(gaps[below], b) - g_o ** b)
    return predicted - values


def tied_jacobian(params, gaps, values) -> np.ndarray:
    a, b, g_o = params
    jac = np.zeros((gaps.size, 3))
    below = gaps < g_o
    powered = np.power(gaps[below], b)
    g_powered = g_o ** b
    jac[below, 0] = powered - g_powered
    jac[below, 1] = a * (powered * np.log(gaps[below]) - g_powered * math.log(g_o))
    jac[below, 2] = -a * b * g_o ** (b - 1.0)
    return jac


def tied_c(a: float, b: float, g_o: float) -> float:
    return 1.0 - a * g_o ** b


def objective(model: DragModel, series: MeasurementSeries) -> float:
    """Sum of squared residuals of `model` on `series` (the fitted objective)."""
    gaps, values = series.gaps, series.values
    predicted = model.branch(gaps)
    if model.g_o_m is not None:
        predicted = np.where(gaps < model.g_o_m, predicted, 1.0)
    residuals = predicted - values
    return float(residuals @ residuals)


# Levenberg-Marquardt


@dataclass
class _Outcome:
    params: np.ndarray
    rss: float
    iterations: int
    converged: bool
    reason: str
    trace: List[float] = field(default_factory=list)


def _damped_step(jac: np.ndarray, residuals: np.ndarray, lam: float, scale: np.ndarray) -> Optional[np.ndarray]:
    # min |J d + r|^2 + lam |D d|^2 solved as an augmented least-squares system
    augmented = np.vstack([jac, np.diag(np.sqrt(lam * scale))])
    rhs = np.concatenate([-residuals, np.zeros(scale.size)])
    try:
        step, *_ = np.linalg.lstsq(augmented, rhs, rcond=None)
    except np.linalg.LinAlgError:
        return None
    return step if np.all(np.isfinite(step)) else None


def levenberg_marquardt(residual_fn: Callable, jacobian_fn: Callable, x0, max_iterations: int,
                        tolerance: Tolerance) -> _Outcome:
    x = np.asarray(x0, dtype=float)
    residuals = residual_fn(x)
    if not np.all(np.isfinite(residuals)):
        raise NonConvergence("residuals are not finite at the starting point", {"start": x.tolist()})
    cost = float(residuals @ residuals)
    trace = [cost]
    lam = LAMBDA_INITIAL

    for iteration in range(1, max_iterations + 1):
        jac = jacobian_fn(x)
        gradient = jac.T @ residuals
        if np.max(np.abs(gradient)) <= tolerance.gtol:
            return _Outcome(x, cost, iteration - 1, True, "gtol", trace)

        scale = np.sum(jac * jac, axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        finite_trials = 0
        accepted = None
        while lam <= LAMBDA_MAX:
            step = _damped_step(jac, residuals, lam, scale)
            if step is not None:
                trial = x + step
                trial_residuals = residual_fn(trial)
                if np.all(np.isfinite(trial_residuals)):
                    finite_trials += 1
                    trial_cost = float(trial_residuals @ trial_residuals)
                    if trial_cost < cost:
                        accepted = (step, trial, trial_residuals, trial_cost)
                        break
            lam *= 10.0

        if accepted is None:
            if finite_trials == 0:
                raise NonConvergence(
                    "damped normal equations gave no finite step at any damping level",
                    {"iterations": iteration, "params": x.tolist(), "rss": cost},
                )
            # no damping level decreases the cost: stationary to working precision
            return _Outcome(x, cost, iteration, True, "stalled", trace)

        step, x, residuals, new_cost = accepted
        lam = max(lam / 10.0, LAMBDA_MIN)
        decrease = cost - new_cost
        previous_cost, cost = cost, new_cost
        trace.append(cost)
        if decrease <= tolerance.ftol * previous_cost:
            return _Outcome(x, cost, iteration, True, "ftol", trace)
        if np.linalg.norm(step) <= tolerance.xtol * (np.linalg.norm(x) + tolerance.xtol):
            return _Outcome(x, cost, iteration, True, "xtol", trace)

    return _Outcome(x, cost, max_iterations, False, "max_iterations", trace)


# deterministic seeds


def seed_power_law(gaps: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Best (a, b, c) over an exponent grid, solving (a, c) by linear least squares per b."""
    best, best_rss = None, np.inf
    for b in B_GRID:
        design = np.column_stack([np.power(gaps, b), np.ones_like(gaps)])
        coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
        residuals = design @ coeffs - values
        rss = float(residuals @ residuals)
        if rss < best_rss:
            best, best_rss = (coeffs[0], b, coeffs[1]), rss
    return np.array(best, dtype=float)


def seed_tied(gaps: np.ndarray, values: np.ndarray, g_o: float) -> Optional[np.ndarray]:
    """Best (a, b) for a fixed G_o over the exponent grid; a is closed-form per b."""
    below = gaps < g_o
    if not np.any(below):
        return None
    target = values - 1.0
    fixed_rss = float(target[~below] @ target[~below])
    best, best_rss = None, np.inf
    for b in B_GRID:
        basis = np.power(gaps[below], b) - g_o ** b
        norm = float(basis @ basis)
        if norm == 0 or not math.isfinite(norm):
            continue
        a = float(basis @ target[below]) / norm
        residuals = a * basis - target[below]
        rss = float(residuals @ residuals) + fixed_rss
        if rss < best_rss:
            best, best_rss = (a, b, g_o), rss
    return None if best is None else np.array(best, dtype=float)


# public fitting operations


def _label(problem: FitProblem, a: float, b: float, c: float, g_o: Optional[float], source: str) -> DragModel:
    return DragModel(
        a=float(a), b=float(b), c=float(c), g_o_m=None if g_o is None else float(g_o),
        position=problem.position, platoon_size=problem.platoon_size,
        vehicle_class=problem.vehicle_class, source=source,
    )


def _result(problem: FitProblem, model: DragModel, iterations: int, converged: bool, method: str,
            **extra) -> FitResult:
    return FitResult(
        model=model,
        residual_sum_squares=objective(model, problem.data),
        iterations=iterations,
        converged=converged,
        method=method,
        invariant_violations=validate_model(model),
        data_digest=digest(problem.data),
        **extra,
    )


def _warn_violations(result: FitResult) -> None:
    if result.invariant_violations:
        logger.warning(f"⚠️ Fitted model violates invariants: {'; '.join(result.invariant_violations)}")


def branch_root(a: float, b: float, c: float) -> Optional[float]:
    """Gap where a*G^b + c = 1 in closed form; None when the branch never reaches unity."""
    if a == 0 or b == 0:
        return None
    base = (1.0 - c) / a
    if not base > 0:
        return None
    try:
        root = base ** (1.0 / b)
    except OverflowError:
        return None
    return root if math.isfinite(root) and root > 0 else None


def _power_law_start(problem: FitProblem, gaps: np.ndarray, values: np.ndarray) -> np.ndarray:
    guess = problem.initial_guess
    if guess is not None and None not in (guess.a, guess.b, guess.c):
        return np.array([guess.a, guess.b, guess.c], dtype=float)
    return seed_power_law(gaps, values)


def _solve_power_law(gaps: np.ndarray, values: np.ndarray, x0, problem: FitProblem) -> _Outcome:
    return levenberg_marquardt(
        lambda p: power_law_residuals(p, gaps, values),
        lambda p: power_law_jacobian(p, gaps, values),
        x0, problem.max_iterations, problem.tolerance,
    )


def _solve_power_law_trf(gaps: np.ndarray, values: np.ndarray, x0, problem: FitProblem) -> _Outcome:
    tol = problem.tolerance
    try:
        solution = least_squares(
            lambda p: power_law_residuals(p, gaps, values), x0,
            jac=lambda p: power_law_jacobian(p, gaps, values),
            method="trf", x_scale="jac", xtol=tol.xtol, ftol=tol.ftol, gtol=tol.gtol,
            max_nfev=problem.max_iterations,
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NonConvergence(f"branch fit failed: {exc}", {"start": np.asarray(x0, dtype=float).tolist()}) from exc
    if solution.status < 0 or not np.all(np.isfinite(solution.x)):
        raise NonConvergence("branch fit failed", {"status": int(solution.status)})
    rss = float(solution.fun @ solution.fun)
    return _Outcome(solution.x, rss, int(solution.nfev), solution.status > 0, solution.message, [rss])


def _fit_power_law(problem: FitProblem) -> FitResult:
    gaps, values = problem.data.gaps, problem.data.values
    outcome = _solve_power_law(gaps, values, _power_law_start(problem, gaps, values), problem)
    a, b, c = outcome.params
    logger.debug(f"Three-parameter fit: a={a:.6g} b={b:.6g} c={c:.6g} rss={outcome.rss:.4e} ({outcome.reason})")
    model = _label(problem, a, b, c, None, "levenberg-marquardt fit, G_o excluded")
    return _result(problem, model, outcome.iterations, outcome.converged, "levenberg-marquardt",
                   cost_trace=outcome.trace)


def _extrapolated_start(problem: FitProblem) -> Optional[Tuple[float, np.ndarray]]:
    """(G_o, x0) from a three-parameter fit extrapolated to unity."""
    try:
        three = _fit_power_law(problem.model_copy(update={"include_g_o": False, "g_o_bounds": None}))
        root = branch_root(three.model.a, three.model.b, three.model.c)
        if root is None:
            root = effective_breakpoint(three.model)
    except (NoBreakpoint, NonConvergence) as exc:
        logger.debug(f"No extrapolated breakpoint for seeding: {exc}")
        return None
    if problem.g_o_bounds is not None:
        root = float(np.clip(root, *problem.g_o_bounds))
    return root, np.array([three.model.a, three.model.b, root], dtype=float)


def _tied_starts(problem: FitProblem, grid: List[float]) -> List[Tuple[float, np.ndarray]]:
    gaps, values = problem.data.gaps, problem.data.values
    starts = []
    for g_o in grid:
        x0 = seed_tied(gaps, values, g_o)
        if x0 is not None:
            starts.append((float(g_o), x0))
    extrapolated = _extrapolated_start(problem)
    if extrapolated is not None:
        starts.append(extrapolated)
    guess = problem.initial_guess
    if guess is not None and guess.g_o_m is not None and guess.g_o_m > 0:
        if guess.a is not None and guess.b is not None:
            starts.append((guess.g_o_m, np.array([guess.a, guess.b, guess.g_o_m], dtype=float)))
        else:
            x0 = seed_tied(gaps, values, guess.g_o_m)
            if x0 is not None:
                starts.append((guess.g_o_m, x0))
    return starts


def _select(results: List[FitResult]) -> FitResult:
    """Lowest RSS; among ties the smallest G_o."""
    best_rss = min(r.residual_sum_squares for r in results)
    slack = min(best_rss * TIE_RTOL + TIE_ATOL, TIE_CAP)
    tied = [r for r in results if r.residual_sum_squares <= best_rss + slack]
    return min(tied, key=lambda r: r.model.g_o_m)


def _branch_count(gaps: np.ndarray, g_o: float) -> int:
    return int(np.count_nonzero(gaps < g_o))


def _place_breakpoint(root: Optional[float], last_branch_gap: float, first_unity_gap: float,
                      bounds: Optional[Tuple[float, float]]) -> Optional[Tuple[float, Optional[str]]]:
    """G_o for a free-c branch fitted to every gap up to `last_branch_gap`.

    Any G_o in (last_branch_gap, first_unity_gap] gives the same residuals; the one
    nearest the branch root is taken, just above `last_branch_gap` when the branch
    never reaches unity. Returns None when that interval misses the bounds, else
    (G_o, name of the bound it rests on).
    """
    lowest = float(np.nextafter(last_branch_gap, np.inf))
    highest = first_unity_gap
    lower, upper = bounds if bounds is not None else (-np.inf, np.inf)
    lowest, highest = max(lowest, lower), min(highest, upper)
    if lowest > highest:
        return None
    wanted = lowest if root is None else root
    g_o = min(max(wanted, lowest), highest)
    if g_o == upper and wanted > upper:
        return g_o, "g_o_upper"
    if g_o == lower and wanted < lower:
        return g_o, "g_o_lower"
    return g_o, None


def _free_branch_fits(problem: FitProblem, seeds: Dict[int, List[np.ndarray]], best_rss: float,
                      method: str, solver: Callable[..., _Outcome]) -> List[FitResult]:
    """Four-parameter candidates with c free, one per split of the data at G_o.

    Points below G_o are fitted by the three-parameter branch, points at or beyond
    it contribute (1 - ratio)^2 whatever the branch. Splits run from every point on
    the branch downwards and stop once the unity points alone cost more than the
    best fit so far. The all-points split is seeded exactly like the G_o-excluded
    fit, so including G_o never fits worse.
    """
    gaps, values = problem.data.gaps, problem.data.values
    n = gaps.size
    bounds = problem.g_o_bounds
    results = []
    unity_cost = 0.0
    for k in range(n, MIN_SERIES_POINTS - 1, -1):
        if k < n:
            unity_cost += (1.0 - values[k]) ** 2
            if unity_cost > best_rss:
                break
        first_unity_gap = float(gaps[k]) if k < n else np.inf
        if bounds is not None and (first_unity_gap < bounds[0] or gaps[k - 1] >= bounds[1]):
            continue
        branch_gaps, branch_values = gaps[:k], values[:k]
        starts = [_power_law_start(problem, branch_gaps, branch_values)] + seeds.get(k, [])
        outcomes = []
        for x0 in starts:
            try:
                outcomes.append(solver(branch_gaps, branch_values, x0, problem))
            except NonConvergence as exc:
                logger.debug(f"Branch fit on {k} points failed: {exc}")
        if not outcomes:
            continue
        outcome = min(outcomes, key=lambda o: o.rss)
        a, b, c = outcome.params
        placed = _place_breakpoint(branch_root(a, b, c), float(gaps[k - 1]), first_unity_gap, bounds)
        if placed is None:
            continue
        g_o, active = placed
        model = _label(problem, a, b, c, g_o, f"{method} fit, G_o included, c free")
        result = _result(problem, model, outcome.iterations, outcome.converged, method,
                         active_bounds=[active] if active else [], cost_trace=outcome.trace)
        best_rss = min(best_rss, result.residual_sum_squares)
        results.append(result)
        logger.debug(f"Branch on {k} points -> G_o={g_o:.6g}, rss={result.residual_sum_squares:.4e}")
    return results


def _seeds_by_split(results: List[FitResult], gaps: np.ndarray) -> Dict[int, List[np.ndarray]]:
    seeds: Dict[int, List[np.ndarray]] = {}
    for result in results:
        model = result.model
        seeds.setdefault(_branch_count(gaps, model.g_o_m), []).append(np.array([model.a, model.b, model.c]))
    return seeds


def fit_unconstrained(problem: FitProblem) -> FitResult:
    """Levenberg-Marquardt fit; with G_o included, a multistart over G_o.

    Tied starts (c = 1 - a*G_o^b) seed the free-c branch fits; every candidate
    competes on RSS. Continuity at G_o is reported in `invariant_violations`.
    """
    problem.check()
    if problem.g_o_bounds is not None:
        raise InvalidProblem("fit_unconstrained takes no G_o bounds; use fit_bounded")
    if not problem.include_g_o:
        result = _fit_power_law(problem)
        logger.info(f"✅ Fit (G_o excluded): rss={result.residual_sum_squares:.4e}, converged={result.converged}")
        return result

    gaps, values = problem.data.gaps, problem.data.values
    max_gap = float(gaps.max())
    grid = list(np.geomspace(max_gap, problem.multistart_span * max_gap, problem.multistart))

    results, failures = [], []
    for start_g_o, x0 in _tied_starts(problem, grid):
        try:
            outcome = levenberg_marquardt(
                lambda p: tied_residuals(p, gaps, values),
                lambda p: tied_jacobian(p, gaps, values),
                x0, problem.max_iterations, problem.tolerance,
            )
        except NonConvergence as exc:
            logger.debug(f"Start G_o={start_g_o:.4g} failed: {exc}")
            failures.append(exc.diagnostics)
            continue
        a, b, g_o = outcome.params
        model = _label(problem, a, b, tied_c(a, b, g_o), g_o, "levenberg-marquardt fit, G_o included")
        results.append(_result(problem, model, outcome.iterations, outcome.converged, "levenberg-marquardt",
                               start_g_o_m=float(start_g_o), cost_trace=outcome.trace))
        logger.debug(f"Start G_o={start_g_o:.4g} -> G_o={g_o:.6g}, rss={outcome.rss:.4e} ({outcome.reason})")

    best_rss = min((r.residual_sum_squares for r in results), default=np.inf)
    results += _free_branch_fits(problem, _seeds_by_split(results, gaps), best_rss, "levenberg-marquardt",
                                 _solve_power_law)
    if not results:
        raise NonConvergence("every multistart branch failed", {"failures": failures})
    best = _select(results)
    _warn_violations(best)
    logger.info(
        f"✅ Fit (G_o included): G_o={best.model.g_o_m:.4f} m, rss={best.residual_sum_squares:.4e}, "
        f"{len(results)} candidates, converged={best.converged}"
    )
    return best


def _active_bound(solution, lower: float, upper: float) -> Optional[float]:
    """The G_o bound the solution rests on, if any.

    Interior-point iterates approach a bound without touching it, so a solution
    within 1e-3 of the box width counts as active when the cost still falls
    outward.
    """
    g_o = float(solution.x[2])
    slope = float(solution.grad[2])
    near = 1e-3 * (upper - lower)
    if solution.active_mask[2] == 1 or (upper - g_o <= near and slope <= 0):
        return upper
    if solution.active_mask[2] == -1 or (g_o - lower <= near and slope >= 0):
        return lower
    return None


def _refit_at_breakpoint(a: float, b: float, g_o: float, gaps: np.ndarray, values: np.ndarray,
                         problem: FitProblem) -> Tuple[float, float]:
    """Re-solve (a, b) with G_o held on its bound."""
    try:
        outcome = levenberg_marquardt(
            lambda p: tied_residuals([p[0], p[1], g_o], gaps, values),
            lambda p: tied_jacobian([p[0], p[1], g_o], gaps, values)[:, :2],
            [a, b], problem.max_iterations, problem.tolerance,
        )
    except NonConvergence:
        return a, b
    return float(outcome.params[0]), float(outcome.params[1])


def fit_bounded(problem: FitProblem) -> FitResult:
    """Four-parameter fit with lower <= G_o <= upper (trust-region-reflective).

    `iterate_g_o_m` of the result holds every G_o the solver evaluated, over all
    starts, as evaluated.
    """
    problem.check()
    if problem.g_o_bounds is None or not problem.include_g_o:
        raise InvalidProblem("fit_bounded needs G_o included and G_o bounds")
    lower, upper = problem.g_o_bounds
    gaps, values = problem.data.gaps, problem.data.values
    tol = problem.tolerance

    grid = list(np.geomspace(lower, upper, problem.multistart))

    results, failures = [], []
    iterates: List[float] = []

    def residual_fn(p):
        iterates.append(float(p[2]))
        return tied_residuals(p, gaps, values)

    for start_g_o, x0 in _tied_starts(problem, grid):
        try:
            solution = least_squares(
                residual_fn, x0, jac=lambda p: tied_jacobian(p, gaps, values),
                bounds=([-np.inf, -np.inf, lower], [np.inf, np.inf, upper]),
                method="trf", x_scale="jac", xtol=tol.xtol, ftol=tol.ftol, gtol=tol.gtol,
                max_nfev=problem.max_iterations,
            )
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.debug(f"Bounded start G_o={start_g_o:.4g} failed: {exc}")
            failures.append({"start": float(start_g_o), "error": str(exc)})
            continue
        if solution.status < 0 or not np.all(np.isfinite(solution.x)):
            failures.append({"start": float(start_g_o), "status": int(solution.status)})
            continue

        a, b, g_o = solution.x
        active = set()
        bound = _active_bound(solution, lower, upper)
        if bound is not None:
            active.add("g_o_upper" if bound == upper else "g_o_lower")
            a, b = _refit_at_breakpoint(a, b, bound, gaps, values, problem)
            g_o = bound
        model = _label(problem, a, b, tied_c(a, b, g_o), g_o, "trust-region-reflective fit, G_o bounded")
        results.append(_result(problem, model, int(solution.nfev), solution.status > 0, "trust-region-reflective",
                               active_bounds=sorted(active), start_g_o_m=float(start_g_o)))

    best_rss = min((r.residual_sum_squares for r in results), default=np.inf)
    results += _free_branch_fits(problem, _seeds_by_split(results, gaps), best_rss, "trust-region-reflective",
                                 _solve_power_law_trf)
    if not results:
        raise NonConvergence("every bounded multistart branch failed", {"failures": failures})
    best = _select(results).model_copy(update={"iterate_g_o_m": iterates})
    _warn_violations(best)
    logger.info(
        f"✅ Bounded fit: G_o={best.model.g_o_m:.4f} m in [{lower}, {upper}], "
        f"active={best.active_bounds or 'none'}, rss={best.residual_sum_squares:.4e}"
    )
    return best


def fit(problem: FitProblem) -> FitResult:
    if problem.g_o_bounds is not None:
        return fit_bounded(problem)
    return fit_unconstrained(problem)


def extrapolated_breakpoint(result_without_g_o: FitResult) -> float:
    """Gap where a three-parameter fit reaches unity."""
    if result_without_g_o.model.g_o_m is not None:
        raise InvalidProblem("extrapolated_breakpoint expects a fit with G_o excluded")
    return effective_breakpoint(result_without_g_o.model)


def compare_fits(problem: FitProblem) -> FitComparison:
    """Fit the same data with and without G_o and report both."""
    with_g_o = fit(problem.model_copy(update={"include_g_o": True}))
    without_g_o = fit_unconstrained(problem.model_copy(update={"include_g_o": False, "g_o_bounds": None}))
    try:
        breakpoint_m = extrapolated_breakpoint(without_g_o)
    except NoBreakpoint:
        breakpoint_m = None
    return FitComparison(with_g_o=with_g_o, without_g_o=without_g_o, extrapolated_breakpoint_m=breakpoint_m)


def tie_to_breakpoint(model: DragModel) -> DragModel:
    """Same a and b, with G_o resolved and c = 1 - a*G_o^b so the branch meets unity at G_o."""
    breakpoint_m = effective_breakpoint(model)
    return model.model_copy(update={"c": tied_c(model.a, model.b, breakpoint_m), "g_o_m": breakpoint_m})


def _lowest_sample_gap(model: DragModel, lo_m: float) -> float:
    # steep branches go negative near zero gap; start where the ratio reaches the floor
    if model.branch(lo_m) >= SYNTHETIC_RATIO_FLOOR:
        return lo_m
    base = (SYNTHETIC_RATIO_FLOOR - model.c) / model.a
    return max(lo_m, base ** (1.0 / model.b)) if base > 0 else lo_m


def synthetic_series(model: DragModel, n: int = 20, lo_frac: float = 0.05, hi_frac: float = 0.9,
                     noise_sigma: float = 0.0, seed: Optional[int] = None) -> MeasurementSeries:
    """`n` samples of `model` on (lo_frac*G_o, hi_frac*G_o], optionally with Gaussian noise.

    The lower end is raised to where the branch reaches SYNTHETIC_RATIO_FLOOR
    when the branch is below it at lo_frac*G_o.
    """
    breakpoint_m = effective_breakpoint(model)
    lo_m = _lowest_sample_gap(model, lo_frac * breakpoint_m)
    gaps = np.linspace(lo_m, hi_frac * breakpoint_m, n + 1)[1:]
    values = drag_ratios(model, gaps)
    if noise_sigma > 0:
        values = values + np.random.default_rng(seed).normal(0.0, noise_sigma, size=values.size)
    return MeasurementSeries(
        kind=SeriesKind.DRAG_RATIO,
        points=list(zip(gaps.tolist(), values.tolist())),
        source=f"synthetic from a={model.a}, b={model.b}, c={model.c}, G_o={breakpoint_m:.6g}"
               + (f", sigma={noise_sigma}, seed={seed}" if noise_sigma > 0 else ""),
    )
