"""Tests for the power-law fitter: derivatives, recovery, bounds and failure modes."""

import itertools

import numpy as np
import pytest

from app.core import fitter
from app.core.data_loader import load_series
from app.core.drag_model import drag_ratios
from app.core.errors import InvalidProblem, NonConvergence
from app.core.fitter import (
    FitProblem,
    InitialGuess,
    Tolerance,
    compare_fits,
    extrapolated_breakpoint,
    fit,
    fit_bounded,
    fit_unconstrained,
    levenberg_marquardt,
    objective,
    power_law_jacobian,
    power_law_residuals,
    synthetic_series,
    tie_to_breakpoint,
    tied_jacobian,
    tied_residuals,
)
from app.core.inversion import series_fuel_to_drag
from app.core.types import (
    CONTINUITY_TOLERANCE,
    DragModel,
    MeasurementSeries,
    Position,
    SeriesKind,
    VehicleClass,
    continuity_error,
)

PUBLISHED_ROWS = [
    (vehicle_class, size, position)
    for vehicle_class, (size, position) in itertools.product(
        VehicleClass,
        [(2, Position.LEAD), (2, Position.TRAIL), (3, Position.LEAD), (3, Position.MIDDLE), (3, Position.TRAIL)],
    )
]
JACOBIAN_GAPS = np.linspace(1.0, 50.0, 20)


def _central_differences(residual_fn, params, gaps):
    params = np.asarray(params, dtype=float)
    columns = []
    for j in range(params.size):
        h = 1e-6 * max(1.0, abs(params[j]))
        up, down = params.copy(), params.copy()
        up[j] += h
        down[j] -= h
        columns.append((residual_fn(up, gaps, np.zeros_like(gaps)) - residual_fn(down, gaps, np.zeros_like(gaps))) / (2 * h))
    return np.column_stack(columns)


def test_power_law_jacobian_matches_central_differences():
    rng = np.random.default_rng(11)
    for _ in range(100):
        params = [rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), rng.uniform(-1, 2)]
        analytic = power_law_jacobian(params, JACOBIAN_GAPS, np.zeros_like(JACOBIAN_GAPS))
        numeric = _central_differences(power_law_residuals, params, JACOBIAN_GAPS)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6)


def test_tied_jacobian_matches_central_differences():
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 100:
        g_o = rng.uniform(5.0, 80.0)
        if np.min(np.abs(JACOBIAN_GAPS - g_o)) < 0.05:
            continue  # the residual has a kink at each sample gap
        params = [rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), g_o]
        analytic = tied_jacobian(params, JACOBIAN_GAPS, np.zeros_like(JACOBIAN_GAPS))
        numeric = _central_differences(tied_residuals, params, JACOBIAN_GAPS)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6)
        checked += 1


def test_tied_residuals_are_infinite_for_non_positive_breakpoint():
    assert np.all(np.isinf(tied_residuals([1.0, 0.5, -1.0], JACOBIAN_GAPS, np.ones_like(JACOBIAN_GAPS))))


@pytest.mark.parametrize("key", PUBLISHED_ROWS, ids=lambda k: f"{k[0].value}-{k[1]}-{k[2].value}")
def test_noiseless_recovery_of_published_models(catalog, key):
    truth = tie_to_breakpoint(catalog.models[key])
    result = fit_unconstrained(FitProblem(data=synthetic_series(truth), position=key[2], platoon_size=key[1],
                                          vehicle_class=key[0]))
    fitted = result.model
    for name in ("a", "b", "c"):
        scale = max(abs(getattr(truth, name)), 1e-3)
        assert abs(getattr(fitted, name) - getattr(truth, name)) / scale <= 1e-3, name
    assert fitted.g_o_m == pytest.approx(truth.g_o_m, rel=1e-2)
    assert result.converged
    assert fitted.position == key[2] and fitted.platoon_size == key[1] and fitted.vehicle_class == key[0]


def _recovered_curve(truth, fitted, gaps):
    return np.max(np.abs(drag_ratios(fitted, gaps) - drag_ratios(truth, gaps)) / drag_ratios(truth, gaps))


@pytest.mark.parametrize("key", PUBLISHED_ROWS, ids=lambda k: f"{k[0].value}-{k[1]}-{k[2].value}")
def test_noisy_recovery_of_every_published_curve(catalog, key):
    truth = tie_to_breakpoint(catalog.models[key])
    for seed in range(20):
        series = synthetic_series(truth, noise_sigma=0.005, seed=seed)
        result = fit_unconstrained(FitProblem(data=series))
        assert _recovered_curve(truth, result.model, series.gaps) <= 0.1, seed


# rows whose branch crosses unity steeply enough for G_o to be identified under noise
IDENTIFIABLE_BREAKPOINTS = [
    (VehicleClass.BUS, 2, Position.TRAIL),
    (VehicleClass.BUS, 3, Position.TRAIL),
    (VehicleClass.HDT, 2, Position.LEAD),
    (VehicleClass.HDT, 3, Position.TRAIL),
]


@pytest.mark.parametrize("key", IDENTIFIABLE_BREAKPOINTS, ids=lambda k: f"{k[0].value}-{k[1]}-{k[2].value}")
def test_noisy_recovery_of_the_breakpoint(catalog, key):
    truth = tie_to_breakpoint(catalog.models[key])
    recovered = 0
    for seed in range(50):
        series = synthetic_series(truth, noise_sigma=0.005, seed=seed)
        result = fit_unconstrained(FitProblem(data=series))
        if abs(result.model.g_o_m - truth.g_o_m) <= 0.1 * truth.g_o_m:
            recovered += 1
    assert recovered >= 45


def test_synthetic_series_is_deterministic_per_seed(bus2_trail):
    first = synthetic_series(bus2_trail, noise_sigma=0.005, seed=3)
    assert first == synthetic_series(bus2_trail, noise_sigma=0.005, seed=3)
    assert first != synthetic_series(bus2_trail, noise_sigma=0.005, seed=4)


def test_synthetic_series_starts_where_steep_branches_are_positive(catalog):
    model = catalog.model(VehicleClass.LDV, 2, Position.LEAD)
    series = synthetic_series(model)
    assert len(series.points) == 20
    assert series.values.min() >= 0.05
    assert series.gaps.max() == pytest.approx(0.9 * 7.910306, rel=1e-6)


def test_including_the_breakpoint_never_fits_worse(catalog, env):
    datasets = {name: catalog.dataset(name) for name in ("ldv2_trail", "ldv2_lead", "bus2_trail")}
    datasets["hdt2_trail_fuel"] = _inverted_hdt2_trail(catalog, env)
    for name, series in datasets.items():
        comparison = compare_fits(FitProblem(data=series))
        assert (comparison.with_g_o.residual_sum_squares
                <= comparison.without_g_o.residual_sum_squares + 1e-12), name


def _levelling_below_unity():
    gaps = np.linspace(2.0, 40.0, 15)
    return MeasurementSeries(kind=SeriesKind.DRAG_RATIO, points=list(zip(gaps.tolist(), (0.95 - 0.5 / gaps).tolist())))


def test_data_levelling_off_below_unity_fits_as_well_with_the_breakpoint():
    series = _levelling_below_unity()
    without = fit_unconstrained(FitProblem(data=series, include_g_o=False))
    with_g_o = fit_unconstrained(FitProblem(data=series))
    assert with_g_o.residual_sum_squares <= without.residual_sum_squares + 1e-12
    assert with_g_o.residual_sum_squares == pytest.approx(0.0, abs=1e-12)
    assert with_g_o.model.c == pytest.approx(0.95, rel=1e-6)
    assert with_g_o.model.g_o_m == pytest.approx(40.0, rel=1e-9)


def test_continuity_breach_is_reported_not_enforced():
    result = fit_unconstrained(FitProblem(data=_levelling_below_unity()))
    assert any(v.startswith("g_o_m: branch at G_o is off unity") for v in result.invariant_violations)
    assert result.model.branch(result.model.g_o_m) == pytest.approx(0.9375, abs=1e-6)


def test_breakpoint_between_branch_and_unity_points():
    # branch samples to 40 m, isolated drag measured at 60 m
    truth = DragModel(a=-1.7834, b=-0.070129, c=2.3614, position=Position.TRAIL, platoon_size=2)
    gaps = np.arange(2.0, 42.0, 2.0)
    points = list(zip(gaps.tolist(), truth.branch(gaps).tolist())) + [(60.0, 1.0)]
    series = MeasurementSeries(kind=SeriesKind.DRAG_RATIO, points=points)
    comparison = compare_fits(FitProblem(data=series))
    assert comparison.with_g_o.model.g_o_m == pytest.approx(47.0, rel=1e-3)
    assert comparison.with_g_o.invariant_violations == []
    assert comparison.with_g_o.residual_sum_squares < 1e-12
    assert comparison.without_g_o.residual_sum_squares > 1e-4
    assert comparison.extrapolated_breakpoint_m == pytest.approx(50.3, rel=1e-2)


def test_breakpoint_beyond_the_data_matches_the_extrapolated_one(catalog):
    # with every sample below G_o the two forms describe the same curves
    for name in ("ldv2_trail", "bus2_trail"):
        comparison = compare_fits(FitProblem(data=catalog.dataset(name)))
        assert comparison.extrapolated_breakpoint_m == pytest.approx(comparison.with_g_o.model.g_o_m, rel=1e-3)


def test_two_ldv_trail_residuals_are_rounding_sized(catalog):
    comparison = compare_fits(FitProblem(data=catalog.dataset("ldv2_trail")))
    assert 0.6387e-9 <= comparison.with_g_o.residual_sum_squares <= 0.6387e-7
    assert 0.7734e-9 <= comparison.without_g_o.residual_sum_squares <= 0.7734e-7
    assert comparison.with_g_o.model.g_o_m == pytest.approx(47.0, rel=0.1)


def test_reported_rss_is_the_objective(catalog):
    series = catalog.dataset("bus2_trail")
    result = fit_unconstrained(FitProblem(data=series))
    assert result.residual_sum_squares == pytest.approx(objective(result.model, series), rel=1e-12)
    assert result.data_digest
    assert result.method == "levenberg-marquardt"


def test_cost_trace_never_increases(catalog):
    result = fit_unconstrained(FitProblem(data=catalog.dataset("ldv2_trail"), include_g_o=False))
    assert result.cost_trace
    assert all(later <= earlier for earlier, later in zip(result.cost_trace, result.cost_trace[1:]))
    assert result.iterations <= 200


def test_extrapolated_breakpoint_needs_an_excluded_fit(catalog):
    series = catalog.dataset("ldv2_trail")
    without = fit_unconstrained(FitProblem(data=series, include_g_o=False))
    assert without.model.g_o_m is None
    assert extrapolated_breakpoint(without) == pytest.approx(47.0, rel=0.1)
    with pytest.raises(InvalidProblem):
        extrapolated_breakpoint(fit_unconstrained(FitProblem(data=series)))


def test_flat_data_fits_exactly():
    series = MeasurementSeries(kind=SeriesKind.DRAG_RATIO, points=[(g, 1.0) for g in (5, 10, 15, 20, 25)])
    result = fit_unconstrained(FitProblem(data=series))
    assert result.residual_sum_squares == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(drag_ratios(result.model, series.gaps), 1.0, atol=1e-10)


def _inverted_hdt2_trail(catalog, env):
    fuel = load_series(catalog.dataset_path("hdt2_trail_fuel"))
    return series_fuel_to_drag(fuel, catalog.spec("hdt_mcauliffe_road_test"), env)


def test_unbounded_two_hdt_trail_breakpoint_lies_beyond_the_published_box(catalog, env):
    result = fit_unconstrained(FitProblem(data=_inverted_hdt2_trail(catalog, env)))
    assert result.model.g_o_m == pytest.approx(343.3, rel=1e-2)


def test_bounded_fit_pins_breakpoint_at_the_upper_bound(catalog, env):
    result = fit(FitProblem(data=_inverted_hdt2_trail(catalog, env), g_o_bounds=(250.0, 320.0)))
    assert result.method == "trust-region-reflective"
    assert result.model.g_o_m == 320.0
    assert result.active_bounds == ["g_o_upper"]
    assert result.iterate_g_o_m
    assert all(250.0 <= g <= 320.0 for g in result.iterate_g_o_m)
    # the published two-HDT trail row, continuous within tolerance at its bound
    published = catalog.model(VehicleClass.HDT, 2, Position.TRAIL)
    for name in ("a", "b", "c"):
        assert getattr(result.model, name) == pytest.approx(getattr(published, name), rel=1e-3), name
    assert continuity_error(result.model) <= CONTINUITY_TOLERANCE
    assert result.invariant_violations == []


def test_bounded_fit_records_breakpoint_iterates_as_evaluated(catalog, monkeypatch):
    real_least_squares = fitter.least_squares

    def stray_evaluation(fun, x0, **kwargs):
        fun(np.array([x0[0], x0[1], 450.0]))
        return real_least_squares(fun, x0, **kwargs)

    monkeypatch.setattr(fitter, "least_squares", stray_evaluation)
    result = fit_bounded(FitProblem(data=catalog.dataset("bus2_trail"), g_o_bounds=(200.0, 400.0)))
    assert 450.0 in result.iterate_g_o_m
    assert any(200.0 <= g <= 400.0 for g in result.iterate_g_o_m)


def test_bounded_fit_pins_breakpoint_at_the_lower_bound(catalog):
    result = fit_bounded(FitProblem(data=catalog.dataset("bus2_trail"), g_o_bounds=(300.0, 400.0)))
    assert result.model.g_o_m == 300.0
    assert result.active_bounds == ["g_o_lower"]
    # the free branch reaches unity near 269 m, so the breach at 300 m is reported
    assert any(v.startswith("g_o_m") for v in result.invariant_violations)


def test_bounded_fit_with_interior_optimum_matches_unbounded(catalog):
    series = catalog.dataset("bus2_trail")
    bounded = fit_bounded(FitProblem(data=series, g_o_bounds=(200.0, 400.0)))
    unbounded = fit_unconstrained(FitProblem(data=series))
    assert bounded.active_bounds == []
    assert bounded.model.g_o_m == pytest.approx(unbounded.model.g_o_m, rel=1e-3)


@pytest.mark.parametrize(
    "options",
    [
        {"g_o_bounds": (320.0, 250.0)},
        {"g_o_bounds": (0.0, 250.0)},
        {"g_o_bounds": (250.0, 320.0), "initial_guess": InitialGuess(g_o_m=400.0)},
    ],
)
def test_infeasible_problems_are_rejected(catalog, options):
    with pytest.raises(InvalidProblem):
        fit(FitProblem(data=catalog.dataset("bus2_trail"), **options))


def test_solver_entry_points_check_their_bounds(catalog):
    series = catalog.dataset("bus2_trail")
    with pytest.raises(InvalidProblem):
        fit_unconstrained(FitProblem(data=series, g_o_bounds=(250.0, 320.0)))
    with pytest.raises(InvalidProblem):
        fit_bounded(FitProblem(data=series))
    with pytest.raises(InvalidProblem):
        fit_bounded(FitProblem(data=series, include_g_o=False, g_o_bounds=(250.0, 320.0)))


def test_fuel_series_must_be_inverted_first(catalog):
    with pytest.raises(InvalidProblem):
        fit(FitProblem(data=catalog.dataset("hdt2_lead_fuel")))


def test_levenberg_marquardt_rejects_a_non_finite_start():
    gaps = JACOBIAN_GAPS
    with pytest.raises(NonConvergence) as excinfo:
        levenberg_marquardt(lambda p: tied_residuals(p, gaps, np.ones_like(gaps)),
                            lambda p: tied_jacobian(p, gaps, np.ones_like(gaps)),
                            [1.0, 0.5, -2.0], 50, Tolerance())
    assert excinfo.value.diagnostics["start"] == [1.0, 0.5, -2.0]


def test_initial_guess_is_used_for_the_excluded_form(catalog):
    series = catalog.dataset("ldv2_trail")
    guided = fit_unconstrained(FitProblem(data=series, include_g_o=False,
                                          initial_guess=InitialGuess(a=-1.78, b=-0.067, c=2.36)))
    default = fit_unconstrained(FitProblem(data=series, include_g_o=False))
    assert guided.residual_sum_squares == pytest.approx(default.residual_sum_squares, rel=1e-3)
