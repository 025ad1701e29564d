from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import logging

from app.config import get_config
from app.core.data_loader import FixtureCatalog, load_series, resolve_spec, save_model, write_json, write_manifest, write_series
from app.core.drag_model import effective_breakpoint
from app.core.errors import InvalidProblem, NoBreakpoint, PlatoonDragError
from app.core.fitter import FitProblem, FitResult, Tolerance, fit
from app.core.fuel_model import DrivingState, Environment
from app.core.inversion import series_fuel_to_drag
from app.core.types import MeasurementSeries, Position, SeriesKind, VehicleClass

logger = logging.getLogger(__name__)


class FittingService:
    def __init__(self, catalog: Optional[FixtureCatalog] = None):
        self.config = get_config()
        self.catalog = catalog or FixtureCatalog()
        self.last_run: Dict[str, Any] = {"command": None, "outputs": [], "converged": None}

    def get_available_options(self):
        """Vehicles, datasets and enumerations accepted by fit/invert/curve"""
        return {
            "vehicles": list(self.catalog.vehicles),
            "datasets": self.catalog.dataset_names(),
            "vehicle_classes": [c.value for c in VehicleClass],
            "positions": [p.value for p in Position],
            "abscissae": self.config.available_abscissae,
            "reproduce_targets": self.config.available_targets,
        }

    def environment(self) -> Environment:
        return Environment(air_density_kgm3=self.config.air_density_kgm3, gravity_ms2=self.config.gravity_ms2)

    def invert_series(self, series: MeasurementSeries, spec_ref: str, speed_kmh: Optional[float] = None,
                      n: Optional[float] = None) -> MeasurementSeries:
        """Fuel-ratio series -> drag-ratio series through the fuel model of `spec_ref`"""
        spec = resolve_spec(spec_ref, self.catalog)
        speed = speed_kmh or series.speed_kmh
        if speed_kmh and series.speed_kmh and speed_kmh != series.speed_kmh:
            logger.warning(f"⚠️ Speed {speed_kmh} km/h overrides the recorded {series.speed_kmh} km/h")
        return series_fuel_to_drag(
            series, spec, self.environment(), DrivingState.steady(speed),
            n=n if n is not None else self.config.inversion_scale_n,
        )

    def build_problem(self, series: MeasurementSeries, include_g_o: bool = True,
                      g_o_bounds: Optional[Tuple[float, float]] = None, position: Position = Position.TRAIL,
                      platoon_size: int = 2, vehicle_class: Optional[VehicleClass] = None,
                      max_iterations: Optional[int] = None) -> FitProblem:
        tol = self.config.tolerance
        return FitProblem(
            data=series,
            include_g_o=include_g_o,
            g_o_bounds=tuple(g_o_bounds) if g_o_bounds else None,
            max_iterations=max_iterations or self.config.max_iterations,
            tolerance=Tolerance(gtol=tol, xtol=tol, ftol=tol),
            multistart=self.config.multistart,
            multistart_span=self.config.multistart_span,
            position=position,
            platoon_size=platoon_size,
            vehicle_class=vehicle_class,
        )

    def fit_series(self, series: MeasurementSeries, spec_ref: Optional[str] = None, n: Optional[float] = None,
                   **options) -> FitResult:
        """Fit a drag-ratio series; fuel-ratio series are inverted first (needs `spec_ref`)"""
        if series.kind == SeriesKind.FUEL_RATIO:
            if not spec_ref:
                raise InvalidProblem("fuel-ratio data needs a vehicle spec for inversion")
            series = self.invert_series(series, spec_ref, n=n)
            if options.get("vehicle_class") is None:
                options["vehicle_class"] = resolve_spec(spec_ref, self.catalog).vehicle_class
        return fit(self.build_problem(series, **options))

    @staticmethod
    def report(result: FitResult) -> Dict[str, Any]:
        data = result.model_dump(mode="json", exclude={"model", "iterate_g_o_m"})
        if result.model.g_o_m is None:
            try:
                data["extrapolated_breakpoint_m"] = effective_breakpoint(result.model)
            except NoBreakpoint:
                data["extrapolated_breakpoint_m"] = None
        return data

    def fit_file(self, data_path: str, output_path: str, spec_ref: Optional[str] = None,
                 n: Optional[float] = None, **options) -> Tuple[FitResult, List[Path]]:
        """Fit a CSV file; writes the model YAML, a JSON report and the run manifest"""
        try:
            series = load_series(data_path)
            result = self.fit_series(series, spec_ref=spec_ref, n=n, **options)
        except PlatoonDragError as e:
            logger.error(f"❌ Fit of {data_path} failed: {e}")
            raise

        model_path = save_model(result.model, output_path, report=self.report(result))
        report_path = write_json(self.report(result), Path(output_path).with_suffix(".report.json"))
        outputs = [model_path, report_path]
        inputs = [data_path] + ([spec_ref] if spec_ref and Path(spec_ref).exists() else [])
        write_manifest("fit", inputs, outputs, self.config.snapshot())

        self.last_run = {"command": "fit", "outputs": [str(p) for p in outputs], "converged": result.converged}
        logger.info(f"✅ Model written to {model_path} (rss={result.residual_sum_squares:.4e})")
        return result, outputs

    def invert_file(self, data_path: str, spec_ref: str, output_path: str, speed_kmh: Optional[float] = None,
                    n: Optional[float] = None) -> Tuple[MeasurementSeries, List[Path]]:
        """Invert a fuel-ratio CSV into a drag-ratio CSV plus run manifest"""
        series = load_series(data_path)
        if series.kind != SeriesKind.FUEL_RATIO:
            raise InvalidProblem(f"{data_path} holds drag ratios; invert needs fuel_ratio data")
        try:
            drag = self.invert_series(series, spec_ref, speed_kmh=speed_kmh, n=n)
        except PlatoonDragError as e:
            logger.error(f"❌ Inversion of {data_path} failed: {e}")
            raise

        output = write_series(drag, output_path)
        inputs = [data_path] + ([spec_ref] if Path(spec_ref).exists() else [])
        write_manifest("invert", inputs, [output], self.config.snapshot())
        self.last_run = {"command": "invert", "outputs": [str(output)], "converged": None}
        return drag, [output]

    def get_status(self):
        """Configuration health and the last run"""
        errors = self.config.validate()
        return {
            "config_valid": not errors,
            "config_errors": errors,
            "fixtures_dir": self.config.fixtures_dir,
            "last_run": self.last_run,
        }
