"""Command-line front end: fit, invert, curve, headways, reproduce.

Data goes to stdout or files; logs and the one-line JSON error record go to stderr.
Exit codes: 0 ok, 2 parse, 3 invalid problem, 4 non-convergence, 5 reproduction mismatch.
"""

import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import List, NoReturn, Optional, Tuple

import typer

from app.config import get_config, load_config
from app.core.analysis import Abscissa
from app.core.data_loader import write_frame, write_json
from app.core.errors import InvalidProblem, NonConvergence, PlatoonDragError, ReproductionMismatch
from app.core.types import Position, VehicleClass
from app.services.analysis_service import AnalysisService
from app.services.fitting_service import FittingService
from app.services.reproduction_service import ReproductionService

logger = logging.getLogger(__name__)

app = typer.Typer(
    help="Fit gap-dependent platoon drag models and evaluate platoon fuel savings.",
    add_completion=False,
    no_args_is_help=True,
)


def _fail(error: PlatoonDragError) -> NoReturn:
    typer.echo(json.dumps(error.to_dict()), err=True)
    raise typer.Exit(code=error.exit_code)


@contextmanager
def _errors():
    try:
        yield
    except PlatoonDragError as e:
        _fail(e)
    except (ValueError, OSError) as e:
        _fail(InvalidProblem(str(e)))


def _default_output(name: str) -> Path:
    return Path(get_config().output_dir) / name


@app.callback()
def main(
    config_path: Optional[Path] = typer.Option(None, "--config", help="YAML key-value file overriding defaults."),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr."),
):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )
    with _errors():
        config = load_config(str(config_path) if config_path else None)
        errors = config.validate()
        if errors:
            raise InvalidProblem("; ".join(errors))


@app.command()
def fit(
    data: Path = typer.Option(..., "--data", help="CSV with gap_m,ratio or gap_m,fuel_ratio,speed_kmh columns."),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Model YAML to write."),
    include_go: bool = typer.Option(True, "--include-go/--exclude-go", help="Fit the critical gap G_o."),
    go_bounds: Optional[Tuple[float, float]] = typer.Option(None, "--go-bounds", help="Bound G_o to [LO, HI] m."),
    spec: Optional[str] = typer.Option(None, "--spec", help="Vehicle key or YAML file; needed for fuel data."),
    n: Optional[float] = typer.Option(None, "--n", help="Inversion scale parameter."),
    position: Position = typer.Option(Position.TRAIL, "--position"),
    platoon_size: int = typer.Option(2, "--platoon-size", min=2),
    vehicle_class: Optional[VehicleClass] = typer.Option(None, "--vehicle-class"),
    max_iterations: Optional[int] = typer.Option(None, "--max-iterations", min=1),
):
    """Fit a drag-ratio power law. Writes the model YAML, <output>.report.json and a run manifest."""
    output = output or _default_output(f"{data.stem}.model.yaml")
    with _errors():
        result, outputs = FittingService().fit_file(
            str(data), str(output), spec_ref=spec, n=n,
            include_g_o=include_go, g_o_bounds=go_bounds, position=position,
            platoon_size=platoon_size, vehicle_class=vehicle_class, max_iterations=max_iterations,
        )
        typer.echo(json.dumps({
            "model": result.model.model_dump(mode="json"),
            "residual_sum_squares": result.residual_sum_squares,
            "converged": result.converged,
            "active_bounds": result.active_bounds,
            "outputs": [str(p) for p in outputs],
        }, indent=2))
        if not result.converged:
            raise NonConvergence(f"fit stopped after {result.iterations} iterations without converging",
                                 {"residual_sum_squares": result.residual_sum_squares})


@app.command()
def invert(
    data: Path = typer.Option(..., "--data", help="CSV with gap_m,fuel_ratio,speed_kmh columns."),
    spec: str = typer.Option(..., "--spec", help="Vehicle key or YAML file."),
    speed: Optional[float] = typer.Option(None, "--speed", help="km/h; defaults to the speed in the file."),
    n: Optional[float] = typer.Option(None, "--n", help="Inversion scale parameter."),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Drag-ratio CSV to write (gap_m,ratio,provenance)."),
):
    """Convert fuel-ratio measurements into drag ratios through the fuel model."""
    output = output or _default_output(f"{data.stem}.drag.csv")
    with _errors():
        series, outputs = FittingService().invert_file(str(data), spec, str(output), speed_kmh=speed, n=n)
        typer.echo(json.dumps({"points": len(series.points), "outputs": [str(p) for p in outputs]}))


@app.command()
def curve(
    spec: str = typer.Option(..., "--spec", help="Vehicle key or YAML file."),
    models: Optional[List[Path]] = typer.Option(None, "--model", help="Drag model YAML, once per position."),
    size: int = typer.Option(3, "--size", min=2, help="Platoon size."),
    speed: Optional[float] = typer.Option(None, "--speed", help="km/h."),
    abscissa: Abscissa = typer.Option(Abscissa.GAP_M, "--abscissa"),
    x_range: Tuple[float, float] = typer.Option(..., "--range", help="LO HI in metres or seconds."),
    step: Optional[float] = typer.Option(None, "--step"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="CSV: x, per-position..., average; JSON alongside."),
):
    """Per-position and average fuel reduction over a gap or time-gap range."""
    config = get_config()
    speed = speed or config.curve_speed_kmh
    step = step or (config.curve_step_m if abscissa == Abscissa.GAP_M else config.curve_step_s)
    output = output or _default_output(f"curve_{size}x_{Path(spec).stem}.csv")
    model_paths = [str(p) for p in models] if models else None
    with _errors():
        service = AnalysisService()
        result = service.curve(spec, size, speed, abscissa, x_range, step, model_paths)
        outputs = service.write_curve(result, str(output), inputs=[spec, *(model_paths or [])])
        typer.echo(json.dumps({"samples": len(result.samples), "outputs": [str(p) for p in outputs]}))


@app.command()
def headways(
    vehicles: Optional[List[str]] = typer.Option(None, "--vehicle", help="Vehicle keys; defaults to the measurement vehicles."),
    gap_time: Optional[float] = typer.Option(None, "--gap-time", help="Time gap, s."),
    speed: Optional[float] = typer.Option(None, "--speed", help="km/h."),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="CSV to write; stdout otherwise."),
):
    """Headway and saturation flow per vehicle at a time gap."""
    with _errors():
        table = AnalysisService().headways(vehicles, gap_time, speed)
        if output:
            write_frame(table, output)
        typer.echo(table.to_csv(index=False, float_format="%.6g", lineterminator="\n"), nl=False)


@app.command()
def reproduce(
    target: str = typer.Argument(..., help="table2 | headways | savings_summary"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="JSON report to write."),
):
    """Recompute published figures from the fixtures; exits 5 on any mismatch."""
    with _errors():
        report = ReproductionService().run(target)
        if output:
            write_json(report.summary(), output)
        typer.echo(json.dumps(report.summary(), indent=2))
        if not report.passed:
            names = ", ".join(item.item for item in report.failures)
            raise ReproductionMismatch(f"{len(report.failures)} item(s) outside tolerance: {names}")


if __name__ == "__main__":
    app()
