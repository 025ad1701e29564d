"""File ingestion and output: vehicle/model YAML, measurement CSV, curve and report writers."""

import hashlib
import json
import logging
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd
import yaml
from pydantic import BaseModel, ValidationError

from app.config import get_config
from app.core.errors import DataParseError, InvalidProblem
from app.core.types import DragModel, MeasurementSeries, Position, SeriesKind, VehicleClass, VehicleSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DRAG_COLUMNS = ["gap_m", "ratio"]
FUEL_COLUMNS = ["gap_m", "fuel_ratio", "speed_kmh"]
ROLLING_FIELDS = ("rolling_cr", "rolling_c1", "rolling_c2")
_POINT_INDEX = re.compile(r"point (\d+)")
_PARSER_LINE = re.compile(r"line (\d+)")


def file_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _validation_message(exc: ValidationError) -> str:
    messages = []
    for err in exc.errors():
        message = err["msg"].removeprefix("Value error, ")
        location = ".".join(str(part) for part in err["loc"])
        messages.append(f"{location}: {message}" if location else message)
    return "; ".join(messages)


def _read_yaml(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise DataParseError(f"file not found: {path}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise DataParseError(f"invalid YAML in {path}: {exc}", line=mark.line + 1 if mark else None) from exc


# measurement series


def load_series(path: PathLike) -> MeasurementSeries:
    """Read a headered CSV: (gap_m, ratio) or (gap_m, fuel_ratio, speed_kmh), optional provenance."""
    path = Path(path)
    try:
        # header=None: a row wider than the header is a parse error, never an implicit index
        raw = pd.read_csv(path, header=None, index_col=False, dtype=str, keep_default_na=False,
                          skipinitialspace=True, encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataParseError(f"file not found: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataParseError(f"{path.name} is empty", line=1) from exc
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE.search(str(exc))
        raise DataParseError(f"{path.name}: {exc}", line=int(match.group(1)) if match else None) from exc
    except UnicodeDecodeError as exc:
        raise DataParseError(f"{path.name}: {exc}") from exc

    frame = raw.iloc[1:].reset_index(drop=True)
    frame.columns = [str(c).strip() for c in raw.iloc[0]]
    if set(FUEL_COLUMNS) <= set(frame.columns):
        kind, columns = SeriesKind.FUEL_RATIO, FUEL_COLUMNS
    elif set(DRAG_COLUMNS) <= set(frame.columns):
        kind, columns = SeriesKind.DRAG_RATIO, DRAG_COLUMNS
    else:
        raise DataParseError(
            f"header {list(frame.columns)} needs {DRAG_COLUMNS} or {FUEL_COLUMNS}", line=1
        )

    rows = []
    for index, record in enumerate(frame[columns].itertuples(index=False)):
        line = index + 2  # header is line 1
        try:
            rows.append(tuple(float(value) for value in record))
        except ValueError as exc:
            raise DataParseError(f"non-numeric value in {tuple(record)}", line=line) from exc

    speed_kmh = None
    if kind == SeriesKind.FUEL_RATIO and rows:
        speeds = {row[2] for row in rows}
        if len(speeds) != 1:
            raise DataParseError(f"{path.name}: one speed per file expected, found {sorted(speeds)}")
        speed_kmh = speeds.pop()

    provenance = ""
    if "provenance" in frame.columns and len(frame):
        provenance = frame["provenance"].iloc[0].strip()

    try:
        series = MeasurementSeries(
            kind=kind,
            points=[(row[0], row[1]) for row in rows],
            source=f"{path.name}" + (f" ({provenance})" if provenance else ""),
            speed_kmh=speed_kmh,
        )
    except ValidationError as exc:
        message = _validation_message(exc)
        match = _POINT_INDEX.search(message)
        raise DataParseError(f"{path.name}: {message}", line=int(match.group(1)) + 2 if match else None) from exc

    logger.info(f"📚 Loaded {len(series.points)} {kind.value} points from {path.name}")
    return series


def write_series(series: MeasurementSeries, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if series.kind == SeriesKind.DRAG_RATIO:
        frame = pd.DataFrame(series.points, columns=DRAG_COLUMNS)
    else:
        frame = pd.DataFrame(series.points, columns=FUEL_COLUMNS[:2])
        frame["speed_kmh"] = series.speed_kmh
    frame["provenance"] = series.source
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
    return path


# vehicles and models


def _spec_from_mapping(key: str, data: Dict[str, Any], defaults: Dict[str, float]) -> VehicleSpec:
    values = {**defaults, **data}
    try:
        return VehicleSpec(**values)
    except ValidationError as exc:
        raise DataParseError(f"vehicle '{key}': {_validation_message(exc)}") from exc


def load_vehicle_specs(path: PathLike) -> Dict[str, VehicleSpec]:
    """Vehicles keyed by name. Accepts a `vehicles:` mapping or a single spec mapping."""
    data = _read_yaml(path)
    if not isinstance(data, dict):
        raise DataParseError(f"{path}: expected a mapping")
    config = get_config()
    defaults = {name: getattr(config, name) for name in ROLLING_FIELDS}

    if "vehicles" not in data:
        key = Path(path).stem
        return {key: _spec_from_mapping(key, data, defaults)}

    raw = data["vehicles"] or {}
    specs: Dict[str, VehicleSpec] = {}
    for key, entry in raw.items():
        entry = dict(entry)
        parent = entry.pop("variant_of", None)
        if parent is not None:
            if parent not in raw:
                raise DataParseError(f"vehicle '{key}' is a variant of unknown '{parent}'")
            base = dict(raw[parent])
            base["provenance"] = f"{base.get('provenance', '')}; payload variant of {parent}".lstrip("; ")
            entry = {**base, **entry}
        specs[key] = _spec_from_mapping(key, entry, defaults)
    return specs


def resolve_spec(reference: str, catalog: Optional["FixtureCatalog"] = None) -> VehicleSpec:
    """A vehicle from a YAML file path, or from the fixture catalog by key."""
    path = Path(reference)
    if path.suffix in (".yaml", ".yml") or path.exists():
        specs = load_vehicle_specs(path)
        if len(specs) != 1:
            raise InvalidProblem(f"{reference} holds {len(specs)} vehicles; pass a catalog key instead")
        return next(iter(specs.values()))
    return (catalog or FixtureCatalog()).spec(reference)


def load_model(path: PathLike) -> DragModel:
    data = _read_yaml(path)
    if isinstance(data, dict) and "model" in data:
        data = data["model"]
    if not isinstance(data, dict):
        raise DataParseError(f"{path}: expected a drag model mapping")
    try:
        return DragModel(**data)
    except ValidationError as exc:
        raise DataParseError(f"{path}: {_validation_message(exc)}") from exc


def save_model(model: DragModel, path: PathLike, report: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"model": model.model_dump(mode="json")}
    if report:
        document["fit"] = report
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(document, f, sort_keys=False)
    return path


def save_vehicle_spec(spec: VehicleSpec, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(spec.model_dump(mode="json"), f, sort_keys=False)
    return path


def write_json(data: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return path


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return path


class FixtureCatalog:
    """Named access to the bundled vehicles, published drag models, datasets and expected values."""

    def __init__(self, fixtures_dir: Optional[PathLike] = None):
        config = get_config()
        self.fixtures_dir = Path(fixtures_dir or config.fixtures_dir)
        self._vehicles: Optional[Dict[str, VehicleSpec]] = None
        self._models: Optional[Dict[Tuple[VehicleClass, int, Position], DragModel]] = None
        self._errata: Dict[Tuple[VehicleClass, int, Position], str] = {}

    @property
    def vehicles(self) -> Dict[str, VehicleSpec]:
        if self._vehicles is None:
            self._vehicles = load_vehicle_specs(self.fixtures_dir / "vehicles.yaml")
            logger.debug(f"Loaded {len(self._vehicles)} fixture vehicles")
        return self._vehicles

    def spec(self, key: str) -> VehicleSpec:
        try:
            return self.vehicles[key]
        except KeyError:
            raise InvalidProblem(f"unknown vehicle '{key}'; available: {', '.join(self.vehicles)}") from None

    @property
    def models(self) -> Dict[Tuple[VehicleClass, int, Position], DragModel]:
        if self._models is None:
            data = _read_yaml(self.fixtures_dir / "drag_models.yaml") or {}
            models, errata = {}, {}
            for index, entry in enumerate(data.get("models", [])):
                entry = dict(entry)
                erratum = entry.pop("erratum", None)
                try:
                    model = DragModel(source="published coefficients", **entry)
                except ValidationError as exc:
                    raise DataParseError(f"drag model #{index}: {_validation_message(exc)}") from exc
                key = (model.vehicle_class, model.platoon_size, model.position)
                models[key] = model
                if erratum:
                    errata[key] = " ".join(erratum.split())
            self._models, self._errata = models, errata
        return self._models

    @property
    def errata(self) -> Dict[Tuple[VehicleClass, int, Position], str]:
        """Notes on published coefficients that were corrected, keyed like `models`."""
        self.models
        return self._errata

    def model(self, vehicle_class: VehicleClass, platoon_size: int, position: Position) -> DragModel:
        key = (VehicleClass(vehicle_class), platoon_size, Position(position))
        if key not in self.models:
            raise InvalidProblem(f"no drag model for {key[0].value}, size {platoon_size}, {key[2].value}")
        return self.models[key]

    def platoon_models(self, vehicle_class: VehicleClass, size: int) -> Dict[Position, DragModel]:
        """Models for a platoon of `size`: two-vehicle fits for 2, three-vehicle fits otherwise."""
        if size < 2:
            raise InvalidProblem(f"platoon size must be >= 2, got {size}")
        if size == 2:
            return {p: self.model(vehicle_class, 2, p) for p in (Position.LEAD, Position.TRAIL)}
        return {p: self.model(vehicle_class, 3, p) for p in (Position.LEAD, Position.MIDDLE, Position.TRAIL)}

    def dataset_names(self) -> List[str]:
        return sorted(p.stem for p in (self.fixtures_dir / "datasets").glob("*.csv"))

    def dataset_path(self, name: str) -> Path:
        path = self.fixtures_dir / "datasets" / f"{name}.csv"
        if not path.exists():
            raise InvalidProblem(f"unknown dataset '{name}'; available: {', '.join(self.dataset_names())}")
        return path

    def dataset(self, name: str) -> MeasurementSeries:
        return load_series(self.dataset_path(name))

    def reproduction(self) -> Dict[str, Any]:
        return _read_yaml(self.fixtures_dir / "reproduction.yaml") or {}


class RunManifest(BaseModel):
    """What a CLI run read, how it was configured and what it wrote."""

    command: str
    inputs: Dict[str, str]
    config: Dict[str, Any]
    outputs: Dict[str, str]
    created_at: str


def write_manifest(command: str, inputs: List[PathLike], outputs: List[PathLike],
                   config_snapshot: Dict[str, Any]) -> Path:
    """Write `<first output>.manifest.json`; input and output files are recorded with SHA-256 digests."""
    manifest = RunManifest(
        command=command,
        inputs={str(p): file_digest(p) for p in inputs},
        config=config_snapshot,
        outputs={str(p): file_digest(p) for p in outputs},
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    path = Path(f"{outputs[0]}.manifest.json")
    write_json(manifest.model_dump(mode="json"), path)
    logger.debug(f"Run manifest written to {path}")
    return path
