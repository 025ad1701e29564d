"""Shared domain types.

Units are frozen per field and named in the identifier: kg, m, m2, km/h, s.
All models are immutable pydantic models; structural checks (types, required
fields) happen at construction, the physical invariants are reported by
`validate_spec` / `validate_model` so that a bad record can still be loaded,
inspected and rejected with a readable reason.
"""

import hashlib
import json
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

KMH_PER_MS = 3.6
CONTINUITY_TOLERANCE = 5e-3
MIN_SERIES_POINTS = 4


class VehicleClass(str, Enum):
    LDV = "LDV"
    BUS = "Bus"
    HDT = "HDT"


class Position(str, Enum):
    LEAD = "Lead"
    MIDDLE = "Middle"
    TRAIL = "Trail"


class SeriesKind(str, Enum):
    DRAG_RATIO = "DragRatio"
    FUEL_RATIO = "FuelRatio"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class VehicleSpec(_Frozen):
    """Geometry, mass, isolated drag and VT-CPFM coefficients of one vehicle type."""

    name: str
    vehicle_class: VehicleClass
    mass_kg: float
    length_m: float
    width_m: float
    height_m: float
    frontal_area_m2: float
    cd_infinity: float
    driveline_efficiency: float
    alpha0: float
    alpha1: float
    alpha2: float
    rolling_cr: float
    rolling_c1: float
    rolling_c2: float
    altitude_correction: float = 1.0
    payload_kg: float = 0.0
    provenance: str = ""

    @property
    def total_mass_kg(self) -> float:
        return self.mass_kg + self.payload_kg


class DragModel(_Frozen):
    """Fitted power law a*G^b + c for one (vehicle class, platoon size, position)."""

    a: float
    b: float
    c: float
    g_o_m: Optional[PositiveFloat] = None
    position: Position
    platoon_size: int = Field(ge=2)
    vehicle_class: Optional[VehicleClass] = None
    source: str = ""

    def branch(self, gap_m):
        """The unclamped power branch; accepts scalars or numpy arrays."""
        return self.a * np.power(gap_m, self.b) + self.c


class MeasurementSeries(_Frozen):
    kind: SeriesKind
    points: List[Tuple[float, float]]
    source: str = ""
    speed_kmh: Optional[float] = None

    @model_validator(mode="after")
    def _check_points(self):
        if len(self.points) < MIN_SERIES_POINTS:
            raise ValueError(
                f"series needs at least {MIN_SERIES_POINTS} points, got {len(self.points)}"
            )
        low, high = (0.0, 2.0) if self.kind == SeriesKind.DRAG_RATIO else (-1.0, 1.0)
        previous = 0.0
        for index, (gap, value) in enumerate(self.points):
            if not np.isfinite(gap) or not np.isfinite(value):
                raise ValueError(f"point {index}: non-finite value")
            if gap <= previous:
                raise ValueError(
                    f"point {index}: gaps must be positive and strictly increasing ({gap})"
                )
            if not low < value < high:
                raise ValueError(
                    f"point {index}: {self.kind.value} value {value} outside ({low}, {high})"
                )
            previous = gap
        if self.kind == SeriesKind.FUEL_RATIO and (self.speed_kmh is None or self.speed_kmh <= 0):
            raise ValueError("fuel-ratio series needs a positive speed_kmh")
        return self

    @property
    def gaps(self) -> np.ndarray:
        return np.array([gap for gap, _ in self.points], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([value for _, value in self.points], dtype=float)


class GapPolicy(_Frozen):
    """Either a distance gap (m) or a time gap (s); exactly one is set."""

    distance_m: Optional[PositiveFloat] = None
    time_s: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.distance_m is None) == (self.time_s is None):
            raise ValueError("gap needs exactly one of distance_m or time_s")
        return self

    def to_distance_m(self, speed_kmh: float) -> float:
        if self.distance_m is not None:
            return self.distance_m
        return self.time_s * speed_kmh / KMH_PER_MS


class PlatoonConfig(_Frozen):
    """A homogeneous platoon: one vehicle type, its size, speed, gap and drag models."""

    vehicle: VehicleSpec
    size: int = Field(ge=2)
    speed_kmh: PositiveFloat
    gap: GapPolicy
    models: Dict[Position, DragModel]

    @model_validator(mode="after")
    def _check_models(self):
        required = {Position.LEAD, Position.TRAIL}
        if self.size >= 3:
            required.add(Position.MIDDLE)
        missing = required - set(self.models)
        if missing:
            names = ", ".join(sorted(p.value for p in missing))
            raise ValueError(f"platoon of {self.size} needs models for: {names}")
        expected_size = 2 if self.size == 2 else 3
        for position, model in self.models.items():
            if model.position != position:
                raise ValueError(f"model keyed {position.value} is a {model.position.value} model")
            if position in required and model.platoon_size != expected_size:
                raise ValueError(
                    f"{position.value} model was fitted for a platoon of {model.platoon_size}, "
                    f"expected {expected_size}"
                )
        return self

    @property
    def gap_m(self) -> float:
        return self.gap.to_distance_m(self.speed_kmh)

    def position_models(self) -> List[Tuple[str, DragModel]]:
        """Vehicles front to back with the model each one uses.

        The second vehicle of a 3+ platoon uses the Middle model; every vehicle
        from the third on behaves like the third one and uses the Trail model.
        """
        if self.size == 2:
            return [("lead", self.models[Position.LEAD]), ("trail", self.models[Position.TRAIL])]
        labelled = [("lead", self.models[Position.LEAD]), ("middle_2", self.models[Position.MIDDLE])]
        for index in range(3, self.size):
            labelled.append((f"middle_{index}", self.models[Position.TRAIL]))
        labelled.append(("trail", self.models[Position.TRAIL]))
        return labelled


def validate_spec(spec: VehicleSpec) -> List[str]:
    """Return every violated VehicleSpec invariant as 'field: rule'. Empty means valid."""
    violations = []
    for field in ("mass_kg", "length_m", "width_m", "height_m", "frontal_area_m2",
                  "cd_infinity", "altitude_correction"):
        if not getattr(spec, field) > 0:
            violations.append(f"{field}: must be > 0")
    if not 0 < spec.driveline_efficiency <= 1:
        violations.append("driveline_efficiency: must be in (0, 1]")
    for field in ("alpha0", "alpha1", "alpha2", "rolling_cr", "rolling_c1", "rolling_c2", "payload_kg"):
        if getattr(spec, field) < 0:
            violations.append(f"{field}: must be >= 0")
    if spec.frontal_area_m2 > spec.width_m * spec.height_m:
        violations.append("frontal_area_m2: must not exceed width_m x height_m")
    if spec.alpha2 == 0 and spec.alpha1 <= 0:
        violations.append("alpha1/alpha2: alpha2 may be zero only if alpha1 > 0")
    return violations


def continuity_error(model: DragModel) -> Optional[float]:
    """|a*G_o^b + c - 1| at the recorded breakpoint, None when G_o is absent."""
    if model.g_o_m is None:
        return None
    return float(abs(model.branch(model.g_o_m) - 1.0))


def validate_model(model: DragModel) -> List[str]:
    violations = []
    if not model.a * model.b > 0:
        violations.append("a, b: a*b must be > 0 (ratio non-decreasing in gap)")
    error = continuity_error(model)
    if error is not None and error > CONTINUITY_TOLERANCE:
        violations.append(
            f"g_o_m: branch at G_o is off unity by {error:.4g} (> {CONTINUITY_TOLERANCE})"
        )
    return violations


def digest(model: BaseModel) -> str:
    """SHA-256 over the canonical JSON form of a pydantic model."""
    payload = json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
