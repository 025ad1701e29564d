"""Fuel-savings and capacity figures for homogeneous platoons."""

import logging
from enum import Enum
from typing import Dict, Iterable, List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.core.drag_model import drag_coefficient, effective_breakpoint
from app.core.errors import DomainError
from app.core.fuel_model import Environment, steady_fuel_rate
from app.core.types import KMH_PER_MS, DragModel, GapPolicy, PlatoonConfig, VehicleSpec, digest

logger = logging.getLogger(__name__)

HCM_BASE_SATURATION_FLOW = 2450.0
SECONDS_PER_HOUR = 3600.0
MAX_RANGE_FACTOR = 10.0


class Abscissa(str, Enum):
    GAP_M = "gap_m"
    TIME_S = "time_s"


class CurveSample(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    x: float
    reductions: Dict[str, float]
    average: float


class SavingsCurve(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    abscissa: Abscissa
    speed_kmh: float
    platoon: str
    positions: List[str]
    samples: List[CurveSample]
    spec_digest: str
    model_digests: Dict[str, str]

    def to_frame(self) -> pd.DataFrame:
        """Columns: x, one per position front to back, average."""
        rows = [{"x": s.x, **{p: s.reductions[p] for p in self.positions}, "average": s.average}
                for s in self.samples]
        return pd.DataFrame(rows, columns=["x", *self.positions, "average"])

    def metadata(self) -> Dict:
        return {
            "abscissa": self.abscissa.value,
            "speed_kmh": self.speed_kmh,
            "platoon": self.platoon,
            "positions": self.positions,
            "spec_digest": self.spec_digest,
            "model_digests": self.model_digests,
        }


def fuel_reduction(spec: VehicleSpec, model: DragModel, gap_m: float, speed_kmh: float, env: Environment) -> float:
    """(F - F_inf) / F_inf at a steady speed; negative means savings."""
    isolated = steady_fuel_rate(spec, spec.cd_infinity, speed_kmh, env)
    platooned = steady_fuel_rate(spec, drag_coefficient(spec, model, gap_m), speed_kmh, env)
    return (platooned - isolated) / isolated


def position_reductions(config: PlatoonConfig, env: Environment) -> List[Tuple[str, float]]:
    gap_m = config.gap_m
    return [
        (label, fuel_reduction(config.vehicle, model, gap_m, config.speed_kmh, env))
        for label, model in config.position_models()
    ]


def platoon_average_reduction(config: PlatoonConfig, env: Environment) -> float:
    """Unweighted mean of the per-vehicle reductions."""
    return float(np.mean([value for _, value in position_reductions(config, env)]))


def time_gap_transform(gap_time_s: float, speed_kmh: float) -> float:
    if gap_time_s <= 0 or speed_kmh <= 0:
        raise DomainError(f"time gap and speed must be positive, got {gap_time_s} s at {speed_kmh} km/h")
    return gap_time_s * speed_kmh / KMH_PER_MS


def headway_and_flow(spec: VehicleSpec, gap_time_s: float, speed_kmh: float) -> Tuple[float, float]:
    """Front-to-front headway (s) and the saturation flow it implies (veh/h/lane)."""
    if gap_time_s <= 0 or speed_kmh <= 0:
        raise DomainError(f"time gap and speed must be positive, got {gap_time_s} s at {speed_kmh} km/h")
    speed_ms = speed_kmh / KMH_PER_MS
    headway_s = (spec.length_m + gap_time_s * speed_ms) / speed_ms
    return headway_s, SECONDS_PER_HOUR / headway_s


def headway_table(specs: Iterable[VehicleSpec], gap_time_s: float, speed_kmh: float) -> pd.DataFrame:
    rows = []
    for spec in specs:
        headway_s, flow = headway_and_flow(spec, gap_time_s, speed_kmh)
        rows.append({
            "vehicle": spec.name,
            "vehicle_class": spec.vehicle_class.value,
            "length_m": spec.length_m,
            "gap_time_s": gap_time_s,
            "speed_kmh": speed_kmh,
            "headway_s": headway_s,
            "flow_veh_per_hr": flow,
            "hcm_base_flow_veh_per_hr": HCM_BASE_SATURATION_FLOW,
            "flow_to_hcm": flow / HCM_BASE_SATURATION_FLOW,
        })
    return pd.DataFrame(rows)


def _sample_points(x_range: Tuple[float, float], step: float) -> np.ndarray:
    lo, hi = x_range
    if step <= 0:
        raise DomainError(f"step must be positive, got {step}")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    xs = lo + step * np.arange(count)
    if xs[-1] < hi - 1e-9 * max(1.0, hi):
        xs = np.append(xs, hi)
    return xs


def savings_curve(config: PlatoonConfig, abscissa: Abscissa, x_range: Tuple[float, float], step: float,
                  env: Environment) -> SavingsCurve:
    """Per-position and average reductions sampled over a gap or time-gap range."""
    lo, hi = x_range
    to_metres = 1.0 if abscissa == Abscissa.GAP_M else config.speed_kmh / KMH_PER_MS
    limit_m = MAX_RANGE_FACTOR * max(effective_breakpoint(m) for _, m in config.position_models())
    if not 0 < lo <= hi or hi * to_metres > limit_m:
        raise DomainError(
            f"range [{lo}, {hi}] {abscissa.value} must lie in (0, {limit_m / to_metres:.6g}] "
            f"(ten times the largest breakpoint)"
        )

    positions = [label for label, _ in config.position_models()]
    samples = []
    for x in _sample_points(x_range, step):
        gap = GapPolicy(distance_m=float(x)) if abscissa == Abscissa.GAP_M else GapPolicy(time_s=float(x))
        reductions = dict(position_reductions(config.model_copy(update={"gap": gap}), env))
        samples.append(CurveSample(x=float(x), reductions=reductions,
                                   average=float(np.mean(list(reductions.values())))))

    logger.debug(f"Sampled {len(samples)} points of the {config.size} x {config.vehicle.name} curve")
    return SavingsCurve(
        abscissa=abscissa,
        speed_kmh=config.speed_kmh,
        platoon=f"{config.size} x {config.vehicle.name}",
        positions=positions,
        samples=samples,
        spec_digest=digest(config.vehicle),
        model_digests={p.value: digest(m) for p, m in sorted(config.models.items(), key=lambda kv: kv[0].value)},
    )
