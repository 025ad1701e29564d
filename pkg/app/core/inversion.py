"""Fuel-ratio to drag-ratio conversion through the fuel model.

Chain per point: fuel ratio -> fuel rate -> power (inverse of the quadratic
fuel map) -> drag coefficient (force balance) -> drag ratio.

The force balance subtracts only the non-aerodynamic resistance. Subtracting the
full isolated-vehicle resistance, which already contains the aerodynamic term at
C_D-infinity, would return C_D - C_D-infinity instead of C_D.
"""

import logging
import math
from typing import Iterable, Optional

from app.core.drag_model import drag_ratios
from app.core.errors import DomainError, NoPositiveRoot, PlatoonDragError, PointError
from app.core.fuel_model import (
    POWER_CONSTANT,
    DrivingState,
    Environment,
    aero_factor,
    fuel_rate,
    inertial_force,
    non_aero_resistance,
    power_kw,
)
from app.core.types import DragModel, MeasurementSeries, SeriesKind, VehicleSpec

logger = logging.getLogger(__name__)


def isolated_fuel_rate(spec: VehicleSpec, state: DrivingState, env: Environment, n: float = 1.0) -> float:
    return n * fuel_rate(spec, power_kw(spec, spec.cd_infinity, state, env))


def fuel_from_ratio(delta: float, spec: VehicleSpec, state: DrivingState, env: Environment,
                    n: float = 1.0) -> float:
    """F = F_inf * (1 - delta), with delta = (F_inf - F) / F_inf."""
    if not delta < 1:
        raise DomainError(f"fuel ratio {delta} >= 1 implies non-positive fuel")
    return isolated_fuel_rate(spec, state, env, n) * (1.0 - delta)


def power_from_fuel(spec: VehicleSpec, fuel: float, n: float = 1.0) -> float:
    """Non-negative power that burns `fuel` when the fuel map is scaled by `n`."""
    if n <= 0:
        raise DomainError(f"scale n must be positive, got {n}")
    surplus = fuel - n * spec.alpha0
    if surplus < 0:
        raise NoPositiveRoot(f"fuel {fuel:.6g} is below the idle rate n*alpha0 = {n * spec.alpha0:.6g}")
    if spec.alpha2 > 0:
        discriminant = (n * spec.alpha1) ** 2 + 4.0 * n * spec.alpha2 * surplus
        # Rationalised root: no cancellation when alpha2 * surplus is small.
        denominator = n * spec.alpha1 + math.sqrt(discriminant)
        if denominator == 0:
            return 0.0
        return 2.0 * surplus / denominator
    if spec.alpha1 > 0:
        return surplus / (n * spec.alpha1)
    raise DomainError("fuel map is constant (alpha1 = alpha2 = 0); power cannot be recovered")


def cd_from_power(spec: VehicleSpec, power: float, state: DrivingState, env: Environment) -> float:
    if state.speed_kmh <= 0:
        raise DomainError("drag coefficient cannot be recovered at zero speed")
    tractive_force = power * POWER_CONSTANT * spec.driveline_efficiency / state.speed_kmh
    aero_force = tractive_force - non_aero_resistance(spec, state, env) - inertial_force(spec, state)
    return aero_force / aero_factor(spec, state, env)


def cd_from_fuel_ratio(delta: float, spec: VehicleSpec, state: DrivingState, env: Environment,
                       n: float = 1.0) -> float:
    fuel = fuel_from_ratio(delta, spec, state, env, n)
    return cd_from_power(spec, power_from_fuel(spec, fuel, n), state, env)


def series_fuel_to_drag(series: MeasurementSeries, spec: VehicleSpec, env: Environment,
                        state: Optional[DrivingState] = None, n: float = 1.0) -> MeasurementSeries:
    """Convert a fuel-ratio series into the equivalent drag-ratio series (gaps kept)."""
    if series.kind != SeriesKind.FUEL_RATIO:
        raise DomainError(f"expected a {SeriesKind.FUEL_RATIO.value} series, got {series.kind.value}")
    state = state or DrivingState.steady(series.speed_kmh)
    points = []
    for index, (gap, delta) in enumerate(series.points):
        try:
            ratio = cd_from_fuel_ratio(delta, spec, state, env, n) / spec.cd_infinity
            if not 0 < ratio < 2:
                raise DomainError(f"recovered drag ratio {ratio:.6g} outside (0, 2)")
        except PlatoonDragError as exc:
            logger.error(f"❌ Inversion failed at point {index} (gap {gap} m): {exc}")
            raise PointError(index, exc) from exc
        points.append((gap, ratio))
    logger.info(f"✅ Inverted {len(points)} fuel-ratio points at {state.speed_kmh} km/h for {spec.name}")
    return MeasurementSeries(
        kind=SeriesKind.DRAG_RATIO,
        points=points,
        source=f"{series.source} | drag via fuel inversion ({spec.name}, n={n:g})",
    )


def series_drag_to_fuel(model: DragModel, spec: VehicleSpec, speed_kmh: float, env: Environment,
                        gaps_m: Iterable[float], source: str = "") -> MeasurementSeries:
    """Forward counterpart: fuel ratios a vehicle following `model` would record."""
    state = DrivingState.steady(speed_kmh)
    gaps = list(gaps_m)
    reference = fuel_rate(spec, power_kw(spec, spec.cd_infinity, state, env))
    points = []
    for gap, ratio in zip(gaps, drag_ratios(model, gaps)):
        fuel = fuel_rate(spec, power_kw(spec, spec.cd_infinity * ratio, state, env))
        points.append((float(gap), (reference - fuel) / reference))
    return MeasurementSeries(
        kind=SeriesKind.FUEL_RATIO,
        points=points,
        source=source or f"forward fuel model ({spec.name})",
        speed_kmh=speed_kmh,
    )
