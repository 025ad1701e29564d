"""VT-CPFM instantaneous resistance, power and fuel rate.

Speed stays in km/h throughout, exactly as the model is written: the 25.92
and 3600 constants absorb the unit conversions.
"""

import logging

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.types import VehicleSpec

logger = logging.getLogger(__name__)

ROTATIONAL_MASS_FACTOR = 1.04
AERO_CONSTANT = 25.92
POWER_CONSTANT = 3600.0

DEFAULT_AIR_DENSITY_KGM3 = 1.2256
DEFAULT_GRAVITY_MS2 = 9.8066


class DrivingState(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    speed_kmh: float = Field(ge=0)
    accel_ms2: float = 0.0
    grade: float = 0.0

    @field_validator("grade")
    @classmethod
    def _grade_sanity(cls, value: float) -> float:
        if abs(value) >= 0.2:
            raise ValueError(f"grade {value} outside the (-0.2, 0.2) sanity bound")
        return value

    @classmethod
    def steady(cls, speed_kmh: float) -> "DrivingState":
        return cls(speed_kmh=speed_kmh)


class Environment(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    air_density_kgm3: float = DEFAULT_AIR_DENSITY_KGM3
    gravity_ms2: float = DEFAULT_GRAVITY_MS2

    @field_validator("air_density_kgm3")
    @classmethod
    def _density_range(cls, value: float) -> float:
        if not 0.8 < value < 1.5:
            raise ValueError(f"air density {value} kg/m3 outside (0.8, 1.5)")
        return value


def aero_factor(spec: VehicleSpec, state: DrivingState, env: Environment) -> float:
    """Aerodynamic resistance per unit drag coefficient, N."""
    return (env.air_density_kgm3 / AERO_CONSTANT) * spec.altitude_correction * spec.frontal_area_m2 * state.speed_kmh ** 2


def non_aero_resistance(spec: VehicleSpec, state: DrivingState, env: Environment) -> float:
    """Rolling plus grade resistance, N."""
    weight = env.gravity_ms2 * spec.total_mass_kg
    rolling = weight * (spec.rolling_cr / 1000.0) * (spec.rolling_c1 * state.speed_kmh + spec.rolling_c2)
    return rolling + weight * state.grade


def resistance(spec: VehicleSpec, cd: float, state: DrivingState, env: Environment) -> float:
    """Total resistance force R, N."""
    return cd * aero_factor(spec, state, env) + non_aero_resistance(spec, state, env)


def inertial_force(spec: VehicleSpec, state: DrivingState) -> float:
    return ROTATIONAL_MASS_FACTOR * spec.total_mass_kg * state.accel_ms2


def power_kw(spec: VehicleSpec, cd: float, state: DrivingState, env: Environment) -> float:
    """Tractive power P, kW."""
    force = resistance(spec, cd, state, env) + inertial_force(spec, state)
    return force / (POWER_CONSTANT * spec.driveline_efficiency) * state.speed_kmh


def fuel_rate(spec: VehicleSpec, power: float) -> float:
    """Fuel rate, L/s: quadratic in power, idle rate for negative power."""
    if power < 0:
        return spec.alpha0
    return spec.alpha0 + spec.alpha1 * power + spec.alpha2 * power ** 2


def steady_fuel_rate(spec: VehicleSpec, cd: float, speed_kmh: float, env: Environment) -> float:
    """Fuel rate at constant speed on a level road."""
    return fuel_rate(spec, power_kw(spec, cd, DrivingState.steady(speed_kmh), env))
