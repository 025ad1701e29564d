from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional
import logging
from pathlib import Path

import yaml

logger = logging.getLogger(__name__)

PACKAGE_DIR = Path(__file__).resolve().parent


@dataclass
class Config:
    """
    Configuration class for the application.

    Defaults live here; a YAML key-value file may override any field
    (see `load_config`). Environment variables are not consulted.
    """
    # General settings
    app_name: str = "platoon-drag"
    version: str = "1.0.0"

    # Fixture and output locations
    fixtures_dir: str = str(PACKAGE_DIR / "fixtures")
    output_dir: str = "./output"

    # Fit settings
    max_iterations: int = 200
    tolerance: float = 1e-10
    multistart: int = 8
    multistart_span: float = 10.0

    # Environment settings
    air_density_kgm3: float = 1.2256
    gravity_ms2: float = 9.8066

    # Rolling resistance defaults (applied to fixture vehicles missing them)
    rolling_cr: float = 1.75
    rolling_c1: float = 0.0328
    rolling_c2: float = 4.575

    # Inversion
    inversion_scale_n: float = 1.0

    # Breakpoint bracket for models without a recorded G_o
    breakpoint_bracket_m: List[float] = field(default_factory=lambda: [1e-3, 1e3])
    breakpoint_xtol_m: float = 1e-6

    # Curve settings
    curve_speed_kmh: float = 100.0
    curve_step_m: float = 1.0
    curve_step_s: float = 0.05
    time_gap_s: float = 0.5

    # Available options shown by the HTTP surface
    available_abscissae: List[str] = field(default_factory=lambda: ["gap_m", "time_s"])
    available_targets: List[str] = field(default_factory=lambda: ["table2", "headways", "savings_summary"])

    def validate(self) -> List[str]:
        """Return configuration errors; empty when the configuration is usable"""
        errors = []

        if self.max_iterations < 1:
            errors.append("max_iterations must be >= 1")
        if not self.tolerance > 0:
            errors.append("tolerance must be > 0")
        if self.multistart < 1:
            errors.append("multistart must be >= 1")
        if not self.multistart_span > 1:
            errors.append("multistart_span must be > 1")
        if not 0.8 < self.air_density_kgm3 < 1.5:
            errors.append("air_density_kgm3 must be in (0.8, 1.5)")
        if not self.gravity_ms2 > 0:
            errors.append("gravity_ms2 must be > 0")
        if min(self.rolling_cr, self.rolling_c1, self.rolling_c2) < 0:
            errors.append("rolling resistance constants must be >= 0")
        if not self.inversion_scale_n > 0:
            errors.append("inversion_scale_n must be > 0")
        if len(self.breakpoint_bracket_m) != 2 or not 0 < self.breakpoint_bracket_m[0] < self.breakpoint_bracket_m[1]:
            errors.append("breakpoint_bracket_m must be [lo, hi] with 0 < lo < hi")
        if not self.breakpoint_xtol_m > 0:
            errors.append("breakpoint_xtol_m must be > 0")
        if not Path(self.fixtures_dir).is_dir():
            errors.append(f"fixtures_dir does not exist: {self.fixtures_dir}")

        for error in errors:
            logger.error(f"❌ Config Error: {error}")
        return errors

    def snapshot(self) -> Dict[str, Any]:
        return asdict(self)


# Global config instance
config = Config()


def get_config() -> Config:
    """Get the global configuration instance"""
    return config


def load_config(path: Optional[str] = None, **overrides) -> Config:
    """Build a Config from a YAML file plus keyword overrides and make it the global instance."""
    global config
    values: Dict[str, Any] = {}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {path} must hold a key-value mapping")
        values.update(loaded)
    values.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in fields(Config)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")

    config = Config(**values)
    logger.debug(f"🔧 Config loaded from {path or 'defaults'}")
    return config
