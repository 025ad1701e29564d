from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import pandas as pd

from app.config import get_config
from app.core.analysis import Abscissa, SavingsCurve, headway_table, platoon_average_reduction, position_reductions, savings_curve
from app.core.data_loader import FixtureCatalog, load_model, resolve_spec, write_frame, write_json, write_manifest
from app.core.errors import InvalidProblem
from app.core.fuel_model import Environment
from app.core.types import GapPolicy, PlatoonConfig

logger = logging.getLogger(__name__)

MEASUREMENT_VEHICLES = ("ldv_lumina_apv", "bus_s80", "hdt_vnl670")


class AnalysisService:
    def __init__(self, catalog: Optional[FixtureCatalog] = None):
        self.config = get_config()
        self.catalog = catalog or FixtureCatalog()

    def environment(self) -> Environment:
        return Environment(air_density_kgm3=self.config.air_density_kgm3, gravity_ms2=self.config.gravity_ms2)

    def platoon(self, vehicle_ref: str, size: int, speed_kmh: float, gap: GapPolicy,
                model_paths: Optional[Sequence[str]] = None) -> PlatoonConfig:
        """Assemble a platoon; models come from files when given, else from the published set"""
        spec = resolve_spec(vehicle_ref, self.catalog)
        if model_paths:
            models = {}
            for path in model_paths:
                model = load_model(path)
                if model.position in models:
                    raise InvalidProblem(f"two {model.position.value} models given ({path})")
                models[model.position] = model
        else:
            models = self.catalog.platoon_models(spec.vehicle_class, size)
        try:
            return PlatoonConfig(vehicle=spec, size=size, speed_kmh=speed_kmh, gap=gap, models=models)
        except ValueError as e:
            raise InvalidProblem(str(e)) from e

    def reductions(self, config: PlatoonConfig) -> Dict[str, float]:
        env = self.environment()
        values = dict(position_reductions(config, env))
        values["average"] = platoon_average_reduction(config, env)
        logger.info(f"🔍 {config.size} x {config.vehicle.name} at {config.gap_m:.2f} m: average {values['average']:.4%}")
        return values

    def curve(self, vehicle_ref: str, size: int, speed_kmh: float, abscissa: Abscissa,
              x_range: Tuple[float, float], step: float, model_paths: Optional[Sequence[str]] = None) -> SavingsCurve:
        placeholder = GapPolicy(distance_m=x_range[0]) if abscissa == Abscissa.GAP_M else GapPolicy(time_s=x_range[0])
        config = self.platoon(vehicle_ref, size, speed_kmh, placeholder, model_paths)
        return savings_curve(config, abscissa, x_range, step, self.environment())

    def write_curve(self, curve: SavingsCurve, output_path: str, inputs: Sequence[str] = ()) -> List[Path]:
        """CSV (x, per-position..., average) plus a JSON document with metadata and samples"""
        csv_path = write_frame(curve.to_frame(), output_path)
        json_path = write_json(
            {**curve.metadata(), "samples": [s.model_dump() for s in curve.samples]},
            Path(output_path).with_suffix(".json"),
        )
        write_manifest("curve", [p for p in inputs if Path(p).exists()], [csv_path, json_path], self.config.snapshot())
        logger.info(f"✅ Curve with {len(curve.samples)} samples written to {csv_path}")
        return [csv_path, json_path]

    def headways(self, vehicle_refs: Optional[Sequence[str]] = None, gap_time_s: Optional[float] = None,
                 speed_kmh: Optional[float] = None) -> pd.DataFrame:
        specs = [resolve_spec(ref, self.catalog) for ref in (vehicle_refs or MEASUREMENT_VEHICLES)]
        return headway_table(
            specs,
            gap_time_s if gap_time_s is not None else self.config.time_gap_s,
            speed_kmh if speed_kmh is not None else self.config.curve_speed_kmh,
        )
