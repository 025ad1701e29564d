"""Recompute published figures from the fixtures and compare them with the expected values."""

from typing import List, Optional
import logging

from pydantic import BaseModel

from app.config import get_config
from app.core.analysis import headway_and_flow, platoon_average_reduction
from app.core.data_loader import FixtureCatalog
from app.core.errors import InvalidProblem, PlatoonDragError
from app.core.fitter import FitProblem, fit_unconstrained, synthetic_series, tie_to_breakpoint
from app.core.fuel_model import Environment
from app.core.types import GapPolicy, PlatoonConfig, continuity_error

logger = logging.getLogger(__name__)

TARGETS = ("table2", "headways", "savings_summary")
# relative errors of near-zero coefficients are measured against this floor
RELATIVE_FLOOR = 1e-3


class ReproductionItem(BaseModel):
    item: str
    computed: Optional[float]
    expected: float
    tolerance: float
    passed: bool
    detail: str = ""


class ReproductionReport(BaseModel):
    target: str
    items: List[ReproductionItem]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    @property
    def failures(self) -> List[ReproductionItem]:
        return [item for item in self.items if not item.passed]

    def summary(self) -> dict:
        return {"target": self.target, "passed": self.passed,
                "items": [item.model_dump() for item in self.items]}


def _check(item: str, computed: float, expected: float, tolerance: float, detail: str = "") -> ReproductionItem:
    return ReproductionItem(item=item, computed=computed, expected=expected, tolerance=tolerance,
                            passed=abs(computed - expected) <= tolerance, detail=detail)


def _relative_error(fitted: float, truth: float) -> float:
    return abs(fitted - truth) / max(abs(truth), RELATIVE_FLOOR)


class ReproductionService:
    def __init__(self, catalog: Optional[FixtureCatalog] = None):
        self.config = get_config()
        self.catalog = catalog or FixtureCatalog()

    def run(self, target: str) -> ReproductionReport:
        if target not in TARGETS:
            raise InvalidProblem(f"unknown reproduction target '{target}'; choose from {', '.join(TARGETS)}")
        expected = self.catalog.reproduction().get(target)
        if not expected:
            raise InvalidProblem(f"no expected values for '{target}' in the fixtures")
        items = getattr(self, f"_{target}")(expected)
        report = ReproductionReport(target=target, items=items)
        status = "✅" if report.passed else "❌"
        logger.info(f"{status} reproduce {target}: {len(items) - len(report.failures)}/{len(items)} items pass")
        return report

    def _environment(self) -> Environment:
        return Environment(air_density_kgm3=self.config.air_density_kgm3, gravity_ms2=self.config.gravity_ms2)

    def _table2(self, expected: dict) -> List[ReproductionItem]:
        """Continuity of every published row with a G_o, then noiseless parameter recovery."""
        items = []
        for (vehicle_class, size, position), model in self.catalog.models.items():
            label = f"{vehicle_class.value}-{size}-{position.value}"
            error = continuity_error(model)
            if error is not None:
                note = self.catalog.errata.get((vehicle_class, size, position), "")
                items.append(_check(f"{label} continuity", error, 0.0, expected["continuity_tolerance"], note))

            truth = tie_to_breakpoint(model)
            series = synthetic_series(truth, n=expected["samples"], lo_frac=expected["lo_frac"],
                                      hi_frac=expected["hi_frac"])
            try:
                result = fit_unconstrained(FitProblem(data=series, include_g_o=True, position=position,
                                                      platoon_size=size, vehicle_class=vehicle_class))
            except PlatoonDragError as e:
                items.append(ReproductionItem(item=f"{label} recovery", computed=None, expected=0.0,
                                              tolerance=expected["parameter_rtol"], passed=False, detail=str(e)))
                continue
            fitted = result.model
            for name in ("a", "b", "c"):
                items.append(_check(f"{label} recovered {name} (relative error)",
                                    _relative_error(getattr(fitted, name), getattr(truth, name)), 0.0,
                                    expected["parameter_rtol"], f"truth {getattr(truth, name):.6g}"))
            items.append(_check(f"{label} recovered G_o (relative error)",
                                _relative_error(fitted.g_o_m, truth.g_o_m), 0.0,
                                expected["breakpoint_rtol"], f"truth {truth.g_o_m:.6g} m"))
        return items

    def _headways(self, expected: dict) -> List[ReproductionItem]:
        items = []
        for row in expected["rows"]:
            spec = self.catalog.spec(row["vehicle"])
            headway_s, flow = headway_and_flow(spec, expected["gap_time_s"], expected["speed_kmh"])
            items.append(_check(f"{spec.name} headway_s", headway_s, row["headway_s"],
                                expected["headway_tolerance_s"]))
            items.append(_check(f"{spec.name} flow_veh_per_hr", flow, row["flow_veh_per_hr"],
                                expected["flow_tolerance_veh_per_hr"]))
        return items

    def _savings_summary(self, expected: dict) -> List[ReproductionItem]:
        env = self._environment()
        size = expected["platoon_size"]
        items = []
        for row in expected["rows"]:
            spec = self.catalog.spec(row["vehicle"])
            config = PlatoonConfig(
                vehicle=spec, size=size, speed_kmh=expected["speed_kmh"],
                gap=GapPolicy(time_s=row["time_gap_s"]),
                models=self.catalog.platoon_models(spec.vehicle_class, size),
            )
            average_pct = 100.0 * platoon_average_reduction(config, env)
            detail = "; ".join(filter(None, [f"gap {config.gap_m:.2f} m", row.get("note", "")]))
            item = _check(f"{spec.name} average at {row['time_gap_s']} s (%)", average_pct,
                          row["expected_pct"], row["tolerance_pct"], detail)
            if not item.passed:
                logger.warning(f"⚠️ {item.item}: {average_pct:.2f} outside {row['expected_pct']} ± {row['tolerance_pct']}")
            items.append(item)
        return items
