# app/api/routes.py
from fastapi import APIRouter, HTTPException
from typing import List, Optional, Tuple
from pydantic import BaseModel, Field

from app.core.analysis import Abscissa
from app.core.errors import PlatoonDragError
from app.core.types import MeasurementSeries, Position, SeriesKind, VehicleClass
from app.services.analysis_service import AnalysisService
from app.services.fitting_service import FittingService
from app.services.reproduction_service import ReproductionService

router = APIRouter()

# Global service instances
fitting_service = FittingService()
analysis_service = AnalysisService(fitting_service.catalog)
reproduction_service = ReproductionService(fitting_service.catalog)


class FitRequest(BaseModel):
    points: List[Tuple[float, float]]
    kind: SeriesKind = SeriesKind.DRAG_RATIO
    speed_kmh: Optional[float] = None
    spec: Optional[str] = None
    n: Optional[float] = None
    include_g_o: bool = True
    g_o_bounds: Optional[Tuple[float, float]] = None
    position: Position = Position.TRAIL
    platoon_size: int = Field(default=2, ge=2)
    vehicle_class: Optional[VehicleClass] = None


class InvertRequest(BaseModel):
    points: List[Tuple[float, float]]
    speed_kmh: float
    spec: str
    n: Optional[float] = None


class CurveRequest(BaseModel):
    spec: str
    size: int = Field(default=3, ge=2)
    speed_kmh: float = 100.0
    abscissa: Abscissa = Abscissa.GAP_M
    x_range: Tuple[float, float]
    step: float


@router.get("/available-options")
async def get_available_options():
    """Vehicles, datasets and enumerations accepted by the endpoints"""
    return fitting_service.get_available_options()


@router.get("/status")
async def get_status():
    """Configuration health and the last run"""
    return fitting_service.get_status()


@router.post("/fit")
async def fit(request: FitRequest):
    """Fit a drag-ratio (or fuel-ratio, inverted first) series"""
    try:
        series = MeasurementSeries(kind=request.kind, points=request.points, source="http",
                                   speed_kmh=request.speed_kmh)
        result = fitting_service.fit_series(
            series, spec_ref=request.spec, n=request.n,
            include_g_o=request.include_g_o, g_o_bounds=request.g_o_bounds, position=request.position,
            platoon_size=request.platoon_size, vehicle_class=request.vehicle_class,
        )
        return {
            "status": "success",
            "model": result.model.model_dump(mode="json"),
            "report": fitting_service.report(result),
        }
    except PlatoonDragError:
        raise
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/invert")
async def invert(request: InvertRequest):
    """Fuel ratios -> drag ratios"""
    try:
        series = MeasurementSeries(kind=SeriesKind.FUEL_RATIO, points=request.points, source="http",
                                   speed_kmh=request.speed_kmh)
        drag = fitting_service.invert_series(series, request.spec, n=request.n)
        return {"status": "success", "points": drag.points}
    except PlatoonDragError:
        raise
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/curve")
async def curve(request: CurveRequest):
    """Per-position and average fuel reduction curve"""
    try:
        result = analysis_service.curve(request.spec, request.size, request.speed_kmh, request.abscissa,
                                        request.x_range, request.step)
        return {"status": "success", **result.metadata(),
                "samples": [s.model_dump() for s in result.samples]}
    except PlatoonDragError:
        raise
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.get("/headways")
async def headways(gap_time_s: Optional[float] = None, speed_kmh: Optional[float] = None):
    """Headway and saturation flow of the measurement vehicles"""
    table = analysis_service.headways(gap_time_s=gap_time_s, speed_kmh=speed_kmh)
    return {"status": "success", "rows": table.to_dict(orient="records")}


@router.get("/reproduce/{target}")
async def reproduce(target: str):
    """Recompute a published figure set; `passed` tells whether every item is within tolerance"""
    return reproduction_service.run(target).summary()
