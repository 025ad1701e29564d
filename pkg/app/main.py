from contextlib import asynccontextmanager
import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.api.routes import router
from app.config import get_config
from app.core.errors import DataParseError, PlatoonDragError

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# Get configuration
config = get_config()


@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup
    errors = config.validate()
    if errors:
        raise RuntimeError(f"Configuration validation failed: {'; '.join(errors)}")
    logger.info("✅ Configuration validated successfully")

    yield  # Application runs here

    logger.info("🔄 Shutting down application")


app = FastAPI(
    title=config.app_name,
    description="Platoon drag-model fitting, fuel inversion and savings analysis",
    version=config.version,
    lifespan=lifespan
)

# Allow CORS for frontend dev
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(PlatoonDragError)
async def platoon_drag_error_handler(request: Request, exc: PlatoonDragError):
    status_code = 400 if isinstance(exc, DataParseError) else 422
    logger.error(f"❌ {request.url.path}: {exc.category}: {exc.message}")
    return JSONResponse(
        status_code=status_code,
        content={"status": "error", "category": exc.category, "detail": exc.message},
    )


app.include_router(router)

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
