import logging
from contextlib import asynccontextmanager

from fastapi import (
    Depends,
    FastAPI,
    File,
    Form,
    HTTPException,
    Request,
    Security,
    UploadFile,
)
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.openapi.utils import get_openapi
from fastapi.responses import JSONResponse
from slowapi import _rate_limit_exceeded_handler
from slowapi.errors import RateLimitExceeded

from . import __version__
from .config import CHECKPOINT_PATH
from .exceptions import (
    ClipVQAError,
    ConfigurationError,
    FormatError,
    ShapeError,
    UsageError,
)
from .frames import FrameTensorFile
from .inference import Predictor
from .language import QualityScale
from .models import (
    EncodeMosRequest,
    EncodeMosResponse,
    ErrorResponse,
    PredictionRecord,
    QualityScaleResponse,
)
from .quality import ReferenceRatings, encode_mos
from .security import limiter, verify_api_key

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup code: load the served checkpoint if one is configured
    checkpoint = getattr(app.state, "checkpoint", None) or CHECKPOINT_PATH
    app.state.predictor = None
    if checkpoint:
        app.state.predictor = Predictor.from_checkpoint(checkpoint)
    yield


def get_predictor(request: Request) -> Predictor:
    predictor = getattr(request.app.state, "predictor", None)
    if predictor is None:
        raise HTTPException(
            status_code=503,
            detail="No checkpoint loaded; set CLIPVQA_CHECKPOINT or pass --checkpoint",
        )
    return predictor


# Create FastAPI app
app = FastAPI(
    title="CLIP-VQA API",
    description="""
    No-reference video quality prediction over FTB1 frame files.

    ## Features

    * **Quality scale**: the five-grade language descriptions and reference ratings
    * **Encode MOS**: vectorize a scaled MOS into a probability vector
    * **Predict**: quality distribution and score for an uploaded video
    * **API Key Authentication** on prediction when a key is configured
    * **Rate Limiting** for API protection

    ## Authentication

    Include an `X-API-Key` header when `CLIPVQA_API_KEY` is set on the server.
    """,
    version=__version__,
    lifespan=lifespan,
    openapi_tags=[
        {"name": "Root", "description": "Root endpoints"},
        {"name": "Quality", "description": "Quality scale and MOS encoding"},
        {"name": "Prediction", "description": "Video quality prediction"},
    ],
)


# Manually configure security schemes in OpenAPI
def custom_openapi():
    if app.openapi_schema:
        return app.openapi_schema

    openapi_schema = get_openapi(
        title=app.title,
        version=app.version,
        description=app.description,
        routes=app.routes,
    )
    openapi_schema.setdefault("components", {})["securitySchemes"] = {
        "APIKeyHeader": {
            "type": "apiKey",
            "in": "header",
            "name": "X-API-Key",
            "description": "API Key for authentication",
        },
    }

    app.openapi_schema = openapi_schema
    return app.openapi_schema


app.openapi = custom_openapi

# Add rate limiter
app.state.limiter = limiter
app.add_exception_handler(RateLimitExceeded, _rate_limit_exceeded_handler)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    """Handle validation errors with custom response."""
    return JSONResponse(
        status_code=422,
        content={
            "detail": exc.errors(),
            "error_type": "validation_error",
            "message": "Request validation failed",
        },
    )


@app.exception_handler(HTTPException)
async def http_exception_handler(request: Request, exc: HTTPException):
    """Handle HTTP exceptions with custom response."""
    return JSONResponse(
        status_code=exc.status_code,
        content={
            "detail": exc.detail,
            "error_type": "error",
            "message": "An error occurred",
        },
    )


@app.exception_handler(ClipVQAError)
async def clipvqa_exception_handler(request: Request, exc: ClipVQAError):
    """Map model-side failures onto JSON error bodies."""
    if isinstance(exc, (UsageError, ConfigurationError, ShapeError)):
        status_code = 422
    elif isinstance(exc, FormatError):
        status_code = 400
    else:
        status_code = 500
        logger.error("prediction failed: %s", exc)
    return JSONResponse(
        status_code=status_code,
        content={
            "detail": str(exc),
            "error_type": exc.error_type,
            "message": "The request could not be processed",
        },
    )


# Public endpoints
@app.get("/", tags=["Root"])
@limiter.limit("100/minute")
async def root(request: Request):
    """Root endpoint to check if the API is running."""
    predictor = getattr(request.app.state, "predictor", None)
    return {
        "message": "Welcome to the CLIP-VQA API!",
        "version": __version__,
        "docs": "/docs",
        "checkpoint": predictor.source if predictor else None,
    }


@app.get("/quality-scale", response_model=QualityScaleResponse, tags=["Quality"])
@limiter.limit("30/minute")
async def quality_scale(request: Request, mode: str = "short"):
    """The quality-language descriptions (score 5 to 1) and reference ratings."""
    scale = QualityScale.for_mode(mode)
    ratings = ReferenceRatings(count=len(scale))
    return QualityScaleResponse(
        mode=scale.mode, texts=scale.texts, ratings=ratings.values.tolist()
    )


@app.post("/encode-mos", response_model=EncodeMosResponse, tags=["Quality"])
@limiter.limit("30/minute")
async def encode_mos_endpoint(request: Request, body: EncodeMosRequest):
    """Encode a scaled MOS in [1, 5] into the g-way probability vector."""
    probs = encode_mos(body.score, ReferenceRatings())
    return EncodeMosResponse(score=body.score, probs=probs.tolist())


@app.post(
    "/predict",
    response_model=PredictionRecord,
    tags=["Prediction"],
    responses={
        400: {"model": ErrorResponse, "description": "Malformed frame file"},
        401: {"description": "Not authenticated"},
        403: {"description": "Invalid credentials"},
        422: {"model": ErrorResponse, "description": "Frames do not fit the model"},
        503: {"description": "No checkpoint loaded"},
    },
    dependencies=[Security(verify_api_key)],
)
@limiter.limit("10/minute")
def predict(
    request: Request,
    file: UploadFile = File(..., description="FTB1 frame file"),
    video_id: str = Form("upload", alias="id"),
    predictor: Predictor = Depends(get_predictor),
):
    """Predict the quality distribution and score of an uploaded video.

    A plain ``def`` so FastAPI runs the model in its worker threadpool.
    """
    payload = file.file.read()
    video = FrameTensorFile.from_bytes(payload, file.filename or "<upload>")
    return predictor.predict(video, video_id)
