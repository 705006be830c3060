"""
ioc-decay FastAPI application.

Serves score queries, expiry listings and sighting ingestion over one
in-process attribute store. Build it with ``create_app``; ``uvicorn --factory
ioc_decay.api.main:app_from_env`` builds it from the environment.
"""

from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request, status
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from loguru import logger

from .. import __version__
from ..config import Settings, load_settings
from ..documents import open_store
from ..errors import (
    ClockSkew,
    IocDecayError,
    InvalidParameter,
    NegativeTau,
    ParseError,
    ReadOnlyStore,
    UnknownAttribute,
    UnknownKind,
    ValidationError,
)
from ..logconfig import configure_logging
from ..store import AttributeStore
from .dependencies import Clock, utc_now
from .routes import SERVICE_NAME, router

_STATUS_BY_ERROR: list[tuple[type[IocDecayError], int]] = [
    (UnknownAttribute, status.HTTP_404_NOT_FOUND),
    (ReadOnlyStore, status.HTTP_409_CONFLICT),
    (ClockSkew, status.HTTP_400_BAD_REQUEST),
    (NegativeTau, status.HTTP_400_BAD_REQUEST),
    (UnknownKind, status.HTTP_400_BAD_REQUEST),
    (InvalidParameter, status.HTTP_400_BAD_REQUEST),
    (ParseError, status.HTTP_400_BAD_REQUEST),
    (ValidationError, status.HTTP_400_BAD_REQUEST),
]


def status_for(error: IocDecayError) -> int:
    for error_type, code in _STATUS_BY_ERROR:
        if isinstance(error, error_type):
            return code
    return status.HTTP_500_INTERNAL_SERVER_ERROR


async def domain_error_handler(request: Request, exc: IocDecayError) -> JSONResponse:
    code = status_for(exc)
    if code >= 500:
        logger.error(f"{request.method} {request.url.path}: {exc}")
    return JSONResponse(status_code=code, content={"detail": str(exc), "type": type(exc).__name__})


async def request_validation_handler(request: Request, exc: RequestValidationError) -> JSONResponse:
    # Malformed bodies and query strings are client errors, reported as 400.
    return JSONResponse(
        status_code=status.HTTP_400_BAD_REQUEST,
        content={"detail": jsonable_encoder(exc.errors()), "type": "RequestValidationError"},
    )


def create_app(
    settings: Optional[Settings] = None,
    store: Optional[AttributeStore] = None,
    clock: Clock = utc_now,
) -> FastAPI:
    """
    Build the application.

    Args:
        settings: Engine settings; loaded from the environment when omitted
        store: Pre-built store; when omitted it is opened at start-up from
            the snapshot (or a fresh import)
        clock: Source of "now" for requests without ``at``
    """
    settings = settings or load_settings()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        logger.info(f"Starting {SERVICE_NAME} {__version__}")
        if getattr(app.state, "store", None) is None:
            app.state.store = open_store(settings, readonly=settings.api.readonly)
        logger.info(
            f"Store ready: {len(app.state.store.snapshot().attributes)} attributes, "
            f"readonly={app.state.store.readonly}"
        )

        yield

        if not app.state.store.readonly:
            app.state.store.save(settings.store_path)
        logger.info("Shutdown complete")

    app = FastAPI(title=SERVICE_NAME, version=__version__, lifespan=lifespan)
    app.state.settings = settings
    app.state.store = store
    app.state.clock = clock

    app.add_exception_handler(IocDecayError, domain_error_handler)
    app.add_exception_handler(RequestValidationError, request_validation_handler)
    app.include_router(router)
    return app


def app_from_env() -> FastAPI:
    """App factory for ``uvicorn --factory``: settings from $IOC_DECAY_CONFIG and env."""
    settings = load_settings()
    configure_logging(settings.log_level, settings.log_file)
    return create_app(settings)
