"""
FastAPI dependencies: the shared store, settings and evaluation clock.
"""

from datetime import datetime, timezone
from typing import Annotated, Callable, Optional

from fastapi import Depends, Request

from ..config import Settings
from ..store import AttributeStore

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def get_store(request: Request) -> AttributeStore:
    """The store installed on the app at start-up (single instance per app)."""
    return request.app.state.store


def get_settings(request: Request) -> Settings:
    return request.app.state.settings


def get_clock(request: Request) -> Clock:
    return request.app.state.clock


def resolve_now(at: Optional[datetime], clock: Clock) -> datetime:
    """``at`` normalized to UTC, else the server clock."""
    if at is None:
        return clock()
    return at.astimezone(timezone.utc)


# Type aliases for dependency injection
StoreDep = Annotated[AttributeStore, Depends(get_store)]
ClockDep = Annotated[Clock, Depends(get_clock)]
SettingsDep = Annotated[Settings, Depends(get_settings)]
