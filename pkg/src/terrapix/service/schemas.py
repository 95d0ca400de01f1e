"""Request/response models for the labeling service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ClassDef(BaseModel):
    id: int
    name: str
    color: str = Field(pattern=r"^#[0-9a-fA-F]{6}$")


class SessionCreate(BaseModel):
    bbox: list[float] = Field(min_length=4, max_length=4)  # x0, y0, x1, y1
    year: int
    classes: list[ClassDef] = []


class SessionInfo(BaseModel):
    session_id: str
    width: int
    height: int


class SessionState(BaseModel):
    session_id: str
    bbox: list[float]
    year: int
    width: int
    height: int
    classes: list[ClassDef]
    points: list[LabelPoint]
    k: int
    trained: bool


class LabelPoint(BaseModel):
    x: float
    y: float
    class_id: int


class LabelResponse(BaseModel):
    count: int


class TrainRequest(BaseModel):
    k: int = 5


class TrainResponse(BaseModel):
    trained: bool
    n_points: int


SessionState.model_rebuild()
