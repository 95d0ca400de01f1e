"""HTTP service for the human-in-the-loop labeling workflow."""

from __future__ import annotations

import io

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from PIL import Image

from ..embstore import EmbeddingStore, pca_rgb
from ..errors import NoCoverage
from .schemas import (
    ClassDef,
    LabelPoint,
    LabelResponse,
    SessionCreate,
    SessionInfo,
    SessionState,
    TrainRequest,
    TrainResponse,
)
from .sessions import Session, SessionManager

OVERLAY_ALPHA = 160


def _hex_to_rgb(color: str):
    return tuple(int(color[i : i + 2], 16) for i in (1, 3, 5))


def _png(array: np.ndarray) -> Response:
    img = Image.fromarray(array)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return Response(content=buf.getvalue(), media_type="image/png")


def create_app(store_dir: str, sessions_dir: str, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="terrapix labeling service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    manager = SessionManager(EmbeddingStore(store_dir), sessions_dir)
    app.state.sessions = manager

    def _get(session_id: str) -> Session:
        session = manager.get(session_id)
        if session is None:
            raise HTTPException(404, "unknown session")
        return session

    @app.post("/sessions", response_model=SessionInfo)
    def create_session(body: SessionCreate):
        x0, y0, x1, y1 = body.bbox
        if not (x0 < x1 and y0 < y1):
            raise HTTPException(400, "bbox must satisfy min < max on both axes")
        try:
            session = manager.create(
                body.bbox, body.year, [c.model_dump() for c in body.classes]
            )
        except NoCoverage:
            raise HTTPException(404, "no tile coverage for this region")
        h, w = session.shape
        return SessionInfo(session_id=session.session_id, width=w, height=h)

    @app.get("/sessions/{session_id}", response_model=SessionState)
    def session_state(session_id: str):
        session = _get(session_id)
        h, w = session.shape
        return SessionState(
            session_id=session.session_id,
            bbox=list(session.bbox),
            year=session.year,
            width=w,
            height=h,
            classes=[ClassDef(**c) for c in session.classes],
            points=[LabelPoint(**p) for p in session.points],
            k=session.k,
            trained=session.trained,
        )

    @app.post("/sessions/{session_id}/classes")
    def add_class(session_id: str, body: ClassDef):
        session = _get(session_id)
        with session.lock:
            if body.id in session.class_ids():
                raise HTTPException(409, "class id already defined")
            session.classes.append(body.model_dump())
            manager.save(session)
        return {"classes": session.classes}

    @app.get("/sessions/{session_id}/pca.png")
    def pca_image(session_id: str):
        session = _get(session_id)
        return _png(pca_rgb(session.mosaic, session.valid))

    @app.post("/sessions/{session_id}/labels", response_model=LabelResponse)
    def add_label(session_id: str, body: LabelPoint):
        session = _get(session_id)
        with session.lock:
            if body.class_id not in session.class_ids():
                raise HTTPException(422, "unknown class id")
            if session.to_coords(body.x, body.y) is None:
                raise HTTPException(422, "coordinates outside session region")
            session.points.append(body.model_dump())
            manager.save(session)
            return LabelResponse(count=len(session.points))

    @app.post("/sessions/{session_id}/train", response_model=TrainResponse)
    def train(session_id: str, body: TrainRequest):
        session = _get(session_id)
        with session.lock:
            labeled_classes = {p["class_id"] for p in session.points}
            if len(labeled_classes) < 2:
                raise HTTPException(409, "need labeled points in at least 2 classes")
            if body.k > len(session.points):
                raise HTTPException(409, "k exceeds the number of labeled points")
            session.k = body.k
            session.fit()
            session.trained = True
            manager.save(session)
            return TrainResponse(trained=True, n_points=len(session.points))

    @app.get("/sessions/{session_id}/prediction.png")
    def prediction_image(session_id: str):
        session = _get(session_id)
        with session.lock:
            if not session.trained or session.model is None:
                raise HTTPException(409, "session not trained")
            classes = session.predict_map()
        h, w = classes.shape
        rgba = np.zeros((h, w, 4), dtype=np.uint8)
        for cdef in session.classes:
            sel = classes == cdef["id"]
            rgba[sel, :3] = _hex_to_rgb(cdef["color"])
            rgba[sel, 3] = OVERLAY_ALPHA
        rgba[~session.valid, 3] = 0
        return _png(rgba)

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
