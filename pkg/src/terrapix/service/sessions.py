"""Labeling-session state: persistence, coordinate snapping, kNN fitting."""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from ..downstream import KnnModel, knn_fit, knn_predict
from ..embstore import EmbeddingStore, RegionQuery

DEFAULT_PALETTE = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
    "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080",
]


@dataclass
class Session:
    session_id: str
    bbox: tuple
    year: int
    classes: list  # dicts: {id, name, color}
    points: list  # dicts: {x, y, class_id}
    k: int = 5
    trained: bool = False
    # runtime-only state
    mosaic: np.ndarray | None = None
    valid: np.ndarray | None = None
    geo: dict | None = None
    model: KnnModel | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def shape(self):
        return self.mosaic.shape[:2]

    def to_coords(self, x: float, y: float):
        """Map units -> (row, col) on the session grid; None when outside."""
        ps = self.geo["pixel_size"]
        col = math.floor((x - self.geo["origin_x"]) / ps)
        row = math.floor((y - self.geo["origin_y"]) / ps)
        h, w = self.shape
        if 0 <= row < h and 0 <= col < w:
            return row, col
        return None

    def class_ids(self):
        return {c["id"] for c in self.classes}

    def fit(self):
        coords = [self.to_coords(p["x"], p["y"]) for p in self.points]
        emb = np.stack([self.mosaic[r, c] for r, c in coords])
        labels = np.array([p["class_id"] for p in self.points], dtype=np.int64)
        self.model = knn_fit(emb, labels, self.k)

    def predict_map(self) -> np.ndarray:
        h, w, d = self.mosaic.shape
        return knn_predict(self.model, self.mosaic.reshape(-1, d)).reshape(h, w)

    def to_doc(self) -> dict:
        return {
            "session_id": self.session_id,
            "bbox": list(self.bbox),
            "year": self.year,
            "classes": self.classes,
            "points": self.points,
            "k": self.k,
            "trained": self.trained,
        }


class SessionManager:
    """Sessions persisted as JSON files; mosaics cached in memory."""

    def __init__(self, store: EmbeddingStore, sessions_dir: str):
        self.store = store
        self.dir = sessions_dir
        os.makedirs(sessions_dir, exist_ok=True)
        self._sessions = {}
        self._lock = threading.Lock()

    def _load_mosaic(self, session: Session):
        query = RegionQuery(*session.bbox, year=session.year)
        session.mosaic, session.valid, session.geo = self.store.fetch_region(query)

    def create(self, bbox, year, classes) -> Session:
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            bbox=tuple(bbox),
            year=year,
            classes=classes or [],
            points=[],
        )
        self._load_mosaic(session)
        with self._lock:
            self._sessions[session.session_id] = session
        self.save(session)
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            if session_id in self._sessions:
                return self._sessions[session_id]
        path = os.path.join(self.dir, f"{session_id}.json")
        if not os.path.exists(path):
            return None
        with open(path) as fh:
            doc = json.load(fh)
        session = Session(
            session_id=doc["session_id"],
            bbox=tuple(doc["bbox"]),
            year=doc["year"],
            classes=doc["classes"],
            points=doc["points"],
            k=doc["k"],
            trained=doc["trained"],
        )
        self._load_mosaic(session)
        if session.trained and session.points:
            session.fit()
        with self._lock:
            self._sessions[session_id] = session
        return session

    def save(self, session: Session):
        path = os.path.join(self.dir, f"{session.session_id}.json")
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(session.to_doc(), fh, indent=1)
        os.replace(tmp, path)
