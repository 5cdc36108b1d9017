"""Local HTTP review service: image ingestion, prediction, threshold what-ifs,
tile label overrides and metric recomputation.

State is a flat on-disk store under the run directory (records.json plus an
append-only audit log); mutations are serialized behind a lock.
"""
from __future__ import annotations

import io
import json
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image as PilImage, UnidentifiedImageError

from . import aggregate, errors, imaging, metrics, model, trainer

REVIEW_STATUSES = ("unreviewed", "confirmed", "disputed")


@dataclass
class InspectionRecord:
    image_id: str
    uploaded_at: float
    rows: int
    cols: int
    tile_probs: list
    tile_verdicts: list  # model verdicts, row-major
    overrides: dict = field(default_factory=dict)  # "r,c" -> label
    review_status: str = "unreviewed"

    def effective_verdicts(self):
        out = list(self.tile_verdicts)
        for key, label in self.overrides.items():
            r, c = (int(v) for v in key.split(","))
            out[r * self.cols + c] = int(label)
        return out

    def summary(self, c: int):
        eff = self.effective_verdicts()
        count = int(sum(eff))
        n = len(eff)
        return {
            "image_id": self.image_id,
            "uploaded_at": self.uploaded_at,
            "rows": self.rows,
            "cols": self.cols,
            "n_tiles": n,
            "corroded_count": count,
            "c": c,
            "verdict": 1 if count > c else 0,
            "areal_percent": 100.0 * count / n,
            "review_status": self.review_status,
            "n_overrides": len(self.overrides),
        }

    def detail(self, c: int):
        out = self.summary(c)
        out.update(
            {
                "tile_probs": self.tile_probs,
                "tile_verdicts": self.tile_verdicts,
                "effective_verdicts": self.effective_verdicts(),
                "overrides": dict(self.overrides),
            }
        )
        return out


class SessionState:
    def __init__(self, store_dir=None, default_c: int = 0):
        if default_c < 0:
            raise ValueError("default c must be >= 0")
        self.store_dir = store_dir
        self.default_c = int(default_c)
        self.params = None
        self.model_path = None
        self.records: dict[str, InspectionRecord] = {}
        self.lock = threading.Lock()
        self._counter = 0
        if store_dir:
            os.makedirs(os.path.join(store_dir, "images"), exist_ok=True)
            self._restore()

    def load_model(self, path):
        self.params = model.load_checkpoint(path)
        self.model_path = str(path)

    # -- persistence ---------------------------------------------------------

    def _records_path(self):
        return os.path.join(self.store_dir, "records.json")

    def _restore(self):
        path = self._records_path()
        if not os.path.exists(path):
            return
        with open(path) as fh:
            data = json.load(fh)
        self.default_c = data.get("default_c", self.default_c)
        self._counter = data.get("counter", 0)
        for rec in data.get("records", []):
            self.records[rec["image_id"]] = InspectionRecord(**rec)

    def persist(self):
        if not self.store_dir:
            return
        data = {
            "default_c": self.default_c,
            "counter": self._counter,
            "records": [vars(r) for r in self.records.values()],
        }
        tmp = self._records_path() + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(data, fh)
        os.replace(tmp, self._records_path())

    def audit(self, event: dict):
        if not self.store_dir:
            return
        with open(os.path.join(self.store_dir, "audit.log"), "a") as fh:
            fh.write(json.dumps({"ts": time.time(), **event}) + "\n")

    def next_image_id(self):
        self._counter += 1
        return f"img_{self._counter:04d}"

    def image_path(self, image_id):
        return os.path.join(self.store_dir, "images", f"{image_id}.png") if self.store_dir else None


def _error(status, code, message):
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(state: SessionState, console_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="corrodet review service")
    app.state.session = state

    @app.post("/api/images", status_code=201)
    async def post_image(request: Request, image_id: str | None = None):
        if state.params is None:
            return _error(503, "no_model", "no model checkpoint loaded")
        body = await request.body()
        try:
            with PilImage.open(io.BytesIO(body)) as im:
                im.load()
                im = im.convert("RGB")
                pixels = np.asarray(im, dtype=np.uint8)
        except (UnidentifiedImageError, OSError) as exc:
            return _error(400, "undecodable", str(exc))
        tile = state.params.cfg.input_size
        if pixels.shape[0] < tile or pixels.shape[1] < tile:
            return _error(422, "too_small", f"image smaller than one {tile}px tile")
        with state.lock:
            image_id = image_id or state.next_image_id()
            img = imaging.Image(id=image_id, pixels=pixels)
            grid = imaging.tile_image(img, imaging.TilingSpec(tile_size=tile))
            tiles = np.stack([b for _, _, b in grid.tiles])
            probs = trainer.predict_probs(state.params, tiles)
            preds = aggregate.TilePredictions(image_id=image_id, probs=probs)
            rec = InspectionRecord(
                image_id=image_id,
                uploaded_at=time.time(),
                rows=grid.rows,
                cols=grid.cols,
                tile_probs=[float(p) for p in probs],
                tile_verdicts=[int(v) for v in preds.verdicts],
            )
            state.records[image_id] = rec
            if state.store_dir:
                imaging.save_image(img, state.image_path(image_id))
            state.audit({"event": "upload", "image_id": image_id})
            state.persist()
            return rec.summary(state.default_c)

    @app.get("/api/images")
    def list_images():
        return [r.summary(state.default_c) for r in state.records.values()]

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        rec = state.records.get(image_id)
        if rec is None:
            return _error(404, "unknown_image", image_id)
        return rec.detail(state.default_c)

    @app.get("/api/images/{image_id}/heatmap.png")
    def heatmap(image_id: str, alpha: float = Query(default=0.35, ge=0.0, le=1.0)):
        rec = state.records.get(image_id)
        if rec is None:
            return _error(404, "unknown_image", image_id)
        path = state.image_path(image_id)
        if path is None or not os.path.exists(path):
            return _error(404, "no_pixels", "image pixels not stored")
        img = imaging.load_image(path, image_id=image_id)
        tile = state.params.cfg.input_size if state.params else 256
        grid = imaging.tile_image(img, imaging.TilingSpec(tile_size=tile))
        palette = imaging.HeatmapPalette(blend_alpha=alpha)
        hm = imaging.render_heatmap(img, grid, rec.effective_verdicts(), palette)
        buf = io.BytesIO()
        PilImage.fromarray(hm.pixels, mode="RGB").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/threshold")
    def what_if_threshold(body: dict):
        c = body.get("c")
        commit = bool(body.get("commit", False))
        if not isinstance(c, int) or c < 0:
            return _error(400, "bad_threshold", "c must be a non-negative integer")
        with state.lock:
            flips = []
            for rec in state.records.values():
                count = sum(rec.effective_verdicts())
                old = 1 if count > state.default_c else 0
                new = 1 if count > c else 0
                if old != new:
                    flips.append({"image_id": rec.image_id, "old": old, "new": new})
            if commit:
                state.audit({"event": "threshold", "old": state.default_c, "new": c})
                state.default_c = c
                state.persist()
            return {"c": c, "committed": commit, "flips": flips}

    @app.patch("/api/images/{image_id}/tiles/{row}/{col}")
    def override_tile(image_id: str, row: int, col: int, body: dict):
        label = body.get("label")
        if label not in (0, 1):
            return _error(400, "bad_label", "label must be 0 or 1")
        with state.lock:
            rec = state.records.get(image_id)
            if rec is None:
                return _error(404, "unknown_image", image_id)
            if not (0 <= row < rec.rows and 0 <= col < rec.cols):
                return _error(404, "unknown_cell", f"({row}, {col})")
            current = rec.effective_verdicts()[row * rec.cols + col]
            if int(label) != current:
                rec.overrides[f"{row},{col}"] = int(label)
                state.audit(
                    {"event": "override", "image_id": image_id, "row": row, "col": col, "label": label}
                )
                state.persist()
            return rec.detail(state.default_c)

    @app.post("/api/images/{image_id}/review")
    def review(image_id: str, body: dict):
        status = body.get("status")
        if status not in REVIEW_STATUSES:
            return _error(400, "bad_status", f"status must be one of {REVIEW_STATUSES}")
        with state.lock:
            rec = state.records.get(image_id)
            if rec is None:
                return _error(404, "unknown_image", image_id)
            rec.review_status = status
            state.audit({"event": "review", "image_id": image_id, "status": status})
            state.persist()
            return rec.detail(state.default_c)

    @app.get("/api/metrics")
    def get_metrics():
        confirmed = [r for r in state.records.values() if r.review_status == "confirmed"]
        if not confirmed:
            return _error(409, "no_confirmed", "no operator-confirmed records")
        c = state.default_c
        # confirmed effective verdicts are ground truth; raw model output is the prediction
        labels = [1 if sum(r.effective_verdicts()) > c else 0 for r in confirmed]
        preds = [1 if sum(r.tile_verdicts) > c else 0 for r in confirmed]
        scores = [float(sum(r.tile_verdicts)) for r in confirmed]
        cc = metrics.confusion(preds, labels)
        rm = metrics.rates(cc)
        out = {
            "c": c,
            "n_confirmed": len(confirmed),
            "confusion": {"tn": cc.tn, "fp": cc.fp, "fn": cc.fn, "tp": cc.tp},
            "rates": {"tpr": rm.tpr, "fpr": rm.fpr, "ppv": rm.ppv, "f1": rm.f1},
            "roc": None,
        }
        try:
            curve = metrics.roc(scores, labels)
            out["roc"] = {"points": curve.points, "auc": curve.auc}
        except errors.SingleClass:
            pass
        return out

    @app.get("/api/model")
    def model_info():
        if state.params is None:
            return _error(503, "no_model", "no model checkpoint loaded")
        return {
            "path": state.model_path,
            "arch": state.params.cfg.to_dict(),
            "num_params": state.params.num_params(),
            "default_c": state.default_c,
        }

    console_dir = console_dir or os.environ.get("CORRODET_CONSOLE_DIR")
    if console_dir and os.path.isdir(console_dir):
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")
    return app
