"""HTTP service around the proofreading workbench.

A FastAPI app exposes projects, datasets, sessions, tile rendering,
editing, training and analysis under ``/api/v1``.  Persistence is a
directory per project holding JSON manifests plus PNG/binary payloads;
there is no database.

Every session mutation appends one JSON line to the session's journal.
Replaying the journal over the stored initial artifacts reproduces the
live state bit-exactly, which doubles as the crash-recovery path: a
training event references its saved checkpoint, so replay loads weights
and re-runs the deterministic prediction instead of retraining.

Mutating endpoints accept an optional client token; a repeated token
returns the recorded response instead of re-executing, making retries
safe.  Unknown ids in URLs or entity references in bodies give 404;
malformed payloads give 422 with field-addressed details (a failing
batched edit rolls the whole batch back); a second training run on one
session gives 409.
"""

from __future__ import annotations

import io
import json
import math
import shutil
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from PIL import Image

from . import learn
from . import mito as mito_ops
from . import morpho, structure
from .imgproc import (BlendSpec, ChannelRaster, EnhancementParams, LayerSpec,
                      PixelSet, blend, enhance, load_channel)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ServerConfig:
    """Deployment knobs; a JSON file with the same keys overrides defaults."""

    data_root: str
    host: str = "127.0.0.1"
    port: int = 8765
    max_train_seconds: float = 60.0
    bootstrap_seconds: float = 10.0

    @classmethod
    def from_json(cls, path, **overrides) -> "ServerConfig":
        doc = json.loads(Path(path).read_text())
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)


def _error(status: int, loc, msg: str, kind: str):
    raise HTTPException(status, detail=[
        {"loc": list(loc), "msg": msg, "type": kind}])


def _invalid(loc, msg):
    _error(422, loc, msg, "value_error")


def _missing(loc, msg):
    _error(404, loc, msg, "not_found")


def _fresh_id(prefix: str) -> str:
    return f"{prefix}-{uuid.uuid4().hex[:10]}"


DEFAULT_PARAMS = {
    "venus": {"brightness": 0.5, "contrast": 0.5, "translate": 0.5},
    "mito": {"brightness": 0.5, "contrast": 0.5, "translate": 0.5},
    "blend": {
        "venus": {"opacity": 1.0, "colormap": "yellow"},
        "mito": {"opacity": 0.5, "colormap": "red"},
        "labels": {"opacity": 0.0, "colormap": "structure"},
        "objects": {"opacity": 0.0, "colormap": "objects"},
    },
    "sigma_s": 0.5,
    "sigma_m": 0.5,
    "sigma_e": 0.5,
}


class TokenStore:
    """Recorded responses of mutating requests, keyed by client token."""

    def __init__(self, path: Path):
        self._path = path
        self._lock = threading.Lock()
        self._seen = {}
        if path.exists():
            self._seen = json.loads(path.read_text())

    def recall(self, token):
        if token is None:
            return None
        with self._lock:
            return self._seen.get(token)

    def record(self, token, status: int, body) -> None:
        if token is None:
            return
        with self._lock:
            self._seen[token] = {"status": status, "body": body}
            tmp = self._path.with_suffix(".tmp")
            tmp.write_text(json.dumps(self._seen, sort_keys=True))
            tmp.replace(self._path)


@dataclass
class TrainJob:
    """Polled status of one background fine-tuning run."""

    id: str
    session_id: str
    phase: str = "queued"      # queued | training | applying | done | failed
    progress: float = 0.0
    error: str = ""

    def as_dict(self):
        doc = {"id": self.id, "session_id": self.session_id,
               "phase": self.phase, "progress": self.progress}
        if self.error:
            doc["error"] = self.error
        return doc


class SessionRuntime:
    """In-memory state of one open dataset.

    Everything mutable here is reconstructed from ``initial/`` plus the
    journal, so the instance itself is never persisted.
    """

    def __init__(self, sid, pid, gid, did, directory, dataset_doc,
                 venus, mito, labels, state):
        self.id = sid
        self.project_id = pid
        self.group_id = gid
        self.dataset_id = did
        self.dir = Path(directory)
        self.dataset = dataset_doc
        self.venus_raw = venus
        self.mito_raw = mito
        self.labels = structure.LabelEditSession(labels)
        self.mito = mito_ops.MitoEditSession(state)
        self.params = json.loads(json.dumps(DEFAULT_PARAMS))
        self.venus_enh = enhance(venus, EnhancementParams())
        self.mito_enh = enhance(mito, EnhancementParams())
        self.model = None
        self.subsets = {}
        self.snapshots = []
        self.next_subset_id = 1
        self.next_snapshot_id = 1
        # one tag per label-journal entry: ("brush", coverage) | ("train",)
        self.structure_ops = []
        self.lock = threading.RLock()
        self.job = None
        self._features = None

    @property
    def shape(self):
        return self.venus_raw.values.shape

    def features(self) -> learn.FeatureStack:
        if self._features is None:
            self._features = learn.extract_features(self.venus_raw)
        return self._features

    def journal_path(self) -> Path:
        return self.dir / "journal.jsonl"

    def append_journal(self, event: dict) -> None:
        with open(self.journal_path(), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def feature_table(self):
        objects = {o.id: o for o in self.mito.state.objects}
        px = self.venus_raw.pixel_size_um
        feats = {i: morpho.compute_features(o, self.labels.labels, px)
                 for i, o in objects.items()}
        return objects, feats


# --- journalable state transitions -------------------------------------------
# Live handlers and journal replay share these, so both paths stay identical.

def _set_params(sess: SessionRuntime, doc: dict) -> None:
    for name in ("venus", "mito"):
        EnhancementParams(**doc[name])
    for layer in doc["blend"].values():
        LayerSpec(layer["opacity"], layer["colormap"])
    for name in ("sigma_s", "sigma_m", "sigma_e"):
        if not 0.0 <= float(doc[name]) <= 1.0:
            raise ValueError(f"{name} must be in [0, 1]")
    sess.params = doc
    sess.venus_enh = enhance(sess.venus_raw, EnhancementParams(**doc["venus"]))
    sess.mito_enh = enhance(sess.mito_raw, EnhancementParams(**doc["mito"]))


def _merge_params(current: dict, patch: dict) -> dict:
    doc = json.loads(json.dumps(current))
    for name in ("venus", "mito"):
        if patch.get(name):
            doc[name].update({k: v for k, v in patch[name].items()
                              if v is not None})
    for name, layer in (patch.get("blend") or {}).items():
        if name not in doc["blend"]:
            raise ValueError(f"unknown blend layer {name!r}")
        doc["blend"][name].update({k: v for k, v in layer.items()
                                   if v is not None})
    for name in ("sigma_s", "sigma_m", "sigma_e"):
        if patch.get(name) is not None:
            doc[name] = float(patch[name])
    return doc


def _apply_edit(sess: SessionRuntime, edit: dict):
    """Run one brush stroke or mito edit; returns (target, summary)."""
    kind = edit.get("kind")
    if kind == "brush":
        stroke = structure.BrushStroke(
            int(edit["center"]), float(edit["radius"]), int(edit["label"]),
            float(edit.get("sigma_s", sess.params["sigma_s"])))
        coverage = structure.brush_pixels(sess.venus_enh, stroke)
        changed = sess.labels.paint(sess.venus_enh, stroke)
        sess.structure_ops.append(("brush", coverage.indices))
        return "structure", {"kind": "brush", "changed": len(changed),
                             "bbox": changed.bbox(sess.shape[1])}
    if kind == "mito":
        op = edit.get("op")
        before = sess.mito.state.foreground_mask()
        sigma = float(edit.get("sigma_m", sess.params["sigma_m"]))
        if op == "exclude":
            ids = edit["ids"] if "ids" in edit else [edit["object_id"]]
            sess.mito.exclude(ids)
        elif op == "split":
            line = mito_ops.rasterize_polyline(edit["line"], sess.shape[1])
            sess.mito.split(int(edit["object_id"]), line, sess.mito_enh, sigma)
        elif op in ("merge", "include", "merge_or_include"):
            line = mito_ops.rasterize_polyline(edit["line"], sess.shape[1])
            sess.mito.merge_or_include(line, sess.mito_enh, sigma)
        else:
            raise ValueError(f"unknown mito edit op {op!r}")
        delta = PixelSet.from_mask(before ^ sess.mito.state.foreground_mask())
        return "mito", {"kind": "mito", "op": op, "changed": len(delta),
                        "bbox": delta.bbox(sess.shape[1])}
    raise ValueError(f"unknown edit kind {kind!r}")


def _apply_undo(sess: SessionRuntime, target: str) -> dict:
    if target == "structure":
        if not sess.labels.can_undo():
            return {"undone": False}
        reverted = sess.labels.undo()
        sess.structure_ops.pop()
        return {"undone": True, "changed": len(reverted)}
    if target == "mito":
        return {"undone": sess.mito.undo()}
    raise ValueError(f"unknown undo target {target!r}")


def _apply_train_result(sess: SessionRuntime, model) -> dict:
    """Swap in the new prediction as a single undoable label edit."""
    _, predicted = learn.predict(model, sess.features())
    current = sess.labels.labels.labels
    moved = np.flatnonzero((predicted != current).ravel())
    changed = sess.labels.put(PixelSet(moved),
                              predicted.ravel()[moved], note="train")
    sess.structure_ops.append(("train", None))
    return {"changed": len(changed), "bbox": changed.bbox(sess.shape[1])}


def _user_signal(sess: SessionRuntime):
    """Training signal from every still-live brush stroke.

    The mask covers whole strokes, not just pixels a stroke recolored:
    painting over an already-correct region is still an assertion.  The
    targets are simply the current raster, which holds what the user
    painted; the previous-label term is the same raster, anchoring the
    classifier everywhere the user has not spoken.
    """
    h, w = sess.shape
    mask = np.zeros(h * w, bool)
    for tag, coverage in sess.structure_ops:
        if tag == "brush":
            mask[coverage] = True
    if not mask.any():
        return None
    current = sess.labels.labels.labels.astype(np.int64)
    return learn.TrainSignal.from_labels(
        current, mask.reshape(h, w).astype(np.uint8), current, 4)


def _apply_subset(sess: SessionRuntime, doc: dict) -> None:
    node = morpho.node_from_dict(doc["definition"])
    objects, feats = sess.feature_table()
    members = tuple(sorted(morpho.evaluate(node, feats, objects)))
    subset = morpho.Subset(int(doc["id"]), doc["name"], members, node)
    sess.subsets[subset.id] = subset
    sess.next_subset_id = max(sess.next_subset_id, subset.id + 1)


def _apply_snapshot(sess: SessionRuntime, doc: dict) -> morpho.Snapshot:
    objects, feats = sess.feature_table()
    if doc["subset_id"] is None:
        subset = morpho.Subset(0, "all", tuple(sorted(objects)), None)
    else:
        subset = sess.subsets[int(doc["subset_id"])]
    snap = morpho.record_snapshot(
        subset, objects, feats, sess.labels.labels,
        comment=doc["comment"], group=doc["group"], image=doc["image"],
        snapshot_id=int(doc["id"]), created_at=doc["created_at"])
    sess.snapshots.append(snap)
    sess.next_snapshot_id = max(sess.next_snapshot_id, snap.id + 1)
    return snap


def _apply_event(store, sess: SessionRuntime, event: dict) -> None:
    kind = event["kind"]
    if kind == "params":
        _set_params(sess, event["params"])
    elif kind == "edits":
        for edit in event["edits"]:
            _apply_edit(sess, edit)
    elif kind == "undo":
        _apply_undo(sess, event["target"])
    elif kind == "train":
        model = learn.load_checkpoint(sess.dir / event["checkpoint"])
        sess.model = model
        _apply_train_result(sess, model)
    elif kind == "subset":
        _apply_subset(sess, event)
    elif kind == "snapshot":
        _apply_snapshot(sess, event)
    else:
        raise ValueError(f"unknown journal event kind {kind!r}")


# --- persistent store ---------------------------------------------------------

class Store:
    """Registry of projects and lazily loaded sessions under one data root."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.root = Path(config.data_root)
        (self.root / "projects").mkdir(parents=True, exist_ok=True)
        self.lock = threading.RLock()
        self.tokens = TokenStore(self.root / "tokens.json")
        self.projects = {}
        self.sessions = {}
        self.jobs = {}
        for pdir in sorted((self.root / "projects").iterdir()):
            doc = json.loads((pdir / "project.json").read_text())
            self.projects[doc["id"]] = doc

    # -- lookups ---------------------------------------------------------

    def project(self, pid: str) -> dict:
        if pid not in self.projects:
            _missing(["path", "project_id"], f"unknown project {pid!r}")
        return self.projects[pid]

    def group(self, gid: str):
        for pid, doc in self.projects.items():
            if gid in doc["groups"]:
                return pid, doc["groups"][gid]
        _missing(["path", "group_id"], f"unknown group {gid!r}")

    def dataset(self, did: str):
        for pid, doc in self.projects.items():
            for gid, group in doc["groups"].items():
                if did in group["datasets"]:
                    return pid, gid, group["datasets"][did]
        _missing(["body", "dataset_id"], f"unknown dataset {did!r}")

    def dataset_exists(self, did: str) -> bool:
        return any(did in group["datasets"]
                   for doc in self.projects.values()
                   for group in doc["groups"].values())

    def save_project(self, doc: dict) -> None:
        pdir = self.root / "projects" / doc["id"]
        pdir.mkdir(parents=True, exist_ok=True)
        (pdir / "project.json").write_text(json.dumps(doc, indent=2,
                                                      sort_keys=True))

    def session_dir(self, pid: str, sid: str) -> Path:
        return self.root / "projects" / pid / "sessions" / sid

    # -- session lifecycle -------------------------------------------------

    def session(self, sid: str) -> SessionRuntime:
        with self.lock:
            if sid in self.sessions:
                return self.sessions[sid]
            for pid in self.projects:
                sdir = self.session_dir(pid, sid)
                if (sdir / "session.json").exists():
                    sess = self._load_session(sdir)
                    self.sessions[sid] = sess
                    return sess
        _missing(["path", "session_id"], f"unknown session {sid!r}")

    def _load_session(self, sdir: Path) -> SessionRuntime:
        doc = json.loads((sdir / "session.json").read_text())
        pid, gid, dataset = self.dataset(doc["dataset_id"])
        venus = load_channel(dataset["venus"], dataset["pixel_size_um"])
        mito = load_channel(dataset["mito"], dataset["pixel_size_um"])
        labels = structure.import_labels(sdir / "initial" / "labels.png")
        state = mito_ops.state_from_json(
            (sdir / "initial" / "objects.json").read_text())
        sess = SessionRuntime(doc["id"], pid, gid, doc["dataset_id"], sdir,
                              dataset, venus, mito, labels, state)
        if sess.journal_path().exists():
            with open(sess.journal_path(), encoding="utf-8") as fh:
                for line in fh:
                    _apply_event(self, sess, json.loads(line))
        return sess

    def create_session(self, body: dict) -> SessionRuntime:
        did = body.get("dataset_id")
        if not did:
            _invalid(["body", "dataset_id"], "dataset_id is required")
        pid, gid, dataset = self.dataset(did)
        sid = body.get("id") or _fresh_id("s")
        sdir = self.session_dir(pid, sid)
        with self.lock:
            if sdir.exists():
                _error(409, ["body", "id"],
                       f"session {sid!r} already exists", "conflict")
            sdir.mkdir(parents=True)
        try:
            return self._initialize_session(body, pid, gid, did, dataset,
                                            sid, sdir)
        except Exception:
            shutil.rmtree(sdir, ignore_errors=True)
            raise

    def _initialize_session(self, body, pid, gid, did, dataset, sid, sdir):
        seed = int(body.get("seed", 0))
        try:
            venus = load_channel(dataset["venus"], dataset["pixel_size_um"])
            mito = load_channel(dataset["mito"], dataset["pixel_size_um"])
        except (OSError, ValueError) as exc:
            _invalid(["body", "dataset_id"], f"unreadable channel: {exc}")
        imported = None
        label_path = body.get("import_labels") or dataset.get("labels")
        if label_path:
            try:
                imported = structure.import_labels(label_path)
            except (OSError, ValueError) as exc:
                _invalid(["body", "import_labels"], str(exc))
            if (imported.height, imported.width) != venus.values.shape:
                _invalid(["body", "import_labels"],
                         "label raster does not match channel dimensions")
        state = None
        objects_path = body.get("import_objects") or dataset.get("objects")
        if objects_path:
            try:
                state = mito_ops.state_from_json(
                    Path(objects_path).read_text())
            except (OSError, KeyError, TypeError, ValueError) as exc:
                _invalid(["body", "import_objects"], str(exc))
            if (state.height, state.width) != venus.values.shape:
                _invalid(["body", "import_objects"],
                         "object raster does not match channel dimensions")
        overrides = dict(body.get("bootstrap") or {})
        overrides.setdefault("budget_seconds", self.config.bootstrap_seconds)
        overrides.setdefault("seed", seed)
        try:
            cfg = learn.TrainConfig(**overrides)
        except (TypeError, ValueError) as exc:
            _invalid(["body", "bootstrap"], str(exc))
        if imported is not None and state is not None:
            labels = imported
        else:
            labels, mito_mask = learn.bootstrap_initial(seed, venus, mito,
                                                        imported, cfg)
        if state is None:
            state = mito_ops.detect_objects(mito_mask,
                                            DEFAULT_PARAMS["sigma_m"],
                                            DEFAULT_PARAMS["sigma_e"])
        (sdir / "initial").mkdir()
        structure.export_labels(labels, sdir / "initial" / "labels.png")
        (sdir / "initial" / "objects.json").write_text(
            mito_ops.state_to_json(state))
        (sdir / "checkpoints").mkdir()
        (sdir / "session.json").write_text(json.dumps(
            {"id": sid, "project_id": pid, "group_id": gid,
             "dataset_id": did, "seed": seed, "created_at": time.time()},
            indent=2, sort_keys=True))
        (sdir / "journal.jsonl").touch()
        sess = SessionRuntime(sid, pid, gid, did, sdir, dataset,
                              venus, mito, labels, state)
        with self.lock:
            self.sessions[sid] = sess
        return sess


# --- request plumbing ----------------------------------------------------------

def _replayed(store: Store, body: dict):
    """Previously recorded response for this token, if any."""
    hit = store.tokens.recall(body.get("token"))
    if hit is None:
        return None
    return Response(content=json.dumps(hit["body"]),
                    status_code=hit["status"], media_type="application/json")


def _respond(store: Store, body: dict, payload, status: int = 200):
    store.tokens.record(body.get("token"), status, payload)
    return Response(content=json.dumps(payload), status_code=status,
                    media_type="application/json")


def _session_meta(sess: SessionRuntime) -> dict:
    h, w = sess.shape
    return {"id": sess.id, "project_id": sess.project_id,
            "group_id": sess.group_id, "dataset_id": sess.dataset_id,
            "height": h, "width": w, "params": sess.params,
            "object_count": len(sess.mito.state.objects),
            "can_undo": {"structure": sess.labels.can_undo(),
                         "mito": sess.mito.can_undo()},
            "training": sess.job is not None and sess.job.phase in
                        ("queued", "training", "applying")}


def create_app(config: ServerConfig) -> FastAPI:
    """Build the application; state lives on ``app.state.store``."""
    app = FastAPI(title="mitoviz", version="1")
    store = Store(config)
    app.state.store = store

    # -- projects and datasets -------------------------------------------

    @app.post("/api/v1/projects")
    def create_project(body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        name = body.get("name")
        if not name or not isinstance(name, str):
            _invalid(["body", "name"], "project name is required")
        with store.lock:
            pid = body.get("id") or _fresh_id("p")
            if pid in store.projects:
                _error(409, ["body", "id"], f"project {pid!r} exists",
                       "conflict")
            doc = {"schema_version": SCHEMA_VERSION, "id": pid,
                   "name": name, "groups": {}}
            for group in body.get("groups", []):
                gid = group.get("id") or _fresh_id("g")
                doc["groups"][gid] = {"id": gid,
                                      "name": group.get("name", gid),
                                      "datasets": {}}
            store.projects[pid] = doc
            store.save_project(doc)
        return _respond(store, body, doc, 201)

    @app.get("/api/v1/projects")
    def list_projects():
        return {"projects": [{"id": p["id"], "name": p["name"]}
                             for p in store.projects.values()]}

    @app.get("/api/v1/projects/{pid}")
    def get_project(pid: str):
        return store.project(pid)

    @app.put("/api/v1/projects/{pid}")
    def update_project(pid: str, body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        with store.lock:
            doc = store.project(pid)
            if body.get("name"):
                doc["name"] = body["name"]
            for group in body.get("groups", []):
                gid = group.get("id") or _fresh_id("g")
                entry = doc["groups"].setdefault(
                    gid, {"id": gid, "name": gid, "datasets": {}})
                if group.get("name"):
                    entry["name"] = group["name"]
            store.save_project(doc)
        return _respond(store, body, doc)

    @app.post("/api/v1/groups/{gid}/datasets")
    def register_dataset(gid: str, body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        with store.lock:
            pid, group = store.group(gid)
            for field in ("venus", "mito"):
                path = body.get(field)
                if not path:
                    _invalid(["body", field], f"{field} image path required")
                if not Path(path).is_file():
                    _invalid(["body", field], f"no such file: {path}")
            for field in ("labels", "objects"):
                if body.get(field) and not Path(body[field]).is_file():
                    _invalid(["body", field],
                             f"no such file: {body[field]}")
            did = body.get("id") or _fresh_id("d")
            if store.dataset_exists(did):
                _error(409, ["body", "id"], f"dataset {did!r} exists",
                       "conflict")
            doc = {"id": did, "name": body.get("name", did),
                   "venus": str(body["venus"]), "mito": str(body["mito"]),
                   "labels": body.get("labels"),
                   "objects": body.get("objects"),
                   "pixel_size_um": float(body.get("pixel_size_um", 0.21))}
            group["datasets"][did] = doc
            store.save_project(store.projects[pid])
        return _respond(store, body, doc, 201)

    # -- sessions ----------------------------------------------------------

    @app.post("/api/v1/sessions")
    def open_session(body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        sess = store.create_session(body)
        return _respond(store, body, _session_meta(sess), 201)

    @app.get("/api/v1/sessions/{sid}")
    def get_session(sid: str):
        sess = store.session(sid)
        with sess.lock:
            return _session_meta(sess)

    @app.get("/api/v1/sessions/{sid}/render")
    def render(sid: str, viewport: str = None):
        sess = store.session(sid)
        with sess.lock:
            h, w = sess.shape
            box = (0, 0, w, h)
            if viewport is not None:
                parts = viewport.split(",")
                if len(parts) != 4:
                    _invalid(["query", "viewport"],
                             "viewport must be 'x,y,w,h'")
                try:
                    box = tuple(int(p) for p in parts)
                except ValueError:
                    _invalid(["query", "viewport"],
                             "viewport parts must be integers")
                x, y, bw, bh = box
                if bw < 1 or bh < 1 or x < 0 or y < 0 or x + bw > w \
                        or y + bh > h:
                    _invalid(["query", "viewport"],
                             f"viewport {box} outside {w}x{h} frame")
            x, y, bw, bh = box
            spec = BlendSpec(**{k: LayerSpec(v["opacity"], v["colormap"])
                                for k, v in sess.params["blend"].items()})
            idmap = sess.mito.state.id_map()
            rgb = blend(sess.venus_enh.values[y:y + bh, x:x + bw],
                        sess.mito_enh.values[y:y + bh, x:x + bw],
                        sess.labels.labels.labels[y:y + bh, x:x + bw],
                        idmap[y:y + bh, x:x + bw], spec)
        data = np.round(rgb * 255.0).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(data, mode="RGB").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.put("/api/v1/sessions/{sid}/params")
    def put_params(sid: str, body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        sess = store.session(sid)
        with sess.lock:
            try:
                merged = _merge_params(sess.params, body)
                _set_params(sess, merged)
            except (TypeError, ValueError) as exc:
                _invalid(["body"], str(exc))
            sess.append_journal({"kind": "params", "params": merged,
                                 "token": body.get("token")})
            return _respond(store, body, merged)

    @app.get("/api/v1/sessions/{sid}/candidates")
    def candidates(sid: str, kind: str = None):
        sess = store.session(sid)
        if kind not in ("structure", "mito"):
            _invalid(["query", "kind"], "kind must be 'structure' or 'mito'")
        with sess.lock:
            if kind == "structure":
                boxes = structure.find_mixed_label_candidates(
                    sess.labels.labels)
            else:
                boxes = mito_ops.error_candidates(
                    sess.mito.state, sess.mito_enh,
                    sess.params["sigma_m"], sess.params["sigma_e"])
            return {"candidates": [b.as_dict() for b in boxes]}

    @app.get("/api/v1/sessions/{sid}/objects")
    def list_objects(sid: str):
        sess = store.session(sid)
        with sess.lock:
            objects, feats = sess.feature_table()
            rows = []
            for oid in sorted(objects):
                obj, fv = objects[oid], feats[oid]
                rows.append({"id": oid, "bbox": list(obj.bbox),
                             "provenance": obj.provenance,
                             "pixels": len(obj.pixels), **fv.as_dict()})
            return {"objects": rows}

    @app.post("/api/v1/sessions/{sid}/edits")
    def post_edits(sid: str, body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        sess = store.session(sid)
        edits = body.get("edits")
        if not isinstance(edits, list) or not edits:
            _invalid(["body", "edits"], "edits must be a non-empty list")
        with sess.lock:
            applied = []
            summaries = []
            try:
                for k, edit in enumerate(edits):
                    if not isinstance(edit, dict):
                        raise ValueError("each edit must be an object")
                    target, summary = _apply_edit(sess, edit)
                    applied.append(target)
                    summaries.append(summary)
            except (KeyError, TypeError, ValueError) as exc:
                # the batch is atomic: roll back what already landed
                _rollback(sess, applied)
                _invalid(["body", "edits", k],
                         str(exc.args[0]) if exc.args else repr(exc))
            sess.append_journal({"kind": "edits", "edits": edits,
                                 "token": body.get("token")})
            payload = {"results": summaries,
                       "changed": sum(s["changed"] for s in summaries),
                       "object_count": len(sess.mito.state.objects)}
            return _respond(store, body, payload)

    @app.post("/api/v1/sessions/{sid}/undo")
    def post_undo(sid: str, body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        sess = store.session(sid)
        target = body.get("target")
        if target not in ("structure", "mito"):
            _invalid(["body", "target"],
                     "target must be 'structure' or 'mito'")
        with sess.lock:
            result = _apply_undo(sess, target)
            if result["undone"]:
                sess.append_journal({"kind": "undo", "target": target,
                                     "token": body.get("token")})
            return _respond(store, body, result)

    # -- training ----------------------------------------------------------

    @app.post("/api/v1/sessions/{sid}/train")
    def post_train(sid: str, body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        sess = store.session(sid)
        budget = float(body.get("budget_seconds",
                                store.config.max_train_seconds))
        if budget > store.config.max_train_seconds:
            _invalid(["body", "budget_seconds"],
                     f"budget above {store.config.max_train_seconds}s cap")
        with sess.lock:
            if sess.job is not None and sess.job.phase in (
                    "queued", "training", "applying"):
                _error(409, ["body"], "training already running", "conflict")
            signal = _user_signal(sess)
            if signal is None:
                _invalid(["journal"], "no user input")
            try:
                cfg = learn.TrainConfig(
                    budget_seconds=budget,
                    seed=int(body.get("seed", 0)),
                    focusing_factor=float(body.get("focusing_factor", 10.0)),
                    plateau_steps=int(body.get("plateau_steps", 20)))
            except (TypeError, ValueError) as exc:
                _invalid(["body"], str(exc))
            job = TrainJob(_fresh_id("job"), sid)
            sess.job = job
            store.jobs[job.id] = job
            model = sess.model or learn.ClassifierModel.initialize(
                cfg.seed, sess.features().planes, n_classes=4)
            token = body.get("token")
        worker = threading.Thread(
            target=_run_training,
            args=(store, sess, job, model, signal, cfg, token), daemon=True)
        worker.start()
        return _respond(store, body, {"job_id": job.id}, 202)

    @app.get("/api/v1/jobs/{job_id}")
    def get_job(job_id: str):
        if job_id not in store.jobs:
            _missing(["path", "job_id"], f"unknown job {job_id!r}")
        return store.jobs[job_id].as_dict()

    # -- analysis ----------------------------------------------------------

    @app.get("/api/v1/sessions/{sid}/subsets")
    def list_subsets(sid: str):
        sess = store.session(sid)
        with sess.lock:
            return {"subsets": [morpho.subset_to_json(s)
                                for _, s in sorted(sess.subsets.items())]}

    @app.post("/api/v1/sessions/{sid}/subsets")
    def post_subset(sid: str, body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        sess = store.session(sid)
        with sess.lock:
            definition = body.get("filter")
            if definition is None and body.get("ranges") is not None:
                try:
                    node = morpho.filter_by_ranges({}, body["ranges"]).definition
                except (TypeError, ValueError, KeyError) as exc:
                    _invalid(["body", "ranges"], str(exc))
                definition = morpho.node_to_dict(node)
            if definition is None:
                _invalid(["body", "filter"], "filter definition required")
            doc = {"kind": "subset",
                   "id": int(body.get("id", sess.next_subset_id)),
                   "name": body.get("name", ""),
                   "definition": definition,
                   "token": body.get("token")}
            if doc["id"] in sess.subsets:
                _error(409, ["body", "id"], f"subset {doc['id']} exists",
                       "conflict")
            try:
                _apply_subset(sess, doc)
            except (TypeError, ValueError, KeyError) as exc:
                _invalid(["body", "filter"], str(exc))
            sess.append_journal(doc)
            return _respond(store, body,
                            morpho.subset_to_json(sess.subsets[doc["id"]]),
                            201)

    @app.post("/api/v1/sessions/{sid}/snapshots")
    def post_snapshot(sid: str, body: dict):
        hit = _replayed(store, body)
        if hit:
            return hit
        sess = store.session(sid)
        with sess.lock:
            subset_id = body.get("subset_id")
            if subset_id is not None and int(subset_id) not in sess.subsets:
                _missing(["body", "subset_id"],
                         f"unknown subset {subset_id}")
            # clients may pin the timestamp (gesture logs replay to
            # byte-identical journals that way); default is server time
            ts = body.get("created_at")
            if ts is not None:
                try:
                    ts = float(ts)
                except (TypeError, ValueError):
                    ts = math.nan
                if not math.isfinite(ts) or ts < 0:
                    _invalid(["body", "created_at"],
                             "created_at must be a non-negative number")
            _, group = store.group(sess.group_id)
            doc = {"kind": "snapshot",
                   "id": int(body.get("id", sess.next_snapshot_id)),
                   "subset_id": None if subset_id is None else int(subset_id),
                   "comment": str(body.get("comment", "")),
                   "group": group["name"],
                   "image": sess.dataset["name"],
                   "created_at": time.time() if ts is None else ts,
                   "token": body.get("token")}
            snap = _apply_snapshot(sess, doc)
            sess.append_journal(doc)
            payload = {"id": snap.id, "count": snap.count,
                       "density": snap.density, "comment": snap.comment,
                       "group": snap.group, "image": snap.image,
                       "mean_area_um2": snap.mean_area,
                       "mean_length_um": snap.mean_length,
                       "mean_eccentricity": snap.mean_eccentricity,
                       "mean_circularity": snap.mean_circularity,
                       "members": list(snap.members)}
            return _respond(store, body, payload, 201)

    @app.get("/api/v1/groups/{gid}/snapshots.csv")
    def group_csv(gid: str):
        pid, _ = store.group(gid)
        rows = []
        for sdir in sorted((store.root / "projects" / pid /
                            "sessions").glob("*/session.json")):
            doc = json.loads(sdir.read_text())
            if doc["group_id"] != gid:
                continue
            sess = store.session(doc["id"])
            with sess.lock:
                rows.extend(sess.snapshots)
        rows.sort(key=lambda s: (s.created_at, s.image, s.id))
        return Response(content=morpho.snapshots_to_csv(rows),
                        media_type="text/csv")

    return app


def _rollback(sess: SessionRuntime, applied) -> None:
    for target in reversed(applied):
        if target == "structure":
            sess.labels.undo()
            sess.structure_ops.pop()
        else:
            sess.mito.undo()


def _run_training(store, sess, job, model, signal, cfg, token) -> None:
    """Fine-tune off-lock, then apply and journal under the session lock."""
    try:
        job.phase = "training"

        def on_progress(frac):
            job.progress = round(frac, 4)

        trained = learn.finetune(model, sess.features(), signal, cfg,
                                 progress=on_progress)
        job.phase = "applying"
        with sess.lock:
            ckpt = f"checkpoints/{job.id}.ckpt"
            learn.save_checkpoint(trained, sess.dir / ckpt)
            sess.model = trained
            summary = _apply_train_result(sess, trained)
            sess.append_journal({"kind": "train", "job_id": job.id,
                                 "checkpoint": ckpt,
                                 "config": cfg.to_json(), "token": token})
        job.progress = 1.0
        job.phase = "done"
        store.tokens.record(token, 202, {"job_id": job.id, **summary})
    except Exception as exc:   # surfaced through job polling
        job.error = str(exc)
        job.phase = "failed"


def run(config: ServerConfig) -> None:
    """Blocking entry point used by the command line."""
    import uvicorn
    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="warning")
