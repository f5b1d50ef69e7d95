"""Mitochondria objects and their proofreading edits.

Objects are 4-connected components of the mitochondria foreground.  Each
object carries an error score of 1 - Dice(O, N), where N is the union of
threshold components seeded from every object pixel; high-signal background
components that meet no object score 1 (missed detections).  Errors are
repaired by excluding objects, splitting along a drawn line through low
signal, or merging/including along a line through high signal.  Line
propagation is truncated at strict euclidean distance 5 from the nearest
line pixel.
"""

import json
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from . import _kernels
from .imgproc import ChannelRaster, PixelSet
from .structure import CandidateBox

PROPAGATION_REACH = 5.0

DETECTED = "detected"
USER_SPLIT = "user-split"
USER_MERGED = "user-merged"
USER_INCLUDED = "user-included"

_PROVENANCES = (DETECTED, USER_SPLIT, USER_MERGED, USER_INCLUDED)


@dataclass(frozen=True)
class MitoObject:
    """One mitochondrion: a pixel set with a stable id and an origin tag."""

    id: int
    pixels: PixelSet
    bbox: tuple
    provenance: str

    @classmethod
    def build(cls, oid: int, pixels: PixelSet, width: int, provenance: str,
              require_connected: bool = True) -> "MitoObject":
        if provenance not in _PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        if not len(pixels):
            raise ValueError("object pixel set must be non-empty")
        if require_connected and not _is_4_connected(pixels, width):
            raise ValueError("object pixels must form one 4-connected set")
        return cls(oid, pixels, pixels.bbox(width), provenance)


def _is_4_connected(pixels: PixelSet, width: int) -> bool:
    x0, y0, w, h = pixels.bbox(width)
    local = np.zeros((h, w), np.uint8)
    ys, xs = pixels.coords(width)
    local[ys - y0, xs - x0] = 1
    _, count = _kernels.label4(local)
    return count == 1


@dataclass(frozen=True)
class MitoState:
    """Session snapshot: the object list plus thresholds and the id counter."""

    objects: tuple
    width: int
    height: int
    sigma_m: float = 0.5
    sigma_e: float = 0.5
    next_id: int = 1

    def __post_init__(self):
        for s in (self.sigma_m, self.sigma_e):
            if not 0.0 <= s <= 1.0:
                raise ValueError("thresholds must be in [0, 1]")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        total = sum(len(o.pixels) for o in self.objects)
        if self.objects:
            merged = np.concatenate([o.pixels.indices for o in self.objects])
            if np.unique(merged).size != total:
                raise ValueError("object pixel sets must be pairwise disjoint")

    def get(self, oid: int) -> MitoObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(f"no mitochondria object with id {oid}")

    def foreground_mask(self) -> np.ndarray:
        mask = np.zeros(self.height * self.width, bool)
        for o in self.objects:
            mask[o.pixels.indices] = True
        return mask.reshape(self.height, self.width)

    def id_map(self) -> np.ndarray:
        out = np.zeros(self.height * self.width, np.uint16)
        for o in self.objects:
            out[o.pixels.indices] = o.id
        return out.reshape(self.height, self.width)


class PolylineInput:
    """A user-drawn line as an ordered 8-connected chain of pixel indices."""

    __slots__ = ("indices", "width")

    def __init__(self, indices, width: int):
        idx = np.ascontiguousarray(indices, dtype=np.int64).ravel()
        if idx.size == 0:
            raise ValueError("polyline must contain at least one pixel")
        if idx.min() < 0:
            raise ValueError("polyline indices must be non-negative")
        ys, xs = np.divmod(idx, width)
        if idx.size > 1:
            step = np.maximum(np.abs(np.diff(ys)), np.abs(np.diff(xs)))
            if step.max() > 1:
                raise ValueError("consecutive polyline pixels must be "
                                 "adjacent (distance <= sqrt(2))")
        if idx.base is not None or idx is indices:
            idx = idx.copy()
        idx.flags.writeable = False
        self.indices = idx
        self.width = width

    def coords(self):
        return np.divmod(self.indices, self.width)

    def __len__(self):
        return int(self.indices.size)


def rasterize_polyline(points, width: int) -> PolylineInput:
    """Walk float (y, x) waypoints into an 8-connected pixel chain."""
    pts = [(int(round(y)), int(round(x))) for y, x in points]
    if not pts:
        raise ValueError("need at least one waypoint")
    chain = [pts[0]]
    for (y0, x0), (y1, x1) in zip(pts, pts[1:]):
        y, x = y0, x0
        while (y, x) != (y1, x1):
            y += (y1 > y) - (y1 < y)
            x += (x1 > x) - (x1 < x)
            chain.append((y, x))
    return PolylineInput(np.array([y * width + x for y, x in chain]), width)


# --- detection and scoring ------------------------------------------------------

def detect_objects(mito_foreground: np.ndarray, sigma_m: float = 0.5,
                   sigma_e: float = 0.5) -> MitoState:
    """One object per 4-connected foreground component, ids in scan order."""
    mask = np.asarray(mito_foreground)
    if mask.ndim != 2:
        raise ValueError("foreground mask must be 2-D")
    labels, count = _kernels.label4(mask.astype(bool))
    h, w = mask.shape
    objs = []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat, np.arange(1, count + 2), sorter=order)
    for k in range(count):
        pix = PixelSet(np.sort(order[bounds[k]:bounds[k + 1]]))
        objs.append(MitoObject.build(k + 1, pix, w, DETECTED,
                                     require_connected=False))
    return MitoState(tuple(objs), w, h, sigma_m, sigma_e, next_id=count + 1)


def object_error(obj: MitoObject, mito_enhanced: ChannelRaster,
                 sigma_m: float) -> float:
    """1 - Dice(O, N) with N the high-signal components grown from O."""
    h, w = mito_enhanced.values.shape
    ys, xs = obj.pixels.coords(w)
    grown = _kernels.flood_fill_multi(mito_enhanced.values, ys, xs,
                                     sigma_m, True)
    n_set = PixelSet.from_mask(grown)
    denom = len(obj.pixels) + len(n_set)
    if len(n_set) == 0:
        return 1.0
    dice = 2.0 * obj.pixels.intersection_size(n_set) / denom
    return 1.0 - dice


def background_error(mito_enhanced: ChannelRaster, sigma_m: float,
                     state: MitoState):
    """(component, score) for each high-signal component; 1 = missed."""
    from .imgproc import label_components
    taken = state.foreground_mask().ravel()
    out = []
    for comp in label_components(mito_enhanced, sigma_m):
        hit = taken[comp.indices].any()
        out.append((comp, 0.0 if hit else 1.0))
    return out


def error_candidates(state: MitoState, mito_enhanced: ChannelRaster,
                     sigma_m: float, sigma_e: float):
    """Boxes for objects and background components scoring above sigma_e."""
    w = state.width
    boxes = []
    for obj in state.objects:
        e = object_error(obj, mito_enhanced, sigma_m)
        if e > sigma_e:
            x, y, bw, bh = obj.bbox
            boxes.append(CandidateBox(x, y, bw, bh, "mito-object-error", e))
    for comp, e in background_error(mito_enhanced, sigma_m, state):
        if e > sigma_e:
            x, y, bw, bh = comp.bbox(w)
            boxes.append(CandidateBox(x, y, bw, bh, "mito-background-error", e))
    return boxes


# --- propagation regions -----------------------------------------------------------

def _propagated(line: PolylineInput, mito_enhanced: ChannelRaster,
                sigma_m: float, above: bool) -> np.ndarray:
    """Threshold components grown from the line, cut at strict distance 5."""
    h, w = mito_enhanced.values.shape
    if line.width != w:
        raise ValueError("polyline raster width differs from channel raster")
    if line.indices.max() >= h * w:
        raise ValueError("polyline leaves the raster")
    ys, xs = line.coords()
    grown = _kernels.flood_fill_multi(mito_enhanced.values, ys, xs,
                                     sigma_m, above)
    near = _kernels.disc_mask(ys, xs, h, w, PROPAGATION_REACH)
    return grown & near


def split_region(line, mito_enhanced, sigma_m) -> PixelSet:
    """P_b: low-signal propagation used by :func:`split`."""
    return PixelSet.from_mask(_propagated(line, mito_enhanced, sigma_m, False))


def fill_region(line, mito_enhanced, sigma_m) -> PixelSet:
    """P_f: high-signal propagation used by :func:`merge_or_include`."""
    return PixelSet.from_mask(_propagated(line, mito_enhanced, sigma_m, True))


# --- edits --------------------------------------------------------------------------

def exclude(state: MitoState, ids) -> MitoState:
    """Drop the listed objects; everything else is untouched."""
    wanted = {int(i) for i in (ids if np.iterable(ids) else [ids])}
    known = {o.id for o in state.objects}
    missing = wanted - known
    if missing:
        raise KeyError(f"unknown object id(s): {sorted(missing)}")
    keep = tuple(o for o in state.objects if o.id not in wanted)
    return replace(state, objects=keep)


def split(state: MitoState, oid: int, line: PolylineInput,
          mito_enhanced: ChannelRaster, sigma_m: float) -> MitoState:
    """Remove the line's low-signal propagation from one object.

    The remainder is re-partitioned into 4-connected pieces, each a new
    object; the original id is retired.  Removing every pixel is an error
    and leaves the state untouched.
    """
    obj = state.get(oid)
    p_b = _propagated(line, mito_enhanced, sigma_m, False).ravel().astype(bool)
    keep = obj.pixels.indices[~p_b[obj.pixels.indices]]
    if keep.size == 0:
        raise ValueError("split would delete the whole object")
    mask = np.zeros(state.height * state.width, bool)
    mask[keep] = True
    labels, count = _kernels.label4(mask.reshape(state.height, state.width))
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat, np.arange(1, count + 2), sorter=order)
    pieces = []
    nid = state.next_id
    for k in range(count):
        pix = PixelSet(np.sort(order[bounds[k]:bounds[k + 1]]))
        pieces.append(MitoObject.build(nid, pix, state.width, USER_SPLIT,
                                       require_connected=False))
        nid += 1
    objs = []
    for o in state.objects:
        if o.id == oid:
            objs.extend(pieces)
        else:
            objs.append(o)
    return replace(state, objects=tuple(objs), next_id=nid)


def merge_or_include(state: MitoState, line: PolylineInput,
                     mito_enhanced: ChannelRaster, sigma_m: float) -> MitoState:
    """Grow foreground by the line plus its high-signal propagation.

    Every object touching the grown region fuses with it into a single new
    object: provenance user-merged when two or more fuse, user-included for
    zero or one.  The new object takes the list position of the smallest
    fused id, or the end of the list when nothing was touched.
    """
    grown = _propagated(line, mito_enhanced, sigma_m, True).ravel().astype(bool)
    grown[line.indices] = True
    touched = [o for o in state.objects if grown[o.pixels.indices].any()]
    union = grown.copy()
    for o in touched:
        union[o.pixels.indices] = True
    fused = MitoObject.build(
        state.next_id, PixelSet(np.flatnonzero(union)), state.width,
        USER_MERGED if len(touched) >= 2 else USER_INCLUDED,
        require_connected=False)
    if touched:
        anchor = min(o.id for o in touched)
        objs = []
        for o in state.objects:
            if o.id == anchor:
                objs.append(fused)
            elif o not in touched:
                objs.append(o)
    else:
        objs = list(state.objects) + [fused]
    return replace(state, objects=tuple(objs), next_id=state.next_id + 1)


# --- undo ---------------------------------------------------------------------------

class MitoEditSession:
    """Serialized edits over a MitoState with unbounded undo.

    States are immutable, so the journal simply retains each predecessor.
    """

    def __init__(self, state: MitoState):
        self._state = state
        self._history: list[MitoState] = []

    @property
    def state(self) -> MitoState:
        return self._state

    def _push(self, new_state: MitoState) -> MitoState:
        self._history.append(self._state)
        self._state = new_state
        return new_state

    def exclude(self, ids):
        return self._push(exclude(self._state, ids))

    def split(self, oid, line, mito_enhanced, sigma_m=None):
        s = self._state.sigma_m if sigma_m is None else sigma_m
        return self._push(split(self._state, oid, line, mito_enhanced, s))

    def merge_or_include(self, line, mito_enhanced, sigma_m=None):
        s = self._state.sigma_m if sigma_m is None else sigma_m
        return self._push(merge_or_include(self._state, line, mito_enhanced, s))

    def undo(self) -> bool:
        """Roll back one edit; False when the journal is empty."""
        if not self._history:
            return False
        self._state = self._history.pop()
        return True

    def can_undo(self) -> bool:
        return bool(self._history)


# --- serialization -------------------------------------------------------------------

def rle_encode(pixels: PixelSet, width: int):
    """Row-wise run-length pairs [start, length] over linear indices."""
    idx = pixels.indices
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(
        (np.diff(idx) != 1) | (idx[1:] % width == 0)) + 1
    runs = []
    for chunk in np.split(idx, breaks):
        runs.append([int(chunk[0]), int(chunk.size)])
    return runs


def rle_decode(runs, width: int) -> PixelSet:
    if not runs:
        return PixelSet(np.array([], np.int64))
    parts = [np.arange(s, s + n, dtype=np.int64) for s, n in runs]
    return PixelSet(np.concatenate(parts))


def state_to_json(state: MitoState) -> str:
    payload = {
        "width": state.width,
        "height": state.height,
        "sigma_m": state.sigma_m,
        "sigma_e": state.sigma_e,
        "next_id": state.next_id,
        "objects": [
            {"id": o.id, "provenance": o.provenance,
             "bbox": list(o.bbox),
             "rle_pixels": rle_encode(o.pixels, state.width)}
            for o in state.objects
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def state_from_json(text: str) -> MitoState:
    doc = json.loads(text)
    w = int(doc["width"])
    objs = tuple(
        MitoObject.build(int(rec["id"]), rle_decode(rec["rle_pixels"], w),
                         w, rec["provenance"], require_connected=False)
        for rec in doc["objects"])
    return MitoState(objs, w, int(doc["height"]), float(doc["sigma_m"]),
                     float(doc["sigma_e"]), int(doc["next_id"]))


def export_id_map(state: MitoState, path) -> None:
    """16-bit PNG of object ids, 0 = background."""
    if state.next_id > 65535:
        raise ValueError("id map overflow: ids exceed 16-bit range")
    arr = state.id_map()
    Image.fromarray(arr.astype(np.int32), mode="I").convert("I;16").save(
        path, format="PNG")
