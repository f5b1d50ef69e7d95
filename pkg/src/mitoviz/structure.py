"""Structure-label rasters and their proofreading edits.

A label raster assigns every pixel one of four classes: 0 background,
1 dendrite, 2 axon, 3 cell body.  Corrections are painted with a brush whose
reach is clipped to the connected component of the enhanced Venus channel
around the cursor, so strokes cannot bleed across the foreground/background
boundary.  Windows where two structure classes interleave are flagged as
review candidates.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import _kernels
from .imgproc import STRUCTURE_COLORS, ChannelRaster, PixelSet

BACKGROUND, DENDRITE, AXON, CELL_BODY = 0, 1, 2, 3

CLASS_NAMES = {BACKGROUND: "background", DENDRITE: "dendrite",
               AXON: "axon", CELL_BODY: "cell body"}

DEFAULT_WINDOW = 32
DEFAULT_MIN_COUNT = 20


class StructureLabelRaster:
    """Row-major class-code raster; codes restricted to 0..3."""

    __slots__ = ("labels",)

    def __init__(self, labels):
        arr = np.ascontiguousarray(labels, dtype=np.uint8)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("labels must be a non-empty 2-D array")
        if arr.max(initial=0) > CELL_BODY:
            raise ValueError("label codes must be in 0..3")
        if arr is labels or arr.base is not None:
            arr = arr.copy()
        arr.flags.writeable = False
        self.labels = arr

    @classmethod
    def blank(cls, height, width):
        return cls(np.zeros((height, width), np.uint8))

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    def class_mask(self, code: int) -> np.ndarray:
        return self.labels == code

    def __eq__(self, other):
        return (isinstance(other, StructureLabelRaster)
                and np.array_equal(self.labels, other.labels))

    def __hash__(self):
        return hash(self.labels.tobytes())

    def __repr__(self):
        return f"StructureLabelRaster({self.height}x{self.width})"


@dataclass(frozen=True)
class BrushStroke:
    """One brush application at linear pixel index ``center``.

    The painted set is the strict-distance disc of ``radius`` intersected
    with the Venus connected component at the cursor: below ``sigma_s`` for
    the background brush, at or above it for every structure brush.
    """

    center: int
    radius: float
    brush_label: int
    sigma_s: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("brush radius must be positive")
        if self.brush_label not in (0, 1, 2, 3):
            raise ValueError("brush label must be a class code 0..3")
        if not 0.0 <= self.sigma_s <= 1.0:
            raise ValueError("sigma_s must be in [0, 1]")


@dataclass
class CandidateBox:
    """A rectangle flagged for review, with a salience score in [0, 1]."""

    x: int
    y: int
    w: int
    h: int
    kind: str
    score: float
    resolved: bool = False

    def as_dict(self):
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h,
                "kind": self.kind, "score": self.score,
                "resolved": self.resolved}


def brush_pixels(venus_enhanced: ChannelRaster, stroke: BrushStroke) -> PixelSet:
    """The affected set B(u) of a stroke, without touching any raster."""
    h, w = venus_enhanced.values.shape
    if not 0 <= stroke.center < h * w:
        raise ValueError(f"brush center {stroke.center} outside raster")
    uy, ux = divmod(stroke.center, w)
    above = stroke.brush_label != BACKGROUND
    cc = _kernels.flood_fill(venus_enhanced.values, uy, ux,
                             stroke.sigma_s, above)
    disc = _kernels.disc_mask(np.array([uy]), np.array([ux]), h, w,
                              stroke.radius)
    return PixelSet.from_mask(cc & disc)


def apply_brush(labels: StructureLabelRaster, venus_enhanced: ChannelRaster,
                stroke: BrushStroke):
    """Paint one stroke; returns ``(updated_raster, affected_pixels)``.

    The input raster is left untouched.
    """
    if (labels.height, labels.width) != venus_enhanced.values.shape:
        raise ValueError("label raster and Venus raster dimensions differ")
    affected = brush_pixels(venus_enhanced, stroke)
    out = labels.labels.copy()
    out.ravel()[affected.indices] = stroke.brush_label
    return StructureLabelRaster(out), affected


def _window_starts(extent: int, window: int, stride: int):
    last = max(extent - window, 0)
    starts = list(range(0, last + 1, stride))
    if starts[-1] != last:
        starts.append(last)
    return starts


def _boxes_overlap(a, b):
    return (a[0] < b[0] + b[2] and b[0] < a[0] + a[2]
            and a[1] < b[1] + b[3] and b[1] < a[1] + a[3])


def _merge_overlapping(boxes):
    """Fuse rectangles that share pixels until none overlap."""
    boxes = list(boxes)
    merged = True
    while merged:
        merged = False
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                if _boxes_overlap(boxes[i], boxes[j]):
                    ax, ay, aw, ah = boxes[i]
                    bx, by, bw, bh = boxes[j]
                    x0, y0 = min(ax, bx), min(ay, by)
                    x1 = max(ax + aw, bx + bw)
                    y1 = max(ay + ah, by + bh)
                    boxes[i] = (x0, y0, x1 - x0, y1 - y0)
                    del boxes[j]
                    merged = True
                    break
            if merged:
                break
    return boxes


def find_mixed_label_candidates(labels: StructureLabelRaster,
                                window: int = DEFAULT_WINDOW,
                                min_count: int = DEFAULT_MIN_COUNT):
    """Boxes where two or more structure classes interleave.

    A window of ``window``x``window`` pixels slides with half-window stride
    (clipped at the raster edge); it qualifies when at least two distinct
    non-background classes each cover ``min_count`` pixels or more.
    Overlapping qualifying windows fuse into their common bounding rectangle.
    Each box scores the fraction of its area held by the second-most-frequent
    non-background class.
    """
    if window < 2:
        raise ValueError("window must be at least 2 pixels")
    arr = labels.labels
    h, w = arr.shape
    stride = max(window // 2, 1)
    hits = []
    for y0 in _window_starts(h, window, stride):
        for x0 in _window_starts(w, window, stride):
            tile = arr[y0:y0 + window, x0:x0 + window]
            counts = np.bincount(tile.ravel(), minlength=4)[1:]
            if (counts >= min_count).sum() >= 2:
                hits.append((x0, y0, tile.shape[1], tile.shape[0]))
    out = []
    for x, y, bw, bh in sorted(_merge_overlapping(hits),
                               key=lambda b: (b[1], b[0])):
        counts = np.sort(np.bincount(arr[y:y + bh, x:x + bw].ravel(),
                                     minlength=4)[1:])
        score = float(counts[-2]) / float(bw * bh)
        out.append(CandidateBox(x, y, bw, bh, "mixed-structure", score))
    return out


# --- undo journal -------------------------------------------------------------

@dataclass
class EditRecord:
    """One undoable edit: the pixels it changed with old and new codes."""

    pixels: np.ndarray
    old: np.ndarray
    new: np.ndarray
    note: str = ""


class LabelEditSession:
    """Owns a label raster and an unbounded undo journal.

    Every mutation funnels through :meth:`paint` or :meth:`put`, which record
    (pixel, old, new) triples; :meth:`undo` rolls the latest record back.
    """

    def __init__(self, labels: StructureLabelRaster):
        self._labels = labels
        self._journal: list[EditRecord] = []

    @property
    def labels(self) -> StructureLabelRaster:
        return self._labels

    @property
    def journal(self):
        return tuple(self._journal)

    def paint(self, venus_enhanced: ChannelRaster, stroke: BrushStroke) -> PixelSet:
        affected = brush_pixels(venus_enhanced, stroke)
        new = np.full(len(affected), stroke.brush_label, np.uint8)
        return self._commit(affected, new, note="brush")

    def put(self, pixels: PixelSet, codes, note: str = "") -> PixelSet:
        """Set explicit codes on explicit pixels (imports, programmatic edits)."""
        new = np.broadcast_to(np.asarray(codes, np.uint8), (len(pixels),)).copy()
        if new.size and new.max() > CELL_BODY:
            raise ValueError("label codes must be in 0..3")
        return self._commit(pixels, new, note=note)

    def _commit(self, pixels: PixelSet, new: np.ndarray, note: str) -> PixelSet:
        flat = self._labels.labels.ravel()
        old = flat[pixels.indices].copy()
        changed = old != new
        rec = EditRecord(pixels.indices[changed].copy(), old[changed],
                         new[changed], note)
        buf = self._labels.labels.copy()
        buf.ravel()[rec.pixels] = rec.new
        self._labels = StructureLabelRaster(buf)
        self._journal.append(rec)
        return PixelSet(rec.pixels)

    def undo(self) -> PixelSet:
        """Revert the most recent edit; empty set when the journal is empty."""
        if not self._journal:
            return PixelSet(np.array([], np.int64))
        rec = self._journal.pop()
        buf = self._labels.labels.copy()
        buf.ravel()[rec.pixels] = rec.old
        self._labels = StructureLabelRaster(buf)
        return PixelSet(rec.pixels)

    def can_undo(self) -> bool:
        return bool(self._journal)


# --- file round trip -----------------------------------------------------------

_PALETTE = (np.clip(STRUCTURE_COLORS * 255, 0, 255)
            .round().astype(np.uint8).ravel().tolist())


def export_labels(labels: StructureLabelRaster, path) -> None:
    """Write the raster as an indexed PNG with the class palette."""
    img = Image.fromarray(labels.labels, mode="P")
    img.putpalette(_PALETTE + [0] * (768 - len(_PALETTE)))
    img.save(path, format="PNG")


def import_labels(path) -> StructureLabelRaster:
    """Read an indexed PNG of class codes; codes above 3 are rejected."""
    img = Image.open(path)
    if img.format != "PNG" or img.mode != "P":
        raise ValueError(f"{path}: expected an indexed (palette) PNG")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{path}: empty or non-2D label image")
    if arr.max(initial=0) > CELL_BODY:
        raise ValueError(f"{path}: label code {int(arr.max())} outside 0..3")
    return StructureLabelRaster(arr)
