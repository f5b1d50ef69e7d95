"""Synthetic two-channel phantoms with exact ground truth and a scripted
proofreader.

Neurites are random-walk tubes; mitochondria are stamped along their
centerlines, elongated inside dendrites and punctate inside axons. Every
draw goes through one counter-based Philox stream, so a seed pins the
phantom bit for bit. The scripted user greedily converts disagreement with
the truth into the same brush strokes and polyline edits a human would
issue, which makes the full proofreading loop testable without microscopy
data.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import mito as mito_ops
from ._kernels import disc_mask, label4
from .imgproc import ChannelRaster, PixelSet
from .structure import (AXON, DENDRITE, BrushStroke, StructureLabelRaster,
                        apply_brush, brush_pixels)


@dataclass(frozen=True)
class PhantomSpec:
    """Generation recipe; width ranges are inclusive pixel bounds."""

    seed: int = 0
    height: int = 256
    width: int = 256
    dendrites: int = 2
    dendrite_width: tuple = (4, 8)
    axons: int = 2
    axon_width: tuple = (1, 3)
    mito_per_dendrite: int = 3
    mito_per_axon: int = 3
    dendritic_mito_length: tuple = (8, 40)
    axonal_mito_length: tuple = (2, 8)
    noise: float = 0.03
    background: float = 0.1

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("image size must be at least 1x1")
        for count in (self.dendrites, self.axons, self.mito_per_dendrite,
                      self.mito_per_axon):
            if count < 0:
                raise ValueError("counts must be non-negative")
        for lo, hi in (self.dendrite_width, self.axon_width,
                       self.dendritic_mito_length, self.axonal_mito_length):
            if lo < 1 or hi < lo:
                raise ValueError("ranges must satisfy 1 <= lo <= hi")
        if self.noise < 0 or not 0.0 <= self.background < 1.0:
            raise ValueError("bad noise level or background intensity")

    def to_json(self) -> str:
        d = {k: list(v) if isinstance(v, tuple) else v
             for k, v in self.__dict__.items()}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        d = json.loads(text)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


@dataclass(frozen=True)
class TubePrimitive:
    """Rendered neurite: class code, centerline pixels, stamp radius."""

    code: int
    points: tuple
    radius: float


@dataclass(frozen=True)
class TrueMito:
    pixels: PixelSet
    compartment: int


@dataclass(frozen=True)
class GroundTruth:
    labels: StructureLabelRaster
    mitochondria: tuple
    tubes: tuple


def _random_walk(rng, h, w):
    """Smooth bounded walk; returns deduplicated integer centerline."""
    y = float(rng.uniform(0.15 * h, 0.85 * h))
    x = float(rng.uniform(0.15 * w, 0.85 * w))
    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    pts = []
    for _ in range(int(1.4 * max(h, w))):
        heading += float(rng.normal(0.0, 0.12))
        ny, nx = y + math.sin(heading), x + math.cos(heading)
        if not 1.0 <= ny <= h - 2.0:
            heading = -heading
            ny = y + math.sin(heading)
        if not 1.0 <= nx <= w - 2.0:
            heading = math.pi - heading
            nx = x + math.cos(heading)
        y, x = float(np.clip(ny, 1, h - 2)), float(np.clip(nx, 1, w - 2))
        p = (int(round(y)), int(round(x)))
        if not pts or pts[-1] != p:
            pts.append(p)
    return _four_connect(pts)


def _four_connect(points):
    """Insert a corner pixel at each diagonal step so that single-pixel
    stamps still chain into one 4-connected object."""
    out = [points[0]]
    for (y0, x0), (y1, x1) in zip(points, points[1:]):
        if y0 != y1 and x0 != x1:
            out.append((y0, x1))
        out.append((y1, x1))
    return out


def _stamp(points, h, w, radius):
    ys = np.array([p[0] for p in points], np.int64)
    xs = np.array([p[1] for p in points], np.int64)
    return disc_mask(ys, xs, h, w, radius).astype(bool)


def _touches(mask, other):
    """True when the masks overlap or are 8-adjacent."""
    if (mask & other).any():
        return True
    grown = other.copy()
    grown[1:] |= other[:-1]
    grown[:-1] |= other[1:]
    grown[:, 1:] |= other[:, :-1]
    grown[:, :-1] |= other[:, 1:]
    grown[1:, 1:] |= other[:-1, :-1]
    grown[1:, :-1] |= other[:-1, 1:]
    grown[:-1, 1:] |= other[1:, :-1]
    grown[:-1, :-1] |= other[1:, 1:]
    return (mask & grown).any()


def generate(spec: PhantomSpec):
    """(venus, mito, truth); deterministic for a given spec."""
    rng = np.random.Generator(np.random.Philox(spec.seed))
    h, w = spec.height, spec.width
    venus = np.full((h, w), spec.background, np.float64)
    codes = np.zeros((h, w), np.uint8)

    tubes = []
    for code, count, widths in ((DENDRITE, spec.dendrites,
                                 spec.dendrite_width),
                                (AXON, spec.axons, spec.axon_width)):
        for _ in range(count):
            width_px = int(rng.integers(widths[0], widths[1] + 1))
            pts = _random_walk(rng, h, w)
            brightness = float(rng.uniform(0.65, 0.95))
            tube = TubePrimitive(code, tuple(pts), width_px / 2.0 + 0.3)
            mask = _stamp(tube.points, h, w, tube.radius)
            codes[mask] = code
            venus[mask] = brightness
            tubes.append(tube)

    mito_img = np.full((h, w), 0.05, np.float64)
    taken = np.zeros((h, w), bool)
    mitochondria = []
    for tube in tubes:
        if tube.code == DENDRITE:
            count, lengths = spec.mito_per_dendrite, spec.dendritic_mito_length
            radius = max(0.6, min(tube.radius * 0.7, 2.0))
        else:
            count, lengths = spec.mito_per_axon, spec.axonal_mito_length
            radius = max(0.6, min(tube.radius, 1.8))
        free = np.ones(len(tube.points), bool)
        for _ in range(count):
            for _attempt in range(40):
                span = int(rng.integers(lengths[0], lengths[1] + 1))
                if span >= len(tube.points):
                    continue
                s = int(rng.integers(0, len(tube.points) - span))
                if not free[s:s + span].all():
                    continue
                seg = tube.points[s:s + span]
                mask = _stamp(seg, h, w, radius)
                if _touches(mask, taken):
                    continue
                free[max(0, s - 3):s + span + 3] = False
                taken |= mask
                mito_img[mask] = float(rng.uniform(0.7, 0.95))
                mitochondria.append(TrueMito(PixelSet.from_mask(mask),
                                             tube.code))
                break

    venus = np.clip(venus + rng.normal(0.0, spec.noise, (h, w)), 0.0, 1.0)
    mito_img = np.clip(mito_img + rng.normal(0.0, spec.noise, (h, w)),
                       0.0, 1.0)
    truth = GroundTruth(StructureLabelRaster(codes), tuple(mitochondria),
                        tuple(tubes))
    return (ChannelRaster(venus.astype(np.float32)),
            ChannelRaster(mito_img.astype(np.float32)), truth)


# --- error injection ----------------------------------------------------------

ERROR_KINDS = ("flip-region", "merge-blobs", "split-blob", "add-noise-blob",
               "delete-blob")


@dataclass(frozen=True)
class InjectedError:
    kind: str
    center: tuple
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CorruptionResult:
    labels: StructureLabelRaster
    mitochondria: tuple
    manifest: tuple


def _centroid(pixels: PixelSet, width: int):
    ys, xs = pixels.coords(width)
    return int(round(ys.mean())), int(round(xs.mean()))


def _closest_pair(a: PixelSet, b: PixelSet, width: int):
    """Closest (y, x) pixel pair between two sets (subsampled when large)."""
    ay, ax = a.coords(width)
    by, bx = b.coords(width)
    if ay.size > 200:
        step = ay.size // 200 + 1
        ay, ax = ay[::step], ax[::step]
    if by.size > 200:
        step = by.size // 200 + 1
        by, bx = by[::step], bx[::step]
    d2 = (ay[:, None] - by) ** 2 + (ax[:, None] - bx) ** 2
    i, j = np.unravel_index(int(d2.argmin()), d2.shape)
    return (int(ay[i]), int(ax[i])), (int(by[j]), int(bx[j]))


def corrupt(truth: GroundTruth, menu, seed: int) -> CorruptionResult:
    """Inject the listed error kinds into fresh copies of the truth.

    The manifest records one entry per successfully injected error, in menu
    order; an entry is skipped when no eligible target exists (no blob left
    to delete, nothing splittable).
    """
    rng = np.random.Generator(np.random.Philox(seed))
    codes = truth.labels.labels.copy()
    h, w = codes.shape
    blobs = [m.pixels for m in truth.mitochondria]
    manifest = []

    for kind in menu:
        if kind == "flip-region":
            tube = np.flatnonzero(codes.ravel() > 0)
            pick = int(tube[rng.integers(tube.size)]) if tube.size else int(
                rng.integers(h * w))
            cy, cx = divmod(pick, w)
            radius = int(rng.integers(4, 11))
            old = int(codes[cy, cx])
            target = old
            while target == old:
                target = int(rng.integers(0, 4))
            disc = disc_mask(np.array([cy]), np.array([cx]), h, w,
                             radius + 0.5).astype(bool)
            codes[disc] = target
            manifest.append(InjectedError(kind, (cy, cx),
                                          {"radius": radius, "to": target}))
        elif kind == "delete-blob":
            if not blobs:
                continue
            i = int(rng.integers(len(blobs)))
            manifest.append(InjectedError(kind, _centroid(blobs[i], w),
                                          {"pixels": len(blobs[i])}))
            del blobs[i]
        elif kind == "add-noise-blob":
            for _attempt in range(60):
                cy = int(rng.integers(2, h - 2))
                cx = int(rng.integers(2, w - 2))
                r = float(rng.integers(1, 4))
                mask = disc_mask(np.array([cy]), np.array([cx]), h, w,
                                 r + 0.5).astype(bool)
                occupied = np.zeros((h, w), bool)
                for b in blobs:
                    occupied.ravel()[b.indices] = True
                if _touches(mask, occupied):
                    continue
                blobs.append(PixelSet.from_mask(mask))
                manifest.append(InjectedError(kind, (cy, cx), {"radius": r}))
                break
        elif kind == "merge-blobs":
            if len(blobs) < 2:
                continue
            cents = np.array([_centroid(b, w) for b in blobs], np.float64)
            d2 = ((cents[:, None] - cents) ** 2).sum(-1)
            np.fill_diagonal(d2, np.inf)
            i, j = np.unravel_index(int(d2.argmin()), d2.shape)
            a, b = _closest_pair(blobs[i], blobs[j], w)
            bridge = mito_ops.rasterize_polyline([a, b], w)
            union = np.zeros(h * w, bool)
            union[blobs[i].indices] = True
            union[blobs[j].indices] = True
            union[bridge.indices] = True
            merged = PixelSet(np.flatnonzero(union))
            for k in sorted((int(i), int(j)), reverse=True):
                del blobs[k]
            blobs.append(merged)
            mid = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
            manifest.append(InjectedError(kind, mid,
                                          {"bridge_px": len(bridge.indices)}))
        elif kind == "split-blob":
            done = False
            for i in np.argsort([-len(b) for b in blobs], kind="stable"):
                cut = _cut_blob(blobs[int(i)], w, h)
                if cut is None:
                    continue
                pieces, center = cut
                del blobs[int(i)]
                blobs.extend(pieces)
                manifest.append(InjectedError(kind, center,
                                              {"pieces": len(pieces)}))
                done = True
                break
            if not done:
                continue
        else:
            raise ValueError(f"unknown error kind {kind!r}")

    return CorruptionResult(StructureLabelRaster(codes), tuple(blobs),
                            tuple(manifest))


def _cut_blob(pixels: PixelSet, w: int, h: int):
    """Remove a 1.5 px band through the centroid, perpendicular to the
    principal axis; None when the cut does not bisect the blob."""
    ys, xs = pixels.coords(w)
    if ys.size < 6:
        return None
    cy, cx = ys.mean(), xs.mean()
    cov = np.cov(np.stack([ys, xs]).astype(np.float64), ddof=0)
    _, vecs = np.linalg.eigh(cov)
    axis = vecs[:, -1]
    t = (ys - cy) * axis[0] + (xs - cx) * axis[1]
    keep = np.abs(t) > 0.75
    if not keep.any():
        return None
    mask = np.zeros((h, w), bool)
    mask[ys[keep], xs[keep]] = True
    labels, count = label4(mask)
    if count < 2:
        return None
    pieces = [PixelSet.from_mask(labels == k) for k in range(1, count + 1)]
    return pieces, (int(round(cy)), int(round(cx)))


# --- scripted proofreader -------------------------------------------------------

def scripted_structure_edits(labels: StructureLabelRaster,
                             truth: StructureLabelRaster,
                             venus_enhanced: ChannelRaster,
                             sigma_s: float = 0.5, budget: int = 200,
                             pixel_budget: int = None):
    """Greedy brush strokes toward the truth; returns (strokes, labels).

    Each round targets the largest disagreement component near its
    centroid with the true class there; a stroke is kept only when it
    reduces disagreement, and the loop stops at the budget, at zero
    disagreement, or when no candidate stroke helps. ``pixel_budget``
    caps the total brush coverage (union of stroke pixel sets), modeling
    a bounded amount of user effort.
    """
    current = labels
    strokes = []
    w = truth.width
    values = venus_enhanced.values.ravel()
    covered = np.zeros(truth.height * w, bool)
    while len(strokes) < budget:
        diff = current.labels != truth.labels
        before = int(diff.sum())
        if before == 0:
            break
        comp, count = label4(diff)
        flat = comp.ravel()
        sizes = np.bincount(flat, minlength=count + 1)[1:]
        progressed = False
        for cid in np.argsort(-sizes, kind="stable") + 1:
            idx = np.flatnonzero(flat == cid)
            ys, xs = np.divmod(idx, w)
            near = ((ys - ys.mean()) ** 2 + (xs - xs.mean()) ** 2).argmin()
            base_r = float(np.clip(math.sqrt(idx.size / math.pi) + 1.0,
                                   1.5, 16.0))
            for cursor in dict.fromkeys(
                    (int(idx[near]), int(idx[0]), int(idx[-1]))):
                label = int(truth.labels.ravel()[cursor])
                v = float(values[cursor])
                # a human nudges the threshold when the cursor pixel falls
                # on the wrong side of it; mirror that per stroke
                if label == 0:
                    sig = sigma_s if v < sigma_s else min(1.0, v + 1e-3)
                else:
                    sig = sigma_s if v >= sigma_s else max(0.0, v - 1e-3)
                for radius in (base_r, max(1.5, base_r / 2.0)):
                    stroke = BrushStroke(cursor, radius, label, sig)
                    if pixel_budget is not None:
                        grown = covered.copy()
                        grown[brush_pixels(venus_enhanced,
                                           stroke).indices] = True
                        if int(grown.sum()) > pixel_budget:
                            continue
                    painted, _ = apply_brush(current, venus_enhanced, stroke)
                    if int((painted.labels != truth.labels).sum()) < before:
                        if pixel_budget is not None:
                            covered = grown
                        strokes.append(stroke)
                        current = painted
                        progressed = True
                        break
                if progressed:
                    break
            if progressed:
                break
        if not progressed:
            break
    return strokes, current


@dataclass(frozen=True)
class MitoEditEvent:
    """One scripted mito edit in the public request shape."""

    op: str              # exclude | split | merge | include
    object_id: int = None
    line: tuple = ()     # (y, x) waypoints for line-based ops

    def as_dict(self) -> dict:
        d = {"op": self.op}
        if self.object_id is not None:
            d["object_id"] = self.object_id
        if self.line:
            d["line"] = [list(p) for p in self.line]
        return d


def apply_mito_event(state, mito_enhanced: ChannelRaster,
                     event: MitoEditEvent):
    if event.op == "exclude":
        return mito_ops.exclude(state, event.object_id)
    line = mito_ops.rasterize_polyline(event.line, state.width)
    if event.op == "split":
        return mito_ops.split(state, event.object_id, line, mito_enhanced,
                              state.sigma_m)
    if event.op in ("merge", "include"):
        return mito_ops.merge_or_include(state, line, mito_enhanced,
                                         state.sigma_m)
    raise ValueError(f"unknown mito edit op {event.op!r}")


def _overlaps(obj_pixels: PixelSet, truth_blobs):
    return [k for k, t in enumerate(truth_blobs)
            if obj_pixels.intersection_size(t) > 0]


def _next_mito_fix(state, truth_blobs, width):
    """(priority, event) for the largest remaining discrepancy, else None."""
    owners = {}   # truth index -> [objects overlapping it]
    issues = []
    for obj in state.objects:
        hit = _overlaps(obj.pixels, truth_blobs)
        if not hit:
            issues.append((len(obj.pixels),
                           MitoEditEvent("exclude", object_id=obj.id)))
        elif len(hit) >= 2:
            parts = sorted(hit, key=lambda k: -obj.pixels.intersection_size(
                truth_blobs[k]))[:2]
            a, b = (truth_blobs[k] for k in parts)
            pa, pb = _closest_pair(a, b, width)
            my, mx = (pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0
            dy, dx = pb[0] - pa[0], pb[1] - pa[1]
            norm = math.hypot(dy, dx) or 1.0
            py, px = -dx / norm, dy / norm
            line = ((my - 4 * py, mx - 4 * px), (my + 4 * py, mx + 4 * px))
            size = min(obj.pixels.intersection_size(truth_blobs[k])
                       for k in parts)
            issues.append((size, MitoEditEvent("split", object_id=obj.id,
                                               line=line)))
        for k in hit:
            owners.setdefault(k, []).append(obj)
    for k, t in enumerate(truth_blobs):
        objs = owners.get(k, [])
        if not objs:
            ys, xs = t.coords(width)
            cov = np.cov(np.stack([ys, xs]).astype(np.float64), ddof=0)
            axis = np.linalg.eigh(cov)[1][:, -1]
            proj = (ys - ys.mean()) * axis[0] + (xs - xs.mean()) * axis[1]
            lo, hi = int(proj.argmin()), int(proj.argmax())
            line = ((int(ys[lo]), int(xs[lo])), (int(ys[hi]), int(xs[hi])))
            issues.append((len(t), MitoEditEvent("include", line=line)))
        elif len(objs) >= 2:
            objs = sorted(objs, key=lambda o: -len(o.pixels))[:2]
            pa, pb = _closest_pair(objs[0].pixels, objs[1].pixels, width)
            issues.append((len(objs[1].pixels),
                           MitoEditEvent("merge", line=(pa, pb))))
    if not issues:
        return None
    return max(issues, key=lambda kv: kv[0])[1]


def scripted_mito_edits(state, truth_blobs, mito_enhanced: ChannelRaster,
                        budget: int = 50):
    """Greedy exclude/split/merge/include events toward the true objects.

    Returns (events, final state). Stops at the budget, when the geometry
    shows no discrepancy, or when an edit stops helping.
    """
    events = []
    seen = set()
    while len(events) < budget:
        event = _next_mito_fix(state, truth_blobs, state.width)
        if event is None or event in seen:
            break
        seen.add(event)
        state = apply_mito_event(state, mito_enhanced, event)
        events.append(event)
    return events, state


def state_from_pixel_sets(pixel_sets, width: int, height: int,
                          sigma_m: float = 0.5, sigma_e: float = 0.5):
    """MitoState wrapping precomputed pixel sets (corrupted truth, tests)."""
    objs = tuple(
        mito_ops.MitoObject.build(k + 1, p, width, mito_ops.DETECTED,
                                  require_connected=False)
        for k, p in enumerate(pixel_sets))
    return mito_ops.MitoState(objs, width, height, sigma_m, sigma_e,
                              next_id=len(objs) + 1)
