"""Object morphology, subset predicates, snapshots and comparison statistics.

Feature values live in micrometers (the pixel pitch is a parameter, not an
assumption). Subsets are predicate trees that re-evaluate against the current
object table; snapshots freeze a subset's summary statistics for later
comparison with percent differences and Welch t-tests.
"""

import csv
import io
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from ._kernels import geodesic_diameter, thin
from .imgproc import PixelSet
from .structure import StructureLabelRaster

FEATURE_NAMES = ("area", "circularity", "eccentricity", "length")

CSV_HEADER = ("snapshot_id,comment,group,image,count,density,"
              "mean_area_um2,mean_length_um,mean_eccentricity,"
              "mean_circularity")


@dataclass(frozen=True)
class FeatureVector:
    """Morphology of one object plus the structure class it sits in."""

    area: float          # um^2
    circularity: float   # (0, 1]
    eccentricity: float  # [0, 1)
    length: float        # um
    structure: int

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError("area must be positive")
        if not 0.0 < self.circularity <= 1.0:
            raise ValueError("circularity must lie in (0, 1]")
        if not 0.0 <= self.eccentricity < 1.0:
            raise ValueError("eccentricity must lie in [0, 1)")
        if self.length < 0:
            raise ValueError("length must be non-negative")

    def numeric(self) -> tuple:
        return (self.area, self.circularity, self.eccentricity, self.length)

    def as_dict(self) -> dict:
        return {"area": self.area, "circularity": self.circularity,
                "eccentricity": self.eccentricity, "length": self.length,
                "structure": self.structure}


def _majority_code(indices: np.ndarray, labels: StructureLabelRaster) -> int:
    """Most frequent non-background class under the pixels, ties toward the
    lower code, 0 when every pixel is background."""
    counts = np.bincount(labels.labels.ravel()[indices], minlength=4)
    if not counts[1:].any():
        return 0
    return int(counts[1:].argmax()) + 1


def compute_features(obj, labels: StructureLabelRaster,
                     pixel_size_um: float) -> FeatureVector:
    """Area, circularity, eccentricity, skeleton length and structure class."""
    idx = obj.pixels.indices
    if idx.size == 0:
        raise ValueError("object has no pixels")
    if pixel_size_um <= 0:
        raise ValueError("pixel size must be positive")
    h, w = labels.height, labels.width
    if int(idx[-1]) >= h * w:
        raise ValueError("object extends past the label raster")
    ys, xs = np.divmod(idx, w)
    n = int(idx.size)

    y0, x0 = int(ys.min()), int(xs.min())
    crop = np.zeros((int(ys.max()) - y0 + 3, int(xs.max()) - x0 + 3), bool)
    crop[ys - y0 + 1, xs - x0 + 1] = True

    edges = int((crop[1:] & ~crop[:-1]).sum() + (crop[:-1] & ~crop[1:]).sum()
                + (crop[:, 1:] & ~crop[:, :-1]).sum()
                + (crop[:, :-1] & ~crop[:, 1:]).sum())
    # the staircase boundary of a digital shape overcounts a smooth outline
    # by 4/pi on average; rescale so a rasterized disc scores as a circle
    perimeter = edges * (math.pi / 4.0)
    circularity = min(1.0, 4.0 * math.pi * n / (perimeter * perimeter))

    # each pixel is a unit square, not a point: adding its own second moment
    # keeps 1-pixel-thick shapes strictly below eccentricity 1
    cov = np.cov(np.stack([xs, ys]).astype(np.float64),
                 ddof=0) + np.eye(2) / 12.0
    lam2, lam1 = np.linalg.eigvalsh(cov)
    ecc = math.sqrt(max(0.0, 1.0 - lam2 / lam1)) if lam1 > 0 else 0.0

    length = geodesic_diameter(thin(crop.astype(np.uint8))) * pixel_size_um

    return FeatureVector(area=n * pixel_size_um * pixel_size_um,
                         circularity=float(circularity),
                         eccentricity=float(ecc),
                         length=float(length),
                         structure=_majority_code(idx, labels))


def density(objects, labels: StructureLabelRaster, classes=None) -> float:
    """Total member pixel area over the total area of the structure classes
    the members sit in (majority class per object, unless an explicit class
    set is given). Empty input gives 0."""
    objects = list(objects)
    if not objects:
        return 0.0
    member_px = sum(len(o.pixels) for o in objects)
    if classes is None:
        classes = {_majority_code(o.pixels.indices, labels) for o in objects}
    denom = int(sum((labels.labels == c).sum() for c in sorted(classes)))
    if denom == 0:
        raise ValueError("structure classes of the members have zero area")
    return member_px / denom


# --- subset predicate trees ---------------------------------------------

@dataclass(frozen=True)
class FeatureRange:
    """Interval constraint on one numeric feature; bounds of None are open
    ends, strict flags turn the closed default into < / >."""

    feature: str
    lo: float = None
    hi: float = None
    strict_lo: bool = False
    strict_hi: bool = False

    def __post_init__(self):
        if self.feature not in FEATURE_NAMES:
            raise ValueError(f"unknown feature {self.feature!r}")

    def matches(self, fv: FeatureVector) -> bool:
        v = getattr(fv, self.feature)
        if self.lo is not None:
            if v < self.lo or (self.strict_lo and v == self.lo):
                return False
        if self.hi is not None:
            if v > self.hi or (self.strict_hi and v == self.hi):
                return False
        return True


@dataclass(frozen=True)
class StructureIn:
    """Allowed structure class codes."""

    codes: frozenset

    def __post_init__(self):
        object.__setattr__(self, "codes", frozenset(int(c) for c in self.codes))
        if not all(0 <= c <= 3 for c in self.codes):
            raise ValueError("structure codes must be 0..3")

    def matches(self, fv: FeatureVector) -> bool:
        return fv.structure in self.codes


@dataclass(frozen=True)
class ProjectionRegion:
    """Selection region on a 2-D projection of the feature table.

    region is ("rect", xmin, ymin, xmax, ymax) or ("polygon", ((x, y), ...)).
    """

    method: str
    params: tuple
    region: tuple

    def __post_init__(self):
        if self.method not in ("pca", "pair"):
            raise ValueError(f"unknown projection method {self.method!r}")
        _check_region(self.region)


@dataclass(frozen=True)
class ImageRegion:
    """Objects touching a brushed pixel region of the image."""

    mask: PixelSet


@dataclass(frozen=True)
class Combine:
    op: str
    children: tuple

    def __post_init__(self):
        if self.op not in ("and", "or", "not"):
            raise ValueError(f"unknown combinator {self.op!r}")
        if self.op == "not" and len(self.children) != 1:
            raise ValueError("'not' takes exactly one child")


def _check_region(region):
    if region[0] == "rect":
        if len(region) != 5:
            raise ValueError("rect region is (\"rect\", x0, y0, x1, y1)")
    elif region[0] == "polygon":
        if len(region) != 2 or len(region[1]) < 3:
            raise ValueError("polygon region needs at least 3 points")
    else:
        raise ValueError(f"unknown region shape {region[0]!r}")


def _on_segment(px, py, ax, ay, bx, by):
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if cross != 0:
        return False
    return (min(ax, bx) <= px <= max(ax, bx)
            and min(ay, by) <= py <= max(ay, by))


def _in_polygon(px, py, points):
    pts = [(float(x), float(y)) for x, y in points]
    for (ax, ay), (bx, by) in zip(pts, pts[1:] + pts[:1]):
        if _on_segment(px, py, ax, ay, bx, by):
            return True   # boundary counts as inside
    inside = False
    for (ax, ay), (bx, by) in zip(pts, pts[1:] + pts[:1]):
        if (ay > py) != (by > py):
            if px < (bx - ax) * (py - ay) / (by - ay) + ax:
                inside = not inside
    return inside


def _in_region(xy, region) -> bool:
    x, y = xy
    if region[0] == "rect":
        _, x0, y0, x1, y1 = region
        return x0 <= x <= x1 and y0 <= y <= y1
    return _in_polygon(x, y, region[1])


def evaluate(node, features: dict, objects: dict = None) -> frozenset:
    """Object ids matching a predicate tree.

    features maps id -> FeatureVector for every candidate object; objects
    (id -> MitoObject) is only needed when the tree contains image regions.
    """
    ids = frozenset(features)
    return frozenset(_eval(node, ids, features, objects))


def _eval(node, ids, features, objects):
    if isinstance(node, (FeatureRange, StructureIn)):
        return {i for i in ids if node.matches(features[i])}
    if isinstance(node, ProjectionRegion):
        coords = project(features, node.method, node.params)
        return {i for i in ids if _in_region(coords[i], node.region)}
    if isinstance(node, ImageRegion):
        if objects is None:
            raise ValueError("image-region filters need the object table")
        return {i for i in ids
                if objects[i].pixels.intersection_size(node.mask) > 0}
    if isinstance(node, Combine):
        parts = [_eval(c, ids, features, objects) for c in node.children]
        if node.op == "and":
            out = set(ids)
            for p in parts:
                out &= p
            return out
        if node.op == "or":
            out = set()
            for p in parts:
                out |= p
            return out
        return set(ids) - parts[0]
    raise TypeError(f"not a predicate node: {node!r}")


def node_to_dict(node) -> dict:
    if isinstance(node, FeatureRange):
        return {"kind": "range", "feature": node.feature,
                "lo": node.lo, "hi": node.hi,
                "strict_lo": node.strict_lo, "strict_hi": node.strict_hi}
    if isinstance(node, StructureIn):
        return {"kind": "structure", "codes": sorted(node.codes)}
    if isinstance(node, ProjectionRegion):
        if node.region[0] == "rect":
            region = {"shape": "rect", "bounds": list(node.region[1:])}
        else:
            region = {"shape": "polygon",
                      "points": [list(p) for p in node.region[1]]}
        return {"kind": "projection", "method": node.method,
                "params": list(node.params), "region": region}
    if isinstance(node, ImageRegion):
        return {"kind": "image",
                "indices": [int(i) for i in node.mask.indices]}
    if isinstance(node, Combine):
        return {"kind": "combine", "op": node.op,
                "children": [node_to_dict(c) for c in node.children]}
    raise TypeError(f"not a predicate node: {node!r}")


def node_from_dict(d: dict):
    kind = d["kind"]
    if kind == "range":
        return FeatureRange(d["feature"], d.get("lo"), d.get("hi"),
                            bool(d.get("strict_lo", False)),
                            bool(d.get("strict_hi", False)))
    if kind == "structure":
        return StructureIn(frozenset(d["codes"]))
    if kind == "projection":
        r = d["region"]
        if r["shape"] == "rect":
            region = ("rect",) + tuple(float(v) for v in r["bounds"])
        else:
            region = ("polygon",
                      tuple((float(x), float(y)) for x, y in r["points"]))
        return ProjectionRegion(d["method"], tuple(d["params"]), region)
    if kind == "image":
        return ImageRegion(PixelSet(np.asarray(d["indices"], np.int64)))
    if kind == "combine":
        return Combine(d["op"], tuple(node_from_dict(c)
                                      for c in d["children"]))
    raise ValueError(f"unknown predicate node kind {kind!r}")


@dataclass(frozen=True)
class Subset:
    """Named, re-evaluable selection of objects."""

    id: int
    name: str
    members: tuple
    definition: object


def filter_by_ranges(features: dict, ranges=(), subset_id: int = 0,
                     name: str = "") -> Subset:
    """Conjunction of per-feature interval filters.

    ranges is either an iterable of predicate leaves or a mapping sugar:
    {"length": (0.5, None)} builds closed FeatureRange bounds and
    {"structure": {1, 2}} builds a StructureIn leaf. No constraints keeps
    every object.
    """
    if isinstance(ranges, dict):
        nodes = []
        for feat, bounds in ranges.items():
            if feat == "structure":
                nodes.append(StructureIn(frozenset(bounds)))
            else:
                lo, hi = bounds
                nodes.append(FeatureRange(feat, lo, hi))
    else:
        nodes = list(ranges)
    tree = nodes[0] if len(nodes) == 1 else Combine("and", tuple(nodes))
    members = tuple(sorted(evaluate(tree, features)))
    return Subset(subset_id, name, members, tree)


def project(features: dict, method: str, params=()) -> dict:
    """Per-object 2-D coordinates, keyed by object id.

    "pair" takes two feature names verbatim; "pca" standardizes the four
    numeric features and projects onto the top-2 covariance eigenvectors
    (sign fixed so the largest-magnitude loading is positive; null
    directions give exact zero coordinates).
    """
    ids = sorted(features)
    x = np.array([features[i].numeric() for i in ids], np.float64)
    if method == "pair":
        fx, fy = params
        cols = (FEATURE_NAMES.index(fx), FEATURE_NAMES.index(fy))
        coords = x[:, cols]
    elif method == "pca":
        if len(ids) < 2:
            raise ValueError("pca needs at least two objects")
        sd = x.std(axis=0)
        z = np.where(sd > 0, (x - x.mean(axis=0)) / np.where(sd == 0, 1, sd),
                     0.0)
        lam, vec = np.linalg.eigh(np.cov(z.T, ddof=1))
        out = []
        for k in np.argsort(lam)[::-1][:2]:
            if lam[k] <= 1e-12 * max(1.0, float(lam.max())):
                out.append(np.zeros(len(ids)))
                continue
            v = vec[:, k]
            if v[int(np.abs(v).argmax())] < 0:
                v = -v
            out.append(z @ v)
        coords = np.stack(out, axis=1)
    else:
        raise ValueError(f"unknown projection method {method!r}")
    return {i: (float(coords[k, 0]), float(coords[k, 1]))
            for k, i in enumerate(ids)}


def select_in_projection(coords: dict, region, method: str = "pca",
                         params=(), subset_id: int = 0,
                         name: str = "") -> Subset:
    """Objects whose projected coordinates fall inside the region
    (boundary inclusive)."""
    _check_region(region)
    members = tuple(sorted(i for i, xy in coords.items()
                           if _in_region(xy, region)))
    return Subset(subset_id, name, members,
                  ProjectionRegion(method, tuple(params), region))


def select_in_image(objects: dict, mask: PixelSet, subset_id: int = 0,
                    name: str = "") -> Subset:
    """Objects with at least one pixel under the brushed mask."""
    members = tuple(sorted(i for i, o in objects.items()
                           if o.pixels.intersection_size(mask) > 0))
    return Subset(subset_id, name, members, ImageRegion(mask))


def subset_to_json(subset: Subset) -> dict:
    return {"id": subset.id, "name": subset.name,
            "members": list(subset.members),
            "definition": node_to_dict(subset.definition)}


def subset_from_json(d: dict) -> Subset:
    return Subset(int(d["id"]), d["name"], tuple(d["members"]),
                  node_from_dict(d["definition"]))


# --- snapshots ------------------------------------------------------------

@dataclass(frozen=True)
class Snapshot:
    """Frozen summary statistics of a subset; means are None when empty."""

    id: int
    comment: str
    group: str
    image: str
    count: int
    density: float
    mean_area: float
    mean_length: float
    mean_eccentricity: float
    mean_circularity: float
    members: tuple
    created_at: float


def record_snapshot(subset: Subset, objects: dict, features: dict,
                    labels: StructureLabelRaster, comment: str = "",
                    group: str = "", image: str = "", snapshot_id: int = 0,
                    created_at: float = None) -> Snapshot:
    members = subset.members
    if members:
        dens = density([objects[i] for i in members], labels)
        table = np.array([features[i].numeric() for i in members],
                         np.float64)
        means = table.mean(axis=0)
        m_area, m_circ, m_ecc, m_len = (float(v) for v in means)
    else:
        dens = 0.0
        m_area = m_circ = m_ecc = m_len = None
    return Snapshot(snapshot_id, comment, group, image, len(members), dens,
                    m_area, m_len, m_ecc, m_circ, members,
                    time.time() if created_at is None else created_at)


def snapshots_to_csv(snapshots) -> str:
    """Deterministic CSV; float cells use shortest round-trip repr."""
    def cell(v):
        return "" if v is None else repr(float(v))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for s in snapshots:
        writer.writerow([s.id, s.comment, s.group, s.image, s.count,
                         cell(s.density), cell(s.mean_area),
                         cell(s.mean_length), cell(s.mean_eccentricity),
                         cell(s.mean_circularity)])
    return buf.getvalue()


# --- comparison statistics ---------------------------------------------------

def percent_difference(fv1: float, fv2: float) -> float:
    """(fv1 - fv2) / fv1 * 100; deliberately not symmetrized."""
    if fv1 == 0:
        raise ValueError("reference value must be non-zero")
    return (fv1 - fv2) / fv1 * 100.0


def welch_t_test(a, b) -> tuple:
    """Two-sided Welch t-test, (t, p); degrees of freedom by
    Welch-Satterthwaite. Zero variance on both sides collapses to
    (0, 1) for equal means and (+-inf, 0) otherwise."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least two values per side")
    sa = a.var(ddof=1) / a.size
    sb = b.var(ddof=1) / b.size
    se2 = sa + sb
    if se2 == 0.0:
        if a.mean() == b.mean():
            return 0.0, 1.0
        return math.copysign(math.inf, a.mean() - b.mean()), 0.0
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2 * se2 / (sa * sa / (a.size - 1) + sb * sb / (b.size - 1))
    return float(t), float(2.0 * stdtr(df, -abs(t)))


def compare(features_a, features_b) -> dict:
    """Per-feature percent difference of means plus Welch t-test between two
    per-object samples. Keys are the numeric feature names."""
    out = {}
    for name in FEATURE_NAMES:
        a = np.array([getattr(f, name) for f in features_a], np.float64)
        b = np.array([getattr(f, name) for f in features_b], np.float64)
        t, p = welch_t_test(a, b)
        out[name] = {"difference": percent_difference(float(a.mean()),
                                                      float(b.mean())),
                     "t": t, "p": p}
    return out


def accuracy(len_c: float, len_m: float) -> float:
    """(1 - |len_c - len_m| / len_c) * 100; negative when the error exceeds
    the reference."""
    if len_c <= 0:
        raise ValueError("reference length must be positive")
    return (1.0 - abs(len_c - len_m) / len_c) * 100.0
