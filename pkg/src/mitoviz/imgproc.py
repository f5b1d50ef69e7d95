"""Raster primitives: channel rasters, sigmoid signal enhancement,
connected components, colormapped alpha blending and grayscale image I/O.

Conventions used across the package:
  * rasters are numpy arrays of shape (height, width), row-major;
  * a linear pixel index is ``i = y * width + x``;
  * connectivity is 4-connected everywhere (``_kernels`` doc).
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels

DEFAULT_PIXEL_SIZE_UM = 0.21


@dataclass(frozen=True)
class ChannelRaster:
    """One fluorescence channel, intensities normalized to [0, 1]."""

    values: np.ndarray                      # float32, shape (height, width)
    pixel_size_um: float = DEFAULT_PIXEL_SIZE_UM

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("raster must be 2D with positive dimensions")
        if not np.isfinite(v).all() or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("intensities must be finite and within [0, 1]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class EnhancementParams:
    """Brightness/contrast/translate triple of the sigmoid enhancement."""

    brightness: float = 0.5
    contrast: float = 0.5
    translate: float = 0.5

    def __post_init__(self):
        for name in ("brightness", "contrast", "translate"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
            object.__setattr__(self, name, v)


def enhance(raw: ChannelRaster, params: EnhancementParams) -> ChannelRaster:
    """Sigmoid signal enhancement, clamped to [0, 1].

    out = clamp(2*b / (1 + exp(-60*c*(v - t))), 0, 1)

    The arithmetic runs in float64 and is clamped because the unclamped
    expression can reach 2*b > 1 for b > 0.5.
    """
    v = raw.values.astype(np.float64)
    out = 2.0 * params.brightness / (
        1.0 + np.exp(-60.0 * params.contrast * (v - params.translate)))
    np.clip(out, 0.0, 1.0, out=out)
    return ChannelRaster(out.astype(np.float32), raw.pixel_size_um)


class PixelSet:
    """An immutable sorted set of linear pixel indices."""

    __slots__ = ("indices",)

    def __init__(self, indices):
        idx = np.ascontiguousarray(indices, dtype=np.int64).ravel()
        if idx.size:
            if (np.diff(idx) <= 0).any():
                raise ValueError("pixel indices must be strictly increasing")
            if idx[0] < 0:
                raise ValueError("pixel indices must be non-negative")
        if idx.base is not None or idx is indices:
            idx = idx.copy()
        idx.flags.writeable = False
        self.indices = idx

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "PixelSet":
        return cls(np.flatnonzero(mask))

    def to_mask(self, height: int, width: int) -> np.ndarray:
        mask = np.zeros(height * width, dtype=bool)
        mask[self.indices] = True
        return mask.reshape(height, width)

    def coords(self, width: int):
        """(ys, xs) arrays of the member pixels."""
        return np.divmod(self.indices, width)

    def bbox(self, width: int):
        """Tight (x, y, w, h) rectangle, or None when empty."""
        if not len(self):
            return None
        ys, xs = self.coords(width)
        x0, y0 = int(xs.min()), int(ys.min())
        return (x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1)

    def intersection_size(self, other: "PixelSet") -> int:
        return int(np.intersect1d(self.indices, other.indices,
                                  assume_unique=True).size)

    def __len__(self):
        return int(self.indices.size)

    def __eq__(self, other):
        return isinstance(other, PixelSet) and np.array_equal(
            self.indices, other.indices)

    def __hash__(self):
        return hash(self.indices.tobytes())

    def __repr__(self):
        return f"PixelSet(n={len(self)})"


def connected_component(raster: ChannelRaster, seed: int, sigma: float,
                        above: bool = True) -> PixelSet:
    """Maximal 4-connected component containing ``seed`` whose pixels all
    satisfy ``v >= sigma`` (above=True) or ``v < sigma``.

    Empty when the seed pixel itself fails the predicate, which is a valid
    outcome for propagation seeds.
    """
    h, w = raster.values.shape
    if not 0 <= seed < h * w:
        raise ValueError(f"seed index {seed} outside raster of {h * w} pixels")
    mask = _kernels.flood_fill(raster.values, seed // w, seed % w, sigma, above)
    return PixelSet.from_mask(mask)


def label_components(source, sigma: float = 0.5) -> list[PixelSet]:
    """Partition pixels with ``value >= sigma`` into maximal 4-connected
    components, ordered by smallest contained linear index."""
    values = source.values if isinstance(source, ChannelRaster) else np.asarray(source)
    labels, count = _kernels.label4(values >= sigma)
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    boundaries = np.searchsorted(flat, np.arange(1, count + 2), sorter=order)
    return [PixelSet(np.sort(order[boundaries[k]:boundaries[k + 1]]))
            for k in range(count)]


# --- colormaps and blending -------------------------------------------------

STRUCTURE_COLORS = np.array([
    [0.00, 0.00, 0.00],   # background
    [0.30, 0.75, 0.35],   # dendrite
    [0.25, 0.45, 0.95],   # axon
    [0.95, 0.60, 0.15],   # cell body
])


def _ramp(rgb):
    def apply(values):
        return values[..., None].astype(np.float64) * np.asarray(rgb)
    return apply


def _structure_map(codes):
    return STRUCTURE_COLORS[np.clip(codes.astype(np.int64), 0, 3)]


def _object_map(idmap):
    ids = idmap.astype(np.int64)
    n = int(ids.max()) if ids.size else 0
    palette = np.zeros((n + 1, 3))
    for k in range(1, n + 1):
        # golden-ratio hue walk keeps adjacent ids distinguishable
        palette[k] = colorsys.hsv_to_rgb((k * 0.6180339887) % 1.0, 0.65, 1.0)
    return palette[np.clip(ids, 0, n)]


COLORMAPS = {
    "gray": _ramp((1.0, 1.0, 1.0)),
    "yellow": _ramp((1.0, 1.0, 0.0)),
    "red": _ramp((1.0, 0.0, 0.0)),
    "green": _ramp((0.0, 1.0, 0.0)),
    "magenta": _ramp((1.0, 0.0, 1.0)),
    "cyan": _ramp((0.0, 1.0, 1.0)),
    "structure": _structure_map,
    "objects": _object_map,
}


@dataclass(frozen=True)
class LayerSpec:
    opacity: float = 0.0
    colormap: str = "gray"

    def __post_init__(self):
        if not 0.0 <= float(self.opacity) <= 1.0:
            raise ValueError("layer opacity must be in [0, 1]")
        if self.colormap not in COLORMAPS:
            raise ValueError(f"unknown colormap {self.colormap!r}")


@dataclass(frozen=True)
class BlendSpec:
    """Per-layer opacity/colormap for the fixed back-to-front stack:
    enhanced Venus, enhanced mito, structure labels, mito objects."""

    venus: LayerSpec = field(default_factory=lambda: LayerSpec(1.0, "yellow"))
    mito: LayerSpec = field(default_factory=lambda: LayerSpec(0.5, "red"))
    labels: LayerSpec = field(default_factory=lambda: LayerSpec(0.0, "structure"))
    objects: LayerSpec = field(default_factory=lambda: LayerSpec(0.0, "objects"))

    def layers(self):
        return (self.venus, self.mito, self.labels, self.objects)


def blend(venus, mito, labels, objects, spec: BlendSpec) -> np.ndarray:
    """Alpha-composite the four colormapped layers over black, back to
    front, returning an RGB float array in [0, 1].

    ``venus``/``mito`` are enhanced value arrays or ChannelRasters,
    ``labels`` a structure-code array, ``objects`` an object-id map; any
    layer may be None (treated as fully transparent).
    """
    planes = []
    for data in (venus, mito):
        planes.append(data.values if isinstance(data, ChannelRaster) else data)
    planes.append(getattr(labels, "labels", labels))
    planes.append(objects)

    shape = None
    for p in planes:
        if p is None:
            continue
        if shape is None:
            shape = p.shape
        elif p.shape != shape:
            raise ValueError(f"layer shapes differ: {p.shape} vs {shape}")
    if shape is None:
        raise ValueError("blend needs at least one layer")

    out = np.zeros(shape + (3,), dtype=np.float64)
    for data, layer in zip(planes, spec.layers()):
        if data is None or layer.opacity == 0.0:
            continue
        color = COLORMAPS[layer.colormap](np.asarray(data))
        out = color * layer.opacity + out * (1.0 - layer.opacity)
    return np.clip(out, 0.0, 1.0)


# --- grayscale image I/O ----------------------------------------------------

def load_channel(path, pixel_size_um: float = DEFAULT_PIXEL_SIZE_UM) -> ChannelRaster:
    """Load an 8- or 16-bit single-channel grayscale PNG/TIFF and normalize
    by the dtype maximum (not the per-image maximum, so enhancement
    parameters keep a stable meaning across images)."""
    path = Path(path)
    if path.suffix.lower() not in (".png", ".tif", ".tiff"):
        raise ValueError(f"unsupported image format: {path.suffix!r}")
    with Image.open(path) as img:
        if img.mode == "L":
            maxval = 255.0
        elif img.mode in ("I;16", "I;16B", "I;16L", "I"):
            maxval = 65535.0
        else:
            raise ValueError(
                f"expected single-channel 8/16-bit grayscale, got mode {img.mode!r}")
        arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("image must be 2D and non-empty")
    if arr.max() > maxval or arr.min() < 0:
        raise ValueError("pixel values exceed declared bit depth")
    return ChannelRaster((arr / maxval).astype(np.float32), pixel_size_um)


def save_channel(raster: ChannelRaster, path, bit_depth: int = 16) -> None:
    """Save to PNG/TIFF at the requested grayscale bit depth.

    load(save(x)) == x holds exactly when x was itself loaded at the same
    bit depth; otherwise values round to the nearest representable level.
    """
    path = Path(path)
    if bit_depth == 8:
        data = np.round(raster.values.astype(np.float64) * 255.0).astype(np.uint8)
        img = Image.fromarray(data, mode="L")
    elif bit_depth == 16:
        data = np.round(raster.values.astype(np.float64) * 65535.0).astype(np.uint16)
        img = Image.fromarray(data.astype(np.int32), mode="I")
        img = img.convert("I;16")
    else:
        raise ValueError("bit_depth must be 8 or 16")
    img.save(path)
