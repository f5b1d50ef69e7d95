"""Interactive learning: filter-bank features, a small convolutional pixel
classifier, the focused correction loss, and a wall-clock-budgeted
fine-tuning loop.

The feature extractor is a fixed, deterministic multi-scale filter bank
standing in for a frozen pre-trained backbone; only the three-layer
classifier head ever trains.  The loss couples a user term over corrected
pixels with a stability term over everything else:

    loss_u = ||M * (U - P)||_2        (corrected pixels)
    loss_o = ||(1 - M) * (L - P)||_2  (previous labels elsewhere)
    loss_t = f * loss_u + loss_o

with P the softmax output, U/L one-hot targets and M the correction mask.
All training arithmetic runs in float64 so analytic gradients survive
finite-difference checking.
"""

import struct
import time
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .imgproc import ChannelRaster
from .structure import StructureLabelRaster

BLUR_SCALES = (1, 2, 4, 8)
GRADIENT_SCALES = (1, 2, 4)
LAPLACE_SCALES = (1, 2, 4)
LOCAL_STD_SCALES = (2, 4)
RIDGE_SCALES = (1, 2, 4)

FEATURE_PLANES = (1 + len(BLUR_SCALES) + len(GRADIENT_SCALES)
                  + len(LAPLACE_SCALES) + len(LOCAL_STD_SCALES)
                  + len(RIDGE_SCALES))

CHECKPOINT_MAGIC = b"MVCL1"


# --- feature extraction ---------------------------------------------------------

@dataclass(frozen=True)
class FeatureStack:
    """Per-pixel feature planes, each standardized over the image."""

    values: np.ndarray   # (D, height, width) float64

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or v.dtype != np.float64:
            raise ValueError("feature stack must be (D, h, w) float64")
        if not np.isfinite(v).all():
            raise ValueError("feature stack must be finite")

    @property
    def planes(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]


def _ridge_response(x: np.ndarray, scale: float) -> np.ndarray:
    """Scale-normalized magnitude of the most negative Hessian eigenvalue.

    Bright tubes produce a strongly negative eigenvalue across the tube, so
    this plane lights up on neurite-like structures.
    """
    hyy = ndimage.gaussian_filter(x, scale, order=(2, 0))
    hxx = ndimage.gaussian_filter(x, scale, order=(0, 2))
    hxy = ndimage.gaussian_filter(x, scale, order=(1, 1))
    disc = np.sqrt((hxx - hyy) ** 2 + 4.0 * hxy * hxy)
    lo = 0.5 * ((hxx + hyy) - disc)
    return np.maximum(-lo, 0.0) * scale * scale


def extract_features(channel: ChannelRaster) -> FeatureStack:
    """Deterministic 16-plane stack: identity, blurs, gradient magnitude,
    Laplacian, local standard deviation and ridge response across scales,
    each plane standardized to zero mean / unit variance (constant planes
    stay zero)."""
    x = channel.values.astype(np.float64)
    planes = [x]
    for s in BLUR_SCALES:
        planes.append(ndimage.gaussian_filter(x, s))
    for s in GRADIENT_SCALES:
        planes.append(ndimage.gaussian_gradient_magnitude(x, s))
    for s in LAPLACE_SCALES:
        planes.append(ndimage.gaussian_laplace(x, s))
    for s in LOCAL_STD_SCALES:
        m = ndimage.gaussian_filter(x, s)
        m2 = ndimage.gaussian_filter(x * x, s)
        planes.append(np.sqrt(np.maximum(m2 - m * m, 0.0)))
    for s in RIDGE_SCALES:
        planes.append(_ridge_response(x, s))
    stack = np.empty((len(planes),) + x.shape)
    for k, p in enumerate(planes):
        sd = p.std()
        # ptp, not std: std of an exactly-constant plane can round to dust,
        # and standardizing would blow that dust up to unit variance
        if np.ptp(p) == 0.0 or sd == 0.0:
            stack[k] = 0.0
        else:
            stack[k] = (p - p.mean()) / sd
    return FeatureStack(stack)


# --- classifier -----------------------------------------------------------------

class ClassifierModel:
    """Three 3x3 convolutions (D -> hidden -> hidden -> C) with ReLU between
    and per-pixel softmax at the output."""

    def __init__(self, weights: dict):
        self.w1 = np.asarray(weights["w1"], np.float64)
        self.b1 = np.asarray(weights["b1"], np.float64)
        self.w2 = np.asarray(weights["w2"], np.float64)
        self.b2 = np.asarray(weights["b2"], np.float64)
        self.w3 = np.asarray(weights["w3"], np.float64)
        self.b3 = np.asarray(weights["b3"], np.float64)
        for arr in self.parameters().values():
            if not np.isfinite(arr).all():
                raise ValueError("model weights must be finite")

    @classmethod
    def initialize(cls, seed: int, in_channels: int = FEATURE_PLANES,
                   hidden: int = 16, n_classes: int = 4) -> "ClassifierModel":
        """He-style scaled uniform init from a counter-based RNG."""
        rng = np.random.Generator(np.random.Philox(seed))

        def he(shape):
            fan_in = shape[1] * shape[2] * shape[3]
            limit = np.sqrt(6.0 / fan_in)
            return rng.uniform(-limit, limit, size=shape)

        return cls({
            "w1": he((hidden, in_channels, 3, 3)), "b1": np.zeros(hidden),
            "w2": he((hidden, hidden, 3, 3)), "b2": np.zeros(hidden),
            "w3": he((n_classes, hidden, 3, 3)), "b3": np.zeros(n_classes),
        })

    @property
    def in_channels(self):
        return self.w1.shape[1]

    @property
    def hidden(self):
        return self.w1.shape[0]

    @property
    def n_classes(self):
        return self.w3.shape[0]

    def parameters(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3}

    def copy(self) -> "ClassifierModel":
        return ClassifierModel({k: v.copy() for k, v in self.parameters().items()})


def _conv_forward(x, w, b):
    """x (Cin,H,W), w (Cout,Cin,3,3) -> out (Cout,H,W) plus the im2col matrix."""
    cin, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))
    cols = np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(
        h * wd, cin * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return np.ascontiguousarray(out.reshape(h, wd, -1).transpose(2, 0, 1)), cols


def _conv_backward(dout, cols, w):
    """Gradients for one convolution given downstream dout (Cout,H,W)."""
    cout, h, wd = dout.shape
    cin = w.shape[1]
    dflat = dout.transpose(1, 2, 0).reshape(-1, cout)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = dflat @ w.reshape(cout, -1)
    dxp = np.zeros((cin, h + 2, wd + 2))
    dc = dcols.reshape(h, wd, cin, 3, 3)
    for dy in range(3):
        for dx in range(3):
            dxp[:, dy:dy + h, dx:dx + wd] += dc[:, :, :, dy, dx].transpose(2, 0, 1)
    return dw, db, dxp[:, 1:-1, 1:-1]


def _softmax(z):
    zs = z - z.max(axis=0, keepdims=True)
    e = np.exp(zs)
    return e / e.sum(axis=0, keepdims=True)


def _forward(model, x, keep: bool):
    """Full forward pass; optionally retain intermediates for backprop."""
    z1, c1 = _conv_forward(x, model.w1, model.b1)
    a1 = np.maximum(z1, 0.0)
    z2, c2 = _conv_forward(a1, model.w2, model.b2)
    a2 = np.maximum(z2, 0.0)
    z3, c3 = _conv_forward(a2, model.w3, model.b3)
    p = _softmax(z3)
    if not keep:
        return p, None
    return p, {"z1": z1, "c1": c1, "a1": a1, "z2": z2, "c2": c2,
               "a2": a2, "c3": c3}


def predict(model: ClassifierModel, features: FeatureStack, tile: int = 256):
    """Per-pixel class probabilities and argmax labels (ties -> lower code).

    Large images run in tiles with a 3-pixel halo.  Activations falling
    outside the true image are zeroed between layers, so every tile
    reproduces the whole-image per-layer zero-padded convolution exactly.
    """
    if features.planes != model.in_channels:
        raise ValueError(
            f"feature planes {features.planes} != model input "
            f"{model.in_channels}")
    d, h, w = features.values.shape
    halo = 3
    probs = np.empty((model.n_classes, h, w))
    xp = np.pad(features.values, ((0, 0), (halo, halo), (halo, halo)))
    inside = np.pad(np.ones((h, w)), halo)
    for y0 in range(0, h, tile):
        for x0 in range(0, w, tile):
            y1, x1 = min(y0 + tile, h), min(x0 + tile, w)
            block = xp[:, y0:y1 + 2 * halo, x0:x1 + 2 * halo]
            mb = inside[y0:y1 + 2 * halo, x0:x1 + 2 * halo]
            z1, _ = _conv_forward(block, model.w1, model.b1)
            a1 = np.maximum(z1, 0.0) * mb
            z2, _ = _conv_forward(a1, model.w2, model.b2)
            a2 = np.maximum(z2, 0.0) * mb
            z3, _ = _conv_forward(a2, model.w3, model.b3)
            p = _softmax(z3)
            probs[:, y0:y1, x0:x1] = p[:, halo:halo + (y1 - y0),
                                       halo:halo + (x1 - x0)]
    labels = probs.argmax(axis=0).astype(np.uint8)
    return probs, labels


# --- training signal and loss -----------------------------------------------------

def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((n_classes,) + labels.shape)
    for c in range(n_classes):
        out[c] = labels == c
    return out


@dataclass(frozen=True)
class TrainSignal:
    """Correction targets U (one-hot where mask=1), the mask M, and the
    previous labels L (one-hot everywhere)."""

    targets: np.ndarray    # U: (C, H, W)
    mask: np.ndarray       # M: (H, W) in {0, 1}
    previous: np.ndarray   # L: (C, H, W)

    def __post_init__(self):
        u, m, l = self.targets, self.mask, self.previous
        if u.shape != l.shape or u.shape[1:] != m.shape:
            raise ValueError("signal shapes are inconsistent")
        mb = m.astype(bool)
        if mb.any() and not np.allclose(u.sum(axis=0)[mb], 1.0):
            raise ValueError("U must be one-hot wherever M = 1")
        if not np.allclose(l.sum(axis=0), 1.0):
            raise ValueError("L must be one-hot at every pixel")

    @classmethod
    def from_labels(cls, corrected: np.ndarray, mask: np.ndarray,
                    previous: np.ndarray, n_classes: int) -> "TrainSignal":
        u = one_hot(corrected, n_classes)
        u *= mask.astype(np.float64)[None]
        return cls(u, mask.astype(np.uint8), one_hot(previous, n_classes))

    @property
    def n_classes(self):
        return self.targets.shape[0]


def loss(probs: np.ndarray, signal: TrainSignal, focusing_factor: float):
    """(loss_t, loss_u, loss_o) over the whole field, L2 norms."""
    if probs.shape != signal.targets.shape:
        raise ValueError("probability field shape differs from signal")
    m = signal.mask.astype(np.float64)[None]
    ru = m * (signal.targets - probs)
    ro = (1.0 - m) * (signal.previous - probs)
    loss_u = float(np.sqrt((ru * ru).sum()))
    loss_o = float(np.sqrt((ro * ro).sum()))
    return focusing_factor * loss_u + loss_o, loss_u, loss_o


def _loss_grad_wrt_probs(probs, signal, focusing_factor):
    m = signal.mask.astype(np.float64)[None]
    ru = m * (probs - signal.targets)
    ro = (1.0 - m) * (probs - signal.previous)
    lu = np.sqrt((ru * ru).sum())
    lo = np.sqrt((ro * ro).sum())
    dp = np.zeros_like(probs)
    if lu > 0:
        dp += focusing_factor * ru / lu
    if lo > 0:
        dp += ro / lo
    return dp, focusing_factor * lu + lo


def gradient(model: ClassifierModel, features: FeatureStack,
             signal: TrainSignal, focusing_factor: float):
    """Analytic d(loss_t)/d(weights); returns (grads dict, loss_t)."""
    x = features.values
    p, cache = _forward(model, x, keep=True)
    dp, loss_t = _loss_grad_wrt_probs(p, signal, focusing_factor)
    # softmax backward
    dz3 = p * (dp - (dp * p).sum(axis=0, keepdims=True))
    dw3, db3, da2 = _conv_backward(dz3, cache["c3"], model.w3)
    dz2 = da2 * (cache["z2"] > 0)
    dw2, db2, da1 = _conv_backward(dz2, cache["c2"], model.w2)
    dz1 = da1 * (cache["z1"] > 0)
    dw1, db1, _ = _conv_backward(dz1, cache["c1"], model.w1)
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2,
            "w3": dw3, "b3": db3}, loss_t


# --- fine-tuning ---------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one fine-tuning run; defaults follow the interactive budget
    of at most one minute."""

    focusing_factor: float = 10.0
    budget_seconds: float = 60.0
    learning_rate: float = 0.05
    momentum: float = 0.9
    tile: int = 64
    seed: int = 0
    eval_every: int = 1
    plateau_steps: int = 20
    plateau_rel: float = 1e-3
    clip_norm: float = 1.0

    def __post_init__(self):
        if self.focusing_factor < 0:
            raise ValueError("focusing factor must be >= 0")
        if self.budget_seconds <= 0 or self.learning_rate <= 0:
            raise ValueError("budget and learning rate must be positive")
        if self.tile < 8:
            raise ValueError("tile must be at least 8 pixels")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in (
            "focusing_factor", "budget_seconds", "learning_rate", "momentum",
            "tile", "seed", "eval_every", "plateau_steps", "plateau_rel",
            "clip_norm")}

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


def _crop_signal(signal, ys, ye, xs, xe):
    return TrainSignal(signal.targets[:, ys:ye, xs:xe],
                       signal.mask[ys:ye, xs:xe],
                       signal.previous[:, ys:ye, xs:xe])


def finetune(model: ClassifierModel, features: FeatureStack,
             signal: TrainSignal, config: TrainConfig = TrainConfig(),
             progress=None) -> ClassifierModel:
    """Budgeted SGD-with-momentum over random spatial tiles.

    Stops when the wall-clock budget elapses or the whole-image loss fails
    to improve by ``plateau_rel`` within ``plateau_steps`` evaluations, and
    returns the iterate with the lowest loss seen (so the result is never
    worse than the input model on its own signal).  Progress fractions
    emitted to ``progress`` are monotonically non-decreasing.
    """
    if not signal.mask.any():
        raise ValueError("no user input to learn from")
    if features.values.shape[1:] != signal.mask.shape:
        raise ValueError("features and signal dimensions differ")
    rng = np.random.Generator(np.random.Philox(config.seed))
    h, w = signal.mask.shape
    work = model.copy()
    velocity = {k: np.zeros_like(v) for k, v in work.parameters().items()}

    def full_loss(m):
        probs, _ = predict(m, features)
        return loss(probs, signal, config.focusing_factor)[0]

    started = time.monotonic()
    best = work.copy()
    best_loss = full_loss(work)
    last_gain_step = 0
    reported = 0.0

    def emit(frac):
        nonlocal reported
        if progress is not None:
            reported = max(reported, min(frac, 1.0))
            progress(reported)

    emit(0.0)
    step = 0
    while True:
        elapsed = time.monotonic() - started
        if elapsed >= config.budget_seconds:
            break
        if step - last_gain_step >= config.plateau_steps:
            break
        ty = int(rng.integers(0, max(h - config.tile, 0) + 1))
        tx = int(rng.integers(0, max(w - config.tile, 0) + 1))
        ye, xe = min(ty + config.tile, h), min(tx + config.tile, w)
        tile_feat = FeatureStack(
            np.ascontiguousarray(features.values[:, ty:ye, tx:xe]))
        tile_sig = _crop_signal(signal, ty, ye, tx, xe)
        grads, _ = gradient(work, tile_feat, tile_sig, config.focusing_factor)
        # whole-field L2 losses give gradients that scale with pixel count;
        # a global-norm clip keeps the fixed step size meaningful and stops
        # the first step from saturating the softmax into a dead network
        gnorm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        scale = min(1.0, config.clip_norm / gnorm) if gnorm > 0 else 0.0
        params = work.parameters()
        for k, g in grads.items():
            velocity[k] = (config.momentum * velocity[k]
                           - config.learning_rate * scale * g)
            params[k] += velocity[k]
        step += 1
        if step % config.eval_every == 0:
            current = full_loss(work)
            if current < best_loss * (1.0 - config.plateau_rel):
                best = work.copy()
                best_loss = current
                last_gain_step = step
            elif current < best_loss:
                best = work.copy()
                best_loss = current
        emit(elapsed / config.budget_seconds)
    emit(1.0)
    return best


# --- bootstrap ------------------------------------------------------------------------

def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Classic maximum between-class-variance threshold on [0, 1] data."""
    hist, edges = np.histogram(values.ravel(), bins=bins, range=(0.0, 1.0))
    hist = hist.astype(np.float64)
    total = hist.sum()
    if total == 0:
        return 0.5
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(hist)
    w1 = total - w0
    mu_cum = np.cumsum(hist * centers)
    mu_total = mu_cum[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        m0 = mu_cum / w0
        m1 = (mu_total - mu_cum) / w1
        between = w0 * w1 * (m0 - m1) ** 2
    between[~np.isfinite(between)] = -1.0
    k = int(np.argmax(between))
    return float(edges[k + 1])


def _width_classes(fg: np.ndarray):
    """Heuristic structure codes for foreground pixels by local half-width."""
    from . import _kernels
    dist = ndimage.distance_transform_edt(fg)
    labels, count = _kernels.label4(fg)
    out = np.zeros(fg.shape, np.uint8)
    for k in range(1, count + 1):
        comp = labels == k
        half_width = dist[comp].max()
        if half_width >= 5.0:
            code = 3     # wide blob: cell body
        elif half_width >= 1.9:
            code = 1     # thick tube: dendrite
        else:
            code = 2     # thin tube: axon
        out[comp] = code
    return out


def bootstrap_initial(seed: int, venus: ChannelRaster, mito: ChannelRaster,
                      imported_labels: StructureLabelRaster = None,
                      config: TrainConfig = None):
    """Initial (structure labels, mito foreground) for a fresh session.

    With imported labels they pass through untouched.  Otherwise both
    classifiers train on automatic scribbles: Otsu foreground of each
    channel as positive seeds (structure classes guessed from tube width),
    clearly-dark pixels as background seeds.
    """
    if config is None:
        config = TrainConfig(budget_seconds=10.0, seed=seed)
    h, w = venus.values.shape

    # mitochondria: 2-class head over the mito channel
    mito_mask = _bootstrap_binary(seed, mito, config)

    if imported_labels is not None:
        return imported_labels, mito_mask

    t = otsu_threshold(venus.values)
    fg = venus.values >= t
    if not fg.any() or fg.all():
        return StructureLabelRaster(
            np.zeros((h, w), np.uint8)), mito_mask
    scribble = _width_classes(fg)
    dark = venus.values < t * 0.5
    mask = (fg | _cap_seeds(dark, 3 * int(fg.sum()), seed)).astype(np.uint8)
    feats = extract_features(venus)
    signal = TrainSignal.from_labels(
        scribble.astype(np.int64), mask, np.zeros((h, w), np.int64), 4)
    model = ClassifierModel.initialize(seed, feats.planes, n_classes=4)
    model = finetune(model, feats, signal, config)
    _, labels = predict(model, feats)
    return StructureLabelRaster(labels), mito_mask


def _cap_seeds(mask: np.ndarray, limit: int, seed: int) -> np.ndarray:
    """Deterministic subsample of a seed mask.

    Foreground can be a few percent of the frame; uncapped background
    seeds then dominate the user term and the cheapest fit is the
    all-background classifier."""
    idx = np.flatnonzero(mask.ravel())
    if idx.size <= limit:
        return mask
    rng = np.random.Generator(np.random.Philox(seed + 2))
    keep = rng.choice(idx, size=limit, replace=False)
    out = np.zeros(mask.size, bool)
    out[keep] = True
    return out.reshape(mask.shape)


def _bootstrap_binary(seed, channel, config):
    t = otsu_threshold(channel.values)
    fg = channel.values >= t
    if not fg.any() or fg.all():
        return np.zeros(channel.values.shape, bool)
    dark = channel.values < t * 0.5
    mask = (fg | _cap_seeds(dark, 3 * int(fg.sum()), seed)).astype(np.uint8)
    feats = extract_features(channel)
    h, w = channel.values.shape
    signal = TrainSignal.from_labels(
        fg.astype(np.int64), mask, np.zeros((h, w), np.int64), 2)
    model = ClassifierModel.initialize(seed + 1, feats.planes, n_classes=2)
    model = finetune(model, feats, signal, config)
    _, labels = predict(model, feats)
    return labels.astype(bool)


# --- checkpoints ------------------------------------------------------------------------

def save_checkpoint(model: ClassifierModel, path) -> None:
    """Versioned binary blob: magic, dimensions, little-endian float32
    weights in a fixed order."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", model.in_channels, model.hidden,
                             model.n_classes))
        for key in ("w1", "b1", "w2", "b2", "w3", "b3"):
            arr = model.parameters()[key].astype("<f4")
            fh.write(arr.tobytes())


def load_checkpoint(path) -> ClassifierModel:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a classifier checkpoint")
        d, hidden, c = struct.unpack("<III", fh.read(12))
        shapes = {"w1": (hidden, d, 3, 3), "b1": (hidden,),
                  "w2": (hidden, hidden, 3, 3), "b2": (hidden,),
                  "w3": (c, hidden, 3, 3), "b3": (c,)}
        weights = {}
        for key, shape in shapes.items():
            n = int(np.prod(shape))
            buf = fh.read(4 * n)
            if len(buf) != 4 * n:
                raise ValueError(f"{path}: truncated checkpoint")
            weights[key] = np.frombuffer(buf, dtype="<f4").reshape(
                shape).astype(np.float64)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after weights")
    return ClassifierModel(weights)
