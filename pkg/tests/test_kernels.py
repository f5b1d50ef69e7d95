"""Pixel-kernel tests.

Every kernel is checked against a slow, obviously-correct oracle written in
plain Python sets/BFS, and the compiled backend (when present) is compared
pixel for pixel against the pure one on randomized rasters.
"""

import heapq
import math

import numpy as np
import pytest

from mitoviz import _kernels as K
from mitoviz._kernels import _pykernels as PK

try:
    from mitoviz._kernels import _ckernels as CK
except ImportError:
    CK = None


# --- oracles -----------------------------------------------------------------

def oracle_flood(values, seed, sigma, above):
    """Set-based BFS flood fill, 4-connectivity."""
    h, w = values.shape
    ok = (lambda v: v >= sigma) if above else (lambda v: v < sigma)
    if not ok(values[seed]):
        return set()
    seen = {seed}
    frontier = [seed]
    while frontier:
        y, x = frontier.pop()
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w and (ny, nx) not in seen and ok(values[ny, nx]):
                seen.add((ny, nx))
                frontier.append((ny, nx))
    return seen


def oracle_label(mask):
    """Repeated BFS in raster-scan order; returns list of pixel sets."""
    h, w = mask.shape
    todo = {(y, x) for y in range(h) for x in range(w) if mask[y, x]}
    comps = []
    for y in range(h):
        for x in range(w):
            if (y, x) in todo:
                comp = oracle_flood(mask.astype(np.float32), (y, x), 0.5, True)
                comps.append(comp)
                todo -= comp
    return comps


def oracle_geodesic(mask):
    """Max over components of max-min 4/8 path length, via per-pixel Dijkstra.

    Diagonal steps cost sqrt(2); exhaustive over all source pixels, so only
    usable on tiny masks.
    """
    h, w = mask.shape
    pixels = [(y, x) for y in range(h) for x in range(w) if mask[y, x]]
    best = 0.0
    for src in pixels:
        dist = {src: 0.0}
        heap = [(0.0, src)]
        while heap:
            d, (y, x) = heapq.heappop(heap)
            if d > dist[(y, x)]:
                continue
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy == 0 and dx == 0:
                        continue
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx]:
                        nd = d + (math.sqrt(2) if dy and dx else 1.0)
                        if nd < dist.get((ny, nx), math.inf) - 1e-12:
                            dist[(ny, nx)] = nd
                            heapq.heappush(heap, (nd, (ny, nx)))
        if dist:
            best = max(best, max(dist.values()))
    return best


def random_raster(rng, lo=1, hi=24):
    h, w = rng.integers(lo, hi, 2)
    return rng.random((h, w)).astype(np.float32)


# --- flood fill ---------------------------------------------------------------

def test_flood_fill_matches_oracle():
    rng = np.random.default_rng(11)
    for _ in range(60):
        vals = random_raster(rng, 1, 12)
        h, w = vals.shape
        seed = (int(rng.integers(h)), int(rng.integers(w)))
        sigma = float(rng.random())
        above = bool(rng.integers(2))
        got = K.flood_fill(vals, seed[0], seed[1], sigma, above)
        want = oracle_flood(vals, seed, sigma, above)
        assert {tuple(p) for p in np.argwhere(got)} == want


def test_flood_fill_failing_seed_is_empty():
    vals = np.zeros((3, 3), np.float32)
    assert K.flood_fill(vals, 1, 1, 0.5, True).sum() == 0


def test_flood_fill_does_not_leak_diagonally():
    vals = np.array([[1, 0], [0, 1]], np.float32)
    got = K.flood_fill(vals, 0, 0, 0.5, True)
    assert got.sum() == 1 and got[0, 0] == 1


def test_flood_fill_multi_is_union_of_singles():
    rng = np.random.default_rng(7)
    for _ in range(40):
        vals = random_raster(rng, 2, 14)
        h, w = vals.shape
        n = int(rng.integers(1, 6))
        ys = rng.integers(0, h, n)
        xs = rng.integers(0, w, n)
        sigma = float(rng.random())
        union = np.zeros_like(vals, dtype=np.uint8)
        for y, x in zip(ys, xs):
            union |= K.flood_fill(vals, int(y), int(x), sigma, True)
        got = K.flood_fill_multi(vals, ys, xs, sigma, True)
        assert np.array_equal(got, union)


# --- labeling -----------------------------------------------------------------

def test_label4_matches_oracle_partition():
    rng = np.random.default_rng(3)
    for _ in range(60):
        mask = random_raster(rng, 1, 12) > 0.55
        labels, count = K.label4(mask)
        comps = oracle_label(mask.astype(np.uint8))
        assert count == len(comps)
        got = [set(map(tuple, np.argwhere(labels == k + 1))) for k in range(count)]
        assert got == comps  # oracle emits components in first-pixel order


def test_label4_checkerboard_is_one_component_per_pixel():
    mask = np.indices((6, 6)).sum(axis=0) % 2 == 0
    labels, count = K.label4(mask)
    assert count == mask.sum()
    assert labels[mask].min() == 1 and labels[~mask].max() == 0


def test_label4_label_order_follows_linear_scan():
    mask = np.zeros((4, 4), bool)
    mask[3, 0] = True   # later in raster order
    mask[0, 3] = True   # earlier
    labels, count = K.label4(mask)
    assert count == 2
    assert labels[0, 3] == 1 and labels[3, 0] == 2


# --- thinning -----------------------------------------------------------------

def test_thin_is_subset_and_preserves_thin_lines():
    bar = np.zeros((5, 9), np.uint8)
    bar[2, 1:8] = 1
    assert np.array_equal(K.thin(bar), bar)  # 1-px line is already thin
    col = np.zeros((9, 3), np.uint8)
    col[1:8, 1] = 1
    assert np.array_equal(K.thin(col), col)


def test_thin_reduces_solid_rectangle_to_skeleton():
    rect = np.zeros((11, 31), np.uint8)
    rect[2:9, 2:29] = 1
    sk = K.thin(rect)
    assert 0 < sk.sum() < rect.sum()
    assert not (sk & ~rect).any()
    # skeleton stays a single 8-connected piece: walk it with a diagonal oracle
    ys, xs = np.nonzero(sk)
    seen = {(ys[0], xs[0])}
    frontier = [(ys[0], xs[0])]
    on = set(zip(ys.tolist(), xs.tolist()))
    while frontier:
        y, x = frontier.pop()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                p = (y + dy, x + dx)
                if p in on and p not in seen:
                    seen.add(p)
                    frontier.append(p)
    assert seen == on


# --- geodesic diameter ----------------------------------------------------------

def test_geodesic_diameter_bar_counts_steps():
    bar = np.ones((1, 10), np.uint8)
    assert K.geodesic_diameter(bar) == 9.0


def test_geodesic_diameter_l_shape_uses_diagonals():
    mask = np.zeros((4, 4), np.uint8)
    mask[3, :] = 1
    mask[:, 0] = 1
    got = K.geodesic_diameter(mask)
    assert got == pytest.approx(oracle_geodesic(mask), abs=1e-9)


def test_geodesic_diameter_matches_oracle_randomized():
    rng = np.random.default_rng(5)
    for _ in range(25):
        mask = (random_raster(rng, 2, 9) > 0.45).astype(np.uint8)
        assert K.geodesic_diameter(mask) == pytest.approx(
            oracle_geodesic(mask), abs=1e-9)


def test_geodesic_diameter_degenerate_cases():
    assert K.geodesic_diameter(np.zeros((4, 4), np.uint8)) == 0.0
    one = np.zeros((4, 4), np.uint8)
    one[2, 2] = 1
    assert K.geodesic_diameter(one) == 0.0


# --- disc stamping --------------------------------------------------------------

def test_disc_mask_matches_strict_distance_oracle():
    rng = np.random.default_rng(13)
    for _ in range(40):
        h, w = rng.integers(2, 16, 2)
        n = int(rng.integers(1, 4))
        ys = rng.integers(0, h, n)
        xs = rng.integers(0, w, n)
        r = float(rng.random() * 5)
        got = K.disc_mask(ys, xs, int(h), int(w), r)
        yy, xx = np.mgrid[0:h, 0:w]
        want = np.zeros((h, w), bool)
        for y, x in zip(ys, xs):
            want |= (yy - y) ** 2 + (xx - x) ** 2 < r * r
        assert np.array_equal(got.astype(bool), want)


def test_disc_mask_strict_boundary():
    # radius exactly sqrt(1): the 4-neighbors at distance 1 are excluded
    got = K.disc_mask(np.array([2]), np.array([2]), 5, 5, 1.0)
    assert got.sum() == 1


# --- backend agreement -----------------------------------------------------------

@pytest.mark.skipif(CK is None, reason="compiled backend not built")
def test_backends_agree_pixel_for_pixel():
    rng = np.random.default_rng(17)
    for _ in range(120):
        vals = random_raster(rng)
        h, w = vals.shape
        sigma = float(rng.random())
        sy, sx = int(rng.integers(h)), int(rng.integers(w))
        above = bool(rng.integers(2))
        assert np.array_equal(
            CK.flood_fill(vals, sy, sx, sigma, above),
            PK.flood_fill(vals, sy, sx, sigma, above))
        mask = (vals >= sigma).astype(np.uint8)
        la, ca = CK.label4(mask)
        lb, cb = PK.label4(mask)
        assert ca == cb and np.array_equal(la, lb)
        assert np.array_equal(CK.thin(mask), PK.thin(mask))
        n = int(rng.integers(1, 5))
        ys = rng.integers(0, h, n).astype(np.int64)
        xs = rng.integers(0, w, n).astype(np.int64)
        r = float(rng.random() * 6)
        assert np.array_equal(
            CK.disc_mask(ys, xs, h, w, r), PK.disc_mask(ys, xs, h, w, r))
        assert np.array_equal(
            CK.flood_fill_multi(vals, ys, xs, sigma, above),
            PK.flood_fill_multi(vals, ys, xs, sigma, above))


def test_backend_name_is_reported():
    import mitoviz
    assert mitoviz.KERNEL_BACKEND in ("compiled", "python")
