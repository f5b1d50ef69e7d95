"""Reference kernel implementations on numpy/scipy.

These mirror ``mitoviz._kernels._ckernels`` operation for operation; the test
suite checks both backends pixel for pixel. Keep any observable behavior
(component ordering, tie breaking, boundary comparisons) in sync with the
Cython source.
"""

import heapq

import numpy as np
from scipy import ndimage

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
EIGHT_CONN = np.ones((3, 3), dtype=bool)
SQRT2 = float(np.sqrt(2.0))


def _threshold(values, sigma, above):
    return values >= sigma if above else values < sigma


def flood_fill(values, seed_y, seed_x, sigma, above):
    """Maximal 4-connected region containing the seed under the threshold
    predicate (``>= sigma`` when above, ``< sigma`` otherwise). Empty when the
    seed itself fails the predicate."""
    mask = _threshold(values, sigma, above)
    out = np.zeros(values.shape, dtype=np.uint8)
    if not mask[seed_y, seed_x]:
        return out
    labels, _ = ndimage.label(mask, structure=FOUR_CONN)
    out[labels == labels[seed_y, seed_x]] = 1
    return out


def flood_fill_multi(values, seeds_y, seeds_x, sigma, above):
    """Union of flood_fill regions over all seeds. Seeds failing the
    predicate contribute nothing."""
    mask = _threshold(values, sigma, above)
    out = np.zeros(values.shape, dtype=np.uint8)
    ok = mask[seeds_y, seeds_x]
    if not ok.any():
        return out
    labels, _ = ndimage.label(mask, structure=FOUR_CONN)
    hit = np.unique(labels[seeds_y[ok], seeds_x[ok]])
    out[np.isin(labels, hit)] = 1
    return out


def label4(mask):
    """4-connected labeling of the nonzero pixels. Labels are 1-based and
    numbered by the smallest linear index each component contains."""
    labels, count = ndimage.label(mask != 0, structure=FOUR_CONN)
    if count > 1:
        # make the first-encounter numbering explicit rather than relying on
        # scipy internals
        flat = labels.ravel()
        order = np.zeros(count + 1, dtype=np.int64)
        first = np.full(count + 1, flat.size, dtype=np.int64)
        np.minimum.at(first, flat, np.arange(flat.size))
        order[1 + np.argsort(first[1:], kind="stable")] = np.arange(1, count + 1)
        labels = order[flat].reshape(labels.shape)
    return labels.astype(np.int32), int(count)


def _neighbors8(padded, h, w):
    # p2..p9: N, NE, E, SE, S, SW, W, NW around each pixel
    return (
        padded[0:h, 1:w + 1],
        padded[0:h, 2:w + 2],
        padded[1:h + 1, 2:w + 2],
        padded[2:h + 2, 2:w + 2],
        padded[2:h + 2, 1:w + 1],
        padded[2:h + 2, 0:w],
        padded[1:h + 1, 0:w],
        padded[0:h, 0:w],
    )


def thin(mask):
    """Zhang-Suen morphological thinning to an 8-connected skeleton.

    Deletions within one subiteration are simultaneous. A nonempty input can
    thin to nothing (isolated 2x2 blocks); callers that need a nonempty
    skeleton must handle that case.
    """
    img = (mask != 0).copy()
    h, w = img.shape
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            padded = np.pad(img, 1)
            nb = _neighbors8(padded, h, w)
            b = np.zeros((h, w), dtype=np.int8)
            for p in nb:
                b += p
            a = np.zeros((h, w), dtype=np.int8)
            for k in range(8):
                a += ~nb[k] & nb[(k + 1) % 8]
            p2, _, p4, _, p6, _, p8, _ = nb
            if step == 0:
                cond = ~(p2 & p4 & p6) & ~(p4 & p6 & p8)
            else:
                cond = ~(p2 & p4 & p8) & ~(p2 & p6 & p8)
            kill = img & (b >= 2) & (b <= 6) & (a == 1) & cond
            if kill.any():
                img[kill] = False
                changed = True
    return img.astype(np.uint8)


_STEPS8 = ((-1, 0, 0), (-1, 1, 1), (0, 1, 0), (1, 1, 1),
           (1, 0, 0), (1, -1, 1), (0, -1, 0), (-1, -1, 1))


def _dijkstra_sweep(mask, start_lin, w):
    """Shortest-path distances from start over the mask's pixels, step costs
    1 orthogonal and sqrt(2) diagonal. Distances are tracked as integer step
    pairs so the float keys are exact and backend independent."""
    h = mask.shape[0]
    key = {start_lin: (0.0, 0, 0)}
    settled = set()
    heap = [(0.0, start_lin, 0, 0)]
    while heap:
        k, lin, a, b = heapq.heappop(heap)
        if lin in settled:
            continue
        settled.add(lin)
        y, x = divmod(lin, w)
        for dy, dx, diag in _STEPS8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx]:
                nlin = ny * w + nx
                if nlin in settled:
                    continue
                na, nb = a + 1 - diag, b + diag
                nk = na + nb * SQRT2
                if nlin not in key or nk < key[nlin][0]:
                    key[nlin] = (nk, na, nb)
                    heapq.heappush(heap, (nk, nlin, na, nb))
    return key


def _farthest(key):
    best_k, best_lin = -1.0, -1
    for lin, (k, _, _) in key.items():
        if k > best_k or (k == best_k and lin < best_lin):
            best_k, best_lin = k, lin
    return best_lin, best_k


def geodesic_diameter(mask):
    """Longest shortest path through the mask (in pixels) by a double
    Dijkstra sweep per 8-connected component."""
    mask = mask != 0
    if mask.sum() <= 1:
        return 0.0
    w = mask.shape[1]
    labels, count = ndimage.label(mask, structure=EIGHT_CONN)
    best = 0.0
    for comp in range(1, count + 1):
        comp_mask = labels == comp
        lins = np.flatnonzero(comp_mask.ravel())
        first = _dijkstra_sweep(comp_mask, int(lins[0]), w)
        far, _ = _farthest(first)
        second = _dijkstra_sweep(comp_mask, far, w)
        _, diam = _farthest(second)
        best = max(best, diam)
    return float(best)


def disc_mask(points_y, points_x, h, w, radius):
    """Pixels whose center lies strictly closer than ``radius`` to the center
    of any listed pixel. Comparison is done on squared integers against
    ``radius*radius`` so backends agree bit for bit."""
    out = np.zeros((h, w), dtype=np.uint8)
    r2 = float(radius) * float(radius)
    reach = int(np.ceil(radius))
    dy, dx = np.mgrid[-reach:reach + 1, -reach:reach + 1]
    inside = (dy * dy + dx * dx) < r2
    offs_y, offs_x = dy[inside], dx[inside]
    for y, x in zip(points_y, points_x):
        yy = y + offs_y
        xx = x + offs_x
        keep = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out[yy[keep], xx[keep]] = 1
    return out
