# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pixel kernels: seeded flood fill, 4-connected labeling,
Zhang-Suen thinning and disc stamping.

Behavior must stay identical to ``_pykernels``; the test suite compares the
backends pixel for pixel.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil

cnp.import_array()


cdef inline bint _pred(float v, double sigma, bint above) nogil:
    if above:
        return v >= sigma
    return v < sigma


def flood_fill(cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] values,
               Py_ssize_t seed_y, Py_ssize_t seed_x, double sigma, bint above):
    cdef Py_ssize_t h = values.shape[0], w = values.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] out = np.zeros((h, w), dtype=np.uint8)
    if not _pred(values[seed_y, seed_x], sigma, above):
        return out
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stack = np.empty(h * w, dtype=np.int64)
    cdef Py_ssize_t top = 0, lin, y, x
    out[seed_y, seed_x] = 1
    stack[0] = seed_y * w + seed_x
    top = 1
    while top > 0:
        top -= 1
        lin = stack[top]
        y = lin // w
        x = lin - y * w
        if y > 0 and out[y - 1, x] == 0 and _pred(values[y - 1, x], sigma, above):
            out[y - 1, x] = 1
            stack[top] = lin - w
            top += 1
        if y + 1 < h and out[y + 1, x] == 0 and _pred(values[y + 1, x], sigma, above):
            out[y + 1, x] = 1
            stack[top] = lin + w
            top += 1
        if x > 0 and out[y, x - 1] == 0 and _pred(values[y, x - 1], sigma, above):
            out[y, x - 1] = 1
            stack[top] = lin - 1
            top += 1
        if x + 1 < w and out[y, x + 1] == 0 and _pred(values[y, x + 1], sigma, above):
            out[y, x + 1] = 1
            stack[top] = lin + 1
            top += 1
    return out


def flood_fill_multi(cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] values,
                     cnp.ndarray[cnp.int64_t, ndim=1] seeds_y,
                     cnp.ndarray[cnp.int64_t, ndim=1] seeds_x,
                     double sigma, bint above):
    cdef Py_ssize_t h = values.shape[0], w = values.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] out = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stack = np.empty(h * w, dtype=np.int64)
    cdef Py_ssize_t top = 0, i, lin, y, x
    for i in range(seeds_y.shape[0]):
        y = seeds_y[i]
        x = seeds_x[i]
        if out[y, x] == 0 and _pred(values[y, x], sigma, above):
            out[y, x] = 1
            stack[top] = y * w + x
            top += 1
    while top > 0:
        top -= 1
        lin = stack[top]
        y = lin // w
        x = lin - y * w
        if y > 0 and out[y - 1, x] == 0 and _pred(values[y - 1, x], sigma, above):
            out[y - 1, x] = 1
            stack[top] = lin - w
            top += 1
        if y + 1 < h and out[y + 1, x] == 0 and _pred(values[y + 1, x], sigma, above):
            out[y + 1, x] = 1
            stack[top] = lin + w
            top += 1
        if x > 0 and out[y, x - 1] == 0 and _pred(values[y, x - 1], sigma, above):
            out[y, x - 1] = 1
            stack[top] = lin - 1
            top += 1
        if x + 1 < w and out[y, x + 1] == 0 and _pred(values[y, x + 1], sigma, above):
            out[y, x + 1] = 1
            stack[top] = lin + 1
            top += 1
    return out


cdef Py_ssize_t _find(cnp.int64_t* parent, Py_ssize_t i) nogil:
    cdef Py_ssize_t root = i, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


def label4(cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] mask):
    """Two-pass union-find labeling; labels are 1-based in order of each
    component's smallest linear index."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=2, mode="c"] labels = np.zeros((h, w), dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] parent_arr = np.empty(h * w // 2 + 2, dtype=np.int64)
    cdef cnp.int64_t* parent = <cnp.int64_t*> parent_arr.data
    cdef Py_ssize_t nprov = 0, y, x, up, left, ra, rb
    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0:
                continue
            up = labels[y - 1, x] if y > 0 else 0
            left = labels[y, x - 1] if x > 0 else 0
            if up == 0 and left == 0:
                nprov += 1
                parent[nprov] = nprov
                labels[y, x] = <cnp.int32_t> nprov
            elif up != 0 and left == 0:
                labels[y, x] = up
            elif up == 0:
                labels[y, x] = left
            else:
                labels[y, x] = left if left < up else up
                ra = _find(parent, up)
                rb = _find(parent, left)
                if ra != rb:
                    if ra < rb:
                        parent[rb] = ra
                    else:
                        parent[ra] = rb
    # compact to first-encounter numbering
    cdef cnp.ndarray[cnp.int64_t, ndim=1] remap = np.zeros(nprov + 1, dtype=np.int64)
    cdef Py_ssize_t count = 0, r
    for y in range(h):
        for x in range(w):
            if labels[y, x] != 0:
                r = _find(parent, labels[y, x])
                if remap[r] == 0:
                    count += 1
                    remap[r] = count
                labels[y, x] = <cnp.int32_t> remap[r]
    return labels, count


def thin(cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] mask):
    """Zhang-Suen thinning, simultaneous deletion per subiteration."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] img = (mask != 0).astype(np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] kill = np.zeros((h, w), dtype=np.uint8)
    cdef bint changed = True, any_kill
    cdef int step, b, a, k
    cdef Py_ssize_t y, x, i
    cdef int nb[8]
    while changed:
        changed = False
        for step in range(2):
            any_kill = False
            for y in range(h):
                for x in range(w):
                    kill[y, x] = 0
                    if img[y, x] == 0:
                        continue
                    # p2..p9: N, NE, E, SE, S, SW, W, NW
                    nb[0] = img[y - 1, x] if y > 0 else 0
                    nb[1] = img[y - 1, x + 1] if (y > 0 and x + 1 < w) else 0
                    nb[2] = img[y, x + 1] if x + 1 < w else 0
                    nb[3] = img[y + 1, x + 1] if (y + 1 < h and x + 1 < w) else 0
                    nb[4] = img[y + 1, x] if y + 1 < h else 0
                    nb[5] = img[y + 1, x - 1] if (y + 1 < h and x > 0) else 0
                    nb[6] = img[y, x - 1] if x > 0 else 0
                    nb[7] = img[y - 1, x - 1] if (y > 0 and x > 0) else 0
                    b = 0
                    a = 0
                    for k in range(8):
                        b += nb[k]
                        if nb[k] == 0 and nb[(k + 1) % 8] == 1:
                            a += 1
                    if b < 2 or b > 6 or a != 1:
                        continue
                    if step == 0:
                        if (nb[0] and nb[2] and nb[4]) or (nb[2] and nb[4] and nb[6]):
                            continue
                    else:
                        if (nb[0] and nb[2] and nb[6]) or (nb[0] and nb[4] and nb[6]):
                            continue
                    kill[y, x] = 1
                    any_kill = True
            if any_kill:
                changed = True
                for y in range(h):
                    for x in range(w):
                        if kill[y, x]:
                            img[y, x] = 0
    return img


def disc_mask(cnp.ndarray[cnp.int64_t, ndim=1] points_y,
              cnp.ndarray[cnp.int64_t, ndim=1] points_x,
              Py_ssize_t h, Py_ssize_t w, double radius):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] out = np.zeros((h, w), dtype=np.uint8)
    cdef double r2 = radius * radius
    cdef Py_ssize_t reach = <Py_ssize_t> ceil(radius)
    cdef Py_ssize_t i, y, x, dy, dx, yy, xx
    for i in range(points_y.shape[0]):
        y = points_y[i]
        x = points_x[i]
        for dy in range(-reach, reach + 1):
            yy = y + dy
            if yy < 0 or yy >= h:
                continue
            for dx in range(-reach, reach + 1):
                xx = x + dx
                if xx < 0 or xx >= w:
                    continue
                if (<double> (dy * dy + dx * dx)) < r2:
                    out[yy, xx] = 1
    return out
