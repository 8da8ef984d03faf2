"""Pure-Python/numpy versions of the hot loops.

These mirror ``_ckernels.pyx`` one-for-one and are used whenever the compiled
extension is not importable (or ``RADARFUSE_PURE_PYTHON=1`` is set).
"""
from __future__ import annotations

import numpy as np

SNAP_EPS = 1e-12


def farthest_point_sample(points, count, seed_index=0):
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    out = np.empty(count, dtype=np.int64)
    if count == 0:
        return out
    min_d2 = np.full(n, np.inf)
    cur = int(seed_index)
    for i in range(count):
        out[i] = cur
        d2 = np.sum((pts - pts[cur]) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
        min_d2[cur] = -1.0
        # argmax returns the first maximum: ties go to the lowest index
        cur = int(np.argmax(min_d2))
    return out


def ball_query(points, center_indices, radius, max_neighbors):
    pts = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.asarray(center_indices, dtype=np.int64)
    r2 = radius * radius
    out = np.empty((centers.shape[0], max_neighbors), dtype=np.int64)
    for row, c in enumerate(centers):
        d2 = np.sum((pts - pts[c]) ** 2, axis=1)
        inside = np.flatnonzero(d2 <= r2)
        inside = inside[inside != c][: max_neighbors - 1]
        out[row, :] = c
        out[row, 1 : 1 + inside.shape[0]] = inside
    return out


def hungarian_square(cost):
    """Minimum-cost perfect matching of a square matrix.

    Shortest augmenting path with row/column potentials, O(n^3).
    Returns ``assign`` with ``assign[row] = col``.
    """
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[col] = row matched to col (1-based, 0 = free)
    way = [0] * (n + 1)
    rows = c.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            row = rows[i0 - 1]
            ui0 = u[i0]
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    assign = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assign[p[j] - 1] = j - 1
    return assign


def _box_corners_bev(box):
    x, y, _, l, w, _, t = box[:7]
    c, s = np.cos(t), np.sin(t)
    hl, hw = 0.5 * l, 0.5 * w
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    return [(x + c * px - s * py, y + s * px + c * py) for px, py in local]


def _clip(subject, a, b):
    # keep the part of ``subject`` left of the directed edge a->b
    out = []
    ex, ey = b[0] - a[0], b[1] - a[1]
    n = len(subject)
    for k in range(n):
        p = subject[k]
        q = subject[(k + 1) % n]
        dp = ex * (p[1] - a[1]) - ey * (p[0] - a[0])
        dq = ex * (q[1] - a[1]) - ey * (q[0] - a[0])
        p_in = dp >= -SNAP_EPS
        q_in = dq >= -SNAP_EPS
        if p_in:
            out.append(p)
        if p_in != q_in and abs(dp - dq) > 0.0:
            t = dp / (dp - dq)
            if SNAP_EPS < t < 1.0 - SNAP_EPS:
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _polygon_area(poly):
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for k in range(n):
        x0, y0 = poly[k]
        x1, y1 = poly[(k + 1) % n]
        acc += x0 * y1 - x1 * y0
    return abs(0.5 * acc)


def bev_intersection_area(a, b):
    poly = _box_corners_bev(a)
    clip = _box_corners_bev(b)
    for k in range(4):
        poly = _clip(poly, clip[k], clip[(k + 1) % 4])
        if len(poly) < 3:
            return 0.0
    return _polygon_area(poly)


def bev_intersection_matrix(boxes_a, boxes_b):
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 7)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 7)
    out = np.zeros((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        ra = 0.5 * np.hypot(a[i, 3], a[i, 4])
        for j in range(b.shape[0]):
            rb = 0.5 * np.hypot(b[j, 3], b[j, 4])
            if np.hypot(a[i, 0] - b[j, 0], a[i, 1] - b[j, 1]) > ra + rb:
                continue
            out[i, j] = bev_intersection_area(a[i], b[j])
    return out
