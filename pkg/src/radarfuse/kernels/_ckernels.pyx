# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: farthest-point sampling, ball query, the square
assignment solver and rotated-rectangle overlap.

Semantics match ``_pykernels`` exactly; the test-suite runs both.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs, INFINITY

cnp.import_array()

cdef double SNAP_EPS = 1e-12


def farthest_point_sample(points, Py_ssize_t count, Py_ssize_t seed_index=0):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    out_arr = np.empty(count, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    if count == 0:
        return out_arr
    min_arr = np.full(n, INFINITY)
    cdef double[::1] min_d2 = min_arr
    cdef Py_ssize_t i, j, cur = seed_index, best
    cdef double dx, dy, dz, d2, best_d
    for i in range(count):
        out[i] = cur
        best = 0
        best_d = -INFINITY
        min_d2[cur] = -1.0
        for j in range(n):
            if min_d2[j] >= 0.0:
                dx = pts[j, 0] - pts[cur, 0]
                dy = pts[j, 1] - pts[cur, 1]
                dz = pts[j, 2] - pts[cur, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < min_d2[j]:
                    min_d2[j] = d2
            if min_d2[j] > best_d:
                best_d = min_d2[j]
                best = j
        cur = best
    return out_arr


def ball_query(points, center_indices, double radius, Py_ssize_t max_neighbors):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.int64_t[::1] centers = np.ascontiguousarray(center_indices, dtype=np.int64)
    cdef Py_ssize_t m = centers.shape[0], n = pts.shape[0]
    out_arr = np.empty((m, max_neighbors), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef double r2 = radius * radius, dx, dy, dz
    cdef Py_ssize_t row, j, k, c
    for row in range(m):
        c = centers[row]
        for k in range(max_neighbors):
            out[row, k] = c
        k = 1
        for j in range(n):
            if k >= max_neighbors:
                break
            if j == c:
                continue
            dx = pts[j, 0] - pts[c, 0]
            dy = pts[j, 1] - pts[c, 1]
            dz = pts[j, 2] - pts[c, 2]
            if dx * dx + dy * dy + dz * dz <= r2:
                out[row, k] = j
                k += 1
    return out_arr


def hungarian_square(cost):
    cdef double[:, ::1] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(n + 1)
    p_arr = np.zeros(n + 1, dtype=np.int64)
    way_arr = np.zeros(n + 1, dtype=np.int64)
    minv_arr = np.empty(n + 1)
    used_arr = np.empty(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef cnp.int64_t[::1] p = p_arr, way = way_arr
    cdef cnp.uint8_t[::1] used = used_arr
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = c[i0 - 1, j - 1] - u[i0] - v[j]
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


cdef void _corners(double x, double y, double l, double w, double t,
                   double* px, double* py) noexcept nogil:
    cdef double c = cos(t), s = sin(t), hl = 0.5 * l, hw = 0.5 * w
    cdef double lx[4]
    cdef double ly[4]
    lx[0] = hl; ly[0] = hw
    lx[1] = -hl; ly[1] = hw
    lx[2] = -hl; ly[2] = -hw
    lx[3] = hl; ly[3] = -hw
    cdef int k
    for k in range(4):
        px[k] = x + c * lx[k] - s * ly[k]
        py[k] = y + s * lx[k] + c * ly[k]


cdef double _overlap(const double[::1] a, const double[::1] b) noexcept nogil:
    # polygon buffers: a convex quad clipped by 4 half-planes has at most 8 vertices
    cdef double sx[16]
    cdef double sy[16]
    cdef double tx[16]
    cdef double ty[16]
    cdef double cx[4]
    cdef double cy[4]
    cdef int n, m, k, e
    cdef double ax, ay, ex, ey, dp, dq, t, acc
    _corners(a[0], a[1], a[3], a[4], a[6], sx, sy)
    _corners(b[0], b[1], b[3], b[4], b[6], cx, cy)
    n = 4
    for e in range(4):
        ax = cx[e]
        ay = cy[e]
        ex = cx[(e + 1) % 4] - ax
        ey = cy[(e + 1) % 4] - ay
        m = 0
        for k in range(n):
            dp = ex * (sy[k] - ay) - ey * (sx[k] - ax)
            dq = ex * (sy[(k + 1) % n] - ay) - ey * (sx[(k + 1) % n] - ax)
            if dp >= -SNAP_EPS:
                tx[m] = sx[k]
                ty[m] = sy[k]
                m += 1
            if (dp >= -SNAP_EPS) != (dq >= -SNAP_EPS) and fabs(dp - dq) > 0.0:
                t = dp / (dp - dq)
                if SNAP_EPS < t < 1.0 - SNAP_EPS:
                    tx[m] = sx[k] + t * (sx[(k + 1) % n] - sx[k])
                    ty[m] = sy[k] + t * (sy[(k + 1) % n] - sy[k])
                    m += 1
        if m < 3:
            return 0.0
        n = m
        for k in range(n):
            sx[k] = tx[k]
            sy[k] = ty[k]
    acc = 0.0
    for k in range(n):
        acc += sx[k] * sy[(k + 1) % n] - sx[(k + 1) % n] * sy[k]
    return fabs(0.5 * acc)


def bev_intersection_area(a, b):
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)[:7]
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)[:7]
    return _overlap(av, bv)


def bev_intersection_matrix(boxes_a, boxes_b):
    cdef double[:, ::1] a = np.ascontiguousarray(boxes_a, dtype=np.float64).reshape(-1, 7)
    cdef double[:, ::1] b = np.ascontiguousarray(boxes_b, dtype=np.float64).reshape(-1, 7)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], i, j
    out_arr = np.zeros((na, nb))
    cdef double[:, ::1] out = out_arr
    cdef double ra, rb, dx, dy
    for i in range(na):
        ra = 0.5 * sqrt(a[i, 3] * a[i, 3] + a[i, 4] * a[i, 4])
        for j in range(nb):
            rb = 0.5 * sqrt(b[j, 3] * b[j, 3] + b[j, 4] * b[j, 4])
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            if sqrt(dx * dx + dy * dy) > ra + rb:
                continue
            out[i, j] = _overlap(a[i], b[j])
    return out_arr
