# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled boundary kernels. Mirrors ``_kernels_py`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

cdef int DR[8]
cdef int DC[8]
DR[:] = [0, -1, -1, -1, 0, 1, 1, 1]
DC[:] = [-1, -1, 0, 1, 1, 1, 0, -1]


cdef inline int _index(int dr, int dc) noexcept:
    cdef int k
    for k in range(8):
        if DR[k] == dr and DC[k] == dc:
            return k
    return 0


def trace_boundary(const unsigned char[:, ::1] mask, Py_ssize_t r0, Py_ssize_t c0):
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t cap = 64, n = 1, limit = 4 * h * w + 8, it
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((cap, 2), dtype=np.int64)
    cdef Py_ssize_t pr = r0, pc = c0, nr, nc, qr, qc, br, bc
    cdef Py_ssize_t sr = -1, sc = -1
    cdef int back = 0, found, step, d
    out[0, 0] = r0
    out[0, 1] = c0
    for it in range(limit):
        found = -1
        for step in range(1, 9):
            d = (back + step) % 8
            qr = pr + DR[d]
            qc = pc + DC[d]
            if 0 <= qr < h and 0 <= qc < w and mask[qr, qc] != 0:
                found = d
                break
        if found < 0:
            break
        nr = pr + DR[found]
        nc = pc + DC[found]
        if sr < 0:
            sr = nr
            sc = nc
        elif pr == r0 and pc == c0 and nr == sr and nc == sc:
            break
        d = (found + 7) % 8
        br = pr + DR[d]
        bc = pc + DC[d]
        back = _index(<int>(br - nr), <int>(bc - nc))
        pr = nr
        pc = nc
        if n == cap:
            cap *= 2
            out = np.resize(out, (cap, 2))
        out[n, 0] = pr
        out[n, 1] = pc
        n += 1
    if n > 1 and out[n - 1, 0] == r0 and out[n - 1, 1] == c0:
        n -= 1
    return out[:n].copy()


cdef double _segment_distance(double pr, double pc, double ar, double ac,
                              double br, double bc) noexcept:
    cdef double vr = br - ar, vc = bc - ac
    cdef double length = sqrt(vr * vr + vc * vc)
    if length == 0.0:
        return sqrt((pr - ar) * (pr - ar) + (pc - ac) * (pc - ac))
    return fabs(vr * (pc - ac) - vc * (pr - ar)) / length


cdef void _simplify_open(double[:, ::1] pts, Py_ssize_t lo, Py_ssize_t hi,
                         double eps, unsigned char[::1] keep, Py_ssize_t[::1] stack):
    # keep/stack are indexed relative to lo; pts rows lo..hi inclusive, row hi may wrap
    cdef Py_ssize_t n = hi - lo + 1, top = 0, i, j, m, best, total = pts.shape[0]
    cdef double best_d, d
    keep[0] = 1
    keep[n - 1] = 1
    stack[0] = 0
    stack[1] = n - 1
    top = 2
    while top > 0:
        top -= 2
        i = stack[top]
        j = stack[top + 1]
        best = -1
        best_d = -1.0
        for m in range(i + 1, j):
            d = _segment_distance(pts[(lo + m) % total, 0], pts[(lo + m) % total, 1],
                                  pts[(lo + i) % total, 0], pts[(lo + i) % total, 1],
                                  pts[(lo + j) % total, 0], pts[(lo + j) % total, 1])
            if d > best_d:
                best = m
                best_d = d
        if best >= 0 and best_d > eps:
            keep[best] = 1
            stack[top] = i
            stack[top + 1] = best
            stack[top + 2] = best
            stack[top + 3] = j
            top += 4


def simplify_closed(points, double eps):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t n = pts.shape[0], i, far = 0
    cdef double far_d = -1.0, d
    if n < 3:
        return np.asarray(pts).copy()
    for i in range(n):
        d = sqrt((pts[i, 0] - pts[0, 0]) ** 2 + (pts[i, 1] - pts[0, 1]) ** 2)
        if d > far_d:
            far = i
            far_d = d
    if far == 0:
        return np.asarray(pts[:1]).copy()
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] keep_a = np.zeros(n + 1, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] keep_b = np.zeros(n + 1, dtype=np.uint8)
    cdef Py_ssize_t[::1] stack = np.empty(4 * n + 8, dtype=np.intp)
    _simplify_open(pts, 0, far, eps, keep_a, stack)
    _simplify_open(pts, far, n, eps, keep_b, stack)
    rows = []
    for i in range(far):
        if keep_a[i]:
            rows.append(i)
    for i in range(n - far):
        if keep_b[i]:
            rows.append(far + i)
    return np.asarray(pts)[rows].copy()


def polygon_length(points):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t n = pts.shape[0], i, j
    cdef double total = 0.0, dr, dc
    if n < 2:
        return 0.0
    for i in range(n):
        j = (i + 1) % n
        dr = pts[j, 0] - pts[i, 0]
        dc = pts[j, 1] - pts[i, 1]
        total += sqrt(dr * dr + dc * dc)
    return total


cdef inline double _cross(double[:, ::1] h, Py_ssize_t o, Py_ssize_t a,
                          double br, double bc) noexcept:
    return (h[a, 0] - h[o, 0]) * (bc - h[o, 1]) - (h[a, 1] - h[o, 1]) * (br - h[o, 0])


def convex_hull_area(points):
    arr = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    cdef double[:, ::1] pts = np.ascontiguousarray(arr)
    cdef Py_ssize_t n = pts.shape[0], i, k = 0, t
    if n < 3:
        return 0.0
    cdef double[:, ::1] hull = np.empty((2 * n, 2), dtype=np.float64)
    for i in range(n):
        while k >= 2 and _cross(hull, k - 2, k - 1, pts[i, 0], pts[i, 1]) <= 0:
            k -= 1
        hull[k, 0] = pts[i, 0]
        hull[k, 1] = pts[i, 1]
        k += 1
    t = k + 1
    for i in range(n - 2, -1, -1):
        while k >= t and _cross(hull, k - 2, k - 1, pts[i, 0], pts[i, 1]) <= 0:
            k -= 1
        hull[k, 0] = pts[i, 0]
        hull[k, 1] = pts[i, 1]
        k += 1
    k -= 1
    cdef double area = 0.0
    for i in range(k):
        t = (i + 1) % k
        area += hull[i, 0] * hull[t, 1] - hull[t, 0] * hull[i, 1]
    return fabs(area) / 2.0
