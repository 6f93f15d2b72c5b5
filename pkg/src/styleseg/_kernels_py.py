"""Pure-Python boundary kernels; used when the compiled extension is unavailable."""

import math

import numpy as np

# Moore neighbourhood, clockwise in image coordinates (row axis points down),
# starting from the west neighbour.
_OFFSETS = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_INDEX = {off: i for i, off in enumerate(_OFFSETS)}


def trace_boundary(mask, r0, c0):
    """Moore-neighbour trace of the outer boundary through ``(r0, c0)``.

    ``(r0, c0)`` must be the first foreground pixel of its 8-connected
    component in raster order. Returns an ``(n, 2)`` int array of pixel
    coordinates in clockwise order, without repeating the start pixel.
    """
    h, w = mask.shape

    def fg(r, c):
        return 0 <= r < h and 0 <= c < w and mask[r, c] != 0

    contour = [(r0, c0)]
    pr, pc = r0, c0
    back = 0  # west of the first raster pixel is background
    second = None
    for _ in range(4 * h * w + 8):
        found = -1
        for step in range(1, 9):
            d = (back + step) % 8
            if fg(pr + _OFFSETS[d][0], pc + _OFFSETS[d][1]):
                found = d
                break
        if found < 0:
            break  # isolated pixel
        nr, nc = pr + _OFFSETS[found][0], pc + _OFFSETS[found][1]
        if second is None:
            second = (nr, nc)
        elif (pr, pc) == (r0, c0) and (nr, nc) == second:
            break
        # last background pixel examined, re-expressed relative to the new pixel
        br = pr + _OFFSETS[(found - 1) % 8][0]
        bc = pc + _OFFSETS[(found - 1) % 8][1]
        back = _INDEX[(br - nr, bc - nc)]
        pr, pc = nr, nc
        contour.append((pr, pc))
    if len(contour) > 1 and contour[-1] == (r0, c0):
        contour.pop()
    return np.asarray(contour, dtype=np.int64).reshape(-1, 2)


def _segment_distance(pr, pc, ar, ac, br, bc):
    vr, vc = br - ar, bc - ac
    length = math.hypot(vr, vc)
    if length == 0.0:
        return math.hypot(pr - ar, pc - ac)
    return abs(vr * (pc - ac) - vc * (pr - ar)) / length


def _simplify_open(pts, eps):
    n = len(pts)
    keep = [False] * n
    keep[0] = keep[n - 1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        best, best_d = -1, -1.0
        ar, ac = pts[i]
        br, bc = pts[j]
        for m in range(i + 1, j):
            d = _segment_distance(pts[m][0], pts[m][1], ar, ac, br, bc)
            if d > best_d:
                best, best_d = m, d
        if best >= 0 and best_d > eps:
            keep[best] = True
            stack.append((i, best))
            stack.append((best, j))
    return [p for p, k in zip(pts, keep) if k]


def simplify_closed(points, eps):
    """Douglas-Peucker simplification of a closed polygon."""
    pts = [(float(r), float(c)) for r, c in points]
    n = len(pts)
    if n < 3:
        return np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    r0, c0 = pts[0]
    far, far_d = 0, -1.0
    for i in range(n):
        d = math.hypot(pts[i][0] - r0, pts[i][1] - c0)
        if d > far_d:
            far, far_d = i, d
    if far == 0:
        return np.asarray(pts[:1], dtype=np.float64)
    first = _simplify_open(pts[: far + 1], eps)
    second = _simplify_open(pts[far:] + pts[:1], eps)
    return np.asarray(first[:-1] + second[:-1], dtype=np.float64).reshape(-1, 2)


def polygon_length(points):
    """Closed polyline length of an ``(n, 2)`` point array."""
    n = len(points)
    if n < 2:
        return 0.0
    total = 0.0
    for i in range(n):
        r1, c1 = points[i]
        r2, c2 = points[(i + 1) % n]
        total += math.hypot(float(r2 - r1), float(c2 - c1))
    return total


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_area(points):
    """Area of the convex hull of an ``(n, 2)`` point array (monotone chain)."""
    pts = sorted(set((float(p[0]), float(p[1])) for p in points))
    if len(pts) < 3:
        return 0.0
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    area = 0.0
    for i in range(len(hull)):
        x1, y1 = hull[i]
        x2, y2 = hull[(i + 1) % len(hull)]
        area += x1 * y2 - x2 * y1
    return abs(area) / 2.0
