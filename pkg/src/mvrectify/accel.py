"""Hot geometry kernels: z-buffer rasterization and point-to-triangle queries.

Two implementations live side by side. The numba path compiles scalar
loops with @njit; the fallback path is vectorized numpy. The active path
is picked at import time: numba when importable, unless MVRECTIFY_NUMBA=0
is set in the environment. Both paths are exported so tests can cross
check them and the benchmark can time them against each other.

Both paths share the exact same arithmetic expressions so that results
agree to the last bit on non-degenerate inputs.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("MVRECTIFY_NUMBA", "1") != "0"

_LEAF_SIZE = 8


# ---------------------------------------------------------------------------
# rasterization
#
# Screen convention: sx, sy in pixel units, pixel (row, col) has center
# (col + 0.5, row + 0.5). Depth is view-space z; larger z wins (closer to
# the camera). Ties are broken toward the lower face index so the result
# does not depend on evaluation order.
# ---------------------------------------------------------------------------


def _raster_loop(sx, sy, z, faces, rows, cols, fidx, bary, zbuf):
    for f in range(faces.shape[0]):
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        ax = sx[i0]
        ay = sy[i0]
        bx = sx[i1]
        by = sy[i1]
        cx = sx[i2]
        cy = sy[i2]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        lox = min(ax, min(bx, cx))
        hix = max(ax, max(bx, cx))
        loy = min(ay, min(by, cy))
        hiy = max(ay, max(by, cy))
        c0 = max(0, int(np.ceil(lox - 0.5)))
        c1 = min(cols - 1, int(np.floor(hix - 0.5)))
        r0 = max(0, int(np.ceil(loy - 0.5)))
        r1 = min(rows - 1, int(np.floor(hiy - 0.5)))
        if c0 > c1 or r0 > r1:
            continue
        z0 = z[i0]
        z1 = z[i1]
        z2 = z[i2]
        for r in range(r0, r1 + 1):
            py = r + 0.5
            for c in range(c0, c1 + 1):
                px = c + 0.5
                w0 = (bx - px) * (cy - py) - (by - py) * (cx - px)
                w1 = (cx - px) * (ay - py) - (cy - py) * (ax - px)
                w2 = (ax - px) * (by - py) - (ay - py) * (bx - px)
                if area2 > 0.0:
                    inside = w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0
                else:
                    inside = w0 <= 0.0 and w1 <= 0.0 and w2 <= 0.0
                if not inside:
                    continue
                b0 = w0 / area2
                b1 = w1 / area2
                b2 = w2 / area2
                zp = b0 * z0 + b1 * z1 + b2 * z2
                if zp > zbuf[r, c] or (zp == zbuf[r, c] and f < fidx[r, c]):
                    zbuf[r, c] = zp
                    fidx[r, c] = f
                    bary[r, c, 0] = b0
                    bary[r, c, 1] = b1
                    bary[r, c, 2] = b2


if HAVE_NUMBA:
    _raster_loop_numba = numba.njit(cache=True)(_raster_loop)


def raster_screen_numba(sx, sy, z, faces, rows, cols):
    fidx = np.full((rows, cols), -1, dtype=np.int32)
    bary = np.zeros((rows, cols, 3), dtype=np.float64)
    zbuf = np.full((rows, cols), -np.inf, dtype=np.float64)
    _raster_loop_numba(
        np.ascontiguousarray(sx, dtype=np.float64),
        np.ascontiguousarray(sy, dtype=np.float64),
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(faces, dtype=np.int64),
        rows,
        cols,
        fidx,
        bary,
        zbuf,
    )
    return fidx, bary, zbuf


def raster_screen_numpy(sx, sy, z, faces, rows, cols):
    fidx = np.full((rows, cols), -1, dtype=np.int32)
    bary = np.zeros((rows, cols, 3), dtype=np.float64)
    zbuf = np.full((rows, cols), -np.inf, dtype=np.float64)
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f]
        ax, ay = sx[i0], sy[i0]
        bx, by = sx[i1], sy[i1]
        cx, cy = sx[i2], sy[i2]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        c0 = max(0, int(np.ceil(min(ax, bx, cx) - 0.5)))
        c1 = min(cols - 1, int(np.floor(max(ax, bx, cx) - 0.5)))
        r0 = max(0, int(np.ceil(min(ay, by, cy) - 0.5)))
        r1 = min(rows - 1, int(np.floor(max(ay, by, cy) - 0.5)))
        if c0 > c1 or r0 > r1:
            continue
        px = np.arange(c0, c1 + 1, dtype=np.float64)[None, :] + 0.5
        py = np.arange(r0, r1 + 1, dtype=np.float64)[:, None] + 0.5
        w0 = (bx - px) * (cy - py) - (by - py) * (cx - px)
        w1 = (cx - px) * (ay - py) - (cy - py) * (ax - px)
        w2 = (ax - px) * (by - py) - (ay - py) * (bx - px)
        if area2 > 0.0:
            inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        else:
            inside = (w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0)
        if not inside.any():
            continue
        b0 = w0 / area2
        b1 = w1 / area2
        b2 = w2 / area2
        zp = b0 * z[i0] + b1 * z[i1] + b2 * z[i2]
        sub_z = zbuf[r0 : r1 + 1, c0 : c1 + 1]
        sub_f = fidx[r0 : r1 + 1, c0 : c1 + 1]
        upd = inside & ((zp > sub_z) | ((zp == sub_z) & (f < sub_f)))
        if not upd.any():
            continue
        sub_z[upd] = zp[upd]
        sub_f[upd] = f
        sub_b = bary[r0 : r1 + 1, c0 : c1 + 1]
        sub_b[upd, 0] = b0[upd]
        sub_b[upd, 1] = b1[upd]
        sub_b[upd, 2] = b2[upd]
    return fidx, bary, zbuf


def raster_screen(sx, sy, z, faces, rows, cols):
    """Rasterize triangles given per-vertex screen coords and depth.

    Returns (face_index, barycentric, depth) buffers of shape
    (rows, cols), (rows, cols, 3) and (rows, cols). Uncovered pixels hold
    face index -1 and depth -inf.
    """
    if USE_NUMBA:
        return raster_screen_numba(sx, sy, z, faces, rows, cols)
    return raster_screen_numpy(sx, sy, z, faces, rows, cols)


# ---------------------------------------------------------------------------
# exact point-to-triangle distance
# ---------------------------------------------------------------------------


def _tri_dist2_scalar(px, py, pz, a, b, c):
    abx = b[0] - a[0]
    aby = b[1] - a[1]
    abz = b[2] - a[2]
    acx = c[0] - a[0]
    acy = c[1] - a[1]
    acz = c[2] - a[2]
    apx = px - a[0]
    apy = py - a[1]
    apz = pz - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = a[0], a[1], a[2]
    else:
        bpx = px - b[0]
        bpy = py - b[1]
        bpz = pz - b[2]
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = b[0], b[1], b[2]
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                t = d1 / (d1 - d3)
                qx = a[0] + t * abx
                qy = a[1] + t * aby
                qz = a[2] + t * abz
            else:
                cpx = px - c[0]
                cpy = py - c[1]
                cpz = pz - c[2]
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    qx, qy, qz = c[0], c[1], c[2]
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        t = d2 / (d2 - d6)
                        qx = a[0] + t * acx
                        qy = a[1] + t * acy
                        qz = a[2] + t * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            qx = b[0] + t * (c[0] - b[0])
                            qy = b[1] + t * (c[1] - b[1])
                            qz = b[2] + t * (c[2] - b[2])
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            qx = a[0] + abx * v + acx * w
                            qy = a[1] + aby * v + acy * w
                            qz = a[2] + abz * v + acz * w
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    return dx * dx + dy * dy + dz * dz


def tri_dist2_batch(p, a, b, c):
    """Squared distance from points p to triangles (a, b, c), elementwise.

    All inputs broadcast against each other with a trailing axis of 3.
    Vectorized port of the scalar region walk; branch priority matches.
    """
    p, a, b, c = np.broadcast_arrays(p, a, b, c)
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = p - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = p - c
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        s = va + vb + vc
        v_in = vb / s
        w_in = vc / s
        q = a + ab * v_in[..., None] + ac * w_in[..., None]

        m_bc = (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        q = np.where(m_bc[..., None], b + t_bc[..., None] * (c - b), q)

        m_ac = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
        t_ac = d2 / (d2 - d6)
        q = np.where(m_ac[..., None], a + t_ac[..., None] * ac, q)

        m_c = (d6 >= 0.0) & (d5 <= d6)
        q = np.where(m_c[..., None], c, q)

        m_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
        t_ab = d1 / (d1 - d3)
        q = np.where(m_ab[..., None], a + t_ab[..., None] * ab, q)

        m_b = (d3 >= 0.0) & (d4 <= d3)
        q = np.where(m_b[..., None], b, q)

        m_a = (d1 <= 0.0) & (d2 <= 0.0)
        q = np.where(m_a[..., None], a, q)

    d = p - q
    return (d * d).sum(-1)


class TriangleBVH:
    """Axis-aligned median-split BVH over a triangle soup.

    Built once per mesh in numpy; queried either by a numba traversal or
    by a KD-tree-pruned vectorized fallback. Both return exact nearest
    squared distances.
    """

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        tri = vertices[faces]  # (F, 3, 3)
        self.v0 = np.ascontiguousarray(tri[:, 0])
        self.v1 = np.ascontiguousarray(tri[:, 1])
        self.v2 = np.ascontiguousarray(tri[:, 2])
        self.centroids = tri.mean(axis=1)
        self.radius_max = float(
            np.sqrt(((tri - self.centroids[:, None, :]) ** 2).sum(-1).max())
        )
        self._kdtree = None
        self._build(tri)

    def _build(self, tri):
        nf = tri.shape[0]
        tmin = tri.min(axis=1)
        tmax = tri.max(axis=1)
        order = np.arange(nf, dtype=np.int64)
        bmin, bmax, left, right, start, count = [], [], [], [], [], []
        # (lo, hi, node_slot); children appended after their parent
        todo = [(0, nf, 0)]
        bmin.append(np.zeros(3))
        bmax.append(np.zeros(3))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        while todo:
            lo, hi, slot = todo.pop()
            idx = order[lo:hi]
            bmin[slot] = tmin[idx].min(axis=0)
            bmax[slot] = tmax[idx].max(axis=0)
            if hi - lo <= _LEAF_SIZE:
                left[slot] = -1
                right[slot] = -1
                start[slot] = lo
                count[slot] = hi - lo
                continue
            cen = self.centroids[idx]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            mid = (hi - lo) // 2
            part = np.argpartition(cen[:, axis], mid)
            order[lo:hi] = idx[part]
            for child_lo, child_hi in ((lo, lo + mid), (lo + mid, hi)):
                slot_c = len(bmin)
                bmin.append(np.zeros(3))
                bmax.append(np.zeros(3))
                left.append(-1)
                right.append(-1)
                start.append(0)
                count.append(0)
                if child_lo == lo:
                    left[slot] = slot_c
                else:
                    right[slot] = slot_c
                todo.append((child_lo, child_hi, slot_c))
        self.order = order
        self.bmin = np.ascontiguousarray(np.array(bmin))
        self.bmax = np.ascontiguousarray(np.array(bmax))
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)

    # -- queries ------------------------------------------------------

    def query_numba(self, points: np.ndarray) -> np.ndarray:
        points = np.ascontiguousarray(points, dtype=np.float64)
        return _bvh_query_numba(
            points,
            self.bmin,
            self.bmax,
            self.left,
            self.right,
            self.start,
            self.count,
            self.order,
            self.v0,
            self.v1,
            self.v2,
        )

    def query_numpy(self, points: np.ndarray) -> np.ndarray:
        from scipy.spatial import cKDTree

        points = np.asarray(points, dtype=np.float64)
        if self._kdtree is None:
            self._kdtree = cKDTree(self.centroids)
        k = min(4, len(self.v0))
        _, near = self._kdtree.query(points, k=k)
        near = near.reshape(len(points), k)
        ub = tri_dist2_batch(
            points[:, None, :], self.v0[near], self.v1[near], self.v2[near]
        ).min(axis=1)
        # the true nearest triangle's centroid lies within sqrt(ub) + r_max
        radius = np.sqrt(ub) + self.radius_max + 1e-12
        cand = self._kdtree.query_ball_point(points, radius)
        lens = np.fromiter((len(c) for c in cand), count=len(cand), dtype=np.int64)
        flat = np.concatenate([np.asarray(c, dtype=np.int64) for c in cand])
        owner = np.repeat(np.arange(len(points)), lens)
        d2 = tri_dist2_batch(points[owner], self.v0[flat], self.v1[flat], self.v2[flat])
        out = ub.copy()
        np.minimum.at(out, owner, d2)
        return out

    def query(self, points: np.ndarray) -> np.ndarray:
        """Exact squared distance from each point to the nearest triangle."""
        if USE_NUMBA:
            return self.query_numba(points)
        return self.query_numpy(points)


if HAVE_NUMBA:
    _tri_dist2_numba = numba.njit(cache=True, inline="always")(_tri_dist2_scalar)

    @numba.njit(cache=True)
    def _bvh_query_numba(points, bmin, bmax, left, right, start, count, order, v0, v1, v2):
        n = points.shape[0]
        out = np.empty(n, dtype=np.float64)
        stack = np.empty(128, dtype=np.int64)
        for i in range(n):
            px = points[i, 0]
            py = points[i, 1]
            pz = points[i, 2]
            best = np.inf
            top = 0
            stack[top] = 0
            top = 1
            while top > 0:
                top -= 1
                node = stack[top]
                dx = max(bmin[node, 0] - px, 0.0) + max(px - bmax[node, 0], 0.0)
                dy = max(bmin[node, 1] - py, 0.0) + max(py - bmax[node, 1], 0.0)
                dz = max(bmin[node, 2] - pz, 0.0) + max(pz - bmax[node, 2], 0.0)
                if dx * dx + dy * dy + dz * dz >= best:
                    continue
                l = left[node]
                if l < 0:
                    for j in range(start[node], start[node] + count[node]):
                        t = order[j]
                        d2 = _tri_dist2_numba(px, py, pz, v0[t], v1[t], v2[t])
                        if d2 < best:
                            best = d2
                else:
                    r = right[node]
                    dlx = max(bmin[l, 0] - px, 0.0) + max(px - bmax[l, 0], 0.0)
                    dly = max(bmin[l, 1] - py, 0.0) + max(py - bmax[l, 1], 0.0)
                    dlz = max(bmin[l, 2] - pz, 0.0) + max(pz - bmax[l, 2], 0.0)
                    drx = max(bmin[r, 0] - px, 0.0) + max(px - bmax[r, 0], 0.0)
                    dry = max(bmin[r, 1] - py, 0.0) + max(py - bmax[r, 1], 0.0)
                    drz = max(bmin[r, 2] - pz, 0.0) + max(pz - bmax[r, 2], 0.0)
                    dl = dlx * dlx + dly * dly + dlz * dlz
                    dr = drx * drx + dry * dry + drz * drz
                    if dl < dr:
                        stack[top] = r
                        top += 1
                        stack[top] = l
                        top += 1
                    else:
                        stack[top] = l
                        top += 1
                        stack[top] = r
                        top += 1
            out[i] = best
        return out
