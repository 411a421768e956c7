# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``.

Same signatures and results (up to float summation order).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, cos, sin

cnp.import_array()

BACKEND = "cython"


cdef Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t a) noexcept nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def dbscan_labels(points, double eps, Py_ssize_t min_pts):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t n = p.shape[0]
    labels_arr = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels_arr
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef Py_ssize_t[::1] counts = np.ones(n, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = np.arange(n, dtype=np.intp)
    cdef Py_ssize_t[::1] comp_id = np.full(n, -1, dtype=np.intp)
    cdef double eps2 = eps * eps
    cdef Py_ssize_t i, j, ri, rj, best, next_id = 0
    cdef double dx, dy, d2, best_d2
    cdef bint any_core = False

    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = p[i, 0] - p[j, 0]
                dy = p[i, 1] - p[j, 1]
                if dx * dx + dy * dy <= eps2:
                    counts[i] += 1
                    counts[j] += 1
        for i in range(n):
            if counts[i] >= min_pts:
                any_core = True
                break
    if not any_core:
        return labels_arr

    with nogil:
        for i in range(n):
            if counts[i] < min_pts:
                continue
            for j in range(i + 1, n):
                if counts[j] < min_pts:
                    continue
                dx = p[i, 0] - p[j, 0]
                dy = p[i, 1] - p[j, 1]
                if dx * dx + dy * dy <= eps2:
                    ri = _find(parent, i)
                    rj = _find(parent, j)
                    if ri != rj:
                        if ri < rj:
                            parent[rj] = ri
                        else:
                            parent[ri] = rj
        for i in range(n):
            if counts[i] >= min_pts:
                ri = _find(parent, i)
                if comp_id[ri] < 0:
                    comp_id[ri] = next_id
                    next_id += 1
                labels[i] = comp_id[ri]
        for i in range(n):
            if counts[i] >= min_pts:
                continue
            best = -1
            best_d2 = 0.0
            for j in range(n):
                if counts[j] < min_pts:
                    continue
                dx = p[i, 0] - p[j, 0]
                dy = p[i, 1] - p[j, 1]
                d2 = dx * dx + dy * dy
                if d2 > eps2:
                    continue
                if (best < 0 or d2 < best_d2
                        or (d2 == best_d2 and (p[j, 0] < p[best, 0]
                            or (p[j, 0] == p[best, 0] and p[j, 1] < p[best, 1])))):
                    best = j
                    best_d2 = d2
            if best >= 0:
                labels[i] = labels[best]
    return labels_arr


def gaussian_smooth(points, double sigma):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t n = p.shape[0]
    out_arr = np.empty((n, 2), dtype=np.float64)
    if n == 0:
        return out_arr
    cdef double[:, ::1] out = out_arr
    cdef double[::1] wsum = np.ones(n)
    cdef double[::1] ax = np.empty(n)
    cdef double[::1] ay = np.empty(n)
    cdef double cut2 = 9.0 * sigma * sigma
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    cdef Py_ssize_t i, j
    cdef double dx, dy, d2, w
    with nogil:
        for i in range(n):
            ax[i] = p[i, 0]
            ay[i] = p[i, 1]
        for i in range(n):
            for j in range(i + 1, n):
                dx = p[i, 0] - p[j, 0]
                dy = p[i, 1] - p[j, 1]
                d2 = dx * dx + dy * dy
                if d2 <= cut2:
                    w = exp(-d2 * inv)
                    wsum[i] += w
                    wsum[j] += w
                    ax[i] += w * p[j, 0]
                    ay[i] += w * p[j, 1]
                    ax[j] += w * p[i, 0]
                    ay[j] += w * p[i, 1]
        for i in range(n):
            out[i, 0] = ax[i] / wsum[i]
            out[i, 1] = ay[i] / wsum[i]
    return out_arr


def rollout_cost_grad(u_in, x0_in, ref_in, pts_in, eta_in, double dt, q_in, r_in,
                      double rho, double d_safe, double radius, bint want_grad=True):
    cdef double[:, ::1] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef double[::1] x0 = np.ascontiguousarray(x0_in, dtype=np.float64)
    cdef double[:, ::1] ref = np.ascontiguousarray(ref_in, dtype=np.float64)
    cdef double[:, ::1] pts = np.ascontiguousarray(pts_in, dtype=np.float64).reshape(-1, 2)
    cdef double[::1] eta = np.ascontiguousarray(eta_in, dtype=np.float64)
    cdef double[::1] q = np.ascontiguousarray(q_in, dtype=np.float64)
    cdef double[::1] r = np.ascontiguousarray(r_in, dtype=np.float64)
    cdef Py_ssize_t H = u.shape[0]
    cdef Py_ssize_t m = pts.shape[0]
    cdef Py_ssize_t k, j
    cdef double[::1] xs = np.empty(H + 1)
    cdef double[::1] ys = np.empty(H + 1)
    cdef double[::1] ts = np.empty(H + 1)
    cdef double[::1] gx = np.empty(H + 1)
    cdef double[::1] gy = np.empty(H + 1)
    cdef double[::1] gt = np.empty(H + 1)
    cdef double tracking = 0.0, control = 0.0, obstacle = 0.0
    cdef double ex, ey, et, dx, dy, dist, viol, coef
    cdef double lx, ly, lt, c, s, v

    grad_arr = np.empty((H, 2), dtype=np.float64) if want_grad else None
    cdef double[:, ::1] grad
    if want_grad:
        grad = grad_arr

    with nogil:
        xs[0] = x0[0]
        ys[0] = x0[1]
        ts[0] = x0[2]
        for k in range(H):
            xs[k + 1] = xs[k] + dt * u[k, 0] * cos(ts[k])
            ys[k + 1] = ys[k] + dt * u[k, 0] * sin(ts[k])
            ts[k + 1] = ts[k] + dt * u[k, 1]
            control += r[0] * u[k, 0] * u[k, 0] + r[1] * u[k, 1] * u[k, 1]
        for k in range(H + 1):
            ex = xs[k] - ref[k, 0]
            ey = ys[k] - ref[k, 1]
            et = ts[k] - ref[k, 2]
            tracking += q[0] * ex * ex + q[1] * ey * ey + q[2] * et * et
            gx[k] = 2.0 * q[0] * ex
            gy[k] = 2.0 * q[1] * ey
            gt[k] = 2.0 * q[2] * et
            for j in range(m):
                dx = xs[k] - pts[j, 0]
                dy = ys[k] - pts[j, 1]
                dist = sqrt(dx * dx + dy * dy)
                viol = d_safe - (dist - radius)
                if viol > 0.0:
                    obstacle += eta[j] * viol * viol
                    if dist > 0.0:
                        coef = -2.0 * rho * eta[j] * viol / dist
                        gx[k] += coef * dx
                        gy[k] += coef * dy
        obstacle *= rho

        if want_grad:
            lx = gx[H]
            ly = gy[H]
            lt = gt[H]
            for k in range(H - 1, -1, -1):
                c = cos(ts[k])
                s = sin(ts[k])
                v = u[k, 0]
                grad[k, 0] = dt * (c * lx + s * ly) + 2.0 * r[0] * v
                grad[k, 1] = dt * lt + 2.0 * r[1] * u[k, 1]
                lt = gt[k] + lt + dt * v * (-s * lx + c * ly)
                lx = gx[k] + lx
                ly = gy[k] + ly

    return tracking + control + obstacle, tracking, control, obstacle, grad_arr
