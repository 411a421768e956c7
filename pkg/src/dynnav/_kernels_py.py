"""Numpy implementations of the hot kernels.

These are the fallback used when the compiled ``_kernels`` extension is not
available, and the reference the extension is tested against. Every function
here has an identically named, identically behaving counterpart in
``_kernels.pyx``.
"""
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

BACKEND = "python"


def _close_pairs(points, radius):
    """Index pairs (i < j) with ``dx*dx + dy*dy <= radius*radius``.

    The KD-tree query is padded and then re-filtered with the same float
    expression the compiled kernels use, so both backends agree on
    boundary cases.
    """
    n = points.shape[0]
    if n < 2:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty, np.empty(0)
    tree = cKDTree(points)
    pairs = tree.query_pairs(radius * (1.0 + 1e-9) + 1e-12, output_type="ndarray")
    if pairs.size == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty, np.empty(0)
    i, j = pairs[:, 0], pairs[:, 1]
    dx = points[i, 0] - points[j, 0]
    dy = points[i, 1] - points[j, 1]
    d2 = dx * dx + dy * dy
    keep = d2 <= radius * radius
    return i[keep], j[keep], d2[keep]


def dbscan_labels(points, eps, min_pts):
    """Cluster labels for an (n, 2) array; -1 marks noise.

    Core points need ``min_pts`` neighbours within ``eps`` counting
    themselves. Clusters are connected components of core points. A border
    point joins the cluster of its nearest core neighbour, ties broken by the
    core point's (x, y). Cluster ids are ordered by their lowest core index.
    """
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    i, j, d2 = _close_pairs(points, eps)
    counts = 1 + np.bincount(i, minlength=n) + np.bincount(j, minlength=n)
    core = counts >= min_pts
    if not core.any():
        return labels

    both = core[i] & core[j]
    graph = coo_matrix((np.ones(both.sum()), (i[both], j[both])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    core_idx = np.flatnonzero(core)
    # canonical ids: order components by their first core index
    uniq, first_pos, inv = np.unique(comp[core_idx], return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first_pos))
    labels[core_idx] = rank[inv]

    # border candidates: (non-core, core) pairs in either orientation
    a = np.concatenate([i, j])
    b = np.concatenate([j, i])
    dd = np.concatenate([d2, d2])
    sel = ~core[a] & core[b]
    if sel.any():
        a, b, dd = a[sel], b[sel], dd[sel]
        order = np.lexsort((points[b, 1], points[b, 0], dd, a))
        a, b = a[order], b[order]
        lead = np.ones(a.size, dtype=bool)
        lead[1:] = a[1:] != a[:-1]
        labels[a[lead]] = labels[b[lead]]
    return labels


def gaussian_smooth(points, sigma):
    """Replace each point by the Gaussian-weighted mean of points within 3 sigma."""
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    n = points.shape[0]
    if n == 0:
        return points.copy()
    i, j, d2 = _close_pairs(points, 3.0 * sigma)
    w = np.exp(-d2 / (2.0 * sigma * sigma))
    wsum = np.ones(n) + np.bincount(i, w, n) + np.bincount(j, w, n)
    out = points.copy()
    for axis in (0, 1):
        acc = points[:, axis].copy()
        acc += np.bincount(i, w * points[j, axis], n)
        acc += np.bincount(j, w * points[i, axis], n)
        out[:, axis] = acc / wsum
    return out


def _rollout(u, x0, dt):
    v, w = u[:, 0], u[:, 1]
    theta = np.empty(u.shape[0] + 1)
    theta[0] = x0[2]
    theta[1:] = x0[2] + np.cumsum(w * dt)
    c = np.cos(theta[:-1])
    s = np.sin(theta[:-1])
    x = np.empty_like(theta)
    y = np.empty_like(theta)
    x[0], y[0] = x0[0], x0[1]
    x[1:] = x0[0] + np.cumsum(v * c * dt)
    y[1:] = x0[1] + np.cumsum(v * s * dt)
    return x, y, theta, c, s


def rollout_cost_grad(u, x0, ref, pts, eta, dt, q, r, rho, d_safe, radius, want_grad=True):
    """Cost terms (and gradient w.r.t. ``u``) of a unicycle rollout.

    Returns ``(total, tracking, control, obstacle, grad)``; ``grad`` is None
    when ``want_grad`` is false. The obstacle term is the hinge
    ``rho * sum_k sum_j eta_j * max(0, d_safe - (|s_k - p_j| - radius))**2``
    over states k = 0..H.
    """
    u = np.asarray(u, dtype=np.float64)
    x, y, theta, c, s = _rollout(u, x0, dt)
    ex = x - ref[:, 0]
    ey = y - ref[:, 1]
    et = theta - ref[:, 2]
    tracking = q[0] * (ex @ ex) + q[1] * (ey @ ey) + q[2] * (et @ et)
    control = r[0] * (u[:, 0] @ u[:, 0]) + r[1] * (u[:, 1] @ u[:, 1])

    obstacle = 0.0
    gx_obs = gy_obs = None
    if pts.shape[0]:
        dx = x[:, None] - pts[None, :, 0]
        dy = y[:, None] - pts[None, :, 1]
        dist = np.sqrt(dx * dx + dy * dy)
        viol = d_safe - (dist - radius)
        act = viol > 0.0
        viol = np.where(act, viol, 0.0)
        obstacle = rho * float(np.sum(eta[None, :] * viol * viol))
        if want_grad:
            safe = np.where(dist > 0.0, dist, 1.0)
            coef = np.where(act & (dist > 0.0), -2.0 * rho * eta[None, :] * viol / safe, 0.0)
            gx_obs = np.sum(coef * dx, axis=1)
            gy_obs = np.sum(coef * dy, axis=1)

    total = tracking + control + obstacle
    if not want_grad:
        return total, tracking, control, obstacle, None

    gx = 2.0 * q[0] * ex
    gy = 2.0 * q[1] * ey
    gt = 2.0 * q[2] * et
    if gx_obs is not None:
        gx = gx + gx_obs
        gy = gy + gy_obs
    # adjoints: lam_k = dJ/ds_k including all downstream effects
    lam_x = np.cumsum(gx[::-1])[::-1]
    lam_y = np.cumsum(gy[::-1])[::-1]
    v = u[:, 0]
    cross = dt * v * (-s * lam_x[1:] + c * lam_y[1:])
    gt_tot = gt.copy()
    gt_tot[:-1] += cross
    lam_t = np.cumsum(gt_tot[::-1])[::-1]
    grad = np.empty_like(u)
    grad[:, 0] = dt * (c * lam_x[1:] + s * lam_y[1:]) + 2.0 * r[0] * v
    grad[:, 1] = dt * lam_t[1:] + 2.0 * r[1] * u[:, 1]
    return total, tracking, control, obstacle, grad
