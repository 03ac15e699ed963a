"""Reference kernels in plain numpy (and plain Python where the loop is inherently serial).

Used when numba is unavailable or disabled through ``SUPERSEG_DISABLE_NUMBA``.
"""
import numpy as np


def neighbor_covariances(positions, neighbors):
    nb = positions[neighbors]  # (n, m, 3)
    centered = nb - nb.mean(axis=1, keepdims=True)
    return np.einsum("nki,nkj->nij", centered, centered) / neighbors.shape[1]


def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def felzenszwalb(src, dst, weights, n, scale, min_size):
    parent = list(range(n))
    rank = [0] * n
    size = [1] * n
    internal = [0.0] * n

    def union(a, b):
        if rank[a] < rank[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
        if rank[a] == rank[b]:
            rank[a] += 1
        return a

    src = src.tolist()
    dst = dst.tolist()
    weights = weights.tolist()
    for a0, b0, w in zip(src, dst, weights):
        a = _find(parent, a0)
        b = _find(parent, b0)
        if a == b:
            continue
        if w <= internal[a] + scale / size[a] and w <= internal[b] + scale / size[b]:
            inner = max(internal[a], internal[b], w)
            internal[union(a, b)] = inner
    for a0, b0 in zip(src, dst):
        a = _find(parent, a0)
        b = _find(parent, b0)
        if a != b and (size[a] < min_size or size[b] < min_size):
            union(a, b)
    roots = np.array([_find(parent, i) for i in range(n)], dtype=np.int64)
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    rank_of = np.argsort(np.argsort(first))
    return rank_of[inverse].astype(np.int64)


def project_points(positions, rot, trans, intrinsics, width, height, depth, tol):
    fx, fy, cx, cy = intrinsics
    x0, x1, x2 = positions[:, 0], positions[:, 1], positions[:, 2]
    xc = rot[0, 0] * x0 + rot[0, 1] * x1 + rot[0, 2] * x2 + trans[0]
    yc = rot[1, 0] * x0 + rot[1, 1] * x1 + rot[1, 2] * x2 + trans[1]
    zc = rot[2, 0] * x0 + rot[2, 1] * x1 + rot[2, 2] * x2 + trans[2]
    n = positions.shape[0]
    front = zc > 1e-6
    u = np.full(n, np.nan)
    v = np.full(n, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        u[front] = fx * xc[front] / zc[front] + cx
        v[front] = fy * yc[front] / zc[front] + cy
    fu = np.floor(u + 0.5)
    fv = np.floor(v + 0.5)
    with np.errstate(invalid="ignore"):
        inside = front & (fu >= 0) & (fv >= 0) & (fu < width) & (fv < height)
    px = np.full(n, -1, dtype=np.int64)
    py = np.full(n, -1, dtype=np.int64)
    px[inside] = fu[inside].astype(np.int64)
    py[inside] = fv[inside].astype(np.int64)
    status = np.zeros(n, dtype=np.int8)
    status[inside] = 1
    d = depth[py[inside], px[inside]]
    ok = (d > 0) & (np.abs(zc[inside] - d) <= tol)
    status[np.flatnonzero(inside)[ok]] = 2
    return u, v, zc, px, py, status


def mask_histogram(labels, px, py, status, bins, n_segments, n_bins):
    sel = (labels >= 0) & (status == 2)
    seg = labels[sel]
    visible = np.bincount(seg, minlength=n_segments).astype(np.float64)
    b = bins[py[sel], px[sel]]
    hit = b >= 0
    flat = np.bincount(seg[hit] * n_bins + b[hit], minlength=n_segments * n_bins)
    return flat.reshape(n_segments, n_bins).astype(np.float64), visible


def accumulate_frame_affinity(counts, vis_frac, min_gamma, num, den):
    norm = np.sqrt((counts * counts).sum(axis=1))
    live = np.flatnonzero(norm > 0)
    if live.size < 2:
        return
    h = counts[live]
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (h @ h.T) / np.outer(norm[live], norm[live])
    cos = np.clip(cos, 0.0, 1.0)
    g = np.outer(vis_frac[live], vis_frac[live])
    keep = np.triu(g >= min_gamma, k=1)
    ii, jj = np.nonzero(keep)
    num[live[ii], live[jj]] += g[ii, jj] * cos[ii, jj]
    den[live[ii], live[jj]] += g[ii, jj]


def _affinity_row(i, H, V, S, norm2, active, min_gamma):
    """Affinity of cluster ``i`` against every cluster (-1 where undefined)."""
    n = H.shape[1]
    num = np.zeros(n)
    den = np.zeros(n)
    for f in range(H.shape[0]):
        if norm2[f, i] == 0.0:
            continue
        g = (V[f, i] / S[i]) * (V[f] / S)
        ok = active & (norm2[f] > 0) & (g >= min_gamma)
        ok[i] = False
        if not ok.any():
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = (H[f] @ H[f, i]) / (np.sqrt(norm2[f, i]) * np.sqrt(norm2[f]))
        cos = np.clip(cos, 0.0, 1.0)
        num[ok] += g[ok] * cos[ok]
        den[ok] += g[ok]
    row = np.full(n, -1.0)
    has = den > 0
    row[has] = num[has] / den[has]
    return row


def region_grow(hist, vis, sizes, csum, schedule, floor, min_gamma):
    F, n, K = hist.shape
    H = hist.copy()
    V = vis.copy()
    S = sizes.astype(np.float64).copy()
    C = csum.copy()
    norm2 = (H * H).sum(axis=2)
    parent = np.arange(n)
    active = np.ones(n, dtype=bool)
    aff = np.full((n, n), -1.0)
    for i in range(n):
        row = _affinity_row(i, H, V, S, norm2, active, min_gamma)
        aff[i, i + 1:] = row[i + 1:]
        aff[i + 1:, i] = row[i + 1:]

    def dist(i, j):
        d = C[i] / S[i] - C[j] / S[j]
        return float(np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]))

    merges = np.zeros(len(schedule), dtype=np.int64)
    log = []
    for p, t in enumerate(schedule):
        idx = np.flatnonzero(active)
        sub = aff[np.ix_(idx, idx)]
        ii, jj = np.nonzero(np.triu(sub >= 0.0, k=1))
        pi, pj = idx[ii], idx[jj]
        key = np.array([-(aff[a, b] / max(dist(a, b), floor)) for a, b in zip(pi, pj)])
        order = np.argsort(key, kind="stable") if key.size else np.zeros(0, dtype=np.int64)
        for o in order:
            ci = _find(parent, pi[o])
            cj = _find(parent, pj[o])
            if ci == cj:
                continue
            if ci > cj:
                ci, cj = cj, ci
            a = aff[ci, cj]
            if a < 0.0:
                continue
            conf = a / max(dist(ci, cj), floor)
            if conf < t:
                continue
            H[:, ci] += H[:, cj]
            norm2[:, ci] = (H[:, ci] * H[:, ci]).sum(axis=1)
            V[:, ci] += V[:, cj]
            S[ci] += S[cj]
            C[ci] += C[cj]
            parent[cj] = ci
            active[cj] = False
            aff[cj, :] = -1.0
            aff[:, cj] = -1.0
            row = _affinity_row(ci, H, V, S, norm2, active, min_gamma)
            row[ci] = -1.0
            aff[ci, :] = row
            aff[:, ci] = row
            merges[p] += 1
            log.append((p, ci, cj, conf))
    roots = np.array([_find(parent, i) for i in range(n)], dtype=np.int64)
    if log:
        lp, li, lj, lc = (np.array(x) for x in zip(*log))
    else:
        lp = li = lj = np.zeros(0, dtype=np.int64)
        lc = np.zeros(0)
    return roots, merges, lp.astype(np.int64), li.astype(np.int64), lj.astype(np.int64), lc.astype(np.float64)


def raycast_boxes(origin, dirs, bmin, bmax):
    m = dirs.shape[0]
    best = np.full(m, np.inf)
    hit = np.full(m, -1, dtype=np.int64)
    small = np.abs(dirs) < 1e-15
    safe = np.where(small, 1.0, dirs)
    for o in range(bmin.shape[0]):
        ta = (bmin[o] - origin) / safe
        tb = (bmax[o] - origin) / safe
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        outside = (origin < bmin[o]) | (origin > bmax[o])
        lo = np.where(small, -np.inf, lo)
        hi = np.where(small, np.inf, hi)
        miss = (small & outside[None, :]).any(axis=1)
        t0 = lo.max(axis=1)
        t1 = hi.min(axis=1)
        ok = ~miss & (t0 <= t1) & (t0 > 0) & (t0 < best)
        best[ok] = t0[ok]
        hit[ok] = o
    t_hit = np.where(hit >= 0, best, 0.0)
    return t_hit, hit
