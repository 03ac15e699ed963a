"""Compiled kernels. Signatures mirror ``_numpy`` exactly."""
import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def neighbor_covariances(positions, neighbors):
    n, m = neighbors.shape
    out = np.zeros((n, 3, 3))
    for i in range(n):
        mx = 0.0
        my = 0.0
        mz = 0.0
        for t in range(m):
            j = neighbors[i, t]
            mx += positions[j, 0]
            my += positions[j, 1]
            mz += positions[j, 2]
        mx /= m
        my /= m
        mz /= m
        sxx = 0.0
        sxy = 0.0
        sxz = 0.0
        syy = 0.0
        syz = 0.0
        szz = 0.0
        for t in range(m):
            j = neighbors[i, t]
            dx = positions[j, 0] - mx
            dy = positions[j, 1] - my
            dz = positions[j, 2] - mz
            sxx += dx * dx
            sxy += dx * dy
            sxz += dx * dz
            syy += dy * dy
            syz += dy * dz
            szz += dz * dz
        out[i, 0, 0] = sxx / m
        out[i, 0, 1] = sxy / m
        out[i, 0, 2] = sxz / m
        out[i, 1, 0] = sxy / m
        out[i, 1, 1] = syy / m
        out[i, 1, 2] = syz / m
        out[i, 2, 0] = sxz / m
        out[i, 2, 1] = syz / m
        out[i, 2, 2] = szz / m
    return out


@njit(**_OPTS)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(**_OPTS)
def _union(parent, rank, size, a, b):
    if rank[a] < rank[b]:
        a, b = b, a
    parent[b] = a
    size[a] += size[b]
    if rank[a] == rank[b]:
        rank[a] += 1
    return a


@njit(**_OPTS)
def felzenszwalb(src, dst, weights, n, scale, min_size):
    parent = np.arange(n)
    rank = np.zeros(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    internal = np.zeros(n)
    for e in range(weights.shape[0]):
        a = _find(parent, src[e])
        b = _find(parent, dst[e])
        if a == b:
            continue
        w = weights[e]
        if w <= internal[a] + scale / size[a] and w <= internal[b] + scale / size[b]:
            inner = max(internal[a], internal[b], w)
            r = _union(parent, rank, size, a, b)
            internal[r] = inner
    for e in range(weights.shape[0]):
        a = _find(parent, src[e])
        b = _find(parent, dst[e])
        if a != b and (size[a] < min_size or size[b] < min_size):
            _union(parent, rank, size, a, b)
    labels = np.empty(n, dtype=np.int64)
    remap = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for i in range(n):
        r = _find(parent, i)
        if remap[r] < 0:
            remap[r] = nxt
            nxt += 1
        labels[i] = remap[r]
    return labels


@njit(**_OPTS)
def project_points(positions, rot, trans, intrinsics, width, height, depth, tol):
    """status: 0 = outside frustum, 1 = in frame but failed depth test, 2 = visible."""
    fx, fy, cx, cy = intrinsics[0], intrinsics[1], intrinsics[2], intrinsics[3]
    n = positions.shape[0]
    u = np.full(n, np.nan)
    v = np.full(n, np.nan)
    z = np.empty(n)
    px = np.full(n, -1, dtype=np.int64)
    py = np.full(n, -1, dtype=np.int64)
    status = np.zeros(n, dtype=np.int8)
    for i in range(n):
        x0 = positions[i, 0]
        x1 = positions[i, 1]
        x2 = positions[i, 2]
        xc = rot[0, 0] * x0 + rot[0, 1] * x1 + rot[0, 2] * x2 + trans[0]
        yc = rot[1, 0] * x0 + rot[1, 1] * x1 + rot[1, 2] * x2 + trans[1]
        zc = rot[2, 0] * x0 + rot[2, 1] * x1 + rot[2, 2] * x2 + trans[2]
        z[i] = zc
        if zc <= 1e-6:
            continue
        uu = fx * xc / zc + cx
        vv = fy * yc / zc + cy
        u[i] = uu
        v[i] = vv
        fu = np.floor(uu + 0.5)
        fv = np.floor(vv + 0.5)
        if fu < 0.0 or fv < 0.0 or fu >= width or fv >= height:
            continue
        iu = np.int64(fu)
        iv = np.int64(fv)
        px[i] = iu
        py[i] = iv
        status[i] = 1
        d = depth[iv, iu]
        if d > 0.0 and abs(zc - d) <= tol:
            status[i] = 2
    return u, v, z, px, py, status


@njit(**_OPTS)
def mask_histogram(labels, px, py, status, bins, n_segments, n_bins):
    counts = np.zeros((n_segments, n_bins))
    visible = np.zeros(n_segments)
    for i in range(labels.shape[0]):
        s = labels[i]
        if s < 0 or status[i] != 2:
            continue
        visible[s] += 1.0
        b = bins[py[i], px[i]]
        if b >= 0:
            counts[s, b] += 1.0
    return counts, visible


@njit(**_OPTS)
def accumulate_frame_affinity(counts, vis_frac, min_gamma, num, den):
    n, k = counts.shape
    norm = np.zeros(n)
    for i in range(n):
        s = 0.0
        for b in range(k):
            s += counts[i, b] * counts[i, b]
        norm[i] = np.sqrt(s)
    live = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        if norm[i] > 0.0:
            live[m] = i
            m += 1
    for a in range(m):
        i = live[a]
        for c in range(a + 1, m):
            j = live[c]
            g = vis_frac[i] * vis_frac[j]
            if g < min_gamma:
                continue
            dot = 0.0
            for b in range(k):
                dot += counts[i, b] * counts[j, b]
            cos = dot / (norm[i] * norm[j])
            cos = min(max(cos, 0.0), 1.0)
            num[i, j] += g * cos
            den[i, j] += g


@njit(**_OPTS)
def _pair_affinity(i, j, hist, vis, sizes, norm2, min_gamma):
    num = 0.0
    den = 0.0
    for f in range(hist.shape[0]):
        if norm2[f, i] == 0.0 or norm2[f, j] == 0.0:
            continue
        g = (vis[f, i] / sizes[i]) * (vis[f, j] / sizes[j])
        if g < min_gamma:
            continue
        dot = 0.0
        for b in range(hist.shape[2]):
            dot += hist[f, i, b] * hist[f, j, b]
        cos = dot / (np.sqrt(norm2[f, i]) * np.sqrt(norm2[f, j]))
        cos = min(max(cos, 0.0), 1.0)
        num += g * cos
        den += g
    if den > 0.0:
        return num / den
    return -1.0


@njit(**_OPTS)
def _distance(csum, sizes, i, j):
    s = 0.0
    for a in range(3):
        d = csum[i, a] / sizes[i] - csum[j, a] / sizes[j]
        s += d * d
    return np.sqrt(s)


@njit(**_OPTS)
def region_grow(hist, vis, sizes, csum, schedule, floor, min_gamma):
    F, n, K = hist.shape
    H = hist.copy()
    V = vis.copy()
    S = sizes.astype(np.float64).copy()
    C = csum.copy()
    norm2 = np.zeros((F, n))
    for f in range(F):
        for i in range(n):
            s = 0.0
            for b in range(K):
                s += H[f, i, b] * H[f, i, b]
            norm2[f, i] = s
    parent = np.arange(n)
    active = np.ones(n, dtype=np.bool_)
    aff = np.full((n, n), -1.0)
    for i in range(n):
        for j in range(i + 1, n):
            a = _pair_affinity(i, j, H, V, S, norm2, min_gamma)
            aff[i, j] = a
            aff[j, i] = a

    merges = np.zeros(schedule.shape[0], dtype=np.int64)
    log_pass = np.empty(max(n - 1, 0), dtype=np.int64)
    log_i = np.empty(max(n - 1, 0), dtype=np.int64)
    log_j = np.empty(max(n - 1, 0), dtype=np.int64)
    log_conf = np.empty(max(n - 1, 0))
    nlog = 0
    for p in range(schedule.shape[0]):
        t = schedule[p]
        npairs = 0
        for i in range(n):
            if not active[i]:
                continue
            for j in range(i + 1, n):
                if active[j] and aff[i, j] >= 0.0:
                    npairs += 1
        pi = np.empty(npairs, dtype=np.int64)
        pj = np.empty(npairs, dtype=np.int64)
        key = np.empty(npairs)
        q = 0
        for i in range(n):
            if not active[i]:
                continue
            for j in range(i + 1, n):
                if active[j] and aff[i, j] >= 0.0:
                    pi[q] = i
                    pj[q] = j
                    key[q] = -(aff[i, j] / max(_distance(C, S, i, j), floor))
                    q += 1
        order = np.argsort(key, kind="mergesort")
        for o in range(npairs):
            ci = _find(parent, pi[order[o]])
            cj = _find(parent, pj[order[o]])
            if ci == cj:
                continue
            if ci > cj:
                ci, cj = cj, ci
            a = aff[ci, cj]
            if a < 0.0:
                continue
            conf = a / max(_distance(C, S, ci, cj), floor)
            if conf < t:
                continue
            for f in range(F):
                s = 0.0
                for b in range(K):
                    H[f, ci, b] += H[f, cj, b]
                    s += H[f, ci, b] * H[f, ci, b]
                norm2[f, ci] = s
                V[f, ci] += V[f, cj]
            S[ci] += S[cj]
            for a3 in range(3):
                C[ci, a3] += C[cj, a3]
            parent[cj] = ci
            active[cj] = False
            for c in range(n):
                aff[cj, c] = -1.0
                aff[c, cj] = -1.0
            for c in range(n):
                if active[c] and c != ci:
                    a2 = _pair_affinity(ci, c, H, V, S, norm2, min_gamma)
                    aff[ci, c] = a2
                    aff[c, ci] = a2
            merges[p] += 1
            log_pass[nlog] = p
            log_i[nlog] = ci
            log_j[nlog] = cj
            log_conf[nlog] = conf
            nlog += 1
    roots = np.empty(n, dtype=np.int64)
    for i in range(n):
        roots[i] = _find(parent, i)
    return roots, merges, log_pass[:nlog], log_i[:nlog], log_j[:nlog], log_conf[:nlog]


@njit(**_OPTS)
def raycast_boxes(origin, dirs, bmin, bmax):
    """Nearest hit parameter and box index per ray; ties go to the lower index."""
    m = dirs.shape[0]
    nb = bmin.shape[0]
    t_hit = np.zeros(m)
    hit = np.full(m, -1, dtype=np.int64)
    for r in range(m):
        best = np.inf
        bid = -1
        for o in range(nb):
            t0 = -np.inf
            t1 = np.inf
            miss = False
            for a in range(3):
                d = dirs[r, a]
                if abs(d) < 1e-15:
                    if origin[a] < bmin[o, a] or origin[a] > bmax[o, a]:
                        miss = True
                        break
                else:
                    ta = (bmin[o, a] - origin[a]) / d
                    tb = (bmax[o, a] - origin[a]) / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > t0:
                        t0 = ta
                    if tb < t1:
                        t1 = tb
            if miss or t0 > t1 or t0 <= 0.0:
                continue
            if t0 < best:
                best = t0
                bid = o
        if bid >= 0:
            t_hit[r] = best
            hit[r] = bid
    return t_hit, hit
