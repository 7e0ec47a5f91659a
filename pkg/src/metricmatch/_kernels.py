"""Hot numeric kernels with a compiled (numba) and a plain-Python/numpy path.

Every kernel below is written once, in nopython-compatible style, and is
compiled with ``numba.njit`` when available.  Setting the environment
variable ``METRICMATCH_NUMBA=0`` (or uninstalling numba) selects the
uncompiled fallback; results are bit-identical either way because both
paths execute the same statements in the same order.  ``cli bench
--kind kernels`` times the two paths against each other.

Kernels:

* ``triangle_violations``     -- witness scan for the triangle inequality.
* ``greedy_net_euclid``       -- grid-hashed greedy r-net over coordinates.
* ``radius_csr_euclid``       -- all-pairs-within-R adjacency, CSR output.
* ``min_index_within_euclid`` -- smallest-index neighbor within R.
* ``combine_matrix/euclid``   -- candidate enumeration + pruning for the
                                 pattern split-combine step.
* ``lift_matrix/euclid``      -- matching-set lifting between net scales.

Grid kernels encode integer cells into a single int64 (21 bits per axis,
up to 3 axes); the wrappers in other modules fall back to the index-based
path when coordinates exceed that range or dim > 3.
"""
from __future__ import annotations

import math
import os

import numpy as np

from .metric import ABS, TAU

_env = os.environ.get("METRICMATCH_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _env not in {"0", "false", "off", "no"}
NUMBA_ACTIVE = False
if NUMBA_REQUESTED:
    try:
        from numba import njit as _njit

        NUMBA_ACTIVE = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ACTIVE = False

if NUMBA_ACTIVE:
    def _jit(f):
        return _njit(cache=True)(f)
else:
    def _jit(f):
        return f


_CELL_OFF = 1 << 20  # grid cells must satisfy |cell| < 2**20 per axis


class GridRangeError(ValueError):
    """Coordinates do not fit the int64 grid-cell encoding."""


@_jit
def _le(a, b):
    # a <= b up to the shared relative/absolute tolerance
    t = abs(a)
    u = abs(b)
    if u > t:
        t = u
    t *= TAU
    if t < ABS:
        t = ABS
    return a <= b + t


@_jit
def _ge(a, b):
    return _le(b, a)


@_jit
def _lt(a, b):
    # a < b by more than the tolerance margin
    t = abs(a)
    u = abs(b)
    if u > t:
        t = u
    t *= TAU
    if t < ABS:
        t = ABS
    return a < b - t


@_jit
def triangle_violations(m, tau, abs_tol, max_issues):
    """Collect up to max_issues triangle-inequality violations (i, j, l)."""
    n = m.shape[0]
    out = np.empty((max_issues, 3), dtype=np.int64)
    cnt = 0
    for i in range(n):
        for j in range(i + 1, n):
            dij = m[i, j]
            for l in range(n):
                if l == i or l == j:
                    continue
                s = m[i, l] + m[l, j]
                t = abs(dij)
                if abs(s) > t:
                    t = abs(s)
                t *= tau
                if t < abs_tol:
                    t = abs_tol
                if dij > s + t:
                    out[cnt, 0] = i
                    out[cnt, 1] = j
                    out[cnt, 2] = l
                    cnt += 1
                    if cnt >= max_issues:
                        return out[:cnt]
                    break
    return out[:cnt]


# -- int64 grid hashing -------------------------------------------------------


@_jit
def _slot_for(slot_keys, key):
    # open addressing, linear probing; table never fills past half
    mask = slot_keys.shape[0] - 1
    s = (key ^ (key >> 21) ^ (key >> 42)) & mask
    while True:
        k = slot_keys[s]
        if k == key or k == -1:
            return s
        s = (s + 1) & mask


@_jit
def _euclid(pts, a, b):
    s = 0.0
    for t in range(pts.shape[1]):
        d = pts[a, t] - pts[b, t]
        s += d * d
    return math.sqrt(s)


@_jit
def greedy_net_euclid(pts, cells, r):
    """Greedy r-net in ascending index order over a spatial grid.

    ``cells`` holds precomputed integer grid coordinates, padded to 3 axes.
    A point is rejected iff some earlier-accepted center lies strictly
    within r (tolerance-adjusted); its cover is the smallest-index center
    within r.  Returns (is_center mask, cover assignment).
    """
    n = pts.shape[0]
    ndim = pts.shape[1]
    is_center = np.zeros(n, dtype=np.bool_)
    cover = np.full(n, -1, dtype=np.int64)

    cap = 16
    while cap < 4 * n:
        cap *= 2
    slot_keys = np.full(cap, -1, dtype=np.int64)
    heads = np.full(cap, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)

    z_span = 1 if ndim > 2 else 0
    y_span = 1 if ndim > 1 else 0
    for p in range(n):
        cx = cells[p, 0]
        cy = cells[p, 1]
        cz = cells[p, 2]
        reject = False
        min_le = -1
        for dz in range(-z_span, z_span + 1):
            for dy in range(-y_span, y_span + 1):
                for dx in range(-1, 2):
                    key = (
                        (cx + dx + _CELL_OFF)
                        + ((cy + dy + _CELL_OFF) << 21)
                        + ((cz + dz + _CELL_OFF) << 42)
                    )
                    s = _slot_for(slot_keys, key)
                    if slot_keys[s] != key:
                        continue
                    q = heads[s]
                    while q != -1:
                        d = _euclid(pts, p, q)
                        if _lt(d, r):
                            reject = True
                        if _le(d, r) and (min_le == -1 or q < min_le):
                            min_le = q
                        q = nxt[q]
        if reject:
            cover[p] = min_le
        else:
            is_center[p] = True
            cover[p] = min_le if min_le != -1 else p
            key = (cx + _CELL_OFF) + ((cy + _CELL_OFF) << 21) + ((cz + _CELL_OFF) << 42)
            s = _slot_for(slot_keys, key)
            if slot_keys[s] == -1:
                slot_keys[s] = key
            nxt[p] = heads[s]
            heads[s] = p
    return is_center, cover


@_jit
def radius_csr_euclid(pts_a, cells_a, pts_b, cells_b, radius):
    """Indices (into b, ascending) within radius of each a point, as CSR."""
    na = pts_a.shape[0]
    nb = pts_b.shape[0]
    ndim = pts_a.shape[1]

    cap = 16
    while cap < 4 * nb:
        cap *= 2
    slot_keys = np.full(cap, -1, dtype=np.int64)
    heads = np.full(cap, -1, dtype=np.int64)
    nxt = np.full(nb, -1, dtype=np.int64)
    for q in range(nb):
        key = (
            (cells_b[q, 0] + _CELL_OFF)
            + ((cells_b[q, 1] + _CELL_OFF) << 21)
            + ((cells_b[q, 2] + _CELL_OFF) << 42)
        )
        s = _slot_for(slot_keys, key)
        if slot_keys[s] == -1:
            slot_keys[s] = key
        nxt[q] = heads[s]
        heads[s] = q

    z_span = 1 if ndim > 2 else 0
    y_span = 1 if ndim > 1 else 0
    indptr = np.zeros(na + 1, dtype=np.int64)
    # pass 1: counts
    for p in range(na):
        cnt = 0
        for dz in range(-z_span, z_span + 1):
            for dy in range(-y_span, y_span + 1):
                for dx in range(-1, 2):
                    key = (
                        (cells_a[p, 0] + dx + _CELL_OFF)
                        + ((cells_a[p, 1] + dy + _CELL_OFF) << 21)
                        + ((cells_a[p, 2] + dz + _CELL_OFF) << 42)
                    )
                    s = _slot_for(slot_keys, key)
                    if slot_keys[s] != key:
                        continue
                    q = heads[s]
                    while q != -1:
                        d = 0.0
                        for t in range(ndim):
                            v = pts_a[p, t] - pts_b[q, t]
                            d += v * v
                        if _le(math.sqrt(d), radius):
                            cnt += 1
                        q = nxt[q]
        indptr[p + 1] = cnt
    for p in range(na):
        indptr[p + 1] += indptr[p]
    indices = np.empty(indptr[na], dtype=np.int64)
    # pass 2: fill, then sort each row ascending
    for p in range(na):
        w = indptr[p]
        for dz in range(-z_span, z_span + 1):
            for dy in range(-y_span, y_span + 1):
                for dx in range(-1, 2):
                    key = (
                        (cells_a[p, 0] + dx + _CELL_OFF)
                        + ((cells_a[p, 1] + dy + _CELL_OFF) << 21)
                        + ((cells_a[p, 2] + dz + _CELL_OFF) << 42)
                    )
                    s = _slot_for(slot_keys, key)
                    if slot_keys[s] != key:
                        continue
                    q = heads[s]
                    while q != -1:
                        d = 0.0
                        for t in range(ndim):
                            v = pts_a[p, t] - pts_b[q, t]
                            d += v * v
                        if _le(math.sqrt(d), radius):
                            indices[w] = q
                            w += 1
                        q = nxt[q]
        row = np.sort(indices[indptr[p] : indptr[p + 1]])
        indices[indptr[p] : indptr[p + 1]] = row
    return indptr, indices


@_jit
def min_index_within_euclid(pts_a, cells_a, pts_b, cells_b, radius):
    """Smallest b-index within radius of each a point (-1 when none)."""
    na = pts_a.shape[0]
    nb = pts_b.shape[0]
    ndim = pts_a.shape[1]
    cap = 16
    while cap < 4 * nb:
        cap *= 2
    slot_keys = np.full(cap, -1, dtype=np.int64)
    heads = np.full(cap, -1, dtype=np.int64)
    nxt = np.full(nb, -1, dtype=np.int64)
    for q in range(nb):
        key = (
            (cells_b[q, 0] + _CELL_OFF)
            + ((cells_b[q, 1] + _CELL_OFF) << 21)
            + ((cells_b[q, 2] + _CELL_OFF) << 42)
        )
        s = _slot_for(slot_keys, key)
        if slot_keys[s] == -1:
            slot_keys[s] = key
        nxt[q] = heads[s]
        heads[s] = q

    z_span = 1 if ndim > 2 else 0
    y_span = 1 if ndim > 1 else 0
    out = np.full(na, -1, dtype=np.int64)
    for p in range(na):
        best = -1
        for dz in range(-z_span, z_span + 1):
            for dy in range(-y_span, y_span + 1):
                for dx in range(-1, 2):
                    key = (
                        (cells_a[p, 0] + dx + _CELL_OFF)
                        + ((cells_a[p, 1] + dy + _CELL_OFF) << 21)
                        + ((cells_a[p, 2] + dz + _CELL_OFF) << 42)
                    )
                    s = _slot_for(slot_keys, key)
                    if slot_keys[s] != key:
                        continue
                    q = heads[s]
                    while q != -1:
                        d = 0.0
                        for t in range(ndim):
                            v = pts_a[p, t] - pts_b[q, t]
                            d += v * v
                        if _le(math.sqrt(d), radius) and (best == -1 or q < best):
                            best = q
                        q = nxt[q]
        out[p] = best
    return out


# -- matching-set enumeration kernels ----------------------------------------
#
# Matching sets are flattened per layer: rows of target indices grouped by
# center position (CSR indptr over center positions).  The kernels replay
# the pure-object code path exactly: same candidate order, same tolerance
# comparators, so kept sets agree row for row.


@_jit
def combine_matrix(
    dmat,
    centers,
    nbr_indptr,
    nbr_indices,
    p_indptr,
    p_rows,
    q_indptr,
    q_rows,
    pos_p,
    pos_q,
    dxw,
    rho,
    eps,
    r,
    near_indptr,
    near_indices,
    stop_after_first,
):
    n = dmat.shape[0]
    n_centers = centers.shape[0]
    kp = p_rows.shape[1]
    kq = q_rows.shape[1]
    k = kp + kq
    rr = (1.0 + eps) * rho
    sep = eps * r / (2.0 * rho * rho)
    ball = 3.0 * r

    cap = 256
    out_rows = np.empty((cap, k), dtype=np.int64)
    out_center = np.empty(cap, dtype=np.int64)
    nxt = np.empty(cap, dtype=np.int64)
    head = np.full(n, -1, dtype=np.int64)
    gen = np.full(n, -1, dtype=np.int64)
    t = np.empty(k, dtype=np.int64)
    m = 0

    for cpos in range(n_centers):
        cpt = centers[cpos]
        for ai in range(nbr_indptr[cpos], nbr_indptr[cpos + 1]):
            ypos = nbr_indices[ai]
            p_lo = p_indptr[ypos]
            p_hi = p_indptr[ypos + 1]
            if p_lo == p_hi:
                continue
            for bi in range(nbr_indptr[cpos], nbr_indptr[cpos + 1]):
                zpos = nbr_indices[bi]
                q_lo = q_indptr[zpos]
                q_hi = q_indptr[zpos + 1]
                for ri in range(p_lo, p_hi):
                    for rj in range(q_lo, q_hi):
                        for a in range(kp):
                            t[pos_p[a]] = p_rows[ri, a]
                        for b in range(kq):
                            t[pos_q[b]] = q_rows[rj, b]
                        ok = True
                        for a in range(k):
                            for b in range(a + 1, k):
                                if t[a] == t[b]:
                                    ok = False
                                    break
                            if not ok:
                                break
                        if not ok:
                            continue
                        for a in range(k):
                            if not _le(dmat[cpt, t[a]], ball):
                                ok = False
                                break
                        if not ok:
                            continue
                        for a in range(k):
                            for b in range(a + 1, k):
                                dy = dmat[t[a], t[b]]
                                dx = dxw[a, b]
                                if not _le(dy, rr * dx) or not _ge(dy, dx / rr):
                                    ok = False
                                    break
                            if not ok:
                                break
                        if not ok:
                            continue
                        # separation against matchings already kept at this center
                        t0 = t[0]
                        hit = False
                        for ui in range(near_indptr[t0], near_indptr[t0 + 1]):
                            u = near_indices[ui]
                            if gen[u] != cpos:
                                continue
                            row = head[u]
                            while row != -1:
                                dm = 0.0
                                for a in range(k):
                                    dv = dmat[t[a], out_rows[row, a]]
                                    if dv > dm:
                                        dm = dv
                                if _le(dm, sep):
                                    hit = True
                                    break
                                row = nxt[row]
                            if hit:
                                break
                        if hit:
                            continue
                        if m >= cap:
                            new_cap = cap * 2
                            nr = np.empty((new_cap, k), dtype=np.int64)
                            nr[:cap] = out_rows
                            out_rows = nr
                            nc = np.empty(new_cap, dtype=np.int64)
                            nc[:cap] = out_center
                            out_center = nc
                            nn = np.empty(new_cap, dtype=np.int64)
                            nn[:cap] = nxt
                            nxt = nn
                            cap = new_cap
                        for a in range(k):
                            out_rows[m, a] = t[a]
                        out_center[m] = cpos
                        if gen[t0] != cpos:
                            gen[t0] = cpos
                            head[t0] = -1
                        nxt[m] = head[t0]
                        head[t0] = m
                        m += 1
                        if stop_after_first:
                            return out_rows[:m].copy(), out_center[:m].copy()
    return out_rows[:m].copy(), out_center[:m].copy()


@_jit
def combine_euclid(
    pts,
    centers,
    nbr_indptr,
    nbr_indices,
    p_indptr,
    p_rows,
    q_indptr,
    q_rows,
    pos_p,
    pos_q,
    dxw,
    rho,
    eps,
    r,
    stop_after_first,
):
    n_centers = centers.shape[0]
    kp = p_rows.shape[1]
    kq = q_rows.shape[1]
    k = kp + kq
    rr = (1.0 + eps) * rho
    sep = eps * r / (2.0 * rho * rho)
    ball = 3.0 * r

    cap = 256
    out_rows = np.empty((cap, k), dtype=np.int64)
    out_center = np.empty(cap, dtype=np.int64)
    t = np.empty(k, dtype=np.int64)
    m = 0

    for cpos in range(n_centers):
        cpt = centers[cpos]
        c_start = m  # kept rows of the current center are contiguous
        for ai in range(nbr_indptr[cpos], nbr_indptr[cpos + 1]):
            ypos = nbr_indices[ai]
            p_lo = p_indptr[ypos]
            p_hi = p_indptr[ypos + 1]
            if p_lo == p_hi:
                continue
            for bi in range(nbr_indptr[cpos], nbr_indptr[cpos + 1]):
                zpos = nbr_indices[bi]
                q_lo = q_indptr[zpos]
                q_hi = q_indptr[zpos + 1]
                for ri in range(p_lo, p_hi):
                    for rj in range(q_lo, q_hi):
                        for a in range(kp):
                            t[pos_p[a]] = p_rows[ri, a]
                        for b in range(kq):
                            t[pos_q[b]] = q_rows[rj, b]
                        ok = True
                        for a in range(k):
                            for b in range(a + 1, k):
                                if t[a] == t[b]:
                                    ok = False
                                    break
                            if not ok:
                                break
                        if not ok:
                            continue
                        for a in range(k):
                            if not _le(_euclid(pts, cpt, t[a]), ball):
                                ok = False
                                break
                        if not ok:
                            continue
                        for a in range(k):
                            for b in range(a + 1, k):
                                dy = _euclid(pts, t[a], t[b])
                                dx = dxw[a, b]
                                if not _le(dy, rr * dx) or not _ge(dy, dx / rr):
                                    ok = False
                                    break
                            if not ok:
                                break
                        if not ok:
                            continue
                        hit = False
                        for row in range(c_start, m):
                            dm = 0.0
                            for a in range(k):
                                dv = _euclid(pts, t[a], out_rows[row, a])
                                if dv > dm:
                                    dm = dv
                            if _le(dm, sep):
                                hit = True
                                break
                        if hit:
                            continue
                        if m >= cap:
                            new_cap = cap * 2
                            nr = np.empty((new_cap, k), dtype=np.int64)
                            nr[:cap] = out_rows
                            out_rows = nr
                            nc = np.empty(new_cap, dtype=np.int64)
                            nc[:cap] = out_center
                            out_center = nc
                            cap = new_cap
                        for a in range(k):
                            out_rows[m, a] = t[a]
                        out_center[m] = cpos
                        m += 1
                        if stop_after_first:
                            return out_rows[:m].copy(), out_center[:m].copy()
    return out_rows[:m].copy(), out_center[:m].copy()


@_jit
def lift_matrix(
    dmat,
    child_indptr,
    child_indices,
    fine_indptr,
    fine_rows,
    rho,
    beta,
    r_coarse,
    near_indptr,
    near_indices,
):
    """Lift kept matchings from fine centers to their coarse ancestors.

    child CSR maps coarse center positions to fine center positions
    (ascending); only the separation test prunes.  Returns kept rows and
    their coarse center positions.
    """
    n = dmat.shape[0]
    n_coarse = child_indptr.shape[0] - 1
    k = fine_rows.shape[1]
    sep = beta * r_coarse / (2.0 * rho * rho)

    cap = 256
    out_rows = np.empty((cap, k), dtype=np.int64)
    out_center = np.empty(cap, dtype=np.int64)
    nxt = np.empty(cap, dtype=np.int64)
    head = np.full(n, -1, dtype=np.int64)
    gen = np.full(n, -1, dtype=np.int64)
    m = 0

    for cpos in range(n_coarse):
        for fi in range(child_indptr[cpos], child_indptr[cpos + 1]):
            fpos = child_indices[fi]
            for ri in range(fine_indptr[fpos], fine_indptr[fpos + 1]):
                t0 = fine_rows[ri, 0]
                hit = False
                for ui in range(near_indptr[t0], near_indptr[t0 + 1]):
                    u = near_indices[ui]
                    if gen[u] != cpos:
                        continue
                    row = head[u]
                    while row != -1:
                        dm = 0.0
                        for a in range(k):
                            dv = dmat[fine_rows[ri, a], out_rows[row, a]]
                            if dv > dm:
                                dm = dv
                        if _le(dm, sep):
                            hit = True
                            break
                        row = nxt[row]
                    if hit:
                        break
                if hit:
                    continue
                if m >= cap:
                    new_cap = cap * 2
                    nr = np.empty((new_cap, k), dtype=np.int64)
                    nr[:cap] = out_rows
                    out_rows = nr
                    nc = np.empty(new_cap, dtype=np.int64)
                    nc[:cap] = out_center
                    out_center = nc
                    nn = np.empty(new_cap, dtype=np.int64)
                    nn[:cap] = nxt
                    nxt = nn
                    cap = new_cap
                for a in range(k):
                    out_rows[m, a] = fine_rows[ri, a]
                out_center[m] = cpos
                if gen[t0] != cpos:
                    gen[t0] = cpos
                    head[t0] = -1
                nxt[m] = head[t0]
                head[t0] = m
                m += 1
    return out_rows[:m].copy(), out_center[:m].copy()


@_jit
def lift_euclid(
    pts,
    child_indptr,
    child_indices,
    fine_indptr,
    fine_rows,
    rho,
    beta,
    r_coarse,
):
    n_coarse = child_indptr.shape[0] - 1
    k = fine_rows.shape[1]
    sep = beta * r_coarse / (2.0 * rho * rho)

    cap = 256
    out_rows = np.empty((cap, k), dtype=np.int64)
    out_center = np.empty(cap, dtype=np.int64)
    m = 0

    for cpos in range(n_coarse):
        c_start = m
        for fi in range(child_indptr[cpos], child_indptr[cpos + 1]):
            fpos = child_indices[fi]
            for ri in range(fine_indptr[fpos], fine_indptr[fpos + 1]):
                hit = False
                for row in range(c_start, m):
                    dm = 0.0
                    for a in range(k):
                        dv = _euclid(pts, fine_rows[ri, a], out_rows[row, a])
                        if dv > dm:
                            dm = dv
                    if _le(dm, sep):
                        hit = True
                        break
                if hit:
                    continue
                if m >= cap:
                    new_cap = cap * 2
                    nr = np.empty((new_cap, k), dtype=np.int64)
                    nr[:cap] = out_rows
                    out_rows = nr
                    nc = np.empty(new_cap, dtype=np.int64)
                    nc[:cap] = out_center
                    out_center = nc
                    cap = new_cap
                for a in range(k):
                    out_rows[m, a] = fine_rows[ri, a]
                out_center[m] = cpos
                m += 1
    return out_rows[:m].copy(), out_center[:m].copy()


def grid_cells(points: np.ndarray, cell: float) -> np.ndarray:
    """Integer grid coordinates padded to 3 axes, or raise GridRangeError."""
    if points.shape[1] > 3:
        raise GridRangeError("grid kernels support at most 3 dimensions")
    if not cell > 0 or not math.isfinite(cell):
        raise GridRangeError(f"bad cell size {cell}")
    raw = np.floor(points / cell)
    if not np.all(np.abs(raw) < _CELL_OFF):
        raise GridRangeError("cell coordinates exceed the 21-bit encoding range")
    cells = np.zeros((points.shape[0], 3), dtype=np.int64)
    cells[:, : points.shape[1]] = raw.astype(np.int64)
    return cells


def cell_size_for(radius: float) -> float:
    # slightly above the tolerance-padded radius so <=radius hits stay in
    # adjacent cells
    return radius * (1.0 + 1e-6) + 1e-12
