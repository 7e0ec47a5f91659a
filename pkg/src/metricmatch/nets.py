"""r-nets, per-scale adjacency, ancestor links, and the navigating net.

An r-net is a subset of Y whose points are pairwise at least r apart and
whose radius-r balls cover Y.  Layers are built greedily in ascending
point order (deterministic, and directly comparable with the quadratic
reference in :mod:`metricmatch.oracle`): a point is rejected iff some
earlier-accepted center lies strictly within r.

``build_r_net`` / ``horizontal_edges`` / ``ancestors`` are the spread-free
primitives the solver uses; each has an index-based path (through
:class:`metricmatch.ann.AnnIndex` range queries) and an equivalent fast
path (grid kernels for euclidean inputs, vectorized scans for explicit
matrices).  ``build_navigating_net`` is the full multi-scale structure,
kept as a reference/debug path; it is built by incremental top-down
insertion and supports the containment properties exercised in tests.

Layers are immutable once built; construction is single-threaded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ann import index_for_metric
from .metric import FiniteMetric, Scale, le, lt

__all__ = [
    "scale_for",
    "floor_scale_exponent",
    "NetLayer",
    "build_r_net",
    "horizontal_edges",
    "ancestors",
    "NavigatingNet",
    "build_navigating_net",
]

# Below this size the index-based path is used even in "auto" mode; it is
# exact anyway, this is purely a constant-factor choice.
_FAST_PATH_MIN_N = 2048


def scale_for(v: float) -> Scale:
    """Smallest power-of-two scale >= v, computed exactly on the exponent."""
    if not v > 0 or not math.isfinite(v):
        raise ValueError(f"scale_for needs a positive finite value, got {v}")
    m, e = math.frexp(v)  # v = m * 2**e with 0.5 <= m < 1
    return Scale(e - 1) if m == 0.5 else Scale(e)


def floor_scale_exponent(v: float) -> int:
    """Exponent of the largest power-of-two scale <= v."""
    if not v > 0 or not math.isfinite(v):
        raise ValueError(f"floor scale needs a positive finite value, got {v}")
    _, e = math.frexp(v)
    return e - 1


@dataclass
class NetLayer:
    """An r-net with cover assignment and (optional) horizontal adjacency."""

    radius: float
    scale: Scale | None
    centers: np.ndarray  # ascending point ids
    cover: np.ndarray  # point id -> covering center id (within radius)
    adj_indptr: np.ndarray | None = None  # CSR over center positions
    adj_indices: np.ndarray | None = None
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._pos:
            self._pos = {int(c): i for i, c in enumerate(self.centers)}

    def position(self, center_id: int) -> int:
        return self._pos[center_id]

    def neighbors(self, center_id: int) -> list[int]:
        """Center ids within 6r of the given center (self included), ascending."""
        if self.adj_indptr is None:
            raise ValueError("horizontal edges not built for this layer")
        p = self._pos[center_id]
        return [int(self.centers[j]) for j in self.adj_indices[self.adj_indptr[p] : self.adj_indptr[p + 1]]]

    def edge_pairs(self) -> list[tuple[int, int]]:
        """Distinct undirected edges (u < v) between center ids."""
        if self.adj_indptr is None:
            raise ValueError("horizontal edges not built for this layer")
        pairs = []
        for p in range(len(self.centers)):
            u = int(self.centers[p])
            for j in self.adj_indices[self.adj_indptr[p] : self.adj_indptr[p + 1]]:
                v = int(self.centers[j])
                if u < v:
                    pairs.append((u, v))
        return pairs


def _resolve_method(Y: FiniteMetric, method: str) -> str:
    if method not in ("auto", "ann", "fast"):
        raise ValueError(f"unknown net construction method {method!r}")
    if method != "auto":
        return method
    return "fast" if Y.size >= _FAST_PATH_MIN_N else "ann"


def build_r_net(Y: FiniteMetric, r: float, method: str = "auto") -> NetLayer:
    """Greedy r-net over Y in ascending point order.

    A point joins the net iff no earlier center lies strictly within r
    (checked through index range queries on the "ann" path); every point is
    assigned the smallest-index center within r as its cover.
    """
    if not r > 0:
        raise ValueError("net radius must be positive")
    how = _resolve_method(Y, method)
    n = Y.size
    scale = None
    m, e = math.frexp(r)
    if m == 0.5:
        scale = Scale(e - 1)

    if how == "fast" and Y.form == "euclidean":
        try:
            cells = _kernels.grid_cells(Y.points, _kernels.cell_size_for(r))
        except _kernels.GridRangeError:
            how = "ann"
        else:
            mask, cover = _kernels.greedy_net_euclid(Y.points, cells, r)
            centers = np.flatnonzero(mask).astype(np.int64)
            return NetLayer(r, scale, centers, np.asarray(cover, dtype=np.int64))

    if how == "fast" and Y.form == "matrix":
        dmat = Y.matrix()
        centers: list[int] = []
        cover = np.full(n, -1, dtype=np.int64)
        carr = np.empty(n, dtype=np.int64)
        for p in range(n):
            if centers:
                d = dmat[p, carr[: len(centers)]]
                tol = np.maximum(_kernels.TAU * np.maximum(np.abs(d), r), _kernels.ABS)
                within_lt = d < r - tol
                within_le = d <= r + tol
                hits = np.flatnonzero(within_le)
                min_le = int(carr[hits[0]]) if hits.size else -1
            else:
                within_lt = np.zeros(0, dtype=bool)
                min_le = -1
            if within_lt.any():
                cover[p] = min_le
            else:
                cover[p] = min_le if min_le != -1 else p
                carr[len(centers)] = p
                centers.append(p)
        return NetLayer(r, scale, np.asarray(centers, dtype=np.int64), cover)

    # index-based path
    index = index_for_metric(Y)
    centers = []
    cover = np.full(n, -1, dtype=np.int64)
    for p in range(n):
        hits = sorted(index.range_query(p, r)) if len(index) else []
        reject = any(lt(Y.d(p, c), r) for c in hits)
        if reject:
            cover[p] = hits[0]
        else:
            cover[p] = hits[0] if hits else p
            centers.append(p)
            index.insert(p)
    return NetLayer(r, scale, np.asarray(centers, dtype=np.int64), cover)


def horizontal_edges(layer: NetLayer, Y: FiniteMetric, method: str = "auto") -> NetLayer:
    """Attach adjacency between centers at distance <= 6r (self included)."""
    how = _resolve_method(Y, method)
    r6 = 6.0 * layer.radius
    centers = layer.centers
    if how == "fast" and Y.form == "euclidean":
        try:
            pts = Y.points[centers]
            cells = _kernels.grid_cells(pts, _kernels.cell_size_for(r6))
        except _kernels.GridRangeError:
            how = "ann"
        else:
            indptr, indices = _kernels.radius_csr_euclid(pts, cells, pts, cells, r6)
            layer.adj_indptr, layer.adj_indices = indptr, indices
            return layer

    if how == "fast" and Y.form == "matrix":
        dmat = Y.matrix()
        rows = []
        for p, c in enumerate(centers):
            d = dmat[c, centers]
            tol = np.maximum(_kernels.TAU * np.maximum(np.abs(d), r6), _kernels.ABS)
            rows.append(np.flatnonzero(d <= r6 + tol).astype(np.int64))
        layer.adj_indptr = np.zeros(len(centers) + 1, dtype=np.int64)
        layer.adj_indptr[1:] = np.cumsum([len(row) for row in rows])
        layer.adj_indices = (
            np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        )
        return layer

    index = index_for_metric(Y)
    for c in centers:
        index.insert(int(c))
    rows = []
    for c in centers:
        hits = sorted(index.range_query(int(c), r6))
        rows.append(np.asarray([layer.position(h) for h in hits], dtype=np.int64))
    layer.adj_indptr = np.zeros(len(centers) + 1, dtype=np.int64)
    layer.adj_indptr[1:] = np.cumsum([len(row) for row in rows])
    layer.adj_indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    return layer


def ancestors(
    fine: NetLayer, coarse: NetLayer, Y: FiniteMetric, method: str = "auto"
) -> np.ndarray:
    """Smallest-index coarse center within the coarse radius, per fine center.

    Every fine center has one by the covering property; a miss means the
    layers do not belong to the same space and is reported as corruption.
    """
    if not coarse.radius > fine.radius:
        raise ValueError("coarse scale must exceed fine scale")
    how = _resolve_method(Y, method)
    rp = coarse.radius
    out = None
    if how == "fast" and Y.form == "euclidean":
        try:
            fpts = Y.points[fine.centers]
            cpts = Y.points[coarse.centers]
            cell = _kernels.cell_size_for(rp)
            fcells = _kernels.grid_cells(fpts, cell)
            ccells = _kernels.grid_cells(cpts, cell)
        except _kernels.GridRangeError:
            how = "ann"
        else:
            pos = _kernels.min_index_within_euclid(fpts, fcells, cpts, ccells, rp)
            out = np.where(pos >= 0, coarse.centers[pos], -1)

    if out is None and how == "fast" and Y.form == "matrix":
        dmat = Y.matrix()
        out = np.full(len(fine.centers), -1, dtype=np.int64)
        for i, f in enumerate(fine.centers):
            d = dmat[f, coarse.centers]
            tol = np.maximum(_kernels.TAU * np.maximum(np.abs(d), rp), _kernels.ABS)
            hits = np.flatnonzero(d <= rp + tol)
            if hits.size:
                out[i] = coarse.centers[hits[0]]

    if out is None:
        index = index_for_metric(Y)
        for c in coarse.centers:
            index.insert(int(c))
        out = np.full(len(fine.centers), -1, dtype=np.int64)
        for i, f in enumerate(fine.centers):
            hits = index.range_query(int(f), rp)
            if hits:
                out[i] = min(hits)

    if np.any(out < 0):
        bad = int(fine.centers[int(np.flatnonzero(out < 0)[0])])
        raise RuntimeError(
            f"no coarse center within {rp} of fine center {bad}; corrupted layers"
        )
    return out


# -- navigating net (reference path) ------------------------------------------


@dataclass
class NavigatingNet:
    """Stack of r-nets with horizontal (<= 6r) and parent (<= parent scale) links."""

    r_min_exp: int
    r_max_exp: int
    root: int
    layers: dict[int, NetLayer]
    parents: dict[tuple[int, int], int]  # (exponent, point) -> parent point at exp+1
    children: dict[tuple[int, int], list[int]]  # (exponent, point) -> points at exp-1

    def scales(self) -> list[int]:
        return list(range(self.r_min_exp, self.r_max_exp + 1))

    def ancestor_chain(self, exp: int, point: int) -> list[tuple[int, int]]:
        chain = []
        cur = point
        e = exp
        while (e, cur) in self.parents:
            cur = self.parents[(e, cur)]
            e += 1
            chain.append((e, cur))
        return chain


class _NavLayer:
    __slots__ = ("members", "member_set", "adj", "cover")

    def __init__(self, n: int):
        self.members: list[int] = []
        self.member_set: set[int] = set()
        self.adj: dict[int, set[int]] = {}
        self.cover = np.full(n, -1, dtype=np.int64)

    def add(self, point: int, neighbors: list[int]):
        self.members.append(point)
        self.member_set.add(point)
        self.adj[point] = {point}
        for z in neighbors:
            self.adj[point].add(z)
            self.adj[z].add(point)
        self.cover[point] = point


def build_navigating_net(Y: FiniteMetric) -> NavigatingNet:
    """Incremental top-down construction over all scales.

    Point 0 is the root; remaining points are inserted in ascending index
    order, each descending through the per-scale neighbor sets N(y, r).
    New bottom scales are created when a point lands closer than the
    current minimum scale.
    """
    n = Y.size
    if n < 1:
        raise ValueError("navigating net needs at least one point")
    root = 0
    if n == 1:
        layer = _NavLayer(1)
        layer.add(0, [])
        return NavigatingNet(0, 0, 0, {0: _freeze_layer(layer, 0)}, {}, {})

    maxd = float(np.max(Y.row(root)))
    r_max_exp = scale_for(maxd).exponent
    r_min_exp = r_max_exp

    layers: dict[int, _NavLayer] = {r_max_exp: _NavLayer(n)}
    layers[r_max_exp].add(root, [])
    parents: dict[tuple[int, int], int] = {}
    children: dict[tuple[int, int], list[int]] = {}

    def add_level_below(exp_above: int) -> None:
        # copy the bottom layer one scale down; edges are a subset of the
        # level above, every member is its own child and parent
        new_exp = exp_above - 1
        src = layers[exp_above]
        dst = _NavLayer(n)
        r6 = 6.0 * math.ldexp(1.0, new_exp)
        for mpt in src.members:
            dst.members.append(mpt)
            dst.member_set.add(mpt)
            dst.adj[mpt] = {z for z in src.adj[mpt] if le(Y.d(mpt, z), r6)}
            dst.cover[mpt] = mpt
            parents[(new_exp, mpt)] = mpt
            children.setdefault((exp_above, mpt), []).append(mpt)
        layers[new_exp] = dst

    for y in range(1, n):
        if r_min_exp == r_max_exp:
            add_level_below(r_max_exp)
            r_min_exp = r_max_exp - 1

        # descend, maintaining N(y, r) = members of Y_r within 6r
        nsets: dict[int, list[int]] = {r_max_exp: [root]}
        for exp in range(r_max_exp - 1, r_min_exp - 1, -1):
            cand: set[int] = set()
            for z in nsets[exp + 1]:
                cand.update(children.get((exp + 1, z), ()))
            r6 = 6.0 * math.ldexp(1.0, exp)
            nsets[exp] = sorted(c for c in cand if le(Y.d(y, c), r6))

        bottom = nsets[r_min_exp]
        if bottom:
            d_c = min(Y.d(y, z) for z in bottom)
            if lt(d_c, math.ldexp(1.0, r_min_exp)):
                r_temp_exp = floor_scale_exponent(d_c)
                for exp in range(r_min_exp - 1, r_temp_exp - 1, -1):
                    add_level_below(exp + 1)
                    cand = set()
                    for z in nsets[exp + 1]:
                        cand.update(children.get((exp + 1, z), ()))
                    r6 = 6.0 * math.ldexp(1.0, exp)
                    nsets[exp] = sorted(c for c in cand if le(Y.d(y, c), r6))
                r_min_exp = r_temp_exp

        accepted_above = False  # y is never in the root layer
        for exp in range(r_max_exp - 1, r_min_exp - 1, -1):
            r = math.ldexp(1.0, exp)
            near = nsets[exp]
            le_hits = [z for z in near if le(Y.d(y, z), r)]
            reject = any(lt(Y.d(y, z), r) for z in near)
            layer = layers[exp]
            if reject:
                layer.cover[y] = min(le_hits)
                accepted_above = False
                continue
            layer.add(y, near)
            if le_hits:
                layer.cover[y] = min(min(le_hits), y)
            if accepted_above:
                parent = y
            else:
                above = nsets.get(exp + 1, [root])
                parent = min(above, key=lambda z: (Y.d(y, z), z))
            parents[(exp, y)] = parent
            children.setdefault((exp + 1, parent), []).append(y)
            accepted_above = True

    frozen = {exp: _freeze_layer(layer, exp) for exp, layer in layers.items()}
    return NavigatingNet(r_min_exp, r_max_exp, root, frozen, parents, children)


def _freeze_layer(layer: _NavLayer, exp: int) -> NetLayer:
    centers = np.asarray(sorted(layer.member_set), dtype=np.int64)
    out = NetLayer(math.ldexp(1.0, exp), Scale(exp), centers, layer.cover)
    rows = [
        np.asarray(sorted(out.position(z) for z in layer.adj[int(c)]), dtype=np.int64)
        for c in centers
    ]
    out.adj_indptr = np.zeros(len(centers) + 1, dtype=np.int64)
    out.adj_indptr[1:] = np.cumsum([len(r) for r in rows])
    out.adj_indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    return out
