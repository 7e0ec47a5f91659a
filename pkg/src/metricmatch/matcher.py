"""Approximate pattern matching under a distortion budget.

Given a k-point pattern X, an n-point space Y, a budget rho >= 1 and a
slack 0 < eps <= 1, :func:`solve_distortion` returns a matching whose
pairwise distances stay within a (1+eps)*rho factor band whenever a
rho-matching exists (and possibly also when none does; it returns nothing
only if no (1+eps)*rho-matching was retained).

The construction is recursive over a split tree of the pattern:

* the pattern is split by Kruskal clustering into well-separated halves,
* singleton subsets seed matching sets from a fine net of Y,
* sets are lifted to coarser net scales with a separation filter,
* and the halves are recombined center by center over the horizontal
  neighborhood of a net layer, keeping only verified, ball-bounded,
  separated candidates.

Each per-center collection is a :class:`MatchingSet` holding matchings
that are pairwise separated in the product max-metric; separation tests
run against a nearest-neighbor sub-index over the matchings.  The same
enumeration exists in flattened form in :mod:`metricmatch._kernels`; both
paths visit candidates in the same order with the same comparators and
produce identical kept sets ("object" exercises the index machinery,
"kernel" is the fast path, "auto" picks by workload).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ann import index_for_matchings
from .metric import FiniteMetric, Matching, Scale, ge, le, lt
from .nets import NetLayer, ancestors, build_r_net, horizontal_edges, scale_for

__all__ = [
    "split_pattern",
    "SplitNode",
    "build_split_tree",
    "MatchingSet",
    "base_singleton",
    "lift",
    "combine",
    "solve_distortion",
]

# auto path: flattened kernels take over once a stage enumerates this many
# candidates
_KERNEL_THRESHOLD = 20_000


def _path_choice(path: str | None) -> str:
    p = path or os.environ.get("METRICMATCH_PATH", "auto").strip().lower()
    if p not in ("auto", "object", "kernel"):
        raise ValueError(f"unknown matcher path {p!r}")
    return p


# -- pattern splitting ---------------------------------------------------------


class _DSU:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def split_pattern(X: FiniteMetric, subset) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Kruskal clustering stopped one merge early: two well-separated halves.

    Guarantees diam(subset) <= (|subset|-1) * d(P, Q).  Edges are processed
    in ascending (length, i, j) order; P is the half containing the
    smallest index.
    """
    sub = tuple(sorted(subset))
    if len(sub) < 2:
        raise ValueError("cannot split fewer than two points")
    edges = sorted(
        (X.d(i, j), i, j) for ai, i in enumerate(sub) for j in sub[ai + 1 :]
    )
    dsu = _DSU(sub)
    merges = 0
    for _, i, j in edges:
        if merges == len(sub) - 2:
            break
        if dsu.union(i, j):
            merges += 1
    rep = dsu.find(sub[0])
    p = tuple(i for i in sub if dsu.find(i) == rep)
    q = tuple(i for i in sub if dsu.find(i) != rep)
    return p, q


@dataclass(frozen=True)
class SplitNode:
    """One node of the recursive pattern decomposition."""

    subset: tuple[int, ...]
    slack: float  # relative slack budget at this node; eps at the root
    scale: Scale | None  # smallest scale >= rho * diam(subset); None for leaves
    children: tuple["SplitNode", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return len(self.subset) == 1


def build_split_tree(X: FiniteMetric, eps: float, rho: float) -> SplitNode:
    """Recursive split tree with per-node slack eps/(8k-8) and net scale."""
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    if rho < 1:
        raise ValueError("rho must be at least 1")

    def rec(subset: tuple[int, ...], slack: float) -> SplitNode:
        if len(subset) == 1:
            return SplitNode(subset, slack, None)
        r_w = scale_for(rho * X.diam(subset))
        child_slack = slack / (8 * len(subset) - 8)
        p, q = split_pattern(X, subset)
        return SplitNode(subset, slack, r_w, (rec(p, child_slack), rec(q, child_slack)))

    return rec(tuple(range(X.size)), eps)


# -- matching sets -------------------------------------------------------------


class MatchingSet:
    """Separated collection of matchings of a pattern subset near one center.

    Invariant contract at scale r with slack beta: every stored matching is
    a (1+beta)*rho-matching whose image stays in ball(center, 3r), and
    distinct stored matchings are at product distance >= beta*r/(2*rho^2).
    Separation tests run against a lazily built ANN sub-index over the
    stored matchings.
    """

    __slots__ = ("Y", "center", "subset", "beta", "rho", "radius", "sep", "matchings", "_index")

    def __init__(self, Y: FiniteMetric, center: int, subset, beta: float, rho: float, radius: float):
        self.Y = Y
        self.center = center
        self.subset = tuple(subset)
        self.beta = beta
        self.rho = rho
        self.radius = radius
        self.sep = beta * radius / (2.0 * rho * rho)
        self.matchings: list[tuple[int, ...]] = []
        self._index = None

    def __len__(self) -> int:
        return len(self.matchings)

    def _ensure_index(self):
        if self._index is None:
            self._index = index_for_matchings(self.Y)
            for t in self.matchings:
                self._index.insert(t)
        return self._index

    def try_add(self, targets: tuple[int, ...]) -> bool:
        """Keep the matching iff it clears the separation radius."""
        index = self._ensure_index()
        if self.matchings and index.range_query(targets, self.sep):
            return False
        self.matchings.append(targets)
        index.insert(targets)
        return True

    def append_unchecked(self, targets: tuple[int, ...]) -> None:
        # for constructions that are separated by design (net packing,
        # kernel output)
        self.matchings.append(targets)
        self._index = None


def base_singleton(
    x: int,
    beta: float,
    rho: float,
    layer: NetLayer,
    Y: FiniteMetric,
    net_method: str = "auto",
) -> dict[int, MatchingSet]:
    """Singleton matching sets for pattern point x at the layer's scale.

    A beta*r/(2 rho^2)-net of Y provides the stored targets; each net point
    is recorded at its covering center of the layer.  Packing of the net
    gives the separation invariant, covering gives the coverage invariant.
    """
    r = layer.radius
    s = beta * r / (2.0 * rho * rho)
    fine = build_r_net(Y, s, method=net_method)
    sets: dict[int, MatchingSet] = {}
    for y2 in fine.centers:
        anchor = int(layer.cover[int(y2)])
        ms = sets.get(anchor)
        if ms is None:
            ms = MatchingSet(Y, anchor, (x,), beta, rho, r)
            sets[anchor] = ms
        ms.append_unchecked((int(y2),))
    return sets


# -- lifting -------------------------------------------------------------------


def _sets_to_csr(
    sets: dict[int, MatchingSet], layer: NetLayer, k: int
) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(len(layer.centers) + 1, dtype=np.int64)
    chunks = []
    total = 0
    for pos, cid in enumerate(layer.centers):
        ms = sets.get(int(cid))
        cnt = len(ms.matchings) if ms else 0
        if cnt:
            chunks.append(np.asarray(ms.matchings, dtype=np.int64))
        total += cnt
        indptr[pos + 1] = total
    rows = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, k), dtype=np.int64)
    return indptr, rows


def _near_csr(Y: FiniteMetric, sep: float) -> tuple[np.ndarray, np.ndarray]:
    # superset of "within separation" per point, generous at the boundary
    dmat = Y.matrix()
    probe = sep + max(_kernels.TAU * max(float(dmat.max()), sep), _kernels.ABS)
    mask = dmat <= probe
    indptr = np.zeros(Y.size + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(mask.sum(axis=1))
    indices = np.nonzero(mask)[1].astype(np.int64)
    return indptr, indices


def lift(
    fine_sets: dict[int, MatchingSet],
    fine_layer: NetLayer,
    coarse_layer: NetLayer,
    W,
    beta: float,
    rho: float,
    Y: FiniteMetric,
    path: str | None = None,
    net_method: str = "auto",
) -> dict[int, MatchingSet]:
    """Merge per-center sets upward to the coarse layer's ancestors.

    Matchings are visited coarse-center by coarse-center (fine children in
    ascending order, stored order within each), and kept iff separated by
    beta*r'/(2 rho^2) from everything already kept at that ancestor.
    """
    if not coarse_layer.radius > fine_layer.radius:
        raise ValueError("lift requires a strictly coarser target scale")
    if coarse_layer.radius < 2.0 * fine_layer.radius:
        raise ValueError("lift requires the coarse scale to be at least twice the fine scale")
    anc = ancestors(fine_layer, coarse_layer, Y, method=net_method)
    children: dict[int, list[int]] = {}
    for i, f in enumerate(fine_layer.centers):
        children.setdefault(int(anc[i]), []).append(int(f))

    k = len(tuple(W))
    total = sum(len(ms.matchings) for ms in fine_sets.values())
    how = _path_choice(path)
    if how == "auto":
        how = "kernel" if total > _KERNEL_THRESHOLD else "object"

    if how == "kernel":
        fine_indptr, fine_rows = _sets_to_csr(fine_sets, fine_layer, k)
        cpos = {int(c): i for i, c in enumerate(coarse_layer.centers)}
        fpos = {int(c): i for i, c in enumerate(fine_layer.centers)}
        child_indptr = np.zeros(len(coarse_layer.centers) + 1, dtype=np.int64)
        chunks = []
        total_children = 0
        for i, cid in enumerate(coarse_layer.centers):
            kids = children.get(int(cid), [])
            chunks.extend(fpos[f] for f in kids)
            total_children += len(kids)
            child_indptr[i + 1] = total_children
        child_indices = np.asarray(chunks, dtype=np.int64)
        sep = beta * coarse_layer.radius / (2.0 * rho * rho)
        if Y.form == "matrix":
            near_indptr, near_indices = _near_csr(Y, sep)
            rows, centers_out = _kernels.lift_matrix(
                Y.matrix(), child_indptr, child_indices, fine_indptr, fine_rows,
                rho, beta, coarse_layer.radius, near_indptr, near_indices,
            )
        else:
            rows, centers_out = _kernels.lift_euclid(
                Y.points, child_indptr, child_indices, fine_indptr, fine_rows,
                rho, beta, coarse_layer.radius,
            )
        out: dict[int, MatchingSet] = {}
        for row, cp in zip(rows, centers_out):
            cid = int(coarse_layer.centers[int(cp)])
            ms = out.get(cid)
            if ms is None:
                ms = MatchingSet(Y, cid, W, beta, rho, coarse_layer.radius)
                out[cid] = ms
            ms.append_unchecked(tuple(int(v) for v in row))
        return out

    out = {}
    for cid in coarse_layer.centers:
        cid = int(cid)
        kids = children.get(cid)
        if not kids:
            continue
        ms = MatchingSet(Y, cid, W, beta, rho, coarse_layer.radius)
        for fid in kids:
            fs = fine_sets.get(fid)
            if fs is None:
                continue
            for t in fs.matchings:
                ms.try_add(t)
        if ms.matchings:
            out[cid] = ms
    return out


# -- combining -----------------------------------------------------------------


def _positions(W: tuple[int, ...], part: tuple[int, ...]) -> np.ndarray:
    where = {x: i for i, x in enumerate(W)}
    return np.asarray([where[x] for x in part], dtype=np.int64)


def _subset_distances(X: FiniteMetric, W: tuple[int, ...]) -> np.ndarray:
    k = len(W)
    d = np.zeros((k, k), dtype=np.float64)
    for a in range(k):
        for b in range(a + 1, k):
            d[a, b] = d[b, a] = X.d(W[a], W[b])
    return d


def combine(
    sets_p: dict[int, MatchingSet],
    sets_q: dict[int, MatchingSet],
    part_p: tuple[int, ...],
    part_q: tuple[int, ...],
    eps: float,
    rho: float,
    layer: NetLayer,
    X: FiniteMetric,
    Y: FiniteMetric,
    stop_after_first: bool = False,
    path: str | None = None,
) -> dict[int, MatchingSet]:
    """Compose the two halves' sets into sets for their union.

    For each center and each ordered pair of horizontal neighbors, every
    cross product of stored matchings is considered; a candidate is kept
    iff it is injective, verifies at (1+eps)*rho, keeps its image inside
    ball(center, 3r), and clears the separation radius eps*r/(2 rho^2)
    against matchings already kept at the center.
    """
    W = tuple(sorted(part_p + part_q))
    k = len(W)
    expected_beta = eps / (8 * k - 8)
    for ms in list(sets_p.values()) + list(sets_q.values()):
        if not math.isclose(ms.beta, expected_beta, rel_tol=1e-12):
            raise ValueError("input sets were built with an inconsistent slack")
    if layer.adj_indptr is None:
        raise ValueError("combine requires the layer's horizontal edges")

    pos_p = _positions(W, part_p)
    pos_q = _positions(W, part_q)
    dxw = _subset_distances(X, W)
    r = layer.radius
    rr = (1.0 + eps) * rho

    how = _path_choice(path)
    if how == "auto":
        size_p = {cid: len(ms.matchings) for cid, ms in sets_p.items()}
        size_q = {cid: len(ms.matchings) for cid, ms in sets_q.items()}
        est = 0
        for pp in range(len(layer.centers)):
            ids = [int(layer.centers[j]) for j in layer.adj_indices[layer.adj_indptr[pp] : layer.adj_indptr[pp + 1]]]
            sp = sum(size_p.get(i, 0) for i in ids)
            sq = sum(size_q.get(i, 0) for i in ids)
            est += sp * sq
            if est > _KERNEL_THRESHOLD:
                break
        how = "kernel" if est > _KERNEL_THRESHOLD else "object"

    if how == "kernel":
        p_indptr, p_rows = _sets_to_csr(sets_p, layer, len(part_p))
        q_indptr, q_rows = _sets_to_csr(sets_q, layer, len(part_q))
        if Y.form == "matrix":
            sep = eps * r / (2.0 * rho * rho)
            near_indptr, near_indices = _near_csr(Y, sep)
            rows, centers_out = _kernels.combine_matrix(
                Y.matrix(), layer.centers, layer.adj_indptr, layer.adj_indices,
                p_indptr, p_rows, q_indptr, q_rows, pos_p, pos_q, dxw,
                rho, eps, r, near_indptr, near_indices, stop_after_first,
            )
        else:
            rows, centers_out = _kernels.combine_euclid(
                Y.points, layer.centers, layer.adj_indptr, layer.adj_indices,
                p_indptr, p_rows, q_indptr, q_rows, pos_p, pos_q, dxw,
                rho, eps, r, stop_after_first,
            )
        out: dict[int, MatchingSet] = {}
        for row, cp in zip(rows, centers_out):
            cid = int(layer.centers[int(cp)])
            ms = out.get(cid)
            if ms is None:
                ms = MatchingSet(Y, cid, W, eps, rho, r)
                out[cid] = ms
            ms.append_unchecked(tuple(int(v) for v in row))
        return out

    out = {}
    kp, kq = len(part_p), len(part_q)
    t = [0] * k
    for cid in layer.centers:
        cid = int(cid)
        nbrs = layer.neighbors(cid)
        ms: MatchingSet | None = None
        for y_p in nbrs:
            msp = sets_p.get(y_p)
            if msp is None:
                continue
            for y_q in nbrs:
                msq = sets_q.get(y_q)
                if msq is None:
                    continue
                for tp in msp.matchings:
                    for tq in msq.matchings:
                        for a in range(kp):
                            t[pos_p[a]] = tp[a]
                        for b in range(kq):
                            t[pos_q[b]] = tq[b]
                        if len(set(t)) != k:
                            continue
                        if not all(le(Y.d(cid, tj), 3.0 * r) for tj in t):
                            continue
                        ok = True
                        for a in range(k):
                            for b in range(a + 1, k):
                                dy = Y.d(t[a], t[b])
                                dx = dxw[a, b]
                                if not le(dy, rr * dx) or not ge(dy, dx / rr):
                                    ok = False
                                    break
                            if not ok:
                                break
                        if not ok:
                            continue
                        if ms is None:
                            ms = MatchingSet(Y, cid, W, eps, rho, r)
                        if ms.try_add(tuple(t)) and stop_after_first:
                            out[cid] = ms
                            return out
        if ms is not None and ms.matchings:
            out[cid] = ms
    return out


# -- driver --------------------------------------------------------------------


def solve_distortion(
    X: FiniteMetric,
    Y: FiniteMetric,
    rho: float,
    eps: float,
    want_all: bool = False,
    path: str | None = None,
    net_method: str = "auto",
):
    """Solve the relaxed matching decision problem.

    Returns a Matching (or, with ``want_all``, the list of all retained
    matchings) whenever a rho-matching exists; may also return one when
    only a (1+eps)*rho-matching exists; returns None (or an empty list)
    otherwise.
    """
    if rho < 1:
        raise ValueError("rho must be at least 1")
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    k, n = X.size, Y.size
    if k > n:
        raise ValueError(f"pattern larger than space: {k} > {n}")

    if k == 1:
        if want_all:
            return [Matching((t,)) for t in range(n)]
        return Matching((0,))

    diam_x = X.diam()
    if n >= 2 and lt(rho * diam_x, Y.dmin()):
        # pattern pairs cannot reach the minimum spacing of Y
        return [] if want_all else None

    tree = build_split_tree(X, eps, rho)
    layers: dict[int, NetLayer] = {}
    edged: set[int] = set()

    def layer_at(scale: Scale, with_edges: bool) -> NetLayer:
        exp = scale.exponent
        if exp not in layers:
            layers[exp] = build_r_net(Y, scale.value, method=net_method)
        if with_edges and exp not in edged:
            horizontal_edges(layers[exp], Y, method=net_method)
            edged.add(exp)
        return layers[exp]

    def process(node: SplitNode, at_root: bool) -> dict[int, MatchingSet]:
        layer = layer_at(node.scale, with_edges=True)
        child_sets = []
        for child in node.children:
            if child.is_leaf:
                sets = base_singleton(child.subset[0], child.slack, rho, layer, Y, net_method)
            else:
                sets = process(child, at_root=False)
                if child.scale.exponent < node.scale.exponent:
                    sets = lift(
                        sets, layers[child.scale.exponent], layer,
                        child.subset, child.slack, rho, Y, path, net_method,
                    )
            child_sets.append(sets)
        p_node, q_node = node.children
        return combine(
            child_sets[0], child_sets[1], p_node.subset, q_node.subset,
            node.slack, rho, layer, X, Y,
            stop_after_first=at_root and not want_all, path=path,
        )

    root_sets = process(tree, at_root=True)
    found: list[Matching] = []
    for cid in sorted(root_sets):
        for t in root_sets[cid].matchings:
            found.append(Matching(t))
    if want_all:
        return found
    return found[0] if found else None
