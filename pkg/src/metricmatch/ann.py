"""Dynamic approximate nearest-neighbor index over an arbitrary metric.

The index is a net-tree (cover-tree style hierarchy of nested nets): each
node sits at an integer level l and covers its children within 2**l.
Queries descend with the standard subtree-radius bound (a node at level l
reaches no further than 2**(l+1)), so ``ann_query`` is exact and in
particular satisfies the 3/2-approximation contract, and ``range_query``
returns exactly the active points within the radius (boundary resolved by
the shared tolerance helpers).

Deletions are lazy: the point is deactivated and kept as a routing node;
the tree is rebuilt from the live points once tombstones dominate.  A
second, mutating range-query path (repeated NN query / delete / reinsert)
is kept as a cross-check for the primary non-mutating descent.

Points are arbitrary hashable handles; distances come from the ``dist``
callable given at construction.  Point handles of the host metric are
plain indices; product-metric indexes over matchings use target tuples.
Single writer; the pure queries are safe between mutations.
"""
from __future__ import annotations

import math
from typing import Any, Callable, Hashable

from .metric import le, lt

__all__ = ["AnnIndex", "index_for_metric", "index_for_matchings"]


class _Node:
    __slots__ = ("point", "level", "children")

    def __init__(self, point, level: int):
        self.point = point
        self.level = level
        self.children: list[_Node] = []


class AnnIndex:
    """Net-tree index with insert/delete, exact NN and fixed-radius queries."""

    def __init__(self, dist: Callable[[Any, Any], float]):
        self._dist = dist
        self._root: _Node | None = None
        self._active: dict[Hashable, int] = {}  # point -> insertion sequence
        self._nodes: dict[Hashable, _Node] = {}
        self._tombstones = 0
        self._seq = 0

    def __len__(self) -> int:
        return len(self._active)

    def __contains__(self, point) -> bool:
        return point in self._active

    def active_points(self) -> list:
        """Active points in insertion order."""
        return sorted(self._active, key=self._active.__getitem__)

    def root_node(self) -> "_Node | None":
        """Root of the internal net-tree (read-only traversal use)."""
        return self._root

    # -- mutation ------------------------------------------------------------

    def insert(self, point) -> None:
        if point in self._active:
            raise ValueError(f"point already in index: {point!r}")
        self._active[point] = self._seq
        self._seq += 1
        node = self._nodes.get(point)
        if node is not None:
            # reactivating a tombstoned routing node
            self._tombstones -= 1
            return
        node = _Node(point, 0)
        self._nodes[point] = node
        if self._root is None:
            self._root = node
            return
        self._attach(node)

    def delete(self, point) -> None:
        if point not in self._active:
            raise ValueError(f"point not in index: {point!r}")
        del self._active[point]
        self._tombstones += 1
        if self._tombstones > max(16, len(self._active)):
            self._rebuild()

    def _attach(self, node: _Node) -> None:
        root = self._root
        d_root = self._dist(node.point, root.point)
        # raise the root level until it covers the new point
        while d_root > math.ldexp(1.0, root.level):
            root.level += 1
        cur = root
        while True:
            found = None
            for child in cur.children:
                if self._dist(node.point, child.point) <= math.ldexp(1.0, child.level):
                    found = child
                    break
            if found is None:
                node.level = cur.level - 1
                cur.children.append(node)
                return
            cur = found

    def _rebuild(self) -> None:
        points = self.active_points()
        self._root = None
        self._nodes = {}
        self._tombstones = 0
        for p in points:
            node = _Node(p, 0)
            self._nodes[p] = node
            if self._root is None:
                self._root = node
            else:
                self._attach(node)

    # -- queries ---------------------------------------------------------------

    def ann_query(self, q) -> tuple[Any, float]:
        """Nearest active point and its distance (exact, hence a 3/2-ANN)."""
        if not self._active:
            raise ValueError("ann_query on an empty index")
        best_p = None
        best_d = math.inf
        best_seq = -1
        stack = [(self._root, self._dist(q, self._root.point))]
        while stack:
            node, d = stack.pop()
            if node.point in self._active:
                seq = self._active[node.point]
                if d < best_d or (d == best_d and seq < best_seq):
                    best_d = d
                    best_p = node.point
                    best_seq = seq
            for child in node.children:
                dc = self._dist(q, child.point)
                # subtree of a level-l node reaches at most 2**(l+1) from it
                if dc - math.ldexp(1.0, child.level + 1) < best_d:
                    stack.append((child, dc))
        return best_p, best_d

    def range_query(self, q, radius: float) -> list:
        """All active points within radius of q (boundary-tolerant), in
        insertion order."""
        if radius <= 0:
            raise ValueError("range_query radius must be positive")
        hits = []
        if self._root is None:
            return hits
        stack = [self._root]
        while stack:
            node = stack.pop()
            d = self._dist(q, node.point)
            if node.point in self._active and le(d, radius):
                hits.append(node.point)
            for child in node.children:
                dc = self._dist(q, child.point)
                if le(dc - math.ldexp(1.0, child.level + 1), radius):
                    stack.append(child)
        hits.sort(key=self._active.__getitem__)
        return hits

    def range_query_mutating(self, q, radius: float) -> list:
        """Fixed-radius query via repeated NN / delete / reinsert.

        Cross-check path: repeatedly take the nearest active point while it
        is within 3R/2, collecting reported points within R, then restore
        the deleted points.  Must agree with range_query.
        """
        if radius <= 0:
            raise ValueError("range_query radius must be positive")
        removed = []
        hits = []
        try:
            while self._active:
                p, d = self.ann_query(q)
                if not le(d, 1.5 * radius):
                    break
                if le(d, radius):
                    hits.append(p)
                self.delete(p)
                removed.append(p)
        finally:
            for p in removed:
                self.insert(p)
        hits.sort(key=self._active.__getitem__)
        return hits


def index_for_metric(metric) -> AnnIndex:
    """Index over a FiniteMetric's point indices.

    Queries may be held-out indices; for euclidean metrics they may also be
    raw coordinate sequences (explicit matrices define no distances to
    foreign points).
    """
    if metric.form == "euclidean":
        def dist(a, b):
            if isinstance(a, int):
                return metric.d(a, b)
            return metric.dist_to_coords(a, b)
    else:
        def dist(a, b):
            return metric.d(a, b)

    return AnnIndex(dist)


def index_for_matchings(Y) -> AnnIndex:
    """Index over matchings (target tuples) under the product max-metric."""

    def dist(a, b):
        best = 0.0
        for u, v in zip(a, b):
            dv = Y.d(u, v)
            if dv > best:
                best = dv
        return best

    return AnnIndex(dist)
