"""Well-separated pair decomposition and the derived candidate lengths.

The decomposition refines pairs of net-tree nodes (the same hierarchy the
ANN index builds): a pair is emitted once the diameter bound of each side
drops below 1/s times a lower bound on their set distance, otherwise the
side with the larger bound is split into its point plus its subtrees.
Every unordered point pair ends up covered by at least one emitted pair,
and each emitted pair is s-separated.

``candidate_lengths`` turns the decomposition of Y into a sorted list of
representative distances such that every pairwise distance of Y is within
a (1+eps) factor of some list entry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .ann import index_for_metric
from .metric import TAU, FiniteMetric

__all__ = ["WspdNode", "WspdPair", "build_wspd", "candidate_lengths"]


@dataclass(frozen=True)
class WspdNode:
    """One side of a pair: either a single point or a whole net-tree subtree."""

    rep: int
    tree_node: object | None  # None marks a single-point leaf

    @property
    def is_leaf(self) -> bool:
        return self.tree_node is None

    def diam_bound(self) -> float:
        if self.tree_node is None:
            return 0.0
        # subtree of a level-l node stays within 2**(l+1) of its point
        return math.ldexp(1.0, self.tree_node.level + 2)

    def radius_bound(self) -> float:
        if self.tree_node is None:
            return 0.0
        return math.ldexp(1.0, self.tree_node.level + 1)

    def points(self) -> list[int]:
        if self.tree_node is None:
            return [self.rep]
        out = []
        stack = [self.tree_node]
        while stack:
            node = stack.pop()
            out.append(node.point)
            stack.extend(node.children)
        out.sort()
        return out

    def _split(self) -> list["WspdNode"]:
        pieces = [WspdNode(self.tree_node.point, None)]
        pieces.extend(WspdNode(c.point, c) for c in self.tree_node.children)
        return pieces


@dataclass(frozen=True)
class WspdPair:
    """An s-separated pair of subsets with one representative per side."""

    node_a: WspdNode
    node_b: WspdNode
    length: float

    @property
    def rep_a(self) -> int:
        return self.node_a.rep

    @property
    def rep_b(self) -> int:
        return self.node_b.rep


def build_wspd(S: FiniteMetric, s: float) -> list[WspdPair]:
    """Decompose S into s-separated pairs covering every point pair."""
    if S.size < 2:
        raise ValueError("WSPD needs at least two points")
    if not s > 0:
        raise ValueError("separation ratio must be positive")
    index = index_for_metric(S)
    for p in range(S.size):
        index.insert(p)
    root = WspdNode(index.root_node().point, index.root_node())

    out: list[WspdPair] = []

    def emit(u: WspdNode, v: WspdNode, d: float) -> None:
        if u.rep <= v.rep:
            out.append(WspdPair(u, v, d))
        else:
            out.append(WspdPair(v, u, d))

    def rec(u: WspdNode, v: WspdNode) -> None:
        if u is v:
            if u.is_leaf:
                return
            pieces = u._split()
            for i, a in enumerate(pieces):
                rec(a, a)
                for b in pieces[i + 1 :]:
                    rec(a, b)
            return
        d = S.d(u.rep, v.rep)
        lower = d - u.radius_bound() - v.radius_bound()
        du, dv = u.diam_bound(), v.diam_bound()
        if lower > 0 and max(du, dv) * s <= lower:
            emit(u, v, d)
            return
        # split the side with the larger diameter bound
        if du > dv or (du == dv and not u.is_leaf):
            big, other = u, v
        else:
            big, other = v, u
        if big.is_leaf:
            big, other = other, big
        for piece in big._split():
            rec(piece, other)

    rec(root, root)
    return out


def candidate_lengths(Y: FiniteMetric, eps: float) -> list[float]:
    """Sorted lengths (1+eps)-sandwiching every pairwise distance of Y.

    Separation 3/eps makes the pair sandwich factor 1+2*(eps/3) <= 1+eps;
    lengths are deduplicated within relative TAU.
    """
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    pairs = build_wspd(Y, 3.0 / eps)
    lengths = sorted(p.length for p in pairs)
    out: list[float] = []
    for v in lengths:
        if not out or v > out[-1] * (1.0 + TAU):
            out.append(v)
    return out
