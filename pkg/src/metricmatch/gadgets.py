"""Clique-gadget instances: ring spaces encoding a graph, plus decoders.

An instance embeds a graph on m vertices into k rings of m points each
(one ring per pattern point); distances between rings differ by exactly
1/m depending on edge presence, so a tight matching of the exponentially
spaced pattern forces clique-aligned choices.  Distances are generated as
exact rationals over denominator m and converted to floating point once,
so the power-of-two-minus-1/m patterns compare exactly in tests.

External vertex and ring indices are 0-based; ring scale exponents keep
the 1-based convention internally so the generated tables match the
construction verbatim.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .metric import ABS, TAU, FiniteMetric, Matching

__all__ = [
    "Graph",
    "load_graph",
    "graph_to_json",
    "CliqueInstance",
    "gen_clique_instance",
    "gen_min_distortion_instance",
    "matching_to_clique",
    "three_ball_cover_ok",
]

MIN_RING_SIZE = 24


@dataclass(frozen=True)
class Graph:
    """Undirected graph on vertices 0..m-1 without self-loops."""

    m: int
    edges: frozenset

    def __post_init__(self):
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < v < self.m):
                raise ValueError(f"bad edge ({u}, {v}) for m = {self.m}")

    @classmethod
    def from_edges(cls, m: int, edges) -> "Graph":
        norm = frozenset((min(u, v), max(u, v)) for u, v in edges)
        return cls(m, norm)

    def edge_set(self) -> frozenset:
        return self.edges

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges


def load_graph(obj) -> Graph:
    if isinstance(obj, (str, bytes)):
        text = str(obj)
        if text.lstrip().startswith("{"):
            obj = json.loads(text)
        else:
            with open(text) as fh:
                obj = json.load(fh)
    return Graph.from_edges(int(obj["m"]), [(int(u), int(v)) for u, v in obj["edges"]])


def graph_to_json(graph: Graph) -> dict:
    return {"m": graph.m, "edges": [list(e) for e in sorted(graph.edges)]}


@dataclass(frozen=True)
class CliqueInstance:
    """Pattern/space pair derived from a graph, with index bookkeeping."""

    X: FiniteMetric
    Y: FiniteMetric
    graph: Graph
    k: int
    m: int
    rho: float
    lam: float | None = None  # distance of the far anchor points, if present

    def flat(self, ring: int, vertex: int) -> int:
        if not (0 <= ring < self.k and 0 <= vertex < self.m):
            raise IndexError(f"bad (ring, vertex) = ({ring}, {vertex})")
        return ring * self.m + vertex

    def ring_of(self, flat_index: int) -> int | None:
        """Ring of a Y index; None for the far anchor point."""
        if flat_index == self.k * self.m and self.lam is not None:
            return None
        return flat_index // self.m

    def vertex_of(self, flat_index: int) -> int | None:
        if flat_index == self.k * self.m and self.lam is not None:
            return None
        return flat_index % self.m


def _ring_tables(graph: Graph, k: int, rho: float):
    m = graph.m
    if m < MIN_RING_SIZE:
        raise ValueError(f"ring size m must be at least {MIN_RING_SIZE}, got {m}")
    if k < 1:
        raise ValueError("k must be positive")
    if rho < 1:
        raise ValueError("rho must be at least 1")
    n = k * m
    dy = np.zeros((n, n), dtype=np.float64)
    for i in range(k):
        for j1 in range(m):
            a = i * m + j1
            for j2 in range(j1 + 1, m):
                b = i * m + j2
                v = float(Fraction(min(j2 - j1, m + j1 - j2), m))
                dy[a, b] = dy[b, a] = v
    for i1 in range(k):
        for i2 in range(i1 + 1, k):
            exp = max(i1, i2) + 1  # rings are 1-based in the construction
            base = Fraction(2) ** exp
            off = base - Fraction(1, m)
            for j1 in range(m):
                a = i1 * m + j1
                for j2 in range(m):
                    b = i2 * m + j2
                    v = base if graph.has_edge(j1, j2) else off
                    dy[a, b] = dy[b, a] = float(v)

    dx = np.zeros((k, k), dtype=np.float64)
    for i1 in range(k):
        for i2 in range(i1 + 1, k):
            dx[i1, i2] = dx[i2, i1] = float(2 ** (max(i1, i2) + 1)) * rho
    return dx, dy


def gen_clique_instance(graph: Graph, k: int, rho: float) -> CliqueInstance:
    """Instance whose rho-matchings correspond exactly to k-cliques."""
    dx, dy = _ring_tables(graph, k, rho)
    return CliqueInstance(
        X=FiniteMetric.from_matrix(dx, validate=False),
        Y=FiniteMetric.from_matrix(dy, validate=False),
        graph=graph,
        k=k,
        m=graph.m,
        rho=rho,
    )


def gen_min_distortion_instance(graph: Graph, k: int, rho: float) -> CliqueInstance:
    """The clique instance extended with a far anchor point on both sides.

    The anchor sits at distance lambda = 5 * m * rho^2 * 2^k from every
    other point, pinning the optimal distortion of positive instances at
    exactly rho.
    """
    dx, dy = _ring_tables(graph, k, rho)
    lam = 5.0 * graph.m * rho * rho * float(2**k)
    n = dy.shape[0]
    dy_ext = np.full((n + 1, n + 1), lam, dtype=np.float64)
    dy_ext[:n, :n] = dy
    dy_ext[n, n] = 0.0
    dx_ext = np.full((k + 1, k + 1), lam, dtype=np.float64)
    dx_ext[:k, :k] = dx
    dx_ext[k, k] = 0.0
    return CliqueInstance(
        X=FiniteMetric.from_matrix(dx_ext, validate=False),
        Y=FiniteMetric.from_matrix(dy_ext, validate=False),
        graph=graph,
        k=k,
        m=graph.m,
        rho=rho,
        lam=lam,
    )


def matching_to_clique(sigma, inst: CliqueInstance) -> tuple[int, ...]:
    """Decode a matching's targets into graph vertices (sorted).

    Ring order is not assumed (the two closest pattern points are
    interchangeable); the far anchor target, if present, is skipped.
    Cliqueness is for the caller to check against the graph.
    """
    targets = sigma.targets if isinstance(sigma, Matching) else tuple(sigma)
    verts = []
    for t in targets:
        v = inst.vertex_of(int(t))
        if v is not None:
            verts.append(v)
    return tuple(sorted(verts))


def three_ball_cover_ok(Y: FiniteMetric, max_balls: int = 3) -> bool:
    """Exhaustively check the half-radius ball cover for every center/radius.

    For each point p and each pairwise distance r, some <= max_balls balls
    of radius r/2 centered at points of Y must cover ball(p, r).  Ball
    membership masks are deduplicated and dominated masks dropped before
    the exhaustive combination search, which preserves completeness.
    """
    d = Y.matrix()
    n = Y.size
    radii = sorted(set(float(v) for v in d[np.triu_indices(n, k=1)]))

    def le_mask(row: np.ndarray, r: float) -> int:
        tol = np.maximum(TAU * np.maximum(np.abs(row), abs(r)), ABS)
        mask = 0
        for j in np.flatnonzero(row <= r + tol):
            mask |= 1 << int(j)
        return mask

    for r in radii:
        half = r / 2.0
        half_masks = [le_mask(d[c], half) for c in range(n)]
        for p in range(n):
            target = le_mask(d[p], r)
            cand = sorted(
                {hm & target for hm in half_masks if hm & target},
                key=lambda x: -bin(x).count("1"),
            )
            maximal: list[int] = []
            for cm in cand:
                if not any(cm | km == km for km in maximal):
                    maximal.append(cm)
            covered = False
            for size in range(1, max_balls + 1):
                for combo in combinations(maximal, size):
                    u = 0
                    for cm in combo:
                        u |= cm
                    if u == target:
                        covered = True
                        break
                if covered:
                    break
            if not covered:
                return False
    return True
