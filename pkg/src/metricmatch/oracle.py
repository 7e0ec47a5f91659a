"""Brute-force exact reference implementations.

Everything here is a plain enumeration with no pruning, kept deliberately
simple so it can serve as the trusted side of differential tests.  The
enumeration guards fail loudly instead of truncating: a silent partial
oracle would poison the acceptance tests.  All results are deterministic
(lexicographic order) and share the package-wide boundary tolerance.
"""
from __future__ import annotations

import math
from itertools import combinations, permutations

import numpy as np

from .metric import ABS, TAU, FiniteMetric, Matching, le, lt

__all__ = [
    "EnumerationGuardError",
    "brute_rho_matchings",
    "brute_min_distortion",
    "brute_k_clique",
    "brute_nn",
    "brute_range",
    "greedy_net_reference",
]

GUARD = 10_000_000


class EnumerationGuardError(RuntimeError):
    """The requested enumeration exceeds the configured guard."""


def _injection_count(n: int, k: int) -> int:
    total = 1
    for i in range(k):
        total *= n - i
        if total > GUARD:
            return total
    return total


def _pair_admissible(X: FiniteMetric, Y: FiniteMetric, rho: float) -> list[list[np.ndarray]]:
    """ok[i][j][a, b] == matching x_i -> a, x_j -> b respects the rho band."""
    dy = Y.matrix()
    k = X.size
    ok: list[list[np.ndarray]] = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            dx = X.d(i, j)
            hi = rho * dx
            lo = dx / rho
            tol_hi = np.maximum(TAU * np.maximum(np.abs(dy), abs(hi)), ABS)
            tol_lo = np.maximum(TAU * np.maximum(np.abs(dy), abs(lo)), ABS)
            m = (dy <= hi + tol_hi) & (lo <= dy + tol_lo)
            ok[i][j] = m
    return ok


def brute_rho_matchings(
    X: FiniteMetric,
    Y: FiniteMetric,
    rho: float,
    limit: int | None = None,
    existence_only: bool = False,
) -> list[Matching]:
    """All rho-matchings X -> Y by exhaustive enumeration of injections.

    With ``existence_only`` the first hit (lexicographically) is returned
    alone.  ``limit`` truncates the result list but never the search for
    existence.
    """
    if rho < 1.0:
        raise ValueError("rho must be at least 1")
    k, n = X.size, Y.size
    if k > n:
        raise ValueError(f"pattern larger than space: {k} > {n}")
    if _injection_count(n, k) > GUARD:
        raise EnumerationGuardError(f"{n} P {k} exceeds the {GUARD} guard")
    if k == 1:
        hits = [Matching((t,)) for t in range(n)]
        return hits[:1] if existence_only else (hits[:limit] if limit else hits)

    ok = _pair_admissible(X, Y, rho)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    out: list[Matching] = []
    for targets in permutations(range(n), k):
        good = True
        for i, j in pairs:
            if not ok[i][j][targets[i], targets[j]]:
                good = False
                break
        if good:
            out.append(Matching(targets))
            if existence_only:
                return out
            if limit is not None and len(out) >= limit:
                return out
    return out


def brute_min_distortion(X: FiniteMetric, Y: FiniteMetric) -> tuple[float, Matching]:
    """Exact minimum of expansion * inverse-expansion over all injections."""
    k, n = X.size, Y.size
    if k < 2:
        raise ValueError("minimum distortion needs at least two pattern points")
    if k > n:
        raise ValueError(f"pattern larger than space: {k} > {n}")
    if _injection_count(n, k) > GUARD:
        raise EnumerationGuardError(f"{n} P {k} exceeds the {GUARD} guard")
    dy = Y.matrix()
    dx = X.matrix()
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    best = math.inf
    best_t = None
    for targets in permutations(range(n), k):
        exp = 0.0
        inv = 0.0
        for i, j in pairs:
            ratio = dy[targets[i], targets[j]] / dx[i, j]
            if ratio > exp:
                exp = ratio
            r2 = 1.0 / ratio
            if r2 > inv:
                inv = r2
        d = exp * inv
        if d < best:
            best = d
            best_t = targets
    return best, Matching(best_t)


def brute_k_clique(graph, k: int):
    """Lexicographically first k-clique of the graph, or None."""
    if k < 1:
        raise ValueError("k must be positive")
    if k > graph.m:
        return None
    if math.comb(graph.m, k) > GUARD:
        raise EnumerationGuardError(f"C({graph.m},{k}) exceeds the {GUARD} guard")
    edges = graph.edge_set()
    for cand in combinations(range(graph.m), k):
        if all((u, v) in edges for u, v in combinations(cand, 2)):
            return tuple(cand)
    return None


def _query_dist(metric: FiniteMetric, q, i: int) -> float:
    if isinstance(q, (int, np.integer)):
        return metric.d(int(q), i)
    return metric.dist_to_coords(q, i)


def brute_nn(metric: FiniteMetric, active, q) -> tuple[int, float]:
    """Linear-scan nearest neighbor over the active set."""
    best = None
    best_d = math.inf
    for p in active:
        d = _query_dist(metric, q, int(p))
        if d < best_d:
            best_d = d
            best = int(p)
    if best is None:
        raise ValueError("empty active set")
    return best, best_d


def brute_range(metric: FiniteMetric, active, q, radius: float) -> list[int]:
    """Linear-scan fixed-radius query with the shared boundary tolerance."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return [int(p) for p in active if le(_query_dist(metric, q, int(p)), radius)]


def greedy_net_reference(Y: FiniteMetric, r: float) -> tuple[list[int], list[int]]:
    """Quadratic greedy r-net: the oracle for nets.build_r_net.

    Same semantics: ascending order, reject iff an accepted center is
    strictly within r, cover is the smallest-index center within r.
    """
    centers: list[int] = []
    cover: list[int] = []
    for p in range(Y.size):
        reject = False
        min_le = -1
        for c in centers:
            d = Y.d(p, c)
            if lt(d, r):
                reject = True
            if le(d, r) and min_le == -1:
                min_le = c  # centers are ascending, first hit is the minimum
        if reject:
            cover.append(min_le)
        else:
            cover.append(min_le if min_le != -1 else p)
            centers.append(p)
    return centers, cover
