"""Minimum-distortion decision and optimization on top of the matcher.

The expansion/inverse-expansion decision reduces to the relaxed matching
problem after rescaling Y by sqrt(e'/e); optimization then either sweeps
ratio candidates directly (naive variant) or probes a WSPD-derived
candidate length set inside an exponential + binary search.  Decision
positives always carry a certifying matching, which both optimizers
surface next to the approximation value.

The (length, pattern-pair) decision calls inside ``decide_distortion``
are independent; ``threads > 1`` evaluates them in a pool, with the
positive chosen by candidate order so results stay deterministic.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

from .matcher import solve_distortion
from .metric import FiniteMetric, Matching, ge, lt, rescale
from .oracle import EnumerationGuardError
from .wspd import candidate_lengths

__all__ = [
    "decide_expansions",
    "min_distortion_naive",
    "decide_distortion",
    "min_distortion",
]

_NAIVE_GUARD = 10_000_000


def _check_eps(eps: float) -> None:
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")


def decide_expansions(
    X: FiniteMetric,
    Y: FiniteMetric,
    e: float,
    e_inv: float,
    eps: float,
    path: str | None = None,
) -> tuple[bool, Matching | None]:
    """Approximate test for a map with expansion <= e and inverse <= e_inv.

    Positive whenever an exact such map exists; a negative answer rules out
    maps within the (1+eps) relaxation of both bounds.  Candidates with
    e * e_inv < 1 cannot certify any map between valid metrics and are
    answered negatively up front.
    """
    if e <= 0 or e_inv <= 0:
        raise ValueError("expansion bounds must be positive")
    _check_eps(eps)
    product = e * e_inv
    if product < 1.0:
        return False, None
    rho = max(1.0, math.sqrt(product))
    y_scaled = rescale(Y, math.sqrt(e_inv / e))
    found = solve_distortion(X, y_scaled, rho, eps, path=path)
    return (found is not None), found


def min_distortion_naive(
    X: FiniteMetric, Y: FiniteMetric, eps: float, path: str | None = None
) -> tuple[float, Matching]:
    """Sweep all pairwise ratio candidates in ascending product order.

    Expansion values of any map are ratios d_Y(pair)/d_X(pair), so the
    first positive decision (run at slack eps/3) brackets the optimum:
    the returned value (1+eps/3)^2 * e * e' lands in
    [dist(X, Y), (1+eps)*dist(X, Y)].
    """
    if X.size < 2:
        raise ValueError("minimum distortion needs at least two pattern points")
    if X.size > Y.size:
        raise ValueError("pattern larger than space")
    _check_eps(eps)

    ratios = set()
    for i in range(X.size):
        for j in range(i + 1, X.size):
            dx = X.d(i, j)
            for a in range(Y.size):
                for b in range(a + 1, Y.size):
                    ratios.add(Y.d(a, b) / dx)
    exps = sorted(ratios)
    invs = sorted(1.0 / v for v in ratios)
    if len(exps) * len(invs) > _NAIVE_GUARD:
        raise EnumerationGuardError("naive candidate grid exceeds the guard")

    candidates = sorted(
        ((e * ei, e, ei) for e in exps for ei in invs if ge(e * ei, 1.0)),
    )
    eps3 = eps / 3.0
    for _, e, ei in candidates:
        positive, match = decide_expansions(X, Y, e, ei, eps3, path=path)
        if positive:
            return (1.0 + eps3) * (1.0 + eps3) * e * ei, match
    raise RuntimeError("no positive candidate; the exact optimum should qualify")


def decide_distortion(
    X: FiniteMetric,
    Y: FiniteMetric,
    delta: float,
    eps: float,
    threads: int = 1,
    path: str | None = None,
) -> tuple[bool, Matching | None]:
    """Positive if dist(X, Y) <= delta; negative if dist >= (1+eps)*delta.

    Probes every (candidate length, pattern pair) combination with the
    expansion decision at slack eps/6, stopping at the first positive.
    """
    if delta < 1.0:
        raise ValueError("distortion threshold must be at least 1")
    _check_eps(eps)
    eps6 = eps / 6.0
    lengths = candidate_lengths(Y, eps6)
    jobs = []
    for length in lengths:
        for i in range(X.size):
            for j in range(i + 1, X.size):
                dx = X.d(i, j)
                e = (1.0 + eps6) * length / dx
                e_inv = (1.0 + eps6) * delta * dx / length
                if lt(e * e_inv, 1.0):
                    continue
                jobs.append((e, e_inv))

    if threads <= 1:
        for e, e_inv in jobs:
            positive, match = decide_expansions(X, Y, e, e_inv, eps6, path=path)
            if positive:
                return True, match
        return False, None

    with ThreadPoolExecutor(max_workers=threads) as pool:
        chunk = max(1, 4 * threads)
        for start in range(0, len(jobs), chunk):
            batch = jobs[start : start + chunk]
            results = list(
                pool.map(lambda je: decide_expansions(X, Y, je[0], je[1], eps6, path=path), batch)
            )
            for positive, match in results:
                if positive:
                    return True, match
    return False, None


def min_distortion(
    X: FiniteMetric,
    Y: FiniteMetric,
    eps: float,
    threads: int = 1,
    path: str | None = None,
) -> tuple[float, Matching]:
    """(1+eps)-approximate minimum distortion via exponential + binary search.

    Doubles delta until the decision turns positive, then binary-searches
    (geometrically) down to relative width eps/4; the last positive delta,
    inflated by the decision slack, satisfies
    dist(X, Y) <= result <= (1+eps)*dist(X, Y).
    """
    if X.size < 2:
        raise ValueError("minimum distortion needs at least two pattern points")
    if X.size > Y.size:
        raise ValueError("pattern larger than space")
    _check_eps(eps)
    eps4 = eps / 4.0

    delta = 1.0
    positive, match = decide_distortion(X, Y, delta, eps4, threads=threads, path=path)
    if positive:
        return (1.0 + eps4) * delta, match
    lo = delta
    for _ in range(200):
        delta *= 2.0
        positive, match = decide_distortion(X, Y, delta, eps4, threads=threads, path=path)
        if positive:
            break
        lo = delta
    else:
        raise RuntimeError("exponential search failed to bracket the distortion")
    hi, cert = delta, match

    while hi > lo * (1.0 + eps4):
        mid = math.sqrt(lo * hi)
        positive, match = decide_distortion(X, Y, mid, eps4, threads=threads, path=path)
        if positive:
            hi, cert = mid, match
        else:
            lo = mid
    return (1.0 + eps4) * hi, cert
