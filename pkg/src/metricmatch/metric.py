"""Finite metric spaces, matchings, and distortion arithmetic.

A :class:`FiniteMetric` is either an explicit distance matrix or a set of
Euclidean coordinates; all other modules consume it through the same small
oracle surface (``d``, ``row``, ``diam``, ...).  Points are identified by
0-based index everywhere.

All boundary comparisons in the package go through the tolerance helpers
defined here (relative ``TAU``, absolute floor ``ABS``) so that every code
path — including the compiled kernels — resolves ties identically.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TAU",
    "ABS",
    "tol_term",
    "le",
    "ge",
    "lt",
    "FiniteMetric",
    "Matching",
    "Scale",
    "ValidationIssue",
    "ValidationReport",
    "validate_metric",
    "matching_distance",
    "expansion",
    "distortion",
    "verify_matching",
    "rescale",
    "load_metric",
    "metric_to_json",
]

# Relative comparison tolerance; absolute floor guards comparisons near zero.
TAU = 1e-9
ABS = 1e-12


def tol_term(a: float, b: float) -> float:
    return max(TAU * max(abs(a), abs(b)), ABS)


def le(a: float, b: float) -> bool:
    """a <= b up to tolerance."""
    return a <= b + tol_term(a, b)


def ge(a: float, b: float) -> bool:
    """a >= b up to tolerance."""
    return b <= a + tol_term(a, b)


def lt(a: float, b: float) -> bool:
    """a < b by more than the tolerance margin."""
    return a < b - tol_term(a, b)


@dataclass(frozen=True, slots=True)
class Scale:
    """A power-of-two radius 2**exponent, kept as an exact integer exponent."""

    exponent: int

    @property
    def value(self) -> float:
        return math.ldexp(1.0, self.exponent)

    def __mul__(self, k: int) -> "Scale":
        # Only power-of-two multiples keep the representation exact.
        if k <= 0 or k & (k - 1):
            raise ValueError("scale can only be multiplied by a positive power of two")
        return Scale(self.exponent + k.bit_length() - 1)

    def __lt__(self, other: "Scale") -> bool:
        return self.exponent < other.exponent

    def __le__(self, other: "Scale") -> bool:
        return self.exponent <= other.exponent


class FiniteMetric:
    """A finite point set with a symmetric positive distance oracle.

    ``form`` is ``"matrix"`` (explicit n x n table) or ``"euclidean"``
    (n x dim coordinates, distances are L2).  Instances are immutable after
    construction and safe for concurrent readers.
    """

    __slots__ = ("form", "size", "_m", "_pts", "_pt_rows", "dim")

    def __init__(self, form: str, data: np.ndarray):
        if form not in ("matrix", "euclidean"):
            raise ValueError(f"unknown metric form {form!r}")
        self.form = form
        if form == "matrix":
            m = np.asarray(data, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("distance matrix must be square")
            m.flags.writeable = False
            self._m = m
            self._pts = None
            self._pt_rows = None
            self.size = m.shape[0]
            self.dim = 0
        else:
            p = np.asarray(data, dtype=np.float64)
            if p.ndim != 2 or p.shape[0] == 0:
                raise ValueError("euclidean points must be a nonempty 2d array")
            p.flags.writeable = False
            self._pts = p
            # Tuple rows keep the scalar distance path free of numpy overhead.
            self._pt_rows = [tuple(row) for row in p]
            self._m = None
            self.size = p.shape[0]
            self.dim = p.shape[1]

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_matrix(cls, matrix, validate: bool = True) -> "FiniteMetric":
        metric = cls("matrix", np.asarray(matrix, dtype=np.float64))
        if validate:
            report = validate_metric(metric)
            if not report.ok:
                raise ValueError(f"invalid distance matrix: {report.issues[0]}")
        return metric

    @classmethod
    def from_points(cls, points) -> "FiniteMetric":
        metric = cls("euclidean", np.asarray(points, dtype=np.float64))
        # Distinct indices at distance zero are rejected: the algorithms
        # require dmin > 0.
        if metric.size > 1:
            _, counts = np.unique(metric._pts, axis=0, return_counts=True)
            if np.any(counts > 1):
                raise ValueError("duplicate coordinates in euclidean input")
        return metric

    # -- distance oracle ---------------------------------------------------

    def d(self, i: int, j: int) -> float:
        """Distance between points i and j."""
        if not (0 <= i < self.size and 0 <= j < self.size):
            raise IndexError(f"point index out of range: ({i}, {j})")
        if self.form == "matrix":
            return float(self._m[i, j])
        a = self._pt_rows[i]
        b = self._pt_rows[j]
        s = 0.0
        for x, y in zip(a, b):
            t = x - y
            s += t * t
        return math.sqrt(s)

    def row(self, i: int) -> np.ndarray:
        """Distances from point i to all points, as a vector."""
        if self.form == "matrix":
            return self._m[i]
        diff = self._pts - self._pts[i]
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def matrix(self) -> np.ndarray:
        """Full pairwise distance table (quadratic; intended for small n)."""
        if self.form == "matrix":
            return self._m
        diff = self._pts[:, None, :] - self._pts[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    @property
    def points(self) -> np.ndarray:
        if self.form != "euclidean":
            raise ValueError("metric has no coordinates")
        return self._pts

    def dist_to_coords(self, q, i: int) -> float:
        """Distance from an external coordinate tuple to point i (euclidean only)."""
        a = self._pt_rows[i]
        s = 0.0
        for x, y in zip(q, a):
            t = x - y
            s += t * t
        return math.sqrt(s)

    # -- aggregates --------------------------------------------------------

    def _subset(self, subset) -> np.ndarray:
        idx = np.arange(self.size) if subset is None else np.asarray(sorted(subset), dtype=np.int64)
        if idx.size == 0:
            raise ValueError("empty subset")
        return idx

    def diam(self, subset: Iterable[int] | None = None) -> float:
        idx = self._subset(subset)
        if idx.size == 1:
            return 0.0
        best = 0.0
        for a in idx:
            best = max(best, float(self.row(int(a))[idx].max()))
        return best

    def dmin(self, subset: Iterable[int] | None = None) -> float:
        idx = self._subset(subset)
        if idx.size < 2:
            raise ValueError("dmin needs at least two points")
        if subset is None and self.form == "euclidean" and self.size > 2048:
            from scipy.spatial import cKDTree

            dists, _ = cKDTree(self._pts).query(self._pts, k=2)
            return float(dists[:, 1].min())
        best = math.inf
        for pos, a in enumerate(idx[:-1]):
            r = self.row(int(a))[idx[pos + 1 :]]
            best = min(best, float(r.min()))
        return best

    def spread(self, subset: Iterable[int] | None = None) -> float:
        return self.diam(subset) / self.dmin(subset)


@dataclass(frozen=True, slots=True)
class Matching:
    """Injective assignment pattern-index -> target index, in pattern order."""

    targets: tuple[int, ...]

    def __post_init__(self):
        if len(self.targets) == 0:
            raise ValueError("empty matching")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"matching is not injective: {self.targets}")

    def __len__(self) -> int:
        return len(self.targets)

    def __iter__(self):
        return iter(self.targets)


def _targets(sigma) -> tuple[int, ...]:
    if isinstance(sigma, Matching):
        return sigma.targets
    return tuple(int(t) for t in sigma)


# -- validation -------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ValidationIssue:
    kind: str  # "diagonal", "symmetry", "positivity", "triangle", "duplicate"
    witness: tuple[int, ...]
    detail: str


@dataclass(slots=True)
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


def validate_metric(metric: FiniteMetric, max_issues: int = 16) -> ValidationReport:
    """Check symmetry, positivity and the triangle inequality.

    Violations are reported with witnessing index tuples; an empty report
    means the metric is valid.  Euclidean metrics are valid by construction
    and only need the duplicate-point check.
    """
    report = ValidationReport()
    n = metric.size
    if metric.form == "euclidean":
        seen: dict[bytes, int] = {}
        for i in range(n):
            key = metric._pts[i].tobytes()
            if key in seen:
                report.issues.append(
                    ValidationIssue("duplicate", (seen[key], i), "identical coordinates")
                )
                if len(report.issues) >= max_issues:
                    return report
            else:
                seen[key] = i
        return report

    m = metric._m
    for i in range(n):
        if m[i, i] != 0.0:
            report.issues.append(ValidationIssue("diagonal", (i,), f"d({i},{i}) = {m[i, i]}"))
            if len(report.issues) >= max_issues:
                return report
    asym = np.argwhere(~np.isclose(m, m.T, rtol=TAU, atol=ABS))
    for i, j in asym:
        if i < j:
            report.issues.append(
                ValidationIssue("symmetry", (int(i), int(j)), f"{m[i, j]} != {m[j, i]}")
            )
            if len(report.issues) >= max_issues:
                return report
    offdiag = m + np.diag(np.full(n, np.inf))
    nonpos = np.argwhere(offdiag <= 0)
    for i, j in nonpos:
        if i < j:
            report.issues.append(
                ValidationIssue("positivity", (int(i), int(j)), f"d = {m[i, j]}")
            )
            if len(report.issues) >= max_issues:
                return report

    from . import _kernels

    triples = _kernels.triangle_violations(m, TAU, ABS, max_issues - len(report.issues))
    for i, j, l in triples:
        report.issues.append(
            ValidationIssue(
                "triangle",
                (int(i), int(j), int(l)),
                f"d({i},{j}) = {m[i, j]} > {m[i, l]} + {m[l, j]}",
            )
        )
    return report


# -- matching arithmetic ------------------------------------------------------


def matching_distance(a, b, Y: FiniteMetric) -> float:
    """Product (max) metric between two equal-length matchings into Y."""
    ta, tb = _targets(a), _targets(b)
    if len(ta) != len(tb):
        raise ValueError(f"matching length mismatch: {len(ta)} != {len(tb)}")
    best = 0.0
    for u, v in zip(ta, tb):
        dv = Y.d(u, v)
        if dv > best:
            best = dv
    return best


def expansion(sigma, X: FiniteMetric, Y: FiniteMetric) -> float:
    """Max pairwise stretch of the forward map."""
    t = _targets(sigma)
    k = len(t)
    if k < 2:
        raise ValueError("expansion needs at least two pattern points")
    best = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            best = max(best, Y.d(t[i], t[j]) / X.d(i, j))
    return best


def _inverse_expansion(sigma, X: FiniteMetric, Y: FiniteMetric) -> float:
    t = _targets(sigma)
    k = len(t)
    best = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            best = max(best, X.d(i, j) / Y.d(t[i], t[j]))
    return best


def distortion(sigma, X: FiniteMetric, Y: FiniteMetric) -> float:
    """expansion(sigma) * expansion(sigma^-1)."""
    return expansion(sigma, X, Y) * _inverse_expansion(sigma, X, Y)


def verify_matching(sigma, X: FiniteMetric, Y: FiniteMetric, rho: float) -> bool:
    """True iff every pair satisfies d_X/rho <= d_Y <= rho*d_X up to TAU."""
    if rho < 1.0:
        raise ValueError("rho must be at least 1")
    t = _targets(sigma)
    if len(set(t)) != len(t):
        return False
    k = len(t)
    for i in range(k):
        for j in range(i + 1, k):
            dx = X.d(i, j)
            dy = Y.d(t[i], t[j])
            if not le(dy, rho * dx) or not ge(dy, dx / rho):
                return False
    return True


def rescale(metric: FiniteMetric, factor: float) -> FiniteMetric:
    """New metric with every distance multiplied by factor > 0."""
    if not factor > 0:
        raise ValueError("rescale factor must be positive")
    if metric.form == "matrix":
        return FiniteMetric("matrix", metric._m * factor)
    return FiniteMetric("euclidean", metric._pts * factor)


# -- JSON wire format ---------------------------------------------------------
#
#   {"kind": "matrix", "n": N, "d": [[...], ...]}
#   {"kind": "euclidean", "dim": D, "points": [[...], ...]}


def load_metric(obj, validate: bool = True) -> FiniteMetric:
    """Build a FiniteMetric from a parsed JSON object, a JSON string, or a path."""
    if isinstance(obj, (str, bytes)):
        text = str(obj)
        if text.lstrip().startswith("{"):
            obj = json.loads(text)
        else:
            with open(text) as fh:
                obj = json.load(fh)
    kind = obj.get("kind")
    if kind == "matrix":
        d = np.asarray(obj["d"], dtype=np.float64)
        if "n" in obj and d.shape != (obj["n"], obj["n"]):
            raise ValueError("matrix shape does not match declared n")
        return FiniteMetric.from_matrix(d, validate=validate)
    if kind == "euclidean":
        pts = np.asarray(obj["points"], dtype=np.float64)
        if "dim" in obj and (pts.ndim != 2 or pts.shape[1] != obj["dim"]):
            raise ValueError("point dimension does not match declared dim")
        return FiniteMetric.from_points(pts)
    raise ValueError(f"unknown metric kind {kind!r}")


def metric_to_json(metric: FiniteMetric) -> dict:
    if metric.form == "matrix":
        return {"kind": "matrix", "n": metric.size, "d": metric._m.tolist()}
    return {"kind": "euclidean", "dim": metric.dim, "points": metric._pts.tolist()}
