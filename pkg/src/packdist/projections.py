"""Coordinate projections, the max-projection inequality, projection identities and fiber covers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .covering import (CoveringProfile, PointCloud, ProfileEntry, dimension_slope, grid_profile,
                       qadic_scales)
from .digitsets import DigitFractal
from .norms import DomainError, NormSpec, PolyhedralNorm, cone_contains
from .rational import format_fraction, is_rational_vector, parse_fraction, solve_rational


class ProjectionError(ValueError):
    pass


def coordinate_project(cloud: PointCloud, indices: Sequence[int]) -> PointCloud:
    """Keep coordinates ``indices`` (0-based, strictly increasing)."""
    idx = list(indices)
    if not idx:
        raise ProjectionError("need at least one index")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ProjectionError(f"indices {idx} must be strictly increasing")
    if idx[0] < 0 or idx[-1] >= cloud.dim:
        raise ProjectionError(f"indices {idx} out of range for dimension {cloud.dim}")
    return PointCloud(cloud.points[:, idx], cloud.denominator)


@dataclass(frozen=True)
class JarvenpaaReport:
    n: int
    d: int
    set_slope: object
    subset_slopes: dict
    best_subset: tuple
    margin: object
    tol: float
    passed: bool
    scales: str

    def to_dict(self) -> dict:
        def fmt(v):
            return format_fraction(v) if isinstance(v, Fraction) else float(v)
        return {"n": self.n, "d": self.d, "set_slope": fmt(self.set_slope),
                "subset_slopes": {",".join(map(str, k)): fmt(v) for k, v in self.subset_slopes.items()},
                "best_subset": list(self.best_subset), "margin": fmt(self.margin),
                "tol": self.tol, "passed": self.passed, "scale_sequence": self.scales}


def _fractal_profile(fractal: DigitFractal, dim: int, levels: Sequence[int]) -> CoveringProfile:
    q = fractal.q
    entries = tuple(ProfileEntry(Fraction(1, q**m), q ** (dim * fractal.schedule.active_count(m)), "exact")
                    for m in sorted(set(levels)))
    return CoveringProfile(entries, base=q, anchor=(Fraction(0),) * dim)


def jarvenpaa_check(source: PointCloud | DigitFractal, n: int, *, scales: Sequence | None = None,
                    window: tuple | None = None, mode: str = "regression", tol: float = 0.05) -> JarvenpaaReport:
    """Compare (n/d) slope(E) with the best slope over all n-coordinate projections.

    A DigitFractal source E = F^d uses exact counts at its checkpoints (margin is an exact
    rational); a PointCloud uses grid counts at ``scales`` (default 2^-1 .. 2^-10).
    """
    if isinstance(source, DigitFractal):
        d = source.ambient_dim
        levels = [0] + [M for M in source.schedule.checkpoints if M <= source.depth]
        full = _fractal_profile(source, d, levels)
        proj = lambda sub: _fractal_profile(source, len(sub), levels)  # noqa: E731
        label = "checkpoint M_k"
    else:
        d = source.dim
        scales = list(scales) if scales is not None else qadic_scales(2, range(1, 11))
        base = 2 if scales == qadic_scales(2, range(1, len(scales) + 1)) else None
        full = grid_profile(source, scales, base)
        proj = lambda sub: grid_profile(coordinate_project(source, sub), scales, base)  # noqa: E731
        label = "all-dyadic" if base == 2 else "custom"
    if not 1 <= n <= d:
        raise ProjectionError(f"n={n} must lie in 1..{d}")
    set_slope = dimension_slope(full, window, mode, label).slope
    slopes = {sub: dimension_slope(proj(sub), window, mode, label).slope
              for sub in itertools.combinations(range(d), n)}
    best = max(slopes, key=lambda s: slopes[s])
    target = Fraction(n, d) * set_slope if isinstance(set_slope, Fraction) else n / d * set_slope
    margin = slopes[best] - target
    return JarvenpaaReport(n, d, set_slope, slopes, best, margin, tol, bool(margin >= -tol), label)


@dataclass(frozen=True)
class IdentityReport:
    passed: bool
    pairs_checked: int
    offending_point: tuple | None = None
    offending_pair: tuple | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        def fmt(p):
            return None if p is None else [format_fraction(c) if isinstance(c, Fraction) else c for c in p]
        return {"passed": self.passed, "pairs_checked": self.pairs_checked,
                "offending_point": fmt(self.offending_point),
                "offending_pair": None if self.offending_pair is None else [fmt(p) for p in self.offending_pair],
                "detail": self.detail}


def _orthogonal_projector(basis: Sequence[Sequence[Fraction]]):
    """Exact P_V for V = span(basis): u -> W (W^T W)^{-1} W^T u."""
    W = [list(map(Fraction, w)) for w in basis]
    gram = [[sum(a * b for a, b in zip(u, v)) for v in W] for u in W]

    def project(u):
        rhs = [sum(a * b for a, b in zip(w, u)) for w in W]
        coef = solve_rational(gram, rhs)
        return [sum(c * w[i] for c, w in zip(coef, W)) for i in range(len(u))]

    return project


def projection_identity_check(points: Sequence[Sequence], norm: PolyhedralNorm, facet_indices: Sequence[int],
                              apexes: Sequence[Sequence], *, max_pairs: int | None = None) -> IdentityReport:
    """Check ||x - y|| = ||P_V (x - y)|| exactly, V spanned by the chosen facet vectors.

    Every point must lie in each cone C(apexes[j], v_{facet_indices[j]}); the first point
    outside is reported without checking pairs.
    """
    pts = [tuple(parse_fraction(c) for c in p) for p in points]
    apx = [tuple(parse_fraction(c) for c in a) for a in apexes]
    if len(apx) != len(facet_indices):
        raise ProjectionError("need one apex per facet index")
    for p in pts:
        for a, i in zip(apx, facet_indices):
            if not cone_contains(norm, a, i, p):
                return IdentityReport(False, 0, offending_point=p,
                                      detail=f"point lies outside the cone of facet {i} at apex {a}")
    project = _orthogonal_projector([norm.facets[i] for i in facet_indices])
    checked = 0
    for x, y in itertools.combinations(pts, 2):
        diff = [a - b for a, b in zip(x, y)]
        if norm(diff) != norm(project(diff)):
            return IdentityReport(False, checked + 1, offending_pair=(x, y),
                                  detail=f"{format_fraction(norm(diff))} != {format_fraction(norm(project(diff)))}")
        checked += 1
        if max_pairs is not None and checked >= max_pairs:
            break
    return IdentityReport(True, checked)


@dataclass(frozen=True, eq=False)
class ProjectionFamily:
    """Pinned distance maps p_i(x) = ||x - z_i|| for pins z_1..z_k."""

    pins: tuple
    norm: NormSpec
    allow_pins_in_cloud: bool = False

    def __post_init__(self):
        pins = tuple(tuple(float(c) for c in z) for z in self.pins)
        if not pins:
            raise ProjectionError("need at least one pin")
        if len(set(pins)) != len(pins):
            raise ProjectionError("pins must be pairwise distinct")
        if any(len(z) != self.norm.dim for z in pins):
            raise ProjectionError("pin dimension does not match the norm")
        object.__setattr__(self, "pins", pins)

    @property
    def k(self) -> int:
        return len(self.pins)

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([self.norm.evaluate_many(X - np.asarray(z)) for z in self.pins])

    def check_cloud(self, cloud: PointCloud) -> None:
        if self.allow_pins_in_cloud:
            return
        pts = cloud.as_float()
        tree = cKDTree(pts)
        for z in self.pins:
            if tree.query_ball_point(z, 0.0):
                raise ProjectionError(f"pin {z} belongs to the cloud; set allow_pins_in_cloud to flag it")


@dataclass(frozen=True, eq=False)
class FiberCoverReport:
    delta: float
    xi: tuple
    centers: np.ndarray
    m: int
    fiber_size: int
    certified: bool

    def to_dict(self) -> dict:
        return {"delta": self.delta, "xi": list(self.xi), "m": self.m, "fiber_size": self.fiber_size,
                "certified": self.certified, "centers": self.centers.tolist()}


class FiberIndex:
    """Values of the family on a cloud, sorted by the first map for band queries."""

    def __init__(self, family: ProjectionFamily, cloud: PointCloud):
        self.points = cloud.as_float()
        self.values = family.evaluate(self.points)
        self.order = np.argsort(self.values[:, 0], kind="stable")
        self.first = self.values[self.order, 0]

    def fiber(self, xi, delta: float) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        lo = np.searchsorted(self.first, xi[0] - delta, side="right")
        hi = np.searchsorted(self.first, xi[0] + delta, side="left")
        cand = np.sort(self.order[lo:hi])
        v = self.values[cand]
        keep = np.all(np.abs(v - xi) < delta, axis=1)
        return cand[keep]


def _greedy_cover(pts: np.ndarray, delta: float) -> np.ndarray:
    if len(pts) == 0:
        return np.zeros((0, pts.shape[1]))
    tree = cKDTree(pts)
    covered = np.zeros(len(pts), dtype=bool)
    centers = []
    for i in range(len(pts)):
        if covered[i]:
            continue
        centers.append(i)
        covered[tree.query_ball_point(pts[i], delta)] = True
    return pts[centers]


def recheck_cover(points: np.ndarray, centers: np.ndarray, delta: float) -> bool:
    """Independent pass: every point is within delta of some center."""
    if len(points) == 0:
        return True
    if len(centers) == 0:
        return False
    dist, _ = cKDTree(centers).query(points, k=1)
    return bool(np.all(dist <= delta * (1 + 1e-12)))


def fiber_cover(family: ProjectionFamily, cloud: PointCloud, xi, delta: float, *, index: "FiberIndex | None" = None
                ) -> FiberCoverReport:
    """Greedy Euclidean delta-ball cover of {x in cloud : |p_i(x) - xi_i| < delta for all i}."""
    if not delta > 0:
        raise ProjectionError("delta must be positive")
    xi = tuple(float(c) for c in xi)
    if len(xi) != family.k:
        raise ProjectionError(f"xi needs {family.k} components")
    index = index if index is not None else FiberIndex(family, cloud)
    members = index.fiber(xi, delta)
    pts = index.points[members]
    centers = _greedy_cover(pts, delta)
    # recompute the fiber by a full scan for the certificate
    full = np.all(np.abs(index.values - np.asarray(xi)) < delta, axis=1)
    ok = recheck_cover(index.points[full], centers, delta)
    return FiberCoverReport(float(delta), xi, centers, len(centers), len(pts), ok)


@dataclass(frozen=True)
class TransversalityScan:
    exponent: float
    residual: float
    deltas: tuple
    max_m: tuple
    worst_xi: tuple
    n_xi: int
    all_certified: bool

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "residual": self.residual, "deltas": list(self.deltas),
                "max_m": list(self.max_m), "worst_xi": [list(x) for x in self.worst_xi],
                "n_xi": self.n_xi, "all_certified": self.all_certified}


def xi_samples(family: ProjectionFamily, cloud: PointCloud, n: int, seed: int) -> np.ndarray:
    """Images of a seeded subsample of the cloud plus the images of its bounding-box corners."""
    pts = cloud.as_float()
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    take = rng.choice(len(pts), size=min(n, len(pts)), replace=False)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    return np.vstack([family.evaluate(pts[np.sort(take)]), family.evaluate(corners)])


def weak_transversality_scan(family: ProjectionFamily, cloud: PointCloud, deltas: Sequence[float],
                             xis: np.ndarray | None = None, *, n_xi: int = 64, seed: int = 0,
                             recheck: bool = False) -> TransversalityScan:
    """Fit log max_xi m(delta) against -log delta; an exponent near 0 indicates weak transversality.

    ``recheck`` runs the independent full-scan certificate for every cover (slower).
    """
    deltas = sorted((float(d) for d in deltas), reverse=True)
    if len(deltas) < 3:
        raise ProjectionError("need at least three scales")
    family.check_cloud(cloud)
    index = FiberIndex(family, cloud)
    xis = xi_samples(family, cloud, n_xi, seed) if xis is None else np.atleast_2d(np.asarray(xis, dtype=float))
    max_m, worst, certified = [], [], True
    for dl in deltas:
        best, arg = 0, None
        for xi in xis:
            members = index.fiber(xi, dl)
            if len(members) <= best:
                continue  # a cover never needs more balls than points
            centers = _greedy_cover(index.points[members], dl)
            if recheck:
                certified &= recheck_cover(index.points[members], centers, dl)
            if len(centers) > best:
                best, arg = len(centers), tuple(float(c) for c in xi)
        max_m.append(best)
        worst.append(arg)
    if min(max_m) < 1:
        raise ProjectionError("empty fibers at some scale; the fit is degenerate")
    x = -np.log(np.asarray(deltas))
    y = np.log(np.asarray(max_m, dtype=float))
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (icpt + slope * x))))
    return TransversalityScan(float(slope), resid, tuple(deltas), tuple(max_m), tuple(worst), len(xis), certified)
