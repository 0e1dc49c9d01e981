"""Polyhedral and weighted l^p norms: evaluation, gradients, cones, duality.

A polyhedral norm is ``max_i |<x, v_i>|`` over rational facet functionals; a smooth
norm is a weighted l^p norm ``(sum_i w_i |x_i|^p)^(1/p)`` with ``1 < p < inf``.
Rational inputs to polyhedral norms are evaluated exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from math import lcm
from typing import Sequence, Union

import numpy as np
from scipy.stats import qmc
from scipy.special import ndtri

from .rational import format_fraction, is_rational_vector, parse_fraction, rational_rank


class NormError(ValueError):
    """Invalid norm specification."""


class DomainError(ValueError):
    """Operation undefined at the given point (origin, cone boundary, apex)."""


@dataclass(frozen=True)
class PolyhedralNorm:
    """``||x|| = max_i |<x, v_i>|`` for rational facet functionals spanning R^d."""

    facets: tuple

    def __post_init__(self):
        try:
            facets = tuple(tuple(parse_fraction(c) for c in v) for v in self.facets)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise NormError(f"bad facet entry: {exc}") from None
        if not facets:
            raise NormError("at least one facet is required")
        d = len(facets[0])
        if d == 0 or any(len(v) != d for v in facets):
            raise NormError("facets must be nonempty vectors of equal length")
        if len(facets) < d or rational_rank(facets) < d:
            raise NormError("facets do not span R^d; this would only be a seminorm")
        object.__setattr__(self, "facets", facets)

    @property
    def dim(self) -> int:
        return len(self.facets[0])

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @cached_property
    def common_denominator(self) -> int:
        return lcm(*(c.denominator for v in self.facets for c in v))

    @cached_property
    def numerators(self) -> np.ndarray:
        """Integer facet matrix P with v_i = P[i] / common_denominator."""
        q = self.common_denominator
        rows = [[int(c * q) for c in v] for v in self.facets]
        return np.array(rows, dtype=object if max(abs(x) for r in rows for x in r) > 2**31 else np.int64)

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.array([[float(c) for c in v] for v in self.facets])

    def __call__(self, x):
        if is_rational_vector(x):
            return max(abs(sum((c * xi for c, xi in zip(v, x)), Fraction(0))) for v in self.facets)
        x = np.asarray(x, dtype=float)
        return float(np.max(np.abs(self.matrix @ x)))

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.max(np.abs(X @ self.matrix.T), axis=1)

    def evaluate_exact_many(self, X: np.ndarray) -> np.ndarray:
        """Integer numerators of the norm of integer rows X, over ``common_denominator``."""
        P = self.numerators
        bound = _abs_max(X) * int(np.max(np.abs(P.astype(object)).sum(axis=1)))
        if X.dtype != object and bound < 2**62:
            return np.max(np.abs(X.astype(np.int64) @ P.astype(np.int64).T), axis=1)
        vals = np.abs(X.astype(object) @ P.astype(object).T)
        return vals.max(axis=1)

    def facet_values(self, x) -> list:
        if is_rational_vector(x):
            return [abs(sum((c * xi for c, xi in zip(v, x)), Fraction(0))) for v in self.facets]
        return list(np.abs(self.matrix @ np.asarray(x, dtype=float)))

    def to_dict(self) -> dict:
        return {"polyhedral": {"q": self.common_denominator,
                               "facets": [[format_fraction(c) for c in v] for v in self.facets]}}


@dataclass(frozen=True)
class LpNorm:
    """Weighted l^p norm ``(sum_i w_i |x_i|^p)^(1/p)``."""

    p: float
    weights: tuple

    def __post_init__(self):
        p = float(self.p)
        if not (1.0 < p < math.inf):
            raise NormError(f"exponent p must lie in (1, inf), got {self.p}")
        w = tuple(float(c) for c in self.weights)
        if not w or any(not (c > 0 and math.isfinite(c)) for c in w):
            raise NormError("weights must be positive and finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return len(self.weights)

    @property
    def conjugate_exponent(self) -> float:
        return self.p / (self.p - 1.0)

    @cached_property
    def _w(self) -> np.ndarray:
        return np.array(self.weights)

    def __call__(self, x) -> float:
        return float(self.evaluate_many(np.asarray(x, dtype=float)[None, :])[0])

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        a = np.abs(X)
        # rescale by the row max to keep |x|^p in range
        s = a.max(axis=1)
        s_safe = np.where(s > 0, s, 1.0)
        r = (self._w * (a / s_safe[:, None]) ** self.p).sum(axis=1) ** (1.0 / self.p)
        return np.where(s > 0, r * s, 0.0)

    def gradient_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = self.evaluate_many(X)
        if np.any(n == 0):
            raise DomainError("the norm is not differentiable at the origin")
        u = X / n[:, None]
        return self._w * np.sign(u) * np.abs(u) ** (self.p - 1.0)

    def gradient(self, x) -> np.ndarray:
        return self.gradient_many(np.asarray(x, dtype=float)[None, :])[0]

    def dual_many(self, F) -> np.ndarray:
        """Dual norm ``(sum_i w_i^(-p'/p) |f_i|^p')^(1/p')``."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        pc = self.conjugate_exponent
        dual_w = self._w ** (-pc / self.p)
        a = np.abs(F)
        s = a.max(axis=1)
        s_safe = np.where(s > 0, s, 1.0)
        r = (dual_w * (a / s_safe[:, None]) ** pc).sum(axis=1) ** (1.0 / pc)
        return np.where(s > 0, r * s, 0.0)

    def dual(self, f) -> float:
        return float(self.dual_many(np.asarray(f, dtype=float)[None, :])[0])

    def to_dict(self) -> dict:
        return {"lp": {"p": self.p, "weights": list(self.weights)}}


NormSpec = Union[PolyhedralNorm, LpNorm]


def euclidean(d: int) -> LpNorm:
    return LpNorm(2.0, (1.0,) * d)


def lp(p: float, d: int) -> LpNorm:
    return LpNorm(p, (1.0,) * d)


def linf(d: int, scale=1) -> PolyhedralNorm:
    s = parse_fraction(scale)
    return PolyhedralNorm(tuple(tuple(s if i == j else Fraction(0) for j in range(d)) for i in range(d)))


def hexagonal() -> PolyhedralNorm:
    """Planar norm with a hexagonal unit ball: max(|x|, |y|, 2/3 |x + y|)."""
    return PolyhedralNorm(((1, 0), (0, 1), (Fraction(2, 3), Fraction(2, 3))))


def evaluate(norm: NormSpec, x):
    """Norm of a single vector (exact Fraction for rational input to a polyhedral norm)."""
    return norm(x)


def evaluate_many(norm: NormSpec, X) -> np.ndarray:
    return norm.evaluate_many(X)


def _abs_max(X: np.ndarray) -> int:
    if X.size == 0:
        return 0
    if X.dtype == object:
        return int(max(abs(v) for v in X.ravel()))
    return int(np.max(np.abs(X.astype(np.int64))))


def _polyhedral_gradient(norm: PolyhedralNorm, x, label: str = "x"):
    vals = norm.facet_values(x)
    exact = is_rational_vector(x)
    top = max(vals)
    if top == 0:
        raise DomainError(f"gradient undefined at the origin ({label})")
    if exact:
        winners = [i for i, v in enumerate(vals) if v == top]
    else:
        winners = [i for i, v in enumerate(vals) if v >= top * (1 - 1e-12)]
    if len(winners) > 1:
        raise DomainError(f"{label} lies on a cone boundary (facets {winners} tie)")
    i = winners[0]
    inner = sum((c * xi for c, xi in zip(norm.facets[i], x)), Fraction(0)) if exact \
        else float(norm.matrix[i] @ np.asarray(x, dtype=float))
    sign = 1 if inner > 0 else -1
    if exact:
        return tuple(sign * c for c in norm.facets[i])
    return sign * norm.matrix[i]


def gradient(norm: NormSpec, x):
    """Gradient of the norm at x != 0.

    For polyhedral norms this is the signed maximizing facet at a cone interior; ties
    between facets raise DomainError rather than returning a subdifferential.
    """
    if isinstance(norm, PolyhedralNorm):
        return _polyhedral_gradient(norm, x)
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise DomainError("the norm is not differentiable at the origin")
    return norm.gradient(x)


@dataclass(frozen=True)
class DualityReport:
    passed: bool
    pairing_residual: float
    norm_residual: float
    functional: tuple

    def to_dict(self) -> dict:
        return {"passed": self.passed, "pairing_residual": self.pairing_residual,
                "norm_residual": self.norm_residual, "functional": list(self.functional)}


def duality_check(norm: LpNorm, x, tol: float = 1e-9) -> DualityReport:
    """Check that f = ||x|| grad||x|| lies in the duality mapping J(x).

    Residuals are relative: |<f,x> - ||f||' ||x|||/||x||^2 and |(||f||' - ||x||)|/||x||.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise DomainError("duality check needs x != 0")
    nx = norm(x)
    f = nx * norm.gradient(x)
    fd = norm.dual(f)
    r1 = abs(float(f @ x) - fd * nx) / nx**2
    r2 = abs(fd - nx) / nx
    return DualityReport(bool(r1 <= tol and r2 <= tol), r1, r2, tuple(float(c) for c in f))


def duality_residuals(norm: LpNorm, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized form of the duality_check residuals over rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    nx = norm.evaluate_many(X)
    F = nx[:, None] * norm.gradient_many(X)
    fd = norm.dual_many(F)
    r1 = np.abs(np.einsum("ij,ij->i", F, X) - fd * nx) / nx**2
    r2 = np.abs(fd - nx) / nx
    return r1, r2


def cone_contains(norm: PolyhedralNorm, apex, i: int, y) -> bool:
    """Whether y lies in the cone C(apex, v_i): the facet v_i attains ||apex - y||."""
    if not 0 <= i < norm.n_facets:
        raise IndexError(f"facet index {i} out of range 0..{norm.n_facets - 1}")
    diff = [a - b for a, b in zip(apex, y)]
    if is_rational_vector(apex) and is_rational_vector(y):
        vals = norm.facet_values(diff)
        return vals[i] == max(vals)
    vals = norm.facet_values(np.asarray(diff, dtype=float))
    top = max(vals)
    return bool(vals[i] >= top - 1e-12 * max(top, 1.0))


@dataclass(frozen=True)
class ConeSpec:
    """The cone X(a, V, s) = {x : |P_{V-perp}(x - a)| < s |x - a|} (Euclidean)."""

    apex: tuple
    basis: tuple
    aperture: float

    def __post_init__(self):
        a = tuple(float(c) for c in self.apex)
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if B.shape[1] != len(a):
            raise ValueError("basis vectors must live in the apex's space")
        if not np.allclose(B @ B.T, np.eye(B.shape[0]), atol=1e-12, rtol=0):
            raise ValueError("basis is not orthonormal to 1e-12")
        if not 0.0 < float(self.aperture) < 1.0:
            raise ValueError("aperture must lie in (0, 1)")
        object.__setattr__(self, "apex", a)
        object.__setattr__(self, "basis", tuple(tuple(r) for r in B.tolist()))
        object.__setattr__(self, "aperture", float(self.aperture))

    @classmethod
    def spanned_by(cls, apex, vectors, aperture: float) -> "ConeSpec":
        """Cone whose subspace is the span of (not necessarily orthonormal) vectors."""
        A = np.atleast_2d(np.asarray(vectors, dtype=float))
        q, _ = np.linalg.qr(A.T)
        return cls(tuple(apex), tuple(map(tuple, q.T)), aperture)


def cone_X_contains(cone: ConeSpec, x) -> bool:
    v = np.asarray(x, dtype=float) - np.asarray(cone.apex)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise DomainError("membership is undefined at the apex")
    B = np.asarray(cone.basis)
    perp = v - B.T @ (B @ v)
    return bool(np.linalg.norm(perp) < cone.aperture * nv)


def _sphere_directions(d: int, n: int, seed_dims: int = 0) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors (angles for d=2, Halton + Gaussian ppf else)."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        t = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.column_stack([np.cos(t), np.sin(t)])
    u = qmc.Halton(d=d, scramble=False).random(n + 1)[1:]
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1)[:, None]


@lru_cache(maxsize=64)
def direction_constant(norm: LpNorm, samples: int = 20000, safety: float = 0.9) -> float:
    """Lower bound for the cosine between z and grad||z|| over the sphere.

    Computed as ``safety * min cos`` over a dense deterministic sample, capped at 1/2.
    """
    Z = _sphere_directions(norm.dim, samples)
    G = norm.gradient_many(Z)
    cos = np.einsum("ij,ij->i", Z, G) / np.linalg.norm(G, axis=1)
    return float(min(0.5, safety * cos.min()))


def direction_aperture(norm: LpNorm) -> float:
    """eta = sqrt(1 - Lambda^2); z lies in X(0, span grad||z||, eta) for every z != 0."""
    lam = direction_constant(norm)
    return math.sqrt(1.0 - lam * lam)


def direction_cone(norm: LpNorm, z) -> ConeSpec:
    z = np.asarray(z, dtype=float)
    return ConeSpec.spanned_by(np.zeros_like(z), [norm.gradient(z)], direction_aperture(norm))


def transversality_volume(norm: NormSpec, x, pins) -> float:
    """k-volume of the parallelepiped spanned by grad ||x - z_i||, via the Gram determinant."""
    grads = []
    for j, z in enumerate(pins):
        diff = [a - b for a, b in zip(x, z)]
        if isinstance(norm, PolyhedralNorm):
            try:
                g = _polyhedral_gradient(norm, diff, label=f"x relative to pin {j}")
            except DomainError as exc:
                raise DomainError(f"gradient undefined for pin {j} {tuple(z)}: {exc}") from None
            grads.append([float(c) for c in g])
        else:
            diff = np.asarray(diff, dtype=float)
            if not np.any(diff):
                raise DomainError(f"gradient undefined for pin {j} {tuple(z)}: x coincides with it")
            grads.append(norm.gradient(diff))
    A = np.asarray(grads, dtype=float)
    det = float(np.linalg.det(A @ A.T))
    return math.sqrt(max(det, 0.0))


def geomlem_constant(volume: float, k: int) -> float:
    """Neighborhood constant C(L) = sqrt(k) / L used for fiber containment."""
    if volume <= 0:
        return math.inf
    return math.sqrt(k) / volume


@lru_cache(maxsize=32)
def _modulus_table(norm: LpNorm, budget: int) -> tuple[np.ndarray, np.ndarray]:
    d = norm.dim
    pts = qmc.Halton(d=2 * d + 2, scramble=False).random(budget + 1)[1:]
    pts = np.clip(pts, 1e-12, 1 - 1e-12)
    gx = ndtri(pts[:, :d])
    gw = ndtri(pts[:, d:2 * d])
    radius = 0.5 + 1.5 * pts[:, 2 * d]
    # steps log-uniform on [1e-8, 2]
    step = 10.0 ** (-8 + pts[:, 2 * d + 1] * (8 + math.log10(2.0)))
    X = radius[:, None] * gx / norm.evaluate_many(gx)[:, None]
    W = step[:, None] * gw / norm.evaluate_many(gw)[:, None]
    Y = X + W
    G = norm.gradient_many(X)
    gap = np.abs(np.einsum("ij,ij->i", G, X - Y)) - np.abs(norm.evaluate_many(X) - norm.evaluate_many(Y))
    order = np.argsort(step, kind="stable")
    return step[order], np.maximum.accumulate(np.maximum(gap[order], 0.0))


def modulus_h(norm: LpNorm, eps: float, budget: int = 20000) -> float:
    """Empirical h(eps): sup of |<grad||x||, x - y>| - | ||x|| - ||y|| | over ||x - y|| < eps.

    x ranges over a fixed Halton sample of the annulus 1/2 <= ||x|| <= 2 and y over
    displacements with log-uniform lengths; the running max makes h monotone in eps.
    """
    if eps <= 0:
        return 0.0
    steps, running = _modulus_table(norm, int(budget))
    k = int(np.searchsorted(steps, eps, side="left"))
    return 0.0 if k == 0 else float(running[k - 1])


def load_norm(source) -> NormSpec:
    """Build a norm from a JSON file path, JSON text, or an already-parsed dict."""
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            data = json.loads(text)
        else:
            with open(text, encoding="utf-8") as fh:
                data = json.load(fh)
    if "polyhedral" in data:
        entry = data["polyhedral"]
        norm = PolyhedralNorm(tuple(tuple(v) for v in entry["facets"]))
        q = entry.get("q")
        if q is not None and norm.common_denominator != 1 and int(q) % norm.common_denominator:
            raise NormError(f"declared q={q} is not a multiple of the facet denominator "
                            f"{norm.common_denominator}")
        return norm
    if "lp" in data:
        entry = data["lp"]
        return LpNorm(float(entry["p"]), tuple(entry["weights"]))
    raise NormError("norm document needs a 'polyhedral' or 'lp' key")


def dump_norm(norm: NormSpec) -> str:
    return json.dumps(norm.to_dict(), indent=2)


def norm_label(norm: NormSpec) -> str:
    if isinstance(norm, PolyhedralNorm):
        return f"polyhedral[{norm.n_facets} facets, q={norm.common_denominator}]"
    return f"l^{norm.p:g}"
