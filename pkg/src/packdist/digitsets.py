"""Block schedules and base-q digit-restricted Cantor sets with exact covering counts.

A schedule is a list of level blocks [m_k, M_k]; the set F keeps base-q digits free on
the union A of the blocks and forces them to 0 elsewhere. E = F^d is the d-fold product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .covering import PointCloud, _as_int_array
from .rational import digits, parse_fraction

ENUMERATION_CAP = 10**7


class ScheduleError(ValueError):
    pass


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True)
class BlockSchedule:
    blocks: tuple
    target_density: Fraction
    q: int = 2

    def __post_init__(self):
        blocks = tuple((int(m), int(M)) for m, M in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "target_density", parse_fraction(self.target_density))
        if int(self.q) < 2:
            raise ScheduleError("base q must be >= 2")
        object.__setattr__(self, "q", int(self.q))
        if not 0 <= self.target_density <= 1:
            raise ScheduleError("target density must lie in [0, 1]")
        prev = 0
        for k, (m, M) in enumerate(blocks, start=1):
            if m <= prev:
                raise ScheduleError(f"block {k} [{m}, {M}] does not start after level {prev}")
            if M - m < 2**k:
                raise ScheduleError(f"block {k} violates M_k - m_k >= 2^k")
            prev = M

    @property
    def K(self) -> int:
        return len(self.blocks)

    @property
    def checkpoints(self) -> list[int]:
        return [M for _, M in self.blocks]

    def active_count(self, n: int) -> int:
        """#(A ∩ [1, n])."""
        return sum(max(0, min(M, n) - m + 1) for m, M in self.blocks)

    def is_active(self, level: int) -> bool:
        return any(m <= level <= M for m, M in self.blocks)

    def active_levels(self, n: int) -> list[int]:
        return [lv for m, M in self.blocks for lv in range(m, min(M, n) + 1)]

    def to_text(self, header: Iterable[str] = ()) -> str:
        lines = [f"# {h}" for h in header]
        lines += [f"# q={self.q} target_density={self.target_density}"]
        lines += [f"{k} {m} {M}" for k, (m, M) in enumerate(self.blocks, start=1)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, q: int | None = None, target_density=None) -> "BlockSchedule":
        blocks, meta = [], {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        meta[key] = val
                continue
            k, m, M = (int(t) for t in line.split())
            if k != len(blocks) + 1:
                raise ScheduleError(f"block lines out of order at k={k}")
            blocks.append((m, M))
        q = q if q is not None else int(meta.get("q", 2))
        rho = target_density if target_density is not None else meta.get("target_density", "0")
        return cls(tuple(blocks), parse_fraction(rho), q)


def _as_density(rho) -> Fraction:
    if isinstance(rho, float):
        return Fraction(rho).limit_denominator(10**9)
    return parse_fraction(rho)


def schedule_for_density(rho, K: int, q: int = 2) -> BlockSchedule:
    """K blocks with M_k - m_k = 2^k whose checkpoint densities approach rho from below.

    For rho > 0, M_k is the smallest integer with #(A ∩ [1, M_k]) / M_k <= rho, subject
    to m_k > M_{k-1} (so rho = 1 gives abutting blocks starting at level 1).
    For rho = 0 the gap before block k is k 2^(k+3).
    """
    rho = _as_density(rho)
    if not 0 <= rho <= 1:
        raise ScheduleError(f"density must lie in [0, 1], got {rho}")
    if K < 1:
        raise ScheduleError("need at least one block")
    blocks, prev, active = [], 0, 0
    for k in range(1, K + 1):
        length = 2**k
        if rho == 0:
            m = prev + k * 2 ** (k + 3)
            M = m + length
        else:
            active_after = active + length + 1
            M = max(math.ceil(active_after / rho), prev + 1 + length)
            m = M - length
        blocks.append((m, M))
        active += length + 1
        prev = M
    sched = BlockSchedule(tuple(blocks), rho, q)
    for k, M in enumerate(sched.checkpoints, start=1):
        if rho > 0 and abs(density_profile(sched, M) - rho) > Fraction(2, k):
            raise ScheduleError(f"checkpoint {k} density misses the target by more than 2/{k}")
    return sched


def density_profile(schedule: BlockSchedule, N: int) -> Fraction:
    """#(A ∩ [1, N]) / N as an exact rational."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return Fraction(schedule.active_count(N), N)


@dataclass(frozen=True)
class DigitFractal:
    """Truncation of F (ambient_dim=1) or E = F^d at depth D."""

    schedule: BlockSchedule
    depth: int
    ambient_dim: int = 1

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.ambient_dim < 1:
            raise ValueError("ambient dimension must be >= 1")

    @property
    def q(self) -> int:
        return self.schedule.q

    def active_levels(self, depth: int | None = None) -> list[int]:
        return self.schedule.active_levels(self.depth if depth is None else depth)

    def point_count(self, depth: int | None = None) -> int:
        return self.q ** (self.ambient_dim * len(self.active_levels(depth)))


def exact_covering_count(fractal: DigitFractal, m: int) -> int:
    """Number of nonempty q-adic cells of side q^-m: q^(c #(A ∩ [1, m]))."""
    if not 0 <= m <= fractal.depth:
        raise ValueError(f"level {m} outside 0..{fractal.depth}")
    return fractal.q ** (fractal.ambient_dim * fractal.schedule.active_count(m))


def _coordinate_values(q: int, levels: list[int], depth: int) -> np.ndarray:
    """Sorted numerators (over q^depth) of all truncated points of F."""
    big = q**depth >= 2**62
    vals = np.zeros(1, dtype=object if big else np.int64)
    digits_ = np.arange(q, dtype=object if big else np.int64)
    for lv in levels:
        w = q ** (depth - lv)
        vals = (vals[:, None] + digits_[None, :] * w).ravel()
    return vals


def enumerate_points(fractal: DigitFractal, depth: int | None = None, cap: int = ENUMERATION_CAP) -> PointCloud:
    """Every truncated point, coordinates exact over q^depth (lexicographic order)."""
    D = fractal.depth if depth is None else depth
    levels = fractal.active_levels(D)
    total = fractal.q ** (fractal.ambient_dim * len(levels))
    if total > cap:
        raise EnumerationCapError(
            f"{total} points exceed the enumeration cap {cap}; lower the depth or use sample_points")
    vals = _coordinate_values(fractal.q, levels, D)
    c = fractal.ambient_dim
    if c == 1:
        pts = vals[:, None]
    else:
        grids = np.meshgrid(*([vals] * c), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    return PointCloud(pts, fractal.q**D)


def sample_points(fractal: DigitFractal, n: int, seed: int, depth: int | None = None) -> PointCloud:
    """n points with active digits drawn from a Philox (counter-based) stream keyed by seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    D = fractal.depth if depth is None else depth
    levels = fractal.active_levels(D)
    q, c = fractal.q, fractal.ambient_dim
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    dig = rng.integers(0, q, size=(n, c, len(levels)), dtype=np.int64)
    weights = [q ** (D - lv) for lv in levels]
    if q**D < 2**62:
        pts = dig @ np.array(weights, dtype=np.int64) if levels else np.zeros((n, c), dtype=np.int64)
    else:
        pts = np.zeros((n, c), dtype=object)
        for j, w in enumerate(weights):
            pts = pts + dig[:, :, j].astype(object) * w
    return PointCloud(pts, q**D)


def validate_digits(cloud: PointCloud, fractal: DigitFractal) -> bool:
    """Every coordinate has zero base-q digits off A, and nothing below the truncation depth."""
    if not cloud.exact:
        return False
    q, D = fractal.q, fractal.depth
    scale = q**D
    if scale % cloud.denominator and cloud.denominator % scale:
        return False
    if cloud.denominator > scale:
        return False
    mult = scale // cloud.denominator
    inactive_weights = [q ** (D - lv) for lv in range(1, D + 1) if not fractal.schedule.is_active(lv)]
    for v in np.unique(cloud.points.astype(object).ravel() * mult):
        v = int(v)
        if not 0 <= v < scale:
            return False
        for w in inactive_weights:
            if (v // w) % q:
                return False
    return True


def digit_vector(value: Fraction, q: int, depth: int) -> list[int]:
    return digits(value, q, depth)


def random_dust(d: int, q: int, keep: int, levels: int, n: int, seed: int) -> PointCloud:
    """Sampled cloud from a seeded random Cantor dust.

    At every level a fixed random subset of ``keep`` of the q^d subcells is retained
    (the same subset for all cells of that level), so the dust has dimension
    log(keep) / log(q). Points are exact over q^levels.
    """
    if not 1 <= keep <= q**d:
        raise ValueError("keep must lie in 1..q^d")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    cells = np.array(np.unravel_index(np.arange(q**d), (q,) * d)).T
    choice = np.stack([rng.permutation(q**d)[:keep] for _ in range(levels)])
    pick = rng.integers(0, keep, size=(n, levels))
    digs = cells[choice[np.arange(levels)[None, :], pick]]  # (n, levels, d)
    weights = np.array([q ** (levels - m) for m in range(1, levels + 1)], dtype=np.int64)
    pts = np.einsum("nld,l->nd", digs, weights)
    return PointCloud(pts, q**levels)
