"""Point clouds, grid covering counts and finite-scale box-dimension slopes.

Covering numbers are realized as the number of occupied cells of an axis-aligned grid
anchored at the bounding-box corner. For exact clouds (integer numerators over a common
denominator) and rational mesh sizes the cell indices are computed in integer arithmetic.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .rational import exact_power, format_fraction, parse_fraction


class CoveringError(ValueError):
    pass


def _as_int_array(values) -> np.ndarray:
    """int64 when every value fits, otherwise an object array of Python ints."""
    arr = np.asarray(values, dtype=object)
    if arr.size == 0:
        return arr.astype(np.int64)
    flat = arr.ravel()
    lo, hi = min(flat), max(flat)
    if -(2**62) < lo and hi < 2**62:
        return arr.astype(np.int64)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """n points in R^d.

    Exact clouds store integer numerators with a shared ``denominator``; floating
    clouds store float64 coordinates and ``denominator=None``.
    """

    points: np.ndarray
    denominator: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise CoveringError("points must be an (n, d) array")
        if self.denominator is None:
            pts = pts.astype(float)
            if not np.all(np.isfinite(pts)):
                raise CoveringError("non-finite coordinates")
        else:
            if int(self.denominator) < 1:
                raise CoveringError("denominator must be a positive integer")
            object.__setattr__(self, "denominator", int(self.denominator))
            if pts.dtype.kind not in "iuO":
                raise CoveringError("exact clouds need integer numerators")
            if pts.dtype.kind == "u":
                pts = pts.astype(np.int64)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_fractions(cls, rows: Iterable[Sequence]) -> "PointCloud":
        rows = [[parse_fraction(c) for c in r] for r in rows]
        if not rows:
            raise CoveringError("empty cloud")
        den = math.lcm(*(c.denominator for r in rows for c in r))
        nums = [[c.numerator * (den // c.denominator) for c in r] for r in rows]
        return cls(_as_int_array(nums), den)

    @classmethod
    def from_floats(cls, arr) -> "PointCloud":
        return cls(np.asarray(arr, dtype=float), None)

    @property
    def exact(self) -> bool:
        return self.denominator is not None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def as_float(self) -> np.ndarray:
        if not self.exact:
            return self.points
        if self.points.dtype == object:
            return np.array([[float(Fraction(int(v), self.denominator)) for v in r] for r in self.points])
        return self.points / float(self.denominator)

    def point(self, i: int) -> tuple:
        if self.exact:
            return tuple(Fraction(int(v), self.denominator) for v in self.points[i])
        return tuple(float(v) for v in self.points[i])

    def bounding_box(self) -> tuple[tuple, tuple]:
        if len(self) == 0:
            raise CoveringError("empty cloud has no bounding box")
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        if self.exact:
            den = self.denominator
            return (tuple(Fraction(int(v), den) for v in lo), tuple(Fraction(int(v), den) for v in hi))
        return tuple(map(float, lo)), tuple(map(float, hi))

    def translate(self, vector) -> "PointCloud":
        if self.exact and all(isinstance(c, (int, Fraction)) for c in vector):
            v = [parse_fraction(c) for c in vector]
            den = math.lcm(self.denominator, *(c.denominator for c in v))
            scale = den // self.denominator
            shift = [c.numerator * (den // c.denominator) for c in v]
            pts = self.points.astype(object) * scale + np.array(shift, dtype=object)
            return PointCloud(_as_int_array(pts), den)
        return PointCloud(self.as_float() + np.asarray(vector, dtype=float), None)

    def unique(self) -> "PointCloud":
        if self.points.dtype == object:
            rows = sorted(set(map(tuple, self.points.tolist())))
            return PointCloud(_as_int_array(rows), self.denominator)
        return PointCloud(np.unique(self.points, axis=0), self.denominator)

    def to_csv(self, path_or_buf, exact: bool = True, precision: int = 17, header: Sequence[str] = ()) -> None:
        """CSV with one row per point: ``p/q`` strings or fixed-precision decimals."""
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
        try:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(self.dim)])
            if self.exact and exact:
                den = self.denominator
                for r in self.points.tolist():
                    w.writerow([format_fraction(Fraction(int(v), den)) for v in r])
            else:
                for r in self.as_float().tolist():
                    w.writerow([f"{v:.{precision}g}" for v in r])
        finally:
            if own:
                fh.close()

    @classmethod
    def read_csv(cls, path_or_buf) -> "PointCloud":
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, encoding="utf-8") if own else path_or_buf
        try:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        finally:
            if own:
                fh.close()
        body = [r for r in rows[1:] if r]
        if not body:
            raise CoveringError("cloud file has no points")
        if all("/" in c or c.lstrip("-").isdigit() for c in body[0]):
            return cls.from_fractions(body)
        return cls.from_floats([[float(c) for c in r] for r in body])


def _cell_indices(cloud: PointCloud, delta, anchor=None) -> np.ndarray:
    """Integer grid cell indices floor((x - anchor) / delta) per coordinate."""
    pts = cloud.points
    if cloud.exact and isinstance(delta, (int, Fraction)):
        delta = Fraction(delta)
        den = cloud.denominator
        if anchor is None:
            a = pts.min(axis=0)
        else:
            a = np.array([int(Fraction(c) * den) if Fraction(c) * den == int(Fraction(c) * den)
                          else None for c in anchor], dtype=object)
            if any(v is None for v in a):
                return _cell_indices(PointCloud(cloud.as_float()), float(delta), anchor)
        mult, div = delta.denominator, den * delta.numerator
        g = math.gcd(mult, div)
        mult, div = mult // g, div // g
        shifted = pts - a
        span = int(np.max(shifted)) if shifted.size else 0
        if shifted.dtype != object and span * mult < 2**62:
            return (shifted.astype(np.int64) * mult) // div
        return _as_int_array((shifted.astype(object) * mult) // div)
    x = cloud.as_float()
    d = float(delta)
    a = x.min(axis=0) if anchor is None else np.asarray([float(c) for c in anchor])
    t = (x - a) / d
    # points sitting on a cell boundary may round to either side; snap them so that
    # refined grids stay nested
    r = np.rint(t)
    t = np.where(np.abs(t - r) <= 1e-9 * np.maximum(1.0, np.abs(t)), r, t)
    return np.floor(t).astype(np.int64)


def _count_rows(idx: np.ndarray) -> int:
    if idx.shape[0] == 0:
        return 0
    if idx.dtype == object:
        return len(set(map(tuple, idx.tolist())))
    if idx.shape[1] == 1:
        return int(np.unique(idx[:, 0]).size)
    lo = idx.min(axis=0)
    span = idx.max(axis=0) - lo + 1
    if float(np.prod(span.astype(float))) < 2**62:
        key = np.zeros(idx.shape[0], dtype=np.int64)
        for j in range(idx.shape[1]):
            key = key * int(span[j]) + (idx[:, j] - lo[j])
        return int(np.unique(key).size)
    return int(np.unique(idx, axis=0).shape[0])


def grid_covering_count(cloud: PointCloud, delta, anchor=None) -> int:
    """Number of occupied cells of the mesh-delta grid anchored at the bounding-box corner."""
    if len(cloud) == 0:
        raise CoveringError("cannot count an empty cloud")
    if not float(delta) > 0:
        raise CoveringError("mesh size must be positive")
    return _count_rows(_cell_indices(cloud, delta, anchor))


@dataclass(frozen=True)
class ProfileEntry:
    delta: object
    count: int
    provenance: str = "grid"


@dataclass(frozen=True)
class CoveringProfile:
    """Ordered (scale, count) pairs with strictly decreasing scales.

    ``base`` is set when every scale is a power of one integer base, which allows
    exact rational slopes; ``anchor`` records the grid anchor used.
    """

    entries: tuple
    base: int | None = None
    anchor: tuple | None = None

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        for e in entries:
            if e.count < 1:
                raise CoveringError("covering counts must be >= 1")
            if e.provenance not in ("exact", "grid", "bound"):
                raise CoveringError(f"unknown provenance {e.provenance!r}")
        for a, b in zip(entries, entries[1:]):
            if not b.delta < a.delta:
                raise CoveringError("scales must be strictly decreasing")
            if b.count < a.count:
                raise CoveringError("counts must be nondecreasing as the scale shrinks")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def deltas(self) -> list:
        return [e.delta for e in self.entries]

    @property
    def counts(self) -> list[int]:
        return [e.count for e in self.entries]

    def to_csv(self, path_or_buf=None, header: Sequence[str] = ()) -> str | None:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        buf.write("delta,count,provenance\n")
        for e in self.entries:
            dstr = format_fraction(e.delta) if isinstance(e.delta, (int, Fraction)) else repr(float(e.delta))
            buf.write(f"{dstr},{e.count},{e.provenance}\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
            with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            path_or_buf.write(text)
        return None

    @classmethod
    def from_csv(cls, source, base: int | None = None) -> "CoveringProfile":
        text = source if "\n" in str(source) else open(source, encoding="utf-8").read()
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        entries = []
        for ln in lines[1:]:
            dstr, cstr, prov = ln.split(",")
            delta = parse_fraction(dstr) if "/" in dstr else float(dstr)
            entries.append(ProfileEntry(delta, int(cstr), prov.strip()))
        return cls(tuple(entries), base)


def grid_profile(cloud: PointCloud, deltas: Sequence, base: int | None = None,
                 provenance: str = "grid") -> CoveringProfile:
    """Grid counts at each scale (scales sorted decreasing), anchored at the box corner."""
    if len(cloud) == 0:
        raise CoveringError("cannot profile an empty cloud")
    deltas = sorted(deltas, reverse=True)
    anchor = cloud.bounding_box()[0]
    if cloud.dim == 1 and cloud.points.dtype != object:
        # 1-D: sort once; cell index is monotone in x
        order = np.argsort(cloud.points[:, 0], kind="stable")
        pts = PointCloud(cloud.points[order], cloud.denominator)
        entries = []
        for dlt in deltas:
            idx = _cell_indices(pts, dlt)[:, 0]
            if idx.dtype == object:
                n = len(set(idx.tolist()))
            else:
                n = 1 + int(np.count_nonzero(np.diff(idx)))
            entries.append(ProfileEntry(dlt, n, provenance))
        return CoveringProfile(tuple(entries), base, anchor)
    entries = tuple(ProfileEntry(dlt, grid_covering_count(cloud, dlt), provenance) for dlt in deltas)
    return CoveringProfile(entries, base, anchor)


def qadic_scales(q: int, levels: Iterable[int]) -> list[Fraction]:
    return [Fraction(1, q**m) for m in levels]


@dataclass(frozen=True)
class DimensionEstimate:
    slope: object
    window: tuple
    scale_sequence: str
    residual: object
    mode: str
    entries_used: int

    def __post_init__(self):
        if not -1e-9 <= float(self.slope):
            raise CoveringError(f"slope {float(self.slope)} is negative")

    def to_dict(self) -> dict:
        def fmt(v):
            return format_fraction(v) if isinstance(v, Fraction) else float(v)
        return {"slope": float(self.slope), "slope_exact": fmt(self.slope) if isinstance(self.slope, Fraction) else None,
                "window": [fmt(w) for w in self.window], "scale_sequence": self.scale_sequence,
                "residual": float(self.residual), "mode": self.mode, "entries_used": self.entries_used}


def _log(value, base: int | None):
    """Exact log_base for exact powers, otherwise a float natural/base log."""
    if base is not None:
        if isinstance(value, Fraction):
            if value.numerator == 1:
                k = exact_power(value.denominator, base)
                if k is not None:
                    return Fraction(-k)
            elif value.denominator == 1:
                k = exact_power(value.numerator, base)
                if k is not None:
                    return Fraction(k)
        elif isinstance(value, int):
            k = exact_power(value, base)
            if k is not None:
                return Fraction(k)
        return _natural_log(value) / math.log(base)
    return _natural_log(value)


def _natural_log(value) -> float:
    # math.log handles arbitrarily large ints; floats would overflow
    if isinstance(value, Fraction):
        return math.log(value.numerator) - math.log(value.denominator)
    if isinstance(value, int):
        return math.log(value)
    return math.log(float(value))


def dimension_slope(profile: CoveringProfile, window: tuple | None = None, mode: str = "regression",
                    label: str = "") -> DimensionEstimate:
    """Slope of log N against -log delta over the entries inside ``window``.

    ``regression`` is the least-squares slope; ``max-two-point`` is the largest slope
    between consecutive entries (the finite-scale limsup surrogate). With a base-q
    profile of q-power counts both are exact rationals.
    """
    if mode not in ("regression", "max-two-point"):
        raise CoveringError(f"unknown mode {mode!r}")
    entries = list(profile.entries)
    if window is not None:
        hi, lo = window
        entries = [e for e in entries if lo <= e.delta <= hi]
    if len(entries) < 2:
        raise CoveringError("need at least two profile entries inside the window")
    base = profile.base
    xs = [-_log(e.delta, base) for e in entries]
    ys = [_log(e.count, base) for e in entries]
    exact = all(isinstance(v, Fraction) for v in xs + ys)
    if not exact:
        xs, ys = [float(v) for v in xs], [float(v) for v in ys]
    if mode == "regression":
        n = len(xs)
        mx, my = sum(xs) / n, sum(ys) / n
        sxx = sum((x - mx) ** 2 for x in xs)
        if sxx == 0:
            raise CoveringError("degenerate scale window")
        slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx
        icpt = my - slope * mx
        resid = max(abs(y - (icpt + slope * x)) for x, y in zip(xs, ys))
    else:
        pairs = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:]))]
        slope = max(pairs)
        resid = max(pairs) - min(pairs)
    if not exact:
        slope, resid = float(slope), float(resid)
    return DimensionEstimate(slope, (entries[0].delta, entries[-1].delta), label, resid, mode, len(entries))
