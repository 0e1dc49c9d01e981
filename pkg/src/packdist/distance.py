"""Distance sets, pinned distance sets and the digit envelope of rational polyhedral norms.

For a digit set F with free levels A and a polyhedral norm whose facets have q-power
denominators, every difference inner product <x - y, v> has a signed base-q expansion
supported in a bounded enlargement of A. ``digit_envelope`` builds that enlargement,
``verify_envelope`` checks concrete values against it, and ``certify_envelope`` checks
all pairs at once by running the carry automaton over every digit choice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .covering import CoveringProfile, PointCloud, ProfileEntry, _as_int_array
from .digitsets import BlockSchedule, DigitFractal
from .norms import LpNorm, NormSpec, PolyhedralNorm
from .rational import ceil_log, format_fraction, parse_fraction, power_exponent, q_adic_split

PAIR_CAP = 10**8
FULL_PAIRS_LIMIT = 10**4


class DistanceError(ValueError):
    pass


class DenominatorMismatch(DistanceError):
    pass


@dataclass(frozen=True, eq=False)
class DistanceCloud:
    """Sorted distance values as a 1-D PointCloud plus a description of how they arose."""

    values: PointCloud
    source: str
    pin: tuple | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.values.dim != 1:
            raise DistanceError("distance clouds are one-dimensional")
        if len(self.values) and self.values.points.min() < 0:
            raise DistanceError("distances must be nonnegative")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def exact(self) -> bool:
        return self.values.exact

    def fractions(self) -> list[Fraction]:
        den = self.values.denominator
        return [Fraction(int(v), den) for v in self.values.points[:, 0]]

    def distinct(self) -> list:
        if self.exact:
            den = self.values.denominator
            return [Fraction(int(v), den) for v in sorted(set(self.values.points[:, 0].tolist()))]
        return sorted(set(self.values.points[:, 0].tolist()))

    def describe(self) -> str:
        if self.source == "pinned":
            return f"pinned({', '.join(str(c) for c in self.pin)})"
        if self.source == "sampled":
            return f"sampled({len(self)}, {self.seed})"
        return "full-pairs"


def _norm_of_differences(norm: NormSpec, diffs: np.ndarray, exact: bool):
    if exact and isinstance(norm, PolyhedralNorm):
        return norm.evaluate_exact_many(diffs)
    return norm.evaluate_many(diffs)


def _wrap(values: list, exact: bool, den: int | None, norm: NormSpec) -> PointCloud:
    if not values:
        raise DistanceError("no distances produced")
    if exact and isinstance(norm, PolyhedralNorm):
        vals = np.concatenate(values)
        vals = _as_int_array(vals) if vals.dtype == object else vals
        vals = np.sort(vals, kind="stable") if vals.dtype != object else np.array(sorted(vals.tolist()), dtype=object)
        return PointCloud(vals[:, None], den * norm.common_denominator)
    vals = np.sort(np.concatenate(values).astype(float))
    return PointCloud(vals[:, None], None)


def _points_for(cloud: PointCloud, norm: NormSpec) -> tuple[np.ndarray, bool]:
    if cloud.dim != (norm.dim if hasattr(norm, "dim") else cloud.dim):
        raise DistanceError(f"cloud dimension {cloud.dim} does not match the norm's {norm.dim}")
    exact = cloud.exact and isinstance(norm, PolyhedralNorm)
    return (cloud.points if exact else cloud.as_float()), exact


def distance_set(cloud: PointCloud, norm: NormSpec, *, include_zero: bool = False,
                 sample: int | None = None, seed: int = 0, pair_cap: int = PAIR_CAP) -> DistanceCloud:
    """All pairwise distances ||x - y|| (unordered pairs), or ``sample`` seeded pairs."""
    n = len(cloud)
    if n == 0:
        raise DistanceError("empty cloud")
    pts, exact = _points_for(cloud, norm)
    if sample is not None:
        rng = np.random.Generator(np.random.Philox(key=int(seed)))
        i = rng.integers(0, n, size=int(sample))
        j = rng.integers(0, n, size=int(sample))
        if not include_zero and n > 1:
            clash = i == j
            while np.any(clash):
                j[clash] = rng.integers(0, n, size=int(clash.sum()))
                clash = i == j
        vals = _norm_of_differences(norm, pts[i] - pts[j], exact)
        return DistanceCloud(_wrap([vals], exact, cloud.denominator, norm), "sampled", seed=int(seed))
    npairs = n * (n - 1) // 2 + (n if include_zero else 0)
    if npairs > pair_cap:
        raise DistanceError(f"{npairs} pairs exceed the pair cap {pair_cap}; request sampling instead")
    chunks = []
    start = 0 if include_zero else 1
    block = max(1, 2_000_000 // max(n, 1))
    for i0 in range(0, n, block):
        rows = range(i0, min(n, i0 + block))
        diffs = [pts[i + start:] - pts[i] for i in rows if i + start < n]
        if diffs:
            chunks.append(_norm_of_differences(norm, np.concatenate(diffs), exact))
    if not chunks:
        raise DistanceError("a single point has no pairwise distances unless include_zero is set")
    return DistanceCloud(_wrap(chunks, exact, cloud.denominator, norm), "full-pairs")


def _pin_row(cloud: PointCloud, pin, exact: bool) -> tuple[np.ndarray, PointCloud]:
    if exact:
        pin = [parse_fraction(c) for c in pin]
        den = math.lcm(cloud.denominator, *(c.denominator for c in pin))
        if den != cloud.denominator:
            cloud = PointCloud(_as_int_array(cloud.points.astype(object) * (den // cloud.denominator)), den)
        row = np.array([c.numerator * (den // c.denominator) for c in pin], dtype=object)
        if cloud.points.dtype != object and max(abs(int(v)) for v in row) < 2**62:
            row = row.astype(np.int64)
        return row, cloud
    return np.asarray([float(c) for c in pin]), cloud


def pinned_distance_set(cloud: PointCloud, norm: NormSpec, pin, *, include_zero: bool = True) -> DistanceCloud:
    """Distances ||y - pin|| for y in the cloud (zero kept when the pin is a cloud point)."""
    if len(cloud) == 0:
        raise DistanceError("empty cloud")
    exact = cloud.exact and isinstance(norm, PolyhedralNorm) and all(
        isinstance(c, (int, Fraction, str)) for c in pin)
    row, cloud2 = _pin_row(cloud, pin, exact)
    pts = cloud2.points if exact else cloud.as_float()
    vals = _norm_of_differences(norm, pts - row, exact)
    if not include_zero:
        vals = vals[vals != 0]
    pin_t = tuple(parse_fraction(c) if exact else float(c) for c in pin)
    return DistanceCloud(_wrap([vals], exact, cloud2.denominator, norm), "pinned", pin=pin_t)


# ----------------------------------------------------------------------------- envelope


@dataclass(frozen=True)
class DigitEnvelope:
    """Enlarged level blocks [m_k - lead, M_k + pad] covering every difference digit.

    ``shift`` is the exponent t with facet denominators dividing q^t; inner products of
    depth-D points then have denominators dividing q^(D + shift).
    """

    blocks: tuple
    pad: int
    lead: int
    shift: int
    q: int

    def __post_init__(self):
        if self.pad < 2:
            raise DistanceError("pad must be >= 2")
        starts = [a for a, _ in self.blocks]
        if starts != sorted(starts):
            raise DistanceError("envelope blocks must be ordered")

    def contains(self, level: int) -> bool:
        return any(a <= level <= b for a, b in self.blocks)

    def levels(self, n: int) -> set[int]:
        return {lv for a, b in self.blocks for lv in range(max(a, 1), min(b, n) + 1)}

    def active_count(self, n: int) -> int:
        return len(self.levels(n))

    def density(self, n: int) -> Fraction:
        return Fraction(self.active_count(n), n)

    def covers(self, schedule: BlockSchedule) -> bool:
        return all(any(a <= m and M <= b for a, b in self.blocks) for m, M in schedule.blocks)

    def to_dict(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks], "pad": self.pad, "lead": self.lead,
                "shift": self.shift, "q": self.q}


def normalized_facets(norm: PolyhedralNorm, q: int, max_power: int = 4) -> tuple[int, np.ndarray]:
    """(t, P) with every facet v = P / q^t, t <= max_power minimal."""
    t = power_exponent(norm.common_denominator, q, max_t=max_power)
    if t is None:
        raise DenominatorMismatch(
            f"facet denominator {norm.common_denominator} does not divide {q}^t for any t <= {max_power}")
    scale = q**t
    P = np.array([[int(c * scale) for c in v] for v in norm.facets], dtype=object)
    return t, P


def digit_envelope(schedule: BlockSchedule, q: int, d: int, norm: PolyhedralNorm, *,
                   pad: int | None = None, lead: int | None = None) -> DigitEnvelope:
    """Enlarge each block [m_k, M_k] to [m_k - lead, M_k + pad].

    pad = 2 + ceil(log_q d) + 1 (at least the facet shift); lead = max(0, ceil(log_q S) - shift)
    where S is the largest l^1 norm of a normalized facet numerator row. ``pad`` and
    ``lead`` override the computed values (for experiments with undersized envelopes).
    Block k's share
    of an inner product is an integer N with |N| <= S (q^L - 1) over q^(M_k + shift),
    which fits in L + ceil(log_q S) signed digits ending at position M_k + shift.
    """
    if schedule.q != q:
        raise DenominatorMismatch(f"schedule base {schedule.q} differs from q={q}")
    if norm.dim != d:
        raise DistanceError(f"norm dimension {norm.dim} differs from d={d}")
    shift, P = normalized_facets(norm, q)
    S = max(1, max(sum(abs(int(c)) for c in row) for row in P))
    lead = max(0, ceil_log(S, q) - shift) if lead is None else lead
    pad = max(2 + ceil_log(d, q) + 1, shift) if pad is None else pad
    blocks = tuple((m - lead, M + pad) for m, M in schedule.blocks)
    return DigitEnvelope(blocks, pad, lead, shift, q)


@dataclass(frozen=True)
class EnvelopeReport:
    passed: bool
    checked: int
    counterexample: Fraction | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"certified": self.passed, "checked": self.checked,
                "counterexample": None if self.counterexample is None else format_fraction(self.counterexample),
                "detail": self.detail}


def verify_envelope(distances: DistanceCloud | Sequence, envelope: DigitEnvelope, q: int, depth: int) -> EnvelopeReport:
    """Check each value has a signed base-q expansion supported in envelope ∩ [1, depth].

    ``depth`` is the finest admissible digit position (the fractal depth plus the facet
    shift for inner products). Non-q-power denominators raise DistanceError.
    """
    if isinstance(distances, DistanceCloud):
        if not distances.exact:
            raise DistanceError("envelope verification needs exact distances")
        values = distances.distinct()
    else:
        values = sorted({parse_fraction(v) for v in distances})
    allowed = lambda pos: pos <= depth and envelope.contains(pos)  # noqa: E731
    from .rational import signed_digit_support

    for v in values:
        try:
            T, L = q_adic_split(v, q)
        except ValueError:
            raise DistanceError(f"value {format_fraction(v)} has a denominator that is not a power of {q}") from None
        if signed_digit_support(T, L, q, allowed) is None:
            return EnvelopeReport(False, len(values), v, f"no signed expansion of {format_fraction(v)} fits")
    return EnvelopeReport(True, len(values))


def _facet_alphabets(P: np.ndarray, q: int) -> list[list[int]]:
    d = P.shape[1]
    deltas = range(-(q - 1), q)
    out = []
    for row in P:
        vals = {sum(int(c) * dl for c, dl in zip(row, combo)) for combo in itertools.product(deltas, repeat=d)}
        out.append(sorted(vals))
    return out


def certify_envelope(schedule: BlockSchedule, norm: PolyhedralNorm, envelope: DigitEnvelope, depth: int) -> EnvelopeReport:
    """Exhaustively certify that <x - y, v_j> lies in the envelope for all x, y in E = F^d
    truncated at ``depth`` and every facet v_j.

    Runs the subset construction of the signed-digit carry automaton over every digit
    choice: the per-level input is D_m = sum_l P_jl (x_lm - y_lm), entering at position
    m + shift. Any input sequence that empties the residual set is a counterexample.
    """
    q = envelope.q
    shift, P = normalized_facets(norm, q)
    if shift != envelope.shift:
        raise DenominatorMismatch("envelope was built for a different facet shift")
    top = depth + shift
    checked = 0
    for j, alphabet in enumerate(_facet_alphabets(P, q)):
        start = frozenset({0})
        configs = {start}
        parents: list[dict] = []
        for pos in range(top, 0, -1):
            lv = pos - shift
            inputs = alphabet if 1 <= lv <= depth and schedule.is_active(lv) else [0]
            ok = envelope.contains(pos)
            step: dict = {}
            for cfg in configs:
                for D in inputs:
                    nxt = set()
                    for r in cfg:
                        t = r + D
                        rem = t % q
                        if ok:
                            for s in ((rem,) if rem == 0 else (rem, rem - q)):
                                nxt.add((t - s) // q)
                        elif rem == 0:
                            nxt.add(t // q)
                    key = frozenset(nxt)
                    checked += 1
                    if key not in step:
                        step[key] = (cfg, D)
                    if not key:
                        parents.append(step)
                        value = _witness(parents, key, top, pos, q)
                        return EnvelopeReport(False, checked, value,
                                              f"facet {j}: carry escapes the envelope at level {pos}")
            parents.append(step)
            configs = set(step)
    return EnvelopeReport(True, checked, None, f"{len(P)} facets, all digit choices to depth {depth}")


def _witness(parents: list[dict], key, top: int, fail_pos: int, q: int) -> Fraction:
    """Rebuild the inner-product value whose expansion left the envelope."""
    digits_by_pos = {}
    pos = fail_pos
    for step in reversed(parents):
        cfg, D = step[key]
        digits_by_pos[pos] = D
        key = cfg
        pos += 1
    return sum((Fraction(D, q**p) for p, D in digits_by_pos.items()), Fraction(0))


# ----------------------------------------------------------------------------- exact counts


def _runs(schedule: BlockSchedule, upto: int) -> list[tuple[int, int]]:
    """Maximal runs of consecutive active levels in [1, upto]."""
    runs: list[list[int]] = []
    for m, M in schedule.blocks:
        a, b = m, min(M, upto)
        if a > b:
            break
        if runs and runs[-1][1] + 1 == a:
            runs[-1][1] = b
        else:
            runs.append([a, b])
    return [tuple(r) for r in runs]


def difference_set_cells(schedule: BlockSchedule, n: int, depth: int) -> int:
    """Exact number of occupied q^-n grid cells (anchored at 0) of |F - F|, F truncated at depth.

    Heads sum_{m <= n} delta_m q^(n - m) with signed digits on runs of active levels
    form prod (2 q^L - 1) distinct integers (runs are separated by inactive levels);
    a negative tail, available when some level in (n, depth] is active, adds the cell
    just below each maximal interval of heads.
    """
    q = schedule.q
    if n <= 0:
        return 1
    runs = _runs(schedule, min(n, depth))
    sizes = [2 * q ** (b - a + 1) - 1 for a, b in runs]
    heads = math.prod(sizes)
    if runs and runs[-1][1] == n:
        intervals = math.prod(sizes[:-1])
    else:
        intervals = heads
    neg = schedule.active_count(depth) > schedule.active_count(min(n, depth))
    return (heads + 1) // 2 + (intervals - 1) // 2 * int(neg)


def coordinate_scale(norm: PolyhedralNorm, q: int) -> int | None:
    """t if the norm equals q^-t max_l |x_l| (every facet a signed scaled axis), else None."""
    try:
        shift, P = normalized_facets(norm, q)
    except DenominatorMismatch:
        return None
    axes = set()
    for row in P:
        nz = [(i, int(c)) for i, c in enumerate(row) if c != 0]
        if len(nz) != 1 or abs(nz[0][1]) != 1:
            return None
        axes.add(nz[0][0])
    return shift if len(axes) == norm.dim else None


def exact_distance_profile(schedule: BlockSchedule, norm: PolyhedralNorm, depth: int,
                           levels: Sequence[int]) -> CoveringProfile:
    """Exact q-adic grid counts of the full distance set of E = F^d under an axis norm.

    For ||x|| = q^-t max_l |x_l| the distance set is q^-t |F - F|, so its count at
    level n equals the count of |F - F| at level n - t.
    """
    q = schedule.q
    t = coordinate_scale(norm, q)
    if t is None:
        raise DistanceError("exact distance counts need a norm of the form q^-t max |x_l|")
    entries = tuple(ProfileEntry(Fraction(1, q**n), difference_set_cells(schedule, n - t, depth), "exact")
                    for n in sorted(set(levels)))
    return CoveringProfile(entries, base=q, anchor=(Fraction(0),))


def _env_runs(envelope: DigitEnvelope, upto: int) -> list[tuple[int, int]]:
    levels = sorted(envelope.levels(upto))
    runs: list[list[int]] = []
    for lv in levels:
        if runs and runs[-1][1] + 1 == lv:
            runs[-1][1] = lv
        else:
            runs.append([lv, lv])
    return [tuple(r) for r in runs]


def distance_profile_bounds(schedule: BlockSchedule, norm: PolyhedralNorm, envelope: DigitEnvelope,
                            depth: int, levels: Sequence[int]) -> tuple[CoveringProfile, CoveringProfile]:
    """(lower, upper) bounds on q-adic grid counts of the distance set of E = F^d.

    Upper: every distance is I + sum s_p q^-p with signed digits on the envelope, so the
    count is at most 2 * #I * prod (2 q^L - 1) over envelope runs in [1, n].
    Lower: differences along one axis give ||e_l|| |F - F| ⊆ Δ(E); ||e_l|| >= q^-t and a
    dilation by a factor >= 1 loses at most half of the occupied cells.
    """
    q = schedule.q
    shift, P = normalized_facets(norm, q)
    rmax = max(sum(abs(Fraction(c)) for c in v) for v in norm.facets)
    n_int = math.ceil(rmax) + 3
    axis = max(range(norm.dim), key=lambda l: max(abs(v[l]) for v in norm.facets))
    axis_scale = max(abs(v[axis]) for v in norm.facets)
    a_shift = power_exponent(axis_scale.denominator, q, max_t=64)
    lower, upper = [], []
    for n in sorted(set(levels)):
        heads = math.prod(2 * q ** (b - a + 1) - 1 for a, b in _env_runs(envelope, min(n, depth + shift)))
        upper.append(ProfileEntry(Fraction(1, q**n), min(2 * n_int * heads, n_int * q**n), "bound"))
        lo = difference_set_cells(schedule, n - a_shift, depth)
        lower.append(ProfileEntry(Fraction(1, q**n), max(1, -(-lo // 2)), "bound"))
    anchor = (Fraction(0),)
    return CoveringProfile(tuple(lower), q, anchor), CoveringProfile(tuple(upper), q, anchor)


# ----------------------------------------------------------------------------- slope checks


@dataclass(frozen=True)
class BoundReport:
    set_slope: float
    pin_slopes: tuple
    pins: tuple
    best_pin: tuple
    best_slope: float
    target: float
    margin: float
    tol: float
    passed: bool
    levels: tuple
    mode: str

    def to_dict(self) -> dict:
        fmt = lambda z: [format_fraction(c) if isinstance(c, Fraction) else float(c) for c in z]  # noqa: E731
        return {"set_slope": self.set_slope, "pin_slopes": list(self.pin_slopes),
                "pins": [fmt(z) for z in self.pins], "best_pin": fmt(self.best_pin),
                "best_slope": self.best_slope, "target": self.target, "margin": self.margin,
                "tol": self.tol, "passed": self.passed, "levels": list(self.levels), "mode": self.mode}


def unsaturated_levels(cloud: PointCloud, q: int, saturation: int = 10, max_level: int = 64) -> list[int]:
    """q-adic levels whose grid count stays at most len(cloud) / saturation."""
    from .covering import grid_covering_count

    out = []
    for m in range(max_level + 1):
        if grid_covering_count(cloud, Fraction(1, q**m)) * saturation > len(cloud):
            break
        out.append(m)
    return out


def pinned_slope_check(cloud: PointCloud, norm: NormSpec, q: int, *, levels: Sequence[int] | None = None,
                       n_pins: int = 8, seed: int = 0, tol: float = 0.1, mode: str = "regression",
                       saturation: int = 10) -> BoundReport:
    """Best pinned-distance slope over seeded candidate pins versus slope(E)/d.

    Slopes use q-adic grid counts at ``levels`` (default: every level whose set count is
    at most |cloud|/saturation, so sampled clouds are not read past their resolution).
    """
    from .covering import dimension_slope, grid_profile

    levels = sorted(set(levels)) if levels is not None else unsaturated_levels(cloud, q, saturation)
    if len(levels) < 2:
        raise DistanceError("need at least two scales; the cloud is too small for this base")
    scales = [Fraction(1, q**m) for m in levels]
    set_slope = float(dimension_slope(grid_profile(cloud, scales, q), mode=mode).slope)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    idx = np.sort(rng.choice(len(cloud), size=min(n_pins, len(cloud)), replace=False))
    pins, slopes = [], []
    for i in idx:
        pin = cloud.point(int(i))
        dist = pinned_distance_set(cloud, norm, pin)
        slopes.append(float(dimension_slope(grid_profile(dist.values, scales, q), mode=mode).slope))
        pins.append(tuple(pin))
    best = int(np.argmax(slopes))
    target = set_slope / cloud.dim
    margin = slopes[best] - target
    return BoundReport(set_slope, tuple(slopes), tuple(pins), pins[best], slopes[best], target, margin,
                       tol, bool(margin >= -tol), tuple(levels), mode)


@dataclass(frozen=True)
class SharpnessReport:
    envelope: DigitEnvelope
    certification: EnvelopeReport
    depth: int
    levels: tuple
    window_levels: tuple
    upper_slope: object
    lower_slope: object
    exact: bool
    target: Fraction
    tol: float
    passed: bool
    profile: CoveringProfile
    envelope_density: float

    def to_dict(self) -> dict:
        fmt = lambda v: format_fraction(v) if isinstance(v, Fraction) else float(v)  # noqa: E731
        return {"envelope": self.envelope.to_dict(), "certification": self.certification.to_dict(),
                "depth": self.depth, "checkpoints": list(self.levels), "window": list(self.window_levels),
                "upper_slope": fmt(self.upper_slope), "lower_slope": fmt(self.lower_slope),
                "counts": "exact" if self.exact else "bounds", "target": fmt(self.target),
                "tol": self.tol, "passed": self.passed, "envelope_density_max": self.envelope_density}


def sharpness_check(schedule: BlockSchedule, d: int, norm: PolyhedralNorm, *, tol: float = 0.05,
                    depth: int | None = None, window_start: int | None = None,
                    mode: str = "max-two-point", pad: int | None = None,
                    lead: int | None = None) -> SharpnessReport:
    """Certify the envelope exhaustively and bracket the distance-set checkpoint slope.

    Counts are exact for axis norms q^-t max |x_l| and envelope/axis bounds otherwise.
    The slope window runs over checkpoints window_start..K (default: the last half).
    """
    from .covering import dimension_slope

    q = schedule.q
    depth = depth if depth is not None else schedule.checkpoints[-1] + 2
    envelope = digit_envelope(schedule, q, d, norm, pad=pad, lead=lead)
    cert = certify_envelope(schedule, norm, envelope, depth)
    K = schedule.K
    start = window_start if window_start is not None else max(1, (K + 1) // 2)
    if not 1 <= start < K:
        raise DistanceError(f"window start {start} must leave at least two checkpoints")
    levels = tuple([0] + schedule.checkpoints)
    window = tuple(schedule.checkpoints[start - 1:])
    win = (Fraction(1, q ** window[0]), Fraction(1, q ** window[-1]))
    exact = coordinate_scale(norm, q) is not None
    if exact:
        profile = exact_distance_profile(schedule, norm, depth, levels)
        upper = lower = dimension_slope(profile, win, mode, "checkpoint M_k").slope
    else:
        lo, profile = distance_profile_bounds(schedule, norm, envelope, depth, levels)
        upper = dimension_slope(profile, win, mode, "checkpoint M_k").slope
        lower = dimension_slope(lo, win, mode, "checkpoint M_k").slope
    target = schedule.target_density
    env_density = max(float(envelope.density(M)) for M in window)
    passed = cert.passed and float(upper) <= target + tol and float(lower) >= target - tol
    return SharpnessReport(envelope, cert, depth, levels, window, upper, lower, exact, target, tol, passed,
                           profile, env_density)
