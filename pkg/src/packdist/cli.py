"""Command-line front end.

Every subcommand writes CSV or JSON text whose ``#`` header echoes the seed and the
tolerances. Exit codes: 0 when all checks pass, 2 when a mathematical check fails,
1 for usage and I/O errors.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .covering import CoveringError, PointCloud, dimension_slope, grid_profile, qadic_scales
from .digitsets import (DigitFractal, EnumerationCapError, ScheduleError, enumerate_points, sample_points,
                        schedule_for_density, BlockSchedule)
from .distance import (DistanceError, distance_set, pinned_distance_set, pinned_slope_check, sharpness_check,
                       unsaturated_levels)
from .norms import (LpNorm, NormError, PolyhedralNorm, direction_aperture, direction_constant, geomlem_constant,
                    linf, load_norm, modulus_h, norm_label, transversality_volume)
from .projections import (ProjectionError, ProjectionFamily, fiber_cover, jarvenpaa_check,
                          weak_transversality_scan)
from .rational import format_fraction, parse_fraction

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------------- helpers


def _density(text: str) -> Fraction:
    try:
        rho = parse_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from None
    if not 0 <= rho <= 1:
        raise argparse.ArgumentTypeError(f"density must lie in [0, 1], got {text}")
    return rho


def _window(text: str) -> tuple[Fraction, Fraction]:
    try:
        hi, lo = (parse_fraction(t) for t in text.split(","))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError("window must be 'delta_max,delta_min'") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError("window needs 0 < delta_min < delta_max")
    return hi, lo


def _levels(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if ":" in part:
            a, b = part.split(":")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return sorted(set(out))


def _point(text: str) -> tuple:
    return tuple(parse_fraction(t) for t in text.split(","))


def _header(args, extra: dict | None = None) -> list[str]:
    lines = [f"packdist {__version__} {args.command}", f"seed={args.seed}"]
    tols = {k: getattr(args, k) for k in ("tol",) if getattr(args, k, None) is not None}
    lines.append("tolerances " + " ".join(f"{k}={v}" for k, v in tols.items()) if tols else "tolerances none")
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    if not args.no_timestamp:
        lines.append("generated " + _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    return lines


def _emit(args, name: str, text: str) -> None:
    """Write to --out (a directory gets ``name``) or stdout."""
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    target = out / name if out.is_dir() or str(args.out).endswith("/") else out
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")


def _json_doc(args, payload: dict) -> str:
    head = "".join(f"# {h}\n" for h in _header(args))
    return head + json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _schedule(args) -> BlockSchedule:
    if getattr(args, "schedule", None):
        return BlockSchedule.from_text(Path(args.schedule).read_text(encoding="utf-8"), q=args.q)
    if args.rho is None:
        raise UsageError("give --rho (with --blocks) or --schedule")
    return schedule_for_density(args.rho, args.blocks, args.q)


def _cloud(args) -> PointCloud:
    if getattr(args, "cloud", None):
        return PointCloud.read_csv(args.cloud)
    sched = _schedule(args)
    depth = args.depth if args.depth is not None else sched.checkpoints[-1]
    fractal = DigitFractal(sched, depth, args.d)
    if args.sample:
        return sample_points(fractal, args.sample, args.seed)
    return enumerate_points(fractal)


def _norm(args, d: int):
    if args.norm is None:
        return linf(d)
    return load_norm(args.norm)


# ----------------------------------------------------------------------------- commands


def cmd_build_set(args) -> int:
    sched = _schedule(args)
    depth = args.depth if args.depth is not None else sched.checkpoints[-1]
    fractal = DigitFractal(sched, depth, args.d)
    cloud = sample_points(fractal, args.sample, args.seed) if args.sample else enumerate_points(fractal)
    extra = {"q": sched.q, "rho": sched.target_density, "blocks": sched.K, "d": args.d, "depth": depth}
    head = _header(args, extra)
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "schedule.txt").write_text(sched.to_text(head), encoding="utf-8")
    cloud.to_csv(out / "cloud.csv", exact=True, header=head)
    print(json.dumps({"blocks": [list(b) for b in sched.blocks], "points": len(cloud),
                      "depth": depth, "files": [str(out / "schedule.txt"), str(out / "cloud.csv")]}, sort_keys=True))
    return EXIT_OK


def cmd_covering_profile(args) -> int:
    cloud = _cloud(args)
    levels = args.levels or unsaturated_levels(cloud, args.q)
    profile = grid_profile(cloud, qadic_scales(args.q, levels), args.q)
    est = dimension_slope(profile, args.window, args.mode, "all-dyadic" if args.q == 2 else f"all-{args.q}-adic")
    extra = {"mode": args.mode, "slope": float(est.slope), "residual": float(est.residual),
             "surrogate": "box slope on the declared scales"}
    _emit(args, "covering_profile.csv", profile.to_csv(header=_header(args, extra)))
    return EXIT_OK


def cmd_distance_profile(args) -> int:
    cloud = _cloud(args)
    norm = _norm(args, cloud.dim)
    if args.pin is not None:
        dist = pinned_distance_set(cloud, norm, args.pin)
    elif args.pairs or len(cloud) > 10**4:
        dist = distance_set(cloud, norm, sample=args.pairs or 10**6, seed=args.seed)
    else:
        dist = distance_set(cloud, norm)
    levels = args.levels or unsaturated_levels(dist.values, args.q, saturation=1)
    profile = grid_profile(dist.values, qadic_scales(args.q, levels), args.q)
    est = dimension_slope(profile, args.window, args.mode)
    extra = {"norm": norm_label(norm), "source": dist.describe(), "mode": args.mode, "slope": float(est.slope)}
    _emit(args, "distance_profile.csv", profile.to_csv(header=_header(args, extra)))
    return EXIT_OK


def cmd_verify_bound(args) -> int:
    cloud = _cloud(args)
    norm = _norm(args, cloud.dim)
    rep = pinned_slope_check(cloud, norm, args.q, levels=args.levels, n_pins=args.pins, seed=args.seed,
                             tol=args.tol, mode=args.mode)
    payload = {"norm": norm_label(norm), "scale_sequence": f"{args.q}-adic levels {list(rep.levels)}",
               **rep.to_dict()}
    _emit(args, "verify_bound.json", _json_doc(args, payload))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify_sharpness(args) -> int:
    sched = _schedule(args)
    norm = _norm(args, args.d)
    if not isinstance(norm, PolyhedralNorm):
        raise UsageError("sharpness needs a rational polyhedral norm")
    rep = sharpness_check(sched, args.d, norm, tol=args.tol, depth=args.depth, mode=args.mode,
                          pad=args.pad, lead=args.lead)
    payload = {"norm": norm_label(norm), "scale_sequence": "checkpoint M_k", "pad": rep.envelope.pad,
               "surrogate": "packing dimension read as the checkpoint box slope", **rep.to_dict()}
    _emit(args, "verify_sharpness.json", _json_doc(args, payload))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_jarvenpaa(args) -> int:
    if args.cloud:
        rep = jarvenpaa_check(PointCloud.read_csv(args.cloud), args.n, window=args.window, tol=args.tol)
    else:
        sched = _schedule(args)
        depth = args.depth if args.depth is not None else sched.checkpoints[-1]
        rep = jarvenpaa_check(DigitFractal(sched, depth, args.d), args.n, window=args.window, tol=args.tol)
    _emit(args, "jarvenpaa.json", _json_doc(args, rep.to_dict()))
    return EXIT_OK if rep.passed else EXIT_FAIL


def _grid_cloud(n: int) -> PointCloud:
    g = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(g, g, indexing="ij")
    return PointCloud.from_floats(np.column_stack([X.ravel(), Y.ravel()]))


def _family(args):
    norm = load_norm(args.norm) if args.norm else LpNorm(2.0, (1.0, 1.0))
    pins = args.pin_list or [(-1.0, -1.2), (2.1, -0.9)]
    return ProjectionFamily(tuple(tuple(float(c) for c in z) for z in pins), norm), norm


def cmd_transversality_report(args) -> int:
    family, norm = _family(args)
    cloud = PointCloud.read_csv(args.cloud) if args.cloud else _grid_cloud(args.grid)
    deltas = [2.0**-k for k in _levels(args.scales)]
    scan = weak_transversality_scan(family, cloud, deltas, n_xi=args.xi, seed=args.seed)
    payload = {"norm": norm_label(norm), "pins": [list(z) for z in family.pins], "scan": scan.to_dict(),
               "scale_sequence": "dyadic"}
    if isinstance(norm, LpNorm):
        pts = cloud.as_float()
        rng = np.random.Generator(np.random.Philox(key=int(args.seed)))
        sub = pts[np.sort(rng.choice(len(pts), size=min(500, len(pts)), replace=False))]
        vols = [transversality_volume(norm, x, family.pins) for x in sub]
        lam = direction_constant(norm)
        payload.update({"Lambda": lam, "eta": direction_aperture(norm),
                        "h": {str(e): modulus_h(norm, e) for e in (1e-2, 1e-4, 1e-6)},
                        "volume_min": float(min(vols)),
                        "C(L)": geomlem_constant(float(min(vols)), family.k)})
    passed = scan.exponent <= args.tol if family.k >= norm.dim else True
    payload["passed"] = passed
    payload["tol"] = args.tol
    _emit(args, "transversality.json", _json_doc(args, payload))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_fiber_scan(args) -> int:
    family, norm = _family(args)
    cloud = PointCloud.read_csv(args.cloud) if args.cloud else _grid_cloud(args.grid)
    if args.xi_point is not None:
        rep = fiber_cover(family, cloud, [float(c) for c in args.xi_point], args.delta)
        head = "".join(f"# {h}\n" for h in _header(args, {"delta": rep.delta, "xi": list(rep.xi), "m": rep.m,
                                                             "certified": rep.certified}))
        body = "x,y\n" + "".join(",".join(repr(float(c)) for c in row) + "\n" for row in rep.centers)
        _emit(args, "fiber_centers.csv", head + body)
        return EXIT_OK if rep.certified else EXIT_FAIL
    deltas = [2.0**-k for k in _levels(args.scales)]
    scan = weak_transversality_scan(family, cloud, deltas, n_xi=args.xi, seed=args.seed, recheck=True)
    head = "".join(f"# {h}\n" for h in _header(args, {"norm": norm_label(norm), "exponent": scan.exponent}))
    body = "delta,max_m,worst_xi\n" + "".join(
        f"{d!r},{m},{' '.join(repr(c) for c in (xi or ()))}\n" for d, m, xi in zip(scan.deltas, scan.max_m,
                                                                                  scan.worst_xi))
    _emit(args, "fiber_scan.csv", head + body)
    return EXIT_OK if scan.all_certified else EXIT_FAIL


# ----------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file or directory (default: stdout)")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp header line")

    sched = _Parser(add_help=False)
    sched.add_argument("--q", type=int, default=3)
    sched.add_argument("--rho", type=_density)
    sched.add_argument("--blocks", type=int, default=6, help="number of blocks K")
    sched.add_argument("--schedule", help="schedule text file (overrides --rho/--blocks)")
    sched.add_argument("--depth", type=int)
    sched.add_argument("--d", type=int, default=1)
    sched.add_argument("--sample", type=int, help="sample this many points instead of enumerating")

    slope = _Parser(add_help=False)
    slope.add_argument("--window", type=_window, help="delta_max,delta_min")
    slope.add_argument("--levels", type=_levels, help="q-adic levels, e.g. 0,6 or 0:12")
    slope.add_argument("--mode", choices=("regression", "max-two-point"), default="regression")

    parser = _Parser(prog="packdist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-set", parents=[common, sched], help="write a schedule and its digit-set cloud")
    p.set_defaults(func=cmd_build_set)

    for name, func, text in (("covering-profile", cmd_covering_profile, "grid covering counts and slope"),
                             ("distance-profile", cmd_distance_profile, "covering profile of the distance set")):
        p = sub.add_parser(name, parents=[common, sched, slope], help=text)
        p.add_argument("--cloud", help="cloud CSV (otherwise built from the schedule flags)")
        if name == "distance-profile":
            p.add_argument("--norm", help="norm JSON file")
            p.add_argument("--pin", type=_point, help="pinned variant: comma-separated coordinates")
            p.add_argument("--pairs", type=int, help="sample this many pairs")
        p.set_defaults(func=func)

    p = sub.add_parser("verify-bound", parents=[common, sched, slope], help="pinned-distance slope lower bound")
    p.add_argument("--cloud")
    p.add_argument("--norm")
    p.add_argument("--pins", type=int, default=8, help="number of candidate pins")
    p.add_argument("--tol", type=float, default=0.1)
    p.set_defaults(func=cmd_verify_bound)

    p = sub.add_parser("verify-sharpness", parents=[common, sched], help="envelope certificate and slope brackets")
    p.add_argument("--norm")
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--mode", choices=("regression", "max-two-point"), default="max-two-point")
    p.add_argument("--pad", type=int, help="override the envelope pad")
    p.add_argument("--lead", type=int, help="override the envelope lead")
    p.set_defaults(func=cmd_verify_sharpness)

    p = sub.add_parser("jarvenpaa", parents=[common, sched], help="max coordinate-projection slope inequality")
    p.add_argument("--cloud")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--window", type=_window)
    p.add_argument("--tol", type=float, default=0.05)
    p.set_defaults(func=cmd_jarvenpaa)

    for name, func, text in (("transversality-report", cmd_transversality_report, "norm constants and fiber exponent"),
                             ("fiber-scan", cmd_fiber_scan, "worst fiber covers per scale")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--norm", help="norm JSON file (default Euclidean in the plane)")
        p.add_argument("--pin", dest="pin_list", type=_point, action="append", help="repeat once per pin")
        p.add_argument("--cloud")
        p.add_argument("--grid", type=int, default=500, help="cell-centre grid size when no cloud is given")
        p.add_argument("--scales", default="5:9", help="dyadic exponents k for delta = 2^-k")
        p.add_argument("--xi", type=int, default=32, help="number of sampled target values")
        p.add_argument("--tol", type=float, default=0.15)
        if name == "fiber-scan":
            p.add_argument("--xi-point", type=_point, help="cover a single fiber and write its centers")
            p.add_argument("--delta", type=float, default=0.05)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScheduleError, EnumerationCapError, NormError, OSError, DistanceError, CoveringError,
            ProjectionError, ValueError) as exc:
        print(f"packdist {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
