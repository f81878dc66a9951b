"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 usage or parse error,
3 grid budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as cfg
from .analysis import InsufficientSamples, Reference, fit_tail, gof_report, tail_scan
from .nesting import (
    GRID_BUDGET,
    BudgetExceeded,
    SequenceError,
    cdf_from_grid,
    exact_cdf,
    obox_corner,
    obox_mass,
    refine_to_grid,
)
from .sampler import sample
from .tail_shaper import ShapingError

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _sgrid(text: str) -> list[float]:
    """``pow2:A:B`` gives 2**-A .. 2**-B; otherwise a comma list."""
    if text.startswith("pow2:"):
        try:
            lo, hi = (int(p) for p in text[5:].split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad power grid {text!r}") from None
        return [2.0 ** -e for e in range(lo, hi + 1)]
    return _floats(text)


def _face(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected coordinates like 1,2 got {text!r}") from None


def _threads(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("TAILNEST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise cfg.ConfigError(f"TAILNEST_THREADS must be an integer, got {env!r}") from None
    return 1


def _load(path: str) -> cfg.Loaded:
    return cfg.load(cfg.read(path))


def cmd_validate(args: argparse.Namespace) -> int:
    doc = cfg.read(args.config)
    problems = cfg.validation_report(doc)
    if problems:
        for p in problems:
            print(p)
        print(f"INVALID: {len(problems)} violation(s)")
        return EXIT_INVALID
    print("OK")
    return EXIT_OK


def format_rows(points: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in points:
        w.writerow([f"{v:.17g}" for v in row])
    return buf.getvalue()


def cmd_sample(args: argparse.Namespace) -> int:
    loaded = _load(args.config)
    seq, doc = loaded.seq, loaded.doc
    seed = doc.seed if args.seed is None else args.seed
    points, stats = sample(seq, args.n, seed, workers=_threads(args.threads))
    prefix = "u"
    if doc.margins is not None and not doc.margins.is_identity():
        points = doc.margins.quantiles(points)
        prefix = "x"
    text = ",".join(f"{prefix}{i + 1}" for i in range(seq.r)) + "\n" + format_rows(points)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    print(stats.summary(), file=sys.stderr)
    return EXIT_OK


def cmd_cdf(args: argparse.Namespace) -> int:
    seq = _load(args.config).seq
    w = args.point
    if len(w) != seq.r:
        raise cfg.ConfigError(f"point has {len(w)} coordinates, sequence has {seq.r}")
    print(f"{exact_cdf(seq, w, args.depth):.17g}")
    return EXIT_OK


def cmd_tailscan(args: argparse.Namespace) -> int:
    if args.reference:
        if args.dimension is None:
            raise cfg.ConfigError("--reference needs --dimension")
        target = Reference(args.reference, args.dimension, args.theta)
    elif args.config:
        target = _load(args.config).seq
    else:
        raise cfg.ConfigError("give a config file or --reference")
    scan = tail_scan(target, args.face, args.sgrid, degree=args.degree)
    print("s,mass,ratio")
    for s, m, q in scan.rows():
        print(f"{s:.17g},{m:.17g}," + ("" if q is None else f"{q:.17g}"))
    try:
        fit = fit_tail(scan)
        print("# " + fit.summary())
    except ValueError as exc:
        print(f"# no fit: {exc}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    seq = _load(args.config).seq
    depth = args.depth
    if depth > seq.depth:
        raise cfg.ConfigError(f"oracle depth {depth} exceeds sequence depth {seq.depth}")
    grid = refine_to_grid(seq, depth, args.budget)
    checks: list[tuple[str, bool, str]] = []
    checks.append(("grid is a probability measure", grid.is_probability(), f"total {grid.total():.17g}"))
    if seq.scheme == "tail" or seq.k < seq.r:
        checks.append((f"grid has order {seq.k}", grid.is_order(seq.k), ""))
    worst = 0.0
    for n in range(1, depth + 1):
        for nu in range(1 << seq.r):
            corner = obox_corner(seq, n, nu)
            worst = max(worst, abs(cdf_from_grid(grid, corner) - obox_mass(seq, n, nu)))
    checks.append(("o-box masses match level products", worst <= 1e-12, f"max error {worst:.3g}"))
    rng = np.random.default_rng(args.seed)
    err = 0.0
    for w in rng.random((args.points, seq.r)):
        err = max(err, abs(exact_cdf(seq, w, depth) - cdf_from_grid(grid, w)))
    checks.append(("exact CDF matches grid", err <= 1e-12, f"max error {err:.3g}"))
    if args.n:
        pts, stats = sample(seq.truncated(depth), args.n, args.seed, workers=_threads(args.threads))
        gof_depth = min(depth, args.gof_depth)
        try:
            rep = gof_report(pts, seq.truncated(depth), gof_depth, args.budget)
            checks.append((f"sampler matches depth-{gof_depth} grid", rep.ok(), rep.summary()))
        except InsufficientSamples as exc:
            checks.append(("sampler goodness of fit", False, str(exc)))
        bound_ok = stats.average_draws <= stats.bound + 0.01
        checks.append(("work within 1/(1-p_max)", bound_ok, stats.summary()))
    failed = 0
    for name, ok, detail in checks:
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else ""))
    return EXIT_OK if not failed else EXIT_INVALID


def cmd_build(args: argparse.Namespace) -> int:
    loaded = _load(args.config)
    for note in loaded.notes:
        print(f"note: {note}", file=sys.stderr)
    if loaded.built is not None and loaded.built.t is not None:
        print(f"note: base split {loaded.built.t:g}", file=sys.stderr)
    text = cfg.dumps(cfg.serialize(loaded.seq, loaded.doc.seed, loaded.doc.margins))
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailnest", description="Build, check and sample nested vertex copulas.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config document")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("sample", help="write samples as CSV")
    s.add_argument("config")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_sample)

    c = sub.add_parser("cdf", help="exact CDF at a point")
    c.add_argument("config")
    c.add_argument("--point", type=_floats, required=True)
    c.add_argument("--depth", type=int)
    c.set_defaults(func=cmd_cdf)

    t = sub.add_parser("tailscan", help="tail scan and fit along a face")
    t.add_argument("config", nargs="?")
    t.add_argument("--face", type=_face, required=True)
    t.add_argument("--sgrid", type=_sgrid, default=_sgrid("pow2:4:20"))
    t.add_argument("--degree", type=float)
    t.add_argument("--reference", choices=["clayton", "gumbel", "independence"])
    t.add_argument("--theta", type=float)
    t.add_argument("--dimension", type=int)
    t.set_defaults(func=cmd_tailscan)

    o = sub.add_parser("oracle", help="compare grid, level products, exact CDF and sampler")
    o.add_argument("config")
    o.add_argument("--depth", type=int, required=True)
    o.add_argument("--n", type=int, default=0, help="samples for the goodness-of-fit check")
    o.add_argument("--gof-depth", type=int, default=2)
    o.add_argument("--points", type=int, default=32)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--threads", type=int)
    o.add_argument("--budget", type=int, default=GRID_BUDGET)
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("build", help="run a builder and write the explicit-levels document")
    b.add_argument("config")
    b.add_argument("--out")
    b.set_defaults(func=cmd_build)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 0:
        parser.error("--n must be non-negative")
    try:
        return args.func(args)
    except cfg.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (SequenceError, ShapingError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        for line in getattr(exc, "report", None) or []:
            print(f"  {line}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
