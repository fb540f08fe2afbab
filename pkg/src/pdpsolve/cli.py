"""Command-line entry point: ``pdpsolve {gen,solve,bench,verify}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import METHODS, ExperimentConfig, emit_table, run_bench, run_point
from .errors import ConfigurationError
from .problems import KktProblem, build_poisson_control

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if over:
        d = cfg.to_dict()
        d.update(over)
        cfg = ExperimentConfig.from_dict(d)
    return cfg


def _write(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    P = build_poisson_control(args.n_cells, args.nu, args.control, args.target)
    out = args.out or f"poisson_{args.n_cells}_{args.nu:g}"
    P.export(out)
    print(f"wrote {out} ({P.dofs} dofs)")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    if args.problem:
        P = KktProblem.load(args.problem)
        if P.grid_meta is None:
            raise ConfigurationError("problem directory lacks grid metadata")
        n_cells, nu = P.grid_meta.n_cells, P.nu
    else:
        P = None
        n_cells, nu = args.n_cells, args.nu
    row, report = run_point(cfg, 0, args.method, n_cells, nu, args.lam, problem=P)
    if args.method == "pdp" and report is not None:
        from .pdp import LOG_COLUMNS

        print(",".join(LOG_COLUMNS))
        for line in report.log:
            print(line)
        print()
    _write(emit_table([row], args.format), args.out)
    return EXIT_SOLVER if row["failed"] else EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    rows = run_bench(cfg, threads=args.threads)
    _write(emit_table(rows, args.format), args.out or cfg.output)
    return EXIT_SOLVER if any(r["failed"] for r in rows) else EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_all

    results = run_all(sys.stdout)
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    if args.out:
        Path(args.out).write_text("\n".join(r.line() for r in results) + "\n")
    return EXIT_OK if n_ok == len(results) else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdpsolve", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        if fmt:
            p.add_argument("--format", choices=("csv", "markdown"), default="csv")

    g = sub.add_parser("gen", help="write a Poisson control problem as MatrixMarket files")
    g.add_argument("--n-cells", type=int, default=16)
    g.add_argument("--nu", type=float, default=1e-3)
    g.add_argument("--control", choices=("distributed", "boundary"), default="distributed")
    g.add_argument("--target", default="peak")
    common(g, fmt=False)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run one solver configuration")
    s.add_argument("--method", choices=METHODS, default="pdp")
    s.add_argument("--problem", help="directory written by 'gen'")
    s.add_argument("--n-cells", type=int, default=16)
    s.add_argument("--nu", type=float, default=1e-3)
    s.add_argument("--lambda", dest="lam", type=float, default=1e-2)
    common(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a parameter sweep")
    common(b)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="run the acceptance checks")
    common(v, fmt=False)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
