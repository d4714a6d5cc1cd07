"""``valagg`` command line: run | sweep | verify | plot.

Exit codes: 0 completed, 2 configuration error, 3 I/O error, 4 verification
failure (``verify`` only).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment as ex
from .plotting import PLOT_KINDS, plot_traces
from .traceio import TraceFormatError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_VERIFY = 0, 2, 3, 4

# flag -> config key
CONFIG_FLAGS = {
    "--instance": "instance", "--theta": "theta", "--M": "M", "--b": "b", "--alpha": "alpha",
    "--dim": "dim", "--x1": "x1", "--iters": "iters", "--transformer": "transformer",
    "--lambda": "lambda", "--q": "q", "--regularizer": "regularizer", "--m0": "m0", "--r": "r",
    "--seed": "seed", "--seeds": "seeds", "--noise": "noise", "--sigma": "sigma", "--a": "a",
    "--a-b": "a_b", "--k-star": "k_star", "--sigma0-sq": "sigma0_sq", "--T": "T",
    "--gain-lo": "gain_lo", "--gain-hi": "gain_hi", "--emit": "emit",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"config error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--out", help="output directory (default: $VAL_AGG_OUT or ./val_agg_out)")
    for flag, key in CONFIG_FLAGS.items():
        p.add_argument(flag, dest=f"cfg_{key}", metavar=key.upper() if len(key) > 1 else key,
                       help=f"config key '{key}'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="valagg", description="Value aggregation (follow-the-leader) experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="execute one configuration")
    _add_config_flags(p)

    p = sub.add_parser("sweep", help="execute the cartesian product of comma-separated axes")
    _add_config_flags(p)
    p.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
    p.add_argument("--cap", type=int, default=ex.SWEEP_CAP, help="maximum number of grid points")

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--only", help="comma-separated check ids or tags (e.g. c4,thm2,lemma3)")
    p.add_argument("--corrupt-theta", type=float, default=1.0, help=argparse.SUPPRESS)

    p = sub.add_parser("plot", help="log-log SVG of one or more trace CSVs")
    p.add_argument("traces", nargs="+", help="trace CSV files")
    p.add_argument("--kind", choices=PLOT_KINDS, default="self_value")
    p.add_argument("--out", help="SVG path (default: first trace with .svg suffix)")
    return parser


def _raw_config(args) -> dict:
    raw = ex.read_config_file(args.config) if args.config else {}
    out = args.out if args.out is not None else (raw.pop("out", (None, None))[0])
    jobs = raw.pop("jobs", (None, None))[0]
    for key in CONFIG_FLAGS.values():
        v = getattr(args, f"cfg_{key}")
        if v is not None:
            if key == "seeds":
                raw.pop("seed", None)
            elif key == "seed":
                raw.pop("seeds", None)
            raw[key] = (v, None)
    return raw, out, jobs


def _prepare_out(out) -> Path:
    path = ex.output_dir(out)
    ex.ensure_writable(path)
    return path


def cmd_run(args) -> int:
    raw, out, _ = _raw_config(args)
    cfg, axes = ex.resolve(raw)
    multi = {k: v for k, v in axes.items() if len(v) > 1}
    if multi:
        raise ex.ConfigError(f"lists are only allowed with 'sweep' (got {sorted(multi)})")
    path = _prepare_out(out)
    record = ex.run_point(cfg, path, "trace")
    fitted = "n/a" if record.fitted_exponent is None else f"{record.fitted_exponent:.4f}"
    print(f"final F(x_N,x_N) = {record.final_value!r}; best n = {record.best_index}; "
          f"fitted exponent {fitted} (theory {record.theoretical_exponent:.4f})")
    failed = [k for k, v in record.bounds.items() if not v]
    if failed:
        print(f"bounds not satisfied: {', '.join(failed)}")
    if record.aborted:
        print(f"aborted: {record.abort_reason}")
    print(f"outputs in {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw, out, jobs = _raw_config(args)
    cfg, axes = ex.resolve(raw)
    jobs = args.jobs if args.jobs is not None else int(jobs or 1)
    ex.sweep_points(cfg, axes, args.cap)  # validate and enforce the cap before touching disk
    path = _prepare_out(out)
    records = ex.run_sweep(cfg, axes, path, jobs=jobs, cap=args.cap)
    print(f"{len(records)} points written to {path / 'sweep.jsonl'} and {path / 'sweep_table.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks
    only = [s.strip() for s in args.only.split(",") if s.strip()] if args.only else None
    try:
        results = run_checks(only, theta_scale=args.corrupt_theta, report=lambda r: print(r.line(), flush=True))
    except ValueError as exc:
        raise ex.ConfigError(str(exc)) from None
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failed: " + ", ".join(r.check_id for r in failed))
        return EXIT_VERIFY
    return EXIT_OK


def cmd_plot(args) -> int:
    svg = Path(args.out) if args.out else Path(args.traces[0]).with_suffix(".svg")
    plot_traces(args.traces, args.kind, svg)
    print(f"wrote {svg}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceFormatError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
