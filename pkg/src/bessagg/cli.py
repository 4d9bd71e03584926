"""Command-line front end.

Subcommands::

    bessagg synth        write a synthetic data directory
    bessagg ingest-check validate a data directory
    bessagg run          train, simulate the selected cases, write results
    bessagg report       summarize (and optionally plot) a results directory

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 I/O error.
Failures print a JSON error report on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .core import HOURS, InvalidArgumentError
from .dataio import emit, format_time, ingest, read_records, write_records
from .optimize import dump_qp
from .sim import CASE_NAMES, SolverFailure, comparison_rows, compare_cases
from .synth import generate

logger = logging.getLogger("bessagg")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _cases(text: str) -> tuple:
    try:
        cases = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid case list {text!r}") from None
    if not cases or any(c not in CASE_NAMES for c in cases):
        raise argparse.ArgumentTypeError(f"cases must be drawn from {sorted(CASE_NAMES)}")
    return cases


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bessagg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, days_help):
        p.add_argument("--config", type=Path, help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--days", type=int, help=days_help)

    p = sub.add_parser("synth", help="generate a synthetic data directory")
    common(p, "total days to generate (training plus evaluation)")

    p = sub.add_parser("ingest-check", help="validate a data directory")
    p.add_argument("data_dir", nargs="?", type=Path, help="data directory (default: data.dir from the config)")
    p.add_argument("--config", type=Path, help="TOML configuration file")

    p = sub.add_parser("run", help="simulate the selected cases")
    common(p, "evaluation days to simulate")
    p.add_argument("--case", type=_cases, help="comma-separated cases, e.g. 1,2,3")
    p.add_argument("--dump-failures", action="store_true", help="write the failing program on solver errors")

    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("--out", type=Path, required=True, help="results directory written by run")
    p.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
    return parser


def _load_dataset(cfg: RunConfig):
    if cfg.data_source == "files":
        return ingest(cfg.data_dir, cfg.battery())
    return generate(cfg.synth_spec())


def cmd_synth(args, cfg: RunConfig) -> int:
    cfg = cfg.with_overrides(seed=args.seed, synth_days=args.days)
    out = args.out or cfg.data_dir or Path("data")
    data = generate(cfg.synth_spec())
    emit(data, out)
    print(json.dumps({"out": str(out), "units": len(data.units), "days": data.n_days}))
    return EXIT_OK


def cmd_ingest_check(args, cfg: RunConfig) -> int:
    root = args.data_dir or cfg.data_dir
    if root is None:
        raise InvalidArgumentError("data.dir: no data directory given")
    data = ingest(root, cfg.battery())
    start = data.da_prices.start_time
    print(json.dumps({
        "data_dir": str(root),
        "units": [u.id for u in data.units],
        "hours": len(data.da_prices),
        "days": data.n_days,
        "start": format_time(start),
        "end": format_time(data.da_prices.end_time),
    }))
    return EXIT_OK


def _window(cfg: RunConfig, n_days: int) -> tuple[int, int]:
    train = cfg.train_days if cfg.train_days is not None else n_days - cfg.eval_days
    if train < 31 or train + cfg.eval_days > n_days:
        raise InvalidArgumentError(
            f"data.eval_days: {cfg.eval_days} evaluation days leave {train} training days of {n_days}")
    return train, cfg.eval_days


def cmd_run(args, cfg: RunConfig) -> int:
    cfg = cfg.with_overrides(seed=args.seed, eval_days=args.days, cases=args.case, out=args.out)
    out = Path(cfg.out)
    data = _load_dataset(cfg)
    train, evaluation = _window(cfg, data.n_days)
    t0 = time.perf_counter()
    try:
        results = compare_cases(cfg.case_configs(), data, train, evaluation, cfg.market())
    except SolverFailure as exc:
        if args.dump_failures and exc.qp is not None:
            dump_qp(exc.qp, out / "failed_program")
        raise
    elapsed = time.perf_counter() - t0
    write_results(out, results, data, train)
    summary = {
        "cases": comparison_rows(results),
        "train_days": train,
        "eval_days": evaluation,
        "seed": cfg.seed,
        "units": len(data.units),
        "seconds": elapsed,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps({"out": str(out), "totals": {r["case"]: r["total"] for r in summary["cases"]}}))
    return EXIT_OK


def write_results(out: Path, results: dict, data, train_days: int) -> None:
    day_rows, dispatch_rows = [], []
    for case, res in sorted(results.items()):
        for r_idx, days in enumerate(res.days):
            for d_idx, day in enumerate(days):
                row = {"case": case, "resource": r_idx, "day": d_idx, "date": day.label}
                row.update(day.cost.as_dict())
                row.update({"carry_in": float(day.storage_traj[0]), "carry_out": day.carry_out,
                            "solve_seconds": float(day.solve_times.sum())})
                day_rows.append(row)
                for h in range(HOURS):
                    dispatch_rows.append({
                        "case": case, "resource": r_idx, "day": d_idx, "hour": h + 1,
                        "commitment": float(day.schedule.commitments[h]), "rt_bid": float(day.rt_bids[h]),
                        "storage_start": float(day.storage_traj[h]), "storage_end": float(day.storage_traj[h + 1]),
                        "da_price": float(day.da_prices[h]), "rt_price": float(day.rt_prices[h]),
                    })
    write_records(out / "day_results.csv", day_rows)
    write_records(out / "dispatch.csv", dispatch_rows)
    write_records(out / "comparison.csv", comparison_rows(results))
    write_records(out / "scenario_fan.csv", _fan_rows(results))


def _fan_rows(results: dict) -> list[dict]:
    """Day-ahead scenarios of the first simulated day of the first stochastic case."""
    rows = []
    for case, res in sorted(results.items()):
        if case == 2:
            continue
        day = res.days[0][0]
        for quantity, (point, reduced) in day.da_scenarios.items():
            for h in range(HOURS):
                rows.append({"case": case, "quantity": quantity, "scenario": "forecast", "probability": 1.0,
                             "hour": h + 1, "value": float(point[h])})
            for k, (vals, prob) in enumerate(zip(reduced.values, reduced.probabilities)):
                for h in range(HOURS):
                    rows.append({"case": case, "quantity": quantity, "scenario": str(k), "probability": float(prob),
                                 "hour": h + 1, "value": float(vals[h])})
        break
    return rows


def cmd_report(args, cfg: RunConfig) -> int:
    out = args.out
    comparison = read_records(out / "comparison.csv")
    days = read_records(out / "day_results.csv")
    width = max(len(r["name"]) for r in comparison)
    print(f"{'case':>4}  {'setting':<{width}}  {'total cost':>12}  {'days':>4}")
    for r in comparison:
        n = len({row["day"] for row in days if row["case"] == r["case"]})
        print(f"{r['case']:>4}  {r['name']:<{width}}  {float(r['total']):>12.3f}  {n:>4}")
    if args.plot:
        render_plots(out)
    return EXIT_OK


def render_plots(out: Path) -> list[Path]:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise InvalidArgumentError("--plot needs matplotlib (install the 'plot' extra)") from None
    written = []
    fan = read_records(out / "scenario_fan.csv")
    if fan:
        quantities = sorted({r["quantity"] for r in fan})
        fig, axes = plt.subplots(1, len(quantities), figsize=(4 * len(quantities), 3))
        for ax, q in zip(np.atleast_1d(axes), quantities):
            for name in sorted({r["scenario"] for r in fan if r["quantity"] == q}):
                pts = [(int(r["hour"]), float(r["value"])) for r in fan if r["quantity"] == q and r["scenario"] == name]
                hrs, vals = zip(*pts)
                ax.plot(hrs, vals, "k-" if name == "forecast" else "-", lw=2 if name == "forecast" else 1)
            ax.set_title(q)
            ax.set_xlabel("hour")
        fig.tight_layout()
        written.append(out / "scenario_fan.png")
        fig.savefig(written[-1])
        plt.close(fig)
    dispatch = [r for r in read_records(out / "dispatch.csv") if r["day"] == "0" and r["resource"] == "0"]
    if dispatch:
        fig, ax = plt.subplots(figsize=(6, 3))
        for case in sorted({r["case"] for r in dispatch}):
            rows = [r for r in dispatch if r["case"] == case]
            ax.step([int(r["hour"]) for r in rows], [float(r["storage_end"]) for r in rows], where="post",
                    label=f"case {case}")
        ax.set_xlabel("hour")
        ax.set_ylabel("storage (kWh)")
        ax.legend()
        fig.tight_layout()
        written.append(out / "dispatch.png")
        fig.savefig(written[-1])
        plt.close(fig)
    return written


COMMANDS = {"synth": cmd_synth, "ingest-check": cmd_ingest_check, "run": cmd_run, "report": cmd_report}


def _fail(code: int, exc: BaseException, out: Path | None = None, **extra) -> int:
    report = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    report.update(extra)
    text = json.dumps(report)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    out = getattr(args, "out", None)
    try:
        cfg = load_config(getattr(args, "config", None))
        return COMMANDS[args.command](args, cfg)
    except SolverFailure as exc:
        return _fail(EXIT_SOLVER, exc, out, hour=exc.hour, storage=exc.state)
    except InvalidArgumentError as exc:
        return _fail(EXIT_VALIDATION, exc, out, field=getattr(exc, "field", None))
    except OSError as exc:
        return _fail(EXIT_IO, exc, out)


if __name__ == "__main__":
    sys.exit(main())
