"""Command-line entry point: ``classp run | compare | emit-plotdata``.

Exit codes: 0 success, 2 invalid config or results file, 3 missing dataset
files, 4 numeric failure during training.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import build_run_config, config_hash, load_config, task_signature
from .errors import ConfigError, NumericError, FormatError
from .harness import aggregate, run_repeat

log = logging.getLogger("classp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
RESULT_COLUMNS = ["run_id", "arm", "seed", "phase", "eval_set", "metric", "value"]
PLOT_COLUMNS = ["arm", "seed", "phase", "eval_set", "metric", "value"]
PLOT_METRICS = ("accuracy", "updated_fraction", "aux_memory")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def run_arm(flat: dict, config_path) -> dict:
    """Train every repeat of one configured arm and return its JSON record."""
    cfg = build_run_config(flat, config_path)
    digest = config_hash(flat)
    arm = flat["name"]
    records, repeats = [], []
    for r in range(cfg.repeat_count):
        seed = cfg.seed + r
        t0 = time.perf_counter()
        rep = run_repeat(cfg, seed)
        repeats.append(rep)
        records.append({
            "run_id": f"{arm}-{digest[:8]}-s{seed}",
            "seed": seed,
            "phases": [
                {"phase": p.phase + 1, "accuracy": p.accuracy, "updated_fraction": p.updated_fraction,
                 "aux_memory": p.aux_memory, "epochs_run": p.epochs_run, "train_loss": p.train_loss}
                for p in rep.phases
            ],
            "forgetting": {"acc_initial": rep.forgetting.acc_initial, "acc_final": rep.forgetting.acc_final,
                           "forgetting_rate": rep.forgetting.forgetting_rate},
            "wall_time_s": time.perf_counter() - t0,
        })
    agg = aggregate(repeats)
    for p in agg["phases"]:
        p["phase"] += 1
    return {"arm": arm, "config": flat, "config_hash": digest, "records": records, "aggregate": agg}


def result_rows(arm_result: dict):
    arm = arm_result["arm"]
    for rec in arm_result["records"]:
        rid, seed = rec["run_id"], rec["seed"]
        first = None
        for p in rec["phases"]:
            for name, acc in p["accuracy"].items():
                first = first or name
                yield [rid, arm, seed, p["phase"], name, "accuracy", acc]
            for metric in ("updated_fraction", "aux_memory", "epochs_run", "train_loss"):
                yield [rid, arm, seed, p["phase"], "", metric, p[metric]]
        last = rec["phases"][-1]["phase"]
        for metric, v in rec["forgetting"].items():
            if v is not None:
                yield [rid, arm, seed, last, first, metric, v]
    agg = arm_result["aggregate"]
    rid = f"{arm}-{arm_result['config_hash'][:8]}-all"
    for p in agg["phases"]:
        for name, ms in p["accuracy"].items():
            for stat in ("mean", "std"):
                yield [rid, arm, "all", p["phase"], name, f"accuracy_{stat}", ms[stat]]
        for metric in ("updated_fraction", "aux_memory"):
            for stat in ("mean", "std"):
                yield [rid, arm, "all", p["phase"], "", f"{metric}_{stat}", p[metric][stat]]
    for metric in ("forgetting_rate", "retention"):
        if agg[metric] is not None:
            for stat in ("mean", "std"):
                yield [rid, arm, "all", len(agg["phases"]), "", f"{metric}_{stat}", agg[metric][stat]]


def write_results(out_dir: Path, arms: list, extra: dict | None = None, started: float = 0.0) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "metadata": {
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_time_s": time.perf_counter() - started,
            "classp_version": __version__,
        },
        "arms": arms,
    }
    if extra:
        doc.update(extra)
    (out_dir / "results.json").write_text(json.dumps(doc, indent=1))
    with open(out_dir / "results.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for arm in arms:
            for row in result_rows(arm):
                w.writerow([_fmt(v) for v in row])


def _overrides(args) -> list:
    items = list(args.set or [])
    if args.seed is not None:
        items.append(f"seed={args.seed}")
    if args.repeats is not None:
        items.append(f"repeats={args.repeats}")
    return items


def _out_dir(args, flat) -> Path:
    return Path(args.out or flat.get("output") or "results")


def cmd_run(args) -> int:
    started = time.perf_counter()
    flat = load_config(args.config, _overrides(args))
    arm = run_arm(flat, args.config)
    out = _out_dir(args, flat)
    write_results(out, [arm], started=started)
    print(format_table([arm]))
    print(f"results written to {out}/results.json and {out}/results.csv")
    return EXIT_OK


def retention_wins(arms: list) -> dict:
    """wins[a][b]: seeds where arm a's final first-task accuracy beats arm b's."""
    final = {a["arm"]: {r["seed"]: r["forgetting"]["acc_final"] for r in a["records"]} for a in arms}
    wins = {}
    for a in final:
        wins[a] = {}
        for b in final:
            if a != b:
                wins[a][b] = sum(final[a][s] > final[b][s] for s in final[a] if s in final[b])
    return wins


def format_table(arms: list) -> str:
    evals = list(arms[0]["aggregate"]["phases"][-1]["accuracy"])
    head = ["arm"] + [f"{e} (mean ± std)" for e in evals] + ["forgetting %", "updated", "aux mem"]
    lines = []
    for a in arms:
        last = a["aggregate"]["phases"][-1]
        row = [a["arm"]]
        row += [f"{last['accuracy'][e]['mean']:.2f} ± {last['accuracy'][e]['std']:.2f}" for e in evals]
        fr = a["aggregate"]["forgetting_rate"]
        row.append(f"{fr['mean']:.2f} ± {fr['std']:.2f}" if fr else "n/a")
        row.append(f"{last['updated_fraction']['mean']:.3f}")
        row.append(f"{last['aux_memory']['mean']:.0f}")
        lines.append(row)
    widths = [max(len(r[i]) for r in [head] + lines) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths))
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in lines])


def cmd_compare(args) -> int:
    started = time.perf_counter()
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least two configs")
    flats = [load_config(p, _overrides(args)) for p in args.configs]
    # pair seeds: every arm uses the first arm's seed and repeat count
    for f in flats[1:]:
        f["seed"], f["repeats"] = flats[0]["seed"], flats[0]["repeats"]
    ref = task_signature(flats[0])
    for path, f in zip(args.configs[1:], flats[1:]):
        other = task_signature(f)
        if other != ref:
            key = min(k for k in set(ref) | set(other) if ref.get(k) != other.get(k))
            raise ConfigError(f"{path}: task sequence differs from {args.configs[0]} at {key}")
    names = [f["name"] for f in flats]
    for i, f in enumerate(flats):
        if names.count(f["name"]) > 1:
            f["name"] = f"{f['name']}#{i + 1}"
    arms = [run_arm(f, p) for f, p in zip(flats, args.configs)]
    wins = retention_wins(arms)
    out = _out_dir(args, flats[0])
    write_results(out, arms, {"comparison": {"retention_wins": wins}}, started)
    table = format_table(arms)
    lines = [table, "", "first-task retention wins (row beats column, per paired seed):"]
    cols = [a["arm"] for a in arms]
    for a in cols:
        lines.append(f"  {a}: " + ", ".join(f"{b}={wins[a][b]}" for b in cols if b != a))
    text = "\n".join(lines)
    (out / "compare.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def plot_rows(doc: dict):
    for arm in doc.get("arms", []):
        for rec in arm["records"]:
            for p in rec["phases"]:
                for name, acc in p["accuracy"].items():
                    yield [arm["arm"], rec["seed"], p["phase"], name, "accuracy", acc]
                    yield [arm["arm"], rec["seed"], p["phase"], name, "updated_fraction", p["updated_fraction"]]
                    yield [arm["arm"], rec["seed"], p["phase"], name, "aux_memory", p["aux_memory"]]


def emit_plotdata(results_path, out_path=None) -> Path:
    results_path = Path(results_path)
    try:
        doc = json.loads(results_path.read_text())
        rows = list(plot_rows(doc))
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as e:
        raise FormatError(f"{results_path}: malformed results ({e})") from None
    out = Path(out_path) if out_path else results_path.with_name("plotdata.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return out


def cmd_emit(args) -> int:
    out = None
    if args.out:
        out = Path(args.out)
        out = out / "plotdata.csv" if out.suffix != ".csv" else out
    path = emit_plotdata(args.results, out)
    print(f"plot data written to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="classp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-phase progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, help="base seed (repeat r uses seed + r)")
        p.add_argument("--repeats", type=int, help="number of repeats")

    p = sub.add_parser("run", help="run one configured experiment")
    p.add_argument("config", nargs="?", help="TOML config path")
    p.add_argument("--config", dest="config_opt", metavar="PATH")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several arms on paired seeds")
    p.add_argument("configs", nargs="*", help="TOML config paths, one per arm")
    p.add_argument("--config", dest="config_opt", action="append", metavar="PATH")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("emit-plotdata", help="long-format CSV from a results.json")
    p.add_argument("results", help="results.json written by run or compare")
    p.add_argument("--out", metavar="PATH", help="output CSV file or directory")
    p.set_defaults(func=cmd_emit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "run":
        args.config = args.config or args.config_opt
        if not args.config:
            parser.error("run needs a config path")
    elif args.command == "compare":
        args.configs = list(args.configs) + list(args.config_opt or [])
    try:
        return args.func(args)
    except (ConfigError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
