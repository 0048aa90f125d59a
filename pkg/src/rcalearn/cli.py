"""Command line entry points: simulate, featurize, run, evaluate.

Exit codes: 0 success, 1 usage or bad config, 2 data problem (including "no
incident detected"), 3 solver or training non-convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import telemetry
from .config import RunConfig, apply_overrides, load_run_config
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    TrainingDivergedError,
)
from .evaluate import FaultCase, summarize
from .pipeline import run_online
from .simulate import ScenarioConfig, simulate

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract reserves 2
    # for data problems, so remap to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="rcalearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[], help="generate a synthetic incident")
    p_sim.add_argument("--config", help="YAML file; its scenario section is used")
    p_sim.add_argument("--out", default="case", help="output directory")
    p_sim.add_argument("--seed", type=int, help="override the scenario seed")
    p_sim.set_defaults(func=_cmd_simulate)

    p_feat = sub.add_parser("featurize", help="turn raw logs into count series")
    p_feat.add_argument("--config", required=True, help="YAML file with data paths")
    p_feat.add_argument("--out", help="features CSV path (default: <out_dir>/log_features.csv)")
    p_feat.set_defaults(func=_cmd_featurize)

    p_run = sub.add_parser("run", help="run online root cause analysis")
    p_run.add_argument("--config", required=True, help="YAML run configuration")
    p_run.add_argument("--out", help="override the output directory")
    p_run.add_argument("--seed", type=int, help="override the run seed")
    p_run.add_argument("--max-batches", type=int, help="cap on streaming batches")
    p_run.add_argument("--top-k", type=int, help="ranking depth per batch")
    p_run.set_defaults(func=_cmd_run)

    p_eval = sub.add_parser("evaluate", help="score finished runs against ground truth")
    p_eval.add_argument("--report", action="append", required=True,
                        help="report.jsonl from a run (repeatable)")
    p_eval.add_argument("--truth", action="append", required=True,
                        help="ground_truth.json matching the report, in order")
    p_eval.add_argument("--ks", default="1,3,5", help="comma-separated K values")
    p_eval.set_defaults(func=_cmd_evaluate)
    return parser


def _load_scenario(config_path: str | None, seed: int | None) -> ScenarioConfig:
    if config_path:
        cfg = load_run_config(config_path)
        scenario = cfg.scenario if cfg.scenario is not None else ScenarioConfig()
    else:
        scenario = ScenarioConfig()
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    return scenario


def _cmd_simulate(args) -> int:
    scenario = _load_scenario(args.config, args.seed)
    case = simulate(scenario)
    paths = case.write(args.out)
    json.dump(
        {
            "out_dir": args.out,
            "files": sorted(paths.values()),
            "entities": len(case.entities),
            "grid_steps": len(case.kpi.timestamps),
            "log_lines": len(case.log_lines),
        },
        sys.stdout, indent=2,
    )
    print()
    return 0


def _cmd_featurize(args) -> int:
    cfg = load_run_config(args.config)
    if not cfg.data.logs or not cfg.data.kpi:
        raise ConfigError("featurize needs data.logs and data.kpi in the config")
    kpi = telemetry.read_kpi_csv(cfg.data.kpi)
    lines = telemetry.read_logs_jsonl(cfg.data.logs)
    features = telemetry.featurize_logs(
        lines, np.asarray(kpi.timestamps),
        keywords=cfg.featurize.keywords,
        prefix_depth=cfg.featurize.prefix_depth,
    )
    out = args.out or os.path.join(cfg.out_dir, "log_features.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    telemetry.write_metrics_csv(features.series, out)
    json.dump(
        {
            "out": out,
            "lines": len(lines),
            "skipped": features.skipped_lines,
            "entities": len({s.entity for s in features.series}),
            "templates": sum(features.template_counts.values()),
        },
        sys.stdout, indent=2,
    )
    print()
    return 0


def _cmd_run(args) -> int:
    cfg = apply_overrides(
        load_run_config(args.config),
        seed=args.seed,
        out_dir=args.out,
        max_batches=args.max_batches,
        top_k=args.top_k,
    )
    result = run_online(cfg)
    with open(result.summary_path, "r", encoding="utf-8") as handle:
        sys.stdout.write(handle.read())
    return 0


def _parse_ks(raw: str) -> list[int]:
    try:
        ks = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--ks must be comma-separated integers, got {raw!r}") from exc
    if not ks or any(k < 1 for k in ks):
        raise ConfigError("--ks values must be positive")
    return ks


def _final_ranking(report_path: str) -> tuple[list[str], list[float]]:
    last = None
    seconds: list[float] = []
    with open(report_path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                last = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{report_path}:{lineno}: bad JSON: {exc}") from exc
            seconds.append(float(last.get("train_seconds", 0.0)))
    if last is None:
        raise DataError(f"{report_path}: report holds no batches")
    return [row["entity"] for row in last["ranking"]], seconds


def _cmd_evaluate(args) -> int:
    ks = _parse_ks(args.ks)
    if len(args.report) != len(args.truth):
        raise DataError(
            f"{len(args.report)} reports but {len(args.truth)} truth files"
        )
    cases = []
    all_seconds: list[float] = []
    for report_path, truth_path in zip(args.report, args.truth):
        ranking, seconds = _final_ranking(report_path)
        all_seconds.extend(seconds)
        try:
            with open(truth_path, "r", encoding="utf-8") as handle:
                truth = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read ground truth {truth_path}: {exc}") from exc
        if "root_causes" not in truth or not truth["root_causes"]:
            raise DataError(f"{truth_path}: missing root_causes")
        cases.append(FaultCase(
            case_id=report_path,
            true_causes=frozenset(truth["root_causes"]),
            ranking=tuple(ranking),
        ))
    metrics = summarize(cases, ks)
    out = {
        "pr": {str(k): v for k, v in metrics["pr"].items()},
        "map": {str(k): v for k, v in metrics["map"].items()},
        "mrr": metrics["mrr"],
        "time_s": sum(all_seconds) / len(all_seconds) if all_seconds else 0.0,
    }
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="[%(levelname)s] %(message)s"
    )
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
