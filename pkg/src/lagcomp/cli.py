"""Command-line entry points.

Subcommands:
  synth       generate a synthetic train/test dataset as CSV files
  fit         fit a task library from demonstration CSVs
  predict     prediction-error protocol over a held-out test set
  compensate  full-pipeline compensation protocol (fixed profile or sweep)
  serve       start the live teleoperation service
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .netsim import DelayProfile
from .promp import BasisConfig, fit_task, task_from_json, task_to_json
from .trajectory import load_csv, trim_at_onset
from .recognition import DEFAULT_VELOCITY_THRESHOLD
from .harness import (
    build_dataset,
    dump_motions,
    fit_library,
    run_compensation_experiment,
    run_prediction_experiment,
    run_sweep_experiment,
    sweep_task_specs,
    write_report,
)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _profile_from(config: dict) -> DelayProfile:
    if "profile" in config:
        return DelayProfile.from_json(json.dumps(config["profile"]))
    return DelayProfile(tau_f=0.750, sigma_f=0.100, tau_b=0.750)


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    specs = sweep_task_specs() if config.get("sweep") else None
    dataset = build_dataset(specs=specs, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_motions(dataset, out)
    counts = {
        "train": {k: len(v) for k, v in dataset.train.items()},
        "test": {k: len(v) for k, v in dataset.test.items()},
    }
    write_report({"seed": args.seed, "datasets": counts}, out)
    print(f"wrote dataset to {out}")
    return 0


def cmd_fit(args) -> int:
    config = _load_config(args.config)
    basis = BasisConfig(
        m=config.get("m", BasisConfig().m),
        h=config.get("h", 0.0),
        ridge=config.get("lambda", BasisConfig().ridge),
    )
    demos = [load_csv(p) for p in args.demos]
    threshold = config.get("velocity_threshold", DEFAULT_VELOCITY_THRESHOLD)
    demos = [trim_at_onset(d, threshold) for d in demos]
    task = fit_task(args.task_id, demos, basis)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"task_{args.task_id}.json"
    path.write_text(task_to_json(task) + "\n", encoding="utf-8")
    print(f"wrote {path}")
    return 0


def _dataset_and_library(args, config):
    specs = sweep_task_specs() if config.get("sweep") else None
    dataset = build_dataset(specs=specs, seed=args.seed)
    if config.get("library"):
        library = [
            task_from_json(Path(p).read_text(encoding="utf-8"))
            for p in config["library"]
        ]
    else:
        library = fit_library(dataset)
    return dataset, library


def cmd_predict(args) -> int:
    config = _load_config(args.config)
    dataset, library = _dataset_and_library(args, config)
    report = run_prediction_experiment(library, dataset)
    report["seed"] = args.seed
    report["kind"] = "prediction"
    path = write_report(report, args.out)
    print(f"wrote {path}")
    print(f"recognition accuracy: {report['recognition_accuracy']:.3f}")
    for key, val in report["summary"].items():
        print(f"  {key}: {val['mean'] * 1000:.3f} mm")
    return 0


def cmd_compensate(args) -> int:
    config = _load_config(args.config)
    dataset, library = _dataset_and_library(args, config)
    if args.sweep:
        report = run_sweep_experiment(
            library,
            dataset,
            seed=args.seed,
            task_filter=config.get("task_filter"),
        )
        report["kind"] = "sweep"
    else:
        profile = _profile_from(config)
        report = run_compensation_experiment(
            library, dataset, profile, seed=args.seed, with_plant=not args.no_plant
        )
        report["kind"] = "compensation"
    report["seed"] = args.seed
    path = write_report(report, args.out)
    print(f"wrote {path}")
    if args.sweep:
        for point in report["points"]:
            print(
                f"  rt={point['round_trip_s']:.1f}s"
                f" with-transition={1000 * (point['compensated_with_transition'] or 0):.2f}mm"
            )
    else:
        for key, val in report["summary"].items():
            print(f"  {key}: {val['mean'] * 1000:.3f} mm")
    return 0


def cmd_serve(args) -> int:
    import asyncio

    from .service import SessionConfig, serve

    config = _load_config(args.config)
    session = SessionConfig.from_dict(config, seed=args.seed)
    try:
        asyncio.run(serve(args.host, args.port, session))
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lagcomp",
        description="anticipatory teleoperation toolkit",
    )
    parser.add_argument("--seed", type=int, default=0, help="experiment rng seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("fit", help="fit a task library from demo CSVs")
    p.add_argument("task_id")
    p.add_argument("demos", nargs="+")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("predict", help="prediction-error protocol")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("compensate", help="compensation protocol")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--sweep", action="store_true", help="sweep round trips")
    p.add_argument("--no-plant", action="store_true", help="skip the plant")
    p.set_defaults(fn=cmd_compensate)

    p = sub.add_parser("serve", help="start the live teleoperation service")
    p.add_argument("--config", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8791)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
