"""Command-line entry point.

Subcommands: synth (generate a dataset), train (one model), grid (full
experiment grid), diagnose (over-smoothing analysis), report (re-render
tables and plots from a saved results.csv). All deliberate failures
exit nonzero and print ``error[<category>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import MetroflowError
from .data import load_dataset_dir, save_dataset, synthesize_dataset
from .experiments import (
    ExperimentResult,
    GridSpec,
    oversmoothing_diagnostic,
    run_grid,
)
from .model import ModelConfig, assemble, save_checkpoint
from .reporting import emit_report
from .training import split_years, train

__all__ = ["main"]

_EXIT_CODES = {
    "config": 2,
    "data": 3,
    "unknown-station": 4,
    "shape": 5,
    "contract": 6,
    "graph": 7,
    "generation": 8,
    "training": 9,
    "diagnostic": 10,
    "report": 11,
    "checkpoint": 12,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metroflow",
        description="Passenger-flow prediction on k-hop station graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--stations", type=int, default=40)
    p.add_argument("--years", type=int, default=13)
    p.add_argument("--lines", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data", help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train one model variant")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", help="model config file (key=value lines)")
    p.add_argument("--variant")
    p.add_argument("--k", type=int)
    p.add_argument("--sampling-rate", type=float, dest="sampling_rate")
    p.add_argument("--aggregator", choices=("max_pool", "mean"))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--task", default="late_entry")
    p.add_argument("--loss", choices=("mse", "mae"), default="mse")
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("grid", help="run an experiment grid")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", help="grid config file; default grid if omitted")
    p.add_argument("--epochs", type=int, help="override the spec's epochs")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", default="results", help="output directory")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("diagnose", help="over-smoothing diagnostic")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--selector", default="all",
                   help='"all", "zone:<z>", or comma-separated station ids')
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--task", default="late_entry")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--out", default="diagnostic", help="output directory")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("report", help="re-render tables and plots")
    p.add_argument("--results", required=True, help="a results.csv file")
    p.add_argument("--out", default="report", help="output directory")
    p.set_defaults(func=_cmd_report)

    return parser


def _cmd_synth(args) -> int:
    dataset = synthesize_dataset(args.stations, args.years, args.lines,
                                 seed=args.seed)
    paths = save_dataset(dataset, args.out)
    edges = int(dataset.base_graph.adj.sum()) // 2
    print(f"wrote {len(dataset.stations)} stations, "
          f"{len(dataset.years)} years, {len(dataset.line_ids)} lines "
          f"({edges} edges) to {Path(args.out)}")
    for kind in sorted(paths):
        print(f"  {paths[kind]}")
    return 0


def _model_config(args) -> ModelConfig:
    if args.config:
        config = ModelConfig.from_config_file(args.config)
        overrides = {}
        for key in ("variant", "k", "sampling_rate", "aggregator",
                    "seed", "epochs"):
            value = getattr(args, key)
            if value is not None:
                overrides[key] = value
        if overrides:
            merged = {f: getattr(config, f)
                      for f in config.__dataclass_fields__}
            merged.update(overrides)
            config = ModelConfig(**merged)
        return config
    kwargs = {}
    for key in ("variant", "k", "sampling_rate", "aggregator",
                "seed", "epochs"):
        value = getattr(args, key)
        if value is not None:
            kwargs[key] = value
    return ModelConfig(**kwargs)


def _cmd_train(args) -> int:
    dataset = load_dataset_dir(args.data)
    config = _model_config(args)
    model = assemble(config, dataset.base_graph,
                     hypergraph=dataset.hypergraph(), social=dataset.social)
    split = split_years(dataset.years, seed=config.seed)
    report = train(model, dataset, args.task, split, epochs=config.epochs,
                   loss=args.loss, log_every=args.log_every)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "train_report.json")
    save_checkpoint(model, out / "model.ckpt")
    print(report.csv_header())
    print(report.csv_row())
    print(f"wrote {out / 'train_report.json'} and {out / 'model.ckpt'}")
    return 0


def _cmd_grid(args) -> int:
    dataset = load_dataset_dir(args.data)
    spec = (GridSpec.from_config_file(args.config) if args.config
            else GridSpec.default())
    if args.epochs is not None:
        spec = GridSpec(variants=spec.variants, hops=spec.hops,
                        tasks=spec.tasks, seeds=spec.seeds,
                        epochs=args.epochs)
    result = run_grid(spec, dataset, workers=args.workers,
                      log=not args.quiet)
    files = emit_report(result, args.out)
    print(f"{result.completed} of {len(result.rows)} cells completed "
          f"({result.failed} failed)")
    for f in files:
        print(f"  {f}")
    return 0


def _cmd_diagnose(args) -> int:
    dataset = load_dataset_dir(args.data)
    seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    report = oversmoothing_diagnostic(dataset, args.selector, k=args.k,
                                      task=args.task, seeds=seeds,
                                      epochs=args.epochs)
    files = emit_report(report, args.out)
    print(f"groups with identical closed neighborhoods: "
          f"{len(report.closed_groups)}; twin pairs: {len(report.twin_pairs)}")
    print(f"mean aggregator beats gcn on {report.sage_wins} of "
          f"{len(report.seeds)} seeds")
    for f in files:
        print(f"  {f}")
    return 0


def _cmd_report(args) -> int:
    result = ExperimentResult.from_csv(args.results)
    files = emit_report(result, args.out)
    for f in files:
        print(f"  {f}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MetroflowError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return _EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
