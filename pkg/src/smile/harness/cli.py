"""Command-line entry point.

Subcommands::

    gen-data    sample a synthetic task and write it to a task file
    train       base-stage training; writes a head file
    adapt       few-shot adaptation of a saved head
    eval        metrics report for a saved head on a task file
    experiment  multi-arm driver (defaults to the reference experiment)
    check       property suite over set functions, SMI and losses
    ablate      eta / lambda / kernel / component / objective sweeps

Every subcommand takes ``--config FILE`` (JSON) and ``--seed N``; other
flags mirror config keys and override the file.  Exit status: 0 success,
1 configuration error, 2 property failure, 3 divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..kernel import KernelSpec
from ..learner import ConfigError, ProjectionHead, SyntheticTaskSpec, TrainConfig, TrainingDiverged
from ..learner import base_train, few_shot_adapt, generate_task
from ..learner.io import FormatError, load_head, load_task, save_head, save_task
from ..loss import LossConfig
from .experiment import SWEEPS, ExperimentConfig, dump_json, evaluate_head, load_config, run_experiment
from .properties import run_property_suite
from .reference import REFERENCE_ADAPT, REFERENCE_BASE, reference_config

EXIT_OK, EXIT_CONFIG, EXIT_PROPERTY, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("smile")

# keys that are never exposed as flags (set through dedicated options)
_SKIP = {"stage", "loss", "seed"}


def _flag_type(default):
    if isinstance(default, bool):
        return lambda s: s.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def _add_fields(parser: argparse.ArgumentParser, cls, title: str) -> None:
    group = parser.add_argument_group(title)
    for f in dataclasses.fields(cls):
        if f.name in _SKIP or f.default is dataclasses.MISSING:
            continue
        group.add_argument("--" + f.name.replace("_", "-"), dest=f"{title}.{f.name}",
                           type=_flag_type(f.default), default=None, metavar=f.name.upper())


def _overrides(args, title: str) -> dict:
    prefix = title + "."
    return {k[len(prefix):]: v for k, v in vars(args).items() if k.startswith(prefix) and v is not None}


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _section(args, key: str) -> dict:
    """The ``key`` section of an experiment config, or the whole file if it has no such section."""
    if not args.config:
        return {}
    data = _read_json(args.config)
    if {"task", "base", "adapt", "arms"} <= set(data):
        return dict(data[key])
    return data


def _task_spec(args) -> SyntheticTaskSpec:
    d = {**_section(args, "task"), **_overrides(args, "task")}
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        return SyntheticTaskSpec(**d)
    except TypeError as exc:
        raise ConfigError(f"task: {exc}") from None


def _loss_from_args(args, current):
    if args.loss is None:
        return current
    if args.loss in ("ce_only", "supcon"):
        return args.loss
    kernel = KernelSpec(args.kernel or "cosine")
    return LossConfig(args.loss, eta=args.eta if args.eta is not None else 0.5,
                      lam=args.lam if args.lam is not None else 1.0, kernel=kernel)


def _train_config(args, stage: str, default: TrainConfig) -> TrainConfig:
    d = {**default.to_dict(), **_section(args, "base" if stage == "base" else "adapt"),
         **_overrides(args, "train"), "stage": stage}
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = TrainConfig.from_dict(d)
    if stage == "adapt":
        cfg = dataclasses.replace(cfg, loss=_loss_from_args(args, cfg.loss))
    return cfg


# -- subcommands ------------------------------------------------------------

def cmd_gen_data(args) -> int:
    spec = _task_spec(args)
    save_task(generate_task(spec), args.out)
    print(f"wrote {args.out}: {spec.num_base} base / {spec.num_novel} novel classes, seed {spec.seed}")
    return EXIT_OK


def cmd_train(args) -> int:
    task = load_task(args.task)
    cfg = _train_config(args, "base", REFERENCE_BASE)
    head_seed = args.seed if args.seed is not None else cfg.seed
    embed = args.embed_dim or (task.spec.embed_dim if task.spec else 128)
    head, tlog = base_train(task, ProjectionHead(task.x.shape[1], embed, seed=head_seed), cfg)
    save_head(head, args.out)
    print(f"wrote {args.out}: base accuracy {tlog.entries[-1]['base_accuracy']:.4f}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    task = load_task(args.task)
    head = load_head(args.head)
    cfg = _train_config(args, "adapt", REFERENCE_ADAPT)
    adapted, alog = few_shot_adapt(task, head, cfg)
    save_head(adapted, args.out)
    last = alog.entries[-1]
    print(f"wrote {args.out}: base {last['base_accuracy']:.4f} novel {last['novel_accuracy']:.4f}")
    if args.report:
        report = evaluate_head(adapted, task, alog, cfg.iterations)
        Path(args.report).write_text(dump_json(report.to_dict(task.base_ids, task.novel_ids)))
    return EXIT_OK


def cmd_eval(args) -> int:
    task = load_task(args.task)
    head = load_head(args.head)
    if head.prototypes is None:
        raise ConfigError(f"{args.head} carries no prototypes; train or adapt it first")
    report = evaluate_head(head, task)
    text = dump_json(report.to_dict(task.base_ids, task.novel_ids))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else reference_config()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.output_dir:
        cfg = dataclasses.replace(cfg, output_dir=args.output_dir)
    return cfg


def _print_summary(summary: dict) -> None:
    for row in summary["arms"]:
        print(f"{row['arm']:>12}  base {row['base_accuracy']:.4f}  novel {row['novel_accuracy']:.4f}"
              f"  delta {row['forgetting_delta']:+.4f}  conv {row['convergence_iters']}")
    for name, err in summary["failed"].items():
        print(f"{name:>12}  FAILED  {err}")


def _status(summary: dict) -> int:
    if any(str(e).startswith("TrainingDiverged") for e in summary["failed"].values()):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_experiment(args) -> int:
    result = run_experiment(_experiment_config(args))
    _print_summary(result.summary)
    print(f"reports in {result.config.output_dir}")
    return _status(result.summary)


def cmd_ablate(args) -> int:
    cfg = _experiment_config(args)
    factory = SWEEPS[args.sweep]
    arms = factory(variant=args.variant) if args.variant and args.sweep != "objective" else factory()
    out = args.output_dir or str(Path(cfg.output_dir) / f"ablate_{args.sweep}")
    cfg = dataclasses.replace(cfg, arms=arms, output_dir=out)
    result = run_experiment(cfg)
    _print_summary(result.summary)
    print(f"reports in {out}")
    return _status(result.summary)


def cmd_check(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.config:
        seed = int(_read_json(args.config).get("seed", seed))
    report = run_property_suite(seed=seed)
    print(report.text())
    print("all properties hold" if report.passed else f"{len(report.failures())} check(s) failed")
    return EXIT_OK if report.passed else EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smile", description="Submodular information losses on synthetic few-shot tasks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen-data", cmd_gen_data, "write a synthetic task file")
    sp.add_argument("--out", required=True)
    _add_fields(sp, SyntheticTaskSpec, "task")

    sp = add("train", cmd_train, "base-stage training")
    sp.add_argument("--task", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--embed-dim", type=int)
    _add_fields(sp, TrainConfig, "train")

    sp = add("adapt", cmd_adapt, "few-shot adaptation of a saved head")
    sp.add_argument("--task", required=True)
    sp.add_argument("--head", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", help="also write a metrics report here")
    sp.add_argument("--loss", choices=["ce_only", "supcon", "flmi", "gcmi"])
    sp.add_argument("--eta", type=float)
    sp.add_argument("--lam", "--lambda", dest="lam", type=float)
    sp.add_argument("--kernel", choices=["cosine", "euclidean", "rbf"])
    _add_fields(sp, TrainConfig, "train")

    sp = add("eval", cmd_eval, "metrics for a saved head")
    sp.add_argument("--task", required=True)
    sp.add_argument("--head", required=True)
    sp.add_argument("--out")

    sp = add("experiment", cmd_experiment, "multi-arm experiment")
    sp.add_argument("--output-dir")

    sp = add("check", cmd_check, "run the property suite")

    sp = add("ablate", cmd_ablate, "grid sweep over one knob")
    sp.add_argument("--sweep", choices=sorted(SWEEPS), required=True)
    sp.add_argument("--variant", choices=["flmi", "gcmi"])
    sp.add_argument("--output-dir")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
