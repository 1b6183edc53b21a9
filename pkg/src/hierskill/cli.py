"""Command-line entry points: train, eval, generalize, export-plots."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .persistence import CheckpointError, load_checkpoint, read_metrics

OUT_ENV = "HIERSKILL_OUT"

log = logging.getLogger("hierskill")


def _load_run_config(args) -> cfgmod.RunConfig:
    overrides: dict = {}
    if args.desk_scale:
        overrides = cfgmod.merge(overrides, cfgmod.DESK_SCALE)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.flat_baseline:
        overrides["flat_baseline"] = True
    out = args.out or os.environ.get(OUT_ENV)
    if out:
        overrides["out_dir"] = out
    if args.config:
        return cfgmod.load(args.config, overrides)
    return cfgmod.from_dict(overrides)


def _restore(checkpoint: str):
    """Agent rebuilt from a checkpoint, plus its run config."""
    from .orchestrator import Trainer, build_agent

    blob = load_checkpoint(checkpoint)
    config = cfgmod.from_dict(blob["config"])
    agent, sampler = build_agent(config)
    trainer = Trainer(agent, sampler, config.seed, config.world.side)
    trainer.load_state_dict(blob["trainer"])
    return agent, config, trainer


def cmd_train(args) -> int:
    from .orchestrator import run_training

    config = _load_run_config(args)

    def progress(rec: dict) -> None:
        if rec["kind"] == "eval":
            rates = " ".join(f"{g}={sr:.2f}" for g, sr in rec["success_rates"].items())
            log.info("cycle %d env_steps %d hl_steps %d  %s", rec["cycle"], rec["env_steps"], rec["hl_steps"], rates)

    trainer = run_training(config, resume=args.resume, force=args.force, progress=progress)
    c = trainer.counters
    print(json.dumps({"out_dir": config.out_dir, "cycles": c.cycle, "env_steps": c.env_steps,
                      "hl_steps": c.hl_steps}))
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate, ll_success_rate

    agent, config, trainer = _restore(args.checkpoint)
    texts = args.goals or config.eval.goals or [g.text for g in agent.catalog.achievements]
    goals = [agent.catalog[t] for t in texts]
    side = args.side or config.world.side
    if args.suite == "ll":
        result = {"suite": "ll", "n_seeds": args.seeds,
                  "success_rates": {g.text: ll_success_rate(agent.bank, g, args.seeds, side,
                                                            agent.budgets.steps_per_skill)
                                    for g in goals}}
    else:
        greedy = config.eval.greedy and not args.sample
        report = evaluate(agent, goals, args.seeds, side, greedy, trainer.counters.env_steps,
                          trainer.counters.hl_steps, None if args.sample else config.eval.ll_greedy)
        result = report.record()
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_generalize(args) -> int:
    from .evaluation import compositional_suite, synonym_suite

    agent, config, _ = _restore(args.checkpoint)
    goals = list(agent.catalog.achievements)
    side = args.side or config.world.side
    if args.suite == "synonym":
        result = synonym_suite(agent, goals, side)
    else:
        result = compositional_suite(agent, goals, args.n, side, n_seeds=args.seeds)
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_export_plots(args) -> int:
    from .evaluation import export_plot_data

    records = read_metrics(args.metrics)
    counts = export_plot_data(records, args.out)
    print(json.dumps(counts, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hierskill", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run training from a YAML config")
    t.add_argument("--config", help="YAML run configuration")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    t.add_argument("--resume", action="store_true", help="continue from <out>/checkpoint.pt")
    t.add_argument("--force", action="store_true", help="resume even if the config hash differs")
    t.add_argument("--flat-baseline", action="store_true", help="high level over elementary actions only")
    t.add_argument("--desk-scale", action="store_true", help="apply the small-machine overrides")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on held-out worlds")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--suite", choices=("standard", "ll"), default="standard",
                   help="standard: full hierarchy; ll: run each goal's low-level policy directly")
    e.add_argument("--goals", nargs="+")
    e.add_argument("--seeds", type=int, default=40)
    e.add_argument("--side", type=int)
    e.add_argument("--sample", action="store_true", help="sample at both levels instead of the configured decoding")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("generalize", help="synonym or n-compositional goal suites")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--suite", choices=("synonym", "compositional"), required=True)
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--seeds", type=int, default=40)
    g.add_argument("--side", type=int)
    g.set_defaults(func=cmd_generalize)

    x = sub.add_parser("export-plots", help="flatten eval records into CSV tables")
    x.add_argument("--metrics", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_plots)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
