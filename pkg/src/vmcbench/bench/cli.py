"""Command-line entry point.

Every subcommand resolves its configuration the same way: preset, then
config file, then --override key=value pairs, then explicit flags. Exit
codes: 0 success, 1 invalid configuration or arguments, 2 runtime
failure, 3 completed with partial results.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from ..core.rng import RNGPolicy
from ..envdata import generate_demos, save_demos
from ..errors import VmcError
from .config import describe_config, list_presets, load_config
from .report import emit_outputs, load_report
from .run import check_output_dir, evaluate_robustness, run_experiment, _env_factory
from .walltime import compare_bc_iteration, measure_walltime

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3

log = logging.getLogger(__name__)


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be N[,N...], got {text!r}")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="yaml experiment config")
    p.add_argument("--preset", metavar="NAME",
                   help=f"shipped preset, one of: {', '.join(list_presets())}")
    p.add_argument("--override", metavar="KEY=VALUE", action="append", default=[],
                   help="dotted-key config override, repeatable")
    p.add_argument("--seed", metavar="N[,N...]", type=_parse_seeds, default=None,
                   help="seed list replacing the configured one")
    p.add_argument("--out", metavar="DIR", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmcbench",
        description="Desk-scale visuo-motor policy learning benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("gen-demos", "generate a scripted-expert demonstration archive"),
        ("train-bc", "behavior cloning over the configured seeds"),
        ("train-rl", "reinforcement learning over the configured seeds"),
        ("eval", "evaluate a saved policy"),
        ("robustness", "zero-shot transfer to perturbed appearances"),
        ("sweep-demos", "data-efficiency sweep over demonstration counts"),
        ("bench-walltime", "wall-time table and cached-vs-scratch comparison"),
        ("plot", "regenerate plots from a persisted report"),
        ("describe-config", "print the fully resolved configuration"),
    ):
        p = sub.add_parser(name, help=text)
        _common_flags(p)
        if name == "eval":
            p.add_argument("--policy", metavar="PATH", required=True,
                           help="policy file written by a training run")
            p.add_argument("--perturb", choices=("none", "random_colors", "video_background"),
                           default="none")
        if name == "plot":
            p.add_argument("--report", metavar="PATH", required=True,
                           help="report json written by a training run")
        if name == "sweep-demos":
            p.add_argument("--counts", metavar="N[,N...]", type=_parse_seeds,
                           default=(10, 25, 100))
    return parser


def _resolved_config(args: argparse.Namespace):
    return load_config(path=args.config, preset=args.preset,
                       overrides=args.override, seeds=args.seed,
                       out_dir=args.out)


def _cmd_gen_demos(args) -> int:
    config = _resolved_config(args)
    check_output_dir(config.out_dir)
    env = _env_factory(config)()
    dataset = generate_demos(env, config.demo_count, config.demo_seed,
                             task_id=config.task)
    path = os.path.join(config.out_dir, "demos")
    save_demos(dataset, path)
    print(f"wrote {dataset.num_episodes} episodes to {path}")
    return EXIT_OK


def _run_and_emit(config) -> int:
    report = run_experiment(config)
    written = emit_outputs(report, config.out_dir)
    agg = report.aggregate.get("score")
    print(f"fingerprint {report.fingerprint}")
    for record in report.records:
        print(f"  seed {record['seed']}: score {record['score']:.4f}")
    if agg:
        print(f"  aggregate {agg['mean']:.4f} [{agg['lo']:.4f}, {agg['hi']:.4f}]")
    for p in written:
        print(f"  wrote {p}")
    if report.partial:
        print(f"  PARTIAL: failed seeds {sorted(report.failed_seeds)}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_train_bc(args) -> int:
    config = _resolved_config(args)
    if config.algorithm != "bc":
        import dataclasses

        config = dataclasses.replace(config, algorithm="bc")
    return _run_and_emit(config)


def _cmd_train_rl(args) -> int:
    config = _resolved_config(args)
    if config.algorithm == "bc":
        raise VmcError(
            "train-rl needs algorithm offpolicy or onpolicy; "
            "set algorithm in the config or pass --override algorithm=offpolicy"
        )
    return _run_and_emit(config)


def _cmd_eval(args) -> int:
    from ..envdata import wrap_random_colors, wrap_video_background
    from ..imitation import load_policy

    config = _resolved_config(args)
    policy = load_policy(args.policy)
    env = _env_factory(config)()
    if args.perturb == "random_colors":
        env = wrap_random_colors(env, seed=0)
    elif args.perturb == "video_background":
        env = wrap_video_background(env, seed=0)
    success, mean_return = policy.evaluate(env, config.eval_episodes, RNGPolicy(0))
    print(json.dumps({"success_rate": success, "mean_return": mean_return,
                      "episodes": config.eval_episodes, "perturb": args.perturb}))
    return EXIT_OK


def _cmd_robustness(args) -> int:
    config = _resolved_config(args)
    check_output_dir(config.out_dir)
    table = evaluate_robustness(config)
    path = os.path.join(config.out_dir, f"{config.fingerprint()}_robustness.json")
    with open(path, "w") as fh:
        json.dump({"config": config.to_dict(), "table": table}, fh, indent=1, sort_keys=True)
    for name, row in table.items():
        per_seed = ", ".join(f"{v:.3f}" for v in row["per_seed"])
        print(f"{name:>18}: mean {row['mean']:.3f}  (seeds: {per_seed})")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep_demos(args) -> int:
    from ..imitation import data_efficiency_sweep
    from .run import build_bc_config, load_or_generate_demos

    config = _resolved_config(args)
    check_output_dir(config.out_dir)
    counts = list(args.counts)
    dataset = load_or_generate_demos(config)
    env = _env_factory(config)()
    rows = []
    for seed in config.seeds:
        bc_cfg = build_bc_config(config, seed)
        results = data_efficiency_sweep(bc_cfg, dataset, env, counts=counts)
        rows.append({"seed": seed,
                     "scores": {c: r.top3_score for c, r in zip(counts, results)}})
        printable = "  ".join(f"{c}:{r.top3_score:.3f}" for c, r in zip(counts, results))
        print(f"seed {seed}: {printable}")
    path = os.path.join(config.out_dir, f"{config.fingerprint()}_sweep.json")
    with open(path, "w") as fh:
        json.dump({"config": config.to_dict(), "counts": counts,
                   "rows": [{"seed": r["seed"],
                             "scores": {str(k): v for k, v in r["scores"].items()}}
                            for r in rows]}, fh, indent=1, sort_keys=True)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_bench_walltime(args) -> int:
    config = _resolved_config(args)
    check_output_dir(config.out_dir)
    table = measure_walltime(config)
    comparison = compare_bc_iteration(config)
    out = {"walltime": table, "bc_iteration": comparison}
    path = os.path.join(config.out_dir, f"{config.fingerprint()}_walltime.json")
    with open(path, "w") as fh:
        json.dump({"config": config.to_dict(), **out}, fh, indent=1, sort_keys=True)
    print(f"train    {table['train_s_per_iteration']:.6f} s/iteration")
    print(f"infer    {table['inference_s_per_episode']:.6f} s/episode")
    print(f"env      {table['env_s_per_1k_frames']:.6f} s/1k frames")
    print(f"cached   {comparison['cached_s_per_iteration']:.6f} s/iteration")
    print(f"scratch  {comparison['scratch_s_per_iteration']:.6f} s/iteration")
    print(f"speedup  {comparison['speedup']:.1f}x "
          f"({'cached faster' if comparison['cached_faster'] else 'NOT faster'})")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    config = _resolved_config(args)
    report = load_report(args.report)
    written = emit_outputs(report, config.out_dir or os.path.dirname(args.report) or ".",
                           formats=("png",))
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_describe_config(args) -> int:
    print(describe_config(_resolved_config(args)), end="")
    return EXIT_OK


_COMMANDS = {
    "gen-demos": _cmd_gen_demos,
    "train-bc": _cmd_train_bc,
    "train-rl": _cmd_train_rl,
    "eval": _cmd_eval,
    "robustness": _cmd_robustness,
    "sweep-demos": _cmd_sweep_demos,
    "bench-walltime": _cmd_bench_walltime,
    "plot": _cmd_plot,
    "describe-config": _cmd_describe_config,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("VMC_LOG", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except VmcError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - CLI boundary
        log.exception("unhandled failure")
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
