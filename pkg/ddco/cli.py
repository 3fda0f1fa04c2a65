#!/usr/bin/env python3
"""
DDCO Command Line Interface
Generate demonstrations, train flat and hierarchical policies, select the
number of options, segment, evaluate, roll out and run the experiment studies.

Data goes to files; diagnostics go to standard error. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional


from .configs.settings import get_settings, setup_logging
from .configs.training_config import (
    ArchitectureConfig,
    BatchMode,
    BCConfig,
    HeadMode,
    InitMode,
    OptimizerConfig,
    OptimizerKind,
    Schedule,
    TrainConfig,
)
from .core import HierarchicalPolicy, load_checkpoint, load_dataset, save_checkpoint, save_dataset, save_labels
from .errors import ConfigError, DDCOError

logger = logging.getLogger(__name__)

HEAD_CHOICES = {"cat": HeadMode.CATEGORICAL, "hybrid": HeadMode.HYBRID}


def _k_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("k list must not be empty")
    return values


def _sidecar_path(out: str, suffix: str) -> Path:
    path = Path(out)
    return path.with_name(path.stem + suffix)


def _jobs(args) -> int:
    return args.jobs if getattr(args, "jobs", None) else get_settings().jobs


def _optimizer_config(args) -> OptimizerConfig:
    return OptimizerConfig(kind=OptimizerKind(args.optimizer), learning_rate=args.lr, momentum=args.momentum)


def build_train_config(args) -> TrainConfig:
    """TrainConfig from train-ddco style flags (raises ConfigError on invalid values)"""
    hidden = args.hidden
    return TrainConfig(
        k=args.k,
        head_mode=HEAD_CHOICES[args.head],
        sigma=args.sigma,
        epochs=args.epochs,
        batch=BatchMode(args.batch),
        seed=args.seed,
        dropout_rate=args.dropout,
        init=InitMode(args.init),
        schedule=Schedule(args.schedule),
        phase1_epochs=args.phase1_epochs,
        finetune_options=args.finetune_options,
        optimizer=_optimizer_config(args),
        high_arch=ArchitectureConfig(args.high_arch, hidden),
        option_arch=ArchitectureConfig(args.option_arch, hidden),
        termination_arch=ArchitectureConfig(args.termination_arch, hidden),
        vq_epochs=args.vq_epochs,
        jobs=_jobs(args),
    )


def build_bc_config(args) -> BCConfig:
    return BCConfig(
        arch=ArchitectureConfig(args.arch, args.hidden),
        sigma=args.sigma,
        epochs=args.epochs,
        batch=BatchMode(args.batch),
        seed=args.seed,
        dropout_rate=args.dropout,
        optimizer=_optimizer_config(args),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_demos(args) -> int:
    """Write a demonstration dataset (and a label sidecar for slds)"""
    if args.env == "push":
        from .env.push import generate_demos
        goals = None if args.goals_per_demo == 0 else args.goals_per_demo
        dataset = generate_demos(args.n, args.seed, goals_per_demo=goals)
        save_dataset(dataset, args.out)
    else:
        from .env.slds import SldsConfig, slds_generate
        dataset, labels = slds_generate(SldsConfig(k_true=args.slds_k, noise=args.noise, horizon=args.horizon),
                                        args.n, args.seed)
        save_dataset(dataset, args.out)
        labels_out = args.labels_out or _sidecar_path(args.out, ".labels.jsonl")
        save_labels(labels, labels_out)
        logger.info(f"Wrote ground-truth labels to {labels_out}")
    logger.info(f"Wrote {len(dataset)} trajectories to {args.out}")
    return 0


def cmd_train_bc(args) -> int:
    from .training.trainer import bc_train
    cfg = build_bc_config(args)
    dataset = load_dataset(args.data)
    policy, log = bc_train(dataset, cfg)
    save_checkpoint(policy, args.out)
    log.write_csv(args.log or _sidecar_path(args.out, ".log.csv"))
    logger.info(f"Saved BC policy to {args.out}")
    return 0


def cmd_train_ddco(args) -> int:
    from .training.trainer import ddco_train
    cfg = build_train_config(args)
    dataset = load_dataset(args.data)
    logger.debug(f"Training configuration: {cfg.to_dict()}")
    policy, log = ddco_train(dataset, cfg)
    save_checkpoint(policy, args.out)
    log.write_csv(args.log or _sidecar_path(args.out, ".log.csv"))
    logger.info(f"Saved DDCO policy (k={policy.k}) to {args.out}")
    return 0


def cmd_crossval(args) -> int:
    from .modelselect import cross_validate_k
    cfg = build_train_config(args)
    dataset = load_dataset(args.data)
    result = cross_validate_k(dataset, args.k_list, cfg, folds=args.folds, jobs=cfg.jobs,
                              min_gain=args.min_gain)
    result.write_csv(args.table_out or _sidecar_path(args.out, ".folds.csv"), args.out)
    if args.model_out:
        save_checkpoint(result.policy, args.model_out)
    for k, messages in result.failures.items():
        logger.warning(f"k={k} invalidated: {'; '.join(messages)}")
    logger.info(f"Selected k={result.selected_k}")
    return 0


def _load_hierarchical(path: str) -> HierarchicalPolicy:
    policy = load_checkpoint(path)
    if not isinstance(policy, HierarchicalPolicy):
        raise ConfigError(f"{path} holds a flat policy; segmentation needs a hierarchical one")
    return policy


def cmd_segment(args) -> int:
    from .inference import segment_dataset
    policy = _load_hierarchical(args.model)
    dataset = load_dataset(args.data)
    labels = segment_dataset(policy, dataset, jobs=_jobs(args))
    save_labels(labels, args.out)
    logger.info(f"Wrote {len(labels)} segmentations to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .inference import dataset_loglikelihoods, write_loglik_csv
    policy = load_checkpoint(args.model)
    dataset = load_dataset(args.data)
    table = dataset_loglikelihoods(policy, dataset, jobs=_jobs(args))
    write_loglik_csv(table, args.out)
    logger.info(f"Total log-likelihood {table['loglik'].sum():.6f} over {table['T'].sum()} steps")
    return 0


def cmd_rollout(args) -> int:
    from .env.rollout import evaluate_policy, rollout
    policy = load_checkpoint(args.model)
    seeds = list(range(args.seed, args.seed + args.episodes))
    table = evaluate_policy(policy, seeds, args.horizon, args.mode, jobs=_jobs(args))
    table.to_csv(args.out, index=False)
    if args.trace_out:
        rollout(policy, args.horizon, seeds[0], args.mode).write_trace_csv(args.trace_out)
    logger.info(f"Mean reward {table['reward'].mean():.3f} over {len(seeds)} episodes")
    return 0


def cmd_stability(args) -> int:
    from .modelselect import stability_report
    cfg = build_train_config(args)
    dataset = load_dataset(args.data)
    report = stability_report(dataset, args.k, args.seeds, cfg, jobs=cfg.jobs)
    report.write_csv(args.out, args.runs_out or _sidecar_path(args.out, ".runs.csv"))
    logger.info(f"Wrote stability report to {args.out}")
    return 0


def cmd_experiment(args) -> int:
    from . import experiments
    cfg = build_train_config(args)
    eval_seeds = tuple(range(args.eval_seeds))
    if args.study == "sample-efficiency":
        bc_cfg = BCConfig(arch=cfg.option_arch, sigma=cfg.sigma, epochs=cfg.epochs, batch=cfg.batch,
                          seed=cfg.seed, dropout_rate=cfg.dropout_rate, optimizer=cfg.optimizer)
        table = experiments.sample_efficiency(args.budgets, cfg, bc_cfg, args.k_list, eval_seeds,
                                              args.demo_seed, args.horizon, args.folds, jobs=cfg.jobs)
    elif args.study == "reward-vs-k":
        table = experiments.reward_vs_k(args.k_list, args.n_demos, cfg, eval_seeds, args.demo_seed,
                                        args.horizon, jobs=cfg.jobs)
    elif args.study == "augmentation":
        table = experiments.augmentation(args.k_list, args.n_demos, cfg, eval_seeds, args.demo_seed,
                                         args.horizon, jobs=cfg.jobs)
    else:
        table = experiments.dropout_effect(k=max(cfg.k, 1), rate=args.rate, seeds=tuple(range(args.n_seeds)),
                                           train_cfg=cfg)
    table.to_csv(args.out, index=False, float_format="%.17g")
    logger.info(f"Wrote {args.study} results to {args.out}")
    return 0


def cmd_check_deps(args) -> int:
    """Print the dependency report"""
    from .utils.dependency_checker import check_dependencies, get_installation_command

    status = check_dependencies()
    print("🔍 Checking DDCO Dependencies...")
    print("=" * 50)
    print(f"Total packages: {status['total_packages']}")
    print(f"Installed: {status['installed_count']}")
    print(f"Missing: {len(status['missing_packages'])}")
    print(f"Version issues: {len(status['outdated_packages'])}")
    print("✅ Status: ALL DEPENDENCIES SATISFIED" if status['all_installed']
          else "❌ Status: DEPENDENCIES NOT SATISFIED")

    for pkg in status['missing_packages']:
        print(f"  • missing {pkg['package']} (>={pkg['min_version']})")
        if args.verbose:
            print(f"    {pkg['description']}")
    for pkg in status['outdated_packages']:
        print(f"  • {pkg['package']} {pkg['current_version']} (need >={pkg['min_required']})")
    if args.verbose:
        for pkg, version in status['installed_packages'].items():
            print(f"  • {pkg}: {version}")
    if not status['all_installed']:
        print(f"🚀 To install missing dependencies: {get_installation_command()}")
        return 1
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_optimizer_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--optimizer', choices=[k.value for k in OptimizerKind], default='adam')
    parser.add_argument('--lr', type=float, default=1e-5, help='Learning rate (default: 1e-5)')
    parser.add_argument('--momentum', type=float, default=0.9, help='Momentum coefficient')
    parser.add_argument('--sigma', type=float, default=0.1, help='Shared control standard deviation')
    parser.add_argument('--epochs', type=int, default=50)
    parser.add_argument('--batch', choices=[b.value for b in BatchMode], default='trajectory')
    parser.add_argument('--dropout', type=float, default=0.0, help='Hidden-layer dropout rate')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--hidden', type=int, default=64, help='Hidden width of mlp networks')


def _add_training_args(parser: argparse.ArgumentParser, k_required: bool = False) -> None:
    if k_required:
        parser.add_argument('--k', type=int, required=True, help='Number of options')
    else:
        parser.add_argument('--k', type=int, default=2, help='Number of options')
    parser.add_argument('--head', choices=sorted(HEAD_CHOICES), default='cat')
    parser.add_argument('--init', choices=[m.value for m in InitMode], default='random')
    parser.add_argument('--schedule', choices=[s.value for s in Schedule], default='joint')
    parser.add_argument('--phase1-epochs', type=int, default=None)
    parser.add_argument('--finetune-options', action='store_true',
                        help='Keep training options in the high-level phase of layer-wise training')
    parser.add_argument('--high-arch', choices=['linear', 'mlp'], default='linear')
    parser.add_argument('--option-arch', choices=['linear', 'mlp'], default='mlp')
    parser.add_argument('--termination-arch', choices=['linear', 'mlp'], default='linear')
    parser.add_argument('--vq-epochs', type=int, default=None)
    parser.add_argument('--jobs', type=int, default=None, help='Worker threads (default: DDCO_JOBS or 1)')
    _add_optimizer_args(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ddco',
        description="Discovery of deep continuous options from demonstrations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s gen-demos --env slds --n 100 --seed 0 --out slds.jsonl
  %(prog)s train-ddco --data slds.jsonl --k 2 --out model.json
  %(prog)s crossval --data slds.jsonl --k-list 1,2,3,4,5 --out cv.csv
  %(prog)s segment --data slds.jsonl --model model.json --out labels.jsonl
  %(prog)s -v check-deps
        """
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Show debug output')
    parser.add_argument('--log-file', default=None, help='Also write diagnostics to this file')
    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    gen = subparsers.add_parser('gen-demos', help='Generate demonstrations')
    gen.add_argument('--env', choices=['push', 'slds'], default='push')
    gen.add_argument('--n', type=int, required=True)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--out', required=True)
    gen.add_argument('--labels-out', default=None)
    gen.add_argument('--slds-k', type=int, default=2)
    gen.add_argument('--noise', type=float, default=0.05)
    gen.add_argument('--horizon', type=int, default=20)
    gen.add_argument('--goals-per-demo', type=int, default=1, help='0 keeps the whole episode')
    gen.set_defaults(func=cmd_gen_demos)

    bc = subparsers.add_parser('train-bc', help='Train a flat policy by behavior cloning')
    bc.add_argument('--data', required=True)
    bc.add_argument('--arch', choices=['linear', 'mlp'], default='mlp')
    bc.add_argument('--out', required=True)
    bc.add_argument('--log', default=None, help='Training log CSV')
    _add_optimizer_args(bc)
    bc.set_defaults(func=cmd_train_bc)

    ddco = subparsers.add_parser('train-ddco', help='Train a hierarchical policy')
    ddco.add_argument('--data', required=True)
    ddco.add_argument('--out', required=True)
    ddco.add_argument('--log', default=None, help='Training log CSV')
    _add_training_args(ddco, k_required=True)
    ddco.set_defaults(func=cmd_train_ddco)

    cv = subparsers.add_parser('crossval', help='Select k by cross-validation')
    cv.add_argument('--data', required=True)
    cv.add_argument('--k-list', type=_k_list, required=True)
    cv.add_argument('--folds', type=int, default=10)
    cv.add_argument('--min-gain', type=float, default=0.01,
                    help='Held-out nats per step a larger k must gain to be selected')
    cv.add_argument('--out', required=True, help='Summary CSV')
    cv.add_argument('--table-out', default=None, help='Per-fold CSV')
    cv.add_argument('--model-out', default=None, help='Checkpoint of the final full-data fit')
    _add_training_args(cv)
    cv.set_defaults(func=cmd_crossval)

    seg = subparsers.add_parser('segment', help='Label each step with its most likely option')
    seg.add_argument('--data', required=True)
    seg.add_argument('--model', required=True)
    seg.add_argument('--out', required=True)
    seg.add_argument('--jobs', type=int, default=None)
    seg.set_defaults(func=cmd_segment)

    ev = subparsers.add_parser('evaluate', help='Per-trajectory log-likelihoods')
    ev.add_argument('--data', required=True)
    ev.add_argument('--model', required=True)
    ev.add_argument('--out', required=True)
    ev.add_argument('--jobs', type=int, default=None)
    ev.set_defaults(func=cmd_evaluate)

    ro = subparsers.add_parser('rollout', help='Roll out a policy in the pushing task')
    ro.add_argument('--model', required=True)
    ro.add_argument('--env', choices=['push'], default='push')
    ro.add_argument('--episodes', type=int, default=20)
    ro.add_argument('--seed', type=int, default=0)
    ro.add_argument('--horizon', type=int, default=None)
    ro.add_argument('--mode', choices=['stochastic', 'mean'], default='stochastic')
    ro.add_argument('--out', required=True)
    ro.add_argument('--trace-out', default=None, help='Trace CSV of the first episode')
    ro.add_argument('--jobs', type=int, default=None)
    ro.set_defaults(func=cmd_rollout)

    st = subparsers.add_parser('stability', help='Run-to-run consistency across regimes')
    st.add_argument('--data', required=True)
    st.add_argument('--seeds', type=int, default=10)
    st.add_argument('--out', required=True)
    st.add_argument('--runs-out', default=None)
    _add_training_args(st)
    st.set_defaults(func=cmd_stability)

    ex = subparsers.add_parser('experiment', help='Run an experiment study')
    ex.add_argument('study', choices=['sample-efficiency', 'reward-vs-k', 'augmentation', 'dropout'])
    ex.add_argument('--out', required=True)
    ex.add_argument('--budgets', type=_k_list, default=[10, 20, 30, 60])
    ex.add_argument('--k-list', type=_k_list, default=[1, 2, 3, 4])
    ex.add_argument('--folds', type=int, default=10)
    ex.add_argument('--n-demos', type=int, default=60)
    ex.add_argument('--demo-seed', type=int, default=0)
    ex.add_argument('--eval-seeds', type=int, default=20)
    ex.add_argument('--horizon', type=int, default=None)
    ex.add_argument('--rate', type=float, default=0.5, help='Dropout rate for the dropout study')
    ex.add_argument('--n-seeds', type=int, default=5)
    _add_training_args(ex)
    ex.set_defaults(func=cmd_experiment)

    deps = subparsers.add_parser('check-deps', help='Check the numerical stack')
    deps.set_defaults(func=cmd_check_deps)

    return parser


def validate_args(parser: argparse.ArgumentParser, args) -> None:
    """Usage checks argparse cannot express (exit code 2 via parser.error)"""
    if getattr(args, "head", None) == "cat" and getattr(args, "k", 1) is not None and args.k < 1:
        parser.error("--k must be >= 1 with --head cat (use --head hybrid for k = 0)")
    if getattr(args, "k", 0) is not None and getattr(args, "k", 0) < 0:
        parser.error("--k must be >= 0")
    if args.command == "rollout" and args.episodes < 1:
        parser.error("--episodes must be >= 1")
    if args.command == "gen-demos" and args.n < 1:
        parser.error("--n must be >= 1")
    if args.command == "stability" and args.seeds < 2:
        parser.error("--seeds must be >= 2")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        parser.error("--jobs must be >= 1")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    validate_args(parser, args)
    setup_logging(args.verbose, args.log_file)

    try:
        return args.func(args)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("\n\nOperation cancelled by user.", file=sys.stderr)
        return 1
    except (DDCOError, OSError, ValueError) as e:
        if args.verbose:
            import traceback
            traceback.print_exc()
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
