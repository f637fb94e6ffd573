"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 joint action space
infeasible for an explicitly requested CRL run, 4 training divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Sequence

from . import crl, frl
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .metrics import (EpisodeMetrics, MetricsRow, export_csv, export_summary_csv, evaluate,
                      read_metrics_csv, summarize_comparison, write_rows)
from .policy import TrainingDivergence, load_params, save_params

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 2, 3, 4
DEFAULT_SIZES = (5, 10, 20, 30)
ROUND_COLUMNS = ("round", "episodes", "alpha", "post_checksum", "pre_checksums")

log = logging.getLogger("fedjam")


class Infeasible(Exception):
    def __init__(self, feasibility: crl.JointFeasibility):
        super().__init__(feasibility.report())
        self.feasibility = feasibility


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    common.add_argument("--swarm-size", type=int, help="number of UAVs (overrides n_uavs)")
    common.add_argument("--set", dest="assign", type=_assignment, action="append", default=[],
                        metavar="KEY=VALUE", help="override any configuration field")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--eval-episodes", type=int, default=10)
    common.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="fedjam", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("train-frl", "federated training"), ("train-crl", "centralized joint-action training")):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        sp.add_argument("--episodes", type=int, required=True)
    sp = sub.add_parser("eval", parents=[common], help="greedy evaluation of a saved policy")
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--paradigm", choices=("frl", "crl"), help="inferred from the policy head when omitted")
    sp = sub.add_parser("sweep", parents=[common], help="train and evaluate across swarm sizes")
    sp.add_argument("--episodes", type=int, required=True)
    sp.add_argument("--sizes", type=_int_list, default=list(DEFAULT_SIZES))
    sp.add_argument("--seeds", type=_int_list, help="seed list (default: the single master seed)")
    sp = sub.add_parser("compare", help="summarize FRL against CRL evaluation results")
    sp.add_argument("frl_dir", type=Path)
    sp.add_argument("crl_dir", type=Path)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--quiet", action="store_true")
    return p


def resolve_config(args) -> ExperimentConfig:
    overrides = dict(args.assign)
    if args.swarm_size is not None:
        overrides["n_uavs"] = args.swarm_size
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    return load_config(args.config, overrides)


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, **extra) -> None:
    # run settings are comments so the manifest loads directly as --config
    lines = [f"# subcommand = {command}\n"]
    lines += [f"# {k} = {v}\n" for k, v in extra.items()]
    (out / "manifest.txt").write_text("".join(lines) + dump_config(cfg))


def _eval_rows(result, cfg: ExperimentConfig, paradigm: str) -> list[MetricsRow]:
    return [MetricsRow.from_metrics(m, cfg.n_uavs, paradigm, cfg.master_seed) for m in result.episodes]


def _check_episodes(n: int) -> None:
    if n < 1:
        raise ConfigError("episodes", "must be >= 1")


def train_frl_run(cfg: ExperimentConfig, episodes: int, out: Path, eval_episodes: int) -> list[MetricsRow]:
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)

    def on_round(entry, params):
        save_params(params, ckpt / f"round_{entry.round:04d}.bin")

    final, history, rounds = frl.train_frl(cfg, episodes, on_round=on_round)
    save_params(final, out / "policy_final.bin")
    export_csv([MetricsRow.from_metrics(m, cfg.n_uavs, "frl", cfg.master_seed) for m in history],
               out / "metrics.csv")
    write_rows(out / "rounds.csv", ROUND_COLUMNS,
               ([r.round, r.episodes, r.alpha, r.post_checksum, ";".join(r.pre_checksums)] for r in rounds))
    log.info("frl n=%d seed=%d: %d episodes, %d federation rounds", cfg.n_uavs, cfg.master_seed,
             episodes, len(rounds))
    return _evaluate_into(final, cfg, "frl", out, eval_episodes)


def train_crl_run(cfg: ExperimentConfig, episodes: int, out: Path, eval_episodes: int) -> list[MetricsRow]:
    feas = crl.check_joint_feasible(cfg.n_uavs, cfg.max_joint_actions)
    if not feas.ok:
        (out / "infeasible.txt").write_text(feas.report() + "\n")
        raise Infeasible(feas)
    final, history = crl.train_crl(cfg, episodes)
    save_params(final, out / "policy_final.bin")
    export_csv([MetricsRow.from_metrics(m, cfg.n_uavs, "crl", cfg.master_seed) for m in history],
               out / "metrics.csv")
    log.info("crl n=%d seed=%d: %d episodes", cfg.n_uavs, cfg.master_seed, episodes)
    return _evaluate_into(final, cfg, "crl", out, eval_episodes)


def _evaluate_into(policy, cfg, paradigm, out: Path, eval_episodes: int) -> list[MetricsRow]:
    if eval_episodes < 1:
        return []
    result = evaluate(policy, cfg, eval_episodes, cfg.master_seed, paradigm)
    rows = _eval_rows(result, cfg, paradigm)
    export_csv(rows, out / "eval.csv")
    log.info("%s eval n=%d: asr=%.4f cost=%.2f agreement=%.3f", paradigm, cfg.n_uavs,
             result.mean.attack_success_rate, result.mean.defense_cost, result.mean.agreement_rate)
    return rows


def cmd_train(args, paradigm: str) -> int:
    cfg = resolve_config(args)
    _check_episodes(args.episodes)
    args.out.mkdir(parents=True, exist_ok=True)
    write_manifest(args.out, cfg, args.command, episodes=args.episodes, eval_episodes=args.eval_episodes)
    run = train_frl_run if paradigm == "frl" else train_crl_run
    run(cfg, args.episodes, args.out, args.eval_episodes)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    if args.eval_episodes < 1:
        raise ConfigError("eval_episodes", "must be >= 1")
    try:
        policy = load_params(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise ConfigError("checkpoint", f"cannot load {args.checkpoint}: {exc}") from None
    paradigm = args.paradigm or ("frl" if policy.out_dim == 4 else "crl")
    want = cfg.obs_dim if paradigm == "frl" else cfg.obs_dim * cfg.n_uavs
    if policy.obs_dim != want:
        raise ConfigError("n_uavs", f"checkpoint expects observation size {policy.obs_dim}, "
                                    f"this configuration gives {want}")
    args.out.mkdir(parents=True, exist_ok=True)
    write_manifest(args.out, cfg, "eval", paradigm=paradigm, eval_episodes=args.eval_episodes,
                   checkpoint_checksum=policy.checksum())
    _evaluate_into(policy, cfg, paradigm, args.out, args.eval_episodes)
    return EXIT_OK


def _per_seed_means(rows: Sequence[MetricsRow]) -> dict[int, dict[str, list[EpisodeMetrics]]]:
    """swarm_size -> paradigm -> one mean EpisodeMetrics per seed."""
    cells: dict[tuple, list[MetricsRow]] = defaultdict(list)
    for r in rows:
        cells[(r.swarm_size, r.paradigm, r.seed)].append(r)
    out: dict[int, dict[str, list[EpisodeMetrics]]] = defaultdict(lambda: defaultdict(list))
    for (n, paradigm, seed), group in sorted(cells.items()):
        k = len(group)
        out[n][paradigm].append(EpisodeMetrics(
            seed, sum(r.asr for r in group) / k, sum(r.defense_cost for r in group) / k,
            sum(r.mean_reward for r in group) / k, sum(r.agreement_rate for r in group) / k))
    return out


def summaries_from_rows(rows: Sequence[MetricsRow]):
    out = []
    for n, by_paradigm in sorted(_per_seed_means(rows).items()):
        if by_paradigm.get("frl") and by_paradigm.get("crl"):
            out.append(summarize_comparison(by_paradigm["frl"], by_paradigm["crl"], n))
    return out


def cmd_sweep(args) -> int:
    if not args.sizes:
        raise ConfigError("sizes", "need at least one swarm size")
    if args.swarm_size is None:
        args.swarm_size = args.sizes[0]  # placeholder; each cell sets its own size
    base = resolve_config(args)
    _check_episodes(args.episodes)
    seeds = args.seeds or [base.master_seed]
    args.out.mkdir(parents=True, exist_ok=True)
    write_manifest(args.out, base, "sweep", episodes=args.episodes, eval_episodes=args.eval_episodes,
                   sizes=",".join(map(str, args.sizes)), seeds=",".join(map(str, seeds)))
    rows: list[MetricsRow] = []
    notices = []
    for n in args.sizes:
        feas = crl.check_joint_feasible(n, base.max_joint_actions)
        if not feas.ok:
            log.info("skipping CRL at n=%d: %s", n, feas.report())
            notices.append(feas.report())
        for seed in seeds:
            cfg = base.replace(n_uavs=n, master_seed=seed)
            for paradigm in ("frl", "crl"):
                if paradigm == "crl" and not feas.ok:
                    continue
                cell = args.out / f"n{n:03d}" / f"seed{seed}" / paradigm
                cell.mkdir(parents=True, exist_ok=True)
                write_manifest(cell, cfg, f"train-{paradigm}", episodes=args.episodes,
                               eval_episodes=args.eval_episodes)
                run = train_frl_run if paradigm == "frl" else train_crl_run
                rows += run(cfg, args.episodes, cell, max(args.eval_episodes, 1))
    export_csv(rows, args.out / "eval.csv")
    export_summary_csv(summaries_from_rows(rows), args.out / "summary.csv")
    (args.out / "infeasible.txt").write_text("".join(n + "\n" for n in notices))
    return EXIT_OK


def _load_eval_rows(directory: Path, paradigm: str) -> list[MetricsRow]:
    files = sorted(directory.rglob("eval.csv"))
    if not files:
        raise ConfigError(paradigm + "_dir", f"no eval.csv under {directory}")
    rows = {}
    for f in files:
        for r in read_metrics_csv(f):
            if r.paradigm == paradigm:
                rows[(r.swarm_size, r.paradigm, r.seed, r.episode)] = r
    if not rows:
        raise ConfigError(paradigm + "_dir", f"no {paradigm} evaluation rows under {directory}")
    return list(rows.values())


def cmd_compare(args) -> int:
    rows = _load_eval_rows(args.frl_dir, "frl") + _load_eval_rows(args.crl_dir, "crl")
    summaries = summaries_from_rows(rows)
    if not summaries:
        raise ConfigError("swarm_size", "FRL and CRL results share no swarm size")
    args.out.mkdir(parents=True, exist_ok=True)
    export_summary_csv(summaries, args.out / "summary.csv")
    for s in summaries:
        log.info("n=%d cost reduction %s%% asr reduction %s%%", s.swarm_size,
                 _pct(s.cost_reduction_pct), _pct(s.asr_reduction_pct))
    return EXIT_OK


def _pct(v):
    return "undefined" if v is None else f"{v:.1f}"


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        if args.command == "train-frl":
            return cmd_train(args, "frl")
        if args.command == "train-crl":
            return cmd_train(args, "crl")
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_compare(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
