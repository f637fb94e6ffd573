"""Episode metrics, seed aggregation, FRL-vs-CRL summaries and CSV output.

Metrics CSV columns, in order::

    swarm_size, paradigm, seed, episode, asr, defense_cost, mean_reward, agreement_rate

Rows are sorted by (swarm_size, paradigm, seed, episode) and reals are
written with 9 significant digits.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METRIC_COLUMNS = ("swarm_size", "paradigm", "seed", "episode", "asr", "defense_cost",
                  "mean_reward", "agreement_rate")

SUMMARY_COLUMNS = ("swarm_size", "n_frl", "n_crl",
                   "frl_cost_mean", "frl_cost_std", "crl_cost_mean", "crl_cost_std",
                   "frl_asr_mean", "frl_asr_std", "crl_asr_mean", "crl_asr_std",
                   "cost_reduction_pct", "asr_reduction_pct")


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    attack_success_rate: float
    defense_cost: float
    mean_reward: float
    agreement_rate: float


@dataclass(frozen=True)
class MetricsRow:
    swarm_size: int
    paradigm: str
    seed: int
    episode: int
    asr: float
    defense_cost: float
    mean_reward: float
    agreement_rate: float

    @classmethod
    def from_metrics(cls, m: EpisodeMetrics, swarm_size: int, paradigm: str, seed: int) -> "MetricsRow":
        return cls(swarm_size, paradigm, seed, m.episode, m.attack_success_rate, m.defense_cost,
                   m.mean_reward, m.agreement_rate)


@dataclass(frozen=True)
class EvalResult:
    mean: EpisodeMetrics
    std: EpisodeMetrics
    episodes: tuple[EpisodeMetrics, ...]


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float  # sample std; nan for a single run


@dataclass(frozen=True)
class ComparisonSummary:
    swarm_size: int
    n_frl: int
    n_crl: int
    frl_cost: Stat
    crl_cost: Stat
    frl_asr: Stat
    crl_asr: Stat
    cost_reduction_pct: float | None  # None when the CRL mean is zero
    asr_reduction_pct: float | None

    @property
    def undefined(self) -> tuple[str, ...]:
        out = []
        if self.cost_reduction_pct is None:
            out.append("cost_reduction_pct")
        if self.asr_reduction_pct is None:
            out.append("asr_reduction_pct")
        return tuple(out)


def _stat(values: Sequence[float]) -> Stat:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else math.nan
    return Stat(float(arr.mean()), std)


def aggregate(episodes: Sequence[EpisodeMetrics]) -> EvalResult:
    """Per-metric mean and sample standard deviation over episodes."""
    if not episodes:
        raise ValueError("no episodes to aggregate")
    names = [f.name for f in fields(EpisodeMetrics) if f.name != "episode"]
    stats = {name: _stat([getattr(m, name) for m in episodes]) for name in names}
    mean = EpisodeMetrics(-1, **{k: v.mean for k, v in stats.items()})
    std = EpisodeMetrics(-1, **{k: v.std for k, v in stats.items()})
    return EvalResult(mean, std, tuple(episodes))


def reduction_pct(baseline: float, ours: float) -> float | None:
    if baseline == 0:
        return None
    return (baseline - ours) / baseline * 100.0


def summarize_comparison(frl_runs: Sequence, crl_runs: Sequence, swarm_size: int) -> ComparisonSummary:
    """Compare per-seed results; each run exposes defense_cost and attack_success_rate."""
    if not frl_runs or not crl_runs:
        raise ValueError("both run sets must be nonempty")
    frl_cost = _stat([r.defense_cost for r in frl_runs])
    crl_cost = _stat([r.defense_cost for r in crl_runs])
    frl_asr = _stat([r.attack_success_rate for r in frl_runs])
    crl_asr = _stat([r.attack_success_rate for r in crl_runs])
    return ComparisonSummary(
        swarm_size=swarm_size, n_frl=len(frl_runs), n_crl=len(crl_runs),
        frl_cost=frl_cost, crl_cost=crl_cost, frl_asr=frl_asr, crl_asr=crl_asr,
        cost_reduction_pct=reduction_pct(crl_cost.mean, frl_cost.mean),
        asr_reduction_pct=reduction_pct(crl_asr.mean, frl_asr.mean),
    )


def fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    try:
        Path(path).write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV: {exc.strerror}", str(path)) from exc


def export_csv(records: Sequence[MetricsRow], path: str | Path) -> None:
    ordered = sorted(records, key=lambda r: (r.swarm_size, r.paradigm, r.seed, r.episode))
    write_rows(path, METRIC_COLUMNS, ([getattr(r, c) for c in METRIC_COLUMNS] for r in ordered))


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [MetricsRow(int(r["swarm_size"]), r["paradigm"], int(r["seed"]), int(r["episode"]),
                           float(r["asr"]), float(r["defense_cost"]), float(r["mean_reward"]),
                           float(r["agreement_rate"])) for r in reader]


def export_summary_csv(summaries: Sequence[ComparisonSummary], path: str | Path) -> None:
    def row(s: ComparisonSummary):
        return [s.swarm_size, s.n_frl, s.n_crl,
                s.frl_cost.mean, s.frl_cost.std, s.crl_cost.mean, s.crl_cost.std,
                s.frl_asr.mean, s.frl_asr.std, s.crl_asr.mean, s.crl_asr.std,
                s.cost_reduction_pct, s.asr_reduction_pct]
    write_rows(path, SUMMARY_COLUMNS, (row(s) for s in sorted(summaries, key=lambda s: s.swarm_size)))


def evaluate(policy, config, n_eval_episodes: int, eval_seed: int, paradigm: str = "frl") -> EvalResult:
    """Greedy evaluation with the agreement bonus switched off.

    ``policy`` is one PolicyParams (shared by every UAV for FRL, or the joint
    policy for CRL) or, for FRL, a list of per-UAV PolicyParams.
    """
    from . import crl, frl

    if n_eval_episodes < 1:
        raise ValueError("n_eval_episodes must be >= 1")
    episodes = []
    for ep in range(n_eval_episodes):
        if paradigm == "frl":
            policies = policy if isinstance(policy, (list, tuple)) else [policy] * config.n_uavs
            _, m = frl.run_episode(config, policies, 0.0, seed=eval_seed, episode=ep,
                                   greedy=True, evaluation=True)
        elif paradigm == "crl":
            _, m = crl.run_joint_episode(config, policy, 0.0, seed=eval_seed, episode=ep,
                                         greedy=True, evaluation=True)
        else:
            raise ValueError(f"unknown paradigm {paradigm!r}")
        episodes.append(m)
    return aggregate(episodes)
