"""Experiment runner: seeded multi-trial execution and metric aggregation.

One experiment is a batch of independently seeded trials of either the
known-score planner (``plan_known_rh``) or the online learner (``learn``).
Per-trial step traces go to JSON-lines files, aggregate metrics to CSV.
Everything written by a run is a pure function of the config and seed;
wall-clock planning times are kept out of the deterministic outputs and
land in a separate timing file.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from .beliefs import HumanForwardModel, Weights
from .domains.gridworld import Gridworld, GridworldConfig
from .domains.zones import ZoneConfig, ZoneWorld
from .learning import TrainConfig, train_loop
from .planning import Problem, SpecScorer, execute_with_replanning
from .scoring import FKind, HistoryPenalty, ScoreFunctionSpec, SimulatedHuman


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    domain: str = "grid"
    n: int = 4
    m: int = 1
    f: str = "id"
    weights: Optional[list] = None        # per-value weights, shared across factors
    threshold: float = 1.0
    penalty: float = -10.0
    null_reward: float = 1e-3
    drift_epsilon: float = 1e-3
    noise_sigma: float = 0.1
    trials: int = 100
    seed: int = 0
    mode: str = "plan_known_rh"
    beam_width: int = 16
    candidate_limit: int = 8
    out: str = "."
    max_steps: Optional[int] = None
    n_types: int = 4                      # grid only
    lattice_g: int = 20                   # zones only
    episodes: int = 40
    learning_rate: float = 0.1
    l2_scale: float = 1e-7
    batch_size: int = 100
    replay_capacity: int = 10_000
    epsilon_decay_episodes: int = 20
    epsilon_end: float = 1e-2
    history_f: bool = False
    history_penalty: float = -5.0
    change_epochs: list = field(default_factory=list)
    change_weights: Optional[list] = None  # per-value weight lists, one per change

    def __post_init__(self):
        if self.domain not in ("grid", "zones"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.f not in ("id", "sq", "log"):
            raise ConfigError(f"unknown score shape {self.f!r}")
        if self.mode not in ("plan_known_rh", "learn"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.trials < 1 or self.n < 1 or self.m < 1:
            raise ConfigError("trials, n and m must be positive")
        if self.change_epochs and self.change_weights is None:
            raise ConfigError("change_epochs needs change_weights")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        data = dataclasses.asdict(self)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in data:
                raise ConfigError(f"unknown override {key!r}")
            data[key] = value
        return ExperimentConfig.from_dict(data)


@dataclass
class TrialSummary:
    trial: int
    total_score: float
    infos_per_timestep: float
    env_reward: float
    plan_runtime: float
    replan_count: int
    steps: int
    completed: bool
    failure: Optional[str] = None


def build_domain(cfg: ExperimentConfig):
    if cfg.domain == "grid":
        return Gridworld(GridworldConfig.square(cfg.n, cfg.m, n_types=cfg.n_types))
    return ZoneWorld(ZoneConfig(n_zones=cfg.n, m_objects=cfg.m, lattice_g=cfg.lattice_g))


def default_per_value_weights(dim: int) -> list:
    if dim == 1:
        return [1.0]
    if dim == 2:
        return [10.0, 5.0]
    return [10.0, 5.0] + [1.0] * (dim - 2)


def _per_value(cfg: ExperimentConfig, dim: int) -> list:
    pv = cfg.weights if cfg.weights is not None else default_per_value_weights(dim)
    if len(pv) != dim:
        raise ConfigError(f"weights must list {dim} per-value entries, got {len(pv)}")
    return [float(x) for x in pv]


def build_spec(cfg: ExperimentConfig, domain, per_value=None) -> ScoreFunctionSpec:
    b_h = domain.initial_human_belief()
    dim = b_h.dims[0]
    pv = per_value if per_value is not None else _per_value(cfg, dim)
    return ScoreFunctionSpec(
        weights=Weights.per_value(pv, b_h),
        f_kind=FKind(cfg.f),
        threshold=cfg.threshold,
        penalty=cfg.penalty,
        null_reward=cfg.null_reward,
    )


def build_problem(cfg: ExperimentConfig, domain, spec: ScoreFunctionSpec) -> Problem:
    history = HistoryPenalty(cfg.history_penalty) if cfg.history_f else None
    return Problem(
        domain=domain,
        forward=HumanForwardModel(cfg.drift_epsilon),
        scorer=SpecScorer(spec, history=history),
        beam_width=cfg.beam_width,
        candidate_limit=cfg.candidate_limit,
    )


def run_trial(cfg: ExperimentConfig, trial: int):
    """One seeded trial; returns (summary, trace rows ready for JSON)."""
    domain = build_domain(cfg)
    spec = build_spec(cfg, domain)
    problem = build_problem(cfg, domain, spec)
    streams = np.random.SeedSequence([cfg.seed, trial]).spawn(2)
    state = domain.sample_state(np.random.default_rng(streams[0]))
    human = SimulatedHuman(
        domain.initial_human_belief(),
        problem.forward,
        spec,
        noise_sigma=cfg.noise_sigma,
        rng_seed=streams[1],
        history=HistoryPenalty(cfg.history_penalty) if cfg.history_f else None,
    )
    trace = execute_with_replanning(problem, state, human, max_steps=cfg.max_steps)
    steps = len(trace.steps)
    summary = TrialSummary(
        trial=trial,
        total_score=trace.human_return,
        infos_per_timestep=(trace.transmissions / steps) if steps else 0.0,
        env_reward=trace.env_return,
        plan_runtime=trace.plan_seconds,
        replan_count=trace.replan_count,
        steps=steps,
        completed=trace.completed,
        failure=trace.failure,
    )
    rows = [
        {
            "t": s.t,
            "action": domain.action_jsonable(s.action),
            "observation": domain.obs_jsonable(s.observation),
            "info": s.info.to_jsonable(),
            "marginal": s.marginal,
            "clean_score": s.clean_score,
            "noisy_score": s.noisy_score,
            "env_reward": s.env_reward,
            "replanned": s.replanned,
        }
        for s in trace.steps
    ]
    return summary, rows


AGGREGATE_COLUMNS = [
    "domain", "n", "m", "f", "mode", "trials", "failures", "partial",
    "total_score_mean", "total_score_std",
    "infos_per_timestep_mean", "infos_per_timestep_std",
    "env_reward_mean", "env_reward_std",
    "replan_count_mean", "steps_mean",
]


def _mean_std(values) -> tuple:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def aggregate_summaries(cfg: ExperimentConfig, summaries: List[TrialSummary]) -> dict:
    ok = [s for s in summaries if s.completed and s.failure is None]
    failures = len(summaries) - len(ok)
    score_m, score_s = _mean_std([s.total_score for s in ok])
    info_m, info_s = _mean_std([s.infos_per_timestep for s in ok])
    env_m, env_s = _mean_std([s.env_reward for s in ok])
    replan_m, _ = _mean_std([s.replan_count for s in ok])
    steps_m, _ = _mean_std([s.steps for s in ok])
    return {
        "domain": cfg.domain, "n": cfg.n, "m": cfg.m, "f": cfg.f, "mode": cfg.mode,
        "trials": len(summaries), "failures": failures, "partial": failures > 0,
        "total_score_mean": score_m, "total_score_std": score_s,
        "infos_per_timestep_mean": info_m, "infos_per_timestep_std": info_s,
        "env_reward_mean": env_m, "env_reward_std": env_s,
        "replan_count_mean": replan_m, "steps_mean": steps_m,
    }


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _write_csv(path: str, columns: list, rows: List[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


@dataclass
class ExperimentResult:
    summaries: List[TrialSummary]
    aggregate: dict
    out_dir: str

    @property
    def failures(self) -> int:
        return self.aggregate["failures"]


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run all trials, writing trace_<i>.jsonl, aggregate.csv and timing.csv."""
    os.makedirs(cfg.out, exist_ok=True)
    summaries = []
    for trial in range(cfg.trials):
        try:
            summary, rows = run_trial(cfg, trial)
        except Exception as exc:  # a crashed trial is recorded, not fatal
            summary = TrialSummary(
                trial=trial, total_score=float("nan"), infos_per_timestep=float("nan"),
                env_reward=float("nan"), plan_runtime=0.0, replan_count=0, steps=0,
                completed=False, failure=f"{type(exc).__name__}: {exc}",
            )
            rows = []
        summaries.append(summary)
        with open(os.path.join(cfg.out, f"trace_{trial}.jsonl"), "w") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    aggregate = aggregate_summaries(cfg, summaries)
    _write_csv(os.path.join(cfg.out, "aggregate.csv"), AGGREGATE_COLUMNS, [aggregate])
    _write_csv(
        os.path.join(cfg.out, "timing.csv"),
        ["trial", "plan_runtime_seconds", "completed"],
        [
            {"trial": s.trial, "plan_runtime_seconds": s.plan_runtime, "completed": s.completed}
            for s in summaries
        ],
    )
    return ExperimentResult(summaries=summaries, aggregate=aggregate, out_dir=cfg.out)


def recompute_aggregate_from_traces(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Rebuild the aggregate row from the written traces (consistency check)."""
    summaries = []
    for trial in range(cfg.trials):
        path = os.path.join(out_dir, f"trace_{trial}.jsonl")
        rows = []
        with open(path) as fh:
            for line in fh:
                rows.append(json.loads(line))
        steps = len(rows)
        transmissions = sum(1 for r in rows if r["info"]["kind"] != "null")
        summaries.append(
            TrialSummary(
                trial=trial,
                total_score=sum(r["clean_score"] for r in rows),
                infos_per_timestep=(transmissions / steps) if steps else 0.0,
                env_reward=sum(r["env_reward"] for r in rows),
                plan_runtime=0.0,
                replan_count=sum(1 for r in rows if r["replanned"]),
                steps=steps,
                completed=steps > 0,
            )
        )
    return aggregate_summaries(cfg, summaries)


CURVE_COLUMNS = [
    "episode", "score_mean", "score_std", "noisy_mean", "noisy_std",
    "epsilon", "loss_mean",
]

TRIAL_CURVE_COLUMNS = [
    "episode", "cumulative_true_score", "cumulative_noisy_score", "epsilon", "mean_loss",
]


def _train_config(cfg: ExperimentConfig, domain) -> TrainConfig:
    changes = {}
    if cfg.change_epochs:
        pv_lists = cfg.change_weights
        if pv_lists and not isinstance(pv_lists[0], (list, tuple)):
            pv_lists = [pv_lists]
        for i, epoch in enumerate(cfg.change_epochs):
            pv = pv_lists[i % len(pv_lists)]
            changes[int(epoch)] = build_spec(cfg, domain, per_value=[float(x) for x in pv])
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        l2_scale=cfg.l2_scale,
        batch_size=cfg.batch_size,
        replay_capacity=cfg.replay_capacity,
        epsilon_end=cfg.epsilon_end,
        epsilon_decay_episodes=cfg.epsilon_decay_episodes,
        episodes=cfg.episodes,
        history_feature=cfg.history_f,
        null_reward=cfg.null_reward,
        preference_changes=changes,
    )


def run_learning_experiment(cfg: ExperimentConfig) -> dict:
    """Run learning trials; write per-trial curves and the aggregated curve.csv."""
    os.makedirs(cfg.out, exist_ok=True)
    domain = build_domain(cfg)
    spec = build_spec(cfg, domain)
    problem = build_problem(cfg, domain, spec)
    tc = _train_config(cfg, domain)

    per_trial = []
    for trial in range(cfg.trials):
        human = SimulatedHuman(
            domain.initial_human_belief(),
            problem.forward,
            spec,
            noise_sigma=cfg.noise_sigma,
            rng_seed=np.random.SeedSequence([cfg.seed, trial, 7]),
            history=HistoryPenalty(cfg.history_penalty) if cfg.history_f else None,
        )
        _, records = train_loop(problem, human, tc, seed=cfg.seed * 100_003 + trial)
        per_trial.append(records)
        _write_csv(
            os.path.join(cfg.out, f"curve_trial{trial}.csv"),
            TRIAL_CURVE_COLUMNS,
            [
                {
                    "episode": r.episode,
                    "cumulative_true_score": r.cumulative_true_score,
                    "cumulative_noisy_score": r.cumulative_noisy_score,
                    "epsilon": r.epsilon,
                    "mean_loss": r.mean_loss,
                }
                for r in records
            ],
        )

    rows = []
    for ep in range(cfg.episodes):
        true_scores = [t[ep].cumulative_true_score for t in per_trial]
        noisy_scores = [t[ep].cumulative_noisy_score for t in per_trial]
        losses = [t[ep].mean_loss for t in per_trial if math.isfinite(t[ep].mean_loss)]
        ts_m, ts_s = _mean_std(true_scores)
        ns_m, ns_s = _mean_std(noisy_scores)
        rows.append(
            {
                "episode": ep,
                "score_mean": ts_m,
                "score_std": ts_s,
                "noisy_mean": ns_m,
                "noisy_std": ns_s,
                "epsilon": per_trial[0][ep].epsilon,
                "loss_mean": float(np.mean(losses)) if losses else float("nan"),
            }
        )
    _write_csv(os.path.join(cfg.out, "curve.csv"), CURVE_COLUMNS, rows)
    return {"curves": per_trial, "rows": rows, "out_dir": cfg.out}
