"""Determinize-and-replan joint planning.

Planning splits into two independent halves. The acting half optimizes the
environment return over a determinized model (observations replaced by
their most likely outcome under the current belief). The transmission half
then rides on the acting plan's predicted belief trajectory: a layered DAG
over teammate beliefs is searched for the maximum-score transmission
sequence. Execution follows the merged plan and replans from scratch
whenever a real observation contradicts the determinized prediction.

Within one timestep the order is: act, observe, update own belief, transmit
(with the marginal taken from the freshly updated belief), teammate updates
and scores.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..beliefs import (
    FactoredBelief,
    HumanForwardModel,
    Information,
    NULL_INFO,
    UnsupportedUpdate,
    bayes_filter_update,
    jeffrey_update,
)
from ..scoring import SimulatedHuman
from .dag import DagNode, InfoPlan, get_successors, longest_weighted_path_dag, make_node


class PlanningFailure(RuntimeError):
    pass


@dataclass
class Problem:
    """Everything the planner needs besides the current beliefs."""

    domain: object
    forward: HumanForwardModel
    scorer: object
    info_space: list = None
    beam_width: Optional[int] = 64
    candidate_limit: Optional[int] = None

    def __post_init__(self):
        if self.info_space is None:
            self.info_space = self.domain.info_space()


class Determinization:
    """Domain wrapper that replaces observations by their most likely value.

    For noiseless domains whose beliefs are already certain this is the
    identity transform: predicted observations equal real ones.
    """

    def __init__(self, domain):
        self.domain = domain

    def predict(self, belief: FactoredBelief, ctx, action):
        return self.domain.predict_observation(belief, ctx, action)

    def step(self, belief: FactoredBelief, ctx, action):
        obs = self.predict(belief, ctx, action)
        reward = self.domain.expected_reward(belief, ctx, action)
        nxt = self.domain.belief_update(belief, action, obs)
        nctx = self.domain.advance_context(ctx, action, obs)
        return nxt, nctx, obs, reward


def determinize(domain) -> Determinization:
    return Determinization(domain)


def ml_value(dist) -> int:
    """Most likely value index; ties resolve to the lowest index."""
    return int(np.argmax(dist.probs))


def solve_acting(det: Determinization, belief: FactoredBelief, ctx) -> list:
    """Branch-free action sequence for the determinized problem.

    Realized per domain: desk-scale grids run an exhaustive expected-reward
    search, larger instances a greedy nearest-known / nearest-unknown
    policy. The sequence ends at the determinized terminal condition or at
    a determinized fixed point (nothing left to try), in which case
    execution will trigger a replan once reality diverges.
    """
    actions = det.domain.acting_plan(belief, ctx)
    if not actions and not det.domain.ctx_terminal(ctx):
        raise PlanningFailure("no acting plan exists from this state")
    return actions


@dataclass
class Trajectory:
    beliefs: List[FactoredBelief]   # length = len(actions) + 1
    contexts: list
    observations: list              # predicted, aligned with actions
    rewards: List[float]            # determinized expected rewards


def belief_trajectory(det: Determinization, actions: Sequence, belief: FactoredBelief, ctx) -> Trajectory:
    beliefs = [belief]
    contexts = [ctx]
    observations = []
    rewards = []
    b, c = belief, ctx
    for action in actions:
        b, c, obs, r = det.step(b, c, action)
        beliefs.append(b)
        contexts.append(c)
        observations.append(obs)
        rewards.append(r)
    return Trajectory(beliefs, contexts, observations, rewards)


@dataclass
class PlanStep:
    action: object
    info: Information
    predicted_obs: object
    predicted_belief: FactoredBelief    # sender belief after the action
    predicted_human: FactoredBelief     # teammate belief after the transmission


@dataclass
class JointPlan:
    steps: List[PlanStep]
    now_info: Optional[Information] = None   # transmission owed for the current step
    info_total: float = 0.0

    def __len__(self):
        return len(self.steps)


def _marginal_tables(problem: Problem, beliefs: Sequence[FactoredBelief]) -> list:
    return [problem.domain.layer_marginals(b) for b in beliefs]


def _predict_humans(
    problem: Problem, b_h: FactoredBelief, infos: Sequence[Information]
) -> List[FactoredBelief]:
    """Teammate beliefs after each planned transmission."""
    out = []
    cur = b_h
    for info in infos:
        cur = jeffrey_update(cur, info, problem.forward)
        out.append(cur)
    return out


def plan(
    problem: Problem,
    b_a: FactoredBelief,
    b_h: FactoredBelief,
    ctx,
    include_now_slot: bool = False,
    last_nonnull: bool = False,
) -> JointPlan:
    """Full planning pass: determinize, act, roll beliefs, solve the DAG, merge.

    ``include_now_slot`` adds one leading transmission slot whose marginal
    comes from the current belief; it is used when replanning right after
    an observation, so the interrupted timestep still gets to transmit.
    """
    det = determinize(problem.domain)
    if problem.domain.ctx_terminal(ctx):
        actions = []
    else:
        actions = solve_acting(det, b_a, ctx)
    traj = belief_trajectory(det, actions, b_a, ctx)

    # transmission slot k uses the sender belief after action k; a now-slot
    # prepends a slot fed by the current belief.
    slot_beliefs = traj.beliefs[1:] if not include_now_slot else traj.beliefs
    horizon = len(slot_beliefs)
    if horizon == 0:
        return JointPlan(steps=[], now_info=None, info_total=0.0)

    tables = _marginal_tables(problem, slot_beliefs)
    scorer = problem.scorer
    root = make_node(b_h, 0, entropy=scorer.root_entropy(b_h), last_nonnull=last_nonnull)

    def successors(node: DagNode):
        return get_successors(
            node,
            tables,
            problem.info_space,
            scorer,
            problem.forward,
            candidate_limit=problem.candidate_limit,
        )

    info_plan = longest_weighted_path_dag(
        root, successors, horizon, beam_width=problem.beam_width
    )
    infos = info_plan.infos

    now_info = None
    if include_now_slot:
        now_info, infos = infos[0], infos[1:]

    humans = _predict_humans(problem, jeffrey_update(b_h, now_info, problem.forward)
                             if now_info is not None else b_h, infos)
    steps = [
        PlanStep(
            action=a,
            info=i,
            predicted_obs=o,
            predicted_belief=bb,
            predicted_human=hh,
        )
        for a, i, o, bb, hh in zip(actions, infos, traj.observations, traj.beliefs[1:], humans)
    ]
    return JointPlan(steps=steps, now_info=now_info, info_total=info_plan.total)


@dataclass
class StepRecord:
    t: int
    action: object
    observation: object
    info: Information
    marginal: Optional[float]
    clean_score: float
    noisy_score: float
    env_reward: float
    replanned: bool


@dataclass
class EpisodeTrace:
    steps: List[StepRecord] = field(default_factory=list)
    completed: bool = False
    failure: Optional[str] = None
    replan_count: int = 0
    plan_seconds: float = 0.0

    @property
    def env_return(self) -> float:
        return sum(s.env_reward for s in self.steps)

    @property
    def human_return(self) -> float:
        return sum(s.clean_score for s in self.steps)

    @property
    def transmissions(self) -> int:
        return sum(0 if s.info.is_null else 1 for s in self.steps)


def execute_with_replanning(
    problem: Problem,
    state,
    human: SimulatedHuman,
    max_steps: int = None,
    info_override: Callable = None,
    b_a: FactoredBelief = None,
    on_step: Callable = None,
) -> EpisodeTrace:
    """Run one episode, replanning whenever an observation contradicts the plan.

    ``info_override(planned_info, b_a, t)`` may substitute the transmission
    for a step (exploration during learning); it must return an Information
    whose marginal matches the current belief. ``on_step(record, b_h_before,
    b_h_after)`` fires after every executed step (training hook).
    """
    domain = problem.domain
    trace = EpisodeTrace()
    if max_steps is None:
        max_steps = domain.default_step_cap()

    if b_a is None:
        b_a = domain.initial_belief()
    b_h = human.belief
    ctx = domain.plan_context(state)
    prev_nonnull = False

    def timed_plan(ba, bh, c, now):
        start = time.perf_counter()
        try:
            return plan(problem, ba, bh, c, include_now_slot=now, last_nonnull=prev_nonnull)
        finally:
            trace.plan_seconds += time.perf_counter() - start

    cursor = 0
    t = 0
    try:
        current = timed_plan(b_a, b_h, ctx, False)
        while not domain.terminal(state) and t < max_steps:
            if cursor >= len(current.steps):
                current = timed_plan(b_a, b_h, ctx, False)
                cursor = 0
                trace.replan_count += 1
            step = current.steps[cursor]
            action = step.action
            state, obs, reward = domain.step(state, action)
            b_a = bayes_filter_update(b_a, action, obs, domain)
            ctx = domain.advance_context(ctx, action, obs)
            replanned = domain.obs_key(obs) != domain.obs_key(step.predicted_obs)
            if replanned:
                current = timed_plan(b_a, b_h, ctx, True)
                trace.replan_count += 1
                info = current.now_info if current.now_info is not None else NULL_INFO
                cursor = 0
            else:
                info = step.info
                cursor += 1
            if info_override is not None:
                info = info_override(info, b_a, t)
            try:
                clean, noisy = human.receive(info)
            except UnsupportedUpdate:
                # an explored atom can contradict a hard-conditioned teammate
                # belief when drift is zero; fall back to silence
                info = NULL_INFO
                clean, noisy = human.receive(info)
            b_h_before = b_h
            b_h = jeffrey_update(b_h, info, problem.forward)
            prev_nonnull = not info.is_null
            record = StepRecord(
                t=t,
                action=action,
                observation=obs,
                info=info,
                marginal=info.marginal,
                clean_score=clean,
                noisy_score=noisy,
                env_reward=reward,
                replanned=replanned,
            )
            trace.steps.append(record)
            if on_step is not None:
                on_step(record, b_h_before, b_h)
            t += 1
        trace.completed = domain.terminal(state)
        if not trace.completed and trace.failure is None:
            trace.failure = f"step cap {max_steps} reached before terminal"
    except Exception as exc:  # abort cleanly, keep the partial trace
        trace.failure = f"{type(exc).__name__}: {exc}"
    return trace
