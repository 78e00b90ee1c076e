"""Exact joint solver at desk scale.

Solves the joint (sender belief, teammate belief) decision problem by first
solving the environment side alone and then, with the acting policy fixed,
solving the transmission side over the product space. Because transmissions
never influence the environment, this decomposition is exact: the returned
policy maximizes expected environment return, and among such policies
maximizes expected teammate score. Only meant for tiny instances; it
refuses anything above its state budget and serves as the oracle the
approximate planner is tested against.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import total_ordering
from typing import List, Optional

import numpy as np

from ..beliefs import (
    FactoredBelief,
    HumanForwardModel,
    Information,
    UnsupportedUpdate,
    jeffrey_update,
)
from ..scoring import ScoreFunctionSpec, score


@total_ordering
@dataclass(frozen=True)
class LexReward:
    """Reward pair ordered by environment value first, teammate score second."""

    env: float
    human: float

    def __eq__(self, other):
        return (self.env, self.human) == (other.env, other.human)

    def __lt__(self, other):
        return (self.env, self.human) < (other.env, other.human)

    def __add__(self, other):
        return LexReward(self.env + other.env, self.human + other.human)

    def scaled(self, p: float) -> "LexReward":
        return LexReward(self.env * p, self.human * p)


@dataclass(frozen=True)
class JointState:
    agent_belief: FactoredBelief
    human_belief: FactoredBelief


@dataclass(frozen=True)
class JointAction:
    env_action: object
    info: Information


class ProblemTooLarge(RuntimeError):
    pass


@dataclass
class ExactProblem:
    domain: object
    b_a0: FactoredBelief
    b_h0: FactoredBelief
    ctx0: object
    horizon: int
    info_space: list
    forward: HumanForwardModel
    spec: ScoreFunctionSpec
    max_states: int = 100_000


@dataclass
class ExactPolicy:
    """Tabular joint policy: env action from the sender's side of the state,
    transmission from the post-observation product state."""

    problem: ExactProblem
    act_map: dict
    info_map: dict
    env_value: float
    human_value: float

    def action(self, b_a: FactoredBelief, ctx, t: int):
        return self.act_map[(b_a.key(), ctx, t)]

    def info(self, b_a_post: FactoredBelief, ctx_post, b_h: FactoredBelief, t: int):
        return self.info_map[(b_a_post.key(), ctx_post, b_h.key(), t)]


def _supported_infos(problem: ExactProblem, b_h: FactoredBelief, table) -> list:
    out = []
    for idx, atom in enumerate(problem.info_space):
        if atom.is_null:
            out.append(atom)
            continue
        info = atom.with_marginal(float(table[idx]))
        try:
            nxt = jeffrey_update(b_h, info, problem.forward)
        except UnsupportedUpdate:
            continue
        out.append((info, nxt))
    return out


def solve_env(problem: ExactProblem):
    """Value iteration over the sender's belief alone (environment side)."""
    domain = problem.domain
    actions = domain.action_list()
    memo = {}
    act_map = {}

    def value(b: FactoredBelief, ctx, t: int) -> float:
        if domain.ctx_terminal(ctx) or t >= problem.horizon:
            return 0.0
        key = (b.key(), ctx, t)
        if key in memo:
            return memo[key]
        if len(memo) > problem.max_states:
            raise ProblemTooLarge("environment state budget exceeded")
        best_v, best_a = None, None
        for a in actions:
            v = domain.expected_reward(b, ctx, a)
            for obs, p in domain.observation_dist(b, ctx, a):
                b2 = domain.belief_update(b, a, obs)
                ctx2 = domain.advance_context(ctx, a, obs)
                v += p * value(b2, ctx2, t + 1)
            if best_v is None or v > best_v:
                best_v, best_a = v, a
        memo[key] = best_v
        act_map[key] = best_a
        return best_v

    root = value(problem.b_a0, problem.ctx0, 0)
    return root, memo, act_map


def decompose_and_solve_exact(problem: ExactProblem) -> ExactPolicy:
    """Exact policy via decomposition: acting solved alone, transmissions after.

    The transmission side is a value iteration over (sender belief, context,
    teammate belief, step); at each step the transmission is chosen after
    the observation arrives, with the transmitted marginal taken from the
    freshly updated sender belief, matching the execution semantics.
    """
    domain = problem.domain
    env_root, _, act_map = solve_env(problem)

    info_memo = {}
    info_map = {}

    def post_value(b2: FactoredBelief, ctx2, b_h: FactoredBelief, t: int) -> float:
        """Best transmission score-to-go right after the step-t observation."""
        key = (b2.key(), ctx2, b_h.key(), t)
        if key in info_memo:
            return info_memo[key]
        if len(info_memo) > problem.max_states:
            raise ProblemTooLarge("joint state budget exceeded")
        table = domain.layer_marginals(b2)
        best_v, best_i = None, None
        for entry in _supported_infos(problem, b_h, table):
            if isinstance(entry, Information):
                info = entry
                b_h2 = jeffrey_update(b_h, info, problem.forward)
            else:
                info, b_h2 = entry
            v = score(problem.spec, b_h, b_h2, info) + human_value(b2, ctx2, b_h2, t + 1)
            if best_v is None or v > best_v:
                best_v, best_i = v, info
        info_memo[key] = best_v
        info_map[key] = best_i
        return best_v

    hv_memo = {}

    def human_value(b: FactoredBelief, ctx, b_h: FactoredBelief, t: int) -> float:
        if domain.ctx_terminal(ctx) or t >= problem.horizon:
            return 0.0
        key = (b.key(), ctx, b_h.key(), t)
        if key in hv_memo:
            return hv_memo[key]
        a = act_map[(b.key(), ctx, t)]
        v = 0.0
        for obs, p in domain.observation_dist(b, ctx, a):
            b2 = domain.belief_update(b, a, obs)
            ctx2 = domain.advance_context(ctx, a, obs)
            v += p * post_value(b2, ctx2, b_h, t)
        hv_memo[key] = v
        return v

    human_root = human_value(problem.b_a0, problem.ctx0, problem.b_h0, 0)
    return ExactPolicy(
        problem=problem,
        act_map=act_map,
        info_map=info_map,
        env_value=env_root,
        human_value=human_root,
    )


def evaluate_policy(problem: ExactProblem, policy: ExactPolicy) -> LexReward:
    """Exact expected (env, human) return of a tabular joint policy."""
    domain = problem.domain

    def walk(b: FactoredBelief, ctx, b_h: FactoredBelief, t: int) -> LexReward:
        if domain.ctx_terminal(ctx) or t >= problem.horizon:
            return LexReward(0.0, 0.0)
        a = policy.action(b, ctx, t)
        total = LexReward(domain.expected_reward(b, ctx, a), 0.0)
        for obs, p in domain.observation_dist(b, ctx, a):
            b2 = domain.belief_update(b, a, obs)
            ctx2 = domain.advance_context(ctx, a, obs)
            info = policy.info(b2, ctx2, b_h, t)
            b_h2 = jeffrey_update(b_h, info, problem.forward)
            s = score(problem.spec, b_h, b_h2, info)
            tail = walk(b2, ctx2, b_h2, t + 1)
            total = total + (LexReward(0.0, s) + tail).scaled(p)
        return total

    return walk(problem.b_a0, problem.ctx0, problem.b_h0, 0)
