"""Exact-solver checks against an undecomposed joint dynamic program.

The oracle searches the full product space with lexicographically ordered
value pairs and never assumes the problem decomposes; agreement with the
decomposition solver on random tiny instances is the correctness evidence
for the decomposition.
"""
import numpy as np
import pytest

from infoplan.beliefs import (
    CategoricalDist,
    FactoredBelief,
    HumanForwardModel,
    Information,
    NULL_INFO,
    Weights,
)
from infoplan.domains.gridworld import Gridworld, GridworldConfig, GridCtx
from infoplan.planning.exact import (
    ExactProblem,
    LexReward,
    ProblemTooLarge,
    decompose_and_solve_exact,
    evaluate_policy,
)
from infoplan.scoring import FKind, ScoreFunctionSpec
from oracles import joint_lexicographic_optimum, random_tiny_joint_problem as random_tiny_problem


def check_matches_oracle(problem):
    policy = decompose_and_solve_exact(problem)
    oracle = joint_lexicographic_optimum(problem)
    assert policy.env_value == pytest.approx(oracle.env, abs=1e-9)
    assert policy.human_value == pytest.approx(oracle.human, abs=1e-9)
    replayed = evaluate_policy(problem, policy)
    assert replayed.env == pytest.approx(oracle.env, abs=1e-9)
    assert replayed.human == pytest.approx(oracle.human, abs=1e-9)


def test_lexreward_ordering():
    assert LexReward(1.0, -5.0) > LexReward(0.5, 100.0)
    assert LexReward(1.0, 2.0) > LexReward(1.0, 1.0)
    assert LexReward(1.0, 1.0) == LexReward(1.0, 1.0)
    assert max(LexReward(0, 3), LexReward(0, 7)) == LexReward(0, 7)


def test_matches_joint_oracle_small_sample(rng):
    for _ in range(5):
        check_matches_oracle(random_tiny_problem(rng, horizon=3))


def test_forced_actions_reduce_to_dag_optimum(rng):
    # a single available action sequence: the joint optimum is just the best
    # transmission sequence along the induced belief trajectory
    cfg = GridworldConfig(rows=1, cols=1, n_types=2, m_objects=1)
    domain = Gridworld(cfg)

    class OneAction(Gridworld):
        def action_list(self):
            from infoplan.domains.gridworld import Detect

            return [Detect(0)]

    forced = OneAction(cfg)
    b_a0 = FactoredBelief.of({0: CategoricalDist(np.array([0.5, 0.3, 0.2]))})
    b_h0 = FactoredBelief.of({0: CategoricalDist.uniform(3)})
    info_space = [NULL_INFO, Information.holds(0, 0), Information.not_holds(0, 1)]
    spec = ScoreFunctionSpec(
        weights=Weights(np.array([5.0, 2.0, 1.0])), threshold=0.1
    )
    problem = ExactProblem(
        domain=forced,
        b_a0=b_a0,
        b_h0=b_h0,
        ctx0=GridCtx(0, 0),
        horizon=2,
        info_space=info_space,
        forward=HumanForwardModel(0.0),
        spec=spec,
    )
    check_matches_oracle(problem)


def test_zero_weight_human_prefers_silence(rng):
    problem = random_tiny_problem(rng, horizon=3)
    problem.spec = ScoreFunctionSpec(
        weights=Weights(np.zeros(problem.b_h0.entry_count)),
        f_kind=FKind.IDENTITY,
        threshold=0.0,
        null_reward=1e-3,
    )
    policy = decompose_and_solve_exact(problem)
    # every transmission gains exactly zero, so silence (1e-3 per step) wins;
    # check the chosen transmission at the root branches
    domain = problem.domain
    a = policy.action(problem.b_a0, problem.ctx0, 0)
    for obs, p in domain.observation_dist(problem.b_a0, problem.ctx0, a):
        b2 = domain.belief_update(problem.b_a0, a, obs)
        ctx2 = domain.advance_context(problem.ctx0, a, obs)
        info = policy.info(b2, ctx2, problem.b_h0, 0)
        assert info.is_null
    oracle = joint_lexicographic_optimum(problem)
    assert policy.human_value == pytest.approx(oracle.human, abs=1e-12)
    assert policy.human_value > 0


def test_refuses_oversized_problems(rng):
    problem = random_tiny_problem(rng, horizon=4)
    problem.max_states = 3
    with pytest.raises(ProblemTooLarge):
        decompose_and_solve_exact(problem)
