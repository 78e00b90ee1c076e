import math

import numpy as np
import pytest

from infoplan.beliefs import (
    CategoricalDist,
    FactoredBelief,
    HumanForwardModel,
    Information,
    NULL_INFO,
    UnsupportedUpdate,
    Weights,
    weighted_gain,
)
from infoplan.scoring import (
    FKind,
    HistoryPenalty,
    ScoreFunctionSpec,
    SimulatedHuman,
    apply_f,
    score,
)
from conftest import random_belief, uniform_belief


def make_spec(dim=4, f=FKind.IDENTITY, threshold=1.0, weights=None, **kw):
    b = uniform_belief(1, dim)
    w = Weights.per_value(weights if weights is not None else np.ones(dim), b)
    return ScoreFunctionSpec(weights=w, f_kind=f, threshold=threshold, **kw)


def test_spec_validation():
    with pytest.raises(ValueError):
        make_spec(threshold=-0.5)
    with pytest.raises(ValueError):
        make_spec(f=FKind.LOG, threshold=0.0)
    with pytest.raises(ValueError):
        make_spec(penalty=0.5)
    with pytest.raises(ValueError):
        make_spec(null_reward=-1e-3)
    make_spec(threshold=0.0)  # allowed for identity shaping


def test_apply_f_cases():
    assert apply_f(make_spec(f=FKind.SQUARE), 4.0, False) == 16.0
    for f in FKind:
        assert apply_f(make_spec(f=f), 0.5, False) == -10.0
        assert apply_f(make_spec(f=f), 2.0, True) == pytest.approx(1e-3)
    assert apply_f(make_spec(f=FKind.LOG), 1.0, False) == 0.0
    assert apply_f(make_spec(), 3.5, False) == 3.5
    assert apply_f(make_spec(f=FKind.LOG), math.e, False) == pytest.approx(1.0)


def test_apply_f_monotone_above_threshold(rng):
    for f in FKind:
        spec = make_spec(f=f)
        gains = np.sort(rng.uniform(1.0, 50.0, 200))
        vals = [apply_f(spec, g, False) for g in gains]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_score_same_belief_penalized(rng):
    b = uniform_belief(1, 4)
    spec = make_spec()
    info = Information.holds(0, 0, 0.25)
    assert score(spec, b, b, info) == spec.penalty


def test_score_uniform2_collapse():
    before = FactoredBelief.of({0: CategoricalDist.uniform(2)})
    after = FactoredBelief.of({0: CategoricalDist.degenerate(2, 0)})
    spec = ScoreFunctionSpec(weights=Weights(np.ones(2)), threshold=0.5)
    got = score(spec, before, after, Information.holds(0, 0, 1.0))
    assert got == pytest.approx(math.log(2), abs=1e-12)


def test_score_matches_shannon_gain_with_unit_weights(rng):
    spec = ScoreFunctionSpec(weights=Weights(np.ones(8)), threshold=1e-12)
    for _ in range(20):
        b = random_belief(rng, dims=[4, 4], min_p=1e-3)
        info = Information.holds(0, 1, 0.9)
        from infoplan.beliefs import jeffrey_update

        nxt = jeffrey_update(b, info, HumanForwardModel(0.0))
        g = weighted_gain(b, nxt, spec.weights)
        if g >= spec.threshold:
            assert score(spec, b, nxt, info) == pytest.approx(g, abs=1e-12)


def test_human_receive_null_exact():
    b = uniform_belief(1, 4)
    spec = make_spec()
    h = SimulatedHuman(b, HumanForwardModel(0.0), spec, noise_sigma=0.0, rng_seed=7)
    clean, noisy = h.receive(NULL_INFO)
    assert clean == spec.null_reward
    assert noisy == spec.null_reward
    assert h.belief.allclose(b, atol=0)


def test_human_receive_seeded_determinism():
    b = uniform_belief(1, 4)
    spec = make_spec()

    def run():
        h = SimulatedHuman(b, HumanForwardModel(1e-3), spec, noise_sigma=0.3, rng_seed=42)
        out = []
        for v in range(3):
            out.append(h.receive(Information.holds(0, v, 0.8)))
        return out

    assert run() == run()


def test_human_receive_noise_only_on_score():
    b = uniform_belief(1, 4)
    spec = make_spec()
    h = SimulatedHuman(b, HumanForwardModel(0.0), spec, noise_sigma=0.5, rng_seed=3)
    clean, noisy = h.receive(Information.holds(0, 0, 1.0))
    assert noisy != clean
    assert np.allclose(h.belief.dist(0).probs, [1, 0, 0, 0])


def test_human_receive_propagates_unsupported():
    b = FactoredBelief.of({0: CategoricalDist.degenerate(2, 0)})
    spec = ScoreFunctionSpec(weights=Weights(np.ones(2)))
    h = SimulatedHuman(b, HumanForwardModel(0.0), spec, noise_sigma=0.0)
    with pytest.raises(UnsupportedUpdate):
        h.receive(Information.holds(0, 1, 0.5))


def test_human_reset_restores_initial_belief():
    b = uniform_belief(1, 3)
    h = SimulatedHuman(b, HumanForwardModel(0.0), make_spec(dim=3), noise_sigma=0.0)
    h.receive(Information.holds(0, 0, 1.0))
    assert not h.belief.allclose(b)
    h.reset()
    assert h.belief.allclose(b, atol=0)


def test_history_penalty_two_in_a_row():
    b = uniform_belief(1, 4)
    spec = make_spec(threshold=0.1)
    h = SimulatedHuman(
        b, HumanForwardModel(0.0), spec, noise_sigma=0.0, history=HistoryPenalty(-5.0)
    )
    first, _ = h.receive(Information.not_holds(0, 3, 1.0))
    second, _ = h.receive(Information.not_holds(0, 2, 1.0))
    plain = SimulatedHuman(b, HumanForwardModel(0.0), spec, noise_sigma=0.0)
    ref1, _ = plain.receive(Information.not_holds(0, 3, 1.0))
    ref2, _ = plain.receive(Information.not_holds(0, 2, 1.0))
    assert first == ref1  # previous step was null
    assert second == ref2 - 5.0  # back-to-back transmission

    # a null after a transmission is not penalized
    h2 = SimulatedHuman(
        b, HumanForwardModel(0.0), spec, noise_sigma=0.0, history=HistoryPenalty(-5.0)
    )
    h2.receive(Information.not_holds(0, 3, 1.0))
    clean, _ = h2.receive(NULL_INFO)
    assert clean == spec.null_reward
