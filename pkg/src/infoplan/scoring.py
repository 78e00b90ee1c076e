"""Teammate-side scoring: gain shaping and a simulated noisy teammate.

The teammate scores each transmission by applying a shaping function to the
weighted-entropy drop the transmission induced in their own belief. Null
transmissions earn a small constant instead, and gains below the threshold
earn a fixed penalty.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
import math

import numpy as np

from .beliefs import (
    FactoredBelief,
    HumanForwardModel,
    Information,
    LayoutMismatch,
    Weights,
    jeffrey_update,
    weighted_gain,
)


class FKind(Enum):
    IDENTITY = "id"
    SQUARE = "sq"
    LOG = "log"


@dataclass(frozen=True)
class ScoreFunctionSpec:
    """The teammate's preference bundle: weights plus the shaping function."""

    weights: Weights
    f_kind: FKind = FKind.IDENTITY
    threshold: float = 1.0
    penalty: float = -10.0
    null_reward: float = 1e-3

    def __post_init__(self):
        # threshold 0 is allowed for the identity/square shapes; log needs a
        # positive threshold so its argument stays positive.
        if self.threshold < 0.0:
            raise ValueError("threshold must be nonnegative")
        if self.f_kind is FKind.LOG and self.threshold <= 0.0:
            raise ValueError("log shaping requires a positive threshold")
        if not (self.penalty < 0.0 <= self.null_reward):
            raise ValueError("need penalty < 0 <= null_reward")


def apply_f(spec: ScoreFunctionSpec, gain: float, is_null: bool) -> float:
    """Shape a weighted-entropy gain into a score."""
    if is_null:
        return spec.null_reward
    if gain < spec.threshold:
        return spec.penalty
    if spec.f_kind is FKind.IDENTITY:
        return gain
    if spec.f_kind is FKind.SQUARE:
        return gain * gain
    return math.log(gain)


def score(
    spec: ScoreFunctionSpec,
    b_h: FactoredBelief,
    b_h_next: FactoredBelief,
    info: Information,
) -> float:
    """Score one belief transition ``b_h -> b_h_next`` caused by ``info``."""
    if not b_h.same_layout(b_h_next):
        raise LayoutMismatch("belief transition does not share a layout")
    return apply_f(spec, weighted_gain(b_h, b_h_next, spec.weights), info.is_null)


@dataclass(frozen=True)
class HistoryPenalty:
    """Extra penalty for transmitting on two consecutive timesteps."""

    h_pen: float = -5.0

    def extra(self, info: Information, prev_nonnull: bool) -> float:
        return self.h_pen if (prev_nonnull and not info.is_null) else 0.0


class SimulatedHuman:
    """Stateful stand-in for the teammate: keeps a belief, returns noisy scores.

    Score noise is additive Gaussian from a seeded stream; the stream is
    always advanced one draw per query so traces stay aligned across noise
    settings. ``receive`` returns (clean, noisy) and updates the belief.
    """

    def __init__(
        self,
        belief: FactoredBelief,
        forward: HumanForwardModel,
        spec: ScoreFunctionSpec,
        noise_sigma: float = 0.1,
        rng_seed=0,
        history: HistoryPenalty = None,
    ):
        if noise_sigma < 0.0:
            raise ValueError("noise_sigma must be nonnegative")
        self.belief = belief
        self._initial_belief = belief
        self.forward = forward
        self.spec = spec
        self.noise_sigma = noise_sigma
        self.history = history
        self._rng = np.random.default_rng(rng_seed)
        self._prev_nonnull = False

    def receive(self, info: Information) -> tuple:
        """Update the belief with ``info`` and return (clean, noisy) scores."""
        old = self.belief
        new = jeffrey_update(old, info, self.forward)
        clean = score(self.spec, old, new, info)
        if self.history is not None:
            clean += self.history.extra(info, self._prev_nonnull)
        noisy = clean + self.noise_sigma * float(self._rng.standard_normal())
        self.belief = new
        self._prev_nonnull = not info.is_null
        return clean, noisy

    def reset(self, belief: FactoredBelief = None):
        """Start a fresh episode; the noise stream keeps running."""
        self.belief = belief if belief is not None else self._initial_belief
        if belief is not None:
            self._initial_belief = belief
        self._prev_nonnull = False

    def set_spec(self, spec: ScoreFunctionSpec):
        """Swap preferences mid-training (weight or shape change)."""
        self.spec = spec

    def with_weights(self, weights: Weights) -> ScoreFunctionSpec:
        return replace(self.spec, weights=weights)
