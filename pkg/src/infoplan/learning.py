"""Online estimation of the teammate's score function.

A small fully connected network maps the per-entry change in p*ln(p)
between consecutive teammate beliefs to a predicted score. The agent
explores transmissions epsilon-greedily, stores noisy scores in a replay
buffer, and fits the network by plain gradient descent on squared error.
No external ML framework: forward pass, backprop and the optimizer are a
few dozen lines of numpy, which keeps the gradient checkable by finite
differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .beliefs import (
    FactoredBelief,
    HumanForwardModel,
    Information,
    LayoutMismatch,
    condition_on_marginal,
    human_forward_step,
    xlogx,
)
from .planning.planner import Problem, execute_with_replanning
from .scoring import SimulatedHuman


def featurize(b_h: FactoredBelief, b_h_next: FactoredBelief) -> np.ndarray:
    """Per-entry change of p*ln(p) across the transition, canonical order."""
    if not b_h.same_layout(b_h_next):
        raise LayoutMismatch("belief transition does not share a layout")
    return xlogx(b_h_next.flatten()) - xlogx(b_h.flatten())


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class ScoreModel:
    """Fully connected regressor: sigmoid hidden layers, linear scalar output.

    Training happens in a conditioned space: inputs are multiplied by
    ``input_scale`` and targets divided by ``output_scale`` before the
    squared error is formed. Raw penalty-scale targets otherwise turn the
    output layer into a mean-tracker whose swings drown the hidden layers'
    gradients, and the net collapses to a constant predictor. ``predict``
    always returns score-unit values.
    """

    def __init__(self, input_dim: int, hidden=(100, 50), seed=0, init_scale=None,
                 output_bias: float = 0.0, input_scale: float = 3.0,
                 output_scale: float = 10.0):
        rng = np.random.default_rng(seed)
        dims = [input_dim, *hidden, 1]

        def limit(i):
            if init_scale is not None:
                return init_scale
            return math.sqrt(6.0 / (dims[i] + dims[i + 1]))

        self.weights = [
            rng.uniform(-limit(i), limit(i), (dims[i], dims[i + 1]))
            for i in range(len(dims) - 1)
        ]
        self.biases = [
            rng.uniform(-limit(i), limit(i), dims[i + 1])
            for i in range(len(dims) - 1)
        ]
        # an optimistic initial guess keeps the agent transmitting early on,
        # which feeds the replay buffer informative (if often penalized) rows
        self.biases[-1][:] = output_bias / output_scale
        self.input_dim = input_dim
        self.input_scale = float(input_scale)
        self.output_scale = float(output_scale)
        self.lr: Optional[float] = None  # adapted by train_step

    def parameters(self) -> list:
        return self.weights + self.biases

    def copy_parameters(self) -> list:
        return [p.copy() for p in self.parameters()]

    def restore_parameters(self, saved: list):
        for p, s in zip(self.parameters(), saved):
            p[...] = s

    def _forward(self, x: np.ndarray):
        # hidden activations are sigmoids recentered to zero mean before the
        # next linear map; uncentered they share a rank-one common mode that
        # dominates the curvature and stalls plain gradient descent
        acts = [x * self.input_scale]
        h = acts[0]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else _sigmoid(z) - 0.5
            acts.append(h)
        return acts

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError("feature matrix does not match the model input size")
        return self._forward(x)[-1][:, 0] * self.output_scale

    def predict(self, feature: np.ndarray) -> float:
        return float(self.predict_batch(np.asarray(feature, dtype=float)[None, :])[0])

    def _reg(self, l2_scale: float) -> float:
        return l2_scale * sum(float((p * p).sum()) for p in self.parameters())

    def objective(self, x: np.ndarray, y: np.ndarray, l2_scale: float) -> float:
        """The quantity gradient descent minimizes (conditioned space)."""
        x = np.asarray(x, dtype=float)
        raw = self._forward(x)[-1][:, 0]
        data = float(np.mean((raw - np.asarray(y, dtype=float) / self.output_scale) ** 2))
        return data + self._reg(l2_scale)

    def loss(self, x: np.ndarray, y: np.ndarray, l2_scale: float) -> float:
        """Score-unit squared error plus the regularizer (reported value)."""
        preds = self.predict_batch(x)
        data = float(np.mean((preds - np.asarray(y, dtype=float)) ** 2))
        return data + self._reg(l2_scale)

    def objective_and_grads(self, x: np.ndarray, y: np.ndarray, l2_scale: float):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n = x.shape[0]
        acts = self._forward(x)
        raw = acts[-1][:, 0]
        err = raw - y / self.output_scale
        data = float(np.mean(err**2))

        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = (2.0 * err / n)[:, None]
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta + 2.0 * l2_scale * self.weights[i]
            grads_b[i] = delta.sum(axis=0) + 2.0 * l2_scale * self.biases[i]
            if i > 0:
                sig = acts[i] + 0.5  # undo the centering to get sigma(z)
                delta = (delta @ self.weights[i].T) * sig * (1.0 - sig)
        return data + self._reg(l2_scale), grads_w + grads_b


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    l2_scale: float = 1e-7
    batch_size: int = 100
    replay_capacity: int = 10_000
    epsilon_start: float = 1.0
    epsilon_end: float = 1e-2
    epsilon_decay_episodes: int = 20
    lr_floor: float = 1e-3
    lr_ceiling: float = 20.0  # line-searched steps may grow this large
    hidden: tuple = (100, 50)
    init_scale: Optional[float] = None  # None: fan-scaled uniform
    episodes: int = 40
    history_feature: bool = False
    null_reward: float = 1e-3       # protocol constant, known to the agent
    optimistic_init: float = 2.0    # initial predicted score for any transmission
    preference_changes: dict = field(default_factory=dict)  # episode -> ScoreFunctionSpec

    def __post_init__(self):
        if min(self.learning_rate, self.l2_scale, self.batch_size,
               self.replay_capacity, self.epsilon_start, self.epsilon_end,
               self.epsilon_decay_episodes, self.lr_floor) <= 0:
            raise ValueError("training hyperparameters must be positive")


def epsilon_schedule(episodes_since_reset: int, config: TrainConfig) -> float:
    """Exponential decay reaching epsilon_end after epsilon_decay_episodes.

    The rate then stays at its end value, keeping a corrective trickle of
    exploration for the rest of training.
    """
    rate = math.log(config.epsilon_start / config.epsilon_end) / config.epsilon_decay_episodes
    return max(config.epsilon_end, config.epsilon_start * math.exp(-rate * episodes_since_reset))


def train_step(model: ScoreModel, batch, config: TrainConfig) -> float:
    """One gradient-descent update on a batch; returns the pre-update loss.

    The step size halves whenever the update would increase the loss on the
    batch (down to a floor), so repeated steps on a fixed batch are
    monotone nonincreasing.
    """
    x, y = batch
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("train_step needs a nonempty batch")
    if model.lr is None:
        model.lr = config.learning_rate
    reported = model.loss(x, y, config.l2_scale)
    pre_obj, grads = model.objective_and_grads(x, y, config.l2_scale)
    saved = model.copy_parameters()
    while True:
        for p, g in zip(model.parameters(), grads):
            p -= model.lr * g
        post_obj = model.objective(x, y, config.l2_scale)
        if post_obj <= pre_obj:
            # grow the step while descent keeps succeeding; the same-batch
            # check above caps any overshoot, so the ceiling can be generous
            model.lr = min(model.lr * 1.2, config.lr_ceiling)
            break
        model.restore_parameters(saved)
        if model.lr <= config.lr_floor:
            break  # keep parameters unchanged rather than overshoot
        model.lr = max(model.lr / 2.0, config.lr_floor)
    return reported


class ReplayDataset:
    """Ring buffer of scored belief transitions with uniform batch sampling."""

    def __init__(self, capacity: int = 10_000, history_feature: bool = False):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.history_feature = history_feature
        self._rows: list = []
        self._cursor = 0

    def __len__(self):
        return len(self._rows)

    def add(self, b_h: FactoredBelief, b_h_next: FactoredBelief, noisy_score: float,
            prev_nonnull: bool = False):
        feature = featurize(b_h, b_h_next)
        if self.history_feature:
            feature = np.concatenate((feature, [1.0 if prev_nonnull else 0.0]))
        row = (b_h, b_h_next, float(noisy_score), bool(prev_nonnull), feature)
        if len(self._rows) < self.capacity:
            self._rows.append(row)
        else:
            self._rows[self._cursor] = row  # FIFO eviction
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform sample without replacement within the batch."""
        n = len(self._rows)
        if n == 0:
            raise ValueError("cannot sample from an empty dataset")
        take = min(batch_size, n)
        idx = rng.choice(n, size=take, replace=False)
        x = np.stack([self._rows[i][4] for i in idx])
        y = np.array([self._rows[i][2] for i in idx])
        return x, y


def epsilon_greedy_info(
    planner_choice: Information,
    info_space: Sequence[Information],
    epsilon: float,
    rng: np.random.Generator,
) -> Information:
    """The planner's transmission, or (with probability epsilon) a uniform
    random element of the information space. Random atoms come back without
    a marginal; the caller attaches the current one."""
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return info_space[int(rng.integers(len(info_space)))]
    return planner_choice


class ModelScorer:
    """DAG edge weights from the learned model instead of the true scores.

    The null transmission is scored by its known protocol constant rather
    than the model: the feature vector of a null step is indistinguishable
    from that of a useless transmission (both are near-zero belief change),
    so a learned null estimate gets dragged toward the penalty cluster and
    the planner would never stay silent. Only the gain shaping is unknown.
    """

    def __init__(self, model: ScoreModel, forward: HumanForwardModel = None,
                 history_mode: bool = False, null_reward: float = 1e-3):
        self.model = model
        self.history_mode = history_mode
        self.null_reward = null_reward

    def root_entropy(self, belief: FactoredBelief) -> float:
        return 0.0

    def drift_entropy(self, ctx: dict) -> float:
        return 0.0

    def begin(self, node, drifted: FactoredBelief) -> dict:
        base = xlogx(drifted.flatten()) - xlogx(node.belief.flatten())
        return {"node": node, "drifted": drifted, "base": base,
                "node_x": xlogx(node.belief.flatten())}

    def _with_flag(self, features: np.ndarray, node) -> np.ndarray:
        if not self.history_mode:
            return features
        flag = 1.0 if node.last_nonnull else 0.0
        return np.concatenate((features, np.full((features.shape[0], 1), flag)), axis=1)

    def null_score(self, ctx: dict) -> float:
        return self.null_reward

    def score_candidates(self, ctx: dict, cands: list):
        drifted = ctx["drifted"]
        node_x = ctx["node_x"]
        rows = np.empty((len(cands), node_x.size))
        for i, (_, atom, q, _) in enumerate(cands):
            child = condition_on_marginal(drifted, atom.with_marginal(q))
            rows[i] = xlogx(child.flatten()) - node_x
        feats = self._with_flag(rows, ctx["node"])
        return self.model.predict_batch(feats), np.zeros(len(cands))


def fit_linear_probe(features: np.ndarray, scores: np.ndarray):
    """Least-squares linear map from features to scores (diagnostic).

    With the identity shaping and a negligible threshold, the true score is
    exactly linear in the feature vector, so the probe recovers effective
    per-entry weights.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(scores, dtype=float)
    design = np.concatenate((x, np.ones((x.shape[0], 1))), axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef[:-1], float(coef[-1])


@dataclass
class EpisodeRecord:
    episode: int
    cumulative_true_score: float
    cumulative_noisy_score: float
    epsilon: float
    mean_loss: float
    env_return: float
    transmissions: int
    steps: int


def train_loop(
    problem: Problem,
    human: SimulatedHuman,
    config: TrainConfig,
    seed: int = 0,
) -> Tuple[ScoreModel, List[EpisodeRecord]]:
    """Run episodes, exploring transmissions and fitting the score model online.

    Each episode resets the world and both beliefs, replans under the
    current model, explores epsilon-greedily, stores (belief, belief',
    noisy score) transitions, and takes one gradient step per timestep.
    Preference changes scheduled in the config swap the simulated
    teammate's score spec and reset the exploration rate.
    """
    domain = problem.domain
    input_dim = domain.initial_human_belief().entry_count + (
        1 if config.history_feature else 0
    )
    model = ScoreModel(
        input_dim, hidden=config.hidden, seed=seed, init_scale=config.init_scale,
        output_bias=config.optimistic_init,
    )
    scorer = ModelScorer(
        model, history_mode=config.history_feature, null_reward=config.null_reward
    )
    learn_problem = Problem(
        domain=domain,
        forward=problem.forward,
        scorer=scorer,
        info_space=problem.info_space,
        beam_width=problem.beam_width,
        candidate_limit=problem.candidate_limit,
    )
    dataset = ReplayDataset(config.replay_capacity, history_feature=config.history_feature)
    streams = np.random.SeedSequence([seed, 0xED0C]).spawn(3)
    domain_rng = np.random.default_rng(streams[0])
    explore_rng = np.random.default_rng(streams[1])
    batch_rng = np.random.default_rng(streams[2])

    records: List[EpisodeRecord] = []
    eps_anchor = 0
    for episode in range(config.episodes):
        if episode in config.preference_changes:
            human.set_spec(config.preference_changes[episode])
            eps_anchor = episode
        epsilon = epsilon_schedule(episode - eps_anchor, config)
        state = domain.sample_state(domain_rng)
        human.reset(domain.initial_human_belief())
        losses: list = []
        prev_nonnull = [False]

        def override(planned: Information, b_a: FactoredBelief, t: int) -> Information:
            choice = epsilon_greedy_info(planned, learn_problem.info_space, epsilon, explore_rng)
            if choice is planned or choice.is_null:
                return choice
            return choice.with_marginal(domain.transmit_marginal(b_a, choice))

        def on_step(record, b_h_before, b_h_after):
            dataset.add(b_h_before, b_h_after, record.noisy_score, prev_nonnull[0])
            prev_nonnull[0] = not record.info.is_null
            x, y = dataset.sample(config.batch_size, batch_rng)
            losses.append(train_step(model, (x, y), config))

        trace = execute_with_replanning(
            learn_problem, state, human, info_override=override, on_step=on_step
        )
        records.append(
            EpisodeRecord(
                episode=episode,
                cumulative_true_score=trace.human_return,
                cumulative_noisy_score=sum(s.noisy_score for s in trace.steps),
                epsilon=epsilon,
                mean_loss=float(np.mean(losses)) if losses else float("nan"),
                env_return=trace.env_return,
                transmissions=trace.transmissions,
                steps=len(trace.steps),
            )
        )
    return model, records
