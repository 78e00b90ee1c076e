"""Layered DAG over teammate-belief states and its longest-path solver.

Nodes are (quantized teammate belief, timestep) pairs; an edge carries one
piece of transmittable information and is weighted by the score the
transmission would earn. Because every path has exactly ``horizon`` edges,
the maximum-weight path is the optimal transmission sequence, found by
dynamic programming over the timestep layers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Sequence, Tuple

import numpy as np

from ..beliefs import (
    FactoredBelief,
    FluentKind,
    HumanForwardModel,
    Information,
    condition_on_marginal,
    factored_weighted_entropy,
    human_forward_step,
    marginal,
    xlogx,
)
from ..scoring import HistoryPenalty, ScoreFunctionSpec, apply_f


@dataclass(frozen=True, eq=False)
class DagNode:
    """One layer entry: the teammate's belief after ``timestep`` transmissions."""

    key: bytes
    timestep: int
    belief: FactoredBelief
    entropy: float = 0.0
    last_nonnull: bool = False


def make_node(
    belief: FactoredBelief, timestep: int, entropy: float = 0.0, last_nonnull: bool = False
) -> DagNode:
    key = belief.key() + (b"\x01" if last_nonnull else b"\x00")
    return DagNode(key=key, timestep=timestep, belief=belief, entropy=entropy,
                   last_nonnull=last_nonnull)


Edge = Tuple[DagNode, Information, float]


class SpecScorer:
    """Edge weights from a known score function.

    Per-candidate weights are evaluated in closed form from per-factor
    aggregates of the drifted belief, so scoring all candidates at a node
    costs O(entries + candidates) instead of O(entries * candidates). The
    closed form is algebraically identical to scoring the materialized
    update (cross-checked in tests).
    """

    def __init__(self, spec: ScoreFunctionSpec, history: HistoryPenalty = None):
        self.spec = spec
        self.history = history

    @property
    def history_mode(self) -> bool:
        return self.history is not None

    def root_entropy(self, belief: FactoredBelief) -> float:
        return factored_weighted_entropy(belief, self.spec.weights)

    def begin(self, node: DagNode, drifted: FactoredBelief) -> dict:
        w = self.spec.weights.flat
        flat = drifted.flatten()
        starts = drifted._starts
        wx = w * xlogx(flat)
        t1 = np.add.reduceat(wx, starts)
        t2 = np.add.reduceat(w * flat, starts)
        tot = np.add.reduceat(flat, starts)
        return {
            "node": node,
            "drifted": drifted,
            "flat": flat,
            "t1": t1,
            "t2": t2,
            "tot": tot,
            "s_drift": -float(t1.sum()),
            "s_node": node.entropy,
        }

    def null_score(self, ctx: dict) -> float:
        return self.spec.null_reward

    def drift_entropy(self, ctx: dict) -> float:
        return ctx["s_drift"]

    def score_candidates(self, ctx: dict, cands: list) -> Tuple[np.ndarray, np.ndarray]:
        """Weights and resulting entropies for (index, atom, q, p_v) candidates."""
        spec = self.spec
        drifted = ctx["drifted"]
        s_node = ctx["s_node"]
        s_drift = ctx["s_drift"]
        hist_extra = (
            self.history.h_pen if (self.history and ctx["node"].last_nonnull) else 0.0
        )
        weights = np.empty(len(cands))
        entropies = np.empty(len(cands))
        wflat = spec.weights.flat
        t1s, t2s, tots = ctx["t1"], ctx["t2"], ctx["tot"]
        for i, (_, atom, q, p_v) in enumerate(cands):
            fid = atom.factor
            pos = drifted.factor_pos(fid)
            w_v = float(wflat[drifted.offset(fid) + atom.value])
            t1 = float(t1s[pos])
            s_new = _updated_factor_entropy(
                atom.kind, p_v, float(tots[pos]), q, w_v, t1, float(t2s[pos])
            )
            s_next = s_drift + t1 + s_new
            gain = s_node - s_next
            weights[i] = apply_f(spec, gain, False) + hist_extra
            entropies[i] = s_next
        return weights, entropies


def _updated_factor_entropy(
    kind, p_v: float, tot: float, q: float, w_v: float, t1: float, t2: float
) -> float:
    """Weighted entropy of one factor after rescaling the event to marginal q.

    ``p_v`` is the drifted probability of the referenced value, ``tot`` the
    factor's summed mass (1 up to float residue), ``t1``/``t2`` the factor
    aggregates sum(w*p*ln p) and sum(w*p). Parts are scaled by their own
    summed mass, mirroring the materialized update exactly. Callers must
    already have excluded unsupported combinations.
    """
    xv = w_v * (p_v * math.log(p_v)) if p_v > 0.0 else 0.0
    rest1 = t1 - xv         # sum over other values of w*p*ln p
    rest2 = t2 - w_v * p_v  # sum over other values of w*p
    rest_mass = tot - p_v
    if kind is FluentKind.HOLDS:
        if p_v <= 0.0 or rest_mass <= 0.0:  # consistent no-op (q matches)
            return -t1
        alpha = (1.0 - q) / rest_mass
        head = w_v * ((p_v * (q / p_v)) * math.log(p_v * (q / p_v))) if q > 0.0 else 0.0
        if alpha > 0.0:
            tail = alpha * rest1 + alpha * math.log(alpha) * rest2
        else:
            tail = 0.0
        return -(head + tail)
    # NOT_HOLDS: the event is the complement of value v
    if rest_mass <= 0.0 or p_v <= 0.0:
        return -t1
    beta = q / rest_mass
    pv_new = p_v * ((1.0 - q) / p_v)
    head = w_v * (pv_new * math.log(pv_new)) if pv_new > 0.0 else 0.0
    if beta > 0.0:
        tail = beta * rest1 + beta * math.log(beta) * rest2
    else:
        tail = 0.0
    return -(head + tail)


def _unsupported(kind, p_v: float, tot: float, q: float) -> bool:
    """Would this update contradict the drifted belief's support?"""
    if kind is FluentKind.HOLDS:
        m_event, m_rest = p_v, tot - p_v
    else:
        m_event, m_rest = tot - p_v, p_v
    if m_event <= 0.0 and q > 0.0:
        return True
    if m_rest <= 0.0 and q < 1.0:
        return True
    return False


def marginal_table(source, info_space: Sequence[Information]) -> np.ndarray:
    """Per-atom transmitted marginals for one trajectory layer.

    ``source`` is either a teammate-layout belief or a precomputed array.
    """
    if isinstance(source, np.ndarray):
        return source
    table = np.full(len(info_space), np.nan)
    for i, atom in enumerate(info_space):
        if not atom.is_null:
            table[i] = marginal(source, atom)
    return table


def get_successors(
    node: DagNode,
    trajectory: Sequence,
    info_space: Sequence[Information],
    scorer,
    forward: HumanForwardModel,
    candidate_limit: int = None,
) -> List[Edge]:
    """All outgoing edges of ``node``: one per supported information.

    Transmitted marginals come from ``trajectory[node.timestep]`` (the
    sender's belief governing this slot). Successors whose quantized keys
    coincide are merged, keeping the maximum-weight edge; the null edge is
    emitted first so ties resolve toward silence. ``candidate_limit`` keeps
    only the highest-weight atoms (plus null) before materializing beliefs.
    """
    table = marginal_table(trajectory[node.timestep], info_space)
    drifted = human_forward_step(node.belief, forward)
    ctx = scorer.begin(node, drifted)
    flat = drifted.flatten()
    totals = drifted.factor_sums()

    cands = []
    null_index = None
    for idx, atom in enumerate(info_space):
        if atom.is_null:
            null_index = idx
            continue
        q = float(table[idx])
        p_v = float(flat[drifted.offset(atom.factor) + atom.value])
        if _unsupported(atom.kind, p_v, float(totals[drifted.factor_pos(atom.factor)]), q):
            continue
        cands.append((idx, atom, q, p_v))

    weights, entropies = (
        scorer.score_candidates(ctx, cands) if cands else (np.empty(0), np.empty(0))
    )
    keep = range(len(cands))
    if candidate_limit is not None and len(cands) > candidate_limit:
        order = sorted(keep, key=lambda i: (-weights[i], cands[i][0]))
        keep = sorted(order[:candidate_limit])

    merged = {}
    emit_order = []

    def emit(child: DagNode, info: Information, weight: float):
        cur = merged.get(child.key)
        if cur is None:
            merged[child.key] = (child, info, weight)
            emit_order.append(child.key)
        elif weight > cur[2]:
            merged[child.key] = (child, info, weight)

    if null_index is not None:
        child = make_node(
            drifted, node.timestep + 1, entropy=scorer.drift_entropy(ctx), last_nonnull=False
        )
        emit(child, info_space[null_index], scorer.null_score(ctx))
    for i in keep:
        idx, atom, q, p_v = cands[i]
        info = atom.with_marginal(q)
        nxt = condition_on_marginal(drifted, info)
        child = make_node(
            nxt, node.timestep + 1, entropy=float(entropies[i]), last_nonnull=True
        )
        emit(child, info, float(weights[i]))
    return [merged[k] for k in emit_order]


@dataclass
class InfoPlan:
    infos: List[Information]
    total: float


@dataclass
class _Entry:
    node: DagNode
    cum: float
    parent: "._Entry" = None
    info: Information = None


def longest_weighted_path_dag(
    root: DagNode,
    successors: Callable[[DagNode], Iterable[Edge]],
    horizon: int,
    beam_width: int = None,
) -> InfoPlan:
    """Maximum-total-weight path of length ``horizon`` from ``root``.

    Dynamic programming over timestep layers. Ties resolve toward the
    first-emitted edge (null first, then lowest canonical info index) and
    the earliest-inserted parent, so results are reproducible. With
    ``beam_width`` set, each layer keeps only the highest-cumulative-weight
    nodes (stable on ties); tests of optimality run without pruning.
    """
    if horizon <= 0:
        return InfoPlan([], 0.0)
    layer = [_Entry(root, 0.0)]
    for _ in range(horizon):
        by_key = {}
        order = []
        for entry in layer:
            for child, info, weight in successors(entry.node):
                cum = entry.cum + weight
                cur = by_key.get(child.key)
                if cur is None:
                    by_key[child.key] = _Entry(child, cum, entry, info)
                    order.append(child.key)
                elif cum > cur.cum:
                    by_key[child.key] = _Entry(child, cum, entry, info)
        layer = [by_key[k] for k in order]
        if not layer:
            raise RuntimeError("information DAG has a dead end before the horizon")
        if beam_width is not None and len(layer) > beam_width:
            layer = sorted(layer, key=lambda e: -e.cum)[:beam_width]

    best = layer[0]
    for entry in layer[1:]:
        if entry.cum > best.cum:
            best = entry
    infos = []
    cursor = best
    while cursor.parent is not None:
        infos.append(cursor.info)
        cursor = cursor.parent
    infos.reverse()
    return InfoPlan(infos, best.cum)
