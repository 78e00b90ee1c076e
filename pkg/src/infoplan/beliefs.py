"""Factored categorical belief states and their update rules.

Both the acting agent and the simulated teammate represent uncertainty as a
collection of independent categorical distributions, one per factor (grid
cell, object, ...). This module provides the distribution types, weighted
entropy and gain, the teammate's drift-plus-rescaling update, and the
Bayes-filter hook that domains plug into.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

FactorId = Union[int, str]

NORM_TOL = 1e-9
_KEY_DECIMALS = 6


class BeliefError(ValueError):
    """A belief operation was called outside its contract."""


class LayoutMismatch(BeliefError):
    """Operands do not share the same factor layout / dimensions."""


class UnsupportedUpdate(BeliefError):
    """Transmitted marginal contradicts the receiver's support."""


def xlogx(p: np.ndarray) -> np.ndarray:
    """Entry-wise p*ln(p) with the 0*ln(0) := 0 convention."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    nz = p > 0.0
    out[nz] = p[nz] * np.log(p[nz])
    return out


@dataclass(frozen=True, eq=False)
class CategoricalDist:
    """Probability vector over a fixed finite value set.

    Entries are nonnegative and renormalized on construction; the array is
    made read-only so instances can be shared freely.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise BeliefError("probability vector must be 1-D and non-empty")
        if np.any(arr < -1e-12) or not np.all(np.isfinite(arr)):
            raise BeliefError("probabilities must be finite and nonnegative")
        arr = np.where(arr < 0.0, 0.0, arr)
        total = float(arr.sum())
        if total <= 0.0:
            raise BeliefError("probability vector has zero total mass")
        arr = arr / total
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "CategoricalDist":
        # Fast path for internal callers: arr must already be normalized.
        self = object.__new__(cls)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)
        return self

    @classmethod
    def uniform(cls, dim: int) -> "CategoricalDist":
        return cls(np.full(dim, 1.0 / dim))

    @classmethod
    def degenerate(cls, dim: int, value: int) -> "CategoricalDist":
        arr = np.zeros(dim)
        arr[value] = 1.0
        return cls(arr)

    @property
    def dim(self) -> int:
        return int(self.probs.size)

    def allclose(self, other: "CategoricalDist", atol: float = 1e-9) -> bool:
        return self.dim == other.dim and bool(
            np.allclose(self.probs, other.probs, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class FactoredBelief:
    """Ordered map from factor id to a categorical distribution.

    Factors are stored sorted by id, which fixes the canonical flattening
    order (factor id ascending, then value index) used by entropy vectors,
    weight vectors and learner features.
    """

    factors: tuple

    def __post_init__(self):
        ids = [fid for fid, _ in self.factors]
        if len(ids) == 0:
            raise BeliefError("belief needs at least one factor")
        if sorted(ids) != ids or len(set(ids)) != len(ids):
            raise BeliefError("factors must be sorted by unique id")
        object.__setattr__(self, "_index", {fid: d for fid, d in self.factors})
        offsets = {}
        pos = 0
        starts = []
        for fid, dist in self.factors:
            offsets[fid] = pos
            starts.append(pos)
            pos += dist.dim
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_starts", np.asarray(starts, dtype=np.intp))
        object.__setattr__(self, "_fpos", {fid: i for i, (fid, _) in enumerate(self.factors)})
        object.__setattr__(self, "_entries", pos)
        object.__setattr__(self, "_flat", None)

    @classmethod
    def _rebuild(cls, src: "FactoredBelief", factors: tuple) -> "FactoredBelief":
        # internal fast path: same layout as src, all metadata reused
        self = object.__new__(cls)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "_index", {fid: d for fid, d in factors})
        object.__setattr__(self, "_offsets", src._offsets)
        object.__setattr__(self, "_starts", src._starts)
        object.__setattr__(self, "_fpos", src._fpos)
        object.__setattr__(self, "_entries", src._entries)
        object.__setattr__(self, "_flat", None)
        return self

    @classmethod
    def of(cls, mapping: Mapping[FactorId, CategoricalDist]) -> "FactoredBelief":
        items = tuple(sorted(mapping.items(), key=lambda kv: kv[0]))
        return cls(items)

    @property
    def factor_ids(self) -> tuple:
        return tuple(fid for fid, _ in self.factors)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def entry_count(self) -> int:
        return self._entries

    @property
    def dims(self) -> tuple:
        return tuple(d.dim for _, d in self.factors)

    def dist(self, fid: FactorId) -> CategoricalDist:
        try:
            return self._index[fid]
        except KeyError:
            raise BeliefError(f"unknown factor {fid!r}") from None

    def offset(self, fid: FactorId) -> int:
        try:
            return self._offsets[fid]
        except KeyError:
            raise BeliefError(f"unknown factor {fid!r}") from None

    def flatten(self) -> np.ndarray:
        """Canonical entry vector (sorted factor id, then value index); cached."""
        flat = self._flat
        if flat is None:
            flat = np.concatenate([d.probs for _, d in self.factors])
            flat.setflags(write=False)
            object.__setattr__(self, "_flat", flat)
        return flat

    def factor_pos(self, fid: FactorId) -> int:
        return self._fpos[fid]

    def factor_sums(self) -> np.ndarray:
        """Per-factor total mass (1 up to float residue), in factor order."""
        return np.add.reduceat(self.flatten(), self._starts)

    def replace(self, fid: FactorId, dist: CategoricalDist) -> "FactoredBelief":
        old = self.dist(fid)
        if old.dim != dist.dim:
            raise LayoutMismatch("replacement changes factor dimension")
        pos = self._fpos[fid]
        factors = self.factors[:pos] + ((fid, dist),) + self.factors[pos + 1 :]
        return FactoredBelief._rebuild(self, factors)

    def same_layout(self, other: "FactoredBelief") -> bool:
        return self.factor_ids == other.factor_ids and self.dims == other.dims

    def key(self) -> bytes:
        """Quantized hash input: probabilities rounded to 6 decimals."""
        return np.round(self.flatten(), _KEY_DECIMALS).tobytes()

    def to_jsonable(self) -> dict:
        return {str(fid): [float(p) for p in d.probs] for fid, d in self.factors}

    @classmethod
    def from_jsonable(cls, data: Mapping[str, Sequence[float]]) -> "FactoredBelief":
        def parse(k: str) -> FactorId:
            return int(k) if k.lstrip("-").isdigit() else k

        return cls.of({parse(k): CategoricalDist(np.asarray(v)) for k, v in data.items()})

    def allclose(self, other: "FactoredBelief", atol: float = 1e-9) -> bool:
        return self.same_layout(other) and bool(
            np.allclose(self.flatten(), other.flatten(), atol=atol)
        )


class FluentKind(Enum):
    HOLDS = "holds"
    NOT_HOLDS = "not_holds"
    NULL = "null"


@dataclass(frozen=True)
class Information:
    """A transmittable fluent plus the sender's marginal for it.

    ``HOLDS(f, v)`` states that factor ``f`` has value ``v``; ``NOT_HOLDS``
    states the complement. The null information carries no content and no
    marginal.
    """

    kind: FluentKind
    factor: FactorId = None
    value: int = None
    marginal: float = None

    def __post_init__(self):
        if self.kind is FluentKind.NULL:
            if self.factor is not None or self.value is not None or self.marginal is not None:
                raise BeliefError("null information carries no content")
        else:
            if self.factor is None or self.value is None:
                raise BeliefError("atomic information needs factor and value")
            if self.marginal is not None and not (0.0 <= self.marginal <= 1.0):
                raise BeliefError("marginal must lie in [0, 1]")

    @classmethod
    def holds(cls, factor: FactorId, value: int, marginal: float = None) -> "Information":
        return cls(FluentKind.HOLDS, factor, value, marginal)

    @classmethod
    def not_holds(cls, factor: FactorId, value: int, marginal: float = None) -> "Information":
        return cls(FluentKind.NOT_HOLDS, factor, value, marginal)

    @classmethod
    def null(cls) -> "Information":
        return cls(FluentKind.NULL)

    @property
    def is_null(self) -> bool:
        return self.kind is FluentKind.NULL

    def atom(self) -> tuple:
        """Identity of the fluent, ignoring the attached marginal."""
        return (self.kind, self.factor, self.value)

    def with_marginal(self, q: float) -> "Information":
        if self.is_null:
            raise BeliefError("null information carries no marginal")
        return Information(self.kind, self.factor, self.value, float(q))

    def to_jsonable(self) -> dict:
        if self.is_null:
            return {"kind": "null"}
        return {
            "kind": self.kind.value,
            "factor": self.factor,
            "value": self.value,
            "marginal": self.marginal,
        }


NULL_INFO = Information.null()


@dataclass(frozen=True)
class HumanForwardModel:
    """Per-factor sticky drift kernel for the teammate's forward model.

    Each step a factor keeps its value with probability ``1 - drift_epsilon``
    and moves to each other value with equal shares of ``drift_epsilon``.
    """

    drift_epsilon: float = 1e-3

    def __post_init__(self):
        if not (0.0 <= self.drift_epsilon < 1.0):
            raise BeliefError("drift_epsilon must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class Weights:
    """Nonnegative weight per belief entry, in canonical flattening order."""

    flat: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.flat, dtype=float)
        if arr.ndim != 1 or np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise BeliefError("weights must be a 1-D nonnegative vector")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "flat", arr)

    @classmethod
    def per_value(cls, per_value: Sequence[float], belief: FactoredBelief) -> "Weights":
        """One weight per factor value, shared across all factors."""
        pv = np.asarray(per_value, dtype=float)
        if any(d != pv.size for d in belief.dims):
            raise LayoutMismatch("per-value weights must match every factor dimension")
        return cls(np.tile(pv, belief.n_factors))

    def matches(self, belief: FactoredBelief) -> bool:
        return self.flat.size == belief.entry_count

    def slice_for(self, belief: FactoredBelief, fid: FactorId) -> np.ndarray:
        start = belief.offset(fid)
        return self.flat[start : start + belief.dist(fid).dim]


def weighted_entropy(dist: CategoricalDist, w) -> float:
    """-sum_i w_i p_i ln p_i over the entries with p_i > 0."""
    warr = np.asarray(w, dtype=float)
    if warr.shape != dist.probs.shape:
        raise LayoutMismatch("weight slice does not match distribution dimension")
    if np.any(warr < 0.0):
        raise BeliefError("weights must be nonnegative")
    return float(-(warr * xlogx(dist.probs)).sum())


def factored_weighted_entropy(belief: FactoredBelief, weights: Weights) -> float:
    """Sum of per-factor weighted entropies (independent-factor bound)."""
    if not weights.matches(belief):
        raise LayoutMismatch("weight vector does not match belief layout")
    return float(-(weights.flat * xlogx(belief.flatten())).sum())


def weighted_gain(belief: FactoredBelief, belief_next: FactoredBelief, weights: Weights) -> float:
    """Weighted entropy drop from ``belief`` to ``belief_next`` (may be negative)."""
    if not belief.same_layout(belief_next):
        raise LayoutMismatch("beliefs do not share a layout")
    return factored_weighted_entropy(belief, weights) - factored_weighted_entropy(
        belief_next, weights
    )


def marginal(belief: FactoredBelief, info: Information) -> float:
    """Probability that ``info`` holds under ``belief``."""
    if info.is_null:
        raise BeliefError("null information has no marginal; branch before calling")
    dist = belief.dist(info.factor)
    if not (0 <= info.value < dist.dim):
        raise BeliefError(f"value {info.value} out of range for factor {info.factor!r}")
    p = float(dist.probs[info.value])
    return p if info.kind is FluentKind.HOLDS else 1.0 - p


def _drift_probs(probs: np.ndarray, eps: float) -> np.ndarray:
    d = probs.size
    if eps == 0.0 or d == 1:
        return probs
    out = (1.0 - eps) * probs + eps * (1.0 - probs) / (d - 1)
    return out / out.sum()


def human_forward_step(belief: FactoredBelief, model: HumanForwardModel) -> FactoredBelief:
    """Apply the drift kernel to every factor."""
    eps = model.drift_epsilon
    if eps == 0.0:
        return belief
    factors = tuple(
        (fid, CategoricalDist._wrap(_drift_probs(d.probs, eps)))
        for fid, d in belief.factors
    )
    return FactoredBelief._rebuild(belief, factors)


def jeffrey_update(
    b_h: FactoredBelief, info: Information, model: HumanForwardModel
) -> FactoredBelief:
    """Drift, then rescale the affected factor so the transmitted marginal holds.

    Probability mass inside the event "info holds" is scaled to the
    transmitted marginal and the complement to one minus it, preserving
    conditional proportions within each part. A marginal of exactly 0 or 1
    degenerates to hard conditioning. If the drifted belief gives zero mass
    to a part that the marginal requires, the update is unsupported.
    """
    drifted = human_forward_step(b_h, model)
    if info.is_null:
        return drifted
    if info.marginal is None:
        raise BeliefError("atomic information must carry a transmitted marginal")
    return condition_on_marginal(drifted, info)


def condition_on_marginal(drifted: FactoredBelief, info: Information) -> FactoredBelief:
    """Rescale the affected factor so the transmitted marginal holds exactly.

    This is the post-drift half of ``jeffrey_update``; each part is scaled
    by its own summed mass so exact zeros stay exact and float residue in
    the total cannot wipe a part out.
    """
    q = float(info.marginal)
    dist = drifted.dist(info.factor)
    if not (0 <= info.value < dist.dim):
        raise BeliefError(f"value {info.value} out of range for factor {info.factor!r}")
    p_v = float(dist.probs[info.value])
    if info.kind is FluentKind.HOLDS:
        m_event = p_v
        m_rest = float(dist.probs.sum()) - p_v
    else:
        m_rest = p_v
        m_event = float(dist.probs.sum()) - p_v
    if m_event <= 0.0:
        if q > 0.0:
            raise UnsupportedUpdate(
                "transmitted marginal puts mass on an event the receiver rules out"
            )
        return drifted
    if m_rest <= 0.0:
        if q < 1.0:
            raise UnsupportedUpdate(
                "transmitted marginal puts mass on a complement the receiver rules out"
            )
        return drifted
    if info.kind is FluentKind.HOLDS:
        probs = dist.probs * ((1.0 - q) / m_rest)
        probs[info.value] = p_v * (q / m_event)
    else:
        probs = dist.probs * (q / m_event)
        probs[info.value] = p_v * ((1.0 - q) / m_rest)
    probs /= probs.sum()
    return drifted.replace(info.factor, CategoricalDist._wrap(probs))


def bayes_filter_update(belief: FactoredBelief, action, observation, domain) -> FactoredBelief:
    """Posterior under the domain's transition and observation models."""
    updated = domain.belief_update(belief, action, observation)
    if not updated.same_layout(belief):
        raise LayoutMismatch("domain belief update changed the layout")
    return updated
