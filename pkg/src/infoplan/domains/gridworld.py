"""2-D search-and-recover gridworld.

Objects of typed categories sit at unique cells of a rows x cols grid. The
agent moves between adjacent cells, runs boolean per-type detections at its
cell, and recovers objects. Beliefs map each cell to a distribution over
"which type is here, or nothing". All observations are noiseless.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..beliefs import (
    BeliefError,
    CategoricalDist,
    FactoredBelief,
    Information,
    NULL_INFO,
)

DIRECTIONS = ("N", "E", "S", "W")
_DELTAS = {0: (-1, 0), 1: (0, 1), 2: (1, 0), 3: (0, -1)}


@dataclass(frozen=True)
class Move:
    direction: int  # index into DIRECTIONS


@dataclass(frozen=True)
class Detect:
    obj_type: int


@dataclass(frozen=True)
class Recover:
    obj_type: int


@dataclass(frozen=True)
class GridState:
    agent: int
    contents: tuple  # per cell: type index or None
    recovered: int


@dataclass(frozen=True)
class GridCtx:
    """Observable planning context: agent cell and recovery count."""

    pos: int
    recovered: int


@dataclass(frozen=True)
class GridworldConfig:
    rows: int
    cols: int
    n_types: int = 4
    m_objects: int = 1
    move_reward: float = -1.0
    detect_reward: float = -5.0
    recover_reward: float = -20.0
    recover_fail_reward: float = -100.0
    agent_start: int = 0

    @classmethod
    def square(cls, n: int, m: int, **kw) -> "GridworldConfig":
        return cls(rows=n, cols=n, m_objects=m, **kw)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.n_types < 1:
            raise ValueError("grid needs positive dimensions and at least one type")
        if not (1 <= self.m_objects <= self.rows * self.cols):
            raise ValueError("object count must fit in the grid")


class Gridworld:
    def __init__(self, config: GridworldConfig):
        self.config = config
        self.n_cells = config.rows * config.cols
        self.n_types = config.n_types
        self.empty_value = config.n_types  # index of "nothing"
        self.n_values = config.n_types + 1
        self._info_space = self._build_info_space()

    # ------------------------------------------------------------- layout

    def _build_info_space(self) -> List[Information]:
        atoms = [NULL_INFO]
        for cell in range(self.n_cells):
            for t in range(self.n_types):
                atoms.append(Information.holds(cell, t))
        for cell in range(self.n_cells):
            for t in range(self.n_types):
                atoms.append(Information.not_holds(cell, t))
        return atoms

    def info_space(self) -> List[Information]:
        return list(self._info_space)

    def initial_belief(self) -> FactoredBelief:
        if self.config.m_objects == self.n_cells:
            # every cell provably holds an object: spread over types only
            probs = np.zeros(self.n_values)
            probs[: self.n_types] = 1.0 / self.n_types
        else:
            probs = np.full(self.n_values, 1.0 / self.n_values)
        return FactoredBelief.of(
            {c: CategoricalDist(probs.copy()) for c in range(self.n_cells)}
        )

    def initial_human_belief(self) -> FactoredBelief:
        return self.initial_belief()

    def cell_rc(self, cell: int) -> Tuple[int, int]:
        return divmod(cell, self.config.cols)

    def manhattan(self, a: int, b: int) -> int:
        ra, ca = self.cell_rc(a)
        rb, cb = self.cell_rc(b)
        return abs(ra - rb) + abs(ca - cb)

    # ------------------------------------------------------------- world

    def sample_state(self, rng: np.random.Generator) -> GridState:
        cells = rng.choice(self.n_cells, size=self.config.m_objects, replace=False)
        types = rng.integers(0, self.n_types, size=self.config.m_objects)
        contents = [None] * self.n_cells
        for c, t in zip(cells, types):
            contents[int(c)] = int(t)
        return GridState(self.config.agent_start, tuple(contents), 0)

    def load_state(self, data: dict) -> GridState:
        contents = [None] * self.n_cells
        for obj in data["objects"]:
            contents[int(obj["cell"])] = int(obj["type"])
        agent = int(data.get("agent", self.config.agent_start))
        return GridState(agent, tuple(contents), 0)

    def terminal(self, state: GridState) -> bool:
        return state.recovered >= self.config.m_objects

    def _moved(self, cell: int, direction: int) -> int:
        r, c = self.cell_rc(cell)
        dr, dc = _DELTAS[direction]
        nr, nc = r + dr, c + dc
        if 0 <= nr < self.config.rows and 0 <= nc < self.config.cols:
            return nr * self.config.cols + nc
        return cell  # boundary moves are costed no-ops

    def step(self, state: GridState, action):
        cfg = self.config
        if isinstance(action, Move):
            new = self._moved(state.agent, action.direction)
            return replace(state, agent=new), ("cell", new), cfg.move_reward
        if isinstance(action, Detect):
            present = state.contents[state.agent] == action.obj_type
            obs = ("detect", state.agent, action.obj_type, present)
            return state, obs, cfg.detect_reward
        if isinstance(action, Recover):
            if state.contents[state.agent] == action.obj_type:
                contents = list(state.contents)
                contents[state.agent] = None
                nxt = GridState(state.agent, tuple(contents), state.recovered + 1)
                return nxt, ("recover", state.agent, action.obj_type, True), cfg.recover_reward
            return state, ("recover", state.agent, action.obj_type, False), cfg.recover_fail_reward
        raise ValueError(f"unknown action {action!r}")

    # ------------------------------------------------------------- beliefs

    def belief_update(self, belief: FactoredBelief, action, obs) -> FactoredBelief:
        kind = obs[0]
        if kind == "cell":
            return belief
        _, cell, t, outcome = obs
        probs = belief.dist(cell).probs
        if kind == "detect":
            if outcome:
                if probs[t] <= 0.0:
                    raise BeliefError("observed a type the belief had ruled out")
                return belief.replace(cell, CategoricalDist.degenerate(self.n_values, t))
            if probs[t] >= 1.0:
                raise BeliefError("observed absence of a type the belief was sure of")
            out = np.array(probs)
            out[t] = 0.0
            return belief.replace(cell, CategoricalDist(out))
        if kind == "recover":
            if outcome:
                if probs[t] <= 0.0:
                    raise BeliefError("recovered a type the belief had ruled out")
                return belief.replace(
                    cell, CategoricalDist.degenerate(self.n_values, self.empty_value)
                )
            if probs[t] >= 1.0:
                raise BeliefError("recovery failed where the belief was sure")
            out = np.array(probs)
            out[t] = 0.0
            return belief.replace(cell, CategoricalDist(out))
        raise ValueError(f"unknown observation {obs!r}")

    def transmit_marginal(self, belief: FactoredBelief, atom: Information) -> float:
        from ..beliefs import marginal

        return marginal(belief, atom)

    def layer_marginals(self, belief: FactoredBelief) -> np.ndarray:
        flat = belief.flatten().reshape(self.n_cells, self.n_values)
        at = flat[:, : self.n_types].reshape(-1)
        return np.concatenate(([np.nan], at, 1.0 - at))

    # ------------------------------------------------------------- planning

    def plan_context(self, state: GridState) -> GridCtx:
        return GridCtx(state.agent, state.recovered)

    def advance_context(self, ctx: GridCtx, action, obs) -> GridCtx:
        if isinstance(action, Move):
            return GridCtx(obs[1], ctx.recovered)
        if isinstance(action, Recover) and obs[3]:
            return GridCtx(ctx.pos, ctx.recovered + 1)
        return ctx

    def ctx_terminal(self, ctx: GridCtx) -> bool:
        return ctx.recovered >= self.config.m_objects

    def action_list(self) -> list:
        acts = [Move(d) for d in range(4)]
        acts += [Detect(t) for t in range(self.n_types)]
        acts += [Recover(t) for t in range(self.n_types)]
        return acts

    def predict_observation(self, belief: FactoredBelief, ctx: GridCtx, action):
        """Most likely observation; ties resolve to the lower outcome index
        (present before absent, success before failure)."""
        if isinstance(action, Move):
            return ("cell", self._moved(ctx.pos, action.direction))
        p = float(belief.dist(ctx.pos).probs[action.obj_type])
        if isinstance(action, Detect):
            return ("detect", ctx.pos, action.obj_type, p >= 0.5)
        return ("recover", ctx.pos, action.obj_type, p >= 0.5)

    def expected_reward(self, belief: FactoredBelief, ctx: GridCtx, action) -> float:
        cfg = self.config
        if isinstance(action, Move):
            return cfg.move_reward
        if isinstance(action, Detect):
            return cfg.detect_reward
        p = float(belief.dist(ctx.pos).probs[action.obj_type])
        return p * cfg.recover_reward + (1.0 - p) * cfg.recover_fail_reward

    def observation_dist(self, belief: FactoredBelief, ctx: GridCtx, action) -> list:
        if isinstance(action, Move):
            return [(("cell", self._moved(ctx.pos, action.direction)), 1.0)]
        p = float(belief.dist(ctx.pos).probs[action.obj_type])
        kind = "detect" if isinstance(action, Detect) else "recover"
        out = []
        if p > 0.0:
            out.append(((kind, ctx.pos, action.obj_type, True), p))
        if p < 1.0:
            out.append(((kind, ctx.pos, action.obj_type, False), 1.0 - p))
        return out

    def obs_key(self, obs):
        return obs

    def action_jsonable(self, action) -> list:
        if isinstance(action, Move):
            return ["move", DIRECTIONS[action.direction]]
        if isinstance(action, Detect):
            return ["detect", action.obj_type]
        return ["recover", action.obj_type]

    def obs_jsonable(self, obs) -> list:
        return list(obs)

    # ------------------------------------------------------------- acting

    def default_step_cap(self) -> int:
        # generous mechanical bound: full per-cell probing plus travel slack
        return (self.n_types + 2) * self.n_cells + 12 * self.config.m_objects + 8

    def acting_plan(self, belief: FactoredBelief, ctx: GridCtx) -> list:
        if self.n_cells * self.n_values <= 6:
            return self._exhaustive_plan(belief, ctx)
        return self._greedy_plan(belief, ctx)

    def _path_moves(self, src: int, dst: int) -> list:
        moves = []
        r, c = self.cell_rc(src)
        tr, tc = self.cell_rc(dst)
        while r < tr:
            moves.append(Move(2))
            r += 1
        while r > tr:
            moves.append(Move(0))
            r -= 1
        while c < tc:
            moves.append(Move(1))
            c += 1
        while c > tc:
            moves.append(Move(3))
            c -= 1
        return moves

    def _greedy_plan(self, belief: FactoredBelief, ctx: GridCtx) -> list:
        """Nearest-known recovery first, else probe the nearest unresolved cell."""
        plan = []
        b = belief
        pos = ctx.pos
        recovered = ctx.recovered
        m = self.config.m_objects
        for _ in range(self.default_step_cap()):
            if recovered >= m:
                break
            known = []
            unresolved = []
            for cell in range(self.n_cells):
                probs = b.dist(cell).probs
                top = int(np.argmax(probs))
                if probs[top] >= 1.0 - 1e-9:
                    if top != self.empty_value:
                        known.append((cell, top))
                else:
                    unresolved.append(cell)
            if known:
                cell, t = min(known, key=lambda kt: (self.manhattan(pos, kt[0]), kt[0]))
                plan.extend(self._path_moves(pos, cell))
                pos = cell
                plan.append(Recover(t))
                b = self.belief_update(b, None, ("recover", cell, t, True))
                recovered += 1
                continue
            if not unresolved:
                break  # nothing recoverable under the determinization: replan later
            cell = min(unresolved, key=lambda c: (self.manhattan(pos, c), c))
            plan.extend(self._path_moves(pos, cell))
            pos = cell
            types = b.dist(cell).probs[: self.n_types]
            t = int(np.argmax(types))
            plan.append(Detect(t))
            obs = ("detect", cell, t, float(types[t]) >= 0.5)
            b = self.belief_update(b, None, obs)
        return plan

    def _exhaustive_plan(self, belief: FactoredBelief, ctx: GridCtx, depth: int = None) -> list:
        """Depth-bounded search maximizing determinized expected reward.

        Prefers plans that reach the terminal condition; among those,
        maximizes total expected reward, breaking ties toward the earlier
        canonical action. Only run at desk scale.
        """
        if depth is None:
            depth = self.default_step_cap()
        actions = self.action_list()
        memo = {}

        def search(b: FactoredBelief, pos: int, recovered: int, d: int):
            if recovered >= self.config.m_objects:
                return (True, 0.0, ())
            if d == 0:
                return (False, 0.0, ())
            key = (b.key(), pos, recovered, d)
            if key in memo:
                return memo[key]
            best = (False, -np.inf, ())
            c = GridCtx(pos, recovered)
            for action in actions:
                r = self.expected_reward(b, c, action)
                obs = self.predict_observation(b, c, action)
                b2 = self.belief_update(b, action, obs)
                c2 = self.advance_context(c, action, obs)
                reached, value, tail = search(b2, c2.pos, c2.recovered, d - 1)
                cand = (reached, r + value, (action,) + tail)
                if (cand[0], cand[1]) > (best[0], best[1]):
                    best = cand
            memo[key] = best
            return best

        _, _, plan = search(belief, ctx.pos, ctx.recovered, depth)
        return list(plan)
