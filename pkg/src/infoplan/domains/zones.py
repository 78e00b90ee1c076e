"""Zone-partitioned continuous search-and-recover world.

Objects sit at continuous positions in the unit square, which is split into
vertical-strip zones. The agent teleports between candidate poses, detects
every object inside a visibility cone, and recovers the closest object
inside a reachability cone. Its own belief tracks each object over a G x G
cell lattice; the teammate's belief tracks each object over zones, obtained
by summing lattice mass per zone. Observations carry the observing pose so
belief updates are self-contained.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np

from ..beliefs import (
    BeliefError,
    CategoricalDist,
    FactoredBelief,
    Information,
    NULL_INFO,
)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def key(self) -> tuple:
        return (round(self.x, 9), round(self.y, 9), round(self.heading, 9))


@dataclass(frozen=True)
class MoveTo:
    pose: Pose


@dataclass(frozen=True)
class Detect:
    pass


@dataclass(frozen=True)
class Recover:
    pass


@dataclass(frozen=True)
class Cone:
    """Closed sensing region in front of a pose."""

    half_angle: float
    range: float

    def contains(self, pose: Pose, x: float, y: float) -> bool:
        dx, dy = x - pose.x, y - pose.y
        dist = math.hypot(dx, dy)
        if dist > self.range:
            return False
        if dist == 0.0 or self.half_angle >= math.pi:
            return True
        diff = abs(math.atan2(dy, dx) - pose.heading) % (2 * math.pi)
        if diff > math.pi:
            diff = 2 * math.pi - diff
        return diff <= self.half_angle


@dataclass(frozen=True)
class ZoneState:
    pose: Pose
    positions: tuple  # per object: (x, y)
    recovered: tuple  # per object: bool


@dataclass(frozen=True)
class ZoneCtx:
    pose: Pose
    recovered: tuple


@dataclass(frozen=True)
class ZoneConfig:
    n_zones: int = 5
    m_objects: int = 5
    lattice_g: int = 20
    visibility: Cone = Cone(half_angle=math.pi, range=0.35)
    reachability: Cone = Cone(half_angle=math.pi, range=0.18)
    move_reward: float = -1.0
    detect_reward: float = -5.0
    recover_reward: float = -20.0
    recover_fail_reward: float = -100.0
    zone_bounds: tuple = None  # strip upper edges in (0, 1]; default equal strips

    def __post_init__(self):
        if self.n_zones < 1 or self.m_objects < 1 or self.lattice_g < 1:
            raise ValueError("zones, objects and lattice must be positive")
        if self.zone_bounds is not None and len(self.zone_bounds) != self.n_zones:
            raise ValueError("zone_bounds must list one upper edge per zone")


class ZoneWorld:
    def __init__(self, config: ZoneConfig):
        self.config = config
        g = config.lattice_g
        self.n_cells = g * g
        bounds = config.zone_bounds or tuple(
            (i + 1) / config.n_zones for i in range(config.n_zones)
        )
        self.zone_bounds = bounds
        self.cell_centers = np.array(
            [(((c % g) + 0.5) / g, ((c // g) + 0.5) / g) for c in range(self.n_cells)]
        )
        self.cell_zone = np.array(
            [self.zone_of_x(x) for x, _ in self.cell_centers], dtype=int
        )
        self.zone_cells = [
            np.flatnonzero(self.cell_zone == z) for z in range(config.n_zones)
        ]
        if any(len(cells) == 0 for cells in self.zone_cells):
            raise ValueError("a zone contains no lattice cells")
        self.stations = self._build_stations()
        self._contained_cache = {}
        self._center_cache = {}
        covered = set()
        for pose in self.stations:
            covered.update(int(c) for c in self._contained_cells(pose, config.visibility))
        if len(covered) != self.n_cells:
            raise ValueError("station poses do not cover the lattice; widen visibility")
        self._info_space = self._build_info_space()

    # ------------------------------------------------------------- geometry

    def zone_of_x(self, x: float) -> int:
        for z, edge in enumerate(self.zone_bounds):
            if x <= edge:
                return z
        return self.config.n_zones - 1

    def cell_of(self, x: float, y: float) -> int:
        g = self.config.lattice_g
        cx = min(int(x * g), g - 1)
        cy = min(int(y * g), g - 1)
        return cy * g + cx

    def _build_stations(self) -> list:
        # two viewpoints per zone at the strip's horizontal center
        stations = []
        lo = 0.0
        for hi in self.zone_bounds:
            cx = (lo + hi) / 2.0
            stations.append(Pose(cx, 0.25, 0.0))
            stations.append(Pose(cx, 0.75, 0.0))
            lo = hi
        return stations

    def _contained_cells(self, pose: Pose, cone: Cone) -> np.ndarray:
        """Cells whose four corners all lie inside the cone (conservative)."""
        key = (pose.key(), cone.half_angle, cone.range)
        hit = self._contained_cache.get(key)
        if hit is not None:
            return hit
        g = self.config.lattice_g
        half = 0.5 / g
        out = []
        for c in range(self.n_cells):
            x, y = self.cell_centers[c]
            corners = (
                (x - half, y - half),
                (x - half, y + half),
                (x + half, y - half),
                (x + half, y + half),
            )
            if all(cone.contains(pose, px, py) for px, py in corners):
                out.append(c)
        arr = np.array(out, dtype=int)
        self._contained_cache[key] = arr
        return arr

    def _cells_with_center_in(self, pose: Pose, cone: Cone) -> np.ndarray:
        key = (pose.key(), cone.half_angle, cone.range)
        hit = self._center_cache.get(key)
        if hit is not None:
            return hit
        arr = np.array(
            [c for c in range(self.n_cells) if cone.contains(pose, *self.cell_centers[c])],
            dtype=int,
        )
        self._center_cache[key] = arr
        return arr

    # ------------------------------------------------------------- layout

    def _build_info_space(self) -> List[Information]:
        atoms = [NULL_INFO]
        for obj in range(self.config.m_objects):
            for z in range(self.config.n_zones):
                atoms.append(Information.holds(obj, z))
        for obj in range(self.config.m_objects):
            for z in range(self.config.n_zones):
                atoms.append(Information.not_holds(obj, z))
        return atoms

    def info_space(self) -> List[Information]:
        return list(self._info_space)

    def initial_belief(self) -> FactoredBelief:
        return FactoredBelief.of(
            {o: CategoricalDist.uniform(self.n_cells) for o in range(self.config.m_objects)}
        )

    def initial_human_belief(self) -> FactoredBelief:
        return FactoredBelief.of(
            {
                o: CategoricalDist.uniform(self.config.n_zones)
                for o in range(self.config.m_objects)
            }
        )

    def abstraction_map(self, belief: FactoredBelief) -> FactoredBelief:
        """Project the lattice belief to the teammate's per-zone layout."""
        out = {}
        for obj, dist in belief.factors:
            mass = np.array([float(dist.probs[cells].sum()) for cells in self.zone_cells])
            out[obj] = CategoricalDist(mass)
        return FactoredBelief.of(out)

    def transmit_marginal(self, belief: FactoredBelief, atom: Information) -> float:
        mass = float(belief.dist(atom.factor).probs[self.zone_cells[atom.value]].sum())
        mass = min(1.0, max(0.0, mass))
        return mass if atom.kind.value == "holds" else 1.0 - mass

    def layer_marginals(self, belief: FactoredBelief) -> np.ndarray:
        m = self.config.m_objects
        z = self.config.n_zones
        holds = np.empty(m * z)
        for obj, dist in belief.factors:
            for zone in range(z):
                holds[obj * z + zone] = float(dist.probs[self.zone_cells[zone]].sum())
        holds = np.clip(holds, 0.0, 1.0)
        return np.concatenate(([np.nan], holds, 1.0 - holds))

    # ------------------------------------------------------------- world

    def sample_state(self, rng: np.random.Generator) -> ZoneState:
        xs = rng.uniform(0.0, 1.0, self.config.m_objects)
        ys = rng.uniform(0.0, 1.0, self.config.m_objects)
        positions = tuple((float(x), float(y)) for x, y in zip(xs, ys))
        return ZoneState(Pose(0.5, 0.1, 0.0), positions, (False,) * self.config.m_objects)

    def load_state(self, data: dict) -> ZoneState:
        positions = [None] * self.config.m_objects
        for obj in data["objects"]:
            positions[int(obj["id"])] = (float(obj["pos"][0]), float(obj["pos"][1]))
        if any(p is None for p in positions):
            raise ValueError("scenario must place every object")
        agent = data.get("agent", [0.5, 0.1, 0.0])
        return ZoneState(
            Pose(float(agent[0]), float(agent[1]), float(agent[2]) if len(agent) > 2 else 0.0),
            tuple(positions),
            (False,) * self.config.m_objects,
        )

    def terminal(self, state: ZoneState) -> bool:
        return all(state.recovered)

    def _visible(self, state: ZoneState, cone: Cone) -> list:
        out = []
        for oid, (x, y) in enumerate(state.positions):
            if state.recovered[oid]:
                continue
            if cone.contains(state.pose, x, y):
                out.append((oid, (x, y)))
        return out

    @staticmethod
    def _pose_tuple(pose: Pose) -> tuple:
        return (pose.x, pose.y, pose.heading)

    def step(self, state: ZoneState, action):
        cfg = self.config
        if isinstance(action, MoveTo):
            p = action.pose
            if not (0.0 <= p.x <= 1.0 and 0.0 <= p.y <= 1.0):
                raise ValueError("move pose out of bounds")
            return replace(state, pose=p), ("pose", self._pose_tuple(p)), cfg.move_reward
        if isinstance(action, Detect):
            seen = self._visible(state, cfg.visibility)
            obs = ("seen", self._pose_tuple(state.pose), tuple(sorted(seen)))
            return state, obs, cfg.detect_reward
        if isinstance(action, Recover):
            reachable = self._visible(state, cfg.reachability)
            pose = state.pose
            if not reachable:
                return (
                    state,
                    ("recovered", self._pose_tuple(pose), None, None),
                    cfg.recover_fail_reward,
                )
            oid, _ = min(
                reachable,
                key=lambda item: (math.hypot(item[1][0] - pose.x, item[1][1] - pose.y), item[0]),
            )
            rec = list(state.recovered)
            rec[oid] = True
            nxt = replace(state, recovered=tuple(rec))
            return (
                nxt,
                ("recovered", self._pose_tuple(pose), oid, state.positions[oid]),
                cfg.recover_reward,
            )
        raise ValueError(f"unknown action {action!r}")

    # ------------------------------------------------------------- beliefs

    def _is_located(self, dist: CategoricalDist) -> bool:
        return bool(np.max(dist.probs) >= 1.0 - 1e-9)

    def belief_update(self, belief: FactoredBelief, action, obs) -> FactoredBelief:
        kind = obs[0]
        if kind == "pose":
            return belief
        pose = Pose(*obs[1])
        if kind == "seen":
            seen = dict(obs[2])
            cleared = self._contained_cells(pose, self.config.visibility)
            out = belief
            for oid, dist in belief.factors:
                if oid in seen:
                    cell = self.cell_of(*seen[oid])
                    if dist.probs[cell] <= 0.0:
                        raise BeliefError("object seen in a cell the belief had ruled out")
                    out = out.replace(oid, CategoricalDist.degenerate(self.n_cells, cell))
                elif not self._is_located(dist):
                    probs = np.array(dist.probs)
                    probs[cleared] = 0.0
                    if probs.sum() <= 0.0:
                        raise BeliefError("detection emptied an object's support")
                    out = out.replace(oid, CategoricalDist(probs))
            return out
        if kind == "recovered":
            if obs[2] is None:
                cleared = self._contained_cells(pose, self.config.reachability)
                out = belief
                for oid, dist in belief.factors:
                    if self._is_located(dist):
                        continue
                    probs = np.array(dist.probs)
                    probs[cleared] = 0.0
                    if probs.sum() <= 0.0:
                        raise BeliefError("failed recovery emptied an object's support")
                    out = out.replace(oid, CategoricalDist(probs))
                return out
            oid, pos = obs[2], obs[3]
            cell = self.cell_of(*pos)
            return belief.replace(oid, CategoricalDist.degenerate(self.n_cells, cell))
        raise BeliefError(f"unknown observation {obs!r}")

    # ------------------------------------------------------------- planning

    def plan_context(self, state: ZoneState) -> ZoneCtx:
        return ZoneCtx(state.pose, state.recovered)

    def advance_context(self, ctx: ZoneCtx, action, obs) -> ZoneCtx:
        if isinstance(action, MoveTo):
            return ZoneCtx(action.pose, ctx.recovered)
        if obs[0] == "recovered" and obs[2] is not None:
            rec = list(ctx.recovered)
            rec[obs[2]] = True
            return ZoneCtx(ctx.pose, tuple(rec))
        return ctx

    def ctx_terminal(self, ctx: ZoneCtx) -> bool:
        return all(ctx.recovered)

    def predict_observation(self, belief: FactoredBelief, ctx: ZoneCtx, action):
        """Most likely observation at lattice-cell granularity."""
        if isinstance(action, MoveTo):
            return ("pose", self._pose_tuple(action.pose))
        if isinstance(action, Detect):
            centers = self._cells_with_center_in(ctx.pose, self.config.visibility)
            seen = []
            for oid, dist in belief.factors:
                if ctx.recovered[oid]:
                    continue
                mass = float(dist.probs[centers].sum()) if centers.size else 0.0
                if mass >= 0.5:
                    inside = int(centers[np.argmax(dist.probs[centers])])
                    seen.append((oid, tuple(self.cell_centers[inside])))
            return ("seen", self._pose_tuple(ctx.pose), tuple(sorted(seen)))
        centers = self._cells_with_center_in(ctx.pose, self.config.reachability)
        best = None
        for oid, dist in belief.factors:
            if ctx.recovered[oid]:
                continue
            mass = float(dist.probs[centers].sum()) if centers.size else 0.0
            if mass >= 0.5:
                cell = int(centers[np.argmax(dist.probs[centers])])
                x, y = self.cell_centers[cell]
                d = math.hypot(x - ctx.pose.x, y - ctx.pose.y)
                if best is None or (d, oid) < (best[0], best[1]):
                    best = (d, oid, (float(x), float(y)))
        if best is None:
            return ("recovered", self._pose_tuple(ctx.pose), None, None)
        return ("recovered", self._pose_tuple(ctx.pose), best[1], best[2])

    def expected_reward(self, belief: FactoredBelief, ctx: ZoneCtx, action) -> float:
        cfg = self.config
        if isinstance(action, MoveTo):
            return cfg.move_reward
        if isinstance(action, Detect):
            return cfg.detect_reward
        centers = self._cells_with_center_in(ctx.pose, self.config.reachability)
        p_any = 0.0
        if centers.size:
            miss = 1.0
            for oid, dist in belief.factors:
                if ctx.recovered[oid]:
                    continue
                miss *= 1.0 - float(dist.probs[centers].sum())
            p_any = 1.0 - miss
        return p_any * cfg.recover_reward + (1.0 - p_any) * cfg.recover_fail_reward

    def obs_key(self, obs):
        """Canonical form for violation checks: positions at cell granularity."""
        if obs[0] == "seen":
            return ("seen", tuple((oid, self.cell_of(*xy)) for oid, xy in obs[2]))
        if obs[0] == "recovered":
            if obs[2] is None:
                return ("recovered", None)
            return ("recovered", obs[2], self.cell_of(*obs[3]))
        return obs

    def action_jsonable(self, action) -> list:
        if isinstance(action, MoveTo):
            return ["move", action.pose.x, action.pose.y, action.pose.heading]
        if isinstance(action, Detect):
            return ["detect"]
        return ["recover"]

    def obs_jsonable(self, obs) -> list:
        if obs[0] == "seen":
            return ["seen", [[oid, list(xy)] for oid, xy in obs[2]]]
        if obs[0] == "recovered":
            if obs[2] is None:
                return ["recovered", None]
            return ["recovered", obs[2], list(obs[3])]
        return [obs[0], list(obs[1])]

    # ------------------------------------------------------------- acting

    def default_step_cap(self) -> int:
        return 6 * len(self.stations) + 8 * self.config.m_objects + 8

    def acting_plan(self, belief: FactoredBelief, ctx: ZoneCtx) -> list:
        """Greedy nearest-target: recover located objects, else sweep stations."""
        plan = []
        b = belief
        pose = ctx.pose
        recovered = list(ctx.recovered)
        for _ in range(self.default_step_cap()):
            if all(recovered):
                break
            located = [
                (oid, dist)
                for oid, dist in b.factors
                if not recovered[oid] and self._is_located(dist)
            ]
            if located:

                def dist_to(item):
                    oid, d = item
                    x, y = self.cell_centers[int(np.argmax(d.probs))]
                    return (math.hypot(x - pose.x, y - pose.y), oid)

                oid, d = min(located, key=dist_to)
                x, y = self.cell_centers[int(np.argmax(d.probs))]
                target = Pose(float(x), float(y), 0.0)
                if target != pose:
                    plan.append(MoveTo(target))
                    pose = target
                plan.append(Recover())
                recovered[oid] = True
                continue
            unlocated = [
                oid for oid, dist in b.factors if not recovered[oid] and not self._is_located(dist)
            ]
            if not unlocated:
                break
            best = None
            for idx, station in enumerate(self.stations):
                cells = self._contained_cells(station, self.config.visibility)
                if any(float(b.dist(o).probs[cells].sum()) > 1e-12 for o in unlocated):
                    d = math.hypot(station.x - pose.x, station.y - pose.y)
                    if best is None or (d, idx) < best[:2]:
                        best = (d, idx)
            if best is None:
                break
            station = self.stations[best[1]]
            if station != pose:
                plan.append(MoveTo(station))
                pose = station
            plan.append(Detect())
            sim_ctx = ZoneCtx(pose, tuple(recovered))
            obs = self.predict_observation(b, sim_ctx, Detect())
            try:
                b = self.belief_update(b, Detect(), obs)
            except BeliefError:
                # the rollout would wipe an object's support: reality must
                # diverge before this point, so end the segment here
                break
        return plan
