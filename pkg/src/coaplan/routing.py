"""Terrain-graph pathfinding, movement timing and support-range checks.

Movement cost is time, not distance: edge traversal takes
length / (unit speed * mobility_factor) hours. Route durations round the
summed travel time up to whole minutes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .scenario import ECHELON_RANK, Scenario, TerrainGraph, Unit


class Unreachable(Exception):
    """No path between two nodes; carries both components for diagnosis."""

    def __init__(self, src: str, dst: str, src_component: frozenset, dst_component: frozenset):
        self.src, self.dst = src, dst
        self.src_component = src_component
        self.dst_component = dst_component
        super().__init__(f"no route from {src} to {dst}")


@dataclass(frozen=True)
class Route:
    nodes: tuple[str, ...]
    total_length: float  # km
    duration: int        # minutes, rounded up from exact travel time
    effective_speed: float  # km/h over the route


def edge_minutes(length_km: float, speed_kmh: float, mobility_factor: float) -> float:
    return 60.0 * length_km / (speed_kmh * mobility_factor)


def shortest_path(terrain: TerrainGraph, unit: Unit, src: str, dst: str) -> Route:
    """Minimal-duration route for the unit; ties break on the
    lexicographically smallest node sequence."""
    for nid in (src, dst):
        if not terrain.has_node(nid):
            raise KeyError(f"unknown terrain node {nid!r}")
    if unit.speed <= 0:
        raise ValueError(f"unit {unit.id} is immobile (speed {unit.speed})")
    if src == dst:
        return Route(nodes=(src,), total_length=0.0, duration=0,
                     effective_speed=unit.speed)

    # Dijkstra keyed on (exact minutes, node sequence) so equal-cost paths
    # pop in lexicographic order.
    heap: list[tuple[float, tuple[str, ...], float]] = [(0.0, (src,), 0.0)]
    done: set[str] = set()
    while heap:
        cost, path, length = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done.add(node)
        if node == dst:
            return Route(
                nodes=path,
                total_length=length,
                duration=math.ceil(cost),
                effective_speed=(length / (cost / 60.0)) if cost > 0 else unit.speed,
            )
        for nbr, edge in terrain.neighbors(node):
            if nbr in done:
                continue
            step = edge_minutes(edge.length, unit.speed, edge.mobility_factor)
            heapq.heappush(heap, (cost + step, path + (nbr,), length + edge.length))

    raise Unreachable(src, dst,
                      src_component=frozenset(done),
                      dst_component=frozenset(_reaching(terrain, dst)))


def _reaching(terrain: TerrainGraph, dst: str) -> set[str]:
    """Nodes with a directed path to dst."""
    rev: dict[str, list[str]] = {}
    for e in terrain.edges:
        rev.setdefault(e.dst, []).append(e.src)
    seen = {dst}
    stack = [dst]
    while stack:
        for p in rev.get(stack.pop(), []):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


@dataclass(frozen=True)
class SupportCheck:
    in_range: bool
    distance: float  # km; inf when unreachable
    reason: str = ""


def in_support_range(supporter: Unit, supported_location: str, terrain: TerrainGraph,
                     mode: str = "euclidean", supporter_location: str | None = None) -> SupportCheck:
    """Compare supporter distance to its support_range under the given metric."""
    if supporter.support_range <= 0:
        raise ValueError(f"unit {supporter.id} has no support range")
    origin = supporter_location or supporter.location
    if mode == "euclidean":
        dist = terrain.euclidean(origin, supported_location)
    elif mode == "path":
        try:
            dist = shortest_path(terrain, supporter, origin, supported_location).total_length
        except Unreachable:
            return SupportCheck(False, math.inf, reason="unreachable")
        except ValueError:
            # immobile supporter: fall back to straight-line distance
            dist = terrain.euclidean(origin, supported_location)
    else:
        raise ValueError(f"unknown support range mode {mode!r}")
    return SupportCheck(dist <= supporter.support_range, dist)


# ---------------------------------------------------------------------------
# logistics sweep


@dataclass(frozen=True)
class LogisticsFinding:
    kind: str  # "reposition_cue" | "restriction"
    unit_id: str
    trains_id: str
    time: int
    round_trip: int          # minutes, current trains position
    candidate_node: str | None
    candidate_round_trip: int | None
    activity_ids: tuple[str, ...]


def resupply_round_trip(terrain: TerrainGraph, trains: Unit, trains_pos: str,
                        combat_pos: str) -> int | None:
    """Round-trip minutes for the trains to reach the unit and return."""
    if trains_pos == combat_pos:
        return 0
    if trains.speed <= 0:
        return None  # immobile trains can never run resupply
    try:
        leg = shortest_path(terrain, trains, trains_pos, combat_pos)
    except Unreachable:
        return None
    return 2 * leg.duration


def logistics_check(plan, terrain: TerrainGraph, scenario: Scenario,
                    threshold_min: int, slice_min: int) -> list[LogisticsFinding]:
    """Time-sliced resupply check; one finding per combat unit at its first
    violating slice."""
    findings = []
    horizon = plan.horizon()
    trains_by_side: dict[str, Unit] = {}
    for u in scenario.units:
        if u.unit_type == "field-trains" and u.allegiance not in trains_by_side:
            trains_by_side[u.allegiance] = u
        elif u.unit_type == "field-trains":
            # deterministic pick: lowest (echelon, id)
            cur = trains_by_side[u.allegiance]
            if (ECHELON_RANK.get(u.echelon, 99), u.id) < (ECHELON_RANK.get(cur.echelon, 99), cur.id):
                trains_by_side[u.allegiance] = u

    for unit in scenario.units:
        if unit.unit_type in ("field-trains", "uav") or unit.combat_power <= 0:
            continue
        trains = trains_by_side.get(unit.allegiance)
        if trains is None:
            continue
        own_leaves = [a for a in plan.leaves()
                      if a.executor == unit.id and a.scheduled_start is not None]
        if not own_leaves:
            continue
        slices = list(range(0, max(horizon, 1), slice_min))
        if horizon not in slices:
            slices.append(horizon)  # final positions matter too
        for t in slices:
            pos = plan.position_at(unit.id, t)
            trains_pos = plan.position_at(trains.id, t)
            rt = resupply_round_trip(terrain, trains, trains_pos, pos)
            if rt is not None and rt <= threshold_min:
                continue
            affected = tuple(sorted(
                a.id for a in own_leaves
                if a.scheduled_start < t + slice_min and a.scheduled_end > t))
            if not affected:
                # nothing active in this slice: attribute to the next
                # commitment, else to whatever activity created the exposure
                later = sorted((a.scheduled_start, a.id) for a in own_leaves
                               if a.scheduled_start >= t)
                if later:
                    affected = (later[0][1],)
                else:
                    prior = sorted((a.scheduled_end, a.id) for a in own_leaves
                                   if a.scheduled_end <= t)
                    if not prior:
                        continue
                    affected = (prior[-1][1],)
            candidate, cand_rt = _best_trains_node(terrain, trains, pos)
            movable = trains.speed > 0 and candidate is not None
            if movable and cand_rt is not None and (rt is None or cand_rt < rt) \
                    and cand_rt <= threshold_min and _trains_can_arrive(terrain, trains, trains_pos, candidate, t):
                findings.append(LogisticsFinding(
                    "reposition_cue", unit.id, trains.id, t,
                    rt if rt is not None else -1, candidate, cand_rt, affected))
            else:
                findings.append(LogisticsFinding(
                    "restriction", unit.id, trains.id, t,
                    rt if rt is not None else -1, None, None, affected))
            break  # first violating slice only
    return findings


def _best_trains_node(terrain: TerrainGraph, trains: Unit, combat_pos: str):
    """Node minimizing round-trip resupply time to the combat position."""
    best, best_rt = None, None
    for node in terrain.nodes:
        rt = resupply_round_trip(terrain, trains, node.id, combat_pos)
        if rt is None:
            continue
        if best_rt is None or rt < best_rt or (rt == best_rt and node.id < best):
            best, best_rt = node.id, rt
    return best, best_rt


def _trains_can_arrive(terrain: TerrainGraph, trains: Unit, origin: str,
                       candidate: str, deadline: int) -> bool:
    if origin == candidate:
        return True
    try:
        return shortest_path(terrain, trains, origin, candidate).duration <= deadline
    except (Unreachable, ValueError):
        return False


# ---------------------------------------------------------------------------
# counter-attack commitment


@dataclass(frozen=True)
class Commitment:
    route: Route
    commitment_time: int
    flank_node: str
    frontal: bool   # no flank existed; direct route to the engagement node
    too_late: bool  # route longer than the time remaining before the trigger


def commit_counterattack(plan, terrain: TerrainGraph, ca_force: Unit,
                         trigger_activity) -> Commitment:
    """Route the counter-attack force onto a flank of the triggering attack."""
    node = trigger_activity.location
    if node is None:
        raise ValueError(f"trigger activity {trigger_activity.id} has no location")
    approach = set(trigger_activity.route.nodes) if trigger_activity.route else {node}
    flanks = sorted(n for n, _ in terrain.neighbors(node) if n not in approach)
    if flanks:
        target, frontal = flanks[0], False
    else:
        target, frontal = node, True
    route = shortest_path(terrain, ca_force, plan.position_at(ca_force.id, 0), target)
    commit = trigger_activity.scheduled_start - route.duration
    too_late = commit < 0
    return Commitment(route=route, commitment_time=max(commit, 0),
                      flank_node=target, frontal=frontal, too_late=too_late)
