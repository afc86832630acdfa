import math
import random

import pytest

from coaplan.routing import (
    Commitment,
    Route,
    Unreachable,
    commit_counterattack,
    edge_minutes,
    in_support_range,
    logistics_check,
    resupply_round_trip,
    shortest_path,
)
from coaplan.scenario import TerrainEdge, TerrainGraph, TerrainNode, Unit

from oracles import route_oracle

# dyadic speeds/factors keep every edge cost an exact float, so oracle and
# implementation sums agree bit-for-bit regardless of addition order
SPEEDS = [10.0, 16.0, 20.0, 32.0, 40.0, 64.0]
FACTORS = [0.25, 0.5, 1.0]


def make_unit(speed=20.0, support=0.0, location="A", uid="U1"):
    return Unit(id=uid, allegiance="friendly", speed=speed,
                support_range=support, location=location, combat_power=5.0)


def grid(nodes, edges):
    return TerrainGraph(
        nodes=tuple(TerrainNode(n, x, y) for n, x, y in nodes),
        edges=tuple(TerrainEdge(a, b, l, f) for a, b, l, f in edges),
    )


def test_same_node_empty_route():
    t = grid([("A", 0, 0), ("B", 1, 0)], [("A", "B", 10, 1.0)])
    r = shortest_path(t, make_unit(), "A", "A")
    assert r.nodes == ("A",)
    assert r.duration == 0
    assert r.total_length == 0


def test_single_edge_arithmetic():
    t = grid([("A", 0, 0), ("B", 10, 0)], [("A", "B", 10, 1.0)])
    r = shortest_path(t, make_unit(speed=20), "A", "B")
    assert r.duration == 30  # 10 km at 20 km/h


def test_mobility_factor_slows():
    t = grid([("A", 0, 0), ("B", 10, 0)], [("A", "B", 10, 0.5)])
    r = shortest_path(t, make_unit(speed=20), "A", "B")
    assert r.duration == 60


def test_unreachable_carries_components():
    t = grid([("A", 0, 0), ("B", 1, 0), ("C", 5, 0)], [("A", "B", 1, 1.0)])
    with pytest.raises(Unreachable) as exc:
        shortest_path(t, make_unit(), "A", "C")
    assert "A" in exc.value.src_component
    assert "C" in exc.value.dst_component


def test_lexicographic_tie_break():
    # two equal-cost routes A->B->D and A->C->D: the lexicographically
    # smaller node sequence wins
    t = grid([("A", 0, 0), ("B", 1, 1), ("C", 1, -1), ("D", 2, 0)],
             [("A", "B", 4, 1.0), ("B", "D", 4, 1.0),
              ("A", "C", 4, 1.0), ("C", "D", 4, 1.0)])
    r = shortest_path(t, make_unit(), "A", "D")
    assert r.nodes == ("A", "B", "D")


def _random_graph(rng):
    n = rng.randint(2, 50)
    names = [f"n{i:02d}" for i in range(n)]
    nodes = [(names[i], rng.randint(0, 40), rng.randint(0, 40)) for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < min(1.0, 3.0 / n):
                length = rng.randint(1, 20)
                f = rng.choice(FACTORS)
                edges.append((names[i], names[j], length, f))
                edges.append((names[j], names[i], length, f))
    return names, nodes, edges


@pytest.mark.parametrize("seed", range(10))
def test_random_graphs_match_oracle(seed):
    """500 random instances split across seeds; exact duration equality."""
    rng = random.Random(seed * 104729)
    for _ in range(50):
        names, nodes, edges = _random_graph(rng)
        terrain = grid(nodes, edges)
        speed = rng.choice(SPEEDS)
        unit = make_unit(speed=speed, location=names[0])
        oracle = route_oracle(names, edges, speed)
        src, dst = rng.choice(names), rng.choice(names)
        try:
            r = shortest_path(terrain, unit, src, dst)
            assert oracle[(src, dst)] < math.inf
            assert r.duration == math.ceil(oracle[(src, dst)])
        except Unreachable:
            assert oracle[(src, dst)] == math.inf


def test_route_reversal_symmetric_graph():
    rng = random.Random(42)
    names, nodes, edges = _random_graph(rng)
    terrain = grid(nodes, edges)
    unit = make_unit(speed=16, location=names[0])
    for _ in range(20):
        a, b = rng.choice(names), rng.choice(names)
        try:
            fwd = shortest_path(terrain, unit, a, b)
            rev = shortest_path(terrain, unit, b, a)
        except Unreachable:
            continue
        assert fwd.duration == rev.duration


def test_concatenation_additivity():
    t = grid([("A", 0, 0), ("B", 8, 0), ("C", 16, 0)],
             [("A", "B", 8, 1.0), ("B", "C", 8, 1.0)])
    u = make_unit(speed=16)
    ab = shortest_path(t, u, "A", "B")
    bc = shortest_path(t, u, "B", "C")
    ac = shortest_path(t, u, "A", "C")
    assert ac.duration == ab.duration + bc.duration


# -- support range -----------------------------------------------------------


def test_support_colocated():
    t = grid([("A", 0, 0)], [])
    check = in_support_range(make_unit(support=10), "A", t)
    assert check.in_range and check.distance == 0


def test_support_euclidean_out_of_range():
    t = grid([("A", 0, 0), ("B", 12, 0)], [("A", "B", 12, 1.0)])
    check = in_support_range(make_unit(support=10), "B", t, mode="euclidean")
    assert not check.in_range
    assert check.distance == 12


def test_support_path_vs_euclidean_disagree():
    # straight line 9 km but the only road loops 14 km
    t = grid([("A", 0, 0), ("M", 7, 7), ("B", 9, 0)],
             [("A", "M", 7, 1.0), ("M", "B", 7, 1.0)])
    u = make_unit(support=10)
    assert in_support_range(u, "B", t, mode="euclidean").in_range
    path_check = in_support_range(u, "B", t, mode="path")
    assert not path_check.in_range
    assert path_check.distance == 14


def test_support_path_unreachable():
    t = grid([("A", 0, 0), ("B", 5, 0)], [])
    check = in_support_range(make_unit(support=10), "B", t, mode="path")
    assert not check.in_range
    assert check.reason == "unreachable"


def test_no_support_range_raises():
    t = grid([("A", 0, 0)], [])
    with pytest.raises(ValueError):
        in_support_range(make_unit(support=0), "A", t)


# -- logistics & counterattack over the shipped corpus -------------------------


def test_logistics_cues_on_brigade(brigade_plan, brigade_scenario):
    findings = logistics_check(brigade_plan, brigade_scenario.terrain,
                               brigade_scenario, 120, 60)
    cues = [f for f in findings if f.kind == "reposition_cue"]
    assert cues, "advancing brigade should outrun its trains"
    for f in cues:
        # candidate strictly reduces the violating round trip
        assert f.candidate_round_trip < f.round_trip
        assert f.activity_ids


def test_logistics_static_defense_no_cues(base_kb):
    from coaplan import load_scenario, plan
    doc = """
schema_version: 1
terrain:
  nodes: [{id: A, x: 0, y: 0}, {id: B, x: 4, y: 0}]
  edges: [{from: A, to: B, length_km: 4}]
units:
  - {id: DEF, allegiance: friendly, echelon: battalion, speed_kmh: 20,
     combat_power: 20, location: A, capabilities: [maneuver, armor], supply: 900}
  - {id: TRAINS, allegiance: friendly, type: field-trains, speed_kmh: 20,
     combat_power: 0, support_range_km: 20, location: A, capabilities: [logistics]}
goals:
  - {id: G1, task: defend-area, intent: defeat, executor: DEF, target: HOLD}
control_measures:
  - {id: HOLD, kind: position, nodes: [A]}
"""
    s = load_scenario(doc)
    p = plan(s, base_kb)
    findings = logistics_check(p, s.terrain, s, 120, 60)
    assert findings == []


def test_immobile_trains_restriction(base_kb):
    from coaplan import load_scenario, plan
    doc = """
schema_version: 1
terrain:
  nodes: [{id: A, x: 0, y: 0}, {id: B, x: 40, y: 0}, {id: C, x: 80, y: 0}]
  edges: [{from: A, to: B, length_km: 40}, {from: B, to: C, length_km: 40}]
units:
  - {id: ATK, allegiance: friendly, echelon: battalion, speed_kmh: 40,
     combat_power: 20, location: A, capabilities: [maneuver, armor], supply: 900}
  - {id: TRAINS, allegiance: friendly, type: field-trains, speed_kmh: 0,
     combat_power: 0, support_range_km: 20, location: A, capabilities: [logistics]}
goals:
  - {id: G1, task: move, executor: ATK, target: FAR}
control_measures:
  - {id: FAR, kind: position, nodes: [C]}
"""
    s = load_scenario(doc)
    p = plan(s, base_kb)
    findings = logistics_check(p, s.terrain, s, 120, 60)
    assert findings
    assert all(f.kind == "restriction" for f in findings)
    assert all(f.candidate_node is None for f in findings)


def test_commit_counterattack_flank_choice(brigade_plan, brigade_scenario):
    # synthesize a trigger from a scheduled enemy attack-like leaf
    terrain = brigade_scenario.terrain

    class Trigger:
        id = "fake-enemy-attack"
        location = "N27"
        scheduled_start = 600
        route = Route(nodes=("N29", "N28", "N27"), total_length=8.0,
                      duration=24, effective_speed=20.0)

    ca = brigade_scenario.unit("1-3-BN")
    c = commit_counterattack(brigade_plan, terrain, ca, Trigger())
    neighbors = sorted(n for n, _ in terrain.neighbors("N27"))
    expected_flank = [n for n in neighbors if n not in {"N29", "N28", "N27"}][0]
    assert c.flank_node == expected_flank
    assert not c.frontal
    if not c.too_late:
        assert c.commitment_time + c.route.duration <= Trigger.scheduled_start


def test_commit_counterattack_too_late(brigade_plan, brigade_scenario):
    class Trigger:
        id = "fake"
        location = "N27"
        scheduled_start = 1
        route = Route(nodes=("N28", "N27"), total_length=4.0, duration=12,
                      effective_speed=20.0)

    ca = brigade_scenario.unit("1-3-BN")
    c = commit_counterattack(brigade_plan, brigade_scenario.terrain, ca, Trigger())
    assert c.too_late
    assert c.commitment_time == 0
