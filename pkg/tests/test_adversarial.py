import json

import pytest

from coaplan import EditCommand, PlanConfig, export_plan, load_kb, load_scenario, plan, replan
from coaplan.adversarial import contact_decision, detect_engagements, wargame
from coaplan.scenario import Unit

from oracles import engagement_oracle

ARTY_KB = """
schema_version: 1
segment: {id: base, shadows: base}
templates:
  - task: fire-mission
    row: fires
    anchors: {start: fire-for-effect, end: fire-for-effect}
    duration: {model: fixed, minutes: 60}
    requires: [artillery]
  - task: fire-for-effect
    row: fires
    duration: {model: fixed, minutes: 15}
    consumption: {ammo: 40.0}
    requires: [artillery]
  - task: counter-battery-fire
    row: fires
    duration: {model: fixed, minutes: 10}
    requires: [artillery]
  - task: displace
    row: fires
    duration: {model: rate_based, quantity: route, rate: speed}
methods:
  - id: fm
    task: fire-mission
    guard: {capabilities: [artillery]}
    subtasks:
      - {local: ffe, task: fire-for-effect, executor: same, target: same}
reactions:
  - id: counter-battery
    priority: 10
    trigger:
      tasks: [fire-for-effect]
      side: any
      opposing_capability: artillery
      within: weapon_range
    reaction:
      {task: counter-battery-fire, intent: suppress, target: acting_unit,
       delay_min: 5, after: trigger_start}
    counteraction:
      {task: displace, target: none, delay_min: 0, after: trigger_end}
"""


def arty_scenario(enemy_arty_x=12, with_enemy=True):
    enemy = f"""
  - {{id: E-GUN, allegiance: enemy, type: artillery, speed_kmh: 20,
     combat_power: 8, weapon_range_km: 20, location: EPOS,
     capabilities: [artillery]}}
""" if with_enemy else ""
    return load_scenario(f"""
schema_version: 1
terrain:
  nodes:
    - {{id: FIRE, x: 0, y: 0}}
    - {{id: NEXT, x: 2, y: 0}}
    - {{id: EPOS, x: {enemy_arty_x}, y: 0}}
  edges:
    - {{from: FIRE, to: NEXT, length_km: 2}}
    - {{from: NEXT, to: EPOS, length_km: {enemy_arty_x - 2}}}
units:
  - {{id: GUNS, allegiance: friendly, type: artillery, speed_kmh: 20,
     combat_power: 10, weapon_range_km: 20, location: FIRE,
     capabilities: [artillery]}}{enemy}
goals:
  - {{id: G1, task: fire-mission, intent: suppress, executor: GUNS}}
""")


def test_counter_battery_chain():
    kb = load_kb([ARTY_KB])
    p = plan(arty_scenario(), kb)
    reaction = p.activities.get("G1/ffe~r.counter-battery")
    counter = p.activities.get("G1/ffe~c.counter-battery")
    assert reaction is not None and reaction.executor == "E-GUN"
    assert reaction.provenance == "reaction:counter-battery"
    assert counter is not None and counter.executor == "GUNS"
    assert counter.provenance == "counteraction:counter-battery"
    # displace begins at fire-mission end (free calendar afterwards)
    ffe = p.activities["G1/ffe"]
    assert counter.scheduled_start == ffe.scheduled_end
    # reaction respects its delay
    assert reaction.scheduled_start >= ffe.scheduled_start + 5


def test_no_enemy_artillery_no_reaction():
    kb = load_kb([ARTY_KB])
    p = plan(arty_scenario(with_enemy=False), kb)
    assert not any("~r." in aid for aid in p.activities)


def test_out_of_range_no_reaction():
    kb = load_kb([ARTY_KB])
    s = arty_scenario(enemy_arty_x=25)  # 25 km > 20 km weapon range
    # oracle check of the geometry this test relies on
    assert s.terrain.euclidean("FIRE", "EPOS") > s.unit("E-GUN").weapon_range
    p = plan(s, kb)
    assert not any("~r." in aid for aid in p.activities)


def test_destroyed_reactor_does_not_fire():
    kb = load_kb([ARTY_KB])
    s = arty_scenario()
    zeroed = [u if u.id != "E-GUN" else
              Unit(**{**u.__dict__, "combat_power": 0.0}) for u in s.units]
    import dataclasses
    s2 = dataclasses.replace(s, units=tuple(zeroed))
    p = plan(s2, kb)
    assert not any("~r." in aid for aid in p.activities)


def test_chain_depth_capped_at_three():
    """even a self-triggering rule cannot recurse past counteraction"""
    looping = ARTY_KB.replace("task: counter-battery-fire, intent: suppress",
                              "task: fire-for-effect, intent: suppress")
    kb = load_kb([looping])
    p = plan(arty_scenario(), kb)
    depths = {a.chain_depth for a in p.activities.values()}
    assert max(depths) <= 3
    # the reaction's own fire-for-effect leaf must not spawn a further reaction
    assert not any(aid.count("~r.") > 1 for aid in p.activities)


def test_reaction_triggers_reevaluate_true_on_final_plan(brigade_plan, brigade_scenario, base_kb):
    from coaplan.adversarial import match_reaction_rules
    for a in brigade_plan.activities.values():
        if not a.provenance.startswith("reaction:"):
            continue
        rule_id = a.provenance.split(":", 1)[1]
        trigger_leaf = brigade_plan.activities[a.id.split("~", 1)[0]]
        matches = match_reaction_rules(brigade_plan, trigger_leaf, base_kb,
                                       brigade_scenario)
        assert rule_id in [r.id for r, _ in matches]


# -- wargame -------------------------------------------------------------------


def test_wargame_valley_engagement(valley_scenario, base_kb):
    p = wargame(valley_scenario, base_kb)
    entries = [e for e in p.attrition_ledger if e["kind"] == "wargame_engagement"]
    assert len(entries) >= 1
    assert entries[0]["node"] == "V3"
    assert 0 < entries[0]["defender_casualty_fraction"] <= 1
    assert 0 <= entries[0]["attacker_casualty_fraction"] <= 1
    # both sides' calendars and ledger are populated
    assert "RED-ATK" in p.calendars and "BLUE-DEF" in p.calendars


def test_wargame_matches_intersection_oracle(valley_scenario, base_kb):
    p = wargame(valley_scenario, base_kb)
    doc = json.loads(export_plan(p))
    expected = engagement_oracle(doc, valley_scenario, base_kb)
    got = {(e["node"], e["activities"][0], e["activities"][1])
           for e in p.attrition_ledger if e["kind"] == "wargame_engagement"}
    assert got == expected


def test_wargame_empty_enemy_coa_equals_plan(valley_scenario, base_kb):
    import dataclasses
    blue_only = dataclasses.replace(
        valley_scenario,
        goals=tuple(g for g in valley_scenario.goals if g.id != "GR1-ATTACK"))
    w = wargame(blue_only, base_kb)
    p = plan(blue_only, base_kb)
    assert export_plan(w) == export_plan(p)


def test_wargame_disjoint_engagements_independent(base_kb):
    doc = """
schema_version: 1
terrain:
  nodes:
    - {id: W1, x: 0, y: 0}
    - {id: W2, x: 8, y: 0}
    - {id: E1, x: 0, y: 20}
    - {id: E2, x: 8, y: 20}
  edges:
    - {from: W1, to: W2, length_km: 8}
    - {from: E1, to: E2, length_km: 8}
    - {from: W2, to: E2, length_km: 20}
units:
  - {id: BLUE-A, allegiance: friendly, echelon: battalion, speed_kmh: 20,
     combat_power: 30, location: W1, capabilities: [maneuver, armor], supply: 500}
  - {id: BLUE-B, allegiance: friendly, echelon: battalion, speed_kmh: 20,
     combat_power: 30, location: E1, capabilities: [maneuver, armor], supply: 500}
  - {id: RED-A, allegiance: enemy, echelon: battalion, speed_kmh: 20,
     combat_power: 28, location: W2, capabilities: [maneuver, armor], supply: 500}
  - {id: RED-B, allegiance: enemy, echelon: battalion, speed_kmh: 20,
     combat_power: 28, location: E2, capabilities: [maneuver, armor], supply: 500}
control_measures:
  - {id: HOLD-W, kind: position, nodes: [W2]}
  - {id: HOLD-E, kind: position, nodes: [E2]}
goals:
  - {id: GW, task: deliberate-attack, intent: defeat, executor: BLUE-A, target: RED-A}
  - {id: GE, task: deliberate-attack, intent: defeat, executor: BLUE-B, target: RED-B}
  - {id: GW-DEF, task: defend-area, intent: defeat, executor: RED-A, target: HOLD-W}
  - {id: GE-DEF, task: defend-area, intent: defeat, executor: RED-B, target: HOLD-E}
"""
    s = load_scenario(doc)
    full = wargame(s, base_kb)
    full_entries = {e["node"]: e for e in full.attrition_ledger
                    if e["kind"] == "wargame_engagement"}
    assert len(full_entries) == 2
    # delete the western attack: the eastern engagement numbers are unchanged
    reduced = replan(full, [EditCommand("delete_activity", "GW")])
    red_entries = {e["node"]: e for e in reduced.attrition_ledger
                   if e["kind"] == "wargame_engagement"}
    assert set(red_entries) == {"E2"}
    assert red_entries["E2"]["defender_casualty_fraction"] == \
        full_entries["E2"]["defender_casualty_fraction"]
    assert red_entries["E2"]["attacker_casualty_fraction"] == \
        full_entries["E2"]["attacker_casualty_fraction"]


def test_allegiance_relabel_symmetry(base_kb):
    """swapping the sides of a mirror-symmetric scenario yields the same
    schedule and the same adjudication"""
    def doc(a_side, b_side):
        return f"""
schema_version: 1
terrain:
  nodes:
    - {{id: M1, x: 0, y: 0}}
    - {{id: M2, x: 10, y: 0}}
    - {{id: M3, x: 20, y: 0}}
  edges:
    - {{from: M1, to: M2, length_km: 10}}
    - {{from: M2, to: M3, length_km: 10}}
units:
  - {{id: U-A, allegiance: {a_side}, echelon: battalion, speed_kmh: 20,
     combat_power: 30, location: M1, capabilities: [maneuver, armor], supply: 500}}
  - {{id: U-B, allegiance: {b_side}, echelon: battalion, speed_kmh: 20,
     combat_power: 30, location: M3, capabilities: [maneuver, armor], supply: 500}}
goals:
  - {{id: GA, task: deliberate-attack, intent: defeat, executor: U-A, target: U-B}}
  - {{id: GB, task: deliberate-attack, intent: defeat, executor: U-B, target: U-A}}
"""
    p1 = wargame(load_scenario(doc("friendly", "enemy")), base_kb)
    p2 = wargame(load_scenario(doc("enemy", "friendly")), base_kb)
    sched1 = {a.id: (a.task_type, a.scheduled_start, a.scheduled_end)
              for a in p1.activities.values()}
    sched2 = {a.id: (a.task_type, a.scheduled_start, a.scheduled_end)
              for a in p2.activities.values()}
    assert sched1 == sched2
    eng1 = [e for e in p1.attrition_ledger if e["kind"] == "wargame_engagement"]
    eng2 = [e for e in p2.attrition_ledger if e["kind"] == "wargame_engagement"]
    assert [(e["node"], e["window"]) for e in eng1] == \
        [(e["node"], e["window"]) for e in eng2]


# -- contact decisions ------------------------------------------------------------


class Cfg:
    engage_threshold = 1.5
    main_body_ratio = 3.0
    bypass_threshold = 0.3


def mk_unit(uid, power, allegiance="friendly", roe=()):
    return Unit(id=uid, allegiance=allegiance, combat_power=power,
                speed=20.0, location="A", roe=tuple(roe))


def test_contact_zero_strength_enemy_bypass():
    d = contact_decision(mk_unit("S", 10), mk_unit("E", 0, "enemy"), (), Cfg)
    assert d.decision == "bypass"


def test_contact_attrited_enemy_bypass():
    d = contact_decision(mk_unit("S", 10), mk_unit("E", 2, "enemy"), (), Cfg,
                         enemy_initial_power=10)
    assert d.decision == "bypass"
    assert d.basis["rule"] == "enemy-attrited"


def test_contact_roe_forbids_engagement():
    d = contact_decision(mk_unit("S", 30), mk_unit("E", 5, "enemy"),
                         ("weapons-hold",), Cfg, enemy_initial_power=10)
    assert d.decision == "avoid"


def test_contact_ratio_exactly_at_threshold_engages():
    d = contact_decision(mk_unit("S", 15), mk_unit("E", 10, "enemy"), (), Cfg)
    assert d.decision == "engage"  # closed threshold


def test_contact_main_body_criteria():
    d = contact_decision(mk_unit("S", 5), mk_unit("E", 20, "enemy"), (), Cfg)
    assert d.decision == "assist_main_body"


def test_contact_middling_enemy_avoid():
    d = contact_decision(mk_unit("S", 10), mk_unit("E", 9, "enemy"), (), Cfg)
    assert d.decision == "avoid"


def test_assist_main_body_generates_four_actions(base_kb):
    s = load_scenario("""
schema_version: 1
terrain:
  nodes:
    - {id: A, x: 0, y: 0}
    - {id: B, x: 8, y: 0}
    - {id: C, x: 16, y: 0}
  edges:
    - {from: A, to: B, length_km: 8}
    - {from: B, to: C, length_km: 8}
units:
  - {id: SCOUT, allegiance: friendly, speed_kmh: 40, combat_power: 5,
     location: A, capabilities: [security, recon]}
  - {id: E-HEAVY, allegiance: enemy, echelon: battalion, speed_kmh: 20,
     combat_power: 30, location: B, capabilities: [maneuver, armor]}
goals:
  - {id: G1, task: movement-to-contact, intent: attrit, executor: SCOUT, target: AXIS}
control_measures:
  - {id: AXIS, kind: axis, nodes: [C]}
""")
    p = plan(s, base_kb)
    contact_events = [e for e in p.events if e["event"] == "contact"]
    assert contact_events and contact_events[0]["decision"] == "assist_main_body"
    drills = [a for a in p.activities.values()
              if "contact-drill" in a.provenance and a.parent is None]
    assert len(drills) == 4
    tasks = sorted(a.task_type for a in drills)
    assert tasks == ["direct-fire", "recon-route", "recon-route", "secure-flank"]
    # the drill happens after the move that made contact
    mv = p.activities["G1/lead"]
    for a in drills:
        assert a.scheduled_start >= mv.scheduled_end


def test_contact_engage_generates_direct_fire(base_kb):
    s = load_scenario("""
schema_version: 1
terrain:
  nodes:
    - {id: A, x: 0, y: 0}
    - {id: B, x: 8, y: 0}
    - {id: C, x: 16, y: 0}
  edges:
    - {from: A, to: B, length_km: 8}
    - {from: B, to: C, length_km: 8}
units:
  - {id: SCOUT, allegiance: friendly, speed_kmh: 40, combat_power: 12,
     location: A, capabilities: [security, recon]}
  - {id: E-LIGHT, allegiance: enemy, speed_kmh: 20, combat_power: 6,
     location: B, capabilities: [recon]}
goals:
  - {id: G1, task: movement-to-contact, intent: attrit, executor: SCOUT, target: AXIS}
control_measures:
  - {id: AXIS, kind: axis, nodes: [C]}
""")
    p = plan(s, base_kb)
    contact_events = [e for e in p.events if e["event"] == "contact"]
    assert contact_events and contact_events[0]["decision"] == "engage"
    drills = [a for a in p.activities.values() if "contact-drill" in a.provenance]
    assert [a.task_type for a in drills] == ["direct-fire"]
    assert drills[0].target == "E-LIGHT"
