#!/usr/bin/env python3
"""Regenerate the shipped brigade sample scenario (deterministic)."""

from pathlib import Path

import yaml

COLS, ROWS = 10, 6
SPACING = 4  # km


def node_id(r, c):
    return f"N{r * COLS + c + 1:02d}"


def build():
    nodes = []
    for r in range(ROWS):
        for c in range(COLS):
            mobility = "open"
            if c in (4, 5) and r in (1, 2, 3):
                mobility = "restricted"  # river valley band
            if (r, c) in ((0, 4), (5, 5)):
                mobility = "severely_restricted"
            nodes.append({"id": node_id(r, c), "x": c * SPACING, "y": r * SPACING,
                          "mobility": mobility})

    edges = []
    for r in range(ROWS):
        for c in range(COLS):
            if c + 1 < COLS:
                factor = 0.5 if (c + 1) in (4, 5) and r in (1, 2, 3) else 1.0
                edges.append({"from": node_id(r, c), "to": node_id(r, c + 1),
                              "length_km": SPACING, "mobility_factor": factor})
            if r + 1 < ROWS:
                factor = 0.5 if c in (4, 5) and 1 <= r <= 2 else 1.0
                edges.append({"from": node_id(r, c), "to": node_id(r + 1, c),
                              "length_km": SPACING, "mobility_factor": factor})

    def unit(uid, allegiance, **kw):
        base = {
            "id": uid, "allegiance": allegiance, "nation": "A" if allegiance == "friendly" else "RED",
            "echelon": "company", "type": "armor", "personnel": 120, "systems": 14,
            "combat_power": 10.0, "speed_kmh": 32.0, "weapon_range_km": 3.0,
            "support_range_km": 0.0, "supply": 200.0, "location": "N01",
            "capabilities": [], "roe": [],
        }
        base.update(kw)
        return base

    units = [
        unit("1-BDE", "friendly", echelon="brigade", type="headquarters",
             personnel=180, systems=20, combat_power=6.0, location="N22",
             capabilities=["brigade-hq", "maneuver"], supply=400.0),
        unit("1-1-BN", "friendly", echelon="battalion", personnel=560, systems=58,
             combat_power=42.0, location="N12", parent="1-BDE",
             capabilities=["maneuver", "armor"], supply=600.0),
        unit("1-2-BN", "friendly", echelon="battalion", personnel=560, systems=58,
             combat_power=42.0, location="N32", parent="1-BDE",
             capabilities=["maneuver", "armor"], supply=600.0),
        unit("1-3-BN", "friendly", echelon="battalion", personnel=540, systems=52,
             combat_power=38.0, location="N21", parent="1-BDE",
             capabilities=["maneuver", "armor"], supply=600.0),
        unit("A-1-1", "friendly", personnel=130, systems=14, combat_power=12.0,
             location="N12", parent="1-1-BN",
             capabilities=["maneuver", "armor", "company-team"], supply=180.0),
        unit("B-1-1", "friendly", personnel=130, systems=14, combat_power=12.0,
             location="N12", parent="1-1-BN",
             capabilities=["maneuver", "armor", "company-team"], supply=180.0),
        unit("A-1-2", "friendly", personnel=130, systems=14, combat_power=12.0,
             location="N32", parent="1-2-BN",
             capabilities=["maneuver", "armor", "company-team"], supply=180.0),
        unit("B-1-2", "friendly", personnel=130, systems=14, combat_power=12.0,
             location="N32", parent="1-2-BN",
             capabilities=["maneuver", "armor", "company-team"], supply=180.0),
        unit("A-1-3", "friendly", personnel=130, systems=14, combat_power=12.0,
             location="N21", parent="1-3-BN",
             capabilities=["maneuver", "armor", "company-team"], supply=180.0),
        unit("B-1-3", "friendly", personnel=130, systems=14, combat_power=12.0,
             location="N21", parent="1-3-BN",
             capabilities=["maneuver", "armor", "company-team"], supply=180.0),
        unit("1-9-FA", "friendly", echelon="battalion", type="artillery",
             personnel=300, systems=18, combat_power=16.0, speed_kmh=20.0,
             weapon_range_km=25.0, support_range_km=25.0, location="N23",
             capabilities=["fires", "artillery", "fire-support"], supply=500.0),
        unit("1-RECON", "friendly", type="cavalry", personnel=90, systems=12,
             combat_power=12.0, speed_kmh=40.0, location="N13",
             capabilities=["security", "recon", "maneuver"], supply=150.0),
        unit("1-ENG", "friendly", type="engineer", personnel=110, systems=10,
             combat_power=6.0, speed_kmh=20.0, location="N22",
             capabilities=["engineer", "breach"], supply=200.0),
        unit("1-AVN", "friendly", type="attack-helicopter", personnel=60, systems=8,
             combat_power=20.0, speed_kmh=160.0, weapon_range_km=8.0,
             location="N42", capabilities=["aviation"], supply=240.0),
        unit("1-UAV", "friendly", echelon="platoon", type="uav", personnel=20,
             systems=3, combat_power=0.0, speed_kmh=0.0, location="N33",
             capabilities=["uav", "recon"], supply=60.0),
        unit("1-FSB", "friendly", type="field-trains", personnel=150, systems=30,
             combat_power=0.0, speed_kmh=20.0, support_range_km=20.0,
             location="N31", capabilities=["logistics"], supply=2000.0),
        # enemy
        unit("E-MECH", "enemy", echelon="battalion", type="mechanized",
             personnel=480, systems=50, combat_power=36.0, speed_kmh=20.0,
             location="N27", capabilities=["maneuver", "armor"], supply=400.0),
        unit("E-ARTY", "enemy", type="artillery", personnel=180, systems=12,
             combat_power=12.0, speed_kmh=20.0, weapon_range_km=30.0,
             support_range_km=20.0, location="N28",
             capabilities=["fires", "artillery", "fire-support"], supply=300.0),
        unit("E-RECON", "enemy", type="recon", personnel=60, systems=8,
             combat_power=6.0, speed_kmh=32.0, location="N16",
             capabilities=["security", "recon"], supply=100.0),
        unit("E-RESERVE", "enemy", type="tank", personnel=160, systems=16,
             combat_power=14.0, speed_kmh=32.0, weapon_range_km=12.0,
             location="N29", capabilities=["maneuver", "armor", "reserve"],
             supply=220.0),
    ]
    # 20 units so far? count: 16 friendly + 4 enemy = 20
    measures = [
        {"id": "OBJ-GOLD", "kind": "objective_area", "nodes": ["N27"]},
        {"id": "OBJ-SILVER", "kind": "objective_area", "nodes": ["N38"]},
        {"id": "AXIS-STEEL", "kind": "axis", "nodes": ["N19"]},
        {"id": "SUPPORT-AREA", "kind": "position", "nodes": ["N24"]},
        {"id": "PL-COPPER", "kind": "phase_line", "nodes": ["N15", "N25", "N35"]},
    ]
    goals = [
        {"id": "G1-SEIZE-GOLD", "task": "seize", "intent": "destroy",
         "executor": "1-BDE", "target": "OBJ-GOLD", "relations": []},
        {"id": "G2-SEIZE-SILVER", "task": "seize", "intent": "defeat",
         "executor": "1-BDE", "target": "OBJ-SILVER",
         "relations": [{"goal": "G1-SEIZE-GOLD", "relation": "starts_after_end_of",
                        "offset_min": 30}]},
        {"id": "G3-ATTRIT-MECH", "task": "deliberate-attack", "intent": "attrit:0.3",
         "executor": "1-3-BN", "target": "E-MECH",
         "relations": [{"goal": "G2-SEIZE-SILVER", "relation": "starts_after_end_of",
                        "offset_min": 0}]},
        {"id": "G4-PREP-FIRES", "task": "fire-mission", "intent": "suppress",
         "executor": "1-9-FA", "target": "E-MECH", "relations": []},
        {"id": "G5-RECON-STEEL", "task": "movement-to-contact", "intent": "attrit",
         "executor": "1-RECON", "target": "AXIS-STEEL", "relations": []},
        {"id": "G6-WATCH-GOLD", "task": "surveil-area", "intent": "attrit",
         "executor": "1-UAV", "target": "OBJ-GOLD", "relations": []},
        {"id": "G7-SUPPORT-AREA", "task": "establish-support-area", "intent": "",
         "executor": "1-FSB", "target": "SUPPORT-AREA", "relations": []},
        {"id": "G8-DEEP-ATTACK", "task": "deep-attack", "intent": "attrit:0.25",
         "executor": "1-AVN", "target": "E-RESERVE", "relations": []},
    ]
    return {
        "schema_version": 1,
        "name": "brigade-deliberate-attack",
        "clock_origin": "H",
        "terrain": {"nodes": nodes, "edges": edges},
        "units": units,
        "control_measures": measures,
        "goals": goals,
    }


if __name__ == "__main__":
    doc = build()
    out = Path(__file__).resolve().parents[1] / "src/coaplan/data/scenario_brigade.yaml"
    out.write_text(yaml.safe_dump(doc, sort_keys=False, width=100), encoding="utf-8")
    print(f"wrote {out}: {len(doc['units'])} units, {len(doc['goals'])} goals, "
          f"{len(doc['terrain']['nodes'])} nodes")
