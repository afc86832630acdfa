"""Scenario model: terrain graph, units, control measures and goal tasks.

Scenario files come in two interchangeable forms, a human-editable YAML
form and a canonical machine JSON form; both carry the same schema
(`schema_version: 1`) and round-trip losslessly. All times are integer
minutes from H-hour.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

SCHEMA_VERSION = 1

MOBILITY_CLASSES = ("open", "restricted", "severely_restricted")
ALLEGIANCES = ("friendly", "enemy")
ECHELONS = ("team", "platoon", "company", "battalion", "brigade")
ECHELON_RANK = {e: i for i, e in enumerate(ECHELONS)}
MEASURE_KINDS = ("objective_area", "axis", "phase_line", "position")
RELATIONS = ("starts_with", "starts_after_end_of", "ends_before_start_of")


class ScenarioError(Exception):
    """Base for load-time failures; carries a document path when known."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ParseError(ScenarioError):
    pass


class DanglingReference(ScenarioError):
    def __init__(self, ref: str, path: str = ""):
        self.ref = ref
        super().__init__(f"reference to undeclared id {ref!r}", path)


class InvariantViolation(ScenarioError):
    pass


@dataclass(frozen=True)
class TerrainNode:
    id: str
    x: float
    y: float
    mobility_class: str = "open"


@dataclass(frozen=True)
class TerrainEdge:
    src: str
    dst: str
    length: float  # km
    mobility_factor: float = 1.0


@dataclass(frozen=True)
class TerrainGraph:
    nodes: tuple[TerrainNode, ...]
    edges: tuple[TerrainEdge, ...]

    def node(self, nid: str) -> TerrainNode:
        return self._index[nid]

    def has_node(self, nid: str) -> bool:
        return nid in self._index

    def neighbors(self, nid: str) -> list[tuple[str, TerrainEdge]]:
        return self._adj.get(nid, [])

    def euclidean(self, a: str, b: str) -> float:
        na, nb = self.node(a), self.node(b)
        return ((na.x - nb.x) ** 2 + (na.y - nb.y) ** 2) ** 0.5

    def __post_init__(self):
        index = {n.id: n for n in self.nodes}
        adj: dict[str, list[tuple[str, TerrainEdge]]] = {}
        for e in self.edges:
            adj.setdefault(e.src, []).append((e.dst, e))
        for lst in adj.values():
            lst.sort(key=lambda t: t[0])
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_adj", adj)


@dataclass(frozen=True)
class Unit:
    id: str
    allegiance: str
    nation: str = ""
    echelon: str = "company"
    unit_type: str = "infantry"
    personnel: int = 0
    systems: int = 0
    combat_power: float = 0.0
    speed: float = 0.0  # km/h; 0 = immobile
    weapon_range: float = 0.0  # km
    support_range: float = 0.0  # km; 0 = not a supporter
    supply_level: float = 0.0
    location: str = ""
    capabilities: tuple[str, ...] = ()
    roe: tuple[str, ...] = ()
    parent: str | None = None  # superior unit, for subordinate bindings


@dataclass(frozen=True)
class ControlMeasure:
    id: str
    kind: str
    node_set: tuple[str, ...]


@dataclass(frozen=True)
class TemporalRelation:
    other_goal_id: str
    relation: str
    offset: int = 0  # minutes


@dataclass(frozen=True)
class GoalTask:
    id: str
    task_type: str
    intent: str = ""
    executor: str | None = None
    target: str | None = None
    temporal_relations: tuple[TemporalRelation, ...] = ()


@dataclass(frozen=True)
class Scenario:
    terrain: TerrainGraph
    units: tuple[Unit, ...]
    measures: tuple[ControlMeasure, ...]
    goals: tuple[GoalTask, ...]
    clock_origin: str = "H"
    name: str = ""

    def unit(self, uid: str) -> Unit:
        return self._units[uid]

    def has_unit(self, uid: str) -> bool:
        return uid in self._units

    def measure(self, mid: str) -> ControlMeasure:
        return self._measures[mid]

    def has_measure(self, mid: str) -> bool:
        return mid in self._measures

    def subordinates(self, uid: str) -> list[Unit]:
        """Direct subordinates in deterministic (echelon, id) order."""
        subs = [u for u in self.units if u.parent == uid]
        subs.sort(key=lambda u: (ECHELON_RANK.get(u.echelon, 99), u.id))
        return subs

    def side_units(self, allegiance: str) -> list[Unit]:
        return [u for u in self.units if u.allegiance == allegiance]

    def __post_init__(self):
        object.__setattr__(self, "_units", {u.id: u for u in self.units})
        object.__setattr__(self, "_measures", {m.id: m for m in self.measures})


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    path: str
    message: str


# ---------------------------------------------------------------------------
# loading


def load_scenario_file(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ParseError("file not found", path=str(p))
    return load_scenario(p.read_text(encoding="utf-8"), source=str(p))


def load_scenario(document: str, source: str = "<string>") -> Scenario:
    """Parse and fully resolve a scenario document (YAML or JSON)."""
    doc = _parse_structured(document, source)
    return scenario_from_dict(doc, source=source)


def _parse_structured(document: str, source: str):
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ParseError(f"cannot parse document: {exc}", path=where) from exc
    if not isinstance(doc, dict):
        raise ParseError("document root must be a mapping", path=source)
    return doc


def _req(doc: dict, key: str, path: str):
    if key not in doc:
        raise InvariantViolation(f"missing required field {key!r}", path=path)
    return doc[key]


def _enum(value, allowed, path: str):
    if value not in allowed:
        raise InvariantViolation(f"{value!r} not one of {sorted(allowed)}", path=path)
    return value


def scenario_from_dict(doc: dict, source: str = "<dict>") -> Scenario:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}", path=source)

    tdoc = _req(doc, "terrain", f"{source}/terrain")
    nodes = []
    for i, nd in enumerate(tdoc.get("nodes", [])):
        path = f"{source}/terrain/nodes[{i}]"
        nodes.append(TerrainNode(
            id=str(_req(nd, "id", path)),
            x=float(_req(nd, "x", path)),
            y=float(_req(nd, "y", path)),
            mobility_class=_enum(nd.get("mobility", "open"), MOBILITY_CLASSES, path),
        ))
    node_ids = {n.id for n in nodes}
    if len(node_ids) != len(nodes):
        raise InvariantViolation("duplicate terrain node ids", path=f"{source}/terrain/nodes")

    edges = []
    for i, ed in enumerate(tdoc.get("edges", [])):
        path = f"{source}/terrain/edges[{i}]"
        src, dst = str(_req(ed, "from", path)), str(_req(ed, "to", path))
        for nid in (src, dst):
            if nid not in node_ids:
                raise DanglingReference(nid, path=path)
        length = float(_req(ed, "length_km", path))
        factor = float(ed.get("mobility_factor", 1.0))
        if length <= 0:
            raise InvariantViolation("edge length must be > 0", path=path)
        if not (0 < factor <= 1):
            raise InvariantViolation("mobility_factor must be in (0,1]", path=path)
        edges.append(TerrainEdge(src, dst, length, factor))
        if not ed.get("one_way", False):
            edges.append(TerrainEdge(dst, src, length, factor))
    # dedupe, keep the best factor per directed pair
    edge_map: dict[tuple[str, str], TerrainEdge] = {}
    for e in edges:
        cur = edge_map.get((e.src, e.dst))
        if cur is None or e.length / e.mobility_factor < cur.length / cur.mobility_factor:
            edge_map[(e.src, e.dst)] = e
    terrain = TerrainGraph(
        nodes=tuple(sorted(nodes, key=lambda n: n.id)),
        edges=tuple(sorted(edge_map.values(), key=lambda e: (e.src, e.dst))),
    )

    units = []
    for i, ud in enumerate(doc.get("units", [])):
        path = f"{source}/units[{i}]"
        loc = str(_req(ud, "location", path))
        if loc not in node_ids:
            raise DanglingReference(loc, path=path)
        u = Unit(
            id=str(_req(ud, "id", path)),
            allegiance=_enum(_req(ud, "allegiance", path), ALLEGIANCES, path),
            nation=str(ud.get("nation", "")),
            echelon=_enum(ud.get("echelon", "company"), ECHELONS, path),
            unit_type=str(ud.get("type", "infantry")),
            personnel=int(ud.get("personnel", 0)),
            systems=int(ud.get("systems", 0)),
            combat_power=float(ud.get("combat_power", 0.0)),
            speed=float(ud.get("speed_kmh", 0.0)),
            weapon_range=float(ud.get("weapon_range_km", 0.0)),
            support_range=float(ud.get("support_range_km", 0.0)),
            supply_level=float(ud.get("supply", 0.0)),
            location=loc,
            capabilities=tuple(sorted(str(c) for c in ud.get("capabilities", []))),
            roe=tuple(sorted(str(r) for r in ud.get("roe", []))),
            parent=str(ud["parent"]) if ud.get("parent") else None,
        )
        for fname in ("personnel", "systems", "combat_power", "supply_level"):
            if getattr(u, fname) < 0:
                raise InvariantViolation(f"{fname} must be >= 0", path=f"{path}/{fname}")
        if u.speed < 0 or u.weapon_range < 0 or u.support_range < 0:
            raise InvariantViolation("rates and ranges must be >= 0", path=path)
        units.append(u)
    unit_ids = {u.id for u in units}
    if len(unit_ids) != len(units):
        raise InvariantViolation("duplicate unit ids", path=f"{source}/units")
    for i, u in enumerate(units):
        if u.parent is not None and u.parent not in unit_ids:
            raise DanglingReference(u.parent, path=f"{source}/units[{i}]/parent")

    measures = []
    for i, md in enumerate(doc.get("control_measures", [])):
        path = f"{source}/control_measures[{i}]"
        node_set = tuple(sorted(str(n) for n in _req(md, "nodes", path)))
        if not node_set:
            raise InvariantViolation("node set must be nonempty", path=path)
        for nid in node_set:
            if nid not in node_ids:
                raise DanglingReference(nid, path=path)
        measures.append(ControlMeasure(
            id=str(_req(md, "id", path)),
            kind=_enum(_req(md, "kind", path), MEASURE_KINDS, path),
            node_set=node_set,
        ))
    measure_ids = {m.id for m in measures}

    goals = []
    for i, gd in enumerate(doc.get("goals", [])):
        path = f"{source}/goals[{i}]"
        executor = gd.get("executor")
        if executor is not None:
            executor = str(executor)
            if executor not in unit_ids:
                raise DanglingReference(executor, path=f"{path}/executor")
        target = gd.get("target")
        if target is not None:
            target = str(target)
            if target not in unit_ids and target not in measure_ids:
                raise DanglingReference(target, path=f"{path}/target")
        relations = []
        for j, rd in enumerate(gd.get("relations", [])):
            rpath = f"{path}/relations[{j}]"
            relations.append(TemporalRelation(
                other_goal_id=str(_req(rd, "goal", rpath)),
                relation=_enum(_req(rd, "relation", rpath), RELATIONS, rpath),
                offset=int(rd.get("offset_min", 0)),
            ))
        goals.append(GoalTask(
            id=str(_req(gd, "id", path)),
            task_type=str(_req(gd, "task", path)),
            intent=str(gd.get("intent", "")),
            executor=executor,
            target=target,
            temporal_relations=tuple(relations),
        ))
    goal_ids = {g.id for g in goals}
    if len(goal_ids) != len(goals):
        raise InvariantViolation("duplicate goal ids", path=f"{source}/goals")
    for i, g in enumerate(goals):
        for j, r in enumerate(g.temporal_relations):
            if r.other_goal_id not in goal_ids:
                raise DanglingReference(r.other_goal_id, path=f"{source}/goals[{i}]/relations[{j}]")

    scenario = Scenario(
        terrain=terrain,
        units=tuple(sorted(units, key=lambda u: u.id)),
        measures=tuple(sorted(measures, key=lambda m: m.id)),
        goals=tuple(sorted(goals, key=lambda g: g.id)),
        clock_origin=str(doc.get("clock_origin", "H")),
        name=str(doc.get("name", "")),
    )
    if not scenario.side_units("friendly"):
        raise InvariantViolation("scenario needs at least one friendly unit", path=source)
    if not scenario.goals:
        raise InvariantViolation("scenario needs at least one goal", path=source)
    return scenario


# ---------------------------------------------------------------------------
# serialization / digest


def scenario_to_dict(s: Scenario) -> dict:
    """Canonical dict form: stable ordering everywhere."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "clock_origin": s.clock_origin,
        "terrain": {
            "nodes": [
                {"id": n.id, "x": n.x, "y": n.y, "mobility": n.mobility_class}
                for n in s.terrain.nodes
            ],
            "edges": [
                {"from": e.src, "to": e.dst, "length_km": e.length,
                 "mobility_factor": e.mobility_factor, "one_way": True}
                for e in s.terrain.edges
            ],
        },
        "units": [
            {
                "id": u.id, "allegiance": u.allegiance, "nation": u.nation,
                "echelon": u.echelon, "type": u.unit_type,
                "personnel": u.personnel, "systems": u.systems,
                "combat_power": u.combat_power, "speed_kmh": u.speed,
                "weapon_range_km": u.weapon_range, "support_range_km": u.support_range,
                "supply": u.supply_level, "location": u.location,
                "capabilities": list(u.capabilities), "roe": list(u.roe),
                "parent": u.parent,
            }
            for u in s.units
        ],
        "control_measures": [
            {"id": m.id, "kind": m.kind, "nodes": list(m.node_set)} for m in s.measures
        ],
        "goals": [
            {
                "id": g.id, "task": g.task_type, "intent": g.intent,
                "executor": g.executor, "target": g.target,
                "relations": [
                    {"goal": r.other_goal_id, "relation": r.relation, "offset_min": r.offset}
                    for r in sorted(g.temporal_relations,
                                    key=lambda r: (r.other_goal_id, r.relation, r.offset))
                ],
            }
            for g in s.goals
        ],
    }


def serialize_scenario(s: Scenario) -> str:
    """Canonical machine form (JSON, sorted keys, stable bytes)."""
    return canonical_json(scenario_to_dict(s))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def scenario_digest(s: Scenario) -> str:
    return hashlib.sha256(serialize_scenario(s).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# validation


def validate_scenario(s: Scenario) -> list[Diagnostic]:
    """Diagnostics beyond hard load invariants; empty list means clean."""
    diags: list[Diagnostic] = []
    for i, u in enumerate(s.units):
        if u.combat_power == 0 and u.unit_type not in ("field-trains", "uav"):
            diags.append(Diagnostic(
                "warning", f"units[{i}]", f"unit {u.id} has zero combat power"))
    for i, g in enumerate(s.goals):
        if g.executor is not None:
            ex = s.unit(g.executor)
            if ex.speed == 0 and g.task_type.startswith("move"):
                diags.append(Diagnostic(
                    "warning", f"goals[{i}]",
                    f"immobile executor {ex.id} assigned to movement goal {g.id}"))
    diags.extend(_check_goal_relations(s))
    return diags


def _check_goal_relations(s: Scenario) -> list[Diagnostic]:
    """Detect contradictions among goal temporal relations with a throwaway STN."""
    from . import stn

    net = stn.TemporalNetwork()
    for g in s.goals:
        net.register_point(f"{g.id}.start")
        net.register_point(f"{g.id}.end")
        net.add_constraint(stn.STNConstraint(
            f"{g.id}.start", f"{g.id}.end", 0, stn.INF, label=f"{g.id} duration"))
    diags = []
    for i, g in enumerate(s.goals):
        for j, r in enumerate(g.temporal_relations):
            if r.relation == "starts_with":
                c = stn.STNConstraint(f"{r.other_goal_id}.start", f"{g.id}.start",
                                      r.offset, r.offset)
            elif r.relation == "starts_after_end_of":
                c = stn.STNConstraint(f"{r.other_goal_id}.end", f"{g.id}.start",
                                      r.offset, stn.INF)
            else:  # ends_before_start_of
                c = stn.STNConstraint(f"{g.id}.end", f"{r.other_goal_id}.start",
                                      r.offset, stn.INF)
            report = net.add_constraint(c)
            if report is not None:
                diags.append(Diagnostic(
                    "error", f"goals[{i}]/relations[{j}]",
                    f"temporal contradiction: {report}"))
    return diags
