"""Plan data model: activity forest, calendars, flags, ledgers, event log.

A Plan is the engine's sole product. Everything in it is plain data with
deterministic ordering so the canonical export is byte-stable; the STN and
references back to scenario/KB ride along for replanning but stay out of
the export.
"""

from __future__ import annotations

import hashlib
from bisect import insort
from dataclasses import dataclass, field, replace

from . import combat, stn
from .routing import Route
from .scenario import Scenario, canonical_json
from .kb import KnowledgeBase

PLAN_SCHEMA_VERSION = 1

FLAG_KINDS = (
    "over_commitment", "out_of_support_range", "supply_shortfall",
    "reposition_cue", "temporal_conflict", "anchor_unresolved",
)

TERRAIN_DEFENSE_FACTOR = {"open": 1.0, "restricted": 0.85, "severely_restricted": 0.7}


class PlanningError(Exception):
    """Hard planning failure (bad inputs, user-constraint contradiction)."""


@dataclass
class Activity:
    id: str
    task_type: str
    intent: str
    executor: str | None
    target: str | None
    parent: str | None
    seq: int
    depth: int
    chain_depth: int  # 1 action, 2 reaction, 3 counteraction
    provenance: str   # user_goal | expansion:<mid> | reaction:<rid> | counteraction:<rid>
    children: list[str] = field(default_factory=list)
    duration: int | None = None
    scheduled_start: int | None = None
    scheduled_end: int | None = None
    route: Route | None = None
    location: str | None = None
    flag_ids: list[str] = field(default_factory=list)
    pinned: bool = False

    @property
    def start_point(self) -> str:
        return f"{self.id}:s"

    @property
    def end_point(self) -> str:
        return f"{self.id}:e"

    @property
    def status(self) -> str:
        return "questionable" if self.flag_ids else "ok"

    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class CalendarEntry:
    activity_id: str
    start: int
    end: int
    exclusive: bool = True


@dataclass
class Flag:
    id: str
    kind: str
    activity_ids: tuple[str, ...]
    message: str
    suggested_remedy: dict | None = None
    accepted: bool = False


@dataclass(frozen=True)
class EditCommand:
    kind: str  # accept_flag | pin_activity | reassign_executor | delete_activity | change_intent
    target: str
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Overlay:
    """Accumulated user edits applied during a (re)plan run."""

    deleted: tuple[str, ...] = ()
    pins: tuple[tuple[str, int, int], ...] = ()          # (activity id, start, end)
    reassignments: tuple[tuple[str, str], ...] = ()      # (activity id, executor)
    intents: tuple[tuple[str, str], ...] = ()            # (activity id, intent)
    accepted_keys: tuple[tuple[str, str], ...] = ()      # (flag kind, task path)

    def to_dict(self) -> dict:
        return {
            "deleted": sorted(self.deleted),
            "pins": [list(p) for p in sorted(self.pins)],
            "reassignments": [list(p) for p in sorted(self.reassignments)],
            "intents": [list(p) for p in sorted(self.intents)],
            "accepted_keys": [list(p) for p in sorted(self.accepted_keys)],
        }

    @staticmethod
    def from_dict(d: dict) -> "Overlay":
        return Overlay(
            deleted=tuple(d.get("deleted", [])),
            pins=tuple((str(a), int(s), int(e)) for a, s, e in d.get("pins", [])),
            reassignments=tuple((str(a), str(u)) for a, u in d.get("reassignments", [])),
            intents=tuple((str(a), str(i)) for a, i in d.get("intents", [])),
            accepted_keys=tuple((str(k), str(p)) for k, p in d.get("accepted_keys", [])),
        )


@dataclass(frozen=True)
class PlanConfig:
    max_expansion_depth: int = 12
    period_length: int = 60
    attrition_model: str = "default"
    attrition_step_min: int = 6
    bypass_threshold: float = 0.3
    engage_threshold: float = 1.5
    main_body_ratio: float = 3.0
    default_attrit_fraction: float = 0.3
    resupply_threshold_min: int = 120
    support_mode: str = "euclidean"
    uav_transit_out: int = 30
    uav_endurance: int = 240
    uav_recovery: int = 60
    crm_tables: tuple[tuple[str, combat.CrmCoefficients], ...] = (
        ("default", combat.DEFAULT_CRM),
    )

    def __post_init__(self):
        if self.max_expansion_depth <= 0 or self.period_length <= 0:
            raise ValueError("depths and periods must be positive")
        if self.attrition_model not in dict(self.crm_tables):
            raise ValueError(f"no coefficient table for model {self.attrition_model!r}")

    @property
    def crm(self) -> combat.CrmCoefficients:
        return dict(self.crm_tables)[self.attrition_model]

    def to_dict(self) -> dict:
        return {
            "max_expansion_depth": self.max_expansion_depth,
            "period_length": self.period_length,
            "attrition_model": self.attrition_model,
            "attrition_step_min": self.attrition_step_min,
            "bypass_threshold": self.bypass_threshold,
            "engage_threshold": self.engage_threshold,
            "main_body_ratio": self.main_body_ratio,
            "default_attrit_fraction": self.default_attrit_fraction,
            "resupply_threshold_min": self.resupply_threshold_min,
            "support_mode": self.support_mode,
            "uav_transit_out": self.uav_transit_out,
            "uav_endurance": self.uav_endurance,
            "uav_recovery": self.uav_recovery,
            "crm_tables": {
                name: {
                    "id": t.id,
                    "attacker_rate_per_hour": t.attacker_rate_per_hour,
                    "defender_rate_per_hour": t.defender_rate_per_hour,
                    "ratio_curve": [list(k) for k in t.ratio_curve],
                    "posture": {
                        p: {"attacker": t.posture_attacker.get(p, 1.0),
                            "defender": t.posture_defender.get(p, 1.0)}
                        for p in sorted(set(t.posture_attacker) | set(t.posture_defender))
                    },
                    "culmination_fraction": t.culmination_fraction,
                    "destroy_threshold": t.destroy_threshold,
                    "defeat_threshold": t.defeat_threshold,
                }
                for name, t in self.crm_tables
            },
        }


def config_from_dict(doc: dict) -> PlanConfig:
    tables = [("default", combat.DEFAULT_CRM)]
    for name, td in sorted(doc.get("crm_tables", {}).items()):
        td = dict(td)
        td.setdefault("schema_version", 1)
        td.setdefault("id", name)
        tables = [t for t in tables if t[0] != name]
        tables.append((name, combat.crm_from_dict(td)))
    base = PlanConfig()
    return PlanConfig(
        max_expansion_depth=int(doc.get("max_expansion_depth", base.max_expansion_depth)),
        period_length=int(doc.get("period_length", base.period_length)),
        attrition_model=str(doc.get("attrition_model", base.attrition_model)),
        attrition_step_min=int(doc.get("attrition_step_min", base.attrition_step_min)),
        bypass_threshold=float(doc.get("bypass_threshold", base.bypass_threshold)),
        engage_threshold=float(doc.get("engage_threshold", base.engage_threshold)),
        main_body_ratio=float(doc.get("main_body_ratio", base.main_body_ratio)),
        default_attrit_fraction=float(doc.get("default_attrit_fraction", base.default_attrit_fraction)),
        resupply_threshold_min=int(doc.get("resupply_threshold_min", base.resupply_threshold_min)),
        support_mode=str(doc.get("support_mode", base.support_mode)),
        uav_transit_out=int(doc.get("uav", {}).get("transit_out", base.uav_transit_out)),
        uav_endurance=int(doc.get("uav", {}).get("endurance", base.uav_endurance)),
        uav_recovery=int(doc.get("uav", {}).get("recovery", base.uav_recovery)),
        crm_tables=tuple(sorted(tables)),
    )


class Plan:
    """Mutable during a planning run; treated as immutable afterwards."""

    def __init__(self, scenario: Scenario, kb: KnowledgeBase, config: PlanConfig,
                 scenario_digest: str, kb_digest: str, overlay: Overlay):
        self.scenario_digest = scenario_digest
        self.kb_digest = kb_digest
        self.config = config
        self.overlay = overlay
        self.activities: dict[str, Activity] = {}
        self.roots: list[str] = []
        self.net = stn.TemporalNetwork()
        self.calendars: dict[str, list[CalendarEntry]] = {}
        self.flags: dict[str, Flag] = {}
        self.attrition_ledger: list[dict] = []
        self.consumption_ledger: list[dict] = []
        self.events: list[dict] = []
        self.wargame = False  # run mode, set by the planner; not exported
        # working state (scenario/KB handles stay for replan; never exported)
        self._scenario = scenario
        self._kb = kb
        self._timelines: dict[str, list[tuple[int, str]]] = {
            u.id: [(0, u.location)] for u in scenario.units}
        self.unit_power: dict[str, float] = {u.id: u.combat_power for u in scenario.units}
        self.unit_supply: dict[str, float] = {u.id: u.supply_level for u in scenario.units}
        self._seq = 0
        self._flag_seq = 0

    # -- bookkeeping -------------------------------------------------------

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def log(self, event: str, **detail) -> None:
        self.events.append({"seq": len(self.events), "event": event, **detail})

    def add_flag(self, kind: str, activity_ids: tuple[str, ...], message: str,
                 remedy: dict | None = None) -> Flag:
        self._flag_seq += 1
        fid = f"F{self._flag_seq:04d}"
        key = self.flag_key(kind, activity_ids)
        flag = Flag(id=fid, kind=kind, activity_ids=activity_ids, message=message,
                    suggested_remedy=remedy,
                    accepted=key in set(self.overlay.accepted_keys))
        self.flags[fid] = flag
        for aid in activity_ids:
            if aid in self.activities and fid not in self.activities[aid].flag_ids:
                self.activities[aid].flag_ids.append(fid)
        self.log("flag", id=fid, kind=kind, activities=list(activity_ids),
                 message=message, accepted=flag.accepted)
        return flag

    def flag_key(self, kind: str, activity_ids: tuple[str, ...]) -> tuple[str, str]:
        """Stable identity for accepted-flag persistence across replans."""
        path = self.task_path(activity_ids[0]) if activity_ids else ""
        return (kind, path)

    def task_path(self, aid: str) -> str:
        parts = []
        cur = self.activities.get(aid)
        while cur is not None:
            parts.append(cur.task_type)
            cur = self.activities.get(cur.parent) if cur.parent else None
        return "/".join(reversed(parts))

    # -- queries -----------------------------------------------------------

    def leaves(self) -> list[Activity]:
        return [a for a in self.activities.values() if a.is_leaf()]

    def horizon(self) -> int:
        ends = [a.scheduled_end for a in self.activities.values()
                if a.scheduled_end is not None]
        return max(ends) if ends else 0

    def position_at(self, unit_id: str, t: int) -> str:
        timeline = self._timelines[unit_id]
        pos = timeline[0][1]
        for when, node in timeline:
            if when <= t:
                pos = node
            else:
                break
        return pos

    def record_move(self, unit_id: str, at: int, node: str) -> None:
        insort(self._timelines[unit_id], (at, node))

    def busy_intervals(self, unit_id: str) -> list[tuple[int, int]]:
        return sorted((e.start, e.end) for e in self.calendars.get(unit_id, [])
                      if e.exclusive and e.end > e.start)

    def add_calendar_entry(self, unit_id: str, entry: CalendarEntry) -> None:
        entries = self.calendars.setdefault(unit_id, [])
        entries.append(entry)
        entries.sort(key=lambda e: (e.start, e.end, e.activity_id))

    def anchor_rule(self, activity: Activity, which: str) -> str:
        t = self._kb.template(activity.task_type)
        return t.anchors.start if which == "start" else t.anchors.end

    # -- export ------------------------------------------------------------

    def to_dict(self) -> dict:
        acts = []
        for aid in sorted(self.activities):
            a = self.activities[aid]
            acts.append({
                "id": a.id, "task": a.task_type, "intent": a.intent,
                "executor": a.executor, "target": a.target,
                "parent": a.parent, "children": sorted(a.children),
                "depth": a.depth, "chain_depth": a.chain_depth,
                "provenance": a.provenance,
                "duration": a.duration,
                "start": a.scheduled_start, "end": a.scheduled_end,
                "window": _window_d(self.net, a.start_point),
                "end_window": _window_d(self.net, a.end_point),
                "route": list(a.route.nodes) if a.route else None,
                "route_km": a.route.total_length if a.route else None,
                "location": a.location,
                "flags": sorted(a.flag_ids),
                "status": a.status,
                "pinned": a.pinned,
            })
        return {
            "schema_version": PLAN_SCHEMA_VERSION,
            "scenario_digest": self.scenario_digest,
            "kb_digest": self.kb_digest,
            "config": self.config.to_dict(),
            "overlay": self.overlay.to_dict(),
            "roots": sorted(self.roots),
            "activities": acts,
            "calendars": {
                uid: [{"activity": e.activity_id, "start": e.start, "end": e.end,
                       "exclusive": e.exclusive} for e in entries]
                for uid, entries in sorted(self.calendars.items()) if entries
            },
            "flags": [
                {"id": f.id, "kind": f.kind, "activities": list(f.activity_ids),
                 "message": f.message, "remedy": f.suggested_remedy,
                 "accepted": f.accepted}
                for _, f in sorted(self.flags.items())
            ],
            "attrition_ledger": self.attrition_ledger,
            "consumption_ledger": self.consumption_ledger,
            "unit_state": {
                uid: {"power": self.unit_power[uid], "supply": self.unit_supply[uid],
                      "position_timeline": [list(p) for p in self._timelines[uid]]}
                for uid in sorted(self.unit_power)
            },
            "events": self.events,
        }


def _window_d(net: stn.TemporalNetwork, point: str):
    if not net.has_point(point):
        return None
    w = net.window(point)
    return [w.earliest, None if w.latest == stn.INF else w.latest]


def plan_digest(plan_dict: dict) -> str:
    body = {k: v for k, v in plan_dict.items() if k != "plan_digest"}
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()
