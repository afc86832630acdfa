"""Rule base: task templates, expansion methods, reaction rules.

Segments load in order; later segments shadow earlier ones by id, so a
per-nation user overlay can replace or extend the base segment without
touching it. Guards are declarative conjunctions over a fixed attribute
vocabulary, which keeps rules authorable by non-programmers and makes
linting decidable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .scenario import (
    Diagnostic,
    InvariantViolation,
    ParseError,
    canonical_json,
)

KB_SCHEMA_VERSION = 1

DURATION_MODELS = ("fixed", "rate_based", "engagement_driven")
EXECUTOR_BINDINGS = ("same", "subordinate", "role", "unbound")
TARGET_BINDINGS = ("same", "none")
POSTURES = ("hasty_attack", "deliberate_attack", "defend", "delay")


class KBError(ParseError):
    pass


@dataclass(frozen=True)
class DurationModel:
    kind: str  # fixed | rate_based | engagement_driven
    minutes: int = 0            # fixed
    quantity: float | str = 0   # rate_based; "route" pulls from routing
    rate: float | str = 0       # rate_based; units/hour, "speed" pulls unit speed
    fallback_minutes: int = 60  # engagement_driven without a live target


@dataclass(frozen=True)
class AnchorSpec:
    start: str = "self"  # task_type whose first leaf defines the semantic start
    end: str = "self"


@dataclass(frozen=True)
class TaskTemplate:
    task_type: str
    intents: tuple[str, ...] = ()
    functional_row: str = "maneuver"
    anchors: AnchorSpec = AnchorSpec()
    duration: DurationModel = DurationModel("fixed", minutes=60)
    consumption_rates: tuple[tuple[str, float], ...] = ()  # resource -> units/hour
    required_capabilities: tuple[str, ...] = ()
    contests: bool = False  # occupies ground: eligible for cross-side engagements
    requires_support: tuple[str, ...] = ()  # supporter capability tags to range-check
    posture: str = "deliberate_attack"
    coverage_check: bool = False  # run the continuous-coverage feasibility test


@dataclass(frozen=True)
class Guard:
    """Conjunction over intent, capability tags, nation, ROE tags, target kind."""

    intents: tuple[str, ...] = ()
    capabilities: tuple[str, ...] = ()  # executor must carry all
    nations: tuple[str, ...] = ()
    roe_includes: tuple[str, ...] = ()
    roe_excludes: tuple[str, ...] = ()
    target_kind: str = "any"  # unit | measure | none | any

    def passes(self, intent: str, capabilities: tuple[str, ...], nation: str,
               roe: tuple[str, ...], target_kind: str) -> bool:
        if self.intents and intent not in self.intents:
            return False
        if any(c not in capabilities for c in self.capabilities):
            return False
        if self.nations and nation not in self.nations:
            return False
        if any(tag not in roe for tag in self.roe_includes):
            return False
        if any(tag in roe for tag in self.roe_excludes):
            return False
        if self.target_kind != "any" and target_kind != self.target_kind:
            return False
        return True


@dataclass(frozen=True)
class SubtaskSpec:
    local_id: str
    task_type: str
    intent: str = ""
    executor_binding: str = "same"  # same | subordinate:<k> | role:<tag> | unbound
    target_binding: str = "same"    # same | none

    def binding_kind(self) -> str:
        return self.executor_binding.split(":", 1)[0]

    def binding_arg(self) -> str:
        parts = self.executor_binding.split(":", 1)
        return parts[1] if len(parts) == 2 else ""


@dataclass(frozen=True)
class InternalRelation:
    src: str  # "<local>.start" or "<local>.end"
    dst: str
    min_offset: float = 0
    max_offset: float = float("inf")


@dataclass(frozen=True)
class ExpansionMethod:
    id: str
    applies_to: str
    guard: Guard = Guard()
    priority: int = 0
    subtasks: tuple[SubtaskSpec, ...] = ()
    internal_relations: tuple[InternalRelation, ...] = ()
    provenance: str = "base"  # base | overlay:<nation>


@dataclass(frozen=True)
class ReactionTrigger:
    task_types: tuple[str, ...]
    acting_side: str = "any"  # friendly | enemy | any
    opposing_capability: str = ""
    range_attribute: str = "weapon_range"  # attribute of the opposing unit, km
    range_km: float = 0.0  # used when range_attribute == "fixed"


@dataclass(frozen=True)
class ReactionSpec:
    task_type: str
    intent: str = ""
    target: str = "acting_unit"  # acting_unit | none
    delay_min: int = 0
    after: str = "trigger_start"  # trigger_start | trigger_end


@dataclass(frozen=True)
class ReactionRule:
    id: str
    trigger: ReactionTrigger
    reaction: ReactionSpec
    counteraction: ReactionSpec | None = None
    priority: int = 0
    provenance: str = "base"


@dataclass(frozen=True)
class Segment:
    id: str
    nation: str = ""
    shadows: str = "base"
    templates: tuple[TaskTemplate, ...] = ()
    methods: tuple[ExpansionMethod, ...] = ()
    reactions: tuple[ReactionRule, ...] = ()


class KnowledgeBase:
    """Merged view over an ordered list of segments."""

    def __init__(self, segments: list[Segment]):
        self.segments = tuple(segments)
        self.templates: dict[str, TaskTemplate] = {}
        self.methods: dict[str, ExpansionMethod] = {}
        self.reactions: dict[str, ReactionRule] = {}
        for seg in segments:
            for t in seg.templates:
                self.templates[t.task_type] = t
            for m in seg.methods:
                self.methods[m.id] = m
            for r in seg.reactions:
                self.reactions[r.id] = r
        self._by_task: dict[str, list[ExpansionMethod]] = {}
        for m in self.methods.values():
            self._by_task.setdefault(m.applies_to, []).append(m)
        for lst in self._by_task.values():
            lst.sort(key=lambda m: (-m.priority, m.id))
        # subtasks must resolve against the merged template set
        for m in self.methods.values():
            for st in m.subtasks:
                if st.task_type not in self.templates:
                    raise KBError(
                        f"method {m.id}: subtask {st.local_id} references "
                        f"unknown task_type {st.task_type!r}")

    def template(self, task_type: str) -> TaskTemplate:
        return self.templates[task_type]

    def has_task(self, task_type: str) -> bool:
        return task_type in self.templates

    def methods_for(self, task_type: str) -> list[ExpansionMethod]:
        return list(self._by_task.get(task_type, []))

    def reaction_rules(self) -> list[ReactionRule]:
        return sorted(self.reactions.values(), key=lambda r: (-r.priority, r.id))


# ---------------------------------------------------------------------------
# loading


def load_kb_files(paths: list[str | Path]) -> KnowledgeBase:
    docs = []
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise KBError("file not found", path=str(p))
        docs.append((p.read_text(encoding="utf-8"), str(p)))
    return load_kb(docs)


def load_kb(documents: list[tuple[str, str] | str]) -> KnowledgeBase:
    """Parse rule files into a merged KB; later segments shadow earlier ones."""
    segments = []
    for i, doc in enumerate(documents):
        text, source = doc if isinstance(doc, tuple) else (doc, f"<segment {i}>")
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{source}:{mark.line + 1}" if mark else source
            raise KBError(f"cannot parse rule file: {exc}", path=where) from exc
        if not isinstance(raw, dict):
            raise KBError("rule file root must be a mapping", path=source)
        segments.append(segment_from_dict(raw, source))
    if not segments:
        raise KBError("no rule files given")
    return KnowledgeBase(segments)


def segment_from_dict(raw: dict, source: str = "<dict>") -> Segment:
    if raw.get("schema_version") != KB_SCHEMA_VERSION:
        raise KBError(f"unsupported schema_version {raw.get('schema_version')!r}",
                      path=source)
    head = raw.get("segment", {})
    seg_id = str(head.get("id", "base"))
    nation = str(head.get("nation") or "")
    provenance = "base" if seg_id == "base" else f"overlay:{nation or seg_id}"

    templates, seen = [], set()
    for i, td in enumerate(raw.get("templates", [])):
        path = f"{source}/templates[{i}]"
        task = str(_need(td, "task", path))
        if task in seen:
            raise KBError(f"duplicate task template {task!r}", path=path)
        seen.add(task)
        templates.append(_template_from_dict(task, td, path))

    methods, seen_m = [], set()
    for i, md in enumerate(raw.get("methods", [])):
        path = f"{source}/methods[{i}]"
        mid = str(_need(md, "id", path))
        if mid in seen_m:
            raise KBError(f"duplicate method id {mid!r}", path=path)
        seen_m.add(mid)
        methods.append(_method_from_dict(mid, md, provenance, path))

    reactions, seen_r = [], set()
    for i, rd in enumerate(raw.get("reactions", [])):
        path = f"{source}/reactions[{i}]"
        rid = str(_need(rd, "id", path))
        if rid in seen_r:
            raise KBError(f"duplicate reaction id {rid!r}", path=path)
        seen_r.add(rid)
        reactions.append(_reaction_from_dict(rid, rd, provenance, path))

    return Segment(
        id=seg_id, nation=nation, shadows=str(head.get("shadows", "base")),
        templates=tuple(templates), methods=tuple(methods), reactions=tuple(reactions),
    )


def _need(d: dict, key: str, path: str):
    if key not in d:
        raise KBError(f"missing required field {key!r}", path=path)
    return d[key]


def _template_from_dict(task: str, td: dict, path: str) -> TaskTemplate:
    dur = td.get("duration", {"model": "fixed", "minutes": 60})
    kind = dur.get("model", "fixed")
    if kind not in DURATION_MODELS:
        raise KBError(f"unknown duration model {kind!r}", path=path)
    minutes = int(dur.get("minutes", 60))
    if kind == "fixed" and minutes <= 0:
        raise KBError("fixed durations must be > 0", path=path)
    rates = []
    for res, rate in sorted(td.get("consumption", {}).items()):
        if float(rate) < 0:
            raise KBError(f"consumption rate for {res} must be >= 0", path=path)
        rates.append((str(res), float(rate)))
    anchors = td.get("anchors", {})
    posture = td.get("posture", "deliberate_attack")
    if posture not in POSTURES:
        raise KBError(f"unknown posture {posture!r}", path=path)
    return TaskTemplate(
        task_type=task,
        intents=tuple(sorted(str(x) for x in td.get("intents", []))),
        functional_row=str(td.get("row", "")),
        anchors=AnchorSpec(start=str(anchors.get("start", "self")),
                           end=str(anchors.get("end", "self"))),
        duration=DurationModel(
            kind=kind, minutes=minutes,
            quantity=dur.get("quantity", 0), rate=dur.get("rate", 0),
            fallback_minutes=int(dur.get("fallback_minutes", 60)),
        ),
        consumption_rates=tuple(rates),
        required_capabilities=tuple(sorted(str(x) for x in td.get("requires", []))),
        contests=bool(td.get("contests", False)),
        requires_support=tuple(sorted(str(x) for x in td.get("requires_support", []))),
        posture=posture,
        coverage_check=bool(td.get("coverage_check", False)),
    )


def _method_from_dict(mid: str, md: dict, provenance: str, path: str) -> ExpansionMethod:
    gd = md.get("guard", {})
    guard = Guard(
        intents=tuple(sorted(str(x) for x in gd.get("intent", []))),
        capabilities=tuple(sorted(str(x) for x in gd.get("capabilities", []))),
        nations=tuple(sorted(str(x) for x in gd.get("nation", []))),
        roe_includes=tuple(sorted(str(x) for x in gd.get("roe_includes", []))),
        roe_excludes=tuple(sorted(str(x) for x in gd.get("roe_excludes", []))),
        target_kind=str(gd.get("target_kind", "any")),
    )
    subtasks = []
    locals_seen = set()
    for j, sd in enumerate(md.get("subtasks", [])):
        spath = f"{path}/subtasks[{j}]"
        local = str(_need(sd, "local", spath))
        if local in locals_seen:
            raise KBError(f"duplicate subtask local id {local!r}", path=spath)
        locals_seen.add(local)
        binding = str(sd.get("executor", "same"))
        if binding.split(":", 1)[0] not in EXECUTOR_BINDINGS:
            raise KBError(f"unknown executor binding {binding!r}", path=spath)
        target = str(sd.get("target", "same"))
        if target not in TARGET_BINDINGS:
            raise KBError(f"unknown target binding {target!r}", path=spath)
        subtasks.append(SubtaskSpec(
            local_id=local,
            task_type=str(_need(sd, "task", spath)),
            intent=str(sd.get("intent", "")),
            executor_binding=binding,
            target_binding=target,
        ))
    if not subtasks:
        raise KBError("method needs at least one subtask", path=path)
    relations = []
    for j, rd in enumerate(md.get("relations", [])):
        rpath = f"{path}/relations[{j}]"
        src, dst = str(_need(rd, "from", rpath)), str(_need(rd, "to", rpath))
        for endpoint in (src, dst):
            local, _, point = endpoint.partition(".")
            if local not in locals_seen or point not in ("start", "end"):
                raise KBError(f"relation endpoint {endpoint!r} does not name a "
                              "declared subtask anchor", path=rpath)
        mn = rd.get("min", 0)
        mx = rd.get("max", None)
        relations.append(InternalRelation(
            src=src, dst=dst,
            min_offset=float(mn) if mn is not None else float("-inf"),
            max_offset=float(mx) if mx is not None else float("inf"),
        ))
    return ExpansionMethod(
        id=mid, applies_to=str(_need(md, "task", path)), guard=guard,
        priority=int(md.get("priority", 0)), subtasks=tuple(subtasks),
        internal_relations=tuple(relations), provenance=provenance,
    )


def _reaction_from_dict(rid: str, rd: dict, provenance: str, path: str) -> ReactionRule:
    td = _need(rd, "trigger", path)
    trigger = ReactionTrigger(
        task_types=tuple(sorted(str(x) for x in _need(td, "tasks", f"{path}/trigger"))),
        acting_side=str(td.get("side", "any")),
        opposing_capability=str(td.get("opposing_capability", "")),
        range_attribute=str(td.get("within", "weapon_range")),
        range_km=float(td.get("range_km", 0.0)),
    )
    reaction = _reaction_spec(_need(rd, "reaction", path))
    counter = rd.get("counteraction")
    return ReactionRule(
        id=rid, trigger=trigger, reaction=reaction,
        counteraction=_reaction_spec(counter) if counter else None,
        priority=int(rd.get("priority", 0)), provenance=provenance,
    )


def _reaction_spec(sd: dict) -> ReactionSpec:
    return ReactionSpec(
        task_type=str(sd["task"]),
        intent=str(sd.get("intent", "")),
        target=str(sd.get("target", "acting_unit")),
        delay_min=int(sd.get("delay_min", 0)),
        after=str(sd.get("after", "trigger_start")),
    )


# ---------------------------------------------------------------------------
# queries


def applicable_methods(kb: KnowledgeBase, activity, scenario) -> list[ExpansionMethod]:
    """Methods whose guards pass for this activity, ordered by
    (priority desc, id asc). Empty list marks the activity primitive."""
    if not kb.has_task(activity.task_type):
        raise KeyError(f"unknown task_type {activity.task_type!r}")
    executor = scenario.unit(activity.executor) if activity.executor else None
    caps = executor.capabilities if executor else ()
    nation = executor.nation if executor else ""
    roe = executor.roe if executor else ()
    target_kind = "none"
    if activity.target:
        target_kind = "unit" if scenario.has_unit(activity.target) else "measure"
    out = []
    for m in kb.methods_for(activity.task_type):
        if m.guard.passes(activity.intent, caps, nation, roe, target_kind):
            out.append(m)
    return out


# ---------------------------------------------------------------------------
# lint


def lint_kb(kb: KnowledgeBase) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    vocabulary = set()
    for t in kb.templates.values():
        vocabulary.update(t.required_capabilities)

    for t in sorted(kb.templates.values(), key=lambda t: t.task_type):
        if not t.functional_row:
            diags.append(Diagnostic(
                "error", f"templates/{t.task_type}",
                f"template {t.task_type!r} has no functional row"))
        for which, rule in (("start", t.anchors.start), ("end", t.anchors.end)):
            if rule not in ("self", "*") and rule not in kb.templates:
                diags.append(Diagnostic(
                    "warning", f"templates/{t.task_type}",
                    f"{which} anchor names unknown task class {rule!r}"))

    for m in sorted(kb.methods.values(), key=lambda m: m.id):
        missing = [c for c in m.guard.capabilities if c not in vocabulary]
        if missing:
            diags.append(Diagnostic(
                "warning", f"methods/{m.id}",
                f"unreachable method: guard requires capability tags "
                f"{missing} never declared by any template"))

    diags.extend(_lint_cycles(kb))
    return diags


def _lint_cycles(kb: KnowledgeBase) -> list[Diagnostic]:
    """Flag task-type decomposition cycles with no echelon-decreasing binding."""
    edges: dict[str, set[tuple[str, bool]]] = {}
    for m in kb.methods.values():
        for st in m.subtasks:
            descending = st.binding_kind() == "subordinate"
            edges.setdefault(m.applies_to, set()).add((st.task_type, descending))

    diags = []
    for start in sorted(edges):
        # DFS for cycles back to `start` where no hop descends an echelon;
        # state is (task, descended-yet) so mixed paths are not conflated
        stack = [(start, False)]
        seen: set[tuple[str, bool]] = set()
        flagged = False
        while stack and not flagged:
            node, any_desc = stack.pop()
            for nxt, desc in sorted(edges.get(node, ())):
                d = any_desc or desc
                if nxt == start and not d:
                    diags.append(Diagnostic(
                        "error", f"methods/{start}",
                        f"potential infinite expansion: {start!r} reaches itself "
                        "with no echelon-decreasing executor binding"))
                    flagged = True
                    break
                if (nxt, d) not in seen:
                    seen.add((nxt, d))
                    stack.append((nxt, d))
    return diags


# ---------------------------------------------------------------------------
# digest


def kb_to_dict(kb: KnowledgeBase) -> dict:
    def template_d(t: TaskTemplate):
        return {
            "task": t.task_type, "intents": list(t.intents), "row": t.functional_row,
            "anchors": {"start": t.anchors.start, "end": t.anchors.end},
            "duration": {
                "model": t.duration.kind, "minutes": t.duration.minutes,
                "quantity": t.duration.quantity, "rate": t.duration.rate,
                "fallback_minutes": t.duration.fallback_minutes,
            },
            "consumption": {k: v for k, v in t.consumption_rates},
            "requires": list(t.required_capabilities),
            "contests": t.contests,
            "requires_support": list(t.requires_support),
            "posture": t.posture,
            "coverage_check": t.coverage_check,
        }

    def method_d(m: ExpansionMethod):
        return {
            "id": m.id, "task": m.applies_to, "priority": m.priority,
            "provenance": m.provenance,
            "guard": {
                "intent": list(m.guard.intents),
                "capabilities": list(m.guard.capabilities),
                "nation": list(m.guard.nations),
                "roe_includes": list(m.guard.roe_includes),
                "roe_excludes": list(m.guard.roe_excludes),
                "target_kind": m.guard.target_kind,
            },
            "subtasks": [
                {"local": s.local_id, "task": s.task_type, "intent": s.intent,
                 "executor": s.executor_binding, "target": s.target_binding}
                for s in m.subtasks
            ],
            "relations": [
                {"from": r.src, "to": r.dst,
                 "min": None if r.min_offset == float("-inf") else r.min_offset,
                 "max": None if r.max_offset == float("inf") else r.max_offset}
                for r in m.internal_relations
            ],
        }

    def reaction_d(r: ReactionRule):
        out = {
            "id": r.id, "priority": r.priority, "provenance": r.provenance,
            "trigger": {
                "tasks": list(r.trigger.task_types), "side": r.trigger.acting_side,
                "opposing_capability": r.trigger.opposing_capability,
                "within": r.trigger.range_attribute, "range_km": r.trigger.range_km,
            },
            "reaction": _spec_d(r.reaction),
            "counteraction": _spec_d(r.counteraction) if r.counteraction else None,
        }
        return out

    def _spec_d(s: ReactionSpec):
        return {"task": s.task_type, "intent": s.intent, "target": s.target,
                "delay_min": s.delay_min, "after": s.after}

    return {
        "schema_version": KB_SCHEMA_VERSION,
        "templates": [template_d(kb.templates[k]) for k in sorted(kb.templates)],
        "methods": [method_d(kb.methods[k]) for k in sorted(kb.methods)],
        "reactions": [reaction_d(kb.reactions[k]) for k in sorted(kb.reactions)],
    }


def kb_digest(kb: KnowledgeBase) -> str:
    return hashlib.sha256(canonical_json(kb_to_dict(kb)).encode("utf-8")).hexdigest()
