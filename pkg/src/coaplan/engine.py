"""The interleaved planning loop: expand, propagate, route, schedule,
attrit, consume, react.

One planning job is strictly sequential; the interleaving order is part of
the semantics. Determinism comes from total orders everywhere: goals by
id, frontier breadth-first, leaves by (window start, creation sequence),
units by (echelon, id).
"""

from __future__ import annotations

import math

from . import adversarial, combat, kb as kbmod, routing, stn
from .plan import (
    Activity,
    CalendarEntry,
    EditCommand,
    Overlay,
    Plan,
    PlanConfig,
    PlanningError,
    TERRAIN_DEFENSE_FACTOR,
)
from .scenario import ECHELON_RANK, Scenario, Unit, scenario_digest, validate_scenario
from .kb import KnowledgeBase, applicable_methods, kb_digest, lint_kb

SUPPRESSIVE_INTENTS = ("suppress", "mask")


def plan(scenario: Scenario, kb: KnowledgeBase, config: PlanConfig | None = None,
         overlay: Overlay | None = None, wargame: bool = False) -> Plan:
    """Produce a complete plan for the scenario; pure in its inputs."""
    return Planner(scenario, kb, config or PlanConfig(), overlay or Overlay(),
                   wargame=wargame).run()


def replan(old: Plan, edits: list[EditCommand]) -> Plan:
    """Re-run the engine from the edited state; edits accumulate on the
    plan's overlay, so an empty list reproduces the plan exactly."""
    overlay = _merge_edits(old, edits)
    return Planner(old._scenario, old._kb, old.config, overlay,
                   wargame=old.wargame).run()


def _merge_edits(old: Plan, edits: list[EditCommand]) -> Overlay:
    deleted = set(old.overlay.deleted)
    pins = dict((a, (s, e)) for a, s, e in old.overlay.pins)
    reassign = dict(old.overlay.reassignments)
    intents = dict(old.overlay.intents)
    accepted = set(old.overlay.accepted_keys)
    for edit in edits:
        if edit.kind == "accept_flag":
            flag = old.flags.get(edit.target)
            if flag is None:
                raise PlanningError(f"edit references dead flag id {edit.target!r}")
            accepted.add(old.flag_key(flag.kind, flag.activity_ids))
            continue
        if edit.target not in old.activities:
            raise PlanningError(f"edit references dead activity id {edit.target!r}")
        if edit.kind == "pin_activity":
            start, end = int(edit.payload["start"]), int(edit.payload["end"])
            if end < start:
                raise PlanningError(f"pin for {edit.target} has end < start")
            pins[edit.target] = (start, end)
        elif edit.kind == "delete_activity":
            deleted.add(edit.target)
        elif edit.kind == "reassign_executor":
            executor = str(edit.payload["executor"])
            if not old._scenario.has_unit(executor):
                raise PlanningError(f"unknown executor {executor!r}")
            reassign[edit.target] = executor
        elif edit.kind == "change_intent":
            intents[edit.target] = str(edit.payload["intent"])
        else:
            raise PlanningError(f"unknown edit kind {edit.kind!r}")
    return Overlay(
        deleted=tuple(sorted(deleted)),
        pins=tuple(sorted((a, s, e) for a, (s, e) in pins.items())),
        reassignments=tuple(sorted(reassign.items())),
        intents=tuple(sorted(intents.items())),
        accepted_keys=tuple(sorted(accepted)),
    )


class Planner:
    def __init__(self, scenario: Scenario, kb: KnowledgeBase, config: PlanConfig,
                 overlay: Overlay, wargame: bool = False):
        self.scenario = scenario
        self.kb = kb
        self.config = config
        self.wargame = wargame
        lint_errors = [d for d in lint_kb(kb) if d.severity == "error"]
        if lint_errors:
            raise PlanningError("knowledge base fails lint: "
                                + "; ".join(d.message for d in lint_errors))
        hard = [d for d in validate_scenario(scenario) if d.severity == "error"]
        if hard:
            raise PlanningError("scenario invalid: " + "; ".join(d.message for d in hard))
        self.plan = Plan(scenario, kb, config,
                         scenario_digest(scenario), kb_digest(kb), overlay)
        self.plan.wargame = wargame
        self._pending: set[str] = set()  # unscheduled leaf ids
        # positions advance in sizing order; the timeline keyed by schedule
        # times is rebuilt at placement for position_at queries
        self._size_position: dict[str, str] = {u.id: u.location for u in scenario.units}

    # -- top level -----------------------------------------------------------

    def run(self) -> Plan:
        p = self.plan
        for goal in self.scenario.goals:  # canonical id order
            a = self._create_goal(goal)
            if a is not None:
                p.roots.append(a.id)
                self._grow_tree(a)
        self._install_goal_relations()
        self._collect_pending()
        self._schedule_all()
        if self.wargame:
            adversarial.resolve_cross_engagements(self)
        self._consumption_sweep()
        self._support_sweep()
        self._logistics_sweep()
        return p

    # -- activity creation ----------------------------------------------------

    def _create_goal(self, goal) -> Activity | None:
        intent = goal.intent
        executor = goal.executor
        if executor is None:
            executor = self._assign_goal_executor(goal)
        return self._create_activity(
            aid=goal.id, task_type=goal.task_type, intent=intent,
            executor=executor, target=goal.target, parent=None,
            depth=0, chain_depth=1, provenance="user_goal")

    def _assign_goal_executor(self, goal) -> str | None:
        if not self.kb.has_task(goal.task_type):
            raise PlanningError(f"goal {goal.id}: unknown task_type {goal.task_type!r}")
        required = set(self.kb.template(goal.task_type).required_capabilities)
        for u in _unit_order(self.scenario.side_units("friendly")):
            if required.issubset(set(u.capabilities)):
                self.plan.log("assign", activity=goal.id, executor=u.id, how="goal-default")
                return u.id
        return None

    def _create_activity(self, *, aid, task_type, intent, executor, target,
                         parent, depth, chain_depth, provenance) -> Activity | None:
        overlay = self.plan.overlay
        if aid in overlay.deleted:
            self.plan.log("suppressed", activity=aid, reason="deleted by edit")
            return None
        if not self.kb.has_task(task_type):
            raise PlanningError(f"activity {aid}: unknown task_type {task_type!r}")
        for a, u in overlay.reassignments:
            if a == aid:
                executor = u
        for a, i in overlay.intents:
            if a == aid:
                intent = i
        act = Activity(
            id=aid, task_type=task_type, intent=intent, executor=executor,
            target=target, parent=parent, seq=self.plan.next_seq(), depth=depth,
            chain_depth=chain_depth, provenance=provenance)
        self.plan.activities[aid] = act
        net = self.plan.net
        net.register_point(act.start_point)
        net.register_point(act.end_point)
        net.add_constraint(stn.STNConstraint(
            act.start_point, act.end_point, 0, stn.INF, label=f"{aid} nonneg duration"))
        if parent is not None:
            self.plan.activities[parent].children.append(aid)
        return act

    # -- expansion -------------------------------------------------------------

    def _grow_tree(self, root: Activity) -> None:
        """Breadth-first expansion of one subtree, then bottom-up anchor and
        cover constraints (vertical propagation)."""
        queue = [root.id]
        created_order = [root.id]
        while queue:
            aid = queue.pop(0)
            act = self.plan.activities[aid]
            children = self.expand_step(act)
            for c in children:
                created_order.append(c.id)
                queue.append(c.id)
        for aid in reversed(created_order):
            act = self.plan.activities[aid]
            if act.children:
                self._vertical_update(act)

    def expand_step(self, act: Activity) -> list[Activity]:
        """Apply the best applicable method; no method marks a primitive leaf."""
        methods = applicable_methods(self.kb, act, self.scenario)
        if not methods:
            self.plan.log("primitive", activity=act.id)
            return []
        if act.depth >= self.config.max_expansion_depth:
            chain = self.plan.task_path(act.id)
            raise PlanningError(
                f"expansion depth {self.config.max_expansion_depth} exceeded at {chain}")
        method = methods[0]
        children = []
        for sub in method.subtasks:
            executor, how = self._bind_executor(sub, act)
            target = act.target if sub.target_binding == "same" else None
            child = self._create_activity(
                aid=f"{act.id}/{sub.local_id}", task_type=sub.task_type,
                intent=sub.intent or act.intent, executor=executor, target=target,
                parent=act.id, depth=act.depth + 1, chain_depth=act.chain_depth,
                provenance=f"expansion:{method.id}")
            if child is None:
                continue
            if how != "same":
                self.plan.log("assign", activity=child.id, executor=executor, how=how)
            children.append(child)
        self.plan.log("expand", activity=act.id, method=method.id,
                      children=[c.id for c in children])
        self._install_internal_relations(act, method, children)
        return children

    def _bind_executor(self, sub: kbmod.SubtaskSpec, parent: Activity):
        kind = sub.binding_kind()
        if kind == "same":
            return parent.executor, "same"
        side = "friendly"
        if parent.executor is not None:
            side = self.scenario.unit(parent.executor).allegiance
        if kind == "subordinate":
            k = int(sub.binding_arg() or 1)
            subs = self.scenario.subordinates(parent.executor) if parent.executor else []
            if len(subs) >= k:
                return subs[k - 1].id, f"subordinate:{k}"
            return parent.executor, "same"  # no such subordinate: keep parent executor
        if kind == "role":
            tag = sub.binding_arg()
            for u in _unit_order(self.scenario.side_units(side)):
                if tag in u.capabilities:
                    return u.id, f"role:{tag}"
            return parent.executor, "same"
        # unbound: first same-side unit satisfying the subtask template
        required = set(self.kb.template(sub.task_type).required_capabilities)
        for u in _unit_order(self.scenario.side_units(side)):
            if required.issubset(set(u.capabilities)):
                return u.id, "unbound"
        return parent.executor, "same"

    def _install_internal_relations(self, act: Activity, method, children) -> None:
        alive = {c.id.rsplit("/", 1)[-1]: c for c in children}
        for rel in method.internal_relations:
            src_local, _, src_kind = rel.src.partition(".")
            dst_local, _, dst_kind = rel.dst.partition(".")
            if src_local not in alive or dst_local not in alive:
                continue  # endpoint suppressed by a delete edit
            src = alive[src_local]
            dst = alive[dst_local]
            c = stn.STNConstraint(
                src.start_point if src_kind == "start" else src.end_point,
                dst.start_point if dst_kind == "start" else dst.end_point,
                rel.min_offset, rel.max_offset,
                label=f"{act.id}: {rel.src} -> {rel.dst}")
            report = self.plan.net.add_constraint(c)
            if report is not None:
                self.plan.add_flag("temporal_conflict", (act.id,), str(report))

    def _vertical_update(self, act: Activity) -> None:
        point, resolved = stn.resolve_anchor(act, self.plan, "start")
        if not resolved:
            self.plan.add_flag(
                "anchor_unresolved", (act.id,),
                f"start anchor class {self.plan.anchor_rule(act, 'start')!r} matches "
                f"no descendant of {act.id}; using its own start")
        children = [self.plan.activities[c] for c in act.children]
        reports = stn.parent_window_update(self.plan.net, act, children, self.plan)
        for r in reports:
            self.plan.add_flag("temporal_conflict", (act.id,), str(r))

    # -- user goal relations ----------------------------------------------------

    def _install_goal_relations(self) -> None:
        # contradictions among the relations themselves abort the run
        hard = [d for d in validate_scenario(self.scenario)
                if d.severity == "error" and "temporal contradiction" in d.message]
        if hard:
            raise PlanningError("user goal relations are contradictory: "
                                + hard[0].message)
        for goal in self.scenario.goals:
            if goal.id not in self.plan.activities:
                continue
            a = self.plan.activities[goal.id]
            for rel in goal.temporal_relations:
                if rel.other_goal_id not in self.plan.activities:
                    continue
                b = self.plan.activities[rel.other_goal_id]
                report = stn.align_anchors(self.plan.net, a, b, rel.relation,
                                           rel.offset, self.plan)
                self.plan.log("align", a=a.id, b=b.id, relation=rel.relation,
                              offset=rel.offset, accepted=report is None)
                if report is not None:
                    # conflicts with expansion structure: flag, keep planning
                    self.plan.add_flag("temporal_conflict", (a.id, b.id), str(report))

    # -- scheduling ---------------------------------------------------------------

    def _collect_pending(self) -> None:
        for a in self.plan.leaves():
            if a.scheduled_start is None:
                self._pending.add(a.id)

    def _pick_next(self, candidates: set[str], which: str = "start") -> str:
        def key(i):
            a = self.plan.activities[i]
            point = a.start_point if which == "start" else a.end_point
            return (self.plan.net.window(point).earliest, a.seq)
        return min(candidates, key=key)

    def _schedule_all(self) -> None:
        ordered = []
        for gid in self._goal_order():
            if gid in self.plan.activities:
                ordered.extend(self._structural_leaf_order(gid))
        self._size_leaves([aid for aid in ordered if aid in self._pending])
        while self._pending:
            aid = self._pick_next(self._pending)
            self._pending.discard(aid)
            leaf = self.plan.activities[aid]
            self._place_leaf(leaf)
            if leaf.chain_depth == 1:
                adversarial.infer_reactions(self, leaf)
            self._contact_check(leaf)
        self._finalize_parents()

    def _goal_order(self) -> list[str]:
        """Goals topologically sorted by their temporal relations (ties and
        cycles fall back to id order)."""
        goals = [g.id for g in self.scenario.goals]
        after: dict[str, set[str]] = {g: set() for g in goals}
        for g in self.scenario.goals:
            for rel in g.temporal_relations:
                if rel.other_goal_id not in after:
                    continue
                if rel.relation == "starts_after_end_of":
                    after[g.id].add(rel.other_goal_id)
                elif rel.relation == "ends_before_start_of":
                    after[rel.other_goal_id].add(g.id)
        out, done = [], set()
        ready = sorted(g for g in goals if not after[g])
        while ready:
            g = ready.pop(0)
            out.append(g)
            done.add(g)
            newly = sorted(h for h in goals if h not in done and h not in ready
                           and h not in out and after[h] <= done)
            ready = sorted(set(ready) | set(newly))
        out.extend(sorted(g for g in goals if g not in done))  # relation cycles
        return out

    def _structural_leaf_order(self, root_id: str) -> list[str]:
        """Depth-first leaf order with siblings topologically sorted by the
        method's internal relations; this is the sizing order, so unit
        positions advance the way the method author sequenced the work."""
        act = self.plan.activities[root_id]
        if not act.children:
            return [root_id]
        order = self._sibling_order(act)
        out = []
        for cid in order:
            out.extend(self._structural_leaf_order(cid))
        return out

    def _sibling_order(self, parent: Activity) -> list[str]:
        children = list(parent.children)
        locals_of = {c: c.rsplit("/", 1)[-1] for c in children}
        method_id = None
        if children:
            prov = self.plan.activities[children[0]].provenance
            if prov.startswith("expansion:"):
                method_id = prov.split(":", 1)[1]
        method = self.kb.methods.get(method_id) if method_id else None
        if method is None:
            return children
        preds: dict[str, set[str]] = {c: set() for c in children}
        by_local = {v: k for k, v in locals_of.items()}
        for rel in method.internal_relations:
            src = by_local.get(rel.src.partition(".")[0])
            dst = by_local.get(rel.dst.partition(".")[0])
            if src and dst and src != dst and rel.min_offset >= 0:
                preds[dst].add(src)
        out: list[str] = []
        done: set[str] = set()
        pending = list(children)  # declaration order is the tie-break
        while pending:
            progressed = False
            for c in list(pending):
                if preds[c] <= done:
                    out.append(c)
                    done.add(c)
                    pending.remove(c)
                    progressed = True
            if not progressed:  # relation cycle: keep declaration order
                out.extend(pending)
                break
        return out

    def _size_leaves(self, leaf_ids) -> None:
        """Compute durations (routing/attrition included) and install them as
        constraints before anything is placed, so windows carry the full
        precedence structure."""
        for aid in leaf_ids:
            self._size_leaf(self.plan.activities[aid])

    def _size_leaf(self, leaf: Activity) -> None:
        self._compute_duration(leaf)
        d = leaf.duration
        net = self.plan.net
        pin = next(((s, e) for a, s, e in self.plan.overlay.pins if a == leaf.id), None)
        if pin is not None:
            s, e = pin
            d = e - s
            leaf.duration = d
            leaf.pinned = True
        report = net.add_constraint(stn.STNConstraint(
            leaf.start_point, leaf.end_point, d, d, label=f"{leaf.id} duration"))
        if report is not None:
            report = net.add_constraint(stn.STNConstraint(
                leaf.start_point, leaf.end_point, d, stn.INF,
                label=f"{leaf.id} min duration"))
            self.plan.add_flag("temporal_conflict", (leaf.id,),
                               f"duration {d} conflicts with temporal constraints")
        if pin is not None:
            for point, value in ((leaf.start_point, pin[0]), (leaf.end_point, pin[1])):
                rep = net.add_constraint(stn.STNConstraint(
                    stn.ORIGIN, point, value, value, label=f"{leaf.id} pin"))
                if rep is not None:
                    raise PlanningError(
                        f"pin on {leaf.id} is inconsistent with the plan: {rep}")

    def schedule_step(self, leaf: Activity) -> None:
        """Route, size, place and account one leaf; degrades to flags."""
        if leaf.duration is None:
            self._size_leaf(leaf)
        self._place_leaf(leaf)

    def _place_leaf(self, leaf: Activity) -> None:
        net = self.plan.net
        d = leaf.duration
        pin = next(((s, e) for a, s, e in self.plan.overlay.pins if a == leaf.id), None)
        window = net.window(leaf.start_point)
        earliest = int(math.ceil(window.earliest))
        busy = self.plan.busy_intervals(leaf.executor) if leaf.executor else []
        start = _earliest_free(earliest, d, busy)
        flagged_ids: tuple[str, ...] = ()
        if pin is not None:
            start = pin[0]
            overlapped = _overlapping(start, start + d, busy)
            if overlapped:
                flagged_ids = self._overlap_activities(leaf, start, start + d)
        elif start > window.latest:
            start = earliest  # keep the conflict visible in context
            flagged_ids = self._overlap_activities(leaf, start, start + d)
        if flagged_ids:
            self.plan.add_flag(
                "over_commitment", flagged_ids,
                f"{leaf.executor} is over-committed on {leaf.id}: no free slot of "
                f"{d} min inside its window")
        if pin is None:
            rep = net.add_constraint(stn.STNConstraint(
                stn.ORIGIN, leaf.start_point, start, start, label=f"{leaf.id} placed"))
            if rep is not None:
                self.plan.add_flag("temporal_conflict", (leaf.id,), str(rep))
        leaf.scheduled_start = start
        leaf.scheduled_end = start + d
        if leaf.location is None and leaf.executor:
            leaf.location = self.plan.position_at(leaf.executor, start)
        if leaf.executor:
            self.plan.add_calendar_entry(leaf.executor, CalendarEntry(
                activity_id=leaf.id, start=start, end=start + d))
        self.plan.log("schedule", activity=leaf.id, start=start, end=start + d,
                      executor=leaf.executor, flagged=bool(flagged_ids))
        self._after_placement(leaf)

    def _overlap_activities(self, leaf: Activity, s: int, e: int) -> tuple[str, ...]:
        ids = {leaf.id}
        for entry in self.plan.calendars.get(leaf.executor, []):
            if entry.exclusive and entry.end > entry.start and s < entry.end and entry.start < e:
                ids.add(entry.activity_id)
        return tuple(sorted(ids))

    def _after_placement(self, leaf: Activity) -> None:
        unit = self.scenario.unit(leaf.executor) if leaf.executor else None
        template = self.kb.template(leaf.task_type)
        # movement bookkeeping
        if leaf.route is not None and len(leaf.route.nodes) > 1 and unit is not None:
            self.plan.record_move(unit.id, leaf.scheduled_end, leaf.route.nodes[-1])
        # suppression blocks the target's calendar for the fire's duration
        if leaf.intent in SUPPRESSIVE_INTENTS and leaf.target \
                and self.scenario.has_unit(leaf.target) and leaf.scheduled_end > leaf.scheduled_start:
            before = self.plan.busy_intervals(leaf.target)
            overlapped = _overlapping(leaf.scheduled_start, leaf.scheduled_end, before)
            self.plan.add_calendar_entry(leaf.target, CalendarEntry(
                activity_id=leaf.id, start=leaf.scheduled_start, end=leaf.scheduled_end))
            self.plan.log("suppression", activity=leaf.id, target=leaf.target)
            if overlapped:
                ids = {leaf.id}
                for entry in self.plan.calendars[leaf.target]:
                    if entry.exclusive and entry.end > entry.start \
                            and leaf.scheduled_start < entry.end \
                            and entry.start < leaf.scheduled_end:
                        ids.add(entry.activity_id)
                self.plan.add_flag(
                    "over_commitment", tuple(sorted(ids)),
                    f"{leaf.target} is committed during suppression by {leaf.id}")
        # continuous coverage
        if template.coverage_check and unit is not None:
            self._coverage_check(leaf, unit)

    def _consumption_sweep(self) -> None:
        """Final-state consumption accounting in canonical (start, id) order
        so the ledger is independently recomputable."""
        for leaf in sorted(self.plan.leaves(),
                           key=lambda a: (a.scheduled_start, a.id)):
            if leaf.executor is None:
                continue
            template = self.kb.template(leaf.task_type)
            if not template.consumption_rates:
                continue
            unit_id = leaf.executor
            result = combat.consume(leaf.duration, template.consumption_rates,
                                    self.plan.unit_supply[unit_id])
            self.plan.unit_supply[unit_id] = result.remaining
            self.plan.consumption_ledger.append({
                "activity": leaf.id, "unit": unit_id,
                "deltas": {k: v for k, v in result.deltas},
                "total": result.total, "remaining": result.remaining,
                "shortfall": result.shortfall,
            })
            if result.shortfall:
                self.plan.add_flag(
                    "supply_shortfall", (leaf.id,),
                    f"{unit_id} runs out of supply during {leaf.id}")

    def _support_sweep(self) -> None:
        """Range-check every leaf needing support against final positions."""
        for leaf in sorted(self.plan.leaves(),
                           key=lambda a: (a.scheduled_start, a.id)):
            if leaf.executor is None:
                continue
            template = self.kb.template(leaf.task_type)
            if not template.requires_support:
                continue
            unit = self.scenario.unit(leaf.executor)
            where = leaf.location or self.plan.position_at(unit.id, leaf.scheduled_start)
            for tag in template.requires_support:
                supporters = [
                    u for u in _unit_order(self.scenario.side_units(unit.allegiance))
                    if u.support_range > 0 and tag in u.capabilities]
                if not supporters:
                    continue  # nothing on this side can provide it; not a range issue
                best = None
                for s in supporters:
                    pos = self.plan.position_at(s.id, leaf.scheduled_start)
                    check = routing.in_support_range(
                        s, where, self.scenario.terrain,
                        mode=self.config.support_mode, supporter_location=pos)
                    if best is None or check.distance < best[1].distance:
                        best = (s, check)
                supporter, check = best
                if not check.in_range:
                    self.plan.add_flag(
                        "out_of_support_range", (leaf.id,),
                        f"{supporter.id} ({tag}) is {check.distance:.1f} km from "
                        f"{leaf.id} at {where}, beyond its "
                        f"{supporter.support_range:.1f} km range")

    def _coverage_check(self, leaf: Activity, unit: Unit) -> None:
        cfg = self.config
        try:
            result = combat.coverage_feasible(
                unit.systems, cfg.uav_transit_out, cfg.uav_endurance, cfg.uav_recovery)
        except ValueError as exc:
            self.plan.add_flag("over_commitment", (leaf.id,), str(exc))
            return
        self.plan.log("coverage", activity=leaf.id, unit=unit.id,
                      feasible=result.feasible, min_uavs=result.min_uavs,
                      available=unit.systems)
        if not result.feasible:
            self.plan.add_flag(
                "over_commitment", (leaf.id,),
                f"continuous coverage needs {result.min_uavs} airframes, "
                f"{unit.id} has {unit.systems}")

    # -- durations / routing / attrition -------------------------------------------

    def _compute_duration(self, leaf: Activity) -> None:
        template = self.kb.template(leaf.task_type)
        unit = self.scenario.unit(leaf.executor) if leaf.executor else None
        model = template.duration
        if model.kind == "fixed":
            leaf.duration = model.minutes
            return  # location resolves at placement from the timeline
        if model.kind == "rate_based":
            if model.quantity == "route":
                self._route_duration(leaf, template, unit)
            else:
                rate = unit.speed if model.rate == "speed" and unit else float(model.rate or 1)
                qty = float(model.quantity or 0)
                leaf.duration = math.ceil(60.0 * qty / rate) if rate > 0 else 0
            return
        # engagement_driven
        self._engagement_duration(leaf, template, unit)

    def _current_position(self, unit: Unit) -> str:
        return self._size_position[unit.id]

    def _route_duration(self, leaf: Activity, template, unit: Unit | None) -> None:
        if unit is None or unit.speed <= 0:
            leaf.duration = 0
            leaf.location = self._current_position(unit) if unit else None
            if unit is not None:
                self.plan.log("route", activity=leaf.id, skipped="immobile executor")
            return
        origin = self._current_position(unit)
        dest = self._destination(leaf, origin)
        try:
            route = routing.shortest_path(self.scenario.terrain, unit, origin, dest)
        except routing.Unreachable as exc:
            raise PlanningError(
                f"{leaf.id}: {exc} (from component {sorted(exc.src_component)})") from exc
        leaf.route = route
        leaf.duration = route.duration
        leaf.location = dest
        self._size_position[unit.id] = dest
        self.plan.log("route", activity=leaf.id, frm=origin, to=dest,
                      km=route.total_length, minutes=route.duration)

    def _destination(self, leaf: Activity, origin: str) -> str:
        if leaf.target:
            if self.scenario.has_unit(leaf.target):
                return self.plan.position_at(leaf.target, 10 ** 9)
            return self.scenario.measure(leaf.target).node_set[0]
        # displacement move: nearest neighbor by id, or stay put when isolated
        neighbors = sorted(n for n, _ in self.scenario.terrain.neighbors(origin))
        return neighbors[0] if neighbors else origin

    def _engagement_duration(self, leaf: Activity, template, unit: Unit | None) -> None:
        target_unit = (self.scenario.unit(leaf.target)
                       if leaf.target and self.scenario.has_unit(leaf.target) else None)
        if unit is None or target_unit is None:
            leaf.duration = template.duration.fallback_minutes
            leaf.location = self._current_position(unit) if unit else None
            return
        defender_pos = self.plan.position_at(target_unit.id, 10 ** 9)
        terrain_factor = TERRAIN_DEFENSE_FACTOR[
            self.scenario.terrain.node(defender_pos).mobility_class]
        intent, attrit_fraction = _parse_intent(leaf.intent, self.config)
        attacker_power = self.plan.unit_power[unit.id]
        defender_power = self.plan.unit_power[target_unit.id]
        if attacker_power <= 0 and defender_power <= 0:
            leaf.duration = template.duration.fallback_minutes
            leaf.location = defender_pos
            return
        result = combat.resolve_engagement(
            combat.EngagementInput(
                attacker_power=attacker_power, defender_power=defender_power,
                posture=template.posture, terrain_factor=terrain_factor,
                intent=intent, attrit_fraction=attrit_fraction,
                max_duration=template.duration.fallback_minutes * 4),
            self.config.crm, step=self.config.attrition_step_min)
        leaf.duration = max(result.duration, 1)
        leaf.location = defender_pos
        self._apply_attrition(leaf, unit, target_unit, result, defender_pos)

    def _apply_attrition(self, leaf: Activity, attacker: Unit, defender: Unit,
                         result: combat.AttritionResult, node: str) -> None:
        a0 = self.plan.unit_power[attacker.id]
        d0 = self.plan.unit_power[defender.id]
        self.plan.unit_power[attacker.id] = a0 * (1 - result.attacker_casualty_fraction)
        self.plan.unit_power[defender.id] = d0 * (1 - result.defender_casualty_fraction)
        self.plan.attrition_ledger.append({
            "kind": "engagement", "activity": leaf.id, "node": node,
            "attacker": attacker.id, "defender": defender.id,
            "attacker_casualty_fraction": round(result.attacker_casualty_fraction, 6),
            "defender_casualty_fraction": round(result.defender_casualty_fraction, 6),
            "attacker_personnel_losses": round(attacker.personnel * result.attacker_casualty_fraction),
            "defender_personnel_losses": round(defender.personnel * result.defender_casualty_fraction),
            "attacker_system_losses": round(attacker.systems * result.attacker_casualty_fraction),
            "defender_system_losses": round(defender.systems * result.defender_casualty_fraction),
            "duration": result.duration, "outcome": result.outcome,
        })
        self.plan.log("engagement", activity=leaf.id, attacker=attacker.id,
                      defender=defender.id, outcome=result.outcome,
                      duration=result.duration)

    # -- movement-to-contact security drills ------------------------------------------

    def _contact_check(self, leaf: Activity) -> None:
        if leaf.route is None or leaf.executor is None:
            return
        unit = self.scenario.unit(leaf.executor)
        if "security" not in unit.capabilities:
            return
        enemies = [u for u in _unit_order(self.scenario.units)
                   if u.allegiance != unit.allegiance and self.plan.unit_power[u.id] > 0]
        for node in leaf.route.nodes:
            for enemy in enemies:
                if self.plan.position_at(enemy.id, leaf.scheduled_start) != node:
                    continue
                decision = adversarial.contact_decision(
                    unit, enemy, unit.roe, self.config,
                    security_power=self.plan.unit_power[unit.id],
                    enemy_power=self.plan.unit_power[enemy.id],
                    enemy_initial_power=enemy.combat_power)
                self.plan.log("contact", activity=leaf.id, unit=unit.id,
                              enemy=enemy.id, node=node,
                              decision=decision.decision, basis=decision.basis)
                adversarial.apply_contact_actions(self, leaf, unit, enemy, node, decision)
                return  # first contact on the route drives the drill

    # -- post passes ----------------------------------------------------------------

    def _finalize_parents(self) -> None:
        """Derive composite schedules from children (anchored start, covering end)."""
        for aid in sorted(self.plan.activities,
                          key=lambda i: -self.plan.activities[i].depth):
            act = self.plan.activities[aid]
            if act.is_leaf():
                continue
            children = [self.plan.activities[c] for c in act.children]
            point, resolved = stn.resolve_anchor(act, self.plan, "start")
            if resolved and point != act.start_point:
                owner = point.rsplit(":", 1)[0]
                anchor_act = self.plan.activities[owner]
                act.scheduled_start = anchor_act.scheduled_start
            else:
                act.scheduled_start = min(c.scheduled_start for c in children)
            act.scheduled_end = max(c.scheduled_end for c in children)
            act.scheduled_end = max(act.scheduled_end, act.scheduled_start)
            act.duration = act.scheduled_end - act.scheduled_start
            act.location = children[-1].location

    def _logistics_sweep(self) -> None:
        findings = routing.logistics_check(
            self.plan, self.scenario.terrain, self.scenario,
            self.config.resupply_threshold_min, self.config.period_length)
        for f in findings:
            if f.kind == "reposition_cue":
                self.plan.add_flag(
                    "reposition_cue", f.activity_ids,
                    f"resupply round trip for {f.unit_id} reaches {f.round_trip} min "
                    f"at H+{f.time}; reposition {f.trains_id} to {f.candidate_node} "
                    f"({f.candidate_round_trip} min)",
                    remedy={"kind": "reposition_trains", "trains": f.trains_id,
                            "node": f.candidate_node, "by": f.time})
            else:
                # restriction: support is out of reach and cannot be restored
                self.plan.add_flag(
                    "out_of_support_range", f.activity_ids,
                    f"{f.unit_id} outruns resupply at H+{f.time} and {f.trains_id} "
                    "cannot reposition in time; sustained operations restricted",
                    remedy={"kind": "restriction", "unit": f.unit_id, "at": f.time})


# ---------------------------------------------------------------------------
# helpers


def _unit_order(units) -> list[Unit]:
    return sorted(units, key=lambda u: (ECHELON_RANK.get(u.echelon, 99), u.id))


def _earliest_free(earliest: int, duration: int, busy: list[tuple[int, int]]) -> int:
    t = earliest
    for bs, be in busy:
        if t + duration <= bs:
            break
        if t < be:
            t = be
    return t


def _overlapping(s: int, e: int, busy: list[tuple[int, int]]) -> list[tuple[int, int]]:
    if e <= s:
        return []
    return [(bs, be) for bs, be in busy if s < be and bs < e]


def _parse_intent(intent: str, config: PlanConfig) -> tuple[str, float]:
    if intent.startswith("attrit"):
        _, _, frac = intent.partition(":")
        return "attrit", float(frac) if frac else config.default_attrit_fraction
    if intent in ("destroy", "defeat", "suppress", "mask"):
        return intent, config.default_attrit_fraction
    return "destroy", config.default_attrit_fraction


def utilization_report(p: Plan) -> dict[str, dict]:
    """Per-unit committed/idle minutes over the plan horizon; overlapping
    intervals count once."""
    horizon = max(p.horizon(), 0)
    report = {}
    for uid in sorted(p.unit_power):
        merged = _merge_intervals(
            [(e.start, min(e.end, horizon)) for e in p.calendars.get(uid, [])
             if e.exclusive and e.end > e.start and e.start < horizon])
        committed = sum(e - s for s, e in merged)
        idle = horizon - committed
        report[uid] = {
            "committed": committed,
            "idle": idle,
            "utilization": committed / horizon if horizon > 0 else 0.0,
        }
    return report


def _merge_intervals(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for s, e in sorted(intervals):
        if out and s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out
