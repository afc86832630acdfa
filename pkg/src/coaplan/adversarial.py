"""Enemy reactions, friendly counteractions, two-sided wargaming and
security-element contact drills.

Action/reaction/counteraction chains cap at depth three: a reaction may
draw one counteraction and nothing reacts to a counteraction. Reactions
evaluate against scheduled reality (positions from routes, times from
calendars), never against intents.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import combat, stn
from .kb import ReactionRule, ReactionSpec
from .plan import TERRAIN_DEFENSE_FACTOR, Activity
from .scenario import ECHELON_RANK, Scenario, Unit


# ---------------------------------------------------------------------------
# reaction inference


def match_reaction_rules(plan, leaf: Activity, kb, scenario: Scenario
                         ) -> list[tuple[ReactionRule, Unit]]:
    """Rules triggered by this scheduled leaf, with the opposing unit that
    fires each one (deterministic pick: lowest echelon rank, then id)."""
    if leaf.executor is None or leaf.scheduled_start is None:
        return []
    actor = scenario.unit(leaf.executor)
    where = leaf.location or plan.position_at(actor.id, leaf.scheduled_start)
    out = []
    for rule in kb.reaction_rules():
        t = rule.trigger
        if leaf.task_type not in t.task_types:
            continue
        if t.acting_side not in ("any", actor.allegiance):
            continue
        candidates = []
        for u in scenario.units:
            if u.allegiance == actor.allegiance:
                continue
            if t.opposing_capability and t.opposing_capability not in u.capabilities:
                continue
            if plan.unit_power[u.id] <= 0:
                continue
            pos = plan.position_at(u.id, leaf.scheduled_start)
            dist = scenario.terrain.euclidean(pos, where)
            reach = t.range_km if t.range_attribute == "fixed" else getattr(u, t.range_attribute)
            if dist <= reach:
                candidates.append(u)
        if candidates:
            candidates.sort(key=lambda u: (ECHELON_RANK.get(u.echelon, 99), u.id))
            out.append((rule, candidates[0]))
    return out


def infer_reactions(planner, leaf: Activity) -> list[Activity]:
    """Create, expand and schedule reactions (and their counteractions) to a
    just-scheduled action leaf, through the engine's own mechanism."""
    created = []
    matches = match_reaction_rules(planner.plan, leaf, planner.kb, planner.scenario)
    for rule, reactor in matches:
        reaction = _spawn(planner, leaf, rule.reaction, executor=reactor.id,
                          aid=f"{leaf.id}~r.{rule.id}", chain_depth=2,
                          provenance=f"reaction:{rule.id}")
        if reaction is None:
            continue
        planner.plan.log("reaction", rule=rule.id, trigger=leaf.id,
                         activity=reaction.id, executor=reactor.id)
        created.append(reaction)
        if rule.counteraction is not None:
            counter = _spawn(planner, leaf, rule.counteraction,
                             executor=leaf.executor,
                             aid=f"{leaf.id}~c.{rule.id}", chain_depth=3,
                             provenance=f"counteraction:{rule.id}")
            if counter is not None:
                planner.plan.log("counteraction", rule=rule.id, trigger=leaf.id,
                                 activity=counter.id, executor=leaf.executor)
                created.append(counter)
    return created


def _spawn(planner, trigger: Activity, spec: ReactionSpec, *, executor: str,
           aid: str, chain_depth: int, provenance: str) -> Activity | None:
    target = None
    if spec.target == "acting_unit":
        # for a reaction the acting unit is the trigger's executor; for a
        # counteraction it is the unit the reaction came from -- both resolve
        # to whoever the spawned activity must affect
        target = trigger.executor if chain_depth == 2 else None
    act = planner._create_activity(
        aid=aid, task_type=spec.task_type, intent=spec.intent,
        executor=executor, target=target, parent=None,
        depth=0, chain_depth=chain_depth, provenance=provenance)
    if act is None:
        return None
    anchor = trigger.start_point if spec.after == "trigger_start" else trigger.end_point
    planner.plan.net.add_constraint(stn.STNConstraint(
        anchor, act.start_point, spec.delay_min, stn.INF,
        label=f"{aid} after {trigger.id}"))
    planner.plan.roots.append(act.id)
    planner._grow_tree(act)
    fresh = [aid for aid in planner._structural_leaf_order(act.id)
             if planner.plan.activities[aid].scheduled_start is None]
    planner._size_leaves(fresh)
    planner._pending.update(fresh)
    return act


def _subtree_leaves(plan, root: Activity):
    stack = [root.id]
    while stack:
        a = plan.activities[stack.pop()]
        if a.children:
            stack.extend(a.children)
        else:
            yield a


# ---------------------------------------------------------------------------
# two-sided wargaming


def wargame(scenario: Scenario, kb, config=None, overlay=None):
    """Plan both sides' goals and adjudicate cross-side engagements."""
    from . import engine

    return engine.plan(scenario, kb, config, overlay, wargame=True)


def detect_engagements(plan, kb) -> list[dict]:
    """Opposing contest-class leaves on the same node at overlapping times."""
    leaves = []
    for a in plan.leaves():
        if a.scheduled_start is None or a.executor is None or a.location is None:
            continue
        t = kb.template(a.task_type)
        if t.contests:
            leaves.append((a, t))
    found = []
    for i, (a, ta) in enumerate(leaves):
        side_a = plan._scenario.unit(a.executor).allegiance
        for b, tb in leaves[i + 1:]:
            if plan._scenario.unit(b.executor).allegiance == side_a:
                continue
            if a.location != b.location:
                continue
            lo = max(a.scheduled_start, b.scheduled_start)
            hi = min(a.scheduled_end, b.scheduled_end)
            if lo >= hi:
                continue
            first, second = sorted((a, b), key=lambda x: x.id)
            found.append({
                "node": a.location, "window": [lo, hi],
                "activities": [first.id, second.id],
            })
    found.sort(key=lambda e: (e["window"][0], e["activities"][0], e["activities"][1]))
    return found


def resolve_cross_engagements(planner) -> None:
    """Adjudicate every detected engagement in deterministic order."""
    plan = planner.plan
    scenario = planner.scenario
    for spot in detect_engagements(plan, planner.kb):
        a = plan.activities[spot["activities"][0]]
        b = plan.activities[spot["activities"][1]]
        attacker_leaf, defender_leaf = _attack_roles(planner.kb, a, b)
        attacker = scenario.unit(attacker_leaf.executor)
        defender = scenario.unit(defender_leaf.executor)
        ap = plan.unit_power[attacker.id]
        dp = plan.unit_power[defender.id]
        if ap <= 0 and dp <= 0:
            continue
        terrain_factor = TERRAIN_DEFENSE_FACTOR[
            scenario.terrain.node(spot["node"]).mobility_class]
        duration = spot["window"][1] - spot["window"][0]
        result = combat.resolve_engagement(
            combat.EngagementInput(
                attacker_power=ap, defender_power=dp,
                posture=planner.kb.template(attacker_leaf.task_type).posture,
                terrain_factor=terrain_factor,
                intent="destroy", max_duration=duration),
            planner.config.crm, step=planner.config.attrition_step_min)
        plan.unit_power[attacker.id] = ap * (1 - result.attacker_casualty_fraction)
        plan.unit_power[defender.id] = dp * (1 - result.defender_casualty_fraction)
        plan.attrition_ledger.append({
            "kind": "wargame_engagement", "node": spot["node"],
            "window": spot["window"], "activities": spot["activities"],
            "attacker": attacker.id, "defender": defender.id,
            "attacker_casualty_fraction": round(result.attacker_casualty_fraction, 6),
            "defender_casualty_fraction": round(result.defender_casualty_fraction, 6),
            "attacker_personnel_losses": round(attacker.personnel * result.attacker_casualty_fraction),
            "defender_personnel_losses": round(defender.personnel * result.defender_casualty_fraction),
            "attacker_system_losses": round(attacker.systems * result.attacker_casualty_fraction),
            "defender_system_losses": round(defender.systems * result.defender_casualty_fraction),
            "duration": result.duration, "outcome": result.outcome,
        })
        plan.log("wargame_engagement", node=spot["node"],
                 attacker=attacker.id, defender=defender.id,
                 activities=spot["activities"], outcome=result.outcome)


def _attack_roles(kb, a: Activity, b: Activity) -> tuple[Activity, Activity]:
    """Which leaf attacks: offensive posture beats defensive; ties go to the
    earlier start, then lexicographic id."""
    def offensive(x: Activity) -> bool:
        return kb.template(x.task_type).posture in ("hasty_attack", "deliberate_attack")

    if offensive(a) and not offensive(b):
        return a, b
    if offensive(b) and not offensive(a):
        return b, a
    key = lambda x: (x.scheduled_start, x.id)
    first, second = sorted((a, b), key=key)
    return first, second


# ---------------------------------------------------------------------------
# security-element contact decisions


@dataclass(frozen=True)
class ContactDecision:
    decision: str  # bypass | avoid | engage | assist_main_body
    basis: dict


ROE_NO_ENGAGE = ("weapons-hold", "no-engage")


def contact_decision(security_unit: Unit, detected_enemy: Unit, roe, config,
                     security_power: float | None = None,
                     enemy_power: float | None = None,
                     enemy_initial_power: float | None = None) -> ContactDecision:
    """Rule table for a security element on contact.

    Precedence: ROE prohibition -> avoid; enemy attrited under the bypass
    threshold -> bypass; enemy strong enough for the main body -> assist;
    favorable ratio (closed threshold) -> engage; otherwise avoid.
    """
    sp = security_power if security_power is not None else security_unit.combat_power
    ep = enemy_power if enemy_power is not None else detected_enemy.combat_power
    e0 = enemy_initial_power if enemy_initial_power is not None else detected_enemy.combat_power
    remaining = (ep / e0) if e0 > 0 else 0.0
    basis = {
        "security_power": sp, "enemy_power": ep,
        "enemy_remaining_fraction": round(remaining, 6),
        "roe": sorted(roe),
        "engage_threshold": config.engage_threshold,
        "main_body_ratio": config.main_body_ratio,
        "bypass_threshold": config.bypass_threshold,
    }
    if any(tag in roe for tag in ROE_NO_ENGAGE):
        return ContactDecision("avoid", {**basis, "rule": "roe-prohibits"})
    if remaining <= config.bypass_threshold:
        return ContactDecision("bypass", {**basis, "rule": "enemy-attrited"})
    if sp > 0 and ep / sp >= config.main_body_ratio:
        return ContactDecision("assist_main_body", {**basis, "rule": "main-body-criteria"})
    if ep > 0 and sp / ep >= config.engage_threshold:
        return ContactDecision("engage", {**basis, "rule": "favorable-ratio"})
    if ep == 0:
        return ContactDecision("bypass", {**basis, "rule": "enemy-attrited"})
    return ContactDecision("avoid", {**basis, "rule": "default-avoid"})


# subtasks generated per decision when the KB knows the task types;
# assist_main_body is the full four-action drill
CONTACT_ACTIONS = {
    "engage": (("direct-fire", "attrit"),),
    "assist_main_body": (
        ("direct-fire", "attrit"),
        ("recon-route", "recon"),       # route and point for the following security body
        ("recon-route", "recon"),       # candidate main-body attack routes
        ("secure-flank", "secure"),
    ),
}


def apply_contact_actions(planner, move_leaf: Activity, unit: Unit, enemy: Unit,
                          node: str, decision: ContactDecision) -> list[Activity]:
    actions = CONTACT_ACTIONS.get(decision.decision, ())
    created = []
    for i, (task_type, intent) in enumerate(actions):
        if not planner.kb.has_task(task_type):
            continue
        aid = f"{move_leaf.id}~x{i}.{task_type}"
        act = planner._create_activity(
            aid=aid, task_type=task_type, intent=intent, executor=unit.id,
            target=enemy.id if task_type == "direct-fire" else None,
            parent=None, depth=0, chain_depth=move_leaf.chain_depth,
            provenance=f"expansion:contact-drill.{decision.decision}")
        if act is None:
            continue
        planner.plan.net.add_constraint(stn.STNConstraint(
            move_leaf.end_point, act.start_point, 0, stn.INF,
            label=f"{aid} on contact"))
        planner.plan.roots.append(act.id)
        planner._grow_tree(act)
        fresh = [aid for aid in planner._structural_leaf_order(act.id)
                 if planner.plan.activities[aid].scheduled_start is None]
        planner._size_leaves(fresh)
        planner._pending.update(fresh)
        created.append(act)
    return created
