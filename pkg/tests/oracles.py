"""Independent oracles for property and acceptance tests.

Everything here re-derives results from first principles (all-pairs
shortest paths, exhaustive sweeps, discrete-event simulation) without
calling the implementation paths it checks.
"""

from __future__ import annotations

import math

INF = float("inf")


# ---------------------------------------------------------------------------
# STN: all-pairs Floyd-Warshall over the same distance-graph encoding


def stn_oracle(points: list[str], constraints: list[tuple[str, str, float, float]],
               base_earliest: dict[str, float] | None = None):
    """Windows from scratch. Returns (windows dict, consistent bool).

    Encoding: constraint (src, dst, lo, hi) adds edge src->dst weight hi and
    dst->src weight -lo; every point also has point->origin weight
    -earliest0. Windows are [-d(p, Z), d(Z, p)].
    """
    origin = "@origin"
    ids = [origin] + list(points)
    idx = {p: i for i, p in enumerate(ids)}
    n = len(ids)
    d = [[INF] * n for _ in range(n)]
    for i in range(n):
        d[i][i] = 0.0
    base_earliest = base_earliest or {}

    def tighten(u, v, w):
        i, j = idx[u], idx[v]
        if w < d[i][j]:
            d[i][j] = w

    for p in points:
        tighten(p, origin, -base_earliest.get(p, 0))
    for src, dst, lo, hi in constraints:
        if hi < INF:
            tighten(src, dst, hi)
        if lo > -INF:
            tighten(dst, src, -lo)
    for k in range(n):
        dk = d[k]
        for i in range(n):
            dik = d[i][k]
            if dik == INF:
                continue
            row = d[i]
            for j in range(n):
                alt = dik + dk[j]
                if alt < row[j]:
                    row[j] = alt
    consistent = all(d[i][i] >= 0 for i in range(n))
    windows = {}
    if consistent:
        z = idx[origin]
        for p in points:
            i = idx[p]
            windows[p] = (-d[i][z], d[z][i])
    return windows, consistent


# ---------------------------------------------------------------------------
# routing: Bellman-Ford all-pairs on minute costs


def route_oracle(nodes, edges, speed):
    """dict (src, dst) -> exact minute cost, by repeated relaxation."""
    cost = {(a, b): INF for a in nodes for b in nodes}
    for a in nodes:
        cost[(a, a)] = 0.0
    direct = {}
    for src, dst, length, factor in edges:
        w = 60.0 * length / (speed * factor)
        direct[(src, dst)] = min(direct.get((src, dst), INF), w)
    for _ in range(len(nodes)):
        changed = False
        for (a, b), w in direct.items():
            for s in nodes:
                alt = cost[(s, a)] + w
                if alt < cost[(s, b)]:
                    cost[(s, b)] = alt
                    changed = True
        if not changed:
            break
    return cost


# ---------------------------------------------------------------------------
# coverage: discrete-event simulation of cycling airframes


def coverage_sim(n_uavs: int, transit_out: int, endurance: int, recovery: int,
                 sorties: int = 60) -> bool:
    """True iff n airframes can hold an unbroken presence over the target.

    Greedy dispatcher: each relief launches as late as it can while still
    arriving at the moment the airframe on station must leave. The state
    space is finite, so surviving `sorties` consecutive handoffs means the
    rotation is sustainable forever.
    """
    on_station = endurance - 2 * transit_out
    if on_station <= 0:
        raise ValueError("no on-station time")
    cycle = endurance + recovery
    if n_uavs < 1:
        return False
    ready = [0.0] * n_uavs
    launch = 0.0
    cover_end = launch + transit_out + on_station
    ready[0] = launch + cycle
    for _ in range(sorties):
        ready.sort()
        latest_launch = cover_end - transit_out
        if ready[0] > latest_launch:
            return False  # nobody can make the handoff: coverage gap
        launch = latest_launch
        cover_end = launch + transit_out + on_station
        ready[0] = launch + cycle
    return True


# ---------------------------------------------------------------------------
# utilization sweep-line


def utilization_oracle(intervals: list[tuple[int, int]], horizon: int) -> int:
    """Committed minutes in [0, horizon] counting overlaps once."""
    events = []
    for s, e in intervals:
        s, e = max(s, 0), min(e, horizon)
        if e > s:
            events.append((s, 1))
            events.append((e, -1))
    events.sort()
    busy = 0
    depth = 0
    last = 0
    for t, delta in events:
        if depth > 0:
            busy += t - last
        depth += delta
        last = t
    return busy


# ---------------------------------------------------------------------------
# plan scanner: post-hoc violation finder over an exported plan document


def _timelines(doc, scenario):
    lines = {}
    for u in scenario.units:
        entries = [(0, u.location)]
        for a in doc["activities"]:
            if a["children"] or a["executor"] != u.id:
                continue
            if a["route"] and len(a["route"]) > 1:
                entries.append((a["end"], a["route"][-1]))
        lines[u.id] = sorted(entries)
    return lines


def _position(lines, uid, t):
    pos = lines[uid][0][1]
    for when, node in lines[uid]:
        if when <= t:
            pos = node
        else:
            break
    return pos


def scan_plan(doc: dict, scenario, kb) -> list[tuple[str, tuple[str, ...]]]:
    """Re-derive every violation the engine must have flagged.

    Returns (kind, activity ids) tuples for: exclusive calendar overlaps,
    leaves outside their required supporters' range, and supply
    shortfalls recomputed from template rates.
    """
    violations: list[tuple[str, tuple[str, ...]]] = []

    # calendar overlap sweep
    for uid, entries in doc["calendars"].items():
        exclusive = [e for e in entries if e["exclusive"] and e["end"] > e["start"]]
        for i, a in enumerate(exclusive):
            for b in exclusive[i + 1:]:
                if a["start"] < b["end"] and b["start"] < a["end"]:
                    violations.append(
                        ("over_commitment", tuple(sorted({a["activity"], b["activity"]}))))

    leaves = [a for a in doc["activities"] if not a["children"]]
    lines = _timelines(doc, scenario)

    # support-range recheck
    for a in sorted(leaves, key=lambda x: (x["start"], x["id"])):
        if a["executor"] is None:
            continue
        template = kb.template(a["task"])
        if not template.requires_support:
            continue
        unit = scenario.unit(a["executor"])
        where = a["location"] or _position(lines, unit.id, a["start"])
        for tag in template.requires_support:
            supporters = [u for u in scenario.units
                          if u.allegiance == unit.allegiance
                          and u.support_range > 0 and tag in u.capabilities]
            if not supporters:
                continue
            best = None
            for s in supporters:
                pos = _position(lines, s.id, a["start"])
                dist = scenario.terrain.euclidean(pos, where)
                if best is None or dist < best[1]:
                    best = (s, dist)
            supporter, dist = best
            if dist > supporter.support_range:
                violations.append(("out_of_support_range", (a["id"],)))

    # supply ledger recompute
    supply = {u.id: u.supply_level for u in scenario.units}
    for a in sorted(leaves, key=lambda x: (x["start"], x["id"])):
        if a["executor"] is None:
            continue
        template = kb.template(a["task"])
        if not template.consumption_rates:
            continue
        hours = (a["end"] - a["start"]) / 60.0
        total = sum(rate * hours for _, rate in template.consumption_rates)
        remaining = supply[a["executor"]] - total
        if remaining < 0:
            violations.append(("supply_shortfall", (a["id"],)))
        supply[a["executor"]] = max(remaining, 0.0)

    return violations


def unflagged_violations(doc: dict, scenario, kb) -> list[tuple[str, tuple[str, ...]]]:
    """Violations found by scan_plan with no covering flag in the plan."""
    flags = doc["flags"]
    missing = []
    for kind, ids in scan_plan(doc, scenario, kb):
        covered = any(
            f["kind"] == kind and set(ids) <= set(f["activities"])
            for f in flags)
        if not covered:
            missing.append((kind, ids))
    return missing


# ---------------------------------------------------------------------------
# engagement intersection oracle (wargame)


def engagement_oracle(doc: dict, scenario, kb) -> set[tuple[str, str, str]]:
    """(node, activity a, activity b) for every opposing contest pair with
    co-located overlapping schedules."""
    leaves = []
    for a in doc["activities"]:
        if a["children"] or a["executor"] is None or a["location"] is None:
            continue
        if not kb.has_task(a["task"]) or not kb.template(a["task"]).contests:
            continue
        leaves.append(a)
    out = set()
    for i, a in enumerate(leaves):
        for b in leaves[i + 1:]:
            if scenario.unit(a["executor"]).allegiance == scenario.unit(b["executor"]).allegiance:
                continue
            if a["location"] != b["location"]:
                continue
            if min(a["end"], b["end"]) <= max(a["start"], b["start"]):
                continue
            first, second = sorted((a["id"], b["id"]))
            out.add((a["location"], first, second))
    return out


# ---------------------------------------------------------------------------
# provenance reachability (replan deletion)


def dependents_of(doc: dict, target: str) -> set[str]:
    """Activities that exist only because of `target`: its subtree plus the
    reaction/counteraction/drill chains spawned from inside it (spawned ids
    carry their trigger leaf id before the '~')."""
    children = {a["id"]: list(a["children"]) for a in doc["activities"]}

    def walk(root: str, acc: set[str]):
        stack = [root]
        while stack:
            aid = stack.pop()
            if aid in acc:
                continue
            acc.add(aid)
            stack.extend(children.get(aid, []))

    out: set[str] = set()
    walk(target, out)
    for a in doc["activities"]:
        base = a["id"].split("~", 1)[0]
        if base != a["id"] and base in out:
            walk(a["id"], out)
    return out
