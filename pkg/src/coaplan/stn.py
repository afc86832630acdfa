"""Simple temporal network over activity anchor points.

Time points are identified by string ids. Every network has a virtual
origin point fixed at minute 0 (H-hour); windows are derived from
shortest-path distances to/from the origin in the usual distance-graph
encoding. Constraint adds are transactional: a rejected constraint leaves
the network bit-identical.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

INF = float("inf")
ORIGIN = "@origin"


@dataclass(frozen=True)
class Window:
    earliest: float
    latest: float

    def __post_init__(self):
        if self.earliest > self.latest:
            raise ValueError(f"window earliest {self.earliest} > latest {self.latest}")


@dataclass(frozen=True)
class STNConstraint:
    """to - from must lie in [min_offset, max_offset] (minutes)."""

    src: str
    dst: str
    min_offset: float = -INF
    max_offset: float = INF
    label: str = ""

    def __post_init__(self):
        if self.min_offset > self.max_offset:
            raise ValueError(
                f"constraint {self.label or (self.src, self.dst)}: "
                f"min_offset {self.min_offset} > max_offset {self.max_offset}"
            )


@dataclass(frozen=True)
class Inconsistency:
    """Report for a rejected constraint; names a negative-cycle witness."""

    constraint: STNConstraint
    cycle: tuple[str, ...]

    def __str__(self):
        return (
            f"temporal inconsistency adding {self.constraint.label or 'constraint'} "
            f"({self.constraint.src} -> {self.constraint.dst} "
            f"[{self.constraint.min_offset}, {self.constraint.max_offset}]): "
            f"negative cycle through {', '.join(self.cycle)}"
        )


class UnknownTimePoint(KeyError):
    pass


class TemporalNetwork:
    """Distance-graph STN with incremental queue-based propagation.

    Edge u->v with weight w encodes t_v - t_u <= w. latest(p) is the
    shortest distance origin->p, earliest(p) is -shortest(p->origin).
    Negative cycles are detected by relaxation counting during
    propagation; every registered point carries a finite lower bound to
    the origin, so any negative cycle reaches the origin and is caught.
    """

    def __init__(self):
        self._succ: dict[str, dict[str, float]] = {ORIGIN: {}}
        self._pred: dict[str, dict[str, float]] = {ORIGIN: {}}
        # latest[p] = d(origin -> p); toward[p] = d(p -> origin); earliest = -toward
        self._latest: dict[str, float] = {ORIGIN: 0}
        self._toward: dict[str, float] = {ORIGIN: 0}

    # -- introspection ----------------------------------------------------

    def points(self) -> list[str]:
        return [p for p in self._latest if p != ORIGIN]

    def has_point(self, pid: str) -> bool:
        return pid in self._latest

    def window(self, pid: str) -> Window:
        if pid not in self._latest:
            raise UnknownTimePoint(pid)
        return Window(earliest=-self._toward[pid], latest=self._latest[pid])

    def edges(self) -> list[tuple[str, str, float]]:
        out = []
        for u, nbrs in self._succ.items():
            for v, w in nbrs.items():
                out.append((u, v, w))
        out.sort(key=lambda e: (e[0], e[1]))
        return out

    def fingerprint(self) -> tuple:
        """Hashable full state; used to verify transactional rollback."""
        return (
            tuple(sorted(self._latest.items())),
            tuple(sorted(self._toward.items())),
            tuple(self.edges()),
        )

    # -- mutation ---------------------------------------------------------

    def register_point(self, pid: str, earliest: float = 0) -> None:
        """Add a time point constrained to >= `earliest` after the origin."""
        if pid in self._latest:
            return
        if earliest == -INF:
            raise ValueError("points need a finite lower bound for cycle detection")
        self._succ[pid] = {}
        self._pred[pid] = {}
        self._latest[pid] = INF
        self._toward[pid] = -earliest
        self._set_edge(pid, ORIGIN, -earliest, undo=None)

    def add_constraint(self, c: STNConstraint) -> Inconsistency | None:
        """Install c and propagate to fixpoint; reject on negative cycle.

        Returns None when accepted. On rejection the network state is
        rolled back exactly and the report carries a cycle witness.
        """
        for pid in (c.src, c.dst):
            if pid not in self._latest:
                raise UnknownTimePoint(pid)
        undo: list[tuple[int, str, str, float | None]] = []
        touched: list[tuple[str, str, float]] = []
        if c.max_offset < INF:
            if self._tighten_edge(c.src, c.dst, c.max_offset, undo):
                touched.append((c.src, c.dst, c.max_offset))
        if c.min_offset > -INF:
            if self._tighten_edge(c.dst, c.src, -c.min_offset, undo):
                touched.append((c.dst, c.src, -c.min_offset))
        if not touched:
            return None
        cycle = self._propagate(touched, undo)
        if cycle is not None:
            self._rollback(undo)
            return Inconsistency(constraint=c, cycle=cycle)
        return None

    # -- internals --------------------------------------------------------

    _EDGE, _LATEST, _TOWARD = 0, 1, 2

    def _set_edge(self, u: str, v: str, w: float, undo) -> None:
        if undo is not None:
            undo.append((self._EDGE, u, v, self._succ[u].get(v)))
        self._succ[u][v] = w
        self._pred[v][u] = w

    def _tighten_edge(self, u: str, v: str, w: float, undo) -> bool:
        cur = self._succ[u].get(v)
        if cur is not None and cur <= w:
            return False
        self._set_edge(u, v, w, undo)
        return True

    def _rollback(self, undo) -> None:
        for kind, a, b, old in reversed(undo):
            if kind == self._EDGE:
                if old is None:
                    del self._succ[a][b]
                    del self._pred[b][a]
                else:
                    self._succ[a][b] = old
                    self._pred[b][a] = old
            elif kind == self._LATEST:
                self._latest[a] = old
            else:
                self._toward[a] = old

    def _propagate(self, seeds, undo) -> tuple[str, ...] | None:
        """Relax latest/toward to fixpoint; return a cycle witness on failure."""
        n = len(self._latest)
        # forward: latest over successor edges
        queue = deque()
        for u, v, w in seeds:
            if self._latest[u] + w < self._latest[v]:
                undo.append((self._LATEST, v, "", self._latest[v]))
                self._latest[v] = self._latest[u] + w
                queue.append(v)
        counts: dict[str, int] = {}
        parent: dict[str, str] = {}
        while queue:
            u = queue.popleft()
            du = self._latest[u]
            for v, w in self._succ[u].items():
                if du + w < self._latest[v]:
                    undo.append((self._LATEST, v, "", self._latest[v]))
                    self._latest[v] = du + w
                    parent[v] = u
                    counts[v] = counts.get(v, 0) + 1
                    if counts[v] > n:
                        return self._witness(parent, v)
                    queue.append(v)
        # backward: toward (distance to origin) over successor edges in reverse
        queue = deque()
        for u, v, w in seeds:
            if w + self._toward[v] < self._toward[u]:
                undo.append((self._TOWARD, u, "", self._toward[u]))
                self._toward[u] = w + self._toward[v]
                queue.append(u)
        counts, parent = {}, {}
        while queue:
            v = queue.popleft()
            dv = self._toward[v]
            for u, w in self._pred[v].items():
                if w + dv < self._toward[u]:
                    undo.append((self._TOWARD, u, "", self._toward[u]))
                    self._toward[u] = w + dv
                    parent[u] = v
                    counts[u] = counts.get(u, 0) + 1
                    if counts[u] > n:
                        return self._witness(parent, u)
                    queue.append(u)
        # windows crossing means the bound through the origin went negative
        for p in self._latest:
            if -self._toward[p] > self._latest[p]:
                return self._witness_through(p)
        return None

    def _witness(self, parent, start) -> tuple[str, ...]:
        # walk far enough back to be inside the cycle, then collect it
        node = start
        for _ in range(len(self._latest)):
            node = parent.get(node, node)
        seen = []
        cur = node
        while cur not in seen:
            seen.append(cur)
            cur = parent.get(cur)
            if cur is None:
                break
        return tuple(sorted(set(seen)))

    def _witness_through(self, p) -> tuple[str, ...]:
        return tuple(sorted({ORIGIN, p}))


# ---------------------------------------------------------------------------
# Anchor resolution and alignment. These operate on plan-shaped objects:
# anything with .activities (id -> activity), activities carrying
# .children/.task_type/.start_point/.end_point/.seq, and a template lookup
# giving the anchor rule for a task type.


ANCHOR_SELF = "self"
ANCHOR_ANY = "*"


def resolve_anchor(activity, plan, which: str) -> tuple[str, bool]:
    """Return (time point id, resolved) for an activity's semantic start/end.

    The anchor rule names the derived-activity task class whose
    earliest-starting descendant leaf defines the parent's start (or end).
    A leaf resolves to itself; an unmatched rule degrades to the
    activity's own point with resolved=False so the caller can warn.
    """
    own = activity.start_point if which == "start" else activity.end_point
    if not activity.children:
        return own, True
    rule = plan.anchor_rule(activity, which)
    if rule == ANCHOR_SELF:
        return own, True
    best = None
    for leaf in _descendant_leaves(activity, plan):
        if rule != ANCHOR_ANY and leaf.task_type != rule:
            continue
        key = (plan.net.window(leaf.start_point).earliest, leaf.seq)
        if best is None or key < best[0]:
            best = (key, leaf)
    if best is None:
        return own, False
    leaf = best[1]
    return (leaf.start_point if which == "start" else leaf.end_point), True


def _descendant_leaves(activity, plan):
    stack = list(activity.children)
    while stack:
        aid = stack.pop()
        a = plan.activities[aid]
        if a.children:
            stack.extend(a.children)
        else:
            yield a


def align_anchors(net: TemporalNetwork, a, b, relation: str, offset: float, plan) -> Inconsistency | None:
    """Impose a user temporal relation between two activities' anchor points."""
    if relation == "starts_with":
        pa, _ = resolve_anchor(a, plan, "start")
        pb, _ = resolve_anchor(b, plan, "start")
        # a.start = b.start + offset
        c = STNConstraint(pb, pa, offset, offset, label=f"{a.id} starts_with {b.id}")
    elif relation == "starts_after_end_of":
        pa, _ = resolve_anchor(a, plan, "start")
        pb, _ = resolve_anchor(b, plan, "end")
        c = STNConstraint(pb, pa, offset, INF, label=f"{a.id} starts_after_end_of {b.id}")
    elif relation == "ends_before_start_of":
        pa, _ = resolve_anchor(a, plan, "end")
        pb, _ = resolve_anchor(b, plan, "start")
        c = STNConstraint(pa, pb, offset, INF, label=f"{a.id} ends_before_start_of {b.id}")
    else:
        raise ValueError(f"unknown temporal relation {relation!r}")
    return net.add_constraint(c)


def parent_window_update(net: TemporalNetwork, parent, children, plan) -> list[Inconsistency]:
    """Vertical propagation: parent end covers every child end, parent
    start equals the resolved start anchor."""
    reports = []
    for child in children:
        r = net.add_constraint(
            STNConstraint(child.end_point, parent.end_point, 0, INF,
                          label=f"{parent.id} covers {child.id}")
        )
        if r is not None:
            reports.append(r)
    anchor, resolved = resolve_anchor(parent, plan, "start")
    if anchor != parent.start_point:
        r = net.add_constraint(
            STNConstraint(anchor, parent.start_point, 0, 0,
                          label=f"{parent.id} start anchor")
        )
        if r is not None:
            reports.append(r)
    return reports
