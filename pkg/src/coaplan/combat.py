"""Conflict resolution: attrition, intent-driven durations, bypass,
consumption and UAV coverage feasibility.

The attrition model is a fixed-step ratio-response simulation. All numeric
content lives in a named, swappable coefficient table; nothing here claims
doctrinal fidelity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

INTENTS = ("destroy", "defeat", "attrit", "suppress", "mask")
OUTCOMES = ("defender_below_threshold", "duration_elapsed", "attacker_culminated")

# hard cap so open-ended engagements always terminate (minutes)
MAX_ENGAGEMENT_MIN = 30 * 24 * 60


@dataclass(frozen=True)
class CrmCoefficients:
    """One swappable coefficient table for the attrition model."""

    id: str
    attacker_rate_per_hour: float   # fraction of current power lost per hour at ratio 1
    defender_rate_per_hour: float
    ratio_curve: tuple[tuple[float, float], ...]  # monotone (ratio, multiplier) knots
    posture_attacker: dict[str, float]
    posture_defender: dict[str, float]
    culmination_fraction: float     # attacker culminates below this remaining fraction
    destroy_threshold: float        # defender remaining fraction counting as destroyed
    defeat_threshold: float

    def __post_init__(self):
        if self.attacker_rate_per_hour < 0 or self.defender_rate_per_hour < 0:
            raise ValueError("casualty rates must be >= 0")
        knots = self.ratio_curve
        if len(knots) < 2:
            raise ValueError("ratio curve needs at least two knots")
        for (r1, m1), (r2, m2) in zip(knots, knots[1:]):
            if r2 <= r1 or m2 < m1:
                raise ValueError("ratio curve must be strictly increasing in ratio "
                                 "and nondecreasing in multiplier")

    def ratio_multiplier(self, ratio: float) -> float:
        """Piecewise-linear response, clamped at the outer knots."""
        knots = self.ratio_curve
        if ratio <= knots[0][0]:
            return knots[0][1]
        if ratio >= knots[-1][0]:
            return knots[-1][1]
        for (r1, m1), (r2, m2) in zip(knots, knots[1:]):
            if ratio <= r2:
                return m1 + (m2 - m1) * (ratio - r1) / (r2 - r1)
        return knots[-1][1]


DEFAULT_CRM = CrmCoefficients(
    id="default",
    attacker_rate_per_hour=0.06,
    defender_rate_per_hour=0.10,
    ratio_curve=((0.25, 0.35), (0.5, 0.6), (1.0, 1.0), (2.0, 1.6), (4.0, 2.25)),
    posture_attacker={"hasty_attack": 1.25, "deliberate_attack": 1.0,
                      "defend": 0.8, "delay": 0.7},
    posture_defender={"hasty_attack": 0.9, "deliberate_attack": 1.0,
                      "defend": 0.75, "delay": 0.55},
    culmination_fraction=0.55,
    destroy_threshold=0.3,
    defeat_threshold=0.6,
)


def crm_from_dict(doc: dict) -> CrmCoefficients:
    if doc.get("schema_version") != 1:
        raise ValueError(f"unsupported coefficient schema_version {doc.get('schema_version')!r}")
    posture = doc.get("posture", {})
    return CrmCoefficients(
        id=str(doc.get("id", "custom")),
        attacker_rate_per_hour=float(doc["attacker_rate_per_hour"]),
        defender_rate_per_hour=float(doc["defender_rate_per_hour"]),
        ratio_curve=tuple((float(r), float(m)) for r, m in doc["ratio_curve"]),
        posture_attacker={k: float(v.get("attacker", 1.0)) for k, v in posture.items()},
        posture_defender={k: float(v.get("defender", 1.0)) for k, v in posture.items()},
        culmination_fraction=float(doc.get("culmination_fraction", 0.0)),
        destroy_threshold=float(doc.get("destroy_threshold", 0.3)),
        defeat_threshold=float(doc.get("defeat_threshold", 0.6)),
    )


@dataclass(frozen=True)
class EngagementInput:
    attacker_power: float
    defender_power: float
    posture: str = "deliberate_attack"
    terrain_factor: float = 1.0  # (0,1]; < 1 shields the defender
    intent: str = "destroy"
    attrit_fraction: float = 0.3  # target fraction for intent "attrit"
    max_duration: float = math.inf  # minutes

    def __post_init__(self):
        if self.attacker_power < 0 or self.defender_power < 0:
            raise ValueError("powers must be >= 0")
        if not (0 < self.terrain_factor <= 1):
            raise ValueError("terrain_factor must be in (0,1]")
        if self.intent == "attrit" and not (0 < self.attrit_fraction < 1):
            raise ValueError("attrit target fraction must be in (0,1)")


@dataclass(frozen=True)
class AttritionResult:
    attacker_casualty_fraction: float
    defender_casualty_fraction: float
    duration: int
    outcome: str
    trace: tuple[tuple[float, float, float], ...]  # (minute, attacker, defender)


def intent_threshold(intent: str, attrit_fraction: float, coeffs: CrmCoefficients) -> float | None:
    """Defender remaining fraction that satisfies the intent; None when the
    intent is not strength-driven (suppress/mask)."""
    if intent == "destroy":
        return coeffs.destroy_threshold
    if intent == "defeat":
        return coeffs.defeat_threshold
    if intent == "attrit":
        return 1.0 - attrit_fraction
    return None


def resolve_engagement(inp: EngagementInput, coeffs: CrmCoefficients,
                       step: int = 6) -> AttritionResult:
    """Fixed-step attrition simulation.

    Each step the defender loses step * rate * f(ratio) * posture * terrain
    of current strength and the attacker loses step * rate * f(1/ratio) *
    posture, with f the table's monotone ratio-response curve. Terminates
    on intent satisfaction, duration, or attacker culmination.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    if inp.attacker_power == 0 and inp.defender_power == 0:
        raise ValueError("at least one side needs nonzero power")

    a0, d0 = inp.attacker_power, inp.defender_power
    threshold = intent_threshold(inp.intent, inp.attrit_fraction, coeffs)
    if threshold is None:
        # suppression-class intents: full duration, no attrition either side
        dur = 0 if math.isinf(inp.max_duration) else int(inp.max_duration)
        return AttritionResult(0.0, 0.0, dur, "duration_elapsed",
                               trace=((0, a0, d0), (dur, a0, d0)) if dur else ((0, a0, d0),))

    pa = coeffs.posture_attacker.get(inp.posture, 1.0)
    pd = coeffs.posture_defender.get(inp.posture, 1.0)
    limit = min(inp.max_duration, MAX_ENGAGEMENT_MIN)

    a, d = a0, d0
    t = 0.0
    trace = [(0.0, a, d)]
    while True:
        if d0 == 0 or d / d0 <= threshold:
            outcome = "defender_below_threshold"
            break
        if t >= limit:
            outcome = "duration_elapsed"
            break
        if a0 > 0 and a / a0 < coeffs.culmination_fraction:
            outcome = "attacker_culminated"
            break
        dt = min(step, limit - t)
        hours = dt / 60.0
        if d > 0 and a > 0:
            r = a / d
            d_loss = d * coeffs.defender_rate_per_hour * coeffs.ratio_multiplier(r) \
                * pd * inp.terrain_factor * hours
            a_loss = a * coeffs.attacker_rate_per_hour * coeffs.ratio_multiplier(1.0 / r) \
                * pa * hours
        else:
            d_loss, a_loss = 0.0, 0.0  # one side powerless: stalemate
        floor = threshold * d0
        if d_loss > 0 and d - d_loss < floor:
            # truncate the final step at the exact threshold crossing, so
            # terminating runs land on the threshold with no overshoot
            theta = (d - floor) / d_loss
            d = floor
            a = max(a - min(a_loss * theta, a), 0.0)
            t += dt * theta
            trace.append((t, a, d))
            continue
        d = max(d - min(d_loss, d), 0.0)
        a = max(a - min(a_loss, a), 0.0)
        t += dt
        trace.append((t, a, d))
        if a_loss == 0.0 and d_loss == 0.0 and t < limit and math.isinf(limit):
            # nothing can change: avoid spinning on open-ended stalemates
            outcome = "duration_elapsed"
            break

    return AttritionResult(
        attacker_casualty_fraction=((a0 - a) / a0) if a0 > 0 else 0.0,
        defender_casualty_fraction=((d0 - d) / d0) if d0 > 0 else 0.0,
        duration=math.ceil(t - 1e-9) if t > 0 else 0,
        outcome=outcome,
        trace=tuple(trace),
    )


def attack_duration(intent: str, inp: EngagementInput, coeffs: CrmCoefficients,
                    step: int = 6) -> AttritionResult:
    """Duration at which the engagement first satisfies the intent; on
    culmination the partial result is returned unchanged."""
    if intent not in ("destroy", "defeat", "attrit"):
        raise ValueError(f"intent {intent!r} is not strength-driven")
    merged = EngagementInput(
        attacker_power=inp.attacker_power, defender_power=inp.defender_power,
        posture=inp.posture, terrain_factor=inp.terrain_factor,
        intent=intent, attrit_fraction=inp.attrit_fraction,
        max_duration=inp.max_duration,
    )
    return resolve_engagement(merged, coeffs, step=step)


def bypass_point(trace: tuple[tuple[float, float, float], ...], threshold: float) -> float | None:
    """First trace minute at which the defender's remaining fraction is at
    or below the threshold; None when never reached."""
    if not trace:
        return None
    d0 = trace[0][2]
    for t, _a, d in trace:
        frac = (d / d0) if d0 > 0 else 0.0
        if frac <= threshold:
            return t
    return None


# ---------------------------------------------------------------------------
# consumption


@dataclass(frozen=True)
class ConsumptionResult:
    deltas: tuple[tuple[str, float], ...]  # resource class -> units consumed
    total: float
    remaining: float  # clamped at 0
    shortfall: bool


def consume(duration_min: int, rates: tuple[tuple[str, float], ...],
            supply_level: float) -> ConsumptionResult:
    hours = duration_min / 60.0
    deltas = tuple((res, rate * hours) for res, rate in rates)
    total = sum(d for _, d in deltas)
    remaining = supply_level - total
    return ConsumptionResult(
        deltas=deltas, total=total,
        remaining=max(remaining, 0.0), shortfall=remaining < 0,
    )


# ---------------------------------------------------------------------------
# UAV coverage


@dataclass(frozen=True)
class CoverageResult:
    feasible: bool
    min_uavs: int
    on_station: int  # minutes per sortie actually over the target
    cycle: int       # minutes from launch to ready-again


def coverage_feasible(n_uavs: int, transit_out: int, endurance: int,
                      recovery: int) -> CoverageResult:
    """Closed-form continuous-coverage check for cycling airframes."""
    if min(n_uavs, transit_out, endurance, recovery) < 0:
        raise ValueError("all parameters must be >= 0")
    on_station = endurance - 2 * transit_out
    if on_station <= 0:
        raise ValueError(
            f"no on-station time: endurance {endurance} <= 2 x transit {transit_out}")
    cycle = endurance + recovery
    min_uavs = -(-cycle // on_station)  # ceil
    return CoverageResult(feasible=n_uavs >= min_uavs, min_uavs=int(min_uavs),
                          on_station=int(on_station), cycle=int(cycle))
