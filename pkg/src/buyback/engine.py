"""The online buyback engine.

An arriving element is taken for free when it fits every constraint.
Otherwise each matroid names the cheapest member whose removal would make
room, and the newcomer is accepted only if its weight covers r times the
combined weight of those members; accepted-then-canceled elements are paid
back with a penalty of f times their weight. A greedy reformulation of the
same rule and the one-slot rule for general downward-closed systems live
here too, plus snapshot/restore so adversarial drivers can rewind a run.

All decisions use exact rational arithmetic. The one irrational quantity,
the ratio-minimizing threshold, is rounded *up* to a nearby rational so the
engine errs toward rejection and every penalty bound stays valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Union

from .errors import InputError, InvariantViolation, PreconditionError
from .instances import OPTIMAL, Instance
from .matroids import Element, Matroid

ACCEPT_FREE = "accept_free"
ACCEPT_EVICT = "accept_evict"
REJECT = "reject"


@dataclass(frozen=True)
class Decision:
    kind: str
    evicted: frozenset = frozenset()

    def __post_init__(self):
        if self.kind not in (ACCEPT_FREE, ACCEPT_EVICT, REJECT):
            raise InputError(f"unknown decision kind {self.kind!r}")
        if self.kind == ACCEPT_EVICT and not self.evicted:
            raise InputError("an evicting acceptance must name its victims")
        if self.kind != ACCEPT_EVICT and self.evicted:
            raise InputError(f"{self.kind} cannot carry evictions")

    @property
    def accepted(self) -> bool:
        return self.kind != REJECT


@dataclass(frozen=True)
class StepRecord:
    """One processed element, with the per-matroid evidence captured at decision time.

    `circuits[j]` is the circuit the newcomer closed in matroid j (None when it
    fit there), and `evict_targets[j]` the cheapest repair for it; both are
    filled by the per-matroid variant and empty for the greedy variant.
    Auditors consume these rather than re-deriving them from state history.
    """

    step: int
    element_id: int
    weight: Fraction
    decision: Decision
    evict_targets: tuple = ()
    circuits: tuple = ()


def optimal_r(k: int, f) -> float:
    """Threshold minimizing the worst-case ratio: (1+f) * (1 + sqrt(1 - 1/(k(1+f))))."""
    if k < 1:
        raise InputError("k must be at least 1")
    f = float(f)
    if f < 0:
        raise InputError("f must be nonnegative")
    return (1.0 + f) * (1.0 + math.sqrt(1.0 - 1.0 / (k * (1.0 + f))))


def optimal_r_rational(k: int, f) -> Fraction:
    """Rational upper approximation of optimal_r within 1e-12, rounded up.

    Rounding up keeps the acceptance rule conservative: a slightly larger r
    only makes the engine reject more, which preserves the penalty bounds.
    """
    if k < 1:
        raise InputError("k must be at least 1")
    ff = Fraction(f)
    if ff < 0:
        raise InputError("f must be nonnegative")
    one_plus_f = 1 + ff
    inner = 1 - Fraction(1, k * one_plus_f)
    scale = 10 ** 12 * (int(one_plus_f) + 1)
    a, b = inner.numerator, inner.denominator
    target = a * b * scale * scale
    s = math.isqrt(target)
    if s * s < target:
        s += 1
    root_upper = Fraction(s, b * scale)  # >= sqrt(inner), off by <= 1/scale
    return one_plus_f * (1 + root_upper)


def competitive_ratio(k: int, f, r):
    """Worst-case OPT-to-utility ratio (k*r - 1)*r / (r - 1 - f); needs r > 1 + f.

    Exact when called with Fractions, float when called with floats.
    """
    if k < 1:
        raise InputError("k must be at least 1")
    if not r > 1 + f:
        raise InputError(f"competitive ratio requires r > 1 + f (r={r}, f={f})")
    return (k * r - 1) * r / (r - 1 - f)


def optimal_competitive_ratio(k: int, f) -> float:
    """Closed form of the minimized ratio: k(1+f) * (1 + sqrt(1 - 1/(k(1+f))))^2."""
    if k < 1:
        raise InputError("k must be at least 1")
    f = float(f)
    return k * (1.0 + f) * (1.0 + math.sqrt(1.0 - 1.0 / (k * (1.0 + f)))) ** 2


@dataclass(frozen=True)
class Params:
    k: int
    f: Fraction
    r: Fraction
    r_mode: str = "explicit"  # "explicit" | "optimal"

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be at least 1")
        object.__setattr__(self, "f", Fraction(self.f))
        object.__setattr__(self, "r", Fraction(self.r))
        if self.f < 0:
            raise InputError("f must be nonnegative")
        if self.r < 1:
            raise InputError("r must be at least 1")

    @staticmethod
    def for_instance(instance: Instance) -> "Params":
        if instance.threshold_r == OPTIMAL:
            return Params(instance.k, instance.penalty_f,
                          optimal_r_rational(instance.k, instance.penalty_f), "optimal")
        return Params(instance.k, instance.penalty_f, instance.threshold_r)


@dataclass(frozen=True)
class Snapshot:
    owner_id: int
    step: int
    current: frozenset
    weights: tuple
    accepted: tuple
    canceled: tuple
    trace: tuple
    seen: frozenset


class BuybackRun:
    """One online run over a fixed list of constraint oracles.

    variant "alg1" repairs each matroid independently (cheapest member per
    circuit); variant "alg2" re-greedies the held set plus the newcomer.
    A run is single-threaded and owns its state; the oracle list is shared
    and immutable. Tie-breaking is by element id throughout, so the run is
    a deterministic function of the presented stream, which is what lets
    snapshot/restore drive rewind-style probing.
    """

    VARIANTS = ("alg1", "alg2")

    def __init__(self, matroids, params: Params, variant: str = "alg1"):
        matroids = list(matroids)
        if len(matroids) != params.k:
            raise InputError(f"params.k={params.k} but {len(matroids)} matroids supplied")
        if variant not in self.VARIANTS:
            raise InputError(f"unknown variant {variant!r}")
        self.matroids = matroids
        self.params = params
        self.variant = variant
        self.current: set = set()
        self.weights: dict = {}
        self.accepted: list = []
        self.canceled: list = []
        self.trace: list = []
        self.step = 0
        self._seen: set = set()

    # -- state inspection ---------------------------------------------------

    def held_weight(self) -> Fraction:
        return sum((self.weights[e] for e in self.current), Fraction(0))

    def utility(self) -> Fraction:
        """Accepted weight minus (1+f) times canceled weight, exactly."""
        gained = sum((self.weights[e] for e in self.accepted), Fraction(0))
        lost = sum((self.weights[e] for e in self.canceled), Fraction(0))
        return gained - (1 + self.params.f) * lost

    def penalty_total(self) -> Fraction:
        return self.params.f * sum((self.weights[e] for e in self.canceled), Fraction(0))

    # -- snapshot / restore ---------------------------------------------------

    def snapshot(self) -> Snapshot:
        return Snapshot(id(self), self.step, frozenset(self.current),
                        tuple(self.weights.items()), tuple(self.accepted),
                        tuple(self.canceled), tuple(self.trace), frozenset(self._seen))

    def restore(self, snap: Snapshot) -> None:
        if snap.owner_id != id(self):
            raise InputError("snapshot belongs to a different run")
        self.step = snap.step
        self.current = set(snap.current)
        self.weights = dict(snap.weights)
        self.accepted = list(snap.accepted)
        self.canceled = list(snap.canceled)
        self.trace = list(snap.trace)
        self._seen = set(snap.seen)

    # -- the online step ------------------------------------------------------

    def process(self, element: Element) -> Decision:
        if element.id in self._seen:
            raise InputError(f"element {element.id} was already presented")
        self._seen.add(element.id)
        self.weights[element.id] = element.weight
        self.step += 1

        try:
            if self.variant == "alg1":
                decision, targets, circuits = self._decide_per_matroid(element)
            else:
                decision, targets, circuits = self._decide_greedy(element)
        except PreconditionError as exc:
            raise InvariantViolation(f"held set dependent on entry: {exc}") from exc

        if decision.kind == ACCEPT_FREE:
            self.current.add(element.id)
            self.accepted.append(element.id)
        elif decision.kind == ACCEPT_EVICT:
            self.current.add(element.id)
            self.current -= decision.evicted
            self.accepted.append(element.id)
            self.canceled.extend(sorted(decision.evicted))

        for m in self.matroids:
            if not m.is_independent(self.current):
                raise InvariantViolation(
                    f"held set became dependent in {m!r} after element {element.id}")

        self.trace.append(StepRecord(self.step, element.id, element.weight,
                                     decision, targets, circuits))
        return decision

    def _decide_per_matroid(self, element):
        circuits = tuple(m.circuit(self.current, element.id) for m in self.matroids)
        if all(c is None for c in circuits):
            return Decision(ACCEPT_FREE), (None,) * self.params.k, circuits

        targets = []
        loop = False
        for c in circuits:
            if c is None:
                targets.append(None)
            elif c == frozenset({element.id}):
                loop = True  # singleton-dependent newcomer: nothing can make room
                targets.append(None)
            else:
                targets.append(min(c - {element.id},
                                   key=lambda x: (self.weights[x], x)))
        targets = tuple(targets)
        if loop:
            return Decision(REJECT), targets, circuits

        # the threshold sum is per matroid: an element named twice counts twice
        evict_cost = sum((self.weights[t] for t in targets if t is not None), Fraction(0))
        if element.weight >= self.params.r * evict_cost:
            victims = frozenset(t for t in targets if t is not None)
            return Decision(ACCEPT_EVICT, victims), targets, circuits
        return Decision(REJECT), targets, circuits

    def _decide_greedy(self, element):
        pool = self.current | {element.id}
        if all(m.is_independent(pool) for m in self.matroids):
            return Decision(ACCEPT_FREE), (), ()

        kept: set = set()
        for eid in sorted(pool, key=lambda x: (-self.weights[x], x)):
            candidate = kept | {eid}
            if all(m.is_independent(candidate) for m in self.matroids):
                kept = candidate
        dropped = pool - kept

        if element.id not in kept:
            # greedy would drop the newcomer itself; taking it would mean
            # paying its own cancellation, so this is a plain rejection
            return Decision(REJECT), (), ()
        evict_cost = sum((self.weights[d] for d in dropped), Fraction(0))
        if element.weight >= self.params.r * evict_cost:
            return Decision(ACCEPT_EVICT, frozenset(dropped)), (), ()
        return Decision(REJECT), (), ()


class SingleElementBuyback:
    """One-slot rule for arbitrary downward-closed systems.

    Holds at most one element and swaps only when the newcomer is worth r
    times the holding, with r the optimal single-constraint threshold by
    default. Elements whose singleton is infeasible are skipped. Since any
    feasible set has at most n elements each no heavier than the best
    singleton, this is n times the one-slot guarantee away from optimal.
    """

    def __init__(self, f, r: Optional[Fraction] = None,
                 singleton_ok: Optional[Callable[[int], bool]] = None):
        self.f = Fraction(f)
        if self.f < 0:
            raise InputError("f must be nonnegative")
        self.r = Fraction(r) if r is not None else optimal_r_rational(1, self.f)
        if self.r < 1:
            raise InputError("r must be at least 1")
        self.singleton_ok = singleton_ok or (lambda eid: True)
        self.current: set = set()
        self.weights: dict = {}
        self.accepted: list = []
        self.canceled: list = []
        self.trace: list = []
        self.step = 0
        self._seen: set = set()

    def utility(self) -> Fraction:
        gained = sum((self.weights[e] for e in self.accepted), Fraction(0))
        lost = sum((self.weights[e] for e in self.canceled), Fraction(0))
        return gained - (1 + self.f) * lost

    def penalty_total(self) -> Fraction:
        return self.f * sum((self.weights[e] for e in self.canceled), Fraction(0))

    def snapshot(self) -> Snapshot:
        return Snapshot(id(self), self.step, frozenset(self.current),
                        tuple(self.weights.items()), tuple(self.accepted),
                        tuple(self.canceled), tuple(self.trace), frozenset(self._seen))

    def restore(self, snap: Snapshot) -> None:
        if snap.owner_id != id(self):
            raise InputError("snapshot belongs to a different run")
        self.step = snap.step
        self.current = set(snap.current)
        self.weights = dict(snap.weights)
        self.accepted = list(snap.accepted)
        self.canceled = list(snap.canceled)
        self.trace = list(snap.trace)
        self._seen = set(snap.seen)

    def process(self, element: Element) -> Decision:
        if element.id in self._seen:
            raise InputError(f"element {element.id} was already presented")
        self._seen.add(element.id)
        self.weights[element.id] = element.weight
        self.step += 1

        if not self.singleton_ok(element.id):
            decision = Decision(REJECT)
        elif not self.current:
            decision = Decision(ACCEPT_FREE)
            self.current = {element.id}
            self.accepted.append(element.id)
        else:
            held = next(iter(self.current))
            if element.weight >= self.r * self.weights[held]:
                decision = Decision(ACCEPT_EVICT, frozenset({held}))
                self.current = {element.id}
                self.accepted.append(element.id)
                self.canceled.append(held)
            else:
                decision = Decision(REJECT)

        self.trace.append(StepRecord(self.step, element.id, element.weight, decision))
        return decision


@dataclass
class RunReport:
    """Outcome of one full stream: trace, final holdings, and the exact ledger."""

    variant: str
    params: Params
    trace: tuple
    final_set: frozenset
    final_weight: Fraction
    utility: Fraction
    penalty_total: Fraction
    opt_weight: Optional[Fraction] = None
    observed_ratio: Optional[Fraction] = None

    def to_json(self) -> dict:
        from .instances import format_ratio
        doc = {
            "variant": self.variant,
            "k": self.params.k,
            "f": format_ratio(self.params.f),
            "r": format_ratio(self.params.r),
            "trace": [{"element": rec.element_id,
                       "decision": rec.decision.kind,
                       "evicted": sorted(rec.decision.evicted)}
                      for rec in self.trace],
            "final_set": sorted(self.final_set),
            "final_weight": format_ratio(self.final_weight),
            "utility": format_ratio(self.utility),
            "penalty_total": format_ratio(self.penalty_total),
        }
        if self.opt_weight is not None:
            doc["opt_weight"] = format_ratio(self.opt_weight)
        if self.observed_ratio is not None:
            doc["observed_ratio"] = format_ratio(self.observed_ratio)
        return doc


def _report_from_logs(variant, params, trace, current, weights, utility, penalty,
                      opt_weight=None) -> RunReport:
    final_weight = sum((weights[e] for e in current), Fraction(0))
    ratio = None
    if opt_weight is not None and utility > 0:
        ratio = Fraction(opt_weight) / utility
    return RunReport(variant, params, tuple(trace), frozenset(current), final_weight,
                     utility, penalty, opt_weight, ratio)


def run_stream(instance: Instance, variant: str = "alg1",
               with_opt: bool = False) -> RunReport:
    """Feed the instance's elements, in arrival order, through one variant."""
    if variant == "single_element":
        return single_element_baseline(instance, with_opt=with_opt)
    params = Params.for_instance(instance)
    run = BuybackRun(instance.matroids, params, variant)
    by_id = {e.id: e for e in instance.elements}
    for eid in instance.arrival_order:
        run.process(by_id[eid])
    opt_weight = None
    if with_opt:
        from .offline import brute_opt
        opt_weight = brute_opt(instance).weight
    return _report_from_logs(variant, params, run.trace, run.current, run.weights,
                             run.utility(), run.penalty_total(), opt_weight)


def single_element_baseline(instance: Instance, with_opt: bool = False) -> RunReport:
    """Run the one-slot rule over an instance (meant for ExplicitFamily systems)."""
    f = instance.penalty_f
    r = instance.threshold_r if instance.threshold_r != OPTIMAL else None
    singleton_ok = lambda eid: all(m.is_independent({eid}) for m in instance.matroids)
    run = SingleElementBuyback(f, r, singleton_ok)
    by_id = {e.id: e for e in instance.elements}
    for eid in instance.arrival_order:
        run.process(by_id[eid])
    params = Params(1, f, run.r)
    opt_weight = None
    if with_opt:
        from .offline import brute_opt
        opt_weight = brute_opt(instance).weight
    return _report_from_logs("single_element", params, run.trace, run.current,
                             run.weights, run.utility(), run.penalty_total(), opt_weight)


def penalty_accounting(trace: Iterable[StepRecord], weights, f: Fraction) -> dict:
    """Fold every cancellation fee onto the element that caused it.

    An evicting acceptance absorbs, per matroid, the victim's fee plus
    whatever the victim had already absorbed. Summed over surviving
    elements this dominates the total penalty actually paid.
    """
    f = Fraction(f)
    accounted: dict = {}
    for rec in trace:
        if rec.decision.kind != ACCEPT_EVICT:
            if rec.decision.kind == ACCEPT_FREE:
                accounted[rec.element_id] = Fraction(0)
            continue
        if rec.evict_targets:
            victims = [t for t in rec.evict_targets if t is not None]
        else:
            victims = sorted(rec.decision.evicted)
        total = Fraction(0)
        for v in victims:
            total += f * weights[v] + accounted.get(v, Fraction(0))
        accounted[rec.element_id] = total
    return accounted


def check_run_invariants(report: RunReport, weights: dict,
                         opt_weight: Optional[Fraction] = None) -> dict:
    """Per-run contract checks, all exact. Keys map to booleans."""
    params = report.params
    f, r, k = params.f, params.r, params.k
    if opt_weight is None:
        opt_weight = report.opt_weight

    accepted = [rec.element_id for rec in report.trace if rec.decision.accepted]
    canceled = [e for rec in report.trace for e in rec.decision.evicted]
    utility_identity = (
        report.utility ==
        sum((weights[e] for e in accepted), Fraction(0))
        - (1 + f) * sum((weights[e] for e in canceled), Fraction(0)))
    set_identity = report.final_set == frozenset(accepted) - frozenset(canceled)

    checks = {"utility_identity": utility_identity, "set_identity": set_identity}

    if r > 1:
        accounted = penalty_accounting(report.trace, weights, f)
        bound = lambda e: f * weights[e] / (r - 1)
        checks["penalty_per_element"] = all(
            p <= bound(e) for e, p in accounted.items())
        checks["penalty_total"] = (
            report.penalty_total <= f * report.final_weight / (r - 1))
        if opt_weight is not None:
            checks["final_weight_bound"] = (
                report.final_weight * (k * r - 1) * r / (r - 1) >= opt_weight)
    if opt_weight is not None and r > 1 + f:
        c = competitive_ratio(k, f, r)
        checks["utility_bound"] = report.utility * c >= opt_weight
    return checks
