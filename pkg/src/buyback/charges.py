"""Runtime verifier for the eviction-chain charging argument.

The final-weight guarantee of the per-matroid engine rests on an accounting
scheme: the optimum's weight starts as charges on the optimal elements and,
whenever the run discards something, flows onto elements that survive it.
This module makes that accounting executable. While replaying a finished
run it builds one bipartite graph per matroid (discarded optimal elements on
the left, the circuit members that blocked them on the right), extracts a
left-saturating matching into non-optimal right nodes, routes every charge
along the recorded timeline, and then checks each per-element bound the
induction needs:

  * a deleted element carries at most (k-1) r^2/(r-1) times its weight,
  * a surviving element carries at most (k r - 1) r/(r-1) times its weight,
  * total charge is conserved exactly at every step,

which together imply w(final) * (k*r - 1)*r/(r-1) >= w(OPT) for the run.

Everything here is exact rational arithmetic; a failed check is a report
entry with a witness, never a silent tolerance.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import BuybackError, InputError, PreconditionError, SizeError
from .engine import ACCEPT_EVICT, ACCEPT_FREE, REJECT, Params, StepRecord
from .instances import Instance, format_ratio
from .offline import BRUTE_LIMIT, OptResult, brute_opt

HALL_EXHAUSTIVE_LIMIT = 12  # above this, rely on matching saturation (equivalent by Hall)
SPAN_SAMPLES = 16


class ChargeTransferError(BuybackError):
    """A transfer could not be routed (its matching edge is missing)."""


@dataclass
class ChargeGraph:
    """One bipartite graph: left nodes are discarded optimal elements."""

    left: set = field(default_factory=set)
    adj: dict = field(default_factory=dict)  # left id -> set of right ids

    def right(self) -> set:
        out: set = set()
        for nbrs in self.adj.values():
            out |= nbrs
        return out

    def neighbors(self, ids) -> set:
        out: set = set()
        for eid in ids:
            out |= self.adj.get(eid, set())
        return out


@dataclass
class Lemma3Report:
    """The five structural properties of the finished graphs."""

    left_outside_final_opt_only: bool   # (1) left sides hold only OPT \ final
    spanning: bool                      # (2) each left set is spanned by its neighbors
    hall_counts: bool                   # (3) |N(S) \ OPT| >= |S| for left subsets
    matching_saturates: bool            # (4) some matching covers every left node
    bounded_right_matches: bool         # (5) non-final non-OPT matched <= k-1 times
    witnesses: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)  # mid-run anomalies, informational

    @property
    def ok(self) -> bool:
        return (self.left_outside_final_opt_only and self.spanning and
                self.hall_counts and self.matching_saturates and
                self.bounded_right_matches)


def _left_saturating_matching(graph: ChargeGraph, excluded_right: frozenset):
    """Augmenting-path matching, left nodes in id order, into allowed right nodes.

    Deterministic by construction: neighbors are scanned in sorted order.
    """
    match_right: dict = {}  # right id -> left id

    def augment(u, visited):
        for v in sorted(graph.adj.get(u, ())):
            if v in excluded_right or v in visited:
                continue
            visited.add(v)
            if v not in match_right or augment(match_right[v], visited):
                match_right[v] = u
                return True
        return False

    saturated = True
    for u in sorted(graph.left):
        if not augment(u, set()):
            saturated = False
    return {u: v for v, u in match_right.items()}, saturated


class ChargeAuditor:
    """Replays a recorded trace, building the graphs and checking the bounds.

    Events must be fed in run order and carry the circuits captured at
    decision time (the per-matroid variant records them); rebuilding
    circuits after the fact from state history is how off-by-one-step bugs
    creep in, so we refuse to.
    """

    def __init__(self, matroids, opt: OptResult, weights: dict,
                 check_span_each_event: bool = True):
        self.matroids = list(matroids)
        self.opt_ids = frozenset(opt.ids)
        self.opt_weight = opt.weight
        self.weights = dict(weights)
        self.graphs = [ChargeGraph() for _ in self.matroids]
        self.flags: list = []
        self._check_span_each_event = check_span_each_event
        self._next_step = 1

    # -- graph construction ---------------------------------------------------

    def record_event(self, rec: StepRecord) -> None:
        if rec.step != self._next_step:
            raise PreconditionError(
                f"event out of order: expected step {self._next_step}, got {rec.step}")
        self._next_step += 1
        if not rec.circuits and rec.decision.kind != ACCEPT_FREE:
            raise InputError("trace lacks circuit captures; audit the per-matroid variant")

        if rec.decision.kind == REJECT and rec.element_id in self.opt_ids:
            for p, circ in enumerate(rec.circuits):
                if circ is None or circ == frozenset({rec.element_id}):
                    continue
                g = self.graphs[p]
                g.left.add(rec.element_id)
                g.adj.setdefault(rec.element_id, set()).update(circ - {rec.element_id})

        elif rec.decision.kind == ACCEPT_EVICT:
            for p, victim in enumerate(rec.evict_targets):
                if victim is None:
                    continue
                circ = rec.circuits[p]
                replacement = circ - {victim}
                g = self.graphs[p]
                # the victim leaves this graph's right side only; every edge it
                # carried is rewired to the rest of the circuit that displaced it
                for u in g.left:
                    nbrs = g.adj.get(u)
                    if nbrs and victim in nbrs:
                        nbrs.discard(victim)
                        nbrs.update(replacement)
                if victim in self.opt_ids:
                    g.left.add(victim)
                    g.adj.setdefault(victim, set()).update(replacement)

        if self._check_span_each_event:
            for p in range(len(self.matroids)):
                bad = self._span_witness(p)
                if bad is not None:
                    self.flags.append(
                        f"step {rec.step}: graph {p} span anomaly at element {bad}")

    def _span_witness(self, p: int) -> Optional[int]:
        g, m = self.graphs[p], self.matroids[p]
        for u in g.left:
            nbrs = g.adj.get(u, set())
            if m.rank(nbrs) != m.rank(nbrs | {u}):
                return u
        return None

    # -- the five structural checks --------------------------------------------

    def compute_matchings(self):
        return [
            _left_saturating_matching(g, frozenset(self.opt_ids))
            for g in self.graphs
        ]

    def verify_lemma3(self, final_set: frozenset, seed: int = 0) -> Lemma3Report:
        report = Lemma3Report(True, True, True, True, True, flags=list(self.flags))
        rng = random.Random(seed)

        for p, g in enumerate(self.graphs):
            if not g.left <= (self.opt_ids - final_set):
                report.left_outside_final_opt_only = False
                report.witnesses.setdefault("membership", []).append(
                    (p, sorted(g.left - (self.opt_ids - final_set))))

            m = self.matroids[p]
            left = sorted(g.left)
            subsets = [[u] for u in left]
            if 0 < len(left) <= HALL_EXHAUSTIVE_LIMIT:
                subsets += [[u for i, u in enumerate(left) if mask >> i & 1]
                            for mask in range(1, 1 << len(left))]
            else:
                subsets += [[u for u in left if rng.random() < 0.5]
                            for _ in range(SPAN_SAMPLES)]
            for sub in subsets:
                if not sub:
                    continue
                nbrs = g.neighbors(sub)
                if m.rank(nbrs) != m.rank(nbrs | set(sub)):
                    report.spanning = False
                    report.witnesses.setdefault("span", []).append((p, sorted(sub)))
                    break

            if 0 < len(left) <= HALL_EXHAUSTIVE_LIMIT:
                for mask in range(1, 1 << len(left)):
                    sub = [u for i, u in enumerate(left) if mask >> i & 1]
                    if len(g.neighbors(sub) - self.opt_ids) < len(sub):
                        report.hall_counts = False
                        report.witnesses.setdefault("hall", []).append((p, sorted(sub)))
                        break

        matchings = self.compute_matchings()
        for p, (matching, saturated) in enumerate(matchings):
            if not saturated:
                report.matching_saturates = False
                unmatched = sorted(self.graphs[p].left - set(matching))
                report.witnesses.setdefault("unmatched", []).append((p, unmatched))
        if any(len(g.left) > HALL_EXHAUSTIVE_LIMIT for g in self.graphs):
            # too large to enumerate: Hall's condition holds iff the matching saturates
            report.hall_counts = report.hall_counts and report.matching_saturates

        discarded = set(self.weights) - final_set - self.opt_ids
        k = len(self.matroids)
        matched_count = {e: 0 for e in discarded}
        for matching, _ in matchings:
            for right in matching.values():
                if right in matched_count:
                    matched_count[right] += 1
        for e, count in matched_count.items():
            if count > k - 1:
                report.bounded_right_matches = False
                report.witnesses.setdefault("overmatched", []).append((e, count))

        return report


@dataclass
class TransferEvent:
    step: int
    kind: str  # "pool" (carried charge follows the evictor) | "matched" | "split"
    source: int
    receiver: int
    amount: Fraction
    graph: Optional[int] = None


@dataclass
class ChargeLedger:
    initial: dict
    final: dict                       # element id -> charge held at the end
    at_deletion: dict                 # element id -> carried (received) charge when deleted
    transfers: list
    conservation_residuals: list      # per step, total charge minus w(OPT); expect zeros
    causality_ok: bool
    orphaned: list                    # discarded elements still holding charge (expect none)


def transfer_charges(trace, auditor: ChargeAuditor, matchings=None) -> ChargeLedger:
    """Route every charge along the run's timeline using the matchings.

    Three rules, applied at the step the source is discarded: carried charge
    follows the evictor; a discarded optimal element sends its own charge to
    its matching partner; a rejected optimal element splits its own charge
    across the graphs in proportion to the repair weights and sends each
    share to that graph's partner. Receivers must still be alive, so the
    grand total is invariant at every step.
    """
    if matchings is None:
        matchings = auditor.compute_matchings()
    opt_ids, weights = auditor.opt_ids, auditor.weights
    own = {e: (weights[e] if e in opt_ids else Fraction(0)) for e in weights}
    carried = {e: Fraction(0) for e in weights}
    initial = dict(own)

    transfers: list = []
    residuals: list = []
    at_deletion: dict = {}
    causality_ok = True
    alive: set = set()  # elements currently held by the run

    def matched_receiver(p, source):
        matching, _ = matchings[p]
        receiver = matching.get(source)
        if receiver is None:
            raise ChargeTransferError(
                f"element {source} unmatched in graph {p}; cannot route its charge")
        return receiver

    for rec in trace:
        eid = rec.element_id
        if rec.decision.kind == ACCEPT_FREE:
            alive.add(eid)
        elif rec.decision.kind == ACCEPT_EVICT:
            alive.add(eid)
            victims = sorted(rec.decision.evicted)
            for v in victims:
                alive.discard(v)
                at_deletion[v] = carried[v]
                carried[eid] += carried[v]
                carried[v] = Fraction(0)
                transfers.append(TransferEvent(rec.step, "pool", v, eid,
                                               at_deletion[v]))
            for v in victims:
                if v not in opt_ids or own[v] == 0:
                    continue
                graphs_hit = [p for p, t in enumerate(rec.evict_targets) if t == v]
                share = own[v] / len(graphs_hit)
                for p in graphs_hit:
                    receiver = matched_receiver(p, v)
                    if receiver not in alive:
                        causality_ok = False
                    carried[receiver] += share
                    transfers.append(TransferEvent(rec.step, "matched", v, receiver,
                                                   share, p))
                own[v] = Fraction(0)
        else:  # rejected
            if eid in opt_ids and own[eid] > 0:
                parts = [(p, auditor.weights[t])
                         for p, t in enumerate(rec.evict_targets) if t is not None]
                denom = sum((w for _, w in parts), Fraction(0))
                if denom <= 0:
                    raise ChargeTransferError(
                        f"rejected optimal element {eid} has zero repair weight")
                for p, w in parts:
                    share = own[eid] * w / denom
                    if share == 0:
                        continue
                    receiver = matched_receiver(p, eid)
                    if receiver not in alive:
                        causality_ok = False
                    carried[receiver] += share
                    transfers.append(TransferEvent(rec.step, "split", eid, receiver,
                                                   share, p))
                own[eid] = Fraction(0)

        total = sum(own.values(), Fraction(0)) + sum(carried.values(), Fraction(0))
        residuals.append(total - auditor.opt_weight)

    final = {e: own[e] + carried[e] for e in weights}
    orphaned = [e for e in weights if e not in alive and final[e] != 0]
    return ChargeLedger(initial, final, at_deletion, transfers, residuals,
                        causality_ok, orphaned)


@dataclass
class ChargeBoundsReport:
    deleted_carry_ok: bool        # carried charge at deletion <= (k-1) r^2/(r-1) w
    final_charge_ok: bool         # final charge <= (k r - 1) r/(r-1) w
    conservation_ok: bool         # residuals all zero and final set holds w(OPT)
    transfer_size_ok: bool        # every routed share <= r * w(receiver)
    transfer_count_ok: bool       # each non-final non-OPT receiver gets <= k-1 shares
    opt_never_receives: bool      # routed shares never land on optimal elements
    causality_ok: bool
    final_weight_bound_ok: bool   # w(final) (k r - 1) r/(r-1) >= w(OPT)
    witnesses: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (self.deleted_carry_ok and self.final_charge_ok and
                self.conservation_ok and self.transfer_size_ok and
                self.transfer_count_ok and self.opt_never_receives and
                self.causality_ok and self.final_weight_bound_ok)


def verify_charge_bounds(ledger: ChargeLedger, auditor: ChargeAuditor,
                         final_set: frozenset, params: Params) -> ChargeBoundsReport:
    k, r = params.k, params.r
    if r <= 1:
        raise PreconditionError("charge bounds require r > 1")
    weights, opt_ids = auditor.weights, auditor.opt_ids

    report = ChargeBoundsReport(True, True, True, True, True, True,
                                ledger.causality_ok, True)

    carry_cap = (k - 1) * r * r / (r - 1)
    for e, ch in ledger.at_deletion.items():
        if ch > carry_cap * weights[e]:
            report.deleted_carry_ok = False
            report.witnesses.setdefault("carry", []).append((e, format_ratio(ch)))

    final_cap = (k * r - 1) * r / (r - 1)
    for e in final_set:
        if ledger.final[e] > final_cap * weights[e]:
            report.final_charge_ok = False
            report.witnesses.setdefault("final", []).append((e, format_ratio(ledger.final[e])))

    on_final = sum((ledger.final[e] for e in final_set), Fraction(0))
    if any(res != 0 for res in ledger.conservation_residuals) or \
            on_final != auditor.opt_weight or ledger.orphaned:
        report.conservation_ok = False
        report.witnesses["conservation"] = {
            "residuals": [format_ratio(res) for res in ledger.conservation_residuals],
            "on_final": format_ratio(on_final),
            "orphaned": ledger.orphaned,
        }

    routed = [t for t in ledger.transfers if t.kind in ("matched", "split")]
    counts: dict = {}
    for t in routed:
        if t.amount > r * weights[t.receiver]:
            report.transfer_size_ok = False
            report.witnesses.setdefault("transfer", []).append(
                (t.source, t.receiver, format_ratio(t.amount)))
        if t.receiver in opt_ids:
            report.opt_never_receives = False
            report.witnesses.setdefault("opt_receiver", []).append(t.receiver)
        counts[t.receiver] = counts.get(t.receiver, 0) + 1
    for e, n in counts.items():
        if e not in final_set and e not in opt_ids and n > k - 1:
            report.transfer_count_ok = False
            report.witnesses.setdefault("count", []).append((e, n))

    final_weight = sum((weights[e] for e in final_set), Fraction(0))
    if final_weight * final_cap < auditor.opt_weight:
        report.final_weight_bound_ok = False
        report.witnesses["final_weight"] = format_ratio(final_weight)

    return report


@dataclass
class AuditReport:
    lemma3: Lemma3Report
    bounds: Optional[ChargeBoundsReport]
    transfer_error: Optional[str]
    final_set: frozenset
    final_weight: Fraction
    opt_weight: Fraction
    utility: Fraction

    @property
    def ok(self) -> bool:
        return self.lemma3.ok and self.transfer_error is None and \
            self.bounds is not None and self.bounds.ok

    def to_json(self) -> dict:
        doc = {
            "ok": self.ok,
            "lemma3": {
                "left_outside_final_opt_only": self.lemma3.left_outside_final_opt_only,
                "spanning": self.lemma3.spanning,
                "hall_counts": self.lemma3.hall_counts,
                "matching_saturates": self.lemma3.matching_saturates,
                "bounded_right_matches": self.lemma3.bounded_right_matches,
                "witnesses": {k: repr(v) for k, v in self.lemma3.witnesses.items()},
                "flags": list(self.lemma3.flags),
            },
            "transfer_error": self.transfer_error,
            "final_set": sorted(self.final_set),
            "final_weight": format_ratio(self.final_weight),
            "opt_weight": format_ratio(self.opt_weight),
            "utility": format_ratio(self.utility),
        }
        if self.bounds is not None:
            doc["bounds"] = {
                "deleted_carry_ok": self.bounds.deleted_carry_ok,
                "final_charge_ok": self.bounds.final_charge_ok,
                "conservation_ok": self.bounds.conservation_ok,
                "transfer_size_ok": self.bounds.transfer_size_ok,
                "transfer_count_ok": self.bounds.transfer_count_ok,
                "opt_never_receives": self.bounds.opt_never_receives,
                "causality_ok": self.bounds.causality_ok,
                "final_weight_bound_ok": self.bounds.final_weight_bound_ok,
                "witnesses": {k: repr(v) for k, v in self.bounds.witnesses.items()},
            }
        return doc


def audit_run(instance: Instance, check_span_each_event: bool = True) -> AuditReport:
    """Run the per-matroid variant on the instance and audit the whole argument.

    Needs the exact optimum, so the instance must be within brute_opt size,
    and the bounds need r > 1.
    """
    from .engine import Params, run_stream

    if len(instance.elements) > BRUTE_LIMIT:
        raise SizeError("auditing needs brute_opt; instance too large")
    params = Params.for_instance(instance)
    if params.r <= 1:
        raise PreconditionError("auditing requires r > 1")

    opt = brute_opt(instance)
    report = run_stream(instance, "alg1")
    weights = {e.id: e.weight for e in instance.elements}

    auditor = ChargeAuditor(instance.matroids, opt, weights, check_span_each_event)
    for rec in report.trace:
        auditor.record_event(rec)
    lemma3 = auditor.verify_lemma3(report.final_set)

    bounds = None
    transfer_error = None
    try:
        ledger = transfer_charges(report.trace, auditor)
        bounds = verify_charge_bounds(ledger, auditor, report.final_set, params)
    except ChargeTransferError as exc:
        transfer_error = str(exc)

    return AuditReport(lemma3, bounds, transfer_error, report.final_set,
                       report.final_weight, opt.weight, report.utility)
