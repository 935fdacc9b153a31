"""Lower-bound drivers.

k2_adversary grows a bipartite matching instance against a deterministic
online algorithm: at every step it snapshots the algorithm, probes both
endpoints of the held edge with fresh rival edges at increasing weights
(restoring the snapshot between probes) until it brackets the acceptance
threshold, then commits a pair one grid step apart so that exactly one rival
is taken. The foregone rivals form a matching the algorithm can never hold,
which pins its ratio from below. The weight grid is exact (multiples of
eps), so the driver is reproducible bit for bit.

z_sequence iterates the growth recurrence k*z[i+1] = (1+beta)*z[i] -
beta*(1+f)*z[i-1] that any beta-competitive algorithm's acceptance chain
must satisfy in the limit; its discriminant (1+beta)^2 - 4*k*beta*(1+f)
is negative exactly when beta is between the tight ratio and its
reciprocal, forcing the sequence negative and refuting beta.

star_adversary drives algorithms for general downward-closed systems with
a growing conflict graph whose hub is wherever the algorithm sits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .engine import (ACCEPT_EVICT, ACCEPT_FREE, REJECT, BuybackRun, Params,
                     SingleElementBuyback, optimal_r_rational)
from .errors import InputError, ProtocolError
from .instances import format_ratio
from .matroids import Element, Matroid

NEGATIVITY_GUARD = -1e-12  # float noise floor for "went negative"
RESCALE_LIMIT = 1e100


class VertexCapacityOracle(Matroid):
    """Capacity-one-per-vertex constraint over one side of a growing edge set.

    The edge registry is owned by the adversary and only ever grows; at any
    instant the oracle is a partition matroid on the edges revealed so far.
    Unlike the static descriptors this view is bound to a single driver run.
    """

    def __init__(self, endpoints: dict, side: int):
        self._endpoints = endpoints  # shared with the driver, grows in place
        self.side = side

    def knows(self, eid):
        return eid in self._endpoints

    def _independent(self, ids):
        seen = set()
        for eid in ids:
            v = self._endpoints[eid][self.side]
            if v in seen:
                return False
            seen.add(v)
        return True

    def __repr__(self):
        return f"VertexCapacityOracle(side={self.side}, edges={len(self._endpoints)})"


@dataclass
class AdversaryReport:
    """Chain weights and the ratio evidence they produce.

    x[i] are the weights of the successively held edges (x[0] == 1), y[i]
    the foregone rivals; each committed step has x[i+1] == y[i] + eps. The
    opt trajectory values a matching of all foregone rivals plus one more
    rejected probe; utility is holding x[i] after cancelling the rest.
    """

    eps: Fraction
    f: Fraction
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    probes_per_step: list = field(default_factory=list)
    utility_trajectory: list = field(default_factory=list)
    opt_trajectory: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    best_ratio_lower_bound: Optional[Fraction] = None
    diverged: bool = False
    stop_reason: str = ""

    def to_json(self) -> dict:
        return {
            "eps": format_ratio(self.eps),
            "f": format_ratio(self.f),
            "x": [format_ratio(v) for v in self.x],
            "y": [format_ratio(v) for v in self.y],
            "probes_per_step": list(self.probes_per_step),
            "utility_trajectory": [format_ratio(v) for v in self.utility_trajectory],
            "opt_trajectory": [format_ratio(v) for v in self.opt_trajectory],
            "ratios": [format_ratio(v) for v in self.ratios],
            "best_ratio_lower_bound": (None if self.best_ratio_lower_bound is None
                                       else format_ratio(self.best_ratio_lower_bound)),
            "diverged": self.diverged,
            "stop_reason": self.stop_reason,
        }


def _default_factory(f, r):
    def make(matroids):
        params = Params(2, f, r if r is not None else optimal_r_rational(2, f))
        return BuybackRun(matroids, params, "alg1")
    return make


def k2_adversary(algorithm_factory: Optional[Callable] = None,
                 f=Fraction(0),
                 eps: Fraction = Fraction(1, 10_000),
                 max_steps: int = 30,
                 weight_cap: Fraction = Fraction(10 ** 6),
                 max_probes_per_step: int = 10 ** 7,
                 r: Optional[Fraction] = None) -> AdversaryReport:
    """Drive a deterministic algorithm with the rewinding two-matroid chain.

    `algorithm_factory(matroids)` must return an object exposing
    process(Element) -> Decision, snapshot() and restore(); the default is
    the per-matroid engine at the ratio-minimizing threshold. Probing uses
    an exponential bracket plus binary search on the eps grid, equivalent to
    the level-by-level scan for any weight-monotone acceptance rule but
    within the probe budget.
    """
    eps = Fraction(eps)
    f = Fraction(f)
    if eps <= 0:
        raise InputError("eps must be positive")
    if max_steps < 1:
        raise InputError("max_steps must be at least 1")
    weight_cap = Fraction(weight_cap)

    endpoints: dict = {}
    matroids = [VertexCapacityOracle(endpoints, 0), VertexCapacityOracle(endpoints, 1)]
    factory = algorithm_factory or _default_factory(f, r)
    alg = factory(matroids)

    next_edge = 0
    next_vertex = [0, 0]  # per side

    def fresh_vertex(side):
        next_vertex[side] += 1
        return next_vertex[side] - 1

    def reveal(u, v):
        nonlocal next_edge
        endpoints[next_edge] = (u, v)
        next_edge += 1
        return next_edge - 1

    report = AdversaryReport(eps=eps, f=f)

    first = reveal(fresh_vertex(0), fresh_vertex(1))
    if not alg.process(Element(first, Fraction(1))).accepted:
        # refusing a lone unit-weight edge is already unbounded-ratio evidence
        report.diverged = True
        report.stop_reason = "rejected_opening_edge"
        return report
    report.x.append(Fraction(1))

    held_edge = first
    held_uv = endpoints[first]
    foregone_ids: list = []
    cap_t = int(weight_cap / eps)  # largest grid level we will ever offer

    while True:
        i = len(report.x)  # currently holding the i-th chain edge
        if i >= max_steps:
            report.stop_reason = "max_steps"
            break

        base = alg.snapshot()
        probes = 0

        def probe(side, t):
            nonlocal probes
            probes += 1
            if probes > max_probes_per_step:
                raise ProtocolError("probe budget exhausted within one step")
            alg.restore(base)
            u, v = held_uv
            eid = reveal(u, fresh_vertex(1)) if side == 0 else reveal(fresh_vertex(0), v)
            return alg.process(Element(eid, t * eps)).accepted

        def find_threshold(side):
            """Smallest grid level accepted on this side, or None up to the cap."""
            if probe(side, 1):
                return 1
            lo, hi = 1, 2
            while hi <= cap_t and not probe(side, hi):
                lo, hi = hi, hi * 2
            if hi > cap_t:
                if lo >= cap_t or probe(side, cap_t):
                    hi = cap_t
                    if lo >= cap_t:
                        return None
                else:
                    return None
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if probe(side, mid):
                    hi = mid
                else:
                    lo = mid
            return hi

        thresholds = (find_threshold(0), find_threshold(1))
        report.probes_per_step.append(probes)

        u_i = report.x[-1] - f * sum(report.x[:-1], Fraction(0))
        if thresholds == (None, None):
            # nothing below the cap is ever taken: the foregone matching plus a
            # cap-level rejected probe is feasible while the utility is frozen
            opt_evidence = sum(report.y, Fraction(0)) + cap_t * eps
            report.diverged = True
            report.stop_reason = "no_acceptance_below_weight_cap"
            if u_i > 0:
                ratio = opt_evidence / u_i
                report.ratios.append(ratio)
                report.opt_trajectory.append(opt_evidence)
                report.utility_trajectory.append(u_i)
            break

        t_star, side = min(
            (t, s) for s, t in enumerate(thresholds) if t is not None)

        # committed trial: rival on the opposite end first, one grid level
        # lower, so it is refused; then the accepted edge at its threshold
        alg.restore(base)
        u, v = held_uv
        y_weight = (t_star - 1) * eps
        if side == 0:
            ey = reveal(fresh_vertex(0), v)
            ex_uv = (u, fresh_vertex(1))
        else:
            ey = reveal(u, fresh_vertex(1))
            ex_uv = (fresh_vertex(0), v)
        if alg.process(Element(ey, y_weight)).accepted:
            raise ProtocolError(
                f"foregone rival at weight {y_weight} was accepted; "
                "the algorithm accepted both probe edges")
        ex = reveal(*ex_uv)
        decision = alg.process(Element(ex, t_star * eps))
        if not decision.accepted:
            raise ProtocolError("committed edge refused despite an accepting probe")
        if decision.kind != ACCEPT_EVICT or decision.evicted != frozenset({held_edge}):
            raise ProtocolError(
                f"commit should cancel exactly the held edge, got {decision}")

        foregone_ids.append(ey)
        for m in matroids:
            if not m.is_independent(foregone_ids):
                raise ProtocolError("foregone rivals stopped forming a matching")

        report.y.append(y_weight)
        report.x.append(t_star * eps)
        report.utility_trajectory.append(u_i)
        opt_i = sum(report.y, Fraction(0)) + (report.x[-1] - eps)
        report.opt_trajectory.append(opt_i)
        if u_i > 0:
            report.ratios.append(opt_i / u_i)

        held_edge = ex
        held_uv = ex_uv

        if report.x[-1] > weight_cap:
            report.stop_reason = "weight_cap"
            break

    if report.ratios:
        report.best_ratio_lower_bound = max(report.ratios)
    return report


def verify_sequence_inequality(report: AdversaryReport, beta, f=None, k: int = 2) -> dict:
    """Residuals of the chain inequality a beta-competitive algorithm must obey.

    raw[i] checks beta*(x_i - f*sum_{j<i} x_j) >= x_{i+1} + sum_{j=2}^{i+1} x_j
    - (i+2)*eps on the recorded chain (1-based i). rescaled[i] drops x_1,
    renormalizes x_2 to 1 and checks the clean form with (k-1) replicas of the
    running sum; its slack shrinks linearly in eps, so residuals below
    -O(i*eps) refute beta.
    """
    beta = Fraction(beta)
    f = report.f if f is None else Fraction(f)
    x, eps = report.x, report.eps

    raw = []
    for i in range(1, len(x)):  # x[i-1] is x_i
        lhs = beta * (x[i - 1] - f * sum(x[:i - 1], Fraction(0)))
        rhs = x[i] + sum(x[1:i + 1], Fraction(0)) - (i + 2) * eps
        raw.append(lhs - rhs)

    rescaled = []
    if len(x) >= 2 and x[1] > 0:
        xs = [v / x[1] for v in x[1:]]
        for i in range(1, len(xs)):
            lhs = beta * (xs[i - 1] - f * sum(xs[:i - 1], Fraction(0)))
            rhs = xs[i] + (k - 1) * sum(xs[:i + 1], Fraction(0))
            rescaled.append(lhs - rhs)

    return {"raw": raw, "rescaled": rescaled,
            "slack_unit": eps / x[1] if len(x) >= 2 and x[1] > 0 else eps}


@dataclass
class ZSequence:
    beta: float
    k: int
    f: float
    z: list
    discriminant: float
    first_negative_index: Optional[int]
    rescaled: bool = False

    def to_json(self) -> dict:
        return {"beta": self.beta, "k": self.k, "f": self.f,
                "terms": len(self.z),
                "discriminant": float(f"{self.discriminant:.17g}"),
                "first_negative_index": self.first_negative_index,
                "rescaled": self.rescaled}


def z_sequence(beta, k: int, f, n_terms: int, exact: bool = False) -> ZSequence:
    """Iterate k*z[i+1] = (1+beta)*z[i] - beta*(1+f)*z[i-1] from z0=0, z1=1.

    Magnitudes grow geometrically, so in float mode both trailing values are
    rescaled by a positive factor whenever they overflow the comfort range;
    signs (which is all positivity needs) are unaffected and `rescaled` says
    whether the stored values are still literal.
    """
    if n_terms < 2:
        raise InputError("need at least the two seed terms")
    if k < 1:
        raise InputError("k must be at least 1")

    if exact:
        b, ff = Fraction(beta), Fraction(f)
        disc = (1 + b) ** 2 - 4 * k * b * (1 + ff)
        z = [Fraction(0), Fraction(1)]
        first_negative = None
        for i in range(1, n_terms - 1):
            nxt = ((1 + b) * z[i] - b * (1 + ff) * z[i - 1]) / k
            z.append(nxt)
            if first_negative is None and nxt < 0:
                first_negative = i + 1
        return ZSequence(float(b), k, float(ff), z, float(disc), first_negative)

    beta, f = float(beta), float(f)
    disc = (1.0 + beta) ** 2 - 4.0 * k * beta * (1.0 + f)
    z = [0.0, 1.0]
    first_negative = None
    rescaled = False
    prev, cur = 0.0, 1.0
    for i in range(1, n_terms - 1):
        nxt = ((1.0 + beta) * cur - beta * (1.0 + f) * prev) / k
        z.append(nxt)
        if first_negative is None and nxt < NEGATIVITY_GUARD:
            first_negative = i + 1
        prev, cur = cur, nxt
        scale = max(abs(prev), abs(cur))
        if scale > RESCALE_LIMIT:
            prev /= scale
            cur /= scale
            rescaled = True
    return ZSequence(beta, k, f, z, disc, first_negative, rescaled)


@dataclass
class PositivityResult:
    consistent: bool
    refuted_index: Optional[int]
    terms_examined: int


def positivity_check(seq: ZSequence) -> PositivityResult:
    """A negative term refutes the competitiveness value that built the sequence."""
    idx = seq.first_negative_index
    return PositivityResult(idx is None, idx, len(seq.z))


@dataclass
class StarReport:
    n: int
    eps: Fraction
    f: Fraction
    utility: Fraction
    opt_weight: Fraction
    ratio: Optional[Fraction]
    swaps: int
    center_history: list
    anomaly: Optional[str] = None

    def to_json(self) -> dict:
        return {"n": self.n, "eps": format_ratio(self.eps), "f": format_ratio(self.f),
                "utility": format_ratio(self.utility),
                "opt_weight": format_ratio(self.opt_weight),
                "ratio": None if self.ratio is None else format_ratio(self.ratio),
                "swaps": self.swaps, "center_history": list(self.center_history),
                "anomaly": self.anomaly}


def star_adversary(algorithm_factory: Optional[Callable] = None,
                   n: int = 10, eps: Fraction = Fraction(1, 1000),
                   f=Fraction(0)) -> StarReport:
    """Grow a conflict graph whose hub follows the algorithm's holding.

    Two unit-weight vertices joined by an edge arrive first; afterwards each
    new vertex weighs 1 - eps and conflicts only with whatever the algorithm
    currently holds (if it swaps, later vertices chase the new holding). Any
    feasible offline set may take every non-hub vertex, so holding a single
    unit is a factor about n away from it.

    `algorithm_factory(adjacency)` gets the live adjacency dict (vertex ->
    set of neighbors) and must return a process/snapshot/restore object; the
    default is the one-slot rule.
    """
    eps = Fraction(eps)
    f = Fraction(f)
    if n < 3:
        raise InputError("star construction needs n >= 3")
    if not 0 < eps < 1:
        raise InputError("eps must lie strictly between 0 and 1")

    adjacency: dict = {}
    factory = algorithm_factory or (lambda adj: SingleElementBuyback(f))
    alg = factory(adjacency)

    held: set = set()
    accepted: list = []
    canceled: list = []
    weights: dict = {}
    anomaly = None

    def present(vid, weight, neighbors):
        adjacency[vid] = set(neighbors)
        for nb in neighbors:
            adjacency[nb].add(vid)
        weights[vid] = weight
        decision = alg.process(Element(vid, weight))
        if decision.accepted:
            held.add(vid)
            accepted.append(vid)
            held.difference_update(decision.evicted)
            canceled.extend(sorted(decision.evicted))
        for a in held:
            if adjacency[a] & held:
                raise ProtocolError("algorithm holds two adjacent vertices")
        return decision

    present(0, Fraction(1), [])
    present(1, Fraction(1), [0])

    if not held & {0, 1}:
        anomaly = "algorithm holds neither opening vertex"
    center = min(held) if held else 0
    centers = [center]
    swaps = 0

    for vid in range(2, n):
        decision = present(vid, 1 - eps, [center])
        if decision.accepted:
            swaps += 1
            center = vid  # chase the new holding
        centers.append(center)

    utility = (sum((weights[a] for a in accepted), Fraction(0))
               - (1 + f) * sum((weights[c] for c in canceled), Fraction(0)))

    # the true optimum of the final graph; independence means no edge inside
    if n <= 20:
        ids = list(range(n))
        best = Fraction(0)
        for mask in range(1 << n):
            chosen = [v for v in ids if mask >> v & 1]
            if any(adjacency[v] & set(chosen) for v in chosen):
                continue
            best = max(best, sum((weights[v] for v in chosen), Fraction(0)))
        opt_weight = best
    else:
        non_hubs = set(range(n)) - set(centers)
        opt_weight = sum((weights[v] for v in non_hubs), Fraction(0))

    ratio = opt_weight / utility if utility > 0 else None
    return StarReport(n, eps, f, utility, opt_weight, ratio, swaps, centers, anomaly)
