"""Offline ground-truth solvers for small instances.

brute_opt enumerates by depth-first search with hereditary pruning, which is
exact for any downward-closed system, and is deliberately independent of the
online engine so the two can check each other. greedy_offline is the
descending-weight baseline; on true matroid intersections its weight is
within a factor k of optimal.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import SizeError
from .instances import Instance

BRUTE_LIMIT = 22


@dataclass(frozen=True)
class OptResult:
    ids: frozenset
    weight: Fraction

    def to_json(self) -> dict:
        from .instances import format_ratio
        return {"set": sorted(self.ids), "weight": format_ratio(self.weight)}


def brute_opt(instance: Instance) -> OptResult:
    """Maximum-weight set independent in all constraints, by pruned enumeration.

    Ties break toward the lexicographically smallest sorted id tuple, so the
    reported optimum is deterministic and auditors can rebuild it.
    """
    elements = sorted(instance.elements, key=lambda e: e.id)
    n = len(elements)
    if n > BRUTE_LIMIT:
        raise SizeError(f"brute_opt limited to {BRUTE_LIMIT} elements, got {n}")
    matroids = instance.matroids

    best_weight = Fraction(0)
    best_ids: tuple = ()

    def consider(ids: tuple, weight: Fraction):
        nonlocal best_weight, best_ids
        if weight > best_weight or (weight == best_weight and ids < best_ids):
            best_weight, best_ids = weight, ids

    def extend(ids: tuple, chosen: set, weight: Fraction, start: int):
        consider(ids, weight)
        for i in range(start, n):
            e = elements[i]
            candidate = chosen | {e.id}
            if all(m.is_independent(candidate) for m in matroids):
                extend(ids + (e.id,), candidate, weight + e.weight, i + 1)

    # empty set is independent in every downward-closed system, so ids=() is
    # a valid starting point even when every singleton is dependent
    extend((), set(), Fraction(0), 0)
    return OptResult(frozenset(best_ids), best_weight)


def greedy_offline(instance: Instance) -> OptResult:
    """Descending-weight greedy through all constraints, ties by smaller id."""
    kept: set = set()
    weight = Fraction(0)
    for e in sorted(instance.elements, key=lambda e: (-e.weight, e.id)):
        candidate = kept | {e.id}
        if all(m.is_independent(candidate) for m in instance.matroids):
            kept = candidate
            weight += e.weight
    return OptResult(frozenset(kept), weight)
