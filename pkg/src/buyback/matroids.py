"""Matroid descriptors and independence oracles.

Weights are exact rationals (fractions.Fraction), so every comparison made on
top of these oracles is exact; no floating point enters any accept/evict
decision. Descriptors are immutable after construction and can be shared by
any number of concurrent runs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InputError, PreconditionError, SizeError, UnsupportedOperation


@dataclass(frozen=True)
class Element:
    """An identified, exactly-weighted item of the ground set."""

    id: int
    weight: Fraction

    def __post_init__(self):
        if not isinstance(self.id, int) or self.id < 0:
            raise InputError(f"element id must be a nonnegative integer, got {self.id!r}")
        if not isinstance(self.weight, Fraction):
            object.__setattr__(self, "weight", Fraction(self.weight))
        if self.weight < 0:
            raise InputError(f"element {self.id} has negative weight {self.weight}")


class Matroid:
    """Base independence oracle.

    Subclasses provide `knows` (id validity) and `_independent` (the oracle
    itself); `rank`, `circuit` and `min_evict` are derived generically from
    the oracle, which keeps them correct for every matroid type below.
    """

    def knows(self, eid: int) -> bool:
        raise NotImplementedError

    def _independent(self, ids: frozenset) -> bool:
        raise NotImplementedError

    def is_independent(self, ids: Iterable[int]) -> bool:
        s = frozenset(ids)
        for eid in s:
            if not self.knows(eid):
                raise InputError(f"unknown element id {eid}")
        return self._independent(s)

    def rank(self, ids: Iterable[int]) -> int:
        """Size of a largest independent subset, via greedy augmentation."""
        kept: set = set()
        for eid in sorted(frozenset(ids)):
            if self.is_independent(kept | {eid}):
                kept.add(eid)
        return len(kept)

    def circuit(self, current: Iterable[int], eid: int) -> Optional[frozenset]:
        """Unique circuit created by adding `eid` to the independent set `current`.

        Returns None when current + eid stays independent. Otherwise the
        circuit is eid plus every member whose removal restores independence.
        """
        s = frozenset(current)
        if not self.is_independent(s):
            raise PreconditionError("circuit requires an independent current set")
        union = s | {eid}
        if self.is_independent(union):
            return None
        members = {eid}
        for x in s:
            if self._independent(union - {x}):
                members.add(x)
        return frozenset(members)

    def min_evict(self, current: Iterable[int], eid: int,
                  weight_of: Mapping[int, Fraction]) -> Optional[int]:
        """Cheapest single removal that makes current + eid independent here.

        None when no removal is needed; ties broken by smallest id so runs
        are reproducible. Raises if `eid` is a loop (no removal can help).
        """
        c = self.circuit(current, eid)
        if c is None:
            return None
        candidates = c - {eid}
        if not candidates:
            raise PreconditionError(
                f"element {eid} is a loop; no eviction restores independence")
        return min(candidates, key=lambda x: (weight_of[x], x))


class UniformMatroid(Matroid):
    """All sets of at most `rank` elements are independent; any id is legal."""

    def __init__(self, rank: int):
        if not isinstance(rank, int) or rank < 0:
            raise InputError(f"uniform rank must be a nonnegative integer, got {rank!r}")
        self.max_size = rank

    def knows(self, eid):
        return True

    def _independent(self, ids):
        return len(ids) <= self.max_size

    def __repr__(self):
        return f"UniformMatroid(rank={self.max_size})"


class PartitionMatroid(Matroid):
    """Elements fall into classes; a set is independent if no class exceeds its capacity."""

    def __init__(self, class_of: Mapping[int, int], capacities: Sequence[int]):
        caps = tuple(int(c) for c in capacities)
        if any(c < 0 for c in caps):
            raise InputError("partition capacities must be nonnegative")
        cls = {int(e): int(c) for e, c in class_of.items()}
        for e, c in cls.items():
            if not 0 <= c < len(caps):
                raise InputError(f"element {e} assigned to out-of-range class {c}")
        self.class_of = cls
        self.capacities = caps

    def knows(self, eid):
        return eid in self.class_of

    def _independent(self, ids):
        counts = Counter(self.class_of[e] for e in ids)
        return all(n <= self.capacities[c] for c, n in counts.items())

    def __repr__(self):
        return f"PartitionMatroid(classes={len(self.capacities)}, n={len(self.class_of)})"


class GraphicMatroid(Matroid):
    """Elements are edges of a graph; a set is independent when acyclic."""

    def __init__(self, vertex_count: int, endpoints: Mapping[int, tuple]):
        if vertex_count < 0:
            raise InputError("vertex count must be nonnegative")
        eps = {}
        for e, (u, v) in endpoints.items():
            u, v = int(u), int(v)
            if not (0 <= u < vertex_count and 0 <= v < vertex_count):
                raise InputError(f"edge {e} endpoint out of range")
            eps[int(e)] = (u, v)
        self.vertex_count = vertex_count
        self.endpoints = eps

    def knows(self, eid):
        return eid in self.endpoints

    def _independent(self, ids):
        parent: dict = {}

        def find(a):
            root = a
            while root in parent:
                root = parent[root]
            while a in parent:
                a, parent[a] = parent[a], root
            return root

        for eid in ids:
            u, v = self.endpoints[eid]
            ru, rv = find(u), find(v)
            if ru == rv:  # closes a cycle (covers self-loops)
                return False
            parent[ru] = rv
        return True

    def __repr__(self):
        return f"GraphicMatroid(vertices={self.vertex_count}, edges={len(self.endpoints)})"


class ExplicitFamily(Matroid):
    """Downward closure of an explicit list of maximal sets.

    This is a general downward-closed system, not necessarily a matroid, so
    rank/circuit/min_evict are refused. Ids outside every maximal set are
    accepted and treated as dependent singletons.
    """

    def __init__(self, maximal_sets: Iterable[Iterable[int]]):
        sets = tuple(frozenset(int(x) for x in m) for m in maximal_sets)
        self.maximal_sets = sets if sets else (frozenset(),)

    def knows(self, eid):
        return True

    def _independent(self, ids):
        return any(ids <= m for m in self.maximal_sets)

    def rank(self, ids):
        raise UnsupportedOperation("rank is a matroid notion; not defined for ExplicitFamily")

    def circuit(self, current, eid):
        raise UnsupportedOperation("circuit is a matroid notion; not defined for ExplicitFamily")

    def min_evict(self, current, eid, weight_of):
        raise UnsupportedOperation("min_evict is a matroid notion; not defined for ExplicitFamily")

    def __repr__(self):
        return f"ExplicitFamily(maximal={[sorted(m) for m in self.maximal_sets]})"


@dataclass(frozen=True)
class AxiomReport:
    ok: bool
    failure: Optional[str] = None  # "empty" | "hereditary" | "exchange"
    witness: Optional[tuple] = None  # pair of frozensets exhibiting the failure


def axiom_check(desc: Matroid, ground: Iterable[int]) -> AxiomReport:
    """Exhaustively verify the hereditary and exchange axioms on `ground`.

    Exchange is checked for sizes differing by exactly one, which is
    equivalent to the general form for hereditary families: any larger
    independent set contains an independent subset one bigger than A.
    """
    ids = sorted(frozenset(ground))
    n = len(ids)
    if n > 16:
        raise SizeError(f"axiom check limited to 16 ground elements, got {n}")

    ind = [False] * (1 << n)
    for mask in range(1 << n):
        ind[mask] = desc.is_independent(ids[i] for i in range(n) if mask >> i & 1)

    def unmask(mask):
        return frozenset(ids[i] for i in range(n) if mask >> i & 1)

    if not ind[0]:
        return AxiomReport(False, "empty", (frozenset(), frozenset()))

    for mask in range(1 << n):
        if not ind[mask]:
            continue
        rest = mask
        while rest:
            bit = rest & -rest
            if not ind[mask ^ bit]:
                return AxiomReport(False, "hereditary", (unmask(mask ^ bit), unmask(mask)))
            rest ^= bit

    by_size: dict = {}
    for mask in range(1 << n):
        if ind[mask]:
            by_size.setdefault(bin(mask).count("1"), []).append(mask)
    for size in range(n):
        for a in by_size.get(size, ()):
            for b in by_size.get(size + 1, ()):
                free = b & ~a
                augmentable = False
                while free:
                    bit = free & -free
                    if ind[a | bit]:
                        augmentable = True
                        break
                    free ^= bit
                if not augmentable:
                    return AxiomReport(False, "exchange", (unmask(a), unmask(b)))
    return AxiomReport(True)
