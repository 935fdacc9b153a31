"""Instance model, the JSON interchange format, and seeded generators.

All rationals cross the JSON boundary as "num/den" strings; the only floats
in any emitted document are analysis-side quantities (discriminants, optimal
thresholds) printed with 17 significant digits. Every generator is a pure
function of (seed, config), so identical inputs produce byte-identical
instances.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .errors import InputError
from .matroids import (Element, ExplicitFamily, GraphicMatroid, Matroid,
                       PartitionMatroid, UniformMatroid)

OPTIMAL = "optimal"

SEED_ENV_VAR = "BUYBACK_SEED"

# prime larger than any weight denominator or instance size we generate;
# perturbing element i by (i+1)/_PERTURB_PRIME guarantees distinct weights
_PERTURB_PRIME = 1_000_003


def parse_ratio(value) -> Fraction:
    """Parse a JSON-side number: "num/den" string, bare int, or decimal string."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise InputError(f"expected a rational, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"cannot parse rational {value!r}: {exc}") from None
    raise InputError(f"expected a rational, got {value!r}")


def format_ratio(value: Fraction) -> str:
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


@dataclass
class Instance:
    """One complete run description: elements, k constraints, order, f and r."""

    elements: list
    matroids: list
    arrival_order: list
    penalty_f: Fraction = Fraction(0)
    threshold_r: Union[Fraction, str] = OPTIMAL

    def __post_init__(self):
        ids = [e.id for e in self.elements]
        if len(set(ids)) != len(ids):
            raise InputError("element ids must be unique")
        if not self.matroids:
            raise InputError("at least one constraint is required (k >= 1)")
        if sorted(self.arrival_order) != sorted(ids):
            raise InputError("arrival order must be a permutation of the element ids")
        self.penalty_f = Fraction(self.penalty_f)
        if self.penalty_f < 0:
            raise InputError("penalty factor f must be nonnegative")
        if self.threshold_r != OPTIMAL:
            self.threshold_r = Fraction(self.threshold_r)
            if self.threshold_r < 1:
                raise InputError("threshold r must be at least 1")
        for m in self.matroids:
            for eid in ids:
                if not m.knows(eid):
                    raise InputError(f"matroid {m!r} does not cover element {eid}")

    @property
    def k(self) -> int:
        return len(self.matroids)

    def weight_of(self, eid: int) -> Fraction:
        return self._weights()[eid]

    def _weights(self):
        if not hasattr(self, "_weight_map"):
            self._weight_map = {e.id: e.weight for e in self.elements}
        return self._weight_map


def matroid_to_json(m: Matroid) -> dict:
    if isinstance(m, UniformMatroid):
        return {"type": "uniform", "rank": m.max_size}
    if isinstance(m, PartitionMatroid):
        return {"type": "partition",
                "classes": {str(e): c for e, c in sorted(m.class_of.items())},
                "capacities": list(m.capacities)}
    if isinstance(m, GraphicMatroid):
        return {"type": "graphic", "vertices": m.vertex_count,
                "endpoints": {str(e): list(uv) for e, uv in sorted(m.endpoints.items())}}
    if isinstance(m, ExplicitFamily):
        return {"type": "family", "maximal": [sorted(s) for s in m.maximal_sets]}
    raise InputError(f"cannot serialize matroid {m!r}")


def matroid_from_json(obj) -> Matroid:
    if not isinstance(obj, dict) or "type" not in obj:
        raise InputError(f"matroid descriptor must be an object with a 'type', got {obj!r}")
    kind = obj["type"]
    try:
        if kind == "uniform":
            return UniformMatroid(obj["rank"])
        if kind == "partition":
            return PartitionMatroid({int(e): c for e, c in obj["classes"].items()},
                                    obj["capacities"])
        if kind == "graphic":
            return GraphicMatroid(obj["vertices"],
                                  {int(e): tuple(uv) for e, uv in obj["endpoints"].items()})
        if kind == "family":
            return ExplicitFamily(obj["maximal"])
    except KeyError as exc:
        raise InputError(f"matroid descriptor missing field {exc}") from None
    raise InputError(f"unknown matroid type {kind!r}")


def instance_to_json(inst: Instance) -> dict:
    r = inst.threshold_r
    return {
        "k": inst.k,
        "f": format_ratio(inst.penalty_f),
        "r": OPTIMAL if r == OPTIMAL else format_ratio(r),
        "elements": [{"id": e.id, "weight": format_ratio(e.weight)} for e in inst.elements],
        "matroids": [matroid_to_json(m) for m in inst.matroids],
        "order": list(inst.arrival_order),
    }


def instance_from_json(obj) -> Instance:
    if not isinstance(obj, dict):
        raise InputError("instance document must be a JSON object")
    try:
        elements = [Element(int(e["id"]), parse_ratio(e["weight"])) for e in obj["elements"]]
        matroids = [matroid_from_json(m) for m in obj["matroids"]]
        order = [int(x) for x in obj["order"]]
        f = parse_ratio(obj.get("f", 0))
        r_raw = obj.get("r", OPTIMAL)
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed instance document: {exc}") from None
    if "k" in obj and obj["k"] != len(matroids):
        raise InputError(f"declared k={obj['k']} but {len(matroids)} matroids given")
    r = OPTIMAL if r_raw == OPTIMAL else parse_ratio(r_raw)
    return Instance(elements, matroids, order, f, r)


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_json(inst), indent=2, sort_keys=True)


def loads_instance(text: str) -> Instance:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return instance_from_json(obj)


GENERATOR_KINDS = ("bipartite-matching", "random-partition-intersection",
                   "graphic-intersection", "free-disposal", "star")

ORDERS = ("as-generated", "random", "ascending", "descending")


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int
    kind: str
    n: int
    k: int = 2
    f: Fraction = Fraction(0)
    r: Union[Fraction, str] = OPTIMAL
    weight_range: tuple = (Fraction(0), Fraction(10))
    order: str = "as-generated"

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise InputError(f"unknown generator kind {self.kind!r}")
        if self.order not in ORDERS:
            raise InputError(f"unknown order {self.order!r}")
        if self.n < 0:
            raise InputError("n must be nonnegative")
        lo, hi = self.weight_range
        if not (0 <= lo <= hi):
            raise InputError("weight range must satisfy 0 <= lo <= hi")

    def to_json(self) -> dict:
        return {"seed": self.seed, "kind": self.kind, "n": self.n, "k": self.k,
                "f": format_ratio(self.f),
                "r": OPTIMAL if self.r == OPTIMAL else format_ratio(self.r),
                "weight_range": [format_ratio(self.weight_range[0]),
                                 format_ratio(self.weight_range[1])],
                "order": self.order}

    @staticmethod
    def from_json(obj) -> "GeneratorConfig":
        try:
            wr = obj.get("weight_range", ["0/1", "10/1"])
            r_raw = obj.get("r", OPTIMAL)
            return GeneratorConfig(
                seed=int(obj["seed"]), kind=obj["kind"], n=int(obj["n"]),
                k=int(obj.get("k", 2)), f=parse_ratio(obj.get("f", 0)),
                r=OPTIMAL if r_raw == OPTIMAL else parse_ratio(r_raw),
                weight_range=(parse_ratio(wr[0]), parse_ratio(wr[1])),
                order=obj.get("order", "as-generated"))
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed generator config: {exc}") from None


def _effective_seed(config: GeneratorConfig) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return config.seed


def _draw_weights(rng: random.Random, config: GeneratorConfig, n: int) -> list:
    """Bounded-denominator rationals, then a distinct tiny perturbation each.

    Base denominators stay below _PERTURB_PRIME, so w_i - w_j can never equal
    (j - i)/_PERTURB_PRIME: all perturbed weights are pairwise distinct.
    """
    lo, hi = config.weight_range
    weights = []
    for i in range(n):
        den = rng.randint(1, 16)
        lo_num = -(-lo.numerator * den // lo.denominator)  # ceil(lo*den)
        hi_num = hi.numerator * den // hi.denominator      # floor(hi*den)
        num = rng.randint(lo_num, max(lo_num, hi_num))
        weights.append(Fraction(num, den) + Fraction(i + 1, _PERTURB_PRIME))
    return weights


def _apply_order(rng: random.Random, config: GeneratorConfig, elements: list) -> list:
    ids = [e.id for e in elements]
    if config.order == "random":
        rng.shuffle(ids)
    elif config.order == "ascending":
        ids = [e.id for e in sorted(elements, key=lambda e: (e.weight, e.id))]
    elif config.order == "descending":
        ids = [e.id for e in sorted(elements, key=lambda e: (-e.weight, e.id))]
    return ids


def gen(config: GeneratorConfig) -> Instance:
    """Build a deterministic instance from the config (seed overridable via env)."""
    rng = random.Random(_effective_seed(config))
    kind = config.kind

    if kind == "bipartite-matching":
        side = config.n
        ids = list(range(side * side))
        elements = [Element(i, w) for i, w in zip(ids, _draw_weights(rng, config, len(ids)))]
        rows = {i: i // side for i in ids}
        cols = {i: i % side for i in ids}
        matroids = [PartitionMatroid(rows, [1] * side), PartitionMatroid(cols, [1] * side)]
        return Instance(elements, matroids, _apply_order(rng, config, elements),
                        config.f, config.r)

    if kind == "random-partition-intersection":
        ids = list(range(config.n))
        elements = [Element(i, w) for i, w in zip(ids, _draw_weights(rng, config, len(ids)))]
        matroids = []
        classes = max(1, config.n // 2)
        for _ in range(max(1, config.k)):
            class_of = {i: rng.randrange(classes) for i in ids}
            caps = [rng.randint(1, 3) for _ in range(classes)]
            matroids.append(PartitionMatroid(class_of, caps))
        return Instance(elements, matroids, _apply_order(rng, config, elements),
                        config.f, config.r)

    if kind == "graphic-intersection":
        ids = list(range(config.n))
        elements = [Element(i, w) for i, w in zip(ids, _draw_weights(rng, config, len(ids)))]
        vertices = max(2, (config.n + 2) // 2)
        matroids = []
        for _ in range(max(1, config.k)):
            endpoints = {}
            for i in ids:
                u = rng.randrange(vertices)
                v = rng.randrange(vertices - 1)
                if v >= u:
                    v += 1
                endpoints[i] = (u, v)
            matroids.append(GraphicMatroid(vertices, endpoints))
        return Instance(elements, matroids, _apply_order(rng, config, elements),
                        config.f, config.r)

    if kind == "free-disposal":
        # one element per (impression, advertiser) pair; overdelivery to an
        # advertiser is displaced at no charge, which is exactly f = 0
        advertisers = max(1, config.n // 3)
        ids = list(range(config.n))
        elements = [Element(i, w) for i, w in zip(ids, _draw_weights(rng, config, len(ids)))]
        impression_of = {i: i // advertisers for i in ids}
        advertiser_of = {i: i % advertisers for i in ids}
        impressions = max(impression_of.values()) + 1 if ids else 1
        contracts = [rng.randint(1, 3) for _ in range(advertisers)]
        matroids = [PartitionMatroid(impression_of, [1] * impressions),
                    PartitionMatroid(advertiser_of, contracts)]
        return Instance(elements, matroids, _apply_order(rng, config, elements),
                        Fraction(0), config.r)

    if kind == "star":
        if config.n < 3:
            raise InputError("star instances need n >= 3")
        eps = Fraction(1, 1000)
        elements = [Element(0, Fraction(1)), Element(1, Fraction(1))]
        elements += [Element(i, 1 - eps) for i in range(2, config.n)]
        # vertex 0 is the hub: independent sets of the star are the hub alone
        # or any set of leaves
        family = ExplicitFamily([list(range(1, config.n)), [0]])
        return Instance(elements, [family], list(range(config.n)), config.f, config.r)

    raise InputError(f"unknown generator kind {kind!r}")
