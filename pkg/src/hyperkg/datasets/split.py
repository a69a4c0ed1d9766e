"""Node- and relation-inductive train/inference splits of a knowledge hypergraph."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import KnowledgeHypergraph, from_name_facts, giant_connected_component, write_facts
from ..errors import DegenerateSplit, EmptyGraph

log = logging.getLogger(__name__)

Fact = tuple[str, tuple[str, ...]]


@dataclass(frozen=True)
class SplitParams:
    n_train: int
    n_test: int
    p_rel: float
    p_tri: float
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.p_rel <= 1 and 0 <= self.p_tri <= 1):
            raise ValueError("p_rel and p_tri must lie in [0, 1]")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("entity sample counts must be positive")


@dataclass
class InductiveSplit:
    train: list[Fact]
    aux: list[Fact]
    valid: list[Fact]
    test: list[Fact]
    train_relations: frozenset
    unseen_fraction: float  # share of inference facts whose relation is not a training relation
    dropped_valid: int = 0
    dropped_test: int = 0
    info: dict = field(default_factory=dict)

    @property
    def inference_facts(self) -> list[Fact]:
        return self.aux + self.valid + self.test

    def train_graph(self) -> KnowledgeHypergraph:
        return from_name_facts(self.train)

    def inference_graph(self) -> KnowledgeHypergraph:
        """Aux facts as edges; every valid/test entity and relation is in the vocabulary."""
        facts = self.inference_facts
        ents = [e for _, es in facts for e in es]
        rels = {}
        for r, es in facts:
            rels.setdefault(r, len(es))
        return from_name_facts(self.aux, entities=ents, relations=rels)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_facts(out / "train.txt", self.train)
        write_facts(out / "inference.txt", self.aux)
        write_facts(out / "valid.txt", self.valid)
        write_facts(out / "test.txt", self.test)


def _facts(graph: KnowledgeHypergraph) -> list[Fact]:
    return list(graph.iter_fact_names())


def _gcc(facts: list[Fact], stage: str) -> list[Fact]:
    if not facts:
        raise DegenerateSplit(f"{stage}: no facts left")
    try:
        return _facts(giant_connected_component(from_name_facts(facts)))
    except EmptyGraph:
        raise DegenerateSplit(f"{stage}: no facts left") from None


def _sample_with_neighbors(facts: list[Fact], pool: list[str], n: int, rng) -> set[str]:
    if not pool:
        raise DegenerateSplit("no entities to sample from")
    chosen = set(rng.choice(len(pool), size=min(n, len(pool)), replace=False).tolist())
    seeds = {pool[i] for i in chosen}
    out = set(seeds)
    for _, ents in facts:
        if seeds.intersection(ents):
            out.update(ents)
    return out


def _downsample(items: list, k: int, rng) -> list:
    if k >= len(items):
        return items
    keep = np.sort(rng.choice(len(items), size=k, replace=False))
    return [items[i] for i in keep]


def mix_by_ratio(x: list, y: list, p_tri: float, rng) -> tuple[list, list]:
    """Downsample the over-represented side so that ``|y| / (|x| + |y|) ~ p_tri``."""
    if p_tri <= 0:
        return x, []
    if p_tri >= 1:
        return [], y
    if len(y) * (1 - p_tri) > len(x) * p_tri:
        y = _downsample(y, int(round(len(x) * p_tri / (1 - p_tri))), rng)
    else:
        x = _downsample(x, int(round(len(y) * (1 - p_tri) / p_tri)), rng)
    return x, y


def generate_split(graph: KnowledgeHypergraph, params: SplitParams) -> InductiveSplit:
    rng = np.random.default_rng(params.seed)
    facts = _gcc(_facts(graph), "source component")

    relations = sorted({r for r, _ in facts})
    order = rng.permutation(len(relations))
    n_inf = int(round(params.p_rel * len(relations)))
    r_inf = {relations[i] for i in order[:n_inf]}
    r_train = set(relations) - r_inf

    entities = sorted({e for _, es in facts for e in es})
    v_train = _sample_with_neighbors(facts, entities, params.n_train, rng)
    e_train = [f for f in facts if f[0] in r_train and v_train.issuperset(f[1])]
    e_train = _gcc(e_train, "training graph")
    v_train = {e for _, es in e_train for e in es}
    r_train = {r for r, _ in e_train}

    rest = [f for f in facts if v_train.isdisjoint(f[1])]
    rest_entities = sorted({e for _, es in rest for e in es})
    v_inf = _sample_with_neighbors(rest, rest_entities, params.n_test, rng)
    inside = [f for f in rest if v_inf.issuperset(f[1])]
    x = [f for f in inside if f[0] in r_train]
    y = [f for f in inside if f[0] in r_inf]
    x, y = mix_by_ratio(x, y, params.p_tri, rng)
    e_inf = _gcc(x + y, "inference graph")

    unseen = sum(r not in r_train for r, _ in e_inf) / len(e_inf)
    perm = rng.permutation(len(e_inf))
    n_val = n_test = len(e_inf) // 5
    valid = [e_inf[i] for i in np.sort(perm[:n_val])]
    test = [e_inf[i] for i in np.sort(perm[n_val : n_val + n_test])]
    aux = [e_inf[i] for i in np.sort(perm[n_val + n_test :])]

    # queries over relations with no evidence anywhere cannot be answered
    known = r_train | {r for r, _ in aux}
    valid_kept = [f for f in valid if f[0] in known]
    test_kept = [f for f in test if f[0] in known]
    dropped_valid, dropped_test = len(valid) - len(valid_kept), len(test) - len(test_kept)
    if dropped_valid or dropped_test:
        log.info("dropped %d valid and %d test facts with unseen-everywhere relations", dropped_valid, dropped_test)
    if not aux:
        raise DegenerateSplit("auxiliary set is empty")
    return InductiveSplit(
        e_train,
        aux,
        valid_kept,
        test_kept,
        frozenset(r_train),
        unseen,
        dropped_valid,
        dropped_test,
        {"source_facts": len(facts), "inference_facts": len(e_inf), "inference_relations_held_out": len(r_inf)},
    )
