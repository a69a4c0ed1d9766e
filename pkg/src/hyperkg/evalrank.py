"""Filtered ranking evaluation (MRR, Hits@k) over every position of every test fact."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import FactSet, Hyperedge, KnowledgeHypergraph, Query, query_from_fact
from .errors import TruthNotInCandidates, UnknownEntity, UnknownRelation

HITS_AT = (1, 3, 10)

Scorer = Callable[[KnowledgeHypergraph, list, list], np.ndarray]


def filtered_candidates(graph: KnowledgeHypergraph, query: Query, truth: int, filt: FactSet) -> np.ndarray:
    """Entities whose substitution at the masked slot is not a known fact, plus ``truth``."""
    known = filt.completions(query)
    keep = np.ones(graph.num_entities, dtype=bool)
    if known:
        keep[np.fromiter(known, dtype=np.int64, count=len(known))] = False
    keep[truth] = True
    return np.flatnonzero(keep)


def rank_of(scores: np.ndarray, truth: int, candidates: Sequence[int]) -> float:
    """Expected rank of ``truth`` among ``candidates`` when ties are broken at random."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if not np.any(candidates == truth):
        raise TruthNotInCandidates(f"entity {truth} is not a candidate")
    s = np.asarray(scores)[candidates]
    ts = scores[truth]
    greater = int(np.sum(s > ts))
    equal = int(np.sum(s == ts)) - 1
    return 1.0 + greater + equal / 2.0


@dataclass
class Metrics:
    mrr: float
    hits: dict[int, float]
    count: int
    per_arity: dict[int, "Metrics"] = field(default_factory=dict)

    @classmethod
    def from_ranks(cls, ranks: Iterable[float]) -> "Metrics":
        r = np.asarray(list(ranks), dtype=np.float64)
        if not len(r):
            return cls(0.0, {k: 0.0 for k in HITS_AT}, 0)
        return cls(float(np.mean(1.0 / r)), {k: float(np.mean(r <= k)) for k in HITS_AT}, len(r))

    def as_dict(self) -> dict:
        out = {"mrr": self.mrr, **{f"hits@{k}": v for k, v in self.hits.items()}, "queries": self.count}
        for k in sorted(self.per_arity):
            m = self.per_arity[k]
            out[f"arity{k}.mrr"] = m.mrr
            out.update({f"arity{k}.hits@{h}": v for h, v in m.hits.items()})
            out[f"arity{k}.queries"] = m.count
        return out


def facts_in_graph(graph: KnowledgeHypergraph, facts: Iterable[tuple[str, Sequence[str]]]) -> list[Hyperedge]:
    """Translate named facts into the graph's id space."""
    out = []
    for rel, ents in facts:
        r = graph.relation_vocab.get(rel)
        if r is None:
            raise UnknownRelation(rel)
        ids = []
        for name in ents:
            v = graph.entity_vocab.get(name)
            if v is None:
                raise UnknownEntity(name)
            ids.append(v)
        out.append(Hyperedge(r, tuple(ids)))
    return out


def model_scorer(model) -> Scorer:
    return lambda graph, queries, exclude: model.score_batch(graph, queries, exclude)


def rank_queries(
    scorer,
    graph: KnowledgeHypergraph,
    facts: Sequence[Hyperedge],
    filt: FactSet,
    batch_size: int = 16,
    exclude_own_edge: bool = True,
) -> list[tuple[int, float]]:
    """``(arity, rank)`` for every (fact, position) query."""
    if not callable(scorer):
        scorer = model_scorer(scorer)
    lookup = {(e.relation, e.entities): i for i, e in enumerate(graph.edges)} if exclude_own_edge else {}
    jobs = [(e, t) for e in facts for t in range(1, e.arity + 1)]
    out = []
    for start in range(0, len(jobs), batch_size):
        chunk = jobs[start : start + batch_size]
        queries = [query_from_fact(e, t) for e, t in chunk]
        exclude = [lookup.get((e.relation, e.entities)) for e, _ in chunk]
        scores = np.asarray(scorer(graph, queries, exclude))
        for row, (e, t), q in zip(scores, chunk, queries):
            truth = e.entities[t - 1]
            out.append((e.arity, rank_of(row, truth, filtered_candidates(graph, q, truth, filt))))
    return out


def evaluate(
    scorer,
    graph: KnowledgeHypergraph,
    facts: Sequence[Hyperedge],
    filt: FactSet,
    batch_size: int = 16,
    exclude_own_edge: bool = True,
) -> Metrics:
    """Filtered MRR and Hits@{1,3,10}, overall and per arity.

    ``scorer`` is a model (anything with ``score_batch``) or a callable
    ``(graph, queries, exclude_edges) -> (B, V) scores``.
    """
    ranked = rank_queries(scorer, graph, facts, filt, batch_size, exclude_own_edge)
    by_arity = defaultdict(list)
    for k, r in ranked:
        by_arity[k].append(r)
    metrics = Metrics.from_ranks(r for _, r in ranked)
    metrics.per_arity = {k: Metrics.from_ranks(v) for k, v in sorted(by_arity.items())}
    return metrics


def format_metrics(metrics: Metrics) -> str:
    """Flat JSON-style text, one key per line."""
    items = metrics.as_dict()
    body = ",\n".join(f'  "{k}": {v:.6f}' if isinstance(v, float) else f'  "{k}": {v}' for k, v in items.items())
    return "{\n" + body + "\n}\n"
