"""Position corruption and descriptive statistics."""
from __future__ import annotations

import numpy as np

from ..core import Hyperedge, KnowledgeHypergraph
from ..errors import UnknownRelation


def corrupt_positions(
    graph: KnowledgeHypergraph, relation: int | str, fraction: float, rng: np.random.Generator
) -> KnowledgeHypergraph:
    """Shuffle the arguments of a ``fraction`` of one relation's hyperedges, each
    edge with its own random permutation. Other edges and all vocabularies are kept.

    The permutation is uniform over the non-identity ones, so every chosen edge
    of arity >= 2 really moves; arity-1 edges are left as they are."""
    if isinstance(relation, str):
        relation = graph.relation(relation)
    if not 0 <= relation < graph.num_relations or not np.any(graph.edge_relation == relation):
        raise UnknownRelation(relation)
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    idx = np.flatnonzero(graph.edge_relation == relation)
    n = int(round(fraction * len(idx)))
    chosen = np.sort(rng.choice(idx, size=n, replace=False)) if n else np.zeros(0, dtype=np.int64)
    edges = list(graph.edges)
    for i in chosen.tolist():
        e = edges[i]
        perm = _moving_permutation(rng, e.arity)
        edges[i] = Hyperedge(e.relation, tuple(e.entities[j] for j in perm))
    # a shuffle may recreate another stored fact; keep the edge list as is so |E| is preserved
    return graph.with_edges(edges)


def _moving_permutation(rng: np.random.Generator, k: int) -> np.ndarray:
    ident = np.arange(k)
    while True:
        perm = rng.permutation(k)
        if k < 2 or not np.array_equal(perm, ident):
            return perm


def stats(graph: KnowledgeHypergraph) -> dict:
    counts = np.bincount(graph.edge_arity, minlength=graph.max_arity + 1) if graph.num_edges else np.zeros(1)
    hist = {k: int(c) for k, c in enumerate(counts) if c}
    total = max(graph.num_edges, 1)
    return {
        "entities": graph.num_entities,
        "relations": graph.num_relations,
        "edges": graph.num_edges,
        "max_arity": graph.max_arity,
        "arity_counts": hist,
        "arity_percent": {k: 100.0 * c / total for k, c in hist.items()},
    }


def format_stats(s: dict) -> str:
    lines = [f"entities\t{s['entities']}", f"relations\t{s['relations']}", f"edges\t{s['edges']}",
             f"max_arity\t{s['max_arity']}", "arity\tcount\tpercent"]
    lines += [f"{k}\t{c}\t{s['arity_percent'][k]:.2f}" for k, c in sorted(s["arity_counts"].items())]
    return "\n".join(lines) + "\n"
