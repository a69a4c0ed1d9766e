"""Relation graph construction.

Nodes are relations; a directed edge ``(r1, r2, (a, b))`` records that some
entity sits at position ``a`` of an ``r1`` fact and at position ``b`` of an
``r2`` fact. Built with one sparse product per position pair, plus a
brute-force enumeration used as the test oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import product

import numpy as np
import scipy.sparse as sp

from .core import KnowledgeHypergraph
from .errors import EmptyGraph, HyperError


class Mode(str, Enum):
    EXCLUDE_SAME_EDGE = "exclude-same-edge"
    RAW_SPMM = "raw-spmm"


@dataclass
class SparsePositionMatrix:
    """|V| x |R| incidence counts for one position ``a``.

    Entry ``(v, r)`` counts the ``r`` facts holding ``v`` at position ``a``.
    Stored as coordinate triplets sorted by (row, col).
    """

    position: int
    shape: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    counts: np.ndarray

    def nonzeros(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.counts, (self.rows, self.cols)), shape=self.shape)


@dataclass
class RelationGraph:
    """Typed directed edges between relations, deduplicated and sorted."""

    num_relations: int
    src: np.ndarray
    dst: np.ndarray
    a: np.ndarray
    b: np.ndarray
    k_max: int
    _pairs: tuple | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, num_relations: int, edges, k_max: int) -> "RelationGraph":
        edges = sorted(set(edges))
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 4)
        return cls(num_relations, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], k_max)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def edge_set(self) -> set[tuple[int, int, int, int]]:
        return set(zip(self.src.tolist(), self.dst.tolist(), self.a.tolist(), self.b.tolist()))

    def position_pairs(self) -> tuple[list[tuple[int, int]], np.ndarray]:
        """Distinct ``(a, b)`` labels and, per edge, the index of its label."""
        if self._pairs is None:
            labels = list(zip(self.a.tolist(), self.b.tolist()))
            uniq = sorted(set(labels))
            lookup = {p: i for i, p in enumerate(uniq)}
            self._pairs = (uniq, np.array([lookup[p] for p in labels], dtype=np.int64))
        return self._pairs

    def is_symmetric(self) -> bool:
        s = self.edge_set()
        return all((r2, r1, b, a) in s for r1, r2, a, b in s)


def position_matrix(graph: KnowledgeHypergraph, a: int) -> SparsePositionMatrix:
    if a < 1:
        raise HyperError(f"position must be >= 1, got {a}")
    shape = (graph.num_entities, graph.num_relations)
    if graph.num_edges == 0 or a > graph.edge_matrix.shape[1]:
        empty = np.zeros(0, dtype=np.int64)
        return SparsePositionMatrix(a, shape, empty, empty, empty)
    col = graph.edge_matrix[:, a - 1]
    mask = col >= 0
    ents, rels = col[mask], graph.edge_relation[mask]
    key = ents * graph.num_relations + rels
    uniq, counts = np.unique(key, return_counts=True)
    return SparsePositionMatrix(
        a, shape, uniq // graph.num_relations, uniq % graph.num_relations, counts.astype(np.int64)
    )


def _self_pair_counts(graph: KnowledgeHypergraph, a: int, b: int) -> dict[tuple[int, int], int]:
    """How many (e, e) pairs the product counts for positions (a, b): one per
    edge whose entities at a and b coincide."""
    mat = graph.edge_matrix
    if a > mat.shape[1] or b > mat.shape[1]:
        return {}
    ea, eb = mat[:, a - 1], mat[:, b - 1]
    hit = (ea >= 0) & (ea == eb)
    rels, counts = np.unique(graph.edge_relation[hit], return_counts=True)
    return {(int(r), int(r)): int(c) for r, c in zip(rels, counts)}


def build_relation_graph(
    graph: KnowledgeHypergraph, mode: Mode | str = Mode.EXCLUDE_SAME_EDGE
) -> RelationGraph:
    """Relation graph via ``A_ab = E_a^T E_b`` for every position pair.

    In ``exclude-same-edge`` mode the contribution of each hyperedge paired
    with itself is subtracted before thresholding the counts.
    """
    mode = Mode(mode)
    if graph.num_edges == 0:
        raise EmptyGraph("cannot build a relation graph without edges")
    k = graph.max_arity
    mats = [position_matrix(graph, a).to_csr() for a in range(1, k + 1)]
    edges = []
    for a, b in product(range(1, k + 1), repeat=2):
        prod = (mats[a - 1].T @ mats[b - 1]).tocoo()
        counts = {(int(i), int(j)): int(c) for i, j, c in zip(prod.row, prod.col, prod.data)}
        if mode is Mode.EXCLUDE_SAME_EDGE:
            for key, c in _self_pair_counts(graph, a, b).items():
                counts[key] = counts.get(key, 0) - c
        edges.extend((r1, r2, a, b) for (r1, r2), c in counts.items() if c > 0)
    return RelationGraph.from_edges(graph.num_relations, edges, k)


def brute_force_relation_graph(
    graph: KnowledgeHypergraph, mode: Mode | str = Mode.EXCLUDE_SAME_EDGE
) -> RelationGraph:
    """O(|E|^2 k^2) enumeration over hyperedge pairs. Test oracle only."""
    mode = Mode(mode)
    edges = set()
    es = graph.edges
    for i, e1 in enumerate(es):
        for j, e2 in enumerate(es):
            if i == j and mode is Mode.EXCLUDE_SAME_EDGE:
                continue
            for a, u in enumerate(e1.entities, 1):
                for b, w in enumerate(e2.entities, 1):
                    if u == w:
                        edges.add((e1.relation, e2.relation, a, b))
    return RelationGraph.from_edges(graph.num_relations, edges, graph.max_arity)


def relation_graph_lines(graph: KnowledgeHypergraph, rel_graph: RelationGraph) -> list[str]:
    name = graph.relation_vocab.name
    return [
        f"{name(r1)}\t{name(r2)}\t{a}\t{b}"
        for r1, r2, a, b in zip(
            rel_graph.src.tolist(), rel_graph.dst.tolist(), rel_graph.a.tolist(), rel_graph.b.tolist()
        )
    ]
