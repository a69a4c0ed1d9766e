"""In-memory knowledge hypergraphs, queries and the fact-file text format.

Positions are 1-based everywhere a caller can see them. Internally the edge
table is a padded ``(num_edges, max_arity)`` integer matrix with ``-1`` in the
unused slots, which is what the numeric kernels consume.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    ArityConflict,
    EmptyFile,
    EmptyGraph,
    HyperError,
    PositionOutOfRange,
    UnknownEntity,
    UnknownRelation,
)

log = logging.getLogger(__name__)

RESERVED_PREFIX = "__edge_"


class Vocab:
    """Dense bidirectional name <-> index map, ordered by insertion."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            idx = len(self._names)
            self._names.append(name)
            self._index[name] = idx
        return idx

    def index(self, name: str) -> int:
        return self._index[name]

    def name(self, idx: int) -> str:
        return self._names[idx]

    def get(self, name: str, default=None):
        return self._index.get(name, default)

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __contains__(self, name) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._names == other._names

    def __repr__(self) -> str:
        return f"Vocab({len(self)} names)"


@dataclass(frozen=True)
class Hyperedge:
    relation: int
    entities: tuple[int, ...]

    @property
    def arity(self) -> int:
        return len(self.entities)

    def entity_at(self, position: int) -> int:
        if not 1 <= position <= len(self.entities):
            raise PositionOutOfRange(position)
        return self.entities[position - 1]


@dataclass(frozen=True)
class Query:
    """A fact with one position masked: ``relation(observed..., ?)``.

    ``observed`` holds ``(position, entity)`` pairs for every position except
    ``masked_position``, in ascending position order.
    """

    relation: int
    observed: tuple[tuple[int, int], ...]
    masked_position: int

    @property
    def arity(self) -> int:
        return len(self.observed) + 1

    def validate(self, arity: int) -> None:
        positions = [p for p, _ in self.observed]
        if not 1 <= self.masked_position <= arity:
            raise PositionOutOfRange(self.masked_position)
        expected = [p for p in range(1, arity + 1) if p != self.masked_position]
        if positions != expected:
            raise HyperError(f"query positions {positions} do not cover {expected}")

    def complete(self, entity: int) -> tuple[int, ...]:
        """The full entity tuple obtained by placing ``entity`` at the masked slot."""
        out = [0] * self.arity
        for pos, ent in self.observed:
            out[pos - 1] = ent
        out[self.masked_position - 1] = entity
        return tuple(out)


class KnowledgeHypergraph:
    """Immutable knowledge hypergraph ``G = (V, E, R)`` with an incidence index.

    The entity and relation vocabularies may contain names that occur in no
    edge; this is how an inference graph makes room for candidate entities and
    query relations that only appear in held-out facts.
    """

    def __init__(
        self,
        entity_vocab: Vocab,
        relation_vocab: Vocab,
        arity: Sequence[int],
        edges: Sequence[Hyperedge],
        duplicates_dropped: int = 0,
    ):
        self.entity_vocab = entity_vocab
        self.relation_vocab = relation_vocab
        self.arity = np.asarray(arity, dtype=np.int64)
        self.edges: tuple[Hyperedge, ...] = tuple(edges)
        self.duplicates_dropped = duplicates_dropped
        if len(self.arity) != len(relation_vocab):
            raise HyperError("arity table does not match relation vocabulary")
        if np.any(self.arity < 1):
            raise HyperError("arity must be positive")
        n_ent = len(entity_vocab)
        for e in self.edges:
            if not 0 <= e.relation < len(relation_vocab):
                raise UnknownRelation(e.relation)
            if len(e.entities) != self.arity[e.relation]:
                raise ArityConflict(
                    f"edge of {relation_vocab.name(e.relation)} has {len(e.entities)} "
                    f"arguments, arity is {self.arity[e.relation]}"
                )
            for v in e.entities:
                if not 0 <= v < n_ent:
                    raise UnknownEntity(v)
        self._build_tables()

    def _build_tables(self) -> None:
        n_edges = len(self.edges)
        kmax = max((e.arity for e in self.edges), default=0)
        mat = np.full((n_edges, kmax), -1, dtype=np.int64)
        rel = np.empty(n_edges, dtype=np.int64)
        ar = np.empty(n_edges, dtype=np.int64)
        for i, e in enumerate(self.edges):
            mat[i, : e.arity] = e.entities
            rel[i] = e.relation
            ar[i] = e.arity
        self.edge_matrix = mat
        self.edge_relation = rel
        self.edge_arity = ar
        for a in (mat, rel, ar):
            a.setflags(write=False)

        # incidence in CSR form, ordered by (entity, edge, position)
        edge_idx, pos_idx = np.nonzero(mat >= 0)
        ents = mat[edge_idx, pos_idx]
        order = np.lexsort((pos_idx, edge_idx, ents))
        self._inc_edge = edge_idx[order]
        self._inc_pos = pos_idx[order] + 1
        counts = np.bincount(ents, minlength=self.num_entities)
        self._inc_ptr = np.concatenate([[0], np.cumsum(counts)])

    # -- sizes ---------------------------------------------------------------
    @property
    def num_entities(self) -> int:
        return len(self.entity_vocab)

    @property
    def num_relations(self) -> int:
        return len(self.relation_vocab)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def max_arity(self) -> int:
        """k_max over relations occurring in at least one edge (0 if none)."""
        return int(self.edge_arity.max()) if self.num_edges else 0

    def __len__(self) -> int:
        return self.num_edges

    def __repr__(self) -> str:
        return (
            f"KnowledgeHypergraph(|V|={self.num_entities}, |R|={self.num_relations}, "
            f"|E|={self.num_edges})"
        )

    # -- lookups -------------------------------------------------------------
    def entity(self, name: str) -> int:
        idx = self.entity_vocab.get(name)
        if idx is None:
            raise UnknownEntity(name)
        return idx

    def relation(self, name: str) -> int:
        idx = self.relation_vocab.get(name)
        if idx is None:
            raise UnknownRelation(name)
        return idx

    def incidence_of(self, v: int) -> list[tuple[int, int]]:
        """E(v): every ``(edge index, position)`` where ``v`` appears."""
        if not 0 <= v < self.num_entities:
            raise UnknownEntity(v)
        lo, hi = self._inc_ptr[v], self._inc_ptr[v + 1]
        return list(zip(self._inc_edge[lo:hi].tolist(), self._inc_pos[lo:hi].tolist()))

    def fact_names(self, edge: Hyperedge) -> tuple[str, tuple[str, ...]]:
        return (
            self.relation_vocab.name(edge.relation),
            tuple(self.entity_vocab.name(v) for v in edge.entities),
        )

    def iter_fact_names(self) -> Iterator[tuple[str, tuple[str, ...]]]:
        for e in self.edges:
            yield self.fact_names(e)

    def fact_set(self) -> "FactSet":
        return FactSet(self.edges)

    # -- structural edits (all return new graphs) ------------------------------
    def with_edges(self, edges: Sequence[Hyperedge]) -> "KnowledgeHypergraph":
        """Same vocabularies, different edge list."""
        return KnowledgeHypergraph(self.entity_vocab, self.relation_vocab, self.arity, edges)

    def subgraph(self, edge_indices: Iterable[int], densify: bool = True) -> "KnowledgeHypergraph":
        edges = [self.edges[i] for i in edge_indices]
        if not densify:
            return self.with_edges(edges)
        return from_name_facts(self.fact_names(e) for e in edges)

    def with_vocab(
        self, entities: Iterable[str] = (), relations: dict[str, int] | None = None
    ) -> "KnowledgeHypergraph":
        """Inject extra entity/relation names (with arities) into the vocabularies."""
        ev = Vocab(self.entity_vocab)
        rv = Vocab(self.relation_vocab)
        arity = list(self.arity.tolist())
        for name in entities:
            ev.add(name)
        for name, k in (relations or {}).items():
            if name in rv:
                if arity[rv.index(name)] != k:
                    raise ArityConflict(name)
                continue
            rv.add(name)
            arity.append(int(k))
        return KnowledgeHypergraph(ev, rv, arity, self.edges)

    def relation_counts(self) -> np.ndarray:
        return np.bincount(self.edge_relation, minlength=self.num_relations)


class FactSet:
    """Set of facts keyed by ``(relation, entity tuple)`` with completion lookup.

    ``completions(r, t, rest)`` answers "which entities, placed at position t
    next to the other arguments ``rest``, form a stored fact" in O(1).
    """

    def __init__(self, edges: Iterable[Hyperedge] = ()):
        self._facts: set[tuple[int, tuple[int, ...]]] = set()
        self._completions: dict[tuple, set[int]] = defaultdict(set)
        for e in edges:
            self.add(e)

    @staticmethod
    def _key(relation: int, t: int, entities: Sequence[int]) -> tuple:
        return (relation, t, tuple(entities[: t - 1]) + tuple(entities[t:]))

    def add(self, edge: Hyperedge) -> None:
        key = (edge.relation, tuple(edge.entities))
        if key in self._facts:
            return
        self._facts.add(key)
        for t in range(1, len(edge.entities) + 1):
            self._completions[self._key(edge.relation, t, edge.entities)].add(edge.entities[t - 1])

    def update(self, edges: Iterable[Hyperedge]) -> "FactSet":
        for e in edges:
            self.add(e)
        return self

    def __contains__(self, item) -> bool:
        if isinstance(item, Hyperedge):
            item = (item.relation, tuple(item.entities))
        return (item[0], tuple(item[1])) in self._facts

    def __len__(self) -> int:
        return len(self._facts)

    def completions(self, query: Query) -> set[int]:
        rest = tuple(e for _, e in query.observed)
        return self._completions.get((query.relation, query.masked_position, rest), set())


# -- construction ----------------------------------------------------------------


def from_name_facts(
    facts: Iterable[tuple[str, Sequence[str]]],
    entities: Iterable[str] = (),
    relations: dict[str, int] | None = None,
) -> KnowledgeHypergraph:
    """Build a graph from ``(relation name, entity names)`` pairs.

    Vocabularies follow first appearance; names in ``entities``/``relations``
    are registered first. Duplicate facts are dropped and counted.
    """
    ev = Vocab(entities)
    rv = Vocab()
    arity: list[int] = []
    for name, k in (relations or {}).items():
        rv.add(name)
        arity.append(int(k))
    edges: list[Hyperedge] = []
    seen: set[tuple[int, tuple[int, ...]]] = set()
    dropped = 0
    for rel_name, ent_names in facts:
        k = len(ent_names)
        if k < 1:
            raise HyperError(f"fact of {rel_name!r} has no arguments")
        r = rv.get(rel_name)
        if r is None:
            r = rv.add(rel_name)
            arity.append(k)
        elif arity[r] != k:
            raise ArityConflict(f"relation {rel_name!r} seen with arity {arity[r]} and {k}")
        ents = tuple(ev.add(n) for n in ent_names)
        key = (r, ents)
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        edges.append(Hyperedge(r, ents))
    if dropped:
        log.warning("dropped %d duplicate facts", dropped)
    return KnowledgeHypergraph(ev, rv, arity, edges, duplicates_dropped=dropped)


def read_fact_lines(text: str, allow_reserved: bool = False) -> list[tuple[str, tuple[str, ...]]]:
    facts = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise HyperError(f"line {lineno}: expected relation and at least one entity")
        if not allow_reserved and any(f.startswith(RESERVED_PREFIX) for f in fields[1:]):
            raise HyperError(f"line {lineno}: entity names starting with {RESERVED_PREFIX!r} are reserved")
        facts.append((fields[0], tuple(fields[1:])))
    return facts


def parse_facts(text: str, allow_reserved: bool = False) -> KnowledgeHypergraph:
    """Parse TAB-separated fact-file contents (``relation<TAB>e1<TAB>...``)."""
    facts = read_fact_lines(text, allow_reserved=allow_reserved)
    if not facts:
        raise EmptyFile("no facts found")
    return from_name_facts(facts)


def load_facts(path, allow_reserved: bool = False) -> KnowledgeHypergraph:
    with open(path, encoding="utf-8") as fh:
        return parse_facts(fh.read(), allow_reserved=allow_reserved)


def serialize(graph: KnowledgeHypergraph) -> str:
    return "".join("\t".join((r, *ents)) + "\n" for r, ents in graph.iter_fact_names())


def write_facts(path, facts: Iterable[tuple[str, Sequence[str]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r, ents in facts:
            fh.write("\t".join((r, *ents)) + "\n")


# -- small graph operations -------------------------------------------------------


def incidence_of(graph: KnowledgeHypergraph, v: int) -> list[tuple[int, int]]:
    return graph.incidence_of(v)


def positional_neighborhood(edge: Hyperedge, i: int) -> list[tuple[int, int]]:
    """N_i(e): ``(entity, position)`` for every position of ``edge`` except ``i``."""
    if not 1 <= i <= edge.arity:
        raise PositionOutOfRange(i)
    return [(v, j) for j, v in enumerate(edge.entities, 1) if j != i]


def queries_of_fact(edge: Hyperedge) -> list[Query]:
    return [query_from_fact(edge, t) for t in range(1, edge.arity + 1)]


def query_from_fact(edge: Hyperedge, t: int) -> Query:
    if not 1 <= t <= edge.arity:
        raise PositionOutOfRange(t)
    observed = tuple((j, v) for j, v in enumerate(edge.entities, 1) if j != t)
    return Query(edge.relation, observed, t)


def entity_components(graph: KnowledgeHypergraph) -> np.ndarray:
    """Component label per entity; entities co-occurring in an edge share a label."""
    n, m = graph.num_entities, graph.num_edges
    mat = graph.edge_matrix
    edge_idx, pos = np.nonzero(mat >= 0)
    ents = mat[edge_idx, pos]
    # bipartite entity/edge graph: nodes 0..n-1 entities, n..n+m-1 edges
    adj = coo_matrix(
        (np.ones(len(ents), dtype=np.int8), (ents, n + edge_idx)), shape=(n + m, n + m)
    )
    _, labels = connected_components(adj, directed=False)
    return labels[:n]


def giant_connected_component(graph: KnowledgeHypergraph) -> KnowledgeHypergraph:
    """Subgraph on the largest co-occurrence component of entities.

    Ties go to the component containing the smallest entity index. Vocabularies
    are re-densified, keeping the original relative order.
    """
    if graph.num_entities == 0 or graph.num_edges == 0:
        raise EmptyGraph("graph has no edges")
    labels = entity_components(graph)
    # vocabulary entries outside every edge are not part of any component
    used = np.zeros(graph.num_entities, dtype=bool)
    used[graph.edge_matrix[graph.edge_matrix >= 0]] = True
    sizes = np.bincount(labels[used], minlength=labels.max() + 1)
    candidates = np.flatnonzero(sizes == sizes.max())
    first_member = [int(np.flatnonzero(labels == c).min()) for c in candidates]
    best = int(candidates[int(np.argmin(first_member))])
    keep_ent = labels == best
    keep_edges = [i for i, e in enumerate(graph.edges) if keep_ent[e.entities[0]]]
    ent_names = [graph.entity_vocab.name(v) for v in np.flatnonzero(keep_ent)]
    used_rel = sorted({graph.edges[i].relation for i in keep_edges})
    rel_arity = {graph.relation_vocab.name(r): int(graph.arity[r]) for r in used_rel}
    return from_name_facts(
        (graph.fact_names(graph.edges[i]) for i in keep_edges),
        entities=ent_names,
        relations=rel_arity,
    )


def is_connected(graph: KnowledgeHypergraph) -> bool:
    """True when every entity that occurs in an edge lies in one component."""
    if graph.num_edges == 0:
        return False
    labels = entity_components(graph)
    used = np.unique(graph.edge_matrix[graph.edge_matrix >= 0])
    return len(np.unique(labels[used])) == 1


def relabel(
    graph: KnowledgeHypergraph,
    entity_perm: Sequence[int],
    relation_perm: Sequence[int],
    entity_names: Sequence[str] | None = None,
    relation_names: Sequence[str] | None = None,
    shuffle_edges: np.random.Generator | None = None,
) -> KnowledgeHypergraph:
    """Isomorphic copy: entity ``v`` becomes ``entity_perm[v]``, relation ``r`` becomes
    ``relation_perm[r]``. Names default to the permuted originals."""
    n, m = graph.num_entities, graph.num_relations
    entity_perm = np.asarray(entity_perm)
    relation_perm = np.asarray(relation_perm)
    inv_e = np.argsort(entity_perm)
    inv_r = np.argsort(relation_perm)
    if entity_names is None:
        entity_names = [graph.entity_vocab.name(int(inv_e[i])) for i in range(n)]
    if relation_names is None:
        relation_names = [graph.relation_vocab.name(int(inv_r[i])) for i in range(m)]
    arity = [int(graph.arity[inv_r[i]]) for i in range(m)]
    edges = [
        Hyperedge(int(relation_perm[e.relation]), tuple(int(entity_perm[v]) for v in e.entities))
        for e in graph.edges
    ]
    if shuffle_edges is not None:
        order = shuffle_edges.permutation(len(edges))
        edges = [edges[i] for i in order]
    return KnowledgeHypergraph(Vocab(entity_names), Vocab(relation_names), arity, edges)
