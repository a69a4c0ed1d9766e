"""Reifying a knowledge hypergraph into a binary knowledge graph and back.

Two schemes:

* positional: hyperedge ``r(u_1..u_k)`` becomes a fresh node ``e`` with facts
  ``r-i(e, u_i)``;
* relation-node: facts ``hasEntity_i(e, u_i)`` plus ``hasRelationType(e, r)``,
  where ``r`` becomes an entity node.

Fresh nodes are named ``__edge_{n}``; the prefix is reserved so that normal
parsing rejects it in user data.
"""
from __future__ import annotations

from collections import defaultdict
from typing import Sequence

from ..core import RESERVED_PREFIX as EDGE_PREFIX, KnowledgeHypergraph, Query, from_name_facts
from ..errors import HyperError

Fact = tuple[str, tuple[str, ...]]
HAS_TYPE = "hasRelationType"


def edge_node(n: int) -> str:
    return f"{EDGE_PREFIX}{n}"


def reify_positional_facts(facts: Sequence[Fact], start: int = 0) -> list[Fact]:
    out = []
    for n, (rel, ents) in enumerate(facts, start):
        node = edge_node(n)
        out.extend((f"{rel}-{i}", (node, u)) for i, u in enumerate(ents, 1))
    return out


def reify_relnode_facts(facts: Sequence[Fact], start: int = 0) -> list[Fact]:
    out = []
    for n, (rel, ents) in enumerate(facts, start):
        node = edge_node(n)
        out.extend((f"hasEntity_{i}", (node, u)) for i, u in enumerate(ents, 1))
        out.append((HAS_TYPE, (node, rel)))
    return out


def reify_positional(graph: KnowledgeHypergraph) -> KnowledgeHypergraph:
    return from_name_facts(reify_positional_facts(list(graph.iter_fact_names())))


def reify_relnode(graph: KnowledgeHypergraph) -> KnowledgeHypergraph:
    return from_name_facts(reify_relnode_facts(list(graph.iter_fact_names())))


def _group(kg: KnowledgeHypergraph) -> dict[str, list[tuple[str, str]]]:
    groups: dict[str, list[tuple[str, str]]] = defaultdict(list)
    for rel, ents in kg.iter_fact_names():
        if len(ents) != 2:
            raise HyperError(f"reified graphs are binary, found {rel} with arity {len(ents)}")
        groups[ents[0]].append((rel, ents[1]))
    return groups


def _edge_order(name: str) -> tuple:
    suffix = name[len(EDGE_PREFIX):]
    return (0, int(suffix), name) if suffix.isdigit() else (1, 0, name)


def unreify_positional(kg: KnowledgeHypergraph) -> KnowledgeHypergraph:
    """Group facts by edge node and read relation and position from ``r-i``."""
    facts = []
    for node, members in sorted(_group(kg).items(), key=lambda kv: _edge_order(kv[0])):
        rel_names = set()
        slots = {}
        for label, ent in members:
            rel, sep, pos = label.rpartition("-")
            if not sep or not pos.isdigit():
                raise HyperError(f"label {label!r} is not of the form relation-position")
            rel_names.add(rel)
            slots[int(pos)] = ent
        if len(rel_names) != 1 or sorted(slots) != list(range(1, len(slots) + 1)):
            raise HyperError(f"edge node {node} does not describe one hyperedge")
        facts.append((rel_names.pop(), tuple(slots[i] for i in range(1, len(slots) + 1))))
    return from_name_facts(facts)


def unreify_relnode(kg: KnowledgeHypergraph) -> KnowledgeHypergraph:
    facts = []
    for node, members in sorted(_group(kg).items(), key=lambda kv: _edge_order(kv[0])):
        rel = [ent for label, ent in members if label == HAS_TYPE]
        slots = {}
        for label, ent in members:
            if label.startswith("hasEntity_"):
                slots[int(label[len("hasEntity_"):])] = ent
        if len(rel) != 1 or sorted(slots) != list(range(1, len(slots) + 1)):
            raise HyperError(f"edge node {node} does not describe one hyperedge")
        facts.append((rel[0], tuple(slots[i] for i in range(1, len(slots) + 1))))
    return from_name_facts(facts)


def reified_query_subgraph(
    query: Query, graph: KnowledgeHypergraph, edge_id: int = 0
) -> tuple[list[Fact], tuple[str, str]]:
    """Encode a hypergraph query for the positional scheme.

    Returns the augmentation facts ``q-i(edge, u_i)`` for observed positions and
    the tail query ``(q-t label, edge node)``; the answer ranges over the
    original entity vocabulary.
    """
    rel = graph.relation_vocab.name(query.relation)
    node = edge_node(edge_id)
    aug = [(f"{rel}-{p}", (node, graph.entity_vocab.name(v))) for p, v in query.observed]
    return aug, (f"{rel}-{query.masked_position}", node)
