"""Fused message-and-aggregate kernels for the two encoders.

The hyperedge kernel computes, for every hyperedge ``e`` and position ``i``,

    msg(e, i) = mask(e) * rel[rho(e)] * prod_{j != i} (alpha * h[e(j)] + (1 - alpha) * p_j)

and sums ``msg(e, i)`` into row ``e(i)``. Messages are never stored as a
``(positions x edges, d)`` block: the forward loops over target positions with
one running product, and the backward recomputes products with a two-buffer
recurrence. Peak temporary size is ``batch * |E_k| * d`` for the largest arity
group ``E_k``; the forward keeps only its inputs for the backward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import memory
from .autograd import Tensor, make_result
from .ops import SegmentPlan

# callables invoked as observer(kernel_name, info_dict); used by tests
observers: list = []


def _notify(name: str, **info) -> None:
    for fn in observers:
        fn(name, info)


@dataclass
class ArityGroup:
    arity: int
    edge_index: np.ndarray  # positions of these edges in the graph's edge list
    entities: np.ndarray  # (E_k, k)
    relations: np.ndarray  # (E_k,)
    entity_plans: list  # SegmentPlan per position, ids = entities[:, i]
    relation_plan: SegmentPlan


class HyperedgeStructure:
    """Index plans for one hypergraph, grouped by arity (built once, reused)."""

    def __init__(self, edge_matrix: np.ndarray, edge_relation: np.ndarray, num_entities: int, num_relations: int):
        self.num_entities = int(num_entities)
        self.num_relations = int(num_relations)
        self.num_edges = len(edge_relation)
        arity = (edge_matrix >= 0).sum(axis=1) if len(edge_relation) else np.zeros(0, dtype=np.int64)
        self.groups: list[ArityGroup] = []
        for k in sorted(set(arity.tolist())):
            idx = np.flatnonzero(arity == k)
            ents = np.ascontiguousarray(edge_matrix[idx, :k])
            rels = edge_relation[idx]
            self.groups.append(
                ArityGroup(
                    k,
                    idx,
                    ents,
                    rels,
                    [SegmentPlan(ents[:, i], num_entities) for i in range(k)],
                    SegmentPlan(rels, num_relations),
                )
            )
        self.max_arity = max((g.arity for g in self.groups), default=0)

    @classmethod
    def from_graph(cls, graph) -> "HyperedgeStructure":
        return cls(graph.edge_matrix, graph.edge_relation, graph.num_entities, graph.num_relations)


def _gather(arr: np.ndarray, plan: SegmentPlan, label: str) -> np.ndarray:
    return memory.track(np.take(arr, plan.ids, axis=-2), label)


def _scatter_add(out: np.ndarray, values: np.ndarray, plan: SegmentPlan) -> None:
    out += memory.track(plan.apply(values), "scatter")


def hyperedge_aggregate(
    h: Tensor,
    rel_msg: Tensor,
    alpha: Tensor,
    pos: np.ndarray,
    structure: HyperedgeStructure,
    edge_mask: np.ndarray | None = None,
) -> Tensor:
    """Sum of positional products over incident hyperedges.

    h: (B, V, d) entity states; rel_msg: (B, R, d) per-relation message
    vectors; alpha: scalar tensor; pos: (k_max, d) positional encodings;
    edge_mask: optional (B, |E|) 0/1 array, 0 removes an edge for that row.
    """
    hv, mv, a = h.data, rel_msg.data, alpha.data
    B, V, d = hv.shape
    dtype = hv.dtype
    pos = np.asarray(pos, dtype=dtype)
    if structure.max_arity > len(pos):
        raise ValueError(f"need positional encodings up to {structure.max_arity}, got {len(pos)}")
    consts = (1 - a) * pos  # (k_max, d)
    out = memory.track(np.zeros((B, V, d), dtype=dtype), "hyperedge.out")
    _notify("hyperedge_aggregate", edge_mask=edge_mask, structure=structure)

    def masked_rel(group: ArityGroup) -> np.ndarray:
        m = _gather(mv, group.relation_plan, "hyperedge.rel")
        if edge_mask is not None:
            m *= edge_mask[:, group.edge_index, None].astype(dtype)
        return m

    def z(group: ArityGroup, j: int) -> np.ndarray:
        zj = _gather(hv, group.entity_plans[j], "hyperedge.z")
        zj *= a
        zj += consts[j]
        return zj

    for group in structure.groups:
        m = masked_rel(group)
        for i in range(group.arity):
            acc = memory.track(m.copy(), "hyperedge.acc")
            for j in range(group.arity):
                if j != i:
                    acc *= z(group, j)
            _scatter_add(out, acc, group.entity_plans[i])
            del acc

    def bw(g):
        gh = memory.track(np.zeros_like(hv), "hyperedge.grad_h")
        gm = memory.track(np.zeros_like(mv), "hyperedge.grad_rel")
        galpha = 0.0
        for group in structure.groups:
            k = group.arity
            m = masked_rel(group)
            dm = memory.track(np.zeros_like(m), "hyperedge.dm")
            for j in range(k):
                # prod_{l != j} z_l and sum_{i != j} g_i prod_{l not in {i, j}} z_l
                prod = None
                mixed = None
                for l in range(k):
                    if l == j:
                        continue
                    zl = z(group, l)
                    gl = _gather(g, group.entity_plans[l], "hyperedge.g")
                    if prod is None:
                        prod, mixed = zl, gl
                    else:
                        mixed *= zl
                        gl *= prod
                        mixed += gl
                        prod *= zl
                    del zl, gl
                gj = _gather(g, group.entity_plans[j], "hyperedge.g")
                if prod is None:  # arity 1: empty product is the all-ones vector
                    dm += gj
                    continue
                gj *= prod
                dm += gj
                del gj, prod
                dz = mixed
                dz *= m
                hj = _gather(hv, group.entity_plans[j], "hyperedge.h")
                hj -= pos[j]
                hj *= dz
                galpha += float(hj.sum())
                del hj
                dz *= a
                _scatter_add(gh, dz, group.entity_plans[j])
                del dz, mixed
            if edge_mask is not None:
                dm *= edge_mask[:, group.edge_index, None].astype(dtype)
            _scatter_add(gm, dm, group.relation_plan)
            del dm, m
        return gh, gm, np.asarray(galpha, dtype=dtype)

    return make_result(out, (h, rel_msg, alpha), bw)


class RelationEdgeStructure:
    """Index plans for the typed edges of a relation graph."""

    def __init__(self, src, dst, pair_index, num_relations: int, num_pairs: int):
        self.src = SegmentPlan(src, num_relations)
        self.dst = SegmentPlan(dst, num_relations)
        self.pair = SegmentPlan(pair_index, num_pairs)
        self.num_relations = num_relations
        self.num_pairs = num_pairs


def relation_aggregate(
    h: Tensor, pair_emb: Tensor, alpha: Tensor, p_neighbor: np.ndarray, structure: RelationEdgeStructure
) -> Tensor:
    """For each edge ``(src, dst, pair)`` add ``(alpha*h[src] + (1-alpha)*p) * x[pair]``
    into row ``dst``. h: (B, R, d); pair_emb: (P, d)."""
    hv, xv, a = h.data, pair_emb.data, alpha.data
    dtype = hv.dtype
    p = np.asarray(p_neighbor, dtype=dtype)
    xe = _gather(xv, structure.pair, "relation.x")  # (E_rel, d)
    zs = _gather(hv, structure.src, "relation.z")
    zs *= a
    zs += (1 - a) * p
    zs *= xe
    out = memory.track(structure.dst.apply(zs), "relation.out")
    del zs

    def bw(g):
        gd = _gather(g, structure.dst, "relation.g")  # (B, E_rel, d)
        hs = _gather(hv, structure.src, "relation.h")
        z = hs * a + (1 - a) * p
        gx = structure.pair.apply((gd * z).sum(axis=0))
        hs -= p
        gz = gd * xe
        galpha = float((gz * hs).sum())
        gz *= a
        gh = structure.src.apply(gz)
        return gh, gx, np.asarray(galpha, dtype=dtype)

    return make_result(out, (h, pair_emb, alpha), bw)
