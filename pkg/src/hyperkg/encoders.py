"""Query-conditioned relation and entity encoders plus the scoring decoder.

A forward pass for a batch of queries over one inference graph:

1. relation states start as the indicator of the query relation and are
   refined by ``T`` layers of message passing over the relation graph;
2. entity states start from the observed query entities (position encoding
   plus the query relation's final state) and are refined by ``L`` layers of
   positional message passing over the hyperedges;
3. a two-layer MLP maps every entity state to a logit.
"""
from __future__ import annotations

import weakref
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import KnowledgeHypergraph, Query
from .errors import CheckpointError, ConfigMismatch, HyperError, UnknownEntity, UnknownRelation
from .posenc import EncPI, PosEncConfig, encode_position, position_table
from .relgraph import Mode, RelationGraph, build_relation_graph
from .tensor import (
    MLP,
    LayerNorm,
    Module,
    Tensor,
    add,
    concat,
    default_dtype,
    gather_rows,
    load_checkpoint,
    no_grad,
    parameter,
    relu,
    reshape,
    save_checkpoint,
    segment_sum,
    sigmoid,
)
from .tensor.kernels import HyperedgeStructure, RelationEdgeStructure, hyperedge_aggregate, relation_aggregate


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    T: int = 6
    L: int = 6
    posenc: str = "sinusoidal"
    posenc_seed: int = 0
    relgraph_mode: str = "exclude-same-edge"
    init_seed: int = 0

    def __post_init__(self):
        if self.T < 0 or self.L < 0:
            raise ValueError("layer counts must be non-negative")
        Mode(self.relgraph_mode)

    def posenc_config(self) -> PosEncConfig:
        return PosEncConfig(d=self.d, scheme=self.posenc, seed=self.posenc_seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass
class GraphContext:
    """Everything about an inference graph that does not depend on the query."""

    graph: KnowledgeHypergraph
    rel_graph: RelationGraph
    pairs: list
    rel_structure: RelationEdgeStructure
    hyper_structure: HyperedgeStructure
    edge_lookup: dict = field(repr=False)

    @classmethod
    def build(cls, graph: KnowledgeHypergraph, mode: str | Mode) -> "GraphContext":
        if graph.num_edges:
            rel_graph = build_relation_graph(graph, mode)
        else:
            rel_graph = RelationGraph.from_edges(graph.num_relations, [], 0)
        pairs, pair_index = rel_graph.position_pairs()
        rel_structure = RelationEdgeStructure(
            rel_graph.src, rel_graph.dst, pair_index, graph.num_relations, len(pairs)
        )
        lookup = {(e.relation, tuple(e.entities)): i for i, e in enumerate(graph.edges)}
        return cls(graph, rel_graph, pairs, rel_structure, HyperedgeStructure.from_graph(graph), lookup)

    def edge_index(self, relation: int, entities) -> int | None:
        return self.edge_lookup.get((int(relation), tuple(int(v) for v in entities)))


class RelationLayer(Module):
    def __init__(self, d: int, rng: np.random.Generator):
        self.alpha = parameter(0.5)
        self.update = MLP(2 * d, d, d, rng)
        self.norm = LayerNorm(d)

    def __call__(self, h: Tensor, x_pairs: Tensor, p1: np.ndarray, structure: RelationEdgeStructure) -> Tensor:
        agg = relation_aggregate(h, x_pairs, self.alpha, p1, structure)
        return relu(add(self.norm(self.update(concat([h, agg]))), h))


class EntityLayer(Module):
    def __init__(self, d: int, rng: np.random.Generator):
        self.alpha = parameter(0.5)
        self.rel_transform = MLP(d, d, d, rng)
        self.update = MLP(2 * d, d, d, rng)
        self.norm = LayerNorm(d)

    def __call__(
        self,
        h: Tensor,
        rel_msg: Tensor,
        pos: np.ndarray,
        structure: HyperedgeStructure,
        edge_mask: np.ndarray | None = None,
    ) -> Tensor:
        """``rel_msg`` is the already-transformed relation message (B, R, d)."""
        agg = hyperedge_aggregate(h, rel_msg, self.alpha, pos, structure, edge_mask)
        return relu(add(self.norm(self.update(concat([h, agg]))), h))


class HyperModel(Module):
    def __init__(self, cfg: ModelConfig | None = None):
        self.cfg = cfg = cfg or ModelConfig()
        self._pe = cfg.posenc_config()
        rng = np.random.default_rng(cfg.init_seed)
        self.enc_pi = EncPI(self._pe, rng)
        self.rel_layers = [RelationLayer(cfg.d, rng) for _ in range(cfg.T)]
        self.ent_layers = [EntityLayer(cfg.d, rng) for _ in range(cfg.L)]
        self.decoder = MLP(cfg.d, cfg.d, 1, rng)
        self._contexts: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()

    # -- graph context -------------------------------------------------------
    def context(self, graph: KnowledgeHypergraph) -> GraphContext:
        ctx = self._contexts.get(graph)
        if ctx is None:
            ctx = self._contexts[graph] = GraphContext.build(graph, self.cfg.relgraph_mode)
        return ctx

    def positions(self, n: int) -> np.ndarray:
        return position_table(n, self._pe)

    # -- relation encoder ----------------------------------------------------
    def rel_init(self, num_relations: int, query_relations) -> Tensor:
        q = np.asarray(query_relations, dtype=np.int64).reshape(-1)
        if len(q) and (q.min() < 0 or q.max() >= num_relations):
            raise UnknownRelation(int(q.max() if q.max() >= num_relations else q.min()))
        h = np.zeros((len(q), num_relations, self.cfg.d), dtype=default_dtype())
        h[np.arange(len(q)), q] = 1.0
        return Tensor(h)

    def rel_layer(self, t: int, h: Tensor, ctx: GraphContext, x_pairs: Tensor | None = None) -> Tensor:
        if x_pairs is None:
            x_pairs = self.enc_pi(ctx.pairs)
        p1 = encode_position(1, self._pe).astype(h.dtype)
        return self.rel_layers[t](h, x_pairs, p1, ctx.rel_structure)

    def rel_forward(self, ctx: GraphContext, query_relations) -> Tensor:
        """(Q, R, d) relation states, one slice per entry of ``query_relations``."""
        h = self.rel_init(ctx.graph.num_relations, query_relations)
        if not self.rel_layers:
            return h
        x_pairs = self.enc_pi(ctx.pairs)
        for t in range(len(self.rel_layers)):
            h = self.rel_layer(t, h, ctx, x_pairs)
        return h

    # -- entity encoder ------------------------------------------------------
    def ent_init(self, graph: KnowledgeHypergraph, queries, h_query: Tensor, pos: np.ndarray) -> Tensor:
        """h_query: (B, d) state of each query's relation. Returns (B, V, d)."""
        V, d = graph.num_entities, self.cfg.d
        rows, segs, pidx = [], [], []
        for b, q in enumerate(queries):
            for p, v in q.observed:
                if not 0 <= v < V:
                    raise UnknownEntity(v)
                rows.append(b)
                segs.append(b * V + v)
                pidx.append(p - 1)
        rows = np.asarray(rows, dtype=np.int64)
        hq = gather_rows(h_query, rows)
        vals = add(hq, Tensor(pos[np.asarray(pidx, dtype=np.int64)].reshape(len(rows), d)))
        flat = segment_sum(vals, np.asarray(segs, dtype=np.int64), len(queries) * V)
        return reshape(flat, (len(queries), V, d))

    def ent_layer(
        self,
        l: int,
        h: Tensor,
        rel_states: Tensor,
        ctx: GraphContext,
        pos: np.ndarray,
        edge_mask: np.ndarray | None = None,
    ) -> Tensor:
        layer = self.ent_layers[l]
        return layer(h, layer.rel_transform(rel_states), pos, ctx.hyper_structure, edge_mask)

    def decode(self, h: Tensor) -> Tensor:
        B, V, _ = h.shape
        return reshape(self.decoder(h), (B, V))

    # -- full pipeline -------------------------------------------------------
    def _check_query(self, graph: KnowledgeHypergraph, q: Query) -> None:
        if not 0 <= q.relation < graph.num_relations:
            raise UnknownRelation(q.relation)
        q.validate(int(graph.arity[q.relation]))

    def logits(self, graph: KnowledgeHypergraph, queries, exclude_edges=None) -> Tensor:
        """(B, V) pre-sigmoid scores. ``exclude_edges[b]`` (edge index or None)
        is removed from message passing for row ``b``."""
        queries = list(queries)
        if not queries:
            raise HyperError("empty query batch")
        for q in queries:
            self._check_query(graph, q)
        ctx = self.context(graph)
        R, d = graph.num_relations, self.cfg.d
        n_pos = max([graph.max_arity, 1] + [q.arity for q in queries])
        pos = self.positions(n_pos)

        # one relation pass per distinct query relation
        uniq, inverse = np.unique([q.relation for q in queries], return_inverse=True)
        rel = self.rel_forward(ctx, uniq)  # (U, R, d)
        h_query = gather_rows(reshape(rel, (len(uniq) * R, d)), inverse * R + uniq[inverse])

        mask = None
        if exclude_edges is not None and any(e is not None for e in exclude_edges):
            mask = np.ones((len(queries), graph.num_edges), dtype=bool)
            for b, e in enumerate(exclude_edges):
                if e is not None:
                    mask[b, e] = False

        h = self.ent_init(graph, queries, h_query, pos)
        for l, layer in enumerate(self.ent_layers):
            msg = layer.rel_transform(rel)
            if len(uniq) != len(queries) or np.any(inverse != np.arange(len(queries))):
                msg = reshape(gather_rows(reshape(msg, (len(uniq), R * d)), inverse), (len(queries), R, d))
            h = layer(h, msg, pos, ctx.hyper_structure, mask)
        return self.decode(h)

    def score_batch(self, graph: KnowledgeHypergraph, queries, exclude_edges=None) -> np.ndarray:
        with no_grad():
            return sigmoid(self.logits(graph, queries, exclude_edges)).data

    def score_query(self, graph: KnowledgeHypergraph, query: Query, exclude_edge: int | None = None) -> np.ndarray:
        return self.score_batch(graph, [query], [exclude_edge])[0]

    # -- persistence ---------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, tensors: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(params) != set(tensors):
            missing = sorted(set(params) - set(tensors))
            extra = sorted(set(tensors) - set(params))
            raise ConfigMismatch(f"parameter names differ (missing {missing[:3]}, unexpected {extra[:3]})")
        for name, p in params.items():
            src = tensors[name]
            if src.shape != p.shape:
                raise ConfigMismatch(f"{name}: checkpoint shape {src.shape} vs model {p.shape}")
            p.data = np.array(src, dtype=p.dtype)

    def save(self, path, meta: dict | None = None) -> None:
        save_checkpoint(path, self.state_dict(), self.cfg.to_dict(), meta)

    @classmethod
    def load(cls, path) -> tuple["HyperModel", dict]:
        tensors, config, meta = load_checkpoint(path)
        try:
            cfg = ModelConfig.from_dict(config)
        except (TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: bad model config ({exc})") from None
        model = cls(cfg)
        model.load_state_dict(tensors)
        return model, meta
