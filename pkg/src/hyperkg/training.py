"""Query sampling, negative sampling, the self-adversarial loss and training loops."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import FactSet, Hyperedge, KnowledgeHypergraph, Query, query_from_fact
from .encoders import HyperModel, ModelConfig
from .errors import ConfigMismatch, EmptyGraph, ExhaustedPool
from .evalrank import Metrics, evaluate
from .tensor import (
    AdamW,
    Tensor,
    as_tensor,
    backward,
    clamp,
    log,
    mean_all,
    mul,
    sigmoid,
    softmax,
    sub,
    sum_last,
    take_along_last,
)

logger = logging.getLogger(__name__)

PROB_EPS = 1e-7

# how negatives are weighted inside the loss:
#   "logit":      softmax(logit(p') / tau), harder negatives weigh more
#   "complement": softmax(log(1 - p') / tau), easier negatives weigh more
WEIGHTINGS = ("logit", "complement")


@dataclass
class TrainConfig:
    negatives: int = 256
    adv_temperature: float = 1.0
    adv_weighting: str = "logit"
    batch_size: int = 8
    lr: float = 5e-4
    weight_decay: float = 0.01
    epochs: int = 10
    batches_per_epoch: int | None = None  # default: one pass over the facts
    strict: bool = True
    seed: int = 0
    val_every: int | None = None  # steps; None means once per epoch
    max_val_facts: int | None = None
    patience: int | None = None  # stop after this many validations without improvement

    def __post_init__(self):
        if self.negatives < 1:
            raise ValueError("need at least one negative")
        if self.adv_temperature <= 0:
            raise ValueError("adversarial temperature must be positive")
        if self.adv_weighting not in WEIGHTINGS:
            raise ValueError(f"unknown negative weighting {self.adv_weighting!r}; pick one of {WEIGHTINGS}")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive")

    def steps_per_epoch(self, graph: KnowledgeHypergraph) -> int:
        if self.batches_per_epoch:
            return self.batches_per_epoch
        return max(1, -(-graph.num_edges // self.batch_size))


def pretrain_defaults(**overrides) -> TrainConfig:
    base = dict(negatives=512, batch_size=32, epochs=1, batches_per_epoch=30000, val_every=500)
    base.update(overrides)
    return TrainConfig(**base)


# -- sampling ----------------------------------------------------------------------


def sample_fact_query(graph: KnowledgeHypergraph, rng: np.random.Generator) -> tuple[Query, int, int]:
    """Uniform fact, uniform masked position. Returns ``(query, truth, edge index)``."""
    if graph.num_edges == 0:
        raise EmptyGraph("cannot sample a training query from an empty graph")
    idx = int(rng.integers(graph.num_edges))
    edge = graph.edges[idx]
    t = int(rng.integers(1, edge.arity + 1))
    return query_from_fact(edge, t), edge.entities[t - 1], idx


def sample_training_query(graph: KnowledgeHypergraph, rng: np.random.Generator) -> tuple[Query, int]:
    query, truth, _ = sample_fact_query(graph, rng)
    return query, truth


def sample_negatives(
    graph: KnowledgeHypergraph,
    query: Query,
    truth: int,
    n: int,
    strict: bool,
    rng: np.random.Generator,
    facts: FactSet | None = None,
) -> np.ndarray:
    """``n`` corrupted entities for the masked slot, drawn with replacement.

    Strict mode additionally skips entities that complete a known fact.
    """
    if n < 1:
        raise ValueError("n must be positive")
    banned = {truth}
    if strict:
        banned |= (facts if facts is not None else graph.fact_set()).completions(query)
    keep = np.ones(graph.num_entities, dtype=bool)
    keep[np.fromiter(banned, dtype=np.int64, count=len(banned))] = False
    pool = np.flatnonzero(keep)
    if not len(pool):
        raise ExhaustedPool(f"no negative candidates left for {query}")
    return pool[rng.integers(len(pool), size=n)]


# -- loss ------------------------------------------------------------------------------


def adversarial_weights(p_negs: np.ndarray, temperature: float = 1.0, weighting: str = "logit") -> np.ndarray:
    """Importance weights over the last axis of clamped negative probabilities."""
    p = np.clip(p_negs, PROB_EPS, 1 - PROB_EPS)
    if weighting == "logit":
        z = np.log(p) - np.log1p(-p)
    elif weighting == "complement":
        z = np.log1p(-p)
    else:
        raise ValueError(f"unknown negative weighting {weighting!r}; pick one of {WEIGHTINGS}")
    return softmax(Tensor(z), temperature).data


def nssa_loss(p_true, p_negs, temperature: float = 1.0, weighting: str = "logit") -> Tensor:
    """Self-adversarial negative-sampling loss averaged over leading axes.

    ``-log p - sum_i w_i log(1 - p'_i)`` with p_true: (...,) probabilities of
    the true entity and p_negs: (..., n). The weights come from
    ``adversarial_weights`` and are treated as constants.
    """
    p_true = clamp(as_tensor(p_true), PROB_EPS, 1 - PROB_EPS)
    p_negs = clamp(as_tensor(p_negs), PROB_EPS, 1 - PROB_EPS)
    log_neg = log(sub(1.0, p_negs))
    weights = adversarial_weights(p_negs.data, temperature, weighting).astype(log_neg.dtype)
    per_query = sub(mul(log(p_true), -1.0), sum_last(mul(log_neg, Tensor(weights))))
    return mean_all(per_query)


# -- single steps ------------------------------------------------------------------------


@dataclass
class Batch:
    queries: list
    truths: np.ndarray
    edges: list
    negatives: np.ndarray  # (B, n)


def sample_batch(graph, cfg: TrainConfig, rng: np.random.Generator, facts: FactSet) -> Batch:
    queries, truths, edges, negs = [], [], [], []
    for _ in range(cfg.batch_size):
        q, truth, idx = sample_fact_query(graph, rng)
        queries.append(q)
        truths.append(truth)
        edges.append(idx)
        negs.append(sample_negatives(graph, q, truth, cfg.negatives, cfg.strict, rng, facts))
    return Batch(queries, np.asarray(truths, dtype=np.int64), edges, np.stack(negs))


def batch_loss(model: HyperModel, graph, batch: Batch, cfg: TrainConfig) -> Tensor:
    probs = sigmoid(model.logits(graph, batch.queries, batch.edges))
    picked = take_along_last(probs, np.concatenate([batch.truths[:, None], batch.negatives], axis=1))
    B = len(batch.queries)
    p_true = take_along_last(picked, np.zeros((B, 1), dtype=np.int64))
    p_negs = take_along_last(picked, np.tile(np.arange(1, picked.shape[1]), (B, 1)))
    return nssa_loss(sum_last(p_true), p_negs, cfg.adv_temperature, cfg.adv_weighting)


def train_step(
    model: HyperModel,
    graph: KnowledgeHypergraph,
    opt: AdamW,
    cfg: TrainConfig,
    rng: np.random.Generator,
    facts: FactSet | None = None,
) -> float:
    """Sample a batch, remove each positive's own edge while encoding it, and update."""
    facts = facts if facts is not None else graph.fact_set()
    batch = sample_batch(graph, cfg, rng, facts)
    opt.zero_grad()
    loss = batch_loss(model, graph, batch, cfg)
    backward(loss)
    opt.step()
    return loss.item()


# -- loops --------------------------------------------------------------------------------


@dataclass
class Validation:
    """Facts scored against ``graph`` and filtered with ``filt``."""

    graph: KnowledgeHypergraph
    facts: Sequence[Hyperedge]
    filt: FactSet

    def run(self, model: HyperModel, limit: int | None = None) -> Metrics:
        facts = self.facts if limit is None else self.facts[:limit]
        return evaluate(model, self.graph, facts, self.filt)


@dataclass
class TrainMember:
    name: str
    graph: KnowledgeHypergraph
    facts: FactSet
    validation: Validation | None = None


@dataclass
class TrainResult:
    best_val_mrr: float | None
    best_step: int
    steps: int
    losses: list = field(default_factory=list)
    val_history: list = field(default_factory=list)  # (step, mrr)
    seconds: float = 0.0


def make_optimizer(model: HyperModel, cfg: TrainConfig) -> AdamW:
    return AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)


def member_weights(members: Sequence[TrainMember]) -> np.ndarray:
    sizes = np.array([m.graph.num_edges for m in members], dtype=np.float64)
    if not sizes.sum():
        raise EmptyGraph("every graph in the mix is empty")
    return sizes / sizes.sum()


def choose_member(rng: np.random.Generator, weights: np.ndarray) -> int:
    """Index of the graph used for the next batch; no draw for a single graph."""
    return int(rng.choice(len(weights), p=weights)) if len(weights) > 1 else 0


def run_training(
    model: HyperModel,
    members: Sequence[TrainMember],
    cfg: TrainConfig,
    total_steps: int,
    val_every: int,
    log_path=None,
    ckpt_path=None,
    time_budget: float | None = None,
) -> TrainResult:
    """Shared loop: each step draws one member with probability proportional to
    its edge count; validation averages MRR over members that have it and the
    best parameters are restored at the end."""
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(model, cfg)
    weights = member_weights(members)
    log_file = open(log_path, "a") if log_path else None
    has_val = any(m.validation is not None for m in members)
    best = (None, 0, model.state_dict())
    result = TrainResult(None, 0, 0)
    stale = 0
    start = time.perf_counter()
    try:
        for step in range(1, total_steps + 1):
            m = members[choose_member(rng, weights)]
            loss = train_step(model, m.graph, opt, cfg, rng, m.facts)
            result.losses.append(loss)
            result.steps = step
            val = None
            if has_val and (step % val_every == 0 or step == total_steps):
                scores = [v.run(model, cfg.max_val_facts).mrr for v in (x.validation for x in members) if v]
                val = float(np.mean(scores))
                result.val_history.append((step, val))
                if best[0] is None or val > best[0]:
                    best = (val, step, model.state_dict())
                    stale = 0
                else:
                    stale += 1
                logger.info("step %d loss %.4f val_mrr %.4f", step, loss, val)
            if log_file:
                log_file.write(f"{step}\t{loss:.6f}\t{'' if val is None else f'{val:.6f}'}\n")
                log_file.flush()
            if cfg.patience is not None and stale >= cfg.patience:
                logger.info("no validation improvement for %d checks, stopping at step %d", stale, step)
                break
            if time_budget is not None and time.perf_counter() - start > time_budget:
                logger.warning("time budget exhausted after %d steps", step)
                break
    finally:
        if log_file:
            log_file.close()
    if has_val and best[0] is not None:
        model.load_state_dict(best[2])
        result.best_val_mrr, result.best_step = best[0], best[1]
    else:
        result.best_step = result.steps
    result.seconds = time.perf_counter() - start
    if ckpt_path:
        model.save(ckpt_path, {"best_val_mrr": result.best_val_mrr, "best_step": result.best_step, "train": asdict(cfg)})
    return result


def train(
    model: HyperModel,
    graph: KnowledgeHypergraph,
    cfg: TrainConfig,
    validation: Validation | None = None,
    log_path=None,
    ckpt_path=None,
    time_budget: float | None = None,
) -> TrainResult:
    """End-to-end training on one graph, validating once per epoch by default."""
    per_epoch = cfg.steps_per_epoch(graph)
    member = TrainMember("train", graph, graph.fact_set(), validation)
    return run_training(
        model, [member], cfg, cfg.epochs * per_epoch, cfg.val_every or per_epoch, log_path, ckpt_path, time_budget
    )


def holdout_member(name: str, graph: KnowledgeHypergraph, rng: np.random.Generator, fraction: float = 0.05) -> TrainMember:
    """Move ``fraction`` of the facts out of the graph for validation; the
    remaining facts stay the message-passing graph and the training pool."""
    n_val = int(round(fraction * graph.num_edges))
    order = rng.permutation(graph.num_edges)
    val_idx, keep_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
    train_graph = graph.subgraph(keep_idx, densify=False)
    val_facts = [graph.edges[i] for i in val_idx]
    validation = Validation(train_graph, val_facts, graph.fact_set()) if n_val else None
    return TrainMember(name, train_graph, train_graph.fact_set(), validation)


def pretrain(
    model: HyperModel,
    mix: Sequence[tuple[KnowledgeHypergraph, str]],
    cfg: TrainConfig,
    log_path=None,
    ckpt_path=None,
    holdout: float = 0.05,
    time_budget: float | None = None,
) -> TrainResult:
    if not mix:
        raise ValueError("pretraining needs at least one graph")
    rng = np.random.default_rng([cfg.seed, 1])
    members = [holdout_member(name, g, rng, holdout) for g, name in mix]
    steps = cfg.epochs * (cfg.batches_per_epoch or max(1, sum(m.graph.num_edges for m in members) // cfg.batch_size))
    return run_training(model, members, cfg, steps, cfg.val_every or 500, log_path, ckpt_path, time_budget)


def finetune(
    checkpoint,
    graph: KnowledgeHypergraph,
    cfg: TrainConfig,
    validation: Validation | None = None,
    expected: ModelConfig | None = None,
    log_path=None,
    ckpt_path=None,
) -> tuple[HyperModel, TrainResult]:
    """Continue training a saved model (path or model instance) on ``graph``."""
    if isinstance(checkpoint, HyperModel):
        model = checkpoint
    else:
        model, _ = HyperModel.load(Path(checkpoint))
    if expected is not None and expected != model.cfg:
        raise ConfigMismatch(f"checkpoint config {model.cfg} differs from expected {expected}")
    if cfg.epochs == 0:
        if ckpt_path:
            model.save(ckpt_path, {"best_val_mrr": None, "best_step": 0, "train": asdict(cfg)})
        return model, TrainResult(None, 0, 0)
    return model, train(model, graph, cfg, validation, log_path, ckpt_path)
