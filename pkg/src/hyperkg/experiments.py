"""Desk-scale experiments on the compositional synthetic corpus.

The corpus is split into an observed graph (80%) and held-out test facts (20%).
The observed graph is both the training pool and the message-passing graph;
validation scores a fixed sample of observed facts with each fact's own
hyperedge masked, so test facts are never looked at during model selection.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import FactSet, Hyperedge, KnowledgeHypergraph, from_name_facts
from .datasets.synthetic import TEMPLATE_ARITY, compositional_corpus, holdout
from .encoders import HyperModel, ModelConfig
from .evalrank import Metrics, evaluate, facts_in_graph
from .training import TrainConfig, TrainResult, Validation, train


@dataclass
class DeskData:
    graph: KnowledgeHypergraph
    test: list[Hyperedge]
    filt: FactSet
    validation: Validation


def desk_data(groups: int = 50, test_fraction: float = 0.2, n_val: int = 40, seed: int = 0) -> DeskData:
    facts = compositional_corpus(groups, seed)
    observed, held = holdout(facts, test_fraction, seed)
    entities = [e for _, es in facts for e in es]
    graph = from_name_facts(observed, entities=entities, relations=TEMPLATE_ARITY)
    test = facts_in_graph(graph, held)
    filt = graph.fact_set().update(test)
    rng = np.random.default_rng([seed, 7])
    val_idx = np.sort(rng.choice(graph.num_edges, size=min(n_val, graph.num_edges), replace=False))
    validation = Validation(graph, [graph.edges[i] for i in val_idx], filt)
    return DeskData(graph, test, filt, validation)


def desk_train_config(**overrides) -> TrainConfig:
    """Table values at desk scale: 256 negatives, batch 8, up to 200 epochs."""
    base = dict(negatives=256, batch_size=8, epochs=200)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class RunOutcome:
    model: HyperModel
    train: TrainResult
    test: Metrics


def run_desk(
    model_cfg: ModelConfig, train_cfg: TrainConfig, data: DeskData, log_path=None, ckpt_path=None,
    time_budget: float | None = None,
) -> RunOutcome:
    model = HyperModel(model_cfg)
    result = train(model, data.graph, train_cfg, data.validation, log_path, ckpt_path, time_budget)
    return RunOutcome(model, result, evaluate(model, data.graph, data.test, data.filt))


@dataclass
class AblationResult:
    scheme: str
    test_mrr: float
    best_val_mrr: float
    seconds: float


def run_posenc_ablation(
    model_cfg: ModelConfig, train_cfg: TrainConfig, schemes=("sinusoidal", "all-one", "random", "magnitude"),
    data: DeskData | None = None,
) -> list[AblationResult]:
    """Same data, seed and budget for every scheme; only the positional encoding changes."""
    data = data or desk_data(seed=train_cfg.seed)
    out = []
    for scheme in schemes:
        run = run_desk(replace(model_cfg, posenc=scheme), train_cfg, data)
        out.append(AblationResult(scheme, run.test.mrr, run.train.best_val_mrr or 0.0, run.train.seconds))
    return out
