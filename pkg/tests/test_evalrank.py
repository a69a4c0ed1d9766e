import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fig1, random_graph
from hyperkg.core import FactSet, Hyperedge, query_from_fact
from hyperkg.errors import TruthNotInCandidates
from hyperkg.evalrank import Metrics, evaluate, filtered_candidates, format_metrics, rank_of


def constant_scorer(graph, queries, exclude):
    return np.full((len(queries), graph.num_entities), 0.5)


def table_scorer(table):
    """Scores depend only on (relation, masked position, candidate)."""

    def score(graph, queries, exclude):
        return np.stack([table[q.relation, q.masked_position - 1] for q in queries])

    return score


def brute_force(graph, facts, known, table):
    """Independent recomputation with explicit loops and tuple sets."""
    known = {(e.relation, tuple(e.entities)) for e in known}
    ranks = []
    for e in facts:
        for t in range(e.arity):
            scores = table[e.relation, t]
            truth = e.entities[t]
            better = ties = 0
            for v in range(graph.num_entities):
                if v == truth:
                    continue
                cand = list(e.entities)
                cand[t] = v
                if (e.relation, tuple(cand)) in known:
                    continue
                if scores[v] > scores[truth]:
                    better += 1
                elif scores[v] == scores[truth]:
                    ties += 1
            ranks.append(1 + better + ties / 2)
    ranks = np.array(ranks)
    return 1 / ranks, {k: ranks <= k for k in (1, 3, 10)}


class TestRankOf:
    def test_strict_best(self):
        assert rank_of(np.array([0.9, 0.1, 0.2]), 0, [0, 1, 2]) == 1.0

    def test_all_tied(self):
        assert rank_of(np.zeros(7), 3, range(7)) == 4.0

    def test_truth_missing(self):
        with pytest.raises(TruthNotInCandidates):
            rank_of(np.zeros(3), 2, [0, 1])

    def test_ignores_non_candidates(self):
        assert rank_of(np.array([0.9, 0.5, 0.1]), 1, [1, 2]) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_sort_oracle(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.integers(0, 5, size=12).astype(float)  # coarse values force ties
        truth = int(rng.integers(12))
        order = np.argsort(-scores, kind="stable")
        first = int(np.flatnonzero(scores[order] == scores[truth])[0]) + 1
        last = int(np.flatnonzero(scores[order] == scores[truth])[-1]) + 1
        assert rank_of(scores, truth, range(12)) == (first + last) / 2


class TestCandidates:
    def test_empty_filter(self):
        g = fig1()
        q = query_from_fact(g.edges[0], 1)
        assert filtered_candidates(g, q, g.edges[0].entities[0], FactSet()).tolist() == list(range(9))

    def test_everything_filtered_but_truth(self):
        g = fig1()
        e = g.edges[2]
        filt = FactSet(Hyperedge(e.relation, (v,) + e.entities[1:]) for v in range(9))
        q = query_from_fact(e, 1)
        assert filtered_candidates(g, q, e.entities[0], filt).tolist() == [e.entities[0]]

    def test_loop_oracle(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng, n_entities=6, n_relations=2, n_facts=30, max_arity=3)
        fs = g.fact_set()
        for e in g.edges:
            for t in range(1, e.arity + 1):
                q = query_from_fact(e, t)
                truth = e.entities[t - 1]
                expected = [v for v in range(g.num_entities)
                            if v == truth or (e.relation, q.complete(v)) not in fs]
                assert filtered_candidates(g, q, truth, fs).tolist() == expected


class TestEvaluate:
    def test_constant_scorer_analytic(self):
        g = fig1()
        m = evaluate(constant_scorer, g, g.edges, FactSet(g.edges))
        # fig1 has no alternative completions, so every query keeps all 9 candidates
        assert m.mrr == pytest.approx(2 / (9 + 1), abs=1e-15)
        assert m.count == 4 + 5 + 3

    def test_perfect_scorer(self):
        g = fig1()

        def oracle(graph, queries, exclude):
            out = np.zeros((len(queries), graph.num_entities))
            for i, q in enumerate(queries):
                e = next(e for e in graph.edges if e.relation == q.relation
                         and all(e.entities[p - 1] == v for p, v in q.observed))
                out[i, e.entities[q.masked_position - 1]] = 1
            return out

        m = evaluate(oracle, g, g.edges, g.fact_set())
        assert m.mrr == 1.0 and m.hits[1] == 1.0

    def test_brute_force_ten_facts(self):
        rng = np.random.default_rng(7)
        g = random_graph(rng, n_entities=8, n_relations=3, n_facts=14, max_arity=4)
        test, rest = g.edges[:10], g.edges[10:]
        table = rng.integers(0, 6, size=(3, 4, 8)).astype(float)
        filt = FactSet(g.edges)
        m = evaluate(table_scorer(table), g, test, filt)
        rr, hits = brute_force(g, test, list(test) + list(rest), table)
        assert m.count == len(rr) == sum(e.arity for e in test)
        assert m.mrr == np.mean(rr)
        for k in (1, 3, 10):
            assert m.hits[k] == np.mean(hits[k])

    def test_filter_monotone(self):
        rng = np.random.default_rng(8)
        g = random_graph(rng, n_entities=6, n_relations=2, n_facts=25, max_arity=3)
        table = rng.random((2, 3, 6))
        small = evaluate(table_scorer(table), g, g.edges[:8], FactSet(g.edges[:8]))
        large = evaluate(table_scorer(table), g, g.edges[:8], FactSet(g.edges))
        assert large.mrr >= small.mrr

    def test_metric_order_and_arity_breakdown(self):
        rng = np.random.default_rng(9)
        g = random_graph(rng, n_entities=12, n_relations=3, n_facts=20, max_arity=4)
        m = evaluate(table_scorer(rng.random((3, 4, 12))), g, g.edges, g.fact_set())
        assert 0 < m.mrr <= 1
        assert m.hits[1] <= m.hits[3] <= m.hits[10] <= 1
        assert sum(a.count for a in m.per_arity.values()) == m.count
        for k, a in m.per_arity.items():
            assert a.count == k * sum(1 for e in g.edges if e.arity == k)

    def test_own_edge_passed_to_scorer(self):
        g = fig1()
        seen = []

        def spy(graph, queries, exclude):
            seen.extend(exclude)
            return constant_scorer(graph, queries, exclude)

        evaluate(spy, g, g.edges, g.fact_set(), batch_size=5)
        assert seen == [0] * 4 + [1] * 5 + [2] * 3
        seen.clear()
        evaluate(spy, g, g.edges, g.fact_set(), exclude_own_edge=False)
        assert seen == [None] * 12

    def test_format(self):
        text = format_metrics(Metrics.from_ranks([1, 2, 4]))
        assert '"mrr": 0.583333' in text and '"queries": 3' in text

    def test_empty(self):
        assert Metrics.from_ranks([]).count == 0
