import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FIG1_TEXT, fig1, random_facts, random_graph
from hyperkg.core import (
    FactSet,
    Hyperedge,
    Query,
    from_name_facts,
    giant_connected_component,
    is_connected,
    parse_facts,
    positional_neighborhood,
    queries_of_fact,
    query_from_fact,
    read_fact_lines,
    relabel,
    serialize,
)
from hyperkg.errors import (
    ArityConflict,
    EmptyFile,
    EmptyGraph,
    HyperError,
    PositionOutOfRange,
    UnknownEntity,
    UnknownRelation,
)


class TestParsing:
    def test_fig1_sizes(self):
        g = fig1()
        assert (g.num_entities, g.num_relations, g.num_edges, g.max_arity) == (9, 3, 3, 5)
        assert g.arity.tolist() == [4, 5, 3]

    def test_first_appearance_order(self):
        g = fig1()
        assert g.entity_vocab.names[:4] == ["Bengio", "ClimateAI", "Montreal", "CIFAR"]

    def test_round_trip(self):
        g = fig1()
        assert serialize(g) == FIG1_TEXT
        assert serialize(parse_facts(serialize(g))) == FIG1_TEXT

    def test_comments_and_blank_lines_skipped(self):
        g = parse_facts("# header\n\nr\ta\tb\n   \n")
        assert g.num_edges == 1

    def test_empty_file(self):
        with pytest.raises(EmptyFile):
            parse_facts("# nothing\n\n")

    def test_arity_conflict(self):
        with pytest.raises(ArityConflict):
            parse_facts("r\ta\tb\nr\ta\tb\tc\n")

    def test_duplicates_dropped_and_counted(self):
        g = parse_facts("r\ta\tb\nr\ta\tb\nr\tb\ta\n")
        assert g.num_edges == 2
        assert g.duplicates_dropped == 1

    def test_reserved_prefix(self):
        with pytest.raises(HyperError):
            read_fact_lines("r\t__edge_3\tb\n")
        assert read_fact_lines("r\t__edge_3\tb\n", allow_reserved=True) == [("r", ("__edge_3", "b"))]

    def test_repeated_entity_allowed(self):
        g = parse_facts("r\ta\tb\ta\n")
        assert g.edges[0].entities == (0, 1, 0)
        assert g.incidence_of(0) == [(0, 1), (0, 3)]


class TestIncidence:
    def test_fig1_incidence(self):
        g = fig1()
        montreal = g.entity("Montreal")
        assert g.incidence_of(montreal) == [(0, 3), (1, 2)]
        assert g.incidence_of(g.entity("Ian")) == [(2, 2)]

    def test_unknown_lookups(self):
        g = fig1()
        with pytest.raises(UnknownEntity):
            g.entity("Hinton")
        with pytest.raises(UnknownRelation):
            g.relation("Sells")
        with pytest.raises(UnknownEntity):
            g.incidence_of(99)

    def test_incidence_matches_loop(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, n_facts=40)
        for v in range(g.num_entities):
            expected = [(i, p) for i, e in enumerate(g.edges) for p, u in enumerate(e.entities, 1) if u == v]
            assert g.incidence_of(v) == expected

    def test_positional_neighborhood(self):
        e = Hyperedge(0, (5, 6, 7))
        assert positional_neighborhood(e, 2) == [(5, 1), (7, 3)]
        with pytest.raises(PositionOutOfRange):
            positional_neighborhood(e, 4)


class TestQueries:
    def test_queries_of_fact(self):
        e = Hyperedge(1, (3, 4, 5, 6, 7))
        qs = queries_of_fact(e)
        assert len(qs) == 5
        assert qs[1] == Query(1, ((1, 3), (3, 5), (4, 6), (5, 7)), 2)
        assert all(q.complete(e.entities[q.masked_position - 1]) == e.entities for q in qs)

    def test_validate(self):
        q = query_from_fact(Hyperedge(0, (1, 2)), 1)
        q.validate(2)
        with pytest.raises(PositionOutOfRange):
            Query(0, ((1, 1),), 3).validate(2)

    def test_factset_completions(self):
        edges = [Hyperedge(0, (1, 2, 3)), Hyperedge(0, (4, 2, 3)), Hyperedge(0, (1, 5, 3))]
        fs = FactSet(edges)
        assert fs.completions(query_from_fact(edges[0], 1)) == {1, 4}
        assert fs.completions(query_from_fact(edges[0], 2)) == {2, 5}
        assert (0, (4, 2, 3)) in fs and (0, (2, 4, 3)) not in fs

    def test_factset_matches_loop(self):
        rng = np.random.default_rng(3)
        g = random_graph(rng, n_entities=5, n_facts=40)
        fs = g.fact_set()
        for e in g.edges:
            for q in queries_of_fact(e):
                expected = {v for v in range(g.num_entities) if (e.relation, q.complete(v)) in fs}
                assert fs.completions(q) == expected


class TestComponents:
    def test_gcc_picks_largest(self):
        g = parse_facts("r\ta\tb\nr\tb\tc\nr\tx\ty\n")
        gcc = giant_connected_component(g)
        assert gcc.num_edges == 2
        assert sorted(gcc.entity_vocab.names) == ["a", "b", "c"]
        assert is_connected(gcc) and not is_connected(g)

    def test_gcc_tie_takes_first(self):
        g = parse_facts("r\tx\ty\nr\ta\tb\n")
        assert giant_connected_component(g).entity_vocab.names == ["x", "y"]

    def test_gcc_empty(self):
        g = from_name_facts([], entities=["a"])
        with pytest.raises(EmptyGraph):
            giant_connected_component(g)

    def test_hyperedge_connects_all_members(self):
        g = parse_facts("r\ta\tb\tc\tq\ns\tq\tz\n")
        assert is_connected(g)


class TestRelabel:
    def test_isomorphic_copy(self):
        rng = np.random.default_rng(1)
        g = random_graph(rng)
        pe = rng.permutation(g.num_entities)
        pr = rng.permutation(g.num_relations)
        h = relabel(g, pe, pr)
        assert h.num_edges == g.num_edges
        fs = h.fact_set()
        for e in g.edges:
            assert (int(pr[e.relation]), tuple(int(pe[v]) for v in e.entities)) in fs
        # names follow their entities
        for v in range(g.num_entities):
            assert h.entity_vocab.name(int(pe[v])) == g.entity_vocab.name(v)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_serialize_round_trip_property(seed):
    g = from_name_facts(random_facts(np.random.default_rng(seed)))
    h = parse_facts(serialize(g))
    assert list(h.iter_fact_names()) == list(g.iter_fact_names())
