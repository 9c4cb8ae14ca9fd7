from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patentkg.errors import InputError, TruncationError
from patentkg.kg import KnowledgeGraph, Patent
from patentkg.linkpred import PredictedLinkSet
from patentkg.patents import (PredictedPatent, augment_graph, dumps_candidates,
                              enumerate_candidate_patents, future_patent_sets, loads_candidates,
                              maximal_cliques_with_edge, validate_patent)

from conftest import brute_maximal_cliques_with_tag, graph_from_edges, random_edges

PATH = graph_from_edges(3, [(0, 1), (1, 2)])


def links_for(kg, pairs):
    return PredictedLinkSet(kg.cutoff_year, "TEST", [(i, j, 1.0) for i, j in pairs], kg.entities)


def test_augment_examples():
    assert augment_graph(PATH, links_for(PATH, [])).edges == PATH.edges
    tri = augment_graph(PATH, links_for(PATH, [(0, 2)]))
    assert len(tri.edges) == len(PATH.edges) + 1
    assert tri.predicted == {(0, 2)}
    assert tri.edges[(0, 2)] == PATH.cutoff_year
    assert all(tri.edges[e] == y for e, y in PATH.edges.items())


def test_augment_rejects_bad_links():
    with pytest.raises(InputError):
        augment_graph(PATH, links_for(PATH, [(0, 1)]))
    with pytest.raises(InputError):
        augment_graph(PATH, links_for(PATH, [(0, 5)]))
    other = graph_from_edges(4, [])
    with pytest.raises(InputError):
        augment_graph(PATH, links_for(other, [(0, 2)]))


def test_enumerate_examples():
    assert enumerate_candidate_patents(PATH) == []
    tri = augment_graph(PATH, links_for(PATH, [(0, 2)]))
    (only,) = enumerate_candidate_patents(tri, "CNM")
    assert only.entities == ("e00", "e01", "e02")
    assert only.predicted_edges == (("e00", "e02"),)
    assert only.method == "CNM"


def test_lone_predicted_edge_is_a_two_entity_patent():
    kg = graph_from_edges(4, [(0, 1), (1, 2)])
    aug = augment_graph(kg, links_for(kg, [(2, 3)]))
    assert [p.entities for p in enumerate_candidate_patents(aug)] == [("e02", "e03")]


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 12), st.floats(0.1, 0.9), st.floats(0.0, 0.6), st.integers(0, 2**32 - 1))
def test_enumeration_equals_subset_oracle(n, p, tag_p, seed):
    rng = np.random.default_rng(seed)
    edges = random_edges(rng, n, p)
    tagged = [e for e in edges if rng.random() < tag_p]
    kg = KnowledgeGraph(2010, tuple(f"e{k:02d}" for k in range(n)),
                        {e: 2010 for e in edges}, {}, frozenset(tagged))
    got = {frozenset(int(x[1:]) for x in c.entities) for c in enumerate_candidate_patents(kg)}
    assert got == brute_maximal_cliques_with_tag(n, edges, tagged)
    adj = kg.adjacency()
    for c in enumerate_candidate_patents(kg):
        idx = sorted(int(x[1:]) for x in c.entities)
        assert all((a, b) in kg.edges for a, b in combinations(idx, 2))
        assert c.predicted_edges
        assert not set.intersection(*(adj[v] for v in idx)) - set(idx)


def test_enumeration_is_sorted_and_unique():
    rng = np.random.default_rng(1)
    edges = random_edges(rng, 12, 0.6)
    kg = KnowledgeGraph(2010, tuple(f"e{k:02d}" for k in range(12)), {e: 2010 for e in edges},
                        {}, frozenset(edges[::3]))
    out = enumerate_candidate_patents(kg)
    keys = [c.entities for c in out]
    assert keys == sorted(set(keys))


def test_clique_cap_truncates():
    n = 12
    # complement of a perfect matching has 2^6 maximal cliques
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if not (i % 2 == 0 and j == i + 1)]
    adj = graph_from_edges(n, edges).adjacency()
    assert len(maximal_cliques_with_edge(adj, edges)) == 64
    with pytest.raises(TruncationError, match="10"):
        maximal_cliques_with_edge(adj, edges, cap=10)


def patent(*ents):
    return PredictedPatent(tuple(ents), (), 2010, "")


def test_validate_examples():
    assert validate_patent(patent("A", "B"), {"p": {"A", "B", "C"}})
    assert not validate_patent(patent("A", "B"), {"p": {"A", "C"}, "q": {"B", "C"}})
    assert not validate_patent(patent("A", "B"), {})


@settings(max_examples=100, deadline=None)
@given(st.sets(st.sampled_from("ABCDEF"), min_size=2, max_size=4),
       st.lists(st.sets(st.sampled_from("ABCDEF")), max_size=6),
       st.lists(st.sets(st.sampled_from("ABCDEF")), max_size=6))
def test_validate_monotone(ents, base, extra):
    S = {f"p{k}": s for k, s in enumerate(base)}
    T = dict(S, **{f"q{k}": s for k, s in enumerate(extra)})
    if validate_patent(patent(*sorted(ents)), S):
        assert validate_patent(patent(*sorted(ents)), T)


def test_future_patent_window():
    kg = KnowledgeGraph(2013, ("a", "b", "c"), {(0, 1): 2011, (1, 2): 2013},
                        {"P1": Patent(2011, frozenset({0, 1})), "P2": Patent(2013, frozenset({1, 2})),
                         "P3": Patent(2012, frozenset({2}))})
    assert future_patent_sets(kg, 2011) == {"P2": {"b", "c"}, "P3": {"c"}}
    assert future_patent_sets(kg, 2011, 2012) == {"P3": {"c"}}


def test_candidate_file_round_trip():
    cands = [PredictedPatent(("a", "b", "c"), (("a", "c"),), 2012, "CNM")]
    text = dumps_candidates(cands, [True])
    assert '"valid": true' in text
    assert loads_candidates(text, 2012, "CNM") == cands
