import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patentkg import numcore as nc
from patentkg.errors import ConfigError, FormatError, InputError, SamplingError
from patentkg.linkpred import (PredictedLinkSet, TrainConfig, candidate_pairs, cnm_predict,
                               cnm_score, init_model, load_model, predict_links, sample_negatives,
                               save_model, train, transe_loss, transe_loss_tensor, transe_score)

from conftest import brute_common_neighbors, brute_cnm_rule, graph_from_edges, random_edges

SQUARE = graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
STAR = graph_from_edges(4, [(0, 1), (0, 2), (0, 3)])
TRIANGLE = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])


def test_cnm_score_examples():
    assert cnm_score(SQUARE, 0, 2) == 2
    assert cnm_score(graph_from_edges(4, [(0, 1), (2, 3)]), 0, 2) == 0
    with pytest.raises(InputError):
        cnm_score(SQUARE, 1, 1)


def test_cnm_predict_examples():
    assert len(cnm_predict(graph_from_edges(4, [(i, j) for i in range(4) for j in range(i + 1, 4)]))) == 0
    sq = cnm_predict(SQUARE)
    assert sq.pairs() == [(0, 2), (1, 3)]
    assert sq.policy["M"] == 2 and sq.policy["threshold"] == 1
    star = cnm_predict(STAR)
    assert star.pairs() == [(1, 2), (1, 3), (2, 3)]
    assert [s for *_, s in star.links] == [1, 1, 1]
    assert len(cnm_predict(graph_from_edges(1, []))) == 0


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 50), st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
def test_cnm_matches_brute_force(n, p, seed):
    rng = np.random.default_rng(seed)
    edges = random_edges(rng, n, p)
    kg = graph_from_edges(n, edges)
    nb, scores = brute_common_neighbors(n, edges)
    for (i, j), m in scores.items():
        assert cnm_score(kg, i, j) == m == cnm_score(kg, j, i)
        assert m <= min(len(nb[i]), len(nb[j]))
    assert set(cnm_predict(kg).pairs()) == brute_cnm_rule(n, edges)
    two_hop = {pair for pair, m in scores.items() if m >= 1}
    assert set(cnm_predict(kg, zeta=1).pairs()) == two_hop
    assert set(map(tuple, candidate_pairs(kg).tolist())) == two_hop
    assert set(map(tuple, candidate_pairs(kg, "all").tolist())) == set(scores)


def test_unknown_candidate_policy():
    with pytest.raises(ConfigError):
        candidate_pairs(SQUARE, "3hop")


def small_cfg(**kw):
    return TrainConfig(**{"dims": 4, "epochs": 0, "seed": 3, **kw})


def test_transe_score_examples():
    model = init_model("TRANSE", TRIANGLE, small_cfg())
    model.store["relation"].data[...] = 0.0
    assert transe_score(model, TRIANGLE, 1, 1) == 0.0
    model.store["entity"].data[2] = model.store["entity"].data[0] + 0.25
    model.store["relation"].data[...] = 0.25
    assert transe_score(model, TRIANGLE, 0, 2) == 0.0
    with pytest.raises(InputError):
        transe_score(model, TRIANGLE, 0, 7)


@pytest.mark.parametrize("seed", range(5))
def test_transe_score_independent_sum(seed):
    model = init_model("TRANSE", TRIANGLE, small_cfg(seed=seed))
    h, r, t = (model.store["entity"].data[0].tolist(), model.relation.data.tolist(),
               model.store["entity"].data[2].tolist())
    expected = -math.fsum((a + b - c) ** 2 for a, b, c in zip(h, r, t))
    assert abs(transe_score(model, TRIANGLE, 0, 2) - expected) <= 1e-12


def test_transe_loss_examples():
    model = init_model("TRANSE", TRIANGLE, small_cfg(margin=1.5))
    assert transe_loss(model, TRIANGLE, [(0, 1)], [(0, 1)]) == 1.5
    model.store["relation"].data[...] = 0.0
    model.store["entity"].data[...] = 0.0
    model.store["entity"].data[2] = [3.0, 0, 0, 0]
    assert transe_loss(model, TRIANGLE, [(0, 1)], [(0, 2)]) == 0.0
    with pytest.raises(InputError):
        transe_loss(model, TRIANGLE, [(0, 1)], [])


def test_transe_loss_seeded_batch_independent():
    kg = graph_from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])
    model = init_model("TRANSE", kg, small_cfg(seed=11))
    pos = [(0, 1), (1, 2), (2, 3), (3, 4)]
    neg = sample_negatives(6, pos, np.random.default_rng(5)).tolist()
    E, r = model.store["entity"].data.tolist(), model.relation.data.tolist()

    def d(a, b):
        return math.fsum((x + y - z) ** 2 for x, y, z in zip(E[a], r, E[b]))

    expected = math.fsum(max(0.0, 1.0 + d(*p) - d(*q)) for p, q in zip(pos, neg))
    assert abs(transe_loss(model, kg, pos, neg) - expected) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_transe_loss_nonnegative(seed):
    kg = graph_from_edges(7, random_edges(np.random.default_rng(seed), 7, 0.5))
    model = init_model("TRANSE", kg, small_cfg(seed=seed))
    pos = kg.sorted_edges() or [(0, 1)]
    neg = sample_negatives(7, pos, seed)
    assert transe_loss(model, kg, pos, neg) >= 0.0


def test_sample_negatives_properties():
    pos = np.array([(i % 20, (i * 7 + 1) % 20) for i in range(10_000)])
    neg = sample_negatives(20, pos, np.random.default_rng(0))
    differ = neg != pos
    assert (differ.sum(axis=1) == 1).all()
    heads = int(differ[:, 0].sum())
    assert abs(heads - 5000) <= 3 * math.sqrt(10_000 * 0.25)
    np.testing.assert_array_equal(neg, sample_negatives(20, pos, np.random.default_rng(0)))
    with pytest.raises(SamplingError):
        sample_negatives(1, [(0, 0)], 0)


def test_train_zero_epochs_is_initialization():
    model = train("TRANSE", TRIANGLE, small_cfg())
    fresh = init_model("TRANSE", TRIANGLE, small_cfg())
    for name in fresh.store:
        assert model.store[name].data.tobytes() == fresh.store[name].data.tobytes()
    assert model.loss_trace == []


@pytest.mark.parametrize("method", ["TRANSE", "GAT", "CGAT"])
def test_train_bitwise_deterministic(method):
    kg = graph_from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 5)])
    cfg = small_cfg(epochs=5, batch_size=2, learning_rate=0.05)
    a, b = train(method, kg, cfg), train(method, kg, cfg)
    for name in a.store:
        assert a.store[name].data.tobytes() == b.store[name].data.tobytes()
    assert a.loss_trace == b.loss_trace
    assert len(a.loss_trace) == 6


def test_triangle_training_reduces_loss():
    model = train("TRANSE", TRIANGLE, TrainConfig(epochs=200, seed=7))
    assert model.loss_trace[-1] < model.loss_trace[0]


def test_entity_rows_unit_norm_after_training():
    model = train("TRANSE", SQUARE, small_cfg(epochs=3))
    np.testing.assert_allclose(np.linalg.norm(model.store["entity"].data, axis=1), 1.0, atol=1e-12)


def test_predict_links_edge_cases():
    k4 = graph_from_edges(4, [(i, j) for i in range(4) for j in range(i + 1, 4)])
    assert len(predict_links("TRANSE", k4, train("TRANSE", k4, small_cfg()))) == 0
    model = train("TRANSE", SQUARE, small_cfg())
    top = predict_links("TRANSE", SQUARE, model, top_k=1)
    scores = {p: transe_score(model, SQUARE, *p) for p in [(0, 2), (1, 3)]}
    best = max(sorted(scores), key=lambda p: scores[p])
    assert top.pairs() == [best]
    with pytest.raises(InputError):
        predict_links("GAT", SQUARE, model)
    with pytest.raises(InputError):
        predict_links("TRANSE", SQUARE)


def test_predict_links_warns_when_k_exceeds_candidates(caplog):
    model = train("TRANSE", SQUARE, small_cfg())
    out = predict_links("TRANSE", SQUARE, model, top_k=10)
    assert len(out) == 2
    assert "exceeds" in caplog.text


@pytest.mark.parametrize("method", ["TRANSE", "GAT", "CGAT"])
def test_predict_links_matches_exhaustive_oracle(method):
    rng = np.random.default_rng(10)
    kg = graph_from_edges(10, random_edges(rng, 10, 0.35))
    model = train(method, kg, small_cfg(epochs=3))
    out = predict_links(method, kg, model, rho=0.5, candidates="all")
    reps = model.representations(kg).tolist()
    r = model.relation.data.tolist()
    scored = []
    for i in range(10):
        for j in range(i + 1, 10):
            if (i, j) not in kg.edges:
                s = -math.fsum((a + b - c) ** 2 for a, b, c in zip(reps[i], r, reps[j]))
                scored.append((-s, i, j))
    scored.sort()
    k = math.floor(0.5 * len(kg.edges) + 0.5)
    assert out.pairs() == [(i, j) for _, i, j in scored[:k]]
    for (i, j, s), (ns, *_ ) in zip(out.links, scored):
        assert abs(s + ns) <= 1e-12
    assert not set(out.pairs()) & set(kg.edges)
    assert len(set(out.pairs())) == len(out.pairs())


def test_link_file_round_trip():
    links = cnm_predict(SQUARE)
    back = PredictedLinkSet.from_json(links.to_json(), SQUARE)
    assert back.links == links.links and back.method == "CNM"
    with pytest.raises(FormatError):
        PredictedLinkSet.from_json(links.to_json().replace('"version": 1', '"version": 0'), SQUARE)


@pytest.mark.parametrize("method", ["TRANSE", "GAT", "CGAT"])
def test_model_checkpoint_round_trip(tmp_path, method):
    kg = graph_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    model = train(method, kg, small_cfg(epochs=2), {"e00": ["x", "y"]})
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.loss_trace == model.loss_trace
    assert back.representations(kg).tobytes() == model.representations(kg).tobytes()


def test_config_validation():
    for bad in ({"margin": 0}, {"epochs": -1}, {"learning_rate": 0.0}, {"batch_size": 0}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


@pytest.mark.parametrize("method", ["TRANSE", "GAT", "CGAT"])
def test_training_pipeline_grad_check(method):
    kg = graph_from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4), (2, 5)])
    sents = {e: [f"w{k % 3}", f"w{k % 2}", "z"] for k, e in enumerate(kg.entities)}
    model = init_model(method, kg, small_cfg(seed=2), sents)
    pos = kg.sorted_edges()
    neg = sample_negatives(6, pos, 4)
    report = nc.grad_check(lambda s: transe_loss_tensor(model, kg, pos, neg), model.store, tol=1e-4)
    assert report.passed, report.per_param
