import json

import numpy as np
import pytest

from freecat.category import parse_spec
from freecat.transition import (arrow_graph, intuitive_distance,
                                transition_matrix)
from tests.conftest import DIAMOND, naive_softmax_rows, series_mat_exp, spec_text


def oracle_probs(graph, w, beta):
    """Brute-force pipeline: series exponential + naive row softmax."""
    logits = (series_mat_exp(graph.adjacency) + graph.adjacency @ w) / beta
    logits = np.clip(logits, -80.0, 80.0)
    return naive_softmax_rows(logits, 1.0)


class TestArrowGraph:
    def test_diamond_shape(self, diamond_graph):
        g = diamond_graph
        assert len(g.vertices) == 6
        assert g.adjacency.sum() == 6
        for name in ("p", "f", "g"):
            i = g.index[name]
            assert g.adjacency[:, i].sum() == 1  # in-degree 1
            assert g.adjacency[i, :].sum() == 1  # out-degree 1

    def test_object_rows_touch_only_generators(self, diamond_graph):
        g = diamond_graph
        n_obj = g.n_objects
        for name in ("unit", "X2", "X4"):
            row = g.adjacency[g.index[name]]
            assert row[:n_obj].sum() == 0
            col = g.adjacency[:, g.index[name]]
            assert col[:n_obj].sum() == 0

    def test_single_generator(self):
        doc = {"objects": [{"name": "X", "kind": "space", "dim": 1}],
               "generators": [{"name": "p", "dom": "unit", "cod": "X",
                               "primitive": {"kind": "gaussian-prior"}}],
               "data_object": "X"}
        g = arrow_graph(parse_spec(json.dumps(doc)))
        assert len(g.vertices) == 3
        assert g.adjacency.sum() == 2

    def test_parallel_edges_stay_distinct(self, diamond_graph):
        assert "f" in diamond_graph.vertices
        assert "g" in diamond_graph.vertices
        assert diamond_graph.index["f"] != diamond_graph.index["g"]

    def test_vertex_order_deterministic(self, diamond_spec):
        g1 = arrow_graph(diamond_spec)
        g2 = arrow_graph(diamond_spec)
        assert g1.vertices == g2.vertices == ("unit", "X2", "X4", "p", "f", "g")


class TestTransitionMatrix:
    def test_rows_sum_to_one(self, diamond_graph):
        rng = np.random.default_rng(0)
        for beta in (0.1, 1.0, 10.0):
            w = rng.gamma(1.0, 1.0, size=(6, 6))
            tm = transition_matrix(diamond_graph, w, beta)
            np.testing.assert_allclose(tm.probs.sum(axis=1), 1.0, atol=1e-12)

    def test_parallel_symmetry(self, diamond_graph):
        tm = transition_matrix(diamond_graph, np.zeros((6, 6)), 1.0)
        g = diamond_graph
        assert tm.probs[g.index["f"], g.index["X4"]] == \
            tm.probs[g.index["g"], g.index["X4"]]

    def test_matches_oracle_pipeline(self, diamond_graph):
        rng = np.random.default_rng(1)
        for beta in (0.5, 1.0, 3.0):
            w = rng.gamma(1.0, 1.0, size=(6, 6))
            tm = transition_matrix(diamond_graph, w, beta)
            np.testing.assert_allclose(
                tm.probs, oracle_probs(diamond_graph, w, beta), atol=1e-12)

    def test_high_temperature_uniform(self, diamond_graph):
        tm = transition_matrix(diamond_graph, np.zeros((6, 6)), 1e6)
        np.testing.assert_allclose(tm.probs, 1.0 / 6.0, atol=1e-5)

    def test_validation(self, diamond_graph):
        with pytest.raises(ValueError, match="shape"):
            transition_matrix(diamond_graph, np.zeros((3, 3)), 1.0)
        with pytest.raises(ValueError, match="beta"):
            transition_matrix(diamond_graph, np.zeros((6, 6)), -1.0)
        with pytest.raises(ValueError, match="nonnegative"):
            transition_matrix(diamond_graph, np.full((6, 6), -0.1), 1.0)

    def test_communicability_is_constant(self, diamond_graph):
        before = diamond_graph.communicability.copy()
        for beta in (0.2, 1.0, 5.0):
            transition_matrix(diamond_graph, np.ones((6, 6)), beta)
        np.testing.assert_array_equal(diamond_graph.communicability, before)
        assert not diamond_graph.communicability.flags.writeable

    def test_permutation_equivariance(self):
        # Swapping the declaration order of f and g permutes P accordingly.
        doc = json.loads(spec_text(DIAMOND))
        swapped = json.loads(spec_text(DIAMOND))
        swapped["generators"] = [doc["generators"][0], doc["generators"][2],
                                 doc["generators"][1]]
        g1 = arrow_graph(parse_spec(json.dumps(doc)))
        g2 = arrow_graph(parse_spec(json.dumps(swapped)))
        rng = np.random.default_rng(2)
        w1 = rng.gamma(1.0, 1.0, size=(6, 6))
        perm = [g2.index[v] for v in g1.vertices]
        w2 = w1[np.ix_(np.argsort(perm), np.argsort(perm))]
        # Map w1 (in g1's vertex order) into g2's order.
        inv = np.empty(6, dtype=int)
        for pos1, v in enumerate(g1.vertices):
            inv[pos1] = g2.index[v]
        w2 = np.empty_like(w1)
        for a in range(6):
            for b in range(6):
                w2[inv[a], inv[b]] = w1[a, b]
        p1 = transition_matrix(g1, w1, 1.3).probs
        p2 = transition_matrix(g2, w2, 1.3).probs
        for a in range(6):
            for b in range(6):
                assert p1[a, b] == pytest.approx(p2[inv[a], inv[b]], abs=1e-14)

    def test_monotonicity_on_edges(self, diamond_graph):
        # Raising W[i, j] on an existing edge never decreases P[r, j] for
        # the rows r that feed vertex i.
        g = diamond_graph
        rng = np.random.default_rng(3)
        base_w = rng.gamma(1.0, 1.0, size=(6, 6))
        edges = np.argwhere(g.adjacency > 0)
        for i, j in edges:
            before = transition_matrix(g, base_w, 1.0).probs
            bumped = base_w.copy()
            bumped[i, j] += 2.0
            after = transition_matrix(g, bumped, 1.0).probs
            for r in np.nonzero(g.adjacency[:, i])[0]:
                assert after[r, j] >= before[r, j]


class TestIntuitiveDistance:
    def test_parallel_symmetry(self, diamond_graph):
        tm = transition_matrix(diamond_graph, np.zeros((6, 6)), 1.0)
        d = intuitive_distance(tm, "X4")
        assert d[diamond_graph.index["f"]] == d[diamond_graph.index["g"]]

    def test_reachable_entries_finite(self, chain_graph):
        tm = transition_matrix(chain_graph, np.zeros((5, 5)), 1.0)
        d = intuitive_distance(tm, "X4")
        assert np.isfinite(d[chain_graph.index["f"]])

    def test_requires_object_vertex(self, diamond_graph):
        tm = transition_matrix(diamond_graph, np.zeros((6, 6)), 1.0)
        with pytest.raises(ValueError, match="object vertex"):
            intuitive_distance(tm, "f")
        with pytest.raises(KeyError):
            intuitive_distance(tm, "nope")

    def test_weight_bias_moves_argmin(self, diamond_graph):
        # In the row of p (the walk's location after leaving unit), raising
        # the weight on f's incoming edge pulls the soft distance toward f.
        g = diamond_graph
        i_p, i_f, i_g = g.index["p"], g.index["f"], g.index["g"]
        i_x2 = g.index["X2"]
        base = -np.log(oracle_probs(g, np.zeros((6, 6)), 1.0))
        assert base[i_p, i_f] == pytest.approx(base[i_p, i_g], abs=1e-14)
        w = np.zeros((6, 6))
        w[i_x2, i_f] = 5.0
        biased = -np.log(oracle_probs(g, w, 1.0))
        dist = -np.log(transition_matrix(g, w, 1.0).probs)
        np.testing.assert_allclose(dist, biased, atol=1e-10)
        assert dist[i_p, i_f] < dist[i_p, i_g]

    def test_weight_bias_flips_destination_column(self, diamond_graph):
        # Raising the dead (off-edge) entry W[X4, g] inflates g's softmax
        # denominator, lowering the f column entry of the distance.
        g = diamond_graph
        i_f, i_g, i_x4 = g.index["f"], g.index["g"], g.index["X4"]
        w = np.zeros((6, 6))
        w[i_x4, i_g] = 5.0
        tm = transition_matrix(g, w, 1.0)
        d = intuitive_distance(tm, "X4")
        oracle = -np.log(oracle_probs(g, w, 1.0)[:, i_x4])
        np.testing.assert_allclose(d, oracle, atol=1e-10)
        assert d[i_f] < d[i_g]
