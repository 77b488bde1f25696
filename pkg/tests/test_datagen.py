import numpy as np
import pytest

from tensorfill.datagen import (
    DecisionTree,
    GridAxis,
    Predicate,
    QueryTemplate,
    QueryTypeError,
    Table,
    TinyMLP,
    f1_score,
    generate_hpo_grid,
    generate_lowrank,
    generate_query_tensor,
    generate_smooth,
    geometric_axis,
    knn_predict,
    make_blobs,
    make_table,
    query_counts,
    random_template,
    smooth_lipschitz_bounds,
)
from tensorfill.training import decompose_dense


class TestLowRank:
    def test_rank_one_minors_vanish(self):
        x = generate_lowrank((5, 6, 4), 1, seed=3).values
        for k in range(x.shape[2]):
            s = x[:, :, k]
            minors = s[:-1, :-1] * s[1:, 1:] - s[:-1, 1:] * s[1:, :-1]
            assert np.max(np.abs(minors)) < 1e-15

    def test_range_and_meta(self):
        t = generate_lowrank((6, 6, 6), 3, seed=1)
        assert t.values.min() >= 0 and t.values.max() == 1.0
        assert t.meta["true_rank"] == 3 and t.meta["noise"] == 0.0

    def test_decomposes_at_true_rank(self):
        _, err, _ = decompose_dense(generate_lowrank((6, 6, 6), 2, seed=5), 2)
        assert err < 1e-2

    def test_deterministic(self):
        a = generate_lowrank((4, 4, 4), 2, noise=0.1, seed=9)
        assert a == generate_lowrank((4, 4, 4), 2, noise=0.1, seed=9)
        assert not a == generate_lowrank((4, 4, 4), 2, noise=0.1, seed=10)

    def test_noise_level(self):
        clean = generate_lowrank((10, 10, 10), 2, seed=2)
        noisy = generate_lowrank((10, 10, 10), 2, noise=0.05, seed=2)
        assert np.std(noisy.values - clean.values) == pytest.approx(0.05, rel=0.1)

    @pytest.mark.parametrize("kw", [{"true_rank": 0}, {"noise": -1.0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            generate_lowrank((3, 3), **{"true_rank": 1, **kw})


class TestSmooth:
    def test_constant_at_zero_frequency(self):
        t = generate_smooth((3, 4, 5), 0.0, seed=2)
        assert np.all(t.values == 0.5)

    @pytest.mark.parametrize("frequency", [0.5, 1.0, 2.0, 4.0])
    def test_lipschitz_bound(self, frequency):
        t = generate_smooth((10, 9, 8), frequency, seed=4)
        bounds = smooth_lipschitz_bounds(t)
        for n, b in enumerate(bounds):
            steps = np.abs(np.diff(t.values, axis=n))
            assert steps.max() <= b + 1e-12

    def test_scaled_to_unit_interval(self):
        t = generate_smooth((8, 8, 8), 1.0, seed=1)
        assert t.values.min() == 0.0 and t.values.max() == 1.0

    def test_deterministic(self):
        assert generate_smooth((5, 5), 1.3, seed=7) == generate_smooth((5, 5), 1.3, seed=7)

    def test_bounds_need_metadata(self):
        with pytest.raises(ValueError):
            smooth_lipschitz_bounds(generate_lowrank((3, 3), 1))


class TestLearners:
    def test_f1_hand(self):
        assert f1_score([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
        assert f1_score([0, 0], [0, 0]) == 0.0

    def test_knn_full_k_is_majority(self):
        x_tr, y_tr, x_te, y_te = make_blobs(seed=3)
        pred = knn_predict(x_tr, y_tr, x_te, k=len(x_tr))
        majority = int(y_tr.sum() * 2 >= len(y_tr))
        assert np.all(pred == majority)
        p, n = int(y_te.sum()), int((1 - y_te).sum())
        expected = 2 * p / (2 * p + n) if majority == 1 else 0.0
        assert f1_score(y_te, pred) == expected

    def test_knn_one_neighbour_memorizes(self):
        x_tr, y_tr, _, _ = make_blobs(seed=1)
        assert np.array_equal(knn_predict(x_tr, y_tr, x_tr, k=1), y_tr)

    def test_knn_rejects_k(self):
        x_tr, y_tr, x_te, _ = make_blobs(seed=1)
        with pytest.raises(ValueError):
            knn_predict(x_tr, y_tr, x_te, k=0)

    def test_deep_tree_fits_training_data(self):
        x_tr, y_tr, _, _ = make_blobs(seed=2)
        tree = DecisionTree(max_depth=30, min_leaf=1).fit(x_tr, y_tr)
        assert np.array_equal(tree.predict(x_tr), y_tr)

    def test_mlp_beats_chance_on_separated_blobs(self):
        x_tr, y_tr, x_te, y_te = make_blobs(separation=4.0, seed=0)
        pred = TinyMLP(hidden=8, epochs=200, lr=0.1, seed=0).fit(x_tr, y_tr).predict(x_te)
        assert np.mean(pred == y_te) > 0.9


class TestHPO:
    def test_majority_cell(self):
        data = make_blobs(seed=0)
        n_train = len(data[1])
        t = generate_hpo_grid([GridAxis("k", (1, n_train)), GridAxis("p", (1.0, 2.0))], "knn", data_seed=0)
        pred = knn_predict(data[0], data[1], data[2], n_train)
        assert t.values[1, 0] == t.values[1, 1] == f1_score(data[3], pred)

    def test_cells_in_unit_interval(self):
        t = generate_hpo_grid([GridAxis("max_depth", (1, 3, 6)), GridAxis("min_leaf", (1, 8))], "tree")
        assert t.values.min() >= 0 and t.values.max() <= 1

    def test_deterministic(self):
        axes = [GridAxis("hidden", (2, 4)), GridAxis("epochs", (5, 10))]
        assert generate_hpo_grid(axes, "mlp", data_seed=3) == generate_hpo_grid(axes, "mlp", data_seed=3)

    def test_clamped_k_flagged(self):
        t = generate_hpo_grid([GridAxis("k", (3, 10_000)), GridAxis("p", (1.0, 2.0))], "knn")
        assert {tuple(f["index"]) for f in t.meta["flags"]} == {(1, 0), (1, 1)}

    def test_geometric_axis(self):
        a = geometric_axis("lr", 0.01, 1.0, 3)
        assert a.values == pytest.approx((0.01, 0.1, 1.0)) and a.spacing == "geometric"
        assert geometric_axis("k", 1, 100, 5, integer=True).values == (1, 3, 10, 32, 100)

    @pytest.mark.parametrize("axes, learner", [([GridAxis("k", (1, 2))], "svm"),
                                               ([GridAxis("depth", (1, 2))], "tree"),
                                               ([GridAxis("k", (1, 2)), GridAxis("k", (3, 4))], "knn")])
    def test_rejects(self, axes, learner):
        with pytest.raises(ValueError):
            generate_hpo_grid(axes, learner)


def tiny_table():
    return Table({
        "id": np.array([1, 1, 2, 3]),
        "name": np.array(["Ab1", "Ac2", "Bd3", "Ab4"]),
        "year": np.array([1950, 1960, 1970, 1980]),
    })


class TestQuery:
    def test_tautology_under_or(self):
        t = tiny_table()
        q = QueryTemplate(t, [Predicate("year", ">=", (0,)), Predicate("name", "prefix", ("Z", "A"))], "OR")
        assert query_counts(q).tolist() == [[4, 4]]

    def test_empty_conjunction(self):
        t = tiny_table()
        q = QueryTemplate(t, [Predicate("year", "<", (1900,)), Predicate("name", "prefix", ("A",))], ("AND",))
        assert query_counts(q).tolist() == [[0]]

    def test_hand_counts(self):
        t = tiny_table()
        q = QueryTemplate(t, [Predicate("year", "<=", (1950, 1970)), Predicate("name", "prefix", ("A", "B"))],
                          ("AND",), distinct="id")
        assert query_counts(q).tolist() == [[1, 0], [2, 1]]
        assert query_counts(q, distinct=True).tolist() == [[1, 0], [1, 1]]

    def test_left_to_right_connectors(self):
        t = tiny_table()
        preds = [Predicate("year", "==", (1950,)), Predicate("year", "==", (1960,)), Predicate("name", "prefix", ("B",))]
        q = QueryTemplate(t, preds, "OR_AND")
        assert q.expression() == "((p1 OR p2) AND p3)"
        assert query_counts(q).item() == 0

    def test_distinct_never_exceeds_count(self):
        q = random_template(make_table(150, seed=5), n_values=4, seed=2)
        assert np.all(query_counts(q, distinct=True) <= query_counts(q))

    def test_scaled_tensor_recovers_counts(self):
        q = random_template(make_table(120, seed=1), n_values=3, seed=3)
        t = generate_query_tensor(q)
        raw = t.meta["min"] + t.values * (t.meta["max"] - t.meta["min"])
        assert np.array_equal(np.rint(raw).astype(int), query_counts(q, distinct=True))
        assert t.meta["kind"] == "distinct"

    @pytest.mark.parametrize("pred", [Predicate("year", "prefix", ("19",)), Predicate("name", "<", ("B",)),
                                      Predicate("year", "==", ("1950",))])
    def test_type_errors(self, pred):
        q = QueryTemplate(tiny_table(), [pred], ())
        with pytest.raises(QueryTypeError):
            query_counts(q)

    def test_connector_count(self):
        with pytest.raises(ValueError):
            QueryTemplate(tiny_table(), [Predicate("year", "<", (1,))], ("AND",))

    def test_unknown_column(self):
        with pytest.raises(KeyError):
            QueryTemplate(tiny_table(), [Predicate("year", "<", (1,))], (), distinct="nope")

    def test_table_deterministic(self):
        a, b = make_table(50, 4), make_table(50, 4)
        assert all(np.array_equal(a[c], b[c]) for c in a.columns)
