import numpy as np
import pytest

from clureg.centroids import (CentroidStrategy, CentroidTracker, LossWeights,
                              augment_with_pseudo, cross_entropy, predict,
                              select_confident, combined_loss,
                              update_centroids)
from clureg.gradcheck import grad_check
from clureg.tape import Tape


def test_first_update_equals_batch_mean():
    tr = CentroidTracker.zeros(3, 2)
    X = np.array([[1.0, 1.0], [3.0, 3.0]])
    update_centroids(tr, X, np.array([1, 1]))
    assert np.array_equal(tr.mu[1], [2.0, 2.0])
    assert tr.counts.tolist() == [0, 1, 0]


def test_second_update_is_running_mean_of_batch_means():
    tr = CentroidTracker.zeros(2, 2)
    update_centroids(tr, np.array([[2.0, 2.0]]), np.array([0]))
    update_centroids(tr, np.array([[4.0, 4.0]]), np.array([0]))
    assert np.array_equal(tr.mu[0], [3.0, 3.0])
    assert tr.counts[0] == 2


def test_absent_class_untouched():
    tr = CentroidTracker.zeros(3, 2)
    update_centroids(tr, np.array([[1.0, 0.0]]), np.array([0]))
    mu_before = tr.mu[2].copy()
    update_centroids(tr, np.array([[5.0, 5.0]]), np.array([1]))
    assert np.array_equal(tr.mu[2], mu_before)
    assert tr.counts[2] == 0


def test_label_out_of_range_rejected():
    tr = CentroidTracker.zeros(2, 2)
    with pytest.raises(ValueError, match="label"):
        update_centroids(tr, np.ones((1, 2)), np.array([2]))


def test_running_mean_identity_against_independent_accumulation():
    rng = np.random.default_rng(0)
    k, d = 4, 3
    tr = CentroidTracker.zeros(k, d)
    history = {c: [] for c in range(k)}
    for _ in range(1000):
        present = rng.choice(k, size=rng.integers(1, k + 1), replace=False)
        rows, labels = [], []
        for c in present:
            m = rng.integers(1, 4)
            rows.append(rng.standard_normal((m, d)))
            labels.extend([c] * m)
        X = np.vstack(rows)
        y = np.array(labels)
        update_centroids(tr, X, y)
        for c in present:
            history[c].append(X[y == c].mean(axis=0))
    for c in range(k):
        assert tr.counts[c] == len(history[c])
        if history[c]:
            oracle = np.mean(history[c], axis=0)
            assert np.abs(tr.mu[c] - oracle).max() <= 1e-12


def test_interleaving_does_not_matter():
    rng = np.random.default_rng(1)
    means_a = rng.standard_normal((5, 2))
    means_b = rng.standard_normal((3, 2))
    tr = CentroidTracker.zeros(2, 2)
    a_iter, b_iter = iter(means_a), iter(means_b)
    for pick in [0, 1, 0, 0, 1, 0, 1, 0]:
        m = next(a_iter) if pick == 0 else next(b_iter)
        update_centroids(tr, m[None, :], np.array([pick]))
    assert np.abs(tr.mu[0] - means_a.mean(axis=0)).max() <= 1e-12
    assert np.abs(tr.mu[1] - means_b.mean(axis=0)).max() <= 1e-12


def test_literal_mode_divides_by_batch_size_and_shrinks_absent():
    tr = CentroidTracker.zeros(2, 1, literal_batch_norm=True)
    X = np.array([[2.0], [4.0], [6.0]])
    y = np.array([0, 0, 1])
    update_centroids(tr, X, y)  # tau=1: mu0 = 6/3 = 2, mu1 = 6/3 = 2
    assert np.array_equal(tr.mu[:, 0], [2.0, 2.0])
    update_centroids(tr, np.array([[3.0]]), np.array([0]))  # tau=2
    # mu0 = 1/2*2 + 1/2*(3/1) = 2.5 ; mu1 = 1/2*2 + 0 = 1 (dragged down)
    assert np.array_equal(tr.mu[:, 0], [2.5, 1.0])


def test_select_confident_threshold_rules():
    gamma = np.array([[0.85, 0.15], [1.0, 0.0], [0.4, 0.6]])
    idx, labels = select_confident(gamma, 0.9)
    assert idx.tolist() == [1]
    assert labels.tolist() == [0]
    with pytest.raises(ValueError, match="threshold"):
        select_confident(gamma, 0.0)
    with pytest.raises(ValueError, match="threshold"):
        select_confident(gamma, 1.1)


def test_augment_with_pseudo_matches_independent_accumulation():
    rng = np.random.default_rng(2)
    X_l = rng.standard_normal((4, 2))
    y_l = np.array([0, 0, 1, 1])
    X_t = rng.standard_normal((5, 2))
    gamma_t = np.array([[0.95, 0.05], [0.5, 0.5], [0.05, 0.95],
                        [0.91, 0.09], [0.6, 0.4]])
    tr = CentroidTracker.zeros(2, 2)
    augment_with_pseudo(tr, X_l, y_l, X_t, gamma_t, 0.9)
    qualifying0 = np.vstack([X_l[:2], X_t[[0, 3]]])
    qualifying1 = np.vstack([X_l[2:], X_t[[2]]])
    assert np.abs(tr.mu[0] - qualifying0.mean(axis=0)).max() <= 1e-12
    assert np.abs(tr.mu[1] - qualifying1.mean(axis=0)).max() <= 1e-12


def test_augment_ignores_below_threshold():
    tr = CentroidTracker.zeros(2, 1)
    X_l = np.array([[1.0], [3.0]])
    y_l = np.array([0, 1])
    augment_with_pseudo(tr, X_l, y_l, np.array([[100.0]]),
                        np.array([[0.85, 0.15]]), 0.9)
    assert np.array_equal(tr.mu[:, 0], [1.0, 3.0])


def test_strategy_validation():
    assert CentroidStrategy("gs").tracker_driven
    assert CentroidStrategy("gs_pt").tracker_driven
    assert not CentroidStrategy("learned").tracker_driven
    with pytest.raises(ValueError, match="strategy"):
        CentroidStrategy("magic")
    with pytest.raises(ValueError, match="threshold"):
        CentroidStrategy("gs_pt", conf_threshold=0.0)


def test_loss_weights_validation():
    with pytest.raises(ValueError, match="beta"):
        LossWeights(beta=-1.0, delta=0.0)
    with pytest.raises(ValueError, match="delta"):
        LossWeights(beta=0.0, delta=np.inf)


def test_cross_entropy_values():
    t = Tape()
    gamma = t.leaf(np.array([[0.7, 0.3], [0.2, 0.8]]))
    ce = cross_entropy(gamma, np.array([0, 1]))
    assert float(ce.value) == pytest.approx(
        -(np.log(0.7) + np.log(0.8)) / 2, abs=1e-12)


def test_cross_entropy_perfect_prediction_is_zero():
    t = Tape()
    gamma = t.leaf(np.array([[1.0, 0.0], [0.0, 1.0]]))
    ce = cross_entropy(gamma, np.array([0, 1]))
    assert float(ce.value) == 0.0


def test_cross_entropy_clamps_zero_probability():
    t = Tape()
    gamma = t.leaf(np.array([[0.0, 1.0]]))
    ce = cross_entropy(gamma, np.array([0]))
    assert float(ce.value) == pytest.approx(-np.log(1e-12), rel=1e-9)


def test_cross_entropy_ignores_trailing_unlabeled_rows():
    t = Tape()
    g = np.array([[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]])
    ce_masked = cross_entropy(t.leaf(g), np.array([0, 1]))
    t2 = Tape()
    ce_plain = cross_entropy(t2.leaf(g[:2]), np.array([0, 1]))
    assert float(ce_masked.value) == float(ce_plain.value)


def test_cross_entropy_rejects_empty():
    t = Tape()
    with pytest.raises(ValueError, match="empty"):
        cross_entropy(t.leaf(np.ones((2, 2)) / 2), np.array([], dtype=int))


def test_cross_entropy_gradient():
    rng = np.random.default_rng(3)
    from clureg.tape import softmax_rows, matmul

    def loss(L):
        gamma = softmax_rows(matmul(L["x"], L["w"]))
        return cross_entropy(gamma, np.array([0, 1, 2, 0]))

    report = grad_check(loss, {"x": rng.standard_normal((4, 3)),
                               "w": rng.standard_normal((3, 3))}, h=1e-6, tol=1e-5)
    assert report.passed


def test_total_loss_composition_and_breakdown():
    t = Tape()
    gamma = t.leaf(np.array([[0.9, 0.1]]))
    cm_total = t.leaf(np.asarray(0.5))
    base = t.leaf(np.asarray(0.25))
    weights = LossWeights(beta=2.0, delta=4.0)
    total, br = combined_loss(gamma, np.array([0]), cm_total, base, weights)
    expected = -np.log(0.9) + 2.0 * 0.5 + 4.0 * 0.25
    assert float(total.value) == pytest.approx(expected, abs=1e-12)
    assert br["ce"] == pytest.approx(-np.log(0.9), abs=1e-12)
    assert br["cm_total"] == 0.5 and br["base"] == 0.25


def test_total_loss_degenerates_to_ce_bitwise():
    t = Tape()
    gamma = t.leaf(np.array([[0.6, 0.4], [0.3, 0.7]]))
    cm_total = t.leaf(np.asarray(123.456))
    weights = LossWeights(beta=0.0, delta=0.0)
    total, br = combined_loss(gamma, np.array([0, 1]), cm_total, 99.9, weights)
    t2 = Tape()
    ce_only = cross_entropy(t2.leaf(np.array([[0.6, 0.4], [0.3, 0.7]])),
                            np.array([0, 1]))
    assert float(total.value) == float(ce_only.value)  # bit-exact


def test_total_loss_perfect_zero():
    t = Tape()
    gamma = t.leaf(np.array([[1.0, 0.0]]))
    total, _ = combined_loss(gamma, np.array([0]), 0.0, 0.0,
                                  LossWeights(beta=1.0, delta=1.0))
    assert float(total.value) == 0.0


def test_predict_rules():
    assert predict(np.array([[0.0, 0.0, 1.0]])).tolist() == [2]
    assert predict(np.array([[1 / 3, 1 / 3, 1 / 3]])).tolist() == [0]  # tie
    assert predict(np.array([[0.2, 0.5, 0.3]])).tolist() == [1]


def test_predict_monotone_invariance():
    rng = np.random.default_rng(4)
    gamma = rng.dirichlet(np.ones(4), size=30)
    base = predict(gamma)
    for transform in (np.sqrt, lambda g: g ** 3, lambda g: np.log(g + 1e-9)):
        assert np.array_equal(predict(transform(gamma)), base)
