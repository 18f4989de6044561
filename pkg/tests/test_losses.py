import math

import numpy as np
import pytest

import gradcheck
from cfspectral import data, linalg, losses
from cfspectral.errors import DegenerateBatch, DegenerateMatrix, UndefinedAngle
from cfspectral.model import EmbeddingModel, init_model

RTOL_FD = 1e-4


def random_instance(seed, n_users=12, n_items=14, d=6, batch=8, k=4):
    rng = np.random.default_rng(seed)
    model = init_model(n_users, n_items, d, seed=seed)
    users = rng.integers(0, n_users, size=batch)
    pos = rng.integers(0, n_items, size=batch)
    neg = rng.integers(0, n_items, size=batch)
    negk = rng.integers(0, n_items, size=(batch, k))
    return model, users, pos, neg, negk


def check_model_loss(loss_fn, model, batch, seed_note=""):
    """Analytic vs central-difference gradients on every touched row."""
    value, grads = loss_fn(model)
    fd_u, fd_i = gradcheck.fd_model_grads(
        lambda m: loss_fn(m)[0].total, model,
        rows_u=list(grads.user_idx), rows_i=list(grads.item_idx))
    for j, g in zip(grads.user_idx, grads.user_grad):
        err = gradcheck.relative_error(g, fd_u[j])
        assert err < RTOL_FD, f"user row {j} rel err {err} {seed_note}"
    for j, g in zip(grads.item_idx, grads.item_grad):
        err = gradcheck.relative_error(g, fd_i[j])
        assert err < RTOL_FD, f"item row {j} rel err {err} {seed_note}"
    return value


# ---------------------------------------------------------------------------
# pairwise ranking
# ---------------------------------------------------------------------------

def test_bpr_equal_scores_is_ln2():
    model = EmbeddingModel(np.array([[1.0, 0.0]]),
                           np.array([[0.5, 0.5], [0.5, -0.5]]))
    batch = data.TripletBatch(np.array([0]), np.array([0]), np.array([1]))
    value, _ = losses.bpr_loss_grad(model, batch)
    assert value.total == pytest.approx(math.log(2.0), rel=1e-12)


def test_bpr_margin_one():
    model = EmbeddingModel(np.array([[1.0, 0.0]]),
                           np.array([[1.0, 0.0], [0.0, 1.0]]))
    batch = data.TripletBatch(np.array([0]), np.array([0]), np.array([1]))
    value, _ = losses.bpr_loss_grad(model, batch)
    assert value.total == pytest.approx(math.log(1.0 + math.exp(-1.0)),
                                        rel=1e-12)


def test_bpr_large_margin_loss_vanishes():
    model = EmbeddingModel(np.array([[40.0, 0.0]]),
                           np.array([[1.0, 0.0], [-1.0, 0.0]]))
    batch = data.TripletBatch(np.array([0]), np.array([0]), np.array([1]))
    value, _ = losses.bpr_loss_grad(model, batch)
    assert value.total < 1e-12


def test_bpr_gradcheck():
    model, users, pos, neg, _ = random_instance(0)
    batch = data.TripletBatch(users, pos, neg)
    check_model_loss(lambda m: losses.bpr_loss_grad(m, batch), model, batch)


# ---------------------------------------------------------------------------
# sampled softmax
# ---------------------------------------------------------------------------

def test_ssm_two_way_tie():
    model = EmbeddingModel(np.array([[1.0, 0.0]]),
                           np.array([[0.3, 0.3], [0.3, -0.1]]))
    # identical positive and negative scores
    model.item_table[1] = model.item_table[0]
    batch = data.SetBatch(np.array([0]), np.array([0]), np.array([[1]]))
    value, _ = losses.ssm_loss_grad(model, batch)
    assert value.total == pytest.approx(math.log(2.0), rel=1e-12)


@pytest.mark.parametrize("k", [1, 3, 10])
def test_ssm_all_tied_is_log_kplus1(k):
    model = EmbeddingModel(np.ones((1, 3)), np.tile([0.2, -0.4, 0.1], (k + 1, 1)))
    batch = data.SetBatch(np.array([0]), np.array([0]),
                          np.arange(1, k + 1)[None, :])
    value, _ = losses.ssm_loss_grad(model, batch)
    assert value.total == pytest.approx(math.log(k + 1.0), rel=1e-12)


def test_ssm_k1_gradient_parallel_to_bpr():
    model, users, pos, neg, _ = random_instance(3, batch=1)
    trip = data.TripletBatch(users, pos, neg)
    setb = data.SetBatch(users, pos, neg[:, None])
    _, g_bpr = losses.bpr_loss_grad(model, trip)
    _, g_ssm = losses.ssm_loss_grad(model, setb)
    # with one negative the two losses coincide, so directions must agree
    for a, b in ((g_bpr.user_grad, g_ssm.user_grad),
                 (g_bpr.item_grad, g_ssm.item_grad)):
        ratio = np.linalg.norm(a) / np.linalg.norm(b)
        np.testing.assert_allclose(a, ratio * b, atol=1e-10)


def test_ssm_gradcheck():
    model, users, pos, _, negk = random_instance(1)
    batch = data.SetBatch(users, pos, negk)
    check_model_loss(lambda m: losses.ssm_loss_grad(m, batch), model, batch)


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------

def pair_batch(users, items):
    return data.PairBatch(np.asarray(users), np.asarray(items))


def test_align_identical_directions():
    model = EmbeddingModel(np.array([[2.0, 0.0]]), np.array([[5.0, 0.0]]))
    value, _ = losses.align_loss_grad(model, pair_batch([0], [0]))
    assert value.total == pytest.approx(0.0, abs=1e-12)


def test_align_antipodal_is_four():
    model = EmbeddingModel(np.array([[1.0, 0.0]]), np.array([[-3.0, 0.0]]))
    value, _ = losses.align_loss_grad(model, pair_batch([0], [0]))
    assert value.total == pytest.approx(4.0, rel=1e-12)


def test_align_orthogonal_is_two():
    model = EmbeddingModel(np.array([[1.0, 0.0]]), np.array([[0.0, 7.0]]))
    value, _ = losses.align_loss_grad(model, pair_batch([0], [0]))
    assert value.total == pytest.approx(2.0, rel=1e-12)


def test_align_gradcheck_with_repeated_rows():
    model, users, pos, _, _ = random_instance(2)
    users[1] = users[0]  # force row accumulation paths
    pos[2] = pos[0]
    batch = pair_batch(users, pos)
    check_model_loss(lambda m: losses.align_loss_grad(m, batch), model, batch)


# ---------------------------------------------------------------------------
# uniformity
# ---------------------------------------------------------------------------

def test_uniform_two_identical_rows():
    value, _ = losses.uniform_loss_grad(np.array([[1.0, 1.0], [2.0, 2.0]]))
    assert value == pytest.approx(0.0, abs=1e-12)


def test_uniform_antipodal_pair():
    value, _ = losses.uniform_loss_grad(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert value == pytest.approx(-8.0, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 6])
def test_uniform_identical_rows_pair_count(n):
    value, _ = losses.uniform_loss_grad(np.tile([0.0, 2.0], (n, 1)))
    assert value == pytest.approx(math.log(n * (n - 1) / 2.0), rel=1e-12)


def test_uniform_needs_two_rows():
    with pytest.raises(DegenerateBatch):
        losses.uniform_loss_grad(np.array([[1.0, 0.0]]))


def test_uniform_lower_bound():
    rng = np.random.default_rng(8)
    for _ in range(10):
        n = int(rng.integers(2, 12))
        rows = rng.standard_normal((n, 4))
        value, _ = losses.uniform_loss_grad(rows)
        pairs = n * (n - 1) / 2.0
        assert value >= math.log(pairs) - 8.0 - 1e-12


def test_uniform_gradcheck():
    rng = np.random.default_rng(5)
    table = rng.standard_normal((9, 5))
    _, grad = losses.uniform_loss_grad(table)
    fd = gradcheck.fd_table_grad(lambda t: losses.uniform_loss_grad(t)[0],
                                 table)
    assert gradcheck.relative_error(grad, fd) < RTOL_FD


# ---------------------------------------------------------------------------
# stable-rank regularizer
# ---------------------------------------------------------------------------

def test_srank_reg_identity():
    value, _ = losses.srank_reg_loss_grad(np.eye(4))
    assert value == pytest.approx(1.0, rel=1e-9)


def test_srank_reg_rank_one_three_by_two():
    table = np.outer([1.0, -2.0, 0.5], [3.0, 4.0])
    value, _ = losses.srank_reg_loss_grad(table)
    assert value == pytest.approx(1.0 / 3.0, rel=1e-9)


def test_srank_raw_gradient_matches_symbolic():
    # power iteration delivers the singular pair to ~1e-7 here, far inside
    # the 1e-4 finite-difference tolerance that governs gradient quality
    srank, grad = losses.srank_value_grad(np.diag([2.0, 1.0]))
    assert srank == pytest.approx(1.25, rel=1e-9)
    np.testing.assert_allclose(grad, np.diag([-0.25, 0.5]), atol=1e-6)


def test_srank_raw_gradient_matches_fd():
    # the same diag(2,1) anchor, this time against finite differences
    table = np.diag([2.0, 1.0])
    _, grad = losses.srank_value_grad(table)
    fd = gradcheck.fd_table_grad(lambda t: losses.srank_value_grad(t)[0],
                                 table)
    assert gradcheck.relative_error(grad, fd) < RTOL_FD


def test_srank_reg_zero_table():
    with pytest.raises(DegenerateMatrix):
        losses.srank_reg_loss_grad(np.zeros((3, 2)))


def test_srank_reg_in_unit_interval():
    rng = np.random.default_rng(12)
    for _ in range(10):
        n, m = int(rng.integers(2, 12)), int(rng.integers(2, 7))
        value, _ = losses.srank_reg_loss_grad(rng.standard_normal((n, m)))
        assert 0.0 < value <= 1.0 + 1e-12


def test_srank_reg_gradcheck():
    rng = np.random.default_rng(6)
    table = rng.standard_normal((10, 4))
    _, grad = losses.srank_reg_loss_grad(table)
    fd = gradcheck.fd_table_grad(lambda t: losses.srank_reg_loss_grad(t)[0],
                                 table)
    assert gradcheck.relative_error(grad, fd) < RTOL_FD


def test_srank_ascent_step_raises_stable_rank():
    rng = np.random.default_rng(14)
    for trial in range(5):
        # rank-deficient-leaning table: rank-1 plus small noise
        base = np.outer(rng.standard_normal(8), rng.standard_normal(4))
        table = base + 0.05 * rng.standard_normal((8, 4))
        unit, _ = np.divide(table, np.linalg.norm(table, axis=1, keepdims=True)), None
        before = linalg.stable_rank(unit)
        _, grad = losses.srank_reg_loss_grad(table)
        stepped = table - 1e-3 * (-grad)  # optimizer applies weight -gamma_sr
        stepped_unit = stepped / np.linalg.norm(stepped, axis=1, keepdims=True)
        after = linalg.stable_rank(stepped_unit)
        assert after > before, f"trial {trial}: {after} <= {before}"


# ---------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------

def test_directau_gamma_zero_equals_align():
    model, users, pos, _, _ = random_instance(4)
    batch = pair_batch(users, pos)
    a_val, a_grad = losses.align_loss_grad(model, batch)
    d_val, d_grad = losses.directau_loss_grad(model, batch, gamma=0.0)
    assert d_val.total == pytest.approx(a_val.total, abs=1e-12)
    np.testing.assert_allclose(d_grad.user_grad, a_grad.user_grad, atol=1e-12)


def test_directau_single_pair_skips_uniformity():
    model, _, _, _, _ = random_instance(5)
    value, _ = losses.directau_loss_grad(model, pair_batch([1], [2]), gamma=2.0)
    assert "uniform_user_skipped" in value.flags
    assert "uniform_item_skipped" in value.flags
    assert value.total == pytest.approx(value.components["align"], abs=1e-12)


def test_directau_recomposition():
    model, users, pos, _, _ = random_instance(7)
    value, _ = losses.directau_loss_grad(model, pair_batch(users, pos),
                                         gamma=2.0)
    expect = (value.components["align"]
              + 2.0 * (value.components["uniform_user"]
                       + value.components["uniform_item"]))
    assert value.total == pytest.approx(expect, abs=1e-12)


def test_directau_gradcheck():
    model, users, pos, _, _ = random_instance(8)
    batch = pair_batch(users, pos)
    check_model_loss(
        lambda m: losses.directau_loss_grad(m, batch, gamma=1.5), model, batch)


def test_warmstart_gamma_zero_equals_align():
    model, users, pos, _, _ = random_instance(9)
    batch = pair_batch(users, pos)
    a_val, _ = losses.align_loss_grad(model, batch)
    w_val, _ = losses.warmstart_loss_grad(model, batch, gamma_sr=0.0)
    assert w_val.total == pytest.approx(a_val.total, abs=1e-12)


def test_warmstart_collapsed_rank_one_batch():
    # every touched row parallel: alignment zero, srank at its minimum
    direction = np.array([0.6, 0.8])
    model = EmbeddingModel(np.outer([1.0, 2.0, 3.0], direction),
                           np.outer([1.5, 0.5], direction))
    batch = pair_batch([0, 1, 2], [0, 0, 1])
    value, _ = losses.warmstart_loss_grad(model, batch, gamma_sr=0.1)
    assert value.components["align"] == pytest.approx(0.0, abs=1e-12)
    assert value.components["srank_user"] == pytest.approx(1.0 / 3.0, rel=1e-9)
    assert value.components["srank_item"] == pytest.approx(1.0 / 2.0, rel=1e-9)


def test_warmstart_recomposition():
    model, users, pos, _, _ = random_instance(10)
    value, _ = losses.warmstart_loss_grad(model, pair_batch(users, pos),
                                          gamma_sr=0.2)
    expect = (value.components["align"]
              - 0.2 * (value.components["srank_user"]
                       + value.components["srank_item"]))
    assert value.total == pytest.approx(expect, abs=1e-12)


def test_warmstart_gradcheck():
    model, users, pos, _, _ = random_instance(11)
    batch = pair_batch(users, pos)
    check_model_loss(
        lambda m: losses.warmstart_loss_grad(m, batch, gamma_sr=0.1),
        model, batch)


# ---------------------------------------------------------------------------
# gradient geometry
# ---------------------------------------------------------------------------

def tight_cluster(n, d, theta_deg, seed):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal(d)
    base /= np.linalg.norm(base)
    rows = np.empty((n, d))
    half = np.tan(np.radians(theta_deg / 2.0))
    for j in range(n):
        w = rng.standard_normal(d)
        w -= (w @ base) * base
        w /= np.linalg.norm(w)
        rows[j] = base + rng.uniform(0.0, half) * w
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def test_gradient_angle_identical_users_undefined():
    table = np.tile([1.0, 0.0, 0.0], (4, 1))
    with pytest.raises(UndefinedAngle):
        losses.gradient_angle(table, 0)


def test_gradient_angle_parallel_is_zero():
    g = np.array([0.3, -0.4, 1.0])
    assert losses._angle_between(g, 2.5 * g) == pytest.approx(0.0, abs=1e-6)


def test_gradient_angle_cluster_agrees_initially():
    table = tight_cluster(60, 8, theta_deg=1.0, seed=15)
    mean_deg, skipped = losses.mean_gradient_angle(table)
    assert skipped == 0
    assert mean_deg < 90.0  # cos(rho) > 0: descent directions agree


def test_loss_spec_validation():
    losses.LossSpec("bpr")
    with pytest.raises(ValueError):
        losses.LossSpec("nope")
    with pytest.raises(ValueError):
        losses.LossSpec("ssm", k=0)
    with pytest.raises(ValueError):
        losses.LossSpec("directau", gamma=0.0)
