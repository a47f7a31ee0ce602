import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from himo import hide, losses
from himo.errors import ValidationError

from _oracles import central_difference, cosine_matrix, infonce, rel_err


def _pair(seed, n=6, d=5):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)), rng.standard_normal((n, d))


def test_cosine_matrix_matches_loops():
    v, u = _pair(0)
    sim = losses.cosine_similarity_matrix(v, u)
    np.testing.assert_allclose(sim.scores, cosine_matrix(v, u), atol=1e-14)


@pytest.mark.parametrize("temperature", [0.07, 0.5, 2.0])
def test_infonce_matches_loops(temperature):
    v, u = _pair(1)
    sim = losses.cosine_similarity_matrix(v, u, temperature)
    assert losses.infonce_symmetric(sim) == pytest.approx(
        infonce(cosine_matrix(v, u), temperature), rel=1e-12, abs=1e-12)


def test_infonce_is_symmetric_in_modalities():
    v, u = _pair(2)
    a = losses.infonce_symmetric(losses.cosine_similarity_matrix(v, u))
    b = losses.infonce_symmetric(losses.cosine_similarity_matrix(u, v))
    assert a == pytest.approx(b, rel=1e-13)


def test_infonce_perfect_alignment_limit():
    x = np.eye(4)
    sim = losses.cosine_similarity_matrix(x, x, 0.01)
    assert losses.infonce_symmetric(sim) < 1e-30


def test_infonce_identical_rows_is_log_n():
    x = np.ones((5, 3))
    assert losses.infonce_symmetric(losses.cosine_similarity_matrix(x, x)) == pytest.approx(np.log(5))


def test_molo_total_is_weighted_sum():
    v, u = _pair(3, n=10)
    pca = hide.fit(u, 0.8)
    out = losses.molo_forward(v, u, pca, lam=0.7)
    assert out.loss_total == pytest.approx(out.loss_global + 0.7 * out.loss_comp, rel=1e-14)
    expected_comp = infonce(cosine_matrix(v, hide.reconstruct(pca, u)), losses.DEFAULT_TEMPERATURE)
    assert out.loss_comp == pytest.approx(expected_comp, rel=1e-12)


def test_lambda_zero_reduces_to_global():
    v, u = _pair(4, n=8)
    pca = hide.fit(u)
    a = losses.molo_backward(v, u, pca, lam=0.0)
    b = losses.variant_loss("global_only", v, u)
    assert a.loss_total == b.loss_total
    np.testing.assert_allclose(a.grad_v, b.grad_v, atol=1e-15)
    np.testing.assert_allclose(a.grad_u, b.grad_u, atol=1e-15)


def test_tau_one_component_equals_global():
    v, u = _pair(5, n=12, d=4)
    out = losses.variant_loss("global_plus_comp", v, u, tau=1.0)
    assert out.loss_comp == pytest.approx(out.loss_global, rel=1e-10)


def _fixed_loss(variant, v, u, lam, t, pca, pca_v):
    return losses.variant_loss(variant, v, u, lam=lam, temperature=t, with_grad=False,
                               pca=pca, pca_v=pca_v).loss_total


@pytest.mark.parametrize("variant", losses.LOSS_VARIANTS)
@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(variant, seed):
    rng = np.random.default_rng(100 + seed)
    n, d = rng.integers(3, 8), rng.integers(2, 6)
    v, u = rng.standard_normal((n, d)), rng.standard_normal((n, d))
    lam, t = rng.uniform(0.2, 2.0), rng.uniform(0.2, 1.0)
    tau = rng.choice([0.6, 0.8, 0.9])
    pca, pca_v = hide.fit(u, tau), hide.fit(v, tau)  # held fixed: stop-gradient
    out = losses.variant_loss(variant, v, u, tau, lam, t, pca=pca, pca_v=pca_v)
    gv = central_difference(lambda x: _fixed_loss(variant, x, u, lam, t, pca, pca_v), v)
    gu = central_difference(lambda x: _fixed_loss(variant, v, x, lam, t, pca, pca_v), u)
    assert rel_err(out.grad_v, gv) < 1e-4
    assert rel_err(out.grad_u, gu) < 1e-4


def test_gradient_is_invariant_to_row_scaling_direction():
    # scaling a row leaves the loss unchanged, so its gradient is orthogonal to the row
    v, u = _pair(6)
    out = losses.variant_loss("global_plus_comp", v, u)
    np.testing.assert_allclose(np.einsum("ij,ij->i", out.grad_v, v), 0.0, atol=1e-12)


def test_variant_reporting():
    v, u = _pair(7, n=10)
    g = losses.variant_loss("global_only", v, u)
    assert g.loss_comp == 0.0 and g.rank_m == 0
    c = losses.variant_loss("comp_only", v, u)
    assert c.loss_total == c.loss_comp and c.loss_global == pytest.approx(g.loss_global)
    with pytest.raises(ValidationError, match="unknown loss variant"):
        losses.variant_loss("bogus", v, u)


def test_validation_errors():
    v, u = _pair(8)
    with pytest.raises(ValidationError, match="shapes differ"):
        losses.variant_loss("global_only", v, u[:, :3])
    with pytest.raises(ValidationError, match="lambda"):
        losses.variant_loss("global_plus_comp", v, u, lam=-1)
    with pytest.raises(ValidationError, match="temperature"):
        losses.variant_loss("global_only", v, u, temperature=0)
    with pytest.raises(ValidationError, match="zero-norm row 2"):
        u[2] = 0
        losses.variant_loss("global_only", v, u)
    with pytest.raises(ValidationError, match="PCA dimension"):
        losses.molo_forward(v, v, hide.fit(np.ones((3, 2)) + np.eye(3, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 10), st.floats(0.01, 5.0))
def test_infonce_bounds(seed, n, t):
    v, u = _pair(seed, n=n, d=4)
    loss = losses.infonce_symmetric(losses.cosine_similarity_matrix(v, u, t))
    # each direction's cross-entropy is at most log(n) + 2/t and never negative
    assert 0.0 <= loss <= np.log(n) + 2.0 / t + 1e-12
