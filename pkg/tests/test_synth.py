import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from himo import hide, synth
from himo.errors import ValidationError
from himo.synth import HierarchySpec


def test_batch_shapes_and_determinism():
    spec = HierarchySpec(batch_size=32)
    a, b = synth.generate_hierarchical_batch(spec), synth.generate_hierarchical_batch(spec)
    assert a.text_embeddings.shape == (32, 128)
    assert a.layer_components.shape == (4, 32, 128)
    np.testing.assert_array_equal(a.text_embeddings, b.text_embeddings)
    np.testing.assert_array_equal(a.image_embeddings, b.image_embeddings)
    np.testing.assert_allclose(a.subtexts()[-1], a.text_embeddings, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(a.image_embeddings, axis=1), 1.0)


@pytest.mark.parametrize("mode", synth.MODES)
def test_layer_variances_decrease(mode):
    spec = HierarchySpec(batch_size=4000, mode=mode, seed=3)
    tv = synth.layer_trace_variances(synth.generate_hierarchical_batch(spec))
    assert np.all(np.diff(tv) < 0)
    expected = np.array(spec.layer_variances) * np.array(spec.layer_dims)
    np.testing.assert_allclose(tv, expected, rtol=0.1)


def test_block_layers_are_orthogonal():
    batch = synth.generate_hierarchical_batch(HierarchySpec(batch_size=16))
    comps = batch.layer_components
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            assert np.all(np.einsum("nd,nd->n", comps[i], comps[j]) == 0.0)


@pytest.mark.parametrize("bad,match", [
    (dict(layer_variances=(1.0, 2.0), layer_dims=(4, 4)), "strictly decrease"),
    (dict(layer_variances=(2.0,), layer_dims=(4,)), "at least two"),
    (dict(layer_dims=(8, 8, 8)), "layer_dims"),
    (dict(layer_dims=(64, 64, 64, 64)), "dim"),
    (dict(mode="spiral"), "mode"),
    (dict(image_weights=(1.0,)), "image_weights"),
])
def test_spec_validation(bad, match):
    with pytest.raises(ValidationError, match=match):
        HierarchySpec(**bad).validate()


def test_spec_dict_round_trip():
    spec = HierarchySpec(layer_variances=(5.0, 1.0), layer_dims=(3, 2), dim=10, mode="random")
    assert HierarchySpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 64), st.integers(2, 10))
def test_consistent_chains_are_monotone(seed, d, k):
    chain = synth.generate_residual_chain(d, k, seed)
    assert chain.satisfies_hypotheses()
    ok, cos = synth.verify_monotone(chain)
    assert ok, cos
    assert cos.shape == (k,) and np.all(np.abs(cos) <= 1 + 1e-12)


def test_loose_chains_can_fail():
    # positive alignment alone does not force monotone cosines
    results = [synth.verify_monotone(synth.generate_residual_chain(32, 6, s, consistent=False))[0]
               for s in range(200)]
    assert 0 < sum(results) < 200


def test_verify_monotone_flags_a_drop():
    v = np.array([1.0, 0.0])
    chain = synth.ResidualChain(v, np.array([1.0, 0.1]), np.array([[0.01, 5.0]]))
    ok, cos = synth.verify_monotone(chain)
    assert not ok and cos[1] < cos[0]


def test_chain_argument_checks():
    with pytest.raises(ValidationError):
        synth.generate_residual_chain(1, 4, 0)
    with pytest.raises(ValidationError):
        synth.generate_residual_chain(8, 1, 0)


def test_subspace_alignment_extremes():
    batch = synth.generate_hierarchical_batch(
        HierarchySpec(layer_variances=(100.0, 1.0), layer_dims=(2, 2), dim=8, batch_size=500))
    pca = hide.fit(batch.text_embeddings, 0.9)
    assert synth.subspace_alignment(pca, batch, 1) > 0.999
    assert synth.subspace_alignment(pca, batch, 2) == pytest.approx(1.0)
    flat = hide.fit(np.ones((4, 8)))
    assert synth.subspace_alignment(flat, batch, 1) == 1.0
    with pytest.raises(ValidationError):
        synth.subspace_alignment(pca, batch, 3)
