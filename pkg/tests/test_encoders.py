import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from himo import encoders
from himo.encoders import EncoderParams
from himo.errors import ValidationError

from _oracles import central_difference, rel_err


def _fnv1a(data: bytes, seed: int = 0) -> int:
    h = 0xCBF29CE484222325 ^ seed
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


@pytest.mark.parametrize("word,expected", [
    ("a", 0xAF63DC4C8601EC8C),
    ("foobar", 0x85944171F73967E8),
])
def test_fnv1a_reference_vectors(word, expected):
    assert int(encoders.token_hashes([word])[0]) == expected


@settings(max_examples=50, deadline=None)
@given(st.lists(st.text(min_size=1, max_size=8), min_size=1, max_size=6), st.integers(0, 2**64 - 1))
def test_fnv1a_matches_pure_python(tokens, seed):
    got = encoders.token_hashes(tokens, seed)
    assert [int(x) for x in got] == [_fnv1a(t.encode(), seed) for t in tokens]


def test_featurize_text_counts_signed_buckets():
    d = 16
    fv = encoders.featurize_text("The cat, the CAT!", d)
    assert fv.n_tokens == 4 and not fv.is_empty
    expected = np.zeros(d)
    for tok in ("the", "cat", "the", "cat"):
        h = _fnv1a(tok.encode())
        expected[h % d] += -1.0 if h >> 63 else 1.0
    np.testing.assert_array_equal(fv.values, expected)


def test_empty_text_is_flagged():
    fv = encoders.featurize_text("...", 8)
    assert fv.is_empty and not fv.values.any()
    with pytest.raises(ValidationError):
        encoders.featurize_text("x", 0)


def test_featurize_is_deterministic_and_seeded():
    a = encoders.featurize_text("red car on a road", 32, seed=1).values
    b = encoders.featurize_text("red car on a road", 32, seed=1).values
    c = encoders.featurize_text("red car on a road", 32, seed=2).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def _params(seed, d_in=5, d_out=4, hidden=None):
    rng = np.random.default_rng(seed)
    p = encoders.init_params(d_in, d_out, rng, hidden)
    return p.with_arrays({k: a + 0.1 * rng.standard_normal(a.shape) for k, a in p.named().items()})


@pytest.mark.parametrize("hidden", [None, 3])
def test_outputs_are_unit_norm(hidden):
    p = _params(0, hidden=hidden)
    y = encoders.encode_batch(p, np.random.default_rng(1).standard_normal((7, 5)))
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(encoders.encode(p, np.ones(5)),
                               encoders.encode_batch(p, np.ones((1, 5)))[0])


@pytest.mark.parametrize("hidden", [None, 3])
@pytest.mark.parametrize("seed", range(4))
def test_backward_matches_finite_differences(hidden, seed):
    p = _params(seed, hidden=hidden)
    rng = np.random.default_rng(50 + seed)
    x = rng.standard_normal((6, 5))
    g = rng.standard_normal((6, 4))
    grads = encoders.encoder_backward(p, x, g).named()
    for name, arr in p.named().items():
        f = lambda a, name=name: float(np.sum(g * encoders.encode_batch(p.with_arrays({name: a}), x)))
        assert rel_err(grads[name], central_difference(f, arr)) < 1e-4, name


def test_shape_errors():
    p = _params(0)
    with pytest.raises(ValidationError, match="dimension 3"):
        encoders.encode_batch(p, np.ones((2, 3)))
    with pytest.raises(ValidationError, match="upstream"):
        encoders.encoder_backward(p, np.ones((2, 5)), np.ones((2, 3)))
    zero = EncoderParams(np.zeros((5, 4)), np.zeros(4))
    with pytest.raises(ValidationError, match="zero norm"):
        encoders.encode_batch(zero, np.ones((1, 5)))


def test_checkpoint_round_trip(tmp_path):
    img, txt = _params(1, hidden=3), _params(2)
    encoders.save_checkpoint(tmp_path, img, txt, {"note": "x"})
    a, b, extra = encoders.load_checkpoint(tmp_path)
    assert extra == {"note": "x"}
    for got, want in ((a, img), (b, txt)):
        assert got.named().keys() == want.named().keys()
        for k in want.named():
            np.testing.assert_array_equal(got.named()[k], want.named()[k])
