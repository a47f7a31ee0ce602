"""The numba kernels and their numpy twins must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from himo import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba unavailable")


def _cases(rng):
    scores = rng.standard_normal((50, 7))
    scores[3] = 0.25  # degenerate row
    sim = rng.integers(0, 5, (30, 30)).astype(np.float64)
    return {
        "symmetric_xent": (rng.standard_normal((12, 12)) / 0.1,),
        "pearson_rows": (scores,),
        "strictly_increasing_rows": (np.round(scores, 1),),
        "truth_ranks": (sim, rng.integers(0, 30, 30).astype(np.int64)),
        "fnv1a_tokens": (np.frombuffer(b"helloworldfoo", dtype=np.uint8),
                         np.array([0, 5, 10, 13], dtype=np.int64), np.uint64(99)),
    }


@pytest.mark.parametrize("name", sorted(_kernels.KERNELS))
def test_backends_agree(name):
    np_fn, nb_fn = _kernels.KERNELS[name]
    for seed in range(5):
        args = _cases(np.random.default_rng(seed))[name]
        a, b = np_fn(*args), nb_fn(*args)
        if isinstance(a, tuple):
            assert a[0] == pytest.approx(b[0], rel=1e-12)
            np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-15)
        else:
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15, equal_nan=True)


def test_env_flag_selects_numpy():
    code = "from himo import _kernels as k; print(k.BACKEND, k.pearson_rows is k.pearson_rows_np)"
    env = dict(os.environ, HIMO_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["numpy", "True"]
