"""Hot inner loops, each in two flavours: a numba ``@njit`` kernel and a
pure-numpy equivalent.

The public names (``pearson_rows``, ``truth_ranks``, ...) are bound at import
time to the numba versions unless ``HIMO_DISABLE_NUMBA=1`` is set or numba
cannot be imported; ``symmetric_xent`` always uses numpy, which is faster. Both flavours stay importable under the ``_nb`` and
``_np`` suffixes so tests and ``benchmarks/bench_kernels.py`` can compare them.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)
EPS = float(np.finfo(np.float64).eps)
# A row whose spread is within a few ulps of its magnitude is treated as
# constant: rounding in the mean must not turn a flat row into r = +-1.
DEGENERATE_ULPS = 8.0


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _flag("HIMO_DISABLE_NUMBA")
BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


# --------------------------------------------------------------------------
# symmetric cross-entropy over a square logit matrix (diagonal = positives)
# --------------------------------------------------------------------------

def symmetric_xent_np(logits):
    n = logits.shape[0]
    row_max = logits.max(axis=1, keepdims=True)
    row_lse = row_max[:, 0] + np.log(np.exp(logits - row_max).sum(axis=1))
    col_max = logits.max(axis=0, keepdims=True)
    col_lse = col_max[0] + np.log(np.exp(logits - col_max).sum(axis=0))
    diag = np.diagonal(logits)
    scale = 1.0 / (2.0 * n)
    loss = scale * (float(np.sum(row_lse - diag)) + float(np.sum(col_lse - diag)))
    grad = np.exp(logits - row_lse[:, None]) + np.exp(logits - col_lse[None, :])
    grad[np.diag_indices(n)] -= 2.0
    return loss, grad * scale


@_njit
def symmetric_xent_nb(logits):
    n = logits.shape[0]
    grad = np.zeros((n, n))
    row_total = 0.0
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, n):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(n):
            s += np.exp(logits[i, j] - m)
        lse = m + np.log(s)
        row_total += lse - logits[i, i]
        for j in range(n):
            grad[i, j] += np.exp(logits[i, j] - lse)
        grad[i, i] -= 1.0
    col_total = 0.0
    for j in range(n):
        m = logits[0, j]
        for i in range(1, n):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for i in range(n):
            s += np.exp(logits[i, j] - m)
        lse = m + np.log(s)
        col_total += lse - logits[j, j]
        for i in range(n):
            grad[i, j] += np.exp(logits[i, j] - lse)
        grad[j, j] -= 1.0
    scale = 1.0 / (2.0 * n)
    for i in range(n):
        for j in range(n):
            grad[i, j] *= scale
    return scale * (row_total + col_total), grad


# --------------------------------------------------------------------------
# per-row Pearson correlation against the index 1..K (NaN when degenerate)
# --------------------------------------------------------------------------

def pearson_rows_np(scores):
    k = scores.shape[1]
    idx = np.arange(1, k + 1, dtype=np.float64)
    kc = idx - idx.mean()
    sc = scores - scores.mean(axis=1, keepdims=True)
    ss = np.einsum("ij,ij->i", sc, sc)
    num = sc @ kc
    out = np.full(scores.shape[0], np.nan)
    floor = k * (DEGENERATE_ULPS * np.finfo(np.float64).eps * np.abs(scores).max(axis=1)) ** 2
    ok = ss > floor
    out[ok] = num[ok] / (np.sqrt(kc @ kc) * np.sqrt(ss[ok]))
    return np.clip(out, -1.0, 1.0)


@_njit
def pearson_rows_nb(scores):
    m, k = scores.shape
    kbar = (k + 1) / 2.0
    kk = 0.0
    for t in range(k):
        kk += (t + 1 - kbar) ** 2
    out = np.empty(m)
    for i in range(m):
        sbar = 0.0
        for t in range(k):
            sbar += scores[i, t]
        sbar /= k
        num = 0.0
        ss = 0.0
        big = 0.0
        for t in range(k):
            d = scores[i, t] - sbar
            num += (t + 1 - kbar) * d
            ss += d * d
            big = max(big, abs(scores[i, t]))
        if ss > k * (DEGENERATE_ULPS * EPS * big) ** 2:
            r = num / (np.sqrt(kk) * np.sqrt(ss))
            out[i] = min(1.0, max(-1.0, r))
        else:
            out[i] = np.nan
    return out


# --------------------------------------------------------------------------
# strict monotone increase per row
# --------------------------------------------------------------------------

def strictly_increasing_rows_np(scores):
    return np.all(np.diff(scores, axis=1) > 0.0, axis=1)


@_njit
def strictly_increasing_rows_nb(scores):
    m, k = scores.shape
    out = np.ones(m, dtype=np.bool_)
    for i in range(m):
        for t in range(1, k):
            if not scores[i, t] > scores[i, t - 1]:
                out[i] = False
                break
    return out


# --------------------------------------------------------------------------
# 0-based rank of the ground-truth column; ties resolved lower index first
# --------------------------------------------------------------------------

def truth_ranks_np(sim, truth):
    rows = np.arange(sim.shape[0])
    target = sim[rows, truth][:, None]
    cols = np.arange(sim.shape[1])[None, :]
    ahead = (sim > target) | ((sim == target) & (cols < truth[:, None]))
    return ahead.sum(axis=1).astype(np.int64)


@_njit
def truth_ranks_nb(sim, truth):
    nq, ng = sim.shape
    out = np.zeros(nq, dtype=np.int64)
    for i in range(nq):
        g = truth[i]
        t = sim[i, g]
        c = 0
        for j in range(ng):
            s = sim[i, j]
            if s > t or (s == t and j < g):
                c += 1
        out[i] = c
    return out


# --------------------------------------------------------------------------
# 64-bit FNV-1a over concatenated token bytes
# --------------------------------------------------------------------------

def fnv1a_tokens_np(buf, offsets, seed):
    # Vectorised across tokens, looping over byte position.
    n = offsets.shape[0] - 1
    starts = offsets[:-1]
    lengths = offsets[1:] - starts
    h = np.full(n, FNV_OFFSET ^ np.uint64(seed), dtype=np.uint64)
    if n == 0:
        return h
    for pos in range(int(lengths.max())):
        live = lengths > pos
        byte = buf[starts[live] + pos].astype(np.uint64)
        h[live] = (h[live] ^ byte) * FNV_PRIME
    return h


@_njit
def fnv1a_tokens_nb(buf, offsets, seed):
    n = offsets.shape[0] - 1
    out = np.empty(n, dtype=np.uint64)
    prime = np.uint64(0x100000001B3)
    init = np.uint64(0xCBF29CE484222325) ^ np.uint64(seed)
    for t in range(n):
        h = init
        for p in range(offsets[t], offsets[t + 1]):
            h = (h ^ np.uint64(buf[p])) * prime
        out[t] = h
    return out


# numpy's vectorised exp beats the scalar loop (see benchmarks/bench_kernels.py),
# so the loss kernel is numpy under both backends.
symmetric_xent = symmetric_xent_np

if USE_NUMBA:
    pearson_rows = pearson_rows_nb
    strictly_increasing_rows = strictly_increasing_rows_nb
    truth_ranks = truth_ranks_nb
    fnv1a_tokens = fnv1a_tokens_nb
else:
    pearson_rows = pearson_rows_np
    strictly_increasing_rows = strictly_increasing_rows_np
    truth_ranks = truth_ranks_np
    fnv1a_tokens = fnv1a_tokens_np

KERNELS = {
    "symmetric_xent": (symmetric_xent_np, symmetric_xent_nb),
    "pearson_rows": (pearson_rows_np, pearson_rows_nb),
    "strictly_increasing_rows": (strictly_increasing_rows_np, strictly_increasing_rows_nb),
    "truth_ranks": (truth_ranks_np, truth_ranks_nb),
    "fnv1a_tokens": (fnv1a_tokens_np, fnv1a_tokens_nb),
}
