"""Independent reference implementations used as test oracles.

Everything here is written from first principles with plain loops or a
different decomposition than the package uses, so agreement is evidence.
"""

import math

import numpy as np


def jacobi_singular_values(a, sweeps=60, tol=1e-15):
    """Singular values by one-sided Jacobi rotations on the columns."""
    u = np.array(a, dtype=np.float64, copy=True)
    if u.shape[1] > u.shape[0]:
        u = u.T.copy()
    n = u.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = u[:, p] @ u[:, p]
                beta = u[:, q] @ u[:, q]
                gamma = u[:, p] @ u[:, q]
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                off = max(off, abs(gamma) / math.sqrt(alpha * beta))
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                up = u[:, p].copy()
                u[:, p] = c * up - s * u[:, q]
                u[:, q] = s * up + c * u[:, q]
        if off < tol:
            break
    return np.sort(np.linalg.norm(u, axis=0))[::-1]


def pca_oracle(x, tau):
    """Mean, orthonormal basis columns and rank from the covariance eigensystem."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    mean = x.sum(axis=0) / n
    xc = x - mean
    cov = xc.T @ xc
    lam, vec = np.linalg.eigh(cov)
    order = np.argsort(lam)[::-1]
    lam, vec = np.clip(lam[order], 0.0, None), vec[:, order]
    total = lam.sum()
    if total < 1e-12:
        return mean, vec[:, :0], 0
    cum = np.cumsum(lam) / total
    m = next(i + 1 for i, c in enumerate(cum) if c >= tau - 1e-12)
    numerical = int(np.sum(lam > lam[0] * 1e-20))
    m = min(m, numerical, n - 1)
    return mean, vec[:, :m], m


def pca_oracle_reconstruct(x, tau, u):
    mean, q, _ = pca_oracle(x, tau)
    return (np.asarray(u) - mean) @ q @ q.T + mean


def cosine_matrix(a, b):
    out = np.empty((len(a), len(b)))
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i, j] = sum(p * q for p, q in zip(x, y)) / (
                math.sqrt(sum(p * p for p in x)) * math.sqrt(sum(q * q for q in y)))
    return out


def infonce(sim, temperature):
    """Symmetric InfoNCE, one log-sum-exp per row and per column."""
    n = len(sim)
    total = 0.0
    for i in range(n):
        row = [sim[i][j] / temperature for j in range(n)]
        col = [sim[j][i] / temperature for j in range(n)]
        for vals in (row, col):
            m = max(vals)
            total += m + math.log(sum(math.exp(v - m) for v in vals)) - vals[i]
    return total / (2 * n)


def pearson_index(scores):
    """Two-pass Pearson correlation of scores against 1..K; None if undefined."""
    k = len(scores)
    xs = list(range(1, k + 1))
    mx = sum(xs) / k
    my = sum(scores) / k
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, scores))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in scores)
    if syy <= 0.0:
        return None
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def strictly_increasing(scores):
    return all(b > a for a, b in zip(scores, scores[1:]))


def recall_by_sort(sim, gt, k):
    """Stable descending sort per query: equal scores keep index order."""
    hits = 0
    for i, row in enumerate(np.asarray(sim)):
        order = sorted(range(len(row)), key=lambda j: -row[j])
        hits += order.index(int(gt[i])) < k
    return 100.0 * hits / len(sim)


def ssi(ori, noised, eps=1e-9):
    per = []
    for a, b in zip(ori, noised):
        terms = [abs((x - y) / x) for x, y in zip(a, b) if abs(x) >= eps]
        if terms:
            per.append(100.0 * sum(terms) / len(terms))
    return sum(per) / len(per) if per else 0.0


def central_difference(f, x, h=1e-5):
    """Numerical gradient of scalar f at array x (perturbs a copy in place)."""
    x = np.array(x, dtype=np.float64, copy=True)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))
