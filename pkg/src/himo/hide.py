"""In-batch PCA decomposition of text embeddings.

A batch of embeddings is centred on its mean, decomposed by SVD, and the
leading principal directions are kept until their cumulative share of the
squared singular values reaches ``tau``. Each embedding is then projected onto
those directions and shifted back by the batch mean; the result is its
semantic-component vector.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .numeric import as_matrix, as_vector, thin_svd

DEFAULT_TAU = 0.9
# Total squared singular mass below this counts as a zero-variance batch.
DEGENERATE_VARIANCE = 1e-12
# Slack on the cumulative-ratio comparison so that exact ties survive rounding.
RATIO_SLACK = 1e-12


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (rank_m, d); rows are principal directions
    singular_values: np.ndarray
    rank_m: int
    tau: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def projector(self) -> np.ndarray:
        """The (d, d) orthogonal projector onto the retained directions."""
        return self.basis.T @ self.basis

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "singular_values": self.singular_values.tolist(),
            "rank_m": self.rank_m,
            "tau": self.tau,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcaModel":
        mean = np.asarray(data["mean"], dtype=np.float64)
        basis = np.asarray(data["basis"], dtype=np.float64).reshape(-1, mean.shape[0])
        return cls(
            mean=mean,
            basis=basis,
            singular_values=np.asarray(data["singular_values"], dtype=np.float64),
            rank_m=int(data["rank_m"]),
            tau=float(data["tau"]),
        )


@dataclass(frozen=True)
class VarianceProfile:
    per_component_variance: np.ndarray
    cumulative_ratio: np.ndarray


def cumulative_ratio(singular_values) -> np.ndarray:
    var = np.asarray(singular_values, dtype=np.float64) ** 2
    total = var.sum()
    if total < DEGENERATE_VARIANCE:
        return np.zeros(0)
    ratio = np.cumsum(var) / total
    return np.minimum(ratio, 1.0)


def select_rank(singular_values, tau: float, n_rows: int) -> int:
    """Smallest m whose cumulative explained variance is at least ``tau``.

    Capped by the numerical rank and by ``n_rows - 1`` (rank bound of a
    centred matrix).
    """
    s = np.asarray(singular_values, dtype=np.float64)
    ratio = cumulative_ratio(s)
    if ratio.size == 0:
        return 0
    m = int(np.argmax(ratio >= tau - RATIO_SLACK)) + 1
    tol = s[0] * max(n_rows, s.size) * np.finfo(np.float64).eps
    numerical_rank = int(np.count_nonzero(s > tol))
    return max(0, min(m, numerical_rank, n_rows - 1))


def fit(text_embeddings, tau: float = DEFAULT_TAU) -> PcaModel:
    """Fit the in-batch PCA model on an (N, d) batch.

    Args:
        text_embeddings: batch of embeddings, one per row.
        tau: explained-variance threshold in (0, 1].

    Returns:
        PcaModel with ``rank_m = 0`` and an empty basis for a zero-variance
        batch.
    """
    if not (0.0 < tau <= 1.0):
        raise ValidationError(f"tau must lie in (0, 1], got {tau}")
    u = as_matrix(text_embeddings, "text_embeddings")
    mean = u.mean(axis=0)
    svd = thin_svd(u - mean)
    m = select_rank(svd.singular_values, tau, u.shape[0])
    return PcaModel(
        mean=mean,
        basis=svd.vt[:m].copy(),
        singular_values=svd.singular_values,
        rank_m=m,
        tau=float(tau),
    )


def reconstruct(model: PcaModel, u) -> np.ndarray:
    """Project onto the retained directions and shift back by the mean.

    Accepts a single vector (d,) or a batch (n, d).
    """
    x = np.asarray(u, dtype=np.float64)
    if x.shape[-1] != model.dim or x.ndim not in (1, 2):
        raise ValidationError(f"expected trailing dimension {model.dim}, got shape {x.shape}")
    if x.ndim == 1:
        x = as_vector(x, "u")
    else:
        x = as_matrix(x, "u")
    if model.rank_m == 0:
        return np.broadcast_to(model.mean, x.shape).copy()
    coords = (x - model.mean) @ model.basis.T
    return coords @ model.basis + model.mean


def variance_profile(model: PcaModel) -> VarianceProfile:
    """Squared singular values and their cumulative share; empty when rank 0."""
    if model.rank_m == 0:
        return VarianceProfile(np.zeros(0), np.zeros(0))
    var = model.singular_values**2
    return VarianceProfile(var, cumulative_ratio(model.singular_values))
