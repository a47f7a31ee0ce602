"""Cosine InfoNCE and the dual global/component contrastive objective.

Gradients are analytic. The PCA model (mean and basis) is treated as a
constant: the component branch reaches ``u`` only through the fixed linear
reconstruction ``u' = (u - mean) P^T P + mean``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels, hide
from .errors import ValidationError
from .hide import PcaModel
from .numeric import as_matrix, normalize_rows

DEFAULT_TEMPERATURE = 0.07
DEFAULT_LAMBDA = 1.0

LOSS_VARIANTS = ("global_only", "comp_only", "global_plus_comp", "global_plus_comp_uv")


@dataclass(frozen=True)
class SimilarityMatrix:
    scores: np.ndarray
    temperature: float = DEFAULT_TEMPERATURE


@dataclass
class MoloOutput:
    loss_global: float
    loss_comp: float
    loss_total: float
    lam: float
    grad_v: np.ndarray | None = None
    grad_u: np.ndarray | None = None
    rank_m: int | None = None


def _pair(v, u):
    v = as_matrix(v, "v")
    u = as_matrix(u, "u")
    if v.shape != u.shape:
        raise ValidationError(f"v and u shapes differ: {v.shape} vs {u.shape}")
    return v, u


def _check_hyper(lam: float, temperature: float) -> None:
    if lam < 0:
        raise ValidationError(f"lambda must be non-negative, got {lam}")
    if temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")


def cosine_similarity_matrix(v, u, temperature: float = DEFAULT_TEMPERATURE) -> SimilarityMatrix:
    """Entry (i, j) is cos(v_i, u_j)."""
    v, u = _pair(v, u)
    vn, _ = normalize_rows(v, "v")
    un, _ = normalize_rows(u, "u")
    return SimilarityMatrix(np.clip(vn @ un.T, -1.0, 1.0), float(temperature))


def infonce_symmetric(sim: SimilarityMatrix) -> float:
    """Bidirectional InfoNCE averaged over both directions and the batch."""
    s = np.asarray(sim.scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValidationError(f"similarity matrix must be square, got shape {s.shape}")
    if sim.temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {sim.temperature}")
    loss, _ = _kernels.symmetric_xent(np.ascontiguousarray(s / sim.temperature))
    return float(loss)


def _branch(a, b, temperature, with_grad):
    """InfoNCE between rows of a and b, with gradients w.r.t. the raw rows."""
    an, a_norm = normalize_rows(a, "v")
    bn, b_norm = normalize_rows(b, "u")
    s = an @ bn.T
    loss, g_logits = _kernels.symmetric_xent(np.ascontiguousarray(s / temperature))
    if not with_grad:
        return float(loss), None, None
    g_s = g_logits / temperature
    g_an = g_s @ bn
    g_bn = g_s.T @ an
    # Jacobian of x / |x|: (I - x̂ x̂^T) / |x|
    g_a = (g_an - an * np.einsum("ij,ij->i", an, g_an)[:, None]) / a_norm[:, None]
    g_b = (g_bn - bn * np.einsum("ij,ij->i", bn, g_bn)[:, None]) / b_norm[:, None]
    return float(loss), g_a, g_b


def _molo(v, u, pca, lam, temperature, with_grad):
    v, u = _pair(v, u)
    _check_hyper(lam, temperature)
    if pca.dim != v.shape[1]:
        raise ValidationError(f"PCA dimension {pca.dim} does not match embeddings {v.shape[1]}")
    lg, gv, gu = _branch(v, u, temperature, with_grad)
    u_comp = hide.reconstruct(pca, u)
    lc, gv_c, gu_c = _branch(v, u_comp, temperature, with_grad)
    out = MoloOutput(lg, lc, lg + lam * lc, float(lam), rank_m=pca.rank_m)
    if with_grad:
        out.grad_v = gv + lam * gv_c
        out.grad_u = gu + lam * (gu_c @ pca.projector())
    return out


def molo_forward(v, u, pca: PcaModel, lam: float = DEFAULT_LAMBDA,
                 temperature: float = DEFAULT_TEMPERATURE) -> MoloOutput:
    """Global + lambda * component loss, values only."""
    return _molo(v, u, pca, lam, temperature, with_grad=False)


def molo_backward(v, u, pca: PcaModel, lam: float = DEFAULT_LAMBDA,
                  temperature: float = DEFAULT_TEMPERATURE) -> MoloOutput:
    """Global + lambda * component loss with gradients w.r.t. ``v`` and ``u``."""
    return _molo(v, u, pca, lam, temperature, with_grad=True)


def comp_loss_variant_uv(v, u, tau: float = hide.DEFAULT_TAU, lam: float = DEFAULT_LAMBDA,
                         temperature: float = DEFAULT_TEMPERATURE, *,
                         pca_v: PcaModel | None = None, pca_u: PcaModel | None = None,
                         with_grad: bool = False) -> MoloOutput:
    """Ablation variant: the component branch decomposes both modalities.

    The image side is reconstructed from a PCA fitted on ``v`` and the text
    side from one fitted on ``u``; pre-fitted models may be passed to hold the
    decomposition fixed (as the gradient check does).
    """
    v, u = _pair(v, u)
    _check_hyper(lam, temperature)
    pca_v = pca_v if pca_v is not None else hide.fit(v, tau)
    pca_u = pca_u if pca_u is not None else hide.fit(u, tau)
    lg, gv, gu = _branch(v, u, temperature, with_grad)
    lc, gv_c, gu_c = _branch(hide.reconstruct(pca_v, v), hide.reconstruct(pca_u, u),
                             temperature, with_grad)
    out = MoloOutput(lg, lc, lg + lam * lc, float(lam), rank_m=pca_u.rank_m)
    if with_grad:
        out.grad_v = gv + lam * (gv_c @ pca_v.projector())
        out.grad_u = gu + lam * (gu_c @ pca_u.projector())
    return out


def variant_loss(variant: str, v, u, tau: float = hide.DEFAULT_TAU,
                 lam: float = DEFAULT_LAMBDA, temperature: float = DEFAULT_TEMPERATURE,
                 with_grad: bool = True, *, pca: PcaModel | None = None,
                 pca_v: PcaModel | None = None) -> MoloOutput:
    """Dispatch over the four loss variants used by the trainer.

    ``global_only`` never fits a PCA and reports ``loss_comp = 0``;
    ``comp_only`` optimises the component branch alone (the global value is
    still reported for logging). ``pca`` (text side) and ``pca_v`` (image
    side, uv variant only) replace the in-batch fits when given.
    """
    if variant not in LOSS_VARIANTS:
        raise ValidationError(f"unknown loss variant {variant!r}; expected one of {LOSS_VARIANTS}")
    if variant == "global_only":
        v, u = _pair(v, u)
        _check_hyper(lam, temperature)
        lg, gv, gu = _branch(v, u, temperature, with_grad)
        return MoloOutput(lg, 0.0, lg, float(lam), gv, gu, rank_m=0)
    if variant == "global_plus_comp_uv":
        return comp_loss_variant_uv(v, u, tau, lam, temperature, pca_v=pca_v, pca_u=pca,
                                    with_grad=with_grad)
    pca = pca if pca is not None else hide.fit(u, tau)
    if variant == "global_plus_comp":
        return _molo(v, u, pca, lam, temperature, with_grad)
    v, u = _pair(v, u)
    _check_hyper(lam, temperature)
    lg, _, _ = _branch(v, u, temperature, False)
    lc, gv, gu = _branch(v, hide.reconstruct(pca, u), temperature, with_grad)
    if gu is not None:
        gu = gu @ pca.projector()
    return MoloOutput(lg, lc, lc, float(lam), gv, gu, rank_m=pca.rank_m)
