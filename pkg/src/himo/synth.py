"""Synthetic worlds with a known semantic hierarchy.

Text embeddings are sums of K layer components whose variances strictly
decrease with depth. In ``blocks`` mode each layer owns a disjoint coordinate
block, so layers are exactly orthogonal; ``random`` mode draws an independent
Gaussian direction set per layer, which is only approximately orthogonal.

Residual chains build progressively enriched text vectors around an image
vector; ``verify_monotone`` checks the cosine sequence along a chain.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .hide import PcaModel
from .numeric import normalize_rows

MODES = ("blocks", "random")


@dataclass(frozen=True)
class HierarchySpec:
    layer_variances: tuple[float, ...] = (8.0, 4.0, 2.0, 1.0)
    layer_dims: tuple[int, ...] = (8, 8, 8, 8)
    dim: int = 128
    batch_size: int = 256
    seed: int = 0
    mode: str = "blocks"
    # Image model: v = sum_k image_weights[k] * s^(k) + image_noise * eps.
    image_weights: tuple[float, ...] | None = None
    image_noise: float = 0.5

    @property
    def num_layers(self) -> int:
        return len(self.layer_variances)

    def resolved_image_weights(self) -> tuple[float, ...]:
        if self.image_weights is not None:
            return tuple(self.image_weights)
        return tuple(0.5**k for k in range(self.num_layers))

    def validate(self) -> None:
        k = self.num_layers
        if k < 2:
            raise ValidationError("a hierarchy needs at least two layers")
        if len(self.layer_dims) != k:
            raise ValidationError(f"layer_dims has {len(self.layer_dims)} entries, expected {k}")
        if any(v <= 0 for v in self.layer_variances):
            raise ValidationError("layer variances must be positive")
        if any(a <= b for a, b in zip(self.layer_variances, self.layer_variances[1:])):
            raise ValidationError(f"layer variances must strictly decrease: {self.layer_variances}")
        if any(d < 1 for d in self.layer_dims):
            raise ValidationError("every layer needs at least one dimension")
        if sum(self.layer_dims) > self.dim:
            raise ValidationError(f"layer dims sum to {sum(self.layer_dims)} > dim {self.dim}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if len(self.resolved_image_weights()) != k:
            raise ValidationError("image_weights must have one entry per layer")
        if self.image_noise < 0:
            raise ValidationError("image_noise must be non-negative")

    def to_dict(self) -> dict:
        return {
            "layer_variances": list(self.layer_variances),
            "layer_dims": list(self.layer_dims),
            "dim": self.dim,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "mode": self.mode,
            "image_weights": list(self.resolved_image_weights()),
            "image_noise": self.image_noise,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HierarchySpec":
        kw = dict(data)
        for key in ("layer_variances", "layer_dims", "image_weights"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class SyntheticBatch:
    text_embeddings: np.ndarray  # (N, d)
    layer_components: np.ndarray  # (K, N, d)
    image_embeddings: np.ndarray  # (N, d), unit rows
    layer_bases: list[np.ndarray] = field(default_factory=list)  # orthonormal rows per layer

    @property
    def num_layers(self) -> int:
        return self.layer_components.shape[0]

    def subtexts(self) -> np.ndarray:
        """Cumulative layer sums, shape (K, N, d); the last equals the full text."""
        return np.cumsum(self.layer_components, axis=0)


def generate_hierarchical_batch(spec: HierarchySpec) -> SyntheticBatch:
    """Draw one batch from ``spec``; deterministic for a fixed seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, d = spec.batch_size, spec.dim
    k = spec.num_layers
    comps = np.zeros((k, n, d))
    bases = []
    if spec.mode == "blocks":
        start = 0
        for layer, (var, width) in enumerate(zip(spec.layer_variances, spec.layer_dims)):
            comps[layer, :, start:start + width] = rng.normal(0.0, np.sqrt(var), (n, width))
            bases.append(np.eye(d)[start:start + width])
            start += width
    else:
        for layer, (var, width) in enumerate(zip(spec.layer_variances, spec.layer_dims)):
            directions = normalize_rows(rng.standard_normal((width, d)), "directions")[0]
            comps[layer] = rng.normal(0.0, np.sqrt(var), (n, width)) @ directions
            bases.append(np.linalg.qr(directions.T)[0].T)
    text = np.zeros((n, d))
    for layer in range(k):
        text += comps[layer]
    weights = np.asarray(spec.resolved_image_weights())
    image = np.tensordot(weights, comps, axes=1) + spec.image_noise * rng.standard_normal((n, d))
    image, _ = normalize_rows(image, "image_embeddings")
    return SyntheticBatch(text, comps, image, bases)


def layer_trace_variances(batch: SyntheticBatch) -> np.ndarray:
    """Trace of the sample covariance of each layer's components."""
    out = []
    for comp in batch.layer_components:
        centred = comp - comp.mean(axis=0)
        out.append(float(np.sum(centred**2) / max(comp.shape[0] - 1, 1)))
    return np.asarray(out)


# --- residual chains -------------------------------------------------------

@dataclass
class ResidualChain:
    v: np.ndarray
    u_prime: np.ndarray
    residuals: np.ndarray  # (K-1, d)

    @property
    def num_levels(self) -> int:
        return self.residuals.shape[0] + 1

    def levels(self) -> np.ndarray:
        """u^(1..K) as rows: u' followed by its cumulative enrichments."""
        return np.vstack([self.u_prime, self.u_prime + np.cumsum(self.residuals, axis=0)])

    def satisfies_hypotheses(self) -> bool:
        norms = np.linalg.norm(self.residuals, axis=1)
        return bool(np.all(self.residuals @ self.v > 0) and np.all(np.diff(norms) >= 0))


def _unit(x):
    return x / np.linalg.norm(x)


def _direction_with_cosine(v, c, rng):
    """Unit vector whose cosine with unit ``v`` is exactly ``c``."""
    w = rng.standard_normal(v.shape[0])
    w -= (w @ v) * v
    w = _unit(w)
    return c * v + np.sqrt(max(0.0, 1.0 - c * c)) * w


def generate_residual_chain(d: int, k: int, seed=None, *, consistent: bool = True,
                            rng: np.random.Generator | None = None) -> ResidualChain:
    """Random chain with every residual positively aligned with ``v``.

    Residual norms are drawn then sorted ascending. With ``consistent=True``
    (the default) each residual's direction is drawn strictly inside the cone
    around ``v`` that contains the current partial sum, i.e. its cosine with
    ``v`` exceeds the partial sum's, which makes the cosine sequence provably
    increasing (the cone is convex). With ``consistent=False`` residuals are merely
    reflected into the half-space ``<v, r> > 0``, which does not guarantee
    monotonicity.
    """
    if k < 2 or d < 2:
        raise ValidationError(f"need k >= 2 and d >= 2, got k={k}, d={d}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    v = _unit(rng.standard_normal(d))
    u_prime = rng.standard_normal(d)
    if u_prime @ v <= 0:
        u_prime -= 2.0 * (u_prime @ v) * v
    if u_prime @ v <= 0:  # measure-zero: u' orthogonal to v
        u_prime += 1e-3 * v
    norms = np.sort(rng.uniform(0.1, 1.0, k - 1) * np.linalg.norm(u_prime))
    residuals = np.zeros((k - 1, d))
    current = u_prime.copy()
    for j in range(k - 1):
        if consistent:
            c_now = float(current @ v / np.linalg.norm(current))
            c = c_now + (1.0 - c_now) * rng.uniform(0.05, 1.0)
            r = norms[j] * _direction_with_cosine(v, c, rng)
        else:
            r = rng.standard_normal(d)
            if r @ v <= 0:
                r -= 2.0 * (r @ v) * v
            r = norms[j] * _unit(r)
        residuals[j] = r
        current = current + r
    return ResidualChain(v, u_prime, residuals)


def chain_cosines(chain: ResidualChain) -> np.ndarray:
    levels = chain.levels()
    return levels @ chain.v / (np.linalg.norm(levels, axis=1) * np.linalg.norm(chain.v))


def verify_monotone(chain: ResidualChain) -> tuple[bool, np.ndarray]:
    """Return (strictly increasing?, cos(v, u^(k)) for k = 1..K)."""
    cos = chain_cosines(chain)
    return bool(np.all(np.diff(cos) > 0)), cos


# --- subspace recovery -----------------------------------------------------

def subspace_alignment(pca: PcaModel, batch: SyntheticBatch, top_layers: int) -> float:
    """Mean squared cosine between each PCA direction and the span of the
    top ``top_layers`` layers. 1 means the retained subspace lies entirely in
    the high-level span; a rank-0 model counts as vacuously contained."""
    if not 1 <= top_layers <= batch.num_layers:
        raise ValidationError(f"top_layers must lie in [1, {batch.num_layers}], got {top_layers}")
    if pca.rank_m == 0:
        return 1.0
    span = np.vstack(batch.layer_bases[:top_layers])
    q = np.linalg.qr(span.T)[0]  # (d, r) orthonormal columns
    proj = pca.basis @ q
    sq = np.sum(proj**2, axis=1) / np.sum(pca.basis**2, axis=1)
    return float(np.clip(np.mean(sq), 0.0, 1.0))
