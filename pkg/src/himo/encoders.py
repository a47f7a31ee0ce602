"""Toy dual encoders and a hashed bag-of-words text featurizer.

An encoder is an affine map (optionally preceded by one tanh hidden layer)
followed by L2 normalization, so every output lies on the unit sphere.
"""

import json
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ValidationError
from .numeric import as_matrix, load_matrix, save_matrix

NORM_EPS = 1e-12
_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class EncoderParams:
    weight: np.ndarray  # (d_hidden or d_in, d_out)
    bias: np.ndarray  # (d_out,)
    hidden_weight: np.ndarray | None = None  # (d_in, d_hidden)
    hidden_bias: np.ndarray | None = None  # (d_hidden,)

    @property
    def has_hidden(self) -> bool:
        return self.hidden_weight is not None

    @property
    def d_in(self) -> int:
        return (self.hidden_weight if self.has_hidden else self.weight).shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def named(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "EncoderParams":
        return replace(self, **arrays)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    modality: str = "text"
    n_tokens: int = 0

    @property
    def is_empty(self) -> bool:
        return self.modality == "text" and self.n_tokens == 0


def init_params(d_in: int, d_out: int, rng: np.random.Generator,
                d_hidden: int | None = None) -> EncoderParams:
    """Gaussian initialisation scaled by fan-in."""
    if d_hidden:
        return EncoderParams(
            weight=rng.standard_normal((d_hidden, d_out)) / np.sqrt(d_hidden),
            bias=np.zeros(d_out),
            hidden_weight=rng.standard_normal((d_in, d_hidden)) / np.sqrt(d_in),
            hidden_bias=np.zeros(d_hidden),
        )
    return EncoderParams(
        weight=rng.standard_normal((d_in, d_out)) / np.sqrt(d_in),
        bias=np.zeros(d_out),
    )


def _forward(params: EncoderParams, x: np.ndarray):
    if params.has_hidden:
        h = np.tanh(x @ params.hidden_weight + params.hidden_bias)
    else:
        h = x
    z = h @ params.weight + params.bias
    norms = np.linalg.norm(z, axis=1)
    small = np.flatnonzero(norms < NORM_EPS)
    if small.size:
        raise ValidationError(f"encoder output for row {int(small[0])} has zero norm")
    return h, z, norms


def _inputs(params: EncoderParams, x) -> np.ndarray:
    x = as_matrix(np.atleast_2d(np.asarray(x, dtype=np.float64)), "features")
    if x.shape[1] != params.d_in:
        raise ValidationError(f"features have dimension {x.shape[1]}, encoder expects {params.d_in}")
    return x


def encode_batch(params: EncoderParams, x) -> np.ndarray:
    """Encode an (N, d_in) batch into (N, d_out) unit rows."""
    x = _inputs(params, x)
    _, z, norms = _forward(params, x)
    return z / norms[:, None]


def encode(params: EncoderParams, x) -> np.ndarray:
    """Encode a single feature vector (array or FeatureVector)."""
    values = x.values if isinstance(x, FeatureVector) else x
    return encode_batch(params, np.asarray(values, dtype=np.float64)[None, :])[0]


def encoder_backward(params: EncoderParams, x, upstream) -> EncoderParams:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/d(output).

    Returns an ``EncoderParams`` whose arrays hold the gradients.
    """
    x = _inputs(params, x)
    g = as_matrix(upstream, "upstream")
    if g.shape != (x.shape[0], params.d_out):
        raise ValidationError(f"upstream gradient shape {g.shape} != {(x.shape[0], params.d_out)}")
    h, z, norms = _forward(params, x)
    y = z / norms[:, None]
    dz = (g - y * np.einsum("ij,ij->i", y, g)[:, None]) / norms[:, None]
    grads = {"weight": h.T @ dz, "bias": dz.sum(axis=0)}
    if params.has_hidden:
        dpre = (dz @ params.weight.T) * (1.0 - h * h)
        grads["hidden_weight"] = x.T @ dpre
        grads["hidden_bias"] = dpre.sum(axis=0)
    return params.with_arrays(grads)


# --- text featurizer -------------------------------------------------------

def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


def token_hashes(tokens: list[str], seed: int = 0) -> np.ndarray:
    """64-bit FNV-1a of each token's UTF-8 bytes, offset basis XOR ``seed``."""
    encoded = [t.encode("utf-8") for t in tokens]
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(b) for b in encoded])
    buf = np.frombuffer(b"".join(encoded), dtype=np.uint8)
    if buf.size == 0:
        buf = np.zeros(1, dtype=np.uint8)
    return _kernels.fnv1a_tokens(buf, offsets, np.uint64(seed & 0xFFFFFFFFFFFFFFFF))


def featurize_text(text: str, d_in: int, seed: int = 0) -> FeatureVector:
    """Signed hashed bag-of-words.

    Each token lands in bucket ``h % d_in`` with sign taken from the top bit
    of its hash. Empty text yields a zero vector with ``n_tokens == 0``; the
    caller decides whether that is acceptable.
    """
    if d_in < 1:
        raise ValidationError(f"d_in must be >= 1, got {d_in}")
    tokens = tokenize(text)
    values = np.zeros(d_in)
    if tokens:
        h = token_hashes(tokens, seed)
        buckets = (h % np.uint64(d_in)).astype(np.int64)
        signs = np.where((h >> np.uint64(63)) & np.uint64(1), -1.0, 1.0)
        np.add.at(values, buckets, signs)
    return FeatureVector(values, "text", len(tokens))


def featurize_batch(texts: list[str], d_in: int, seed: int = 0) -> np.ndarray:
    return np.stack([featurize_text(t, d_in, seed).values for t in texts]) if texts \
        else np.zeros((0, d_in))


# --- checkpoints -----------------------------------------------------------

def save_params(params: EncoderParams, directory, name: str) -> dict:
    """Write each array as a binary matrix; return the manifest entry."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entry = {}
    for key, arr in params.named().items():
        fname = f"{name}.{key}.bin"
        save_matrix(directory / fname, np.atleast_2d(arr))
        entry[key] = {"file": fname, "shape": list(arr.shape)}
    return entry


def load_params(directory, entry: dict) -> EncoderParams:
    directory = Path(directory)
    arrays = {}
    for key, meta in entry.items():
        arrays[key] = load_matrix(directory / meta["file"]).reshape(meta["shape"])
    return EncoderParams(**arrays)


def save_checkpoint(directory, image: EncoderParams, text: EncoderParams, extra: dict | None = None):
    directory = Path(directory)
    manifest = {
        "image": save_params(image, directory, "image"),
        "text": save_params(text, directory, "text"),
        "extra": extra or {},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_checkpoint(directory) -> tuple[EncoderParams, EncoderParams, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return (load_params(directory, manifest["image"]),
            load_params(directory, manifest["text"]),
            manifest.get("extra", {}))
