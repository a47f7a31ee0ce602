"""Dense float64 linear-algebra helpers and matrix serialization.

Matrices are plain C-contiguous ``float64`` numpy arrays. ``as_matrix``
is the gatekeeper: anything entering a public operation passes through it, so
NaN/Inf never propagate silently.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, ValidationError

_HEADER = struct.Struct("<QQ")


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(singular_values) @ vt``.

    ``u`` is (N, r), ``vt`` is (r, d), ``r = min(N, d)``; singular values
    are non-increasing.
    """

    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.vt


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValidationError(f"{name} must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        bad = np.argwhere(~np.isfinite(m))[0]
        raise ValidationError(f"{name} has a non-finite entry at ({bad[0]}, {bad[1]})")
    return m


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} has non-finite entries")
    return v


def thin_svd(a) -> SvdResult:
    """Thin SVD with a reproducible sign convention.

    Each right-singular vector (row of ``vt``) is flipped so that its
    largest-magnitude entry is positive; the matching column of ``u`` is
    flipped with it, so the product is unchanged.

    Raises:
        ValidationError: if ``a`` is not a finite non-empty matrix.
        ConvergenceError: if LAPACK reports non-convergence.
    """
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD did not converge: {exc}") from exc
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(s)) and np.all(np.isfinite(vt))):
        raise ConvergenceError("SVD produced non-finite output")
    pivot = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(vt.shape[0]), pivot])
    signs[signs == 0] = 1.0
    return SvdResult(
        u=np.ascontiguousarray(u * signs),
        singular_values=s,
        vt=np.ascontiguousarray(vt * signs[:, None]),
    )


def mean_rows(a) -> np.ndarray:
    """Componentwise arithmetic mean of the rows of ``a``."""
    return as_matrix(a).mean(axis=0)


def normalize_rows(a, name: str = "matrix", eps: float = 1e-12):
    """Return ``(unit_rows, norms)``; rejects any row with norm below ``eps``."""
    norms = np.linalg.norm(a, axis=1)
    small = np.flatnonzero(norms < eps)
    if small.size:
        raise ValidationError(f"zero-norm row {int(small[0])} in {name}")
    return a / norms[:, None], norms


# --- serialization ---------------------------------------------------------

def matrix_to_bytes(a) -> bytes:
    """Little-endian ``rows:u64, cols:u64`` header followed by row-major f64."""
    m = as_matrix(a)
    return _HEADER.pack(*m.shape) + m.astype("<f8").tobytes(order="C")


def matrix_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise ValidationError("matrix payload shorter than header")
    rows, cols = _HEADER.unpack_from(buf)
    expected = _HEADER.size + 8 * rows * cols
    if len(buf) != expected:
        raise ValidationError(
            f"matrix payload has {len(buf)} bytes, header ({rows}x{cols}) implies {expected}"
        )
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    return as_matrix(data.reshape(rows, cols).astype(np.float64))


def save_matrix(path, a) -> None:
    Path(path).write_bytes(matrix_to_bytes(a))


def load_matrix(path) -> np.ndarray:
    return matrix_from_bytes(Path(path).read_bytes())


def matrix_to_json(a) -> str:
    return json.dumps(as_matrix(a).tolist())


def matrix_from_json(text: str) -> np.ndarray:
    return as_matrix(json.loads(text))
