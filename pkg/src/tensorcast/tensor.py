"""Dense tensor algebra: unfolding, mode products, and symmetric eigendecomposition.

Tensors are plain numpy arrays. The canonical linearization is column-major
(first index varies fastest), and mode-k unfolding enumerates the remaining
modes in ascending order with the lowest one varying fastest. Under that
convention the multilinear identity

    unfold(f x1 A1 x2 A2 ... xK AK, 0) == A1 @ unfold(f, 0) @ kron(AK, ..., A2).T

holds exactly, which is what the factor-model code relies on.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "unfold",
    "refold",
    "mode_product",
    "multi_mode_product",
    "kron",
    "hadamard",
    "frobenius_norm",
    "top_eigenvectors",
]


def unfold(x: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k matricization of ``x`` (modes are 0-based).

    Returns the (p_k, prod of other extents) matrix whose columns enumerate
    the remaining indices with the lowest remaining mode varying fastest.
    """
    if not 0 <= mode < x.ndim:
        raise ValueError(f"mode {mode} out of range for a {x.ndim}-way tensor")
    return np.reshape(np.moveaxis(x, mode, 0), (x.shape[mode], -1), order="F")


def refold(m: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the tensor with extents ``dims``."""
    dims = tuple(int(d) for d in dims)
    if not 0 <= mode < len(dims):
        raise ValueError(f"mode {mode} out of range for dims {dims}")
    m = np.asarray(m)
    rest = tuple(d for i, d in enumerate(dims) if i != mode)
    expected = (dims[mode], int(np.prod(rest, dtype=np.int64)) if rest else 1)
    if m.shape != expected:
        raise ValueError(f"matrix shape {m.shape} does not match dims {dims} at mode {mode}")
    return np.moveaxis(np.reshape(m, (dims[mode], *rest), order="F"), 0, mode)


def mode_product(x: np.ndarray, a: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k product: premultiply every mode-k fiber of ``x`` by ``a``."""
    if not 0 <= mode < x.ndim:
        raise ValueError(f"mode {mode} out of range for a {x.ndim}-way tensor")
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[1] != x.shape[mode]:
        raise ValueError(
            f"matrix of shape {a.shape} cannot act on mode {mode} of extent {x.shape[mode]}"
        )
    return np.moveaxis(np.tensordot(a, x, axes=(1, mode)), 0, mode)


def multi_mode_product(x: np.ndarray, matrices: Iterable[np.ndarray | None]) -> np.ndarray:
    """Apply one matrix per mode in sequence; ``None`` leaves a mode untouched."""
    out = x
    for mode, a in enumerate(matrices):
        if a is not None:
            out = mode_product(out, a, mode)
    return out


def kron(a: np.ndarray, b: np.ndarray, *rest: np.ndarray) -> np.ndarray:
    """Kronecker product of two or more matrices, left to right."""
    out = np.kron(np.asarray(a), np.asarray(b))
    for m in rest:
        out = np.kron(out, np.asarray(m))
    return out


def hadamard(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise product; the operands must have identical shapes."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return x * y


def frobenius_norm(x: np.ndarray) -> float:
    """Square root of the sum of squared entries."""
    return float(np.sqrt(np.sum(np.square(np.asarray(x, dtype=float)))))


def top_eigenvectors(s: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading eigenpairs of a symmetric matrix.

    Returns (V, w) with the k orthonormal eigenvectors for the k largest
    eigenvalues as columns of V and the eigenvalues in descending order.
    Each column is scaled so its largest-magnitude entry is positive (first
    such entry on ties), which pins down the sign left free by the
    eigenproblem.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    if not 1 <= k <= s.shape[0]:
        raise ValueError(f"k={k} out of range for a {s.shape[0]}x{s.shape[0]} matrix")
    scale = max(np.max(np.abs(s)), 1.0)
    if np.max(np.abs(s - s.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric within 1e-8 relative tolerance")
    # Covariances assembled from outer-product sums are symmetric only up to
    # roundoff; average with the transpose before decomposing.
    w, v = np.linalg.eigh(0.5 * (s + s.T))
    order = np.argsort(w)[::-1][:k]
    w = w[order]
    v = v[:, order]
    anchor = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[anchor, np.arange(k)])
    signs[signs == 0] = 1.0
    return v * signs, w
