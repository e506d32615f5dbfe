"""Shared constructions for synthetic factor-model data in tests."""

from __future__ import annotations

import numpy as np

from tensorcast.benchmarks import ProviderMatrixSeries
from tensorcast.factor_model import LoadingSet, reconstruct_common
from tensorcast.panel import TensorSeries


def weekly_starts(t: int) -> np.ndarray:
    return np.datetime64("2020-01-06T00", "h") + (168 * np.arange(t)).astype("timedelta64[h]")


def make_series(values: np.ndarray) -> TensorSeries:
    values = np.asarray(values, dtype=float)
    return TensorSeries(
        values=values,
        period_starts=weekly_starts(values.shape[0]),
        provider_ids=[f"P{i}" for i in range(values.shape[1])],
    )


def make_matrix_series(values: np.ndarray, provider_id: str = "P0") -> ProviderMatrixSeries:
    values = np.asarray(values, dtype=float)
    return ProviderMatrixSeries(
        provider_id=provider_id,
        values=values,
        period_starts=weekly_starts(values.shape[0]),
    )


def orthonormal_loading(rng: np.random.Generator, p: int, r: int) -> np.ndarray:
    """A p x r matrix with A'A = p I and the estimator's sign convention."""
    q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    anchor = np.argmax(np.abs(q), axis=0)
    signs = np.sign(q[anchor, np.arange(r)])
    return np.sqrt(p) * q * signs


def random_loading_set(rng: np.random.Generator, dims, ranks) -> LoadingSet:
    """LoadingSet with scale-convention loadings; dims/ranks include mode 0."""
    lam = orthonormal_loading(rng, dims[0], ranks[0])
    b = [orthonormal_loading(rng, s, k) for s, k in zip(dims[1:], ranks[1:])]
    return LoadingSet(lam=lam, b=b)


def noiseless_series(rng: np.random.Generator, dims, ranks, t: int, noise_sd: float = 0.0):
    """Series drawn exactly from the factor model (plus optional iid noise)."""
    loadings = random_loading_set(rng, dims, ranks)
    factors = rng.standard_normal((t, *ranks))
    values = reconstruct_common(factors, loadings)
    if noise_sd:
        values = values + noise_sd * rng.standard_normal(values.shape)
    return make_series(values), loadings, factors


def subspace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sine of the largest principal angle between the column spans of a and b.

    Computed as the spectral norm of (I - P_a) Q_b, which stays accurate for
    nearly identical spans (the sqrt(1 - cos^2) route loses half the digits).
    """
    qa, _ = np.linalg.qr(np.asarray(a, dtype=float))
    qb, _ = np.linalg.qr(np.asarray(b, dtype=float))
    resid = qb - qa @ (qa.T @ qb)
    return float(np.linalg.norm(resid, 2))
