"""Tensor factor model estimation by two-pass projected eigendecomposition.

The model for a standardized series of (N, S1, ..., SM) tensors x_t is

    x_t = f_t x1 Lambda x2 B(1) ... x(M+1) B(M) + e_t

with an N x R cross-sectional loading Lambda, seasonal loadings B(j) of shape
S_j x K_j, and R x K1 x ... x KM latent factor tensors f_t. Estimation runs in
two passes. The initial pass eigendecomposes the unprojected second-moment
matrices of the mode unfoldings to get a coarse basis for the complementary
loading space of each mode (b_hat for the cross-section mode, gamma_hat[j] for
seasonal mode j). The projection pass then eigendecomposes the covariance of
each unfolding after projecting its column space onto that basis, which strips
most of the noise and yields the final loadings. Factors follow by linear
projection, with the loading scale conventions

    Lambda' Lambda = N I,   B(j)' B(j) = S_j I

making the projection an exact inverse of the noiseless model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .panel import Standardization, TensorSeries, estimate_standardization, standardize, write_npz
from .tensor import mode_product, multi_mode_product, top_eigenvectors

__all__ = [
    "Ranks",
    "LoadingSet",
    "FactorSeries",
    "InitialLoadings",
    "TensorFactorModel",
    "initial_loadings",
    "projected_loadings",
    "extract_factors",
    "reconstruct_common",
    "fitted_values",
    "select_ranks",
    "in_sample_mse",
    "fit_factor_model",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class Ranks:
    """Factor counts: r for the cross-section mode, k[j] for seasonal mode j."""

    r: int
    k: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if self.r < 1 or any(v < 1 for v in self.k):
            raise ValueError(f"ranks must be >= 1, got r={self.r}, k={self.k}")

    def validate_against(self, dims: Sequence[int]) -> None:
        n, seasonal = dims[0], tuple(dims[1:])
        if len(self.k) != len(seasonal):
            raise ValueError(f"{len(self.k)} seasonal ranks for {len(seasonal)} seasonal modes")
        if self.r > n:
            raise ValueError(f"r={self.r} exceeds cross-section size {n}")
        for k_j, s_j in zip(self.k, seasonal):
            if k_j > s_j:
                raise ValueError(f"seasonal rank {k_j} exceeds period {s_j}")

    @property
    def k_product(self) -> int:
        return int(np.prod(self.k))


@dataclass
class LoadingSet:
    """Estimated loadings: lam is N x R, b[j] is S_j x K_j.

    Columns follow the eigenvector conventions: lam'lam = N I and
    b[j]'b[j] = S_j I (to 1e-8 relative), largest-magnitude entry of each
    column positive.
    """

    lam: np.ndarray
    b: list[np.ndarray]

    def __post_init__(self):
        for name, mat in [("lam", self.lam)] + [(f"b[{j}]", m) for j, m in enumerate(self.b)]:
            p = mat.shape[0]
            gram = mat.T @ mat / p
            if np.max(np.abs(gram - np.eye(mat.shape[1]))) > 1e-8:
                raise ValueError(f"{name} does not satisfy the sqrt({p}) scale convention")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.lam.shape[0], *(m.shape[0] for m in self.b))

    @property
    def ranks(self) -> Ranks:
        return Ranks(self.lam.shape[1], tuple(m.shape[1] for m in self.b))


@dataclass
class FactorSeries:
    """Extracted factor tensors: values[t] has dims (R, K1, ..., KM).

    Period starts and provider labels ride along so downstream reconstruction
    can rebuild a fully labeled TensorSeries.
    """

    values: np.ndarray  # (T, R, K1, ..., KM)
    period_starts: np.ndarray
    provider_ids: list[str]

    @property
    def num_periods(self) -> int:
        return self.values.shape[0]


@dataclass
class InitialLoadings:
    """First-pass bases: b_hat is S x prod(K), gamma_hat[j] is (N S/S_j) x (R prod(K)/K_j)."""

    b_hat: np.ndarray
    gamma_hat: list[np.ndarray]


@dataclass
class TensorFactorModel:
    """A fitted model: ranks, loadings, and the standardization it was fit under."""

    ranks: Ranks
    loadings: LoadingSet
    standardization: Standardization
    provider_ids: list[str]


def _stack_unfoldings(values: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k unfoldings of every period tensor, stacked along a leading axis.

    values has shape (T, p0, ..., pK-1); the result has shape (T, p_mode, rest)
    with columns ordered as in tensor.unfold (lowest remaining mode fastest).
    """
    x = np.moveaxis(values, mode + 1, 1)
    rest = x.shape[2:]
    if rest:
        # Fortran-order flattening of the trailing axes == C-order of them reversed.
        x = x.transpose(0, 1, *range(x.ndim - 1, 1, -1))
    cols = int(np.prod(rest)) if rest else 1
    return x.reshape(values.shape[0], values.shape[mode + 1], cols)


def _check_standardized_input(xs: TensorSeries) -> tuple[int, tuple[int, ...]]:
    if xs.values.ndim < 3:
        raise ValueError("series tensors need a cross-section mode and at least one seasonal mode")
    dims = xs.tensor_dims
    return dims[0], tuple(dims[1:])


def initial_loadings(xs: TensorSeries, ranks: Ranks) -> InitialLoadings:
    """First estimation pass: unprojected column-space bases per mode.

    b_hat is sqrt(S) times the top prod(K) eigenvectors of the averaged
    S x S second-moment matrix of the cross-section unfoldings; gamma_hat[j]
    is sqrt(N S/S_j) times the top R*prod(K)/K_j eigenvectors of the analogous
    matrix for seasonal mode j.
    """
    n, seasonal = _check_standardized_input(xs)
    ranks.validate_against(xs.tensor_dims)
    t = xs.num_periods
    s_total = int(np.prod(seasonal))
    scale = t * n * s_total

    x1 = _stack_unfoldings(xs.values, 0)
    cov = np.einsum("tns,tnu->su", x1, x1) / scale
    if np.max(np.abs(cov)) == 0.0:
        raise ValueError("degenerate covariance: series is identically zero")
    b_hat = np.sqrt(s_total) * top_eigenvectors(cov, ranks.k_product)[0]

    gamma_hat = []
    for j, s_j in enumerate(seasonal):
        xj = _stack_unfoldings(xs.values, j + 1)
        cov_j = np.einsum("tsp,tsq->pq", xj, xj) / scale
        s_minus = s_total // s_j
        count = ranks.r * (ranks.k_product // ranks.k[j])
        gamma_hat.append(np.sqrt(n * s_minus) * top_eigenvectors(cov_j, count)[0])
    return InitialLoadings(b_hat=b_hat, gamma_hat=gamma_hat)


def _projected_covariances(
    xs: TensorSeries, init: InitialLoadings, ranks: Ranks
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Second-pass covariances: each mode's unfolding compressed through the
    complementary first-pass basis before the outer product."""
    n, seasonal = _check_standardized_input(xs)
    t = xs.num_periods
    s_total = int(np.prod(seasonal))
    scale = t * n * s_total

    x1 = _stack_unfoldings(xs.values, 0)
    compressed = x1 @ init.b_hat
    cov0 = np.einsum("tnp,tmp->nm", compressed, compressed) / (scale * s_total)

    covs = []
    for j, s_j in enumerate(seasonal):
        xj = _stack_unfoldings(xs.values, j + 1)
        s_minus = s_total // s_j
        compressed = xj @ init.gamma_hat[j]
        covs.append(np.einsum("tsp,tup->su", compressed, compressed) / (scale * s_minus))
    return cov0, covs


def projected_loadings(xs: TensorSeries, init: InitialLoadings, ranks: Ranks) -> LoadingSet:
    """Second estimation pass: final loadings from the projected covariances."""
    n, seasonal = _check_standardized_input(xs)
    ranks.validate_against(xs.tensor_dims)
    if init.b_hat.shape != (int(np.prod(seasonal)), ranks.k_product):
        raise ValueError(
            f"b_hat shape {init.b_hat.shape} does not conform to ranks {ranks} "
            f"and dims {xs.tensor_dims}"
        )
    cov0, covs = _projected_covariances(xs, init, ranks)
    if np.max(np.abs(cov0)) == 0.0:
        raise ValueError("degenerate covariance: series is identically zero")
    lam = np.sqrt(n) * top_eigenvectors(cov0, ranks.r)[0]
    b = [
        np.sqrt(s_j) * top_eigenvectors(cov_j, k_j)[0]
        for s_j, k_j, cov_j in zip(seasonal, ranks.k, covs)
    ]
    return LoadingSet(lam=lam, b=b)


def extract_factors(xs: TensorSeries, loadings: LoadingSet) -> FactorSeries:
    """Linear projection of each tensor onto the factor space.

    f_t = (1/(N S)) x_t x1 lam' x2 b[0]' ... ; with the loading scale
    conventions this inverts the noiseless model exactly.
    """
    if loadings.dims != xs.tensor_dims:
        raise ValueError(f"loading dims {loadings.dims} != tensor dims {xs.tensor_dims}")
    n = xs.tensor_dims[0]
    s_total = int(np.prod(xs.tensor_dims[1:]))
    out = xs.values
    for mode, mat in enumerate([loadings.lam] + loadings.b):
        out = mode_product(out, mat.T, mode + 1)
    return FactorSeries(
        values=out / (n * s_total),
        period_starts=xs.period_starts.copy(),
        provider_ids=list(xs.provider_ids),
    )


def reconstruct_common(factor_values: np.ndarray, loadings: LoadingSet) -> np.ndarray:
    """Common component on the standardized scale: f x1 lam x2 b[0] ...

    Accepts either one factor tensor (R, K1, ...) or a stacked series
    (T, R, K1, ...); the time axis, when present, is left untouched.
    """
    mats: list[np.ndarray | None] = [loadings.lam] + list(loadings.b)
    if factor_values.ndim == len(mats) + 1:
        mats = [None] + mats
    elif factor_values.ndim != len(mats):
        raise ValueError(
            f"factor tensor with {factor_values.ndim} modes does not match "
            f"{len(mats)} loading matrices"
        )
    return multi_mode_product(factor_values, mats)


def fitted_values(f: FactorSeries, loadings: LoadingSet, z: Standardization) -> TensorSeries:
    """Fitted observations: mu + sigma (Hadamard) reconstructed common component."""
    common = reconstruct_common(f.values, loadings)
    if common.shape[1:] != z.mu.shape:
        raise ValueError(f"reconstruction dims {common.shape[1:]} != standardization {z.mu.shape}")
    return TensorSeries(
        values=z.mu + z.sigma * common,
        period_starts=f.period_starts.copy(),
        provider_ids=list(f.provider_ids),
    )


# Ratios within 10% of the best are treated as tied; without a band, the
# argmax over the near-flat ratios of factorless data is effectively random
# instead of resolving toward the smaller rank.
_RATIO_TIE_BAND = 1.1


def _ratio_argmax(eigvals: np.ndarray, count: int) -> int:
    """Eigenvalue-ratio rule: rank = argmax_i lam_i / lam_{i+1}, 1 <= i <= count.

    Ties resolve toward the smaller rank, where "tied" means within the
    relative band _RATIO_TIE_BAND of the maximum ratio. Zero-over-zero ratios
    are excluded; positive-over-zero counts as an infinite gap.
    """
    w = np.sort(eigvals)[::-1]
    w = np.clip(w, 0.0, None)  # roundoff can leave tiny negatives on PSD input
    num, den = w[:count], w[1 : count + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = num / den
    ratios[np.isnan(ratios)] = -np.inf
    best = np.max(ratios)
    if best == -np.inf:
        raise ValueError("all candidate eigenvalue ratios are undefined (zero spectrum)")
    return int(np.argmax(ratios >= best / _RATIO_TIE_BAND)) + 1


def select_ranks(xs: TensorSeries, r_max: int, k_max: Sequence[int]) -> Ranks:
    """Choose factor counts by the eigenvalue-ratio criterion per mode.

    The ratios are taken over the eigenvalues of the projected covariances
    built with the candidate maxima (r_max, k_max) as working ranks.
    """
    n, seasonal = _check_standardized_input(xs)
    k_max = tuple(int(v) for v in k_max)
    if not 1 <= r_max < n:
        raise ValueError(f"r_max must lie in [1, {n - 1}], got {r_max}")
    for k_m, s_j in zip(k_max, seasonal):
        if not 1 <= k_m < s_j:
            raise ValueError(f"k_max entry {k_m} must lie in [1, {s_j - 1}]")
    candidate = Ranks(r_max, k_max)
    candidate.validate_against(xs.tensor_dims)
    init = initial_loadings(xs, candidate)
    cov0, covs = _projected_covariances(xs, init, candidate)
    r = _ratio_argmax(np.linalg.eigvalsh(cov0), r_max)
    k = tuple(
        _ratio_argmax(np.linalg.eigvalsh(cov_j), k_m) for cov_j, k_m in zip(covs, k_max)
    )
    return Ranks(r, k)


def in_sample_mse(y: TensorSeries, y_fit: TensorSeries) -> float:
    """Mean squared entrywise difference over all periods and cells."""
    if y.values.shape != y_fit.values.shape:
        raise ValueError(f"shape mismatch {y.values.shape} vs {y_fit.values.shape}")
    return float(np.mean(np.square(y.values - y_fit.values)))


def fit_factor_model(
    ys: TensorSeries, ranks: Ranks | None = None, r_max: int = 3, k_max: Sequence[int] | None = None
) -> tuple[TensorFactorModel, FactorSeries]:
    """Standardize, (optionally) select ranks, and run both estimation passes.

    Returns the fitted model together with the extracted factor series.
    """
    z = estimate_standardization(ys)
    xs = standardize(ys, z)
    if ranks is None:
        seasonal = xs.tensor_dims[1:]
        if k_max is None:
            k_max = [min(3, s_j - 1) for s_j in seasonal]
        ranks = select_ranks(xs, min(r_max, xs.tensor_dims[0] - 1), k_max)
    init = initial_loadings(xs, ranks)
    loadings = projected_loadings(xs, init, ranks)
    factors = extract_factors(xs, loadings)
    model = TensorFactorModel(
        ranks=ranks, loadings=loadings, standardization=z, provider_ids=list(ys.provider_ids)
    )
    return model, factors


def save_model(path: str | Path, model: TensorFactorModel) -> None:
    """Write a model archive (.npz): ranks, loadings, standardization, labels."""
    arrays = {
        "r": np.array(model.ranks.r),
        "k": np.array(model.ranks.k),
        "lam": model.loadings.lam,
        "mu": model.standardization.mu,
        "sigma": model.standardization.sigma,
        "provider_ids": np.array(model.provider_ids),
    }
    for j, mat in enumerate(model.loadings.b):
        arrays[f"b{j}"] = mat
    write_npz(path, arrays)


def load_model(path: str | Path) -> TensorFactorModel:
    """Read an archive written by :func:`save_model`."""
    with np.load(path, allow_pickle=False) as archive:
        k = tuple(int(v) for v in archive["k"])
        b = [archive[f"b{j}"] for j in range(len(k))]
        return TensorFactorModel(
            ranks=Ranks(int(archive["r"]), k),
            loadings=LoadingSet(lam=archive["lam"], b=b),
            standardization=Standardization(mu=archive["mu"], sigma=archive["sigma"]),
            provider_ids=[str(p) for p in archive["provider_ids"]],
        )
