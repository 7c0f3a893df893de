"""Gaussian similarity kernels between ground and target feature vectors."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError, NumericalDegeneracyError

MEDIAN_MAX_PAIRS = 10_000
_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelConfig:
    """``gamma`` is ``"median"`` (heuristic) or a positive float."""

    gamma: str | float = "median"
    # off by default: z-scoring inflates near-constant dimensions (e.g. averaged
    # deltas) and shrinks the few that separate clusters
    standardize: bool = False
    regularization_eps: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.gamma, str):
            if self.gamma != "median":
                raise ValueError(f"gamma must be 'median' or a positive float, got {self.gamma!r}")
        elif not self.gamma > 0:
            raise ValueError(f"fixed gamma must be > 0, got {self.gamma}")
        if not self.regularization_eps > 0:
            raise ValueError("regularization_eps must be > 0")


@dataclass(frozen=True)
class SimilarityKernel:
    ground_target: np.ndarray
    target_target: np.ndarray
    gamma: float
    ground_ground: np.ndarray | None = None

    @property
    def n_ground(self) -> int:
        return self.ground_target.shape[0]

    @property
    def n_target(self) -> int:
        return self.ground_target.shape[1]

    @classmethod
    def from_matrices(cls, ground_target, target_target, ground_ground=None, gamma=float("nan")):
        """Wrap precomputed similarity blocks (used by tests and custom kernels)."""
        gt = np.asarray(ground_target, dtype=np.float64)
        tt = np.asarray(target_target, dtype=np.float64)
        gg = None if ground_ground is None else np.asarray(ground_ground, dtype=np.float64)
        if gt.ndim != 2 or tt.shape != (gt.shape[1], gt.shape[1]):
            raise ValueError("inconsistent kernel block shapes")
        if gg is not None and gg.shape != (gt.shape[0], gt.shape[0]):
            raise ValueError("ground_ground must be |V| x |V|")
        return cls(gt, tt, float(gamma), gg)


def standardize_features(vectors):
    """Z-score each dimension over the collection.

    Returns ``(standardized, mean, scale)``; dimensions whose std is below
    1e-12 keep a unit divisor so they end up all zero.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("standardization needs at least 2 vectors")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std < _STD_FLOOR, 1.0, std)
    return (X - mean) / scale, mean, scale


def similarity(a, b, gamma: float) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    diff = a - b
    return float(np.exp(-gamma * diff @ diff))


def _sq_dists(A, B):
    return cdist(A, B, metric="sqeuclidean")


def median_pairwise_distance(X, max_pairs=MEDIAN_MAX_PAIRS, seed=0):
    """Median Euclidean distance over all pairs, or over a seeded uniform sample."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise DataError("median heuristic needs at least 2 points")
    total = n * (n - 1) // 2
    if total <= max_pairs:
        i, j = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=max_pairs)
        j = rng.integers(0, n - 1, size=max_pairs)
        j = j + (j >= i)  # uniform over j != i
    return float(np.median(np.linalg.norm(X[i] - X[j], axis=1)))


def median_heuristic_gamma(X, max_pairs=MEDIAN_MAX_PAIRS, seed=0):
    m = median_pairwise_distance(X, max_pairs, seed)
    if m <= 0:
        raise NumericalDegeneracyError(
            "median pairwise distance is 0 (points are identical); "
            "pass a fixed gamma instead of the median heuristic")
    return 1.0 / (2.0 * m * m)


class GaussianSimilarity(TransformerMixin, BaseEstimator):
    """Fit standardization and bandwidth on a point cloud, then build kernels.

    ``fit`` learns per-dimension mean/scale (when ``standardize``) and the
    bandwidth ``gamma_``; ``transform`` applies the standardization;
    :meth:`pairwise` evaluates ``exp(-gamma * ||a - b||^2)``.
    """

    def __init__(self, gamma="median", standardize=False, seed=0):
        self.gamma = gamma
        self.standardize = standardize
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        if self.standardize:
            Z, self.mean_, self.scale_ = standardize_features(X)
        else:
            Z = X
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])
        if isinstance(self.gamma, str):
            if self.gamma != "median":
                raise ValueError(f"unknown gamma mode {self.gamma!r}")
            self.gamma_ = median_heuristic_gamma(Z, seed=self.seed)
        else:
            if not self.gamma > 0:
                raise ValueError("fixed gamma must be > 0")
            self.gamma_ = float(self.gamma)
        return self

    def transform(self, X):
        check_is_fitted(self, "gamma_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_

    def pairwise(self, A, B=None):
        A = self.transform(A)
        B = A if B is None else self.transform(B)
        K = np.exp(-self.gamma_ * _sq_dists(A, B))
        if B is A:
            K = 0.5 * (K + K.T)
            np.fill_diagonal(K, 1.0)
        return K


def build_kernel(ground, target, cfg: KernelConfig = KernelConfig(),
                 need_ground_ground: bool = False) -> SimilarityKernel:
    """Standardize on ground+target, resolve gamma, and fill the kernel blocks."""
    G = np.asarray(ground, dtype=np.float64)
    T = np.asarray(target, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] == 0:
        raise DataError("ground set is empty")
    if T.ndim != 2 or T.shape[0] == 0:
        raise DataError("target set is empty")
    if G.shape[1] != T.shape[1]:
        raise DataError(f"feature dimension mismatch: ground {G.shape[1]}, target {T.shape[1]}")
    union = np.vstack([G, T])
    est = GaussianSimilarity(gamma=cfg.gamma, standardize=cfg.standardize, seed=cfg.seed)
    est.fit(union)
    return SimilarityKernel(
        ground_target=est.pairwise(G, T),
        target_target=est.pairwise(T),
        gamma=est.gamma_,
        ground_ground=est.pairwise(G) if need_ground_ground else None,
    )


_DUMP_MAGIC = b"SMIK"


def dump_kernel(kernel: SimilarityKernel, path):
    """Write the kernel blocks as a little-endian binary file.

    Layout: magic ``SMIK``, uint32 ``|V|``, uint32 ``|T|``, uint8 has-ground-ground,
    float64 gamma, then row-major float64 ``ground_target``, ``target_target``
    and (if present) ``ground_ground``.
    """
    gg = kernel.ground_ground
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<IIBd", kernel.n_ground, kernel.n_target,
                             int(gg is not None), kernel.gamma))
        for block in (kernel.ground_target, kernel.target_target, gg):
            if block is not None:
                fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_kernel(path) -> SimilarityKernel:
    with open(path, "rb") as fh:
        if fh.read(4) != _DUMP_MAGIC:
            raise DataError(f"{path}: not a kernel dump")
        n, m, has_gg, gamma = struct.unpack("<IIBd", fh.read(struct.calcsize("<IIBd")))

        def block(r, c):
            return np.frombuffer(fh.read(8 * r * c), dtype="<f8").reshape(r, c).copy()

        gt = block(n, m)
        tt = block(m, m)
        gg = block(n, n) if has_gg else None
    return SimilarityKernel(gt, tt, gamma, gg)
