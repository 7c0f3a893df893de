"""Submodular mutual information objectives between a selection and a target.

Three instantiations over a :class:`~smiselect.kernel.SimilarityKernel`:

* GCMI (graph cut):     ``2 * sum_{i in S, t in T} s_it``
* FLMI (facility loc.): ``sum_{t in T} max_{i in S} s_it + sum_{i in S} max_{t in T} s_it``
* LogDMI (log-det):     ``logdet(A_S) - logdet(A_S - C_S (K_T + eps I)^-1 C_S^T)``
  with ``A_S = K_S + eps I`` and ``C_S`` the selection-by-target block.

``eval_*`` functions compute a value from scratch; :class:`SelectionState`
maintains the caches needed for cheap marginal gains while a selection grows.
"""
from __future__ import annotations

import enum

import numpy as np
from scipy import linalg

from .exceptions import NumericalDegeneracyError
from .kernel import SimilarityKernel

DEFAULT_EPS = 1e-6


class SmiKind(str, enum.Enum):
    GCMI = "gcmi"
    FLMI = "flmi"
    LOGDMI = "logdmi"

    @classmethod
    def parse(cls, value) -> "SmiKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown SMI function {value!r}; "
                             f"choose from {[k.value for k in cls]}") from None

    @property
    def modular(self) -> bool:
        return self is SmiKind.GCMI

    @property
    def submodular(self) -> bool:
        # Gaussian mutual information is not submodular in the selection unless
        # selected items are conditionally independent given the target
        return self is not SmiKind.LOGDMI


def _as_index_array(S, n):
    idx = np.asarray(list(S), dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"selection index out of bounds for ground set of size {n}")
    if np.unique(idx).size != idx.size:
        raise ValueError("selection contains duplicate indices")
    return idx


def eval_gcmi(S, kernel: SimilarityKernel) -> float:
    idx = _as_index_array(S, kernel.n_ground)
    return float(2.0 * kernel.ground_target[idx].sum())


def eval_flmi(S, kernel: SimilarityKernel) -> float:
    idx = _as_index_array(S, kernel.n_ground)
    if idx.size == 0:
        return 0.0
    block = kernel.ground_target[idx]
    return float(block.max(axis=0).sum() + block.max(axis=1).sum())


def _cholesky(M, what):
    try:
        return linalg.cholesky(M, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(
            f"Cholesky of {what} failed ({exc}); increase the regularization eps") from exc


def _logdet_chol(L):
    return 2.0 * float(np.log(np.diag(L)).sum())


def _require_ground_ground(kernel):
    if kernel.ground_ground is None:
        raise ValueError("LogDMI needs the ground x ground kernel block "
                         "(build the kernel with need_ground_ground=True)")


def eval_logdmi(S, kernel: SimilarityKernel, eps: float = DEFAULT_EPS) -> float:
    _require_ground_ground(kernel)
    if not eps > 0:
        raise ValueError("eps must be > 0")
    idx = _as_index_array(S, kernel.n_ground)
    if idx.size == 0:
        raise ValueError("LogDMI is evaluated on a nonempty selection")
    A = kernel.ground_ground[np.ix_(idx, idx)] + eps * np.eye(idx.size)
    L_T = _cholesky(kernel.target_target + eps * np.eye(kernel.n_target), "target kernel")
    W = linalg.solve_triangular(L_T, kernel.ground_target[idx].T, lower=True)
    cond = A - W.T @ W
    return _logdet_chol(_cholesky(A, "selection kernel")) - _logdet_chol(
        _cholesky(cond, "conditional selection kernel"))


def evaluate(kind, S, kernel: SimilarityKernel, eps: float = DEFAULT_EPS) -> float:
    """Batch value of ``kind`` on ``S``; the empty set scores 0 for every kind."""
    kind = SmiKind.parse(kind)
    if kind is SmiKind.GCMI:
        return eval_gcmi(S, kernel)
    if kind is SmiKind.FLMI:
        return eval_flmi(S, kernel)
    if len(S) == 0:
        return 0.0
    return eval_logdmi(S, kernel, eps)


class _IncrementalCholesky:
    """Rows of ``L^-1 K[S, :]`` for a growing ``S``, with residual variances.

    ``resid[x]`` is the Schur complement of ``x`` against the current factor,
    i.e. ``K[x, x] - K[x, S] K[S, S]^-1 K[S, x]``.
    """

    def __init__(self, row_fn, diag):
        self._row_fn = row_fn
        self.resid = np.array(diag, dtype=np.float64)
        self._rows = np.empty((0, self.resid.size))
        self.k = 0

    def extend(self, j):
        pivot_sq = self.resid[j]
        if not pivot_sq > 0:
            raise NumericalDegeneracyError(
                f"nonpositive Cholesky pivot {pivot_sq:.3e} at ground index {j}; "
                "the kernel is numerically singular, increase eps")
        pivot = np.sqrt(pivot_sq)
        E = self._rows[:self.k]
        e = (self._row_fn(j) - E[:, j] @ E) / pivot
        if self.k == self._rows.shape[0]:
            grown = np.empty((max(8, 2 * self._rows.shape[0]), self.resid.size))
            grown[:self.k] = E
            self._rows = grown
        self._rows[self.k] = e
        self.k += 1
        self.resid = self.resid - e * e
        return pivot

    def factor(self, chosen):
        return self._rows[:self.k][:, chosen].T.copy()


class SelectionState:
    """Incremental selection for one SMI objective.

    ``gains()`` returns marginal gains for every ground index (chosen entries
    are ``nan``); ``commit(x)`` appends ``x`` and refreshes the caches.  Gains
    recorded at commit time are kept in ``history`` so that ``value`` equals
    the batch objective of ``chosen``.
    """

    def __init__(self, kind, kernel: SimilarityKernel, eps: float = DEFAULT_EPS):
        self.kind = SmiKind.parse(kind)
        self.kernel = kernel
        self.eps = float(eps)
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        self.chosen: list[int] = []
        self.history: list[float] = []
        self._mask = np.zeros(kernel.n_ground, dtype=bool)
        K = kernel.ground_target
        if self.kind is SmiKind.GCMI:
            self._modular_gain = 2.0 * K.sum(axis=1)
        elif self.kind is SmiKind.FLMI:
            self._row_max = K.max(axis=1)
            self.target_max = np.zeros(kernel.n_target)
        else:
            _require_ground_ground(kernel)
            self._init_logdet()

    def _init_logdet(self):
        kern, eps = self.kernel, self.eps
        G = kern.ground_ground
        L_T = _cholesky(kern.target_target + eps * np.eye(kern.n_target), "target kernel")
        self.target_cholesky = L_T
        W = linalg.solve_triangular(L_T, kern.ground_target.T, lower=True)
        base = np.diag(G) + eps

        def joint_row(j):
            r = G[j].copy()
            r[j] += eps
            return r

        def conditional_row(j):
            r = G[j] - W[:, j] @ W
            r[j] += eps
            return r

        self._chol_joint = _IncrementalCholesky(joint_row, base)
        self._chol_cond = _IncrementalCholesky(conditional_row, base - (W * W).sum(axis=0))

    @property
    def value(self) -> float:
        return float(sum(self.history))

    def __len__(self):
        return len(self.chosen)

    def __contains__(self, x):
        return bool(self._mask[x])

    def gains(self) -> np.ndarray:
        if self.kind is SmiKind.GCMI:
            g = self._modular_gain.copy()
        elif self.kind is SmiKind.FLMI:
            K = self.kernel.ground_target
            g = np.maximum(K - self.target_max, 0.0).sum(axis=1) + self._row_max
        else:
            a, b = self._chol_joint.resid, self._chol_cond.resid
            free = ~self._mask
            if np.any(a[free] <= 0) or np.any(b[free] <= 0):
                bad = int(np.flatnonzero(free & ((a <= 0) | (b <= 0)))[0])
                raise NumericalDegeneracyError(
                    f"nonpositive Schur complement for ground index {bad}; increase eps")
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.log(a) - np.log(b)
        g[self._mask] = np.nan
        return g

    def marginal_gain(self, x: int) -> float:
        x = self._check_free(x)
        if self.kind is SmiKind.GCMI:
            return float(self._modular_gain[x])
        if self.kind is SmiKind.FLMI:
            row = self.kernel.ground_target[x]
            return float(np.maximum(row - self.target_max, 0.0).sum() + self._row_max[x])
        a, b = self._chol_joint.resid[x], self._chol_cond.resid[x]
        if not (a > 0 and b > 0):
            raise NumericalDegeneracyError(
                f"nonpositive Schur complement for ground index {x}; increase eps")
        return float(np.log(a) - np.log(b))

    def commit(self, x: int, gain: float | None = None) -> "SelectionState":
        x = self._check_free(x)
        if gain is None:
            gain = self.marginal_gain(x)
        if self.kind is SmiKind.FLMI:
            np.maximum(self.target_max, self.kernel.ground_target[x], out=self.target_max)
        elif self.kind is SmiKind.LOGDMI:
            self._chol_joint.extend(x)
            self._chol_cond.extend(x)
        self.chosen.append(x)
        self.history.append(float(gain))
        self._mask[x] = True
        return self

    def cholesky_factors(self):
        """Lower-triangular factors of the joint and conditional selection kernels."""
        if self.kind is not SmiKind.LOGDMI:
            raise ValueError("Cholesky factors exist only for LogDMI")
        return (self._chol_joint.factor(self.chosen), self._chol_cond.factor(self.chosen))

    def _check_free(self, x):
        x = int(x)
        if not 0 <= x < self.kernel.n_ground:
            raise IndexError(f"ground index {x} out of bounds")
        if self._mask[x]:
            raise ValueError(f"ground index {x} is already selected")
        return x


def marginal_gain(kind, x, state: SelectionState, kernel: SimilarityKernel | None = None) -> float:
    if SmiKind.parse(kind) is not state.kind:
        raise ValueError("state was built for a different objective")
    if kernel is not None and kernel is not state.kernel:
        raise ValueError("state was built for a different kernel")
    return state.marginal_gain(x)


def commit(kind, x, state: SelectionState, kernel: SimilarityKernel | None = None) -> SelectionState:
    if SmiKind.parse(kind) is not state.kind:
        raise ValueError("state was built for a different objective")
    return state.commit(x)
