"""Estimator front end: fit on a ground set and a target set, read off a subset."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .kernel import KernelConfig, build_kernel
from .optimizer import (BudgetConstraint, GreedyConfig, brute_force_select, greedy_select,
                        lazy_greedy_select)
from .smi import SmiKind, evaluate


class TargetedSubsetSelector(BaseEstimator):
    """Budgeted targeted subset selection with an SMI objective.

    Parameters
    ----------
    function : {"flmi", "gcmi", "logdmi"}, default="flmi"
        Submodular mutual information objective.
    budget_s : float, default=360.0
        Total cost (seconds of audio) the selection may use.
    gamma : "median" or float, default="median"
        Kernel bandwidth in ``exp(-gamma * ||a - b||^2)``; ``"median"`` uses
        ``1 / (2 m^2)`` with ``m`` the median pairwise distance.
    standardize : bool, default=False
        Z-score features (fit on ground and target together) before the kernel.
    eps : float, default=1e-6
        Diagonal regularization for the log-determinant objective.
    variant : {"plain_gain", "gain_per_cost"}, default="plain_gain"
    lazy : bool, default=False
    min_gain : float, default=0.0
        Stop when every feasible gain is below this (0 disables).
    oracle : bool, default=False
        Exhaustive search instead of greedy (ground sets of at most 20 items).
    seed : int, default=0
        Seeds the median-heuristic pair sample.

    Attributes
    ----------
    kernel_ : SimilarityKernel
    selection_ : SelectionResult
    selected_indices_ : ndarray of int, in pick order
    """

    def __init__(self, function="flmi", budget_s=360.0, gamma="median", standardize=False,
                 eps=1e-6, variant="plain_gain", lazy=False, min_gain=0.0, oracle=False,
                 seed=0):
        self.function = function
        self.budget_s = budget_s
        self.gamma = gamma
        self.standardize = standardize
        self.eps = eps
        self.variant = variant
        self.lazy = lazy
        self.min_gain = min_gain
        self.oracle = oracle
        self.seed = seed

    def kernel_config(self):
        return KernelConfig(gamma=self.gamma, standardize=self.standardize,
                            regularization_eps=self.eps, seed=self.seed)

    def greedy_config(self):
        return GreedyConfig(variant=self.variant, lazy=self.lazy, min_gain=self.min_gain,
                            eps=self.eps)

    def fit(self, X, y=None, *, target, costs=None):
        """Select from the rows of ``X`` toward the rows of ``target``.

        ``costs`` defaults to one unit per row, turning the budget into a
        cardinality limit.
        """
        X = check_array(X, dtype=np.float64)
        target = check_array(target, dtype=np.float64)
        if target.shape[1] != X.shape[1]:
            raise ValueError(f"target has {target.shape[1]} features, X has {X.shape[1]}")
        kind = SmiKind.parse(self.function)
        self.n_features_in_ = X.shape[1]
        costs = np.ones(X.shape[0]) if costs is None else np.asarray(costs, dtype=np.float64)
        constraint = BudgetConstraint(self.budget_s, costs)
        self.kernel_ = build_kernel(X, target, self.kernel_config(),
                                    need_ground_ground=kind is SmiKind.LOGDMI)
        if self.oracle:
            self.selection_ = brute_force_select(kind, self.kernel_, constraint, self.eps)
        elif self.lazy:
            self.selection_ = lazy_greedy_select(kind, self.kernel_, constraint,
                                                 self.greedy_config())
        else:
            self.selection_ = greedy_select(kind, self.kernel_, constraint, self.greedy_config())
        self.selected_indices_ = np.asarray(self.selection_.selected, dtype=np.intp)
        return self

    def get_support(self, indices=False):
        check_is_fitted(self, "selection_")
        if indices:
            return self.selected_indices_.copy()
        mask = np.zeros(self.kernel_.n_ground, dtype=bool)
        mask[self.selected_indices_] = True
        return mask

    def score(self, X=None, y=None):
        """Objective value of the fitted selection."""
        check_is_fitted(self, "selection_")
        return evaluate(self.function, self.selected_indices_, self.kernel_, self.eps)
