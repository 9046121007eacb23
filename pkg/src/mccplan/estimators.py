"""Estimator-style wrapper around the fitting routines.

Follows the scikit-learn protocol (get_params/set_params, fit returning
self, trailing-underscore fitted attributes) so the model drops into
standard selection and pipeline tooling. X is a TrajectoryDataset rather
than a feature matrix; interval data does not flatten into rows without
losing the at-risk bookkeeping.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dataset import TrajectoryDataset
from .errors import ValidationError
from .learning import RegularizationSpec, fit_mle, log_likelihood, structure_path
from .model import FctbnModel, state_rate_table


def check_dataset(X) -> TrajectoryDataset:
    if not isinstance(X, TrajectoryDataset):
        raise ValidationError(
            f"expected a TrajectoryDataset, got {type(X).__name__}", ["X"]
        )
    if len(X) == 0:
        raise ValidationError("dataset has no records", ["X"])
    return X


def check_fitted(estimator):
    if getattr(estimator, "model_", None) is None:
        raise NotFittedError("call fit before using this estimator")


class FctbnEstimator(BaseEstimator):
    """Fits conditional intensity regressions; optionally selects structure.

    With ``lambda_grid`` set, fit runs the regularization path and keeps the
    best-scoring pruned model; otherwise a single fit at ``lam``.
    """

    def __init__(self, lam: float = 0.0, lambda_grid=None, prune_epsilon: float = 1e-3,
                 pilot_ridge: float = 1e-4, norm_floor: float = 1e-6,
                 max_iter: int = 200, tol: float = 1e-8):
        self.lam = lam
        self.lambda_grid = lambda_grid
        self.prune_epsilon = prune_epsilon
        self.pilot_ridge = pilot_ridge
        self.norm_floor = norm_floor
        self.max_iter = max_iter
        self.tol = tol

    def _reg(self) -> RegularizationSpec:
        return RegularizationSpec(
            lam=self.lam, prune_epsilon=self.prune_epsilon,
            pilot_ridge=self.pilot_ridge, norm_floor=self.norm_floor,
        )

    def fit(self, X, y=None):
        dataset = check_dataset(X)
        if self.lambda_grid is not None:
            self.path_ = structure_path(
                dataset, self.lambda_grid, self._reg(),
                max_iter=self.max_iter, tol=self.tol,
            )
            self.model_ = self.path_.best.model
            self.report_ = self.path_.best.report
        else:
            self.path_ = None
            self.model_, self.report_ = fit_mle(
                dataset, self._reg(), max_iter=self.max_iter, tol=self.tol
            )
        self.edges_ = self.model_.edges()
        return self

    def transform(self, X) -> np.ndarray:
        """Per-record acquisition intensities, zero where already acquired."""
        check_fitted(self)
        dataset = check_dataset(X)
        out = np.zeros((len(dataset), self.model_.n_conditions))
        cache: dict[tuple, np.ndarray] = {}
        for i, rec in enumerate(dataset.records):
            key = tuple(rec.z.values.tolist())
            table = cache.get(key)
            if table is None:
                table = cache[key] = state_rate_table(self.model_, rec.z)
            out[i] = table[rec.parent_config]
        return out

    def predict(self, X) -> np.ndarray:
        """Most likely next condition per record; empty string when none is
        at risk."""
        check_fitted(self)
        dataset = check_dataset(X)
        rates = self.transform(dataset)
        codes = np.array(self.model_.condition_set.codes)
        out = np.empty(len(dataset), dtype=object)
        for i, row in enumerate(rates):
            out[i] = codes[int(row.argmax())] if row.sum() > 0 else ""
        return out

    def score(self, X, y=None) -> float:
        """Mean per-record log-likelihood; higher is better."""
        check_fitted(self)
        dataset = check_dataset(X)
        return log_likelihood(self.model_, dataset) / len(dataset)
