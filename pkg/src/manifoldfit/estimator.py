"""Scikit-learn style front end: fit on a point cloud, read the verdict."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

from .pipeline import run_decision
from .refinement import RefinementConfig

__all__ = ["ManifoldExtensionChecker"]


def _validate_points(X) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    return X


class ManifoldExtensionChecker(BaseEstimator):
    """Decides whether a sampled compact set fits inside a d-dimensional
    C^m manifold.

    Parameters mirror :class:`RefinementConfig`; after ``fit`` the verdict
    and full report are available as attributes.

    Attributes
    ----------
    verdict_ : str
        "YES", "NO", or "INCONCLUSIVE".
    caveat_ : str
        Qualification of the verdict; YES for d >= 2 is always
        necessary-conditions-only.
    report_ : DecisionReport
        The full evidence trail.
    """

    def __init__(self, d=1, m=1, kbar=2, scales=None, qmin_threshold=1e-4,
                 qmin_slope=8.0, cluster_budget=8, max_generations=6, seed=0):
        self.d = d
        self.m = m
        self.kbar = kbar
        self.scales = scales
        self.qmin_threshold = qmin_threshold
        self.qmin_slope = qmin_slope
        self.cluster_budget = cluster_budget
        self.max_generations = max_generations
        self.seed = seed

    def _config(self) -> RefinementConfig:
        return RefinementConfig(
            kbar=self.kbar,
            scales=tuple(self.scales) if self.scales is not None else None,
            qmin_threshold=self.qmin_threshold,
            qmin_slope=self.qmin_slope,
            cluster_budget=self.cluster_budget,
            max_generations=self.max_generations,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        X = _validate_points(X)
        self.n_features_in_ = X.shape[1]
        report = run_decision(X, int(self.d), int(self.m), self._config())
        self.report_ = report
        self.verdict_ = report.verdict
        self.caveat_ = report.caveat
        self.mechanism_ = report.mechanism
        return self

    def decision(self) -> str:
        if not hasattr(self, "report_"):
            raise RuntimeError("call fit before reading the decision")
        return self.report_.verdict_line()
