"""Scikit-learn compatible wrappers around the cloud diagnostics.

Each estimator takes a point array ``X`` of shape (n, d), dense or CSR, and
an optional ``sample_weight`` (uniform probability weights by default).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cloud import WeightedCloud
from .grassmann import Subspace
from .rigidity import box_dimension, dichotomy_report, fit_generalized_sphere, local_tangent_estimate

__all__ = ["BoxCountingDimension", "GeneralizedSphereFit", "TangentPlaneEstimator", "RigidityAnalyzer"]


def _to_cloud(X, sample_weight=None, accept_sparse=True) -> WeightedCloud:
    X = check_array(X, accept_sparse="csr" if accept_sparse else False, dtype=float)
    if sample_weight is None:
        return WeightedCloud.uniform(X)
    w = np.asarray(sample_weight, dtype=float).ravel()
    return WeightedCloud(X, w, {})


class BoxCountingDimension(BaseEstimator):
    """Box-counting dimension of the support of X.

    Attributes after fit: ``dimension_``, ``stderr_``, ``scales_``,
    ``counts_`` and ``used_`` (which scales entered the regression).
    """

    def __init__(self, scales=None, n_jitter: int = 3):
        self.scales = scales
        self.n_jitter = n_jitter

    def fit(self, X, y=None, sample_weight=None):
        cloud = _to_cloud(X, sample_weight)
        res = box_dimension(cloud, self.scales, self.n_jitter)
        self.dimension_ = res.estimate
        self.stderr_ = res.stderr
        self.scales_ = np.asarray(res.scales)
        self.counts_ = np.asarray(res.counts)
        self.used_ = np.asarray(res.used, dtype=bool)
        self.n_features_in_ = cloud.dim
        return self


class GeneralizedSphereFit(TransformerMixin, BaseEstimator):
    """Least-squares generalized k-sphere (round sphere or affine plane).

    ``transform`` returns the defining forms ⟨ι(x), w_j⟩_Q, which vanish on
    the fitted set; ``score_samples`` returns minus their Euclidean norm.
    """

    def __init__(self, k: int = 1):
        self.k = k

    def fit(self, X, y=None, sample_weight=None):
        cloud = _to_cloud(X, sample_weight, accept_sparse=False)
        fit = fit_generalized_sphere(cloud, self.k)
        self.sphere_ = fit.sphere
        self.residual_ = fit.residual
        self.radius_ = fit.radius
        self.center_ = fit.center
        self.is_plane_ = fit.sphere.is_plane
        self.n_features_in_ = cloud.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "sphere_")
        X = check_array(X, dtype=float)
        return self.sphere_.forms(X)

    def score_samples(self, X):
        return -np.linalg.norm(self.transform(X), axis=1)


class TangentPlaneEstimator(BaseEstimator):
    """Local tangent k-plane at ``point`` from the mass in B(point, radius).

    After fit, ``plane_`` is a :class:`~rigidlab.grassmann.Subspace` (None if
    fewer than 20 samples fall in the ball) and ``leak_ratio_`` is the mass
    outside the eps-cone divided by radius**k.
    """

    def __init__(self, point=None, k: int = 1, radius: float = 0.1, eps: float = 0.1):
        self.point = point
        self.k = k
        self.radius = radius
        self.eps = eps

    def fit(self, X, y=None, sample_weight=None):
        cloud = _to_cloud(X, sample_weight, accept_sparse=False)
        p = np.zeros(cloud.dim) if self.point is None else self.point
        est = local_tangent_estimate(cloud, p, self.k, self.radius, self.eps)
        self.plane_: Subspace | None = est.plane
        self.leak_ratio_ = est.leak_ratio
        self.n_points_ = est.n_points
        self.conclusive_ = est.conclusive
        self.n_features_in_ = cloud.dim
        return self


class RigidityAnalyzer(BaseEstimator):
    """SPHERE / FRACTAL / INCONCLUSIVE verdict for a sampled limit set."""

    def __init__(self, k: int = 1, sphere_tol: float | None = None, scales=None):
        self.k = k
        self.sphere_tol = sphere_tol
        self.scales = scales

    def fit(self, X, y=None, sample_weight=None):
        cloud = _to_cloud(X, sample_weight)
        self.report_ = dichotomy_report(cloud, self.k, sphere_tol=self.sphere_tol, scales=self.scales, seed=None)
        self.verdict_ = self.report_.verdict
        self.dimension_ = self.report_.dim_estimate
        self.sphere_residual_ = self.report_.sphere_residual
        self.n_features_in_ = cloud.dim
        return self
