"""Measure-geometric diagnostics for sampled limit sets.

Functions here operate on :class:`~rigidlab.cloud.WeightedCloud` objects:
box-counting dimension, upper density, generalized-sphere fitting in the
Lorentz model, local tangent planes, projected k-content, the change of
variables identity for projections, and the sphere-or-fractal verdict.
Scikit-learn style estimators wrapping the main diagnostics live in
:mod:`rigidlab.estimators`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .cloud import WeightedCloud
from .errors import InjectivityError, ParameterError, RankDeficiencyError, ResourceError
from .grassmann import ConeSpec, Subspace, in_projective_cone, metric_det
from .mobius import MobiusMap, iota_many, lorentz_gram, make_similarity

__all__ = [
    "BoxDimensionResult",
    "GeneralizedSphere",
    "SphereFit",
    "TangentEstimate",
    "PseudorectResult",
    "RigidityReport",
    "box_dimension",
    "upper_density",
    "fit_generalized_sphere",
    "local_tangent_estimate",
    "projected_measure_estimate",
    "pseudorect_identity_check",
    "dichotomy_report",
    "cloud_resolution",
    "ball_mass_ratios",
]

MAX_DENSE_DIM = 256
SATURATION_FRACTION = 0.1
MIN_COARSE_COUNT = 10
MIN_TANGENT_POINTS = 20


def _as_cloud(cloud) -> WeightedCloud:
    if isinstance(cloud, WeightedCloud):
        return cloud
    X = cloud if sp.issparse(cloud) else np.atleast_2d(np.asarray(cloud, dtype=float))
    if X.shape[0] == 0:
        raise ParameterError("empty cloud")
    return WeightedCloud.uniform(X)


def _dense_points(cloud: WeightedCloud) -> np.ndarray:
    if cloud.is_sparse:
        if cloud.dim > MAX_DENSE_DIM:
            raise ResourceError(f"this diagnostic needs dense points; d={cloud.dim} is too large")
        return cloud.dense()
    return cloud.points


def _distinct_rows(X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.shape[0] == 0:
        return X
    rows = X.view(np.dtype((np.void, X.dtype.itemsize * X.shape[1]))).ravel()
    _, first = np.unique(rows, return_index=True)
    return X[np.sort(first)]


def _count_distinct_int_rows(idx: np.ndarray) -> int:
    idx = idx - idx.min(axis=0)
    span = idx.max(axis=0).astype(float) + 1.0
    if np.prod(span) < 2.0**62:
        strides = np.concatenate(([1], np.cumprod(span[:-1].astype(np.int64))))
        return int(np.unique(idx @ strides).size)
    return int(np.unique(idx, axis=0).shape[0])


# -- box counting -----------------------------------------------------------

def _count_cells(X: np.ndarray, origin: np.ndarray, eps: float) -> int:
    return _count_distinct_int_rows(np.floor((X - origin) / eps).astype(np.int64))


@dataclass(frozen=True)
class BoxDimensionResult:
    estimate: float
    stderr: float
    scales: list
    counts: list
    used: list

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "scales": self.scales,
                "counts": self.counts, "used": self.used}


def default_scales(X: np.ndarray, n_distinct: int) -> np.ndarray:
    """Dyadic scales from an eighth of the bounding-box extent down to the
    point where a grid could hold every distinct point ten times over."""
    extent = float(np.max(X.max(axis=0) - X.min(axis=0)))
    if extent == 0.0:
        return np.array([])
    finest = max(n_distinct, 2)
    j_max = max(3 + int(math.ceil(math.log2(finest))) + 2, 10)
    return extent * 2.0 ** -np.arange(3, j_max + 1)


def box_dimension(cloud, scales=None, n_jitter: int = 3) -> BoxDimensionResult:
    """Slope of log N(eps) against log(1/eps) on dyadic grids.

    Grids are anchored at the bounding-box corner and shifted by
    j/n_jitter of a cell for j < n_jitter; counts are averaged in log space.
    Scales where the count exceeds a tenth of the distinct points are
    treated as saturated, and scales with fewer than 10 occupied cells as
    too coarse; both are left out of the fit.
    """
    cloud = _as_cloud(cloud)
    X = _dense_points(cloud)
    Xd = _distinct_rows(X)
    n_distinct = Xd.shape[0]
    if n_distinct == 1:
        return BoxDimensionResult(0.0, 0.0, [], [], [])
    scales = default_scales(Xd, n_distinct) if scales is None else np.sort(np.asarray(scales, dtype=float))[::-1]
    if np.any(scales <= 0):
        raise ParameterError("scales must be positive")
    if len(scales) < 4 or scales[0] / scales[-1] < 100.0 * (1 - 1e-9):
        raise ParameterError("need at least 4 scales spanning two decades")
    lo = Xd.min(axis=0)
    counts = []
    for eps in scales:
        c = [_count_cells(Xd, lo - eps * (j / n_jitter), eps) for j in range(n_jitter)]
        counts.append(float(np.exp(np.mean(np.log(c)))))
    counts = np.array(counts)
    used = counts <= SATURATION_FRACTION * n_distinct
    used &= counts >= MIN_COARSE_COUNT
    if used.sum() < 4:
        raise ParameterError("fewer than 4 unsaturated scales; provide more points or coarser scales")
    x = np.log(1.0 / scales[used])
    y = np.log(counts[used])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    stderr = math.sqrt(float(resid @ resid) / dof / float(np.sum((x - x.mean()) ** 2)))
    return BoxDimensionResult(float(coef[0]), stderr, scales.tolist(), counts.tolist(), used.tolist())


# -- densities --------------------------------------------------------------

def _sq_dist_to(cloud: WeightedCloud, x: np.ndarray) -> np.ndarray:
    X = cloud.points
    if sp.issparse(X):
        sq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
        return np.maximum(sq + x @ x - 2.0 * np.asarray(X @ x).ravel(), 0.0)
    diff = X - x
    return np.einsum("ij,ij->i", diff, diff)


def upper_density(cloud, x, delta: float, radii) -> float:
    """max over radii of μ(B(x, r)) / r^δ for the empirical measure (closed balls)."""
    cloud = _as_cloud(cloud)
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise ParameterError("radii must be positive")
    x = np.asarray(x, dtype=float).ravel()
    d2 = _sq_dist_to(cloud, x)
    order = np.argsort(d2, kind="stable")
    cum = np.cumsum(cloud.weights[order])
    k = np.searchsorted(d2[order], radii**2, side="right")
    mass = np.where(k > 0, cum[np.maximum(k - 1, 0)], 0.0)
    return float(np.max(mass / radii**delta))


def ball_mass_ratios(cloud: WeightedCloud, centers, radii, batch: int = 256) -> np.ndarray:
    """μ(B(c_i, r_i)) / r_i for many (center, radius) pairs; centers may be sparse."""
    X = cloud.points
    radii = np.asarray(radii, dtype=float)
    sqX = (np.asarray(X.multiply(X).sum(axis=1)).ravel() if sp.issparse(X)
           else np.einsum("ij,ij->i", X, X))
    out = np.empty(len(radii))
    for s in range(0, len(radii), batch):
        C = centers[s:s + batch]
        if sp.issparse(C):
            sqC = np.asarray(C.multiply(C).sum(axis=1)).ravel()
            G = (X @ C.T)
            G = G.toarray() if sp.issparse(G) else np.asarray(G)
        else:
            C = np.asarray(C, dtype=float)
            sqC = np.einsum("ij,ij->i", C, C)
            G = np.asarray(X @ C.T)
        D2 = sqX[:, None] + sqC[None, :] - 2.0 * G
        r = radii[s:s + batch]
        inside = D2 <= (r**2)[None, :] * (1 + 1e-12)
        out[s:s + batch] = (cloud.weights @ inside) / r
    return out


# -- generalized spheres ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class GeneralizedSphere:
    """Zero set of x ↦ ⟨ι(x), w_j⟩_Q for Q-orthonormal normals w_j.

    ``normals`` has shape (d − k, d + 2).
    """

    normals: np.ndarray

    @property
    def dim(self) -> int:
        return self.normals.shape[1] - 2

    @property
    def k(self) -> int:
        return self.dim - self.normals.shape[0]

    def forms(self, X) -> np.ndarray:
        """⟨ι(x), w_j⟩_Q for each row of X; shape (n, d − k)."""
        J = lorentz_gram(self.dim)
        return iota_many(X) @ (J @ self.normals.T)

    def q_gram(self) -> np.ndarray:
        J = lorentz_gram(self.dim)
        return self.normals @ J @ self.normals.T

    def _e_inf_projection(self) -> np.ndarray:
        # ⟨e_∞, w⟩_Q = w_0
        return self.normals[:, 0]

    @property
    def is_plane(self) -> bool:
        return bool(np.linalg.norm(self._e_inf_projection()) <= 1e-12 * max(1.0, np.abs(self.normals).max()))

    @property
    def radius(self) -> float:
        """1/|proj of ∞ onto the normal space|_Q; inf for planes."""
        q = float(np.sum(self._e_inf_projection() ** 2))
        return math.inf if self.is_plane else 1.0 / math.sqrt(q)

    @property
    def center(self):
        """Image of ∞ under the composed reflections in the normals; None for planes."""
        if self.is_plane:
            return None
        d = self.dim
        J = lorentz_gram(d)
        v = np.zeros(d + 2)
        v[1] = 1.0
        for w in self.normals:
            v = v - 2.0 * (w @ J @ v) * w
        return v[2:] / v[0]

    def transform(self, g: MobiusMap) -> "GeneralizedSphere":
        """Sphere g(S): normals move by the Lorentz matrix of g."""
        return GeneralizedSphere((g.lorentz @ self.normals.T).T)


@dataclass(frozen=True)
class SphereFit:
    sphere: GeneralizedSphere
    residual: float
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def center(self):
        return self.sphere.center

    @property
    def radius(self) -> float:
        return self.sphere.radius


def fit_generalized_sphere(cloud, k: int) -> SphereFit:
    """Least-squares generalized k-sphere through a weighted cloud.

    Points are first normalized by a similarity (weighted centroid, RMS
    radius). The (d − k) smallest eigenvectors n_j of the weighted second
    moment of ι(x) give normals w_j = J n_j, which are Q-orthonormalized and
    mapped back. The residual is the weighted RMS of ⟨ι(x), w_j⟩_Q in the
    original units, which approximates the distance to the fitted set.
    """
    cloud = _as_cloud(cloud)
    X = _dense_points(cloud)
    n, d = X.shape
    if not 0 <= k < d:
        raise ParameterError(f"k must satisfy 0 <= k < d={d}")
    w = cloud.weights
    if w.sum() <= 0:
        raise ParameterError("cloud has zero mass")
    if _distinct_rows(X).shape[0] < k + 2:
        raise RankDeficiencyError(f"a {k}-sphere needs at least {k + 2} distinct points")
    m = w @ X / w.sum()
    s = math.sqrt(float(w @ np.sum((X - m) ** 2, axis=1) / w.sum()))
    if s == 0:
        raise RankDeficiencyError("all points coincide")
    Y = (X - m) / s
    L = iota_many(Y)
    A = (L * w[:, None]).T @ L / w.sum()
    vals, vecs = np.linalg.eigh((A + A.T) / 2)
    J = lorentz_gram(d)
    N = J @ vecs[:, : d - k]
    G = N.T @ J @ N
    try:
        C = np.linalg.cholesky((G + G.T) / 2)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(
            "the near-null space of the moment form is not Q-positive; "
            "the points do not determine a real generalized sphere") from None
    N = N @ np.linalg.inv(C).T
    # back to original coordinates: x = s·y + m
    T = make_similarity(s, None, m)
    sphere = GeneralizedSphere((T.lorentz @ N).T)
    F = sphere.forms(X)
    residual = math.sqrt(float(w @ np.sum(F**2, axis=1) / w.sum()))
    return SphereFit(sphere, residual, vals)


# -- tangent planes ---------------------------------------------------------

@dataclass(frozen=True)
class TangentEstimate:
    plane: Subspace | None
    leak_ratio: float
    n_points: int
    conclusive: bool


def local_tangent_estimate(cloud, p, k: int, radius: float, eps: float) -> TangentEstimate:
    """Weighted PCA of B(p, r) about p and the mass leaking out of the eps-cone.

    leak_ratio = μ(B(p, r) minus the cone p + N(L̂, eps)) / r^k.
    """
    cloud = _as_cloud(cloud)
    X = _dense_points(cloud)
    p = np.asarray(p, dtype=float).ravel()
    if radius <= 0 or not 0 < eps < 1:
        raise ParameterError("need radius > 0 and 0 < eps < 1")
    D = X - p
    inside = np.einsum("ij,ij->i", D, D) <= radius**2
    cnt = int(inside.sum())
    if cnt < MIN_TANGENT_POINTS:
        return TangentEstimate(None, math.nan, cnt, False)
    Di, wi = D[inside], cloud.weights[inside]
    C = (Di * wi[:, None]).T @ Di
    vals, vecs = np.linalg.eigh((C + C.T) / 2)
    plane = Subspace(vecs[:, ::-1][:, :k])
    cone = ConeSpec(p, plane, eps)
    in_cone = in_projective_cone(X[inside], cone)
    leak = float(wi[~in_cone].sum()) / radius**k
    return TangentEstimate(plane, leak, cnt, True)


# -- projections ------------------------------------------------------------

def cloud_resolution(cloud: WeightedCloud, max_points: int = 20000, seed: int = 0) -> float:
    """Sampling spacing: the 0.99-quantile of nearest-neighbour distances.

    A ``resolution`` entry in the cloud metadata takes precedence.
    """
    if "resolution" in cloud.meta:
        return float(cloud.meta["resolution"])
    X = cloud.points
    rng = np.random.default_rng(seed)
    if X.shape[0] > max_points:
        X = X[np.sort(rng.choice(X.shape[0], max_points, replace=False))]
    if sp.issparse(X):
        X = X.toarray() if X.shape[1] <= MAX_DENSE_DIM else None
        if X is None:
            raise ResourceError("resolution of a high-dimensional sparse cloud must be given in its metadata")
    X = _distinct_rows(X)
    if X.shape[0] < 2:
        return 0.0
    dist, _ = cKDTree(X).query(X, k=2)
    return float(np.quantile(dist[:, 1], 0.99))


def _ball_volume(m: int) -> float:
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def _project(cloud: WeightedCloud, V: Subspace) -> np.ndarray:
    X = cloud.points
    return np.asarray(X @ V.frame)


def _grid_content(Y: np.ndarray, eps: float, k: int, n_jitter: int = 3) -> float:
    lo = Y.min(axis=0)
    c = [_count_cells(Y, lo - eps * (j / n_jitter), eps) for j in range(n_jitter)]
    return float(np.mean(c)) * eps**k


def _minkowski_content(Y: np.ndarray, r: float, k: int, n_samples: int, rng) -> float:
    """vol(Y_r) / (ω_{m−k} r^{m−k}), with the volume of the union of r-balls
    estimated by sampling a ball uniformly and weighting by 1/coverage."""
    Y = _distinct_rows(Y)
    n, m = Y.shape
    centers = Y[rng.integers(0, n, n_samples)]
    u = rng.standard_normal((n_samples, m))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    P = centers + u * (r * rng.random(n_samples) ** (1.0 / m))[:, None]
    cover = cKDTree(Y).query_ball_point(P, r * (1 + 1e-12), return_length=True)
    volume = n * _ball_volume(m) * r**m * float(np.mean(1.0 / np.maximum(cover, 1)))
    return volume / (_ball_volume(m - k) * r ** (m - k))


def projected_measure_estimate(cloud, V: Subspace, k: int, eps: float | None = None,
                               scale_factor: float = 4.0, n_samples: int = 20000, seed: int = 0) -> float:
    """Estimated k-content of the projection of the cloud onto V.

    The scale eps is ``scale_factor`` times the cloud resolution unless
    given. When dim V = k this is the box count at side eps times eps^k.
    When dim V > k grid counts depend on how the set sits in the grid and
    miss cells it only clips, so the Minkowski content at radius eps is
    used instead, from ``n_samples`` Monte-Carlo points.
    """
    cloud = _as_cloud(cloud)
    m = V.dim
    if m < k:
        raise ParameterError("dim V must be at least k")
    if k < 0:
        raise ParameterError("k must be nonnegative")
    Y = _project(cloud, V)
    spread = np.max(Y.max(axis=0) - Y.min(axis=0)) if Y.size else 0.0
    if spread <= 1e-12 * max(1.0, float(np.abs(Y).max(initial=0.0))):
        return 0.0
    if eps is None:
        eps = scale_factor * cloud_resolution(cloud)
    if not eps > 0:
        raise ParameterError("grid scale must be positive")
    if m == k:
        return _grid_content(Y, eps, k)
    return _minkowski_content(Y, eps, k, n_samples, np.random.default_rng(seed))


@dataclass(frozen=True)
class PseudorectResult:
    lhs: float
    rhs: float
    rel_gap: float
    collision_fraction: float
    eps: float

    def to_json(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "rel_gap": self.rel_gap,
                "collision_fraction": self.collision_fraction, "eps": self.eps}


def _tangent_dets(cloud: WeightedCloud, tangent, V: Subspace) -> np.ndarray:
    if isinstance(tangent, Subspace):
        return np.full(cloud.n_points, metric_det(V, tangent))
    if callable(tangent):
        tangent = [tangent(i) for i in range(cloud.n_points)]
    tangent = list(tangent)
    if len(tangent) != cloud.n_points:
        raise ParameterError("need one tangent plane per point")
    return np.array([metric_det(V, T) for T in tangent])


def pseudorect_identity_check(cloud, tangent, V: Subspace, k: int | None = None, scale_factor: float = 4.0,
                              overlap_tol: float = 0.1, sheet_limit: float = 1.5, eps0: float = 1e-12,
                              seed: int = 0) -> PseudorectResult:
    """Compare the projected k-content of the cloud with ∫ det(π_V|T(x)) dμ(x).

    Only injective projections are handled, where the multiplicity count is
    0 or 1. Injectivity is certified from the samples: around each projected
    point the mass in an eps-ball, times the local metric determinant and
    divided by the volume of a k-ball of radius eps, estimates how many
    sheets of the set cover that point. A point with estimate above
    ``sheet_limit`` collides; the check refuses when colliding mass exceeds
    ``overlap_tol`` of the total. Neighbours across a jump of a discontinuous
    but injective parametrization do not raise the estimate.
    """
    cloud = _as_cloud(cloud)
    if k is None:
        k = tangent.dim if isinstance(tangent, Subspace) else None
        if k is None:
            raise ParameterError("k is required for a per-point tangent field")
    dets = _tangent_dets(cloud, tangent, V)
    rhs = float(math.fsum(cloud.weights * dets))
    res = cloud_resolution(cloud)
    eps = scale_factor * res
    Y = _project(cloud, V)
    collided = np.zeros(cloud.n_points, dtype=bool)
    first_pair = None
    if eps > 0:
        pairs = cKDTree(Y).query_pairs(eps, output_type="ndarray")
        w = cloud.weights
        local = w.copy()
        if len(pairs):
            np.add.at(local, pairs[:, 0], w[pairs[:, 1]])
            np.add.at(local, pairs[:, 1], w[pairs[:, 0]])
        ball = _ball_volume(k) * eps**k
        sheets = local * dets / ball
        collided = sheets > sheet_limit
        if collided.any() and len(pairs):
            X = cloud.points
            hit = pairs[collided[pairs[:, 0]] | collided[pairs[:, 1]]]
            diff = X[hit[:, 0]] - X[hit[:, 1]]
            orig = (np.sqrt(np.asarray(diff.multiply(diff).sum(axis=1)).ravel()) if sp.issparse(diff)
                    else np.linalg.norm(diff, axis=1))
            j = int(np.argmax(orig))
            first_pair = (int(hit[j, 0]), int(hit[j, 1]))
    frac = float(cloud.weights[collided].sum() / cloud.total_mass)
    if frac > overlap_tol:
        raise InjectivityError(f"projection is not injective: {frac:.3f} of the mass collides", first_pair)
    lhs = projected_measure_estimate(cloud, V, k, eps=eps, seed=seed)
    rel = abs(lhs - rhs) / max(rhs, eps0)
    return PseudorectResult(lhs, rhs, rel, frac, eps)


# -- verdict ----------------------------------------------------------------

@dataclass(frozen=True)
class RigidityReport:
    k: int
    dim_estimate: float
    dim_stderr: float
    sphere_residual: float
    verdict: str
    scales: list
    seed: int | None
    sphere_tol: float
    counts: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"k": self.k, "dim_estimate": self.dim_estimate, "dim_stderr": self.dim_stderr,
                "sphere_residual": self.sphere_residual, "verdict": self.verdict, "scales": self.scales,
                "seed": self.seed, "sphere_tol": self.sphere_tol, "counts": self.counts}


def dichotomy_report(source, k: int, sphere_tol: float | None = None, n_points: int = 100_000,
                     depth: int | None = None, seed: int = 0, scales=None, threads: int = 1) -> RigidityReport:
    """SPHERE if a generalized k-sphere fits within ``sphere_tol`` (default
    1e-6 times the diameter), FRACTAL if the box dimension exceeds k by two
    standard errors, INCONCLUSIVE otherwise. ``source`` is a cloud or a CIFS,
    which is then sampled with the given seed."""
    from .ifs import CIFS, sample_limit_set

    if k < 1:
        raise ParameterError("k must be at least 1")
    if isinstance(source, CIFS):
        if depth is None:
            rmax = float(np.max(source.ratios))
            depth = max(1, int(math.ceil(math.log(1e-12) / math.log(rmax))))
        cloud = sample_limit_set(source, n_points, depth, rng_seed=seed, threads=threads)
    else:
        cloud = _as_cloud(source)
    X = _dense_points(cloud)
    diam = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))
    if sphere_tol is None:
        sphere_tol = 1e-6 * diam
    try:
        residual = fit_generalized_sphere(cloud, k).residual if k < cloud.dim else 0.0
    except RankDeficiencyError:
        residual = math.inf
    try:
        bd = box_dimension(cloud, scales)
        est, se, used_scales, counts = bd.estimate, bd.stderr, bd.scales, bd.counts
    except ParameterError:
        est, se, used_scales, counts = math.nan, math.nan, [], []
    if residual <= sphere_tol:
        verdict = "SPHERE"
    elif np.isfinite(est) and est - 2 * se > k:
        verdict = "FRACTAL"
    else:
        verdict = "INCONCLUSIVE"
    return RigidityReport(int(k), float(est), float(se), float(residual), verdict, used_scales,
                          seed, float(sphere_tol), counts)
