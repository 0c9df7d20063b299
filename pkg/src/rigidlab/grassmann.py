"""Linear subspaces of R^d: projections, metric determinants, subspace
distances, projective cones and approximate intersections.

Subspaces are stored as orthonormal frames (d x k matrices). The zero
subspace is a valid value with an empty frame and behaves accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "Subspace",
    "ConeSpec",
    "orthonormal_frame",
    "project_onto",
    "metric_det",
    "dist_directed",
    "dist_grassmann",
    "epsilon_intersection",
    "in_projective_cone",
    "random_subspace",
]

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Subspace:
    """Span of the orthonormal columns of ``frame`` (shape d x k)."""

    frame: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.frame, dtype=float)
        if F.ndim != 2:
            raise ParameterError("frame must be a d x k matrix")
        F = F.copy()
        F.setflags(write=False)
        object.__setattr__(self, "frame", F)

    @property
    def ambient_dim(self) -> int:
        return self.frame.shape[0]

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    def projector(self) -> np.ndarray:
        return self.frame @ self.frame.T

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        if self.frame.shape != other.frame.shape:
            return False
        return bool(np.max(np.abs(self.projector() - other.projector()), initial=0.0) <= 1e-10)

    __hash__ = None

    def to_json(self) -> list:
        return self.frame.T.tolist()

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(np.zeros((d, 0)))

    @classmethod
    def coordinate(cls, d: int, axes) -> "Subspace":
        """Span of the standard basis vectors listed in ``axes``."""
        axes = list(axes)
        F = np.zeros((d, len(axes)))
        F[axes, np.arange(len(axes))] = 1.0
        return cls(F)


def orthonormal_frame(vectors, d: int | None = None) -> Subspace:
    """Orthonormal basis of the span of ``vectors`` (an iterable of d-vectors).

    Directions whose singular value is below 1e-10 of the largest are dropped,
    so dependent input yields the lower-dimensional span.
    """
    vectors = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not vectors:
        if d is None:
            raise ParameterError("ambient dimension required for an empty spanning set")
        return Subspace.zero(d)
    A = np.column_stack(vectors)
    if d is not None and A.shape[0] != d:
        raise ParameterError(f"vectors have dimension {A.shape[0]}, expected {d}")
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return Subspace.zero(A.shape[0])
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    return Subspace(U[:, :rank])


def project_onto(V: Subspace, x) -> np.ndarray:
    """Orthogonal projection π_V(x); works row-wise on a 2-d array."""
    x = np.asarray(x, dtype=float)
    F = V.frame
    return (x @ F) @ F.T


def metric_det(V: Subspace, W: Subspace) -> float:
    """Metric determinant of π_V restricted to W: sqrt(det(AᵀA)), A = F_Vᵀ F_W.

    This is the k-volume scaling of the projection onto V of a k-dimensional
    piece of W (k = dim W). Zero when dim V < dim W.
    """
    _check_same_ambient(V, W)
    k = W.dim
    if k == 0:
        return 1.0
    if V.dim < k:
        return 0.0
    A = V.frame.T @ W.frame
    # product of singular values avoids squaring small determinants
    s = np.linalg.svd(A, compute_uv=False)
    return float(min(np.prod(s[:k]), 1.0))


def dist_directed(V: Subspace, W: Subspace) -> float:
    """sup over unit v ∈ V of dist(v, W); zero exactly when V ⊆ W."""
    _check_same_ambient(V, W)
    if V.dim == 0:
        return 0.0
    R = V.frame - W.frame @ (W.frame.T @ V.frame)
    return float(min(np.linalg.norm(R, 2), 1.0))


def dist_grassmann(V: Subspace, W: Subspace) -> float:
    """Symmetric subspace distance max(dist_directed(V,W), dist_directed(W,V)).

    On subspaces of equal dimension this is the sine of the largest principal
    angle. Subspaces of different dimension are at distance 1.
    """
    return max(dist_directed(V, W), dist_directed(W, V))


def epsilon_intersection(V1: Subspace, V2: Subspace, eps: float) -> Subspace:
    """Largest subspace of V1 whose unit vectors lie within ``eps`` of V2.

    The form R(v) = |v − π_{V2} v|² is diagonalized on V1 and the eigenvectors
    with eigenvalue ≤ eps² are kept (ties included). Every w then satisfies
    dist(w, V) ≤ (3/eps)·max(dist(w, V1), dist(w, V2)).
    """
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    _check_same_ambient(V1, V2)
    if V1.dim == 0:
        return Subspace.zero(V1.ambient_dim)
    A = V2.frame.T @ V1.frame
    G = np.eye(V1.dim) - A.T @ A
    vals, vecs = np.linalg.eigh((G + G.T) / 2)
    keep = vals <= eps * eps
    return Subspace(V1.frame @ vecs[:, keep])


@dataclass(frozen=True)
class ConeSpec:
    """Projective eps-thickening of ``direction_space`` placed at ``apex``."""

    apex: np.ndarray
    direction_space: Subspace
    aperture: float

    def __post_init__(self):
        if not 0 < self.aperture < 1:
            raise ParameterError("cone aperture must lie in (0, 1)")
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float).ravel())


def in_projective_cone(x, cone: ConeSpec):
    """Test dist(x − p, L₀) ≤ eps·|x − p|; vectorized over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    v = x - cone.apex
    resid = v - project_onto(cone.direction_space, v)
    lhs = np.linalg.norm(resid, axis=-1)
    rhs = cone.aperture * np.linalg.norm(v, axis=-1)
    out = lhs <= rhs
    return bool(out) if np.ndim(out) == 0 else out


def random_subspace(d: int, k: int, rng: np.random.Generator) -> Subspace:
    """Haar-distributed k-dimensional subspace of R^d."""
    if k == 0:
        return Subspace.zero(d)
    Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return Subspace(Q)


def _check_same_ambient(V: Subspace, W: Subspace) -> None:
    if V.ambient_dim != W.ambient_dim:
        raise ParameterError(f"ambient dimensions differ: {V.ambient_dim} vs {W.ambient_dim}")
