"""Möbius transformations of R^d ∪ {∞} through the Lorentzian projective model.

A point x is lifted to the null vector ``iota(x) = (1, -|x|^2/2, x)`` of the
quadratic form ``Q(t0, t1, x) = 2 t0 t1 + |x|^2``; the point at infinity lifts
to ``(0, 1, 0)``. Every Möbius map then acts as a ``(d+2) x (d+2)`` matrix
preserving ``Q``, so composition is matrix multiplication and the point at
infinity needs no special casing apart from (de)projectivization.

Example
-------
>>> import numpy as np
>>> inv = make_sphere_inversion(np.zeros(2), 1.0)
>>> apply(inv, np.array([2.0, 0.0]))
array([0.5, 0. ])
>>> apply(inv, np.zeros(2)) is INFINITY
True
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, ResourceError, SingularityError

__all__ = [
    "INFINITY",
    "MapKind",
    "MobiusMap",
    "HalfSpacePoint",
    "lorentz_gram",
    "lorentz_defect",
    "make_sphere_inversion",
    "make_similarity",
    "compose",
    "apply",
    "derivative_scale",
    "iota",
    "quadratic_form",
    "lift_projective",
    "hyperbolic_distance",
    "poincare_extension",
    "poincare_extension_apply",
    "map_from_json",
    "map_from_lorentz",
    "map_to_json",
]

ORTHO_TOL_BUILD = 1e-12
ORTHO_TOL_CHECK = 1e-10
# Below this dimension the Lorentz matrix is stored densely; above it
# similarities keep their (scale, rotation, translation) factorization.
LORENTZ_DENSE_MAX = 64
_MAX_DENSE_LORENTZ = 4096
_POLE_RTOL = 1e-14


class _Infinity:
    """The point at infinity of R^d ∪ {∞}; a singleton."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("rigidlab.INFINITY")

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()


def _is_inf(x) -> bool:
    return x is INFINITY


class MapKind(str, enum.Enum):
    SIMILARITY = "similarity"
    SPHERE_INVERSION = "sphere_inversion"
    COMPOSITE = "composite"


def lorentz_gram(d: int) -> np.ndarray:
    """Gram matrix of Q on R^2 ⊕ R^d."""
    J = np.eye(d + 2)
    J[0, 0] = J[1, 1] = 0.0
    J[0, 1] = J[1, 0] = 1.0
    return J


def quadratic_form(v: np.ndarray) -> np.ndarray:
    """Q(t0, t1, x) = 2 t0 t1 + |x|^2, vectorized over the last axis."""
    v = np.asarray(v, dtype=float)
    return 2.0 * v[..., 0] * v[..., 1] + np.sum(v[..., 2:] ** 2, axis=-1)


def lorentz_defect(M: np.ndarray) -> float:
    """max |MᵀJM − J|; zero for an exact Q-isometry."""
    J = lorentz_gram(M.shape[0] - 2)
    return float(np.max(np.abs(M.T @ J @ M - J)))


def _normalize_sign(M: np.ndarray) -> np.ndarray:
    # g_proj is unique up to ±1: make the (t0, t1) trace nonnegative,
    # tie-break on the first clearly nonzero entry being positive.
    tr = M[0, 0] + M[1, 1]
    scale = np.max(np.abs(M))
    tol = 1e-12 * max(scale, 1.0)
    if tr < -tol:
        return -M
    if abs(tr) <= tol:
        flat = M.ravel()
        nz = np.flatnonzero(np.abs(flat) > tol)
        if nz.size and flat[nz[0]] < 0:
            return -M
    return M


def _similarity_lorentz(scale, rotation, translation) -> np.ndarray:
    d = len(translation)
    if d + 2 > _MAX_DENSE_LORENTZ + 2:
        raise ResourceError(f"dense Lorentz matrix for d={d} exceeds the supported size")
    O = rotation.toarray() if sp.issparse(rotation) else np.asarray(rotation, dtype=float)
    b = np.asarray(translation, dtype=float)
    M = np.zeros((d + 2, d + 2))
    M[0, 0] = 1.0 / scale
    M[1, 1] = scale
    M[2:, 2:] = O
    M[2:, 0] = b / scale
    M[1, 0] = -(b @ b) / (2.0 * scale)
    M[1, 2:] = -(b @ O)
    return M


@dataclass(frozen=True, eq=False)
class MobiusMap:
    """A conformal automorphism of R^d ∪ {∞}.

    Either ``lorentz`` is given, or the map is a similarity described by
    ``scale``, ``rotation`` and ``translation`` (x ↦ scale·rotation·x + translation),
    in which case the Lorentz matrix is assembled on first use. ``rotation``
    may be a scipy sparse matrix for high-dimensional similarities.

    ``truncated`` marks maps whose linear part is only a partial isometry
    (coordinates pushed past a finite truncation are dropped).
    """

    dim: int
    kind: MapKind
    _lorentz: np.ndarray | None = None
    scale: float | None = None
    rotation: object = None
    translation: object = None
    truncated: bool = False

    @cached_property
    def lorentz(self) -> np.ndarray:
        if self._lorentz is not None:
            return self._lorentz
        return _normalize_sign(_similarity_lorentz(self.scale, self.rotation, self._translation_dense))

    @cached_property
    def _translation_dense(self) -> np.ndarray:
        b = self.translation
        if sp.issparse(b):
            return np.asarray(b.toarray()).ravel()
        return np.asarray(b, dtype=float)

    @property
    def is_similarity(self) -> bool:
        return self.kind is MapKind.SIMILARITY

    @property
    def _structured(self) -> bool:
        return self.is_similarity and self.scale is not None and (
            self.dim >= LORENTZ_DENSE_MAX or self._lorentz is None and sp.issparse(self.rotation)
        )

    def __call__(self, x):
        return apply(self, x)

    def __matmul__(self, other: "MobiusMap") -> "MobiusMap":
        return compose(self, other)

    # -- batch evaluation ---------------------------------------------------
    def apply_many(self, X):
        """Apply to the rows of X; rows sent to ∞ come back as +inf.

        Sparse CSR input is supported for similarities and stays sparse.
        """
        if sp.issparse(X):
            if not self.is_similarity:
                raise ParameterError("sparse point batches need a similarity map")
            out = (X @ self.rotation.T) * self.scale if sp.issparse(self.rotation) else sp.csr_matrix(
                (X @ np.asarray(self.rotation).T) * self.scale
            )
            b = self.translation if sp.issparse(self.translation) else sp.csr_matrix(np.asarray(self.translation))
            ones = sp.csr_matrix(np.ones((X.shape[0], 1)))
            return sp.csr_matrix(out + ones @ sp.csr_matrix(b))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.is_similarity and self.scale is not None:
            R = self.rotation
            Y = np.asarray(R @ X.T).T if sp.issparse(R) else X @ np.asarray(R).T
            return self.scale * Y + self._translation_dense
        V = iota_many(X) @ self.lorentz.T
        return _deproject_many(V)

    def derivative_many(self, X) -> np.ndarray:
        """|g'(x)| for each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.is_similarity and self.scale is not None:
            return np.full(X.shape[0], float(self.scale))
        V = iota_many(X) @ self.lorentz.T
        t0 = np.abs(V[:, 0])
        if np.any(t0 <= _POLE_RTOL * np.linalg.norm(V, axis=1)):
            raise SingularityError("derivative requested at the pole")
        return 1.0 / t0

    # -- structure ---------------------------------------------------------
    def inverse(self) -> "MobiusMap":
        if self._structured:
            R = self.rotation
            Rt = R.T.tocsr() if sp.issparse(R) else np.asarray(R).T
            b = self._translation_dense
            inv_b = -(np.asarray(Rt @ b).ravel()) / self.scale
            return MobiusMap(self.dim, MapKind.SIMILARITY, None, 1.0 / self.scale, Rt, inv_b, self.truncated)
        J = lorentz_gram(self.dim)
        Minv = _normalize_sign(J @ self.lorentz.T @ J)
        return _from_lorentz(Minv, kind_hint=self.kind if self.kind is not MapKind.COMPOSITE else None)

    @property
    def pole(self):
        """g⁻¹(∞): the point sent to infinity (INFINITY for similarities)."""
        if self.is_similarity:
            return INFINITY
        return apply(self.inverse(), INFINITY)

    def to_json(self) -> dict:
        return map_to_json(self)


def _from_lorentz(M: np.ndarray, kind_hint: MapKind | None = None) -> MobiusMap:
    d = M.shape[0] - 2
    col = M[:, 1].copy()
    scale_ref = max(np.max(np.abs(M)), 1.0)
    col[1] = 0.0
    fixes_inf = np.max(np.abs(col)) <= 1e-12 * scale_ref
    if fixes_inf:
        lam = 1.0 / M[0, 0]
        O = M[2:, 2:].copy()
        b = M[2:, 0] * lam
        if lam < 0:
            # sign normalization should prevent this; keep the geometry consistent
            lam, O, b = -lam, -O, b
        return MobiusMap(d, MapKind.SIMILARITY, M, float(lam), O, b)
    kind = kind_hint if kind_hint is MapKind.SPHERE_INVERSION else MapKind.COMPOSITE
    return MobiusMap(d, kind, M)


def _check_orthogonal(O: np.ndarray, tol: float) -> None:
    k = O.shape[0]
    err = np.max(np.abs(O.T @ O - np.eye(k))) if k else 0.0
    if err > tol:
        raise ParameterError(f"rotation is not orthogonal (defect {err:.3g} > {tol:g})")


def make_similarity(scale, rotation=None, translation=None, dim: int | None = None) -> MobiusMap:
    """x ↦ scale·rotation·x + translation.

    >>> make_similarity(1/3, None, [2/3])(np.array([1.0]))
    array([1.])
    """
    scale = float(scale)
    if not scale > 0:
        raise ParameterError("similarity scale must be positive")
    if translation is None and rotation is None and dim is None:
        raise ParameterError("cannot infer the dimension of the similarity")
    if translation is not None:
        b = np.asarray(translation, dtype=float).ravel()
        d = b.size
    else:
        d = dim if dim is not None else np.asarray(rotation).shape[0]
        b = np.zeros(d)
    if rotation is None:
        O = np.eye(d)
    else:
        O = np.asarray(rotation, dtype=float)
        if O.shape != (d, d):
            raise ParameterError(f"rotation must be {d}x{d}, got {O.shape}")
        _check_orthogonal(O, ORTHO_TOL_BUILD)
    if d >= LORENTZ_DENSE_MAX:
        return MobiusMap(d, MapKind.SIMILARITY, None, scale, O, b)
    M = _normalize_sign(_similarity_lorentz(scale, O, b))
    return MobiusMap(d, MapKind.SIMILARITY, M, scale, O, b)


def make_sphere_inversion(center, radius) -> MobiusMap:
    """x ↦ c + ρ²(x − c)/|x − c|²."""
    c = np.asarray(center, dtype=float).ravel()
    radius = float(radius)
    if not radius > 0:
        raise ParameterError("inversion radius must be positive")
    d = c.size
    if d + 2 > _MAX_DENSE_LORENTZ + 2:
        raise ResourceError("sphere inversions need a dense Lorentz matrix")
    # unit inversion at the origin swaps the null lines of t0 and t1
    Jinv = np.eye(d + 2)
    Jinv[0, 0] = Jinv[1, 1] = 0.0
    Jinv[0, 1] = -2.0
    Jinv[1, 0] = -0.5
    I = np.eye(d)
    T_c = _similarity_lorentz(1.0, I, c)
    T_mc = _similarity_lorentz(1.0, I, -c)
    S = _similarity_lorentz(radius**2, I, np.zeros(d))
    M = _normalize_sign(T_c @ S @ Jinv @ T_mc)
    return MobiusMap(d, MapKind.SPHERE_INVERSION, M)


def compose(*maps: MobiusMap) -> MobiusMap:
    """compose(f, g, h) = f ∘ g ∘ h."""
    if not maps:
        raise ParameterError("compose needs at least one map")
    dims = {m.dim for m in maps}
    if len(dims) != 1:
        raise ParameterError(f"dimension mismatch in composition: {sorted(dims)}")
    if len(maps) == 1:
        return maps[0]
    if all(m._structured for m in maps):
        out = maps[-1]
        for f in reversed(maps[:-1]):
            R = f.rotation @ out.rotation
            if sp.issparse(R):
                R = R.tocsr()
            b = np.asarray(f.rotation @ out._translation_dense).ravel() * f.scale + f._translation_dense
            out = MobiusMap(f.dim, MapKind.SIMILARITY, None, f.scale * out.scale, R, b,
                            f.truncated or out.truncated)
        return out
    M = maps[0].lorentz
    for f in maps[1:]:
        M = M @ f.lorentz
    return _from_lorentz(_normalize_sign(M))


def iota(x) -> np.ndarray:
    """Lift to the null cone: x ↦ (1, −|x|²/2, x); ∞ ↦ (0, 1, 0) needs ``dim``."""
    if _is_inf(x):
        raise ParameterError("iota is defined on finite points; use infinity_vector(d) for ∞")
    x = np.asarray(x, dtype=float).ravel()
    return np.concatenate(([1.0, -0.5 * (x @ x)], x))


def infinity_vector(d: int) -> np.ndarray:
    v = np.zeros(d + 2)
    v[1] = 1.0
    return v


def iota_many(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    out = np.empty((n, X.shape[1] + 2))
    out[:, 0] = 1.0
    out[:, 1] = -0.5 * np.einsum("ij,ij->i", X, X)
    out[:, 2:] = X
    return out


def _deproject(v: np.ndarray):
    if abs(v[0]) <= _POLE_RTOL * np.linalg.norm(v):
        return INFINITY
    return v[2:] / v[0]


def _deproject_many(V: np.ndarray) -> np.ndarray:
    t0 = V[:, :1]
    at_inf = np.abs(t0[:, 0]) <= _POLE_RTOL * np.linalg.norm(V, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = V[:, 2:] / t0
    out[at_inf] = np.inf
    return out


def apply(g: MobiusMap, x):
    """g(x) for a finite point (1-d array) or INFINITY."""
    if _is_inf(x):
        if g.is_similarity:
            return INFINITY
        return _deproject(g.lorentz @ infinity_vector(g.dim))
    x = np.asarray(x, dtype=float).ravel()
    if x.size != g.dim:
        raise ParameterError(f"point has dimension {x.size}, map acts on R^{g.dim}")
    if g._structured:
        return g.apply_many(x[None, :])[0]
    return _deproject(g.lorentz @ iota(x))


def derivative_scale(g: MobiusMap, x) -> float:
    """Conformal dilation |g'(x)|.

    If g_proj·ι(x) = s·ι(g(x)) then |g'(x)| = 1/|s|, which makes the chain
    rule exact under matrix multiplication.
    """
    if _is_inf(x):
        raise SingularityError("derivative at infinity is not defined")
    if g.is_similarity and g.scale is not None:
        return float(g.scale)
    v = g.lorentz @ iota(x)
    if abs(v[0]) <= _POLE_RTOL * np.linalg.norm(v):
        raise SingularityError("point is the pole of the map")
    return float(1.0 / abs(v[0]))


def lift_projective(g: MobiusMap | Sequence[MobiusMap]) -> np.ndarray:
    """Q-preserving matrix conjugate to g, normalized to remove the ±1 ambiguity."""
    if not isinstance(g, MobiusMap):
        g = compose(*g)
    return _normalize_sign(g.lorentz.copy())


# -- upper half-space ------------------------------------------------------

@dataclass(frozen=True)
class HalfSpacePoint:
    """A point (height, base) of (0, ∞) × R^d."""

    height: float
    base: np.ndarray

    def __post_init__(self):
        if not self.height > 0:
            raise ParameterError("half-space points need positive height")
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).ravel())

    @classmethod
    def origin(cls, d: int) -> "HalfSpacePoint":
        return cls(1.0, np.zeros(d))


def hyperbolic_distance(p: HalfSpacePoint, q: HalfSpacePoint) -> float:
    """Half-space metric, via sinh(d/2) = |p − q| / (2 sqrt(h_p h_q)).

    The half-angle form has no cancellation for nearby points.
    """
    for z in (p, q):
        if not z.height > 0:
            raise ParameterError("half-space points need positive height")
    dh = p.height - q.height
    db = p.base - q.base
    chord = np.sqrt(dh * dh + db @ db)
    return float(2.0 * np.arcsinh(chord / (2.0 * np.sqrt(p.height * q.height))))


def hyperbolic_distance_many(h1, Y1, h2, Y2) -> np.ndarray:
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if np.any(h1 <= 0) or np.any(h2 <= 0):
        raise ParameterError("half-space points need positive height")
    diff = np.asarray(Y1, dtype=float) - np.asarray(Y2, dtype=float)
    chord = np.sqrt((h1 - h2) ** 2 + np.sum(np.atleast_2d(diff) ** 2, axis=-1))
    return 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(h1 * h2)))


def poincare_extension(g: MobiusMap) -> np.ndarray:
    """Lorentz matrix of the extension of g to R^{d+1} preserving the upper half-space.

    The generators (translations, dilations, rotations, inversions centered on
    R^d) all act trivially on the height coordinate of the lift, so the
    extension inserts an identity row and column at index 2.
    """
    M = g.lorentz
    n = M.shape[0]
    E = np.zeros((n + 1, n + 1))
    keep = np.r_[0, 1, 3:n + 1]
    E[np.ix_(keep, keep)] = M
    E[2, 2] = 1.0
    return E


def poincare_extension_apply_many(E: np.ndarray, heights, bases) -> tuple[np.ndarray, np.ndarray]:
    heights = np.asarray(heights, dtype=float)
    Z = np.column_stack([heights, np.atleast_2d(bases)])
    W = _deproject_many(iota_many(Z) @ E.T)
    return W[:, 0], W[:, 1:]


def poincare_extension_apply(g: MobiusMap, p: HalfSpacePoint) -> HalfSpacePoint:
    h, y = poincare_extension_apply_many(poincare_extension(g), [p.height], p.base[None, :])
    return HalfSpacePoint(float(h[0]), y[0])


# -- JSON ------------------------------------------------------------------

def map_from_json(obj: dict, dim: int | None = None) -> MobiusMap:
    """Build a map from {"type": "similarity" | "sphere_inversion" | "word", ...}."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ParameterError("map description must be an object with a 'type' field")
    kind = obj["type"]
    try:
        if kind == "similarity":
            return make_similarity(obj["scale"], obj.get("rotation"), obj.get("translation"), dim=dim)
        if kind == "sphere_inversion":
            return make_sphere_inversion(obj["center"], obj["radius"])
        if kind == "word":
            factors = [map_from_json(f, dim) for f in obj["factors"]]
            return compose(*factors)
        if kind == "lorentz":
            return map_from_lorentz(obj["matrix"])
    except KeyError as exc:
        raise ParameterError(f"map description of type {kind!r} is missing {exc}") from None
    raise ParameterError(f"unknown map type {kind!r}")


def map_from_lorentz(M) -> MobiusMap:
    """Map with Lorentz matrix ``M``; the defect is checked relative to |M|²."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 3:
        raise ParameterError("Lorentz matrix must be square of size d + 2 >= 3")
    if not np.all(np.isfinite(M)):
        raise ParameterError("Lorentz matrix has non-finite entries")
    defect = lorentz_defect(M)
    if defect > ORTHO_TOL_CHECK * max(1.0, float(np.max(np.abs(M)))) ** 2:
        raise ParameterError(f"matrix does not preserve Q (defect {defect:.3g})")
    return _from_lorentz(_normalize_sign(M))


def map_to_json(g: MobiusMap) -> dict:
    if g.is_similarity and g.scale is not None and not sp.issparse(g.rotation):
        return {
            "type": "similarity",
            "scale": float(g.scale),
            "rotation": np.asarray(g.rotation).tolist(),
            "translation": g._translation_dense.tolist(),
        }
    return {"type": "lorentz", "matrix": g.lorentz.tolist()}
