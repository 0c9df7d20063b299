"""Finite conformal iterated function systems.

A :class:`CIFS` bundles contracting Möbius maps with a seed region they map
into itself. The module certifies separation of the first-level images,
evaluates the pressure function and its zero (the Bowen parameter), codes
symbolic words to points, and samples the limit set with the conformal
measure. Constructors for Antoine's necklace and for a pair of similarity
systems in a truncated sequence space are provided.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.special import logsumexp

from .cloud import WeightedCloud
from .errors import (
    BracketError,
    ParameterError,
    ResourceError,
    SeparationError,
    SingularityError,
)
from .mobius import MapKind, MobiusMap, compose, make_similarity, map_from_json, map_to_json
from .regions import Ball, image_region, region_contains, region_from_json, region_gap

__all__ = [
    "CIFS",
    "SeparationCertificate",
    "BowenResult",
    "check_separation",
    "pressure",
    "bowen_parameter",
    "bowen_report",
    "code_point",
    "cylinder_weight",
    "sample_limit_set",
    "make_antoine",
    "make_example_a1",
    "system_from_json",
    "system_to_json",
]

DEFAULT_WORD_BUDGET = 2_000_000
SAMPLE_CHUNK = 8192


@dataclass(frozen=True)
class SeparationCertificate:
    """Outcome of the separation check.

    ``status`` is one of SSC, OSC, FAIL, UNCERTIFIED. ``gap`` is the smallest
    signed distance between first-level image regions and ``pair`` the
    letters realizing it.
    """

    status: str
    gap: float
    pair: tuple | None = None
    detail: str = ""

    def to_json(self) -> dict:
        return {"status": self.status, "gap": self.gap,
                "pair": list(self.pair) if self.pair is not None else None, "detail": self.detail}


def _derivative_bounds(M: np.ndarray, region) -> tuple[np.ndarray, np.ndarray]:
    """Sup and inf of |g'| over ``region`` for a stack of Lorentz matrices.

    With a = M[0,1] ≠ 0 the map has pole p = M[0,2:]/a and
    |g'(x)| = 2 / (|a|·|x − p|²); with a = 0 it is a similarity with
    constant dilation 1/|M[0,0]|.
    """
    M = np.asarray(M)
    if M.ndim == 2:
        M = M[None]
    a = M[:, 0, 1]
    scale = np.max(np.abs(M[:, 0, :]), axis=1)
    sim = np.abs(a) <= 1e-14 * scale
    sup = np.empty(len(M))
    inf = np.empty(len(M))
    sup[sim] = inf[sim] = 1.0 / np.abs(M[sim, 0, 0])
    for i in np.flatnonzero(~sim):
        p = M[i, 0, 2:] / a[i]
        near = region.nearest_distance(p)
        if near <= 0.0:
            raise SingularityError("a pole lies in the seed region")
        C = 2.0 / abs(a[i])
        sup[i] = C / near**2
        inf[i] = C / region.farthest_distance(p) ** 2
    return sup, inf


class CIFS:
    """Contracting conformal maps of a seed region into itself.

    Parameters
    ----------
    maps : sequence of MobiusMap
    seed : Ball or Box
    certificate : SeparationCertificate, optional
        Supply a precomputed certificate (e.g. a structural witness);
        otherwise one is computed from the image regions.
    name : str
    meta : dict
        Free-form metadata carried into samples and reports.
    basepoint : array, optional
        Starting point for coding; defaults to the seed center.
    """

    def __init__(self, maps: Sequence[MobiusMap], seed, certificate=None, name="cifs",
                 meta=None, basepoint=None, check_invariance=True):
        maps = tuple(maps)
        if not maps:
            raise ParameterError("a system needs at least one map")
        d = maps[0].dim
        if any(g.dim != d for g in maps):
            raise ParameterError("all maps must act on the same space")
        if seed.dim != d:
            raise ParameterError("seed region dimension does not match the maps")
        self.maps = maps
        self.seed = seed
        self.name = name
        self.meta = dict(meta or {})
        self.dim = d
        self.ratios = np.array([self._sup_derivative(g) for g in maps])
        if not np.all(self.ratios < 1.0):
            bad = int(np.argmax(self.ratios))
            raise ParameterError(f"map {bad} is not contracting on the seed (ratio {self.ratios[bad]:.6g})")
        self._images = None
        if check_invariance:
            tol = 1e-9 * max(seed.diameter, 1.0)
            for a, (img, _) in enumerate(self.images):
                if not region_contains(seed, img, tol):
                    raise ParameterError(f"map {a} does not send the seed region into itself")
        self.certificate = certificate if certificate is not None else check_separation(self)
        self.basepoint = seed.center if basepoint is None else basepoint

    def _sup_derivative(self, g: MobiusMap) -> float:
        if g.is_similarity and g.scale is not None:
            return float(g.scale)
        return float(_derivative_bounds(g.lorentz, self.seed)[0][0])

    @property
    def images(self):
        if self._images is None:
            self._images = [image_region(g, self.seed) for g in self.maps]
        return self._images

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    @property
    def is_similarity(self) -> bool:
        return all(g.is_similarity for g in self.maps)

    def __repr__(self):
        return f"CIFS(name={self.name!r}, maps={self.n_maps}, dim={self.dim}, separation={self.certificate.status})"


def check_separation(cifs: CIFS) -> SeparationCertificate:
    """Certify disjointness of the first-level images of the seed region.

    SSC when every pair of images is at positive distance, OSC when images
    touch but interiors stay disjoint, FAIL when exact images overlap, and
    UNCERTIFIED when only conservative bounding regions overlap.
    """
    n = cifs.n_maps
    if n == 1:
        return SeparationCertificate("SSC", math.inf, None, "single map")
    tol = 1e-12 * max(cifs.seed.diameter, 1.0)
    worst = (math.inf, None, True)
    for i in range(n):
        Ai, ei = cifs.images[i]
        for j in range(i + 1, n):
            Aj, ej = cifs.images[j]
            gap = region_gap(Ai, Aj)
            if gap < worst[0]:
                worst = (gap, (i, j), ei and ej)
    gap, pair, exact = worst
    if gap > tol:
        return SeparationCertificate("SSC", gap, pair, "images of the seed region are pairwise disjoint")
    if gap >= -tol:
        return SeparationCertificate("OSC", 0.0, pair, "images touch; interiors are disjoint")
    if exact:
        return SeparationCertificate("FAIL", gap, pair, "images of the seed region overlap")
    return SeparationCertificate("UNCERTIFIED", gap, pair, "bounding regions overlap")


# -- pressure and Bowen parameter ---------------------------------------------

def _word_matrices(cifs: CIFS, n: int, budget: int) -> np.ndarray:
    m = cifs.n_maps
    if n * m**n > budget:
        raise ResourceError(
            f"{m}^{n} words of length {n} exceed the word budget {budget}; "
            "use a smaller n or a narrower delta bracket")
    gens = np.stack([g.lorentz for g in cifs.maps])
    W = gens
    for _ in range(n - 1):
        W = np.einsum("wij,ajk->waik", W, gens).reshape(-1, *gens.shape[1:])
    return W


def _log_word_norms(cifs: CIFS, n: int, budget: int) -> tuple[np.ndarray, np.ndarray]:
    W = _word_matrices(cifs, n, budget)
    sup, inf = _derivative_bounds(W, cifs.seed)
    return np.log(sup), np.log(inf)


def pressure(cifs: CIFS, delta: float, n: int = 1, word_budget: int = DEFAULT_WORD_BUDGET) -> float:
    """(1/n) log Σ_{|ω|=n} ‖u_ω'‖^δ with sup norms over the seed region.

    For similarity systems the sum factorizes and the value is
    log Σ_a r_a^δ for every n.
    """
    if delta < 0:
        raise ParameterError("delta must be nonnegative")
    if n < 1:
        raise ParameterError("n must be at least 1")
    if cifs.is_similarity:
        return float(logsumexp(delta * np.log(cifs.ratios)))
    log_sup, _ = _log_word_norms(cifs, n, word_budget)
    return float(logsumexp(delta * log_sup) / n)


@dataclass(frozen=True)
class BowenResult:
    delta: float
    pressure_residual: float
    bracket: tuple
    n: int
    distortion: float = 1.0
    lower_delta: float | None = None

    def to_json(self) -> dict:
        return {"delta": self.delta, "pressure_residual": self.pressure_residual,
                "bracket": list(self.bracket), "n": self.n, "distortion": self.distortion,
                "lower_delta": self.lower_delta}


def _find_root(P, tol: float, delta_hi: float | None, cap: float = 4096.0) -> tuple[float, float]:
    p0 = P(0.0)
    if p0 == 0.0:
        return 0.0, 0.0
    if p0 < 0:
        raise BracketError("pressure is already negative at delta = 0")
    hi = 1.0 if delta_hi is None else float(delta_hi)
    while P(hi) >= 0:
        if delta_hi is not None or hi >= cap:
            raise BracketError(f"no sign change of the pressure on [0, {hi:g}]")
        hi *= 2.0
    root = brentq(P, 0.0, hi, xtol=tol / 4, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(root), hi


def bowen_report(cifs: CIFS, tol: float = 1e-10, n: int | None = None, delta_hi: float | None = None,
                 word_budget: int = DEFAULT_WORD_BUDGET) -> BowenResult:
    """Zero of the pressure function, bracketed by a certified sign change.

    Möbius systems use words of length n (default: the longest allowed by
    the budget, at most 8); the zero of the inf-norm pressure is reported as
    ``lower_delta`` together with the worst word distortion sup/inf.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    if cifs.is_similarity:
        logr = np.log(cifs.ratios)
        P = lambda s: float(logsumexp(s * logr))
        root, hi = _find_root(P, tol, delta_hi)
        return BowenResult(root, P(root), (0.0, hi), 1)
    m = cifs.n_maps
    if n is None:
        n = 1
        while n < 8 and (n + 1) * m ** (n + 1) <= word_budget:
            n += 1
    log_sup, log_inf = _log_word_norms(cifs, n, word_budget)
    P_sup = lambda s: float(logsumexp(s * log_sup) / n)
    P_inf = lambda s: float(logsumexp(s * log_inf) / n)
    root, hi = _find_root(P_sup, tol, delta_hi)
    try:
        lower, _ = _find_root(P_inf, tol, None)
    except BracketError:
        lower = None
    distortion = float(np.exp(np.max(log_sup - log_inf)))
    return BowenResult(root, P_sup(root), (0.0, hi), n, distortion, lower)


def bowen_parameter(cifs: CIFS, tol: float = 1e-10, n: int | None = None, **kwargs) -> float:
    """The δ at which the pressure vanishes (the Moran root for similarities)."""
    return bowen_report(cifs, tol, n, **kwargs).delta


# -- coding and measures ----------------------------------------------------

def _check_word(cifs: CIFS, word) -> list[int]:
    word = [int(a) for a in word]
    if any(a < 0 or a >= cifs.n_maps for a in word):
        raise ParameterError(f"word uses letters outside 0..{cifs.n_maps - 1}")
    return word


def code_point(cifs: CIFS, word, basepoint=None) -> np.ndarray:
    """u_{ω1} ∘ … ∘ u_{ωn}(basepoint)."""
    word = _check_word(cifs, word)
    x = cifs.basepoint if basepoint is None else basepoint
    if sp.issparse(x):
        x = np.asarray(x.toarray()).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if not cifs.seed.contains(x, 1e-9 * max(cifs.seed.diameter, 1.0)):
        raise ParameterError("basepoint lies outside the seed region")
    for a in reversed(word):
        x = cifs.maps[a].apply_many(x[None, :])[0]
    return x


def cylinder_weight(cifs: CIFS, word, delta: float) -> float:
    """Conformal-measure weight of a cylinder, Π r_{ω_i}^δ for similarities.

    For Möbius systems the sup norm of the composed word is used; this is a
    surrogate whose error is bounded by the distortion reported in
    :func:`bowen_report`.
    """
    word = _check_word(cifs, word)
    if not word:
        return 1.0
    if cifs.is_similarity:
        return float(np.exp(delta * np.sum(np.log(cifs.ratios[word]))))
    g = compose(*[cifs.maps[a] for a in word])
    sup, _ = _derivative_bounds(g.lorentz, cifs.seed)
    return float(sup[0] ** delta)


def _apply_by_letter(maps, X, letters):
    if sp.issparse(X):
        pieces, order = [], []
        for a, g in enumerate(maps):
            idx = np.flatnonzero(letters == a)
            if idx.size:
                pieces.append(g.apply_many(X[idx]))
                order.append(idx)
        stacked = sp.vstack(pieces, format="csr")
        inv = np.empty(X.shape[0], dtype=int)
        inv[np.concatenate(order)] = np.arange(X.shape[0])
        return stacked[inv]
    out = np.empty_like(X)
    for a, g in enumerate(maps):
        idx = letters == a
        if np.any(idx):
            out[idx] = g.apply_many(X[idx])
    return out


def _sample_chunk(cifs, probs, depth, seed, chunk, size, base):
    rng = np.random.default_rng(np.random.SeedSequence([seed, chunk]))
    letters = rng.choice(cifs.n_maps, size=(size, depth), p=probs)
    if sp.issparse(base):
        X = sp.vstack([base] * size, format="csr")
    else:
        X = np.tile(base, (size, 1))
    for level in range(depth - 1, -1, -1):
        X = _apply_by_letter(cifs.maps, X, letters[:, level])
    return X


def sample_limit_set(cifs: CIFS, n_points: int, depth: int, delta: float | None = None,
                     rng_seed: int = 0, threads: int = 1, chunk_size: int = SAMPLE_CHUNK) -> WeightedCloud:
    """Monte-Carlo sample of the conformal measure on the limit set.

    Letters are drawn independently with probability ∝ r_a^δ and coded to
    ``depth``. Chunks use independent substreams keyed by (seed, chunk
    index), so the output does not depend on ``threads``.
    """
    if cifs.certificate.status == "FAIL":
        raise SeparationError("refusing to sample a system whose separation check failed",
                              cifs.certificate.pair)
    if n_points < 1 or depth < 0:
        raise ParameterError("n_points must be positive and depth nonnegative")
    if delta is None:
        delta = bowen_parameter(cifs)
    logw = delta * np.log(cifs.ratios)
    probs = np.exp(logw - logsumexp(logw))
    base = cifs.basepoint
    if not sp.issparse(base):
        base = np.asarray(base, dtype=float).ravel()
    sizes = [min(chunk_size, n_points - s) for s in range(0, n_points, chunk_size)]
    jobs = [(cifs, probs, depth, int(rng_seed), c, size, base) for c, size in enumerate(sizes)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda j: _sample_chunk(*j), jobs))
    else:
        parts = [_sample_chunk(*j) for j in jobs]
    X = sp.vstack(parts, format="csr") if sp.issparse(base) else np.vstack(parts)
    meta = {"system": cifs.name, "depth": depth, "seed": int(rng_seed), "delta": float(delta),
            "total_mass": 1.0}
    for key in ("resolution", "tail_bound"):
        if key in cifs.meta:
            meta[key] = cifs.meta[key]
    return WeightedCloud(X, np.full(n_points, 1.0 / n_points), meta)


# -- JSON -------------------------------------------------------------------

def system_from_json(obj: dict) -> CIFS:
    """{"maps": [...], "seed_region": {...}, "name": optional}."""
    if not isinstance(obj, dict):
        raise ParameterError("system description must be a JSON object")
    if "maps" not in obj or "seed_region" not in obj:
        raise ParameterError("system needs 'maps' and 'seed_region'")
    seed = region_from_json(obj["seed_region"])
    maps = [map_from_json(m, seed.dim) for m in obj["maps"]]
    return CIFS(maps, seed, name=str(obj.get("name", "cifs")))


def system_to_json(cifs: CIFS) -> dict:
    return {"name": cifs.name, "maps": [map_to_json(g) for g in cifs.maps],
            "seed_region": cifs.seed.to_json()}


# -- Antoine's necklace -----------------------------------------------------

def make_antoine(n_links: int = 20, link_ratio: float = 0.1, torus_major: float = 1.0,
                 torus_minor: float = 0.28) -> CIFS:
    """Similarity system sending a solid torus onto a chain of smaller copies.

    The torus has core circle of radius ``torus_major`` in the xy-plane.
    Link k is centered at angle 2πk/n on the core; even links stand in the
    plane spanned by the core tangent and the z-axis, odd links lie in the
    plane spanned by the tangent and the radial direction. Feasibility is
    checked with bounding balls of radius ρ(R + r): they must be pairwise
    disjoint and fit inside the solid torus.
    """
    n, rho, R, r = int(n_links), float(link_ratio), float(torus_major), float(torus_minor)
    if n < 3:
        raise ParameterError("a necklace needs at least 3 links")
    if not 0 < rho < 1 or not 0 < r < R:
        raise ParameterError("need 0 < link_ratio < 1 and 0 < torus_minor < torus_major")
    bound = rho * (R + r)
    if bound >= r:
        raise SeparationError(f"links of bounding radius {bound:.4g} do not fit in the tube of radius {r:g}")
    theta = 2 * np.pi * np.arange(n) / n
    centers = R * np.column_stack([np.cos(theta), np.sin(theta), np.zeros(n)])
    gap = 2 * R * np.sin(np.pi / n) - 2 * bound
    if gap <= 0:
        raise SeparationError(
            f"adjacent links 0 and 1 overlap: bounding balls intersect by {-gap:.4g}", (0, 1))
    ez = np.array([0.0, 0.0, 1.0])
    maps = []
    for k in range(n):
        radial = np.array([np.cos(theta[k]), np.sin(theta[k]), 0.0])
        tangent = np.array([-np.sin(theta[k]), np.cos(theta[k]), 0.0])
        O = np.column_stack([tangent, ez, radial] if k % 2 == 0 else [radial, tangent, ez])
        maps.append(make_similarity(rho, O, centers[k]))
    seed = Ball(np.zeros(3), R + r)
    meta = {"moran_dimension": math.log(n) / math.log(1 / rho), "n_links": n, "link_ratio": rho,
            "torus_major": R, "torus_minor": r}
    cifs = CIFS(maps, seed, name=f"antoine-{n}-{rho:g}", meta=meta)
    if cifs.certificate.status != "SSC":
        raise SeparationError("necklace images are not strongly separated", cifs.certificate.pair)
    return cifs


# -- two similarity systems in a truncated sequence space --------------------

def a1_index(k: int, i: int) -> int:
    """Column of the basis vector e_{k,i} (level k ≥ 1, 0 ≤ i < 2^k); column 0 is e_0."""
    return 1 + (2**k - 2) + i


@dataclass(frozen=True, eq=False)
class ExampleA1:
    """Curve system and its projection, truncated at level K.

    ``cifs_r1`` has limit set F([0,1]) with F(t) = (t, α f(t)),
    f(t) = Σ_k 2^{-k} e_{k,⌊2^k t⌋}; ``cifs_r2`` has limit set α f([0,1]),
    the image of the first under ``pi_star`` (dropping the e_0 coordinate).
    """

    alpha: float
    K: int
    dim: int
    cifs_r1: CIFS
    cifs_r2: CIFS
    tail_bound: float
    meta: dict = field(default_factory=dict)

    def curve(self, t) -> sp.csr_matrix:
        """Rows F(t) for the parameters t (truncated at level K)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any((t < 0) | (t > 1)):
            raise ParameterError("curve parameter must lie in [0, 1]")
        n, K = t.size, self.K
        rows = np.repeat(np.arange(n), K + 1)
        cols = np.empty((n, K + 1), dtype=np.int64)
        vals = np.empty((n, K + 1))
        cols[:, 0] = 0
        vals[:, 0] = t
        for k in range(1, K + 1):
            i = np.minimum(np.floor(t * 2**k).astype(np.int64), 2**k - 1)
            cols[:, k] = a1_index(k, 0) + i
            vals[:, k] = self.alpha * 2.0**-k
        return sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, self.dim))

    def curve_cloud(self, n: int, projected: bool = False) -> WeightedCloud:
        """Stratified sample t_j = (j + 1/2)/n of the pushforward of Lebesgue measure."""
        X = self.curve((np.arange(n) + 0.5) / n)
        if projected:
            X = self.pi_star(X)
        meta = {"system": "a1-r2" if projected else "a1-r1", "resolution": self.resolution,
                "tail_bound": self.tail_bound, "total_mass": 1.0}
        return WeightedCloud(X, np.full(n, 1.0 / n), meta)

    @staticmethod
    def pi_star(X):
        """Orthogonal projection killing the e_0 coordinate."""
        X = sp.csr_matrix(X, copy=True)
        X = X.tocsc()
        X[:, 0] = 0.0
        X = X.tocsr()
        X.eliminate_zeros()
        return X

    @property
    def resolution(self) -> float:
        """Distance between the two curve pieces meeting at a level-K dyadic point."""
        return self.alpha * math.sqrt(2.0) * 2.0**-self.K


def _a1_shift(K: int, a: int, keep_e0: bool) -> sp.csr_matrix:
    """Partial isometry e_{k,i} ↦ e_{k+1, 2^k a + i}, dropping level K."""
    d = 1 + 2 ** (K + 1) - 2
    rows, cols = [], []
    if keep_e0:
        rows.append(0)
        cols.append(0)
    for k in range(1, K):
        i = np.arange(2**k)
        cols.extend(a1_index(k, 0) + i)
        rows.extend(a1_index(k + 1, 0) + 2**k * a + i)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(d, d))


def make_example_a1(alpha: float = 2.0, K: int = 12) -> ExampleA1:
    """Build the curve system (R1) and its projected system (R2).

    Both use two maps of ratio 1/2. Separation is certified structurally:
    the image under u_a lies in (α/2)e_{1,a} + W with W orthogonal to
    e_{1,0} and e_{1,1}, so the two images are α/√2 apart.
    """
    alpha = float(alpha)
    if not alpha > math.sqrt(2.0):
        raise ParameterError("alpha must exceed sqrt(2)")
    K = int(K)
    if K < 2:
        raise ParameterError("truncation level K must be at least 2")
    d = 1 + 2 ** (K + 1) - 2
    tail = alpha * 2.0**-K
    out = {}
    for label, keep_e0 in (("r1", True), ("r2", False)):
        maps = []
        for a in (0, 1):
            b = np.zeros(d)
            if keep_e0:
                b[0] = 0.5 * a
            b[a1_index(1, a)] = 0.5 * alpha
            P = _a1_shift(K, a, keep_e0)
            maps.append(MobiusMap(d, MapKind.SIMILARITY, None, 0.5, P, b, truncated=True))
        # structural witness: no map writes into level-1 coordinates
        for g in maps:
            lvl1 = g.rotation[[a1_index(1, 0), a1_index(1, 1)]]
            assert lvl1.nnz == 0
        # the fixed point of u_0 is the curve start point; the barycenter sets the seed
        start = np.zeros(d)
        if keep_e0:
            start[0] = 0.0
        center = np.zeros(d)
        center[0] = 0.5 if keep_e0 else 0.0
        for k in range(1, K + 1):
            start[a1_index(k, 0)] = alpha * 2.0**-k
            center[a1_index(k, 0):a1_index(k, 0) + 2**k] = alpha * 4.0**-k
        reach = max(np.linalg.norm(g.apply_many(center[None, :])[0] - center) for g in maps)
        seed = Ball(center, 2.0 * reach * (1 + 1e-9))
        cert = SeparationCertificate(
            "SSC", alpha / math.sqrt(2.0), (0, 1),
            "image of map a lies in (alpha/2) e_{1,a} + W, W orthogonal to e_{1,0}, e_{1,1}")
        meta = {"tail_bound": tail, "resolution": alpha * math.sqrt(2.0) * 2.0**-K, "alpha": alpha, "K": K}
        out[label] = CIFS(maps, seed, certificate=cert, name=f"a1-{label}", meta=meta,
                          basepoint=sp.csr_matrix(start))
    return ExampleA1(alpha, K, d, out["r1"], out["r2"], tail)
