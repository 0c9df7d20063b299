"""Schottky groups acting on the upper half-space.

A group is given by generators g_i together with ping-pong regions: g_i maps
the exterior of its repelling ball into its attracting ball. Letters are
numbered so that letter 2i is g_i and letter 2i+1 is g_i⁻¹; a word is
reduced when no letter is followed by its inverse.

The orbit of the basepoint o = (1, 0) under the Poincaré extension drives
the Poincaré series, the exponent estimate, boundary samples and radial
witness searches.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cloud import WeightedCloud
from .errors import ParameterError, ResourceError, SeparationError
from .mobius import (
    INFINITY,
    MobiusMap,
    apply,
    compose,
    hyperbolic_distance_many,
    make_similarity,
    make_sphere_inversion,
    map_from_json,
    poincare_extension,
)
from .regions import Ball, region_from_json, sphere_image

__all__ = [
    "SchottkyGroup",
    "Orbit",
    "OrbitEntry",
    "ExponentEstimate",
    "RadialResult",
    "make_schottky",
    "schottky_from_circles",
    "group_from_json",
    "enumerate_orbit",
    "poincare_series_partial",
    "poincare_exponent_estimate",
    "convergence_abscissa",
    "boundary_cloud",
    "is_radial_witness",
    "attracting_fixed_point",
]

DEFAULT_ORBIT_BUDGET = 3_000_000
SHELL_WIDTH = 1.0
SHELLS_DROPPED = 3
MIN_SHELLS = 4


def inverse_letter(a: int) -> int:
    return a ^ 1


@dataclass(frozen=True, eq=False)
class SchottkyGroup:
    """Free group generated by ``generators`` with ping-pong ``regions``.

    ``regions[2i]`` is the repelling ball of generator i and ``regions[2i+1]``
    its attracting ball, so letter a has attracting region ``regions[a ^ 1]``
    read through :meth:`attracting_region`. Elementary groups (a single
    similarity) carry no regions.
    """

    generators: tuple
    regions: tuple
    dim: int
    elementary: bool = False
    min_gap: float = math.inf

    @property
    def n_pairs(self) -> int:
        return len(self.generators)

    @property
    def n_letters(self) -> int:
        return 2 * len(self.generators)

    def letter_map(self, a: int) -> MobiusMap:
        g = self.generators[a // 2]
        return g if a % 2 == 0 else g.inverse()

    def attracting_region(self, a: int):
        """Region containing the image of everything outside the inverse letter's region."""
        if self.elementary:
            return None
        return self.regions[2 * (a // 2) + 1] if a % 2 == 0 else self.regions[2 * (a // 2)]

    def letter_symbol(self, a: int) -> str:
        s = string.ascii_lowercase[a // 2]
        return s if a % 2 == 0 else s.upper()

    def word_string(self, word) -> str:
        return "".join(self.letter_symbol(a) for a in word)


def _pingpong_check(g: MobiusMap, repel: Ball, attract: Ball, tol: float) -> bool:
    """g maps the exterior of ``repel`` into ``attract``."""
    if g.is_similarity:
        return False
    # g sends the boundary sphere of repel to a sphere, and the exterior to the
    # side containing g(∞)
    img = sphere_image(g, repel)
    g_inf = apply(g, INFINITY)
    if g_inf is INFINITY:
        return False
    inside = np.linalg.norm(g_inf - img.center) < img.radius
    within = np.linalg.norm(img.center - attract.center) + img.radius <= attract.radius + tol
    return bool(inside and within)


def make_schottky(generators: Sequence[MobiusMap], regions: Sequence[Ball] = ()) -> SchottkyGroup:
    """Certify a ping-pong configuration and build the group.

    Regions must be pairwise disjoint balls at positive distance, each
    generator must map the exterior of its repelling ball into its
    attracting ball, and the basepoint (1, 0) must lie outside every
    hemisphere over a region so that orbit points stay confined.
    A single similarity with scale ≠ 1 and no regions is accepted as an
    elementary group.
    """
    generators = tuple(generators)
    if not generators:
        raise ParameterError("a group needs at least one generator")
    d = generators[0].dim
    if any(g.dim != d for g in generators):
        raise ParameterError("generators act on different dimensions")
    if not regions:
        if len(generators) == 1 and generators[0].is_similarity and abs(generators[0].scale - 1.0) > 1e-12:
            return SchottkyGroup(generators, (), d, elementary=True)
        raise ParameterError("ping-pong regions are required unless the group is elementary")
    regions = tuple(regions)
    if len(regions) != 2 * len(generators):
        raise ParameterError("need exactly two regions (repelling, attracting) per generator")
    if any(not isinstance(r, Ball) or r.dim != d for r in regions):
        raise ParameterError(f"regions must be balls in R^{d}")
    min_gap = math.inf
    scale = max(max(r.radius for r in regions), 1.0)
    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            gap = np.linalg.norm(regions[i].center - regions[j].center) - regions[i].radius - regions[j].radius
            if gap <= 1e-12 * scale:
                raise SeparationError(f"regions {i} and {j} are not separated (gap {gap:.3g})", (i, j))
            min_gap = min(min_gap, gap)
    for r_idx, r in enumerate(regions):
        if 1.0 + r.center @ r.center <= r.radius**2:
            raise ParameterError(f"basepoint (1, 0) lies inside the hemisphere over region {r_idx}")
    tol = 1e-12 * scale
    for i, g in enumerate(generators):
        if not _pingpong_check(g, regions[2 * i], regions[2 * i + 1], tol):
            raise SeparationError(f"generator {i} does not map the exterior of region {2 * i} "
                                  f"into region {2 * i + 1}", (2 * i, 2 * i + 1))
        if not _pingpong_check(g.inverse(), regions[2 * i + 1], regions[2 * i], tol):
            raise SeparationError(f"inverse of generator {i} fails the ping-pong test", (2 * i + 1, 2 * i))
    return SchottkyGroup(generators, regions, d, min_gap=float(min_gap))


def schottky_from_circles(pairs) -> SchottkyGroup:
    """Group pairing circles: generator i inverts in C1 then maps C1 onto C2 by a similarity.

    ``pairs`` is a list of ((center1, radius1), (center2, radius2)).
    """
    gens, regions = [], []
    for (c1, r1), (c2, r2) in pairs:
        c1 = np.asarray(c1, dtype=float)
        c2 = np.asarray(c2, dtype=float)
        inv = make_sphere_inversion(c1, r1)
        S = make_similarity(r2 / r1, None, c2 - (r2 / r1) * c1)
        gens.append(compose(S, inv))
        regions += [Ball(c1, r1), Ball(c2, r2)]
    return make_schottky(gens, regions)


def group_from_json(obj: dict) -> SchottkyGroup:
    """{"generators": [map spec, ...], "regions": [ball spec, ...]} or
    {"circle_pairs": [[ball spec, ball spec], ...]} for circle pairings."""
    if isinstance(obj, dict) and "circle_pairs" in obj:
        pairs = obj["circle_pairs"]
        if not isinstance(pairs, list) or any(not isinstance(p, list) or len(p) != 2 for p in pairs):
            raise ParameterError("'circle_pairs' must be a list of [ball, ball] pairs")
        balls = [[region_from_json(b) for b in p] for p in pairs]
        if any(not isinstance(b, Ball) for p in balls for b in p):
            raise ParameterError("circle pairs must be balls")
        return schottky_from_circles([((a.center, a.radius), (b.center, b.radius)) for a, b in balls])
    if not isinstance(obj, dict) or "generators" not in obj:
        raise ParameterError("group description needs a 'generators' list or 'circle_pairs'")
    gens = [map_from_json(g) for g in obj["generators"]]
    regions = [region_from_json(r) for r in obj.get("regions", [])]
    return make_schottky(gens, regions)


# -- orbit ------------------------------------------------------------------

@dataclass(frozen=True)
class OrbitEntry:
    word: tuple
    height: float
    base: np.ndarray
    displacement: float


class Orbit:
    """All reduced words up to a length, ordered by (length, lexicographic word).

    Behaves as a sequence of :class:`OrbitEntry`; the arrays ``lengths``,
    ``heights``, ``bases`` and ``displacements`` hold the same data.
    """

    def __init__(self, group, words, heights, bases, max_len):
        self.group = group
        self.words = words
        self.lengths = np.array([len(w) for w in words], dtype=int)
        self.heights = heights
        self.bases = bases
        self.max_len = max_len
        d = bases.shape[1]
        self.displacements = hyperbolic_distance_many(np.ones(len(words)), np.zeros((1, d)), heights, bases)

    def __len__(self):
        return len(self.words)

    def __getitem__(self, i) -> OrbitEntry:
        return OrbitEntry(self.words[i], float(self.heights[i]), self.bases[i], float(self.displacements[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def count_by_length(self) -> np.ndarray:
        return np.bincount(self.lengths, minlength=self.max_len + 1)


def enumerate_orbit(G: SchottkyGroup, max_word_len: int, budget: int = DEFAULT_ORBIT_BUDGET) -> Orbit:
    """Images ĝ(o) for every reduced word g with |g| ≤ max_word_len.

    Words of length n+1 are formed by prefixing a letter to words of length
    n, so ĝ = ĝ_a ∘ ĝ_w is one matrix product per word.
    """
    if max_word_len < 0:
        raise ParameterError("max_word_len must be nonnegative")
    L, q = max_word_len, G.n_letters
    total = 1 + sum(q * (q - 1) ** (n - 1) for n in range(1, L + 1))
    if total > budget:
        raise ResourceError(f"{total} orbit points exceed the budget {budget}; lower max_word_len")
    D = G.dim + 3
    ext = np.stack([poincare_extension(G.letter_map(a)) for a in range(q)])
    words = [()]
    mats = [np.eye(D)[None]]
    first = np.array([-1])
    level_words, level_mats, level_first = [()], mats[0], first
    for _ in range(L):
        new_words, new_mats, new_first = [], [], []
        for a in range(q):
            ok = level_first != inverse_letter(a)
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                continue
            new_mats.append(np.einsum("ij,wjk->wik", ext[a], level_mats[idx]))
            new_words.extend((a,) + level_words[i] for i in idx)
            new_first.append(np.full(idx.size, a))
        level_words = new_words
        level_mats = np.concatenate(new_mats)
        level_first = np.concatenate(new_first)
        words.extend(level_words)
        mats.append(level_mats)
    M = np.concatenate(mats)
    # ĝ(o) with o = (1, 0): lift is (1, -1/2, 1, 0, ...)
    o = np.zeros(D)
    o[0], o[1], o[2] = 1.0, -0.5, 1.0
    V = M @ o
    Z = V[:, 2:] / V[:, :1]
    return Orbit(G, words, Z[:, 0], Z[:, 1:], L)


def poincare_series_partial(G: SchottkyGroup, s: float, max_word_len: int, orbit: Orbit | None = None) -> float:
    """Σ over reduced words of length ≤ max_word_len of exp(−s·d(o, ĝ o))."""
    if s < 0:
        raise ParameterError("s must be nonnegative")
    if orbit is None or orbit.max_len < max_word_len:
        orbit = enumerate_orbit(G, max_word_len)
    mask = orbit.lengths <= max_word_len
    return float(math.fsum(np.exp(-s * orbit.displacements[mask])))


@dataclass(frozen=True)
class ExponentEstimate:
    delta_hat: float
    stderr: float
    residual: float
    shell_counts: list
    shell_starts: list
    usable_range: tuple
    conclusive: bool
    max_word_len: int

    def to_json(self) -> dict:
        return {
            "delta_hat": self.delta_hat, "stderr": self.stderr, "residual": self.residual,
            "shell_counts": self.shell_counts, "shell_starts": self.shell_starts,
            "usable_range": list(self.usable_range), "conclusive": self.conclusive,
            "max_word_len": self.max_word_len,
        }


def poincare_exponent_estimate(G: SchottkyGroup, max_word_len: int, orbit: Orbit | None = None) -> ExponentEstimate:
    """Growth rate of orbit counts in hyperbolic annuli of width 1.

    Only annuli lying below the smallest displacement reached by a word of
    maximal length are complete; the first three annuli are dropped and the
    slope of log(count) against the annulus start is fit by least squares.
    """
    if orbit is None or orbit.max_len != max_word_len:
        orbit = enumerate_orbit(G, max_word_len)
    disp = orbit.displacements
    horizon = float(np.min(disp[orbit.lengths == max_word_len])) if max_word_len > 0 else 0.0
    n_complete = int(math.floor(horizon / SHELL_WIDTH))
    counts = np.bincount(np.floor(disp / SHELL_WIDTH).astype(int), minlength=n_complete)[:n_complete]
    starts = np.arange(n_complete) * SHELL_WIDTH
    use = np.arange(SHELLS_DROPPED, n_complete)
    use = use[counts[use] > 0]
    if use.size < MIN_SHELLS:
        return ExponentEstimate(float("nan"), float("nan"), float("nan"), counts.tolist(), starts.tolist(),
                                (SHELLS_DROPPED, n_complete), False, max_word_len)
    x = starts[use]
    y = np.log(counts[use])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    sigma2 = float(resid @ resid) / dof
    stderr = math.sqrt(sigma2 / float(np.sum((x - x.mean()) ** 2)))
    return ExponentEstimate(float(max(coef[0], 0.0)), stderr, math.sqrt(float(np.mean(resid**2))),
                            counts.tolist(), starts.tolist(), (int(use[0]), int(use[-1]) + 1), True, max_word_len)


def convergence_abscissa(G: SchottkyGroup, max_word_len: int, rel: float = 0.01, orbit: Orbit | None = None) -> float:
    """Smallest s at which the partial sums at lengths L − 2 and L differ by less than ``rel``.

    A second estimator of the exponent, independent of the shell regression.
    """
    if orbit is None or orbit.max_len != max_word_len:
        orbit = enumerate_orbit(G, max_word_len)
    L = max_word_len

    def gap(s):
        full = poincare_series_partial(G, s, L, orbit)
        short = poincare_series_partial(G, s, L - 2, orbit)
        return (full - short) / full - rel

    lo, hi = 0.0, 1.0
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e3:
            return float("inf")
    if gap(lo) <= 0:
        return 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def boundary_cloud(G: SchottkyGroup, max_word_len: int, delta_hat: float | None = None,
                   orbit: Orbit | None = None) -> WeightedCloud:
    """Base points of the deepest orbit points, weighted by exp(−δ̂·displacement)."""
    if orbit is None or orbit.max_len != max_word_len:
        orbit = enumerate_orbit(G, max_word_len)
    if delta_hat is None:
        est = poincare_exponent_estimate(G, max_word_len, orbit)
        delta_hat = est.delta_hat if est.conclusive else 0.0
    mask = orbit.lengths == max_word_len
    disp = orbit.displacements[mask]
    logw = -delta_hat * (disp - disp.min())
    w = np.exp(logw)
    w /= math.fsum(w)
    meta = {"system": "schottky", "depth": max_word_len, "delta_hat": float(delta_hat), "total_mass": 1.0}
    return WeightedCloud(orbit.bases[mask], w, meta)


@dataclass(frozen=True)
class RadialResult:
    radial: bool
    witnesses: list
    best_ratio: float
    depth_label: str


def is_radial_witness(G: SchottkyGroup, p, orbit: Orbit, C: float, min_witnesses: int = 5) -> RadialResult:
    """Search the orbit for a conical approach to p.

    A witness is an orbit point with |ĝ(o) − p| ≤ C·height. The answer is
    positive when at least ``min_witnesses`` witnesses occur at strictly
    increasing word lengths with heights halving between consecutive ones.
    """
    if not C > 0:
        raise ParameterError("C must be positive")
    p = np.asarray(p, dtype=float).ravel()
    h = orbit.heights
    dist = np.sqrt(h**2 + np.sum((orbit.bases - p) ** 2, axis=1))
    ratio = dist / h
    nontrivial = orbit.lengths > 0
    best = float(np.min(ratio[nontrivial])) if np.any(nontrivial) else float("inf")
    cand = np.flatnonzero(nontrivial & (ratio <= C))
    chain = []
    last_len, last_h = -1, math.inf
    for n in range(1, orbit.max_len + 1):
        at_n = cand[(orbit.lengths[cand] == n) & (h[cand] <= last_h / 2)]
        if at_n.size == 0 or n <= last_len:
            continue
        i = at_n[np.argmax(h[at_n])]
        chain.append(orbit.words[i])
        last_len, last_h = n, h[i]
    label = f"depth-limited: words up to length {orbit.max_len}"
    return RadialResult(len(chain) >= min_witnesses, chain, best, label)


def attracting_fixed_point(g: MobiusMap, x0=None, iterations: int = 200) -> np.ndarray:
    """Attracting fixed point of a loxodromic map, by forward iteration."""
    x = np.zeros(g.dim) if x0 is None else np.asarray(x0, dtype=float)
    for _ in range(iterations):
        x = apply(g, x)
    return x
