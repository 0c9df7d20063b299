"""Numerical checks on the truncated curve system built by
:func:`rigidlab.ifs.make_example_a1`.

R1 is the graph-like curve F([0,1]) and R2 its image with the e_0
coordinate removed. The checks are:

* mass distribution: sup of μ1(B(x, r))/r over random balls centered on
  the curve stays below √2/α (which bounds H¹(R1) from below);
* projection shrinkage: 3-dimensional projections of R2 have small length;
* the projection of R1 onto the e_0 axis has length 1;
* the projection change-of-variables identity on monotone directions.
"""

from __future__ import annotations

import math

import numpy as np

from .grassmann import Subspace, orthonormal_frame, random_subspace
from .ifs import ExampleA1, a1_index
from .rigidity import ball_mass_ratios, projected_measure_estimate, pseudorect_identity_check

__all__ = [
    "mass_distribution_check",
    "projection_shrinkage_check",
    "axis_projection_check",
    "pseudorect_check",
    "run_bench",
    "BENCH_CHECKS",
]

BENCH_CHECKS = ("mass_distribution", "projection_shrinkage", "axis_projection", "pseudorect")


def mass_distribution_check(E: ExampleA1, n_balls: int = 10_000, n_samples: int = 2**16, seed: int = 0,
                            slack: float = 0.05) -> dict:
    """Largest μ1(B(x, r))/r over ``n_balls`` random balls.

    Centers are curve samples; radii are log-uniform between the truncation
    resolution (below it the truncated curve is a straight segment) and 2.
    """
    rng = np.random.default_rng(seed)
    cloud = E.curve_cloud(n_samples)
    centers = cloud.points[rng.integers(0, cloud.n_points, n_balls)]
    floor = E.resolution
    radii = np.exp(rng.uniform(math.log(floor), math.log(2.0), n_balls))
    ratios = ball_mass_ratios(cloud, centers, radii)
    bound = math.sqrt(2.0) / E.alpha
    sup = float(ratios.max())
    return {"sup_ratio": sup, "bound": bound, "limit": bound * (1 + slack), "radius_floor": floor,
            "n_balls": n_balls, "n_samples": n_samples, "passed": bool(sup <= bound * (1 + slack))}


def projection_shrinkage_check(E: ExampleA1, n_subspaces: int = 20, dim: int = 3, n_samples: int = 4096,
                               seed: int = 0, threshold: float = 0.1) -> dict:
    """Projected length of R2 onto random ``dim``-dimensional subspaces."""
    rng = np.random.default_rng(seed)
    cloud = E.curve_cloud(n_samples, projected=True)
    est = [projected_measure_estimate(cloud, random_subspace(E.dim, dim, rng), 1, seed=seed)
           for _ in range(n_subspaces)]
    return {"estimates": est, "max": float(max(est)), "threshold": threshold, "passed": bool(max(est) <= threshold)}


def axis_projection_check(E: ExampleA1, n_samples: int = 4096, seed: int = 0, tol: float = 0.02) -> dict:
    """Projected length of R1 onto the e_0 axis, which is exactly 1."""
    L0 = Subspace.coordinate(E.dim, [0])
    est = projected_measure_estimate(E.curve_cloud(n_samples), L0, 1, seed=seed)
    return {"length": est, "expected": 1.0, "tol": tol, "passed": bool(abs(est - 1.0) <= tol)}


def monotone_direction(E: ExampleA1, rng: np.random.Generator, levels=(1, 2, 3), max_angle: float = math.pi / 3):
    """Unit vector cos φ e_0 + sin φ w with w increasing along each level.

    Projection of the curve onto such a line is strictly increasing in the
    curve parameter, hence injective.
    """
    w = np.zeros(E.dim)
    for k in levels:
        s = a1_index(k, 0)
        w[s:s + 2**k] = np.sort(rng.standard_normal(2**k))
    w /= np.linalg.norm(w)
    phi = rng.uniform(0.0, max_angle)
    v = math.cos(phi) * np.eye(1, E.dim, 0).ravel() + math.sin(phi) * w
    return orthonormal_frame([v])


def pseudorect_check(E: ExampleA1, n_subspaces: int = 10, n_samples: int = 4096, seed: int = 0,
                     threshold: float = 0.1) -> dict:
    """Change-of-variables identity for R1 with tangent e_0 on monotone lines."""
    rng = np.random.default_rng(seed)
    cloud = E.curve_cloud(n_samples)
    L0 = Subspace.coordinate(E.dim, [0])
    gaps, lhs, rhs = [], [], []
    for _ in range(n_subspaces):
        r = pseudorect_identity_check(cloud, L0, monotone_direction(E, rng), seed=seed)
        gaps.append(r.rel_gap)
        lhs.append(r.lhs)
        rhs.append(r.rhs)
    return {"rel_gaps": gaps, "lhs": lhs, "rhs": rhs, "max": float(max(gaps)), "threshold": threshold,
            "passed": bool(max(gaps) <= threshold)}


def run_bench(E: ExampleA1, checks=BENCH_CHECKS, seed: int = 0) -> dict:
    runners = {
        "mass_distribution": mass_distribution_check,
        "projection_shrinkage": projection_shrinkage_check,
        "axis_projection": axis_projection_check,
        "pseudorect": pseudorect_check,
    }
    return {name: runners[name](E, seed=seed) for name in checks}
