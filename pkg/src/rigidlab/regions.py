"""Ball and axis-box regions and their images under Möbius maps.

Images are exact whenever possible (Möbius maps send balls to balls, and
similarities whose linear part is a signed permutation send boxes to boxes);
otherwise a bounding ball is used and the result is marked conservative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, SingularityError
from .mobius import INFINITY, MobiusMap, apply

__all__ = ["Ball", "Box", "sphere_image", "region_from_json", "image_region", "region_gap", "region_contains"]


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).ravel())
        if not self.radius >= 0:
            raise ParameterError("ball radius must be nonnegative")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol

    def bounding_ball(self) -> "Ball":
        return self

    def nearest_distance(self, p: np.ndarray) -> float:
        """Distance from p to the region (0 inside)."""
        return max(float(np.linalg.norm(p - self.center)) - self.radius, 0.0)

    def farthest_distance(self, p: np.ndarray) -> float:
        return float(np.linalg.norm(p - self.center)) + self.radius

    def to_json(self) -> dict:
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ParameterError("box needs matching bounds with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def bounding_ball(self) -> Ball:
        return Ball(self.center, 0.5 * self.diameter)

    def nearest_distance(self, p: np.ndarray) -> float:
        return float(np.linalg.norm(p - np.clip(p, self.lower, self.upper)))

    def farthest_distance(self, p: np.ndarray) -> float:
        far = np.where(np.abs(p - self.lower) > np.abs(p - self.upper), self.lower, self.upper)
        return float(np.linalg.norm(p - far))

    def to_json(self) -> dict:
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def region_from_json(obj: dict):
    if not isinstance(obj, dict):
        raise ParameterError("region must be a JSON object")
    kind = obj.get("type")
    try:
        if kind == "ball":
            return Ball(obj["center"], obj["radius"])
        if kind == "box":
            return Box(obj["lower"], obj["upper"])
    except KeyError as exc:
        raise ParameterError(f"{kind} region is missing {exc}") from None
    raise ParameterError(f"unknown region type {kind!r}")


def _signed_permutation(O) -> bool:
    if sp.issparse(O):
        return False
    O = np.asarray(O)
    nz = np.abs(O) > 1e-12
    return bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1)
                and np.allclose(np.abs(O[nz]), 1.0, atol=1e-12))


def sphere_image(g: MobiusMap, ball: Ball) -> Ball:
    """Ball bounded by the image of the sphere ∂ball (the pole may lie inside).

    The line through the pole and the center maps to a line of symmetry of
    the image sphere, so the two diametral points on it map to diametral
    points of the image.
    """
    if g.is_similarity and g.scale is not None:
        c = g.apply_many(ball.center[None, :])[0]
        return Ball(c, g.scale * ball.radius)
    p = g.pole
    off = ball.center - p
    dist = np.linalg.norm(off)
    if abs(dist - ball.radius) <= 1e-14 * max(dist, ball.radius):
        raise SingularityError("the pole of the map lies on the sphere")
    if dist > 0:
        u = off / dist
    else:
        u = np.zeros(ball.dim)
        u[0] = 1.0
    a = apply(g, ball.center - ball.radius * u)
    b = apply(g, ball.center + ball.radius * u)
    return Ball(0.5 * (a + b), 0.5 * np.linalg.norm(a - b))


def _ball_image(g: MobiusMap, ball: Ball) -> Ball:
    if not (g.is_similarity and g.scale is not None):
        p = g.pole
        if p is not INFINITY and np.linalg.norm(ball.center - p) <= ball.radius:
            raise SingularityError("the pole of the map lies in the ball")
    return sphere_image(g, ball)


def image_region(g: MobiusMap, region):
    """Return (image_region, exact) for g applied to a Ball or Box."""
    if isinstance(region, Box):
        if g.is_similarity and g.scale is not None and _signed_permutation(g.rotation):
            corners = g.apply_many(np.vstack([region.lower, region.upper]))
            return Box(corners.min(axis=0), corners.max(axis=0)), True
        return _ball_image(g, region.bounding_ball()), False
    return _ball_image(g, region), True


def region_gap(A, B) -> float:
    """Signed separation: positive gap between disjoint regions, zero when
    touching, negative (minus a penetration depth) when interiors overlap."""
    if isinstance(A, Ball) and isinstance(B, Ball):
        return float(np.linalg.norm(A.center - B.center) - A.radius - B.radius)
    if isinstance(A, Box) and isinstance(B, Box):
        sep = np.maximum(B.lower - A.upper, A.lower - B.upper)
        if np.all(sep < 0):
            return float(np.max(sep))
        return float(np.linalg.norm(np.maximum(sep, 0.0)))
    ball, box = (A, B) if isinstance(A, Ball) else (B, A)
    inside = box.contains(ball.center)
    if inside:
        depth = np.min(np.minimum(ball.center - box.lower, box.upper - ball.center))
        return float(-(depth + ball.radius))
    return box.nearest_distance(ball.center) - ball.radius


def region_contains(outer, inner, tol: float = 0.0) -> bool:
    if isinstance(outer, Ball):
        return inner.farthest_distance(outer.center) <= outer.radius + tol if isinstance(inner, Box) else (
            np.linalg.norm(inner.center - outer.center) + inner.radius <= outer.radius + tol)
    if isinstance(inner, Ball):
        return bool(np.all(inner.center - inner.radius >= outer.lower - tol)
                    and np.all(inner.center + inner.radius <= outer.upper + tol))
    return bool(np.all(inner.lower >= outer.lower - tol) and np.all(inner.upper <= outer.upper + tol))
