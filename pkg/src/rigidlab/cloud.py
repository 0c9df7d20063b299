"""Weighted point clouds used as sampled stand-ins for measures."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError

__all__ = ["WeightedCloud", "read_csv", "read_ply_vertices"]


@dataclass(frozen=True, eq=False)
class WeightedCloud:
    """Points (dense ``(N, d)`` array or CSR matrix) with nonnegative weights.

    ``meta`` carries provenance such as the generating system, sampling depth,
    seed and total mass.
    """

    points: object
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        P = self.points
        if sp.issparse(P):
            P = sp.csr_matrix(P, dtype=float)
        else:
            P = np.atleast_2d(np.asarray(P, dtype=float))
            if not np.all(np.isfinite(P)):
                raise ParameterError("cloud points must be finite")
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != P.shape[0]:
            raise ParameterError(f"{P.shape[0]} points but {w.shape[0]} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("weights must be finite and nonnegative")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)
        meta = dict(self.meta)
        meta.setdefault("total_mass", float(w.sum()))
        object.__setattr__(self, "meta", meta)

    @classmethod
    def uniform(cls, points, **meta) -> "WeightedCloud":
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n), meta)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.points)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def dense(self) -> np.ndarray:
        return self.points.toarray() if self.is_sparse else self.points

    def with_points(self, points, **meta_updates) -> "WeightedCloud":
        meta = {**self.meta, **meta_updates}
        return WeightedCloud(points, self.weights, meta)

    # -- export -------------------------------------------------------------
    def to_csv(self, path_or_buf=None) -> str | None:
        """CSV with header x0,...,x{d-1},weight; floats printed round-trip exact."""
        buf = io.StringIO()
        d = self.dim
        buf.write(",".join([f"x{i}" for i in range(d)] + ["weight"]) + "\n")
        np.savetxt(buf, np.column_stack([self.dense(), self.weights]), fmt="%.17g", delimiter=",")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return None

    def to_ply(self, path, comments=()) -> None:
        """Binary little-endian PLY of the first three coordinates (zero padded).

        Each entry of ``comments`` becomes a header comment line.
        """
        X = self.dense()
        xyz = np.zeros((X.shape[0], 3), dtype="<f4")
        m = min(3, X.shape[1])
        xyz[:, :m] = X[:, :m]
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            + "".join(f"comment {c}\n" for c in comments)
            + f"element vertex {X.shape[0]}\n"
            "property float x\nproperty float y\nproperty float z\nend_header\n"
        )
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(xyz.tobytes())


def read_csv(path_or_buf) -> WeightedCloud:
    """Inverse of :meth:`WeightedCloud.to_csv`. A missing weight column means uniform weights."""
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf, newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParameterError("empty cloud file")
    header = [h.strip() for h in rows[0]]
    has_w = header[-1] == "weight"
    d = len(header) - 1 if has_w else len(header)
    if header[:d] != [f"x{i}" for i in range(d)]:
        raise ParameterError("cloud CSV header must be x0,...,x{d-1}[,weight]")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ParameterError(f"non-numeric entry in cloud CSV: {exc}") from None
    if data.size == 0:
        raise ParameterError("cloud CSV has no points")
    if data.shape[1] != len(header):
        raise ParameterError("ragged cloud CSV")
    if has_w:
        return WeightedCloud(data[:, :d], data[:, d])
    return WeightedCloud.uniform(data)


def read_ply_vertices(path) -> np.ndarray:
    """Read back the vertex block written by :meth:`WeightedCloud.to_ply`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.index(b"end_header\n") + len(b"end_header\n")
    n = int([ln for ln in blob[:end].decode().splitlines() if ln.startswith("element vertex")][0].split()[-1])
    return np.frombuffer(blob, dtype="<f4", count=3 * n, offset=end).astype(float).reshape(n, 3)
