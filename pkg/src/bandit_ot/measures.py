"""Discrete measures, couplings and the elementary OT functionals.

Everything here is finitely supported: a marginal is a weighted point cloud
and a coupling is a ``K x K'`` mass table over ``supp(mu) x supp(nu)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WEIGHT_TOL = 1e-12
FEAS_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure with finite support in R^d.

    ``points`` has shape ``(K, d)`` (a 1-D input is read as ``d = 1``) and
    ``weights`` shape ``(K,)``.  Weights are checked against ``WEIGHT_TOL``
    and then renormalised so they sum to one exactly.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] != w.size:
            raise ValueError(f"points {pts.shape} and weights {w.shape} disagree")
        if w.size == 0:
            raise ValueError("empty support")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("support points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w / w.sum()))

    @classmethod
    def uniform(cls, points):
        pts = np.asarray(points, dtype=float)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @classmethod
    def on_line(cls, weights):
        """Measure on the integer loci ``0, 1, ..., K-1`` of the real line."""
        w = np.asarray(weights, dtype=float)
        return cls(np.arange(w.size, dtype=float), w)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_dict(self):
        return {
            "type": "DiscreteMeasure",
            "shape": list(self.points.shape),
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        pts = np.asarray(d["points"], dtype=float).reshape(d["shape"])
        return cls(pts, d["weights"])


@dataclass(frozen=True)
class ProductMeasure:
    """The independent coupling ``mu x nu``, used as entropy reference."""

    row_measure: DiscreteMeasure
    col_measure: DiscreteMeasure
    weight_table: np.ndarray = field(init=False)

    def __post_init__(self):
        table = np.outer(self.row_measure.weights, self.col_measure.weights)
        object.__setattr__(self, "weight_table", _frozen(table))

    @property
    def shape(self):
        return self.weight_table.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weight_table, dtype=dtype)


def product_measure(mu: DiscreteMeasure, nu: DiscreteMeasure) -> ProductMeasure:
    return ProductMeasure(mu, nu)


@dataclass(frozen=True)
class Coupling:
    """Nonnegative mass table; marginal feasibility is checked separately
    by :func:`check_coupling` since it needs ``mu`` and ``nu``."""

    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.ndim != 2:
            raise ValueError("coupling mass must be a 2-D table")
        if not np.all(np.isfinite(m)):
            raise ValueError("coupling mass must be finite")
        if np.any(m < 0):
            raise ValueError("coupling mass must be nonnegative")
        object.__setattr__(self, "mass", _frozen(m))

    @property
    def shape(self):
        return self.mass.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.mass, dtype=dtype)

    def to_dict(self):
        return {"type": "Coupling", "shape": list(self.shape), "mass": self.mass.ravel().tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mass"], dtype=float).reshape(d["shape"]))


@dataclass(frozen=True)
class CostTable:
    """Cost values on the support grid.

    ``lipschitz`` and ``scale`` (an upper bound on the L2(rho) norm) are
    carried along when known; both are optional.
    """

    values: np.ndarray
    lipschitz: float | None = None
    scale: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("cost table must be 2-D")
        if not np.all(np.isfinite(v)):
            raise ValueError("cost values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def to_dict(self):
        return {
            "type": "CostTable",
            "shape": list(self.shape),
            "values": self.values.ravel().tolist(),
            "lipschitz": self.lipschitz,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d):
        vals = np.asarray(d["values"], dtype=float).reshape(d["shape"])
        return cls(vals, d.get("lipschitz"), d.get("scale"))


def as_table(x) -> np.ndarray:
    """Plain float array view of a table-like object."""
    return np.asarray(x, dtype=float)


def pairing(c, pi) -> float:
    """Duality pairing ``<c | pi> = sum_ij c_ij pi_ij``."""
    c, pi = as_table(c), as_table(pi)
    if c.shape != pi.shape:
        raise ValueError(f"shape mismatch: cost {c.shape} vs plan {pi.shape}")
    return float(np.sum(c * pi))


def relative_entropy(pi, rho) -> float:
    """KL divergence ``H(pi | rho)`` with ``0 log 0 = 0``.

    Returns ``inf`` when ``pi`` charges a cell that ``rho`` does not.
    """
    pi, rho = as_table(pi), as_table(rho)
    if pi.shape != rho.shape:
        raise ValueError(f"shape mismatch: plan {pi.shape} vs reference {rho.shape}")
    pos = pi > 0
    if np.any(pos & (rho <= 0)):
        return float("inf")
    p = pi[pos]
    return float(np.sum(p * (np.log(p) - np.log(rho[pos]))))


@dataclass(frozen=True)
class FeasibilityReport:
    row_error: float
    col_error: float
    min_entry: float
    tol: float

    @property
    def feasible(self) -> bool:
        return (
            self.row_error <= self.tol
            and self.col_error <= self.tol
            and self.min_entry >= -self.tol
        )

    def __bool__(self):
        return self.feasible


def check_coupling(pi, mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = FEAS_TOL) -> FeasibilityReport:
    pi = as_table(pi)
    if pi.shape != (mu.size, nu.size):
        raise ValueError(f"plan shape {pi.shape} does not match marginals ({mu.size}, {nu.size})")
    return FeasibilityReport(
        row_error=float(np.max(np.abs(pi.sum(axis=1) - mu.weights))),
        col_error=float(np.max(np.abs(pi.sum(axis=0) - nu.weights))),
        min_entry=float(pi.min()),
        tol=tol,
    )
