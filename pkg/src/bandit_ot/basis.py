"""Orthonormal systems of L2(rho) on the support grid.

A basis is stored as its values on the ``K * K'`` grid cells (row-major),
so that analysis, synthesis and the action features are all small dense
products.  For a coupling ``pi`` the feature vector is
``theta_k = sum_cells phi_k * pi``; for a cost ``c = sum_k gamma_k phi_k``
this gives ``<c | pi> = gamma . theta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import CostTable, DiscreteMeasure, ProductMeasure, as_table, product_measure

GRAM_TOL = 1e-10
PIVOT_TOL = 1e-10


class RankDeficient(ValueError):
    def __init__(self, index, norm):
        super().__init__(f"embedding {index} is dependent on its predecessors (residual norm {norm:.2e})")
        self.index = index


class ZeroReferenceMass(ValueError):
    pass


@dataclass(frozen=True)
class OrthonormalBasis:
    eval: np.ndarray  # (n_max, K*K')
    rho: ProductMeasure
    name: str = "custom"

    def __post_init__(self):
        ev = np.array(self.eval, dtype=float)
        if ev.ndim != 2 or ev.shape[1] != self.rho.weight_table.size:
            raise ValueError("basis table must have one column per grid cell")
        ev.setflags(write=False)
        object.__setattr__(self, "eval", ev)
        err = np.max(np.abs(self.gram() - np.eye(self.n_max)), initial=0.0)
        if err > GRAM_TOL:
            raise ValueError(f"basis is not orthonormal in L2(rho): max Gram error {err:.2e}")

    @property
    def n_max(self) -> int:
        return self.eval.shape[0]

    @property
    def grid_shape(self):
        return self.rho.shape

    def gram(self) -> np.ndarray:
        w = self.rho.weight_table.ravel()
        return (self.eval * w) @ self.eval.T

    def function(self, k: int) -> np.ndarray:
        """Values of the ``k``-th (0-based) function as a grid table."""
        return self.eval[k].reshape(self.grid_shape)

    def to_dict(self):
        return {
            "type": "OrthonormalBasis",
            "name": self.name,
            "n_max": self.n_max,
            "grid_shape": list(self.grid_shape),
            "eval": self.eval.tolist(),
        }


@dataclass(frozen=True)
class DecayProfile:
    """Cumulative coefficient mass profile ``zeta``.

    ``kind="finite"`` is the step ``zeta(n) = 1[n >= N]``; ``kind="power"``
    is ``zeta(n) = 1 - n**-q`` for ``n >= 1``.  Both have ``zeta(0) = 0``.
    """

    kind: str
    N: int | None = None
    q: float | None = None

    def __post_init__(self):
        if self.kind == "finite":
            if self.N is None or self.N < 1:
                raise ValueError("finite profile needs N >= 1")
        elif self.kind == "power":
            if self.q is None or not self.q > 0:
                raise ValueError("power profile needs q > 0")
        else:
            raise ValueError(f"unknown decay profile {self.kind!r}")

    @classmethod
    def finite(cls, N):
        return cls("finite", N=int(N))

    @classmethod
    def power(cls, q):
        return cls("power", q=float(q))

    def zeta(self, n):
        n = np.asarray(n, dtype=float)
        if self.kind == "finite":
            out = (n >= self.N).astype(float)
        else:
            with np.errstate(divide="ignore"):
                out = np.where(n >= 1, 1.0 - np.power(np.maximum(n, 1.0), -self.q), 0.0)
        return out if out.ndim else float(out)


def _weights(rho):
    return np.asarray(rho, dtype=float).ravel()


def _l2_norm(f, w):
    return float(np.sqrt(np.sum(w * f * f)))


def loci_indicator_basis(mu: DiscreteMeasure, nu: DiscreteMeasure) -> OrthonormalBasis:
    """Normalised cell indicators ``1_{(i,j)} / sqrt(rho_ij)``, index ``i*K' + j``."""
    rho = product_measure(mu, nu)
    w = _weights(rho)
    if np.any(w <= 0):
        raise ZeroReferenceMass("every grid cell needs positive reference mass")
    return OrthonormalBasis(np.diag(1.0 / np.sqrt(w)), rho, name="loci")


def _orthonormalize(vectors, w, existing=None, skip_dependent=False):
    """Modified Gram-Schmidt with one re-orthogonalisation pass in L2(w)."""
    basis = [] if existing is None else list(existing)
    for idx, v in enumerate(vectors):
        u = np.array(v, dtype=float)
        scale = _l2_norm(u, w)
        for _ in range(2):
            for q in basis:
                u -= np.sum(w * q * u) * q
        nrm = _l2_norm(u, w)
        if nrm < PIVOT_TOL * max(scale, 1.0) or nrm == 0.0:
            if skip_dependent:
                continue
            raise RankDeficient(idx, nrm)
        basis.append(u / nrm)
    return basis


def gram_schmidt(embeddings, rho: ProductMeasure, n_max: int | None = None, drop_dependent: bool = False) -> OrthonormalBasis:
    """Orthonormalise cost tables ``Phi_1..Phi_p`` in L2(rho).

    The first ``p`` functions span the embeddings, in order.  If ``n_max > p``
    the basis is completed with cell indicators projected onto the
    orthogonal complement.  Dependent embeddings raise :class:`RankDeficient`
    unless ``drop_dependent`` is set, in which case they are skipped.
    """
    w = _weights(rho)
    vecs = [as_table(e).ravel() for e in embeddings]
    if any(v.size != w.size for v in vecs):
        raise ValueError("embedding shape does not match the grid")
    q = _orthonormalize(vecs, w, skip_dependent=drop_dependent)
    p = len(q)
    if n_max is not None and n_max > p:
        if n_max > w.size:
            raise ValueError(f"n_max={n_max} exceeds the grid dimension {w.size}")
        q = _orthonormalize(np.eye(w.size), w, existing=q, skip_dependent=True)[:n_max]
    return OrthonormalBasis(np.array(q), rho, name="gram-schmidt")


def cosine_frequencies(K: int, Kp: int):
    """Frequency pairs ordered by total frequency, ties by row frequency."""
    return sorted(((k, l) for k in range(K) for l in range(Kp)), key=lambda kl: (kl[0] + kl[1], kl[0]))


def cosine_basis(K: int, Kp: int, n_max: int | None = None, rho: ProductMeasure | None = None) -> OrthonormalBasis:
    """Separable DCT-II products on the index grid, orthonormalised in L2(rho).

    With uniform ``rho`` the products are already orthogonal and this
    reproduces the usual normalised DCT system; otherwise Gram-Schmidt
    restores orthonormality against ``rho`` in the same order.
    """
    if rho is None:
        rho = product_measure(
            DiscreteMeasure.on_line(np.full(K, 1.0 / K)),
            DiscreteMeasure.on_line(np.full(Kp, 1.0 / Kp)),
        )
    if rho.shape != (K, Kp):
        raise ValueError("reference measure does not match the grid")
    n_max = K * Kp if n_max is None else int(n_max)
    if not 1 <= n_max <= K * Kp:
        raise ValueError(f"n_max must lie in [1, {K * Kp}]")
    i = (np.arange(K) + 0.5) / K
    j = (np.arange(Kp) + 0.5) / Kp
    raw = [np.outer(np.cos(np.pi * k * i), np.cos(np.pi * l * j)).ravel() for k, l in cosine_frequencies(K, Kp)[:n_max]]
    q = _orthonormalize(raw, _weights(rho))
    return OrthonormalBasis(np.array(q), rho, name="cosine")


def analyze(c, basis: OrthonormalBasis, n: int | None = None) -> np.ndarray:
    """Coefficients ``<c, phi_k>_{L2(rho)}`` for the first ``n`` functions."""
    n = basis.n_max if n is None else n
    w = basis.rho.weight_table.ravel()
    return basis.eval[:n] @ (as_table(c).ravel() * w)


def synthesize(gamma, basis: OrthonormalBasis) -> CostTable:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.size > basis.n_max:
        raise ValueError(f"{gamma.size} coefficients for a basis of size {basis.n_max}")
    return CostTable((gamma @ basis.eval[: gamma.size]).reshape(basis.grid_shape))


def features(pi, basis: OrthonormalBasis, n: int | None = None) -> np.ndarray:
    """Action features ``theta_k = integral of phi_k against pi``, ``k < n``."""
    n = basis.n_max if n is None else n
    if n > basis.n_max:
        raise ValueError(f"order {n} exceeds basis size {basis.n_max}")
    return basis.eval[:n] @ as_table(pi).ravel()


def decay_cost(basis: OrthonormalBasis, profile: DecayProfile, C: float, seed) -> tuple[CostTable, np.ndarray]:
    """Cost whose coefficient magnitudes follow ``profile``.

    ``|gamma_i| = C * (zeta(i) - zeta(i-1))`` for ``i = 1..n_max`` so the
    partial l1 sums equal ``C * zeta(n)``; signs are random.
    """
    rng = np.random.default_rng(seed)
    idx = np.arange(1, basis.n_max + 1)
    mags = C * (profile.zeta(idx) - profile.zeta(idx - 1))
    signs = rng.choice([-1.0, 1.0], size=basis.n_max)
    gamma = signs * mags
    return CostTable(synthesize(gamma, basis).values, scale=float(C)), gamma


def tail_bound(gamma_full, n: int) -> float:
    """l1 mass of the coefficients past order ``n``."""
    return float(np.sum(np.abs(np.asarray(gamma_full, dtype=float)[n:])))


def truncation_error_bound(gamma_full, pi, basis: OrthonormalBasis, n: int) -> float:
    """Upper bound on ``|<c|pi> - gamma[:n] . theta[:n]|``: the tail mass times
    the largest discarded feature magnitude."""
    th = features(pi, basis)
    tail = np.abs(np.asarray(gamma_full, dtype=float)[n:])
    if tail.size == 0:
        return 0.0
    return float(np.sum(tail) * np.max(np.abs(th[n:])))


def density_norm(pi, rho) -> float:
    """``||d pi / d rho||_{L2(rho)}``."""
    pi, w = as_table(pi), as_table(rho)
    return float(np.sqrt(np.sum(pi[w > 0] ** 2 / w[w > 0])))
