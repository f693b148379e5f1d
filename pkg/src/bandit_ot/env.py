"""Synthetic bandit environments with known cost and cached baselines."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field

import numpy as np

from .basis import (
    DecayProfile,
    OrthonormalBasis,
    analyze,
    cosine_basis,
    decay_cost,
    gram_schmidt,
    loci_indicator_basis,
)
from .measures import (
    FEAS_TOL,
    CostTable,
    DiscreteMeasure,
    as_table,
    check_coupling,
    pairing,
    product_measure,
    relative_entropy,
)
from .transport import EntropicValue, KantorovichBaseline, entropic_value, kantorovich_baseline


class InfeasibleAction(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Centered reward noise.  ``uniform`` draws from ``[-b, b]`` and declares
    ``sigma = b / sqrt(3)``, which is a valid sub-Gaussian proxy because
    bounded symmetric uniform noise is strictly sub-Gaussian."""

    kind: str
    sigma: float
    b: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @classmethod
    def gaussian(cls, sigma):
        return cls("gaussian", float(sigma))

    @classmethod
    def uniform(cls, b):
        return cls("uniform", float(b) / np.sqrt(3.0), float(b))

    def sample(self, rng, size=None):
        if self.sigma == 0:
            return 0.0 if size is None else np.zeros(size)
        if self.kind == "gaussian":
            return rng.normal(0.0, self.sigma, size)
        return rng.uniform(-self.b, self.b, size)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma, "b": self.b}


def lipschitz_constant(cost, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Largest ratio ``|c(p) - c(p')| / |p - p'|`` over grid-point pairs of the
    product space ``supp(mu) x supp(nu)``."""
    c = as_table(cost).ravel()
    pts = np.concatenate(
        [np.repeat(mu.points, nu.size, axis=0), np.tile(nu.points, (mu.size, 1))], axis=1
    )
    if len(c) < 2:
        return 0.0
    dc = np.abs(c[:, None] - c[None, :])
    dx = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    off = ~np.eye(len(c), dtype=bool)
    return float(np.max(dc[off] / dx[off]))


@dataclass(frozen=True)
class RegretTerms:
    kant_lo: float
    kant_hi: float
    ent: float


@dataclass(eq=False)
class BanditEnv:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    true_cost: CostTable
    true_coeffs: np.ndarray
    basis: OrthonormalBasis
    noise: NoiseModel
    seed: int
    C: float
    descriptor: dict = field(default_factory=dict)
    L: float = field(init=False)
    _kant: KantorovichBaseline | None = field(default=None, init=False, repr=False)
    _ent: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self.true_coeffs = np.asarray(self.true_coeffs, dtype=float)
        if np.linalg.norm(self.true_coeffs) > self.C + 1e-10:
            raise ValueError("declared scale C is below the coefficient norm")
        self.L = lipschitz_constant(self.true_cost, self.mu, self.nu)
        self.rho = product_measure(self.mu, self.nu)

    @property
    def shape(self):
        return (self.mu.size, self.nu.size)

    @property
    def sigma(self) -> float:
        return self.noise.sigma

    def hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.mu.points, self.mu.weights, self.nu.points, self.nu.weights,
                  self.true_cost.values, self.true_coeffs, self.basis.eval):
            h.update(np.ascontiguousarray(a, dtype=float).tobytes())
        h.update(json.dumps([self.noise.to_dict(), self.seed, self.C], sort_keys=True).encode())
        return h.hexdigest()[:16]

    def kantorovich(self) -> KantorovichBaseline:
        with self._lock:
            if self._kant is None:
                self._kant = kantorovich_baseline(self.true_cost, self.mu, self.nu)
            return self._kant

    def entropic(self, epsilon: float) -> EntropicValue:
        key = float(epsilon)
        with self._lock:
            if key not in self._ent:
                self._ent[key] = entropic_value(self.true_cost, self.mu, self.nu, key)
            return self._ent[key]

    def pull(self, pi, rng) -> float:
        rep = check_coupling(pi, self.mu, self.nu, FEAS_TOL)
        if not rep.feasible:
            raise InfeasibleAction(
                f"action is not a coupling (row {rep.row_error:.1e}, col {rep.col_error:.1e}, min {rep.min_entry:.1e})"
            )
        return pairing(self.true_cost, pi) + float(self.noise.sample(rng))

    def regret_terms(self, pi, epsilon: float | None) -> RegretTerms:
        """Instant Kantorovich excess (as an interval) and entropic excess at
        ``epsilon``; the latter is NaN when ``epsilon`` is None."""
        cost = pairing(self.true_cost, pi)
        kb = self.kantorovich()
        ent = np.nan
        if epsilon is not None:
            ent = cost + epsilon * relative_entropy(pi, self.rho) - self.entropic(epsilon).value
        return RegretTerms(cost - kb.upper, cost - kb.lower, float(ent))

    def to_dict(self):
        return {
            "type": "BanditEnv",
            "hash": self.hash(),
            "descriptor": self.descriptor,
            "mu": self.mu.to_dict(),
            "nu": self.nu.to_dict(),
            "cost": self.true_cost.to_dict(),
            "coeffs": self.true_coeffs.tolist(),
            "basis": self.basis.name,
            "noise": self.noise.to_dict(),
            "seed": self.seed,
            "C": self.C,
            "L": self.L,
        }


def regret_terms(env: BanditEnv, pi, epsilon: float | None) -> RegretTerms:
    return env.regret_terms(pi, epsilon)


def _noise(sigma, noise_kind):
    if noise_kind == "uniform":
        return NoiseModel.uniform(float(sigma) * np.sqrt(3.0))
    return NoiseModel.gaussian(sigma)


def _line_measure(weights, size):
    w = np.full(size, 1.0 / size) if weights is None else np.asarray(weights, dtype=float)
    return DiscreteMeasure.on_line(w)


def make_matching_env(
    K: int,
    Kp: int,
    cost_gen: str = "random-uniform",
    sigma: float = 0.1,
    seed: int = 0,
    mu_weights=None,
    nu_weights=None,
    cost=None,
    noise_kind: str = "gaussian",
) -> BanditEnv:
    """Matching problem on the integer loci ``0..K-1`` and ``0..K'-1``.

    ``random-uniform`` draws each cell cost from U[0, 1]; ``structured`` uses
    ``|i - j| / max(K-1, K'-1)``; an explicit ``cost`` table overrides both.
    The declared scale is ``max |c|``, which dominates ``||c||_{L2(rho)}``.
    """
    if K < 1 or Kp < 1:
        raise ValueError("K and K' must be positive")
    mu, nu = _line_measure(mu_weights, K), _line_measure(nu_weights, Kp)
    if cost is not None:
        c = as_table(cost)
        cost_gen = "explicit"
    elif cost_gen == "random-uniform":
        c = np.random.default_rng(seed).uniform(0.0, 1.0, (K, Kp))
    elif cost_gen == "structured":
        c = np.abs(np.arange(K)[:, None] - np.arange(Kp)[None, :]) / max(K - 1, Kp - 1, 1)
    else:
        raise ValueError(f"unknown cost generator {cost_gen!r}")
    basis = loci_indicator_basis(mu, nu)
    coeffs = analyze(c, basis)
    C = float(np.max(np.abs(c)))
    desc = {"generator": "matching", "K": K, "Kp": Kp, "cost_gen": cost_gen, "sigma": sigma,
            "seed": seed, "noise_kind": noise_kind}
    if cost is not None:
        desc["cost"] = c.tolist()
    if mu_weights is not None:
        desc["mu_weights"] = list(map(float, mu_weights))
    if nu_weights is not None:
        desc["nu_weights"] = list(map(float, nu_weights))
    return BanditEnv(mu, nu, CostTable(c, scale=C), coeffs, basis, _noise(sigma, noise_kind), seed, C, desc)


def quadratic_embeddings(embeddings):
    """Products ``Phi_i * Phi_j`` for the model ``c = Phi^T Theta Phi``;
    ``theta`` for the linear form is ``Theta.ravel()``."""
    tabs = [as_table(e) for e in embeddings]
    return [a * b for a in tabs for b in tabs]


def make_parametric_env(
    embeddings,
    theta_star,
    sigma: float = 0.1,
    seed: int = 0,
    mu_weights=None,
    nu_weights=None,
    noise_kind: str = "gaussian",
    drop_dependent: bool = False,
) -> BanditEnv:
    """Linear model ``c = sum theta_i Phi_i`` on an orthonormalised basis of
    the embedding span."""
    tabs = [as_table(e) for e in embeddings]
    theta_star = np.asarray(theta_star, dtype=float)
    if len(tabs) != theta_star.size:
        raise ValueError("one coefficient per embedding is required")
    K, Kp = tabs[0].shape
    mu, nu = _line_measure(mu_weights, K), _line_measure(nu_weights, Kp)
    basis = gram_schmidt(tabs, product_measure(mu, nu), drop_dependent=drop_dependent)
    c = sum(th * t for th, t in zip(theta_star, tabs))
    coeffs = analyze(c, basis)
    C = float(np.linalg.norm(coeffs))
    desc = {"generator": "parametric", "embeddings": [t.tolist() for t in tabs],
            "theta_star": theta_star.tolist(), "sigma": sigma, "seed": seed, "noise_kind": noise_kind,
            "drop_dependent": drop_dependent}
    return BanditEnv(mu, nu, CostTable(c, scale=C), coeffs, basis, _noise(sigma, noise_kind), seed, C, desc)


def make_smooth_env(K: int, Kp: int, q: float, C: float = 1.0, sigma: float = 0.1, seed: int = 0,
                    noise_kind: str = "gaussian") -> BanditEnv:
    """Cosine-basis cost with power-law coefficient decay of order ``q``."""
    basis = cosine_basis(K, Kp)
    cost, gamma = decay_cost(basis, DecayProfile.power(q), C, seed)
    mu, nu = basis.rho.row_measure, basis.rho.col_measure
    desc = {"generator": "smooth", "K": K, "Kp": Kp, "q": q, "C": C, "sigma": sigma, "seed": seed,
            "noise_kind": noise_kind}
    return BanditEnv(mu, nu, cost, gamma, basis, _noise(sigma, noise_kind), seed, float(C), desc)


def env_from_spec(spec: dict) -> BanditEnv:
    """Build an environment from its JSON descriptor."""
    spec = dict(spec)
    gen = spec.pop("generator", None)
    if gen == "matching":
        return make_matching_env(**spec)
    if gen == "parametric":
        return make_parametric_env(**spec)
    if gen == "smooth":
        return make_smooth_env(**spec)
    raise ValueError(f"unknown environment generator {gen!r}")
