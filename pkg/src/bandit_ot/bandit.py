"""Optimistic bandit planning over couplings.

Regularised least squares in basis-coefficient space, ellipsoidal confidence
sets, the entropy-regularised optimism step and the round loop that ties
them together.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import OrthonormalBasis, features
from .measures import Coupling, DiscreteMeasure, product_measure, relative_entropy
from .transport import DualPotentials, NonConvergence, independent_coupling, sinkhorn


class HistoryUnavailable(RuntimeError):
    pass


class RlsState:
    """Ridge regression of rewards on coefficient features.

    ``design = lam * I + sum theta theta^T`` and ``moment = sum theta * R``.
    Updates mutate the state in place.  When the played couplings are passed
    along, the state can be rebuilt at a larger order with :func:`rebase`.
    """

    def __init__(self, n: int, lam: float):
        if n < 1:
            raise ValueError("order must be at least 1")
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.n = int(n)
        self.lam = float(lam)
        self.design = self.lam * np.eye(self.n)
        self.moment = np.zeros(self.n)
        self.t = 0
        self.sources: list[np.ndarray | None] = []
        self.rewards: list[float] = []
        self._refactor()

    def _refactor(self):
        self._chol = cho_factor(self.design, lower=True, check_finite=False)
        self.estimate = cho_solve(self._chol, self.moment, check_finite=False)

    def solve(self, v) -> np.ndarray:
        """``design^{-1} v``."""
        return cho_solve(self._chol, v, check_finite=False)

    def logdet(self) -> float:
        """``log det(I + lam^{-1} sum theta theta^T)``."""
        return float(2.0 * np.sum(np.log(np.diag(self._chol[0]))) - self.n * math.log(self.lam))

    def copy(self) -> "RlsState":
        other = RlsState.__new__(RlsState)
        other.__dict__.update(self.__dict__)
        other.design = self.design.copy()
        other.moment = self.moment.copy()
        other.sources = list(self.sources)
        other.rewards = list(self.rewards)
        other._refactor()
        return other


def rls_update(state: RlsState, theta, reward: float, source=None) -> RlsState:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (state.n,):
        raise ValueError(f"feature length {theta.size} does not match order {state.n}")
    state.design += np.outer(theta, theta)
    state.design = 0.5 * (state.design + state.design.T)
    state.moment += theta * reward
    state.t += 1
    state.sources.append(None if source is None else np.asarray(source, dtype=float).ravel().copy())
    state.rewards.append(float(reward))
    state._refactor()
    return state


def rebase(state: RlsState, new_n: int, basis: OrthonormalBasis) -> RlsState:
    """Rebuild the regression at order ``new_n`` from the stored couplings."""
    if new_n < state.n:
        raise ValueError("order can only grow")
    if new_n == state.n:
        return state
    if new_n > basis.n_max:
        raise ValueError(f"order {new_n} exceeds basis size {basis.n_max}")
    if any(s is None for s in state.sources):
        raise HistoryUnavailable("rebase needs the coupling of every past round")
    out = RlsState(new_n, state.lam)
    if state.t:
        plans = np.array(state.sources)
        thetas = plans @ basis.eval[:new_n].T
        r = np.array(state.rewards)
        out.design += thetas.T @ thetas
        out.moment += thetas.T @ r
    out.t = state.t
    out.sources = list(state.sources)
    out.rewards = list(state.rewards)
    out._refactor()
    return out


def beta_width(state: RlsState, delta: float, C_bound: float, sigma: float) -> float:
    """Confidence radius ``sigma*sqrt(log(4 det(I + X^T X / lam) / delta^2)) + sqrt(lam)*C``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return sigma * math.sqrt(math.log(4.0) + state.logdet() - 2.0 * math.log(delta)) + math.sqrt(state.lam) * C_bound


@dataclass
class ConfidenceEllipsoid:
    center: np.ndarray
    metric: np.ndarray
    radius: float
    delta: float
    _chol: tuple | None = field(default=None, repr=False)

    @classmethod
    def from_state(cls, state: RlsState, radius: float, delta: float) -> "ConfidenceEllipsoid":
        return cls(state.estimate.copy(), state.design.copy(), float(radius), float(delta), state._chol)

    def solve(self, v):
        if self._chol is None:
            self._chol = cho_factor(self.metric, lower=True, check_finite=False)
        return cho_solve(self._chol, v, check_finite=False)

    def distance(self, gamma) -> float:
        d = np.asarray(gamma, dtype=float) - self.center
        return float(np.sqrt(max(d @ self.metric @ d, 0.0)))

    def contains(self, gamma) -> bool:
        return self.distance(gamma) <= self.radius * (1.0 + 1e-12)


def optimistic_belief(ellipsoid: ConfidenceEllipsoid, theta) -> np.ndarray:
    """Minimiser of ``<gamma, theta>`` over the ellipsoid."""
    theta = np.asarray(theta, dtype=float)
    w = ellipsoid.solve(theta)
    nrm2 = float(theta @ w)
    if nrm2 <= 0.0 or ellipsoid.radius == 0.0:
        return ellipsoid.center.copy()
    return ellipsoid.center - ellipsoid.radius * w / math.sqrt(nrm2)


@dataclass(frozen=True)
class EpsSchedule:
    """``fixed``: constant ``value``; ``power``: ``value * t**-value``."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("fixed", "power"):
            raise ValueError(f"unknown epsilon schedule {self.kind!r}")
        if not self.value > 0 or (self.kind == "power" and not self.value < 1):
            raise ValueError("fixed epsilon must be positive; power exponent must lie in (0, 1)")

    @classmethod
    def fixed(cls, eps):
        return cls("fixed", float(eps))

    @classmethod
    def power(cls, alpha):
        return cls("power", float(alpha))

    def __call__(self, t: int) -> float:
        if self.kind == "fixed":
            return self.value
        return self.value * float(t) ** (-self.value)


@dataclass(frozen=True)
class OrderSchedule:
    """``fixed``: order ``value``; ``growing``: ``ceil(t**(1/(2q+1)))`` with ``q = value``."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("fixed", "growing"):
            raise ValueError(f"unknown order schedule {self.kind!r}")
        if self.kind == "fixed" and (self.value < 1 or self.value != int(self.value)):
            raise ValueError("fixed order must be a positive integer")
        if self.kind == "growing" and not self.value > 0:
            raise ValueError("growth exponent q must be positive")

    @classmethod
    def fixed(cls, N):
        return cls("fixed", int(N))

    @classmethod
    def growing(cls, q):
        return cls("growing", float(q))

    def __call__(self, t: int) -> int:
        if self.kind == "fixed":
            return int(self.value)
        t = max(int(t), 1)
        p = 2.0 * self.value + 1.0
        n = max(1, math.ceil(t ** (1.0 / p)))
        # guard the float root against off-by-one
        while n > 1 and (n - 1) ** p >= t:
            n -= 1
        while n**p < t:
            n += 1
        return n


@dataclass(frozen=True)
class EntUcbConfig:
    sigma: float
    C_bound: float
    eps: EpsSchedule = EpsSchedule("fixed", 0.05)
    order: OrderSchedule | None = None  # None: full basis
    delta: float = 0.1
    lam: float = 1.0
    beta_scale: float = 1.0
    alt_tol: float = 1e-8
    alt_max_rounds: int = 50
    sinkhorn_tol: float = 1e-7
    sinkhorn_max_iter: int = 20_000
    sinkhorn_newton_after: int | None = 50

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.sigma < 0 or self.C_bound < 0 or self.beta_scale < 0:
            raise ValueError("sigma, C_bound and beta_scale must be nonnegative")
        if self.alt_max_rounds < 1:
            raise ValueError("alt_max_rounds must be at least 1")

    def to_dict(self):
        d = asdict(self)
        d["eps"] = asdict(self.eps)
        d["order"] = None if self.order is None else asdict(self.order)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["eps"] = EpsSchedule(**d["eps"]) if isinstance(d.get("eps"), dict) else d.get("eps", EpsSchedule("fixed", 0.05))
        if isinstance(d.get("order"), dict):
            d["order"] = OrderSchedule(**d["order"])
        return cls(**d)


@dataclass
class OptimismResult:
    plan: Coupling
    belief: np.ndarray
    value: float
    rounds: int
    values: list
    potentials: DualPotentials
    converged: bool


def optimism_step(
    ellipsoid: ConfidenceEllipsoid,
    basis: OrthonormalBasis,
    n: int,
    epsilon: float,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    config: EntUcbConfig,
    init: DualPotentials | None = None,
) -> OptimismResult:
    """Alternate between the entropic plan for the current belief and the
    most favourable belief for the current plan.

    Both half-steps are exact minimisations, so the recorded values are
    nonincreasing up to the solver tolerance.  The best pair is returned;
    on ties the earlier one is kept.
    """
    rho = product_measure(mu, nu)
    ev = basis.eval[:n]
    gamma = ellipsoid.center.copy()
    pots = init
    best = None
    values = []
    all_converged = True
    prev = math.inf
    for r in range(config.alt_max_rounds):
        cost = (gamma @ ev).reshape(basis.grid_shape)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergence)
            res = sinkhorn(cost, mu, nu, epsilon, tol=config.sinkhorn_tol, max_iter=config.sinkhorn_max_iter, init=pots, newton_after=config.sinkhorn_newton_after)
        all_converged &= res.converged
        pots = res.potentials
        theta = ev @ res.plan.mass.ravel()
        gamma = optimistic_belief(ellipsoid, theta)
        value = float(gamma @ theta) + epsilon * relative_entropy(res.plan, rho)
        values.append(value)
        if best is None or value < best[2]:
            best = (res.plan, gamma.copy(), value, pots)
        if prev - value < config.alt_tol:
            break
        prev = value
    plan, belief, value, pots = best
    return OptimismResult(plan, belief, value, len(values), values, pots, all_converged)


@dataclass
class RoundInfo:
    t: int
    plan: Coupling
    epsilon: float
    n: int
    beta: float
    theta: np.ndarray
    value: float
    ellipsoid: ConfidenceEllipsoid | None
    alt_rounds: int = 0
    converged: bool = True


class EntUcbAgent:
    """Stateful optimistic planner; call :meth:`act` then :meth:`observe` each round."""

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure, basis: OrthonormalBasis, config: EntUcbConfig):
        if basis.grid_shape != (mu.size, nu.size):
            raise ValueError("basis grid does not match the marginals")
        self.mu, self.nu, self.basis, self.config = mu, nu, basis, config
        self.t = 0
        self.rls = RlsState(self.order_at(1), config.lam)
        self._potentials: DualPotentials | None = None
        self._pending: RoundInfo | None = None

    def order_at(self, t: int) -> int:
        if self.config.order is None:
            return self.basis.n_max
        return min(self.config.order(t), self.basis.n_max)

    def act(self) -> RoundInfo:
        if self._pending is not None:
            raise RuntimeError("observe the previous action first")
        t = self.t
        if t == 0:
            plan = independent_coupling(self.mu, self.nu)
            theta = features(plan, self.basis, self.rls.n)
            info = RoundInfo(0, plan, math.nan, self.rls.n, math.nan, theta, math.nan, None)
        else:
            n = self.order_at(t)
            if n > self.rls.n:
                self.rls = rebase(self.rls, n, self.basis)
            eps = self.config.eps(t)
            beta = self.config.beta_scale * beta_width(self.rls, self.config.delta, self.config.C_bound, self.config.sigma)
            ell = ConfidenceEllipsoid.from_state(self.rls, beta, self.config.delta)
            opt = optimism_step(ell, self.basis, n, eps, self.mu, self.nu, self.config, init=self._potentials)
            self._potentials = opt.potentials
            theta = features(opt.plan, self.basis, n)
            info = RoundInfo(t, opt.plan, eps, n, beta, theta, opt.value, ell, opt.rounds, opt.converged)
        self._pending = info
        return info

    def observe(self, reward: float):
        info = self._pending
        if info is None:
            raise RuntimeError("no pending action")
        rls_update(self.rls, info.theta, reward, source=info.plan.mass)
        self.t += 1
        self._pending = None

    def to_dict(self):
        return {
            "type": "EntUcbAgent",
            "config": self.config.to_dict(),
            "t": self.t,
            "n": self.rls.n,
            "design": self.rls.design.tolist(),
            "moment": self.rls.moment.tolist(),
            "sources": [s.tolist() for s in self.rls.sources],
            "rewards": self.rls.rewards,
            "potentials": None if self._potentials is None else {
                "phi": self._potentials.phi.tolist(),
                "psi": self._potentials.psi.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d, mu, nu, basis) -> "EntUcbAgent":
        agent = cls(mu, nu, basis, EntUcbConfig.from_dict(d["config"]))
        rls = RlsState(d["n"], agent.config.lam)
        rls.design = np.array(d["design"], dtype=float)
        rls.moment = np.array(d["moment"], dtype=float)
        rls.t = len(d["rewards"])
        rls.sources = [np.array(s, dtype=float) for s in d["sources"]]
        rls.rewards = list(d["rewards"])
        rls._refactor()
        agent.rls = rls
        agent.t = int(d["t"])
        if d["potentials"] is not None:
            agent._potentials = DualPotentials(np.array(d["potentials"]["phi"]), np.array(d["potentials"]["psi"]))
        return agent


def entucb_round(agent: EntUcbAgent, env, rng) -> tuple[RoundInfo, float]:
    """Play one round against ``env`` and feed the reward back."""
    info = agent.act()
    reward = env.pull(info.plan, rng)
    agent.observe(reward)
    return info, reward
