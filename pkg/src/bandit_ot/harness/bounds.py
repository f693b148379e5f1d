"""Closed-form regret bounds and their individual terms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def noise_term(T, delta: float, sigma: float):
    """``sigma * sqrt(2 T log(2 / delta))``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return sigma * np.sqrt(2.0 * np.asarray(T, dtype=float) * math.log(2.0 / delta))


def epsilon_sum_bound(T, alpha: float, kappa: float = 1.0):
    """Bound on the entropic bias accumulated by ``eps_t = alpha t^-alpha``:
    ``kappa alpha/(1-alpha) (T^(1-alpha) log T + alpha 2^-alpha log 6)``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    T = np.asarray(T, dtype=float)
    return kappa * alpha / (1.0 - alpha) * (T ** (1.0 - alpha) * np.log(T) + alpha * 2.0**-alpha * math.log(6.0))


def summation_lemma_bound(N, alpha: float):
    """``alpha/(1-alpha) N^(1-alpha) log N + alpha 2^-alpha log 6``, the bound on
    ``sum_{u<=N} alpha u^-alpha log u`` before the common factor is pulled out."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    N = np.asarray(N, dtype=float)
    return alpha / (1.0 - alpha) * N ** (1.0 - alpha) * np.log(N) + alpha * 2.0**-alpha * math.log(6.0)


def epsilon_direct_sum(T: int, alpha: float) -> float:
    """``sum_{u=1}^T alpha u^-alpha log u``."""
    u = np.arange(1, int(T) + 1, dtype=float)
    return float(np.sum(alpha * u**-alpha * np.log(u)))


def kappa_discrete(L: float, renyi_dim: float = 0.0) -> float:
    """Entropic-gap constant; the Renyi dimension of a finitely supported
    marginal is zero, which leaves ``L``."""
    return float(renyi_dim + L)


def width(logdet: float, delta: float, sigma: float, lam: float, C: float) -> float:
    """``beta = sigma sqrt(log(4 det / delta^2)) + sqrt(lam) C`` from a log-determinant."""
    return sigma * math.sqrt(math.log(4.0) + logdet - 2.0 * math.log(delta)) + math.sqrt(lam) * C


def _logdet_psd(gram, scale: float) -> float:
    n = gram.shape[0]
    sign, val = np.linalg.slogdet(np.eye(n) + scale * gram)
    return float(val)


@dataclass
class BoundReport:
    name: str
    T: np.ndarray
    terms: dict = field(default_factory=dict)
    label: str = ""

    @property
    def total(self) -> np.ndarray:
        if not self.terms:
            return np.zeros(len(self.T))
        return np.sum([np.asarray(v, dtype=float) for v in self.terms.values()], axis=0)

    def valid(self) -> bool:
        return all(np.all(np.isfinite(v)) and np.all(np.asarray(v) >= 0) for v in self.terms.values())

    def at(self, T: int) -> float:
        idx = np.flatnonzero(self.T == T)
        if idx.size == 0:
            raise KeyError(f"bound not evaluated at T={T}")
        return float(self.total[idx[0]])

    def to_dict(self):
        return {
            "name": self.name,
            "label": self.label,
            "T": self.T.tolist(),
            "terms": {k: np.asarray(v, dtype=float).tolist() for k, v in self.terms.items()},
            "total": self.total.tolist(),
        }


def realized_design_bound(features, T_grid, *, sigma, delta, lam, C, alpha=None, kappa=None) -> BoundReport:
    """Regret bound evaluated on the design a run actually built.

    ``features[t]`` is the feature vector played at round ``t`` (round 0
    included).  At each ``T`` the width and the log-determinant use rounds
    ``0..T``.  With ``alpha`` the entropic-bias term of the decaying
    schedule is added.
    """
    X = np.asarray(features, dtype=float)
    T_grid = np.asarray(sorted(set(int(t) for t in T_grid if 1 <= t < len(X))), dtype=int)
    noise, conf, bias = [], [], []
    for T in T_grid:
        G = X[: T + 1].T @ X[: T + 1]
        beta = width(_logdet_psd(G, 1.0 / lam), delta, sigma, lam, C)
        ld = _logdet_psd(G, 1.0 / (2.0 * lam * C)) if C > 0 else 0.0
        noise.append(float(noise_term(T, delta, sigma)))
        conf.append(2.0 * C * beta * math.sqrt(T * max(ld, 0.0)))
        if alpha is not None:
            bias.append(float(epsilon_sum_bound(T, alpha, kappa)))
    terms = {"noise": np.array(noise), "confidence": np.array(conf)}
    name = "entropic-realized"
    if alpha is not None:
        terms["entropic_bias"] = np.array(bias)
        name = "kantorovich-realized"
    return BoundReport(name, T_grid, terms, label="realized design")


def logdet_trace_bound(features, T: int, lam: float, C: float) -> float:
    """Worst-case surrogate ``n log(1 + sum ||theta||^2 / (2 lam C n))`` that
    dominates the realized log-determinant (AM-GM on the eigenvalues)."""
    X = np.asarray(features, dtype=float)[: T + 1]
    n = X.shape[1]
    return n * math.log1p(float(np.sum(X * X)) / (2.0 * lam * C * n))


def fixed_order_bound(T_grid, *, n, sigma, delta, lam, C, tail=0.0, alpha=None, kappa=None, M=1.0) -> BoundReport:
    """Closed form for a fixed truncation order ``n``; ``tail`` is the l1 mass
    of the discarded coefficients."""
    T = np.asarray(T_grid, dtype=float)
    conf = 2.0 * C * np.sqrt(n * T) * (np.log(M / lam + T * C**2 / n) + n / (2.0 * min(1.0, lam * C)) * math.log(M))
    terms = {"noise": noise_term(T, delta, sigma), "confidence": conf, "truncation": 2.0 * T * tail}
    if alpha is not None:
        terms["entropic_bias"] = epsilon_sum_bound(T, alpha, kappa)
    return BoundReport("fixed-order", np.asarray(T_grid, dtype=int), terms, label="closed form")


def finite_basis_bound(T_grid, *, N, sigma, delta, lam, C, kantorovich=False, kappa=None) -> BoundReport:
    """Closed form when the cost has ``N`` nonzero coefficients; the
    Kantorovich version uses ``alpha = 1/2``."""
    T = np.asarray(T_grid, dtype=float)
    terms = {
        "noise": noise_term(T, delta, sigma),
        "confidence": 2.0 * C * np.sqrt(N * T) * np.log(1.0 / lam + T * C**2 / N),
    }
    if kantorovich:
        terms["entropic_bias"] = kappa * (1.0 + np.sqrt(T) * np.log(T))
    return BoundReport("finite-basis", np.asarray(T_grid, dtype=int), terms, label="closed form")


def varying_order_bound(T_grid, *, q, sigma, delta, lam, C, kantorovich=False, kappa=None) -> BoundReport:
    """Closed form for the growing order ``n_t = ceil(t^(1/(2q+1)))``.

    The confidence term keeps its leading factor ``sigma``.
    """
    T = np.asarray(T_grid, dtype=float)
    a = (q + 1.0) / (2.0 * q + 1.0)
    b = 2.0 * q / (2.0 * q + 1.0)
    conf = (
        2.0 * C * sigma * T**a
        * (np.sqrt(2.0 * np.log((1.0 / lam + 2.0 * T**b * C**2) / delta)) + math.sqrt(lam) * C)
        * np.sqrt(np.log(1.0 + 2.0 * T**b / C**2))
    )
    terms = {
        "noise": noise_term(T, delta, sigma),
        "truncation": C * (1.0 + q * T**a / (2.0 * q + 1.0)),
        "confidence": conf,
    }
    if kantorovich:
        terms["entropic_bias"] = kappa * (1.0 + np.sqrt(T) * np.log(T))
    return BoundReport("varying-order", np.asarray(T_grid, dtype=int), terms, label="closed form")


def default_grid(T: int, points: int = 60) -> np.ndarray:
    if T < 1:
        return np.zeros(0, dtype=int)
    return np.unique(np.geomspace(1, T, points).round().astype(int))


def theorem_bound(kind: str, T_grid=None, record=None, **params) -> BoundReport:
    """Evaluate one of the bound families on ``T_grid``.

    ``entropic`` and ``kantorovich`` use the realized design of ``record``
    (its stored features); ``fixed-order``, ``finite-basis`` and
    ``varying-order`` are closed forms in the supplied constants.
    """
    if T_grid is None:
        if record is None:
            raise ValueError("either T_grid or record is required")
        T_grid = default_grid(record.T)
    T_grid = np.asarray(T_grid, dtype=int)
    if T_grid.size == 0:
        return BoundReport(kind, T_grid, {})
    try:
        if kind in ("entropic", "kantorovich"):
            if record is None or record.features is None:
                raise ValueError("realized-design bounds need a record with stored features")
            extra = {"alpha": params["alpha"], "kappa": params["kappa"]} if kind == "kantorovich" else {}
            return realized_design_bound(
                record.features, T_grid, sigma=params["sigma"], delta=params["delta"],
                lam=params["lam"], C=params["C"], **extra,
            )
        if kind == "fixed-order":
            return fixed_order_bound(T_grid, **params)
        if kind == "finite-basis":
            return finite_basis_bound(T_grid, **params)
        if kind == "varying-order":
            return varying_order_bound(T_grid, **params)
    except KeyError as exc:
        raise ValueError(f"missing constant {exc.args[0]!r} for the {kind} bound") from exc
    except TypeError as exc:
        raise ValueError(f"bad constants for the {kind} bound: {exc}") from exc
    raise ValueError(f"unknown bound family {kind!r}")


def bound_for_run(record, env, agent_cfg, T_grid=None) -> BoundReport:
    """The bound matching how ``agent_cfg`` was run on ``env``."""
    common = {"sigma": agent_cfg.sigma, "delta": agent_cfg.delta, "lam": agent_cfg.lam, "C": agent_cfg.C_bound}
    power = agent_cfg.eps.kind == "power"
    kappa = kappa_discrete(env.L)
    order = agent_cfg.order
    if order is not None and order.kind == "growing":
        return theorem_bound("varying-order", T_grid if T_grid is not None else default_grid(record.T),
                             q=order.value, kantorovich=power, kappa=kappa, **common)
    n = env.basis.n_max if order is None else min(int(order.value), env.basis.n_max)
    if n < env.basis.n_max:
        tail = float(np.sum(np.abs(env.true_coeffs[n:])))
        extra = {"alpha": agent_cfg.eps.value, "kappa": kappa} if power else {}
        return theorem_bound("fixed-order", T_grid if T_grid is not None else default_grid(record.T),
                             n=n, tail=tail, **extra, **common)
    if power:
        return theorem_bound("kantorovich", T_grid, record, alpha=agent_cfg.eps.value, kappa=kappa, **common)
    return theorem_bound("entropic", T_grid, record, **common)
