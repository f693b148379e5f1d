"""Quick invariant checks run by ``bandit-ot verify``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..bandit import EntUcbConfig, EpsSchedule, RlsState, rls_update
from ..basis import analyze, cosine_basis, gram_schmidt, loci_indicator_basis, synthesize
from ..env import make_matching_env
from ..measures import DiscreteMeasure, check_coupling, product_measure
from ..transport import NonConvergence, kantorovich_exact, sinkhorn
from .bounds import epsilon_direct_sum, epsilon_sum_bound
from .runner import PREFIX_PAIRS, run_single


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _random_measure(rng, k):
    w = rng.uniform(0.2, 1.0, k)
    return DiscreteMeasure.on_line(w / w.sum())


def check_bases(rng) -> CheckResult:
    worst = 0.0
    mu, nu = _random_measure(rng, 4), _random_measure(rng, 3)
    rho = product_measure(mu, nu)
    bases = [
        loci_indicator_basis(mu, nu),
        cosine_basis(4, 3, rho=rho),
        gram_schmidt([rng.normal(size=(4, 3)) for _ in range(3)], rho, n_max=8),
    ]
    for b in bases:
        worst = max(worst, np.max(np.abs(b.gram() - np.eye(b.n_max))))
        g = rng.normal(size=b.n_max)
        worst = max(worst, abs(np.sum(rho.weight_table * synthesize(g, b).values ** 2) - g @ g))
        worst = max(worst, np.max(np.abs(analyze(synthesize(g, b), b) - g)))
    return CheckResult("basis orthonormality and Parseval", worst <= 1e-10, f"max error {worst:.1e}")


def check_lp(rng) -> CheckResult:
    worst = 0.0
    for _ in range(20):
        K, Kp = rng.integers(1, 7, size=2)
        mu, nu = _random_measure(rng, K), _random_measure(rng, Kp)
        kb = kantorovich_exact(rng.uniform(size=(K, Kp)), mu, nu)
        worst = max(worst, kb.upper - kb.lower)
    return CheckResult("LP certificate interval", worst <= 1e-9, f"max width {worst:.1e}")


def check_sinkhorn(rng) -> CheckResult:
    bad = 0
    for _ in range(20):
        K, Kp = rng.integers(1, 7, size=2)
        mu, nu = _random_measure(rng, K), _random_measure(rng, Kp)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergence)
            res = sinkhorn(rng.uniform(size=(K, Kp)), mu, nu, 0.05)
        bad += res.gap < -1e-9 or not check_coupling(res.plan, mu, nu, 1e-12)
    return CheckResult("entropic duality and feasibility", bad == 0, f"{bad} violations in 20 solves")


def check_rls(rng) -> CheckResult:
    st = RlsState(6, 1.0)
    X = rng.normal(size=(200, 6))
    y = rng.normal(size=200)
    for x, r in zip(X, y):
        rls_update(st, x, r)
    direct = np.linalg.solve(np.eye(6) + X.T @ X, X.T @ y)
    err = float(np.max(np.abs(st.estimate - direct)))
    return CheckResult("RLS normal equations", err <= 1e-9, f"max deviation {err:.1e}")


def check_summation() -> CheckResult:
    worst = -np.inf
    for a in np.round(np.arange(0.1, 1.0, 0.1), 1):
        for T in (10, 100, 1000, 10_000):
            worst = max(worst, epsilon_direct_sum(T, a) - float(epsilon_sum_bound(T, a)))
    return CheckResult("entropic-bias summation bound", worst <= 0, f"max excess {worst:.3g}")


def check_prefix_sums() -> CheckResult:
    env = make_matching_env(2, 2, "random-uniform", sigma=0.1, seed=3)
    cfg = EntUcbConfig(sigma=0.1, C_bound=env.C, eps=EpsSchedule.fixed(0.1))
    rec = run_single(env, cfg, 50, seed=0, rep=0)
    err = max(
        float(np.max(np.abs(np.cumsum(rec.columns[a]) - rec.columns[b]))) for a, b in PREFIX_PAIRS
    )
    return CheckResult("cumulative columns are prefix sums", err <= 1e-9 and rec.summary["completed"], f"max error {err:.1e}")


def run_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check_bases(rng), check_lp(rng), check_sinkhorn(rng), check_rls(rng), check_summation(), check_prefix_sums()]
