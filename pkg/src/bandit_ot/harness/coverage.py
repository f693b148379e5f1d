"""Monte Carlo check of simultaneous confidence-set validity."""

from __future__ import annotations

from dataclasses import dataclass, replace

from scipy.stats import binomtest

from .runner import ExperimentConfig, run_single


@dataclass(frozen=True)
class CoverageReport:
    covered: int
    M: int
    delta: float
    wilson_lo: float
    wilson_hi: float

    @property
    def fraction(self) -> float:
        return self.covered / self.M

    @property
    def target(self) -> float:
        return 1.0 - self.delta

    def consistent(self) -> bool:
        """Coverage not significantly below ``1 - delta``: the target lies
        under the upper Wilson limit."""
        return self.target <= self.wilson_hi

    def to_dict(self):
        return {"covered": self.covered, "M": self.M, "fraction": self.fraction, "delta": self.delta,
                "wilson_95": [self.wilson_lo, self.wilson_hi]}


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def coverage_study(config: ExperimentConfig, M: int | None = None, beta_scale: float | None = None) -> CoverageReport:
    """Fraction of runs whose true coefficients stay inside every confidence
    set for ``t = 1..T``."""
    env = config.build_env()
    agent_cfg = config.agent_config(env)
    if beta_scale is not None:
        agent_cfg = replace(agent_cfg, beta_scale=float(beta_scale))
    M = config.M if M is None else int(M)
    covered = 0
    for rep in range(M):
        rec = run_single(env, agent_cfg, config.T, config.seed, rep, entropic_regret=False, keep_features=False)
        covered += bool(rec.summary["all_in_confidence_set"])
    lo, hi = wilson_interval(covered, M)
    return CoverageReport(covered, M, agent_cfg.delta, lo, hi)
