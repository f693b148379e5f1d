"""Repeated bandit runs against a fixed synthetic environment."""

from __future__ import annotations

import hashlib
import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..bandit import EntUcbAgent, EntUcbConfig, EpsSchedule, OrderSchedule, entucb_round
from ..env import BanditEnv, env_from_spec
from ..measures import pairing

COLUMNS = (
    "t", "eps_t", "n_t", "reward", "pseudo_regret_kant", "pseudo_regret_ent",
    "cum_kant_lo", "cum_kant_hi", "cum_ent", "beta_t", "theta_norm",
    "optimism_value", "in_confidence_set",
)
PREFIX_PAIRS = (("pseudo_regret_kant", "cum_kant_lo"), ("pseudo_regret_ent", "cum_ent"))


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: dict
    agent: dict = field(default_factory=dict)
    T: int = 1000
    M: int = 1
    seed: int = 0
    entropic_regret: str | bool = "auto"
    out_dir: str | None = None

    def __post_init__(self):
        if not isinstance(self.env, dict) or "generator" not in self.env:
            raise ConfigError("env must be a descriptor with a 'generator' key")
        if int(self.T) < 1:
            raise ConfigError("horizon T must be at least 1")
        if int(self.M) < 1:
            raise ConfigError("repetitions M must be at least 1")
        if self.entropic_regret not in ("auto", True, False):
            raise ConfigError("entropic_regret must be 'auto', true or false")
        self.T, self.M, self.seed = int(self.T), int(self.M), int(self.seed)

    def to_dict(self):
        return {"env": self.env, "agent": self.agent, "T": self.T, "M": self.M, "seed": self.seed,
                "entropic_regret": self.entropic_regret, "out_dir": self.out_dir}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"env", "agent", "T", "M", "seed", "entropic_regret", "out_dir"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def build_env(self) -> BanditEnv:
        try:
            return env_from_spec(self.env)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad environment spec: {exc}") from exc

    def agent_config(self, env: BanditEnv) -> EntUcbConfig:
        d = dict(self.agent)
        d.setdefault("sigma", env.sigma)
        d.setdefault("C_bound", env.C)
        try:
            if isinstance(d.get("eps"), dict):
                d["eps"] = EpsSchedule(**d["eps"])
            if isinstance(d.get("order"), dict):
                d["order"] = OrderSchedule(**d["order"])
            return EntUcbConfig(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad agent config: {exc}") from exc


@dataclass
class RunRecord:
    columns: dict
    summary: dict
    features: np.ndarray | None = None

    @property
    def T(self) -> int:
        return len(self.columns["t"])

    def rows(self):
        for i in range(self.T):
            yield {k: self.columns[k][i] for k in COLUMNS}

    def final(self, column: str) -> float:
        col = self.columns[column]
        return float(col[-1]) if len(col) else 0.0

    def to_dict(self):
        """JSON-ready form; NaN cells become ``null``."""
        return {
            "columns": {k: _nan_to_none(v) for k, v in self.columns.items()},
            "summary": {k: None if isinstance(v, float) and math.isnan(v) else v for k, v in self.summary.items()},
            "features": None if self.features is None else self.features.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        cols = {k: np.asarray(v, dtype=bool if k == "in_confidence_set" else float) for k, v in d["columns"].items()}
        for k in ("t", "n_t"):
            cols[k] = cols[k].astype(int)
        feats = None if d.get("features") is None else np.asarray(d["features"], dtype=float)
        summary = {k: math.nan if v is None and k.startswith("final_") else v for k, v in d["summary"].items()}
        return cls(cols, summary, feats)


def _nan_to_none(a):
    a = np.asarray(a)
    if a.dtype.kind == "f":
        return [None if math.isnan(x) else x for x in a.tolist()]
    return a.tolist()


def rep_seed(master: int, rep: int) -> np.random.SeedSequence:
    """Counter-based stream for repetition ``rep`` of master seed ``master``."""
    return np.random.SeedSequence(master, spawn_key=(rep,))


def _empty_columns(T):
    cols = {k: np.full(T, np.nan) for k in COLUMNS}
    cols["t"] = np.arange(1, T + 1)
    cols["n_t"] = np.zeros(T, dtype=int)
    cols["in_confidence_set"] = np.zeros(T, dtype=bool)
    return cols


def run_single(env: BanditEnv, agent_cfg: EntUcbConfig, T: int, seed: int, rep: int,
               entropic_regret="auto", keep_features: bool = True) -> RunRecord:
    """One repetition.  A failing round ends the run; the rows played so far
    are kept and the error is stored in the summary."""
    ss = rep_seed(seed, rep)
    rng = np.random.default_rng(ss)
    agent = EntUcbAgent(env.mu, env.nu, env.basis, agent_cfg)
    if entropic_regret == "auto":
        entropic_regret = agent_cfg.eps.kind == "fixed"
    cols = _empty_columns(T)
    kb = env.kantorovich()
    feats = []
    all_in = True
    noisy = 0.0
    error = None
    t_played = 0
    warmup = None
    start = time.perf_counter()
    try:
        info0, r0 = entucb_round(agent, env, rng)
        warmup = {"reward": r0, "cost": pairing(env.true_cost, info0.plan)}
        feats.append(env.basis.eval @ info0.plan.mass.ravel())
        for t in range(1, T + 1):
            info, reward = entucb_round(agent, env, rng)
            i = t - 1
            cost = pairing(env.true_cost, info.plan)
            cols["eps_t"][i] = info.epsilon
            cols["n_t"][i] = info.n
            cols["reward"][i] = reward
            cols["pseudo_regret_kant"][i] = cost - kb.upper
            cols["cum_kant_hi"][i] = cost - kb.lower
            if entropic_regret:
                cols["pseudo_regret_ent"][i] = env.regret_terms(info.plan, info.epsilon).ent
            cols["beta_t"][i] = info.beta
            cols["theta_norm"][i] = float(np.linalg.norm(info.theta))
            cols["optimism_value"][i] = info.value
            inside = info.ellipsoid.contains(env.true_coeffs[: info.n])
            cols["in_confidence_set"][i] = inside
            all_in &= inside
            noisy += reward - kb.value
            feats.append(env.basis.eval @ info.plan.mass.ravel())
            t_played = t
    except Exception as exc:  # noqa: BLE001 - recorded as a diagnostic
        error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
    cols = {k: v[:t_played] for k, v in cols.items()}
    cols["cum_kant_lo"] = np.cumsum(cols["pseudo_regret_kant"])
    cols["cum_kant_hi"] = np.cumsum(cols["cum_kant_hi"])
    cols["cum_ent"] = np.cumsum(cols["pseudo_regret_ent"])
    summary = {
        "rep": rep,
        "master_seed": seed,
        "spawn_key": list(ss.spawn_key),
        "env_hash": env.hash(),
        "T": t_played,
        "completed": error is None,
        "error": error,
        "warmup": warmup,
        "final_kant_lo": float(cols["cum_kant_lo"][-1]) if t_played else 0.0,
        "final_kant_hi": float(cols["cum_kant_hi"][-1]) if t_played else 0.0,
        "final_ent": float(cols["cum_ent"][-1]) if t_played else 0.0,
        "noisy_regret_kant": noisy,
        "all_in_confidence_set": bool(all_in and t_played == T),
        "kant_value": kb.value,
        "wall_time": time.perf_counter() - start,
    }
    X = np.array(feats) if keep_features and feats else None
    return RunRecord(cols, summary, X)


def _run_rep(args):
    cfg, rep = args
    env = cfg.build_env()
    return run_single(env, cfg.agent_config(env), cfg.T, cfg.seed, rep, cfg.entropic_regret)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list[RunRecord]:
    """``M`` independent repetitions on the environment of ``config``."""
    env = config.build_env()
    agent_cfg = config.agent_config(env)
    if workers > 1 and config.M > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_rep, [(config, r) for r in range(config.M)]))
    return [run_single(env, agent_cfg, config.T, config.seed, r, config.entropic_regret) for r in range(config.M)]


def loglog_slope(cum, lo: int, hi: int) -> float:
    """Least-squares slope of ``log cum(t)`` against ``log t`` over rounds
    ``lo..hi`` (1-based, inclusive)."""
    y = np.asarray(cum, dtype=float)[lo - 1 : hi]
    if y.size < 2 or np.any(y <= 0):
        return math.nan
    t = np.arange(lo, hi + 1, dtype=float)
    return float(np.polyfit(np.log(t), np.log(y), 1)[0])
