"""Bandit optimal transport on discrete instances."""

__version__ = "0.1.0"

from .bandit import (
    ConfidenceEllipsoid,
    EntUcbAgent,
    EntUcbConfig,
    EpsSchedule,
    OrderSchedule,
    RlsState,
    beta_width,
    entucb_round,
    optimism_step,
    optimistic_belief,
    rebase,
    rls_update,
)
from .basis import (
    DecayProfile,
    OrthonormalBasis,
    analyze,
    cosine_basis,
    decay_cost,
    features,
    gram_schmidt,
    loci_indicator_basis,
    synthesize,
    tail_bound,
)
from .env import BanditEnv, NoiseModel, make_matching_env, make_parametric_env, make_smooth_env
from .measures import (
    Coupling,
    CostTable,
    DiscreteMeasure,
    ProductMeasure,
    check_coupling,
    pairing,
    product_measure,
    relative_entropy,
)
from .transport import (
    entropic_gap_check,
    entropic_value,
    kantorovich_baseline,
    kantorovich_exact,
    sinkhorn,
)
