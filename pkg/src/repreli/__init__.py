"""Reliability of pre-trained representation ensembles via neighborhood consistency."""

from .baselines import (
    Polarity,
    ScoreVector,
    dist_k_score,
    ensemble_average,
    feature_variance,
    norm_score,
)
from .consistency import SetSimilarity, nc_eps, nc_k, nc_k_batch, set_similarity
from .downstream import (
    BoundCheckReport,
    HeadConfig,
    LinearHead,
    ReliabilityVector,
    ReliMetric,
    bound_check,
    lipschitz_constant,
    ovo_tasks,
    predict_proba,
    reli_aggregate,
    reli_brier,
    reli_entropy,
    reli_variance,
    reliability,
    train_linear_head,
)
from .evaluate import CorrelationReport, ModelRanking, correlate, kendall_tau_b, rank_models
from .knn import NeighborSet, eps_neighbors, knn_indices
from .mixture import (
    EmTrace,
    GaussianMixture,
    VmfMixture,
    fit_gmm,
    fit_vmf_mixture,
    gmm_log_density,
    ll_score,
    vmf_log_density,
)
from .synth import SynthConfig, gen_clustered_ensemble, gen_counterexample, random_orthogonal, theorem2_harness
from .tensor import Ensemble, Metric, distance, l2_norm, l2_normalize

__version__ = "0.1.0"
