"""Scoring pipeline and the neighborhood-size / ensemble-size ablations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import (
    Polarity,
    ScoreVector,
    dist_k_batch,
    feature_variance_batch,
    norm_batch,
)
from .config import RunConfig
from .consistency import member_knn_table, nc_eps_batch, nc_from_table
from .downstream import HeadConfig, ReliabilityVector, reliability
from .errors import InvalidInput
from .evaluate import kendall_tau_b
from .mixture import fit_gmm, fit_vmf_mixture, ll_batch
from .tensor import Ensemble, as_metric

METHODS = ("nc", "dist", "norm", "ll", "fv")


def head_config(cfg: RunConfig) -> HeadConfig:
    return HeadConfig(step=cfg.head_step, l2=cfg.head_l2, epochs=cfg.head_epochs)


def subsample_refs(ens: Ensemble, n_ref: int, seed: int) -> tuple:
    """Keep ``n_ref`` reference rows (the same rows in every member)."""
    if ens.n_ref <= n_ref:
        return ens, np.arange(ens.n_ref)
    rows = np.sort(np.random.default_rng(seed).choice(ens.n_ref, size=n_ref, replace=False))
    return Ensemble([r[rows] for r in ens.refs], ens.tests), rows


def fit_mixtures(ens: Ensemble, cfg: RunConfig, kind: str | None = None) -> list:
    kind = kind or cfg.mixture
    if kind == "auto":
        kind = "vmf" if cfg.normalize else "gmm"
    models = []
    for i, refs in enumerate(ens.refs):
        if kind == "gmm":
            model, _ = fit_gmm(refs, cfg.c_mix, cfg.seed + i, cfg.em_max_iter, cfg.em_tol)
        elif kind == "vmf":
            model, _ = fit_vmf_mixture(refs, cfg.c_mix, cfg.seed + i, cfg.em_max_iter, cfg.em_tol)
        else:
            raise InvalidInput(f"unknown mixture kind {kind!r}")
        models.append(model)
    return models


def score(raw: Ensemble, method: str, cfg: RunConfig = RunConfig(), models=None) -> ScoreVector:
    """Per-test-point score of one method.

    ``raw`` is the ensemble as loaded; it is normalized here when
    ``cfg.normalize`` is set, except for the norm score which always sees
    the raw representation.
    """
    if method not in METHODS:
        raise InvalidInput(f"unknown method {method!r}; choose from {METHODS}")
    if method == "norm":
        return norm_batch(raw)
    ens = raw.normalized() if cfg.normalize else raw
    metric = as_metric(cfg.metric)
    if method == "nc":
        if cfg.eps is not None:
            vals = nc_eps_batch(ens, cfg.eps, metric, cfg.sim, cfg.normalized_nc)
            return ScoreVector(vals, Polarity.HIGHER_IS_RELIABLE, f"nc_eps{cfg.eps}")
        table = member_knn_table(ens, cfg.k, metric)
        return ScoreVector(nc_from_table(table, cfg.sim, cfg.normalized_nc), Polarity.HIGHER_IS_RELIABLE, f"nc_{cfg.k}")
    if method == "dist":
        return dist_k_batch(ens, cfg.dist_k, metric)
    if method == "fv":
        return feature_variance_batch(ens)
    models = models if models is not None else fit_mixtures(ens, cfg)
    return ll_batch(models, ens.tests)


def ground_truth(ens: Ensemble, ref_labels, test_labels, num_classes: int, cfg: RunConfig = RunConfig()) -> ReliabilityVector:
    return reliability(ens, ref_labels, test_labels, num_classes, cfg.reli_metric, head_config(cfg), cfg.multiclass)


@dataclass(frozen=True)
class AblationResult:
    values: tuple  # the swept parameter
    taus: tuple

    @property
    def best(self):
        return self.values[int(np.argmax(self.taus))]

    def interior_max(self) -> bool:
        i = int(np.argmax(self.taus))
        return 0 < i < len(self.taus) - 1


def ablate_k(ens: Ensemble, reli: ReliabilityVector, ks, metric="euclidean", sim="jaccard") -> AblationResult:
    """Tau of NC_k against reliability for each k (one neighbor table serves all k)."""
    ks = tuple(int(k) for k in ks)
    table = member_knn_table(ens, max(ks), metric)
    taus = tuple(kendall_tau_b(nc_from_table(table[:, :, :k], sim), reli.values) for k in ks)
    return AblationResult(ks, taus)


def ablate_m(ens: Ensemble, reli: ReliabilityVector, ms, k: int = 100, metric="euclidean", sim="jaccard") -> AblationResult:
    """Tau of NC_k computed on the first m members, against fixed reliability."""
    ms = tuple(int(m) for m in ms)
    table = member_knn_table(ens, k, metric)
    taus = tuple(kendall_tau_b(nc_from_table(table[:m], sim), reli.values) for m in ms)
    return AblationResult(ms, taus)
