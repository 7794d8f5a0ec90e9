"""Synthetic ensembles and the two theorem harnesses.

Members of a synthetic ensemble share one base embedding of labelled
Gaussian clusters. Member i sees ``(base + noise_i) @ Q_i`` for a random
orthogonal ``Q_i``: the rotation models the arbitrary orientation of an
independently pre-trained space, and ``misalignment_noise`` models genuine
disagreement between members. Out-of-distribution test points are placed
far from every cluster, independently per member, so members disagree
about them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .downstream import (
    BoundCheckReport,
    HeadConfig,
    LinearHead,
    bound_check,
    predict_proba,
    reli_variance,
    train_linear_head,
)
from .errors import ParameterError
from .baselines import feature_variance
from .tensor import Ensemble, pairwise_variance


@dataclass(frozen=True)
class SynthConfig:
    n_ref: int = 2000
    n_test: int = 500
    d: int = 32
    M: int = 5
    num_classes: int = 10
    cluster_spread: float = 1.0
    misalignment_noise: float = 0.5
    ood_fraction: float = 0.1
    ood_distance: float = 10.0
    difficulty_power: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_ref", "n_test", "d", "M", "num_classes"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        if self.M < 2:
            raise ParameterError("an ensemble needs M >= 2")
        if self.num_classes > self.d:
            raise ParameterError("num_classes cannot exceed d (class means are orthogonal)")
        if not 0.0 <= self.ood_fraction <= 1.0:
            raise ParameterError("ood_fraction must lie in [0, 1]")
        if self.cluster_spread <= 0 or self.misalignment_noise < 0 or self.ood_distance <= 0:
            raise ParameterError("cluster_spread and ood_distance must be positive, noise non-negative")


@dataclass(frozen=True)
class SynthData:
    ensemble: Ensemble
    ref_labels: np.ndarray
    test_labels: np.ndarray
    num_classes: int
    ood_mask: np.ndarray
    base_refs: np.ndarray = field(repr=False)
    base_tests: np.ndarray = field(repr=False)
    rotations: tuple = field(repr=False)


def random_orthogonal(d: int, seed=None) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR with sign-corrected R diagonal)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def class_means(num_classes: int, d: int) -> np.ndarray:
    """Orthogonal class centres at unit pairwise distance."""
    means = np.zeros((num_classes, d))
    means[np.arange(num_classes), np.arange(num_classes)] = 1.0 / np.sqrt(2.0)
    return means


def gen_clustered_ensemble(cfg: SynthConfig) -> SynthData:
    rng = np.random.default_rng(cfg.seed)
    means = class_means(cfg.num_classes, cfg.d)
    # per-coordinate std so that a typical within-class offset has norm ~ cluster_spread / 2
    sd = 0.5 * cfg.cluster_spread / np.sqrt(cfg.d)

    ref_labels = rng.integers(cfg.num_classes, size=cfg.n_ref)
    test_labels = rng.integers(cfg.num_classes, size=cfg.n_test)
    base_refs = means[ref_labels] + sd * rng.standard_normal((cfg.n_ref, cfg.d))
    base_tests = means[test_labels] + sd * rng.standard_normal((cfg.n_test, cfg.d))

    n_ood = int(round(cfg.ood_fraction * cfg.n_test))
    ood_mask = np.zeros(cfg.n_test, dtype=bool)
    ood_mask[rng.permutation(cfg.n_test)[:n_ood]] = True
    radius = cfg.ood_distance * cfg.cluster_spread

    # per-point difficulty u in [0, 1): member noise on a point scales with u**power
    ref_noise = cfg.misalignment_noise * cfg.cluster_spread / np.sqrt(cfg.d) * rng.random(cfg.n_ref) ** cfg.difficulty_power
    test_noise = cfg.misalignment_noise * cfg.cluster_spread / np.sqrt(cfg.d) * rng.random(cfg.n_test) ** cfg.difficulty_power

    rotations, refs, tests = [], [], []
    for _ in range(cfg.M):
        q = random_orthogonal(cfg.d, rng)
        r = base_refs + ref_noise[:, None] * rng.standard_normal(base_refs.shape)
        t = base_tests + test_noise[:, None] * rng.standard_normal(base_tests.shape)
        # each member places OOD points in its own random far direction
        far = rng.standard_normal((n_ood, cfg.d))
        far /= np.linalg.norm(far, axis=1, keepdims=True)
        t[ood_mask] = means.mean(axis=0) + (radius + 1.0) * far
        rotations.append(q)
        refs.append(r @ q)
        tests.append(t @ q)
    return SynthData(
        Ensemble(refs, tests), ref_labels, test_labels, cfg.num_classes, ood_mask,
        base_refs, base_tests, tuple(rotations),
    )


@dataclass(frozen=True)
class CounterexampleSpec:
    d: int = 16
    M: int = 4
    variance_target: float = 4.0
    n_ref: int = 200
    n_test: int = 50
    seed: int = 0


@dataclass(frozen=True)
class Counterexample:
    ensemble: Ensemble
    heads: list  # one LinearHead per member
    test_row: int
    rotations: tuple
    base_head: LinearHead
    feature_variance: float
    prediction_variance: float


def gen_counterexample(spec: CounterexampleSpec = CounterexampleSpec(), config: HeadConfig = HeadConfig()) -> Counterexample:
    """Members whose representations of one point disagree by at least the
    variance target while every member's downstream prediction is identical.

    Member i is ``base @ Q_i`` and its head is the base head composed with
    ``Q_i``: ``W_i = W_base Q_i``, so ``W_i (Q_i^T z) = W_base z``.
    """
    if spec.M < 2:
        raise ParameterError("counterexample needs M >= 2")
    rng = np.random.default_rng(spec.seed)
    w_true = rng.standard_normal(spec.d)
    base_refs = rng.standard_normal((spec.n_ref, spec.d))
    base_tests = rng.standard_normal((spec.n_test, spec.d))
    labels = (base_refs @ w_true > 0).astype(np.int64)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    base_head = train_linear_head(base_refs, labels, 2, config)

    rotations = tuple(random_orthogonal(spec.d, rng) for _ in range(spec.M))

    # feature variance is quadratic in the point: scale a unit direction up to the target
    u = base_tests[0] / np.linalg.norm(base_tests[0])
    unit_var = _member_variance(u, rotations)
    scale = np.sqrt(spec.variance_target / unit_var)
    while _member_variance(scale * u, rotations) < spec.variance_target:
        scale *= 1.0 + 1e-12
    base_tests = base_tests.copy()
    base_tests[0] = scale * u

    ens = Ensemble([base_refs @ q for q in rotations], [base_tests @ q for q in rotations])
    heads = [LinearHead(base_head.weight @ q, base_head.bias.copy(), member=i) for i, q in enumerate(rotations)]
    preds = np.stack([predict_proba(h, t[0]) for h, t in zip(heads, ens.tests)])
    return Counterexample(
        ensemble=ens,
        heads=heads,
        test_row=0,
        rotations=rotations,
        base_head=base_head,
        feature_variance=feature_variance(ens, 0),
        prediction_variance=-reli_variance(preds),
    )


def _member_variance(z: np.ndarray, rotations) -> float:
    return pairwise_variance(np.stack([z @ q for q in rotations]))


@dataclass(frozen=True)
class HarnessConfig:
    trials: int = 100
    d: int = 8
    M: int = 4
    n_ref: int = 100
    n_test: int = 5
    seed: int = 0
    duplicate_test_point: bool = False


def theorem2_harness(cfg: HarnessConfig = HarnessConfig(), config: HeadConfig = HeadConfig()) -> list:
    """Bound-check reports over randomized ensembles with trained linear heads.

    Each trial draws a two-class clustered ensemble with a random noise level,
    trains one head per member and certifies every test point.
    """
    rng = np.random.default_rng(cfg.seed)
    reports: list[BoundCheckReport] = []
    for trial in range(cfg.trials):
        noise = 0.0 if cfg.duplicate_test_point else float(rng.uniform(0.0, 1.5))
        data = gen_clustered_ensemble(SynthConfig(
            n_ref=cfg.n_ref, n_test=cfg.n_test, d=cfg.d, M=cfg.M, num_classes=2,
            cluster_spread=float(rng.uniform(0.5, 2.0)), misalignment_noise=noise,
            ood_fraction=0.0 if cfg.duplicate_test_point else 0.2,
            seed=int(rng.integers(2**31)),
        ))
        ens = data.ensemble
        if cfg.duplicate_test_point:
            # test row j duplicates reference row j in every member
            ens = Ensemble(ens.refs, [r[: cfg.n_test].copy() for r in ens.refs])
        heads = [train_linear_head(r, data.ref_labels, 2, config, member=i) for i, r in enumerate(ens.refs)]
        reports.extend(bound_check(ens, heads, j) for j in range(ens.n_test))
    return reports
