"""Ground-truth reliability from downstream linear heads.

A C-class labelling is split into C(C-1)/2 one-vs-one binary tasks. For
every task and every ensemble member a softmax linear head is trained on
the member's reference embeddings; each test point's per-task performance
is computed from the M member predictions and averaged over the C-1 tasks
that involve its class.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import EnsembleTooSmall, InvalidInput, ParameterError, ShapeError, TaskDataError
from .knn import knn_indices
from .tensor import Ensemble, Metric, as_embedding, pairwise_variance


class ReliMetric(str, enum.Enum):
    VARIANCE = "variance"
    BRIER = "brier"
    ENTROPY = "entropy"


@dataclass(frozen=True)
class HeadConfig:
    step: float = 0.1
    l2: float = 1e-3
    epochs: int = 500
    standardize: bool = True


@dataclass(frozen=True)
class LinearHead:
    weight: np.ndarray  # (outputs, d)
    bias: np.ndarray  # (outputs,)
    member: int = 0
    losses: tuple = field(default=(), compare=False, repr=False)

    @property
    def num_outputs(self) -> int:
        return self.weight.shape[0]

    def logits(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) @ self.weight.T + self.bias


@dataclass(frozen=True)
class ReliabilityVector:
    values: np.ndarray
    metric: ReliMetric

    def __len__(self) -> int:
        return len(self.values)


def ovo_tasks(num_classes: int) -> list:
    """All (a, b) class pairs with a < b."""
    if int(num_classes) != num_classes or num_classes < 2:
        raise ParameterError(f"need at least 2 classes, got {num_classes!r}")
    return list(combinations(range(int(num_classes)), 2))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _check_labels(y, n_rows: int, num_outputs: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_rows,):
        raise ShapeError(f"{y.shape[0] if y.ndim else 0} labels for {n_rows} rows")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.round(y)):
            raise InvalidInput("labels must be integers")
        y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= num_outputs:
        raise TaskDataError(f"labels must lie in [0, {num_outputs})")
    missing = sorted(set(range(num_outputs)) - set(np.unique(y).tolist()))
    if missing:
        raise TaskDataError(f"classes {missing} have no training samples")
    return y


def train_linear_heads(zs, labels, num_outputs: int, config: HeadConfig = HeadConfig(), members=None) -> list:
    """Fit one softmax linear head per matrix in ``zs``, all sharing ``labels``.

    This is multinomial logistic regression with an L2 penalty on the
    weights, trained by full-batch gradient descent from zero. Features are
    standardized per dimension for training and the scaling is folded back
    into the returned weights, so each head acts on raw embeddings. The step
    is ``config.step`` capped at the inverse smoothness of the objective,
    which keeps the training loss non-increasing.
    """
    x = np.stack([as_embedding(z, "z") for z in zs])  # (M, n, d)
    m, n, d = x.shape
    y = _check_labels(labels, n, num_outputs)
    if config.standardize:
        mu = x.mean(axis=1)
        sd = x.std(axis=1)
        sd[sd <= 1e-12] = 1.0
    else:
        mu, sd = np.zeros((m, d)), np.ones((m, d))
    xs = (x - mu[:, None, :]) / sd[:, None, :]
    xt = xs.transpose(0, 2, 1)
    # outputs-major layout (M, K, n): reductions over the short class axis stay cheap
    target = np.eye(num_outputs)[:, y]

    steps = np.empty(m)
    for i in range(m):
        aug = np.hstack([xs[i], np.ones((n, 1))])
        smooth = 0.5 * np.linalg.norm(aug, 2) ** 2 / n + config.l2
        steps[i] = min(config.step, 1.0 / smooth)

    w = np.zeros((m, num_outputs, d))
    b = np.zeros((m, num_outputs))
    losses = [[] for _ in range(m)]
    rows = np.arange(n)

    def forward():
        z = w @ xt + b[:, :, None]
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        tot = e.sum(axis=1)
        ce = np.mean(np.log(tot) - z[:, y, rows], axis=1)
        pen = 0.5 * config.l2 * np.sum(w * w, axis=(1, 2))
        for i in range(m):
            losses[i].append(float(ce[i] + pen[i]))
        return e / tot[:, None, :]

    for _ in range(config.epochs):
        g = (forward() - target) / n
        w -= steps[:, None, None] * (g @ xs + config.l2 * w)
        b -= steps[:, None] * g.sum(axis=2)
    forward()

    members = range(m) if members is None else members
    heads = []
    for i, member in zip(range(m), members):
        weight = w[i] / sd[i]
        heads.append(LinearHead(weight, b[i] - weight @ mu[i], int(member), tuple(losses[i])))
    return heads


def train_linear_head(z, labels, num_outputs: int, config: HeadConfig = HeadConfig(), member: int = 0) -> LinearHead:
    """Train a single softmax linear head; see :func:`train_linear_heads`."""
    return train_linear_heads([z], labels, num_outputs, config, members=[member])[0]


def predict_proba(head: LinearHead, z) -> np.ndarray:
    return softmax(head.logits(z))


def reli_variance(preds) -> float:
    """Negative pairwise-form variance of M prediction vectors."""
    return -pairwise_variance(preds)


def reli_brier(preds, label) -> float:
    """Negative Brier score of the ensemble-mean prediction.

    ``label`` is a class index or a one-hot vector.
    """
    p = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    mean = p.mean(axis=0)
    y = np.asarray(label)
    if y.ndim == 0:
        y = np.eye(mean.shape[0])[int(y)]
    return -float(np.sum((mean - y) ** 2))


def reli_entropy(preds) -> float:
    """Negative entropy of the ensemble-mean prediction (0 log 0 = 0)."""
    mean = np.atleast_2d(np.asarray(preds, dtype=np.float64)).mean(axis=0)
    nz = mean[mean > 0]
    return float(np.sum(nz * np.log(nz)))


def reli_max_deviation(preds) -> float:
    """Negative largest pairwise L2 gap between member predictions."""
    p = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    if p.shape[0] < 2:
        raise EnsembleTooSmall("need at least 2 predictions")
    return -max(float(np.linalg.norm(p[i] - p[j])) for i, j in combinations(range(p.shape[0]), 2))


def reli_aggregate(per_task) -> float:
    vals = np.asarray(per_task, dtype=np.float64)
    if vals.size == 0:
        raise InvalidInput("no task values to aggregate")
    return float(np.mean(vals))


def _perf(metric: ReliMetric, preds: np.ndarray, label: int) -> float:
    if metric is ReliMetric.VARIANCE:
        return reli_variance(preds)
    if metric is ReliMetric.BRIER:
        return reli_brier(preds, label)
    return reli_entropy(preds)


def spectral_norm(w, rel_tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on W^T W."""
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    if not np.any(w):
        return 0.0
    v = np.random.default_rng(0).standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = w @ v
        new_sigma = float(np.linalg.norm(u))
        wtu = w.T @ u
        nrm = np.linalg.norm(wtu)
        if nrm == 0.0:
            # start vector in the null space; retry along the largest row
            v = w[np.argmax(np.linalg.norm(w, axis=1))].copy()
            v /= np.linalg.norm(v)
            continue
        v = wtu / nrm
        if abs(new_sigma - sigma) <= rel_tol * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    return max(sigma, float(np.linalg.norm(w @ v)))


def lipschitz_constant(head: LinearHead) -> float:
    """Lipschitz constant of softmax(W z + b): the spectral norm of W."""
    return spectral_norm(head.weight)


def _task_rows(labels: np.ndarray, task) -> tuple:
    a, b = task
    rows = np.flatnonzero((labels == a) | (labels == b))
    return rows, (labels[rows] == b).astype(np.int64)


def train_task_heads(ens: Ensemble, ref_labels, tasks, config: HeadConfig = HeadConfig(),
                     num_classes: int | None = None) -> dict:
    """Heads for every (task, member). A task is an (a, b) pair or ``"all"``."""
    labels = np.asarray(ref_labels, dtype=np.int64)
    if labels.shape != (ens.n_ref,):
        raise ShapeError(f"{labels.shape[0]} reference labels for {ens.n_ref} reference rows")
    heads = {}
    for task in tasks:
        if task == "all":
            rows, y, outputs = np.arange(ens.n_ref), labels, int(num_classes)
        else:
            rows, y = _task_rows(labels, task)
            outputs = 2
        heads[task] = train_linear_heads([refs[rows] for refs in ens.refs], y, outputs, config)
    return heads


def reliability(ens: Ensemble, ref_labels, test_labels, num_classes: int, metric=ReliMetric.BRIER,
                config: HeadConfig = HeadConfig(), multiclass: bool = False, heads: dict | None = None) -> ReliabilityVector:
    """Per-test-point reliability averaged over downstream tasks."""
    metric = ReliMetric(metric)
    ens.require_members(2)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    if test_labels.shape != (ens.n_test,):
        raise ShapeError(f"{test_labels.shape[0]} test labels for {ens.n_test} test rows")
    if test_labels.min() < 0 or test_labels.max() >= num_classes:
        raise InvalidInput(f"test labels must lie in [0, {num_classes})")
    tasks = ["all"] if multiclass else ovo_tasks(num_classes)
    if heads is None:
        heads = train_task_heads(ens, ref_labels, tasks, config, num_classes)

    per_point = [[] for _ in range(ens.n_test)]
    for task in tasks:
        if task == "all":
            rows, y = np.arange(ens.n_test), test_labels
        else:
            rows, y = _task_rows(test_labels, task)
        if rows.size == 0:
            continue
        # preds[i] is (len(rows), outputs) for member i
        preds = np.stack([predict_proba(h, t[rows]) for h, t in zip(heads[task], ens.tests)])
        for j, row in enumerate(rows):
            per_point[row].append(_perf(metric, preds[:, j, :], int(y[j])))
    values = np.array([reli_aggregate(v) for v in per_point])
    return ReliabilityVector(values, metric)


@dataclass(frozen=True)
class BoundCheckReport:
    test_row: int
    neighbor: int
    eps_nb: float
    sigma: float
    sigma_sq: float
    lipschitz: float
    lhs: float
    rhs: float

    @property
    def satisfied(self) -> bool:
        return self.lhs <= self.rhs


def bound_rhs(lipschitz: float, eps_nb, sigma, sigma_sq):
    """(sqrt(2) L eps + sigma)^2 expanded, so eps = 0 reproduces sigma^2 exactly."""
    a = math.sqrt(2.0) * lipschitz * np.asarray(eps_nb)
    return a * a + 2.0 * a * np.asarray(sigma) + np.asarray(sigma_sq)


def bound_check(ens: Ensemble, heads: Sequence[LinearHead], test_row: int, k: int | None = None,
                metric=Metric.EUCLIDEAN) -> BoundCheckReport:
    """Certify the neighbor-anchored variance bound at one test point.

    Every reference row is a candidate anchor (or only the union of the
    members' k-NN sets when ``k`` is given); the reported certificate is the
    candidate with the smallest bound.
    """
    ens.require_members(2)
    if len(heads) != ens.num_members:
        raise ShapeError(f"{len(heads)} heads for {ens.num_members} members")
    if ens.n_ref < 1:
        raise InvalidInput("no reference data")
    if k is None:
        cand = np.arange(ens.n_ref)
    else:
        cand = np.unique(np.concatenate([knn_indices(t[test_row], r, k, metric).indices
                                         for r, t in zip(ens.refs, ens.tests)]))
    lip = max(lipschitz_constant(h) for h in heads)
    eps = np.zeros(len(cand))
    for r, t in zip(ens.refs, ens.tests):
        eps = np.maximum(eps, np.linalg.norm(r[cand] - t[test_row], axis=1))
    # the test row rides in the same batch as the candidates so a duplicate
    # of a reference row gets bit-identical predictions
    preds = np.stack([predict_proba(h, np.vstack([r[cand], t[test_row]]))
                      for h, r, t in zip(heads, ens.refs, ens.tests)], axis=1)
    ref_preds, test_preds = preds[:-1], preds[-1]
    sigma_sq = np.array([pairwise_variance(p) for p in ref_preds])
    sigma = np.sqrt(sigma_sq)
    rhs = bound_rhs(lip, eps, sigma, sigma_sq)
    best = int(np.argmin(rhs))
    return BoundCheckReport(
        test_row=int(test_row),
        neighbor=int(cand[best]),
        eps_nb=float(eps[best]),
        sigma=float(sigma[best]),
        sigma_sq=float(sigma_sq[best]),
        lipschitz=lip,
        lhs=pairwise_variance(test_preds),
        rhs=float(rhs[best]),
    )
