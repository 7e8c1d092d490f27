"""Scalar training objectives and their gradients with respect to logits.

Sign convention: every objective is a loss to MINIMIZE, averaged over the
batch.  Log-probabilities always come from the trace's log-softmax; an
explicit log of a probability (class priors) clamps its argument at 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Priors
from .errors import NumericError, ShapeError, ValidationError
from .model import ForwardTrace

_LOG_CLAMP = 1e-12


@dataclass
class LossValue:
    """A scalar loss plus its gradient with respect to the batch logits."""

    value: float
    dlogits: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericError(f"loss value is not finite: {self.value}")
        if not np.all(np.isfinite(self.dlogits)):
            raise NumericError("loss gradient contains non-finite values")


@dataclass
class MmdLossValue:
    """Squared kernel mean discrepancy with gradients for both sample sets."""

    value: float
    d_emb_a: np.ndarray
    d_emb_b: np.ndarray
    gamma: float


@dataclass
class PseudoLabels:
    """Selected class per unlabeled sample, with the selection scores."""

    labels: np.ndarray  # (n,) int64
    scores: np.ndarray  # (n, K)


@dataclass(frozen=True)
class MmdConfig:
    """Gaussian-kernel bandwidth: explicit gamma or the median heuristic."""

    gamma: float | str = "median-heuristic"

    def __post_init__(self):
        if isinstance(self.gamma, str):
            if self.gamma != "median-heuristic":
                raise ValidationError(f"unknown gamma mode {self.gamma!r}")
        elif not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ValidationError(f"gamma must be positive, got {self.gamma}")


def _check_labels(labels: np.ndarray, n: int, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError(f"labels must lie in [0, {k})")
    return labels


def ce_loss(trace: ForwardTrace, labels: np.ndarray) -> LossValue:
    """Mean cross-entropy of the true labels under the softmax output.

    value = -(1/n) sum_i log p(y_i | x_i); dlogits = (probs - onehot) / n.
    """
    n, k = trace.logits.shape
    labels = _check_labels(labels, n, k)
    rows = np.arange(n)
    value = -float(trace.log_probs[rows, labels].mean())
    dlogits = trace.probs.copy()
    dlogits[rows, labels] -= 1.0
    return LossValue(value, dlogits / n)


def pseudo_label_select(probs: np.ndarray, priors: Priors) -> PseudoLabels:
    """Pick a class per sample by prior-scaled, batch-normalized probability.

    score[j, k] = probs[j, k] * priors[k] / sum_l probs[l, k], the column sum
    running over the current batch (including j).  The label is the argmax
    over k; ties break to the lowest class index.  Scaling the prior keeps
    the selected marginal tracking the prior instead of the raw confidence.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise ShapeError(f"probs must be a nonempty n x K matrix, got {probs.shape}")
    if probs.shape[1] != priors.num_classes:
        raise ShapeError(
            f"probs have {probs.shape[1]} classes but priors have {priors.num_classes}"
        )
    col_sums = probs.sum(axis=0)
    if np.any(col_sums == 0.0):
        dead = int(np.flatnonzero(col_sums == 0.0)[0])
        raise NumericError(
            f"class column {dead} sums to zero; cannot normalize selection scores"
        )
    scores = probs * priors.probs / col_sums
    return PseudoLabels(np.argmax(scores, axis=1).astype(np.int64), scores)


def contradistinguish_loss(
    trace: ForwardTrace, pseudo: PseudoLabels, priors: Priors
) -> LossValue:
    """Unsupervised objective that separates each sample from the batch.

    With pseudo-labels y_j held fixed,

        value = -(1/n) [ sum_j log p(y_j|x_j) + sum_j log prior[y_j]
                         - sum_j log sum_l p(y_j|x_l) ]

    The first term pulls sample j toward its selected class, the third
    pushes the same class away on every other sample, and the middle term
    is constant in the parameters: it contributes to the value but not to
    the gradient.  The third term is evaluated as a log-sum-exp over the
    per-sample log-probabilities.
    """
    n, k = trace.logits.shape
    labels = _check_labels(pseudo.labels, n, k)
    logp = trace.log_probs
    rows = np.arange(n)

    own = logp[rows, labels]  # log p(y_j | x_j)
    # lse[j] = log sum_l exp(log p(y_j | x_l)): column y_j across the batch
    cols = logp[:, labels]  # (l, j) -> log p(y_j | x_l)
    col_max = cols.max(axis=0)
    lse = col_max + np.log(np.exp(cols - col_max).sum(axis=0))
    prior_term = np.log(np.maximum(priors.probs[labels], _LOG_CLAMP))
    value = -float((own.sum() + prior_term.sum() - lse.sum()) / n)

    # q[j, l] = p(y_j | x_l) / sum_l' p(y_j | x_l'), the third term's softmax
    q = np.exp(cols - lse).T
    onehot = np.zeros((n, k))
    onehot[rows, labels] = 1.0
    col_weight = q.sum(axis=0)  # s_m = sum_j q[j, m]
    dlogits = (
        trace.probs - onehot + q.T @ onehot - col_weight[:, None] * trace.probs
    ) / n
    return LossValue(value, dlogits)


def adv_multilabel_loss(trace_fake: ForwardTrace) -> LossValue:
    """Push fake samples toward membership in every class at once.

    value = -(1/n_f) sum_j sum_k log p(k | x_j).  The per-sample minimum is
    K ln K, attained exactly at the uniform softmax output.
    """
    n, k = trace_fake.logits.shape
    value = -float(trace_fake.log_probs.sum() / n)
    dlogits = (k * trace_fake.probs - 1.0) / n
    return LossValue(value, dlogits)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kernel_mmd(emb_a: np.ndarray, emb_b: np.ndarray, cfg: MmdConfig) -> MmdLossValue:
    """Squared MMD between two embedding sets under a Gaussian kernel.

    k(x, x') = exp(-gamma * ||x - x'||^2); the V-statistic keeps the i = j
    diagonal, so identical multisets give exactly zero.  Median-heuristic
    gamma = 1 / (2 * median of squared cross distances), fixed once per
    call and treated as a constant by the gradients.
    """
    emb_a = np.asarray(emb_a, dtype=np.float64)
    emb_b = np.asarray(emb_b, dtype=np.float64)
    if emb_a.ndim != 2 or emb_b.ndim != 2 or emb_a.shape[0] < 1 or emb_b.shape[0] < 1:
        raise ShapeError("embedding sets must be nonempty 2-D matrices")
    if emb_a.shape[1] != emb_b.shape[1]:
        raise ShapeError(
            f"embedding widths differ: {emb_a.shape[1]} vs {emb_b.shape[1]}"
        )
    n_a, n_b = emb_a.shape[0], emb_b.shape[0]
    d2_ab = _sq_dists(emb_a, emb_b)
    if isinstance(cfg.gamma, str):
        med = float(np.median(d2_ab))
        if med <= 0.0:
            raise NumericError(
                "median squared cross-distance is zero; pass an explicit gamma"
            )
        gamma = 1.0 / (2.0 * med)
    else:
        gamma = float(cfg.gamma)
    d2_aa = _sq_dists(emb_a, emb_a)
    d2_bb = _sq_dists(emb_b, emb_b)
    k_aa = np.exp(-gamma * d2_aa)
    k_bb = np.exp(-gamma * d2_bb)
    k_ab = np.exp(-gamma * d2_ab)
    value = float(k_aa.mean() + k_bb.mean() - 2.0 * k_ab.mean())

    # d k(x, y) / dx = -2 gamma (x - y) k(x, y), summed over every pair
    diff_aa = emb_a[:, None, :] - emb_a[None, :, :]
    diff_bb = emb_b[:, None, :] - emb_b[None, :, :]
    diff_ab = emb_a[:, None, :] - emb_b[None, :, :]
    d_a = (-4.0 * gamma / n_a**2) * np.einsum("ij,ijd->id", k_aa, diff_aa)
    d_a += (4.0 * gamma / (n_a * n_b)) * np.einsum("ij,ijd->id", k_ab, diff_ab)
    d_b = (-4.0 * gamma / n_b**2) * np.einsum("ij,ijd->id", k_bb, diff_bb)
    d_b += (4.0 * gamma / (n_a * n_b)) * np.einsum("ji,jid->id", k_ab, -diff_ab)
    return MmdLossValue(value, d_a, d_b, gamma)


def multi_source_supervised(per_source_losses: Sequence[LossValue]) -> LossValue:
    """Total supervised loss over several source domains: element-wise sums.

    All gradients must share one shape (equal batch size and class count);
    the trainer guarantees this by drawing equally sized batches.
    """
    if not per_source_losses:
        raise ValidationError("need at least one per-source loss")
    first = per_source_losses[0]
    value = first.value
    dlogits = first.dlogits.copy()
    for lv in per_source_losses[1:]:
        if lv.dlogits.shape != dlogits.shape:
            raise ShapeError(
                f"per-source gradient shapes differ: {lv.dlogits.shape} vs {dlogits.shape}"
            )
        value += lv.value
        dlogits += lv.dlogits
    return LossValue(value, dlogits)
