"""Training losses.

Each loss returns ``(value, grad)``.  For the softmax-family losses the
gradient is taken with respect to the logits, i.e. the input of the final
Softmax layer, which is where the ``p - target`` form is exact and stable.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidDistribution, ShapeMismatch, UnlabeledData
from .layers import softmax

CLAMP = 1e-12
ROW_TOL = 1e-4


def _check_rows(p: np.ndarray, what: str) -> None:
    if p.ndim != 2:
        raise ShapeMismatch(f"{what} must be (batch, classes), got {p.shape}")
    sums = p.sum(axis=1, dtype=np.float64)
    if not np.all(np.isfinite(sums)) or np.any(np.abs(sums - 1) > ROW_TOL) or np.any(p < 0):
        bad = int(np.argmax(np.abs(np.nan_to_num(sums, nan=np.inf) - 1)))
        raise InvalidDistribution(f"{what} row {bad} sums to {sums[bad]:.6g}")


def kl_divergence_loss(student: np.ndarray, teacher: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over the batch of sum t * log(t / s), with s clamped at 1e-12.

    The returned gradient is with respect to the student's logits.
    """
    s = np.asarray(student)
    t = np.asarray(teacher)
    if s.shape != t.shape:
        raise ShapeMismatch(f"student {s.shape} and teacher {t.shape} differ")
    _check_rows(s, "student")
    _check_rows(t, "teacher")
    s64 = np.maximum(s.astype(np.float64), CLAMP)
    t64 = t.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(t64 > 0, t64 * (np.log(t64) - np.log(s64)), 0.0)
    n = s.shape[0]
    loss = float(terms.sum() / n)
    return loss, ((s - t) / n).astype(s.dtype)


def cross_entropy_loss(probs: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of integer ``labels``; gradient w.r.t. logits."""
    p = np.asarray(probs)
    y = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or y.shape != (p.shape[0],):
        raise ShapeMismatch(f"probabilities {p.shape} and labels {y.shape} do not line up")
    n = p.shape[0]
    picked = np.maximum(p[np.arange(n), y].astype(np.float64), CLAMP)
    grad = p.copy()
    grad[np.arange(n), y] -= 1
    return float(-np.log(picked).mean()), grad / p.dtype.type(n)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared error summed over outputs, averaged over the batch."""
    pred = np.asarray(pred)
    diff = pred - np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    n = pred.shape[0]
    loss = float((diff.astype(np.float64) ** 2).sum() / n)
    return loss, 2 * diff / pred.dtype.type(n)


class Loss:
    """Adapter between a loss function and a network.

    ``target(data)`` picks the batch targets out of a Dataset;
    ``__call__(out, target, net)`` returns ``(value, grad, from_logits)``.
    """

    name = "loss"

    def target(self, data):
        raise NotImplementedError

    def __call__(self, out, target, net):
        raise NotImplementedError


class _SoftmaxFamily(Loss):
    fn = None

    def __call__(self, out, target, net):
        probs = out if net.ends_in_softmax else softmax(out)
        value, grad = type(self).fn(probs, target)
        return value, grad, net.ends_in_softmax


class CrossEntropy(_SoftmaxFamily):
    name = "cross_entropy"
    fn = staticmethod(cross_entropy_loss)

    def target(self, data):
        if data.labels is None:
            raise UnlabeledData("cross-entropy training needs labels")
        return data.labels


class KLDivergence(_SoftmaxFamily):
    name = "kl_divergence"
    fn = staticmethod(kl_divergence_loss)

    def target(self, data):
        if data.soft_targets is None:
            raise ValueError("distillation needs teacher outputs in data.soft_targets")
        return data.soft_targets


class MeanSquared(Loss):
    name = "mse"

    def target(self, data):
        if data.soft_targets is not None:
            return data.soft_targets
        if data.labels is None:
                raise UnlabeledData("mse training needs targets")
        return data.labels

    def __call__(self, out, target, net):
        value, grad = mse_loss(out, target)
        return value, grad, False


LOSSES = {"cross_entropy": CrossEntropy, "kl_divergence": KLDivergence, "mse": MeanSquared}


def get_loss(loss) -> Loss:
    if isinstance(loss, Loss):
        return loss
    try:
        return LOSSES[loss]()
    except KeyError:
        raise ValueError(f"unknown loss {loss!r}; choose from {sorted(LOSSES)}") from None
