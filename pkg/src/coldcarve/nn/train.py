"""Mini-batch training, evaluation and FGSM."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeMismatch, UnlabeledData
from .data import Dataset
from .losses import cross_entropy_loss, get_loss
from .network import Network
from .layers import softmax
from .optim import Adam, StepDecay, schedule_from


_NOISE = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    lr_schedule: str | StepDecay | None = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int | None = None  # stop after this many epochs without a new best loss

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.patience is not None and self.patience < 0:
            raise ConfigError("patience must be >= 0")
        schedule_from(self.lr_schedule)


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.loss)


def train_with_history(net: Network, data: Dataset, cfg: TrainConfig, loss="cross_entropy",
                       mask_rate: float | None = None) -> tuple[Network, History]:
    """Train ``net`` in place with Adam.

    With ``mask_rate`` set, each parameter element's gradient is dropped
    independently with that probability at every step and dropped elements
    are not updated.  A rate of 0 draws masks that keep everything.
    Randomness comes from three streams derived from ``cfg.seed``: batch
    order, gradient masks and dropout.
    """
    if mask_rate is not None and not 0 <= mask_rate < 1:
        raise ConfigError("mask_rate must be in [0, 1)")
    loss = get_loss(loss)
    targets = loss.target(data)
    schedule = schedule_from(cfg.lr_schedule)
    order_rng = np.random.default_rng([cfg.seed, 0])
    mask_rng = np.random.default_rng([cfg.seed, 1])
    net.reseed(cfg.seed)

    ids = sorted(net.params)
    flat = [p for i in ids for p in net.params[i]]
    opt = Adam(flat, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    hist = History()
    best, since_best = np.inf, 0
    n = len(data)
    was_training, net.training = net.training, True
    try:
        for epoch in range(cfg.epochs):
            opt.lr = schedule(cfg.lr, epoch) if schedule else cfg.lr
            perm = order_rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                out = net.forward(data.inputs[idx])
                value, grad, from_logits = loss(out, targets[idx], net)
                grads = net.backward(grad, from_logits=from_logits)
                g = [a for i in ids for a in grads[i]]
                masks = None
                if mask_rate is not None:
                    masks = [mask_rng.random(a.shape) >= mask_rate for a in g]
                opt.step(g, masks)
                total += value * len(idx)
            epoch_loss = total / max(n, 1)
            hist.loss.append(epoch_loss)
            hist.lr.append(opt.lr)
            # changes at rounding level (batch order) are not progress
            if not np.isfinite(best) or epoch_loss < best - _NOISE * max(1.0, abs(best)):
                best, since_best = epoch_loss, 0
            else:
                since_best += 1
            if cfg.patience is not None and since_best > cfg.patience:
                hist.stopped_early = True
                break
    finally:
        net.training = was_training
    return net, hist


def train(net: Network, data: Dataset, cfg: TrainConfig, loss="cross_entropy",
          mask_rate: float | None = None) -> Network:
    return train_with_history(net, data, cfg, loss, mask_rate)[0]


def evaluate_loss(net: Network, data: Dataset, loss="cross_entropy") -> float:
    loss = get_loss(loss)
    targets = loss.target(data)
    training, net.training = net.training, False
    try:
        return loss(net.forward(data.inputs), targets, net)[0]
    finally:
        net.training = training


def accuracy(net: Network, data: Dataset) -> float:
    """Fraction of samples whose arg-max prediction equals the label."""
    if data.labels is None:
        raise UnlabeledData("accuracy needs labels")
    if len(data) == 0:
        return 0.0
    return float(np.mean(net.predict(data.inputs) == data.labels))


def input_gradient(net: Network, x, labels) -> np.ndarray:
    """Gradient of the cross-entropy loss with respect to the inputs."""
    training, net.training = net.training, False
    try:
        out = net.forward(x)
        probs = out if net.ends_in_softmax else softmax(out)
        _, grad = cross_entropy_loss(probs, labels)
        net.backward(grad, from_logits=net.ends_in_softmax)
        return net.input_grad
    finally:
        net.training = training


def fgsm(net: Network, x, labels, epsilon: float, clip=(0.0, 1.0)) -> np.ndarray:
    """x + epsilon * sign(grad_x loss), clipped to the input domain."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    x = np.asarray(x, dtype=net.dtype)
    if x.shape[1:] != net.spec.input_shape:
        raise ShapeMismatch(f"expected inputs of shape (batch, {net.spec.input_shape})")
    if epsilon == 0:
        return x.copy()
    g = input_gradient(net, x, np.asarray(labels))
    adv = x + net.dtype.type(epsilon) * np.sign(g)
    return adv if clip is None else np.clip(adv, *clip)
