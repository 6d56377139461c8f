"""Correcting a damaged recovered model by knowledge distillation.

The victim model is only ever queried for its softmax outputs through
:class:`Teacher`.  D1 trains the student on those outputs with a KL loss;
D2 additionally drops each gradient element with probability ``rate`` at
every step, so the dropped weights keep their value for that step.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .carver.weights import EPS, HI, LO, zero_out_of_range
from .errors import ArchitectureMismatch, ConfigError
from .ir import IRModel, unpack_weights
from .metrics import rad
from .nn.data import Dataset
from .nn.layers import softmax
from .nn.network import Network
from .nn.train import History, TrainConfig, accuracy, train_with_history

MODES = ("D1", "D2")


class Teacher:
    """Black-box access to a trained model: softmax outputs only.

    Holds a private copy, so nothing done to the original network after
    construction (or by a student) can change what the teacher answers.
    """

    def __init__(self, net: Network):
        self._net = net.copy()

    def query(self, x) -> np.ndarray:
        probs = self._net.predict_proba(x)
        return probs if self._net.ends_in_softmax else softmax(probs)

    @property
    def input_shape(self):
        return self._net.spec.input_shape


@dataclass
class DistillConfig:
    recovery_data: Dataset
    teacher: Teacher
    mode: str = "D2"
    gradient_dropout_rate: float = 0.5
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if not 0 <= self.gradient_dropout_rate < 1:
            raise ConfigError("gradient_dropout_rate must be in [0, 1)")
        if isinstance(self.teacher, Network):
            self.teacher = Teacher(self.teacher)


@dataclass
class DistillReport:
    mode: str
    epoch_loss: list[float]
    epochs: int
    rad_before: float | None = None
    rad_after: float | None = None
    config: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"mode\t{self.mode}", f"epochs\t{self.epochs}"]
        if self.rad_before is not None:
            lines.append(f"rad_before\t{self.rad_before:.6f}")
        if self.rad_after is not None:
            lines.append(f"rad_after\t{self.rad_after:.6f}")
            lines.append(f"epochs/rad\t{self.epochs}/{self.rad_after:.4f}")
        lines.append("config\t" + json.dumps(self.config, sort_keys=True))
        lines.append("epoch\tloss")
        lines += [f"{i + 1}\t{v:.6g}" for i, v in enumerate(self.epoch_loss)]
        return "\n".join(lines) + "\n"


def initial_correction(net: Network, lo: float = LO, hi: float = HI, eps: float = EPS) -> Network:
    """Copy of ``net`` with every implausible weight set to zero."""
    values = zero_out_of_range(net.parameter_vector().astype(np.float32), lo, hi, eps)
    return Network(net.spec, unpack_weights(net.spec, values.astype("<f4").tobytes()))


def _soft_labelled(cfg: DistillConfig) -> Dataset:
    data = cfg.recovery_data
    return Dataset(data.inputs, None, "recovery", cfg.teacher.query(data.inputs), data.num_classes)


def _distill(student: Network, cfg: DistillConfig, rate: float | None) -> tuple[Network, History]:
    if student.spec.input_shape != cfg.teacher.input_shape:
        raise ArchitectureMismatch("student and teacher take different inputs")
    return train_with_history(student.copy(), _soft_labelled(cfg), cfg.train, "kl_divergence",
                              mask_rate=rate)


def distill_with_history(student: Network, cfg: DistillConfig) -> tuple[Network, History]:
    rate = cfg.gradient_dropout_rate if cfg.mode == "D2" else None
    return _distill(student, cfg, rate)


def distill_d1(student: Network, cfg: DistillConfig) -> Network:
    """Plain distillation on the teacher's softmax outputs."""
    return _distill(student, cfg, None)[0]


def distill_d2(student: Network, cfg: DistillConfig) -> Network:
    """Distillation with per-element gradient dropout at ``cfg.gradient_dropout_rate``."""
    return _distill(student, cfg, cfg.gradient_dropout_rate)[0]


def retrain_scratch(spec: IRModel, data: Dataset, cfg: TrainConfig, patience: int = 2,
                    init_seed: int | None = None) -> tuple[Network, History]:
    """Train a freshly initialised copy of ``spec`` on labelled ``data``.

    Stops once the epoch loss has failed to improve for more than
    ``patience`` epochs; ``History.epochs`` is the number of epochs run.
    """
    net = Network(spec, seed=cfg.seed if init_seed is None else init_seed)
    cfg = TrainConfig(**{**asdict(cfg), "patience": patience})
    return train_with_history(net, data, cfg, "cross_entropy")


def layer_norm_profile(M: Network, M_prime: Network) -> list[float]:
    """||M - M'|| / ||M|| for every layer with parameters, in execution order.

    All arrays of a layer (weights and biases) count as one vector.
    """
    if not M.spec.same_architecture(M_prime.spec):
        raise ArchitectureMismatch("layer norms need identical architectures")
    out = []
    for a, b in zip(M.spec.ordered_layers, M_prime.spec.ordered_layers):
        if a.id not in M.params:
            continue
        pa = np.concatenate([p.reshape(-1) for p in M.params[a.id]]).astype(np.float64)
        pb = np.concatenate([p.reshape(-1) for p in M_prime.params[b.id]]).astype(np.float64)
        base = np.linalg.norm(pa)
        with np.errstate(divide="ignore", invalid="ignore"):
            out.append(float(np.linalg.norm(pa - pb) / base))
    return out


def correct(student: Network, cfg: DistillConfig, test: Dataset | None = None,
            teacher_accuracy: float | None = None) -> tuple[Network, DistillReport]:
    """Distil ``student`` (expected to be zero-corrected already) and report."""
    net, hist = distill_with_history(student, cfg)
    report = DistillReport(cfg.mode, hist.loss, hist.epochs, config={
        "mode": cfg.mode, "gradient_dropout_rate": cfg.gradient_dropout_rate,
        "recovery_size": len(cfg.recovery_data), **asdict(cfg.train)})
    if test is not None and teacher_accuracy is not None:
        report.rad_before = rad(teacher_accuracy, accuracy(student, test))
        report.rad_after = rad(teacher_accuracy, accuracy(net, test))
    return net, report
