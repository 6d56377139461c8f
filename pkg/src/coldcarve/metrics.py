"""Recovery quality: accuracy drop, adversarial-transfer fidelity, weight error rates."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, ShapeMismatch, ZeroTeacherAccuracy
from .nn.train import fgsm


def rad(acc_M: float, acc_Mprime: float) -> float:
    """Relative accuracy drop (acc_M - acc_M') / acc_M.  Negative when the
    recovered model happens to do better."""
    if acc_M == 0:
        raise ZeroTeacherAccuracy("relative accuracy drop is undefined for a zero-accuracy teacher")
    if acc_M < 0 or acc_Mprime < 0:
        raise ValueError("accuracies must be non-negative")
    return (acc_M - acc_Mprime) / acc_M


def fidelity(M, M_prime, inputs, labels, epsilon: float) -> float:
    """Share of FGSM examples crafted on ``M`` on which ``M`` and ``M_prime``
    predict the same class."""
    if M.spec.input_shape != M_prime.spec.input_shape or M.spec.output_shape != M_prime.spec.output_shape:
        raise ShapeMismatch("models differ in input or output shape")
    adv = fgsm(M, inputs, labels, epsilon)
    if len(adv) == 0:
        return 1.0
    return float(np.mean(M.predict(adv) == M_prime.predict(adv)))


def _bits(values) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(values, dtype=np.float32)).reshape(-1).view(np.uint32)


def weight_value_error_rate(original, recovered) -> float:
    """Fraction of positions whose float32 bit patterns differ."""
    a, b = _bits(original), _bits(recovered)
    if a.size != b.size:
        raise LengthMismatch(f"{a.size} original values but {b.size} recovered")
    if a.size == 0:
        return 0.0
    return float(np.mean(a != b))


def expected_weight_error_rate(values, rho0: float, rho1: float) -> float:
    """Probability that a value of ``values`` picks up at least one flip,
    averaged over the values' bit compositions."""
    ones = np.bitwise_count(_bits(values)).astype(np.float64)
    survive = (1 - rho0) ** ones * (1 - rho1) ** (32 - ones)
    return float(np.mean(1 - survive))


@dataclass
class RecoveryScore:
    rad: float
    fidelity: dict[float, float] = field(default_factory=dict)
    bit_error: tuple[float, float] = (0.0, 0.0)
    weight_value_error_rate: float = 0.0
    layer_norms: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        for eps, f in self.fidelity.items():
            if not 0 <= f <= 1:
                raise ValueError(f"fidelity at eps={eps} outside [0, 1]")

    def to_row(self, **extra) -> dict[str, str]:
        row = {k: str(v) for k, v in extra.items()}
        row.update({
            "rad": f"{self.rad:.6f}",
            "rho0_hat": f"{self.bit_error[0]:.6g}",
            "rho1_hat": f"{self.bit_error[1]:.6g}",
            "weight_value_error_rate": f"{self.weight_value_error_rate:.6g}",
            "fidelity": json.dumps({str(k): v for k, v in sorted(self.fidelity.items())}),
            "layer_norms": json.dumps(self.layer_norms),
        })
        return row

    def to_text(self) -> str:
        lines = [f"{'RAD':<26}{self.rad:.4f}",
                 f"{'bit error rho0 / rho1':<26}{self.bit_error[0]:.3g} / {self.bit_error[1]:.3g}",
                 f"{'weight value error rate':<26}{self.weight_value_error_rate:.4%}"]
        for eps, f in sorted(self.fidelity.items()):
            lines.append(f"{f'fidelity eps={eps:g}':<26}{f:.4f}")
        if self.layer_norms:
            lines.append(f"{'layer norms':<26}" + " ".join(f"{v:.3f}" for v in self.layer_norms))
        return "\n".join(lines) + "\n"


def rows_to_csv(rows: list[dict[str, str]], fieldnames=None) -> str:
    if fieldnames is None:
        fieldnames = []
        for r in rows:
            fieldnames += [k for k in r if k not in fieldnames]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def format_table(rows: list[dict[str, str]], columns=None) -> str:
    """Fixed-width plain-text table."""
    if not rows:
        return ""
    columns = columns or list(rows[0])
    widths = [max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns]
    out = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)),
           "  ".join("-" * w for w in widths)]
    out += ["  ".join(str(r.get(c, "")).ljust(w) for c, w in zip(columns, widths)) for r in rows]
    return "\n".join(out) + "\n"
