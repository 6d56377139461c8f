"""End-to-end recovery: architecture, then weights, then an executable network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ir import IRModel, total_params, unpack_weights
from ..memory import MemoryImage
from ..nn.network import Network
from .architecture import carve_architecture_xml
from .report import CarveReport
from .tokens import DEFAULT_DICTIONARY, TokenDictionary
from .weights import EPS, HI, LO, carve_weights, sanitize_weights, zero_out_of_range

CORRECTIONS = ("sanitize", "zero", "none")


@dataclass
class Recovery:
    model: IRModel
    network: Network
    report: CarveReport
    xml: str  # repaired architecture text, as it would be written back to disk
    raw_values: np.ndarray  # carved weights before any correction

    @property
    def values(self) -> np.ndarray:
        return self.network.parameter_vector()


def recover(image: MemoryImage | bytes, *, correction: str = "sanitize", mode: str = "tolerant",
            max_distance: int = 2, dictionary: TokenDictionary = DEFAULT_DICTIONARY,
            lo: float = LO, hi: float = HI, eps: float = EPS) -> Recovery:
    """Carve the architecture, count its parameters, carve that many weights
    and correct them.

    ``correction`` is ``"sanitize"`` (halve/double exponent damage, logged in
    the report), ``"zero"`` (suspicious values become 0) or ``"none"``.
    """
    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}")
    arch = carve_architecture_xml(image, max_distance=max_distance, dictionary=dictionary)
    report = arch.report
    T = total_params(arch.model)
    if T:
        raw, wrep = carve_weights(image, T, mode=mode, lo=lo, hi=hi, eps=eps)
        report = report.merge(wrep)
    else:
        raw = np.zeros(0, np.float32)
    if correction == "sanitize":
        values, srep = sanitize_weights(raw, lo, hi, eps)
        report = report.merge(srep)
    elif correction == "zero":
        values = zero_out_of_range(raw, lo, hi, eps)
    else:
        values = raw.copy()
    net = Network(arch.model, unpack_weights(arch.model, values.astype("<f4").tobytes()))
    return Recovery(arch.model, net, report, arch.xml, raw)


def recover_model(image: MemoryImage | bytes, **kw) -> tuple[IRModel, Network, CarveReport]:
    r = recover(image, **kw)
    return r.model, r.network, r.report
