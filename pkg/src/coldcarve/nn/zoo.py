"""Reduced-width versions of the small image classifiers used in the attack
experiments, plus a compact MLP for quick runs.

Every architecture is also pinned as an XML file under
``coldcarve/architectures``; :func:`pinned` loads that copy and the test
suite checks it against the builder below.
"""

from __future__ import annotations

from importlib import resources

from .. import ir
from ..ir import IRModel, conv2d, dense, dropout, flatten, maxpool2d, prelu, relu, softmax

IMAGE_SHAPE = (1, 12, 12)
N_CLASSES = 3


def base(input_shape=IMAGE_SHAPE, n_classes=N_CLASSES, width=8, act=relu, drop=0.0,
         name="base") -> IRModel:
    blocks = [conv2d(width, 3, pad=1), act(), maxpool2d(2)]
    if drop:
        blocks.append(dropout(drop))
    blocks += [conv2d(2 * width, 3, pad=1), act(), maxpool2d(2)]
    if drop:
        blocks.append(dropout(drop))
    blocks += [flatten(), dense(4 * width), act()]
    if drop:
        blocks.append(dropout(drop))
    blocks += [dense(n_classes), softmax()]
    return ir.sequential(name, input_shape, blocks)


def base_wide(input_shape=IMAGE_SHAPE, n_classes=N_CLASSES) -> IRModel:
    return base(input_shape, n_classes, width=16, name="base_wide")


def base_dropout(input_shape=IMAGE_SHAPE, n_classes=N_CLASSES) -> IRModel:
    return base(input_shape, n_classes, drop=0.25, name="base_dropout")


def base_prelu(input_shape=IMAGE_SHAPE, n_classes=N_CLASSES) -> IRModel:
    return base(input_shape, n_classes, act=prelu, name="base_prelu")


def lenet5(input_shape=IMAGE_SHAPE, n_classes=N_CLASSES, drop=0.0, name="lenet5") -> IRModel:
    blocks = [conv2d(6, 5, pad=2), relu(), maxpool2d(2),
              conv2d(16, 3), relu(), maxpool2d(2), flatten(),
              dense(60), relu()]
    if drop:
        blocks.append(dropout(drop))
    blocks += [dense(42), relu()]
    if drop:
        blocks.append(dropout(drop))
    blocks += [dense(n_classes), softmax()]
    return ir.sequential(name, input_shape, blocks)


def lenet5_dropout(input_shape=IMAGE_SHAPE, n_classes=N_CLASSES) -> IRModel:
    return lenet5(input_shape, n_classes, drop=0.5, name="lenet5_dropout")


def desk_mlp(input_shape=IMAGE_SHAPE, n_classes=N_CLASSES, hidden=(48, 24)) -> IRModel:
    blocks = [flatten()]
    for h in hidden:
        blocks += [dense(h), relu()]
    blocks += [dense(n_classes), softmax()]
    return ir.sequential("desk_mlp", input_shape, blocks)


ARCHITECTURES = {
    "base": base,
    "base_wide": base_wide,
    "base_dropout": base_dropout,
    "base_prelu": base_prelu,
    "lenet5": lenet5,
    "lenet5_dropout": lenet5_dropout,
    "desk_mlp": desk_mlp,
}


def build(name: str, **kw) -> IRModel:
    try:
        return ARCHITECTURES[name](**kw)
    except KeyError:
        raise KeyError(f"unknown architecture {name!r}; choose from {sorted(ARCHITECTURES)}") from None


def pinned(name: str) -> IRModel:
    """The architecture as stored in the package's fixture file."""
    path = resources.files("coldcarve") / "architectures" / f"{name}.xml"
    return ir.parse_xml(path.read_text(encoding="utf-8"))
