"""The desk-scale fixture shared by the test suite and the demos.

A three-class image task (12x12 pattern images) with a small convolutional
victim model.  Everything is seeded, so the data are identical on every
run; the trained teacher is pinned as a checkpoint next to the tests.
"""

from __future__ import annotations

from .carver import Recovery, recover
from .errors import NotFound, Unrepairable
from .ir import serialize_xml
from .memory import DecayParams, MemoryImage, apply_decay, synthesize_dump
from .nn import zoo
from .nn.data import Dataset, make_patterns
from .nn.network import Network
from .nn.train import TrainConfig, train

MODEL = "base"
N_TRAIN = 3000
N_TEST = 1000
SIDE = 12
SHIFT = 0.2
DUMP_SIZE = 1 << 17


def train_set() -> Dataset:
    return make_patterns(N_TRAIN, side=SIDE, seed=1)


def test_set() -> Dataset:
    return make_patterns(N_TEST, side=SIDE, seed=2, split="test")


def recovery_set(fraction: float = 0.1, shifted: bool = True, seed: int = 7) -> Dataset:
    """Unlabelled data for distillation, ``fraction`` of the training set's size.

    ``shifted`` draws from a brighter, noisier variant of the generator
    (similar but not identical data); otherwise from the training
    distribution itself.
    """
    n = max(1, round(fraction * N_TRAIN))
    return make_patterns(n, side=SIDE, seed=seed, shift=SHIFT if shifted else 0.0,
                         split="recovery").unlabeled()


def labeled_fraction(fraction: float, seed: int = 3) -> Dataset:
    return train_set().fraction(fraction, seed=seed)


def train_teacher(seed: int = 0, epochs: int = 30) -> Network:
    net = Network(zoo.build(MODEL), seed=seed)
    return train(net, train_set(), TrainConfig(epochs=epochs, seed=seed))


def dump(net: Network, seed: int = 0) -> MemoryImage:
    return synthesize_dump(serialize_xml(net.spec), net.blob(), total_size=DUMP_SIZE, seed=seed)


def attack(image: MemoryImage, params: DecayParams, io_shapes, max_dumps: int = 50,
           **recover_kw) -> tuple[Recovery, int]:
    """Decay ``image`` and recover it.

    When the architecture cannot be read, or describes a model whose
    (input, output) shapes differ from ``io_shapes`` (known to anyone who
    can query the victim), a fresh dump is taken with the next seed.
    Returns the recovery and the number of dumps used.
    """
    io_shapes = tuple(tuple(s) for s in io_shapes)
    for i in range(max_dumps):
        decayed = apply_decay(image, params.with_seed(params.seed + i))
        try:
            r = recover(decayed, **recover_kw)
        except (NotFound, Unrepairable):
            continue
        if (r.model.input_shape, r.model.output_shape) == io_shapes:
            return r, i + 1
    raise Unrepairable(f"no usable recovery in {max_dumps} dumps")
