"""RAM image synthesis and the cold-boot bit-decay model.

A :class:`MemoryImage` is a byte array plus an optional manifest recording
where ground-truth artifacts were embedded.  Only evaluation code reads the
manifest; the carver works on the raw bytes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import EvenTrialCount, LengthMismatch, TooSmall

log = logging.getLogger(__name__)

FILLER_PROFILES = ("random_bytes", "ascii_text", "mixed")
PAGE_SIZE = 4096
_CHUNK = 1 << 18  # bytes per decay chunk; bounds the float64 scratch buffer to 16 MiB

_WORDS = (
    "the of and to in is was for on that with as by at from this have are be it not or "
    "which an their has but were had his they been more its also one all would other "
    "system memory process kernel buffer device driver module socket thread cache page "
    "file path user config value error status return object string list table index "
    "data time size count offset length version network packet frame queue stack heap "
    "allocate release update request response session handler event signal timer lock "
    "read write open close load store map copy free init start stop run exit level mode"
).split()
_SEPARATORS = (" ",) * 12 + (", ", ". ", "\n", ": ", "; ", " = ", "/", "_", "-")


@dataclass(frozen=True)
class ManifestEntry:
    offset: int
    length: int
    tag: str


@dataclass
class MemoryImage:
    data: np.ndarray  # uint8
    manifest: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        if isinstance(self.data, np.ndarray):
            self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        else:
            self.data = np.frombuffer(bytes(self.data), dtype=np.uint8).copy()
        spans = sorted((e.offset, e.offset + e.length) for e in self.manifest)
        for lo, hi in spans:
            if lo < 0 or hi > self.data.size:
                raise ValueError(f"manifest entry [{lo}, {hi}) outside image of {self.data.size} bytes")
        for (_, a_hi), (b_lo, _) in zip(spans, spans[1:]):
            if b_lo < a_hi:
                raise ValueError("manifest entries overlap")

    def __len__(self) -> int:
        return int(self.data.size)

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    def region(self, tag: str) -> bytes:
        for e in self.manifest:
            if e.tag == tag:
                return self.data[e.offset:e.offset + e.length].tobytes()
        raise KeyError(tag)

    def save(self, path) -> None:
        """Write the raw image to ``path`` and the manifest to ``path + '.manifest'``."""
        path = str(path)
        with open(path, "wb") as f:
            f.write(self.tobytes())
        write_manifest(self.manifest, path + ".manifest")

    @classmethod
    def load(cls, path, with_manifest: bool = True) -> "MemoryImage":
        path = str(path)
        with open(path, "rb") as f:
            data = np.frombuffer(f.read(), dtype=np.uint8).copy()
        manifest = []
        if with_manifest:
            try:
                manifest = read_manifest(path + ".manifest")
            except FileNotFoundError:
                pass
        return cls(data, manifest)


def raw_bytes(image) -> np.ndarray:
    """uint8 view of the bytes of ``image``, never its manifest."""
    if isinstance(image, MemoryImage):
        return image.data
    if isinstance(image, np.ndarray):
        return np.ascontiguousarray(image, dtype=np.uint8)
    return np.frombuffer(bytes(image), dtype=np.uint8)


def write_manifest(entries: Iterable[ManifestEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# offset\tlength\ttag\n")
        for e in entries:
            f.write(f"{e.offset}\t{e.length}\t{e.tag}\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            off, length, tag = line.split("\t")
            entries.append(ManifestEntry(int(off), int(length), tag))
    return entries


# --------------------------------------------------------------------------
# synthesis


def _text_filler(n: int, rng: np.random.Generator) -> np.ndarray:
    if n <= 0:
        return np.zeros(0, np.uint8)
    n_words = n // 4 + 16
    words = rng.integers(0, len(_WORDS), n_words)
    seps = rng.integers(0, len(_SEPARATORS), n_words)
    parts = []
    total = 0
    for w, s in zip(words, seps):
        token = _WORDS[w] + _SEPARATORS[s]
        parts.append(token)
        total += len(token)
        if total >= n:
            break
    text = "".join(parts).encode("ascii")
    while len(text) < n:  # pragma: no cover - the word budget always suffices
        text += text
    return np.frombuffer(text[:n], dtype=np.uint8).copy()


def make_filler(n: int, profile: str, rng: np.random.Generator) -> np.ndarray:
    """Background RAM content.

    ``mixed`` draws each 4 KiB page as text (1/2), random bytes (1/4) or
    zeros (1/4).
    """
    if profile == "random_bytes":
        return rng.integers(0, 256, n, dtype=np.uint8)
    if profile == "ascii_text":
        return _text_filler(n, rng)
    if profile == "mixed":
        out = np.zeros(n, np.uint8)
        for start in range(0, n, PAGE_SIZE):
            stop = min(n, start + PAGE_SIZE)
            kind = rng.integers(0, 4)
            if kind < 2:
                out[start:stop] = _text_filler(stop - start, rng)
            elif kind == 2:
                out[start:stop] = rng.integers(0, 256, stop - start, dtype=np.uint8)
        return out
    raise ValueError(f"unknown filler profile {profile!r}; expected one of {FILLER_PROFILES}")


def _align_up(x: int, a: int) -> int:
    return -(-x // a) * a


def synthesize_dump(
    xml: str | bytes,
    blob: bytes,
    filler_profile: str = "ascii_text",
    total_size: int = 1 << 16,
    seed: int = 0,
    alignment: int = 16,
) -> MemoryImage:
    """Embed the two IR files in filler at random, aligned, non-overlapping offsets.

    Allocators hand out aligned buffers, so both artifacts start on an
    ``alignment`` boundary (16 bytes, as glibc malloc on 64-bit hosts).
    """
    xml_bytes = xml.encode("utf-8") if isinstance(xml, str) else bytes(xml)
    blob = bytes(blob)
    rng = np.random.default_rng(seed)
    free = total_size - len(xml_bytes) - len(blob) - 2 * alignment
    if free < 0:
        raise TooSmall(
            f"{len(xml_bytes) + len(blob)} bytes of artifacts (+{2 * alignment} slack) "
            f"do not fit in {total_size} bytes"
        )
    data = make_filler(total_size, filler_profile, rng)
    order = [("xml", xml_bytes), ("bin", blob)]
    if rng.integers(0, 2):
        order.reverse()
    g0, g1 = sorted(int(g) for g in rng.integers(0, free + 1, 2))
    first_off = _align_up(g0, alignment)
    second_off = _align_up(first_off + len(order[0][1]) + (g1 - g0), alignment)
    manifest = []
    for (tag, payload), off in zip(order, (first_off, second_off)):
        data[off:off + len(payload)] = np.frombuffer(payload, dtype=np.uint8)
        manifest.append(ManifestEntry(off, len(payload), tag))
    manifest.sort(key=lambda e: e.offset)
    return MemoryImage(data, manifest)


# --------------------------------------------------------------------------
# decay


@dataclass(frozen=True)
class DecayParams:
    """Per-bit flip probabilities: ``rho0`` for 1 -> 0, ``rho1`` for 0 -> 1."""

    rho0: float
    rho1: float
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("rho0", "rho1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def with_seed(self, seed: int) -> "DecayParams":
        return DecayParams(self.rho0, self.rho1, seed)


# rates measured on the cold-booted host, and the classic higher rates
LOW_ERROR = DecayParams(2.7e-6, 9e-8)
HIGH_ERROR = DecayParams(1e-2, 1e-3)


def decay_mask(data: np.ndarray, params: DecayParams) -> np.ndarray:
    """XOR mask of the bits that flip; deterministic in ``params.seed``."""
    data = raw_bytes(data)
    mask = np.zeros_like(data)
    if params.rho0 == 0 and params.rho1 == 0:
        return mask
    rng = np.random.default_rng(params.seed)
    for start in range(0, data.size, _CHUNK):
        bits = np.unpackbits(data[start:start + _CHUNK]).astype(bool)
        u = rng.random(bits.size)
        flip = np.where(bits, u < params.rho0, u < params.rho1)
        mask[start:start + _CHUNK] = np.packbits(flip)
    return mask


def apply_decay(image: MemoryImage, params: DecayParams) -> MemoryImage:
    """Flip each 1 bit with probability rho0 and each 0 bit with probability rho1."""
    data = raw_bytes(image)
    out = data ^ decay_mask(data, params)
    manifest = list(image.manifest) if isinstance(image, MemoryImage) else []
    return MemoryImage(out, manifest)


def bit_error_rate(original, decayed) -> tuple[float, float]:
    """Empirical (rho0_hat, rho1_hat) between two equal-length images."""
    a, b = raw_bytes(original), raw_bytes(decayed)
    if a.size != b.size:
        raise LengthMismatch(f"images differ in length: {a.size} vs {b.size}")
    ones = int(np.bitwise_count(a).sum())
    zeros = 8 * a.size - ones
    f10 = int(np.bitwise_count(a & ~b).sum())
    f01 = int(np.bitwise_count(~a & b).sum())
    return (f10 / ones if ones else 0.0, f01 / zeros if zeros else 0.0)


def bit_flip_fraction(original, decayed) -> float:
    a, b = raw_bytes(original), raw_bytes(decayed)
    if a.size != b.size:
        raise LengthMismatch(f"images differ in length: {a.size} vs {b.size}")
    return int(np.bitwise_count(a ^ b).sum()) / (8 * a.size) if a.size else 0.0


# --------------------------------------------------------------------------
# repeated trials


class CorrelationMode(str, Enum):
    INDEPENDENT = "Independent"
    FIXED_POSITIONS = "FixedPositions"


@dataclass
class TrialSet:
    trials: list[MemoryImage]
    correlation_mode: CorrelationMode = CorrelationMode.INDEPENDENT

    def __post_init__(self) -> None:
        self.correlation_mode = CorrelationMode(self.correlation_mode)
        if len({len(t) for t in self.trials}) > 1:
            raise LengthMismatch("all trials must have the same length")

    def __len__(self) -> int:
        return len(self.trials)


def decay_trials(image: MemoryImage, params: DecayParams, n: int,
                 mode: CorrelationMode | str = CorrelationMode.INDEPENDENT) -> TrialSet:
    """Repeat the cold-boot acquisition ``n`` times on the same ground truth.

    Independent trials use seeds ``seed + i``.  FixedPositions samples one
    error-position set and reuses it for every trial, the way a chip whose
    weak cells always lose their charge first would behave.
    """
    mode = CorrelationMode(mode)
    if mode is CorrelationMode.INDEPENDENT:
        trials = [apply_decay(image, params.with_seed(params.seed + i)) for i in range(n)]
    else:
        mask = decay_mask(raw_bytes(image), params)
        trials = [MemoryImage(raw_bytes(image) ^ mask, list(image.manifest)) for _ in range(n)]
    return TrialSet(trials, mode)


def majority_vote(trials: TrialSet | Sequence[MemoryImage]) -> MemoryImage:
    """Bitwise majority across an odd number (>= 3) of trials."""
    images = trials.trials if isinstance(trials, TrialSet) else list(trials)
    n = len(images)
    if n < 3 or n % 2 == 0:
        raise EvenTrialCount(f"majority voting needs an odd number of trials >= 3, got {n}")
    arrays = [raw_bytes(t) for t in images]
    if len({a.size for a in arrays}) > 1:
        raise LengthMismatch("all trials must have the same length")
    size = arrays[0].size
    out = np.empty(size, np.uint8)
    for start in range(0, size, _CHUNK):
        votes = sum(np.unpackbits(a[start:start + _CHUNK]).astype(np.uint8) for a in arrays)
        out[start:start + _CHUNK] = np.packbits(votes > n // 2)
    return MemoryImage(out, list(images[0].manifest) if isinstance(images[0], MemoryImage) else [])


def majority_error_rate(p: float, n: int = 5) -> float:
    """Probability that the majority of ``n`` independent noisy copies is wrong."""
    return sum(math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n // 2 + 1, n + 1))


def error_cross_correlation(trials: TrialSet | Sequence[MemoryImage], ground_truth) -> np.ndarray:
    """Pearson correlation between the per-trial binary error-position vectors.

    A trial without errors (zero variance) correlates 0 with everything else.
    """
    images = trials.trials if isinstance(trials, TrialSet) else list(trials)
    if len(images) < 2:
        raise ValueError("cross-correlation needs at least two trials")
    truth = raw_bytes(ground_truth)
    errs = []
    for t in images:
        a = raw_bytes(t)
        if a.size != truth.size:
            raise LengthMismatch("trial and ground truth differ in length")
        errs.append(a ^ truth)
    n_bits = 8 * truth.size
    counts = np.array([int(np.bitwise_count(e).sum()) for e in errs], dtype=float)
    k = len(errs)
    corr = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            var = counts[i] * (n_bits - counts[i]) * counts[j] * (n_bits - counts[j])
            if var == 0:
                log.warning("trial %d or %d has a zero-variance error vector; correlation set to 0",
                            i, j)
                r = 0.0
            else:
                both = float(np.bitwise_count(errs[i] & errs[j]).sum())
                r = (n_bits * both - counts[i] * counts[j]) / math.sqrt(var)
            corr[i, j] = corr[j, i] = r
    return corr
