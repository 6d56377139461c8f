"""Hand-built byte images for the weight scanner."""

import numpy as np

FILLER = b"The quick brown fox jumps over the lazy dog. "


def ascii_pad(n: int) -> bytes:
    return (FILLER * (n // len(FILLER) + 1))[:n]


def embedded_blob(values, before=256, after=256) -> bytes:
    return ascii_pad(before) + np.asarray(values, "<f4").tobytes() + ascii_pad(after)


def decoy_image(values, seed=0) -> bytes:
    """A run of 16 floats near 100.0, ASCII, then the true blob."""
    rng = np.random.default_rng(seed)
    decoy = (100.0 + rng.uniform(-0.5, 0.5, 16)).astype("<f4").tobytes()
    return ascii_pad(128) + decoy + ascii_pad(200) + np.asarray(values, "<f4").tobytes() \
        + ascii_pad(128)
