"""Carving the float32 weight blob and repairing exponent damage.

Weights are found by scanning 64-bit windows: text decodes as UTF-8,
arbitrary float32 pairs almost never do.  Two scans are offered.

``strict`` is the textbook procedure: read consecutive windows on an 8-byte
grid, append every invalid window's two floats, drop the whole run as soon
as a valid window appears, and test a completed run of ``T`` values for the
fraction lying in ``[lo, hi]``.

``tolerant`` (the default) exists because about one window in a hundred of
genuine weights happens to be valid UTF-8, which makes the strict reset
abort nearly every blob of realistic size.  It merges invalid windows into
regions, letting up to ``max_island`` valid windows sit inside one, then
slides a ``T``-value frame over each region (in 1-byte steps, so unaligned
blobs are found too) and keeps the placement with the most plausible
values before applying the same range test.
"""

from __future__ import annotations

import numpy as np

from ..errors import NotFound
from ..memory import MemoryImage, raw_bytes
from .report import CarveReport, Sanitization
from .utf8 import WINDOW, valid_windows

LO = -5.0
HI = 5.0
EPS = 1e-5
ACCEPT_FRACTION = 0.9


def _in_range(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return (values >= lo) & (values <= hi)


def _plausible(values: np.ndarray, lo: float, hi: float, eps: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        mag = np.abs(values)
        return _in_range(values, lo, hi) & ((values == 0) | (mag >= eps))


def _floats(data: np.ndarray, start: int, count: int) -> np.ndarray:
    return data[start:start + 4 * count].view("<f4").astype(np.float32)


def _strict(data, T, lo, hi, accept):
    n = data.size
    grid = valid_windows(data, np.arange(0, n - WINDOW + 1, WINDOW))
    restarts = 0
    pos, count, start = 0, 0, None
    while True:
        width = 4 if T - count == 1 else WINDOW
        if pos + width > n:
            break
        if width == WINDOW and pos % WINDOW == 0:
            ok = grid[pos // WINDOW]
        else:
            ok = valid_windows(data, [pos], width)[0]
        if ok:
            count, start = 0, None
            pos += WINDOW
            continue
        if start is None:
            start = pos
        count += width // 4
        pos += width
        if count >= T:
            values = _floats(data, start, T)
            if _in_range(values, lo, hi).mean() >= accept:
                return values, start, restarts
            restarts += 1
            count, start = 0, None
    raise NotFound(f"no run of {T} weights found ({restarts} candidate runs rejected)")


def _regions(valid: np.ndarray, max_island: int) -> list[tuple[int, int]]:
    """(first, last) window indices of invalid stretches, islands merged."""
    bad = np.flatnonzero(~valid)
    if bad.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(bad) > max_island + 1)
    firsts = np.concatenate(([bad[0]], bad[cuts + 1]))
    lasts = np.concatenate((bad[cuts], [bad[-1]]))
    return list(zip(firsts.tolist(), lasts.tolist()))


def _best_frame(data, lo_byte, hi_byte, T, lo, hi, eps, prefer):
    """Start of the T-value frame inside [lo_byte, hi_byte) with the most
    plausible values; ties go to ``prefer`` and then the lowest offset."""
    best = None
    for phase in range(4):
        first = lo_byte + phase
        m = (hi_byte - first) // 4
        if m < T:
            continue
        vals = _floats(data, first, m)
        score = np.concatenate(([0], np.cumsum(_plausible(vals, lo, hi, eps))))
        window = score[T:] - score[:-T]
        starts = first + 4 * np.arange(window.size)
        top = window.max()
        hits = starts[window == top]
        pick = prefer if prefer in hits else int(hits[0])
        key = (int(top), pick == prefer, -pick)
        if best is None or key > best[0]:
            best = (key, pick)
    return None if best is None else best[1]


def _tolerant(data, T, lo, hi, eps, accept, max_island):
    n = data.size
    starts = np.arange(0, n - WINDOW + 1, WINDOW)
    valid = valid_windows(data, starts)
    slack = WINDOW * (max_island + 1)
    restarts = 0
    for first, last in _regions(valid, max_island):
        a, b = first * WINDOW, (last + 1) * WINDOW
        lo_byte, hi_byte = max(0, a - slack), min(n, b + slack)
        if hi_byte - lo_byte < 4 * T:
            continue  # too short to hold the blob: the run was reset
        p = _best_frame(data, lo_byte, hi_byte, T, lo, hi, eps, prefer=a)
        if p is None:
            continue
        values = _floats(data, p, T)
        if _in_range(values, lo, hi).mean() >= accept:
            return values, p, restarts
        restarts += 1
    raise NotFound(f"no run of {T} weights found ({restarts} candidate runs rejected)")


def carve_weights(image: MemoryImage | bytes, T: int, *, mode: str = "tolerant",
                  lo: float = LO, hi: float = HI, eps: float = EPS,
                  accept_fraction: float = ACCEPT_FRACTION,
                  max_island: int = 2) -> tuple[np.ndarray, CarveReport]:
    """Find ``T`` consecutive float32 weights in ``image``."""
    if T <= 0:
        raise ValueError("T must be positive")
    data = raw_bytes(image)
    if mode == "strict":
        values, start, restarts = _strict(data, T, lo, hi, accept_fraction)
    elif mode == "tolerant":
        values, start, restarts = _tolerant(data, T, lo, hi, eps, accept_fraction, max_island)
    else:
        raise ValueError(f"unknown scan mode {mode!r}")
    report = CarveReport(weights_found=T, scan_restarts=restarts, blob_offset=int(start))
    return values, report


def sanitize_weights(values, lo: float = LO, hi: float = HI,
                     eps: float = EPS) -> tuple[np.ndarray, CarveReport]:
    """Undo likely exponent damage.

    Non-finite values become 0, values outside ``[lo, hi]`` are halved until
    they fit and tiny non-zero values are doubled until ``|v| >= eps``.
    Every change is logged.  Requires ``eps < hi / 2``.
    """
    if not (0 < eps < hi / 2 and lo < 0 < hi):
        raise ValueError("need lo < 0 < hi and 0 < eps < hi / 2")
    v = np.array(values, dtype=np.float32, copy=True).reshape(-1)
    orig = v.copy()
    reasons = np.full(v.size, "", dtype=object)

    bad = ~np.isfinite(v)
    v[bad] = 0.0
    reasons[bad] = "NonFinite"

    big = ~_in_range(v, lo, hi)
    reasons[big] = "AboveRange"
    half = np.float32(0.5)
    while True:
        out = ~_in_range(v, lo, hi)
        if not out.any():
            break
        v[out] *= half

    small = (v != 0) & (np.abs(v) < eps)
    reasons[small] = "BelowMagnitude"
    two = np.float32(2.0)
    while True:
        under = (v != 0) & (np.abs(v) < eps)
        if not under.any():
            break
        v[under] *= two

    edits = [Sanitization(int(i), float(orig[i]), float(v[i]), reasons[i])
             for i in np.flatnonzero(reasons != "")]
    return v, CarveReport(weights_sanitized=edits)


def zero_out_of_range(values, lo: float = LO, hi: float = HI, eps: float = EPS) -> np.ndarray:
    """Replace every suspicious value (non-finite, outside ``[lo, hi]`` or
    non-zero below ``eps`` in magnitude) by exactly 0."""
    v = np.array(values, dtype=np.float32, copy=True)
    with np.errstate(invalid="ignore"):
        keep = _in_range(v, lo, hi) & ((v == 0) | (np.abs(v) >= eps))
    v[~keep] = 0.0
    return v
