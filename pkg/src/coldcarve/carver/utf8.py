"""UTF-8 validity of short byte windows.

``is_valid_utf8_window`` defers to Python's strict decoder.  The vectorised
scanner runs an RFC 3629 state machine over many windows at once; the test
suite checks the two against each other.
"""

from __future__ import annotations

import numpy as np

WINDOW = 8


def is_valid_utf8_window(window: bytes) -> bool:
    """True iff ``window`` decodes as complete, well-formed UTF-8."""
    try:
        bytes(window).decode("utf-8", errors="strict")
    except UnicodeDecodeError:
        return False
    return True


# byte classes
_ASCII, _C_LO, _C_MID, _C_HI, _BAD, _L2, _L3_E0, _L3, _L3_ED, _L4_F0, _L4, _L4_F4 = range(12)
# states
_ACCEPT, _NEED1, _NEED2, _NEED2_E0, _NEED2_ED, _NEED3, _NEED3_F0, _NEED3_F4, _REJECT = range(9)


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    cls = np.full(256, _BAD, dtype=np.uint8)
    cls[0x00:0x80] = _ASCII
    cls[0x80:0x90] = _C_LO
    cls[0x90:0xA0] = _C_MID
    cls[0xA0:0xC0] = _C_HI
    cls[0xC2:0xE0] = _L2
    cls[0xE0] = _L3_E0
    cls[0xE1:0xED] = _L3
    cls[0xED] = _L3_ED
    cls[0xEE:0xF0] = _L3
    cls[0xF0] = _L4_F0
    cls[0xF1:0xF4] = _L4
    cls[0xF4] = _L4_F4

    t = np.full((9, 12), _REJECT, dtype=np.uint8)
    t[_ACCEPT, _ASCII] = _ACCEPT
    t[_ACCEPT, _L2] = _NEED1
    t[_ACCEPT, _L3_E0] = _NEED2_E0
    t[_ACCEPT, _L3] = _NEED2
    t[_ACCEPT, _L3_ED] = _NEED2_ED
    t[_ACCEPT, _L4_F0] = _NEED3_F0
    t[_ACCEPT, _L4] = _NEED3
    t[_ACCEPT, _L4_F4] = _NEED3_F4
    cont = (_C_LO, _C_MID, _C_HI)
    for c in cont:
        t[_NEED1, c] = _ACCEPT
        t[_NEED2, c] = _NEED1
        t[_NEED3, c] = _NEED2
    t[_NEED2_E0, _C_HI] = _NEED1  # no overlong 3-byte forms
    for c in (_C_LO, _C_MID):
        t[_NEED2_ED, c] = _NEED1  # no surrogates
    for c in (_C_MID, _C_HI):
        t[_NEED3_F0, c] = _NEED2  # no overlong 4-byte forms
    t[_NEED3_F4, _C_LO] = _NEED2  # nothing above U+10FFFF
    return cls, t


_CLASS, _TRANS = _build_tables()


def valid_windows(data, starts, width: int = WINDOW) -> np.ndarray:
    """Validity of ``data[s:s + width]`` for every ``s`` in ``starts``."""
    data = np.asarray(data, dtype=np.uint8)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size and starts.max() + width > data.size:
        raise ValueError("window runs past the end of the data")
    state = np.zeros(starts.size, dtype=np.uint8)
    for k in range(width):
        state = _TRANS[state, _CLASS[data[starts + k]]]
    return state == _ACCEPT
