import numpy as np
from hypothesis import given, strategies as st

from coldcarve.carver import is_valid_utf8_window, valid_windows


def test_ascii_window_valid():
    assert is_valid_utf8_window(b"abcdefgh")


def test_ff_byte_invalid():
    assert not is_valid_utf8_window(b"abc\xffefgh")


def test_two_byte_sequences_valid():
    assert is_valid_utf8_window(b"\xc3\xa9" * 4)


def test_mid_codepoint_start_invalid():
    assert not is_valid_utf8_window(b"\xa9" + b"\xc3\xa9" * 3 + b"a")


def test_truncated_codepoint_invalid():
    assert not is_valid_utf8_window(b"abcdefg\xc3")


def test_surrogate_and_overlong_invalid():
    assert not is_valid_utf8_window(b"\xed\xa0\x80abcde")
    assert not is_valid_utf8_window(b"\xc0\xafabcdef")
    assert not is_valid_utf8_window(b"\xf4\x90\x80\x80abcd")


@given(st.binary(min_size=8, max_size=8))
def test_state_machine_agrees_with_decoder(window):
    got = valid_windows(np.frombuffer(window, np.uint8), [0])[0]
    assert got == is_valid_utf8_window(window)


@given(st.text(min_size=1, max_size=40))
def test_encoded_text_windows_agree(text):
    data = text.encode("utf-8")
    if len(data) < 8:
        return
    arr = np.frombuffer(data, np.uint8)
    starts = np.arange(len(data) - 7)
    got = valid_windows(arr, starts)
    want = [is_valid_utf8_window(data[s:s + 8]) for s in starts]
    assert got.tolist() == want


@given(st.binary(min_size=4, max_size=4))
def test_four_byte_width(window):
    assert valid_windows(np.frombuffer(window, np.uint8), [0], 4)[0] == is_valid_utf8_window(window)
