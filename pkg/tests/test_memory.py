import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coldcarve.carver import valid_windows
from coldcarve.errors import EvenTrialCount, LengthMismatch, TooSmall
from coldcarve.memory import (HIGH_ERROR, LOW_ERROR, CorrelationMode, DecayParams, MemoryImage,
                              TrialSet, apply_decay, bit_error_rate, decay_trials,
                              error_cross_correlation, majority_error_rate, majority_vote,
                              synthesize_dump)

XML = "<net>" + "x" * 500 + "</net>"
BLOB = np.linspace(-1, 1, 128, dtype="<f4").tobytes()


def test_decay_constants_match_reported_rates():
    assert (LOW_ERROR.rho0, LOW_ERROR.rho1) == (2.7e-6, 9e-8)
    assert (HIGH_ERROR.rho0, HIGH_ERROR.rho1) == (1e-2, 1e-3)


def test_dump_embeds_both_artifacts():
    img = synthesize_dump(XML, BLOB, total_size=1 << 16, seed=3)
    assert len(img) == 1 << 16
    tags = sorted(e.tag for e in img.manifest)
    assert tags == ["bin", "xml"]
    assert img.region("xml") == XML.encode()
    assert img.region("bin") == BLOB
    a, b = img.manifest
    assert a.offset + a.length <= b.offset
    assert all(e.offset % 16 == 0 for e in img.manifest)


def test_dump_too_small():
    with pytest.raises(TooSmall):
        synthesize_dump(XML, BLOB, total_size=600)


def test_dump_deterministic():
    a = synthesize_dump(XML, BLOB, seed=5)
    b = synthesize_dump(XML, BLOB, seed=5)
    assert a.tobytes() == b.tobytes() and a.manifest == b.manifest


@pytest.mark.parametrize("profile", ["ascii_text", "random_bytes", "mixed"])
def test_filler_profiles(profile):
    img = synthesize_dump(XML, BLOB, profile, total_size=1 << 14, seed=1)
    assert img.region("bin") == BLOB


def test_ascii_filler_is_valid_utf8():
    img = synthesize_dump(XML, BLOB, "ascii_text", total_size=1 << 14, seed=2)
    data = img.data.copy()
    for e in img.manifest:
        data[e.offset:e.offset + e.length] = ord("a")
    assert bytes(data).decode("utf-8")


def test_image_save_load(tmp_path):
    img = synthesize_dump(XML, BLOB, total_size=1 << 14, seed=2)
    img.save(tmp_path / "ram.raw")
    back = MemoryImage.load(tmp_path / "ram.raw")
    assert back.tobytes() == img.tobytes() and back.manifest == img.manifest
    bare = MemoryImage.load(tmp_path / "ram.raw", with_manifest=False)
    assert bare.manifest == []


def test_zero_decay_is_identity():
    img = synthesize_dump(XML, BLOB, total_size=1 << 14)
    out = apply_decay(img, DecayParams(0, 0, 9))
    assert out.tobytes() == img.tobytes()
    assert out.manifest == img.manifest


def test_certain_decay_clears_ones():
    img = MemoryImage(np.full(4096, 0xFF, np.uint8))
    assert not apply_decay(img, DecayParams(1, 0)).data.any()


def _three_sigma(n, p):
    return 3 * math.sqrt(p * (1 - p) / n)


def test_flip_rate_on_all_ones():
    img = MemoryImage(np.full(1 << 20, 0xFF, np.uint8))
    rho0, rho1 = bit_error_rate(img, apply_decay(img, HIGH_ERROR.with_seed(4)))
    assert abs(rho0 - 0.01) <= _three_sigma(8 << 20, 0.01)
    assert rho1 == 0.0


@given(st.binary(min_size=1, max_size=256), st.integers(0, 1000))
def test_flips_follow_their_direction(data, seed):
    img = MemoryImage(np.frombuffer(data, np.uint8))
    only0 = apply_decay(img, DecayParams(0.3, 0.0, seed)).data
    assert not np.any(only0 & ~img.data)  # no 0 -> 1 without rho1
    only1 = apply_decay(img, DecayParams(0.0, 0.3, seed)).data
    assert not np.any(img.data & ~only1)  # no 1 -> 0 without rho0


def test_decay_deterministic():
    img = synthesize_dump(XML, BLOB, total_size=1 << 14)
    p = DecayParams(0.01, 0.001, 17)
    assert apply_decay(img, p).tobytes() == apply_decay(img, p).tobytes()


def test_bit_error_rate_examples():
    a = np.frombuffer(b"\x0f\xf0" * 8, np.uint8)
    assert bit_error_rate(a, a) == (0.0, 0.0)
    assert bit_error_rate(a, ~a) == (1.0, 1.0)
    with pytest.raises(LengthMismatch):
        bit_error_rate(a, a[:-1])


def test_bit_error_rate_constructed():
    # 1000 one bits (125 bytes of 0xFF) with exactly 10 cleared
    a = np.full(125, 0xFF, np.uint8)
    b = a.copy()
    b[:10] = 0xFE
    assert bit_error_rate(a, b) == (0.01, 0.0)


def test_vote_picks_majority():
    t = [np.array([0b1], np.uint8), np.array([0b1], np.uint8), np.array([0b0], np.uint8)]
    assert majority_vote([MemoryImage(x) for x in t]).data.tolist() == [1]
    same = MemoryImage(np.arange(50, dtype=np.uint8))
    assert majority_vote([same] * 3).tobytes() == same.tobytes()


def test_vote_needs_odd_count():
    img = MemoryImage(np.zeros(4, np.uint8))
    with pytest.raises(EvenTrialCount):
        majority_vote([img] * 4)
    with pytest.raises(EvenTrialCount):
        majority_vote([img])


def test_majority_formula():
    p = 0.01
    expect = sum(math.comb(5, k) * p**k * (1 - p) ** (5 - k) for k in (3, 4, 5))
    assert majority_error_rate(p, 5) == pytest.approx(expect, rel=1e-12)
    assert majority_error_rate(0.5, 5) == pytest.approx(0.5)


def test_independent_vote_reduces_error():
    img = MemoryImage(np.full(1 << 17, 0xFF, np.uint8))  # 2**20 bits
    trials = decay_trials(img, DecayParams(0.01, 0, 0), 5, "Independent")
    single = bit_error_rate(img, trials.trials[0])[0]
    voted = bit_error_rate(img, majority_vote(trials))[0]
    assert voted < single


def test_cross_correlation_examples():
    img = MemoryImage(np.full(1 << 16, 0xFF, np.uint8))
    same = decay_trials(img, DecayParams(0.01, 0, 1), 3, CorrelationMode.FIXED_POSITIONS)
    c = error_cross_correlation(same, img)
    assert np.allclose(c, 1.0)
    ind = decay_trials(img, DecayParams(0.01, 0, 1), 3, "Independent")
    c = error_cross_correlation(ind, img)
    assert np.allclose(np.diag(c), 1.0)
    n = 8 << 16
    off = c[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < 3 / math.sqrt(n))


def test_cross_correlation_zero_error_trial_is_zero(caplog):
    img = MemoryImage(np.full(64, 0xFF, np.uint8))
    noisy = apply_decay(img, DecayParams(0.2, 0, 1))
    c = error_cross_correlation([img, noisy], img)
    assert c[0, 1] == 0.0
    assert "zero-variance" in caplog.text


def test_trial_set_lengths():
    with pytest.raises(LengthMismatch):
        TrialSet([MemoryImage(np.zeros(3, np.uint8)), MemoryImage(np.zeros(4, np.uint8))])


def test_dump_regions_are_scan_visible():
    img = synthesize_dump(XML, BLOB, "ascii_text", total_size=1 << 14, seed=2)
    bin_entry = next(e for e in img.manifest if e.tag == "bin")
    starts = np.arange(bin_entry.offset, bin_entry.offset + bin_entry.length - 7, 8)
    # linspace floats in [-1, 1] are never valid UTF-8 pairs except near zero
    assert (~valid_windows(img.data, starts)).mean() > 0.9
