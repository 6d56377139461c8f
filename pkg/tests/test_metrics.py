import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coldcarve import ir
from coldcarve.errors import LengthMismatch, ShapeMismatch, ZeroTeacherAccuracy
from coldcarve.memory import apply_decay, DecayParams, MemoryImage
from coldcarve.metrics import (RecoveryScore, expected_weight_error_rate, fidelity,
                               format_table, rad, rows_to_csv, weight_value_error_rate)
from coldcarve.nn import Network, make_blobs


def test_rad_examples():
    assert rad(0.8, 0.8) == 0
    assert rad(0.91, 0.4823) == pytest.approx(0.47, abs=1e-3)
    assert rad(0.8, 0.84) == pytest.approx(-0.05)
    with pytest.raises(ZeroTeacherAccuracy):
        rad(0.0, 0.5)


@given(st.floats(0.05, 1), st.floats(0, 1))
def test_rad_symmetric_about_teacher(a, frac):
    d = frac * a
    assert rad(a, a + d) == pytest.approx(-rad(a, a - d))


def _mlp(seed):
    return Network(ir.sequential("m", (2,), [ir.dense(16), ir.relu(), ir.dense(3),
                                             ir.softmax()]), seed=seed)


def test_fidelity_with_itself_is_one():
    d = make_blobs(200, seed=1)
    m = _mlp(0)
    for eps in (0.0, 0.01, 0.1, 0.5):
        assert fidelity(m, m, d.inputs, d.labels, eps) == 1.0


def test_fidelity_against_unrelated_model_near_chance():
    from coldcarve.nn import TrainConfig, train
    d = make_blobs(600, seed=1)
    m = train(_mlp(0), d, TrainConfig(lr=1e-2, epochs=30))
    # a constant predictor agrees with a balanced classifier a third of the time
    other = Network(m.spec, seed=9)
    other.load_vector(np.zeros(other.n_params))
    f = fidelity(m, other, d.inputs, d.labels, 0.01)
    assert abs(f - 1 / 3) < 0.08


def test_fidelity_shape_check():
    other = Network(ir.sequential("o", (3,), [ir.dense(3), ir.softmax()]))
    with pytest.raises(ShapeMismatch):
        fidelity(_mlp(0), other, np.zeros((1, 2)), [0], 0.1)


def test_weight_error_examples():
    a = np.linspace(-1, 1, 2500, dtype=np.float32)
    assert weight_value_error_rate(a, a) == 0
    b = a.copy()
    b[17] += 1
    assert weight_value_error_rate(a, b) == 0.0004
    z = np.zeros(2, np.float32)
    assert weight_value_error_rate(z, -z) == 1.0
    with pytest.raises(LengthMismatch):
        weight_value_error_rate(a, a[:-1])


def test_weight_error_matches_binomial_model():
    rng = np.random.default_rng(0)
    values = rng.uniform(-1, 1, 1_000_000).astype(np.float32)
    rho0 = 2.7e-6
    img = MemoryImage(np.frombuffer(values.tobytes(), np.uint8).copy())
    decayed = apply_decay(img, DecayParams(rho0, 9e-8, 5)).data.view("<f4")
    got = weight_value_error_rate(values, decayed)
    p = expected_weight_error_rate(values, rho0, 9e-8)
    assert p == pytest.approx(1 - np.mean((1 - rho0) ** np.bitwise_count(values.view(np.uint32))
                                          * (1 - 9e-8) ** (32 - np.bitwise_count(values.view(np.uint32)))))
    assert abs(got - p) <= 3 * math.sqrt(p * (1 - p) / values.size)


def test_score_rendering():
    s = RecoveryScore(0.12, {0.01: 0.9, 0.1: 0.8}, (0.01, 0.001), 0.02, [0.1, 0.2])
    row = s.to_row(model="base")
    assert row["model"] == "base" and row["rad"] == "0.120000"
    csv = rows_to_csv([row])
    assert csv.splitlines()[0].startswith("model,rad,")
    assert "fidelity eps=0.1" in s.to_text()
    assert format_table([row], ["model", "rad"]).splitlines()[2].startswith("base")
    with pytest.raises(ValueError):
        RecoveryScore(0.0, {0.1: 1.5})
