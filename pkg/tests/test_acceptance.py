"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line with the measured numbers before it
asserts; the lines are printed in a summary section at the end of the run.
"""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coldcarve import desk, ir
from coldcarve.carver import carve_architecture, carve_weights, recover_model, sanitize_weights
from coldcarve.distill import DistillConfig, Teacher, distill_d2, initial_correction, retrain_scratch
from coldcarve.errors import NotFound, Unrepairable
from coldcarve.ir import unpack_weights
from coldcarve.memory import (HIGH_ERROR, LOW_ERROR, DecayParams, MemoryImage, apply_decay,
                              bit_error_rate, decay_trials, error_cross_correlation,
                              majority_error_rate, majority_vote, synthesize_dump)
from coldcarve.metrics import fidelity, rad
from coldcarve.nn import Network, TrainConfig, accuracy, softmax
from carve_fixtures import decoy_image
from conftest import record_acceptance
from gradcheck import check, smooth_case
from strategies import random_model, random_params

IO = ((1, 12, 12), (3,))
KD_SEEDS = range(5)
EPSILONS = (0.01, 0.1)
N_FIDELITY = 500


def verdict(number, ok, detail):
    record_acceptance(f"C{number:<3}{'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _fidelity_inputs(test_set, seed):
    idx = np.random.default_rng([seed, 5]).permutation(len(test_set))[:N_FIDELITY]
    return test_set.inputs[idx], test_set.labels[idx]


# 1 -----------------------------------------------------------------------


def test_c1_zero_noise_round_trip():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    exact = 0
    for i in range(200):
        model = random_model(rng, f"model_{i}")
        net = Network(model, random_params(model, i))
        img = synthesize_dump(ir.serialize_xml(model), net.blob(), total_size=1 << 15, seed=i)
        img = apply_decay(img, DecayParams(0.0, 0.0, i))
        got, rec, rep = recover_model(img)
        exact += got == model and rec.blob() == net.blob() and rep.n_edits == 0
    elapsed = time.perf_counter() - start
    verdict(1, exact == 200 and elapsed < 60,
            f"zero-decay round trip exact for {exact}/200 models in {elapsed:.1f}s (< 60s)")


# 2 -----------------------------------------------------------------------


def test_c2_architecture_recovery_at_low_error(desk_teacher):
    xml = ir.serialize_xml(desk_teacher.spec)
    img = desk.dump(desk_teacher, 0)
    start = time.perf_counter()
    ok = 0
    for trial in range(100):
        try:
            got, _ = carve_architecture(apply_decay(img, LOW_ERROR.with_seed(trial)))
        except (NotFound, Unrepairable):
            continue
        ok += got == desk_teacher.spec
    elapsed = time.perf_counter() - start
    verdict(2, len(xml) >= 2048 and ok == 100 and elapsed < 120,
            f"architecture ({len(xml)} B of XML) recovered in {ok}/100 low-error trials "
            f"in {elapsed:.1f}s (< 120s)")


# 3 -----------------------------------------------------------------------


def test_c3_decay_statistics():
    n_bits = 8 << 20
    ones = MemoryImage(np.full(1 << 20, 0xFF, np.uint8))
    zeros = MemoryImage(np.zeros(1 << 20, np.uint8))
    r0, _ = bit_error_rate(ones, apply_decay(ones, HIGH_ERROR.with_seed(31)))
    _, r1 = bit_error_rate(zeros, apply_decay(zeros, HIGH_ERROR.with_seed(32)))

    def sigma(p):
        return math.sqrt(p * (1 - p) / n_bits)

    d0 = abs(r0 - HIGH_ERROR.rho0) / sigma(HIGH_ERROR.rho0)
    d1 = abs(r1 - HIGH_ERROR.rho1) / sigma(HIGH_ERROR.rho1)
    verdict(3, d0 <= 3 and d1 <= 3,
            f"1 MiB flip rates 1->0 {r0:.5f} ({d0:.2f} sigma), 0->1 {r1:.6f} ({d1:.2f} sigma)")


# 4 -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def low_error_runs(desk_teacher):
    img = desk.dump(desk_teacher, 0)
    start = time.perf_counter()
    runs = [desk.attack(img, LOW_ERROR.with_seed(1000 + t), IO)[0].network for t in range(20)]
    return runs, time.perf_counter() - start


def test_c4_low_error_rad(desk_teacher, desk_pinned, desk_test_set, low_error_runs):
    runs, attack_time = low_error_runs
    start = time.perf_counter()
    acc = accuracy(desk_teacher, desk_test_set)
    rads = [rad(acc, accuracy(net, desk_test_set)) for net in runs]
    elapsed = attack_time + time.perf_counter() - start
    mean = float(np.mean(rads))
    pinned = acc == pytest.approx(desk_pinned["test_accuracy"])
    verdict(4, acc >= 0.9 and pinned and mean <= 0.01 and elapsed < 300,
            f"teacher accuracy {acc:.3f} (pinned {desk_pinned['test_accuracy']}); mean RAD over "
            f"20 low-error attacks {mean:.5f} (<= 0.01, max {max(rads):.4f}) in {elapsed:.1f}s")


# 5 to 8 share the high-error runs -----------------------------------------


@pytest.fixture(scope="module")
def high_error_runs(desk_teacher, desk_test_set):
    """Per seed: the recovered model (sanitized), its D2-corrected version and
    a model retrained from scratch on 10% of the labelled training data."""
    start = time.perf_counter()
    acc = accuracy(desk_teacher, desk_test_set)
    img = desk.dump(desk_teacher, 0)
    teacher = Teacher(desk_teacher)
    out = []
    for s in KD_SEEDS:
        r, dumps = desk.attack(img, HIGH_ERROR.with_seed(100 * s), IO)
        raw = Network(r.model, unpack_weights(r.model, r.raw_values.astype("<f4").tobytes()))
        cfg = DistillConfig(desk.recovery_set(0.1), teacher, "D2", 0.5, TrainConfig(seed=s))
        corrected = distill_d2(initial_correction(raw), cfg)
        retrained, hist = retrain_scratch(desk_teacher.spec, desk.labeled_fraction(0.1, seed=s),
                                          TrainConfig(epochs=100, seed=s))
        out.append({
            "dumps": dumps,
            "rad_recovered": rad(acc, accuracy(r.network, desk_test_set)),
            "rad_d2": rad(acc, accuracy(corrected, desk_test_set)),
            "rad_retrain": rad(acc, accuracy(retrained, desk_test_set)),
            "retrain_epochs": hist.epochs,
            "corrected": corrected,
        })
    return out, time.perf_counter() - start


def _mean(runs, key):
    return float(np.mean([r[key] for r in runs]))


def test_c5_high_error_degradation(high_error_runs):
    runs, _ = high_error_runs
    mean = _mean(runs, "rad_recovered")
    verdict(5, mean >= 0.2,
            f"mean RAD of the recovered model at rho0=1%, rho1=0.1%: {mean:.3f} (>= 0.2); "
            f"per seed {[round(r['rad_recovered'], 3) for r in runs]}")


def test_c6_distillation_correction(high_error_runs):
    runs, elapsed = high_error_runs
    before, after = _mean(runs, "rad_recovered"), _mean(runs, "rad_d2")
    verdict(6, after < 0.1 and after < before and elapsed < 900,
            f"mean RAD after D2 (rate 0.5, shifted 10% recovery set) {after:.4f} (< 0.1, "
            f"before {before:.3f}); 5 seeds in {elapsed:.1f}s (< 900s)")


def test_c7_distillation_beats_retraining(high_error_runs):
    runs, _ = high_error_runs
    d2, rt = _mean(runs, "rad_d2"), _mean(runs, "rad_retrain")
    epochs = [r["retrain_epochs"] for r in runs]
    verdict(7, rt > d2,
            f"mean RAD retrain-from-scratch on 10% labels {rt:.4f} > D2 {d2:.4f} "
            f"(retrain epochs {epochs})")


def test_c8_fidelity(desk_teacher, desk_test_set, low_error_runs, high_error_runs):
    low, _ = low_error_runs
    high, _ = high_error_runs
    res = {}
    for name, nets in (("low", low[:5]), ("corrected", [r["corrected"] for r in high])):
        for eps in EPSILONS:
            vals = []
            for s, net in enumerate(nets):
                x, y = _fidelity_inputs(desk_test_set, s)
                vals.append(fidelity(desk_teacher, net, x, y, eps))
            res[name, eps] = float(np.mean(vals))
    ok = all(res["low", e] >= 0.9 for e in EPSILONS) and \
        all(res["corrected", e] >= 0.7 for e in EPSILONS)
    verdict(8, ok, "mean fidelity over 5 runs: low error "
            + ", ".join(f"eps {e}: {res['low', e]:.3f}" for e in EPSILONS) + " (>= 0.9); "
            + "high error + D2 " + ", ".join(f"eps {e}: {res['corrected', e]:.3f}"
                                              for e in EPSILONS) + " (>= 0.7)")


# 9 -----------------------------------------------------------------------


def test_c9_majority_vote_dichotomy():
    img = MemoryImage(np.full(1 << 20, 0xFF, np.uint8))
    n_bits = 8 << 20
    p = HIGH_ERROR.rho0
    params = DecayParams(p, 0.0, 9)

    ind = decay_trials(img, params, 5, "Independent")
    single = float(np.mean([bit_error_rate(img, t)[0] for t in ind.trials]))
    voted = bit_error_rate(img, majority_vote(ind))[0]
    expect = majority_error_rate(p, 5)
    z = abs(voted - expect) / math.sqrt(expect * (1 - expect) / n_bits)

    fixed = decay_trials(img, params, 5, "FixedPositions")
    f_single = float(np.mean([bit_error_rate(img, t)[0] for t in fixed.trials]))
    f_voted = bit_error_rate(img, majority_vote(fixed))[0]
    corr = error_cross_correlation(fixed, img)
    off = corr[~np.eye(5, dtype=bool)].min()

    ok = voted < single and z <= 3 and abs(f_voted - f_single) <= 0.1 * f_single and off >= 0.9
    verdict(9, ok,
            f"Independent: voted {voted:.2e} vs single {single:.4f}, formula {expect:.2e} "
            f"({z:.2f} sigma); FixedPositions: voted {f_voted:.4f} vs single {f_single:.4f}, "
            f"min off-diagonal correlation {off:.3f}")


# 10 ----------------------------------------------------------------------


def _gradient_case(rng, kind):
    b = int(rng.integers(1, 4))
    if kind == "Dense":
        shape, blocks, loss = (int(rng.integers(1, 7)),), [ir.dense(int(rng.integers(1, 6)))], "proj"
    elif kind == "Conv2D":
        k, s, p = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(0, 2))
        side = int(rng.integers(k, 8))
        shape = (int(rng.integers(1, 3)), side, side + int(rng.integers(0, 2)))
        blocks, loss = [ir.conv2d(int(rng.integers(1, 4)), k, s, p), ir.flatten()], "proj"
    elif kind == "MaxPool2D":
        k = int(rng.integers(2, 4))
        side = int(rng.integers(k, 8))
        shape, blocks, loss = (int(rng.integers(1, 3)), side, side), [ir.maxpool2d(k)], "proj"
        blocks.append(ir.flatten())
    elif kind in ("ReLU", "PReLU", "Dropout"):
        n = int(rng.integers(2, 7))
        act = {"ReLU": ir.relu, "PReLU": ir.prelu,
               "Dropout": lambda: ir.dropout(float(rng.choice([0.2, 0.5])))}[kind]()
        shape, blocks, loss = (n,), [ir.dense(n), act, ir.dense(2)], "proj"
    else:
        n = int(rng.integers(2, 6))
        shape = (int(rng.integers(1, 6)),)
        blocks, loss = [ir.dense(n), ir.softmax()], "ce" if kind == "Softmax+CE" else "kl"
    net = Network(ir.sequential("g", shape, blocks), seed=int(rng.integers(1 << 30)),
                  dtype=np.float64)
    x = rng.random((b, *shape))
    target = None
    if loss == "ce":
        target = rng.integers(0, n, b)
    elif loss == "kl":
        target = softmax(rng.standard_normal((b, n)))
    return net, x, loss, target


def test_c10_gradient_oracle():
    kinds = ["Dense", "Conv2D", "MaxPool2D", "ReLU", "PReLU", "Dropout", "Softmax+CE",
             "Softmax+KL"]
    rng = np.random.default_rng(10)
    worst = {k: 0.0 for k in kinds}
    for i in range(100):
        kind = kinds[i % len(kinds)]
        net, x, loss, target = smooth_case(lambda r: _gradient_case(r, kind), rng)
        worst[kind] = max(worst[kind], check(net, x, loss, target, seed=i))
    ok = all(v <= 1e-3 for v in worst.values())
    verdict(10, ok, "100 random configurations, worst relative error per layer type: "
            + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (<= 1e-3)")


# 11 ----------------------------------------------------------------------


def test_c11_decoy_rejection():
    values = np.random.default_rng(11).uniform(-1, 1, 16).astype(np.float32)
    img = decoy_image(values)
    details, ok = [], True
    for mode in ("strict", "tolerant"):
        got, rep = carve_weights(img, 16, mode=mode)
        hit = got.tobytes() == values.tobytes()
        ok &= hit and rep.scan_restarts >= 1
        details.append(f"{mode}: true blob {'found' if hit else 'missed'}, "
                       f"scan_restarts {rep.scan_restarts}")
    verdict(11, ok, "decoy of 16 floats near 100.0 rejected; " + "; ".join(details))


# 12 ----------------------------------------------------------------------


def test_c12_sanitization_semantics():
    cases = {"n": 0}
    tiny, huge = float(np.float32(1e-4)), float(np.float32(1e38))
    values = st.one_of(st.floats(width=32), st.floats(-tiny, tiny, width=32),
                       st.floats(-huge, huge, width=32))

    @settings(max_examples=10_000, deadline=None, database=None)
    @given(st.lists(values, min_size=1, max_size=8))
    def prop(xs):
        cases["n"] += 1
        orig = np.asarray(xs, np.float32)
        v, rep = sanitize_weights(orig)
        reasons = {s.index: s.reason for s in rep.weights_sanitized}
        for i, x in enumerate(orig):
            if not np.isfinite(x):
                assert v[i] == 0 and reasons[i] == "NonFinite"
            elif abs(x) > 5:
                k = math.ceil(math.log2(abs(float(x)) / 5))
                halved = np.float32(x)
                while abs(halved) > 5:
                    halved = np.float32(halved * np.float32(0.5))
                assert v[i] == halved and reasons[i] == "AboveRange" and k >= 1
                assert 2.5 <= abs(v[i]) <= 5
            elif x != 0 and abs(x) < 1e-5:
                assert reasons[i] == "BelowMagnitude"
                assert 1e-5 <= abs(v[i]) < 2e-5 and np.sign(v[i]) == np.sign(x)
                ratio = float(v[i]) / float(x)
                assert ratio == 2.0 ** round(math.log2(ratio))
            else:
                assert v[i] == x and i not in reasons
        again, rep2 = sanitize_weights(v)
        assert again.tobytes() == v.tobytes() and rep2.weights_sanitized == []

    failure = None
    try:
        prop()
    except AssertionError as exc:
        failure = exc
    verdict(12, failure is None and cases["n"] >= 10_000,
            f"halving/doubling, NaN/Inf -> 0 and idempotence held on {cases['n']} random cases"
            + ("" if failure is None else f"; counterexample: {failure}"))
