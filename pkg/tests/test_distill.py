import numpy as np
import pytest

from coldcarve import desk, ir
from coldcarve.distill import (DistillConfig, DistillReport, Teacher, correct, distill_d1,
                               distill_d2, distill_with_history, initial_correction,
                               layer_norm_profile, retrain_scratch)
from coldcarve.errors import ArchitectureMismatch, ConfigError
from coldcarve.memory import HIGH_ERROR
from coldcarve.metrics import rad
from coldcarve.nn import (Network, TrainConfig, accuracy, kl_divergence_loss, make_blobs,
                          train)
from coldcarve.nn.optim import StepDecay

SEEDS = range(5)
IO = ((1, 12, 12), (3,))


def _toy():
    data = make_blobs(120, seed=0)
    teacher = Network(ir.sequential("t", (2,), [ir.dense(8), ir.relu(), ir.dense(3),
                                                ir.softmax()]), seed=1)
    student = Network(teacher.spec, seed=2)
    return teacher, student, data.unlabeled()


def _cfg(recovery, teacher, mode="D1", rate=0.5, **train):
    train.setdefault("epochs", 5)
    return DistillConfig(recovery, Teacher(teacher), mode, rate, TrainConfig(**train))


def test_teacher_untouched():
    teacher, student, rec = _toy()
    before = teacher.blob()
    t = Teacher(teacher)
    teacher.load_vector(np.zeros(teacher.n_params))  # later edits don't leak in
    teacher.load_vector(np.frombuffer(before, "<f4"))
    for mode in ("D1", "D2"):
        distill_with_history(student, DistillConfig(rec, t, mode, train=TrainConfig(epochs=3)))
    assert t._net.blob() == before and teacher.blob() == before


def test_student_argument_not_modified():
    teacher, student, rec = _toy()
    before = student.blob()
    out = distill_d2(student, _cfg(rec, teacher))
    assert student.blob() == before and out.blob() != before


def test_rate_zero_matches_plain_distillation():
    teacher, student, rec = _toy()
    a = distill_d1(student, _cfg(rec, teacher, seed=3))
    b = distill_d2(student, _cfg(rec, teacher, "D2", 0.0, seed=3))
    assert a.blob() == b.blob()


def test_near_total_dropout_barely_moves():
    teacher, student, rec = _toy()
    out = distill_d2(student, _cfg(rec, teacher, "D2", 0.999, lr=1e-3))
    moved = np.abs(out.parameter_vector() - student.parameter_vector())
    full = np.abs(distill_d1(student, _cfg(rec, teacher, lr=1e-3)).parameter_vector()
                  - student.parameter_vector())
    assert moved.sum() < 0.05 * full.sum()


def test_config_validation():
    teacher, _, rec = _toy()
    with pytest.raises(ConfigError):
        DistillConfig(rec, Teacher(teacher), "D3")
    with pytest.raises(ConfigError):
        DistillConfig(rec, Teacher(teacher), "D2", 1.0)
    assert isinstance(DistillConfig(rec, teacher).teacher, Teacher)


def test_layer_norm_examples():
    teacher, student, _ = _toy()
    assert layer_norm_profile(teacher, teacher) == [0.0, 0.0]
    double = Network(teacher.spec)
    double.load_vector(2 * teacher.parameter_vector())
    assert layer_norm_profile(teacher, double) == pytest.approx([1.0, 1.0])
    other = Network(ir.sequential("o", (2,), [ir.dense(3), ir.softmax()]))
    with pytest.raises(ArchitectureMismatch):
        layer_norm_profile(teacher, other)


def test_initial_correction_zeroes_suspicious_weights():
    teacher, _, _ = _toy()
    v = teacher.parameter_vector()
    v[:3] = [7.0, 1e-9, np.nan]
    teacher.load_vector(v)
    out = initial_correction(teacher).parameter_vector()
    assert out[:3].tolist() == [0, 0, 0] and np.array_equal(out[3:], v[3:])


def test_report_text():
    rep = DistillReport("D2", [0.5, 0.25], 2, 0.3, 0.05, {"lr": 0.001})
    text = rep.to_text()
    assert "epochs/rad\t2/0.0500" in text and text.rstrip().endswith("2\t0.25")


def test_retrain_stops_on_plateau():
    data = make_blobs(90, seed=0)
    spec = _toy()[0].spec
    net, hist = retrain_scratch(spec, data, TrainConfig(lr=0.0, epochs=40), patience=2)
    assert hist.stopped_early and hist.epochs == 4
    cfg = TrainConfig(lr=2e-2, batch_size=8, epochs=200)
    teacher = train(Network(spec, seed=5), data, cfg)
    net, hist = retrain_scratch(spec, data, cfg)
    assert hist.epochs < 200
    assert accuracy(net, data) >= accuracy(teacher, data) - 0.05


# desk fixture


@pytest.fixture(scope="module")
def damaged(desk_teacher):
    """Zero-corrected high-error recoveries of the pinned teacher, one per seed."""
    img = desk.dump(desk_teacher, 0)
    return [desk.attack(img, HIGH_ERROR.with_seed(100 * s), IO, correction="zero")[0].network
            for s in SEEDS]


@pytest.fixture(scope="module")
def teacher_acc(desk_teacher, desk_test_set):
    return accuracy(desk_teacher, desk_test_set)


def test_teacher_fixed_point(desk_teacher, desk_test_set, teacher_acc):
    rec = desk.recovery_set()
    cfg = DistillConfig(rec, desk_teacher, "D1", train=TrainConfig(epochs=3))
    start, _ = kl_divergence_loss(desk_teacher.predict_proba(rec.inputs),
                                  cfg.teacher.query(rec.inputs))
    assert abs(start) < 1e-6
    out, rep = correct(desk_teacher, cfg, desk_test_set, teacher_acc)
    assert rad(teacher_acc, accuracy(out, desk_test_set)) <= 0.01


def test_distillation_lowers_rad(desk_teacher, desk_test_set, teacher_acc, damaged):
    for s, student in enumerate(damaged):
        cfg = DistillConfig(desk.recovery_set(), desk_teacher, "D1", train=TrainConfig(seed=s))
        _, rep = correct(student, cfg, desk_test_set, teacher_acc)
        assert rep.rad_after < rep.rad_before


def test_gradient_dropout_no_worse_on_small_set(desk_teacher, desk_test_set, teacher_acc,
                                                damaged):
    small = desk.recovery_set(0.05)
    r = {"D1": [], "D2": []}
    for s, student in enumerate(damaged):
        for mode in r:
            cfg = DistillConfig(small, desk_teacher, mode, train=TrainConfig(seed=s))
            r[mode].append(rad(teacher_acc, accuracy(distill_with_history(student, cfg)[0],
                                                     desk_test_set)))
    assert np.mean(r["D2"]) <= np.mean(r["D1"]) + 0.02


def test_more_recovery_data_helps(desk_teacher, desk_test_set, teacher_acc, damaged):
    r = {0.05: [], 0.1: []}
    for s, student in enumerate(damaged):
        for frac in r:
            cfg = DistillConfig(desk.recovery_set(frac), desk_teacher, "D1",
                                train=TrainConfig(seed=s))
            r[frac].append(rad(teacher_acc, accuracy(distill_d1(student, cfg), desk_test_set)))
    assert np.mean(r[0.1]) <= np.mean(r[0.05]) + 0.02


def test_slow_rate_recovery_layer_profile(desk_teacher, desk_test_set, teacher_acc, damaged):
    """Outer layers end closer to the original than the inner ones, on average."""
    profiles, rads = [], []
    for s, student in enumerate(damaged):
        cfg = DistillConfig(desk.recovery_set(), desk_teacher, "D1", train=TrainConfig(
            lr=1e-5, epochs=500, lr_schedule=StepDecay(0.5, 50), seed=s))
        out = distill_d1(student, cfg)
        profiles.append(layer_norm_profile(desk_teacher, out))
        rads.append(rad(teacher_acc, accuracy(out, desk_test_set)))
    mean = np.mean(profiles, axis=0)
    assert max(mean[0], mean[-1]) < min(mean[1:-1])
    assert np.mean(rads) < 0.1
