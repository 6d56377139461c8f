"""
Attacking a trained model and repairing it by distillation
==========================================================

Trains the small image classifier, recovers it from a heavily decayed
dump, then corrects the damaged copy using only the victim's softmax
outputs on unlabelled, slightly different images.
"""

from coldcarve import desk
from coldcarve.distill import DistillConfig, Teacher, correct, initial_correction, layer_norm_profile
from coldcarve.memory import HIGH_ERROR, LOW_ERROR
from coldcarve.metrics import fidelity, rad
from coldcarve.nn import Network, TrainConfig, accuracy

teacher = desk.train_teacher()
test = desk.test_set()
acc = accuracy(teacher, test)
print(f"victim test accuracy {acc:.3f}")

image = desk.dump(teacher)
io = (teacher.spec.input_shape, teacher.spec.output_shape)

low, _ = desk.attack(image, LOW_ERROR, io)
print(f"low decay:  RAD {rad(acc, accuracy(low.network, test)):+.4f}")

high, dumps = desk.attack(image, HIGH_ERROR, io, correction="none")
raw = high.network
print(f"high decay: {dumps} dump(s) needed")
print("layer norms of the damage", [f"{v:.3g}" for v in layer_norm_profile(teacher, raw)])

# zero out implausible weights, then distil with gradient dropout
student = initial_correction(raw)
cfg = DistillConfig(desk.recovery_set(0.1), Teacher(teacher), "D2", 0.5, TrainConfig(seed=0))
fixed, report = correct(student, cfg, test, acc)
print(f"RAD after zeroing {report.rad_before:.3f}, after D2 {report.rad_after:.4f}")

for eps in (0.01, 0.1):
    x, y = test.inputs[:500], test.labels[:500]
    print(f"fidelity at eps={eps}: {fidelity(teacher, fixed, x, y, eps):.3f}")
