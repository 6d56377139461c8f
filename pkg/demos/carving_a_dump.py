"""
Carving a model out of a raw memory image
=========================================

"""

import numpy as np

from coldcarve import ir
from coldcarve.carver import carve_weights, recover, sanitize_weights
from coldcarve.memory import HIGH_ERROR, apply_decay, synthesize_dump
from coldcarve.nn import Network, zoo

# a small victim model, serialized the way an inference runtime keeps it in RAM
net = Network(zoo.build("base"), seed=0)
xml = ir.serialize_xml(net.spec)
image = synthesize_dump(xml, net.blob(), total_size=1 << 17, seed=0)
print(len(image), "byte image;", [(e.tag, e.offset, e.length) for e in image.manifest])

# damage it at a high decay rate and recover without looking at the manifest
for seed in range(20):
    try:
        r = recover(apply_decay(image, HIGH_ERROR.with_seed(seed)))
        break
    except Exception as exc:  # architecture unreadable: take another dump
        print("dump", seed, "failed:", type(exc).__name__)
# free-text fields such as the model name are not repaired
print("layers and edges match:", r.model.layers == net.spec.layers and r.model.edges == net.spec.edges,
      " name:", r.model.name)
print("first repairs:")
for rep in r.report.xml_repairs[:5]:
    print("   ", rep.offset, repr(rep.original), "->", repr(rep.repaired))
print("weights", r.report.weights_found, " sanitized", len(r.report.weights_sanitized))

# exponent damage: halve what is too big, double what is too small
values, report = sanitize_weights([12.0, 1e-7, np.nan, 0.25])
print(values, [s.reason for s in report.weights_sanitized])

# a run of implausible floats ahead of the blob is skipped by the range test
decoy = np.full(16, 100.0, "<f4").tobytes()
true = np.linspace(-1, 1, 16, dtype="<f4")
raw = b"lorem ipsum " * 20 + decoy + b"dolor sit amet " * 20 + true.tobytes() + b"." * 64
found, rep = carve_weights(raw, 16)
print("decoy skipped:", np.array_equal(found, true), " restarts", rep.scan_restarts)

# the strict scanner only looks on an 8-byte grid; this blob starts at byte 604
found, _ = carve_weights(raw, 16, mode="strict")
print("strict finds it:", np.array_equal(found, true), " first value", found[0])
