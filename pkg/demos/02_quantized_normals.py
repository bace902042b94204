"""How the normal-map feature is built from two decompositions.

Run:  python demos/02_quantized_normals.py

Quantizes the normals of a bona fide passport, a morph and the live gate
capture, then compares grid features of the two pairs.
"""

import numpy as np

from dmad import synth
from dmad.features import normal_grid_features, quantize_normals

a, cap_a = synth.gen_identity(seed=1, face_id="A")
b, _ = synth.gen_identity(seed=2, face_id="B")
morph = synth.gen_morph(a, b, alpha=0.5, face_id="AB")
gate = synth.render_gate_capture(a, synth.default_cameras()[0], seed=5)

q_bona = quantize_normals(cap_a.truth.normals)
q_morph = quantize_normals(synth.passport_decomposition(morph).normals)
q_gate = quantize_normals(gate.truth.normals)

print("codes per pixel:", q_bona.codes.shape[-1], "x 7 bits, range", q_bona.codes.min(), "-", q_bona.codes.max())
n = cap_a.truth.normals.data[128, 128]
print("centre pixel normal", np.round(n, 3), "-> codes", q_bona.codes[128, 128])

# 32x32 grid of mean absolute code differences per channel: 3072 values.
f = normal_grid_features(q_gate, [q_bona, q_morph])
print("feature length", f.shape[1])
print(f"mean |diff| genuine pair {f[0].mean():.3f}")
print(f"mean |diff| attack pair  {f[1].mean():.3f}")

# The morph moves every shape bump halfway towards B, so its cells differ more.
worse = (f[1] > f[0]).mean()
print(f"cells where the morph differs more than the bona fide passport: {100 * worse:.1f}%")
