"""Walk through one synthetic face: render, decompose, re-light.

Run:  python demos/01_face_decomposition.py [out_dir]

Writes a strip of PNGs (passport image, albedo, normal map, diffuse
reconstruction, a gate capture) and prints the lighting fit error.
"""

import sys
from pathlib import Path

import numpy as np

from dmad import synth
from dmad.core import FloatMap, save_image
from dmad.shading import diffuse_reconstruct, fit_lighting_ex, render_diffuse

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

# A face is a heightmap of smooth bumps plus a textured albedo.  Its normals
# come straight from the height gradients.
face, passport = synth.gen_identity(seed=3, face_id="demo")
truth = passport.truth
print("face", face.face_id, "size", face.normals.data.shape[:2], "valid pixels", int(face.normals.mask.sum()))

save_image(passport.image, out / "passport.png")
save_image(truth.albedo, out / "albedo.png")
# map normal components from [-1, 1] to [0, 1] for viewing
save_image(FloatMap((truth.normals.data + 1) / 2, truth.normals.mask), out / "normals.png")

# Refit the 9 SH lighting coefficients from image, normals and albedo.
fit = fit_lighting_ex(passport.image, truth.normals, truth.albedo)
err = np.linalg.norm(fit.lighting.coeffs - truth.lighting.coeffs) / np.linalg.norm(truth.lighting.coeffs)
print(f"lighting fit: rank {fit.rank}, relative error {err:.2e}, residual rms {fit.residual_rms:.2e}")

recon = diffuse_reconstruct(truth)
save_image(recon, out / "diffuse.png")

# The same face under a gate camera: different lighting, pose jitter and noise.
cam = synth.default_cameras()[2]
gate = synth.render_gate_capture(face, cam, seed=11)
save_image(gate.image, out / "gate_cam3.png")

# Relighting keeps shape and albedo but swaps the light.
side = render_diffuse(truth.normals, truth.albedo, cam.lighting)
save_image(side, out / "relit_cam3.png")
print("wrote", ", ".join(sorted(p.name for p in out.glob("*.png"))), "to", out)
