import math

import numpy as np
import pytest

from dmad import synth
from dmad.core import FloatMap, load_manifest, read_fmap
from dmad.errors import ValidationError
from dmad.features import normal_pair_feature, quantize_normals
from dmad.geometry import align, eye_centers
from dmad.shading import decompose


def test_identity_deterministic():
    f1, c1 = synth.gen_identity(11)
    f2, c2 = synth.gen_identity(11)
    assert c1.image == c2.image
    assert f1.normals == f2.normals
    np.testing.assert_array_equal(f1.landmarks, f2.landmarks)


def test_identities_differ():
    a, _ = synth.gen_identity(1)
    b, _ = synth.gen_identity(2)
    differ = (np.abs(a.albedo - b.albedo) > 1e-6).any(axis=-1).mean()
    assert differ >= 0.01


def test_flat_heightmap_normals():
    f = synth.make_face("flat", 5, flat=True)
    assert f.normals.mask.all()
    np.testing.assert_array_equal(f.normals.data[..., 2], 1.0)
    assert not f.normals.data[..., :2].any()


def test_linear_ramp_normals():
    a = 0.3
    h = a * np.tile(np.arange(256, dtype=float), (256, 1))
    n = synth.normals_from_height(h).data
    want = np.array([-a, 0, 1]) / math.hypot(a, 1)
    np.testing.assert_allclose(n.reshape(-1, 3), np.tile(want, (256 * 256, 1)), atol=1e-6)


def test_generator_normals_and_consistency():
    face, cap = synth.gen_identity(9)
    d = face.normals.data.astype(np.float64)
    assert np.abs(np.linalg.norm(d, axis=-1) - 1).max() <= 1e-4
    assert cap.truth.consistency_error() <= 1e-5


def test_morph_alpha_one_is_parent_a():
    a, _ = synth.gen_identity(1)
    b, _ = synth.gen_identity(2)
    m = synth.gen_morph(a, b, 1.0)
    np.testing.assert_allclose(m.height, a.height, atol=1e-6)
    np.testing.assert_allclose(m.albedo, a.albedo, atol=1e-6)
    np.testing.assert_array_equal(m.landmarks, a.landmarks)
    assert m.parents == (a.face_id, b.face_id)


def test_morph_symmetric_at_half():
    a, _ = synth.gen_identity(3)
    b, _ = synth.gen_identity(4)
    ab, ba = synth.gen_morph(a, b, 0.5), synth.gen_morph(b, a, 0.5)
    np.testing.assert_array_equal(ab.height, ba.height)
    np.testing.assert_array_equal(ab.albedo, ba.albedo)
    np.testing.assert_array_equal(ab.landmarks, ba.landmarks)


def test_morph_errors():
    a, _ = synth.gen_identity(3)
    b, _ = synth.gen_identity(4)
    for alpha in (-0.1, 1.5):
        with pytest.raises(ValidationError):
            synth.gen_morph(a, b, alpha)
    with pytest.raises(ValidationError):
        synth.gen_morph(a, a, 0.5)


def test_morph_is_closer_to_parent_than_parents_are():
    for k in range(50):
        a = synth.make_face("a", 1000 + 2 * k)
        b = synth.make_face("b", 1001 + 2 * k)
        m = synth.gen_morph(a, b, 0.5)
        qa, qb, qm = (quantize_normals(f.normals) for f in (a, b, m))
        assert normal_pair_feature(qm, qa).scalar_l1 < normal_pair_feature(qa, qb).scalar_l1


def test_identity_camera_equals_passport():
    face, cap = synth.gen_identity(6)
    gate = synth.render_gate_capture(face, synth.studio_camera(), seed=1)
    assert gate.image == cap.image
    np.testing.assert_array_equal(gate.landmarks, cap.landmarks)


def test_jitter_is_undone_by_alignment():
    face, _ = synth.gen_identity(6)
    cam = synth.CameraProfile(9, synth.STUDIO_LIGHT, jitter=0.3)
    tilts = []
    for seed in range(10):
        cap = synth.render_gate_capture(face, cam, seed)
        left, right = eye_centers(cap.landmarks)
        tilts.append(abs(left[1] - right[1]))
        _, _, lm = align(cap.image, cap.landmarks)
        l2, r2 = eye_centers(lm)
        assert abs(l2[1] - r2[1]) <= 0.5
    assert max(tilts) > 5.0


def test_noise_psnr():
    face, _ = synth.gen_identity(7)
    clean = synth.render_gate_capture(face, synth.studio_camera(), 0).image.data
    cam = synth.CameraProfile(9, synth.STUDIO_LIGHT, noise=0.01)
    for seed in range(5):
        noisy = synth.render_gate_capture(face, cam, seed).image.data
        psnr = 10 * math.log10(1.0 / np.mean((noisy.astype(float) - clean) ** 2))
        assert 35 <= psnr <= 45


def test_camera_profile_invariants():
    with pytest.raises(ValidationError):
        synth.CameraProfile(1, synth.STUDIO_LIGHT, downscale=0.5)
    with pytest.raises(ValidationError):
        synth.CameraProfile(1, synth.STUDIO_LIGHT, noise=-0.1)
    assert [c.out_size for c in synth.default_cameras()] == [(256, 256), (205, 205), (171, 171), (128, 128)]


def test_print_scan_constant_image():
    out = synth.degrade_print_scan(FloatMap(np.full((128, 128, 3), 0.5)), seed=1).data
    want = 0.5 ** 1.1
    quant = 0.5 / 255
    assert abs(out.mean() - want) <= 3 * 0.01 / math.sqrt(out.size) + quant
    assert np.mean(np.abs(out - want) <= 3 * 0.01 + quant) >= 0.99
    np.testing.assert_array_equal(np.rint(out * 255), out * 255)


def test_print_scan_zero_and_not_idempotent():
    zero = synth.degrade_print_scan(FloatMap(np.zeros((64, 64))), seed=2)
    assert zero.data.min() >= 0 and zero.data.max() <= 0.04
    _, cap = synth.gen_identity(3)
    once = synth.degrade_print_scan(cap.image, seed=5)
    twice = synth.degrade_print_scan(once, seed=5)
    assert once != twice


def test_print_scan_truth_is_consistent():
    _, cap = synth.gen_identity(3)
    printed = synth.degrade_print_scan(cap.image, seed=5)
    truth = synth.print_scan_truth(cap.truth, printed)
    assert truth.consistency_error() <= 1e-5
    assert truth.normals == cap.truth.normals
    np.testing.assert_allclose(truth.diffuse.data, printed.data, atol=1e-5)


def test_default_plan_counts():
    plan = synth.dataset_plan()
    by = lambda role, split: sum(p.role == role and p.split == split for p in plan)  # noqa: E731
    assert (by("bonafide_passport", "train"), by("bonafide_passport", "test")) == (19, 20)
    assert (by("morph_passport", "train"), by("morph_passport", "test")) == (52, 38)
    gates = {(s, c): sum(p.role == "gate" and p.split == s and p.camera_id == c for p in plan)
             for s in ("train", "test") for c in (1, 2, 3, 4)}
    assert gates == {("train", 1): 58, ("train", 2): 64, ("train", 3): 58, ("train", 4): 57,
                     ("test", 1): 57, ("test", 2): 63, ("test", 3): 49, ("test", 4): 53}


def test_plan_morph_parents_stay_in_split():
    plan = synth.dataset_plan()
    split_of = {p.subject_id: p.split for p in plan if p.role == "bonafide_passport"}
    for p in plan:
        if p.role == "morph_passport":
            rec = p.record()
            assert {split_of[s] for s in rec.morph_parents} == {p.split}


def test_plan_rejects_too_many_morphs():
    with pytest.raises(ValidationError):
        synth.dataset_plan(n_subjects=4, n_morphs=7)


def test_minimal_dataset(tmp_path):
    m = synth.emit_dataset(tmp_path, n_subjects=2, n_morphs=1)
    morphs = m.select(role="morph_passport")
    assert len(morphs) == 1
    assert sorted(morphs[0].morph_parents) == sorted(r.subject_id for r in m.select(role="bonafide_passport"))


def test_emit_is_deterministic(tmp_path):
    cams = synth.default_cameras()[3:]
    a = synth.emit_dataset(tmp_path / "a", n_subjects=4, n_morphs=2, cams=cams, master_seed=5)
    b = synth.emit_dataset(tmp_path / "b", n_subjects=4, n_morphs=2, cams=cams, master_seed=5)
    assert (tmp_path / "a/manifest.txt").read_bytes() == (tmp_path / "b/manifest.txt").read_bytes()
    for rec in a:
        for rel in (rec.normals_path, rec.albedo_path, rec.image_path, rec.landmarks_path):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert len(a) == len(b)


def test_emitted_dataset_invariants(small_dataset):
    m = load_manifest(small_dataset.root / "manifest.txt")
    assert m == small_dataset
    for rec in m:
        d = decompose(None, rec, "synthetic_ground_truth", m.root)
        assert d.consistency_error() <= 1e-5
        if rec.role == "gate":
            assert read_fmap(m.resolve(rec.normals_path)).width == synth.CameraProfile(
                0, synth.STUDIO_LIGHT, downscale=[1.0, 1.25, 1.5, 2.0][rec.camera_id - 1]).out_size[0]


def test_template_asset_is_mean_face():
    f = synth.make_face("t", None)
    left, right = eye_centers(f.landmarks)
    np.testing.assert_allclose(left, (88, 120))
    np.testing.assert_allclose(right, (168, 120))
