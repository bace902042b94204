"""Synthetic Lambertian face world with exact ground truth.

Identities are height fields built from Gaussian bumps anchored on a
parametric 68-point landmark layout, with a smooth colour albedo.  Normals
come from central differences of the height field.  Passports are rendered
frontally under fixed studio lighting; gate captures add in-plane pose
jitter, per-camera SH lighting, downscaling and sensor noise.  Morphs
blend two parents after aligning them on the blended eye positions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import (
    DatasetManifest,
    FloatMap,
    NormalMap,
    Record,
    SHLighting,
    normalize_normals,
    save_image,
    write_fmap,
    write_landmarks,
    write_lighting,
)
from .errors import ValidationError
from .geometry import CANON_LEFT, CANON_RIGHT, SimilarityTransform, align_transform, Canonical, warp, warp_normals
from .shading import Decomposition, MIN_SHADING, render_diffuse, shading_array

SIZE = 256
CENTER = (SIZE - 1) / 2.0

# stream tags for per-record seeds
_SPLIT, _IDENTITY, _MORPH_PAIRS, _GATE, _PRINT = range(5)

STUDIO_LIGHT = SHLighting(np.array([
    [2.70, 0.00, 0.75, 0.05, 0.0, 0.0, -0.12, 0.0, 0.04],
    [2.62, 0.00, 0.73, 0.05, 0.0, 0.0, -0.12, 0.0, 0.04],
    [2.55, 0.00, 0.70, 0.05, 0.0, 0.0, -0.12, 0.0, 0.04],
]))

# Table-1 gate image counts per camera, for 19 train / 20 test subjects
TABLE1_GATE_COUNTS = {
    "train": {1: 58, 2: 64, 3: 58, 4: 57},
    "test": {1: 57, 2: 63, 3: 49, 4: 53},
}
TABLE1_SPLIT_SUBJECTS = {"train": 19, "test": 20}
TABLE1_MORPH_TRAIN_FRACTION = 52 / 90


def _rng(master_seed, *stream):
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, stream)]))


@dataclass(frozen=True)
class CameraProfile:
    camera_id: int
    lighting: SHLighting
    jitter: float = 0.0      # max |in-plane rotation| in radians
    downscale: float = 1.0
    noise: float = 0.0

    def __post_init__(self):
        if self.downscale < 1:
            raise ValidationError("camera downscale factor must be >= 1")
        if self.noise < 0:
            raise ValidationError("camera noise sigma must be >= 0")

    @property
    def out_size(self):
        side = int(round(SIZE / self.downscale))
        return side, side


def _light(rows):
    return SHLighting(np.array(rows, dtype=np.float64))


def default_cameras() -> list[CameraProfile]:
    """Four gate cameras with distinct lighting, pose spread, resolution and noise."""
    return [
        CameraProfile(1, _light([[2.5, 0.10, 0.55, -0.45, 0.05, 0.0, -0.10, -0.10, 0.06]] * 3),
                      jitter=0.10, downscale=1.0, noise=0.010),
        CameraProfile(2, _light([[2.4, -0.45, 0.50, 0.00, 0.0, -0.08, -0.15, 0.0, -0.05],
                                 [2.4, -0.45, 0.50, 0.00, 0.0, -0.08, -0.15, 0.0, -0.05],
                                 [2.6, -0.45, 0.52, 0.00, 0.0, -0.08, -0.15, 0.0, -0.05]]),
                      jitter=0.15, downscale=1.25, noise=0.015),
        CameraProfile(3, _light([[2.75, 0.05, 0.60, 0.40, -0.04, 0.0, -0.10, 0.08, 0.05],
                                 [2.55, 0.05, 0.56, 0.37, -0.04, 0.0, -0.10, 0.08, 0.05],
                                 [2.25, 0.05, 0.50, 0.33, -0.04, 0.0, -0.10, 0.08, 0.05]]),
                      jitter=0.10, downscale=1.5, noise=0.010),
        CameraProfile(4, _light([[2.1, 0.20, 0.65, 0.15, 0.0, 0.05, -0.05, 0.0, 0.0],
                                 [2.2, 0.20, 0.66, 0.15, 0.0, 0.05, -0.05, 0.0, 0.0],
                                 [2.4, 0.20, 0.70, 0.15, 0.0, 0.05, -0.05, 0.0, 0.0]]),
                      jitter=0.20, downscale=2.0, noise=0.020),
    ]


def studio_camera() -> CameraProfile:
    return CameraProfile(0, STUDIO_LIGHT)


# ---------------------------------------------------------------- identities


@dataclass(frozen=True)
class Anchors:
    left_eye: tuple
    right_eye: tuple
    nose_drop: float = 0.55   # multiples of the inter-eye distance below the eye line
    mouth_drop: float = 0.95
    chin_drop: float = 1.45
    face_half_width: float = 0.95
    mouth_half_width: float = 0.30

    @property
    def iod(self):
        return math.dist(self.left_eye, self.right_eye)

    @property
    def mid(self):
        return ((self.left_eye[0] + self.right_eye[0]) / 2, (self.left_eye[1] + self.right_eye[1]) / 2)


def _ellipse_points(cx, cy, rx, ry, angles_deg):
    a = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    return np.stack([cx + rx * np.cos(a), cy - ry * np.sin(a)], axis=1)


def landmark_layout(an: Anchors) -> np.ndarray:
    """68 points in the usual annotation order, derived from the anchors."""
    iod = an.iod
    mx, ey = an.mid
    jaw_t = np.linspace(math.pi, 0.0, 17)
    jaw = np.stack([mx + an.face_half_width * iod * np.cos(jaw_t),
                    ey + an.chin_drop * iod * np.sin(jaw_t)], axis=1)
    brows = []
    for ex, eyy in (an.left_eye, an.right_eye):
        bx = ex + np.linspace(-0.22, 0.22, 5) * iod
        by = eyy - (0.28 + 0.05 * np.cos(np.linspace(-1.2, 1.2, 5))) * iod
        brows.append(np.stack([bx, by], axis=1))
    nose_y = ey + an.nose_drop * iod
    bridge = np.stack([np.full(4, mx), np.linspace(ey + 0.05 * iod, nose_y, 4)], axis=1)
    base = np.stack([mx + np.linspace(-0.15, 0.15, 5) * iod,
                     nose_y + 0.08 * iod + 0.02 * iod * np.abs(np.linspace(-1, 1, 5))], axis=1)
    eye_angles = [180, 120, 60, 0, -60, -120]
    eyes = [_ellipse_points(ex, eyy, 0.15 * iod, 0.06 * iod, eye_angles) for ex, eyy in (an.left_eye, an.right_eye)]
    my = ey + an.mouth_drop * iod
    outer = _ellipse_points(mx, my, an.mouth_half_width * iod, 0.12 * iod, np.arange(180, -180, -30))
    inner = _ellipse_points(mx, my, 0.65 * an.mouth_half_width * iod, 0.05 * iod, np.arange(180, -180, -45))
    pts = np.vstack([jaw, brows[0], brows[1], bridge, base, eyes[0], eyes[1], outer, inner])
    assert pts.shape == (68, 2)
    return pts


def _gauss(xx, yy, cx, cy, sx, sy):
    return np.exp(-0.5 * (((xx - cx) / sx) ** 2 + ((yy - cy) / sy) ** 2))


def _bump_list(an: Anchors, rng=None):
    """(cx, cy, sx, sy, amplitude) bumps for brow, nose, cheeks, chin and head."""
    iod = an.iod
    mx, ey = an.mid
    (lx, ly), (rx_, ry) = an.left_eye, an.right_eye
    bumps = [
        (mx, ey + 0.30 * iod, 1.00 * iod, 1.35 * iod, 70.0),            # head
        (mx, ey + 0.25 * iod, 0.10 * iod, 0.30 * iod, 10.0),            # nose bridge
        (mx, ey + an.nose_drop * iod, 0.13 * iod, 0.11 * iod, 14.0),    # nose tip
        (lx, ly - 0.22 * iod, 0.25 * iod, 0.08 * iod, 5.0),             # brows
        (rx_, ry - 0.22 * iod, 0.25 * iod, 0.08 * iod, 5.0),
        (lx, ly, 0.20 * iod, 0.12 * iod, -6.0),                          # eye sockets
        (rx_, ry, 0.20 * iod, 0.12 * iod, -6.0),
        (lx - 0.05 * iod, ly + 0.45 * iod, 0.25 * iod, 0.22 * iod, 6.0),  # cheeks
        (rx_ + 0.05 * iod, ry + 0.45 * iod, 0.25 * iod, 0.22 * iod, 6.0),
        (mx, ey + an.mouth_drop * iod, 0.30 * iod, 0.08 * iod, 4.0),    # lips
        (mx, ey + 1.30 * iod, 0.30 * iod, 0.20 * iod, 6.0),             # chin
    ]
    bumps = np.array(bumps)
    if rng is None:
        return bumps
    n = len(bumps)
    bumps[:, 0:2] += rng.normal(0, 0.04 * iod, size=(n, 2)) * (np.arange(n) > 0)[:, None]
    bumps[:, 2:4] *= rng.uniform(0.8, 1.2, size=(n, 2))
    bumps[:, 4] *= rng.uniform(0.65, 1.35, size=n)
    extra = np.column_stack([
        mx + rng.uniform(-0.6, 0.6, 5) * iod,
        ey + rng.uniform(-0.4, 1.2, 5) * iod,
        rng.uniform(0.08, 0.25, (5, 2)) * iod,
        rng.uniform(-4.0, 4.0, 5),
    ])
    return np.vstack([bumps, extra])


def heightmap(bumps) -> np.ndarray:
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    h = np.zeros((SIZE, SIZE))
    for cx, cy, sx, sy, amp in bumps:
        h += amp * _gauss(xx, yy, cx, cy, sx, sy)
    return h


def normals_from_height(h) -> NormalMap:
    """n = normalize(-dh/dx, -dh/dy, 1) with central differences."""
    gy, gx = np.gradient(np.asarray(h, dtype=np.float64))
    return normalize_normals(np.stack([-gx, -gy, np.ones_like(gx)], axis=-1))


def _soft_ellipse(xx, yy, cx, cy, rx, ry, edge=0.15):
    r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    return 1.0 / (1.0 + np.exp((r - 1.0) / edge))


def _albedo(an: Anchors, rng=None) -> np.ndarray:
    iod = an.iod
    mx, ey = an.mid
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    if rng is None:
        skin = np.array([0.72, 0.56, 0.46])
        coarse = np.zeros((SIZE, SIZE, 3))
        fine = np.zeros((SIZE, SIZE, 1))
        lip = np.array([0.62, 0.32, 0.32])
        brow = np.array([0.22, 0.17, 0.14])
    else:
        tone = rng.uniform(-0.12, 0.12)
        skin = np.array([0.72, 0.56, 0.46]) + tone + rng.normal(0, 0.03, 3)
        coarse = ndimage.gaussian_filter(rng.normal(0, 1, (SIZE, SIZE, 4)), (10, 10, 0))
        coarse /= coarse.std(axis=(0, 1))
        coarse = 0.05 * coarse[..., :1] + 0.015 * coarse[..., 1:]  # mostly luminance
        fine = ndimage.gaussian_filter(rng.normal(0, 1, (SIZE, SIZE, 1)), (0.8, 0.8, 0))
        fine *= 0.03 / fine.std()
        lip = np.array([0.62, 0.32, 0.32]) + rng.normal(0, 0.04, 3)
        brow = np.array([0.22, 0.17, 0.14]) * rng.uniform(0.6, 1.6)
    face = _soft_ellipse(xx, yy, mx, ey + 0.3 * iod, 1.05 * iod, 1.6 * iod)[..., None]
    bg = np.array([0.35, 0.40, 0.46])
    alb = skin * (1 + coarse + fine)
    for ex, eyy in (an.left_eye, an.right_eye):
        eye = _soft_ellipse(xx, yy, ex, eyy, 0.15 * iod, 0.06 * iod, 0.2)[..., None]
        alb = alb * (1 - eye) + 0.18 * eye
        br = _soft_ellipse(xx, yy, ex, eyy - 0.3 * iod, 0.22 * iod, 0.04 * iod, 0.25)[..., None]
        alb = alb * (1 - br) + brow * br
    lips = _soft_ellipse(xx, yy, mx, ey + an.mouth_drop * iod, an.mouth_half_width * iod, 0.09 * iod, 0.2)[..., None]
    alb = alb * (1 - lips) + lip * lips
    alb = face * alb + (1 - face) * bg
    return np.clip(alb, 0.02, 0.98)


@dataclass(frozen=True, eq=False)
class Face:
    """Renderable face in the canonical 256 x 256 frame."""

    face_id: str
    height: np.ndarray
    albedo: np.ndarray
    landmarks: np.ndarray
    eyes: tuple
    seed: int | None = None
    parents: tuple | None = None
    alpha: float | None = None

    @cached_property
    def normals(self) -> NormalMap:
        return normals_from_height(self.height)

    @cached_property
    def albedo_map(self) -> FloatMap:
        return FloatMap(self.albedo.astype(np.float32))


# IdentityParams in the data model: the seed, bumps, albedo and anchors are
# fully determined by the seed, so a Face built by gen_identity carries them.
IdentityParams = Face


def _anchors(rng=None) -> Anchors:
    if rng is None:
        return Anchors(CANON_LEFT, CANON_RIGHT)
    iod = 80.0 * rng.uniform(0.93, 1.07)
    cx = 128.0 + rng.normal(0, 2.0)
    cy = 120.0 + rng.normal(0, 2.0)
    tilt = rng.normal(0, 0.5)
    return Anchors(
        (cx - iod / 2, cy - tilt),
        (cx + iod / 2, cy + tilt),
        nose_drop=rng.uniform(0.5, 0.6),
        mouth_drop=rng.uniform(0.9, 1.0),
        chin_drop=rng.uniform(1.38, 1.52),
        face_half_width=rng.uniform(0.88, 1.02),
        mouth_half_width=rng.uniform(0.26, 0.34),
    )


def make_face(face_id: str, seed: int | None, flat: bool = False) -> Face:
    rng = None if seed is None else np.random.default_rng(seed)
    an = _anchors(rng)
    bumps = _bump_list(an, rng)
    if flat:
        bumps = bumps.copy()
        bumps[:, 4] = 0.0
    return Face(face_id, heightmap(bumps), _albedo(an, rng), landmark_layout(an), (an.left_eye, an.right_eye), seed)


def template_normals() -> NormalMap:
    """Normals of the mean (un-jittered) face; shipped as the template asset."""
    return make_face("template", None).normals


def passport_decomposition(face: Face, light: SHLighting = STUDIO_LIGHT) -> Decomposition:
    n = face.normals
    alb = face.albedo_map
    return Decomposition(render_diffuse(n, alb, light), n, alb, light, "synthetic_ground_truth")


@dataclass(frozen=True, eq=False)
class Capture:
    image: FloatMap
    landmarks: np.ndarray
    truth: Decomposition


def gen_identity(seed: int, face_id: str | None = None) -> tuple[Face, Capture]:
    """Identity plus its frontal studio (passport) capture with ground truth."""
    face = make_face(face_id or f"id{seed}", seed)
    truth = passport_decomposition(face)
    return face, Capture(truth.diffuse, face.landmarks.copy(), truth)


def _warp_array(arr, t):
    a = np.asarray(arr, dtype=np.float64)
    a3 = a if a.ndim == 3 else a[..., None]
    out = warp(FloatMap(a3), t, (SIZE, SIZE))
    d = out.data.astype(np.float64)
    d[~out.mask] = a3[~out.mask]
    return d if a.ndim == 3 else d[..., 0]


def gen_morph(a: Face, b: Face, alpha: float = 0.5, face_id: str | None = None) -> Face:
    """Blend two faces after aligning both on the blended eye positions."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"morph alpha must lie in [0, 1], got {alpha}")
    if a.face_id == b.face_id:
        raise ValidationError("morph parents must be distinct identities")
    lm = alpha * a.landmarks + (1 - alpha) * b.landmarks
    canon = Canonical(tuple(lm[36:42].mean(axis=0)), tuple(lm[42:48].mean(axis=0)))
    ta = align_transform(a.landmarks, canon)
    tb = align_transform(b.landmarks, canon)
    height = alpha * _warp_array(a.height, ta) + (1 - alpha) * _warp_array(b.height, tb)
    albedo = alpha * _warp_array(a.albedo, ta) + (1 - alpha) * _warp_array(b.albedo, tb)
    return Face(face_id or f"morph_{a.face_id}_{b.face_id}", height, albedo, lm,
                (canon.left, canon.right), None, (a.face_id, b.face_id), alpha)


def camera_transform(cam: CameraProfile, rotation: float) -> SimilarityTransform:
    w, h = cam.out_size
    s = 1.0 / cam.downscale
    r = SimilarityTransform(s, rotation)
    c = r.apply([CENTER, CENTER])
    return SimilarityTransform(s, rotation, (w - 1) / 2 - c[0], (h - 1) / 2 - c[1])


def render_gate_capture(face: Face, cam: CameraProfile, seed: int) -> Capture:
    """Gate capture: pose jitter, camera lighting, downscale and Gaussian noise."""
    rng = np.random.default_rng(seed)
    rot = rng.uniform(-cam.jitter, cam.jitter) if cam.jitter > 0 else 0.0
    t = camera_transform(cam, rot)
    normals = face.normals
    albedo = face.albedo_map
    if t.scale == 1.0 and t.rotation == 0.0 and t.tx == 0.0 and t.ty == 0.0:
        n_w, a_w = normals, albedo
    else:
        n_w = warp_normals(normals, t, cam.out_size)
        a_w = warp(albedo, t, cam.out_size)
        a_w = FloatMap(a_w.data, a_w.mask & n_w.mask)
        n_w = NormalMap(n_w.data, a_w.mask)
    truth = Decomposition(render_diffuse(n_w, a_w, cam.lighting), n_w, a_w, cam.lighting, "synthetic_ground_truth")
    img = truth.diffuse.data.astype(np.float64)
    if cam.noise > 0:
        img = img + rng.normal(0.0, cam.noise, img.shape)
    img = np.clip(img, 0.0, 1.0)
    img[~truth.diffuse.mask] = 0.0
    return Capture(FloatMap(img.astype(np.float32), truth.diffuse.mask), t.apply(face.landmarks), truth)


def degrade_print_scan(img: FloatMap, seed: int, blur=0.8, gamma=1.1, noise=0.01) -> FloatMap:
    """Simulated print-scan: blur, gamma, additive noise, 8-bit quantisation."""
    rng = np.random.default_rng(seed)
    d = ndimage.gaussian_filter(img.data.astype(np.float64), (blur, blur, 0), mode="nearest")
    d = np.clip(d, 0.0, None) ** gamma
    d = d + rng.normal(0.0, noise, d.shape)
    d = np.rint(np.clip(d, 0.0, 1.0) * 255.0) / 255.0
    return FloatMap(d.astype(np.float32), img.mask)


def print_scan_truth(truth: Decomposition, printed: FloatMap) -> Decomposition:
    """Ground truth for a printed-and-scanned photo.

    The depicted shape and lighting are unchanged; print artefacts become
    part of the photo's reflectance, so albedo is re-derived as
    printed / shading wherever the shading is measurable.
    """
    shade = shading_array(truth.normals, truth.lighting)
    rho = truth.albedo.data.astype(np.float64)
    rho = np.broadcast_to(rho, shade.shape).copy()
    ok = shade > MIN_SHADING
    rho[ok] = printed.data.astype(np.float64)[ok] / shade[ok]
    alb = FloatMap(rho.astype(np.float32), truth.albedo.mask)
    return Decomposition(render_diffuse(truth.normals, alb, truth.lighting), truth.normals, alb,
                         truth.lighting, "synthetic_ground_truth")


# ---------------------------------------------------------------- dataset


def split_subjects(n_subjects: int, master_seed: int) -> dict:
    """Seeded shuffle; odd positions train, even positions test.

    With fewer than 4 subjects a split could not host a morph, so every
    subject goes to train.
    """
    perm = _rng(master_seed, _SPLIT).permutation(n_subjects)
    if n_subjects < 4:
        return {"train": sorted(perm.tolist()), "test": []}
    return {
        "train": [int(s) for i, s in enumerate(perm) if i % 2 == 1],
        "test": [int(s) for i, s in enumerate(perm) if i % 2 == 0],
    }


def choose_morph_pairs(splits: dict, n_morphs: int, master_seed: int) -> dict:
    pools = {}
    for sp, subj in splits.items():
        pairs = list(itertools.combinations(sorted(subj), 2))
        order = _rng(master_seed, _MORPH_PAIRS, 0 if sp == "train" else 1).permutation(len(pairs))
        pools[sp] = [pairs[i] for i in order]
    total = sum(len(p) for p in pools.values())
    if n_morphs > total:
        raise ValidationError(f"{n_morphs} morphs requested but only {total} same-split pairs exist")
    q_train = min(int(round(n_morphs * TABLE1_MORPH_TRAIN_FRACTION)), len(pools["train"]))
    q_test = min(n_morphs - q_train, len(pools["test"]))
    q_train = n_morphs - q_test
    return {"train": pools["train"][:q_train], "test": pools["test"][:q_test]}


def gate_counts(splits: dict) -> dict:
    out = {}
    for sp, subj in splits.items():
        n = len(subj)
        out[sp] = {
            c: (max(n, int(round(TABLE1_GATE_COUNTS[sp][c] * n / TABLE1_SPLIT_SUBJECTS[sp]))) if n else 0)
            for c in (1, 2, 3, 4)
        }
    return out


def per_subject_counts(total: int, subjects: list) -> list[int]:
    """Spread ``total`` captures over subjects; extras go to the first subjects."""
    n = len(subjects)
    base, extra = divmod(total, n)
    return [base + (1 if i < extra else 0) for i in range(n)]


def _subject_id(i):
    return f"s{i:03d}"


@dataclass(frozen=True)
class PlannedRecord:
    record_id: str
    subject_id: str
    role: str
    split: str
    camera_id: int | None = None
    subject: int | None = None        # subject index for passports and gate captures
    morph: tuple | None = None        # (morph number, parent a, parent b)
    capture: int | None = None        # per-subject capture number at a gate camera

    def record(self) -> Record:
        stem = f"maps/{self.record_id}"
        parents = None if self.morph is None else (_subject_id(self.morph[1]), _subject_id(self.morph[2]))
        return Record(
            record_id=self.record_id, subject_id=self.subject_id, role=self.role, split=self.split,
            image_path=f"images/{self.record_id}.png", landmarks_path=f"landmarks/{self.record_id}.txt",
            camera_id=self.camera_id, normals_path=f"{stem}.normals.fmap", albedo_path=f"{stem}.albedo.fmap",
            lighting_path=f"{stem}.light.txt", morph_parents=parents,
        )


def dataset_plan(n_subjects=39, n_morphs=90, camera_ids=(1, 2, 3, 4), master_seed=42) -> list[PlannedRecord]:
    """Every record of a dataset in manifest order, without rendering anything.

    Per split: bona fide passports, morph passports, then gate captures by
    camera, subject and capture number.
    """
    if n_subjects < 2:
        raise ValidationError("need at least 2 subjects")
    if n_morphs > n_subjects * (n_subjects - 1) // 2:
        raise ValidationError("n_morphs exceeds the number of subject pairs")
    splits = split_subjects(n_subjects, master_seed)
    morph_pairs = choose_morph_pairs(splits, n_morphs, master_seed)
    counts = gate_counts(splits)
    plan = []
    morph_no = 0
    for split in ("train", "test"):
        subj = splits[split]
        for i in subj:
            plan.append(PlannedRecord(f"bp_{_subject_id(i)}", _subject_id(i), "bonafide_passport", split, subject=i))
        for a, b in morph_pairs[split]:
            mid = f"m{morph_no:03d}"
            plan.append(PlannedRecord(f"mp_{mid}", mid, "morph_passport", split, morph=(morph_no, a, b)))
            morph_no += 1
        if not subj:
            continue
        for c in camera_ids:
            for i, n_caps in zip(subj, per_subject_counts(counts[split][c], subj)):
                for k in range(n_caps):
                    plan.append(PlannedRecord(f"g{c}_{_subject_id(i)}_{k}", _subject_id(i), "gate", split,
                                              camera_id=c, subject=i, capture=k))
    return plan


def emit_dataset(out_dir, n_subjects=39, n_morphs=90, cams=None, master_seed=42,
                 print_scan=False, alpha=0.5) -> DatasetManifest:
    """Render a full synthetic D-MAD dataset and write its manifest.

    Layout: ``images/*.png``, ``maps/*.fmap`` (+ ``*.light.txt``),
    ``landmarks/*.txt`` and ``manifest.txt`` under ``out_dir``.  Every
    random draw comes from a seed keyed on (master seed, stream, record),
    so any record can be regenerated on its own.
    """
    cams = default_cameras() if cams is None else list(cams)
    by_id = {c.camera_id: c for c in cams}
    plan = dataset_plan(n_subjects, n_morphs, tuple(by_id), master_seed)
    out = Path(out_dir)
    for sub in ("images", "maps", "landmarks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    faces = {}

    def face(i):
        if i not in faces:
            seed = int(_rng(master_seed, _IDENTITY, i).integers(2**63 - 1))
            faces[i] = make_face(_subject_id(i), seed)
        return faces[i]

    def passport(f, key):
        truth = passport_decomposition(f)
        cap = Capture(truth.diffuse, f.landmarks.copy(), truth)
        if print_scan:
            printed = degrade_print_scan(truth.diffuse, int(_rng(master_seed, _PRINT, key).integers(2**63 - 1)))
            cap = Capture(printed, cap.landmarks, print_scan_truth(truth, printed))
        return cap

    records = []
    for pr in plan:
        if pr.role == "bonafide_passport":
            cap = passport(face(pr.subject), pr.subject)
        elif pr.role == "morph_passport":
            no, a, b = pr.morph
            cap = passport(gen_morph(face(a), face(b), alpha, pr.subject_id), 100000 + no)
        else:
            seed = int(_rng(master_seed, _GATE, pr.subject, pr.camera_id, pr.capture).integers(2**63 - 1))
            cap = render_gate_capture(face(pr.subject), by_id[pr.camera_id], seed)
        rec = pr.record()
        save_image(cap.image, out / rec.image_path)
        write_landmarks(cap.landmarks, out / rec.landmarks_path)
        write_fmap(cap.truth.normals, out / rec.normals_path)
        write_fmap(cap.truth.albedo, out / rec.albedo_path)
        write_lighting(cap.truth.lighting, out / rec.lighting_path)
        records.append(rec)

    manifest = DatasetManifest(records, out)
    manifest.write(out / "manifest.txt")
    return manifest
