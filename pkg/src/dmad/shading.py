"""Second-order spherical-harmonic Lambertian shading.

The diffuse image is modelled as ``I = albedo * (l . Y(n))`` with nine real
SH basis functions ``Y`` evaluated at the unit normal.  The Lambertian
attenuation factors are folded into the lighting coefficients ``l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (
    FloatMap,
    NormalMap,
    Record,
    SHLighting,
    read_fmap,
    read_lighting,
    read_normals,
    write_fmap,
    write_lighting,
)
from .errors import MissingFileError, NumericError, ValidationError

C0 = 1.0 / (2.0 * math.sqrt(math.pi))
C1 = math.sqrt(3.0 / (4.0 * math.pi))
C2 = 3.0 * math.sqrt(5.0 / (12.0 * math.pi))
C20 = 0.5 * math.sqrt(5.0 / (4.0 * math.pi))
C22 = 1.5 * math.sqrt(5.0 / (12.0 * math.pi))

SOURCES = ("oracle_files", "synthetic_ground_truth", "template_fit")
MIN_ALBEDO = 1e-3
MIN_SHADING = 1e-3
DAMPING = 1e-9

TEMPLATE_ASSET = "face_normals_template.fmap"


def sh_basis_array(n) -> np.ndarray:
    """Vectorised basis: (..., 3) unit normals to (..., 9) values, no validation."""
    n = np.asarray(n, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    return np.stack(
        [
            np.full_like(x, C0),
            C1 * y,
            C1 * z,
            C1 * x,
            C2 * x * y,
            C2 * y * z,
            C20 * (3.0 * z * z - 1.0),
            C2 * x * z,
            C22 * (x * x - y * y),
        ],
        axis=-1,
    )


def sh_basis(n) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    if n.shape != (3,):
        raise ValidationError("sh_basis expects a single 3-vector")
    if abs(np.linalg.norm(n) - 1.0) > 1e-4:
        raise ValidationError(f"sh_basis needs a unit normal, |n| = {np.linalg.norm(n):.6f}")
    return sh_basis_array(n)


@dataclass(frozen=True)
class RenderResult:
    image: FloatMap
    clamped: int


def _check_dims(*maps):
    shape = maps[0].data.shape[:2]
    for m in maps[1:]:
        if m.data.shape[:2] != shape:
            raise ValidationError(f"dimension mismatch: {m.data.shape[:2]} vs {shape}")


def shading_array(normals: NormalMap, light: SHLighting) -> np.ndarray:
    """Unclamped per-channel shading l . Y(n), shape (H, W, C_light)."""
    basis = sh_basis_array(normals.data)
    return basis @ light.coeffs.T


def render_diffuse_ex(normals: NormalMap, albedo: FloatMap, light: SHLighting) -> RenderResult:
    """Render and report how many pixel-channels were clamped at zero."""
    _check_dims(normals, albedo)
    shade = shading_array(normals, light)
    rho = albedo.data.astype(np.float64)
    ch = max(rho.shape[2], shade.shape[2])
    if rho.shape[2] not in (1, ch) or shade.shape[2] not in (1, ch):
        raise ValidationError("albedo and lighting channel counts are incompatible")
    img = rho * shade
    img = np.broadcast_to(img, img.shape[:2] + (ch,)).copy()
    mask = normals.mask & albedo.mask
    neg = (img < 0) & mask[..., None]
    img[img < 0] = 0.0
    img[~mask] = 0.0
    return RenderResult(FloatMap(img.astype(np.float32), mask), int(neg.sum()))


def render_diffuse(normals: NormalMap, albedo: FloatMap, light: SHLighting) -> FloatMap:
    return render_diffuse_ex(normals, albedo, light).image


@dataclass(frozen=True)
class LightingFit:
    lighting: SHLighting
    residual_rms: float
    rank: int


def fit_lighting_ex(image: FloatMap, normals: NormalMap, albedo: FloatMap, n_basis: int = 9) -> LightingFit:
    """Per-channel damped least squares for the SH lighting.

    Uses valid pixels with albedo above ``MIN_ALBEDO``.  ``n_basis`` < 9
    restricts the fit to the leading basis functions (the remaining
    coefficients are zero); this is used for DC-only comparisons.
    """
    _check_dims(image, normals, albedo)
    ch = image.channels
    if albedo.channels not in (1, ch):
        raise ValidationError("albedo channel count must be 1 or match the image")
    mask = image.mask & normals.mask & albedo.mask
    basis = sh_basis_array(normals.data[mask])[:, :n_basis]
    rho_all = albedo.data[mask].astype(np.float64)
    img_all = image.data[mask].astype(np.float64)
    coeffs = np.zeros((ch, 9))
    sq_err = 0.0
    count = 0
    rank = 0
    for c in range(ch):
        rho = rho_all[:, c if albedo.channels == ch else 0]
        use = rho > MIN_ALBEDO
        if use.sum() < 9:
            raise NumericError(f"fit_lighting needs >= 9 usable pixels, got {int(use.sum())}")
        a = rho[use, None] * basis[use]
        b = img_all[use, c]
        ata = a.T @ a
        rank = max(rank, int(np.linalg.matrix_rank(ata, tol=1e-10 * max(1.0, np.abs(ata).max()))))
        # minimum-norm solution of the damped normal equations
        sol = np.linalg.lstsq(ata + DAMPING * np.eye(n_basis), a.T @ b, rcond=1e-12)[0]
        coeffs[c, :n_basis] = sol
        r = a @ sol - b
        sq_err += float(r @ r)
        count += len(b)
    return LightingFit(SHLighting(coeffs), math.sqrt(sq_err / count), rank)


def fit_lighting(image: FloatMap, normals: NormalMap, albedo: FloatMap) -> SHLighting:
    return fit_lighting_ex(image, normals, albedo).lighting


# ---------------------------------------------------------------- decomposition


@dataclass(frozen=True)
class Decomposition:
    diffuse: FloatMap
    normals: NormalMap
    albedo: FloatMap
    lighting: SHLighting
    source: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValidationError(f"unknown decomposition source {self.source!r}")
        _check_dims(self.diffuse, self.normals, self.albedo)

    def consistency_error(self) -> float:
        """Max |diffuse - albedo * shading| over valid pixels (no clamping applied)."""
        shade = shading_array(self.normals, self.lighting)
        pred = self.albedo.data.astype(np.float64) * shade
        mask = self.diffuse.mask & self.normals.mask & self.albedo.mask
        pred = np.maximum(pred, 0.0)
        return float(np.abs(pred - self.diffuse.data)[mask].max(initial=0.0))

    def save(self, stem) -> None:
        """Persist as ``stem.{diffuse,normals,albedo}.fmap`` plus ``stem.light.txt``."""
        stem = str(stem)
        write_fmap(self.diffuse, stem + ".diffuse.fmap")
        write_fmap(self.normals, stem + ".normals.fmap")
        write_fmap(self.albedo, stem + ".albedo.fmap")
        write_lighting(self.lighting, stem + ".light.txt")

    @classmethod
    def load(cls, stem, source="oracle_files") -> "Decomposition":
        stem = str(stem)
        return cls(
            read_fmap(stem + ".diffuse.fmap"),
            read_normals(stem + ".normals.fmap"),
            read_fmap(stem + ".albedo.fmap"),
            read_lighting(stem + ".light.txt"),
            source,
        )


def diffuse_reconstruct(d: Decomposition) -> FloatMap:
    if d.source == "oracle_files":
        return d.diffuse
    return render_diffuse(d.normals, d.albedo, d.lighting)


def template_path() -> Path:
    return Path(resources.files("dmad") / "assets" / TEMPLATE_ASSET)


def load_template(path=None) -> NormalMap:
    path = Path(path) if path is not None else template_path()
    if not path.is_file():
        raise MissingFileError(f"face-normal template not found: {path}")
    return read_normals(path)


def template_fit(img: FloatMap, template: NormalMap, iterations: int = 2) -> Decomposition:
    """Classical fallback decomposition against a fixed normal template.

    Lighting is first fitted with unit albedo; albedo and lighting are then
    alternated ``iterations`` times.  The image must already be in the
    template's (canonical) frame.
    """
    _check_dims(img, template)
    mask = img.mask & template.mask
    ones = FloatMap(np.ones(img.data.shape[:2] + (1,), np.float32), mask)
    light = fit_lighting(img, template, ones)
    albedo = ones
    for _ in range(iterations):
        shade = np.maximum(shading_array(template, light), MIN_SHADING)
        rho = img.data.astype(np.float64) / shade
        rho[~mask] = 0.0
        albedo = FloatMap(rho.astype(np.float32), mask)
        light = fit_lighting(img, template, albedo)
    diffuse = render_diffuse(template, albedo, light)
    return Decomposition(diffuse, NormalMap(template.data, mask), albedo, light, "template_fit")


def decompose(img: FloatMap, record: Record, mode: str, root=".", template: NormalMap | None = None) -> Decomposition:
    """Decompose one image according to ``mode``.

    ``oracle_files`` ingests externally produced normals and albedo (plus an
    optional diffuse map and lighting); ``synthetic_ground_truth`` reads the
    generator's ground truth and re-renders the diffuse map;
    ``template_fit`` fits against the canonical normal template.
    """
    root = Path(root)
    if mode == "template_fit":
        return template_fit(img, template if template is not None else load_template())
    if mode not in SOURCES:
        raise ValidationError(f"unknown decomposer mode {mode!r}")
    if record.normals_path is None or record.albedo_path is None:
        raise MissingFileError(f"{record.record_id}: {mode} needs normals_path and albedo_path")
    normals = read_normals(root / record.normals_path)
    albedo = read_fmap(root / record.albedo_path)
    if mode == "synthetic_ground_truth":
        if record.lighting_path is None:
            raise MissingFileError(f"{record.record_id}: synthetic ground truth needs lighting_path")
        light = read_lighting(root / record.lighting_path)
        return Decomposition(render_diffuse(normals, albedo, light), normals, albedo, light, mode)
    if record.lighting_path is not None:
        light = read_lighting(root / record.lighting_path)
    else:
        light = fit_lighting(img, normals, albedo)
    if record.diffuse_path is not None:
        diffuse = read_fmap(root / record.diffuse_path)
    else:
        diffuse = render_diffuse(normals, albedo, light)
    return Decomposition(diffuse, normals, albedo, light, mode)
