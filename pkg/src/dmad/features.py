"""Pair features: 21-bit normal codes, embeddings and absolute differences."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .core import FloatMap, NormalMap
from .errors import FormatError, MissingFileError, ValidationError

QLEVELS = 127
EXTERNAL_DIM = 4096
BUILTIN_TAG = "builtin-blockmean-hog-v1"
BLOCK_GRID = 16
HOG_GRID = 16
HOG_BINS = 8
NORMAL_GRID = 32
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True, eq=False)
class QuantizedNormalMap:
    codes: np.ndarray  # (H, W, 3) uint8 in [0, 127]
    mask: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 3 or codes.shape[2] != 3:
            raise ValidationError("codes must have shape (H, W, 3)")
        if codes.min(initial=0) < 0 or codes.max(initial=0) > QLEVELS:
            raise ValidationError("normal codes must lie in [0, 127]")
        object.__setattr__(self, "codes", codes.astype(np.uint8))
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    @property
    def width(self):
        return self.codes.shape[1]

    @property
    def height(self):
        return self.codes.shape[0]

    def to_fmap(self) -> FloatMap:
        return FloatMap(self.codes.astype(np.float32), self.mask)

    @classmethod
    def from_fmap(cls, fm: FloatMap) -> "QuantizedNormalMap":
        return cls(fm.data.astype(np.int64), fm.mask)


def quantize_components(c) -> np.ndarray:
    """Map components in [-1, 1] to 7-bit codes, rounding half away from zero."""
    x = (np.clip(np.asarray(c, dtype=np.float64), -1.0, 1.0) + 1.0) / 2.0 * QLEVELS
    return np.floor(x + 0.5).astype(np.int64)  # x >= 0, so this is half-away-from-zero


def dequantize_components(k) -> np.ndarray:
    return 2.0 * np.asarray(k, dtype=np.float64) / QLEVELS - 1.0


def quantize_normals(n: NormalMap) -> QuantizedNormalMap:
    codes = quantize_components(n.data)
    codes[~n.mask] = 0
    return QuantizedNormalMap(codes, n.mask)


@dataclass(frozen=True, eq=False)
class PairFeature:
    kind: str
    diff: np.ndarray
    scalar_l1: float


def normal_pair_feature(q1: QuantizedNormalMap, q2: QuantizedNormalMap) -> PairFeature:
    """Absolute code differences over the common valid pixels, scaled to [0, 1]."""
    if q1.codes.shape != q2.codes.shape:
        raise ValidationError(f"normal map dimensions differ: {q1.codes.shape} vs {q2.codes.shape}")
    both = q1.mask & q2.mask
    if not both.any():
        raise ValidationError("normal maps share no valid pixels")
    d = np.abs(q1.codes[both].astype(np.int16) - q2.codes[both].astype(np.int16)).ravel() / QLEVELS
    return PairFeature("normal", d, float(d.mean()))


def block_mean(values, mask, grid):
    """Mean of ``values`` (H, W, C) over valid pixels in a grid x grid block layout.

    Blocks with no valid pixel yield 0.  Returns (grid, grid, C).
    """
    h, w, c = values.shape
    if h % grid or w % grid:
        raise ValidationError(f"size {w}x{h} is not divisible by grid {grid}")
    bh, bw = h // grid, w // grid
    m = mask.astype(np.float64)[..., None]
    s = (values * m).reshape(grid, bh, grid, bw, c).sum(axis=(1, 3))
    n = m.reshape(grid, bh, grid, bw, 1).sum(axis=(1, 3))
    return np.divide(s, n, out=np.zeros_like(s), where=n > 0)


def pack_codes(q: QuantizedNormalMap) -> FloatMap:
    """One-channel map holding the 21-bit code kx*2^14 + ky*2^7 + kz (exact in float32)."""
    c = q.codes.astype(np.int64)
    packed = (c[..., 0] << 14) | (c[..., 1] << 7) | c[..., 2]
    return FloatMap(packed.astype(np.float32)[..., None], q.mask)


def unpack_codes(fm: FloatMap) -> QuantizedNormalMap:
    if fm.channels != 1:
        raise FormatError("packed normal codes must be a 1-channel map")
    v = fm.data[..., 0].astype(np.int64)
    if (v < 0).any() or (v >= 1 << 21).any():
        raise FormatError("packed normal code out of 21-bit range")
    return QuantizedNormalMap(np.stack([(v >> 14) & 127, (v >> 7) & 127, v & 127], axis=-1), fm.mask)


@njit(cache=True)
def _grid_absdiff(codes, masks, ref_idx, probe_idx, grid, out):
    h, w = masks.shape[1], masks.shape[2]
    bh, bw = h // grid, w // grid
    for p in range(ref_idx.shape[0]):
        r, q = ref_idx[p], probe_idx[p]
        for gy in range(grid):
            for gx in range(grid):
                s0 = 0
                s1 = 0
                s2 = 0
                n = 0
                for yy in range(gy * bh, (gy + 1) * bh):
                    for xx in range(gx * bw, (gx + 1) * bw):
                        if masks[r, yy, xx] and masks[q, yy, xx]:
                            s0 += abs(np.int64(codes[r, yy, xx, 0]) - np.int64(codes[q, yy, xx, 0]))
                            s1 += abs(np.int64(codes[r, yy, xx, 1]) - np.int64(codes[q, yy, xx, 1]))
                            s2 += abs(np.int64(codes[r, yy, xx, 2]) - np.int64(codes[q, yy, xx, 2]))
                            n += 1
                if n > 0:
                    base = (gy * grid + gx) * 3
                    out[p, base] = s0 / (n * 127.0)
                    out[p, base + 1] = s1 / (n * 127.0)
                    out[p, base + 2] = s2 / (n * 127.0)


def stack_codes(maps: list[QuantizedNormalMap]):
    """Stack maps of one size into (N, H, W, 3) codes and (N, H, W) masks."""
    shapes = {q.codes.shape for q in maps}
    if len(shapes) != 1:
        raise ValidationError(f"normal map dimensions differ: {sorted(shapes)}")
    return np.stack([q.codes for q in maps]), np.stack([q.mask for q in maps])


def grid_features_indexed(codes, masks, ref_idx, probe_idx, grid=NORMAL_GRID) -> np.ndarray:
    """Block-mean |code difference| / 127 rows for index pairs into stacked maps."""
    h, w = masks.shape[1:]
    if h % grid or w % grid:
        raise ValidationError(f"size {w}x{h} is not divisible by grid {grid}")
    ref_idx = np.asarray(ref_idx, dtype=np.int64)
    probe_idx = np.asarray(probe_idx, dtype=np.int64)
    out = np.zeros((len(ref_idx), grid * grid * 3))
    _grid_absdiff(np.ascontiguousarray(codes, dtype=np.uint8), np.ascontiguousarray(masks, dtype=np.bool_),
                  ref_idx, probe_idx, grid, out)
    return out


def normal_grid_features(ref: QuantizedNormalMap, probes: list[QuantizedNormalMap], grid=NORMAL_GRID) -> np.ndarray:
    """Classifier inputs for one reference against many probes.

    Each row is the block-mean of |code difference| / 127 on a grid x grid x 3
    layout (3072 values for the default 32 x 32 grid), over pixels valid in
    both maps.  Blocks without a common valid pixel are 0.
    """
    codes, masks = stack_codes([ref, *probes])
    n = len(probes)
    return grid_features_indexed(codes, masks, np.zeros(n, np.int64), np.arange(1, n + 1), grid)


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    extractor_tag: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.isfinite(v).all():
            raise ValidationError("embedding values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return len(self.values)


def luminance(img: FloatMap) -> np.ndarray:
    d = img.data.astype(np.float64)
    if img.channels == 1:
        return d[:, :, 0]
    return d @ LUMA


def builtin_descriptor(img: FloatMap) -> np.ndarray:
    """Block means plus magnitude-weighted orientation histograms, L2-normalised.

    On a 256 x 256 image: 16 x 16 block means (256 values) and an 8-bin
    signed-orientation histogram in each of 16 x 16 cells (2048 values).
    Gradients are central differences; pixels whose stencil touches a masked
    pixel do not vote.
    """
    lum = luminance(img)
    mask = img.mask
    means = block_mean(lum[..., None], mask, BLOCK_GRID).ravel()

    gx = np.zeros_like(lum)
    gy = np.zeros_like(lum)
    gx[:, 1:-1] = (lum[:, 2:] - lum[:, :-2]) / 2.0
    gy[1:-1, :] = (lum[2:, :] - lum[:-2, :]) / 2.0
    ok = np.zeros_like(mask)
    ok[1:-1, 1:-1] = (
        mask[1:-1, 1:-1] & mask[1:-1, 2:] & mask[1:-1, :-2] & mask[2:, 1:-1] & mask[:-2, 1:-1]
    )
    mag = np.hypot(gx, gy) * ok
    ang = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    bins = np.minimum((ang / (2 * np.pi) * HOG_BINS).astype(np.intp), HOG_BINS - 1)
    h, w = lum.shape
    ch, cw = h // HOG_GRID, w // HOG_GRID
    cell = (np.arange(h) // ch)[:, None] * HOG_GRID + (np.arange(w) // cw)[None, :]
    hist = np.bincount((cell * HOG_BINS + bins).ravel(), weights=mag.ravel(),
                       minlength=HOG_GRID * HOG_GRID * HOG_BINS)
    vec = np.concatenate([means, hist])
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def read_embedding_file(path, dim=EXTERNAL_DIM) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"external embedding not found: {path}")
    try:
        vals = np.array([float(t) for t in path.read_text().split()])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if len(vals) != dim:
        raise ValidationError(f"{path}: expected {dim} values, got {len(vals)}")
    return vals


def embed(img: FloatMap, extractor: str = "builtin", dim: int = EXTERNAL_DIM) -> Embedding:
    """``builtin`` computes the fallback descriptor; ``external:<path>`` reads a vector file."""
    if extractor == "builtin":
        return Embedding(builtin_descriptor(img), BUILTIN_TAG)
    if extractor.startswith("external:"):
        path = extractor[len("external:"):]
        return Embedding(read_embedding_file(path, dim), f"external-{dim}")
    raise ValidationError(f"unknown extractor {extractor!r}")


def reconstruction_pair_feature(e1: Embedding, e2: Embedding) -> PairFeature:
    if e1.dim != e2.dim:
        raise ValidationError(f"embedding dims differ: {e1.dim} vs {e2.dim}")
    if e1.extractor_tag != e2.extractor_tag:
        raise ValidationError(f"extractor mismatch: {e1.extractor_tag} vs {e2.extractor_tag}")
    d = np.abs(e1.values - e2.values)
    return PairFeature("reconstruction", d, float(d.mean()))
