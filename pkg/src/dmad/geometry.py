"""In-plane pose normalisation from 68-point landmarks.

Coordinates are (x, y) in pixels with x along columns, y down the rows and
integer values at pixel centres.  A :class:`SimilarityTransform` maps
source coordinates to destination coordinates, ``q = s R(theta) p + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import FloatMap, NormalMap, normalize_normals
from .errors import ValidationError

N_LANDMARKS = 68
LEFT_EYE = slice(36, 42)   # 1-based points 37-42
RIGHT_EYE = slice(42, 48)  # 1-based points 43-48

CANON_SIZE = (256, 256)
EDGE_EPS = 1e-9
CANON_LEFT = (88.0, 120.0)
CANON_RIGHT = (168.0, 120.0)


@dataclass(frozen=True)
class Canonical:
    left: tuple = CANON_LEFT
    right: tuple = CANON_RIGHT
    size: tuple = CANON_SIZE  # (width, height)


def _wrap_angle(a: float) -> float:
    a = math.remainder(a, 2 * math.pi)
    return math.pi if a == -math.pi else a


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValidationError(f"similarity scale must be positive, got {self.scale}")
        object.__setattr__(self, "rotation", _wrap_angle(float(self.rotation)))

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.matrix.T + self.translation

    def inverse_apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64) - self.translation
        return p @ np.linalg.inv(self.matrix).T

    def compose(self, first: "SimilarityTransform") -> "SimilarityTransform":
        """Transform equivalent to applying ``first`` then ``self``."""
        t = self.apply(first.translation)
        return SimilarityTransform(self.scale * first.scale, self.rotation + first.rotation, t[0], t[1])


def check_landmarks(lm, width=None, height=None) -> np.ndarray:
    pts = np.asarray(lm, dtype=np.float64)
    if pts.shape != (N_LANDMARKS, 2):
        raise ValidationError(f"expected 68 landmark points, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValidationError("landmarks must be finite")
    if width is not None and height is not None:
        mx, my = 0.1 * width, 0.1 * height
        if (pts[:, 0] < -mx).any() or (pts[:, 0] > width - 1 + mx).any() \
                or (pts[:, 1] < -my).any() or (pts[:, 1] > height - 1 + my).any():
            raise ValidationError("landmarks fall outside the image bounds (10% margin)")
    return pts


def eye_centers(lm):
    pts = check_landmarks(lm)
    return pts[LEFT_EYE].mean(axis=0), pts[RIGHT_EYE].mean(axis=0)


def align_transform(lm, canon: Canonical = Canonical()) -> SimilarityTransform:
    """Closed-form two-point similarity putting the eye centres on the canonical anchors."""
    left, right = eye_centers(lm)
    d = right - left
    dist = math.hypot(*d)
    if dist < 2.0:
        raise ValidationError(f"degenerate eyes: inter-eye distance {dist:.3f} px < 2")
    cl, cr = np.asarray(canon.left, float), np.asarray(canon.right, float)
    cd = cr - cl
    scale = math.hypot(*cd) / dist
    rotation = math.atan2(cd[1], cd[0]) - math.atan2(d[1], d[0])
    t = SimilarityTransform(scale, rotation)
    offset = cl - t.apply(left)
    return SimilarityTransform(scale, rotation, offset[0], offset[1])


@njit(cache=True)
def _bilinear_kernel(data, mask, xs, ys, out, valid):
    h, w = mask.shape
    nc = data.shape[2]
    for r in range(xs.shape[0]):
        for c in range(xs.shape[1]):
            x, y = xs[r, c], ys[r, c]
            if not (x >= -EDGE_EPS and x <= w - 1 + EDGE_EPS and y >= -EDGE_EPS and y <= h - 1 + EDGE_EPS):
                continue
            # snap round-off just outside the border back onto it
            x = min(max(x, 0.0), w - 1.0)
            y = min(max(y, 0.0), h - 1.0)
            x0 = min(int(math.floor(x)), w - 1)
            y0 = min(int(math.floor(y)), h - 1)
            fx, fy = x - x0, y - y0
            x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
            w00 = (1 - fx) * (1 - fy)
            w10 = fx * (1 - fy)
            w01 = (1 - fx) * fy
            w11 = fx * fy
            if (w00 != 0 and not mask[y0, x0]) or (w10 != 0 and not mask[y0, x1]) \
                    or (w01 != 0 and not mask[y1, x0]) or (w11 != 0 and not mask[y1, x1]):
                continue
            valid[r, c] = True
            for k in range(nc):
                out[r, c, k] = (w00 * data[y0, x0, k] + w10 * data[y0, x1, k]
                                + w01 * data[y1, x0, k] + w11 * data[y1, x1, k])


def _bilinear(data, mask, xs, ys):
    """Sample (H, W, C) ``data`` at float coordinates; returns values and validity.

    A sample is valid when it lies inside the image and every neighbour with
    a nonzero weight is valid.
    """
    d = np.ascontiguousarray(data, dtype=np.float64)
    out = np.zeros(xs.shape + (d.shape[2],))
    valid = np.zeros(xs.shape, dtype=np.bool_)
    _bilinear_kernel(d, np.ascontiguousarray(mask, dtype=np.bool_),
                     np.ascontiguousarray(xs, dtype=np.float64), np.ascontiguousarray(ys, dtype=np.float64),
                     out, valid)
    return out, valid


def warp(img: FloatMap, t: SimilarityTransform, out_size=CANON_SIZE) -> FloatMap:
    """Bilinear resampling of ``img`` under ``t`` into an ``out_size`` (w, h) frame.

    Destination pixels whose source footprint leaves the image or touches a
    masked pixel are masked out and zero-filled.
    """
    w, h = out_size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    src = t.inverse_apply(np.stack([xs.ravel(), ys.ravel()], axis=1))
    vals, valid = _bilinear(img.data, img.mask, src[:, 0].reshape(h, w), src[:, 1].reshape(h, w))
    return FloatMap(vals.astype(np.float32), valid)


def warp_normals(n: NormalMap, t: SimilarityTransform, out_size=CANON_SIZE) -> NormalMap:
    """Warp a normal map, rotating the in-plane components with the image."""
    moved = warp(n, t, out_size)
    v = moved.data.astype(np.float64)
    c, s = math.cos(t.rotation), math.sin(t.rotation)
    rot = np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1], v[..., 2]], axis=-1)
    return normalize_normals(rot, moved.mask)


def align(img: FloatMap, lm, canon: Canonical = Canonical()):
    """Pose-normalise an image; returns (warped map, transform, warped landmarks)."""
    t = align_transform(lm, canon)
    return warp(img, t, canon.size), t, t.apply(lm)
