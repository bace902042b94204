"""Comparator features: uniform LBP histogram differences and landmark signed distances."""

from __future__ import annotations

import numpy as np

from .core import FloatMap
from .errors import ValidationError
from .features import PairFeature, luminance
from .geometry import CANON_SIZE, align_transform, check_landmarks

LBP_P = 8
LBP_GRID = 4
LBP_BINS = 59
LBP_DIM = LBP_GRID * LBP_GRID * LBP_BINS
SD_DIM = 136


def _transitions(code: int) -> int:
    bits = [(code >> i) & 1 for i in range(LBP_P)]
    return sum(bits[i] != bits[(i + 1) % LBP_P] for i in range(LBP_P))


def _uniform_table() -> np.ndarray:
    """Code -> bin: the 58 uniform patterns in numeric order, then one catch-all."""
    table = np.full(256, LBP_BINS - 1, dtype=np.intp)
    uniform = [c for c in range(256) if _transitions(c) <= 2]
    table[uniform] = np.arange(len(uniform))
    return table


UNIFORM_BIN = _uniform_table()


def lbp_codes(lum: np.ndarray) -> np.ndarray:
    """8-bit LBP(8, 1) code for every interior pixel, shape (H-2, W-2).

    Neighbour p sits at angle 2*pi*p/8 counter-clockwise from +x (image y
    points down).  Diagonal neighbours are bilinearly interpolated; bit p is
    set when the neighbour is >= the centre.
    """
    lum = np.asarray(lum, dtype=np.float64)
    h, w = lum.shape
    c = lum[1:-1, 1:-1]

    def at(dy, dx):
        return lum[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]

    f = np.sqrt(0.5)
    codes = np.zeros(c.shape, dtype=np.intp)
    for p in range(LBP_P):
        ang = 2 * np.pi * p / LBP_P
        x, y = np.cos(ang), -np.sin(ang)
        if p % 2 == 0:
            v = at(int(round(y)), int(round(x)))
        else:
            sx, sy = int(np.sign(x)), int(np.sign(y))
            # anchor at the centre pixel, step towards the diagonal
            i00, i10, i01, i11 = c, at(0, sx), at(sy, 0), at(sy, sx)
            v = i00 + f * (i10 - i00) + f * (i01 - i00) + f * f * (i00 - i10 - i01 + i11)
        codes |= (v >= c).astype(np.intp) << p
    return codes


def lbp_feature(img: FloatMap) -> np.ndarray:
    """4 x 4 grid of per-cell L1-normalised 59-bin uniform LBP histograms (944 values).

    Pixels whose 3 x 3 neighbourhood touches a masked pixel, and the
    one-pixel image border, do not vote.  Fully masked cells stay all-zero.
    """
    if img.data.shape[:2] != (CANON_SIZE[1], CANON_SIZE[0]):
        raise ValidationError(f"lbp_feature needs an aligned {CANON_SIZE[0]}x{CANON_SIZE[1]} image")
    lum = luminance(img)
    h, w = lum.shape
    codes = UNIFORM_BIN[lbp_codes(lum)]
    m = img.mask
    ok = np.ones((h - 2, w - 2), dtype=bool)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            ok &= m[dy:h - 2 + dy, dx:w - 2 + dx]
    ys, xs = np.mgrid[1:h - 1, 1:w - 1]
    cell = (ys * LBP_GRID // h) * LBP_GRID + (xs * LBP_GRID // w)
    hist = np.bincount((cell * LBP_BINS + codes)[ok], minlength=LBP_DIM).astype(np.float64)
    hist = hist.reshape(LBP_GRID * LBP_GRID, LBP_BINS)
    tot = hist.sum(axis=1, keepdims=True)
    hist = np.divide(hist, tot, out=np.zeros_like(hist), where=tot > 0)
    return hist.ravel()


def lbp_pair_feature(f1, f2) -> PairFeature:
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    if f1.shape != (LBP_DIM,) or f2.shape != (LBP_DIM,):
        raise ValidationError(f"LBP features must have {LBP_DIM} values, got {f1.shape} and {f2.shape}")
    d = np.abs(f1 - f2)
    return PairFeature("lbp", d, float(d.mean()))


def signed_distance_feature(lm_ref, lm_probe) -> np.ndarray:
    """(x_ref - x_probe, y_ref - y_probe) per landmark, interleaved; 136 values.

    Inputs are used as given: align both sets to the canonical frame first
    (see ``aligned_landmarks``).
    """
    a = check_landmarks(lm_ref)
    b = check_landmarks(lm_probe)
    d = (a - b).ravel()
    if not np.isfinite(d).all():
        raise ValidationError("signed-distance feature is not finite")
    return d


def aligned_landmarks(lm) -> np.ndarray:
    return align_transform(lm).apply(np.asarray(lm, dtype=np.float64))
