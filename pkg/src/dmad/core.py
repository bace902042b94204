"""Domain types and file formats shared by every stage.

Rasters travel as :class:`FloatMap` (H x W x C float32 plus a validity
mask) and are persisted in the little-endian FMAP container.  Datasets are
described by a line-oriented ``key=value`` manifest, and comparison scores
by a CSV with a fixed header.
"""

from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import FormatError, MissingFileError, ValidationError

FMAP_MAGIC = b"FMAP"
NORMAL_TOL = 1e-4

ROLES = ("bonafide_passport", "morph_passport", "gate")
SPLITS = ("train", "test")
CAMERAS = (1, 2, 3, 4)
LABELS = ("genuine", "attack")
SCORE_HEADER = ("probe_id", "reference_id", "camera_id", "label", "feature_tag", "score")


def _frozen(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FloatMap:
    """Row-major raster of float32 values with a per-pixel validity mask.

    ``data`` has shape (height, width, channels); ``mask`` has shape
    (height, width).  Values under a true mask entry must be finite.
    """

    data: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValidationError(f"FloatMap needs H x W x {{1,3}} data, got {data.shape}")
        if self.mask is None:
            mask = np.ones(data.shape[:2], dtype=bool)
        else:
            mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != data.shape[:2]:
            raise ValidationError(f"mask shape {mask.shape} does not match data {data.shape}")
        if not np.isfinite(data).all() and not np.isfinite(data[mask]).all():
            raise ValidationError("FloatMap has non-finite values under a valid mask")
        object.__setattr__(self, "data", _frozen(np.array(data, copy=True)))
        object.__setattr__(self, "mask", _frozen(np.array(mask, copy=True)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data, mask=None):
        return type(self)(data, self.mask if mask is None else mask)

    def __eq__(self, other):
        if not isinstance(other, FloatMap):
            return NotImplemented
        return (
            self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and np.array_equal(self.mask, other.mask)
        )

    __hash__ = None


class NormalMap(FloatMap):
    """3-channel FloatMap of camera-facing unit normals (n_x, n_y, n_z)."""

    def __post_init__(self):
        super().__post_init__()
        if self.channels != 3:
            raise ValidationError("NormalMap needs 3 channels")
        d = self.data.astype(np.float64)
        norm = np.sqrt(np.einsum("hwc,hwc->hw", d, d))
        if (np.abs(norm - 1.0)[self.mask] > NORMAL_TOL).any():
            raise ValidationError("NormalMap has non-unit vectors at valid pixels")
        if (d[..., 2][self.mask] < 0).any():
            raise ValidationError("NormalMap has n_z < 0 at valid pixels")


def normalize_normals(vectors, mask=None) -> NormalMap:
    """Renormalize raw (H, W, 3) vectors to unit length with n_z clamped >= 0.

    Pixels whose vectors collapse to zero length are dropped from the mask.
    """
    v = np.asarray(vectors, dtype=np.float64).copy()
    v[..., 2] = np.maximum(v[..., 2], 0.0)
    norm = np.sqrt(np.einsum("...c,...c->...", v, v))
    ok = norm > 1e-8
    if mask is not None:
        ok &= np.asarray(mask, dtype=bool)
    out = np.zeros_like(v)
    out[ok] = v[ok] / norm[ok, None]
    return NormalMap(out, ok)


@dataclass(frozen=True, eq=False)
class SHLighting:
    """Nine second-order SH coefficients per colour channel, shape (C, 9).

    Coefficient order: l00, l1-1, l10, l11, l2-2, l2-1, l20, l21, l22.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] != 9:
            raise ValidationError(f"SHLighting needs 9 coefficients per channel, got {c.shape}")
        if not np.isfinite(c).all():
            raise ValidationError("SHLighting coefficients must be finite")
        object.__setattr__(self, "coeffs", _frozen(c))

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]

    def __eq__(self, other):
        return isinstance(other, SHLighting) and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None


def write_lighting(light: SHLighting, path) -> None:
    """One coefficient per line, channel-major (9 or 27 values)."""
    Path(path).write_text("".join(f"{float(v)!r}\n" for v in light.coeffs.ravel()))


def read_lighting(path) -> SHLighting:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"lighting file not found: {path}")
    try:
        vals = [float(tok) for tok in path.read_text().split()]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if len(vals) not in (9, 27):
        raise FormatError(f"{path}: expected 9 or 27 coefficients, got {len(vals)}")
    return SHLighting(np.reshape(vals, (-1, 9)))


# ---------------------------------------------------------------- FMAP files


def encode_fmap(fm: FloatMap) -> bytes:
    if not np.isfinite(fm.data).all():
        raise ValidationError("refusing to write non-finite values to FMAP")
    h, w, c = fm.data.shape
    header = FMAP_MAGIC + struct.pack("<III", w, h, c)
    payload = fm.data.astype("<f4").tobytes(order="C")
    bits = np.packbits(fm.mask.ravel(), bitorder="little").tobytes()
    return header + payload + bits


def decode_fmap(buf: bytes, name="<bytes>") -> FloatMap:
    if len(buf) < 16:
        raise FormatError(f"{name}: truncated FMAP header")
    if buf[:4] != FMAP_MAGIC:
        raise FormatError(f"{name}: bad magic {buf[:4]!r}")
    w, h, c = struct.unpack("<III", buf[4:16])
    n = w * h * c
    nbits = (w * h + 7) // 8
    if len(buf) != 16 + 4 * n + nbits:
        raise FormatError(f"{name}: payload size {len(buf) - 16} != expected {4 * n + nbits}")
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=16).reshape(h, w, c)
    bits = np.frombuffer(buf, dtype=np.uint8, count=nbits, offset=16 + 4 * n)
    mask = np.unpackbits(bits, bitorder="little", count=w * h).astype(bool).reshape(h, w)
    return FloatMap(data.astype(np.float32), mask)


def write_fmap(fm: FloatMap, path) -> None:
    Path(path).write_bytes(encode_fmap(fm))


def read_fmap(path) -> FloatMap:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"FMAP not found: {path}")
    return decode_fmap(path.read_bytes(), str(path))


def read_normals(path) -> NormalMap:
    fm = read_fmap(path)
    return NormalMap(fm.data, fm.mask)


# ---------------------------------------------------------------- PNG images


def load_image(path) -> FloatMap:
    """Decode an 8-bit grayscale or RGB PNG into [0, 1] floats."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise FormatError(f"{path}: unsupported format {im.format}")
            if im.mode not in ("L", "RGB"):
                raise FormatError(f"{path}: unsupported PNG mode {im.mode} (need 8-bit L or RGB)")
            arr = np.asarray(im, dtype=np.uint8)
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: decode failure: {exc}") from None
    return FloatMap(arr.astype(np.float32) / np.float32(255.0))


def save_image(fm: FloatMap, path) -> None:
    """Write an 8-bit PNG; values are clipped to [0,1] and rounded."""
    q = np.clip(np.rint(fm.data.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(q[:, :, 0] if fm.channels == 1 else q, mode="L" if fm.channels == 1 else "RGB")
    img.save(path, format="PNG", optimize=False, compress_level=1)


# ---------------------------------------------------------------- manifest

_PATH_FIELDS = (
    "image_path",
    "landmarks_path",
    "normals_path",
    "albedo_path",
    "diffuse_path",
    "lighting_path",
    "embedding_path",
)


@dataclass(frozen=True)
class Record:
    record_id: str
    subject_id: str
    role: str
    split: str
    image_path: str
    landmarks_path: str
    camera_id: int | None = None
    normals_path: str | None = None
    albedo_path: str | None = None
    diffuse_path: str | None = None
    lighting_path: str | None = None
    embedding_path: str | None = None
    morph_parents: tuple[str, str] | None = None

    @property
    def is_passport(self) -> bool:
        return self.role != "gate"

    @property
    def is_bonafide(self) -> bool:
        return self.role != "morph_passport"

    def validate(self):
        if self.role not in ROLES:
            raise ValidationError(f"{self.record_id}: unknown role {self.role!r}")
        if self.split not in SPLITS:
            raise ValidationError(f"{self.record_id}: unknown split {self.split!r}")
        if self.role == "gate":
            if self.camera_id not in CAMERAS:
                raise ValidationError(f"{self.record_id}: gate record needs camera_id in 1..4")
        elif self.camera_id is not None:
            raise ValidationError(f"{self.record_id}: passport record must have camera_id=none")
        if self.role == "morph_passport":
            p = self.morph_parents
            if p is None or len(p) != 2 or p[0] == p[1] or not all(p):
                raise ValidationError(f"{self.record_id}: morph record needs two distinct parents")
        elif self.morph_parents is not None:
            raise ValidationError(f"{self.record_id}: only morph records carry morph_parents")

    def to_line(self) -> str:
        parts = [
            f"record_id={self.record_id}",
            f"subject_id={self.subject_id}",
            f"role={self.role}",
            f"camera_id={'none' if self.camera_id is None else self.camera_id}",
            f"split={self.split}",
        ]
        for name in _PATH_FIELDS:
            val = getattr(self, name)
            if val is not None:
                parts.append(f"{name}={val}")
        if self.morph_parents is not None:
            parts.append(f"morph_parents={self.morph_parents[0]},{self.morph_parents[1]}")
        return " ".join(parts)


_RECORD_KEYS = {f.name for f in fields(Record)}
_REQUIRED_KEYS = ("record_id", "subject_id", "role", "split", "image_path", "landmarks_path", "camera_id")


def parse_record(line: str, lineno: int = 0) -> Record:
    kv = {}
    for tok in line.split():
        key, sep, val = tok.partition("=")
        if not sep or not key or not val:
            raise FormatError(f"line {lineno}: malformed token {tok!r}")
        if key not in _RECORD_KEYS:
            raise FormatError(f"line {lineno}: unknown key {key!r}")
        if key in kv:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        kv[key] = val
    missing = [k for k in _REQUIRED_KEYS if k not in kv]
    if missing:
        raise FormatError(f"line {lineno}: missing keys {missing}")
    cam = kv.pop("camera_id")
    if cam == "none":
        kv["camera_id"] = None
    else:
        try:
            kv["camera_id"] = int(cam)
        except ValueError:
            raise FormatError(f"line {lineno}: bad camera_id {cam!r}") from None
    if "morph_parents" in kv:
        kv["morph_parents"] = tuple(kv["morph_parents"].split(","))
    return Record(**kv)


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[Record, ...]
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "root", Path(self.root))
        self.validate()

    def validate(self):
        seen_ids = set()
        split_of_path = {}
        for rec in self.records:
            rec.validate()
            if rec.record_id in seen_ids:
                raise ValidationError(f"duplicate record_id {rec.record_id}")
            seen_ids.add(rec.record_id)
            for name in _PATH_FIELDS:
                p = getattr(rec, name)
                if p is None:
                    continue
                prev = split_of_path.setdefault(p, rec.split)
                if prev != rec.split:
                    raise ValidationError(f"path {p} appears in both train and test splits")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, relpath) -> Path:
        return self.root / relpath

    def by_id(self, record_id) -> Record:
        for r in self.records:
            if r.record_id == record_id:
                return r
        raise KeyError(record_id)

    def select(self, split=None, role=None, camera_id=None) -> list[Record]:
        out = []
        for r in self.records:
            if split is not None and r.split != split:
                continue
            if role is not None and r.role != role:
                continue
            if camera_id is not None and r.camera_id != camera_id:
                continue
            out.append(r)
        return out

    def passports(self, split) -> list[Record]:
        return [r for r in self.records if r.split == split and r.is_passport]

    def serialize(self) -> str:
        return "".join(r.to_line() + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.serialize())


def parse_manifest(text: str, root=".") -> DatasetManifest:
    records = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        records.append(parse_record(line, i))
    return DatasetManifest(records, root)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    return parse_manifest(path.read_text(), root=path.parent)


# ---------------------------------------------------------------- landmarks


def read_landmarks(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"landmark file not found: {path}")
    try:
        pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if pts.shape != (68, 2):
        raise FormatError(f"{path}: expected 68 'x y' lines, got shape {pts.shape}")
    return pts


def write_landmarks(points, path) -> None:
    pts = np.asarray(points, dtype=np.float64)
    Path(path).write_text("".join(f"{float(x)!r} {float(y)!r}\n" for x, y in pts))


# ---------------------------------------------------------------- scores


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Labelled comparison scores; one entry per (reference, probe) pair.

    ``camera_id`` is kept as text so cross-camera fused entries can carry
    ``"fused"``.
    """

    probe_id: np.ndarray
    reference_id: np.ndarray
    camera_id: np.ndarray
    label: np.ndarray
    feature_tag: np.ndarray
    score: np.ndarray

    def __post_init__(self):
        n = len(self.score)
        cols = {}
        for name in ("probe_id", "reference_id", "camera_id", "label", "feature_tag"):
            col = np.asarray(getattr(self, name), dtype=object)
            if col.ndim == 0:
                col = np.full(n, col.item(), dtype=object)
            cols[name] = col.astype(str)
        score = np.asarray(self.score, dtype=np.float64)
        for name, col in cols.items():
            if len(col) != n:
                raise ValidationError(f"ScoreSet column {name} has length {len(col)} != {n}")
        if not np.isin(cols["label"], LABELS).all():
            raise ValidationError("ScoreSet labels must be 'genuine' or 'attack'")
        if not np.isfinite(score).all():
            raise ValidationError("ScoreSet scores must be finite")
        for name, col in cols.items():
            object.__setattr__(self, name, _frozen(col))
        object.__setattr__(self, "score", _frozen(score.copy()))

    def __len__(self):
        return len(self.score)

    @property
    def is_attack(self) -> np.ndarray:
        return self.label == "attack"

    @property
    def genuine_scores(self) -> np.ndarray:
        return self.score[~self.is_attack]

    @property
    def attack_scores(self) -> np.ndarray:
        return self.score[self.is_attack]

    def with_scores(self, score, feature_tag=None):
        return replace(self, score=score, feature_tag=self.feature_tag if feature_tag is None else feature_tag)

    def __eq__(self, other):
        if not isinstance(other, ScoreSet):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self)
        )

    __hash__ = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        for row in zip(self.probe_id, self.reference_id, self.camera_id, self.label, self.feature_tag, self.score):
            w.writerow(row[:5] + (repr(float(row[5])),))
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def concat_scores(sets: Sequence[ScoreSet]) -> ScoreSet:
    return ScoreSet(
        *(np.concatenate([getattr(s, f.name) for s in sets]) for f in fields(ScoreSet))
    )


def read_scores(path) -> ScoreSet:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"score file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SCORE_HEADER:
        raise FormatError(f"{path}: bad score CSV header")
    body = rows[1:]
    cols = list(zip(*body)) if body else [()] * 6
    try:
        score = np.array([float(v) for v in cols[5]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return ScoreSet(*(np.array(c, dtype=object) for c in cols[:5]), score)
