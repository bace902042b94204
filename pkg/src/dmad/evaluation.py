"""Pairing protocol and presentation-attack-detection error rates.

Convention throughout: a comparison with ``score >= tau`` is classified as
an attack (morph).  Hence APCER(tau) counts attack scores below tau and
BPCER(tau) counts bona fide scores at or above tau.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DatasetManifest, Record, ScoreSet
from .errors import ValidationError


def pair_protocol(m: DatasetManifest, split: str, camera_id: int) -> list[tuple[Record, Record, str]]:
    """Every passport of ``split`` against every gate image of ``camera_id``.

    Order is reference-major, both sides in manifest order.  A pair is
    genuine iff the passport is bona fide.
    """
    refs = m.passports(split)
    probes = m.select(split=split, role="gate", camera_id=camera_id)
    if not refs:
        raise ValidationError(f"no passport records in split {split!r}")
    if not probes:
        raise ValidationError(f"no gate records for camera {camera_id} in split {split!r}")
    return [(r, p, "genuine" if r.is_bonafide else "attack") for r in refs for p in probes]


def _nonempty(scores, what):
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValidationError(f"{what} score list is empty")
    return s


def apcer(attack_scores, tau: float) -> float:
    s = _nonempty(attack_scores, "attack")
    return float(np.count_nonzero(s < tau)) / s.size


def bpcer(bonafide_scores, tau: float) -> float:
    s = _nonempty(bonafide_scores, "bona fide")
    return float(np.count_nonzero(s >= tau)) / s.size


def _split(scores):
    if isinstance(scores, ScoreSet):
        g, a = scores.genuine_scores, scores.attack_scores
    else:
        g, a = (np.asarray(x, dtype=np.float64) for x in scores)
    if g.size == 0 or a.size == 0:
        raise ValidationError("both genuine and attack scores are required")
    return g, a


@dataclass(frozen=True, eq=False)
class DETCurve:
    threshold: np.ndarray
    apcer: np.ndarray
    bpcer: np.ndarray
    # exact counts behind the rates
    n_attack_missed: np.ndarray
    n_bonafide_flagged: np.ndarray
    n_attack: int
    n_bonafide: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("threshold", "apcer", "bpcer"))
        for t, a, b in zip(self.threshold, self.apcer, self.bpcer):
            w.writerow((repr(float(t)), repr(float(a)), repr(float(b))))
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())


def det_curve(scores) -> DETCurve:
    """Sweep every distinct score plus the -inf / +inf sentinels.

    ``scores`` is a ScoreSet or a (genuine, attack) pair of arrays.
    """
    g, a = _split(scores)
    taus = np.concatenate([[-np.inf], np.unique(np.concatenate([g, a])), [np.inf]])
    a_sorted = np.sort(a)
    g_sorted = np.sort(g)
    missed = np.searchsorted(a_sorted, taus, side="left")
    flagged = g.size - np.searchsorted(g_sorted, taus, side="left")
    return DETCurve(taus, missed / a.size, flagged / g.size, missed, flagged, a.size, g.size)


def d_eer(scores) -> tuple[float, float]:
    """Equal error rate at the discrete sweep point minimising |APCER - BPCER|.

    Comparison uses exact integer arithmetic; ties go to the smallest
    threshold.  Returns (eer, threshold).
    """
    c = det_curve(scores)
    na, nb = c.n_attack, c.n_bonafide
    gap = np.abs(c.n_attack_missed * nb - c.n_bonafide_flagged * na)
    k = int(np.argmin(gap))
    eer = (c.n_attack_missed[k] * nb + c.n_bonafide_flagged[k] * na) / (2.0 * na * nb)
    return float(eer), float(c.threshold[k])


def bpcer_at_apcer(scores, target: float) -> float:
    """BPCER at the largest swept threshold whose APCER does not exceed ``target``."""
    if not 0.0 < target < 1.0:
        raise ValidationError(f"target APCER must lie in (0, 1), got {target}")
    c = det_curve(scores)
    ok = np.flatnonzero(c.n_attack_missed <= target * c.n_attack + 1e-9)
    return float(c.bpcer[ok[-1]])


@dataclass(frozen=True)
class Metrics:
    eer: float
    bpcer20: float
    bpcer10: float
    threshold: float


def summarize(scores) -> Metrics:
    eer, tau = d_eer(scores)
    return Metrics(eer, bpcer_at_apcer(scores, 0.05), bpcer_at_apcer(scores, 0.10), tau)


SUMMARY_HEADER = ("method", "camera", "eer", "bpcer20", "bpcer10")


def summary_csv(rows) -> str:
    """``rows``: iterable of (method, camera_label, Metrics)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for method, cam, m in rows:
        w.writerow((method, cam, f"{m.eer:.4f}", f"{m.bpcer20:.4f}", f"{m.bpcer10:.4f}"))
    return buf.getvalue()


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("eer", "bpcer20", "bpcer10"):
            r[k] = float(r[k])
    return rows
