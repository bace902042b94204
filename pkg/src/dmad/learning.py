"""Linear SVM training, score normalisation and weighted score fusion."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .core import ScoreSet
from .errors import FormatError, MissingFileError, NumericError, ValidationError
from .evaluation import d_eer

log = logging.getLogger(__name__)

MAX_EPOCHS = 1000
TOL = 1e-6
GRID_STEP = 0.1
C_GRID = (0.01, 0.1, 1.0, 10.0)

PAPER_FEATURE_WEIGHTS = (0.7, 0.3)
PAPER_CAMERA_WEIGHTS = (0.2, 0.3, 0.2, 0.2)


@numba.njit(cache=True)
def _in_low(y, a, u):
    return (y > 0 and a > 0.0) or (y < 0 and a < u)


@numba.njit(cache=True)
def _in_up(y, a, u):
    return (y > 0 and a < u) or (y < 0 and a > 0.0)


@numba.njit(cache=True)
def _scan(F, y, alpha, upper, skip):
    """Indices of min F over the 'low' set and max F over the 'up' set."""
    lo, up = -1, -1
    for m in range(len(F)):
        if m == skip:
            continue
        if _in_low(y[m], alpha[m], upper[m]) and (lo < 0 or F[m] < F[lo]):
            lo = m
        if _in_up(y[m], alpha[m], upper[m]) and (up < 0 or F[m] > F[up]):
            up = m
    return lo, up


@numba.njit(cache=True)
def _dual_cd(X, y, upper, order, max_epochs, tol, trace):
    """Pairwise dual coordinate descent for the SVM dual with bias constraint.

    Minimises D(a) = 0.5 ||sum a_i y_i x_i||^2 - sum a_i subject to
    0 <= a_i <= upper_i and sum a_i y_i = 0.  Every step is an exact
    minimisation along a feasible two-coordinate direction, so D never
    increases.  Samples are visited in ``order``; each is paired with the
    most violating partner according to F = y - X w, which is refreshed
    for all samples every epoch and for the updated pair after each step.
    """
    n, d = X.shape
    w = np.zeros(d)
    alpha = np.zeros(n)
    F = y.copy()
    prev = 0.0
    epochs = 0
    for ep in range(max_epochs):
        for k in range(n):
            s = 0.0
            for j in range(d):
                s += X[k, j] * w[j]
            F[k] = y[k] - s
        lo, up = _scan(F, y, alpha, upper, -1)
        for k in range(n):
            i = order[k]
            blo, bup = lo, up
            if blo == i or bup == i:
                blo, bup = _scan(F, y, alpha, upper, i)
            gain_a = 0.0
            gain_b = 0.0
            if blo >= 0 and _in_up(y[i], alpha[i], upper[i]):
                gain_a = F[i] - F[blo]
            if bup >= 0 and _in_low(y[i], alpha[i], upper[i]):
                gain_b = F[bup] - F[i]
            if gain_a <= 0.0 and gain_b <= 0.0:
                continue
            if gain_a >= gain_b:
                u, v = i, blo
            else:
                u, v = bup, i
            su = 0.0
            sv = 0.0
            kk = 0.0
            for j in range(d):
                su += X[u, j] * w[j]
                sv += X[v, j] * w[j]
                dx = X[u, j] - X[v, j]
                kk += dx * dx
            F[u] = y[u] - su
            F[v] = y[v] - sv
            viol = F[u] - F[v]
            t = 0.0
            if viol > 0.0:
                tmax_u = upper[u] - alpha[u] if y[u] > 0 else alpha[u]
                tmax_v = alpha[v] if y[v] > 0 else upper[v] - alpha[v]
                tmax = min(tmax_u, tmax_v)
                t = min(viol / kk, tmax) if kk > 1e-12 else tmax
            if t > 0.0:
                alpha[u] = min(max(alpha[u] + y[u] * t, 0.0), upper[u])
                alpha[v] = min(max(alpha[v] - y[v] * t, 0.0), upper[v])
                su = 0.0
                sv = 0.0
                for j in range(d):
                    w[j] += t * (X[u, j] - X[v, j])
                    su += X[u, j] * w[j]
                    sv += X[v, j] * w[j]
                F[u] = y[u] - su
                F[v] = y[v] - sv
            # keep the running extremes valid for the two touched samples
            stale = False
            for m in (u, v):
                if m == lo or m == up:
                    stale = True
                if _in_low(y[m], alpha[m], upper[m]) and (lo < 0 or F[m] < F[lo]):
                    lo = m
                if _in_up(y[m], alpha[m], upper[m]) and (up < 0 or F[m] > F[up]):
                    up = m
            if stale:
                lo, up = _scan(F, y, alpha, upper, -1)
        # recompute w from alpha so rounding drift does not accumulate
        w[:] = 0.0
        for m in range(n):
            if alpha[m] != 0.0:
                c = alpha[m] * y[m]
                for j in range(d):
                    w[j] += c * X[m, j]
        nrm = 0.0
        for j in range(d):
            nrm += w[j] * w[j]
        obj = 0.5 * nrm - alpha.sum()
        trace[ep] = obj
        epochs = ep + 1
        if ep > 0 and prev - obj < tol * max(1.0, abs(obj)):
            break
        prev = obj
    return w, alpha, epochs


def hinge_objective(w, b, X, y, costs) -> float:
    margins = y * (X @ w + b)
    return 0.5 * float(w @ w) + float(costs @ np.maximum(0.0, 1.0 - margins))


def _best_bias(s, y, costs):
    """Exact minimiser over b of sum_i costs_i * hinge(y_i (s_i + b)).

    The loss is convex piecewise linear with kinks at b = y_i - s_i, so the
    minimum is attained at one of them.
    """
    t = y - s
    pos = y > 0
    tp, cp = t[pos], costs[pos]
    tn, cn = t[~pos], costs[~pos]
    op, on = np.argsort(tp, kind="stable"), np.argsort(tn, kind="stable")
    tp, cp, tn, cn = tp[op], cp[op], tn[on], cn[on]
    # suffix sums over positives with t_i > b, prefix sums over negatives with t_i < b
    cp_suf = np.concatenate([np.cumsum(cp[::-1])[::-1], [0.0]])
    ctp_suf = np.concatenate([np.cumsum((cp * tp)[::-1])[::-1], [0.0]])
    cn_pre = np.concatenate([[0.0], np.cumsum(cn)])
    ctn_pre = np.concatenate([[0.0], np.cumsum(cn * tn)])
    cand = np.sort(t, kind="stable")
    ip = np.searchsorted(tp, cand, side="right")
    ineg = np.searchsorted(tn, cand, side="left")
    f = (ctp_suf[ip] - cand * cp_suf[ip]) + (cand * cn_pre[ineg] - ctn_pre[ineg])
    k = int(np.argmin(f))
    return float(cand[k]), float(f[k])


@dataclass(frozen=True, eq=False)
class LinearSVMModel:
    weights: np.ndarray
    bias: float
    C: float
    seed: int = 0
    epochs: int = 0
    objective: float = 0.0
    tag: str = ""
    dual_trace: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not np.isfinite(w).all() or not math.isfinite(self.bias):
            raise NumericError("SVM weights must be finite")
        if not (math.isfinite(self.objective) and self.objective >= 0):
            raise NumericError(f"SVM objective must be finite and >= 0, got {self.objective}")
        if not self.C > 0:
            raise ValidationError("C must be positive")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return len(self.weights)

    def to_text(self) -> str:
        head = [
            f"dim {self.dim}",
            f"C {self.C!r}",
            f"bias {self.bias!r}",
            f"seed {self.seed}",
            f"extractor_tag {self.tag or '-'}",
            f"epochs {self.epochs}",
            f"objective {self.objective!r}",
        ]
        return "\n".join(head) + "\n" + "".join(f"{float(v)!r}\n" for v in self.weights)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "LinearSVMModel":
        path = Path(path)
        if not path.is_file():
            raise MissingFileError(f"model not found: {path}")
        lines = path.read_text().splitlines()
        try:
            head = dict(line.split(" ", 1) for line in lines[:7])
            dim = int(head["dim"])
            w = np.array([float(v) for v in lines[7:]])
            if len(w) != dim:
                raise ValueError(f"expected {dim} weights, got {len(w)}")
            tag = head["extractor_tag"]
            return cls(w, float(head["bias"]), float(head["C"]), int(head["seed"]),
                       int(head["epochs"]), float(head["objective"]), "" if tag == "-" else tag)
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: bad model file ({exc})") from None


def class_costs(y, C: float, balanced: bool = True) -> np.ndarray:
    """Per-sample box bounds; balanced weighting scales C by n / (2 n_class)."""
    y = np.asarray(y)
    if not balanced:
        return np.full(len(y), float(C))
    n = len(y)
    n_pos = np.count_nonzero(y > 0)
    return np.where(y > 0, C * n / (2.0 * n_pos), C * n / (2.0 * (n - n_pos)))


def svm_train(X, y, C: float = 1.0, seed: int = 0, balanced: bool = True, tag: str = "",
              max_epochs: int = MAX_EPOCHS, tol: float = TOL) -> LinearSVMModel:
    """Soft-margin linear SVM, labels bona fide = -1, attack = +1.

    Minimises 0.5 ||w||^2 + sum_i C_i hinge(y_i (w . x_i + b)) with an
    unregularised bias.  The dual is solved by pairwise coordinate descent
    visiting samples in one seeded permutation every epoch; training stops
    when an epoch lowers the dual objective by less than ``tol`` (relative to
    max(1, |D|)) or after ``max_epochs``.  The bias is the exact minimiser of
    the hinge term for the learned ``w``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValidationError(f"feature matrix {X.shape} does not match {len(y)} labels")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValidationError("labels must be -1 (bona fide) or +1 (attack)")
    if min(np.count_nonzero(y > 0), np.count_nonzero(y < 0)) < 2:
        raise ValidationError("svm_train needs at least 2 samples of each class")
    if not np.isfinite(X).all():
        raise NumericError("feature matrix has non-finite values")
    costs = class_costs(y, C, balanced)
    order = np.random.default_rng(seed).permutation(len(y)).astype(np.int64)
    trace = np.zeros(max_epochs)
    w, _alpha, epochs = _dual_cd(X, y, costs, order, int(max_epochs), float(tol), trace)
    b, hinge = _best_bias(X @ w, y, costs)
    obj = 0.5 * float(w @ w) + hinge
    return LinearSVMModel(w, float(b), float(C), int(seed), int(epochs), float(obj), tag, trace[:epochs].copy())


def svm_score(m: LinearSVMModel, x) -> np.ndarray | float:
    """Signed distance-like score w . x + b; positive means attack."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.dim:
        raise ValidationError(f"feature dim {x.shape[-1]} != model dim {m.dim}")
    s = x @ m.weights + m.bias
    return float(s) if np.ndim(s) == 0 else s


def tune_c(X, y, seed=0, tag="", grid=C_GRID) -> LinearSVMModel:
    """Pick C from ``grid`` by train-split D-EER (first minimum wins)."""
    best = None
    y = np.asarray(y, dtype=np.float64)
    for C in grid:
        m = svm_train(X, y, C=C, seed=seed, tag=tag)
        s = svm_score(m, X)
        eer, _ = d_eer((s[y < 0], s[y > 0]))
        if best is None or eer < best[0]:
            best = (eer, m)
    return best[1]


def normalize_scores(train_scores, apply_scores) -> np.ndarray:
    """Min-max map using the training extrema, clipped to [0, 1]."""
    tr = np.asarray(train_scores, dtype=np.float64)
    lo, hi = float(tr.min()), float(tr.max())
    if not hi > lo:
        raise NumericError("cannot normalise degenerate training scores (max == min)")
    return np.clip((np.asarray(apply_scores, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


def fuse(scores, weights):
    """Weighted sum rule.  ``scores`` is (k,) or (k, n) with one row per branch."""
    s = np.asarray(scores, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or s.shape[0] != len(w):
        raise ValidationError(f"{len(w)} weights for {s.shape[0]} score branches")
    out = w[0] * s[0]
    for i in range(1, len(w)):
        out = out + w[i] * s[i]
    return float(out) if out.ndim == 0 else out


def _check_simplex(w, what):
    w = tuple(float(v) for v in w)
    if any(v < 0 for v in w) or abs(sum(w) - 1.0) > 1e-9:
        raise ValidationError(f"{what} weights must be >= 0 and sum to 1, got {w}")
    return w


@dataclass(frozen=True)
class FusionWeights:
    feature_weights: tuple = PAPER_FEATURE_WEIGHTS
    camera_weights: tuple = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        object.__setattr__(self, "feature_weights", _check_simplex(self.feature_weights, "feature"))
        object.__setattr__(self, "camera_weights", _check_simplex(self.camera_weights, "camera"))

    def to_text(self) -> str:
        f = " ".join(repr(v) for v in self.feature_weights)
        c = " ".join(repr(v) for v in self.camera_weights)
        return f"feature_weights {f}\ncamera_weights {c}\n"

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "FusionWeights":
        path = Path(path)
        if not path.is_file():
            raise MissingFileError(f"weights file not found: {path}")
        vals = {}
        for line in path.read_text().splitlines():
            key, *rest = line.split()
            vals[key] = tuple(float(v) for v in rest)
        try:
            return cls(vals["feature_weights"], vals["camera_weights"])
        except KeyError as exc:
            raise FormatError(f"{path}: missing {exc}") from None


def renormalize(weights) -> tuple:
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any() or w.sum() <= 0:
        raise ValidationError(f"weights must be non-negative with positive sum, got {tuple(w)}")
    total = float(w.sum())
    if abs(total - 1.0) > 1e-9:
        log.warning("weights %s sum to %.6g; renormalising to 1", tuple(w.tolist()), total)
    return tuple(float(v) for v in w / total)


def paper_weights() -> FusionWeights:
    return FusionWeights(PAPER_FEATURE_WEIGHTS, renormalize(PAPER_CAMERA_WEIGHTS))


def simplex_grid(k: int, step: float = GRID_STEP) -> list[tuple]:
    """All weight vectors of length k on the step grid summing to 1, lexicographic."""
    n = int(round(1.0 / step))
    return [tuple(c / n for c in combo) for combo in itertools.product(range(n + 1), repeat=k)
            if sum(combo) == n]


def greedy_weight_search(branches, step: float = GRID_STEP) -> tuple:
    """Fusion weights minimising the D-EER of the fused training scores.

    ``branches`` is a sequence of index-aligned ScoreSets (or (scores, labels)
    pairs sharing labels).  Every point of the step-``step`` simplex grid is
    evaluated; the lexicographically smallest weight vector wins ties.
    """
    if not branches:
        raise ValidationError("no branches to fuse")
    mats, labels = [], None
    for b in branches:
        if isinstance(b, ScoreSet):
            s, lab = b.score, b.is_attack
        else:
            s, lab = np.asarray(b[0], dtype=np.float64), np.asarray(b[1], dtype=bool)
        if s.size == 0:
            raise ValidationError("empty branch")
        if labels is None:
            labels = lab
        elif len(lab) != len(labels) or not np.array_equal(lab, labels):
            raise ValidationError("branches are not index-aligned")
        mats.append(s)
    if labels.all() or not labels.any():
        raise ValidationError("each branch needs both genuine and attack scores")
    S = np.vstack(mats)
    best_w, best_eer = None, math.inf
    for w in simplex_grid(len(mats), step):
        f = fuse(S, w)
        eer, _ = d_eer((f[~labels], f[labels]))
        if eer < best_eer:
            best_w, best_eer = w, eer
    return best_w


def cv_folds(groups, labels, k: int, seed: int) -> np.ndarray:
    """Fold index per sample; whole groups share a fold.

    Groups are split by label, shuffled with ``seed`` and dealt round-robin,
    so every fold holds groups of both labels when each label has >= k groups.
    """
    groups = np.asarray(groups)
    labels = np.asarray(labels)
    fold_of = {}
    rng = np.random.default_rng(seed)
    for lab in (-1.0, 1.0):
        g = sorted(set(groups[labels == lab].tolist()))
        for pos, gi in enumerate(rng.permutation(len(g))):
            fold_of[g[gi]] = pos % k
    return np.array([fold_of[g] for g in groups.tolist()], dtype=np.int64)


def cross_val_scores(X, y, folds, C=1.0, seed=0, tag="") -> np.ndarray:
    """Out-of-fold scores: each fold is scored by a model trained on the others."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.empty(len(y))
    for f in np.unique(folds):
        held = folds == f
        m = svm_train(X[~held], y[~held], C=C, seed=seed, tag=tag)
        out[held] = svm_score(m, X[held])
    return out
