"""Independent brute-force references used by the unit and acceptance tests.

Deliberately naive: plain loops and exhaustive enumeration, no shared code
with the package beyond the inputs.
"""

import numpy as np


def rates_at(genuine, attack, tau):
    """(APCER, BPCER) by direct counting, score >= tau means attack."""
    apcer = sum(1 for s in attack if s < tau) / len(attack)
    bpcer = sum(1 for s in genuine if s >= tau) / len(genuine)
    return apcer, bpcer


def candidate_thresholds(genuine, attack):
    return [-np.inf] + sorted(set(list(genuine) + list(attack))) + [np.inf]


def eer_oracle(genuine, attack):
    best = None
    for tau in candidate_thresholds(genuine, attack):
        a, b = rates_at(genuine, attack, tau)
        gap = abs(a - b)
        if best is None or gap < best[0] - 1e-12:
            best = (gap, (a + b) / 2, tau)
    return best[1], best[2]


def bpcer_at_apcer_oracle(genuine, attack, target):
    best = None
    for tau in candidate_thresholds(genuine, attack):
        a, b = rates_at(genuine, attack, tau)
        if a <= target + 1e-12:
            best = b
    return best


def svm_objective(w, b, X, y, costs):
    """0.5 ||w||^2 + sum_i costs_i * hinge, evaluated for a batch of (w, b) rows."""
    w = np.atleast_2d(w)
    b = np.atleast_1d(b)
    margins = y[None, :] * (w @ X.T + b[:, None])
    return 0.5 * (w * w).sum(1) + (np.maximum(0.0, 1.0 - margins) * costs[None, :]).sum(1)


def svm_lattice_min(X, y, costs, half=16.0, points=41, levels=12, keep=6):
    """Minimum of the primal over a refined (w1, ..., wd, b) lattice.

    Each level evaluates a full lattice around the current best point, then
    shrinks the window to ``keep`` lattice steps on either side.
    """
    d = X.shape[1]
    center = np.zeros(d + 1)
    best = np.inf
    for _ in range(levels):
        axis = np.linspace(-half, half, points)
        grids = np.meshgrid(*([axis] * (d + 1)), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1) + center
        f = svm_objective(pts[:, :d], pts[:, d], X, y, costs)
        k = int(np.argmin(f))
        if f[k] < best:
            best, center = float(f[k]), pts[k].copy()
        half = keep * (2 * half / (points - 1))
    return best, center


def balanced_costs(y, C):
    n = len(y)
    n_pos = int((y > 0).sum())
    return np.where(y > 0, C * n / (2 * n_pos), C * n / (2 * (n - n_pos)))


def tiny_svm_problem(seed):
    """2-D problem with at most 8 points and at least 2 per class."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 9))
    n_pos = int(rng.integers(2, n - 1))
    y = np.array([1.0] * n_pos + [-1.0] * (n - n_pos))
    X = rng.normal(size=(n, 2)) + 0.8 * y[:, None] * rng.normal(size=2)
    return X, y


def rates_grid(genuine, attack):
    """(thresholds, APCER, BPCER) at every candidate threshold, by broadcast counting."""
    g, a = np.asarray(genuine, float), np.asarray(attack, float)
    t = np.array(candidate_thresholds(g, a))
    apcer = (a[None, :] < t[:, None]).mean(1)
    bpcer = (g[None, :] >= t[:, None]).mean(1)
    return t, apcer, bpcer


def eer_oracle_fast(genuine, attack):
    """Same rule as ``eer_oracle`` (first threshold with the smallest gap), vectorised."""
    t, ap, bp = rates_grid(genuine, attack)
    gap = np.abs(ap - bp)
    k = int(np.flatnonzero(gap <= gap.min() + 1e-12)[0])
    return (ap[k] + bp[k]) / 2, t[k]


def bpcer_at_apcer_oracle_fast(genuine, attack, target):
    _, ap, bp = rates_grid(genuine, attack)
    return float(bp[ap <= target + 1e-12][-1])
