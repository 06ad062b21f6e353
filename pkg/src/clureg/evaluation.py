"""Accuracy, paired significance testing across seeds, 2-D projection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .streams import rng_stream


def top1(pred_labels, true_labels) -> float:
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction set")
    return float((pred == true).mean())


@dataclass
class SeedSummary:
    accuracies: list
    mean: float
    std: float  # sample standard deviation (n-1 denominator)

    @staticmethod
    def from_runs(accuracies) -> "SeedSummary":
        accs = [float(a) for a in accuracies]
        if not accs:
            raise ValueError("no runs to summarize")
        mean = float(np.mean(accs))
        std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        return SeedSummary(accs, mean, std)


def _t_pdf(x: float, dof: int) -> float:
    c = math.exp(math.lgamma((dof + 1) / 2.0) - math.lgamma(dof / 2.0))
    c /= math.sqrt(dof * math.pi)
    return c * (1.0 + x * x / dof) ** (-(dof + 1) / 2.0)


def t_sf(t_abs: float, dof: int, panels: int = 20000) -> float:
    """One-sided survival P(T > t_abs) by Simpson integration of the
    density over [0, t_abs]; plenty accurate for test decisions."""
    if t_abs == 0.0:
        return 0.5
    xs = np.linspace(0.0, t_abs, 2 * panels + 1)
    ys = np.array([_t_pdf(float(x), dof) for x in xs])
    h = t_abs / (2 * panels)
    integral = h / 3.0 * (ys[0] + ys[-1] + 4 * ys[1::2].sum() + 2 * ys[2:-1:2].sum())
    return float(min(max(0.5 - integral, 0.0), 1.0))


def paired_t_test(runs_a, runs_b) -> tuple[float, float]:
    """Two-sided paired t-test on per-seed differences a - b.

    Zero-variance differences short-circuit: p = 0 when the means
    differ, p = 1 when they are equal.
    """
    a = np.asarray(runs_a, dtype=np.float64)
    b = np.asarray(runs_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("both arms need the same number of paired runs")
    n = len(a)
    if n < 2:
        raise ValueError(f"need at least two paired runs, got {n}")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * t_sf(abs(t), n - 1)
    return t, float(min(p, 1.0))


def _power_iteration(apply_cov, d: int, tol: float, max_iters: int,
                     which: int) -> np.ndarray:
    v = rng_stream(0, "pca/power", which).standard_normal(d)
    v /= np.linalg.norm(v)
    for _ in range(max_iters):
        w = apply_cov(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v  # direction annihilated: flat remainder
        w /= norm
        if np.linalg.norm(w - v * np.sign(v @ w)) < tol:
            v = w
            break
        v = w
    return v


def pca_components(X: np.ndarray, out_dim: int = 2, tol: float = 1e-10,
                   max_iters: int = 10000):
    """Top principal directions by power iteration with deflation.

    Returns (components out_dim x d, explained variances). Components
    have unit norm and a fixed sign convention (largest-magnitude entry
    positive).
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError(f"need at least two samples, got {n}")
    Xc = X - X.mean(axis=0)
    if not Xc.any():
        raise ValueError("rank-0 data: all rows identical")
    comps = []
    variances = []
    residual = Xc
    for which in range(out_dim):
        res = residual  # bind for the closure

        def apply_cov(v, res=res):
            return res.T @ (res @ v) / n

        v = _power_iteration(apply_cov, d, tol, max_iters, which)
        flip = np.sign(v[np.argmax(np.abs(v))])
        if flip != 0:
            v = v * flip
        comps.append(v)
        variances.append(float(v @ apply_cov(v)))
        residual = residual - np.outer(residual @ v, v)
    return np.array(comps), np.array(variances)


def pca_project(X: np.ndarray, out_dim: int = 2) -> np.ndarray:
    """Mean-centered projection onto the top principal directions."""
    X = np.asarray(X, dtype=np.float64)
    comps, _ = pca_components(X, out_dim=out_dim)
    return (X - X.mean(axis=0)) @ comps.T
