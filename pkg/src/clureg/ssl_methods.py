"""Toy-scale base regularizers for learning from unlabeled data.

Each returns a scalar tape node suitable for delta-weighting into the
combined objective. Consistency divergence is mean squared difference
for the two-pass, teacher and interpolation methods, and KL for the
adversarial-perturbation one, matching the originals.

Teacher/clean branches are gradient-free by construction: they enter
as plain ndarrays, and passing a tape Tensor where a constant is
required is rejected rather than silently differentiated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tape import Tape, Tensor, log, mean, mul, reduce_sum, sub, sumsq, clamp_min


@dataclass(frozen=True)
class SSLMethodConfig:
    kind: str = "none"  # none | pi_model | mean_teacher | pseudo_label | vat | ict
    pl_threshold: float = 0.95
    ema_decay: float = 0.99
    vat_eps: float = 2.0
    vat_xi: float = 1e-6
    vat_iters: int = 1
    ict_beta_a: float = 0.5

    def __post_init__(self):
        kinds = ("none", "pi_model", "mean_teacher", "pseudo_label", "vat", "ict")
        if self.kind not in kinds:
            raise ValueError(f"unknown SSL method {self.kind!r}")
        if not 0.0 < self.pl_threshold <= 1.0:
            raise ValueError("pl_threshold must be in (0, 1]")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must be in (0, 1)")
        if self.vat_xi <= 0 or self.vat_iters < 1:
            raise ValueError("vat needs xi > 0 and at least one power iteration")
        if self.vat_eps < 0:
            raise ValueError("vat_eps must be >= 0")
        if self.ict_beta_a <= 0:
            raise ValueError("ict_beta_a must be > 0")

    @property
    def needs_teacher(self) -> bool:
        return self.kind in ("mean_teacher", "ict")


def _require_constant(arr, what: str) -> np.ndarray:
    if isinstance(arr, Tensor):
        raise TypeError(f"{what} must be gradient-free (got a tape Tensor)")
    return np.asarray(arr, dtype=np.float64)


def pi_consistency(p1: Tensor, p2: Tensor) -> Tensor:
    """Mean squared difference between two stochastic passes."""
    if p1.value.shape != p2.value.shape:
        raise ValueError(
            f"pass shapes differ: {p1.value.shape} vs {p2.value.shape}"
        )
    return mul(sumsq(sub(p1, p2)), 1.0 / p1.value.size)


def mean_teacher_consistency(student_p: Tensor, teacher_p) -> Tensor:
    """Mean squared difference to the averaged-weights teacher."""
    teacher_p = _require_constant(teacher_p, "teacher output")
    if student_p.value.shape != teacher_p.shape:
        raise ValueError(
            f"student/teacher shapes differ: {student_p.value.shape} vs {teacher_p.shape}"
        )
    return mul(sumsq(sub(student_p, teacher_p)), 1.0 / teacher_p.size)


def pseudo_label_loss(p_u: Tensor, threshold: float) -> Tensor:
    """Cross-entropy of each confident row against its own argmax."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    probs = p_u.value
    keep = probs.max(axis=1) >= threshold
    n_keep = int(keep.sum())
    if n_keep == 0:
        return mul(mean(p_u), 0.0)  # zero, but still on the tape
    onehot = np.zeros_like(probs)
    rows = np.flatnonzero(keep)
    onehot[rows, probs[rows].argmax(axis=1)] = 1.0
    return mul(reduce_sum(mul(log(clamp_min(p_u, 1e-12)), onehot)), -1.0 / n_keep)


def kl_from_probs(p_const, q: Tensor) -> Tensor:
    """KL(p || q) averaged over rows, with p held constant.

    Both arguments are clamped at 1e-12 inside the logs, so p == q
    gives exactly zero.
    """
    p = _require_constant(p_const, "reference distribution")
    if p.shape != q.value.shape:
        raise ValueError(f"shapes differ: {p.shape} vs {q.value.shape}")
    ref = (p * np.log(np.maximum(p, 1e-12))).sum(axis=1)
    cross = reduce_sum(mul(p, log(clamp_min(q, 1e-12))), axis=1)
    return mean(sub(ref, cross))


def _row_normalize(r: np.ndarray) -> np.ndarray | None:
    norms = np.linalg.norm(r, axis=1, keepdims=True)
    if (norms == 0).any():
        return None
    return r / norms


def vat_perturbation(model_fn, X_u: np.ndarray, xi: float, n_power_iters: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Power-iterate toward the input direction the model is most
    sensitive to, one unit vector per row. Gradient-free.

    A zero-norm initial draw is re-drawn once and then rejected. A
    zero divergence gradient for some row (a locally flat predictor)
    keeps that row's previous direction: the eventual divergence there
    is insensitive to the choice anyway.
    """
    X_u = np.asarray(X_u, dtype=np.float64)
    probe = Tape()
    p_clean = model_fn(probe, probe.constant(X_u)).value

    r = _row_normalize(rng.standard_normal(X_u.shape))
    if r is None:
        r = _row_normalize(rng.standard_normal(X_u.shape))
        if r is None:
            raise ValueError("degenerate zero-norm perturbation after re-draw")
    for _ in range(n_power_iters):
        t = Tape()
        perturbed = t.leaf(X_u + xi * r)
        div = kl_from_probs(p_clean, model_fn(t, perturbed))
        t.backward(div)
        g = perturbed.grad
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        flat = norms[:, 0] == 0
        r = np.where(flat[:, None], r, g / np.where(norms == 0, 1.0, norms))
    return r


def vat_loss(tape: Tape, model_fn, X_u: np.ndarray, eps: float, xi: float,
             n_power_iters: int, rng: np.random.Generator) -> Tensor:
    """KL between the clean prediction (constant) and the prediction at
    the adversarially perturbed input; gradient flows only through the
    perturbed branch.

    model_fn(tape, X_tensor) -> row-stochastic predictions on that tape.
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    X_u = np.asarray(X_u, dtype=np.float64)
    r = vat_perturbation(model_fn, X_u, xi, n_power_iters, rng)

    probe = Tape()
    p_clean = model_fn(probe, probe.constant(X_u)).value
    q = model_fn(tape, tape.constant(X_u + eps * r))
    return kl_from_probs(p_clean, q)


def ict_loss(tape: Tape, model_fn, X_u: np.ndarray, teacher_p, beta_a: float,
             rng: np.random.Generator) -> Tensor:
    """Consistency on mixed inputs against equally mixed teacher outputs.

    Draws one lambda ~ Beta(beta_a, beta_a) and one pairing permutation
    per call; the teacher outputs are constants.
    """
    teacher_p = _require_constant(teacher_p, "teacher output")
    X_u = np.asarray(X_u, dtype=np.float64)
    n = len(X_u)
    if n < 2:
        raise ValueError(f"interpolation needs at least two samples, got {n}")
    if len(teacher_p) != n:
        raise ValueError("teacher output count does not match batch")
    lam = float(rng.beta(beta_a, beta_a))
    perm = rng.permutation(n)
    mixed_in = lam * X_u + (1.0 - lam) * X_u[perm]
    mixed_target = lam * teacher_p + (1.0 - lam) * teacher_p[perm]
    pred = model_fn(tape, tape.constant(mixed_in))
    return mul(sumsq(sub(pred, mixed_target)), 1.0 / pred.value.size)
