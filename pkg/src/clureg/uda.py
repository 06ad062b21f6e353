"""Adversarial domain alignment and the proxy-A alignment metric.

The domain loss follows the reversed-gradient recipe: features from
both domains pass through grad_reverse into a small discriminator
trained with binary cross-entropy on domain labels. The discriminator
descends on that loss while the backbone, seeing the sign-flipped
adjoint, ascends it, all inside one objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ParamSet
from .streams import rng_stream
from .tape import (Tape, Tensor, absolute, add, concat_rows, exp, grad_reverse,
                   log, matmul, mean, mul, neg, relu, sub)


@dataclass(frozen=True)
class DiscriminatorConfig:
    hidden: tuple = (16,)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"zero-width discriminator layer in {self.hidden}")


def init_discriminator(d_in: int, config: DiscriminatorConfig, seed: int,
                       params: ParamSet | None = None) -> ParamSet:
    """Hidden relu layers, then a single-logit affine output layer."""
    if params is None:
        params = ParamSet()
    sizes = (d_in, *config.hidden, 1)
    for i in range(len(sizes) - 1):
        bound = np.sqrt(6.0 / sizes[i])
        rng = rng_stream(seed, f"init/disc.W{i}")
        params[f"disc.W{i}"] = rng.uniform(-bound, bound, size=(sizes[i], sizes[i + 1]))
        params[f"disc.b{i}"] = np.zeros(sizes[i + 1])
    return params


def discriminator_logits(params: ParamSet, h: Tensor, n_layers: int) -> Tensor:
    for i in range(n_layers):
        h = add(matmul(h, params[f"disc.W{i}"]), params[f"disc.b{i}"])
        if i < n_layers - 1:
            h = relu(h)
    return h


def softplus(z: Tensor) -> Tensor:
    """log(1 + e^z), computed as relu(z) + log(1 + e^-|z|) so neither
    branch can overflow."""
    return add(relu(z), log(add(exp(neg(absolute(z))), 1.0)))


def bce_with_logits(z: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy, softplus(z) - z*y per element."""
    targets = np.asarray(targets, dtype=np.float64).reshape(z.value.shape)
    return mean(sub(softplus(z), mul(z, targets)))


def dann_domain_loss(tape: Tape, F_s: Tensor, F_t: Tensor, params: ParamSet,
                     lam: float, n_disc_layers: int) -> Tensor:
    """Discriminator BCE on [source; target] features behind a
    grad_reverse(lam); the returned scalar is what the discriminator
    minimizes, while the backbone receives the reversed adjoint."""
    n_s, n_t = F_s.value.shape[0], F_t.value.shape[0]
    if n_s == 0 or n_t == 0:
        raise ValueError(f"both domains must be non-empty, got {n_s} and {n_t}")
    joint = grad_reverse(concat_rows([F_s, F_t]), lam)
    logits = discriminator_logits(params, joint, n_disc_layers)
    domain = np.concatenate([np.zeros(n_s), np.ones(n_t)])
    return bce_with_logits(logits, domain)


def delta_schedule(p: float, gamma_ramp: float = 10.0) -> float:
    """Ramp from 0 to (almost) 1 as training progresses."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {p}")
    return 2.0 / (1.0 + np.exp(-gamma_ramp * p)) - 1.0


def _fit_logistic_probe(X: np.ndarray, y: np.ndarray, max_steps: int = 5000,
                        grad_tol: float = 1e-6) -> np.ndarray:
    """Full-batch gradient descent on logistic loss, step size from the
    curvature bound so no tuning is involved."""
    n = len(X)
    Xb = np.column_stack([X, np.ones(n)])
    lip = 0.25 * np.linalg.eigvalsh(Xb.T @ Xb / n).max() + 1e-12
    lr = 1.0 / lip
    w = np.zeros(Xb.shape[1])
    for _ in range(max_steps):
        p = 1.0 / (1.0 + np.exp(-(Xb @ w)))
        g = Xb.T @ (p - y) / n
        if np.linalg.norm(g) < grad_tol:
            break
        w = w - lr * g
    return w


def proxy_a_distance(F_s: np.ndarray, F_t: np.ndarray, probe_seed: int = 0) -> float:
    """2 * (1 - 2 * err) for a linear domain probe's held-out error rate.

    Each domain is split 50/50 into probe-train and probe-test; the
    error is clamped at chance level so the result stays in [0, 2].
    Symmetric under swapping the two feature sets.
    """
    F_s = np.asarray(F_s, dtype=np.float64)
    F_t = np.asarray(F_t, dtype=np.float64)
    if len(F_s) < 20 or len(F_t) < 20:
        raise ValueError(
            f"need at least 20 samples per domain, got {len(F_s)} and {len(F_t)}"
        )
    # canonicalize the stacking order so the result is exactly symmetric
    # in its arguments (the probe's error rate is label-flip invariant)
    if (len(F_t), F_t.tobytes()) < (len(F_s), F_s.tobytes()):
        F_s, F_t = F_t, F_s

    def halves(F):
        # permutation keyed only by the domain's size keeps the metric
        # symmetric in its two arguments
        perm = rng_stream(probe_seed, "pad/split", len(F)).permutation(len(F))
        cut = len(F) // 2
        return F[perm[:cut]], F[perm[cut:]]

    s_tr, s_te = halves(F_s)
    t_tr, t_te = halves(F_t)
    X_tr = np.vstack([s_tr, t_tr])
    y_tr = np.concatenate([np.zeros(len(s_tr)), np.ones(len(t_tr))])
    X_te = np.vstack([s_te, t_te])
    y_te = np.concatenate([np.zeros(len(s_te)), np.ones(len(t_te))])

    mu = X_tr.mean(axis=0)
    sd = X_tr.std(axis=0)
    sd[sd == 0] = 1.0
    w = _fit_logistic_probe((X_tr - mu) / sd, y_tr)
    Xb_te = np.column_stack([(X_te - mu) / sd, np.ones(len(X_te))])
    pred = (Xb_te @ w > 0).astype(np.float64)
    err = float((pred != y_te).mean())
    err = min(err, 0.5)
    return 2.0 * (1.0 - 2.0 * err)
