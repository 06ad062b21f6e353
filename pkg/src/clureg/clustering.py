"""Differentiable clustering head: soft assignments, centroid
reconstructions, and the four-term clustering loss.

The head is a one-layer autoencoder over backbone features: the
encoder is a single affine map plus row softmax producing
responsibilities, the decoder is the linear map recon = gamma @ M
whose rows are the centroids. The loss is the negated mixture-model
Q-function, split into four interpretable terms:

  e1  mean squared reconstruction error,
  e2  assignment-uncertainty penalty weighted by centroid norms,
  e3  cross-centroid interaction (negative Gram off-diagonals),
  e4  cluster-usage prior, which vanishes identically at alpha = 1.

For two clusters, e2 + e3 collapses to
gamma*(1-gamma)*||mu1 - mu2||^2 (see two_cluster_gap), which pins the
overall sign convention: minimizing the total encourages confident
assignments and merges centroids only where assignments are ambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ParamSet
from .streams import rng_stream
from .tape import (Tensor, add, log, matmul, mean, mul, reduce_sum,
                   softmax_rows, sub, sumsq)


@dataclass
class CMOutput:
    gamma: Tensor  # n x K responsibilities, rows sum to 1
    recon: Tensor  # n x d centroid reconstructions


@dataclass
class CMLossBreakdown:
    e1: Tensor
    e2: Tensor
    e3: Tensor
    e4: Tensor
    total: Tensor
    alpha: float

    def floats(self) -> dict:
        return {
            "e1": float(self.e1.value),
            "e2": float(self.e2.value),
            "e3": float(self.e3.value),
            "e4": float(self.e4.value),
            "cm_total": float(self.total.value),
        }


def init_cm(k: int, d: int, seed: int, params: ParamSet | None = None,
            random_centroids: bool = False) -> ParamSet:
    """Encoder weights (K x d) scaled-uniform, bias zero.

    Centroids start at zero for tracker-driven strategies (rows stay
    untouched until a class is first seen); pass random_centroids=True
    for the gradient-learned strategy, which needs a symmetry-breaking
    draw to have anything to descend from.
    """
    if k < 2:
        raise ValueError(f"need at least two clusters, got {k}")
    if params is None:
        params = ParamSet()
    bound = np.sqrt(6.0 / d)
    params["cm.W"] = rng_stream(seed, "init/cm.W").uniform(-bound, bound, size=(k, d))
    params["cm.b"] = np.zeros(k)
    if random_centroids:
        params["cm.M"] = 0.1 * rng_stream(seed, "init/cm.M").standard_normal((k, d))
    else:
        params["cm.M"] = np.zeros((k, d))
    return params


def cm_forward(X: Tensor, W: Tensor, b: Tensor, M: Tensor) -> CMOutput:
    """gamma = softmax(X W^T + b); recon = gamma M. Fully differentiable."""
    if X.value.shape[1] != W.value.shape[1]:
        raise ValueError(
            f"feature width {X.value.shape[1]} does not match encoder {W.value.shape}"
        )
    if M.value.shape != W.value.shape:
        raise ValueError(
            f"centroid matrix {M.value.shape} does not match encoder {W.value.shape}"
        )
    gamma = softmax_rows(add(matmul(X, W, transpose_b=True), b))
    recon = matmul(gamma, M)
    return CMOutput(gamma=gamma, recon=recon)


def cm_loss(X: Tensor, out: CMOutput, M: Tensor, alpha: float = 1.0) -> CMLossBreakdown:
    """The four loss terms, in minimization form, averaged over the batch."""
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    gamma, recon = out.gamma, out.recon
    n = X.value.shape[0]
    if recon.value.shape != X.value.shape:
        raise ValueError(
            f"reconstruction shape {recon.value.shape} does not match input {X.value.shape}"
        )

    e1 = mul(sumsq(sub(X, recon)), 1.0 / n)

    mu_sq = reduce_sum(mul(M, M), axis=1)  # ||mu_k||^2, length K
    e2 = mul(reduce_sum(mul(mul(gamma, sub(1.0, gamma)), mu_sq)), 1.0 / n)

    # sum_{j != l} gamma_ij gamma_il mu_j.mu_l  ==  gamma G gamma^T minus
    # its diagonal part, with G the centroid Gram matrix
    gram = matmul(M, M, transpose_b=True)
    full = reduce_sum(mul(matmul(gamma, gram), gamma))
    diag = reduce_sum(mul(mul(gamma, gamma), mu_sq))
    e3 = mul(sub(diag, full), 1.0 / n)

    if alpha == 1.0:
        e4 = mul(mean(gamma), 0.0)  # exact zero, still a tape scalar
    else:
        gamma_bar = mul(reduce_sum(gamma, axis=0), 1.0 / n)
        if float(gamma_bar.value.min()) <= 0.0:
            raise ValueError(
                "a cluster has zero average responsibility; the usage prior "
                "(alpha > 1) is singular there"
            )
        e4 = mul(reduce_sum(log(gamma_bar)), (1.0 - alpha) / n)

    total = add(add(e1, e2), add(e3, e4))
    return CMLossBreakdown(e1=e1, e2=e2, e3=e3, e4=e4, total=total, alpha=alpha)


def two_cluster_gap(gamma_scalar: float, mu1, mu2) -> float:
    """gamma(1-gamma)(||mu1||^2 + ||mu2||^2 - 2 mu1.mu2): what e2 + e3
    reduce to for a single sample and two clusters."""
    if not 0.0 <= gamma_scalar <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma_scalar}")
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    g = gamma_scalar
    return float(g * (1.0 - g) * (mu1 @ mu1 + mu2 @ mu2 - 2.0 * (mu1 @ mu2)))
