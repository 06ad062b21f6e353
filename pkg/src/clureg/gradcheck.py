"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tape import Tape, Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_parameter_errs: list = field(default_factory=list)  # (name, max err) pairs
    passed: bool = False


def forward_backward(graph, inputs: dict) -> tuple[float, dict]:
    """Evaluate a scalar-valued graph and return (value, grads).

    graph receives a dict of leaf Tensors keyed like `inputs` and must
    return a single scalar Tensor on the same tape.
    """
    tape = Tape()
    leaves = {name: tape.leaf(np.asarray(arr, dtype=np.float64))
              for name, arr in inputs.items()}
    out = graph(leaves)
    if not isinstance(out, Tensor):
        raise ValueError("forward_backward: graph must return a Tensor")
    if out.value.size != 1:
        raise ValueError(
            f"forward_backward: graph output must be a scalar, got shape {out.value.shape}"
        )
    tape.backward(out)
    grads = {name: leaf.grad for name, leaf in leaves.items()}
    return float(out.value), grads


def _value_only(graph, inputs: dict) -> float:
    tape = Tape()
    leaves = {name: tape.leaf(arr) for name, arr in inputs.items()}
    out = graph(leaves)
    return float(out.value)


def grad_check(loss_fn, params: dict, h: float = 1e-6, tol: float = 1e-5) -> GradCheckReport:
    """Compare tape gradients of loss_fn against central differences.

    loss_fn must be deterministic: any internal randomness has to be
    frozen by seed, otherwise the comparison is meaningless and the
    call is rejected. Relative error uses max(|analytic|, |numeric|,
    1e-8) as denominator so zero gradients do not blow up the ratio.
    """
    if h <= 0:
        raise ValueError(f"grad_check: step h must be positive, got {h}")
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    v1 = _value_only(loss_fn, params)
    v2 = _value_only(loss_fn, params)
    if v1 != v2:
        raise ValueError(
            "grad_check: loss_fn is not deterministic under repeated evaluation "
            f"({v1!r} vs {v2!r}); freeze its randomness by seed"
        )

    _, analytic = forward_backward(loss_fn, params)

    per_param = []
    worst = 0.0
    for name, base in params.items():
        flat = base.ravel()
        err_here = 0.0
        for i in range(flat.size):
            orig = flat[i]
            bumped = dict(params)
            plus = base.copy()
            plus.ravel()[i] = orig + h
            bumped[name] = plus
            f_plus = _value_only(loss_fn, bumped)
            minus = base.copy()
            minus.ravel()[i] = orig - h
            bumped[name] = minus
            f_minus = _value_only(loss_fn, bumped)
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic[name].ravel()[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            err_here = max(err_here, rel)
        per_param.append((name, err_here))
        worst = max(worst, err_here)
    return GradCheckReport(max_rel_err=worst, per_parameter_errs=per_param,
                           passed=worst <= tol)
