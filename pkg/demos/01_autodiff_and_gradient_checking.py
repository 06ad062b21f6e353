"""A tour of the reverse-mode core: build a graph, pull gradients back
through it, verify them against finite differences, and look at the
one deliberately dishonest primitive (gradient reversal).
"""

import numpy as np

from clureg.gradcheck import forward_backward, grad_check
from clureg.tape import Tape, grad_reverse, matmul, reduce_sum, relu, softmax_rows, sumsq

rng = np.random.default_rng(0)

# A scalar loss over two inputs: sum of squares after a relu projection.
def loss(leaves):
    hidden = relu(matmul(leaves["x"], leaves["w"]))
    return sumsq(hidden)

x = rng.standard_normal((4, 3))
w = rng.standard_normal((3, 2))
value, grads = forward_backward(loss, {"x": x, "w": w})
print(f"loss value: {value:.6f}")
print(f"grad wrt x, first row: {grads['x'][0]}")

# The same gradients, but now checked against central differences.
report = grad_check(loss, {"x": x, "w": w}, h=1e-6, tol=1e-5)
print(f"\ngrad_check: max relative error {report.max_rel_err:.2e} "
      f"-> passed={report.passed}")
for name, err in report.per_parameter_errs:
    print(f"  {name}: {err:.2e}")

# softmax keeps rows normalized even for violent logits
t = Tape()
probs = softmax_rows(t.leaf(np.array([[1000.0, 0.0, -1000.0]])))
print(f"\nsoftmax of [1000, 0, -1000]: {probs.value.round(12)}")

# Gradient reversal: identity forward, scaled sign-flip backward.
t = Tape()
feats = t.leaf(rng.standard_normal((2, 3)))
out = reduce_sum(grad_reverse(feats, 2.0))
t.backward(out)
print(f"\ngrad through grad_reverse(lambda=2): {feats.grad[0]} (all -2.0)")
print("forward was untouched:", np.array_equal(out.value, feats.value.sum()))
