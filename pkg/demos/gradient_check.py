"""
Checking backprop against central differences
=============================================

The MLP computes gradients by hand.  Here we compare them with a
central-difference estimate, per layer, on a small network.
"""
import numpy as np

from classp import MLPParams, Pcg32, cross_entropy_loss, finite_diff_grad, init_mlp, mlp_backward, mlp_forward
from classp.numeric import max_relative_error

rng = Pcg32(3)
params = init_mlp((16, 8, 3), rng)
x = rng.standard_normal(8 * 16).reshape(8, 16)
y = rng.random_u32(8) % 3

logits, cache = mlp_forward(params, x)
loss, dlogits = cross_entropy_loss(logits, y)
grads = mlp_backward(params, cache, dlogits)
print(f"loss {loss:.6f} (ln 3 = {np.log(3):.6f} for a clueless model)")


def f(w):
    return cross_entropy_loss(mlp_forward(MLPParams(params.sizes, w), x)[0], y)[0]


numeric = MLPParams(params.sizes, finite_diff_grad(f, params.flat.copy(), 1e-5))

###############################################################################
# Per-layer agreement

for k, ((dW, db), (nW, nb)) in enumerate(zip(grads.layers, numeric.layers)):
    print(f"layer {k}: W rel err {max_relative_error(dW, nW, 1e-6):.1e}, "
          f"b rel err {max_relative_error(db, nb, 1e-6):.1e}")

###############################################################################
# The step size matters: too large and truncation error dominates, too small
# and cancellation does.

for h in [1e-2, 1e-3, 1e-5, 1e-7, 1e-10]:
    est = finite_diff_grad(f, params.flat.copy(), h)
    print(f"h={h:.0e}: max relative error {max_relative_error(grads.flat, est, 1e-6):.1e}")
