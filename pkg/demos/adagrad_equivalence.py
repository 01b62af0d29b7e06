"""
CLASSP with p = 2 and no gate is AdaGrad
========================================

With ``p = 2``, ``threshold = 0`` and decay switched on, every element's
step is ``alpha * g / sqrt(eps + sum g^2)``, which is exactly AdaGrad.
We check that on a random quadratic and then show what ``p`` and the gate
change about the trajectory.
"""
import numpy as np

from classp import ClasspConfig, ClasspState, adagrad_step, classp_step

rng = np.random.default_rng(7)
n = 200
a = rng.normal(size=(n, n))
H = a @ a.T / n + np.eye(n)
b = rng.normal(size=n)
w0 = rng.normal(size=n)


def loss(w):
    return 0.5 * w @ H @ w - b @ w


def train(cfg, steps=100):
    w, st = w0.copy(), ClasspState.zeros(n)
    for _ in range(steps):
        classp_step(w, H @ w - b, st, cfg)
    return w, st


###############################################################################
# Same iterates, step by step

cfg = ClasspConfig(alpha=0.1, p=2, threshold=0.0, apply_decay=True)
wc, st = w0.copy(), ClasspState.zeros(n)
wa, acc = w0.copy(), np.zeros(n)
worst = 0.0
for t in range(100):
    classp_step(wc, H @ wc - b, st, cfg)
    adagrad_step(wa, H @ wa - b, acc, 0.1)
    worst = max(worst, np.abs(wc - wa).max())
print(f"largest elementwise gap over 100 steps: {worst:.1e}")
print(f"largest accumulator gap: {np.abs(st.grad_sum - acc).max():.1e}")

###############################################################################
# Other powers and gates
#
# p = 1 shrinks the step by the running sum of |g| instead of its root, so
# learning rates fall off much faster.  A positive threshold leaves elements
# with small gradients alone entirely.

w_star = np.linalg.solve(H, b)
for p, thr in [(2, 0.0), (1, 0.0), (1, 0.05), (1, 0.5)]:
    w, st = train(ClasspConfig(alpha=0.1, p=p, threshold=thr))
    moved = np.mean(st.grad_sum > 0)
    print(f"p={p} threshold={thr:<4}  loss {loss(w):9.4f}  (optimum {loss(w_star):.4f})  "
          f"elements ever updated {moved:.0%}")
