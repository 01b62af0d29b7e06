"""
Forgetting rate and optimizer memory
====================================

Two bookkeeping quantities used in every comparison: how much first-task
accuracy is lost, and how many extra reals each optimizer stores.
"""
from classp import aux_memory_count, forgetting_rate, param_count

###############################################################################
# Forgetting is relative to where the first task started.

for a0, a1 in [(99.07, 66.04), (99.07, 91.05), (80.0, 80.0), (50.0, 60.0)]:
    print(f"{a0:6.2f}% -> {a1:6.2f}%   forgetting {forgetting_rate(a0, a1):7.2f}%")

###############################################################################
# Auxiliary memory per optimizer.  CLASSP keeps one accumulator per weight;
# EWC keeps the previous weights plus a Fisher diagonal.

for sizes in [(784, 128, 10), (784, 256, 256, 10), (3072, 512, 100)]:
    n = param_count(sizes)
    row = ", ".join(f"{k} {aux_memory_count(k, n) / n:.0f}N" for k in ["sgd", "classp", "adagrad", "adam", "ewc"])
    print(f"{str(sizes):22s} N={n:>9,}  {row}")
