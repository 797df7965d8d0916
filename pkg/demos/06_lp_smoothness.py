"""
Smoothness of l^p norms
=======================

Two views of how round the unit ball is. The one-sided derivatives of
t -> ||x + t y|| agree when the norm is smooth at x and split at corners.
The ratio K(x, y) = (||x+y||^p + ||x-y||^p - 2||x||^p) / ||y||^p is
identically 2 for p = 2 and bounded for p in (1, 2).
"""
import numpy as np

from slln_semigroups.geometry import p_smooth_inequality_probe, running_max, smoothness_limit_probe, unit

e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
for p in (1.0, 1.5, 2.0):
    rows = smoothness_limit_probe(e1, e2, p, h_list=(1e-2, 1e-4, 1e-6))
    print(f"p={p}: forward/backward gap " + "  ".join(f"{r.gap:.2e}" for r in rows))

rng = np.random.default_rng(3)
x, y = unit(rng.standard_normal(5), 1.5), unit(rng.standard_normal(5), 1.5)
print("\nrandom unit pair, p=1.5:", [f"{r.gap:.1e}" for r in smoothness_limit_probe(x, y, 1.5)[:4]])

for p in (2.0, 1.5, 1.2):
    probe = p_smooth_inequality_probe(p, dim=8, samples=100_000, seed=0)
    rm = running_max(probe.values)
    print(f"\np={p}: sampled max K = {probe.values.max():.4f}, overall max = {probe.max_K:.4f}")
    print("  running max at 1e2, 1e3, 1e4, 1e5 samples:", np.array2string(rm[[99, 999, 9999, -1]], precision=4))
    print("  structured pairs:", {k: round(v, 4) for k, v in probe.adversarial.items()})
