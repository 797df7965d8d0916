"""
Random depolarizing channels
============================

D_lam rho = (1 - lam) rho + lam I/d. Composing D_{xi_k/n} for i.i.d. xi_k
gives another depolarizing channel, and its parameter converges to
1 - exp(-E xi).
"""
import math

import numpy as np

from slln_semigroups.depolarize import (
    ConstantLaw,
    DensityMatrix,
    UniformLaw,
    XiStream,
    apply_channel,
    closed_form,
    compose_random,
    convergence_experiment,
    limit_channel,
)

rho = DensityMatrix.pure([1.0, 0.0])
print("D_1/2 |0><0| =\n", apply_channel(0.5, rho).rho.real)

xi = XiStream(UniformLaw(0.0, 1.0), seed=0)
out = compose_random(xi, 1000, rho)
alt = closed_form(xi, 1000, rho)
print(f"\ncomposition vs closed form at n=1000: {np.abs(out.rho - alt.rho).max():.1e}")

print("\nlimit channel for E xi = 1/2:\n", limit_channel(0.5, rho).rho.real)
for row in convergence_experiment(xi, rho, [10, 1000, 100_000]):
    print(f"  n={row.n:6d}  trace distance {row.trace_distance:.2e}")

# deterministic strengths: (1 - 1/n)^n - e^{-1} ~ e^{-1}/(2n)
const = XiStream(ConstantLaw(1.0))
for row in convergence_experiment(const, rho, [100, 10_000, 1_000_000]):
    print(f"  xi = 1, n={row.n:8d}  error {row.coeff_product_error:.3e}"
          f"  (e^-1/2n = {math.exp(-1) / (2 * row.n):.3e})")
