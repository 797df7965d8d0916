"""
Random products of semigroups
=============================

Split [0, t] into n steps and on step i apply exp(-L_i t/n) with an
independent random generator L_i = L0 + B_i, E B_i = 0. As n grows the
product approaches exp(-L0 t) along almost every path, while its mean
F(t/n)^n (F(s) = E exp(-L s)) approaches it deterministically at rate 1/n.
"""
import numpy as np

from slln_semigroups import GeneratorStream, TimeGrid, two_point_ensemble
from slln_semigroups.semigroup import chernoff_bias_experiment, slln_experiment

L0 = np.diag([1.0, 2.0, 3.0, 4.0])
B = np.array([[0, 0.3, 0, 0], [0.1, 0, 0, 0.2], [0, 0, 0, 0.1], [0.2, 0, 0.1, 0]])
ens = two_point_ensemble(L0, B)  # L = L0 + B or L0 - B with probability 1/2
print(f"gamma = {ens.gamma:.3f}, C = {ens.C:.3f}")

x = np.ones(4) / 2
grid = TimeGrid.uniform(1.0, 64)
ns = [2**k for k in range(4, 13, 2)]

# one path: draws are shared across n, so larger n extends the same sequence
print("\nsingle path, sup over t in [0, 1] of |product x - exp(-L0 t) x|")
for row in slln_experiment(GeneratorStream(ens, 0), x, grid, ns):
    print(f"  n={row.n:5d}  {row.sup_error:.3e}")

# median over seeds smooths out the path-to-path noise
sups = np.array([[r.sup_error for r in slln_experiment(GeneratorStream(ens, s), x, grid, ns)]
                 for s in range(20)])
print("\nmedian over 20 seeds:", np.array2string(np.median(sups, axis=0), precision=3))

# the averaged approximant F(t/n)^n has an O(1/n) bias
bias = chernoff_bias_experiment(ens, x, grid, ns)
print(f"\nChernoff bias slope in log-log: {bias.slope:.3f}")
for n, e in zip(bias.n_list, bias.sup_errors):
    print(f"  n={n:5d}  {e:.3e}")
