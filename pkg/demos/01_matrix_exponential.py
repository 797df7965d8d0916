"""
Matrix exponentials and norms
=============================

The building block for every experiment: exp(-L s) via Pade scaling and
squaring, plus vector and induced operator norms on l^p.
"""
import math

import numpy as np

from slln_semigroups import expm, operator_norm, vector_norm

rng = np.random.default_rng(0)
A = rng.standard_normal((4, 4))

# exp(0 A) is the identity exactly, not just to rounding
print("exp(0 A) == I:", np.array_equal(expm(A, 0.0), np.eye(4)))

# semigroup law exp(A s) exp(A t) = exp(A (s + t))
s, t = 0.3, 1.1
err = np.abs(expm(A, s) @ expm(A, t) - expm(A, s + t)).max()
print(f"semigroup law residual: {err:.2e}")

# a stack of generators is exponentiated in one call
stack = np.stack([A, 2 * A, -A])
print("stack shape:", expm(stack, 0.5).shape)

# norms: p = 1, 2 and inf are exact, other p give certified lower bounds
x = np.array([3.0, -4.0, 0.0, 0.0])
for p in (1, 2, math.inf):
    print(f"||x||_{p} = {vector_norm(x, p):g}   ||A||_{p} = {operator_norm(A, p).value:.4f}")
est = operator_norm(A, 1.5, mode="estimate")
print(f"||A||_1.5 >= {est.value:.4f} ({est.certainty})")
