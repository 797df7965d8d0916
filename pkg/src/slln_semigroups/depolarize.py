"""Depolarizing channels and their random compositions.

``D_lam rho = (1 - lam) rho + lam I / d`` for ``0 < lam < 1 + 1/(d^2 - 1)``.
On trace-one states every composition of such maps is again of the form
``a rho + b I / d`` with ``a + b = 1``, so compositions are carried as the
coefficient pair ``(a, b)`` and only materialised at the end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DensityMatrix",
    "XiStream",
    "UniformLaw",
    "ConstantLaw",
    "max_lambda",
    "apply_channel",
    "superoperator",
    "compose_coefficients",
    "closed_form_coefficients",
    "compose_random",
    "closed_form",
    "limit_channel",
    "trace_distance",
    "convergence_experiment",
    "ConvergenceRow",
]

_BLOCK = 4096


def max_lambda(d):
    """Upper end ``1 + 1/(d^2 - 1)`` of the admissible parameter range."""
    if d < 2:
        raise ValueError("channel dimension must be >= 2")
    return 1.0 + 1.0 / (d * d - 1)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite ``d x d`` matrix."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        if not np.allclose(rho, rho.conj().T, rtol=0, atol=1e-12):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise ValueError(f"density matrix trace is {np.trace(rho).real!r}, expected 1")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "rho", rho)

    @property
    def d(self):
        return self.rho.shape[0]

    @classmethod
    def pure(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def random(cls, d, seed=0):
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        rho = G @ G.conj().T
        rho = rho / np.trace(rho)
        return cls((rho + rho.conj().T) / 2)


def _as_state(rho):
    return rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)


def _check_lambda(lam, d, allow_zero=True):
    lo_ok = lam >= 0 if allow_zero else lam > 0
    if not (lo_ok and lam < max_lambda(d)):
        raise ValueError(
            f"depolarizing parameter {lam} outside (0, {max_lambda(d):.6g}) for d={d}"
        )


def apply_channel(lam, rho):
    """``(1 - lam) rho + (lam / d) I``. ``lam = 0`` is accepted as the identity."""
    rho = _as_state(rho)
    _check_lambda(lam, rho.d)
    return DensityMatrix(_affine(1.0 - lam, lam, rho.rho))


def _affine(a, b, rho):
    d = rho.shape[0]
    out = a * rho + (b / d) * np.eye(d)
    return (out + out.conj().T) / 2


def superoperator(lam, d):
    """Read-only ``d^2 x d^2`` matrix of ``D_lam`` acting on row-major ``vec(rho)``.

    Uses the trace-including form ``(1-lam) rho + lam tr(rho) I/d``, which
    agrees with :func:`apply_channel` on states.
    """
    _check_lambda(lam, d)
    v = np.eye(d).reshape(-1)
    S = (1 - lam) * np.eye(d * d) + (lam / d) * np.outer(v, v)
    S.setflags(write=False)
    return S


class UniformLaw:
    def __init__(self, low=0.0, high=1.0):
        if not 0 <= low < high:
            raise ValueError("need 0 <= low < high")
        self.low, self.high = float(low), float(high)

    @property
    def mean(self):
        return 0.5 * (self.low + self.high)

    def draw(self, rng, size):
        return rng.uniform(self.low, self.high, size)


class ConstantLaw:
    def __init__(self, value):
        if value < 0:
            raise ValueError("value must be non-negative")
        self.value = float(value)

    @property
    def mean(self):
        return self.value

    def draw(self, rng, size):
        return np.full(size, self.value)


class XiStream:
    """Prefix-stable i.i.d. stream ``xi_1, xi_2, ...`` of channel strengths."""

    def __init__(self, law, seed=0, d=2):
        self.law = law
        self.seed = int(seed)
        self.d = int(d)
        hi = getattr(law, "high", getattr(law, "value", 0.0))
        if hi >= max_lambda(self.d):
            raise ValueError(f"law reaches {hi}, beyond the range for d={self.d}")
        self._blocks = []

    @property
    def mean(self):
        return self.law.mean

    def values(self, n):
        """``xi_1..xi_n`` as an array."""
        need = -(-int(n) // _BLOCK)
        while len(self._blocks) < need:
            b = len(self._blocks)
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, b]))
            self._blocks.append(self.law.draw(rng, _BLOCK))
        return np.concatenate(self._blocks)[:n] if n else np.empty(0)


def compose_coefficients(xi, n):
    """``(a, b)`` of ``D_{xi_1/n} ... D_{xi_n/n}`` by applying ``D_{xi_n/n}`` first."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lams = (xi.values(n) / n).tolist()
    a, b = 1.0, 0.0
    for lam in reversed(lams):
        a, b = (1.0 - lam) * a, (1.0 - lam) * b + lam
    return a, b


def closed_form_coefficients(xi, n):
    """``prod_k (1 - xi_k/n)`` and ``sum_k (xi_k/n) prod_{i<k} (1 - xi_i/n)``."""
    lams = xi.values(n) / n
    keep = 1.0 - lams
    prefix = np.concatenate(([1.0], np.cumprod(keep)[:-1]))
    return float(np.prod(keep)), float(np.sum(lams * prefix))


def compose_random(xi, n, rho):
    """``D_{xi_1/n} ... D_{xi_n/n} rho`` (rightmost channel acts first)."""
    rho = _as_state(rho)
    a, b = compose_coefficients(xi, n)
    return DensityMatrix(_affine(a, b, rho.rho))


def compose_random_dense(xi, n, rho):
    """Same as :func:`compose_random` but applying each channel to the matrix."""
    rho = _as_state(rho)
    out = rho.rho
    for lam in (xi.values(n) / n)[::-1]:
        out = _affine(1.0 - lam, lam, out)
    return DensityMatrix(out)


def closed_form(xi, n, rho):
    rho = _as_state(rho)
    a, b = closed_form_coefficients(xi, n)
    return DensityMatrix(_affine(a, b, rho.rho))


def limit_channel(mean_xi, rho):
    """``D_{1 - exp(-mean_xi)} rho``."""
    rho = _as_state(rho)
    if not 0 < mean_xi < max_lambda(rho.d):
        raise ValueError(f"mean_xi={mean_xi} outside (0, {max_lambda(rho.d):.6g})")
    return apply_channel(-math.expm1(-mean_xi), rho)


def trace_distance(a, b):
    """Trace norm (sum of singular values) of ``a - b``."""
    A = a.rho if isinstance(a, DensityMatrix) else np.asarray(a)
    B = b.rho if isinstance(b, DensityMatrix) else np.asarray(b)
    return float(np.linalg.svd(A - B, compute_uv=False).sum())


@dataclass
class ConvergenceRow:
    seed: int
    n: int
    coeff_product_error: float
    coeff_sum_error: float
    trace_distance: float
    max_entry_distance: float


def convergence_experiment(xi, rho, n_list, mean_xi=None):
    """Distance of the random composition to the limit channel along one path."""
    rho = _as_state(rho)
    m = xi.mean if mean_xi is None else mean_xi
    a_star = math.exp(-m)
    b_star = -math.expm1(-m)
    limit = limit_channel(m, rho)
    rows = []
    for n in n_list:
        a, b = compose_coefficients(xi, n)
        got = _affine(a, b, rho.rho)
        rows.append(
            ConvergenceRow(
                seed=xi.seed,
                n=int(n),
                coeff_product_error=abs(a - a_star),
                coeff_sum_error=abs(b - b_star),
                trace_distance=trace_distance(got, limit),
                max_entry_distance=float(np.max(np.abs(got - limit.rho))),
            )
        )
    return rows
