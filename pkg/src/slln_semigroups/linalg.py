"""Dense matrix helpers: validation, the matrix exponential, and l^p norms.

Operators are plain ``numpy`` arrays of shape ``(dim, dim)`` and vectors are
arrays of shape ``(dim,)``. The norm in force is selected by a single exponent
``p`` in ``[1, inf]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "as_operator",
    "as_vector",
    "expm",
    "vector_norm",
    "operator_norm",
    "NormEstimate",
    "check_p",
]

# Pade(13) numerator coefficients, b_k = (26-k)! 13! / (26! k! (13-k)!).
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)

# normalised so the constant term is exactly 1 (keeps exp(0) == I bitwise)
_PADE13_UNIT = tuple(c / _PADE13[0] for c in _PADE13)

# scaled 1-norm target before the Pade core is applied
_SCALED_NORM = 0.5


def as_operator(A, name="operator"):
    """Validate and return ``A`` as a finite square 2-D array."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        raise ValueError(f"{name} must have positive dimension")
    if not np.issubdtype(A.dtype, np.number):
        raise TypeError(f"{name} must hold numbers, got dtype {A.dtype}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    if not np.iscomplexobj(A):
        A = A.astype(float, copy=False)
    return A


def as_vector(x, name="vector"):
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    if not np.iscomplexobj(x):
        x = x.astype(float, copy=False)
    return x


def check_p(p):
    p = float(p)
    if not (p >= 1.0):
        raise ValueError(f"norm exponent p must satisfy p >= 1 or p = inf, got {p}")
    return p


def _pade13(A):
    """Diagonal Pade(13) approximant of exp on a stack of small-norm matrices."""
    b = _PADE13_UNIT
    ident = np.broadcast_to(np.eye(A.shape[-1], dtype=A.dtype), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (
        A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
        + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident
    )
    V = (
        A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
        + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
    )
    return np.linalg.solve(V - U, V + U)


def expm(A, scale=1.0):
    """Matrix exponential ``exp(scale * A)`` by scaling and squaring.

    ``A`` may be a single square matrix or a stack ``(..., d, d)``; every
    matrix in a stack gets its own power-of-two scaling so that the scaled
    1-norm is at most 0.5 before the Pade(13) core is applied.

    Examples
    --------
    >>> expm(np.array([[0.0, 1.0], [0.0, 0.0]]), 2.0)
    array([[1., 2.],
           [0., 1.]])
    """
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expm needs square matrices, got shape {A.shape}")
    if not np.isfinite(scale):
        raise ValueError(f"scale must be finite, got {scale}")
    if not np.all(np.isfinite(A)):
        raise ValueError("expm input has non-finite entries")
    dtype = np.result_type(A.dtype, np.asarray(scale).dtype, float)
    X = (scale * A).astype(dtype, copy=False)
    if A.ndim == 2:
        return _expm_stack(X[None])[0]
    flat = X.reshape((-1,) + X.shape[-2:])
    return _expm_stack(flat).reshape(X.shape)


def _expm_stack(X):
    norms = np.abs(X).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        squarings = np.where(
            norms > _SCALED_NORM,
            np.ceil(np.log2(np.maximum(norms, _SCALED_NORM) / _SCALED_NORM)),
            0.0,
        ).astype(int)
    X = X / np.ldexp(1.0, squarings)[:, None, None]
    R = _pade13(X)
    top = int(squarings.max()) if squarings.size else 0
    for j in range(top):
        active = squarings > j
        if active.all():
            R = R @ R
        else:
            R[active] = R[active] @ R[active]
    return R


def vector_norm(x, p=2.0):
    """l^p norm of ``x`` (max-abs for ``p = inf``)."""
    p = check_p(p)
    x = np.abs(np.asarray(x))
    if p == math.inf:
        return float(x.max())
    if p == 1.0:
        return float(x.sum())
    if p == 2.0:
        return float(np.sqrt(np.sum(x * x)))
    m = x.max()
    if m == 0:
        return 0.0
    return float(m * np.sum((x / m) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class NormEstimate:
    """Operator-norm value; ``exact`` is False when it is only a lower bound."""

    value: float
    exact: bool

    @property
    def certainty(self):
        return "exact" if self.exact else "lower_bound"

    def __float__(self):
        return self.value


def _exact_operator_norm(A, p):
    if p == 2.0:
        return float(np.linalg.norm(A, 2))
    if p == 1.0:
        return float(np.abs(A).sum(axis=0).max())
    return float(np.abs(A).sum(axis=1).max())


def _dual_direction(v, p):
    """Unit-``q`` vector attaining <w, v> = ||v||_p, with 1/p + 1/q = 1."""
    mag = np.abs(v)
    phase = np.where(mag > 0, v / np.where(mag > 0, mag, 1.0), 0.0)
    nrm = np.array([vector_norm(row, p) for row in v])
    nrm = np.where(nrm > 0, nrm, 1.0)
    return phase * (mag / nrm[:, None]) ** (p - 1.0)


def operator_norm(A, p=2.0, mode="exact", iterations=50, samples=64, seed=0):
    """Induced l^p operator norm.

    ``mode="exact"`` is available for ``p`` in {1, 2, inf}. ``mode="estimate"``
    runs a dual-vector power ascent (Boyd's method) from ``samples`` random
    unit vectors plus the coordinate vectors, and returns the best value seen.
    For ``p`` outside {1, 2, inf} the estimate is tagged as a lower bound.
    """
    A = as_operator(A)
    p = check_p(p)
    exact_ok = p in (1.0, 2.0, math.inf)
    if mode == "exact":
        if not exact_ok:
            raise ValueError(
                f"exact operator norm only available for p in {{1, 2, inf}}, got p={p}"
            )
        return NormEstimate(_exact_operator_norm(A, p), True)
    if mode != "estimate":
        raise ValueError(f"unknown mode {mode!r}; use 'exact' or 'estimate'")
    if exact_ok:
        return NormEstimate(_exact_operator_norm(A, p), True)

    dim = A.shape[0]
    q = p / (p - 1.0) if p > 1.0 else math.inf
    rng = np.random.default_rng(seed)
    starts = rng.standard_normal((samples, dim))
    if np.iscomplexobj(A):
        starts = starts + 1j * rng.standard_normal((samples, dim))
    X = np.concatenate([starts, np.eye(dim, dtype=starts.dtype)])
    X = X / np.array([vector_norm(r, p) for r in X])[:, None]
    AH = A.conj().T
    best = 0.0
    for _ in range(iterations + 1):
        Y = X @ A.T
        vals = np.array([vector_norm(r, p) for r in Y])
        best = max(best, float(vals.max()))
        Z = _dual_direction(Y, p) @ AH.T
        if q == math.inf:
            break
        X = _dual_direction(Z, q)
        X = X / np.array([vector_norm(r, p) for r in X])[:, None]
    return NormEstimate(best, False)
