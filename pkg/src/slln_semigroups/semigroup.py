"""Random triangular products, Chernoff approximants and convergence runs.

The random product for ``n`` factors at time ``t`` is
``exp(-L_1 t/n) exp(-L_2 t/n) ... exp(-L_n t/n)`` and its deterministic
counterpart is ``F(t/n)**n`` with ``F(s) = E exp(-L s)``. Both are compared
against ``exp(-L0 t)`` uniformly over a time grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import exact_expected_semigroup
from .linalg import as_vector, expm, operator_norm, vector_norm

__all__ = [
    "TimeGrid",
    "TrajectoryError",
    "ChernoffBias",
    "ChernoffReport",
    "random_product",
    "random_product_action",
    "chernoff_power",
    "chernoff_conditions",
    "slln_experiment",
    "chernoff_bias_experiment",
    "fit_loglog_slope",
    "DEFAULT_N_LIST",
]

DEFAULT_N_LIST = tuple(2**k for k in range(2, 13))


@dataclass(frozen=True)
class TimeGrid:
    T: float
    points: tuple

    def __post_init__(self):
        pts = tuple(float(t) for t in self.points)
        if not pts:
            raise ValueError("time grid is empty")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("time grid must be strictly increasing")
        if pts[0] != 0.0 or pts[-1] != float(self.T) or pts[0] < 0:
            raise ValueError("time grid must start at 0 and end at T")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, T=1.0, num=64):
        if T <= 0:
            raise ValueError("T must be positive")
        if num < 2:
            raise ValueError("a uniform grid needs at least 2 points")
        pts = np.linspace(0.0, T, num)
        pts[-1] = T
        return cls(T, tuple(pts))

    @classmethod
    def single(cls, t=0.0):
        """Degenerate grid ``{t}``; only ``t = 0`` is meaningful as a segment."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "T", float(t))
        object.__setattr__(obj, "points", (float(t),))
        return obj

    def __len__(self):
        return len(self.points)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.points, dtype=dtype)


@dataclass
class TrajectoryError:
    n: int
    times: np.ndarray
    errors: np.ndarray
    seed: int | None = None

    @property
    def sup_error(self):
        return float(self.errors.max())

    @property
    def per_time(self):
        return list(zip(self.times.tolist(), self.errors.tolist()))


def random_product(stream, n, t):
    """Full operator ``exp(-L_1 t/n) ... exp(-L_n t/n)``, index order left to right."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    e = stream.ensemble
    s = t / n
    if e.is_discrete:
        factors = expm(-np.stack([L for _, L in e.support()]), s)
        labels = stream.labels(n)
        out = factors[labels[0]].copy()
        for j in labels[1:]:
            out = out @ factors[j]
        return out
    out = expm(-stream.sample(1), s)
    for i in range(2, n + 1):
        out = out @ expm(-stream.sample(i), s)
    return out


def _step_factors(e, times, n):
    """``exp(-L_j t/n)`` for every support point ``j`` and grid time ``t``."""
    Ls = np.stack([L for _, L in e.support()])
    args = -Ls[:, None] * (np.asarray(times)[None, :, None, None] / n)
    return expm(args)


def random_product_action(stream, n, times, x):
    """Rows ``(exp(-L_1 t/n) ... exp(-L_n t/n)) x`` for each ``t`` in ``times``.

    Works by sequential matrix-vector products, rightmost factor first.
    """
    x = as_vector(x)
    times = np.asarray(times, dtype=float)
    e = stream.ensemble
    dtype = np.result_type(x.dtype, e.L0.dtype)
    X = np.broadcast_to(x.astype(dtype), (times.size, x.size)).copy()[..., None]
    if e.is_discrete:
        factors = _step_factors(e, times, n)
        for j in stream.labels(n)[::-1]:
            X = factors[j] @ X
        return X[..., 0]
    for i in range(n, 0, -1):
        L = stream.sample(i)
        X = expm(-L[None] * (times[:, None, None] / n)) @ X
    return X[..., 0]


def chernoff_power(e, n, t):
    """``F(t/n)**n`` with ``F(s) = E exp(-L s)`` (exact mixture)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.linalg.matrix_power(exact_expected_semigroup(e, t / n), n)


def _norm(A, p):
    mode = "exact" if p in (1.0, 2.0, math.inf) else "estimate"
    return operator_norm(A, p, mode=mode).value


def _vnorms(rows, p):
    return np.array([vector_norm(r, p) for r in rows])


def slln_experiment(stream, x, grid, n_list=DEFAULT_N_LIST):
    """Sup-over-grid error of the random product against ``exp(-L0 t)``.

    The same stream (one sample path) is used for every ``n``.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    x = as_vector(x)
    e = stream.ensemble
    times = np.asarray(grid, dtype=float)
    target = expm(-e.L0[None] * times[:, None, None]) @ x
    stream.prefill(max(n_list))
    out = []
    for n in n_list:
        got = random_product_action(stream, n, times, x)
        out.append(
            TrajectoryError(n, times, _vnorms(got - target, e.p), seed=stream.master_seed)
        )
    return out


def fit_loglog_slope(ns, errors):
    """Least-squares slope and residual norm of ``log(error)`` against ``log(n)``.

    Points with zero error are skipped; returns ``(nan, nan)`` when fewer
    than two remain.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0
    if keep.sum() < 2:
        return math.nan, math.nan
    lx, ly = np.log(ns[keep]), np.log(errors[keep])
    coef, res, *_ = np.polyfit(lx, ly, 1, full=True)
    resid = float(np.sqrt(res[0])) if len(res) else 0.0
    return float(coef[0]), resid


@dataclass
class ChernoffBias:
    n_list: list
    sup_errors: list
    slope: float
    residual: float
    per_n: list = field(default_factory=list)


def chernoff_bias_experiment(e, x, grid, n_list=DEFAULT_N_LIST):
    """Sup-over-grid error of ``F(t/n)**n x`` against ``exp(-L0 t) x``."""
    x = as_vector(x)
    times = np.asarray(grid, dtype=float)
    target = expm(-e.L0[None] * times[:, None, None]) @ x
    sups, per_n = [], []
    for n in n_list:
        F = np.stack([exact_expected_semigroup(e, t / n) for t in times])
        got = _matpow_stack(F, n) @ x
        errs = _vnorms(got - target, e.p)
        per_n.append(TrajectoryError(n, times, errs))
        sups.append(float(errs.max()))
    slope, resid = fit_loglog_slope(n_list, sups)
    return ChernoffBias(list(n_list), sups, slope, resid, per_n)


def _matpow_stack(F, n):
    result = np.broadcast_to(np.eye(F.shape[-1], dtype=F.dtype), F.shape).copy()
    base = F
    while n:
        if n & 1:
            result = result @ base
        n >>= 1
        if n:
            base = base @ base
    return result


@dataclass
class ChernoffReport:
    identity_at_zero: bool  # (a)
    growth_margin: float  # (b): max log||F(t)^n|| - (log K + n a t), must be <= 0
    growth_ok: bool
    derivative_errors: dict  # (c): h -> max_y ||(F(h)y - y)/h + L0 y||
    derivative_ok: bool
    K: float = 1.0
    a: float = 1.0

    @property
    def passed(self):
        return self.identity_at_zero and self.growth_ok and self.derivative_ok


def chernoff_conditions(e, grid, n_max=64, h_list=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5), tol=1e-9):
    """Check the three Chernoff hypotheses for ``F(t) = E exp(-L t)``.

    (a) ``F(0) = I`` exactly; (b) ``||F(t)**n|| <= M exp(n gamma t)`` for
    ``n <= n_max`` on the grid, with K = M and a = gamma; (c) the forward
    difference ``(F(h) y - y)/h`` approaches ``-L0 y`` on the coordinate basis.
    The derivative check passes when the error shrinks along ``h_list``.
    """
    K, a = e.M, e.gamma
    F0 = exact_expected_semigroup(e, 0.0)
    ident = np.eye(e.dim)
    cond_a = bool(np.array_equal(F0, ident))

    margin = -math.inf
    for t in np.asarray(grid, dtype=float):
        if t == 0:
            continue
        F = exact_expected_semigroup(e, t)
        P = ident
        for n in range(1, n_max + 1):
            P = P @ F
            nrm = _norm(P, e.p)
            if nrm > 0:
                margin = max(margin, math.log(nrm) - (math.log(K) + n * a * t))
    cond_b = margin <= tol

    errs = {}
    for h in h_list:
        D = (exact_expected_semigroup(e, h) - ident) / h + e.L0
        errs[h] = float(max(vector_norm(D[:, j], e.p) for j in range(e.dim)))
    vals = [errs[h] for h in h_list]
    cond_c = all(b <= a_ * (1 + 1e-6) or b < 1e-7 for a_, b in zip(vals, vals[1:])) and (
        vals[-1] < max(vals[0], 1e-7)
    )
    return ChernoffReport(cond_a, margin, cond_b, errs, cond_c, K=K, a=a)
