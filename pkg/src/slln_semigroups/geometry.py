"""Probes of smoothness for l^p coordinate spaces.

Two diagnostics: one-sided difference quotients of the norm (the
uniform-smoothness limit) and sampled values of the p-smooth ratio
``K(x, y) = (||x+y||^p + ||x-y||^p - 2||x||^p) / ||y||^p``. Sampled maxima are
lower bounds on the true constant, never certificates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_vector, check_p, vector_norm

DEFAULT_H_LIST = tuple(10.0**-k for k in range(1, 9))


@dataclass
class QuotientRow:
    h: float
    forward: float  # (||x + h y|| - ||x||) / h
    backward: float  # (||x - h y|| - ||x||) / (-h)

    @property
    def gap(self):
        return abs(self.forward - self.backward)


def smoothness_limit_probe(x, y, p, h_list=DEFAULT_H_LIST):
    """One-sided difference quotients of ``t -> ||x + t y||_p`` at ``t = 0``.

    ``x`` and ``y`` must be unit vectors. A gap between the forward and
    backward quotient that does not shrink with ``h`` signals a corner
    of the unit ball (``p = 1`` or ``p = inf``).
    """
    p = check_p(p)
    x, y = as_vector(x), as_vector(y)
    for name, v in (("x", x), ("y", y)):
        if abs(vector_norm(v, p) - 1.0) > 1e-12:
            raise ValueError(f"{name} must lie on the unit sphere of l^{p}")
    rows = []
    for h in h_list:
        fwd = (vector_norm(x + h * y, p) - 1.0) / h
        bwd = (vector_norm(x - h * y, p) - 1.0) / (-h)
        rows.append(QuotientRow(h, fwd, bwd))
    return rows


def _pnorm_p(v, p):
    """``||v||_p ** p`` along the last axis, without taking a root."""
    return np.sum(np.abs(v) ** p, axis=-1)


def smooth_ratio(x, y, p):
    """``K(x, y)``; vectorised over leading axes."""
    x, y = np.asarray(x), np.asarray(y)
    return (_pnorm_p(x + y, p) + _pnorm_p(x - y, p) - 2 * _pnorm_p(x, p)) / _pnorm_p(y, p)


@dataclass
class SmoothnessProbe:
    p: float
    dim: int
    values: np.ndarray  # K for random samples, in draw order
    adversarial: dict  # name -> K
    histogram: tuple  # (counts, bin_edges)

    @property
    def max_K(self):
        return float(max(self.values.max(), max(self.adversarial.values())))


def p_smooth_inequality_probe(p, dim, samples, seed=0, bins=20):
    """Sample ``K(x, y)`` for Gaussian ``x, y`` plus a few structured pairs.

    The structured pairs are ``y = x``, disjointly supported ``x`` and ``y``
    (orthogonal), and ``y = c x`` for ``c`` in {1/4, 1/2, 2, 4}.
    """
    p = check_p(p)
    if not 1 < p <= 2:
        raise ValueError(f"p-smoothness needs p in (1, 2], got {p}")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, dim))
    Y = rng.standard_normal((samples, dim))
    values = smooth_ratio(X, Y, p)

    x = rng.standard_normal(dim)
    adv = {"y=x": float(smooth_ratio(x, x, p))}
    half = dim // 2
    xo = np.zeros(dim)
    yo = np.zeros(dim)
    xo[:half] = x[:half]
    yo[half:] = x[half:]
    adv["orthogonal"] = float(smooth_ratio(xo, yo, p))
    for c in (0.25, 0.5, 2.0, 4.0):
        adv[f"y={c}x"] = float(smooth_ratio(x, c * x, p))
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 1e-9 * max(1.0, abs(hi)):
        # degenerate spread (p = 2 gives K = 2 up to rounding)
        lo, hi = lo - 0.5, hi + 0.5
    hist = np.histogram(values, bins=bins, range=(lo, hi))
    return SmoothnessProbe(p, dim, values, adv, hist)


def running_max(values):
    """Max of ``K`` over the first ``m`` samples, for every ``m``."""
    return np.maximum.accumulate(np.asarray(values))


def exact_power_ratio(p, c):
    """``K(x, c x) = (|1+c|^p + |1-c|^p - 2) / |c|^p`` for any non-zero ``x``."""
    return (abs(1 + c) ** p + abs(1 - c) ** p - 2) / abs(c) ** p


def unit(v, p):
    v = as_vector(v)
    n = vector_norm(v, p)
    if n == 0 or not math.isfinite(n):
        raise ValueError("cannot normalise a zero vector")
    return v / n
