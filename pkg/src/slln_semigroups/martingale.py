"""Martingale decomposition of the centred random product, and its audits.

With ``F(s) = E exp(-L s)`` and ``Delta_i(s) = exp(-L_i s) - F(s)`` the
product ``prod_i exp(-L_i s)`` expands over subsets ``P`` of ``[n]`` into
terms ``F_{n,P}(s)`` carrying ``Delta_i`` at the positions in ``P`` and ``F``
elsewhere. Grouping the non-empty terms by ``max P = k`` gives the martingale
increments ``d_{n,k}(t)`` (evaluated at ``s = t/n``) whose sum is
``mu_n(t) = (prod_i exp(-L_i t/n) - F(t/n)**n) x``.

Everything expectation-bearing uses exact finite mixtures, so only discrete
ensembles are accepted.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ensemble import exact_expected_semigroup
from .linalg import as_vector, expm, operator_norm, vector_norm
from .semigroup import fit_loglog_slope

__all__ = [
    "IndexSet",
    "DecompositionTerm",
    "delta",
    "f_term",
    "decomposition_identity_check",
    "increment",
    "increments",
    "martingale_property_check",
    "term_bound",
    "term_bound_check",
    "increment_bound",
    "increment_bound_check",
    "BoundRow",
    "BoundReport",
    "burkholder_exponent",
    "burkholder_probe",
    "tail_probe",
    "tune_epsilon",
    "sample_martingale",
    "MAX_ENUMERATION_N",
]

MAX_ENUMERATION_N = 12
MAX_FACTORED_N = 24
MAX_PROPERTY_N = 8
MAX_PROPERTY_SUPPORT = 8


@dataclass(frozen=True)
class IndexSet:
    """Sorted subset ``P`` of ``{1, ..., n}``."""

    n: int
    P: tuple = ()

    def __post_init__(self):
        P = tuple(sorted(int(i) for i in self.P))
        if len(set(P)) != len(P):
            raise ValueError(f"index set has repeated entries: {self.P}")
        if P and (P[0] < 1 or P[-1] > self.n):
            raise ValueError(f"indices must lie in [1, {self.n}], got {P}")
        object.__setattr__(self, "P", P)

    @property
    def k(self):
        return len(self.P)

    def __iter__(self):
        return iter(self.P)

    def __len__(self):
        return len(self.P)


def term_bound(gamma, n, k, s):
    """``(2 gamma s)**k * exp(n gamma s)``."""
    return (2.0 * gamma * s) ** k * math.exp(n * gamma * s)


def increment_bound(gamma, n, t, x_norm=1.0):
    """``(2 gamma t / n) * exp(3 gamma t) * ||x||``."""
    return 2.0 * gamma * t / n * math.exp(3.0 * gamma * t) * x_norm


@dataclass
class DecompositionTerm:
    index_set: IndexSet
    s: float
    value: np.ndarray
    bound: float


def _norm(A, p):
    mode = "exact" if p in (1.0, 2.0, math.inf) else "estimate"
    return operator_norm(A, p, mode=mode).value


def _require_discrete(e):
    if not e.is_discrete:
        raise TypeError(
            f"martingale quantities need exact expectations; {e.law.kind!r} law is not discrete"
        )


def _support_exps(e, s):
    return expm(-np.stack([L for _, L in e.support()]), s)


def delta(stream, i, s):
    """``exp(-L_i s) - E exp(-L s)``."""
    e = stream.ensemble
    _require_discrete(e)
    return expm(-stream.sample(i), s) - exact_expected_semigroup(e, s)


def _interleave(exps, mean, positions, n, left=None):
    """Product over positions ``1..n``: ``exps[i] - mean`` on ``positions``, ``mean`` elsewhere."""
    dim = mean.shape[0]
    out = np.eye(dim, dtype=mean.dtype) if left is None else left
    for i in range(1, n + 1):
        factor = exps[i - 1] - mean if i in positions else mean
        out = out @ factor
    return out


def f_term(stream, P, s):
    """``F_{n,P}(s)`` together with its bound ``(2 gamma s)^k exp(n gamma s)``."""
    e = stream.ensemble
    _require_discrete(e)
    if not isinstance(P, IndexSet):
        raise TypeError("P must be an IndexSet")
    n = P.n
    mean = exact_expected_semigroup(e, s)
    exps = [expm(-stream.sample(i), s) if i in P.P else None for i in range(1, n + 1)]
    value = _interleave(exps, mean, set(P.P), n)
    return DecompositionTerm(P, s, value, term_bound(e.gamma, n, P.k, s))


def decomposition_identity_check(stream, n, s):
    """``|| prod_i exp(-L_i s) - sum_{P subset [n]} F_{n,P}(s) ||`` by brute force."""
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"subset enumeration limited to n <= {MAX_ENUMERATION_N}, got {n}")
    if n < 1:
        raise ValueError("n must be >= 1")
    e = stream.ensemble
    _require_discrete(e)
    mean = exact_expected_semigroup(e, s)
    exps = [expm(-stream.sample(i), s) for i in range(1, n + 1)]
    direct = exps[0]
    for E in exps[1:]:
        direct = direct @ E
    total = np.zeros_like(direct)
    for k in range(n + 1):
        for P in itertools.combinations(range(1, n + 1), k):
            total = total + _interleave(exps, mean, set(P), n)
    return _norm(direct - total, e.p)


# --- increments --------------------------------------------------------------


def _increment_enumerate(exps, mean, n, k, x):
    """Sum of ``F_{n,P}`` over ``P`` with ``max P = k``, term by term."""
    total = None
    for j in range(k):
        for rest in itertools.combinations(range(1, k), j):
            term = _interleave(exps, mean, set(rest) | {k}, n)
            total = term if total is None else total + term
    return total if x is None else total @ x


def _increment_factored(exps, mean, n, k, x):
    """``exp(-L_1 s) ... exp(-L_{k-1} s) Delta_k(s) F(s)^{n-k} x``."""
    tail = np.linalg.matrix_power(mean, n - k)
    v = tail if x is None else tail @ x
    v = (exps[k - 1] - mean) @ v
    for i in range(k - 1, 0, -1):
        v = exps[i - 1] @ v
    return v


def increment(stream, n, k, t, x=None, method="factored"):
    """Martingale increment ``d_{n,k}(t)`` applied to ``x``.

    ``method="factored"`` uses O(k) products and works up to n = 24;
    ``method="enumerate"`` sums the ``2**(k-1)`` subset terms directly
    (n <= 12). With ``x=None`` the operator itself is returned.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    e = stream.ensemble
    _require_discrete(e)
    s = t / n
    if x is not None:
        x = as_vector(x)
    mean = exact_expected_semigroup(e, s)
    exps = [expm(-stream.sample(i), s) for i in range(1, k + 1)]
    if method == "factored":
        if n > MAX_FACTORED_N:
            raise ValueError(f"factored increment limited to n <= {MAX_FACTORED_N}")
        return _increment_factored(exps, mean, n, k, x)
    if method == "enumerate":
        if n > MAX_ENUMERATION_N:
            raise ValueError(f"enumerated increment limited to n <= {MAX_ENUMERATION_N}")
        return _increment_enumerate(exps, mean, n, k, x)
    raise ValueError(f"unknown method {method!r}")


def increments(stream, n, t, x):
    """All increments ``d_{n,1..n}(t) x`` for one path, as rows of an array.

    Uses running prefix products, so any ``n`` is fine.
    """
    x = as_vector(x)
    e = stream.ensemble
    _require_discrete(e)
    s = t / n
    mean = exact_expected_semigroup(e, s)
    E = _support_exps(e, s)
    labels = stream.labels(n)
    tails = _mean_tails(mean, x, n)
    out = np.empty((n, x.size), dtype=np.result_type(mean.dtype, x.dtype))
    prefix = np.eye(e.dim, dtype=mean.dtype)
    for k in range(1, n + 1):
        j = labels[k - 1]
        out[k - 1] = prefix @ ((E[j] - mean) @ tails[k - 1])
        prefix = prefix @ E[j]
    return out


def _mean_tails(mean, x, n):
    """Rows ``F^{n-k} x`` for ``k = 1..n``."""
    tails = np.empty((n, x.size), dtype=np.result_type(mean.dtype, x.dtype))
    v = x
    for k in range(n, 0, -1):
        tails[k - 1] = v
        v = mean @ v
    return tails


def martingale_property_check(e, n, k, t, x=None):
    """Largest ``|| E[d_{n,k}(t) | L_1..L_{k-1}] ||`` over all conditioning outcomes.

    Enumerates every outcome of ``L_1..L_{k-1}`` over the support, averages
    the directly enumerated increment over the support of ``L_k`` with the
    law's weights, and returns the worst norm (operator norm if ``x`` is
    ``None``).
    """
    _require_discrete(e)
    J = e.law.support_size
    if J > MAX_PROPERTY_SUPPORT:
        raise ValueError(f"support size {J} exceeds {MAX_PROPERTY_SUPPORT}")
    if not 1 <= k <= n <= MAX_PROPERTY_N:
        raise ValueError(f"need 1 <= k <= n <= {MAX_PROPERTY_N}, got k={k}, n={n}")
    if x is not None:
        x = as_vector(x)
    s = t / n
    mean = exact_expected_semigroup(e, s)
    E = _support_exps(e, s)
    w = e.law.weights
    worst = 0.0
    for history in itertools.product(range(J), repeat=k - 1):
        cond = None
        for j in range(J):
            exps = [E[h] for h in history] + [E[j]]
            d = _increment_enumerate(exps, mean, n, k, x)
            cond = w[j] * d if cond is None else cond + w[j] * d
        val = vector_norm(cond, e.p) if x is not None else _norm(cond, e.p)
        worst = max(worst, val)
    return worst


# --- bound audits ------------------------------------------------------------


@dataclass
class BoundRow:
    check: str
    n: int
    k: int
    s: float
    lhs: float
    bound: float
    asserted: bool

    @property
    def margin(self):
        return self.lhs - self.bound

    @property
    def violated(self):
        return self.margin > 1e-12 * max(1.0, self.bound)

    def as_dict(self):
        d = asdict(self)
        d["margin"] = self.margin
        d["violated"] = self.violated
        return d


@dataclass
class BoundReport:
    rows: list = field(default_factory=list)

    @property
    def violations(self):
        return [r for r in self.rows if r.asserted and r.violated]

    @property
    def logged_violations(self):
        """Violations on rows that are recorded but not asserted."""
        return [r for r in self.rows if not r.asserted and r.violated]

    @property
    def passed(self):
        return not self.violations

    def worst(self, check=None):
        rows = [r for r in self.rows if check is None or r.check == check]
        return max(rows, key=lambda r: r.margin) if rows else None

    def extend(self, other):
        self.rows.extend(other.rows)
        return self


def term_bound_check(stream, cases):
    """Audit the term bound and its two ingredients on ``cases = [(n, P, s), ...]``.

    Rows produced per case:

    * ``term``: ``||F_{n,P}(s)|| <= (2 gamma s)^k e^{n gamma s}``; asserted
      only when ``M == 1``, otherwise recorded as data.
    * ``mean-norm``: ``||E e^{-Ls}|| <= M e^{gamma s}``; always asserted.
    * ``delta-norm``: ``||Delta_i(s)|| <= 2 gamma s e^{gamma s}`` for each
      ``i`` in ``P``; asserted when ``M == 1``.
    * ``mean-value``: ``||e^{-L_i s} - I|| <= gamma s e^{gamma s}``; recorded
      only, since it fails for stiff ``L0``.
    """
    e = stream.ensemble
    _require_discrete(e)
    g = e.gamma
    strict = e.M == 1
    report = BoundReport()
    ident = np.eye(e.dim)
    for n, P, s in cases:
        if not isinstance(P, IndexSet):
            P = IndexSet(n, tuple(P))
        term = f_term(stream, P, s)
        report.rows.append(BoundRow("term", n, P.k, s, _norm(term.value, e.p), term.bound, strict))
        mean = exact_expected_semigroup(e, s)
        report.rows.append(
            BoundRow("mean-norm", n, P.k, s, _norm(mean, e.p), e.M * math.exp(g * s), True)
        )
        for i in P:
            Ei = expm(-stream.sample(i), s)
            report.rows.append(
                BoundRow("delta-norm", n, P.k, s, _norm(Ei - mean, e.p),
                         2 * g * s * math.exp(g * s), strict)
            )
            report.rows.append(
                BoundRow("mean-value", n, P.k, s, _norm(Ei - ident, e.p),
                         g * s * math.exp(g * s), False)
            )
    return report


def increment_bound_check(stream, n, k, t, x):
    """``||d_{n,k}(t) x|| - (2 gamma t/n) e^{3 gamma t} ||x||``; should be <= 0."""
    e = stream.ensemble
    x = as_vector(x)
    d = increment(stream, n, k, t, x)
    return vector_norm(d, e.p) - increment_bound(e.gamma, n, t, vector_norm(x, e.p))


def increment_bound_row(stream, n, k, t, x):
    e = stream.ensemble
    x = as_vector(x)
    lhs = vector_norm(increment(stream, n, k, t, x), e.p)
    return BoundRow("increment", n, k, t, lhs,
                    increment_bound(e.gamma, n, t, vector_norm(x, e.p)), e.M == 1)


# --- Monte Carlo probes ------------------------------------------------------


def burkholder_exponent(p):
    """Moment exponent ``r = 2p/(p-1)`` paired with smoothness exponent ``p``."""
    if not 1 < p <= 2:
        raise ValueError(f"smoothness exponent must lie in (1, 2], got {p}")
    return 2.0 * p / (p - 1.0)


@dataclass
class MartingaleSample:
    """Monte Carlo draws of ``mu_n(t)`` and its increments for one ``n``."""

    n: int
    mu: np.ndarray  # (trials, dim)
    increment_norms: np.ndarray  # (trials, n)


def sample_martingale(e, x, t, n, trials, seed=0, batch=4096):
    """Draw ``trials`` independent paths and return ``mu_n(t)`` and ``||d_{n,k}||``.

    Every path uses a fresh i.i.d. sequence; increments use the factored form
    with running prefix products, vectorised over paths.
    """
    _require_discrete(e)
    x = as_vector(x)
    s = t / n
    mean = exact_expected_semigroup(e, s)
    E = _support_exps(e, s)
    tails = _mean_tails(mean, x, n)
    # W[j, k-1] = Delta^{(j)} F^{n-k} x
    W = np.einsum("jab,kb->jka", E - mean[None], tails)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(n)]))
    labels = e.law.draw(rng, trials * n).reshape(trials, n).astype(int)
    dtype = np.result_type(mean.dtype, x.dtype)
    mu = np.zeros((trials, x.size), dtype=dtype)
    dn = np.zeros((trials, n))
    for lo in range(0, trials, batch):
        lab = labels[lo:lo + batch]
        m = lab.shape[0]
        prefix = np.broadcast_to(np.eye(e.dim, dtype=dtype), (m, e.dim, e.dim)).copy()
        acc = np.zeros((m, x.size), dtype=dtype)
        for k in range(n):
            d = np.einsum("mab,mb->ma", prefix, W[lab[:, k], k])
            acc += d
            dn[lo:lo + m, k] = _row_norms(d, e.p)
            prefix = prefix @ E[lab[:, k]]
        mu[lo:lo + m] = acc
    return MartingaleSample(n, mu, dn)


def _row_norms(rows, p):
    if p == 2.0:
        return np.sqrt(np.sum(np.abs(rows) ** 2, axis=-1))
    return np.array([vector_norm(r, p) for r in rows])


@dataclass
class BurkholderRow:
    n: int
    r: float
    lhs: float
    rhs: float

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else math.nan


def burkholder_probe(e, x, t, n_list, trials, p=2.0, seed=0):
    """Estimate both sides of the moment inequality ``E||mu_n||^r`` vs
    ``E(sum_k ||d_k||^p)^(r/p)`` for each ``n``, with ``r = 2p/(p-1)``.

    Only boundedness of the ratio across ``n`` is meaningful.
    """
    r = burkholder_exponent(p)
    rows = []
    for n in n_list:
        ms = sample_martingale(e, x, t, n, trials, seed)
        lhs = float(np.mean(_row_norms(ms.mu, e.p) ** r))
        rhs = float(np.mean(np.sum(ms.increment_norms**p, axis=1) ** (r / p)))
        rows.append(BurkholderRow(n, r, lhs, rhs))
    return rows


@dataclass
class TailRow:
    n: int
    frequency: float
    bound: float
    trials: int


@dataclass
class TailResult:
    rows: list
    epsilon: float
    slope: float
    residual: float


def markov_tail_bound(gamma, t, n, eps, x_norm, p=2.0):
    """``(||x||/eps)^r n^{-2} (2 gamma t)^r e^{3 r gamma t}`` (no Burkholder constant)."""
    r = burkholder_exponent(p)
    return (x_norm / eps) ** r / n**2 * (2 * gamma * t) ** r * math.exp(3 * r * gamma * t)


def tail_probe(e, x, t, n_list, eps, trials, seed=0, p=2.0):
    """Empirical ``P{||mu_n(t)|| > eps}`` per ``n`` and its log-log slope."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = as_vector(x)
    xn = vector_norm(x, e.p)
    rows = []
    for n in n_list:
        ms = sample_martingale(e, x, t, n, trials, seed)
        freq = float(np.mean(_row_norms(ms.mu, e.p) > eps))
        rows.append(TailRow(n, freq, markov_tail_bound(e.gamma, t, n, eps, xn, p), trials))
    slope, resid = fit_loglog_slope([r.n for r in rows], [r.frequency for r in rows])
    return TailResult(rows, eps, slope, resid)


def tune_epsilon(e, x, t, n, target=0.1, trials=2000, seed=12345):
    """Threshold whose exceedance frequency at ``n`` is about ``target``.

    Uses its own pilot draws (seed distinct from the probe's by default).
    """
    ms = sample_martingale(e, x, t, n, trials, seed)
    return float(np.quantile(_row_norms(ms.mu, e.p), 1.0 - target))


def mu_norm_ceiling(e, n, t, x):
    """Almost-sure ceiling ``2 M^n e^{gamma t} ||x||`` on ``||mu_n(t)||``."""
    return 2 * e.M**n * math.exp(e.gamma * t) * vector_norm(as_vector(x), e.p)
