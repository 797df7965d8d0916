"""Random generators ``L = L0 + B`` with centred, norm-bounded perturbations.

An ensemble bundles the base operator ``L0``, a perturbation law for ``B``,
and the growth constants ``(M, beta, C)``. A :class:`GeneratorStream` turns an
ensemble plus a master seed into a reproducible i.i.d. sequence
``L_1, L_2, ...`` whose element ``i`` depends only on ``(seed, i)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_operator, check_p, expm, operator_norm

__all__ = [
    "Discrete",
    "RademacherDirections",
    "UniformScaled",
    "GeneratorEnsemble",
    "GeneratorStream",
    "MembershipReport",
    "gamma",
    "sample",
    "exact_expected_semigroup",
    "mc_expected_semigroup",
    "check_membership",
    "diagonal_generator",
    "two_point_ensemble",
    "one_point_ensemble",
]

CENTERING_TOL = 1e-12
NORM_SLACK = 1e-9

# samples are drawn in fixed-size blocks, each block from its own sub-seed
_BLOCK = 256


class Discrete:
    """Finite law: ``B = perturbations[j]`` with probability ``weights[j]``."""

    kind = "discrete"

    def __init__(self, weights, perturbations):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D sequence")
        Bs = [as_operator(B, "perturbation") for B in perturbations]
        if len(Bs) != w.size:
            raise ValueError(
                f"weights has {w.size} entries but {len(Bs)} perturbations were given"
            )
        if len({B.shape for B in Bs}) != 1:
            raise ValueError("perturbations must share one shape")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > CENTERING_TOL:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        mean = np.tensordot(w, np.stack(Bs), axes=1)
        if np.max(np.abs(mean)) > CENTERING_TOL:
            raise ValueError(
                "perturbations are not centred: weighted mean has max entry "
                f"{np.max(np.abs(mean)):.3e}"
            )
        self.weights = w
        self.perturbations = np.stack(Bs)

    @property
    def support_size(self):
        return self.weights.size

    def draw(self, rng, size):
        return rng.choice(self.weights.size, size=size, p=self.weights)

    def perturbation(self, draw):
        return self.perturbations[int(draw)]

    def support(self):
        return list(zip(self.weights, self.perturbations))


class RademacherDirections:
    """``B = sum_j eps_j D_j`` with independent fair signs ``eps_j``."""

    kind = "rademacher"

    def __init__(self, directions):
        Ds = [as_operator(D, "direction") for D in directions]
        if not Ds:
            raise ValueError("need at least one direction")
        self.directions = np.stack(Ds)

    def draw(self, rng, size):
        return rng.choice(np.array([-1.0, 1.0]), size=(size, len(self.directions)))

    def perturbation(self, draw):
        return np.tensordot(np.asarray(draw, dtype=float), self.directions, axes=1)

    def to_discrete(self):
        """Enumerate all ``2**k`` sign patterns as an equal-weight law."""
        k = len(self.directions)
        signs = list(itertools.product((-1.0, 1.0), repeat=k))
        Bs = [self.perturbation(s) for s in signs]
        return Discrete(np.full(len(signs), 1.0 / len(signs)), Bs)


class UniformScaled:
    """``B = u D`` with ``u`` uniform on ``[-half_width, half_width]``."""

    kind = "uniform"

    def __init__(self, direction, half_width):
        self.direction = as_operator(direction, "direction")
        if not half_width >= 0:
            raise ValueError("half_width must be non-negative")
        self.half_width = float(half_width)

    def draw(self, rng, size):
        return rng.uniform(-self.half_width, self.half_width, size=size)

    def perturbation(self, draw):
        return float(draw) * self.direction


@dataclass(frozen=True, eq=False)
class GeneratorEnsemble:
    """Law of ``L = L0 + B`` together with the constants ``M``, ``beta``, ``C``.

    ``p`` selects the l^p norm used for every bound on this ensemble.
    """

    L0: np.ndarray
    law: Discrete | RademacherDirections | UniformScaled
    M: float = 1.0
    beta: float = 0.0
    C: float = 0.0
    p: float = 2.0

    def __post_init__(self):
        L0 = as_operator(self.L0, "L0")
        object.__setattr__(self, "L0", L0)
        object.__setattr__(self, "p", check_p(self.p))
        if not self.M >= 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if not self.C >= 0:
            raise ValueError(f"C must be >= 0, got {self.C}")
        shape = _law_shape(self.law)
        if shape != L0.shape:
            raise ValueError(f"law acts on shape {shape} but L0 has shape {L0.shape}")
        worst = max_perturbation_norm(self.law, self.p)
        if worst > self.C + NORM_SLACK:
            raise ValueError(
                f"perturbation norm {worst:.6g} exceeds C={self.C} (p={self.p})"
            )

    @property
    def dim(self):
        return self.L0.shape[0]

    @property
    def gamma(self):
        return gamma(self)

    @property
    def is_discrete(self):
        return isinstance(self.law, Discrete)

    def support(self):
        """``[(weight, L0 + B_j), ...]`` for discrete laws."""
        if not self.is_discrete:
            raise TypeError(
                f"{self.law.kind} law has no finite support table; "
                "use mc_expected_semigroup for expectations"
            )
        return [(w, self.L0 + B) for w, B in self.law.support()]


def _law_shape(law):
    if isinstance(law, Discrete):
        return law.perturbations.shape[1:]
    if isinstance(law, RademacherDirections):
        return law.directions.shape[1:]
    return law.direction.shape


def max_perturbation_norm(law, p, rademacher_enum_limit=12):
    """Largest ``||B||`` over the support (a lower bound when p is not 1, 2 or inf).

    Rademacher laws with more than ``rademacher_enum_limit`` directions fall
    back to the triangle-inequality bound.
    """
    mode = "exact" if p in (1.0, 2.0, math.inf) else "estimate"

    def nrm(B):
        return operator_norm(B, p, mode=mode).value

    if isinstance(law, Discrete):
        return max(nrm(B) for B in law.perturbations)
    if isinstance(law, UniformScaled):
        return law.half_width * nrm(law.direction)
    if len(law.directions) <= rademacher_enum_limit:
        return max(nrm(B) for _, B in law.to_discrete().support())
    return sum(nrm(D) for D in law.directions)


def gamma(e):
    """``max(beta + M*C, 1)``."""
    return max(e.beta + e.M * e.C, 1.0)


class GeneratorStream:
    """Seeded i.i.d. sequence ``L_1, L_2, ...`` (1-based).

    Element ``i`` is a deterministic function of ``(master_seed, i)``: draws
    come in blocks of 256 and block ``b`` uses the sub-seed
    ``SeedSequence([master_seed, b])``. Extending the stream never changes
    elements already read, so products for different ``n`` share one path.
    """

    def __init__(self, ensemble, master_seed):
        self.ensemble = ensemble
        self.master_seed = int(master_seed)
        self._blocks = []

    def __repr__(self):
        return f"GeneratorStream(seed={self.master_seed}, cached={self.cached})"

    @property
    def cached(self):
        return sum(len(b) for b in self._blocks)

    def _block(self, b):
        rng = np.random.default_rng(np.random.SeedSequence([self.master_seed, b]))
        return self.ensemble.law.draw(rng, _BLOCK)

    def prefill(self, n):
        """Make sure draws ``1..n`` are cached."""
        need = -(-int(n) // _BLOCK)
        while len(self._blocks) < need:
            self._blocks.append(self._block(len(self._blocks)))
        return self

    def draw(self, i):
        """Raw draw behind ``L_i``: a support label, sign vector or scalar."""
        if i < 1:
            raise IndexError(f"stream indices start at 1, got {i}")
        self.prefill(i)
        b, r = divmod(i - 1, _BLOCK)
        return self._blocks[b][r]

    def draws(self, n):
        """Draws for ``L_1..L_n`` stacked along the first axis."""
        if n < 1:
            return np.empty((0,))
        self.prefill(n)
        return np.concatenate(self._blocks)[:n]

    def labels(self, n):
        """Support indices of ``L_1..L_n`` for discrete laws."""
        if not self.ensemble.is_discrete:
            raise TypeError("labels are only defined for discrete laws")
        return self.draws(n).astype(int)

    def perturbation(self, i):
        return self.ensemble.law.perturbation(self.draw(i))

    def sample(self, i):
        """``L_i = L0 + B_i``."""
        return self.ensemble.L0 + self.perturbation(i)

    def __getitem__(self, i):
        return self.sample(i)


def sample(stream, i):
    return stream.sample(i)


def exact_expected_semigroup(e, s):
    """``E exp(-L s)`` as the exact finite mixture over a discrete law."""
    if not e.is_discrete:
        raise TypeError(
            f"exact expectation needs a discrete law, got {e.law.kind!r}; "
            "use mc_expected_semigroup instead"
        )
    support = e.support()
    Ls = np.stack([L for _, L in support])
    w = np.array([w for w, _ in support])
    return np.tensordot(w, expm(-Ls, s), axes=1)


@dataclass
class MonteCarloMean:
    mean: np.ndarray
    stderr: np.ndarray
    trials: int


def mc_expected_semigroup(e, s, trials, seed=0):
    """Sample mean of ``exp(-L s)`` with per-entry standard errors."""
    if trials < 2:
        raise ValueError("trials must be >= 2")
    stream = GeneratorStream(e, seed)
    Ls = np.stack([stream.sample(i) for i in range(1, trials + 1)])
    vals = expm(-Ls, s)
    # centre on the first draw so identical draws give an exact mean and zero spread
    dev = vals - vals[0]
    mean = vals[0] + dev.mean(axis=0)
    stderr = dev.std(axis=0, ddof=1) / math.sqrt(trials)
    return MonteCarloMean(mean, stderr, trials)


@dataclass
class MembershipReport:
    centering_ok: bool
    centering_residual: float
    norm_ok: bool
    norm_margin: float  # max ||B|| - C, must be <= 0
    growth_ok: bool
    growth_margin: float  # max over grid of ||exp(-L t)|| - M exp((beta+MC) t)
    times: list = field(default_factory=list)
    norm_exact: bool = True

    @property
    def passed(self):
        return self.centering_ok and self.norm_ok and self.growth_ok


def check_membership(e, times=None, mc_trials=4000, seed=0, tol=1e-9):
    """Check centring, the perturbation bound and the growth bound.

    The ensemble's own constructor already rejects violations, so this is
    mainly useful on ensembles built with :func:`unchecked_ensemble` or to
    read off the margins.
    """
    if times is None:
        times = [0.1 * k for k in range(1, 21)]
    p = e.p
    exact = p in (1.0, 2.0, math.inf)
    mode = "exact" if exact else "estimate"

    if e.is_discrete:
        support = [L - e.L0 for _, L in e.support()]
        w = e.law.weights
        centre = float(np.max(np.abs(np.tensordot(w, np.stack(support), axes=1))))
        centering_ok = centre <= CENTERING_TOL
        Ls = [e.L0 + B for B in support]
    else:
        stream = GeneratorStream(e, seed)
        Bs = np.stack([stream.perturbation(i) for i in range(1, mc_trials + 1)])
        se = Bs.std(axis=0, ddof=1) / math.sqrt(mc_trials)
        centre = float(np.max(np.abs(Bs.mean(axis=0)) - 5 * se))
        centering_ok = centre <= 0
        Ls = [e.L0 + B for B in Bs[:64]]
        support = list(Bs[:64])

    worst = max_perturbation_norm(e.law, p)
    norm_margin = worst - e.C
    growth = -math.inf
    rate = e.beta + e.M * e.C
    for L in Ls:
        for t in times:
            val = operator_norm(expm(-L, t), p, mode=mode).value
            growth = max(growth, val - e.M * math.exp(rate * t))
    return MembershipReport(
        centering_ok=centering_ok,
        centering_residual=centre,
        norm_ok=norm_margin <= tol,
        norm_margin=norm_margin,
        growth_ok=growth <= tol,
        growth_margin=growth,
        times=list(times),
        norm_exact=exact,
    )


def unchecked_ensemble(L0, law, M=1.0, beta=0.0, C=0.0, p=2.0):
    """Build an ensemble without the ``||B|| <= C`` guard, for audits."""
    e = object.__new__(GeneratorEnsemble)
    for k, v in dict(L0=as_operator(L0), law=law, M=M, beta=beta, C=C, p=check_p(p)).items():
        object.__setattr__(e, k, v)
    return e


# --- convenience constructors -------------------------------------------------


def diagonal_generator(dim, scale=1.0):
    """``diag(1, 2, ..., dim) * scale``: a stiff dissipative base operator."""
    return np.diag(scale * np.arange(1, dim + 1, dtype=float))


def two_point_ensemble(L0, B, M=1.0, beta=0.0, C=None, p=2.0):
    """``L0 + B`` and ``L0 - B`` with probability 1/2 each."""
    B = as_operator(B)
    if C is None:
        mode = "exact" if p in (1.0, 2.0, math.inf) else "estimate"
        C = operator_norm(B, p, mode=mode).value
    return GeneratorEnsemble(L0, Discrete([0.5, 0.5], [B, -B]), M=M, beta=beta, C=C, p=p)


def one_point_ensemble(L0, M=1.0, beta=0.0, p=2.0):
    L0 = as_operator(L0)
    return GeneratorEnsemble(
        L0, Discrete([1.0], [np.zeros_like(L0)]), M=M, beta=beta, C=0.0, p=p
    )
