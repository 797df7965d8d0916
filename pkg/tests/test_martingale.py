import math

import numpy as np
import pytest

from slln_semigroups import martingale as mg
from slln_semigroups.ensemble import (
    Discrete,
    GeneratorEnsemble,
    GeneratorStream,
    exact_expected_semigroup,
    one_point_ensemble,
)
from slln_semigroups.linalg import expm
from slln_semigroups.semigroup import chernoff_power, random_product

from factories import random_discrete_ensemble
from oracles import all_subsets


@pytest.fixture
def stream(two_point):
    return GeneratorStream(two_point, 17)


class TestDelta:
    def test_one_point_zero(self):
        s = GeneratorStream(one_point_ensemble(np.diag([1.0, 2.0])), 0)
        assert not np.any(mg.delta(s, 3, 0.5))

    def test_zero_time(self, stream):
        assert not np.any(mg.delta(stream, 1, 0.0))

    def test_weighted_sum_vanishes(self, rng):
        e = random_discrete_ensemble(rng, dim=4, size=3, C=0.9)
        for s in (0.1, 0.5, 1.0):
            mean = exact_expected_semigroup(e, s)
            total = sum(w * (expm(-L, s) - mean) for w, L in e.support())
            assert np.abs(total).max() <= 1e-12


class TestFTerm:
    def test_empty_set(self, stream, two_point):
        term = mg.f_term(stream, mg.IndexSet(5, ()), 0.3)
        want = np.linalg.matrix_power(exact_expected_semigroup(two_point, 0.3), 5)
        np.testing.assert_allclose(term.value, want, atol=1e-15)
        assert term.bound == pytest.approx(math.exp(5 * two_point.gamma * 0.3))

    def test_single(self, stream):
        term = mg.f_term(stream, mg.IndexSet(1, (1,)), 0.4)
        np.testing.assert_array_equal(term.value, mg.delta(stream, 1, 0.4))

    def test_middle_position(self, stream, two_point):
        s = 0.25
        F = exact_expected_semigroup(two_point, s)
        want = F @ mg.delta(stream, 2, s) @ F
        np.testing.assert_allclose(mg.f_term(stream, mg.IndexSet(3, (2,)), s).value, want, atol=1e-15)

    def test_index_set_validation(self):
        with pytest.raises(ValueError):
            mg.IndexSet(3, (0, 2))
        with pytest.raises(ValueError):
            mg.IndexSet(3, (1, 1))
        assert mg.IndexSet(5, (4, 1)).P == (1, 4)


class TestDecomposition:
    def test_n1_exact(self, stream):
        assert mg.decomposition_identity_check(stream, 1, 0.7) <= 1e-15

    def test_zero_time(self, stream):
        assert mg.decomposition_identity_check(stream, 4, 0.0) == 0.0

    def test_random_n3(self, rng):
        e = random_discrete_ensemble(rng, dim=5, size=3, C=0.7)
        assert mg.decomposition_identity_check(GeneratorStream(e, 1), 3, 0.3) <= 1e-10

    def test_too_large(self, stream):
        with pytest.raises(ValueError):
            mg.decomposition_identity_check(stream, 13, 0.1)

    def test_sum_of_terms_counts(self, stream):
        # oracle: 2^n subsets, each a product of n factors
        assert sum(1 for _ in all_subsets(6)) == 64


class TestIncrement:
    def test_first_increment(self, stream, two_point, rng):
        n, t = 5, 0.9
        x = rng.standard_normal(4)
        F = exact_expected_semigroup(two_point, t / n)
        want = mg.delta(stream, 1, t / n) @ np.linalg.matrix_power(F, n - 1) @ x
        np.testing.assert_allclose(mg.increment(stream, n, 1, t, x), want, atol=1e-15)

    def test_one_point_zero(self):
        s = GeneratorStream(one_point_ensemble(np.diag([1.0, 3.0])), 0)
        for k in range(1, 5):
            assert not np.any(mg.increment(s, 4, k, 1.0, np.ones(2)))

    def test_strategies_agree(self, stream, rng):
        x = rng.standard_normal(4)
        for k in range(1, 7):
            a = mg.increment(stream, 6, k, 1.0, x, "factored")
            b = mg.increment(stream, 6, k, 1.0, x, "enumerate")
            assert np.abs(a - b).max() <= 1e-11

    def test_operator_form(self, stream):
        a = mg.increment(stream, 4, 3, 0.5, None, "factored")
        b = mg.increment(stream, 4, 3, 0.5, None, "enumerate")
        np.testing.assert_allclose(a, b, atol=1e-13)

    def test_all_increments_match_single(self, stream, rng):
        x = rng.standard_normal(4)
        rows = mg.increments(stream, 10, 0.8, x)
        for k in range(1, 11):
            np.testing.assert_allclose(rows[k - 1], mg.increment(stream, 10, k, 0.8, x), atol=1e-14)

    def test_reconstruction(self, two_point, rng):
        x = rng.standard_normal(4)
        for n in (3, 12, 200):
            s = GeneratorStream(two_point, n)
            mu = mg.increments(s, n, 1.0, x).sum(axis=0)
            direct = random_product(s, n, 1.0) @ x - chernoff_power(two_point, n, 1.0) @ x
            assert np.linalg.norm(mu - direct) <= 1e-9

    def test_limits(self, stream):
        with pytest.raises(ValueError):
            mg.increment(stream, 30, 2, 1.0)
        with pytest.raises(ValueError):
            mg.increment(stream, 13, 2, 1.0, method="enumerate")
        with pytest.raises(ValueError):
            mg.increment(stream, 3, 4, 1.0)


class TestMartingaleProperty:
    def test_one_point(self):
        e = one_point_ensemble(np.diag([1.0, 2.0]))
        assert mg.martingale_property_check(e, 4, 3, 1.0) == 0.0

    def test_n3_k2_enumerated(self, two_point):
        # oracle: average the increment over L_2 for each outcome of L_1 by hand
        n, k, t = 3, 2, 1.0
        s = t / n
        E = [expm(-L, s) for _, L in two_point.support()]
        F = exact_expected_semigroup(two_point, s)
        for h in range(2):
            cond = sum(0.5 * ((E[h] - F) @ (E[j] - F) @ F + F @ (E[j] - F) @ F) for j in range(2))
            assert np.abs(cond).max() <= 1e-12
        assert mg.martingale_property_check(two_point, n, k, t) <= 1e-12

    def test_first_increment_mean_zero(self, two_point):
        assert mg.martingale_property_check(two_point, 5, 1, 0.7, np.ones(4)) <= 1e-12

    def test_not_trivially_zero(self, two_point):
        # without averaging over L_k the increment itself is far from zero
        s = GeneratorStream(two_point, 0)
        assert np.linalg.norm(mg.increment(s, 3, 2, 1.0, None), 2) > 1e-3

    def test_support_limit(self):
        Bs = [np.diag([c, -c]) for c in np.linspace(-0.4, 0.4, 9)]
        e = GeneratorEnsemble(np.eye(2), Discrete(np.full(9, 1 / 9), Bs), C=0.4)
        with pytest.raises(ValueError):
            mg.martingale_property_check(e, 2, 1, 1.0)


class TestBounds:
    def test_empty_set_bound(self, stream):
        rep = mg.term_bound_check(stream, [(n, (), 0.5) for n in (1, 4, 8)])
        rows = [r for r in rep.rows if r.check == "term"]
        assert all(r.margin <= 0 for r in rows)
        assert rep.passed

    def test_zero_time(self, stream):
        rep = mg.term_bound_check(stream, [(4, (1, 3), 0.0)])
        row = [r for r in rep.rows if r.check == "term"][0]
        assert row.lhs == 0.0 and row.bound == 0.0 and row.margin == 0.0

    def test_randomised_audit(self, rng):
        violations = 0
        for trial in range(100):
            e = random_discrete_ensemble(rng, dim=int(rng.integers(2, 6)),
                                         size=int(rng.integers(2, 4)), C=float(rng.uniform(0.1, 2)))
            s = GeneratorStream(e, trial)
            n = int(rng.integers(1, 9))
            P = tuple(sorted(rng.choice(np.arange(1, n + 1), size=int(rng.integers(0, n + 1)),
                                        replace=False).tolist()))
            rep = mg.term_bound_check(s, [(n, P, float(rng.uniform(1e-3, 1)))])
            violations += len(rep.violations)
        assert violations == 0

    def test_m_above_one_is_logged_not_asserted(self):
        B = np.diag([0.1, -0.1])
        e = GeneratorEnsemble(np.diag([1.0, 2.0]), Discrete([0.5, 0.5], [B, -B]), M=2.0, C=0.1)
        rep = mg.term_bound_check(GeneratorStream(e, 0), [(3, (1,), 0.5)])
        assert not any(r.asserted for r in rep.rows if r.check == "term")

    def test_mean_value_intermediate_fails_for_stiff_base(self):
        # ||exp(-L0 s) - I|| ~ s ||L0|| exceeds gamma s e^{gamma s} once ||L0|| > gamma
        e = one_point_ensemble(np.diag([1.0, 8.0]))
        rep = mg.term_bound_check(GeneratorStream(e, 0), [(1, (1,), 0.01)])
        mv = [r for r in rep.rows if r.check == "mean-value"][0]
        assert mv.violated and not mv.asserted
        assert rep.passed

    def test_increment_bound(self, rng):
        for n in (4, 8, 16):
            e = random_discrete_ensemble(rng, dim=4, size=2, C=0.8)
            s = GeneratorStream(e, n)
            x = rng.standard_normal(4)
            assert mg.increment_bound_check(s, n, n // 2, 1.0, x) <= 0

    def test_increment_bound_trivial(self):
        e = one_point_ensemble(np.diag([1.0, 2.0]))
        s = GeneratorStream(e, 0)
        assert mg.increment_bound_check(s, 4, 2, 1.0, np.ones(2)) < 0
        assert mg.increment_bound_check(s, 4, 2, 0.0, np.ones(2)) == 0.0

    def test_bound_formulas(self):
        assert mg.term_bound(1.5, 4, 2, 0.2) == pytest.approx(0.6**2 * math.exp(1.2))
        g, n, t = 2.0, 10, 0.5
        assert mg.increment_bound(g, n, t) == pytest.approx(0.2 * math.exp(3.0))
        # the closed-form sum over subset sizes is dominated by the increment bound
        for k in range(1, n + 1):
            total = sum(math.comb(k - 1, j - 1) * (2 * g * t / n) ** j * math.exp(g * t)
                        for j in range(1, k + 1))
            assert total == pytest.approx(2 * g * t / n * math.exp(g * t) * (1 + 2 * g * t / n) ** (k - 1))
            assert total <= mg.increment_bound(g, n, t)


class TestProbes:
    def test_exponent(self):
        assert mg.burkholder_exponent(2.0) == 4.0
        assert mg.burkholder_exponent(1.5) == pytest.approx(6.0)
        with pytest.raises(ValueError):
            mg.burkholder_exponent(2.5)

    def test_one_point_vanishes(self):
        e = one_point_ensemble(np.diag([1.0, 2.0]))
        rows = mg.burkholder_probe(e, np.ones(2), 1.0, [4, 8], trials=20)
        assert all(r.lhs == 0.0 and r.rhs == 0.0 for r in rows)
        tail = mg.tail_probe(e, np.ones(2), 1.0, [4, 8], eps=1e-6, trials=1000)
        assert all(r.frequency == 0.0 for r in tail.rows)

    def test_sampled_mu_matches_direct(self, two_point, rng):
        # vectorised sampler agrees with per-path reconstruction
        x = rng.standard_normal(4)
        ms = mg.sample_martingale(two_point, x, 1.0, 16, trials=5, seed=3)
        for row in ms.mu:
            assert np.isfinite(row).all()
        rng2 = np.random.default_rng(np.random.SeedSequence([3, 16]))
        labels = two_point.law.draw(rng2, 5 * 16).reshape(5, 16)
        E = [expm(-L, 1.0 / 16) for _, L in two_point.support()]
        F = exact_expected_semigroup(two_point, 1.0 / 16)
        for lab, mu in zip(labels, ms.mu):
            P = np.eye(4)
            for j in lab:
                P = P @ E[j]
            np.testing.assert_allclose(mu, P @ x - np.linalg.matrix_power(F, 16) @ x, atol=1e-12)

    def test_hilbert_second_moment_identity(self, two_point):
        # orthogonal increments: E||mu||^2 = E sum ||d_k||^2 in l^2
        ms = mg.sample_martingale(two_point, np.ones(4), 1.0, 16, trials=20000, seed=1)
        lhs = np.mean(np.sum(ms.mu**2, axis=1))
        rhs = np.mean(np.sum(ms.increment_norms**2, axis=1))
        assert lhs == pytest.approx(rhs, rel=0.05)

    def test_burkholder_bounded(self, two_point):
        rows = mg.burkholder_probe(two_point, np.ones(4) / 2, 1.0, [8, 32, 128], trials=1000, seed=5)
        ratios = [r.ratio for r in rows]
        assert max(ratios) / min(ratios) <= 10

    def test_tail_impossible_threshold(self, two_point):
        x = np.ones(4)
        eps = mg.mu_norm_ceiling(two_point, 8, 1.0, x)
        res = mg.tail_probe(two_point, x, 1.0, [8], eps, trials=1000)
        assert res.rows[0].frequency == 0.0

    def test_tail_decreases(self, two_point):
        x = np.ones(4) / 2
        eps = mg.tune_epsilon(two_point, x, 1.0, 8, target=0.1)
        res = mg.tail_probe(two_point, x, 1.0, [8, 32, 128], eps, trials=2000, seed=2)
        f = [r.frequency for r in res.rows]
        assert 0.03 < f[0] < 0.3
        assert f[0] > f[1] >= f[2]

    def test_markov_bound_decay(self):
        b = [mg.markov_tail_bound(1.0, 1.0, n, 0.1, 1.0) for n in (8, 16)]
        assert b[0] / b[1] == pytest.approx(4.0)
