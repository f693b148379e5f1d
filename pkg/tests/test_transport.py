import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bandit_ot.measures import DiscreteMeasure, check_coupling, pairing, product_measure, relative_entropy
from bandit_ot.transport import (
    DegenerateInput,
    DualPotentials,
    InvalidEpsilon,
    NonConvergence,
    SizeCapExceeded,
    entropic_gap_check,
    entropic_value,
    independent_coupling,
    kantorovich_baseline,
    kantorovich_certified,
    kantorovich_exact,
    recover_primal,
    round_to_feasible,
    sinkhorn,
    transportation_simplex,
)
from conftest import random_measure
from oracles import entropic_by_dual_ascent, lp_by_vertex_enumeration

U2 = DiscreteMeasure.on_line([0.5, 0.5])
ANTI = np.array([[0.0, 1.0], [1.0, 0.0]])


def weights(k):
    return arrays(float, k, elements=st.floats(0.02, 1.0)).map(lambda w: w / w.sum())


class TestSinkhorn:
    def test_zero_cost_gives_reference(self):
        mu, nu = DiscreteMeasure.on_line([0.2, 0.8]), DiscreteMeasure.on_line([0.1, 0.3, 0.6])
        res = sinkhorn(np.zeros((2, 3)), mu, nu, 0.3)
        np.testing.assert_allclose(res.plan.mass, product_measure(mu, nu).weight_table, atol=1e-14)
        assert abs(res.primal_value) <= 1e-12

    def test_entropy_dominated_limit(self):
        res = sinkhorn(ANTI, U2, U2, 1e4)
        np.testing.assert_allclose(res.plan.mass, 0.25, atol=1e-3)

    def test_matches_dual_ascent_oracle(self, rng):
        for _ in range(5):
            mu, nu = random_measure(rng, 3), random_measure(rng, 3)
            c = rng.uniform(size=(3, 3))
            ref, ref_plan = entropic_by_dual_ascent(c, mu.weights, nu.weights, 0.1)
            res = sinkhorn(c, mu, nu, 0.1, tol=1e-13)
            assert res.primal_value == pytest.approx(ref, abs=1e-6)
            raw = recover_primal(res.potentials, c, 0.1, product_measure(mu, nu))
            np.testing.assert_allclose(raw, ref_plan, atol=1e-6)

    def test_invalid_epsilon(self):
        with pytest.raises(InvalidEpsilon):
            sinkhorn(ANTI, U2, U2, 0.0)

    def test_nonconvergence_is_flagged(self, rng):
        mu, nu = random_measure(rng, 3), random_measure(rng, 3)
        with pytest.warns(NonConvergence):
            res = sinkhorn(rng.uniform(size=(3, 3)), mu, nu, 0.01, tol=1e-15, max_iter=2, newton_after=None)
        assert not res.converged and res.iterations == 2
        assert check_coupling(res.plan, mu, nu, 1e-12)

    def test_newton_phase_rescues_stalled_instance(self, rng):
        # near-tied permutations make plain Sinkhorn crawl at small epsilon
        c = np.array([[0.08, 1.13, -0.26, -0.38], [1.13, -0.04, 0.33, -0.85],
                      [-1.18, -0.05, 1.13, 0.67], [0.53, -0.46, -0.63, 1.13]])
        u4 = DiscreteMeasure.on_line(np.full(4, 0.25))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergence)
            plain = sinkhorn(c, u4, u4, 0.05, tol=1e-9, max_iter=5000, newton_after=None)
        hybrid = sinkhorn(c, u4, u4, 0.05, tol=1e-9, max_iter=5000)
        assert not plain.converged
        assert hybrid.converged and hybrid.newton_steps > 0
        assert hybrid.gap <= 1e-9

    def test_warm_start_reuses_potentials(self, rng):
        mu, nu = random_measure(rng, 4), random_measure(rng, 4)
        c = rng.uniform(size=(4, 4))
        cold = sinkhorn(c, mu, nu, 0.05, tol=1e-10)
        warm = sinkhorn(c, mu, nu, 0.05, tol=1e-10, init=cold.potentials)
        assert warm.iterations <= 2
        assert warm.primal_value == pytest.approx(cold.primal_value, abs=1e-9)

    def test_history_is_recorded(self, rng):
        res = sinkhorn(rng.uniform(size=(3, 3)), random_measure(rng, 3), random_measure(rng, 3), 0.2, record=True)
        assert len(res.history) == res.iterations and res.history[-1] == res.violation

    @given(st.integers(1, 5), st.integers(1, 5), st.floats(0.01, 2.0), st.integers(0, 2**31))
    def test_duality_and_feasibility(self, K, Kp, eps, seed):
        rng = np.random.default_rng(seed)
        mu, nu = random_measure(rng, K), random_measure(rng, Kp)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergence)
            res = sinkhorn(rng.uniform(-1, 1, (K, Kp)), mu, nu, eps)
        assert res.gap >= -1e-9
        assert check_coupling(res.plan, mu, nu, 1e-12)
        assert np.all(np.isfinite(res.potentials.phi)) and np.all(np.isfinite(res.potentials.psi))


class TestRecoverPrimal:
    def test_zero_potentials_give_reference(self):
        rho = product_measure(U2, DiscreteMeasure.on_line([0.3, 0.7]))
        np.testing.assert_allclose(recover_primal(DualPotentials(np.zeros(2), np.zeros(2)), np.zeros((2, 2)), 0.5, rho),
                                   rho.weight_table, atol=1e-16)

    def test_gauge_invariance(self, rng):
        pots = DualPotentials(rng.normal(size=3), rng.normal(size=2))
        c = rng.normal(size=(3, 2))
        rho = product_measure(random_measure(rng, 3), random_measure(rng, 2))
        np.testing.assert_allclose(recover_primal(pots.shifted(0.7), c, 0.3, rho), recover_primal(pots, c, 0.3, rho), rtol=1e-12)

    def test_no_overflow_at_small_epsilon(self):
        rho = product_measure(U2, U2)
        out = recover_primal(DualPotentials(np.zeros(2), np.zeros(2)), ANTI * 50, 1e-3, rho)
        assert np.all(np.isfinite(out))


class TestRounding:
    def test_feasible_input_unchanged(self, rng):
        mu, nu = random_measure(rng, 3), random_measure(rng, 4)
        rho = product_measure(mu, nu).weight_table
        np.testing.assert_allclose(round_to_feasible(rho, mu, nu).mass, rho, atol=1e-15)

    def test_two_by_two_hand_check(self):
        raw = np.full((2, 2), 0.25)
        raw[0] *= 0.9
        out = round_to_feasible(raw, U2, U2).mass
        # rows: row 0 short by 0.05; columns scaled to <= 0.5 leave 0.025 each
        np.testing.assert_allclose(out, [[0.25, 0.25], [0.25, 0.25]], atol=1e-15)
        assert check_coupling(out, U2, U2, 1e-15)

    def test_all_zero(self):
        with pytest.raises(DegenerateInput):
            round_to_feasible(np.zeros((2, 2)), U2, U2)

    def test_objective_perturbation(self, rng):
        for _ in range(10):
            mu, nu = random_measure(rng, 5), random_measure(rng, 5)
            c = rng.uniform(size=(5, 5))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NonConvergence)
                res = sinkhorn(c, mu, nu, 0.05, tol=1e-6, newton_after=None)
            assert abs(pairing(c, res.plan) - pairing(c, res.raw_plan)) <= np.max(np.abs(c)) * 1e-5

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
    def test_output_always_feasible(self, K, Kp, seed):
        rng = np.random.default_rng(seed)
        mu, nu = random_measure(rng, K), random_measure(rng, Kp)
        raw = rng.uniform(size=(K, Kp)) * rng.integers(0, 2, size=(K, Kp))
        raw[0, 0] += 0.1
        assert check_coupling(round_to_feasible(raw, mu, nu), mu, nu, 1e-12)


class TestEntropicValue:
    def test_zero_cost(self):
        ev = entropic_value(np.zeros((3, 3)), *(DiscreteMeasure.on_line(np.full(3, 1 / 3)),) * 2, 0.1)
        assert abs(ev.value) <= 1e-12 and ev.gap <= 1e-11

    def test_monotone_in_epsilon(self, rng):
        mu, nu = random_measure(rng, 4), random_measure(rng, 4)
        c = rng.uniform(size=(4, 4))
        vals = [entropic_value(c, mu, nu, e).value for e in (0.01, 0.1, 1.0)]
        assert vals[0] <= vals[1] + 1e-9 <= vals[2] + 2e-9

    def test_vanishing_epsilon_limit(self):
        assert entropic_value(ANTI, U2, U2, 1e-3).value <= 2e-3


class TestKantorovich:
    def test_constant_cost(self, rng):
        mu, nu = random_measure(rng, 3), random_measure(rng, 4)
        assert kantorovich_exact(np.full((3, 4), 2.5), mu, nu).value == pytest.approx(2.5, abs=1e-14)

    def test_antidiagonal(self):
        kb = kantorovich_exact(ANTI, U2, U2)
        assert kb.value == 0.0
        np.testing.assert_allclose(kb.optimizer.mass, np.diag([0.5, 0.5]))

    def test_matches_vertex_enumeration(self, rng):
        for _ in range(15):
            K, Kp = rng.integers(1, 5, size=2)
            mu, nu = random_measure(rng, K), random_measure(rng, Kp)
            c = rng.uniform(size=(K, Kp))
            if rng.random() < 0.3:
                c = np.round(c * 3)  # integer costs: degenerate ties
            ref, _ = lp_by_vertex_enumeration(c, mu.weights, nu.weights)
            kb = kantorovich_exact(c, mu, nu)
            assert kb.value == pytest.approx(ref, abs=1e-9)
            assert kb.upper - kb.lower <= 1e-9
            assert check_coupling(kb.optimizer, mu, nu, 1e-12)

    def test_degenerate_marginals(self):
        # equal partial sums force degenerate bases in the north-west start
        mu = nu = DiscreteMeasure.on_line([0.25, 0.25, 0.25, 0.25])
        c = np.add.outer(np.arange(4), -np.arange(4)) ** 2
        x, u, v, _ = transportation_simplex(c.astype(float), mu.weights, nu.weights)
        assert pairing(c, x) == pytest.approx(0.0, abs=1e-15)

    def test_size_cap_and_certified_fallback(self, rng):
        mu, nu = random_measure(rng, 5), random_measure(rng, 5)
        c = rng.uniform(size=(5, 5))
        with pytest.raises(SizeCapExceeded):
            kantorovich_exact(c, mu, nu, size_cap=10)
        exact = kantorovich_exact(c, mu, nu)
        cert = kantorovich_certified(c, mu, nu)
        assert cert.lower - 1e-9 <= exact.value <= cert.upper + 1e-9
        assert kantorovich_baseline(c, mu, nu).method == "exact-LP"


class TestGapCheck:
    def test_zero_cost(self, rng):
        mu, nu = random_measure(rng, 3), random_measure(rng, 3)
        rep = entropic_gap_check(np.zeros((3, 3)), mu, nu, 0.0, [0.5, 0.1])
        assert rep.ok and all(abs(r.excess) <= 1e-12 for r in rep.rows)

    def test_antidiagonal_unit_lipschitz(self):
        rep = entropic_gap_check(ANTI, U2, U2, 1.0, [0.5, 0.1, 0.02])
        assert rep.ok

    def test_excess_shrinks_with_epsilon(self, rng):
        mu, nu = random_measure(rng, 4), random_measure(rng, 4)
        rep = entropic_gap_check(rng.uniform(size=(4, 4)), mu, nu, 1.0, [1.0, 0.3, 0.1, 0.03])
        ex = [r.excess for r in rep.rows]
        assert all(b <= a + 1e-9 for a, b in zip(ex, ex[1:]))


def test_independent_coupling(rng):
    mu, nu = random_measure(rng, 3), random_measure(rng, 2)
    pi = independent_coupling(mu, nu)
    assert relative_entropy(pi, product_measure(mu, nu)) == pytest.approx(0.0, abs=1e-15)
