import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.fft import idctn

from bandit_ot.basis import (
    DecayProfile,
    OrthonormalBasis,
    RankDeficient,
    ZeroReferenceMass,
    analyze,
    cosine_basis,
    cosine_frequencies,
    decay_cost,
    density_norm,
    features,
    gram_schmidt,
    loci_indicator_basis,
    synthesize,
    tail_bound,
    truncation_error_bound,
)
from bandit_ot.measures import DiscreteMeasure, pairing, product_measure
from bandit_ot.transport import independent_coupling, sinkhorn
from conftest import random_measure

U2 = DiscreteMeasure.on_line([0.5, 0.5])


def random_coupling(rng, mu, nu):
    c = rng.normal(size=(mu.size, nu.size))
    return sinkhorn(c, mu, nu, rng.uniform(0.05, 1.0)).plan


class TestLociBasis:
    def test_uniform_two_by_two(self):
        b = loci_indicator_basis(U2, U2)
        np.testing.assert_array_equal(b.eval, 2.0 * np.eye(4))
        np.testing.assert_array_equal(b.gram(), np.eye(4))

    def test_index_order(self):
        b = loci_indicator_basis(DiscreteMeasure.on_line([0.5, 0.5]), DiscreteMeasure.on_line([0.2, 0.3, 0.5]))
        assert b.function(4)[1, 1] > 0 and np.count_nonzero(b.function(4)) == 1

    def test_round_trip(self, rng):
        mu, nu = random_measure(rng, 3), random_measure(rng, 4)
        b = loci_indicator_basis(mu, nu)
        c = rng.normal(size=(3, 4))
        g = analyze(c, b)
        np.testing.assert_allclose(g, (c * np.sqrt(product_measure(mu, nu).weight_table)).ravel(), atol=1e-15)
        np.testing.assert_allclose(synthesize(g, b).values, c, atol=1e-14)

    def test_zero_mass(self):
        with pytest.raises(ZeroReferenceMass):
            loci_indicator_basis(DiscreteMeasure.on_line([1.0, 0.0]), U2)

    def test_features_are_scaled_masses(self, rng):
        mu, nu = random_measure(rng, 3), random_measure(rng, 3)
        pi = random_coupling(rng, mu, nu)
        b = loci_indicator_basis(mu, nu)
        np.testing.assert_allclose(features(pi, b), (pi.mass / np.sqrt(product_measure(mu, nu).weight_table)).ravel())

    @given(st.integers(0, 2**31))
    def test_feature_norm_bound(self, seed):
        rng = np.random.default_rng(seed)
        mu, nu = random_measure(rng, 3), random_measure(rng, 4)
        b = loci_indicator_basis(mu, nu)
        th = features(random_coupling(rng, mu, nu), b)
        assert np.linalg.norm(th) <= np.max(1 / np.sqrt(product_measure(mu, nu).weight_table)) + 1e-12
        # a coupling never puts more than sqrt(mu_i nu_j) on a cell
        assert np.max(np.abs(th)) <= 1 + 1e-12


class TestGramSchmidt:
    def test_single_embedding(self, rng):
        rho = product_measure(random_measure(rng, 3), random_measure(rng, 3))
        phi = rng.normal(size=(3, 3))
        b = gram_schmidt([phi], rho)
        norm = np.sqrt(np.sum(rho.weight_table * phi**2))
        np.testing.assert_allclose(b.function(0), phi / norm, atol=1e-14)

    def test_orthogonal_embeddings_kept(self):
        rho = product_measure(U2, U2)
        e1, e2 = np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([[3.0, -3.0], [3.0, -3.0]])
        b = gram_schmidt([e1, e2], rho)
        np.testing.assert_allclose(b.function(0), e1, atol=1e-15)
        np.testing.assert_allclose(b.function(1), e2 / 3.0, atol=1e-15)

    def test_span_and_orthonormality(self, rng):
        rho = product_measure(random_measure(rng, 4), random_measure(rng, 4))
        embs = [rng.normal(size=(4, 4)) for _ in range(3)]
        b = gram_schmidt(embs, rho)
        assert np.max(np.abs(b.gram() - np.eye(3))) <= 1e-10
        for e in embs:
            np.testing.assert_allclose(synthesize(analyze(e, b), b).values, e, atol=1e-9)

    def test_rank_deficiency_reports_index(self, rng):
        rho = product_measure(U2, U2)
        e = rng.normal(size=(2, 2))
        with pytest.raises(RankDeficient) as err:
            gram_schmidt([e, rng.normal(size=(2, 2)), 2.0 * e], rho)
        assert err.value.index == 2
        assert gram_schmidt([e, 2.0 * e], rho, drop_dependent=True).n_max == 1

    def test_completion(self, rng):
        rho = product_measure(random_measure(rng, 3), random_measure(rng, 3))
        b = gram_schmidt([rng.normal(size=(3, 3)) for _ in range(2)], rho, n_max=9)
        assert b.n_max == 9
        assert np.max(np.abs(b.gram() - np.eye(9))) <= 1e-10
        with pytest.raises(ValueError):
            gram_schmidt([np.ones((3, 3))], rho, n_max=10)


class TestCosineBasis:
    def test_first_function_is_constant(self, rng):
        rho = product_measure(random_measure(rng, 4), random_measure(rng, 3))
        np.testing.assert_allclose(cosine_basis(4, 3, rho=rho).function(0), 1.0, atol=1e-14)

    def test_gram(self, rng):
        rho = product_measure(random_measure(rng, 5), random_measure(rng, 4))
        b = cosine_basis(5, 4, rho=rho)
        assert np.max(np.abs(b.gram() - np.eye(20))) <= 1e-10

    def test_matches_orthonormal_dct_for_uniform_weights(self):
        K, Kp = 4, 6
        b = cosine_basis(K, Kp)
        for idx, (k, l) in enumerate(cosine_frequencies(K, Kp)):
            unit = np.zeros((K, Kp))
            unit[k, l] = 1.0
            ref = idctn(unit, type=2, norm="ortho") * np.sqrt(K * Kp)
            np.testing.assert_allclose(b.function(idx), ref, atol=1e-9)

    def test_ordering(self):
        freqs = cosine_frequencies(3, 3)
        assert freqs[:4] == [(0, 0), (0, 1), (1, 0), (0, 2)]

    def test_truncated_size_and_bounds(self):
        assert cosine_basis(3, 3, n_max=4).n_max == 4
        with pytest.raises(ValueError):
            cosine_basis(3, 3, n_max=10)


class TestDecay:
    def test_finite_profile_is_one_hot(self):
        _, g = decay_cost(cosine_basis(4, 4), DecayProfile.finite(5), 2.0, seed=0)
        assert np.count_nonzero(g) == 1 and abs(g[4]) == 2.0
        assert tail_bound(g, 5) == 0.0

    def test_power_profile_partial_sums(self):
        C, q = 1.5, 1.0
        _, g = decay_cost(cosine_basis(8, 8), DecayProfile.power(q), C, seed=3)
        assert g[0] == 0.0
        for n in (1, 5, 50):
            assert np.sum(np.abs(g[:n])) == pytest.approx(C * (1 - n**-q), abs=1e-14)

    def test_power_tail_on_finite_grid(self):
        C, q, n_max = 1.0, 0.5, 64
        _, g = decay_cost(cosine_basis(8, 8), DecayProfile.power(q), C, seed=1)
        for n in (1, 10, 40):
            assert tail_bound(g, n) == pytest.approx(C * (n**-q - n_max**-q), abs=1e-14)

    def test_signs_are_seeded(self):
        b = cosine_basis(3, 3)
        g1 = decay_cost(b, DecayProfile.power(2.0), 1.0, seed=9)[1]
        g2 = decay_cost(b, DecayProfile.power(2.0), 1.0, seed=9)[1]
        np.testing.assert_array_equal(g1, g2)

    @pytest.mark.parametrize("kw", [{"kind": "finite", "N": 0}, {"kind": "power", "q": -1.0}, {"kind": "spline"}])
    def test_invalid_profiles(self, kw):
        with pytest.raises(ValueError):
            DecayProfile(**kw)

    @given(st.floats(0.1, 5.0), st.integers(1, 200))
    def test_zeta_monotone_in_unit_interval(self, q, n):
        p = DecayProfile.power(q)
        assert 0.0 <= p.zeta(n - 1) <= p.zeta(n) <= 1.0


class TestAlgebra:
    def test_zero_coefficients(self):
        assert not np.any(synthesize(np.zeros(4), cosine_basis(2, 2)).values)

    @given(st.integers(0, 2**31))
    def test_parseval_and_inversion(self, seed):
        rng = np.random.default_rng(seed)
        rho = product_measure(random_measure(rng, 3), random_measure(rng, 4))
        b = cosine_basis(3, 4, rho=rho)
        g = rng.normal(size=b.n_max)
        c = synthesize(g, b).values
        assert np.sum(rho.weight_table * c**2) == pytest.approx(g @ g, abs=1e-10)
        np.testing.assert_allclose(analyze(c, b), g, atol=1e-12)

    def test_constant_feature_of_reference(self, rng):
        mu, nu = random_measure(rng, 3), random_measure(rng, 3)
        b = cosine_basis(3, 3, rho=product_measure(mu, nu))
        assert features(independent_coupling(mu, nu), b)[0] == pytest.approx(1.0, abs=1e-14)

    def test_pairing_identity(self, rng):
        mu, nu = random_measure(rng, 4), random_measure(rng, 3)
        b = cosine_basis(4, 3, rho=product_measure(mu, nu))
        pi = random_coupling(rng, mu, nu)
        for n in (1, 5, 12):
            g = np.zeros(b.n_max)
            g[:n] = rng.normal(size=n)
            assert g[:n] @ features(pi, b, n) == pytest.approx(pairing(synthesize(g, b), pi), abs=1e-12)

    @given(st.integers(0, 2**31), st.floats(0.0, 1.0))
    def test_features_linear(self, seed, a):
        rng = np.random.default_rng(seed)
        mu, nu = random_measure(rng, 3), random_measure(rng, 3)
        b = loci_indicator_basis(mu, nu)
        p1, p2 = random_coupling(rng, mu, nu), random_coupling(rng, mu, nu)
        mix = a * p1.mass + (1 - a) * p2.mass
        np.testing.assert_allclose(features(mix, b), a * features(p1, b) + (1 - a) * features(p2, b), atol=1e-12)

    def test_truncation_inequality(self, rng):
        mu, nu = random_measure(rng, 4), random_measure(rng, 4)
        b = cosine_basis(4, 4, rho=product_measure(mu, nu))
        _, g = decay_cost(b, DecayProfile.power(1.0), 1.0, seed=2)
        c = synthesize(g, b)
        for n in (1, 4, 10, 16):
            pi = random_coupling(rng, mu, nu)
            err = abs(pairing(c, pi) - g[:n] @ features(pi, b, n))
            bound = truncation_error_bound(g, pi, b, n)
            assert err <= bound + 1e-12
            assert bound <= tail_bound(g, n) * density_norm(pi, b.rho) + 1e-12

    def test_order_too_large(self):
        with pytest.raises(ValueError):
            features(np.full((2, 2), 0.25), cosine_basis(2, 2), 5)

    def test_gram_violation_rejected(self):
        rho = product_measure(U2, U2)
        with pytest.raises(ValueError):
            OrthonormalBasis(np.ones((2, 4)), rho)

    def test_json_export(self):
        d = cosine_basis(2, 2).to_dict()
        assert json.loads(json.dumps(d))["n_max"] == 4
