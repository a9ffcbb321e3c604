from itertools import product

import numpy as np
import pytest
from scipy import integrate, stats

from suress.core import Hyperparameters, ModelSpec
from suress.graphs import DecomposableGraph
from suress.priors import (HOTSPOT_EPS, AdaptiveScale, MrfPrior, SelectionState,
                           column_flip_deltas, eta_posterior_parameters, hotspot_omega,
                           log_prior_gamma, log_prior_gamma_delta,
                           log_prior_graph, omega_posterior_parameters,
                           update_eta, update_hierarchical_omega, update_hotspot, update_w,
                           w_posterior_parameters)

HYPER = Hyperparameters().resolved(4, 3)


def mrf_spec(edges, d=-3.0, e=0.03):
    return ModelSpec(gamma_prior="MRF", mrf_edges=np.asarray(edges, float).reshape(-1, 3),
                     hyperparameters=Hyperparameters(mrf_d=d, mrf_e=e))


def random_state(kind, p, s, rng):
    gamma = rng.random((p, s)) < 0.4
    if kind == "hierarchical":
        return SelectionState(kind, gamma, omega=rng.uniform(0.05, 0.9, p))
    if kind == "hotspot":
        return SelectionState(kind, gamma, o=rng.uniform(0.05, 0.9, s), pi=rng.gamma(2.0, 1.0, p))
    return SelectionState(kind, gamma)


class TestMrf:
    def test_all_zero(self):
        spec = mrf_spec([[0, 1, 1]])
        assert log_prior_gamma(SelectionState("MRF", np.zeros((2, 2))), spec) == 0.0

    def test_single_inclusion(self):
        spec = mrf_spec([[0, 1, 1]])
        g = np.zeros((2, 2), dtype=bool)
        g[1, 1] = True
        assert log_prior_gamma(SelectionState("MRF", g), spec) == pytest.approx(-3.0)

    def test_joined_pair(self):
        # flat indices 0 and 1 are (0, 0) and (1, 0) in column-major order
        spec = mrf_spec([[0, 1, 1]])
        g = np.zeros((2, 2), dtype=bool)
        g[0, 0] = g[1, 0] = True
        assert log_prior_gamma(SelectionState("MRF", g), spec) == pytest.approx(-5.97, abs=1e-12)

    def test_isolated_flip_is_d(self):
        spec = mrf_spec([[0, 1, 1]])
        st = SelectionState("MRF", np.zeros((2, 2)))
        assert log_prior_gamma_delta(st, spec, (1, 1)) == -3.0

    def test_edge_listed_twice_counts_once(self):
        a = MrfPrior([[0, 1, 1.0]], 2, 1, 0.0, 1.0)
        g = np.ones((2, 1), dtype=bool)
        assert a.log_density(g) == 1.0

    def test_e_zero_is_independent_bernoulli(self):
        # every flip on every gamma with p*s = 12 and a dense random graph
        rng = np.random.default_rng(0)
        p, s = 4, 3
        m = p * s
        edges = [[i, j, 1.0] for i in range(m) for j in range(i + 1, m) if rng.random() < 0.5]
        q = 0.2
        d = np.log(q / (1 - q))
        spec = mrf_spec(edges, d=d, e=0.0)
        mrf = MrfPrior.from_spec(spec, p, s)
        bern = SelectionState("hierarchical", np.zeros((p, s)), omega=np.full(p, q))
        hspec = ModelSpec(gamma_prior="hierarchical")
        for code in range(2**m):
            g = np.array([(code >> b) & 1 for b in range(m)], dtype=bool).reshape(p, s)
            st = SelectionState("MRF", g)
            bern.gamma = g
            for j, k in product(range(p), range(s)):
                a = log_prior_gamma_delta(st, spec, (j, k), mrf)
                b = log_prior_gamma_delta(bern, hspec, (j, k))
                assert abs(a - b) < 1e-12


class TestDeltas:
    @pytest.mark.parametrize("kind", ["hierarchical", "hotspot", "MRF"])
    def test_delta_equals_recompute(self, kind):
        rng = np.random.default_rng(1)
        p, s = 5, 3
        edges = [[i, j, rng.uniform(0.5, 2)] for i in range(p * s)
                 for j in range(i + 1, p * s) if rng.random() < 0.3]
        spec = mrf_spec(edges, e=0.4) if kind == "MRF" else ModelSpec(gamma_prior=kind)
        for _ in range(200):
            st = random_state(kind, p, s, rng)
            j, k = int(rng.integers(p)), int(rng.integers(s))
            before = log_prior_gamma(st, spec)
            delta = log_prior_gamma_delta(st, spec, (j, k))
            st.gamma[j, k] = ~st.gamma[j, k]
            assert abs(log_prior_gamma(st, spec) - before - delta) < 1e-12
            # flipping back gives the negative
            assert log_prior_gamma_delta(st, spec, (j, k)) == pytest.approx(-delta, abs=1e-14)

    def test_column_log_odds(self):
        rng = np.random.default_rng(2)
        st = random_state("hotspot", 4, 2, rng)
        w = hotspot_omega(st.o, st.pi)[:, 1]
        np.testing.assert_allclose(column_flip_deltas(st, 1), np.log(w / (1 - w)))

    def test_state_kind_mismatch(self):
        st = random_state("hotspot", 2, 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            log_prior_gamma(st, ModelSpec(gamma_prior="hierarchical"))

    def test_missing_fields(self):
        with pytest.raises(ValueError):
            SelectionState("hotspot", np.zeros((2, 2)), o=np.ones(2))


class TestHierarchical:
    def test_all_ones_mean(self):
        hyper = Hyperparameters(a_omega=1.0, b_omega=1.0)
        rng = np.random.default_rng(3)
        draws = [update_hierarchical_omega(np.ones(3), hyper, rng) for _ in range(20000)]
        # Beta(4, 1) has mean 0.8 and sd 0.163
        assert abs(np.mean(draws) - 0.8) < 4 * 0.163 / np.sqrt(20000)

    def test_parameters(self):
        hyper = Hyperparameters(a_omega=2.0, b_omega=7.0)
        a, b = omega_posterior_parameters(np.array([[0, 0, 0], [1, 0, 1]]), hyper)
        np.testing.assert_array_equal(a, [2, 4])
        np.testing.assert_array_equal(b, [10, 8])

    def test_no_responses_gives_prior(self):
        hyper = Hyperparameters(a_omega=2.0, b_omega=7.0)
        a, b = omega_posterior_parameters(np.zeros((3, 0)), hyper)
        np.testing.assert_array_equal(a, [2, 2, 2])
        np.testing.assert_array_equal(b, [7, 7, 7])


class TestHotspot:
    def test_clamp(self):
        w = hotspot_omega(np.array([0.9]), np.array([5.0]))
        assert w[0, 0] == 1.0 - HOTSPOT_EPS
        st = SelectionState("hotspot", np.array([[False]]), o=np.array([0.9]), pi=np.array([5.0]))
        assert np.isfinite(log_prior_gamma(st, ModelSpec()))

    def test_zero_step_always_accepted(self):
        rng = np.random.default_rng(0)
        o, pi = np.array([0.3, 0.4]), np.array([1.0, 2.0, 0.5])
        g = rng.random((3, 2)) < 0.5
        o2, pi2 = update_hotspot(o, pi, g, HYPER, rng, o_scale=0.0, pi_scale=0.0)
        np.testing.assert_array_equal(o2, o)
        np.testing.assert_array_equal(pi2, pi)

    def test_empty_gamma_pushes_o_down(self):
        hyper = Hyperparameters(a_o=2.0, b_o=2.0, a_pi=2.0, b_pi=1.0)
        rng = np.random.default_rng(4)
        gamma = np.zeros((30, 1), dtype=bool)
        o, pi = np.array([0.5]), np.ones(30)
        trace = []
        for _ in range(3000):
            o, pi = update_hotspot(o, pi, gamma, hyper, rng)
            trace.append(o[0])
        assert np.mean(trace[1500:]) < np.mean(trace[:50])
        assert np.mean(trace[1500:]) < 0.25

    def test_pi_matches_quadrature(self):
        # one predictor, one response, o fixed; compare the long-run mean of
        # pi with its conditional integrated on a grid
        hyper = Hyperparameters(a_o=2.0, b_o=3.0, a_pi=2.0, b_pi=1.0)
        gamma = np.array([[True]])
        o = np.array([0.3])
        pi_max = (1 - HOTSPOT_EPS) / 0.3

        def dens(x):
            return stats.gamma.pdf(x, 2.0, scale=1.0) * min(0.3 * x, 1 - HOTSPOT_EPS)

        z = integrate.quad(dens, 0, 60, points=[pi_max], limit=200)[0]
        mean = integrate.quad(lambda x: x * dens(x), 0, 60, points=[pi_max], limit=200)[0] / z
        rng = np.random.default_rng(5)
        pi = np.array([1.0])
        draws = np.empty(40000)
        for i in range(draws.size):
            _, pi = update_hotspot(o, pi, gamma, hyper, rng, o_scale=0.0, pi_scale=0.8)
            draws[i] = pi[0]
        assert abs(draws[2000:].mean() - mean) < 0.05 * mean

    def test_o_matches_quadrature(self):
        hyper = Hyperparameters(a_o=2.0, b_o=3.0, a_pi=2.0, b_pi=1.0)
        gamma = np.array([[True], [False], [False]])
        pi = np.array([1.0, 0.5, 1.5])

        def dens(x):
            w = np.minimum(pi * x, 1 - HOTSPOT_EPS)
            return (stats.beta.pdf(x, 2, 3) * np.prod(np.where(gamma[:, 0], w, 1 - w)))

        z = integrate.quad(dens, 0, 1)[0]
        mean = integrate.quad(lambda x: x * dens(x), 0, 1)[0] / z
        rng = np.random.default_rng(6)
        o = np.array([0.5])
        draws = np.empty(40000)
        for i in range(draws.size):
            o, _ = update_hotspot(o, pi, gamma, hyper, rng, o_scale=1.0, pi_scale=0.0)
            draws[i] = o[0]
        assert abs(draws[2000:].mean() - mean) < 0.03 * mean

    def test_scale_adapts_toward_target(self):
        sc = AdaptiveScale(scale=0.5)
        for _ in range(200):
            sc.record(1, 1, adapt=True)
        assert sc.scale > 0.5
        frozen = sc.scale
        sc.record(0, 1, adapt=False)
        assert sc.scale == frozen


class TestGraphPrior:
    def test_empty(self):
        assert log_prior_graph(DecomposableGraph.empty(3), 0.5) == pytest.approx(3 * np.log(0.5))

    def test_complete(self):
        s, eta = 5, 0.3
        assert log_prior_graph(DecomposableGraph.complete(s), eta) == pytest.approx(10 * np.log(eta))

    def test_eta_parameters(self):
        g = DecomposableGraph.from_edges(4, [(0, 1), (1, 2)])
        hyper = Hyperparameters(a_eta=0.1, b_eta=1.0)
        assert eta_posterior_parameters(g, hyper) == (2.1, 5.0)

    def test_eta_mean(self):
        g = DecomposableGraph.from_edges(4, [(0, 1), (1, 2)])
        hyper = Hyperparameters(a_eta=0.1, b_eta=1.0)
        rng = np.random.default_rng(7)
        draws = np.array([update_eta(g, hyper, rng) for _ in range(20000)])
        dist = stats.beta(2.1, 5.0)
        assert abs(draws.mean() - dist.mean()) < 4 * dist.std() / np.sqrt(draws.size)


class TestShrinkage:
    def test_no_coefficients_is_prior(self):
        assert w_posterior_parameters([], HYPER) == (HYPER.a_w, HYPER.b_w)

    def test_single_zero(self):
        assert w_posterior_parameters([0.0], HYPER) == (HYPER.a_w + 0.5, HYPER.b_w)

    def test_mean(self):
        beta = np.array([1.0, -2.0, 0.5])
        a, b = w_posterior_parameters(beta, HYPER)
        assert (a, b) == (HYPER.a_w + 1.5, HYPER.b_w + 0.5 * 5.25)
        rng = np.random.default_rng(8)
        draws = np.array([update_w(beta, HYPER, rng) for _ in range(40000)])
        dist = stats.invgamma(a, scale=b)
        assert abs(draws.mean() - dist.mean()) < 4 * dist.std() / np.sqrt(draws.size)

