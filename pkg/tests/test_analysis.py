import numpy as np
import pytest

from decprox import engine
from decprox.analysis import (
    centralized_reference,
    classify_decay,
    fixed_point_residuals,
    theoretical_rate,
)
from decprox.costs import (
    logistic_cost,
    partition_data,
    quadratic_cost,
    random_quadratic_cost,
    synthetic_classification,
)
from decprox.engine import AlgorithmSpec, BlockIterate, RunRecord, run
from decprox.netgraph import (
    build_graph,
    metropolis_matrix,
    table1_matrices,
)
from decprox.prox import L1Prox, prox_l1


class TestTheoreticalRate:
    def test_tabulated_examples(self):
        # mu = 1/delta, nu = delta, C = 0, sigma_min(B^2) = 1 -> gamma = 0.
        delta = 2.5
        r = theoretical_rate("Thm1", 1 / delta, delta, delta, 0.0, 1.0)
        assert r.gamma_primal == pytest.approx(0.0, abs=1e-15)
        assert r.gamma_dual == pytest.approx(0.0, abs=1e-15)
        assert r.gamma == pytest.approx(0.0, abs=1e-15)
        # nu/delta = 0.1, same step: gamma = max(0.9, 0.5) = 0.9.
        r = theoretical_rate("Thm1", 1 / delta, 0.1 * delta, delta, 0.0, 0.5)
        assert r.gamma == pytest.approx(0.9, abs=1e-15)
        # Exactly at the bound: gamma_primal = 1, not feasible.
        sigma_C = 0.3
        mu = (2 - sigma_C) / delta
        r = theoretical_rate("Thm1", mu, 1.0, delta, sigma_C, 0.5)
        assert r.gamma_primal == pytest.approx(1.0, abs=1e-14)
        assert not r.feasible

    def test_feasibility_iff_strictly_below_bound(self):
        delta = 1.0
        r = theoretical_rate("Thm1", 1.9, 0.5, delta, 0.0, 0.5)
        assert r.feasible and r.gamma_primal < 1
        r = theoretical_rate("Thm1", 2.1, 0.5, delta, 0.0, 0.5)
        assert not r.feasible and r.gamma_primal > 1

    def test_thm4_formulas(self):
        r = theoretical_rate("Thm4", 0.5, 1.0, 1.0, 0.5, 0.5)
        assert r.mu_bound == pytest.approx(1.0)
        assert r.gamma_primal == pytest.approx(1 - 0.5 * (2 - 0.5 / 0.5))
        assert r.feasible

    def test_monotone_in_sigma_c(self):
        gammas = [theoretical_rate("Thm1", 0.3, 0.5, 1.0, s, 0.5).gamma_primal
                  for s in np.linspace(0.0, 1.5, 7)]
        assert all(b >= a for a, b in zip(gammas, gammas[1:]))

    def test_vertex_of_quadratic(self):
        # gamma_primal is minimized at mu = (2 - sigma_C)/(2 delta).
        nu, delta, sC = 0.4, 1.3, 0.2
        mu_star = (2 - sC) / (2 * delta)
        g_star = theoretical_rate("Thm1", mu_star, nu, delta, sC, 0.5).gamma_primal
        for mu in (0.5 * mu_star, 1.4 * mu_star):
            assert theoretical_rate("Thm1", mu, nu, delta, sC, 0.5).gamma_primal >= g_star

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            theoretical_rate("Thm1", 0.1, 2.0, 1.0, 0.0, 0.5)  # nu > delta
        with pytest.raises(ValueError):
            theoretical_rate("Thm1", -0.1, 0.5, 1.0, 0.0, 0.5)
        with pytest.raises(ValueError):
            theoretical_rate("Thm1", 0.1, 0.5, 1.0, 2.0, 0.5)
        with pytest.raises(ValueError):
            theoretical_rate("Thm4", 0.1, 0.5, 1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            theoretical_rate("Thm1", 0.1, 0.5, 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            theoretical_rate("Thm2", 0.1, 0.5, 1.0, 0.0, 0.5)


class TestFixedPointResiduals:
    def setup_method(self):
        g = build_graph("random_connected", 5, seed=4, extra_edge_prob=0.4)
        self.A = metropolis_matrix(g)
        self.triple = table1_matrices("ExactDiffusion", self.A)
        self.costs = random_quadratic_cost(5, 3, seed=1)
        self.prox = L1Prox(0.05)
        self.mu = 0.5

    def _converged_state(self, iters=4000):
        spec = AlgorithmSpec(family="PUDA_general", mu=self.mu,
                             triple=self.triple, prox=self.prox)
        return run(spec, self.costs, np.zeros(3), iters).final_state

    def test_converged_residuals_small(self):
        st = self._converged_state()
        r = fixed_point_residuals(st, self.costs, self.prox, self.triple, self.mu)
        assert max(r) <= 1e-9

    def test_random_state_not_fixed(self):
        rng = np.random.default_rng(0)
        W = rng.standard_normal((5, 3))
        st = BlockIterate(W=W, W_prev=W, S=rng.standard_normal((5, 3)),
                          Z=rng.standard_normal((5, 3)))
        r = fixed_point_residuals(st, self.costs, self.prox, self.triple, self.mu)
        assert max(r) > 1e-3

    def test_unconstrained_minimum_exact_zero(self):
        # R=0, K=1, at the minimizer with Z=W, S=0: all residuals vanish.
        costs = quadratic_cost(1.0, 1, 2, targets=np.array([[2.0, -1.0]]))
        from decprox.netgraph import ConsensusTriple
        t = ConsensusTriple(A_bar=np.eye(1), B_sq=np.zeros((1, 1)),
                            C=np.zeros((1, 1)))
        W = np.array([[2.0, -1.0]])
        st = BlockIterate(W=W, W_prev=W, S=np.zeros((1, 2)), Z=W.copy())
        r = fixed_point_residuals(st, costs, None, t, 0.3)
        assert max(r) == 0.0

    def test_stable_under_extra_iterations(self):
        st1 = self._converged_state(4000)
        st2 = self._converged_state(4050)
        r1 = fixed_point_residuals(st1, self.costs, self.prox, self.triple, self.mu)
        r2 = fixed_point_residuals(st2, self.costs, self.prox, self.triple, self.mu)
        assert max(abs(a - b) for a, b in zip(r1, r2)) <= 1e-10

    def test_requires_z_buffer(self):
        st = BlockIterate(W=np.zeros((5, 3)), W_prev=np.zeros((5, 3)))
        with pytest.raises(ValueError):
            fixed_point_residuals(st, self.costs, self.prox, self.triple, self.mu)


class TestCentralizedReference:
    def test_scalar_lasso(self):
        # min 0.5 (w-3)^2 + |w|  ->  w* = 2.
        costs = quadratic_cost(1.0, 1, 1, targets=np.array([[3.0]]))
        w = centralized_reference(costs, L1Prox(1.0))
        assert w[0] == pytest.approx(2.0, abs=1e-12)

    def test_smooth_quadratic(self):
        costs = quadratic_cost(2.0, 3, 4)
        w = centralized_reference(costs, None)
        assert np.abs(w).max() <= 1e-13

    def test_self_consistency_logistic(self):
        data = synthetic_classification(200, 10, seed=5)
        costs = logistic_cost(partition_data(data, 4, seed=0), lam=0.01)
        prox = L1Prox(2e-3)
        a = centralized_reference(costs, prox, tol=1e-14)
        b = centralized_reference(costs, prox, tol=1e-16)
        assert np.abs(a - b).max() <= 1e-12

    def test_mapping_norm_certificate(self):
        costs = quadratic_cost(1.0, 2, 3,
                               targets=np.random.default_rng(1).standard_normal((2, 3)))
        prox = L1Prox(0.1)
        tol = 1e-13
        w = centralized_reference(costs, prox, tol=tol)
        mu = 1.0 / costs.delta
        w_next = prox.apply(w - mu * costs.average_grad(w), mu)
        assert np.linalg.norm(w - w_next) / mu <= tol

    def test_iteration_cap_warns(self):
        costs = random_quadratic_cost(2, 3, seed=0, nu_min=0.1, delta_max=2.0)
        with pytest.warns(RuntimeWarning):
            centralized_reference(costs, None, tol=1e-300, max_iter=50)


def synthetic_record(errors, rounds_per_iter=1):
    n = len(errors)
    return RunRecord(algorithm="synthetic",
                     iterations=list(range(1, n + 1)),
                     comm_rounds=[rounds_per_iter * i for i in range(1, n + 1)],
                     errors=list(errors))


class TestClassifyDecay:
    def test_exact_geometric_is_linear(self):
        e = 0.9 ** np.arange(1, 301)
        v = classify_decay(synthetic_record(e))
        assert v.classification == "linear"
        for r in v.geometric_ratio_windows:
            assert r == pytest.approx(0.9, abs=1e-6)

    def test_exact_power_law_is_sublinear(self):
        i = np.arange(1, 4001)
        v = classify_decay(synthetic_record(1.0 / i))
        assert v.classification == "sublinear"
        assert v.loglog_slope == pytest.approx(-1.0, abs=1e-3)

    def test_scaling_invariance(self):
        e = 0.95 ** np.arange(1, 301)
        a = classify_decay(synthetic_record(e))
        b = classify_decay(synthetic_record(1e7 * e))
        assert a.classification == b.classification == "linear"
        assert np.allclose(a.geometric_ratio_windows, b.geometric_ratio_windows,
                           atol=1e-12)

    def test_nonpositive_tail_truncated(self):
        e = list(0.5 ** np.arange(1, 201)) + [0.0] * 20
        v = classify_decay(synthetic_record(np.array(e)))
        assert v.truncated

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            classify_decay(synthetic_record(0.9 ** np.arange(1, 50)))

    def test_flat_curve_inconclusive(self):
        rng = np.random.default_rng(0)
        e = 1.0 + 0.01 * rng.random(300)
        v = classify_decay(synthetic_record(e))
        assert v.classification == "inconclusive"

    def test_engine_record_end_to_end(self):
        # A genuinely linear decentralized run classifies as linear.
        g = build_graph("random_connected", 5, seed=2, extra_edge_prob=0.4)
        A = metropolis_matrix(g)
        costs = random_quadratic_cost(5, 3, seed=7)
        t = table1_matrices("ExactDiffusion", A)
        w_star = np.linalg.solve(
            sum(np.stack([costs.grad(k, e) - costs.grad(k, np.zeros(3))
                          for e in np.eye(3)]).T for k in range(5)),
            -sum(costs.grad(k, np.zeros(3)) for k in range(5)))
        # Small step so the decay is still in progress across the whole
        # tail window (no machine-precision floor).
        spec = AlgorithmSpec(family="PUDA_general", mu=0.05, triple=t)
        record = run(spec, costs, w_star, 300, seed=3)
        assert classify_decay(record).classification == "linear"
