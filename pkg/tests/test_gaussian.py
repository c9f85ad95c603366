"""Tests for the Gaussian and point-mass closed forms."""

import numpy as np
import pytest
from scipy.optimize import minimize

from wrisk.density import CostSpec, GridDensity, LossSpec, worst_case_density
from wrisk.errors import InfeasibilityError, IntegrabilityError, ValidationError
from wrisk.gaussian import (
    GaussianSpec,
    QuadraticFormSpec,
    dirac_worst_case,
    mvn_worst_case_kl,
    mvn_worst_case_w,
    worst_case_linear_map,
    worst_case_variance_kl,
    worst_case_variance_w,
)
from wrisk.params import RobustnessParams


def random_spd(rng, n, shift=0.0):
    m = rng.normal(size=(n, n))
    return m @ m.T / n + shift * np.eye(n)


def random_low_rank(rng, n, rank):
    l = rng.normal(size=(n, rank))
    return l @ l.T


class TestDiracWorstCase:
    def test_linear_loss_closed_form(self):
        """Shift by beta/2, variance alpha*beta/2, even from a point mass."""
        params = RobustnessParams(alpha=0.1, beta=0.2)
        q = dirac_worst_case(0.05, LossSpec.linear(), params)
        assert q.mean() == pytest.approx(0.05 + 0.1, abs=1e-10)
        assert q.variance() == pytest.approx(0.01, rel=1e-9)

    def test_zero_loss_pure_cost(self):
        q = dirac_worst_case(0.3, LossSpec.tabulated(np.zeros(2001)), RobustnessParams(alpha=0.5, beta=0.4),
                             grid=(-3.0, 3.6, 2001))
        assert q.mean() == pytest.approx(0.3, abs=1e-9)
        assert q.variance() == pytest.approx(0.5 * 0.4 / 2, rel=1e-9)

    def test_quadratic_loss_variance(self):
        q = dirac_worst_case(0.05, LossSpec.quadratic(0.05), RobustnessParams(alpha=1.0, beta=0.5))
        assert q.mean() == pytest.approx(0.05, abs=1e-10)
        assert q.variance() == pytest.approx(0.5, rel=1e-9)
        # cross-check by direct grid quadrature of the tilted exponent
        grid = (-8.0, 8.1, 4001)
        q2 = dirac_worst_case(0.05, LossSpec.tabulated((np.linspace(*grid) - 0.05) ** 2),
                              RobustnessParams(alpha=1.0, beta=0.5), grid=grid)
        assert q2.variance() == pytest.approx(0.5, rel=1e-4)

    def test_quadratic_loss_infeasible_beta(self):
        with pytest.raises(InfeasibilityError):
            dirac_worst_case(0.0, LossSpec.quadratic(0.0), RobustnessParams(alpha=1.0, beta=1.0))

    def test_fast_growing_table_loss_flagged(self):
        grid = (-5.0, 5.0, 1001)
        runaway = np.linspace(*grid) ** 2 * 100.0  # grows faster than the cost can pay
        with pytest.raises(IntegrabilityError):
            dirac_worst_case(0.0, LossSpec.tabulated(runaway), RobustnessParams(alpha=1.0, beta=0.5), grid=grid)


class TestScalarVariances:
    def test_transport_spot_value(self):
        assert worst_case_variance_w(0.04, RobustnessParams(alpha=0.1, beta=0.2)) == pytest.approx(0.075, rel=1e-12)

    def test_transport_zero_budget(self):
        assert worst_case_variance_w(0.04, RobustnessParams(alpha=0.3, beta=0.0)) == 0.04

    def test_transport_point_mass_still_risky(self):
        assert worst_case_variance_w(0.0, RobustnessParams(alpha=0.1, beta=0.5)) == pytest.approx(0.05, rel=1e-12)

    def test_transport_singular_beta(self):
        with pytest.raises(InfeasibilityError):
            worst_case_variance_w(0.04, RobustnessParams(alpha=0.1, beta=1.0))

    def test_entropy_spot_value(self):
        assert worst_case_variance_kl(0.04, 2.5) == pytest.approx(0.05, rel=1e-12)

    def test_entropy_zero_theta(self):
        assert worst_case_variance_kl(0.04, 0.0) == 0.04

    def test_entropy_vanishes_with_reference(self):
        assert worst_case_variance_kl(0.0, 5.0) == 0.0
        assert worst_case_variance_kl(1e-12, 5.0) == pytest.approx(1e-12, rel=1e-9)

    def test_entropy_integrability_gate(self):
        with pytest.raises(InfeasibilityError):
            worst_case_variance_kl(0.04, 12.5)  # 2*theta*s = 1

    def test_grid_cross_checks(self):
        """Both scalar formulas agree with the grid solvers."""
        from wrisk.density import kl_worst_case

        p = GridDensity.normal(0.0, 0.2, -4.0, 4.0, 2001)
        q_w = worst_case_density(p, LossSpec.quadratic(0.0), CostSpec(2.0), RobustnessParams(alpha=0.1, beta=0.2))
        assert q_w.variance() == pytest.approx(0.075, rel=1e-4)
        q_kl = kl_worst_case(p, LossSpec.quadratic(0.0), 2.5)
        assert q_kl.variance() == pytest.approx(0.05, rel=1e-4)


class TestMultivariateTransport:
    def test_zero_beta_identity(self):
        rng = np.random.default_rng(0)
        model = GaussianSpec(rng.normal(size=3), random_spd(rng, 3))
        forms = QuadraticFormSpec(random_spd(rng, 3))
        out = mvn_worst_case_w(model, forms, RobustnessParams(alpha=0.5, beta=0.0))
        np.testing.assert_allclose(out.mu, model.mu, atol=1e-12)
        np.testing.assert_allclose(out.sigma, model.sigma, atol=1e-12)

    def test_pure_transport_is_a_pushforward(self):
        rng = np.random.default_rng(1)
        forms = QuadraticFormSpec(random_spd(rng, 3), random_spd(rng, 3, shift=1.0))
        model = GaussianSpec(rng.normal(size=3), random_spd(rng, 3))
        beta = 0.2
        out = mvn_worst_case_w(model, forms, RobustnessParams(alpha=0.0, beta=beta))
        g = worst_case_linear_map(forms, beta)
        np.testing.assert_allclose(out.sigma, g @ model.sigma @ g.T, atol=1e-10)
        np.testing.assert_allclose(out.mu, g @ model.mu, atol=1e-12)

    def test_scalar_specialization_matches_1d_formula(self):
        model = GaussianSpec(np.array([0.3]), np.array([[0.09]]))
        forms = QuadraticFormSpec(np.array([[1.0]]))
        params = RobustnessParams(alpha=0.1, beta=0.2)
        out = mvn_worst_case_w(model, forms, params)
        assert out.sigma[0, 0] == pytest.approx(worst_case_variance_w(0.09, params), rel=1e-12)

    def test_infeasibility_names_the_eigenvalue(self):
        forms = QuadraticFormSpec(np.eye(2))
        model = GaussianSpec(np.zeros(2), np.eye(2))
        with pytest.raises(InfeasibilityError, match="eigenvalue"):
            mvn_worst_case_w(model, forms, RobustnessParams(alpha=0.1, beta=1.5))

    def test_feasibility_is_independent_of_the_covariance(self):
        """Only (A, B, beta) gate the transport worst case, never Sigma."""
        rng = np.random.default_rng(4)
        forms = QuadraticFormSpec(random_spd(rng, 3), random_spd(rng, 3, shift=1.0))
        beta = 0.9 / max(np.linalg.eigvalsh(np.linalg.solve(forms.B, forms.A)))
        params = RobustnessParams(alpha=0.2, beta=beta)
        for _ in range(50):
            rank = rng.integers(1, 4)
            sigma = random_low_rank(rng, 3, rank) if rank < 3 else random_spd(rng, 3)
            mvn_worst_case_w(GaussianSpec(rng.normal(size=3), sigma), forms, params)

    def test_positive_alpha_inflates_any_rank(self):
        rng = np.random.default_rng(5)
        forms = QuadraticFormSpec(random_spd(rng, 4), random_spd(rng, 4, shift=1.5))
        params = RobustnessParams(alpha=0.3, beta=0.1)
        s = forms.B - params.beta * forms.A
        floor = 0.5 * params.alpha * params.beta * min(np.linalg.eigvalsh(np.linalg.inv(s)))
        for rank in (1, 2, 3):
            sigma = random_low_rank(rng, 4, rank)
            out = mvn_worst_case_w(GaussianSpec(np.zeros(4), sigma), forms, params)
            assert min(np.linalg.eigvalsh(out.sigma)) >= floor - 1e-10

    def test_support_rotation_at_zero_alpha(self):
        """The degenerate directions move to the image of the map, rank intact."""
        rng = np.random.default_rng(6)
        forms = QuadraticFormSpec(random_spd(rng, 3), random_spd(rng, 3, shift=1.0))
        sigma = random_low_rank(rng, 3, 2)
        model = GaussianSpec(rng.normal(size=3), sigma)
        beta = 0.15
        out = mvn_worst_case_w(model, forms, RobustnessParams(alpha=0.0, beta=beta))
        g = worst_case_linear_map(forms, beta)
        assert np.linalg.matrix_rank(out.sigma, tol=1e-10) == 2
        # null(G Sigma G') = G^-T null(Sigma)
        null = np.linalg.svd(sigma)[2][-1]
        mapped = np.linalg.solve(g.T, null)
        np.testing.assert_allclose(out.sigma @ mapped, 0.0, atol=1e-10)


class TestMultivariateEntropy:
    def test_zero_theta_identity(self):
        rng = np.random.default_rng(7)
        model = GaussianSpec(rng.normal(size=3), random_spd(rng, 3))
        out = mvn_worst_case_kl(model, random_spd(rng, 3), 0.0)
        np.testing.assert_allclose(out.sigma, model.sigma, atol=1e-12)

    def test_kernel_is_preserved_for_singular_covariance(self):
        rng = np.random.default_rng(8)
        sigma = random_low_rank(rng, 3, 2)
        model = GaussianSpec(rng.normal(size=3), sigma)
        out = mvn_worst_case_kl(model, random_spd(rng, 3), 0.05)
        null = np.linalg.svd(sigma)[2][-1]
        np.testing.assert_allclose(out.sigma @ null, 0.0, atol=1e-10)
        assert np.linalg.matrix_rank(out.sigma, tol=1e-10) == 2

    def test_scalar_specialization_matches_1d_formula(self):
        model = GaussianSpec(np.array([0.3]), np.array([[0.09]]))
        out = mvn_worst_case_kl(model, np.array([[1.0]]), 2.0)
        assert out.sigma[0, 0] == pytest.approx(worst_case_variance_kl(0.09, 2.0), rel=1e-12)

    def test_feasibility_depends_on_sigma(self):
        model = GaussianSpec(np.zeros(1), np.array([[1.0]]))
        with pytest.raises(InfeasibilityError):
            mvn_worst_case_kl(model, np.array([[1.0]]), 0.6)  # 2*theta*sigma > 1

    def test_outputs_are_symmetric(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            model = GaussianSpec(rng.normal(size=3), random_spd(rng, 3))
            a = random_spd(rng, 3)
            out_kl = mvn_worst_case_kl(model, a, 0.03)
            out_w = mvn_worst_case_w(model, QuadraticFormSpec(a), RobustnessParams(alpha=0.2, beta=0.1))
            assert np.max(np.abs(out_kl.sigma - out_kl.sigma.T)) < 1e-10
            assert np.max(np.abs(out_w.sigma - out_w.sigma.T)) < 1e-10


class TestWorstCaseLinearMap:
    def test_zero_beta(self):
        forms = QuadraticFormSpec(np.eye(3) * 0.5, np.eye(3) * 2.0)
        np.testing.assert_array_equal(worst_case_linear_map(forms, 0.0), np.eye(3))

    def test_identity_forms(self):
        forms = QuadraticFormSpec(np.eye(2))
        np.testing.assert_allclose(worst_case_linear_map(forms, 0.5), 2.0 * np.eye(2), atol=1e-12)

    def test_map_attains_the_numeric_argmax(self):
        """The closed-form image maximizes y'Ay - (x-y)'B(x-y)/beta."""
        rng = np.random.default_rng(10)
        for _ in range(10):
            forms = QuadraticFormSpec(random_spd(rng, 3), random_spd(rng, 3, shift=1.0))
            beta = 0.8 / max(np.linalg.eigvalsh(np.linalg.solve(forms.B, forms.A)))
            g = worst_case_linear_map(forms, beta)
            x = rng.normal(size=3)

            def objective(y):
                return -(y @ forms.A @ y - (x - y) @ forms.B @ (x - y) / beta)

            res = minimize(objective, x, method="BFGS", options={"gtol": 1e-12})
            np.testing.assert_allclose(g @ x, res.x, atol=1e-6)


class TestVarianceMaximality:
    def test_no_feasible_alternative_beats_the_worst_case(self):
        """Gaussian alternative kernels with matched budgets stay below the bound.

        Alternatives move mass by y|x ~ N(x(1+g), tau^2).  Their transport
        cost is g^2 s2 + tau^2 and their conditional entropy grows with tau,
        so any (g, tau) with cost within the worst case's budget and spread
        at least the worst case's row spread is feasible; its variance
        (1+g)^2 s2 + tau^2 must not exceed the closed-form worst case.
        """
        rng = np.random.default_rng(12)
        for _ in range(200):
            s2 = rng.uniform(0.01, 0.5)
            alpha, beta = rng.uniform(0.05, 1.0), rng.uniform(0.05, 0.8)
            bound = worst_case_variance_w(s2, RobustnessParams(alpha=alpha, beta=beta))
            row_var = alpha * beta / (2.0 * (1.0 - beta))
            budget = (beta / (1.0 - beta)) ** 2 * s2 + row_var
            # sample alternatives inside the feasible set
            tau2 = rng.uniform(row_var, max(budget, row_var))
            g_max2 = max(budget - tau2, 0.0) / s2
            g = np.sqrt(rng.uniform(0.0, g_max2))
            alt_var = (1.0 + g) ** 2 * s2 + tau2
            cost = g**2 * s2 + tau2
            assert cost <= budget + 1e-12
            assert alt_var <= bound + 1e-9


class TestTypeValidation:
    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(ValidationError):
            GaussianSpec(np.zeros(2), np.array([[1.0, 0.2], [0.1, 1.0]]))

    def test_indefinite_covariance_rejected(self):
        with pytest.raises(ValidationError):
            GaussianSpec(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_metric_must_be_positive_definite(self):
        with pytest.raises(ValidationError):
            QuadraticFormSpec(np.eye(2), np.diag([1.0, 0.0]))

    def test_loss_matrix_must_be_psd(self):
        with pytest.raises(ValidationError):
            QuadraticFormSpec(np.diag([1.0, -0.5]))
