"""Tests for finite-state entropy, transport and worst-case arithmetic."""

import itertools

import numpy as np
import pytest

from wrisk.discrete import (
    CostMatrix,
    DiscreteDistribution,
    TransportPlan,
    discrete_worst_case,
    plan_cost,
    relative_entropy,
    wasserstein_distance,
)
from wrisk.errors import ValidationError
from wrisk.params import RobustnessParams

# ratings ladder positions for the three-state credit example: A+ / A- / BBB+
LADDER_LABELS = ("A+", "A-", "BBB+")
LADDER_POS = np.array([0.0, 2.0, 3.0])
LADDER_COST = CostMatrix.from_distances(np.abs(np.subtract.outer(LADDER_POS, LADDER_POS)), power=1)


def ladder_dist(probs) -> DiscreteDistribution:
    return DiscreteDistribution(LADDER_LABELS, np.asarray(probs, dtype=float))


def random_distribution(rng, labels) -> DiscreteDistribution:
    raw = rng.uniform(0.05, 1.0, size=len(labels))
    return DiscreteDistribution(labels, raw / raw.sum())


def transport_vertices(p, q, cost):
    """All basic feasible plans of the transport polytope, by basis enumeration.

    Every vertex is the unique solution of the marginal equations restricted
    to a spanning set of 2n-1 cells; enumerate those and keep the feasible
    ones.  Independent of the production LP path.
    """
    n = p.size
    cells = [(i, j) for i in range(n) for j in range(n)]
    b = np.concatenate([p, q])
    for basis in itertools.combinations(cells, 2 * n - 1):
        a = np.zeros((2 * n, 2 * n - 1))
        for k, (i, j) in enumerate(basis):
            a[i, k] = 1.0
            a[n + j, k] = 1.0
        x, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
        if rank < 2 * n - 1:
            continue
        if np.max(np.abs(a @ x - b)) > 1e-12 or np.min(x) < -1e-12:
            continue
        yield sum(max(v, 0.0) * cost[i, j] for v, (i, j) in zip(x, basis))


class TestRelativeEntropy:
    def test_credit_example_value(self):
        """Moving 5% of mass two ladder notches costs about 0.0101 nats."""
        value = relative_entropy(ladder_dist([0.2, 0.5, 0.3]), ladder_dist([0.25, 0.5, 0.25]))
        assert value == pytest.approx(0.0101, abs=5e-4)
        # hand value: 0.2 ln 0.8 + 0.3 ln 1.2
        assert value == pytest.approx(0.2 * np.log(0.8) + 0.3 * np.log(1.2), rel=1e-14)

    def test_identical_distributions(self):
        q = ladder_dist([0.25, 0.5, 0.25])
        assert relative_entropy(q, q) == 0.0

    def test_support_escape_is_infinite(self):
        q = ladder_dist([0.2, 0.5, 0.3])
        p = ladder_dist([0.25, 0.75, 0.0])
        assert relative_entropy(q, p) == float("inf")

    def test_mismatched_labels_raise(self):
        p = ladder_dist([0.25, 0.5, 0.25])
        q = DiscreteDistribution(("X", "Y", "Z"), np.array([0.2, 0.5, 0.3]))
        with pytest.raises(ValidationError):
            relative_entropy(q, p)

    def test_nonnegative_and_zero_iff_equal(self):
        rng = np.random.default_rng(7)
        labels = tuple("abcde")
        for _ in range(200):
            p = random_distribution(rng, labels)
            q = random_distribution(rng, labels)
            d = relative_entropy(q, p)
            assert d >= 0.0
            if d < 1e-14:
                np.testing.assert_allclose(q.probs, p.probs, atol=1e-6)


class TestPlanCost:
    def test_shift_three_notches(self):
        gamma = np.diag([0.25, 0.5, 0.25]).astype(float)
        gamma[0, 0] -= 0.05
        gamma[0, 2] += 0.05
        assert plan_cost(TransportPlan(gamma), LADDER_COST) == pytest.approx(0.15, abs=1e-15)

    def test_shift_four_notches(self):
        # include the probability-zero BBB state, one notch past BBB+
        pos = np.array([0.0, 2.0, 3.0, 4.0])
        cost = CostMatrix.from_distances(np.abs(np.subtract.outer(pos, pos)), power=1)
        gamma = np.zeros((4, 4))
        gamma[0, 0], gamma[1, 1], gamma[2, 2] = 0.20, 0.5, 0.25
        gamma[0, 3] = 0.05
        assert plan_cost(TransportPlan(gamma), cost) == pytest.approx(0.20, abs=1e-15)

    def test_identity_plan_is_free(self):
        p = ladder_dist([0.25, 0.5, 0.25])
        assert plan_cost(TransportPlan.identity(p), LADDER_COST) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            plan_cost(TransportPlan(np.full((2, 2), 0.25)), LADDER_COST)


class TestWasserstein:
    def test_equal_distributions(self):
        p = ladder_dist([0.25, 0.5, 0.25])
        assert wasserstein_distance(p, p, LADDER_COST).distance == pytest.approx(0.0, abs=1e-12)

    def test_two_point_masses(self):
        labels = ("A", "B")
        cost = CostMatrix.from_distances(np.array([[0.0, 3.0], [3.0, 0.0]]), power=1)
        p = DiscreteDistribution(labels, np.array([1.0, 0.0]))
        q = DiscreteDistribution(labels, np.array([0.0, 1.0]))
        assert wasserstein_distance(p, q, cost).distance == pytest.approx(3.0, abs=1e-12)

    def test_credit_example_against_vertex_enumeration(self):
        """Exact LP agrees with brute-force vertex enumeration (frozen: 0.15)."""
        p = ladder_dist([0.25, 0.5, 0.25])
        q = ladder_dist([0.2, 0.5, 0.3])
        oracle = min(transport_vertices(p.probs, q.probs, LADDER_COST.entries))
        assert oracle == pytest.approx(0.15, abs=1e-12)
        result = wasserstein_distance(p, q, LADDER_COST)
        assert result.distance == pytest.approx(oracle, abs=1e-10)
        np.testing.assert_allclose(result.plan.source_marginal(), p.probs, atol=1e-10)
        np.testing.assert_allclose(result.plan.target_marginal(), q.probs, atol=1e-10)

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(11)
        labels = tuple("abcd")
        cost = CostMatrix.rating_ladder(4, power=1)
        for _ in range(25):
            p, q, r = (random_distribution(rng, labels) for _ in range(3))
            d_pq = wasserstein_distance(p, q, cost).distance
            d_qp = wasserstein_distance(q, p, cost).distance
            d_pr = wasserstein_distance(p, r, cost).distance
            d_rq = wasserstein_distance(r, q, cost).distance
            assert d_pq == pytest.approx(d_qp, abs=1e-9)
            assert d_pq <= d_pr + d_rq + 1e-9

    def test_distance_is_infimum_over_plans(self):
        rng = np.random.default_rng(3)
        labels = tuple("abcd")
        cost = CostMatrix.rating_ladder(4, power=2)
        for _ in range(20):
            p = random_distribution(rng, labels)
            q = random_distribution(rng, labels)
            w = wasserstein_distance(p, q, cost).distance
            # any feasible plan costs at least the infimum
            gamma = np.outer(p.probs, q.probs)  # independent coupling is always feasible
            assert plan_cost(TransportPlan(gamma), cost) >= w**cost.power - 1e-9


class TestDiscreteWorstCase:
    uniform_prior = DiscreteDistribution(LADDER_LABELS, np.full(3, 1.0 / 3.0))

    def test_transport_budget_zero_returns_reference(self):
        p = ladder_dist([0.25, 0.5, 0.25])
        out = discrete_worst_case(
            p, [0.0, 0.0, 1.0], LADDER_COST, RobustnessParams(alpha=1.0, beta=1e-12), self.uniform_prior
        )
        np.testing.assert_allclose(out.probs, p.probs, atol=1e-12)

    def test_point_mass_reference_spreads_over_prior_support(self):
        p = ladder_dist([1.0, 0.0, 0.0])
        out = discrete_worst_case(
            p, [0.0, 0.0, 1.0], LADDER_COST, RobustnessParams(alpha=1.0, beta=1.0), self.uniform_prior
        )
        assert np.all(out.probs > 0.0)

    def test_three_state_against_high_precision_oracle(self):
        """Frozen from a 50-digit direct summation of the tilting formula."""
        p = ladder_dist([0.25, 0.5, 0.25])
        out = discrete_worst_case(
            p, [0.0, 0.0, 1.0], LADDER_COST, RobustnessParams(alpha=1.0, beta=1.0), self.uniform_prior
        )
        expected = [0.23240503970103513, 0.29010961710309037, 0.4774853431958745]
        np.testing.assert_allclose(out.probs, expected, rtol=1e-12)

    def test_normalization_and_loss_monotonicity(self):
        rng = np.random.default_rng(5)
        p = ladder_dist([0.25, 0.5, 0.25])
        params = RobustnessParams(alpha=0.7, beta=0.9)
        for _ in range(50):
            v = rng.normal(size=3)
            out = discrete_worst_case(p, v, LADDER_COST, params, self.uniform_prior)
            assert abs(out.probs.sum() - 1.0) < 1e-10
            j = rng.integers(3)
            bumped = v.copy()
            bumped[j] += rng.uniform(0.1, 1.0)
            out2 = discrete_worst_case(p, bumped, LADDER_COST, params, self.uniform_prior)
            assert out2.probs[j] >= out.probs[j] - 1e-12

    def test_invalid_multipliers(self):
        p = ladder_dist([0.25, 0.5, 0.25])
        with pytest.raises(ValidationError):
            discrete_worst_case(p, [0, 0, 1], LADDER_COST, RobustnessParams(alpha=0.0, beta=1.0), self.uniform_prior)


class TestTypeInvariants:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            DiscreteDistribution(("a", "b"), np.array([0.6, 0.5]))

    def test_negative_probability_rejected(self):
        with pytest.raises(ValidationError):
            DiscreteDistribution(("a", "b"), np.array([1.2, -0.2]))

    def test_cost_matrix_needs_zero_diagonal(self):
        with pytest.raises(ValidationError):
            CostMatrix(np.array([[1.0, 2.0], [2.0, 0.0]]))

    def test_cost_matrix_needs_symmetry(self):
        with pytest.raises(ValidationError):
            CostMatrix(np.array([[0.0, 2.0], [1.0, 0.0]]))

    def test_cost_matrix_triangle_inequality(self):
        bad = np.array([[0.0, 1.0, 9.0], [1.0, 0.0, 1.0], [9.0, 1.0, 0.0]])
        with pytest.raises(ValidationError):
            CostMatrix(bad, power=1)
        # squared distances may violate the triangle inequality raw; the check
        # applies to d = entries**(1/power), so these pass with power=2
        ok = np.array([[0.0, 1.0, 4.0], [1.0, 0.0, 1.0], [4.0, 1.0, 0.0]])
        CostMatrix(ok, power=2)

    def test_plan_rejects_negative_mass(self):
        with pytest.raises(ValidationError):
            TransportPlan(np.array([[0.5, -0.1], [0.0, 0.6]]))

    def test_plan_source_validation(self):
        p = ladder_dist([0.25, 0.5, 0.25])
        plan = TransportPlan.identity(p)
        plan.validate_source(p)
        with pytest.raises(ValidationError):
            plan.validate_source(ladder_dist([0.3, 0.4, 0.3]))
