"""Finite-state probability arithmetic: entropy, transport plans and the
exact earth-mover distance, plus the discrete worst-case measure.

Everything here works on small label sets (a ratings ladder, a handful of
scenario states) and favours exactness over speed: the transport problem is
solved as an exact linear program, not an entropic approximation, so this
module doubles as the brute-force oracle for the grid and Monte Carlo
solvers elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from wrisk.errors import ValidationError
from wrisk.params import RobustnessParams

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteDistribution:
    """A probability vector over named states.

    Probabilities must be nonnegative and sum to one within 1e-12; zero
    entries are allowed (the whole point of transport distances is coping
    with mismatched supports).
    """

    labels: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        labels = tuple(str(s) for s in self.labels)
        probs = np.asarray(self.probs, dtype=float).copy()
        if probs.ndim != 1 or len(labels) != probs.size:
            raise ValidationError("labels and probs must be 1-D and the same length")
        if len(set(labels)) != len(labels):
            raise ValidationError("state labels must be unique")
        if np.any(probs < 0.0):
            raise ValidationError("probabilities must be >= 0")
        if abs(probs.sum() - 1.0) > _PROB_TOL:
            raise ValidationError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise transport costs c(i, j) = d(i, j)**power for a metric d.

    The diagonal must vanish, the matrix must be symmetric, and the
    underlying d = entries**(1/power) must satisfy the triangle inequality.
    """

    entries: np.ndarray
    power: int = 1

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float).copy()
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError("cost matrix must be square")
        if int(self.power) != self.power or self.power < 1:
            raise ValidationError(f"power must be an integer >= 1, got {self.power!r}")
        if np.any(entries < 0.0):
            raise ValidationError("costs must be >= 0")
        if np.any(np.abs(np.diag(entries)) > 0.0):
            raise ValidationError("cost matrix must have a zero diagonal")
        if not np.allclose(entries, entries.T, rtol=0.0, atol=1e-12):
            raise ValidationError("cost matrix must be symmetric")
        d = entries ** (1.0 / self.power)
        # d(i,k) <= d(i,j) + d(j,k) for all triples
        slack = d[:, None, :] - (d[:, :, None] + d[None, :, :])
        if np.max(slack) > 1e-9:
            raise ValidationError("entries**(1/power) violates the triangle inequality")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "power", int(self.power))

    @classmethod
    def from_distances(cls, distances: np.ndarray, power: int = 1) -> "CostMatrix":
        d = np.asarray(distances, dtype=float)
        return cls(entries=d**power, power=power)

    @classmethod
    def rating_ladder(cls, n_states: int, power: int = 1) -> "CostMatrix":
        """Counting metric d(i, j) = |i - j| on an ordered ladder of states."""
        idx = np.arange(n_states, dtype=float)
        return cls.from_distances(np.abs(idx[:, None] - idx[None, :]), power=power)

    @property
    def n_states(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class TransportPlan:
    """A joint mass assignment gamma[i, j] from source states to target states."""

    gamma: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        gamma = np.asarray(self.gamma, dtype=float).copy()
        if gamma.ndim != 2:
            raise ValidationError("transport plan must be a 2-D array")
        if np.any(gamma < -_PROB_TOL):
            raise ValidationError("transport plan entries must be >= 0")
        gamma = np.maximum(gamma, 0.0)
        gamma.flags.writeable = False
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "labels", tuple(self.labels))

    def source_marginal(self) -> np.ndarray:
        return self.gamma.sum(axis=1)

    def target_marginal(self) -> np.ndarray:
        return self.gamma.sum(axis=0)

    def validate_source(self, p: DiscreteDistribution, tol: float = 1e-9) -> None:
        """Check the row sums against a prescribed source distribution."""
        if self.gamma.shape[0] != p.n_states:
            raise ValidationError("plan row count does not match source states")
        if np.max(np.abs(self.source_marginal() - p.probs)) > tol:
            raise ValidationError("plan row sums do not match the source distribution")

    @classmethod
    def identity(cls, p: DiscreteDistribution) -> "TransportPlan":
        """The do-nothing plan: all mass stays on the diagonal."""
        return cls(gamma=np.diag(p.probs), labels=p.labels)


class WassersteinResult(NamedTuple):
    distance: float
    plan: TransportPlan


def _require_same_labels(q: DiscreteDistribution, p: DiscreteDistribution) -> None:
    if q.labels != p.labels:
        raise ValidationError(f"label sets differ: {q.labels} vs {p.labels}")


def relative_entropy(q: DiscreteDistribution, p: DiscreteDistribution) -> float:
    """Relative entropy (KL divergence) sum_i q_i ln(q_i / p_i).

    Uses the convention 0 ln 0 = 0.  Where q puts mass on a state with
    p_i = 0 the divergence is infinite; that is the expected answer for a
    non-absolutely-continuous alternative, so +inf is returned as a value
    rather than raised.  The sum runs over all states (states with
    q_i = p_i contribute exactly zero, so this matches summing only the
    perturbed states).
    """
    _require_same_labels(q, p)
    qp, pp = q.probs, p.probs
    if np.any((pp == 0.0) & (qp > 0.0)):
        return float("inf")
    mask = qp > 0.0
    return float(np.sum(qp[mask] * np.log(qp[mask] / pp[mask])))


def plan_cost(plan: TransportPlan, cost: CostMatrix) -> float:
    """Total expected transport cost sum_{ij} gamma[i, j] * c[i, j]."""
    if plan.gamma.shape != cost.entries.shape:
        raise ValidationError(
            f"plan shape {plan.gamma.shape} does not match cost shape {cost.entries.shape}"
        )
    return float(np.sum(plan.gamma * cost.entries))


def wasserstein_distance(
    p: DiscreteDistribution, q: DiscreteDistribution, cost: CostMatrix
) -> WassersteinResult:
    """Exact n-th transport distance between two distributions.

    Solves the optimal-plan linear program exactly (HiGHS simplex) and
    returns (cost of the optimal plan)**(1/power) together with the plan
    itself.  Intended for desk-scale state counts (<= ~50 states).
    """
    _require_same_labels(p, q)
    n = p.n_states
    if cost.n_states != n:
        raise ValidationError("cost matrix size does not match distributions")
    if n > 60:
        raise ValidationError("exact solver is limited to small state spaces (<= 60)")

    # Equality constraints: row sums = p, column sums = q.
    a_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        a_eq[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        a_eq[n + j, j::n] = 1.0
    b_eq = np.concatenate([p.probs, q.probs])

    res = linprog(
        c=cost.entries.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0.0, None),
        method="highs",
    )
    if not res.success:  # pragma: no cover - marginals are pre-validated
        raise ValidationError(f"transport LP failed: {res.message}")
    gamma = res.x.reshape(n, n)
    distance = max(res.fun, 0.0) ** (1.0 / cost.power)
    return WassersteinResult(distance=float(distance), plan=TransportPlan(gamma, p.labels))


def discrete_worst_case(
    p: DiscreteDistribution,
    loss: Sequence[float],
    cost: CostMatrix,
    params: RobustnessParams,
    prior: DiscreteDistribution,
) -> DiscreteDistribution:
    """Worst-case distribution on a finite state space.

    For each source state i the adversary's transition row is the prior
    tilted by exp(V(j)/alpha - c(i, j)/(alpha*beta)), normalized over j;
    the worst case mixes the rows with weights p.  Because the prior is
    strictly positive and the tilt is a positive factor, the output is
    supported wherever the prior is, even for a point-mass p.
    """
    _require_same_labels(p, prior)
    params.require_transport()
    v = np.asarray(loss, dtype=float)
    if v.shape != (p.n_states,):
        raise ValidationError("loss must provide one value per state")
    if cost.n_states != p.n_states:
        raise ValidationError("cost matrix size does not match distributions")
    if np.any(prior.probs <= 0.0):
        raise ValidationError("prior must be strictly positive on every state")

    # log prior[j] + V[j]/alpha - c[i,j]/(alpha beta), normalized per row
    log_w = (
        np.log(prior.probs)[None, :]
        + v[None, :] / params.alpha
        - cost.entries / (params.alpha * params.beta)
    )
    log_rows = log_w - logsumexp(log_w, axis=1, keepdims=True)
    q = p.probs @ np.exp(log_rows)
    q = q / q.sum()
    return DiscreteDistribution(labels=p.labels, probs=q)
