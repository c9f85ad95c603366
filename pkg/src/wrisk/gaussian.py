"""Exact worst-case results for Gaussian and point-mass reference models.

Covers the point-mass (jump) worst case on the line, scalar worst-case
variance under both the transport and relative-entropy budgets, and the
multivariate worst-case mean/covariance pair, including the linear map that
attains the transport worst case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from wrisk.density import (
    DEFAULT_N_POINTS,
    _BOUNDARY_FRACTION,
    _boundary_mass_fraction,
    CostSpec,
    GridDensity,
    LossSpec,
    default_grid_bounds,
    grid_nodes,
    kl_worst_case,  # noqa: F401  (re-exported for 1-D cross-checks)
    trapezoid_weights,
)
from wrisk.errors import InfeasibilityError, IntegrabilityError, ValidationError
from wrisk.params import RobustnessParams

_SYM_TOL = 1e-12
_PSD_TOL = 1e-10
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class GaussianSpec:
    """Mean vector and covariance matrix of a multivariate normal model."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).copy()
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float)).copy()
        n = mu.size
        if sigma.shape != (n, n):
            raise ValidationError(f"covariance shape {sigma.shape} does not match mean length {n}")
        scale = max(1.0, float(np.max(np.abs(sigma))))
        if np.max(np.abs(sigma - sigma.T)) > _SYM_TOL * scale:
            raise ValidationError("covariance must be symmetric within 1e-12")
        sigma = 0.5 * (sigma + sigma.T)
        if np.min(np.linalg.eigvalsh(sigma)) < -_PSD_TOL:
            raise ValidationError("covariance must be positive semi-definite")
        mu.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_assets(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class QuadraticFormSpec:
    """Loss matrix A (PSD) and metric matrix B (PD) for quadratic problems.

    The loss is V(x) = x'Ax and the transport cost is the squared B-norm
    (x - y)'B(x - y).  B defaults to the identity.
    """

    A: np.ndarray
    B: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.A, dtype=float)).copy()
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValidationError("A must be square")
        b = np.eye(n) if self.B is None else np.atleast_2d(np.asarray(self.B, dtype=float)).copy()
        if b.shape != (n, n):
            raise ValidationError("B must match the shape of A")
        for name, m in (("A", a), ("B", b)):
            scale = max(1.0, float(np.max(np.abs(m))))
            if np.max(np.abs(m - m.T)) > _SYM_TOL * scale:
                raise ValidationError(f"{name} must be symmetric within 1e-12")
        a = 0.5 * (a + a.T)
        b = 0.5 * (b + b.T)
        if np.min(np.linalg.eigvalsh(a)) < -_PSD_TOL:
            raise ValidationError("A must be positive semi-definite")
        if np.min(np.linalg.eigvalsh(b)) <= 0.0:
            raise ValidationError("B must be positive definite")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _solve_checked(m: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Solve m @ x = rhs with an explicit near-singularity diagnostic."""
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise InfeasibilityError(f"{what} is near-singular (condition number {cond:.3e})")
    return scipy.linalg.solve(m, rhs)


def _metric_minus_loss(forms: QuadraticFormSpec, beta: float) -> np.ndarray:
    """B - beta*A, validated positive definite (the sole feasibility condition)."""
    if beta < 0.0 or not math.isfinite(beta):
        raise ValidationError("beta must be finite and >= 0")
    s = forms.B - beta * forms.A
    smallest = float(np.min(np.linalg.eigvalsh(s)))
    if smallest <= 0.0:
        raise InfeasibilityError(
            f"B - beta*A is not positive definite (smallest eigenvalue {smallest:.6e}); "
            f"reduce beta below the feasibility threshold"
        )
    return s


def dirac_worst_case(
    point: float,
    loss: LossSpec,
    params: RobustnessParams,
    grid: Optional[tuple[float, float, int]] = None,
) -> GridDensity:
    """Worst-case density for a point-mass reference under quadratic transport cost.

    q(x) is proportional to exp(V(x)/alpha - (x - point)^2/(alpha*beta)).
    Linear and quadratic losses use exact Gaussian algebra; tabulated losses
    fall back to guarded grid quadrature.
    """
    params.require_transport()
    a, b = params.alpha, params.beta

    if loss.kind == "linear":
        mean = point + b / 2.0
        var = a * b / 2.0
    elif loss.kind == "quadratic":
        if b >= 1.0:
            raise InfeasibilityError(
                "quadratic loss with beta >= 1 outgrows the transport penalty (non-integrable)"
            )
        mean = (point - b * loss.center) / (1.0 - b)
        var = a * b / (2.0 * (1.0 - b))
    else:
        if grid is None:
            raise ValidationError("a grid (lo, hi, n) is required for tabulated losses")
        lo, hi, n = grid
        x = grid_nodes(lo, hi, n)
        log_q = loss.evaluate(x) / a - (x - point) ** 2 / (a * b)
        log_q -= np.max(log_q)
        values = np.exp(log_q)
        w = trapezoid_weights(lo, hi, n)
        total = float(w @ values)
        if total <= 0.0 or not np.isfinite(total):
            raise IntegrabilityError("point-mass worst case failed to normalize")
        q = GridDensity.from_values(lo, hi, values)
        if _boundary_mass_fraction(q.values, w) > _BOUNDARY_FRACTION:
            raise IntegrabilityError(
                "point-mass worst case piles mass against the grid boundary; "
                "the tabulated loss grows too fast for this beta"
            )
        return q

    std = math.sqrt(var)
    if grid is None:
        lo, hi = default_grid_bounds(mean, std)
        n = DEFAULT_N_POINTS
    else:
        lo, hi, n = grid
    return GridDensity.normal(mean, std, lo, hi, n)


def worst_case_variance_w(sigma2_t: float, params: RobustnessParams) -> float:
    """Worst-case variance under the transport budget for a quadratic loss.

    sigma2_t / (1 - beta)^2 + alpha*beta / (2*(1 - beta)); valid for
    0 <= beta < 1 (at beta >= 1 the quadratic tilt is non-integrable).
    Strictly positive for alpha, beta > 0 even when sigma2_t = 0.
    """
    if sigma2_t < 0.0:
        raise ValidationError("variance must be >= 0")
    b = params.beta
    if b >= 1.0:
        raise InfeasibilityError(f"beta={b} >= 1: worst-case variance diverges")
    return sigma2_t / (1.0 - b) ** 2 + params.alpha * b / (2.0 * (1.0 - b))


def worst_case_variance_kl(sigma2_t: float, theta: float) -> float:
    """Worst-case variance under the relative-entropy budget: s/(1 - 2*theta*s).

    Requires 2*theta*sigma2_t < 1; note the feasible range depends on the
    reference variance itself, unlike the transport version.  Vanishes with
    sigma2_t: the entropy route sees no variance risk in a point mass.
    """
    if sigma2_t < 0.0:
        raise ValidationError("variance must be >= 0")
    if theta < 0.0 or not math.isfinite(theta):
        raise ValidationError("theta must be finite and >= 0")
    gate = 2.0 * theta * sigma2_t
    if gate >= 1.0:
        raise InfeasibilityError(
            f"2*theta*sigma2 = {gate:.6f} >= 1: entropy-tilted density is non-integrable"
        )
    return sigma2_t / (1.0 - gate)


def mvn_worst_case_w(
    model: GaussianSpec, forms: QuadraticFormSpec, params: RobustnessParams
) -> GaussianSpec:
    """Multivariate transport worst case for loss x'Ax and B-norm cost.

    mu_W = (B - beta*A)^-1 B mu
    Sigma_W = (B - beta*A)^-1 B Sigma B (B - beta*A)^-1 + (alpha*beta/2)(B - beta*A)^-1

    Feasibility depends only on (A, B, beta), never on Sigma.  With alpha = 0
    this is exactly the pushforward of the model under the linear map
    (B - beta*A)^-1 B; with alpha > 0 the additive term makes Sigma_W strictly
    positive definite regardless of the rank of Sigma.
    """
    if model.n_assets != forms.n:
        raise ValidationError("model and quadratic forms have different dimensions")
    s = _metric_minus_loss(forms, params.beta)
    g = _solve_checked(s, forms.B, "B - beta*A")  # (B - beta*A)^-1 B
    mu_w = g @ model.mu
    sigma_w = g @ model.sigma @ g.T
    if params.alpha > 0.0:
        sigma_w = sigma_w + 0.5 * params.alpha * params.beta * _solve_checked(
            s, np.eye(forms.n), "B - beta*A"
        )
    sigma_w = 0.5 * (sigma_w + sigma_w.T)
    return GaussianSpec(mu=mu_w, sigma=sigma_w)


def mvn_worst_case_kl(model: GaussianSpec, A: np.ndarray, theta: float) -> GaussianSpec:
    """Multivariate relative-entropy worst case for loss x'Ax.

    mu_KL = (I - 2*theta*Sigma*A)^-1 mu, Sigma_KL = (I - 2*theta*Sigma*A)^-1 Sigma.
    Feasibility depends on Sigma itself; the null space of Sigma is carried
    over unchanged (the entropy route cannot leave the support).
    """
    if theta < 0.0 or not math.isfinite(theta):
        raise ValidationError("theta must be finite and >= 0")
    a = np.atleast_2d(np.asarray(A, dtype=float))
    n = model.n_assets
    if a.shape != (n, n):
        raise ValidationError("loss matrix shape does not match the model")
    m = np.eye(n) - 2.0 * theta * model.sigma @ a
    mu_kl = _solve_checked(m, model.mu, "I - 2*theta*Sigma*A")
    sigma_kl = _solve_checked(m, model.sigma, "I - 2*theta*Sigma*A")
    asym = float(np.max(np.abs(sigma_kl - sigma_kl.T)))
    if asym > 1e-8 * max(1.0, float(np.max(np.abs(sigma_kl)))):
        raise InfeasibilityError("entropy worst-case covariance lost symmetry; theta too large")
    sigma_kl = 0.5 * (sigma_kl + sigma_kl.T)
    smallest = float(np.min(np.linalg.eigvalsh(sigma_kl)))
    if smallest < -_PSD_TOL:
        raise InfeasibilityError(
            f"entropy worst-case covariance has negative eigenvalue {smallest:.6e}; "
            f"feasibility depends on the reference covariance, reduce theta"
        )
    return GaussianSpec(mu=mu_kl, sigma=sigma_kl)


def worst_case_linear_map(forms: QuadraticFormSpec, beta: float) -> np.ndarray:
    """The linear map (B - beta*A)^-1 B attaining the transport worst case.

    Applied to any state x, the image maximizes y'Ay - (x - y)'B(x - y)/beta;
    at beta = 0 it is the identity.
    """
    if beta == 0.0:
        return np.eye(forms.n)
    s = _metric_minus_loss(forms, beta)
    return _solve_checked(s, forms.B, "B - beta*A")
