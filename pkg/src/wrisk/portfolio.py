"""Mean-variance optimization under model risk.

Nominal mean-variance weights, first-order robust corrections under the
relative-entropy and transport budgets, the robust Sharpe ratio, the
effective covariance matrix behind the transport correction, and capital
market line generation.

Conventions: mu holds excess returns, lambda is the risk-appetite Lagrange
multiplier (a* = lambda/2 * Sigma^-1 mu), and worst-case evaluation on the
frontier uses the exact worst-case measures at the chosen weights rather
than their first-order expansions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from wrisk.errors import InfeasibilityError, ValidationError
from wrisk.gaussian import GaussianSpec, _solve_checked
from wrisk.params import RobustnessParams


@dataclass(frozen=True)
class PortfolioProblem:
    """Excess-return model plus the transport metric and a lambda grid."""

    model: GaussianSpec
    B: Optional[np.ndarray] = None
    lambda_grid: Sequence[float] = field(default_factory=lambda: (0.5, 1.0, 1.5, 2.0))

    def __post_init__(self) -> None:
        n = self.model.n_assets
        b = np.eye(n) if self.B is None else np.atleast_2d(np.asarray(self.B, dtype=float)).copy()
        if b.shape != (n, n):
            raise ValidationError("metric matrix B must match the number of assets")
        if np.max(np.abs(b - b.T)) > 1e-12 * max(1.0, float(np.max(np.abs(b)))):
            raise ValidationError("metric matrix B must be symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (b + b.T))) <= 0.0:
            raise ValidationError("metric matrix B must be positive definite")
        lams = tuple(float(l) for l in self.lambda_grid)
        if any((not math.isfinite(l)) or l <= 0.0 for l in lams):
            raise ValidationError("lambda grid values must be finite and > 0")
        b.flags.writeable = False
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "lambda_grid", lams)

    @property
    def b_is_identity(self) -> bool:
        return bool(np.array_equal(self.B, np.eye(self.model.n_assets)))


@dataclass(frozen=True)
class FrontierPoint:
    """One capital-market-line point: risk, excess return and the weights behind them."""

    lam: float
    std_dev: float
    excess_return: float
    sharpe: float
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.std_dev < 0.0:
            raise ValidationError("std_dev must be >= 0")
        w = np.asarray(self.weights, dtype=float).copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


class SharpeResult(NamedTuple):
    first_order: float
    exact: float


class EigenAdjustment(NamedTuple):
    original: float
    adjusted: float
    first_order: float


class EffectiveCovarianceResult(NamedTuple):
    matrix: np.ndarray
    eigenvalues: list[EigenAdjustment]
    c: float
    d: float


def _solve_sigma(model: GaussianSpec, rhs: np.ndarray) -> np.ndarray:
    try:
        return _solve_checked(model.sigma, rhs, "covariance matrix")
    except InfeasibilityError as exc:
        raise InfeasibilityError(
            f"{exc}; nominal mean-variance weights are undefined for a singular "
            f"covariance, consider the robust transport variant"
        ) from exc


def mvo_weights(model: GaussianSpec, lam: float) -> np.ndarray:
    """Nominal mean-variance weights a* = (lambda/2) Sigma^-1 mu."""
    if lam <= 0.0:
        raise ValidationError("lambda must be > 0")
    return 0.5 * lam * _solve_sigma(model, model.mu)


def nominal_sharpe(model: GaussianSpec) -> float:
    """sqrt(mu' Sigma^-1 mu): the lambda-independent Sharpe ratio of a*."""
    return math.sqrt(float(model.mu @ _solve_sigma(model, model.mu)))


def max_safe_theta(model: GaussianSpec, lam: float) -> float:
    """Largest theta keeping the entropy-robust scaling coefficient positive."""
    q = float(model.mu @ _solve_sigma(model, model.mu))
    return 1.0 / (lam**2 * (1.0 + q))


def robust_weights_kl(model: GaussianSpec, lam: float, theta: float) -> np.ndarray:
    """Entropy-robust weights: a shrunk copy of the nominal weights.

    a*_KL = c a* with c = 1 - theta*lambda^2*(1 + mu' Sigma^-1 mu); the
    correction is first order in theta and keeps the direction of a*
    (relative asset weights are untouched).
    """
    if theta < 0.0:
        raise ValidationError("theta must be >= 0")
    a_star = mvo_weights(model, lam)
    q = float(model.mu @ _solve_sigma(model, model.mu))
    c = 1.0 - theta * lam**2 * (1.0 + q)
    if c <= 0.0:
        raise InfeasibilityError(
            f"entropy budget too large: scaling coefficient c={c:.6f} <= 0 "
            f"(max safe theta is {max_safe_theta(model, lam):.6g})"
        )
    return c * a_star


def max_safe_beta(problem: PortfolioProblem, lam: float) -> float:
    """Largest beta keeping the transport-robust scaling coefficient positive."""
    model = problem.model
    sinv_mu = _solve_sigma(model, model.mu)
    s1 = float(sinv_mu @ np.linalg.solve(problem.B, sinv_mu))
    return 2.0 / (lam**2 * s1)


def robust_weights_w(problem: PortfolioProblem, lam: float, beta: float) -> np.ndarray:
    """Transport-robust weights: shrink plus a genuine rotation.

    a*_W = (c I - D) a* with
      c = 1 - (beta*lambda^2/2) mu' Sigma^-1 B^-1 Sigma^-1 mu
      D = (beta*lambda^2/2) (1 + mu' Sigma^-1 mu) Sigma^-1 B^-1.
    Unlike the entropy version the matrix D re-mixes the assets, cutting
    back spread positions on highly correlated pairs.
    """
    if beta < 0.0:
        raise ValidationError("beta must be >= 0")
    model = problem.model
    a_star = mvo_weights(model, lam)
    sinv_mu = _solve_sigma(model, model.mu)
    binv_sinv_mu = np.linalg.solve(problem.B, sinv_mu)
    s1 = float(sinv_mu @ binv_sinv_mu)
    q = float(model.mu @ sinv_mu)
    c = 1.0 - 0.5 * beta * lam**2 * s1
    if c <= 0.0:
        raise InfeasibilityError(
            f"transport budget too large: scaling coefficient c={c:.6f} <= 0 "
            f"(max safe beta is {max_safe_beta(problem, lam):.6g})"
        )
    d = 0.5 * beta * lam**2 * (1.0 + q)
    # D a* = d Sigma^-1 B^-1 a*
    da = d * _solve_sigma(model, np.linalg.solve(problem.B, a_star))
    return c * a_star - da


def _kl_worst_measure(model: GaussianSpec, a: np.ndarray, lam: float, theta: float) -> GaussianSpec:
    """Exact entropy worst-case measure at portfolio a (loss matrix a a')."""
    n = model.n_assets
    m = np.eye(n) - 2.0 * theta * model.sigma @ np.outer(a, a)
    sigma_kl = _solve_checked(m, model.sigma, "I - 2*theta*Sigma*aa'")
    mu_kl = model.mu - lam * theta * _solve_checked(m, model.sigma @ a, "I - 2*theta*Sigma*aa'")
    sigma_kl = 0.5 * (sigma_kl + sigma_kl.T)
    if float(np.min(np.linalg.eigvalsh(sigma_kl))) < -1e-10:
        raise InfeasibilityError("entropy worst-case covariance lost positive semi-definiteness")
    return GaussianSpec(mu=mu_kl, sigma=sigma_kl)


def _w_worst_measure(
    problem: PortfolioProblem, a: np.ndarray, lam: float, beta: float
) -> GaussianSpec:
    """Exact transport worst-case measure at portfolio a (pure-transport, alpha = 0)."""
    model = problem.model
    n = model.n_assets
    binv_a = np.linalg.solve(problem.B, a)
    m = np.eye(n) - beta * np.outer(binv_a, a)  # I - beta B^-1 aa'
    gate = 1.0 - beta * float(a @ binv_a)
    if gate <= 0.0:
        raise InfeasibilityError(
            f"B - beta*aa' loses positive definiteness at lambda={lam:g} "
            f"(1 - beta a'B^-1 a = {gate:.6f}); reduce beta or the lambda range"
        )
    g = np.linalg.solve(m, np.eye(n))  # (I - beta B^-1 aa')^-1
    sigma_w = g @ model.sigma @ g.T
    mu_w = model.mu - 0.5 * lam * beta * (g @ binv_a)
    return GaussianSpec(mu=mu_w, sigma=0.5 * (sigma_w + sigma_w.T))


def robust_sharpe_kl(model: GaussianSpec, lam: float, theta: float) -> SharpeResult:
    """Sharpe ratio of the entropy-robust portfolio under its worst-case measure.

    Returns the first-order closed form
      S_KL = (1 - (theta/4) lambda^2 c (c S^2 + 2)) S,  S = sqrt(mu' Sigma^-1 mu)
    together with the exact ratio mu_KL'a / sqrt(a' Sigma_KL a) evaluated at
    the robust weights under the exact worst-case measure; the two agree to
    O(theta^2).
    """
    a = robust_weights_kl(model, lam, theta)
    q = float(model.mu @ _solve_sigma(model, model.mu))
    s = math.sqrt(q)
    c = 1.0 - theta * lam**2 * (1.0 + q)
    first_order = (1.0 - 0.25 * theta * lam**2 * c * (c * q + 2.0)) * s
    measure = _kl_worst_measure(model, a, lam, theta)
    exact = float(measure.mu @ a) / math.sqrt(float(a @ measure.sigma @ a))
    return SharpeResult(first_order=first_order, exact=exact)


def effective_covariance(
    problem: PortfolioProblem, lam: float, beta: float
) -> EffectiveCovarianceResult:
    """Effective covariance whose nominal optimizer equals the transport-robust weights.

    Sigma* = Sigma (c I - d Sigma^-1)^-1 with d = (beta*lambda^2/2)(1 + mu' Sigma^-1 mu).
    Each eigenvalue x of Sigma maps to x/(c - d/x); eigenvectors are shared
    with Sigma.  Scope: B = identity (the eigenvalue analysis assumes it).
    """
    if not problem.b_is_identity:
        raise ValidationError("effective covariance analysis requires B = identity")
    model = problem.model
    sinv_mu = _solve_sigma(model, model.mu)
    q = float(model.mu @ sinv_mu)
    s1 = float(sinv_mu @ sinv_mu)
    c = 1.0 - 0.5 * beta * lam**2 * s1
    d = 0.5 * beta * lam**2 * (1.0 + q)
    # Sigma* = Sigma (cI - d Sigma^-1)^-1 = Sigma (c Sigma - d I)^-1 Sigma
    core = c * model.sigma - d * np.eye(model.n_assets)
    matrix = model.sigma @ _solve_checked(core, model.sigma, "c*Sigma - d*I")
    matrix = 0.5 * (matrix + matrix.T)

    eigs = np.linalg.eigvalsh(model.sigma)
    fo_shift = 0.5 * beta * lam**2 * (1.0 + q + s1)
    report = []
    for x in eigs:
        denom = c - d / x if x != 0.0 else -math.inf
        if abs(denom) < 1e-12:
            raise InfeasibilityError(
                f"eigenvalue adjustment c - d/x vanishes at x={x:.6g}; "
                f"the effective covariance is undefined for this (lambda, beta)"
            )
        report.append(EigenAdjustment(original=float(x), adjusted=float(x / denom), first_order=float(x + fo_shift)))
    return EffectiveCovarianceResult(matrix=matrix, eigenvalues=report, c=c, d=d)


def cml_curve(
    problem: PortfolioProblem, method: str, params: RobustnessParams
) -> list[FrontierPoint]:
    """Capital market line: one (risk, excess return) point per lambda.

    method 'nominal' evaluates the nominal weights under the reference
    measure (an exact straight line: Sharpe is lambda-independent);
    'kl' and 'w' evaluate the robust weights under the corresponding exact
    worst-case measure, producing frontiers that bend down as leverage grows.
    """
    if method not in ("nominal", "kl", "w"):
        raise ValidationError(f"unknown frontier method {method!r}")
    model = problem.model
    points: list[FrontierPoint] = []
    for lam in problem.lambda_grid:
        if method == "nominal":
            a = mvo_weights(model, lam)
            measure = model
        elif method == "kl":
            a = robust_weights_kl(model, lam, params.theta)
            measure = _kl_worst_measure(model, a, lam, params.theta)
        else:
            a = robust_weights_w(problem, lam, params.beta)
            measure = _w_worst_measure(problem, a, lam, params.beta)
        variance = float(a @ measure.sigma @ a)
        std = math.sqrt(max(variance, 0.0))
        ret = float(measure.mu @ a)
        sharpe = ret / std if std > 0.0 else math.nan
        points.append(FrontierPoint(lam=lam, std_dev=std, excess_return=ret, sharpe=sharpe, weights=a))
    return points
