"""Monte Carlo measurement of dynamic-hedging model risk.

Reference paths follow a geometric Brownian motion; the hedging error of a
delta-hedged option is the loss.  The worst-case risk perturbs the sampled
paths, weights every path by the discrete worst-case formula with the
quadratic variation of the difference as transport cost, and walks a ladder
of perturbation scales until the weighted risk converges.

Determinism contract: every operation is a pure function of (inputs, seed).
Random numbers come from per-path streams keyed on (seed, path index), so
results do not depend on how work is split across workers.  Perturbation
noise is drawn once per (parent, child) stream and scaled by the rung's
deviation, giving common random numbers along the ladder.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp, ndtr

from wrisk.errors import ValidationError
from wrisk.params import RobustnessParams
from wrisk.util import worker_count

DEFAULT_LADDER_FRACTIONS = (0.05, 0.1, 0.2, 0.4, 0.8)
DEFAULT_TOL = 0.02


@dataclass(frozen=True)
class MarketConfig:
    """Reference-model market: spot, drift and volatility per year, risk-free rate."""

    s0: float
    mu: float
    sigma: float
    r: float = 0.0

    def __post_init__(self) -> None:
        if self.s0 <= 0.0:
            raise ValidationError("spot must be > 0")
        if self.sigma < 0.0:
            raise ValidationError("volatility must be >= 0")
        for name in ("mu", "r", "sigma", "s0"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")


@dataclass(frozen=True)
class HedgeConfig:
    """Option contract and rebalancing schedule."""

    strike: float
    maturity: float
    n_hedge: int
    option_type: str = "call"

    def __post_init__(self) -> None:
        if self.strike <= 0.0 or self.maturity <= 0.0:
            raise ValidationError("strike and maturity must be > 0")
        if self.n_hedge < 1:
            raise ValidationError("n_hedge must be >= 1")
        if self.option_type not in ("call", "put"):
            raise ValidationError("option_type must be 'call' or 'put'")


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated log-price increments, one row per path.

    provenance is 'reference' for model paths or 'perturbed' for children,
    in which case sigma_perturb and parent_index record how they were made.
    """

    s0: float
    dt: float
    increments: np.ndarray  # shape (n_paths, n_steps)
    seed: int
    provenance: str = "reference"
    sigma_perturb: float = 0.0
    parent_index: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[0] < 1:
            raise ValidationError("increments must be a (n_paths, n_steps) array with >= 1 path")
        if self.dt <= 0.0 or self.s0 <= 0.0:
            raise ValidationError("dt and s0 must be > 0")
        if self.provenance not in ("reference", "perturbed"):
            raise ValidationError("provenance must be 'reference' or 'perturbed'")
        object.__setattr__(self, "increments", inc)

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    def prices(self) -> np.ndarray:
        """Price levels including the spot column, shape (n_paths, n_steps + 1)."""
        log_rel = np.concatenate(
            [np.zeros((self.n_paths, 1)), np.cumsum(self.increments, axis=1)], axis=1
        )
        return self.s0 * np.exp(log_rel)


def _path_normals(seed: int, key: tuple[int, ...], n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
    return rng.standard_normal(n)


def gbm_paths(
    market: MarketConfig, T: float, n_steps: int, n_paths: int, seed: int
) -> PathEnsemble:
    """Exact log-Euler geometric Brownian motion paths.

    Each increment is (mu - sigma^2/2) dt + sigma sqrt(dt) Z with Z drawn
    from the path's own stream, so a fixed seed reproduces the ensemble
    bitwise regardless of parallel scheduling.
    """
    if n_steps < 1 or n_paths < 1:
        raise ValidationError("n_steps and n_paths must be >= 1")
    if T <= 0.0:
        raise ValidationError("horizon must be > 0")
    dt = T / n_steps
    drift = (market.mu - 0.5 * market.sigma**2) * dt
    scale = market.sigma * math.sqrt(dt)
    inc = np.empty((n_paths, n_steps))
    for i in range(n_paths):
        inc[i] = drift + scale * _path_normals(seed, (0, i), n_steps)
    return PathEnsemble(s0=market.s0, dt=dt, increments=inc, seed=seed)


def perturb_paths(
    ensemble: PathEnsemble, sigma_perturb: float, m_children: int, seed: int
) -> PathEnsemble:
    """M children per parent: parent increments plus N(0, sigma_perturb^2 dt) noise.

    The noise stream is keyed on (seed, parent, child) and scaled by
    sigma_perturb, so growing the deviation re-scales the same draws.
    """
    if m_children < 1:
        raise ValidationError("m_children must be >= 1")
    if sigma_perturb < 0.0:
        raise ValidationError("sigma_perturb must be >= 0")
    n, steps = ensemble.n_paths, ensemble.n_steps
    scale = sigma_perturb * math.sqrt(ensemble.dt)
    inc = np.empty((n * m_children, steps))
    parent_index = np.empty(n * m_children, dtype=int)
    for i in range(n):
        for m in range(m_children):
            row = i * m_children + m
            inc[row] = ensemble.increments[i] + scale * _path_normals(seed, (1, i, m), steps)
            parent_index[row] = i
    return PathEnsemble(
        s0=ensemble.s0,
        dt=ensemble.dt,
        increments=inc,
        seed=seed,
        provenance="perturbed",
        sigma_perturb=sigma_perturb,
        parent_index=parent_index,
    )


def bs_price_delta(
    market: MarketConfig, hedge: HedgeConfig, s, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Black-Scholes price and spot-delta of the hedged option at time t.

    Vectorized over the spot argument.  Requires t < maturity; a zero
    volatility degenerates to the discounted forward intrinsic value.
    """
    if t >= hedge.maturity:
        raise ValidationError("valuation time must precede maturity")
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise ValidationError("spot values must be > 0")
    tau = hedge.maturity - t
    k = hedge.strike
    df = math.exp(-market.r * tau)
    sign = 1.0 if hedge.option_type == "call" else -1.0
    if market.sigma == 0.0:
        forward = s / df
        price = df * np.maximum(sign * (forward - k), 0.0)
        delta = np.where(sign * (forward - k) > 0.0, sign, 0.0)
        return price, delta
    vol = market.sigma * math.sqrt(tau)
    d1 = (np.log(s / k) + (market.r + 0.5 * market.sigma**2) * tau) / vol
    d2 = d1 - vol
    price = sign * (s * ndtr(sign * d1) - k * df * ndtr(sign * d2))
    delta = sign * ndtr(sign * d1)
    return price, delta


def _payoff(hedge: HedgeConfig, s: np.ndarray) -> np.ndarray:
    if hedge.option_type == "call":
        return np.maximum(s - hedge.strike, 0.0)
    return np.maximum(hedge.strike - s, 0.0)


def hedge_pnl(paths: PathEnsemble, market: MarketConfig, hedge: HedgeConfig) -> np.ndarray:
    """Delta-hedging profit and loss per path.

    The option is rebalanced on the hedge grid; each interval contributes
    (price change - delta * spot change), accrued at the risk-free rate to
    maturity.  The path grid must refine the hedge grid.
    """
    if paths.n_steps % hedge.n_hedge != 0:
        raise ValidationError(
            f"path grid ({paths.n_steps} steps) must be a multiple of the hedge "
            f"grid ({hedge.n_hedge} rebalances)"
        )
    total_t = paths.n_steps * paths.dt
    if abs(total_t - hedge.maturity) > 1e-9 * hedge.maturity:
        raise ValidationError("path horizon does not match the option maturity")

    stride = paths.n_steps // hedge.n_hedge
    prices = paths.prices()[:, ::stride]  # (n_paths, n_hedge + 1)
    times = np.arange(hedge.n_hedge + 1) * (hedge.maturity / hedge.n_hedge)

    n_p = paths.n_paths
    values = np.empty((n_p, hedge.n_hedge + 1))
    deltas = np.empty((n_p, hedge.n_hedge))

    def _price_block(k_lo: int, k_hi: int) -> None:
        for k in range(k_lo, k_hi):
            values[:, k], deltas[:, k] = bs_price_delta(market, hedge, prices[:, k], times[k])

    workers = worker_count()
    if workers > 1 and hedge.n_hedge >= 2 * workers:
        bounds = np.linspace(0, hedge.n_hedge, workers + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda ij: _price_block(*ij), zip(bounds[:-1], bounds[1:])))
    else:
        _price_block(0, hedge.n_hedge)
    values[:, -1] = _payoff(hedge, prices[:, -1])

    accrual = np.exp(market.r * (hedge.maturity - times[1:]))  # grow each step to maturity
    steps = np.diff(values, axis=1) - deltas * np.diff(prices, axis=1)
    return steps @ accrual


def nominal_hedging_risk(
    market: MarketConfig,
    hedge: HedgeConfig,
    n_paths: int,
    seed: int,
    n_steps: Optional[int] = None,
) -> float:
    """Mean absolute hedging PnL under the reference model."""
    ens = gbm_paths(market, hedge.maturity, n_steps or hedge.n_hedge, n_paths, seed)
    return float(np.mean(np.abs(hedge_pnl(ens, market, hedge))))


def qv_distance(path_x: np.ndarray, path_y: np.ndarray) -> float:
    """Quadratic variation of the difference of two log-price increment series."""
    x = np.asarray(path_x, dtype=float)
    y = np.asarray(path_y, dtype=float)
    if x.shape != y.shape:
        raise ValidationError("paths must share the same grid")
    d = x - y
    return float(d @ d)


def _qv_matrix(parents: np.ndarray, others: np.ndarray) -> np.ndarray:
    """Pairwise quadratic-variation distances, parents by others."""
    pn = np.einsum("ij,ij->i", parents, parents)
    on = np.einsum("ij,ij->i", others, others)
    return pn[:, None] + on[None, :] - 2.0 * parents @ others.T


@dataclass(frozen=True)
class WorstCaseLadderResult:
    """Risk per perturbation rung and the declared convergence status.

    final_weights holds the worst-case path weights of the last rung
    evaluated (parents first, then children in parent-major order).
    """

    ladder: tuple[float, ...]
    risks: tuple[float, ...]
    converged: bool
    final_risk: float
    rungs_used: int
    final_weights: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValidationError("ladder must be strictly increasing")


def _worst_case_weights(
    v: np.ndarray, cost: np.ndarray, params: RobustnessParams
) -> np.ndarray:
    """Discrete worst-case weights over sampled paths, uniform prior.

    cost[i, j] is the transport cost from reference path i to candidate
    path j; the reference measure is uniform over the rows.
    """
    log_w = v[None, :] / params.alpha - cost / (params.alpha * params.beta)
    log_rows = log_w - logsumexp(log_w, axis=1, keepdims=True)
    q = np.exp(logsumexp(log_rows, axis=0)) / cost.shape[0]
    return q / q.sum()


def worst_case_hedging_risk(
    market: MarketConfig,
    hedge: HedgeConfig,
    n_paths: int,
    m_children: int,
    params: RobustnessParams,
    ladder: Optional[Sequence[float]] = None,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    n_steps: Optional[int] = None,
) -> WorstCaseLadderResult:
    """Worst-case hedging risk by path perturbation.

    Procedure: simulate n_paths reference paths; for each perturbation scale
    in the ladder, spawn m_children noisy copies per path, compute the
    absolute hedging PnL of all n_paths*(m_children+1) paths, weight the
    paths by the discrete worst-case formula with quadratic-variation
    transport cost and a uniform prior over the sample, and average.  The
    ladder stops at the first rung whose risk moves by less than tol
    relative to the previous rung; running out of rungs reports
    converged=False rather than raising.
    """
    params.require_transport()
    if ladder is None:
        ladder = tuple(f * market.sigma for f in DEFAULT_LADDER_FRACTIONS)
    ladder = tuple(float(s) for s in ladder)
    if any(b <= a for a, b in zip(ladder, ladder[1:])) or not ladder:
        raise ValidationError("ladder must be non-empty and strictly increasing")
    if tol <= 0.0:
        raise ValidationError("tol must be > 0")

    steps = n_steps or max(hedge.n_hedge, 1)
    parents = gbm_paths(market, hedge.maturity, steps, n_paths, seed)
    v_parents = np.abs(hedge_pnl(parents, market, hedge))

    risks: list[float] = []
    converged = False
    weights = None
    for rung, sigma_p in enumerate(ladder):
        children = perturb_paths(parents, sigma_p, m_children, seed)
        v_children = np.abs(hedge_pnl(children, market, hedge))
        v_all = np.concatenate([v_parents, v_children])
        inc_all = np.concatenate([parents.increments, children.increments], axis=0)
        cost = np.maximum(_qv_matrix(parents.increments, inc_all), 0.0)
        weights = _worst_case_weights(v_all, cost, params)
        risks.append(float(weights @ v_all))
        if rung > 0:
            prev = risks[-2]
            if prev > 0.0 and abs(risks[-1] - prev) / prev < tol:
                converged = True
                break
    return WorstCaseLadderResult(
        ladder=ladder[: len(risks)],
        risks=tuple(risks),
        converged=converged,
        final_risk=risks[-1],
        rungs_used=len(risks),
        final_weights=weights,
    )


def kl_hedging_risk(
    market: MarketConfig,
    hedge: HedgeConfig,
    n_paths: int,
    theta: float,
    seed: int = 0,
    n_steps: Optional[int] = None,
) -> float:
    """Worst-case hedging risk under the relative-entropy budget.

    Entropy tilting can only reweight the sampled reference paths, never
    move off them: weights are proportional to exp(theta * |PnL|).  As the
    hedge grid refines, every path's PnL and hence the whole risk tends to
    zero, in contrast to the transport version.
    """
    if theta < 0.0:
        raise ValidationError("theta must be >= 0")
    ens = gbm_paths(market, hedge.maturity, n_steps or hedge.n_hedge, n_paths, seed)
    v = np.abs(hedge_pnl(ens, market, hedge))
    log_w = theta * v
    w = np.exp(log_w - logsumexp(log_w))
    w /= w.sum()
    return float(w @ v)


@dataclass(frozen=True)
class VolDistribution:
    """Sampling law for per-path volatilities: uniform or lognormal."""

    kind: str
    a: float
    b: float

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "lognormal"):
            raise ValidationError("kind must be 'uniform' or 'lognormal'")
        if self.kind == "uniform" and (self.a <= 0.0 or self.b < self.a):
            raise ValidationError("uniform support must satisfy 0 < lo <= hi")
        if self.kind == "lognormal" and self.b < 0.0:
            raise ValidationError("lognormal sdlog must be >= 0")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "VolDistribution":
        return cls(kind="uniform", a=lo, b=hi)

    @classmethod
    def lognormal(cls, meanlog: float, sdlog: float) -> "VolDistribution":
        return cls(kind="lognormal", a=meanlog, b=sdlog)

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "uniform":
            return float(rng.uniform(self.a, self.b))
        return float(np.exp(self.a + self.b * rng.standard_normal()))


def volatility_sampling_risk(
    market: MarketConfig,
    hedge: HedgeConfig,
    vol_distribution: VolDistribution,
    n_paths: int,
    seed: int = 0,
    n_steps: Optional[int] = None,
) -> float:
    """Parametric baseline: mean |PnL| with the realized volatility drawn per path.

    Volatilities come from a dedicated per-path stream while the Brownian
    increments reuse the reference-path streams.  A distribution degenerate
    at the nominal volatility therefore reproduces the reference ensemble
    exactly, and widening the volatility support acts on coupled paths.
    """
    steps = n_steps or hedge.n_hedge
    dt = hedge.maturity / steps
    inc = np.empty((n_paths, steps))
    for i in range(n_paths):
        vol_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2, i)))
        sig = vol_distribution.draw(vol_rng)
        z = _path_normals(seed, (0, i), steps)
        inc[i] = (market.mu - 0.5 * sig**2) * dt + sig * math.sqrt(dt) * z
    ens = PathEnsemble(s0=market.s0, dt=dt, increments=inc, seed=seed)
    return float(np.mean(np.abs(hedge_pnl(ens, market, hedge))))
