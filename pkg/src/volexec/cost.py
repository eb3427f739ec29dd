"""Realized and expected liquidation costs, and the mean-variance objective.

The realized cost of a schedule against an unaffected price path S0 and a
turnover path v is

    C = S0_0 * Phi - int_0^T S_t zeta_t dt,
    S_t = S0_t - kappa * int_0^t zeta - kappa_tilde * zeta_t / v_t,

and it decomposes exactly (by summation by parts, see realized_is_cost) into
permanent impact, temporary impact, and a zero-mean price-risk term.  The
expected/variance formulas below reproduce that decomposition in closed form
for deterministic turnover and for the lognormal turnover model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError
from .grids import cumtrapz, trapz, trapz_weights
from .strategies import Strategy, inventory_from_rate
from .volume import GbmVolumeModel, VolumeProfile, gbm_harmonic_mean

_DECOMP_RTOL = 1e-8
_GH_NODES = 32


@dataclass(frozen=True)
class MarketParams:
    """Impact and price parameters: all strictly positive."""

    kappa: float
    kappa_tilde: float
    sigma_tilde: float
    s0: float

    def __post_init__(self):
        for name in ("kappa", "kappa_tilde", "sigma_tilde", "s0"):
            val = float(getattr(self, name))
            if not (val > 0.0 and np.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")
            object.__setattr__(self, name, val)


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    permanent: float
    temporary: float
    price_risk: float

    def __post_init__(self):
        parts = self.permanent + self.temporary + self.price_risk
        scale = max(1.0, abs(self.total), abs(parts))
        if abs(self.total - parts) > 1e-10 * scale:
            raise ConsistencyError(
                f"cost parts sum to {parts!r} but total is {self.total!r}"
            )

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "permanent": self.permanent,
            "temporary": self.temporary,
            "price_risk": self.price_risk,
        }


@dataclass(frozen=True)
class MvValue:
    """Mean-variance value E + lam * Var of the liquidation cost."""

    expectation: float
    variance: float
    objective: float
    lam: float

    def __post_init__(self):
        if self.variance < 0.0:
            raise ValueError(f"variance must be nonnegative, got {self.variance}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        check = self.expectation + self.lam * self.variance
        if abs(self.objective - check) > 1e-12 * max(1.0, abs(self.objective)):
            raise ConsistencyError(
                f"objective {self.objective!r} is not expectation + lam * variance = {check!r}"
            )

    def as_dict(self) -> dict:
        return {
            "expectation": self.expectation,
            "variance": self.variance,
            "objective": self.objective,
            "lambda": self.lam,
        }


def _check_paths(price_path, volume_path, s: Strategy):
    price = np.asarray(price_path, dtype=float)
    vol = np.asarray(volume_path, dtype=float)
    n = len(s.grid)
    if price.shape[-1] != n or vol.shape[-1] != n:
        raise ValueError(
            f"paths must have {n} nodes along the last axis, got {price.shape} and {vol.shape}"
        )
    if price.shape != vol.shape:
        raise ValueError(f"path shapes differ: {price.shape} vs {vol.shape}")
    if np.any(vol <= 0.0):
        raise ValueError("turnover path must be strictly positive")
    return price, vol


def _decompose(price, vol, zeta, Phi, tau, market: MarketParams):
    """Exact discrete decomposition of the realized cost; broadcasts over paths
    (zeta may itself carry a path axis, e.g. for anticipating schedules).

    Interval quantities use products of interval averages (not averaged
    products), which makes the discrete integration by parts exact:

        sum Psi_bar dPsi = Psi_N^2 / 2,
        S0_0 Phi - sum S0_bar dPsi = S0_N phi_N - sum phi_bar dS0,

    so total == direct evaluation up to floating-point rounding, far inside
    the 1e-8 cross-check tolerance.
    """
    zbar = 0.5 * (zeta[..., 1:] + zeta[..., :-1])
    psi = np.concatenate(
        [np.zeros(zbar.shape[:-1] + (1,)), np.cumsum(tau * zbar, axis=-1)], axis=-1
    )
    temp_node = market.kappa_tilde * zeta / vol
    affected = price - market.kappa * psi - temp_node
    direct = price[..., 0] * Phi - np.sum(
        tau * 0.5 * (affected[..., 1:] + affected[..., :-1]) * zbar, axis=-1
    )

    permanent = market.kappa * psi[..., -1] ** 2 / 2.0
    temporary = np.sum(tau * 0.5 * (temp_node[..., 1:] + temp_node[..., :-1]) * zbar, axis=-1)
    phi_raw = Phi - psi
    phi_bar = 0.5 * (phi_raw[..., 1:] + phi_raw[..., :-1])
    price_risk = price[..., -1] * phi_raw[..., -1] - np.sum(
        phi_bar * np.diff(price, axis=-1), axis=-1
    )
    total = permanent + temporary + price_risk
    gap = np.abs(direct - total)
    bad = gap > _DECOMP_RTOL * np.maximum(1.0, np.abs(direct))
    if np.any(bad):
        i = int(np.argmax(gap))
        raise ConsistencyError(
            f"direct cost and decomposition disagree by {gap.flat[i]!r} (path {i})"
        )
    return total, permanent, temporary, price_risk


def realized_is_cost(price_path, volume_path, s: Strategy, market: MarketParams) -> CostBreakdown:
    """Realized shortfall of a schedule on one (price, turnover) path.

    The direct evaluation and the permanent/temporary/price-risk decomposition
    are both computed and must agree within 1e-8 relative (they agree to
    rounding by construction); disagreement raises ConsistencyError.
    """
    price, vol = _check_paths(price_path, volume_path, s)
    if price.ndim != 1:
        raise ValueError(f"expected a single path, got shape {price.shape}")
    total, permanent, temporary, price_risk = _decompose(
        price, vol, s.zeta, s.Phi, s.grid.tau, market
    )
    return CostBreakdown(
        total=float(total),
        permanent=float(permanent),
        temporary=float(temporary),
        price_risk=float(price_risk),
    )


def realized_is_cost_paths(price_paths, volume_paths, s: Strategy, market: MarketParams):
    """Vectorized realized cost over a batch of paths (rows); returns totals."""
    price, vol = _check_paths(price_paths, volume_paths, s)
    total, _, _, _ = _decompose(price, vol, s.zeta, s.Phi, s.grid.tau, market)
    return np.asarray(total, dtype=float)


def market_vwap(price_path, volume_path):
    """Turnover-weighted average price over the horizon (trapezoid weights)."""
    price = np.asarray(price_path, dtype=float)
    vol = np.asarray(volume_path, dtype=float)
    if price.shape != vol.shape:
        raise ValueError(f"path shapes differ: {price.shape} vs {vol.shape}")
    w = trapz_weights(price.shape[-1] - 1, 1.0)
    denom = np.sum(w * vol, axis=-1)
    if np.any(denom <= 0.0):
        raise ValueError("total turnover must be positive")
    out = np.sum(w * price * vol, axis=-1) / denom
    return float(out) if out.ndim == 0 else out


def trader_vwap(price_path, s: Strategy):
    """Execution-weighted average price achieved by the schedule."""
    price = np.asarray(price_path, dtype=float)
    if price.shape[-1] != len(s.grid):
        raise ValueError(f"price path must have {len(s.grid)} nodes, got {price.shape}")
    w = trapz_weights(s.grid.n_steps, 1.0)
    denom = np.sum(w * s.zeta)
    if denom <= 0.0:
        raise ValueError("schedule carries no volume")
    out = np.sum(w * price * s.zeta, axis=-1) / denom
    return float(out) if out.ndim == 0 else out


def vwap_slippage(price_path, volume_path, s: Strategy):
    """Trader VWAP minus market VWAP; identically 0 for volume-proportional rates."""
    return trader_vwap(price_path, s) - market_vwap(price_path, volume_path)


def expected_cost(s: Strategy, profile, market: MarketParams) -> float:
    """E[C] = kappa Phi^2 / 2 + kappa_tilde * int zeta^2 / v dt.

    Under the lognormal turnover model the harmonic mean u_t replaces v_t,
    since E[1/v_t] = 1/u_t.
    """
    if isinstance(profile, VolumeProfile):
        from .grids import require_same_grid

        require_same_grid(profile.grid, s.grid, "profile and strategy")
        v = profile.v
    elif isinstance(profile, GbmVolumeModel):
        v = gbm_harmonic_mean(profile, s.grid).v
    else:
        raise TypeError(f"expected VolumeProfile or GbmVolumeModel, got {type(profile)!r}")
    tau = s.grid.tau
    return float(
        market.kappa * s.Phi**2 / 2.0 + market.kappa_tilde * trapz(s.zeta**2 / v, tau)
    )


def mv_deterministic(s: Strategy, profile: VolumeProfile, lam, market: MarketParams) -> MvValue:
    """Mean-variance value under deterministic turnover.

    The temporary cost is deterministic there, so the variance is just the
    price-risk term sigma_tilde^2 * int phi^2 dt.
    """
    lam = float(lam)
    expectation = expected_cost(s, profile, market)
    phi = inventory_from_rate(s).phi
    variance = market.sigma_tilde**2 * trapz(phi**2, s.grid.tau)
    return MvValue(
        expectation=expectation,
        variance=variance,
        objective=expectation + lam * variance,
        lam=lam,
    )


def inverse_turnover_covariance(model: GbmVolumeModel, s_times, t_times) -> np.ndarray:
    """Cov(1/v_s, 1/v_t) for the lognormal model, as an outer matrix.

    Cov = v0^-2 exp(-(mu - sigma^2)(s + t)) (exp(sigma^2 min(s, t)) - 1).
    """
    s_times = np.asarray(s_times, dtype=float)
    t_times = np.asarray(t_times, dtype=float)
    m = model.mu - model.sigma**2
    outer_sum = s_times[:, None] + t_times[None, :]
    outer_min = np.minimum(s_times[:, None], t_times[None, :])
    return np.exp(-m * outer_sum) * np.expm1(model.sigma**2 * outer_min) / model.v0**2


def _cross_moment(s: Strategy, model: GbmVolumeModel, rho: float):
    """E[M_T A_T]: covariance of the price-risk martingale with the impact error.

    With M_t = int_0^t phi dW (price driver) and A_T = int zeta^2 (1/v - 1/u) dt,
    the Gaussian cross-moment identity E[X e^Y] = Cov(X, Y) e^{Var(Y)/2} gives

        E[M_T A_T] = -(sigma rho / v0) int_0^T zeta_t^2 e^{-(mu - sigma^2) t} b_t dt,

    where b_t = int_0^t phi_s ds.
    """
    if rho == 0.0 or model.sigma == 0.0:
        return 0.0
    t = s.grid.nodes
    phi = inventory_from_rate(s).phi
    b = cumtrapz(phi, s.grid.tau)
    m = model.mu - model.sigma**2
    integrand = s.zeta**2 * np.exp(-m * t) * b
    return float(-(model.sigma * rho / model.v0) * trapz(integrand, s.grid.tau))


def _variance_gbm(s: Strategy, model: GbmVolumeModel, market: MarketParams, ema: float):
    t = s.grid.nodes
    tau = s.grid.tau
    phi = inventory_from_rate(s).phi
    price_term = market.sigma_tilde**2 * trapz(phi**2, tau)
    w = trapz_weights(s.grid.n_steps, tau)
    wq = w * s.zeta**2
    cov = inverse_turnover_covariance(model, t, t)
    quartic = market.kappa_tilde**2 * float(wq @ cov @ wq)
    return price_term - 2.0 * market.sigma_tilde * market.kappa_tilde * ema + quartic


def mv_gbm(s: Strategy, model: GbmVolumeModel, lam, market: MarketParams) -> MvValue:
    """Mean-variance value under lognormal turnover (reduced closed forms).

    Var(C) = sigma_tilde^2 int phi^2 dt
             - 2 sigma_tilde kappa_tilde E[M_T A_T]
             + kappa_tilde^2 intint zeta_s^2 zeta_t^2 Cov(1/v_s, 1/v_t) ds dt,

    with the cross moment in single-integral form (see _cross_moment) and the
    double integral by the trapezoid rule on the strategy grid.
    """
    lam = float(lam)
    expectation = expected_cost(s, model, market)
    variance = _variance_gbm(s, model, market, _cross_moment(s, model, model.rho))
    return MvValue(
        expectation=expectation,
        variance=variance,
        objective=expectation + lam * variance,
        lam=lam,
    )


def mv_gbm_quadrature_check(
    s: Strategy, model: GbmVolumeModel, lam, market: MarketParams
) -> MvValue:
    """mv_gbm with the cross moment evaluated by Gauss-Hermite double quadrature.

    The cross moment is written as an expectation over the correlated pair
    (M_t, B_t) ~ N(0, [[a_t, b_t], [b_t, t]]) with a_t = int_0^t phi^2 and
    b_t = rho int_0^t phi:

        E[M_T A_T] = (1/v0) int zeta_t^2 e^{-(mu - sigma^2/2) t} sqrt(a_t) G_t dt,
        G_t = E[Z exp(-sigma sqrt(t) (r_t Z + sqrt(1 - r_t^2) W))],

    where r_t = b_t / sqrt(a_t t) and Z, W are independent standard normals.
    G_t is evaluated on a 32x32 Gauss-Hermite tensor grid.  Agreement with
    the reduced single-integral form is a validation target, not assumed.
    """
    lam = float(lam)
    rho = model.rho
    t = s.grid.nodes
    tau = s.grid.tau
    if rho == 0.0 or model.sigma == 0.0:
        ema = 0.0
    else:
        phi = inventory_from_rate(s).phi
        a = cumtrapz(phi**2, tau)
        b = rho * cumtrapz(phi, tau)
        at = a * t
        r = np.full_like(t, rho)
        ok = at > 0.0
        r[ok] = np.clip(b[ok] / np.sqrt(at[ok]), -1.0, 1.0)

        x, w = np.polynomial.hermite.hermgauss(_GH_NODES)
        z = np.sqrt(2.0) * x
        coef = -model.sigma * np.sqrt(t)
        arg = coef[:, None, None] * (
            r[:, None, None] * z[:, None] + np.sqrt(1.0 - r**2)[:, None, None] * z[None, :]
        )
        gt = np.sum((w[:, None] * w[None, :]) * z[:, None] * np.exp(arg), axis=(1, 2)) / np.pi

        m_half = model.mu - 0.5 * model.sigma**2
        integrand = s.zeta**2 * np.exp(-m_half * t) * np.sqrt(a) * gt
        ema = float(trapz(integrand, tau) / model.v0)

    expectation = expected_cost(s, model, market)
    variance = _variance_gbm(s, model, market, ema)
    return MvValue(
        expectation=expectation,
        variance=variance,
        objective=expectation + lam * variance,
        lam=lam,
    )
