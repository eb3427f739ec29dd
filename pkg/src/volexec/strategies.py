"""Benchmark execution schedules and the rate <-> inventory conversions.

A Strategy is a nonnegative per-node execution rate that liquidates exactly
Phi shares over the grid horizon (sell-off condition, enforced under the
composite trapezoid rule).  The constructors here cover the closed-form
schedules: volume-proportional, harmonic-mean proportional, impact-twisted,
the constant-turnover risk-averse schedule, and the small-risk-aversion
expansion around the volume-proportional one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InconsistentStrategyError, NegativeRateError
from .grids import (
    TimeGrid,
    _frozen,
    build_grid,
    cumtrapz,
    derivative,
    interval_rates_to_nodes,
    trapz,
)
from .volume import GbmVolumeModel, VolumeProfile, gbm_harmonic_mean

SELL_OFF_RTOL = 1e-10


@dataclass(frozen=True)
class Strategy:
    """Static schedule: per-node selling rate zeta >= 0 integrating to Phi."""

    grid: TimeGrid
    zeta: np.ndarray
    Phi: float
    involvement: Optional[float] = None

    def __post_init__(self):
        z = np.asarray(self.zeta, dtype=float)
        if z.shape != (len(self.grid),):
            raise ValueError(f"zeta must have {len(self.grid)} entries, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValueError("zeta contains non-finite values")
        if np.any(z < 0.0):
            raise NegativeRateError("execution rate must be nonnegative at every node")
        Phi = float(self.Phi)
        if not (Phi > 0.0 and np.isfinite(Phi)):
            raise ValueError(f"Phi must be positive and finite, got {self.Phi}")
        mass = trapz(z, self.grid.tau)
        if abs(mass - Phi) > SELL_OFF_RTOL * Phi:
            raise InconsistentStrategyError(
                f"rate integrates to {mass!r} but Phi = {Phi!r} was declared"
            )
        object.__setattr__(self, "zeta", _frozen(z))
        object.__setattr__(self, "Phi", Phi)
        if self.involvement is not None:
            object.__setattr__(self, "involvement", float(self.involvement))


@dataclass(frozen=True)
class InventoryCurve:
    """Remaining shares phi_t, pinned to phi_0 = Phi and phi_T = 0."""

    grid: TimeGrid
    phi: np.ndarray
    Phi: float

    def __post_init__(self):
        p = np.asarray(self.phi, dtype=float)
        if p.shape != (len(self.grid),):
            raise ValueError(f"phi must have {len(self.grid)} entries, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("phi contains non-finite values")
        Phi = float(self.Phi)
        if not (Phi > 0.0 and np.isfinite(Phi)):
            raise ValueError(f"Phi must be positive and finite, got {self.Phi}")
        tol = 1e-12 * max(1.0, Phi)
        if abs(p[0] - Phi) > tol or abs(p[-1]) > tol:
            raise ValueError(
                f"inventory must run from Phi to 0, got phi_0 = {p[0]!r}, phi_T = {p[-1]!r}"
            )
        object.__setattr__(self, "phi", _frozen(p))
        object.__setattr__(self, "Phi", Phi)


def inventory_from_rate(s: Strategy) -> InventoryCurve:
    """phi_t = Phi - int_0^t zeta, with the terminal node forced to exactly 0.

    The accumulated quadrature residual (bounded by the sell-off tolerance)
    is absorbed into the last step so downstream boundary conditions hold
    exactly.
    """
    phi = s.Phi - cumtrapz(s.zeta, s.grid.tau)
    if abs(phi[-1]) > SELL_OFF_RTOL * s.Phi:
        raise InconsistentStrategyError(
            f"rate leaves {phi[-1]!r} shares unexecuted out of {s.Phi!r}"
        )
    phi[-1] = 0.0
    return InventoryCurve(grid=s.grid, phi=phi, Phi=s.Phi)


def rate_from_inventory(c: InventoryCurve) -> Strategy:
    """Differentiate an inventory curve back into a selling rate.

    Central differences inside, second-order one-sided at the ends; the
    one-sided stencils can undershoot zero by O(tau^2) on convex curves, so
    the rate is clipped at 0 and rescaled to integrate to Phi exactly.
    """
    steps = np.diff(c.phi)
    if np.any(steps > SELL_OFF_RTOL * max(1.0, c.Phi)):
        i = int(np.argmax(steps))
        raise NegativeRateError(
            f"inventory increases by {steps[i]!r} over step {i}; rate would be negative"
        )
    zeta = np.clip(-derivative(c.phi, c.grid.tau), 0.0, None)
    mass = trapz(zeta, c.grid.tau)
    if mass <= 0.0:
        raise NegativeRateError("inventory curve carries no selling volume")
    return Strategy(grid=c.grid, zeta=zeta * (c.Phi / mass), Phi=c.Phi)


def vwap_strategy(profile: VolumeProfile, Phi: float) -> Strategy:
    """Volume-proportional schedule zeta = v * Phi / V_T.

    V_T is taken as the trapezoid mass of the (possibly endpoint-clamped)
    sampled turnover, so the sell-off condition holds on the grid and not
    merely in the continuum limit.
    """
    Phi = float(Phi)
    if Phi <= 0.0:
        raise ValueError(f"Phi must be positive, got {Phi}")
    gamma = Phi / trapz(profile.v, profile.grid.tau)
    return Strategy(grid=profile.grid, zeta=profile.v * gamma, Phi=Phi, involvement=gamma)


def expected_vwap_strategy(model: GbmVolumeModel, grid: TimeGrid, Phi: float) -> Strategy:
    """Schedule proportional to the harmonic-mean turnover u_t = 1/E[1/v_t]."""
    Phi = float(Phi)
    if Phi <= 0.0:
        raise ValueError(f"Phi must be positive, got {Phi}")
    u = gbm_harmonic_mean(model, grid).v
    gamma = Phi / trapz(u, grid.tau)
    return Strategy(grid=grid, zeta=u * gamma, Phi=Phi, involvement=gamma)


def twisted_vwap(
    profile: VolumeProfile, k: Callable[[np.ndarray], np.ndarray], alpha: float, Phi: float
) -> Strategy:
    """Rate proportional to k(v)^(-1/alpha), for a temporary impact k(v)*zeta^alpha."""
    alpha = float(alpha)
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    Phi = float(Phi)
    if Phi <= 0.0:
        raise ValueError(f"Phi must be positive, got {Phi}")
    kv = np.asarray(k(profile.v), dtype=float)
    if kv.ndim == 0:
        kv = np.full(len(profile.grid), float(kv))
    if kv.shape != profile.v.shape:
        raise ValueError(f"k(v) must be scalar or per-node, got shape {kv.shape}")
    if not np.all(np.isfinite(kv)) or np.any(kv <= 0.0):
        raise ValueError("k(v) must be finite and strictly positive at every node")
    weight = kv ** (-1.0 / alpha)
    gamma = Phi / trapz(weight, profile.grid.tau)
    return Strategy(grid=profile.grid, zeta=weight * gamma, Phi=Phi, involvement=gamma)


def ac_closed_form(lam, market, v, grid: TimeGrid, Phi) -> Strategy:
    """Risk-averse schedule under constant turnover v.

    The inventory is phi_t = sinh(g (T - t)) / sinh(g T) * Phi with
    g = sqrt(sigma_tilde^2 * lam * v / kappa_tilde), hence the rate

        zeta_t = g * Phi * cosh(g (T - t)) / sinh(g T),

    evaluated in overflow-safe exponential form and rescaled by its own
    trapezoid mass (an O(tau^2) factor) so the sell-off condition holds on
    the grid.  lam = 0 degenerates to the constant rate Phi/T.
    """
    lam = float(lam)
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    v = float(v)
    if v <= 0.0:
        raise ValueError(f"turnover must be positive, got {v}")
    Phi = float(Phi)
    if Phi <= 0.0:
        raise ValueError(f"Phi must be positive, got {Phi}")
    t = grid.nodes
    T = grid.T
    g = np.sqrt(market.sigma_tilde**2 * lam * v / market.kappa_tilde)
    if g * T < 1e-12:
        return Strategy(grid=grid, zeta=np.full(len(grid), Phi / T), Phi=Phi)
    # cosh(g(T-t))/sinh(gT) = exp(-g t) (1 + exp(-2g(T-t))) / (1 - exp(-2gT))
    zeta = g * Phi * np.exp(-g * t) * (1.0 + np.exp(-2.0 * g * (T - t)))
    zeta /= -np.expm1(-2.0 * g * T)
    zeta *= Phi / trapz(zeta, grid.tau)
    return Strategy(grid=grid, zeta=zeta, Phi=Phi)


def correction_closed_form(profile: VolumeProfile, market, Phi) -> np.ndarray:
    """Quadrature form of the first-order inventory correction (diagnostic).

    Integrating the correction equation twice against the profile's exact
    cumulative fields gives, with s = sigma_tilde^2 Phi / kappa_tilde,

        phi1(t) = s * [ t V_t - calV_t - (V_t calV_t - int_0^t V^2)/V_T + K V_t ],
        K = 2 calV_T / V_T - T - (int_0^T V^2) / V_T^2.

    This matches the boundary-value solve only as well as the profile's
    closed-form cumulatives match the trapezoid integrals of its sampled v,
    so it serves as an independent cross-check rather than the primary path.
    """
    t = profile.grid.nodes
    V, calV, V2 = profile.V, profile.calV, profile.V2int
    VT = V[-1]
    s = market.sigma_tilde**2 * float(Phi) / market.kappa_tilde
    K = 2.0 * calV[-1] / VT - profile.grid.T - V2[-1] / VT**2
    return s * (t * V - calV - (V * calV - V2) / VT + K * V)


def asymptotic_expansion(profile: VolumeProfile, market, lam, Phi):
    """First-order expansion of the optimal schedule around volume-proportional.

    Returns (strategy, correction_rate): the composite rate
    zeta0 + lam * correction clipped at zero and renormalized, plus the raw
    (unclipped) first-order rate correction so its convergence can be studied
    directly.  The inventory correction solves

        phi1'' - (d/dt log v) phi1' = (sigma_tilde^2/kappa_tilde) v phi0,
        phi1(0) = phi1(T) = 0,

    where phi0 is the volume-proportional inventory.  Coefficients and right
    side use the same divergence-matched discretization as the boundary-value
    route, which makes phi1 the exact risk-aversion derivative of the direct
    quadratic program's solution family; the rate correction is therefore read
    off as interval differences of phi1 and resampled to the nodes.
    """
    from .bvp import LinearBvpSpec, matched_log_derivative, solve_linear_bvp

    lam = float(lam)
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    base = vwap_strategy(profile, Phi)
    phi0 = inventory_from_rate(base).phi
    g = profile.grid
    a, h = matched_log_derivative(profile.v, g.tau)
    spec = LinearBvpSpec(
        grid=g,
        a=a,
        c=np.zeros(len(g)),
        rhs=(market.sigma_tilde**2 / market.kappa_tilde) * h * phi0,
        left_value=0.0,
        right_value=0.0,
    )
    phi1 = solve_linear_bvp(spec)
    zeta1 = interval_rates_to_nodes((phi1[:-1] - phi1[1:]) / g.tau)
    composite = np.clip(base.zeta + lam * zeta1, 0.0, None)
    composite *= base.Phi / trapz(composite, g.tau)
    return Strategy(grid=g, zeta=composite, Phi=base.Phi), zeta1


# ---------------------------------------------------------------------------
# CSV serialization: columns t,zeta,phi at full double precision.

def strategy_to_csv(s: Strategy, path: str) -> None:
    phi = inventory_from_rate(s).phi
    with open(path, "w") as f:
        f.write("t,zeta,phi\n")
        for row in zip(s.grid.nodes, s.zeta, phi):
            f.write(",".join(f"{x:.17g}" for x in row) + "\n")


def strategy_from_csv(path: str) -> Strategy:
    """Rebuild a strategy from CSV; Phi is re-derived as the rate's integral."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    try:
        it, iz = header.index("t"), header.index("zeta")
    except ValueError as e:
        raise ValueError(f"strategy CSV needs at least columns t,zeta; got {header}") from e
    t, zeta = data[:, it], data[:, iz]
    if len(t) < 3:
        raise ValueError("strategy CSV must contain at least 3 nodes")
    tau = t[1] - t[0]
    if t[0] != 0.0 or tau <= 0.0 or np.max(np.abs(np.diff(t) - tau)) > 1e-12 * max(t[-1], 1.0):
        raise ValueError("strategy CSV must carry a uniform grid starting at t = 0")
    grid = build_grid(T=t[-1], n_steps=len(t) - 1)
    return Strategy(grid=grid, zeta=zeta, Phi=trapz(zeta, grid.tau))
