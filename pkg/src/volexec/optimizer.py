"""Direct-discretization optimizers for the mean-variance schedule problem.

Decision variables are per-interval (piecewise-constant) execution rates, so
the sell-off condition is a single exact linear constraint and the inventory
map is lower-triangular.  The deterministic problem is a convex QP solved by
a dense KKT factorization with an active set on the nonnegativity bounds;
the lognormal-turnover problem is handled by damped sequential quadratic
steps whose model Hessian keeps the exact curvature of the quadratic terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cost import MarketParams, inverse_turnover_covariance
from .errors import SolverFailureError
from .grids import TimeGrid, _frozen, cumtrapz, interval_rates_to_nodes, trapz_weights
from .strategies import Strategy
from .volume import GbmVolumeModel, VolumeProfile, gbm_harmonic_mean

_KKT_TOL = 1e-8
_OBJ_DECREASE_TOL = 1e-12
_BOUND_TOL = 1e-12


@dataclass(frozen=True)
class DiscretizedProblem:
    """Piecewise-constant rates on the grid intervals with tau * sum = Phi."""

    grid: TimeGrid
    decision: np.ndarray
    Phi: float
    nonneg: bool = True

    def __post_init__(self):
        z = np.asarray(self.decision, dtype=float)
        if z.shape != (self.grid.n_steps,):
            raise ValueError(
                f"decision must hold {self.grid.n_steps} interval rates, got shape {z.shape}"
            )
        Phi = float(self.Phi)
        resid = abs(self.grid.tau * z.sum() - Phi)
        if resid > 1e-10 * max(1.0, Phi):
            raise ValueError(f"sell-off constraint violated by {resid!r}")
        if self.nonneg and np.any(z < 0.0):
            raise ValueError("decision violates the nonnegativity bounds")
        object.__setattr__(self, "decision", _frozen(z))
        object.__setattr__(self, "Phi", Phi)


@dataclass(frozen=True)
class SolveReport:
    objective: float
    iterations: int
    kkt_residual: float
    active_bounds: tuple
    status: str
    zeta_intervals: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "active_bounds": list(self.active_bounds),
            "status": self.status,
        }


def _solve_kkt(H, b, tau, Phi, fixed):
    """Equality-constrained QP step: min 1/2 z'Hz - b'z s.t. tau * sum(z) = Phi,
    with the `fixed` coordinates pinned at zero."""
    free = ~fixed
    nf = int(free.sum())
    if nf == 0:
        raise SolverFailureError("all decision variables pinned at zero")
    M = np.zeros((nf + 1, nf + 1))
    M[:nf, :nf] = H[np.ix_(free, free)]
    M[:nf, nf] = tau
    M[nf, :nf] = tau
    rhs = np.concatenate([b[free], [Phi]])
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as e:
        raise SolverFailureError(f"KKT system is singular: {e}") from e
    z = np.zeros(b.size)
    z[free] = sol[:nf]
    return z, float(sol[nf])


def _active_set_qp(H, b, tau, Phi, nonneg, max_iter):
    """Minimize 1/2 z'Hz - b'z under the sell-off equality and optional z >= 0.

    Violating bounds are fixed and re-solved; active bounds with negative
    multipliers are released one at a time.  Returns (z, nu, iterations,
    fixed_mask, status).
    """
    n = b.size
    fixed = np.zeros(n, dtype=bool)
    rate_scale = max(abs(Phi) / (tau * n), 1e-300)
    for it in range(1, max_iter + 1):
        z, nu = _solve_kkt(H, b, tau, Phi, fixed)
        if not nonneg:
            return z, nu, it, fixed, "converged"
        violating = z < -_BOUND_TOL * rate_scale
        if violating.any():
            fixed |= violating
            continue
        z[z < 0.0] = 0.0
        grad = H @ z - b
        active = np.where(fixed)[0]
        if active.size:
            mult = grad[active] + tau * nu
            worst = int(np.argmin(mult))
            if mult[worst] < -_BOUND_TOL * max(1.0, float(np.abs(grad).max())):
                fixed[active[worst]] = False
                continue
        return z, nu, it, fixed, "converged"
    return z, nu, max_iter, fixed, "max-iterations"


def _kkt_residual(grad, z, tau, nonneg: bool = True):
    """Scaled first-order residual of min f s.t. tau*sum(z)=Phi (and z >= 0)."""
    if not nonneg:
        nu = -float(grad.mean()) / tau
        return float(np.abs(grad + tau * nu).max()) / max(1.0, float(np.abs(grad).max()))
    at_bound = z <= 0.0
    free = ~at_bound
    if free.any():
        nu = -float(grad[free].mean()) / tau
    else:
        nu = 0.0
    r = 0.0
    if free.any():
        r = float(np.abs(grad[free] + tau * nu).max())
    if at_bound.any():
        mult = grad[at_bound] + tau * nu
        r = max(r, float(np.maximum(0.0, -mult).max()))
    return r / max(1.0, float(np.abs(grad).max()))


def _suffix_weight_matrix(w_nodes):
    """S[i, j] = sum_{k >= max(i, j)} w_k over nodes 1..N: the exact Hessian
    (up to the 2 tau^2 factor) of the inventory-variance term."""
    cw = np.cumsum(w_nodes[1:][::-1])[::-1]
    n = cw.size
    idx = np.arange(n)
    return cw[np.maximum(idx[:, None], idx[None, :])]


def solve_qp_deterministic(
    profile: VolumeProfile, lam, market: MarketParams, Phi, nonneg: bool = True
):
    """Optimal schedule under deterministic turnover by direct KKT solve.

    Discretizes kappa Phi^2/2 + lam sigma_tilde^2 int phi^2 + kappa_tilde
    int zeta^2/v over interval rates (interval turnover = mean of the two
    node samples) and solves the convex QP exactly.  Returns the node-sampled
    Strategy and a SolveReport carrying the raw interval rates.
    """
    lam = float(lam)
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    Phi = float(Phi)
    if Phi <= 0.0:
        raise ValueError(f"Phi must be positive, got {Phi}")
    grid = profile.grid
    n = grid.n_steps
    tau = grid.tau
    vbar = 0.5 * (profile.v[1:] + profile.v[:-1])
    w = trapz_weights(n, tau)

    H = 2.0 * market.kappa_tilde * tau * np.diag(1.0 / vbar)
    b = np.zeros(n)
    if lam > 0.0:
        c1 = lam * market.sigma_tilde**2
        H = H + 2.0 * c1 * tau**2 * _suffix_weight_matrix(w)
        b = 2.0 * c1 * tau * Phi * np.cumsum(w[1:][::-1])[::-1]

    z, _, iterations, fixed, status = _active_set_qp(H, b, tau, Phi, nonneg, max_iter=max(n, 8))
    z = z * (Phi / (tau * z.sum()))
    problem = DiscretizedProblem(grid=grid, decision=z, Phi=Phi, nonneg=nonneg)

    phi = np.concatenate([[Phi], Phi - tau * np.cumsum(z)])
    objective = float(
        market.kappa * Phi**2 / 2.0
        + market.kappa_tilde * tau * np.sum(z**2 / vbar)
        + lam * market.sigma_tilde**2 * np.sum(w * phi**2)
    )
    grad = H @ z - b
    report = SolveReport(
        objective=objective,
        iterations=iterations,
        kkt_residual=_kkt_residual(grad, z, tau, nonneg=nonneg),
        active_bounds=tuple(int(i) for i in np.where(fixed)[0]),
        status=status,
        zeta_intervals=problem.decision,
    )
    strategy = Strategy(grid=grid, zeta=interval_rates_to_nodes(z), Phi=Phi)
    return strategy, report


class GbmObjective:
    """Mean-variance objective E + lam Var on interval rates, with analytic gradient.

    Every term is discretized consistently with the node-level cost module:
    the inventory enters through the exact lower-triangular map, the cross
    moment and the double integral use interval midpoints.
    """

    def __init__(self, model: GbmVolumeModel, lam, market: MarketParams, Phi, grid: TimeGrid):
        self.model = model
        self.market = market
        self.lam = float(lam)
        self.Phi = float(Phi)
        self.grid = grid
        n = grid.n_steps
        self.tau = grid.tau
        t = grid.nodes
        u = gbm_harmonic_mean(model, grid).v
        self.ubar = 0.5 * (u[1:] + u[:-1])
        self.w = trapz_weights(n, self.tau)
        mid = 0.5 * (t[:-1] + t[1:])
        m = model.mu - model.sigma**2
        self.emid = np.exp(-m * mid)
        self.cov_mid = inverse_turnover_covariance(model, mid, mid)
        self.cross_coef = model.sigma * model.rho / model.v0
        self.idx = np.arange(1, n + 1, dtype=float)

    def inventory(self, z):
        phi = np.empty(z.size + 1)
        phi[0] = self.Phi
        phi[1:] = self.Phi - self.tau * np.cumsum(z)
        return phi

    def _pieces(self, z):
        mk, tau = self.market, self.tau
        phi = self.inventory(z)
        expect = mk.kappa * self.Phi**2 / 2.0 + mk.kappa_tilde * tau * np.sum(z**2 / self.ubar)
        price_var = mk.sigma_tilde**2 * np.sum(self.w * phi**2)
        q = z**2
        quartic = mk.kappa_tilde**2 * tau**2 * float(q @ self.cov_mid @ q)
        if self.cross_coef != 0.0:
            bhat = cumtrapz(phi, tau)
            bmid = 0.5 * (bhat[:-1] + bhat[1:])
            ema = -self.cross_coef * tau * float(np.sum(q * self.emid * bmid))
        else:
            bmid = None
            ema = 0.0
        variance = price_var - 2.0 * mk.sigma_tilde * mk.kappa_tilde * ema + quartic
        return expect, variance, phi, q, bmid

    def value(self, z):
        expect, variance, _, _, _ = self._pieces(z)
        return expect + self.lam * variance

    def value_and_gradient(self, z):
        mk, tau = self.market, self.tau
        expect, variance, phi, q, bmid = self._pieces(z)
        g = 2.0 * mk.kappa_tilde * tau * z / self.ubar
        if self.lam > 0.0:
            suffix = np.cumsum((self.w[1:] * phi[1:])[::-1])[::-1]
            g_price = -2.0 * mk.sigma_tilde**2 * tau * suffix
            g_quartic = 4.0 * mk.kappa_tilde**2 * tau**2 * z * (self.cov_mid @ q)
            if self.cross_coef != 0.0:
                qe = q * self.emid
                s0 = np.concatenate([np.cumsum(qe[::-1])[::-1][1:], [0.0]])
                s1 = np.concatenate([np.cumsum((self.idx * qe)[::-1])[::-1][1:], [0.0]])
                d_bmid = s1 - self.idx * s0 + 0.25 * qe
                g_ema = -self.cross_coef * tau * (
                    2.0 * z * self.emid * bmid - tau**2 * d_bmid
                )
            else:
                g_ema = 0.0
            g = g + self.lam * (g_price - 2.0 * mk.sigma_tilde * mk.kappa_tilde * g_ema + g_quartic)
        return expect + self.lam * variance, g

    def model_hessian(self):
        """Exact Hessian of the quadratic terms (temporary cost + inventory
        variance); constant and positive definite, so steps stay well-posed."""
        H = 2.0 * self.market.kappa_tilde * self.tau * np.diag(1.0 / self.ubar)
        if self.lam > 0.0:
            H = H + (
                2.0
                * self.lam
                * self.market.sigma_tilde**2
                * self.tau**2
                * _suffix_weight_matrix(self.w)
            )
        return H


def solve_sqp_gbm(model: GbmVolumeModel, lam, market: MarketParams, Phi, grid: TimeGrid,
                  max_iter: int = 200):
    """Optimal static schedule under lognormal turnover.

    Damped sequential quadratic steps: the step subproblem keeps the exact
    curvature of the quadratic terms plus a Levenberg shift mu adapted by a
    ratio test, and is solved with the same active-set machinery as the
    deterministic QP.  Starts from the harmonic-mean-proportional schedule,
    which is already optimal at lam = 0.
    """
    lam = float(lam)
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    Phi = float(Phi)
    if Phi <= 0.0:
        raise ValueError(f"Phi must be positive, got {Phi}")
    obj = GbmObjective(model, lam, market, Phi, grid)
    tau = grid.tau
    n = grid.n_steps

    z = obj.ubar * (Phi / (tau * obj.ubar.sum()))
    f, g = obj.value_and_gradient(z)
    H = obj.model_hessian()
    mu = 0.0
    status = "max-iterations"
    kkt = _kkt_residual(g, z, tau)
    iterations = 0

    for it in range(1, max_iter + 1):
        if kkt <= _KKT_TOL:
            status = "converged"
            break
        iterations = it
        stepped = False
        while mu < 1e12:
            Hd = H + mu * np.eye(n) if mu > 0.0 else H
            b = Hd @ z - g
            z_new, _, _, _, sub_status = _active_set_qp(Hd, b, tau, Phi, True, max_iter=max(n, 8))
            if sub_status != "converged":
                mu = max(4.0 * mu, 1e-8)
                continue
            d = z_new - z
            predicted = -(g @ d + 0.5 * d @ (Hd @ d))
            f_new = obj.value(z_new)
            if predicted <= 0.0:
                # the model says "no descent left": accept only an actual improvement
                if f_new < f:
                    ratio = 1.0
                else:
                    break
            else:
                ratio = (f - f_new) / predicted
            if ratio < 1e-4:
                mu = max(4.0 * mu, 1e-8)
                continue
            decrease = f - f_new
            z, f = z_new, f_new
            _, g = obj.value_and_gradient(z)
            kkt = _kkt_residual(g, z, tau)
            if ratio > 0.75:
                mu = 0.0 if mu < 1e-10 else mu / 3.0
            elif ratio < 0.25:
                mu = max(4.0 * mu, 1e-8)
            stepped = True
            if decrease <= _OBJ_DECREASE_TOL * max(1.0, abs(f)):
                status = "converged"
            break
        if not stepped and status != "converged":
            break
        if status == "converged":
            break
    else:
        status = "converged" if kkt <= _KKT_TOL else "max-iterations"
    if kkt <= _KKT_TOL:
        status = "converged"

    z = z * (Phi / (tau * z.sum()))
    problem = DiscretizedProblem(grid=grid, decision=np.clip(z, 0.0, None), Phi=Phi)
    report = SolveReport(
        objective=float(obj.value(problem.decision)),
        iterations=iterations,
        kkt_residual=float(kkt),
        active_bounds=tuple(int(i) for i in np.where(problem.decision == 0.0)[0]),
        status=status,
        zeta_intervals=problem.decision,
    )
    strategy = Strategy(grid=grid, zeta=interval_rates_to_nodes(problem.decision), Phi=Phi)
    return strategy, report
