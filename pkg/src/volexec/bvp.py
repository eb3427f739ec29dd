"""Two-point boundary solves for the stationarity equation of the
mean-variance schedule problem.

The continuous equation is

    phi''(t) - a(t) phi'(t) - c(t) phi(t) = r(t),    phi(0), phi(T) given,

discretized with second-order central differences on the uniform grid,
giving a tridiagonal system handled by direct elimination (pivot locations
are reported on failure, which off-the-shelf banded solvers hide).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, SolverFailureError
from .grids import TimeGrid, _frozen
from .strategies import InventoryCurve

_RESIDUAL_RTOL = 1e-10
_PIVOT_RTOL = 1e-13


@dataclass(frozen=True)
class LinearBvpSpec:
    """Coefficients of phi'' - a phi' - c phi = rhs with Dirichlet boundaries."""

    grid: TimeGrid
    a: np.ndarray
    c: np.ndarray
    rhs: np.ndarray
    left_value: float
    right_value: float

    def __post_init__(self):
        n = len(self.grid)
        for name in ("a", "c", "rhs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must be a length-{n} node array, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, _frozen(arr))
        for name in ("left_value", "right_value"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, val)


def solve_linear_bvp(spec: LinearBvpSpec) -> np.ndarray:
    """Solve the discretized boundary problem; returns phi at every node.

    Interior stencil at node i:

        (phi[i+1] - 2 phi[i] + phi[i-1]) / tau^2
            - a[i] (phi[i+1] - phi[i-1]) / (2 tau) - c[i] phi[i] = rhs[i].

    Raises SolverFailureError (with the offending node as pivot_index) when
    elimination meets a vanishing pivot, and ConsistencyError when the
    back-substituted solution fails the scaled residual check.
    """
    g = spec.grid
    if g.n_steps < 3:
        raise ValueError(f"boundary solve needs at least 3 steps, got {g.n_steps}")
    tau = g.tau
    inv2 = 1.0 / tau**2
    ai, ci = spec.a[1:-1], spec.c[1:-1]
    lower = inv2 + ai / (2.0 * tau)
    diag = (-2.0 * inv2 - ci).copy()
    upper = inv2 - ai / (2.0 * tau)
    b = spec.rhs[1:-1].copy()
    b[0] -= lower[0] * spec.left_value
    b[-1] -= upper[-1] * spec.right_value

    m = b.size
    row_scale = 2.0 * inv2 + np.abs(ai) / tau + np.abs(ci)
    for i in range(1, m):
        piv = diag[i - 1]
        if abs(piv) <= _PIVOT_RTOL * row_scale[i - 1]:
            raise SolverFailureError(
                f"tridiagonal elimination hit a vanishing pivot at node {i}", pivot_index=i
            )
        w = lower[i] / piv
        diag[i] -= w * upper[i - 1]
        b[i] -= w * b[i - 1]
    if abs(diag[-1]) <= _PIVOT_RTOL * row_scale[-1]:
        raise SolverFailureError(
            f"tridiagonal elimination hit a vanishing pivot at node {m}", pivot_index=m
        )

    x = np.empty(m)
    x[-1] = b[-1] / diag[-1]
    for i in range(m - 2, -1, -1):
        x[i] = (b[i] - upper[i] * x[i + 1]) / diag[i]

    phi = np.empty(len(g))
    phi[0] = spec.left_value
    phi[-1] = spec.right_value
    phi[1:-1] = x

    applied = (
        (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) * inv2
        - ai * (phi[2:] - phi[:-2]) / (2.0 * tau)
        - ci * phi[1:-1]
    )
    resid = float(np.max(np.abs(applied - spec.rhs[1:-1])))
    denom = float(np.max(row_scale)) * max(1.0, float(np.max(np.abs(phi)))) + float(
        np.max(np.abs(spec.rhs))
    )
    if resid > _RESIDUAL_RTOL * denom:
        raise ConsistencyError(
            f"discrete residual {resid:.3e} exceeds {_RESIDUAL_RTOL:.0e} * {denom:.3e}"
        )
    return phi


def matched_log_derivative(v: np.ndarray, tau: float):
    """Discrete (d/dt log v, v) pair matching the divergence form of the equation.

    The stationarity equation is self-adjoint, (phi'/v)' = (c/v) phi, and the
    natural conservative stencil uses the turnover averaged over each interval.
    Rewriting that stencil as phi'' - a phi' - c phi requires

        a[j] = (2/tau) (vbar[j+1/2] - vbar[j-1/2]) / (vbar[j+1/2] + vbar[j-1/2])
        h[j] = harmonic mean of the two adjacent interval averages,

    both second-order consistent with dlog v/dt and v at node j.  Using them
    keeps the boundary solve algebraically equivalent to the optimality
    conditions of the direct quadratic program, so the two routes agree to
    rounding instead of merely to truncation order (the difference matters for
    profiles with steep open/close activity).
    """
    v = np.asarray(v, dtype=float)
    vbar = 0.5 * (v[1:] + v[:-1])
    a = np.zeros(v.size)
    h = v.copy()
    a[1:-1] = (2.0 / tau) * (vbar[1:] - vbar[:-1]) / (vbar[1:] + vbar[:-1])
    h[1:-1] = 2.0 * vbar[1:] * vbar[:-1] / (vbar[1:] + vbar[:-1])
    a[0], a[-1] = a[1], a[-2]
    return a, h


def optimal_inventory_ode(profile, lam, market, Phi) -> InventoryCurve:
    """Risk-adjusted inventory from the stationarity equation of the schedule cost.

    Solves

        phi'' - (d/dt log v) phi' - (sigma_tilde^2 lam / kappa_tilde) v phi = 0,
        phi(0) = Phi, phi(T) = 0,

    with the coefficient pair discretized in divergence-matched form (see
    matched_log_derivative).  The implied rate -phi' is sign-checked and a
    warning is emitted when it dips negative (large lam, strongly front-loaded
    profiles); imposing the nonnegativity bound is the constrained optimizer's
    job, not this solver's.
    """
    lam = float(lam)
    if lam <= 0.0:
        raise ValueError(
            f"lam must be positive, got {lam}; the lam -> 0 limit is the "
            "volume-proportional schedule"
        )
    Phi = float(Phi)
    if Phi <= 0.0:
        raise ValueError(f"Phi must be positive, got {Phi}")
    g = profile.grid
    a, h = matched_log_derivative(profile.v, g.tau)
    spec = LinearBvpSpec(
        grid=g,
        a=a,
        c=(market.sigma_tilde**2 * lam / market.kappa_tilde) * h,
        rhs=np.zeros(len(g)),
        left_value=Phi,
        right_value=0.0,
    )
    phi = solve_linear_bvp(spec)
    if np.any(np.diff(phi) > 1e-10 * max(1.0, Phi)):
        warnings.warn(
            "implied execution rate dips below zero; returning the unconstrained solution",
            RuntimeWarning,
            stacklevel=2,
        )
    return InventoryCurve(grid=g, phi=phi, Phi=Phi)
