import numpy as np
import pytest

from volexec.bvp import optimal_inventory_ode
from volexec.grids import build_grid, trapz_weights
from volexec.optimizer import (
    DiscretizedProblem,
    GbmObjective,
    SolveReport,
    _active_set_qp,
    solve_qp_deterministic,
    solve_sqp_gbm,
)
from volexec.volume import GbmVolumeModel, arcsine_profile, gbm_harmonic_mean, profile_from_samples


def _interval_means(v):
    return 0.5 * (v[1:] + v[:-1])


def _qp_objective(z, profile, lam, market, Phi):
    """Independent evaluation of the discretized mean-variance objective."""
    g = profile.grid
    vbar = _interval_means(profile.v)
    phi = np.concatenate([[Phi], Phi - g.tau * np.cumsum(z)])
    w = trapz_weights(g.n_steps, g.tau)
    risk = market.sigma_tilde**2 * np.sum(w * phi**2)
    return market.kappa * Phi**2 / 2.0 + market.kappa_tilde * g.tau * np.sum(z**2 / vbar) + lam * risk


def test_zero_lam_recovers_volume_weights(market, arcsine500):
    s, rep = solve_qp_deterministic(arcsine500, 0.0, market, 1.0)
    vbar = _interval_means(arcsine500.v)
    expect = vbar / (arcsine500.grid.tau * np.sum(vbar))
    rel = np.max(np.abs(rep.zeta_intervals - expect)) / np.max(expect)
    assert rel < 1e-12
    assert rep.status == "converged"
    assert rep.kkt_residual < 1e-10


def test_zero_lam_random_profiles(market):
    g = build_grid(1.0, 300)
    rng = np.random.default_rng(17)
    for _ in range(3):
        p = profile_from_samples(g, 0.2 + rng.random(len(g)))
        _, rep = solve_qp_deterministic(p, 0.0, market, 1.0)
        vbar = _interval_means(p.v)
        expect = vbar / (g.tau * np.sum(vbar))
        assert np.max(np.abs(rep.zeta_intervals - expect)) / np.max(expect) < 1e-11


def test_qp_matches_ode_route(market, arcsine500):
    """Same discrete optimality system, two solvers: agreement to rounding."""
    g = arcsine500.grid
    _, rep = solve_qp_deterministic(arcsine500, 1.0, market, 1.0)
    phi_qp = np.concatenate([[1.0], 1.0 - g.tau * np.cumsum(rep.zeta_intervals)])
    phi_ode = optimal_inventory_ode(arcsine500, 1.0, market, 1.0).phi
    assert np.max(np.abs(phi_qp - phi_ode)) < 1e-10


def test_qp_stays_interior_on_volume_profiles(market, arcsine500):
    # positive turnover keeps the unconstrained optimum strictly positive,
    # so the bound constraints never activate
    for lam in (2.0, 50.0):
        _, rep = solve_qp_deterministic(arcsine500, lam, market, 1.0)
        assert rep.active_bounds == ()
        assert np.min(rep.zeta_intervals) > 0.0


def test_qp_objective_beats_feasible_perturbations(market, arcsine500):
    g = arcsine500.grid
    _, rep = solve_qp_deterministic(arcsine500, 1.0, market, 1.0)
    z = rep.zeta_intervals
    base = _qp_objective(z, arcsine500, 1.0, market, 1.0)
    assert base == pytest.approx(rep.objective, rel=1e-12)
    rng = np.random.default_rng(5)
    for _ in range(10):
        d = rng.standard_normal(z.size)
        d -= d.mean()  # keep tau * sum(z) fixed
        trial = z + 1e-3 * d / np.max(np.abs(d))
        if np.any(trial < 0.0):
            continue
        assert _qp_objective(trial, arcsine500, 1.0, market, 1.0) >= base - 1e-14


def test_active_set_water_filling():
    """Projection onto the sell-off simplex has a bisection closed form."""
    rng = np.random.default_rng(3)
    n = 40
    c = rng.standard_normal(n)
    tau = 1.0 / n
    z, nu, iters, fixed, status = _active_set_qp(2.0 * np.eye(n), 2.0 * c, tau, 1.0, True, 200)
    lo, hi = -10.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if tau * np.sum(np.clip(c + mid, 0.0, None)) < 1.0:
            lo = mid
        else:
            hi = mid
    ref = np.clip(c + 0.5 * (lo + hi), 0.0, None)
    assert status == "converged"
    assert fixed.sum() > 0
    assert np.max(np.abs(z - ref)) < 1e-12
    grad = 2.0 * (z - c)
    mu = grad + tau * nu
    assert np.all(mu[fixed] > -1e-12)          # pinned coordinates push outward
    assert np.max(np.abs(mu[~fixed])) < 1e-12  # free coordinates are stationary


def test_active_set_equality_only():
    rng = np.random.default_rng(4)
    n = 25
    c = rng.standard_normal(n) - 2.0
    tau = 0.04
    z, nu, _, fixed, status = _active_set_qp(2.0 * np.eye(n), 2.0 * c, tau, 1.0, False, 200)
    theta = (1.0 / tau - c.sum()) / n
    assert status == "converged"
    assert not fixed.any()
    assert np.max(np.abs(z - (c + theta))) < 1e-12
    assert np.any(z < 0.0)  # bounds really were off


def test_problem_validation(grid200):
    n = grid200.n_steps
    good = np.full(n, 1.0)
    DiscretizedProblem(grid=grid200, decision=good, Phi=1.0)
    with pytest.raises(ValueError):
        DiscretizedProblem(grid=grid200, decision=good[:-1], Phi=1.0)
    with pytest.raises(ValueError):
        DiscretizedProblem(grid=grid200, decision=good, Phi=2.0)
    bad = good.copy()
    bad[0] = -0.5
    bad[1] = 2.5
    with pytest.raises(ValueError):
        DiscretizedProblem(grid=grid200, decision=bad, Phi=1.0)


def test_report_dict_fields():
    rep = SolveReport(
        objective=1.0, iterations=3, kkt_residual=1e-10, active_bounds=(2,), status="converged"
    )
    assert set(rep.as_dict()) == {
        "objective",
        "iterations",
        "kkt_residual",
        "active_bounds",
        "status",
    }
    assert rep.as_dict()["active_bounds"] == [2]


def test_sqp_zero_lam_immediate(market, gbm_model, grid200):
    s, rep = solve_sqp_gbm(gbm_model, 0.0, market, 1.0, grid200)
    assert rep.iterations == 0
    assert rep.status == "converged"
    u = gbm_harmonic_mean(gbm_model, grid200).v
    ubar = _interval_means(u)
    expect = ubar / (grid200.tau * np.sum(ubar))
    assert np.max(np.abs(rep.zeta_intervals - expect)) / np.max(expect) < 1e-10


def test_gbm_objective_gradient(market_hi, grid200):
    model = GbmVolumeModel(1.0, -0.02, 0.2, rho=0.4)
    obj = GbmObjective(model, 1.5, market_hi, 1.0, grid200)
    rng = np.random.default_rng(9)
    n = grid200.n_steps
    for _ in range(3):
        z = 0.5 + rng.random(n)
        z /= grid200.tau * z.sum()
        val, grad = obj.value_and_gradient(z)
        assert val == pytest.approx(obj.value(z), rel=1e-14)
        idx = rng.choice(n, size=12, replace=False)
        h = 1e-6
        for i in idx:
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            fd = (obj.value(zp) - obj.value(zm)) / (2.0 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_sqp_converges_with_correlation(market_hi, grid200):
    zeta0 = []
    for rho in (-0.9, 0.0, 0.9):
        model = GbmVolumeModel(1.0, -0.02, 0.2, rho=rho)
        s, rep = solve_sqp_gbm(model, 10.0, market_hi, 1.0, grid200)
        assert rep.status == "converged"
        assert rep.kkt_residual <= 1e-8
        assert rep.iterations <= 200
        zeta0.append(s.zeta[0])
    # stronger positive price/volume coupling front-loads the schedule
    assert zeta0[0] < zeta0[1] < zeta0[2]


def test_sqp_optimum_beats_perturbations(market_hi, grid200):
    model = GbmVolumeModel(1.0, -0.02, 0.2, rho=0.5)
    obj = GbmObjective(model, 5.0, market_hi, 1.0, grid200)
    _, rep = solve_sqp_gbm(model, 5.0, market_hi, 1.0, grid200)
    z = rep.zeta_intervals
    base = obj.value(z)
    assert base == pytest.approx(rep.objective, rel=1e-12)
    rng = np.random.default_rng(6)
    for _ in range(10):
        d = rng.standard_normal(z.size)
        d -= d.mean()
        trial = z + 1e-3 * d / np.max(np.abs(d))
        if np.any(trial < 0.0):
            continue
        assert obj.value(trial) >= base - 1e-12
