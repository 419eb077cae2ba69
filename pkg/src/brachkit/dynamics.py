"""Brachistochrone and conformal-geodesic integration.

The second-order brachistochrone equation is integrated as a first-order
system in (position, velocity).  Conservation of <sigma', Y> = -k T and
<sigma', sigma'> = -T^2 is implied by the equation together with the launch
conditions, so both quantities are monitored as independent correctness
checks rather than enforced by projection.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .curves import Curve, grid_integral
from .errors import NotHorizontal, OutsideUk, StepFailure
from .geometry import (ConformalGeometry, SpacetimeModel, conformal_geometry,
                       connection_coeffs, riemannian_metric_matrix,
                       scalar_gradient, _coords, _comps)

__all__ = [
    "IntegratorConfig",
    "BrachistochroneSolution",
    "initial_velocity",
    "brachistochrone_rhs",
    "integrate_brachistochrone",
    "integrate_conformal_geodesic",
    "conservation_report",
    "geodesic_residual",
]


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-10
    grid_n: int = 400
    tol_cons: float = 1e-7
    method: str = "RK45"  # embedded 5(4) pair with dense output

    def tightened(self, factor: float) -> "IntegratorConfig":
        return replace(self, rtol=self.rtol / factor, atol=self.atol / factor)


@dataclass
class BrachistochroneSolution:
    """An integrated trial curve with its conserved quantities' residuals."""

    sigma: Curve
    T: float
    k: float
    residual_conservation_Y: float
    residual_conservation_speed: float
    residual_ode: float

    def check_conservation(self, tol_cons: float):
        from .errors import ConstraintViolated
        if self.residual_conservation_Y > tol_cons * (1.0 + self.k * self.T):
            raise ConstraintViolated(
                f"<sigma',Y> + kT residual {self.residual_conservation_Y:.3e} over tolerance")
        if self.residual_conservation_speed > tol_cons * (1.0 + self.T ** 2):
            raise ConstraintViolated(
                f"<sigma',sigma'> + T^2 residual {self.residual_conservation_speed:.3e} over tolerance")


def initial_velocity(model: SpacetimeModel, k: float, p, u, T: float) -> np.ndarray:
    """Launch velocity (T / sqrt(-<Y,Y>)) (k Yhat + sqrt(k^2 + <Y,Y>) u).

    ``u`` must be a g_R-unit direction orthogonal to Y; the result satisfies
    <v,v> = -T^2 and <v,Y> = -kT exactly.
    """
    q = model.require_in_chart(p)
    g = model.g(q)
    y = model.y(q)
    u = _comps(u)
    yy = float(y @ g @ y)
    P = k * k + yy
    if P <= 0.0:
        raise OutsideUk(f"launch point violates k^2 + <Y,Y> > 0 (got {P})")
    uy = float(u @ g @ y)
    if abs(uy) > 1e-8 * np.sqrt(abs(yy)):
        raise NotHorizontal(f"launch direction has <u,Y> = {uy}, expected 0")
    gr = riemannian_metric_matrix(model, q)
    nrm = float(u @ gr @ u)
    if abs(nrm - 1.0) > 1e-8:
        raise NotHorizontal(f"launch direction has g_R norm {np.sqrt(nrm)}, expected 1")
    return (T / np.sqrt(-yy)) * (k * y / np.sqrt(-yy) + np.sqrt(P) * u)


def _rhs_factory(model: SpacetimeModel, k: float, T: float):
    gfun, yfun, dyfun = model.g, model.y, model.dy
    in_chart = model.in_chart
    kk = k * k
    two_kT = 2.0 * k * T

    def rhs(t, state):
        m = state.size // 2
        q, v = state[:m], state[m:]
        if not in_chart(q):
            from .errors import OutOfChart
            raise OutOfChart(f"trajectory left the chart at t={t}")
        g = gfun(q)
        y = yfun(q)
        G = connection_coeffs(model, q)
        N = float(y @ g @ y)
        P = kk + N
        if P <= 0.0:
            raise OutsideUk(f"trajectory left the admissible region at t={t}")
        K = dyfun(q) + np.einsum("abc,c->ab", G, y)
        dvy = K @ v                       # nabla_v Y
        W = float(dvy @ g @ y)            # <nabla_v Y, Y>
        acc = (-np.einsum("abc,b,c->a", G, v, v)
               - (2.0 * kk * W / (N * P)) * v
               - (two_kT / N) * dvy
               + (two_kT * W / (N * P)) * y)
        return np.concatenate([v, acc])

    return rhs


def brachistochrone_rhs(model: SpacetimeModel, k: float, T: float, state):
    """(velocity, acceleration) of the travel-time equation at one state."""
    q, v = state
    y0 = np.concatenate([_coords(q), _comps(v)])
    out = _rhs_factory(model, k, T)(0.0, y0)
    m = model.m
    return out[:m], out[m:]


def _sample(sol_ivp, m, grid):
    y = sol_ivp.sol(grid)
    return y[:m].T.copy(), y[m:].T.copy()


def _residuals(model, k, T, grid, points, velocities):
    r_y = 0.0
    r_v = 0.0
    for q, v in zip(points, velocities):
        g = model.g(q)
        y = model.y(q)
        r_y = max(r_y, abs(float(v @ g @ y) + k * T))
        r_v = max(r_v, abs(float(v @ g @ v) + T * T))
    return r_y, r_v


def _ode_residual(model, k, T, curve: Curve) -> float:
    accel = curve.velocity_spline()(curve.grid, 1)
    rhs = _rhs_factory(model, k, T)
    worst = 0.0
    for i in range(0, curve.grid.size, max(1, curve.grid.size // 64)):
        state = np.concatenate([curve.points[i], curve.velocities[i]])
        target = rhs(curve.grid[i], state)[model.m:]
        gr = riemannian_metric_matrix(model, curve.points[i])
        d = accel[i] - target
        worst = max(worst, float(np.sqrt(d @ gr @ d)))
    return worst


def integrate_brachistochrone(model: SpacetimeModel, k: float, p, u, T: float,
                              config: IntegratorConfig = IntegratorConfig()
                              ) -> BrachistochroneSolution:
    """Integrate the travel-time equation on [0, 1] from the launch data (p, u, T)."""
    if T <= 0.0:
        raise ValueError("travel time T must be positive")
    v0 = initial_velocity(model, k, p, u, T)
    return integrate_brachistochrone_from_velocity(model, k, p, v0, T, config)


def integrate_brachistochrone_from_velocity(model: SpacetimeModel, k: float, p, v0,
                                            T: float,
                                            config: IntegratorConfig = IntegratorConfig()
                                            ) -> BrachistochroneSolution:
    """Same as integrate_brachistochrone but from an explicit launch velocity."""
    q0 = model.require_in_chart(p)
    state0 = np.concatenate([q0, _comps(v0)])
    rhs = _rhs_factory(model, k, T)
    out = solve_ivp(rhs, (0.0, 1.0), state0, method=config.method,
                    rtol=config.rtol, atol=config.atol, dense_output=True)
    if not out.success:
        raise StepFailure(f"integrator failed: {out.message}")
    grid = np.linspace(0.0, 1.0, config.grid_n + 1)
    pts, vels = _sample(out, model.m, grid)
    curve = Curve(grid=grid, points=pts, velocities=vels)
    r_y, r_v = _residuals(model, k, T, grid, pts, vels)
    return BrachistochroneSolution(
        sigma=curve, T=T, k=k,
        residual_conservation_Y=r_y,
        residual_conservation_speed=r_v,
        residual_ode=_ode_residual(model, k, T, curve),
    )


def integrate_conformal_geodesic(model: SpacetimeModel, k: float, q, v,
                                 config: IntegratorConfig = IntegratorConfig(),
                                 confgeom: ConformalGeometry | None = None) -> Curve:
    """Geodesic of the conformal Riemannian metric from horizontal data (q, v)."""
    cg = conformal_geometry(model, k) if confgeom is None else confgeom
    q0 = model.require_in_chart(q)
    v0 = _comps(v)
    vy = float(v0 @ model.g(q0) @ model.y(q0))
    speed = np.sqrt(float(v0 @ riemannian_metric_matrix(model, q0) @ v0))
    if speed == 0.0 or abs(vy) > 1e-8 * speed:
        raise NotHorizontal(f"geodesic launch has <v,Y> = {vy}")

    m = model.m

    def rhs(t, state):
        pos, vel = state[:m], state[m:]
        G = cg.christoffels(pos)
        return np.concatenate([vel, -np.einsum("abc,b,c->a", G, vel, vel)])

    out = solve_ivp(rhs, (0.0, 1.0), np.concatenate([q0, v0]), method=config.method,
                    rtol=config.rtol, atol=config.atol, dense_output=True)
    if not out.success:
        raise StepFailure(f"integrator failed: {out.message}")
    grid = np.linspace(0.0, 1.0, config.grid_n + 1)
    pts, vels = _sample(out, m, grid)
    return Curve(grid=grid, points=pts, velocities=vels)


def conservation_report(model: SpacetimeModel, sol: BrachistochroneSolution,
                        refine: int = 2) -> dict:
    """Recompute the two conservation residuals on a refined grid."""
    n = sol.sigma.n_segments * refine
    grid = np.linspace(0.0, 1.0, n + 1)
    ps = sol.sigma.point_spline()
    vs = sol.sigma.velocity_spline()
    pts, vels = ps(grid), vs(grid)
    errs_y = np.empty(grid.size)
    errs_v = np.empty(grid.size)
    for i, (q, v) in enumerate(zip(pts, vels)):
        g = model.g(q)
        errs_y[i] = float(v @ g @ model.y(q)) + sol.k * sol.T
        errs_v[i] = float(v @ g @ v) + sol.T ** 2
    return {
        "residual_Y_max": float(np.max(np.abs(errs_y))),
        "residual_Y_l2": float(np.sqrt(grid_integral(grid, errs_y ** 2))),
        "residual_speed_max": float(np.max(np.abs(errs_v))),
        "residual_speed_l2": float(np.sqrt(grid_integral(grid, errs_v ** 2))),
    }


def geodesic_residual(model: SpacetimeModel, k: float, w: Curve) -> float:
    """Max-norm defect of nabla_w'(phi_k w') - 1/2 grad(phi_k) <w',w'> at the nodes."""
    grid, pts, vels = w.grid, w.points, w.velocities
    phis = np.array([
        -float(model.y(q) @ model.g(q) @ model.y(q))
        / (k * k + float(model.y(q) @ model.g(q) @ model.y(q)))
        for q in pts])
    speeds = np.array([np.sqrt(max(float(v @ riemannian_metric_matrix(model, q) @ v), 0.0))
                       for q, v in zip(pts, vels)])
    horiz = max(abs(float(v @ model.g(q) @ model.y(q))) for q, v in zip(pts, vels))
    if horiz > 1e-6 * max(np.max(speeds), 1e-30):
        raise NotHorizontal(f"curve is not horizontal: max |<w',Y>| = {horiz}")

    u = phis[:, None] * vels

    from scipy.interpolate import CubicSpline
    dudt = CubicSpline(grid, u, axis=0)(grid, 1)

    def phi_of(qq):
        y = model.y(qq)
        yy = float(y @ model.g(qq) @ y)
        return -yy / (k * k + yy)

    worst = 0.0
    for i, (q, v) in enumerate(zip(pts, vels)):
        G = connection_coeffs(model, q)
        nabla_u = dudt[i] + np.einsum("abc,b,c->a", G, v, u[i])
        grad_phi = scalar_gradient(model, q, phi_of)
        vv = float(v @ model.g(q) @ v)
        d = nabla_u - 0.5 * grad_phi * vv
        gr = riemannian_metric_matrix(model, q)
        worst = max(worst, float(np.sqrt(d @ gr @ d)))
    return worst
