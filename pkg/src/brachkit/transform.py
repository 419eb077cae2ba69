"""Deformation of trial curves into horizontal curves along the Killing flow,
the left inverse of that deformation, and their differentials.

The flow of Y is always integrated numerically (one batched ODE over all
curve nodes); closed forms, where they exist, are reserved for test oracles.
Differentials of the flow map are taken by fourth-order directional finite
differences, and the isometry property of the flow is available as a post
hoc check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .curves import Curve, FieldAlongCurve, cumulative_integral, grid_derivative, grid_integral
from .dynamics import BrachistochroneSolution, _ode_residual
from .errors import ConstraintViolated, FlowEscape, NotHorizontal, OutsideUk, StepFailure
from .geometry import (SpacetimeModel, connection_coeffs, nabla_y_matrix,
                       riemannian_metric_matrix, _coords)

__all__ = [
    "CorrespondenceReport",
    "flow_points",
    "flow_differential",
    "deform_D",
    "lift_G",
    "dD_differential",
    "correspondence_report",
    "tangent_constraint_scan",
]

_FLOW_RTOL = 1e-12
_FLOW_ATOL = 1e-14
_DIFF_STEP = 1e-3


def flow_points(model: SpacetimeModel, starts: np.ndarray, times: np.ndarray) -> np.ndarray:
    """psi(q_i, s_i) for a batch of start points; one rescaled ODE solve."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    times = np.asarray(times, dtype=float)
    n, m = starts.shape
    if np.max(np.abs(times)) == 0.0:
        return starts.copy()

    def rhs(u, flat):
        pts = flat.reshape(n, m)
        out = np.empty_like(pts)
        for i in range(n):
            out[i] = times[i] * model.y(pts[i])
        return out.ravel()

    sol = solve_ivp(rhs, (0.0, 1.0), starts.ravel(), method="DOP853",
                    rtol=_FLOW_RTOL, atol=_FLOW_ATOL)
    if not sol.success:
        raise StepFailure(f"Killing flow integration failed: {sol.message}")
    ends = sol.y[:, -1].reshape(n, m)
    for q in ends:
        if not model.in_chart(q):
            raise FlowEscape(f"Killing flow left the chart at {q}")
    return ends


def flow_differential(model: SpacetimeModel, starts: np.ndarray, times: np.ndarray,
                      vectors: np.ndarray, step: float = _DIFF_STEP) -> np.ndarray:
    """d_x psi(q_i, s_i)[v_i] for a batch, by fourth-order directional differences."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    norms = np.linalg.norm(vectors, axis=1)
    units = np.where(norms[:, None] > 0.0, vectors / np.where(norms == 0.0, 1.0, norms)[:, None], 0.0)
    offsets = (1.0, -1.0, 2.0, -2.0)
    batch = np.concatenate([starts + c * step * units for c in offsets], axis=0)
    tiled = np.tile(np.asarray(times, dtype=float), len(offsets))
    ends = flow_points(model, batch, tiled)
    n = starts.shape[0]
    fp1, fm1, fp2, fm2 = (ends[i * n:(i + 1) * n] for i in range(4))
    deriv = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * step)
    return deriv * norms[:, None]


def isometry_defect(model: SpacetimeModel, q, s: float, rng=None) -> float:
    """How far d_x psi(q, s) is from a metric isometry (post hoc check)."""
    q = _coords(q)
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal(model.m)
    w = rng.standard_normal(model.m)
    end = flow_points(model, q[None, :], np.array([s]))[0]
    dv = flow_differential(model, q[None, :], np.array([s]), v[None, :])[0]
    dw = flow_differential(model, q[None, :], np.array([s]), w[None, :])[0]
    before = float(v @ model.g(q) @ w)
    after = float(dv @ model.g(end) @ dw)
    return abs(after - before)


@dataclass
class CorrespondenceReport:
    geodesic_residual: float
    energy_value: float
    energy_vs_halfT2: float
    roundtrip_error: float
    horizontality: float

    def as_dict(self) -> dict:
        return {
            "geodesic_residual": self.geodesic_residual,
            "energy_value": self.energy_value,
            "energy_vs_halfT2": self.energy_vs_halfT2,
            "roundtrip_error": self.roundtrip_error,
            "horizontality": self.horizontality,
        }


def _constraint_defect(model, curve: Curve, k: float, T: float) -> float:
    worst = 0.0
    for q, v in zip(curve.points, curve.velocities):
        g = model.g(q)
        worst = max(worst,
                    abs(float(v @ g @ model.y(q)) + k * T) / (1.0 + k * T),
                    abs(float(v @ g @ v) + T * T) / (1.0 + T * T))
    return worst


def deform_D(model: SpacetimeModel, sol, k: float | None = None,
             n_out: int | None = None, check: bool = True) -> Curve:
    """Slide a trial curve along the Y-flow into a horizontal curve.

    Accepts a BrachistochroneSolution or a bare constraint-satisfying Curve
    (then ``k`` must be given).  The output grid is upsampled so downstream
    derivative reconstructions stay well below the residual tolerances.
    """
    if isinstance(sol, BrachistochroneSolution):
        curve, kk, T = sol.sigma, sol.k, sol.T
    else:
        curve = sol
        if k is None:
            raise ValueError("k is required when deforming a bare curve")
        kk = k
        T = None
    if check:
        if T is None:
            yy0 = float(curve.velocities[0] @ model.g(curve.points[0])
                        @ model.y(curve.points[0]))
            T = -yy0 / kk
            if T <= 0.0:
                raise ConstraintViolated("curve has nonpositive inferred travel time")
        if _constraint_defect(model, curve, kk, T) > 1e-6:
            raise ConstraintViolated("input curve violates the conservation constraints")

    if n_out is None:
        n_out = max(curve.n_segments, min(2 * curve.n_segments, 800))
    grid = np.linspace(0.0, 1.0, n_out + 1)
    ps, vs = curve.point_spline(), curve.velocity_spline()
    pts, vels = ps(grid), vs(grid)

    yy = np.array([float(model.y(q) @ model.g(q) @ model.y(q)) for q in pts])
    vy = np.array([float(v @ model.g(q) @ model.y(q)) for q, v in zip(pts, vels)])
    tau_rate = -vy / yy
    tau = cumulative_integral(grid, tau_rate)

    w_pts = flow_points(model, pts, tau)
    dpsi_v = flow_differential(model, pts, tau, vels)
    w_vels = dpsi_v + tau_rate[:, None] * np.array([model.y(q) for q in w_pts])
    w = Curve(grid=grid, points=w_pts, velocities=w_vels)

    speed = np.sqrt(max(max(float(v @ riemannian_metric_matrix(model, q) @ v)
                            for q, v in zip(w_pts, w_vels)), 1e-300))
    horiz = max(abs(float(v @ model.g(q) @ model.y(q))) for q, v in zip(w_pts, w_vels))
    if horiz > 1e-8 * speed:
        raise NotHorizontal(f"deformed curve has |<w',Y>| = {horiz} > 1e-8 * speed")
    return w


def lift_G(model: SpacetimeModel, k: float, w: Curve) -> BrachistochroneSolution:
    """Lift a horizontal curve back to a trial-curve candidate.

    The candidate's travel time comes from the conformal speed at the start
    node; the conservation constraints are reported, not enforced, so a
    non-geodesic input shows up as a large equation residual downstream.
    """
    grid, pts, vels = w.grid, w.points, w.velocities
    g0 = model.g(pts[0])
    y0 = model.y(pts[0])
    yy = np.array([float(model.y(q) @ model.g(q) @ model.y(q)) for q in pts])
    if np.any(yy + k * k <= 0.0):
        raise OutsideUk("horizontal curve leaves the admissible region")
    speed0 = float(vels[0] @ riemannian_metric_matrix(model, pts[0]) @ vels[0])
    horiz = max(abs(float(v @ model.g(q) @ model.y(q))) for q, v in zip(pts, vels))
    if horiz > 1e-6 * np.sqrt(max(speed0, 1e-300)):
        raise NotHorizontal(f"lift input is not horizontal: {horiz}")
    phi0 = -yy[0] / (k * k + yy[0])
    T = float(np.sqrt(phi0 * speed0))
    h_rate = -k * T / yy
    h = cumulative_integral(grid, h_rate)

    s_pts = flow_points(model, pts, h)
    dpsi_v = flow_differential(model, pts, h, vels)
    s_vels = dpsi_v + h_rate[:, None] * np.array([model.y(q) for q in s_pts])
    sigma = Curve(grid=grid, points=s_pts, velocities=s_vels)
    r_y = max(abs(float(v @ model.g(q) @ model.y(q)) + k * T)
              for q, v in zip(s_pts, s_vels))
    r_v = max(abs(float(v @ model.g(q) @ v) + T * T)
              for q, v in zip(s_pts, s_vels))
    return BrachistochroneSolution(
        sigma=sigma, T=T, k=k,
        residual_conservation_Y=r_y,
        residual_conservation_speed=r_v,
        residual_ode=_ode_residual(model, k, T, sigma),
    )


def tangent_constraint_scan(model: SpacetimeModel, sol: BrachistochroneSolution,
                            zeta: FieldAlongCurve):
    """(C, residual_Y(t), residual_speed(t), nabla-zeta nodes) for a variation field."""
    curve = sol.sigma
    if zeta.derivatives is not None:
        nz = zeta.derivatives
    else:
        dz = grid_derivative(curve.grid, zeta.values)
        nz = np.empty_like(dz)
        for i, (q, v) in enumerate(zip(curve.points, curve.velocities)):
            G = connection_coeffs(model, q)
            nz[i] = dz[i] + np.einsum("abc,b,c->a", G, v, zeta.values[i])
    vals_y = np.empty(curve.grid.size)
    vals_s = np.empty(curve.grid.size)
    for i, (q, v) in enumerate(zip(curve.points, curve.velocities)):
        g = model.g(q)
        y = model.y(q)
        K = nabla_y_matrix(model, q)
        vals_y[i] = float(nz[i] @ g @ y) - float(zeta.values[i] @ g @ (K @ v))
        vals_s[i] = float(nz[i] @ g @ v)
    C = grid_integral(curve.grid, vals_y)
    return C, vals_y, vals_s, nz


def dD_differential(model: SpacetimeModel, sol: BrachistochroneSolution,
                    zeta: FieldAlongCurve, deformed: Curve | None = None,
                    constraint_tol: float = 1e-5) -> FieldAlongCurve:
    """Gateaux derivative of the deformation along an admissible variation field.

    Returns the pushed field on the grid of ``zeta``'s host; the host curve of
    the result is the deformation computed on that same grid.
    """
    curve = sol.sigma
    C, vals_y, vals_s, nz = tangent_constraint_scan(model, sol, zeta)
    scale = 1.0 + float(np.max(np.abs(nz)))
    if (np.max(np.abs(vals_y - C)) > constraint_tol * scale
            or np.max(np.abs(vals_s - sol.T * C / sol.k)) > constraint_tol * scale):
        raise ConstraintViolated("field violates the tangent-space constraints")

    grid, pts = curve.grid, curve.points
    yy = np.array([float(model.y(q) @ model.g(q) @ model.y(q)) for q in pts])
    tau = cumulative_integral(grid, sol.k * sol.T / yy)

    dzy = np.empty(grid.size)  # <nabla_zeta Y, Y>
    for i, q in enumerate(pts):
        K = nabla_y_matrix(model, q)
        dzy[i] = float((K @ zeta.values[i]) @ model.g(q) @ model.y(q))
    tau_zeta = cumulative_integral(grid, -(C * yy + 2.0 * sol.k * sol.T * dzy) / yy ** 2)

    args = zeta.values + tau_zeta[:, None] * np.array([model.y(q) for q in pts])
    pushed = flow_differential(model, pts, tau, args)
    if deformed is None:
        deformed = deform_D(model, sol, n_out=curve.n_segments, check=False)
        if deformed.grid.size != grid.size:
            deformed = Curve(grid=grid, points=deformed.point_spline()(grid),
                             velocities=deformed.velocity_spline()(grid))
    return FieldAlongCurve(host=deformed, values=pushed)


def conformal_energy(model: SpacetimeModel, k: float, w: Curve) -> float:
    """E = 1/2 int phi_k g_R(w', w') dt by spline quadrature."""
    vals = np.empty(w.grid.size)
    for i, (q, v) in enumerate(zip(w.points, w.velocities)):
        y = model.y(q)
        yy = float(y @ model.g(q) @ y)
        phi = -yy / (k * k + yy)
        vals[i] = phi * float(v @ riemannian_metric_matrix(model, q) @ v)
    return 0.5 * grid_integral(w.grid, vals)


def correspondence_report(model: SpacetimeModel, sol: BrachistochroneSolution) -> CorrespondenceReport:
    """Numerical content of the first variational principle at one solution."""
    from .dynamics import geodesic_residual

    w = deform_D(model, sol)
    energy = conformal_energy(model, sol.k, w)
    back = lift_G(model, sol.k, w)
    grid = sol.sigma.grid
    back_pts = back.sigma.point_spline()(grid)
    worst = 0.0
    for q_ref, q_back in zip(sol.sigma.points, back_pts):
        d = model.wrap_difference(q_back - q_ref)
        gr = riemannian_metric_matrix(model, q_ref)
        worst = max(worst, float(np.sqrt(d @ gr @ d)))
    horiz = max(abs(float(v @ model.g(q) @ model.y(q)))
                for q, v in zip(w.points, w.velocities))
    return CorrespondenceReport(
        geodesic_residual=geodesic_residual(model, sol.k, w),
        energy_value=energy,
        energy_vs_halfT2=abs(energy - 0.5 * sol.T ** 2),
        roundtrip_error=worst,
        horizontality=horiz,
    )
