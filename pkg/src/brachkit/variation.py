"""First and second variation machinery for the travel time.

Covers the tangent-space constraints of the trial-curve manifold, the travel
time differential, the explicit Hessian of the action functional, the
Riemannian index form and energy Hessian of the conformal metric, and P1
Galerkin discretizations of the latter for Morse index counts.

Orientation convention: index computations run on curves from the observer
line to the event (the direction-reversed deformation of a solution); public
solution data stays in the event-to-observer orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh

from .curves import Curve, FieldAlongCurve, cumulative_integral, grid_derivative, grid_integral
from .dynamics import BrachistochroneSolution, brachistochrone_rhs, geodesic_residual
from .errors import (ConstraintViolated, FocalEndpoint, FrameDegenerate, NotCritical,
                     NotGeodesic, NotNormal, NotTangentToGamma)
from .geometry import (ConformalGeometry, SpacetimeModel, connection_coeffs,
                       curvature_tensor, nabla_y_matrix, riemannian_metric_matrix, _comps,
                       _coords)
from .transform import tangent_constraint_scan

__all__ = [
    "VariationConstraintReport",
    "HessianMatrix",
    "LagrangeMultiplierField",
    "constraint_residual",
    "travel_time_differential",
    "hessian_F_eval",
    "index_form",
    "hessian_E_eval",
    "hessian_E_lorentzian",
    "second_fundamental_form_gamma",
    "assemble_hessian",
    "restricted_index_report",
    "make_admissible_variation",
    "SolutionGeometry",
    "ConformalCurveData",
]


# ---------------------------------------------------------------------------
# Cached geometry along curves

class SolutionGeometry:
    """Per-node Lorentzian data along a solution curve, computed once."""

    def __init__(self, model: SpacetimeModel, sol: BrachistochroneSolution):
        self.model = model
        self.sol = sol
        curve = sol.sigma
        n = curve.grid.size
        m = model.m
        self.g = np.empty((n, m, m))
        self.y = np.empty((n, m))
        self.K = np.empty((n, m, m))        # (nabla_v Y)^a = K[a,b] v^b
        self.gamma = np.empty((n, m, m, m))
        self.N = np.empty(n)
        self.M_ss = np.empty((n, m, m))     # <R(z, s') z, s'> = z^T M_ss z
        self.M_sy = np.empty((n, m, m))     # <R(z, s') z, Y>  = z^T M_sy z
        self.RM1 = np.empty((n, m, m))      # (R(s', V) s')^a = RM1[a, d] V^d
        self.RM2 = np.empty((n, m, m))      # (R(s', V) Y)^a  = RM2[a, d] V^d
        self.nabla_yy = np.empty((n, m))    # (nabla_Y Y)^a
        for i, (q, v) in enumerate(zip(curve.points, curve.velocities)):
            g = model.g(q)
            y = model.y(q)
            G = connection_coeffs(model, q)
            R = curvature_tensor(model, q)
            self.g[i] = g
            self.y[i] = y
            self.gamma[i] = G
            self.K[i] = model.dy(q) + np.einsum("abc,c->ab", G, y)
            self.N[i] = float(y @ g @ y)
            self.nabla_yy[i] = self.K[i] @ y
            # <R(z, v) z, x> with (R(z,v)u)^a = R^a_{bcd} u^b z^c v^d:
            # term = g_{ea} R^a_{bcd} z^b z^c v^d x^e -> quadratic form in z.
            Rv = np.einsum("abcd,d->abc", R, v)           # R^a_{bc.} v
            for x, target in ((v, self.M_ss), (y, self.M_sy)):
                gx = g @ x
                Mbc = np.einsum("a,abc->bc", gx, Rv)
                target[i] = 0.5 * (Mbc + Mbc.T)
            self.RM1[i] = np.einsum("abcd,b,c->ad", R, v, v)
            self.RM2[i] = np.einsum("abcd,b,c->ad", R, y, v)
        self.P = self.sol.k ** 2 + self.N
        self.W = np.einsum("ni,nij,nj->n",
                           np.einsum("nab,nb->na", self.K, curve.velocities),
                           self.g, self.y)


@dataclass
class VariationConstraintReport:
    C_zeta: float
    residual_Y: float
    residual_speed: float
    boundary_ok: bool


@dataclass
class LagrangeMultiplierField:
    lam: float
    mu: np.ndarray

    @property
    def lambda_value(self) -> float:
        return self.lam


def lagrange_multiplier_field(model: SpacetimeModel, sol: BrachistochroneSolution
                              ) -> LagrangeMultiplierField:
    """The multiplier pair of a critical curve: lambda = 0, mu = 1/(2(k^2+<Y,Y>))."""
    mu = np.empty(sol.sigma.grid.size)
    for i, q in enumerate(sol.sigma.points):
        y = model.y(q)
        mu[i] = 1.0 / (2.0 * (sol.k ** 2 + float(y @ model.g(q) @ y)))
    return LagrangeMultiplierField(lam=0.0, mu=mu)


def constraint_residual(model: SpacetimeModel, sol: BrachistochroneSolution,
                        zeta: FieldAlongCurve) -> VariationConstraintReport:
    """Check a field against the tangent-space constraints of the trial manifold."""
    C, vals_y, vals_s, nz = tangent_constraint_scan(model, sol, zeta)
    scale = 1.0 + float(np.max(np.abs(zeta.values))) + float(np.max(np.abs(nz)))
    q1 = sol.sigma.points[-1]
    y1 = model.y(q1)
    gr1 = riemannian_metric_matrix(model, q1)
    z1 = zeta.values[-1]
    perp = z1 - (float(z1 @ gr1 @ y1) / float(y1 @ gr1 @ y1)) * y1
    boundary_ok = (float(np.linalg.norm(zeta.values[0])) <= 1e-7 * scale
                   and float(np.sqrt(perp @ gr1 @ perp)) <= 1e-7 * scale)
    return VariationConstraintReport(
        C_zeta=C,
        residual_Y=float(np.max(np.abs(vals_y - C))),
        residual_speed=float(np.max(np.abs(vals_s - sol.T * C / sol.k))),
        boundary_ok=bool(boundary_ok),
    )


def travel_time_differential(model: SpacetimeModel, sol: BrachistochroneSolution,
                             zeta: FieldAlongCurve, tol: float = 1e-4) -> float:
    """dT[zeta] = -C_zeta / k for an admissible variation field."""
    rep = constraint_residual(model, sol, zeta)
    scale = 1.0 + float(np.max(np.abs(zeta.values)))
    if rep.residual_Y > tol * scale or rep.residual_speed > tol * scale or not rep.boundary_ok:
        raise ConstraintViolated(
            f"variation field fails tangent constraints: "
            f"rY={rep.residual_Y:.2e} rS={rep.residual_speed:.2e} bnd={rep.boundary_ok}")
    return -rep.C_zeta / sol.k


# ---------------------------------------------------------------------------
# Hessian of the action functional (explicit second variation)

def _hessian_F_quadratic(geom: SolutionGeometry, zeta: FieldAlongCurve) -> float:
    model, sol = geom.model, geom.sol
    curve = sol.sigma
    grid = curve.grid
    if zeta.derivatives is not None:
        nz = zeta.derivatives
    else:
        dz = grid_derivative(grid, zeta.values)
        nz = dz + np.einsum("nabc,nb,nc->na", geom.gamma, curve.velocities, zeta.values)
    z = zeta.values
    ratio = geom.N / geom.P
    term1 = (np.einsum("na,nab,nb->n", nz, geom.g, nz)
             + np.einsum("na,nab,nb->n", z, geom.M_ss, z))
    dzy = np.einsum("nab,nb->na", geom.K, z)            # nabla_zeta Y
    term2 = (np.einsum("na,nab,nb->n", nz, geom.g, dzy)
             + np.einsum("na,nab,nb->n", z, geom.M_sy, z))
    integrand = ratio * term1 + (2.0 * sol.k * sol.T / geom.P) * term2
    total = grid_integral(grid, integrand)
    a_z = float(z[-1] @ geom.g[-1] @ geom.y[-1]) / geom.N[-1]
    boundary = (ratio[-1] * a_z ** 2
                * float(geom.nabla_yy[-1] @ geom.g[-1] @ curve.velocities[-1]))
    return float(total + boundary)


def hessian_F_eval(model: SpacetimeModel, sol: BrachistochroneSolution,
                   z1: FieldAlongCurve, z2: FieldAlongCurve,
                   geom: SolutionGeometry | None = None,
                   criticality_tol: float = 1e-5,
                   constraint_tol: float = 1e-4) -> float:
    """Second variation of the action functional at a critical curve.

    Bilinear values come from the quadratic form by polarization, so symmetry
    is structural.
    """
    if sol.residual_ode > criticality_tol * (1.0 + sol.T ** 2):
        raise NotCritical(f"curve is not critical: equation residual {sol.residual_ode:.2e}")
    for z in (z1, z2):
        rep = constraint_residual(model, sol, z)
        scale = 1.0 + float(np.max(np.abs(z.values)))
        if rep.residual_Y > constraint_tol * scale or rep.residual_speed > constraint_tol * scale:
            raise ConstraintViolated("field is not an admissible variation")
    geom = SolutionGeometry(model, sol) if geom is None else geom
    if z1 is z2:
        return _hessian_F_quadratic(geom, z1)
    plus = FieldAlongCurve(host=sol.sigma, values=z1.values + z2.values,
                           derivatives=None if (z1.derivatives is None or z2.derivatives is None)
                           else z1.derivatives + z2.derivatives)
    minus = FieldAlongCurve(host=sol.sigma, values=z1.values - z2.values,
                            derivatives=None if (z1.derivatives is None or z2.derivatives is None)
                            else z1.derivatives - z2.derivatives)
    return 0.25 * (_hessian_F_quadratic(geom, plus) - _hessian_F_quadratic(geom, minus))


# ---------------------------------------------------------------------------
# Conformal-side index form and energy Hessian

class ConformalCurveData:
    """Per-node conformal data along a curve (metric, Christoffels, tidal matrix)."""

    def __init__(self, confgeom: ConformalGeometry, w: Curve, geodesic_tol: float = 1e-4,
                 check: bool = True):
        self.confgeom = confgeom
        self.w = w
        model, k = confgeom.model, confgeom.k
        if check:
            res = geodesic_residual(model, k, w)
            speed2 = max(float(w.velocities[0] @ riemannian_metric_matrix(model, w.points[0])
                               @ w.velocities[0]), 1e-300)
            if res > geodesic_tol * (1.0 + speed2):
                raise NotGeodesic(f"curve is not a conformal geodesic: residual {res:.2e}")
        n = w.grid.size
        m = confgeom.m
        self.gt = np.empty((n, m, m))       # conformal metric
        self.gamma = np.empty((n, m, m, m))
        self.B = np.empty((n, m, m))        # g~(R~(w',z)w', x) = z^T B x (symmetrized)
        self.Braw = np.empty((n, m, m))     # (R~(w',J)w')^a = Braw[a,d] J^d
        self.Kt = np.empty((n, m, m))       # conformal nabla Y
        self.K = np.empty((n, m, m))        # Lorentzian nabla Y
        self.y = np.empty((n, m))
        self.N = np.empty(n)
        for i, (q, v) in enumerate(zip(w.points, w.velocities)):
            gt = confgeom.metric(q)
            G = confgeom.christoffels(q)
            R = confgeom.curvature(q)
            self.gt[i] = gt
            self.gamma[i] = G
            y = model.y(q)
            self.y[i] = y
            self.N[i] = float(y @ model.g(q) @ y)
            self.Kt[i] = model.dy(q) + np.einsum("abc,c->ab", G, y)
            GL = connection_coeffs(model, q)
            self.K[i] = model.dy(q) + np.einsum("abc,c->ab", GL, y)
            # (R(v,w)u)^a = R^a_{bcd} u^b v^c w^d; R~(w',J)w' -> R^a_{bcd} v^b v^c J^d
            Braw = np.einsum("abcd,b,c->ad", R, v, v)
            B = gt @ Braw
            self.Braw[i] = Braw
            self.B[i] = 0.5 * (B + B.T)

    def covariant_nodes(self, field: FieldAlongCurve) -> np.ndarray:
        if field.derivatives is not None:
            return field.derivatives
        dv = CubicSpline(self.w.grid, field.values, axis=0)(self.w.grid, 1)
        return dv + np.einsum("nabc,nb,nc->na", self.gamma, self.w.velocities, field.values)


def index_form(confgeom: ConformalGeometry, w: Curve, v1: FieldAlongCurve,
               v2: FieldAlongCurve, data: ConformalCurveData | None = None) -> float:
    """Symmetric index form of the conformal energy along a geodesic."""
    data = ConformalCurveData(confgeom, w) if data is None else data
    n1 = data.covariant_nodes(v1)
    n2 = data.covariant_nodes(v2)
    integrand = (np.einsum("na,nab,nb->n", n1, data.gt, n2)
                 + np.einsum("na,nab,nb->n", v1.values, data.B, v2.values))
    return float(grid_integral(w.grid, integrand))


def _boundary_2ff(data: ConformalCurveData, a1: np.ndarray, a2: np.ndarray) -> float:
    """Shape term at the observer end for fields with V(0) parallel to Y.

    Equals -g~(w'(0), nabla~_{V1(0)} V2): tensorial because V(0) is tangent to
    the observer line and w'(0) normal to it.
    """
    gt0 = data.gt[0]
    y0 = data.y[0]
    v0 = data.w.velocities[0]
    gy1 = float(a1 @ gt0 @ y0)
    gy2 = float(a2 @ gt0 @ y0)
    yy = float(y0 @ gt0 @ y0)
    y_dot = float(y0 @ gt0 @ (data.Kt[0] @ v0))   # g~(Y, nabla~_{w'} Y)
    return (gy1 * gy2 / yy ** 2) * y_dot


def hessian_E_eval(confgeom: ConformalGeometry, w: Curve, v1: FieldAlongCurve,
                   v2: FieldAlongCurve, data: ConformalCurveData | None = None) -> float:
    """Energy Hessian at a geodesic from the observer line to the event.

    ``w`` runs from the observer line to the event (orthogonal start); fields
    must be tangent to that boundary setup for the shape term to apply.
    """
    data = ConformalCurveData(confgeom, w) if data is None else data
    return index_form(confgeom, w, v1, v2, data=data) + _boundary_2ff(
        data, v1.values[0], v2.values[0])


def hessian_E_lorentzian(model: SpacetimeModel, k: float, w: Curve,
                         v: FieldAlongCurve) -> float:
    """Energy Hessian evaluated through Lorentzian data (cross-check form).

    Here ``w`` runs from the event to the observer line; the shape term sits
    at t = 1.  Quadratic form only.
    """
    grid = w.grid
    n = grid.size
    vals = v.values
    if v.derivatives is not None:
        nv = v.derivatives
    else:
        dv = CubicSpline(grid, vals, axis=0)(grid, 1)
        nv = np.empty_like(vals)
        for i, (q, vel) in enumerate(zip(w.points, w.velocities)):
            G = connection_coeffs(model, q)
            nv[i] = dv[i] + np.einsum("abc,b,c->a", G, vel, vals[i])

    def phi_of(qq):
        y = model.y(qq)
        yy = float(y @ model.g(qq) @ y)
        return -yy / (k * k + yy)

    from .geometry import scalar_gradient

    integrand = np.empty(n)
    for i, (q, vel) in enumerate(zip(w.points, w.velocities)):
        g = model.g(q)
        y = model.y(q)
        yy = float(y @ g @ y)
        phi = -yy / (k * k + yy)
        R = curvature_tensor(model, q)
        # <R(V, w') V, w'>
        RV = np.einsum("abcd,b,c,d->a", R, vals[i], vals[i], vel)
        curv = float((g @ vel) @ RV)
        grad_phi = scalar_gradient(model, q, phi_of)
        vv = float(vel @ g @ vel)
        dot_nv = float(nv[i] @ g @ vel)
        grad_dot_v = float(grad_phi @ g @ vals[i])
        # Hessian of the scalar phi_k: <nabla_V grad(phi), V>
        h = max(model.fd_step, 1e-6)
        Hphi = np.zeros((model.m, model.m))
        for b in range(model.m):
            e = np.zeros(model.m)
            e[b] = h
            gp = scalar_gradient(model, q + e, phi_of)
            gm = scalar_gradient(model, q - e, phi_of)
            Hphi[:, b] = (gp - gm) / (2.0 * h)
        G = connection_coeffs(model, q)
        nabla_grad = Hphi @ vals[i] + np.einsum("abc,b,c->a", G, vals[i], grad_phi)
        hess_term = float((g @ nabla_grad) @ vals[i])
        integrand[i] = (phi * (float(nv[i] @ g @ nv[i]) + curv)
                        + 2.0 * grad_dot_v * dot_nv + 0.5 * hess_term * vv)
    total = grid_integral(grid, integrand)
    # shape term of the observer line at the arrival end
    q1 = w.points[-1]
    g1 = model.g(q1)
    y1 = model.y(q1)
    yy1 = float(y1 @ g1 @ y1)
    phi1 = -yy1 / (k * k + yy1)
    nu = float(vals[-1] @ g1 @ y1) / yy1
    K1 = nabla_y_matrix(model, q1)
    s_gamma = nu * nu * float((K1 @ y1) @ g1 @ w.velocities[-1])
    return float(total + phi1 * s_gamma)


def second_fundamental_form_gamma(model: SpacetimeModel, q_on_gamma, n, v1, v2) -> float:
    """Shape tensor of the observer line: nu1 nu2 <nabla_Y Y, n> for v_i = nu_i Y."""
    q = _coords(q_on_gamma)
    g = model.g(q)
    y = model.y(q)
    yy = float(y @ g @ y)
    n = _comps(n)
    if abs(float(n @ g @ y)) > 1e-8 * np.sqrt(abs(yy)) * (np.linalg.norm(n) + 1.0):
        raise NotNormal("direction vector is not orthogonal to the observer line")
    nus = []
    for v in (v1, v2):
        v = _comps(v)
        nu = float(v @ g @ y) / yy
        perp = v - nu * y
        if np.linalg.norm(perp) > 1e-8 * (np.linalg.norm(v) + 1.0):
            raise NotTangentToGamma("vector is not tangent to the observer line")
        nus.append(nu)
    K = nabla_y_matrix(model, q)
    return nus[0] * nus[1] * float((K @ y) @ g @ n)


# ---------------------------------------------------------------------------
# Discretized Morse indices

@dataclass
class HessianMatrix:
    basis: str
    entries: np.ndarray
    n_negative: int
    n_zero: int
    eps_eig: float

    def eigenvalues(self) -> np.ndarray:
        return eigh(self.entries, eigvals_only=True)


def _frame_perp(model: SpacetimeModel, pts, vels, drop_velocity: bool):
    """Smooth g_R-orthonormal frames orthogonal to Y (and optionally to w')."""
    n, m = pts.shape
    keep = m - 2 if drop_velocity else m - 1
    frames = np.empty((n, keep, m))
    prev = None
    for i in range(n):
        gr = riemannian_metric_matrix(model, pts[i])
        y = model.y(pts[i])
        kill = [y / np.sqrt(float(y @ gr @ y))]
        if drop_velocity:
            v = vels[i]
            v = v - float(v @ gr @ kill[0]) * kill[0]
            nv = np.sqrt(float(v @ gr @ v))
            if nv < 1e-12:
                raise FrameDegenerate("velocity parallel to the observer field")
            kill.append(v / nv)
        basis = []
        for cand in np.eye(m):
            vec = cand.copy()
            for b in kill + basis:
                vec = vec - float(vec @ gr @ b) * b
            nn = np.sqrt(max(float(vec @ gr @ vec), 0.0))
            if nn > 1e-8:
                basis.append(vec / nn)
            if len(basis) == keep:
                break
        if len(basis) < keep:
            raise FrameDegenerate("could not complete an orthogonal frame")
        E = np.array(basis)
        if prev is not None:
            # keep the frame continuous along the curve
            for a in range(keep):
                if float(E[a] @ gr @ prev[a]) < 0.0:
                    E[a] = -E[a]
        frames[i] = E
        prev = E
    return frames


def _quad_points(n_el: int):
    """Two-point Gauss nodes and weights on each element of a uniform mesh."""
    h = 1.0 / n_el
    left = np.arange(n_el) * h
    off = 0.5 * h + np.array([-1.0, 1.0]) * (h / (2.0 * np.sqrt(3.0)))
    tq = (left[:, None] + off[None, :]).ravel()
    wq = np.full(tq.size, h / 2.0)
    return tq, wq


def assemble_hessian(confgeom: ConformalGeometry, w: Curve, boundary_conditions: str,
                     n_basis: int, data: ConformalCurveData | None = None) -> HessianMatrix:
    """Galerkin matrix of the energy Hessian on nodal P1 fields.

    ``w`` runs from the observer line to the event.  Modes:

    * ``full``: fields with V(0) parallel to Y and V(1) = 0;
    * ``horizontal``: additionally tangent to the horizontal-curve manifold
      (the Y-component is reconstructed from that first-order condition);
    * ``perpendicular``: additionally pointwise orthogonal to the velocity.
    """
    if boundary_conditions not in ("full", "horizontal", "perpendicular"):
        raise ValueError(f"unknown boundary condition set '{boundary_conditions}'")
    model = confgeom.model
    if data is None:
        data = ConformalCurveData(confgeom, w)

    tq, wq = _quad_points(n_basis)
    nodes = np.linspace(0.0, 1.0, n_basis + 1)
    pspl = w.point_spline()
    vspl = w.velocity_spline()
    pts_q = pspl(tq)
    vels_q = vspl(tq)

    nq = tq.size
    m = confgeom.m
    gt_q = np.empty((nq, m, m))
    gam_q = np.empty((nq, m, m, m))
    B_q = np.empty((nq, m, m))
    # interpolate cached node data instead of re-deriving curvature at every
    # quadrature point
    for name, target in (("gt", gt_q), ("gamma", gam_q), ("B", B_q)):
        src = getattr(data, name)
        spl = CubicSpline(w.grid, src.reshape(w.grid.size, -1), axis=0)
        target[:] = spl(tq).reshape((nq,) + src.shape[1:])

    y_q = np.array([model.y(q) for q in pts_q])
    dy_dt_q = np.einsum("qab,qb->qa", np.array([model.dy(q) for q in pts_q]), vels_q)

    def hats(ts):
        """Values and slopes of all nodal hats at the given parameters."""
        idx = np.clip(np.searchsorted(nodes, ts, side="right") - 1, 0, n_basis - 1)
        h = 1.0 / n_basis
        local = (ts - nodes[idx]) / h
        vals = np.zeros((ts.size, n_basis + 1))
        slopes = np.zeros((ts.size, n_basis + 1))
        rows = np.arange(ts.size)
        vals[rows, idx] = 1.0 - local
        vals[rows, idx + 1] = local
        slopes[rows, idx] = -1.0 / h
        slopes[rows, idx + 1] = 1.0 / h
        return vals, slopes

    hat_v, hat_s = hats(tq)

    fields = []   # (V at quad pts, dV/dt at quad pts, V(0))
    if boundary_conditions == "full":
        axes = np.eye(m)
        for j in range(1, n_basis):
            for a in range(m):
                V = hat_v[:, j][:, None] * axes[a][None, :]
                dV = hat_s[:, j][:, None] * axes[a][None, :]
                fields.append((V, dV, np.zeros(m)))
        # observer-end degree of freedom along Y
        V = hat_v[:, 0][:, None] * y_q
        dV = hat_s[:, 0][:, None] * y_q + hat_v[:, 0][:, None] * dy_dt_q
        fields.append((V, dV, model.y(pspl(0.0))))
    else:
        drop_velocity = boundary_conditions == "perpendicular"
        frames_nodes = _frame_perp(model, pspl(nodes), vspl(nodes), drop_velocity)
        keep = frames_nodes.shape[1]
        fr_spl = CubicSpline(nodes, frames_nodes.reshape(nodes.size, -1), axis=0)
        frames_q = fr_spl(tq).reshape(nq, keep, m)
        dframes_q = fr_spl(tq, 1).reshape(nq, keep, m)
        # Lorentzian <E_a, nabla_w' Y> / <Y,Y> along the curve, for the
        # first-order horizontality condition on the Y-component.
        K_spl = CubicSpline(w.grid, data.K.reshape(w.grid.size, -1), axis=0)
        K_q = K_spl(tq).reshape(nq, m, m)
        g_spl = CubicSpline(w.grid, np.array([model.g(q) for q in w.points]).reshape(w.grid.size, -1), axis=0)
        g_q = g_spl(tq).reshape(nq, m, m)
        N_q = np.einsum("qa,qab,qb->q", y_q, g_q, y_q)
        Kv_q = np.einsum("qab,qb->qa", K_q, vels_q)       # nabla_{w'} Y
        rate_dir = 2.0 * np.einsum("qca,qab,qb->qc", frames_q, g_q, Kv_q) / N_q[:, None]
        # rate for a field c(t) E_a(t): lambda' = c(t) * rate_dir[a](t)
        fine = np.linspace(0.0, 1.0, 4 * n_basis + 1)
        hat_vf, _ = hats(fine)
        frames_f = fr_spl(fine).reshape(fine.size, keep, m)
        g_f = g_spl(fine).reshape(fine.size, m, m)
        K_f = K_spl(fine).reshape(fine.size, m, m)
        y_f = np.array([model.y(q) for q in pspl(fine)])
        vels_f = vspl(fine)
        N_f = np.einsum("qa,qab,qb->q", y_f, g_f, y_f)
        Kv_f = np.einsum("qab,qb->qa", K_f, vels_f)
        rate_f = 2.0 * np.einsum("qca,qab,qb->qc", frames_f, g_f, Kv_f) / N_f[:, None]
        y_qn = y_q
        for j in range(1, n_basis):
            for a in range(keep):
                # transverse part
                V = hat_v[:, j][:, None] * frames_q[:, a, :]
                dV = (hat_s[:, j][:, None] * frames_q[:, a, :]
                      + hat_v[:, j][:, None] * dframes_q[:, a, :])
                # Y-component reconstructed from the tangency condition,
                # vanishing at the event end
                lam_rate_f = hat_vf[:, j] * rate_f[:, a]
                lam_f = cumulative_integral(fine, lam_rate_f)
                lam_f = lam_f - lam_f[-1]
                lam_spl = CubicSpline(fine, lam_f)
                lam_q = lam_spl(tq)
                lam_rate_q = hat_v[:, j] * rate_dir[:, a]
                V = V + lam_q[:, None] * y_qn
                dV = dV + lam_rate_q[:, None] * y_qn + lam_q[:, None] * dy_dt_q
                fields.append((V, dV, lam_spl(0.0) * model.y(pspl(0.0))))

    ndof = len(fields)
    if ndof == 0:
        raise ValueError("no degrees of freedom (n_basis too small)")
    Vs = np.stack([f[0] for f in fields])    # (ndof, nq, m)
    dVs = np.stack([f[1] for f in fields])
    V0s = np.stack([f[2] for f in fields])

    # covariant derivative along the curve at quadrature points
    corr = np.einsum("qabc,qb,dqc->dqa", gam_q, vels_q, Vs)
    nVs = dVs + corr
    Hmat = (np.einsum("aqi,qij,bqj,q->ab", nVs, gt_q, nVs, wq)
            + np.einsum("aqi,qij,bqj,q->ab", Vs, B_q, Vs, wq))
    # observer-end shape term
    gt0 = data.gt[0]
    y0 = data.y[0]
    yy0 = float(y0 @ gt0 @ y0)
    ydot0 = float(y0 @ gt0 @ (data.Kt[0] @ w.velocities[0]))
    proj = V0s @ gt0 @ y0
    Hmat = Hmat + np.outer(proj, proj) * (ydot0 / yy0 ** 2)
    Hmat = 0.5 * (Hmat + Hmat.T)

    evals = eigh(Hmat, eigvals_only=True)
    scale = float(np.max(np.abs(evals))) if evals.size else 1.0
    eps = 1e-6 * scale
    n_neg = int(np.sum(evals < -eps))
    n_zero = int(np.sum(np.abs(evals) <= eps))
    return HessianMatrix(basis=f"P1/{boundary_conditions}/n={n_basis}", entries=Hmat,
                         n_negative=n_neg, n_zero=n_zero, eps_eig=eps)


def restricted_index_report(confgeom: ConformalGeometry, w: Curve, n_basis: int,
                            data: ConformalCurveData | None = None) -> tuple:
    """Morse index on the full, horizontal, and perpendicular variation spaces."""
    if data is None:
        data = ConformalCurveData(confgeom, w)
    out = []
    for mode in ("full", "horizontal", "perpendicular"):
        hm = assemble_hessian(confgeom, w, mode, n_basis, data=data)
        if hm.n_zero > 0:
            raise FocalEndpoint(
                f"degenerate Hessian in mode '{mode}' (n_zero = {hm.n_zero})")
        out.append(hm.n_negative)
    return tuple(out)


# ---------------------------------------------------------------------------
# Admissible variation fields

def make_admissible_variation(model: SpacetimeModel, sol: BrachistochroneSolution,
                              rng=None, seed_coeffs=None,
                              geom: SolutionGeometry | None = None) -> FieldAlongCurve:
    """Construct a field satisfying the tangent-space constraints exactly.

    A free smooth seed vanishing at both ends is corrected by components along
    Y and along the horizontal part of the velocity; the correction functions
    solve the two constraint equations, and the admissible constant is fixed
    by the far boundary condition.  Exact covariant derivative values are
    attached.
    """
    curve = sol.sigma
    grid = curve.grid
    n = grid.size
    m = model.m
    k, T = sol.k, sol.T
    geom = SolutionGeometry(model, sol) if geom is None else geom

    if seed_coeffs is None:
        rng = np.random.default_rng(0) if rng is None else rng
        seed_coeffs = rng.standard_normal((3, m)) / np.array([1, 2, 3])[:, None]
    seed_coeffs = np.asarray(seed_coeffs, dtype=float)
    jmax = seed_coeffs.shape[0]
    zeta0 = np.zeros((n, m))
    dzeta0 = np.zeros((n, m))
    for j in range(jmax):
        zeta0 += np.sin((j + 1) * np.pi * grid)[:, None] * seed_coeffs[j][None, :]
        dzeta0 += ((j + 1) * np.pi * np.cos((j + 1) * np.pi * grid))[:, None] * seed_coeffs[j][None, :]

    vels = curve.velocities
    nz0 = dzeta0 + np.einsum("nabc,nb,nc->na", geom.gamma, vels, zeta0)

    # horizontal part of the velocity and its covariant derivative
    Z = vels + (k * T / geom.N)[:, None] * geom.y
    acc = np.empty((n, m))
    for i in range(n):
        acc[i] = brachistochrone_rhs(model, k, T, (curve.points[i], vels[i]))[1]
    nabla_ss = acc + np.einsum("nabc,nb,nc->na", geom.gamma, vels, vels)
    Kv = np.einsum("nab,nb->na", geom.K, vels)          # nabla_{s'} Y
    dN = 2.0 * np.einsum("na,nab,nb->n", Kv, geom.g, geom.y)
    nabla_Z = (nabla_ss + (-k * T * dN / geom.N ** 2)[:, None] * geom.y
               + (k * T / geom.N)[:, None] * Kv)

    gv = np.einsum("nab,nb->na", geom.g, vels)
    gy = np.einsum("nab,nb->na", geom.g, geom.y)
    P0 = np.einsum("na,na->n", nz0, gy) - np.einsum("na,na->n", zeta0,
                                                    np.einsum("nab,nb->na", geom.g, Kv))
    Q0 = np.einsum("na,na->n", nz0, gv)
    beta_P = (np.einsum("na,na->n", nabla_Z, gy)
              - np.einsum("na,na->n", Z, np.einsum("nab,nb->na", geom.g, Kv)))
    Zs = np.einsum("na,na->n", Z, gv)
    nabla_Z_s = np.einsum("na,na->n", nabla_Z, gv)

    alpha = -(k * T * beta_P / geom.N + nabla_Z_s) / Zs
    beta = (-Q0 - k * T * P0 / geom.N) / Zs
    gamma_c = (T / k + k * T / geom.N) / Zs

    A = cumulative_integral(grid, alpha)
    expA = np.exp(A)
    b_beta = expA * cumulative_integral(grid, beta / expA)
    b_gamma = expA * cumulative_integral(grid, gamma_c / expA)
    if abs(b_gamma[-1]) < 1e-12:
        raise ConstraintViolated("variation construction is degenerate (b_gamma(1) = 0)")
    C = -b_beta[-1] / b_gamma[-1]
    b = b_beta + C * b_gamma
    bprime = alpha * b + beta + C * gamma_c
    aprime = (C - P0 - b * beta_P) / geom.N
    a = cumulative_integral(grid, aprime)

    values = zeta0 + a[:, None] * geom.y + b[:, None] * Z
    derivs = (nz0 + aprime[:, None] * geom.y + a[:, None] * Kv
              + bprime[:, None] * Z + b[:, None] * nabla_Z)
    return FieldAlongCurve(host=curve, values=values, derivatives=derivs)
