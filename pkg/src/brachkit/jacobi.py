"""Jacobi fields along solutions and along conformal geodesics, focal point
detection, and the correspondence between the two sides.

The linearized travel-time equation is integrated with coefficient data
interpolated from a per-solution cache; focal parameters come from zeros of
the determinant of Jacobi fields against a parallel frame, with
multiplicities read off a rank analysis at each zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .curves import Curve, FieldAlongCurve, cumulative_integral
from .dynamics import BrachistochroneSolution
from .errors import (ConstraintViolated, FrameDegenerate, InitialConditionViolated,
                     NotCritical, NotOrthogonalStart, StepFailure)
from .geometry import ConformalGeometry, SpacetimeModel, riemannian_metric_matrix, _comps
from .transform import deform_D, flow_differential, flow_points
from .variation import ConformalCurveData, SolutionGeometry

__all__ = [
    "JacobiFieldData",
    "FocalReport",
    "integrate_bjacobi",
    "integrate_rjacobi",
    "gamma_jacobi_basis",
    "focal_points",
    "map_L",
    "bfocal_points",
]

_IVP_OPTS = dict(method="DOP853", rtol=1e-11, atol=1e-13)


@dataclass
class JacobiFieldData:
    field: FieldAlongCurve
    derivative: FieldAlongCurve
    C_V: float
    kind: str
    drift: float = 0.0   # conserved-quantity drift over the run


@dataclass
class FocalReport:
    focal_list: list          # [(t0, multiplicity)]
    geometric_index: int
    determinant_trace: tuple  # (t samples, det samples)

    def as_dict(self) -> dict:
        return {
            "focal_list": [[float(t), int(m)] for t, m in self.focal_list],
            "geometric_index": int(self.geometric_index),
        }


# ---------------------------------------------------------------------------
# Linearized travel-time equation along a solution

class _BJacobiCache:
    """Splined coefficient data for the linearized equation along sigma."""

    def __init__(self, model: SpacetimeModel, sol: BrachistochroneSolution,
                 geom: SolutionGeometry | None = None):
        geom = SolutionGeometry(model, sol) if geom is None else geom
        grid = sol.sigma.grid
        self.k, self.T = sol.k, sol.T
        self.m = model.m

        def spl(arr):
            return CubicSpline(grid, arr.reshape(grid.size, -1), axis=0)

        self._gamma = spl(geom.gamma)
        self._K = spl(geom.K)
        self._g = spl(geom.g)
        self._y = CubicSpline(grid, geom.y, axis=0)
        self._v = sol.sigma.velocity_spline()
        self._N = CubicSpline(grid, geom.N)
        self._RM1 = spl(geom.RM1)
        self._RM2 = spl(geom.RM2)
        self.shape_g = geom.gamma.shape[1:]
        self.shape_m = (self.m, self.m)

    def at(self, t):
        m = self.m
        return dict(
            gamma=self._gamma(t).reshape(m, m, m),
            K=self._K(t).reshape(m, m),
            dK=self._K(t, 1).reshape(m, m),
            g=self._g(t).reshape(m, m),
            y=self._y(t),
            v=self._v(t),
            N=float(self._N(t)),
            RM1=self._RM1(t).reshape(m, m),
            RM2=self._RM2(t).reshape(m, m),
        )


def _bjacobi_rhs(cache: _BJacobiCache, C_V: float):
    k, T = cache.k, cache.T
    kk = k * k

    def rhs(t, state):
        m = cache.m
        V, DV = state[:m], state[m:]
        d = cache.at(t)
        g, y, v = d["g"], d["y"], d["v"]
        N, P = d["N"], kk + d["N"]
        K = d["K"]
        Kv = K @ v                      # nabla_{s'} Y
        W = float(Kv @ g @ y)
        KV = K @ V                      # nabla_V Y
        dN = 2.0 * float(KV @ g @ y)
        dNP = dN * (N + P)
        dT = -C_V / k
        Vdot = DV - np.einsum("abc,b,c->a", d["gamma"], v, V)
        # nabla_{s'} (nabla_V Y) along the curve
        nsKV = d["dK"] @ V + K @ Vdot + np.einsum("abc,b,c->a", d["gamma"], v, KV)
        dW = float(nsKV @ g @ y) + float(KV @ g @ Kv)
        R1V = d["RM1"] @ V              # R(s', V) s'
        R2V = d["RM2"] @ V              # R(s', V) Y
        L = (2.0 * kk * (dW / (N * P) - W * dNP / (N * P) ** 2) * v
             + 2.0 * kk * (W / (N * P)) * DV
             + 2.0 * k * (dT / N - T * dN / N ** 2) * Kv
             + (2.0 * k * T / N) * (nsKV - R2V)
             - 2.0 * k * (dT * W / (N * P) + T * dW / (N * P)
                          - T * W * dNP / (N * P) ** 2) * y
             - 2.0 * k * T * (W / (N * P)) * KV)
        DDV = R1V - L
        dDV = DDV - np.einsum("abc,b,c->a", d["gamma"], v, DV)
        return np.concatenate([Vdot, dDV])

    return rhs


def integrate_bjacobi(model: SpacetimeModel, sol: BrachistochroneSolution,
                      V0, dV0, t0: float = 0.0, t1: float = 1.0,
                      cache: _BJacobiCache | None = None,
                      check_ic: bool = True) -> JacobiFieldData:
    """Integrate the linearized travel-time equation from covariant data (V0, dV0).

    ``dV0`` is the covariant derivative of the field at the start; the
    admissibility constant is computed from the data, and the launch must
    satisfy the linearized conservation condition.
    """
    cache = _BJacobiCache(model, sol) if cache is None else cache
    d0 = cache.at(t0)
    V0 = _comps(V0)
    dV0 = _comps(dV0)
    g, y, v = d0["g"], d0["y"], d0["v"]
    C_V = float(dV0 @ g @ y) - float(V0 @ g @ (d0["K"] @ v))
    ic = -sol.T * C_V + sol.k * float(dV0 @ g @ v)
    scale = 1.0 + float(np.linalg.norm(V0)) + float(np.linalg.norm(dV0))
    if check_ic and abs(ic) > 1e-6 * scale * (1.0 + sol.T):
        raise InitialConditionViolated(
            f"launch data violates the linearized conservation condition: {ic:.3e}")

    out = solve_ivp(_bjacobi_rhs(cache, C_V), (t0, t1), np.concatenate([V0, dV0]),
                    dense_output=True, **_IVP_OPTS)
    if not out.success:
        raise StepFailure(f"linearized integration failed: {out.message}")

    grid = sol.sigma.grid
    mask = (grid >= t0 - 1e-12) & (grid <= t1 + 1e-12)
    ts = grid[mask]
    m = model.m
    vals = np.zeros((grid.size, m))
    ders = np.zeros((grid.size, m))
    sampled = out.sol(ts)
    vals[mask] = sampled[:m].T
    ders[mask] = sampled[m:].T
    # conserved-quantity drift
    drift = 0.0
    for t, V, DV in zip(ts, vals[mask], ders[mask]):
        d = cache.at(t)
        c_here = float(DV @ d["g"] @ d["y"]) - float(V @ d["g"] @ (d["K"] @ d["v"]))
        drift = max(drift, abs(c_here - C_V))
    return JacobiFieldData(
        field=FieldAlongCurve(host=sol.sigma, values=vals),
        derivative=FieldAlongCurve(host=sol.sigma, values=ders),
        C_V=C_V, kind="b_jacobi", drift=drift,
    )


# ---------------------------------------------------------------------------
# Riemannian Jacobi fields along a conformal geodesic

class _RJacobiCache:
    def __init__(self, confgeom: ConformalGeometry, w: Curve,
                 data: ConformalCurveData | None = None):
        self.data = ConformalCurveData(confgeom, w) if data is None else data
        grid = w.grid
        self.m = confgeom.m
        self._gamma = CubicSpline(grid, self.data.gamma.reshape(grid.size, -1), axis=0)
        self._A = CubicSpline(grid, self.data.Braw.reshape(grid.size, -1), axis=0)
        self._v = w.velocity_spline()

    def rhs(self, t, state):
        m = self.m
        J, DJ = state[:m], state[m:]
        gamma = self._gamma(t).reshape(m, m, m)
        A = self._A(t).reshape(m, m)
        v = self._v(t)
        Jdot = DJ - np.einsum("abc,b,c->a", gamma, v, J)
        dDJ = A @ J - np.einsum("abc,b,c->a", gamma, v, DJ)
        return np.concatenate([Jdot, dDJ])


def integrate_rjacobi(confgeom: ConformalGeometry, w: Curve, J0, dJ0,
                      cache: _RJacobiCache | None = None) -> JacobiFieldData:
    """Integrate the Jacobi equation of the conformal metric along a geodesic."""
    cache = _RJacobiCache(confgeom, w) if cache is None else cache
    J0 = _comps(J0)
    dJ0 = _comps(dJ0)
    out = solve_ivp(cache.rhs, (0.0, 1.0), np.concatenate([J0, dJ0]),
                    dense_output=True, **_IVP_OPTS)
    if not out.success:
        raise StepFailure(f"Jacobi integration failed: {out.message}")
    m = confgeom.m
    sampled = out.sol(w.grid)
    return JacobiFieldData(
        field=FieldAlongCurve(host=w, values=sampled[:m].T),
        derivative=FieldAlongCurve(host=w, values=sampled[m:].T),
        C_V=0.0, kind="riemannian_gamma",
    )


def _check_orthogonal_start(confgeom, w):
    model = confgeom.model
    q0, v0 = w.points[0], w.velocities[0]
    y0 = model.y(q0)
    gr = riemannian_metric_matrix(model, q0)
    sp = np.sqrt(max(float(v0 @ gr @ v0), 1e-300))
    if abs(float(v0 @ model.g(q0) @ y0)) > 1e-6 * sp * np.sqrt(abs(float(y0 @ gr @ y0))):
        raise NotOrthogonalStart("geodesic does not start orthogonally to the observer line")


def gamma_jacobi_basis(confgeom: ConformalGeometry, w: Curve,
                       data: ConformalCurveData | None = None) -> list:
    """m independent Jacobi fields meeting the observer-line boundary conditions.

    Condition set at the start node: J(0) parallel to Y, and the conserved
    pairing of the derivative with Y matches the shape of the line.
    """
    _check_orthogonal_start(confgeom, w)
    model = confgeom.model
    data = ConformalCurveData(confgeom, w) if data is None else data
    cache = _RJacobiCache(confgeom, w, data=data)
    q0, v0 = w.points[0], w.velocities[0]
    y0 = model.y(q0)
    gt0 = data.gt[0]
    yy = float(y0 @ gt0 @ y0)

    inits = []
    # field tangent to the line at the start
    c = -float(v0 @ gt0 @ (data.Kt[0] @ y0)) / yy
    inits.append((y0.copy(), c * y0))
    # fields vanishing at the start, derivative orthogonal to Y
    m = confgeom.m
    basis = []
    for cand in np.eye(m):
        vec = cand - (float(cand @ gt0 @ y0) / yy) * y0
        for b in basis:
            vec = vec - float(vec @ gt0 @ b) * b
        nn = np.sqrt(max(float(vec @ gt0 @ vec), 0.0))
        if nn > 1e-8:
            basis.append(vec / nn)
        if len(basis) == m - 1:
            break
    if len(basis) < m - 1:
        raise FrameDegenerate("could not build the orthogonal derivative basis")
    for b in basis:
        inits.append((np.zeros(m), b))

    M0 = np.array([np.concatenate(pair) for pair in inits])
    if np.linalg.svd(M0, compute_uv=False)[-1] <= 1e-8:
        raise FrameDegenerate("initial data for the Jacobi basis is degenerate")
    return [integrate_rjacobi(confgeom, w, J0, dJ0, cache=cache) for J0, dJ0 in inits]


def _parallel_frame(confgeom: ConformalGeometry, w: Curve, data: ConformalCurveData):
    """g~-orthonormal frame parallel along w (in the conformal connection)."""
    model = confgeom.model
    m = confgeom.m
    gt0 = data.gt[0]
    basis = []
    for cand in np.eye(m):
        vec = cand.copy()
        for b in basis:
            vec = vec - float(vec @ gt0 @ b) * b
        nn = np.sqrt(max(float(vec @ gt0 @ vec), 0.0))
        if nn > 1e-10:
            basis.append(vec / nn)
    if len(basis) < m:
        raise FrameDegenerate("could not orthonormalize the start frame")
    grid = w.grid
    gamma_spl = CubicSpline(grid, data.gamma.reshape(grid.size, -1), axis=0)
    v_spl = w.velocity_spline()

    def rhs(t, flat):
        E = flat.reshape(m, m)
        gamma = gamma_spl(t).reshape(m, m, m)
        v = v_spl(t)
        dE = -np.einsum("abc,b,jc->ja", gamma, v, E)
        return dE.ravel()

    out = solve_ivp(rhs, (0.0, 1.0), np.array(basis).ravel(), dense_output=True,
                    **_IVP_OPTS)
    if not out.success:
        raise StepFailure(f"frame transport failed: {out.message}")
    return out.sol


def focal_points(confgeom: ConformalGeometry, w: Curve,
                 data: ConformalCurveData | None = None,
                 n_scan: int = 1000, t_min: float = 0.01,
                 rank_rtol: float = 1e-5) -> FocalReport:
    """Zeros of det(g~(J_i, E_j)) on (t_min, 1], with SVD multiplicities.

    ``w`` runs from the observer line to the event; the returned parameters are
    in that same orientation.
    """
    data = ConformalCurveData(confgeom, w) if data is None else data
    fields = gamma_jacobi_basis(confgeom, w, data=data)
    frame_sol = _parallel_frame(confgeom, w, data)
    model = confgeom.model
    m = confgeom.m
    grid = w.grid
    gt_spl = CubicSpline(grid, data.gt.reshape(grid.size, -1), axis=0)

    j_splines = [CubicSpline(grid, f.field.values, axis=0) for f in fields]

    def matrix_at(t):
        gt = gt_spl(t).reshape(m, m)
        E = frame_sol(t).reshape(m, m)
        J = np.array([spl(t) for spl in j_splines])
        return J @ gt @ E.T

    ts = np.linspace(t_min, 1.0, n_scan + 1)
    dets = np.array([np.linalg.det(matrix_at(t)) for t in ts])
    scale = float(np.max(np.abs(dets)))
    if scale == 0.0:
        raise FrameDegenerate("determinant vanishes identically")

    candidates = []
    for i in range(n_scan):
        if dets[i] == 0.0:
            candidates.append(ts[i])
        elif dets[i] * dets[i + 1] < 0.0:
            candidates.append(brentq(lambda t: np.linalg.det(matrix_at(t)),
                                     ts[i], ts[i + 1], xtol=1e-12))
    # even-order zeros: local minima of |det| dipping far below scale
    absd = np.abs(dets)
    for i in range(1, n_scan):
        if absd[i] < absd[i - 1] and absd[i] < absd[i + 1] and absd[i] < 1e-8 * scale:
            res = minimize_scalar(lambda t: abs(np.linalg.det(matrix_at(t))),
                                  bracket=(ts[i - 1], ts[i], ts[i + 1]))
            t_cand = float(res.x)
            if not any(abs(t_cand - c) < 2.0 / n_scan for c in candidates):
                candidates.append(t_cand)
    if abs(dets[-1]) < 1e-8 * scale and not any(abs(1.0 - c) < 2.0 / n_scan for c in candidates):
        candidates.append(1.0)

    focal = []
    for t0 in sorted(candidates):
        svals = np.linalg.svd(matrix_at(t0), compute_uv=False)
        mult = int(np.sum(svals < rank_rtol * svals[0]))
        if mult >= 1:
            focal.append((float(t0), mult))
    return FocalReport(
        focal_list=focal,
        geometric_index=int(sum(mu for _, mu in focal)),
        determinant_trace=(ts, dets),
    )


# ---------------------------------------------------------------------------
# Correspondence machinery

def map_L(model: SpacetimeModel, sol: BrachistochroneSolution, t0: float,
          zeta: FieldAlongCurve, C_zeta: float | None = None) -> FieldAlongCurve:
    """Push a variation field on [t0, 1] to the deformed side.

    The host of the result is the deformation of the solution re-anchored at
    parameter t0 (a constant Killing-flow shift of the full deformation);
    values at parameters below t0 are zero-filled.
    """
    curve = sol.sigma
    grid = curve.grid
    pts = curve.points
    yy = np.array([float(model.y(q) @ model.g(q) @ model.y(q)) for q in pts])
    vy = np.array([float(v @ model.g(q) @ model.y(q))
                   for q, v in zip(pts, curve.velocities)])
    tau_full = cumulative_integral(grid, -vy / yy)
    tau0 = float(CubicSpline(grid, tau_full)(t0))
    tau = tau_full - tau0

    if C_zeta is None:
        from .transform import tangent_constraint_scan
        C_zeta, _, _, _ = tangent_constraint_scan(model, sol, zeta)

    dzy = np.empty(grid.size)
    from .geometry import nabla_y_matrix
    for i, q in enumerate(pts):
        K = nabla_y_matrix(model, q)
        dzy[i] = float((K @ zeta.values[i]) @ model.g(q) @ model.y(q))
    rate = -(C_zeta * yy + 2.0 * sol.k * sol.T * dzy) / yy ** 2
    tz_full = cumulative_integral(grid, rate)
    tau_zeta = tz_full - float(CubicSpline(grid, tz_full)(t0))

    mask = grid >= t0 - 1e-12
    host_pts = flow_points(model, pts, tau)
    args = zeta.values + tau_zeta[:, None] * np.array([model.y(q) for q in pts])
    pushed = np.zeros_like(zeta.values)
    pushed[mask] = flow_differential(model, pts[mask], tau[mask], args[mask])
    # host curve: the shifted deformation, with velocities from the flow push
    dpsi_v = flow_differential(model, pts, tau, curve.velocities)
    host_vels = dpsi_v + (-vy / yy)[:, None] * np.array([model.y(q) for q in host_pts])
    host = Curve(grid=grid, points=host_pts, velocities=host_vels)
    return FieldAlongCurve(host=host, values=pushed)


def _bfocal_singular_value(model, sol, t0, cache: _BJacobiCache):
    """Smallest relative singular value of the endpoint map at parameter t0."""
    d = cache.at(t0)
    g, y, v = d["g"], d["y"], d["v"]
    m = model.m
    # admissible derivative directions: <DV, k s' - T Y> = 0 in the metric
    row = g @ (sol.k * v - sol.T * y)
    _, _, Vt = np.linalg.svd(row[None, :])
    dirs = Vt[1:]
    q1 = sol.sigma.points[-1]
    y1 = model.y(q1)
    gr1 = riemannian_metric_matrix(model, q1)
    yy1 = float(y1 @ gr1 @ y1)
    # horizontal frame at the arrival point
    frame = []
    for cand in np.eye(m):
        vec = cand - (float(cand @ gr1 @ y1) / yy1) * y1
        for b in frame:
            vec = vec - float(vec @ gr1 @ b) * b
        nn = np.sqrt(max(float(vec @ gr1 @ vec), 0.0))
        if nn > 1e-8:
            frame.append(vec / nn)
        if len(frame) == m - 1:
            break
    cols = []
    for dv in dirs:
        data = integrate_bjacobi(model, sol, np.zeros(m), dv, t0=t0, cache=cache,
                                 check_ic=False)
        V1 = data.field.values[-1]
        cols.append([float(V1 @ gr1 @ e) for e in frame])
    M = np.array(cols).T
    svals = np.linalg.svd(M, compute_uv=False)
    return float(svals[-1] / max(svals[0], 1e-300))


def bfocal_points(model: SpacetimeModel, sol: BrachistochroneSolution,
                  criticality_tol: float = 1e-5, refine_window: float = 0.02,
                  confirm_tol: float = 1e-4) -> FocalReport:
    """Focal parameters of a solution, via the deformed side plus a direct check.

    The Riemannian scan runs on the reversed deformation; parameters are pulled
    back through t -> 1 - t, then each candidate is refined and confirmed by a
    rank drop of the endpoint map of the linearized equation.
    """
    if sol.residual_ode > criticality_tol * (1.0 + sol.T ** 2):
        raise NotCritical("focal analysis requires a critical curve")
    from .geometry import conformal_geometry

    w = deform_D(model, sol)
    wrev = w.reversed()
    cg = conformal_geometry(model, sol.k)
    riem = focal_points(cg, wrev)

    cache = _BJacobiCache(model, sol)
    out = []
    for tR, mult in riem.focal_list:
        tb = 1.0 - tR
        if tb >= 1.0 - 1e-9:
            out.append((float(tb), mult, 0.0))
            continue
        lo = max(0.0, tb - refine_window)
        hi = min(1.0 - 1e-6, tb + refine_window)
        res = minimize_scalar(lambda t: _bfocal_singular_value(model, sol, t, cache),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-8})
        tb_refined = float(res.x)
        sv = float(res.fun)
        if sv > confirm_tol:
            raise ConstraintViolated(
                f"no vanishing linearized solution confirms the focal parameter "
                f"{tb:.6f} (endpoint singular value {sv:.3e})")
        out.append((tb_refined, mult, sv))
    focal = sorted((t, m) for t, m, _ in out)
    return FocalReport(
        focal_list=[(float(t), int(m)) for t, m in focal],
        geometric_index=int(sum(m for _, m in focal)),
        determinant_trace=riem.determinant_trace,
    )
