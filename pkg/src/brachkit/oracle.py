"""Independent brute-force verification tools.

Two kinds of ground truth live here: a direct minimizer of the conformal
energy over discretized horizontal polylines (with a boundary barrier keeping
iterates inside the admissible region), and finite-difference families of
exact solutions used as oracles for the linearized machinery.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solveh_banded

from .curves import Curve, cumulative_integral
from .dynamics import (BrachistochroneSolution, IntegratorConfig,
                       integrate_brachistochrone)
from .errors import OutsideUk, Stalled, ZeroSeed
from .geometry import SpacetimeModel, riemannian_metric_matrix, _coords
from .transform import conformal_energy, deform_D, lift_G

__all__ = [
    "PenaltyConfig",
    "DiscreteCandidate",
    "penalized_energy",
    "discrete_minimize",
    "fd_variation_family",
    "constrained_curve_family",
    "horizontal_part",
]

log = logging.getLogger("brachkit.oracle")


@dataclass(frozen=True)
class PenaltyConfig:
    """Barrier parameters: the chi term switches on once 1/Psi_k^2 >= 1/epsilon."""

    epsilon: float = 0.5

    def chi(self, s: float) -> float:
        if s < 1.0 / self.epsilon:
            return 0.0
        r = s - 1.0 / self.epsilon
        return float(np.exp(r) - (1.0 + r + 0.5 * r * r))

    def chi_prime(self, s: float) -> float:
        if s < 1.0 / self.epsilon:
            return 0.0
        r = s - 1.0 / self.epsilon
        return float(np.exp(r) - (1.0 + r))


@dataclass
class DiscreteCandidate:
    polyline: Curve
    T_estimate: float
    constraint_penalty: float


def psi_k(model: SpacetimeModel, k: float, q) -> float:
    q = _coords(q)
    y = model.y(q)
    return float(y @ model.g(q) @ y) + k * k


def penalized_energy(model: SpacetimeModel, k: float, w: Curve,
                     pc: PenaltyConfig) -> float:
    """Conformal energy plus the boundary barrier, by nodal quadrature."""
    energy = conformal_energy(model, k, w)
    psis = np.array([psi_k(model, k, q) for q in w.points])
    if np.any(psis == 0.0):
        raise OutsideUk("curve touches the admissible-region boundary")
    barrier = np.array([pc.chi(1.0 / p ** 2) for p in psis])
    if np.all(barrier == 0.0):
        return energy
    return energy + float(np.trapezoid(barrier, w.grid))


def horizontal_part(model: SpacetimeModel, q, v) -> np.ndarray:
    y = model.y(q)
    g = model.g(q)
    return v - (float(v @ g @ y) / float(y @ g @ y)) * y


def _segment_form(model, k, q):
    """M(q) = phi_k P^T g_R P at q, so the horizontal energy density is v^T M v."""
    g = model.g(q)
    y = model.y(q)
    yy = float(y @ g @ y)
    P = k * k + yy
    if P <= 0.0:
        raise OutsideUk("midpoint outside the admissible region")
    phi = -yy / P
    gy = g @ y
    proj = np.eye(model.m) - np.outer(y, gy) / yy
    gr = g - 2.0 * np.outer(gy, gy) / yy
    return phi * (proj.T @ gr @ proj)


class _PolylineObjective:
    """Energy of the horizontal projection of a polyline, with its gradient."""

    def __init__(self, model, k, x0, x1, n_seg, pc: PenaltyConfig):
        self.model = model
        self.k = k
        self.x0 = x0
        self.x1 = x1
        self.n = n_seg
        self.pc = pc
        self.dt = 1.0 / n_seg
        self.fd = 1e-6

    def nodes(self, interior):
        return np.vstack([self.x0, interior.reshape(self.n - 1, self.model.m), self.x1])

    def energy(self, interior) -> float:
        nodes = self.nodes(interior)
        total = 0.0
        for i in range(self.n):
            mid = 0.5 * (nodes[i] + nodes[i + 1])
            v = (nodes[i + 1] - nodes[i]) / self.dt
            M = _segment_form(self.model, self.k, mid)
            total += 0.5 * self.dt * float(v @ M @ v)
        # node-based barrier, trapezoid weights
        w = np.full(self.n + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        for i, q in enumerate(nodes):
            psi = psi_k(self.model, self.k, q)
            if psi <= 0.0:
                raise OutsideUk("polyline node outside the admissible region")
            total += w[i] * self.pc.chi(1.0 / psi ** 2)
        return total

    def gradient(self, interior) -> np.ndarray:
        nodes = self.nodes(interior)
        m = self.model.m
        grad = np.zeros((self.n + 1, m))
        for i in range(self.n):
            mid = 0.5 * (nodes[i] + nodes[i + 1])
            v = (nodes[i + 1] - nodes[i]) / self.dt
            M = _segment_form(self.model, self.k, mid)
            Mv = M @ v
            grad[i] += -Mv
            grad[i + 1] += Mv
            # metric variation through the midpoint
            for a in range(m):
                e = np.zeros(m)
                e[a] = self.fd
                Mp = _segment_form(self.model, self.k, mid + e)
                Mm = _segment_form(self.model, self.k, mid - e)
                dM = (Mp - Mm) / (2.0 * self.fd)
                contrib = 0.25 * self.dt * float(v @ dM @ v)
                grad[i, a] += contrib
                grad[i + 1, a] += contrib
        w = np.full(self.n + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        for i in range(1, self.n):
            q = nodes[i]
            psi = psi_k(self.model, self.k, q)
            cp = self.pc.chi_prime(1.0 / psi ** 2)
            if cp != 0.0:
                dpsi = np.empty(m)
                for a in range(m):
                    e = np.zeros(m)
                    e[a] = self.fd
                    dpsi[a] = (psi_k(self.model, self.k, q + e)
                               - psi_k(self.model, self.k, q - e)) / (2.0 * self.fd)
                grad[i] += w[i] * cp * (-2.0 / psi ** 3) * dpsi
        return grad[1:-1].ravel()

    def validate_gradient(self, interior, n_checks: int = 6, tol: float = 1e-6):
        g = self.gradient(interior)
        rng = np.random.default_rng(0)
        idx = rng.choice(g.size, size=min(n_checks, g.size), replace=False)
        scale = 1.0 + float(np.max(np.abs(g)))
        for j in idx:
            e = np.zeros_like(interior)
            h = 1e-6
            e[j] = h
            fd = (self.energy(interior + e) - self.energy(interior - e)) / (2.0 * h)
            if abs(fd - g[j]) > tol * scale:
                raise AssertionError(
                    f"gradient check failed at dof {j}: analytic {g[j]:.3e} vs fd {fd:.3e}")


def _h1_preconditioner(n_seg, m):
    """Banded Cholesky factor data for the discrete H1 form on interior nodes."""
    n_int = n_seg - 1
    ab = np.zeros((2, n_int))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    return ab * n_seg  # scale by 1/dt


def discrete_minimize(model: SpacetimeModel, p, gamma_anchor, k: float, n_seg: int,
                      init: Curve | None = None, pc: PenaltyConfig = PenaltyConfig(),
                      gtol: float = 1e-7, max_iters: int = 20000) -> DiscreteCandidate:
    """Minimize the (penalized) horizontal energy over polylines from p to the
    observer orbit.

    The Y-component of every segment velocity is projected out, which makes
    the objective a function on the quotient by the flow; the arrival node can
    therefore be pinned at the anchor.  Descent directions are gradients in
    the curve-space H1 inner product (a tridiagonal solve), with Armijo
    backtracking; the stopping test is on the plain gradient norm.
    """
    p = _coords(p)
    x1 = _coords(gamma_anchor)
    m = model.m
    if init is None:
        grid = np.linspace(0.0, 1.0, n_seg + 1)
        pts = np.outer(1.0 - grid, p) + np.outer(grid, x1)
        init_nodes = pts
    else:
        from .curves import resample_curve
        init_nodes = resample_curve(init, n_seg).points
    obj = _PolylineObjective(model, k, p, x1, n_seg, pc)
    x = init_nodes[1:-1].ravel().copy()
    obj.validate_gradient(x)

    ab = _h1_preconditioner(n_seg, m)
    energy = obj.energy(x)
    for it in range(max_iters):
        g = obj.gradient(x)
        gn = float(np.linalg.norm(g))
        if gn < gtol:
            break
        gmat = g.reshape(n_seg - 1, m)
        d = np.empty_like(gmat)
        for a in range(m):
            d[:, a] = solveh_banded(ab, gmat[:, a])
        d = -d.ravel()
        slope = float(g @ d)
        if slope >= 0.0:
            d = -g
            slope = -gn * gn
        lam = 1.0
        for _ in range(40):
            try:
                e_new = obj.energy(x + lam * d)
            except OutsideUk:
                lam *= 0.5
                continue
            if e_new <= energy + 1e-4 * lam * slope:
                break
            lam *= 0.5
        else:
            raise Stalled(f"no descent step found at iteration {it} (|g| = {gn:.3e})")
        x = x + lam * d
        energy = e_new
    else:
        raise Stalled(f"gradient norm {gn:.3e} after {max_iters} iterations")

    nodes = obj.nodes(x)
    # horizontal lift of the quotient polyline: reconstruct nodal velocities
    grid = np.linspace(0.0, 1.0, n_seg + 1)
    spline = CubicSpline(grid, nodes, axis=0)
    vels = spline(grid, 1)
    vels = np.array([horizontal_part(model, q, v) for q, v in zip(nodes, vels)])
    poly = Curve(grid=grid, points=nodes, velocities=vels)
    raw = conformal_energy(model, k, poly)
    return DiscreteCandidate(polyline=poly, T_estimate=float(np.sqrt(2.0 * raw)),
                             constraint_penalty=float(penalized_energy(model, k, poly, pc) - raw))


def launch_direction(model: SpacetimeModel, sol: BrachistochroneSolution) -> np.ndarray:
    """Recover the g_R-unit horizontal launch direction of a solution."""
    q = sol.sigma.points[0]
    v = sol.sigma.velocities[0]
    u = horizontal_part(model, q, v)
    gr = riemannian_metric_matrix(model, q)
    nn = np.sqrt(max(float(u @ gr @ u), 0.0))
    if nn < 1e-12:
        raise ZeroSeed("solution launches parallel to the observer field")
    return u / nn


def fd_variation_family(model: SpacetimeModel, sol: BrachistochroneSolution,
                        direction_perturbation, s_values,
                        config: IntegratorConfig = IntegratorConfig()) -> list:
    """Re-integrate from perturbed launch data on the constraint manifold.

    ``direction_perturbation`` is a pair (du, dT): a chart vector tilting the
    launch direction and a travel-time rate.  Yields one solution per entry of
    ``s_values`` (s = 0 returns the base solution itself).
    """
    du, dT = direction_perturbation
    du = np.asarray(du, dtype=float)
    u0 = launch_direction(model, sol)
    q = sol.sigma.points[0]
    gr = riemannian_metric_matrix(model, q)
    out = []
    for s in np.atleast_1d(s_values):
        if s == 0.0:
            out.append(sol)
            continue
        u = horizontal_part(model, q, u0 + s * du)
        u = u / np.sqrt(float(u @ gr @ u))
        out.append(integrate_brachistochrone(model, sol.k, q, u, sol.T + s * dT, config))
    return out


def constrained_curve_family(model: SpacetimeModel, sol: BrachistochroneSolution,
                             coeffs, s: float,
                             n_out: int | None = None) -> BrachistochroneSolution:
    """A constraint-exact curve through the solution, bent by a smooth bump.

    The deformed horizontal curve is perturbed in the chart, re-horizontalized,
    reparametrized to constant conformal speed, and lifted back.  Every member
    satisfies the conservation constraints and shares both endpoint orbits, so
    finite differences of the travel time along the family probe the
    variational formulas directly.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    w = deform_D(model, sol, n_out=n_out)
    grid = w.grid
    eta = np.zeros_like(w.points)
    deta = np.zeros_like(w.points)
    for j in range(coeffs.shape[0]):
        eta += np.sin((j + 1) * np.pi * grid)[:, None] * coeffs[j][None, :]
        deta += ((j + 1) * np.pi * np.cos((j + 1) * np.pi * grid))[:, None] * coeffs[j][None, :]
    bent = Curve(grid=grid, points=w.points + s * eta, velocities=w.velocities + s * deta)
    flat = deform_D(model, bent, k=sol.k, check=False)

    # reparametrize to constant conformal speed
    speeds = np.empty(flat.grid.size)
    for i, (q, v) in enumerate(zip(flat.points, flat.velocities)):
        y = model.y(q)
        yy = float(y @ model.g(q) @ y)
        phi = -yy / (sol.k ** 2 + yy)
        speeds[i] = np.sqrt(max(phi * float(v @ riemannian_metric_matrix(model, q) @ v), 0.0))
    ell = cumulative_integral(flat.grid, speeds)
    total = ell[-1]
    t_of_ell = CubicSpline(ell, flat.grid)
    new_grid = flat.grid
    t_src = t_of_ell(total * new_grid)
    t_src[0], t_src[-1] = 0.0, 1.0
    pspl = flat.point_spline()
    pts = pspl(t_src)
    rate = total / CubicSpline(flat.grid, speeds)(t_src)
    vels = pspl(t_src, 1) * rate[:, None]
    const_speed = Curve(grid=new_grid, points=pts, velocities=vels)
    return lift_G(model, sol.k, const_speed)
