"""Sampled curves on [0, 1], vector fields along them, covariant derivatives,
and quadrature helpers."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GridMismatch, GridTooCoarse, OutOfChart
from .geometry import SpacetimeModel, connection_coeffs

__all__ = [
    "Curve",
    "FieldAlongCurve",
    "covariant_derivative_along",
    "field_integral",
    "resample_curve",
    "grid_derivative",
    "cumulative_integral",
    "grid_integral",
    "curve_to_csv",
    "curve_from_csv",
    "curve_to_json_dict",
    "curve_from_json_dict",
]


@dataclass
class Curve:
    """A curve sampled on a strictly increasing grid with t0 = 0, tN = 1.

    ``points[i]`` and ``velocities[i]`` are the chart position and chart
    velocity at ``grid[i]``.
    """

    grid: np.ndarray
    points: np.ndarray      # (N+1, m)
    velocities: np.ndarray  # (N+1, m)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.grid.ndim != 1 or np.any(np.diff(self.grid) <= 0.0):
            raise GridMismatch("grid must be strictly increasing")
        if abs(self.grid[0]) > 1e-14 or abs(self.grid[-1] - 1.0) > 1e-14:
            raise GridMismatch("grid must span [0, 1]")
        if self.points.shape != self.velocities.shape or self.points.shape[0] != self.grid.size:
            raise GridMismatch("points/velocities shapes do not match the grid")

    @property
    def n_segments(self) -> int:
        return self.grid.size - 1

    @property
    def m(self) -> int:
        return self.points.shape[1]

    def validate_chart(self, model: SpacetimeModel):
        for q in self.points:
            if not model.in_chart(q):
                raise OutOfChart(f"curve point {q} outside chart of '{model.name}'")

    def point_spline(self) -> CubicSpline:
        return CubicSpline(self.grid, self.points, axis=0)

    def velocity_spline(self) -> CubicSpline:
        return CubicSpline(self.grid, self.velocities, axis=0)

    def reversed(self) -> "Curve":
        """Direction reversal t -> 1 - t."""
        return Curve(grid=1.0 - self.grid[::-1],
                     points=self.points[::-1].copy(),
                     velocities=-self.velocities[::-1])


@dataclass
class FieldAlongCurve:
    """Nodal values of a vector field along a host curve.

    ``derivatives`` optionally stores exact covariant derivative values; when
    missing they are reconstructed by differencing the nodal values.
    """

    host: Curve
    values: np.ndarray                      # (N+1, m)
    derivatives: Optional[np.ndarray] = None  # (N+1, m), covariant, optional

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.host.points.shape:
            raise GridMismatch("field values do not match host curve shape")
        if self.derivatives is not None:
            self.derivatives = np.asarray(self.derivatives, dtype=float)
            if self.derivatives.shape != self.values.shape:
                raise GridMismatch("field derivatives do not match host curve shape")

    def reversed(self) -> "FieldAlongCurve":
        der = None if self.derivatives is None else -self.derivatives[::-1]
        return FieldAlongCurve(host=self.host.reversed(),
                               values=self.values[::-1].copy(),
                               derivatives=der)


def grid_derivative(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    """d(values)/dt on the grid: centered interior, second-order one-sided ends."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.size < 5:
        raise GridTooCoarse("need at least 5 grid nodes")
    out = np.empty_like(values)
    dt_f = (grid[2:] - grid[1:-1])[:, None] if values.ndim > 1 else grid[2:] - grid[1:-1]
    dt_b = (grid[1:-1] - grid[:-2])[:, None] if values.ndim > 1 else grid[1:-1] - grid[:-2]
    # three-point nonuniform centered difference
    out[1:-1] = (dt_b ** 2 * values[2:] - dt_f ** 2 * values[:-2]
                 + (dt_f ** 2 - dt_b ** 2) * values[1:-1]) / (dt_f * dt_b * (dt_f + dt_b))
    for idx, sl in ((0, slice(0, 3)), (-1, slice(-3, None))):
        t = grid[sl]
        v = values[sl]
        t0 = grid[idx]
        # second-order one-sided: derivative of the quadratic through 3 nodes
        l0 = (2 * t0 - t[1] - t[2]) / ((t[0] - t[1]) * (t[0] - t[2]))
        l1 = (2 * t0 - t[0] - t[2]) / ((t[1] - t[0]) * (t[1] - t[2]))
        l2 = (2 * t0 - t[0] - t[1]) / ((t[2] - t[0]) * (t[2] - t[1]))
        out[idx] = l0 * v[0] + l1 * v[1] + l2 * v[2]
    return out


def covariant_derivative_along(model: SpacetimeModel, c: Curve,
                               f: FieldAlongCurve) -> FieldAlongCurve:
    """Node-wise covariant derivative of f along c: df/dt + Gamma(c)(cdot, f).

    Uses the stored exact derivative values when the field carries them.
    """
    if f.host is not c and f.host.grid.shape != c.grid.shape:
        raise GridMismatch("field not hosted on the given curve")
    if c.grid.size < 5:
        raise GridTooCoarse("covariant derivative needs at least 5 nodes")
    if f.derivatives is not None:
        return FieldAlongCurve(host=c, values=f.derivatives.copy())
    dfdt = grid_derivative(c.grid, f.values)
    out = np.empty_like(f.values)
    for i, (q, v) in enumerate(zip(c.points, c.velocities)):
        G = connection_coeffs(model, q)
        out[i] = dfdt[i] + np.einsum("abc,b,c->a", G, v, f.values[i])
    return FieldAlongCurve(host=c, values=out)


def field_integral(model: SpacetimeModel, c: Curve, f: FieldAlongCurve,
                   g: FieldAlongCurve, weight=None) -> float:
    """Composite trapezoid of weight * <f, g> over the curve grid."""
    if f.values.shape != g.values.shape:
        raise GridMismatch("fields live on different grids")
    vals = np.empty(c.grid.size)
    for i, q in enumerate(c.points):
        vals[i] = f.values[i] @ model.g(q) @ g.values[i]
    if weight is not None:
        vals = vals * np.asarray(weight, dtype=float)
    return float(np.trapezoid(vals, c.grid))


def grid_integral(grid: np.ndarray, vals: np.ndarray) -> float:
    """Spline quadrature of nodal samples (fourth-order accurate)."""
    return float(CubicSpline(grid, vals).integrate(grid[0], grid[-1]))


def cumulative_integral(grid: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Antiderivative samples F(t_i) = int_0^{t_i} vals, via the nodal spline."""
    spline = CubicSpline(grid, vals)
    anti = spline.antiderivative()
    return anti(grid) - anti(grid[0])


def resample_curve(c: Curve, n_new: int) -> Curve:
    """Cubic resampling onto a uniform grid with n_new segments."""
    if n_new < 4:
        raise GridTooCoarse("resampling needs at least 4 segments")
    grid = np.linspace(0.0, 1.0, n_new + 1)
    spline = c.point_spline()
    return Curve(grid=grid, points=spline(grid), velocities=spline(grid, 1))


# ---------------------------------------------------------------------------
# Serialization

def curve_to_csv(c: Curve) -> str:
    """CSV with columns t, q_1..q_m, v_1..v_m (17 significant digits)."""
    m = c.m
    cols = ["t"] + [f"q_{i+1}" for i in range(m)] + [f"v_{i+1}" for i in range(m)]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for t, q, v in zip(c.grid, c.points, c.velocities):
        row = [t] + list(q) + list(v)
        buf.write(",".join(format(x, ".17g") for x in row) + "\n")
    return buf.getvalue()


def curve_from_csv(text: str) -> Curve:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    m = (len(header) - 1) // 2
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return Curve(grid=data[:, 0], points=data[:, 1:1 + m], velocities=data[:, 1 + m:1 + 2 * m])


def curve_to_json_dict(c: Curve) -> dict:
    return {
        "grid": list(c.grid),
        "points": [list(row) for row in c.points],
        "velocities": [list(row) for row in c.velocities],
    }


def curve_from_json_dict(d: dict) -> Curve:
    return Curve(grid=np.asarray(d["grid"]), points=np.asarray(d["points"]),
                 velocities=np.asarray(d["velocities"]))
