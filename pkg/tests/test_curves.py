import numpy as np
import pytest
from scipy.integrate import solve_ivp

from brachkit.curves import (Curve, FieldAlongCurve, covariant_derivative_along,
                             curve_from_csv, curve_from_json_dict, curve_to_csv,
                             curve_to_json_dict, field_integral, grid_derivative,
                             resample_curve)
from brachkit.errors import GridMismatch, GridTooCoarse
from brachkit.geometry import connection_coeffs


def straight_line(n=100, m=3):
    grid = np.linspace(0.0, 1.0, n + 1)
    direction = np.array([1.0, -0.5, 2.0])[:m]
    pts = np.outer(grid, direction)
    vels = np.tile(direction, (n + 1, 1))
    return Curve(grid=grid, points=pts, velocities=vels)


def great_circle(n=400, L=2.0):
    grid = np.linspace(0.0, 1.0, n + 1)
    pts = np.stack([np.full(n + 1, np.pi / 2), L * grid, np.zeros(n + 1)], axis=1)
    vels = np.stack([np.zeros(n + 1), np.full(n + 1, L), np.zeros(n + 1)], axis=1)
    return Curve(grid=grid, points=pts, velocities=vels)


def test_grid_validation():
    with pytest.raises(GridMismatch):
        Curve(grid=[0.0, 0.5, 0.4, 1.0], points=np.zeros((4, 3)),
              velocities=np.zeros((4, 3)))
    with pytest.raises(GridMismatch):
        Curve(grid=[0.1, 0.5, 1.0], points=np.zeros((3, 3)),
              velocities=np.zeros((3, 3)))


def test_covariant_derivative_flat_constant(models):
    c = straight_line()
    f = FieldAlongCurve(host=c, values=np.tile([0.3, 1.0, -0.2], (c.grid.size, 1)))
    out = covariant_derivative_along(models["minkowski3"], c, f)
    assert np.max(np.abs(out.values)) < 1e-12


def test_covariant_derivative_of_velocity_on_geodesic(models):
    c = straight_line()
    f = FieldAlongCurve(host=c, values=c.velocities.copy())
    out = covariant_derivative_along(models["minkowski3"], c, f)
    assert np.max(np.abs(out.values)) < 1e-12


def test_covariant_derivative_parallel_field(models):
    # transport a frame vector along a great circle, then check the nodal
    # derivative of the sampled field is small
    model = models["einstein_cylinder"]
    c = great_circle()

    def rhs(t, f):
        q = c.point_spline()(t)
        v = c.velocity_spline()(t)
        G = connection_coeffs(model, q)
        return -np.einsum("abc,b,c->a", G, v, f)

    out = solve_ivp(rhs, (0.0, 1.0), np.array([1.0, 0.0, 0.3]), rtol=1e-12,
                    atol=1e-12, dense_output=True)
    f = FieldAlongCurve(host=c, values=out.sol(c.grid).T)
    dv = covariant_derivative_along(model, c, f)
    assert np.max(np.abs(dv.values)) < 1e-3


def test_covariant_derivative_product_rule_order(models):
    model = models["einstein_cylinder"]
    worst = {}
    for n in (100, 200):
        c = great_circle(n=n)
        vals_f = np.stack([np.sin(2 * c.grid), np.cos(c.grid), c.grid ** 2], axis=1)
        vals_g = np.stack([c.grid, np.sin(c.grid), np.ones(c.grid.size)], axis=1)
        f = FieldAlongCurve(host=c, values=vals_f)
        g = FieldAlongCurve(host=c, values=vals_g)
        df = covariant_derivative_along(model, c, f)
        dg = covariant_derivative_along(model, c, g)
        ip = np.array([f.values[i] @ model.g(q) @ g.values[i]
                       for i, q in enumerate(c.points)])
        lhs = grid_derivative(c.grid, ip)
        rhs = np.array([df.values[i] @ model.g(q) @ g.values[i]
                        + f.values[i] @ model.g(q) @ dg.values[i]
                        for i, q in enumerate(c.points)])
        worst[n] = np.max(np.abs(lhs - rhs))
    assert worst[100] / max(worst[200], 1e-30) >= 3.5


def test_field_integral_basics(models):
    model = models["minkowski3"]
    c = straight_line(n=200)
    zero = FieldAlongCurve(host=c, values=np.zeros_like(c.points))
    assert field_integral(model, c, zero, zero) == 0.0
    const = FieldAlongCurve(host=c, values=np.tile([1.0, 0, 0], (c.grid.size, 1)))
    assert field_integral(model, c, const, const) == pytest.approx(1.0, abs=1e-14)


def test_field_integral_sine(models):
    model = models["minkowski3"]
    c = straight_line(n=200)
    f = FieldAlongCurve(host=c, values=np.stack(
        [np.sin(np.pi * c.grid), np.zeros(c.grid.size), np.zeros(c.grid.size)], axis=1))
    val = field_integral(model, c, f, f)
    assert val == pytest.approx(0.5, abs=1e-4)


def test_field_integral_symmetric_bilinear(models):
    model = models["minkowski3"]
    c = straight_line(n=50)
    rng = np.random.default_rng(0)
    f = FieldAlongCurve(host=c, values=rng.standard_normal(c.points.shape))
    g = FieldAlongCurve(host=c, values=rng.standard_normal(c.points.shape))
    assert field_integral(model, c, f, g) == pytest.approx(
        field_integral(model, c, g, f), abs=1e-14)
    both = FieldAlongCurve(host=c, values=f.values + g.values)
    assert field_integral(model, c, both, g) == pytest.approx(
        field_integral(model, c, f, g) + field_integral(model, c, g, g), rel=1e-12)


def test_resample_straight_line():
    c = straight_line(n=57)
    r = resample_curve(c, 123)
    expected = np.outer(r.grid, [1.0, -0.5, 2.0])
    assert np.max(np.abs(r.points - expected)) < 1e-12
    assert np.max(np.abs(r.velocities - [1.0, -0.5, 2.0])) < 1e-10


def test_resample_identity():
    c = straight_line(n=64)
    r = resample_curve(c, 64)
    assert np.max(np.abs(r.points - c.points)) < 1e-12


def test_resample_refine_circle():
    c = great_circle(n=100)
    r = resample_curve(c, 400)
    drift = np.abs(np.linalg.norm(r.velocities, axis=1) - 2.0)
    assert np.max(drift) < 1e-5


def test_resample_too_coarse():
    with pytest.raises(GridTooCoarse):
        resample_curve(straight_line(), 3)


def test_serialization_roundtrip():
    c = great_circle(n=17)
    c2 = curve_from_csv(curve_to_csv(c))
    assert np.max(np.abs(c2.points - c.points)) == 0.0
    assert np.max(np.abs(c2.velocities - c.velocities)) == 0.0
    c3 = curve_from_json_dict(curve_to_json_dict(c))
    assert np.max(np.abs(c3.points - c.points)) == 0.0
