"""Chart-level Lorentzian geometry: metric, Killing field, connection, curvature,
and the auxiliary Riemannian / conformal structures built from them.

Everything lives in a single coordinate chart. A model supplies callables for
the metric components and the Killing field; Christoffel symbols fall back to
central finite differences when no analytic form is given.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import OutOfChart, OutsideUk, StencilOutOfChart

__all__ = [
    "Event",
    "Tangent",
    "SpacetimeModel",
    "ConformalGeometry",
    "metric_eval",
    "killing_eval",
    "connection_coeffs",
    "curvature_tensor",
    "riemannian_metric_eval",
    "riemannian_metric_matrix",
    "conformal_factor",
    "uk_membership",
    "conformal_geometry",
    "nabla_y_matrix",
    "killing_residual",
    "scalar_gradient",
]


@dataclass(frozen=True)
class Event:
    """A chart point."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))


@dataclass(frozen=True)
class Tangent:
    """A tangent vector attached to an event."""

    base: Event
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))


def _coords(q) -> np.ndarray:
    if isinstance(q, Event):
        return q.coords
    return np.asarray(q, dtype=float)


def _comps(v) -> np.ndarray:
    if isinstance(v, Tangent):
        return v.components
    return np.asarray(v, dtype=float)


@dataclass
class SpacetimeModel:
    """Stationary Lorentzian metric on one chart with a timelike Killing field.

    Parameters
    ----------
    name : str
        Registry identifier.
    m : int
        Chart dimension (>= 2).
    metric_components : callable
        ``q -> (m, m)`` symmetric array of metric components.
    killing_components : callable
        ``q -> (m,)`` components of the Killing field Y.  Must be timelike
        everywhere on the chart.
    analytic_christoffels : callable, optional
        ``q -> (m, m, m)`` array ``Gamma[a, b, c]``, symmetric in (b, c).
        When absent, central differences of the metric are used.
    chart_domain : callable, optional
        Predicate on chart points; defaults to all of R^m.
    fd_step : float
        Step for central-difference derivatives of the metric.
    killing_jacobian : callable, optional
        ``q -> (m, m)`` array ``dY[a, b] = d Y^a / d q^b``; finite differences
        of the Killing components otherwise.
    periods : dict, optional
        Map coordinate index -> period for angle-like coordinates.  Used by
        quotient distances; an empty dict means no periodic coordinates.
    """

    name: str
    m: int
    metric_components: Callable[[np.ndarray], np.ndarray]
    killing_components: Callable[[np.ndarray], np.ndarray]
    analytic_christoffels: Optional[Callable[[np.ndarray], np.ndarray]] = None
    chart_domain: Optional[Callable[[np.ndarray], bool]] = None
    fd_step: float = 1e-5
    killing_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    periods: dict = field(default_factory=dict)

    def in_chart(self, q) -> bool:
        q = _coords(q)
        if q.shape != (self.m,) or not np.all(np.isfinite(q)):
            return False
        return True if self.chart_domain is None else bool(self.chart_domain(q))

    def require_in_chart(self, q) -> np.ndarray:
        q = _coords(q)
        if not self.in_chart(q):
            raise OutOfChart(f"point {q} outside chart of model '{self.name}'")
        return q

    # Raw component access -------------------------------------------------

    def g(self, q) -> np.ndarray:
        return np.asarray(self.metric_components(_coords(q)), dtype=float)

    def y(self, q) -> np.ndarray:
        return np.asarray(self.killing_components(_coords(q)), dtype=float)

    def dy(self, q) -> np.ndarray:
        """Jacobian dY^a/dq^b, analytic when available."""
        q = _coords(q)
        if self.killing_jacobian is not None:
            return np.asarray(self.killing_jacobian(q), dtype=float)
        return _jacobian_fd(self.y, q, self.fd_step)

    def wrap_difference(self, dq: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinate differences to their principal value."""
        if not self.periods:
            return dq
        dq = np.array(dq, dtype=float, copy=True)
        if dq.ndim == 1:
            for i, period in self.periods.items():
                dq[i] = (dq[i] + period / 2.0) % period - period / 2.0
        else:
            for i, period in self.periods.items():
                dq[..., i] = (dq[..., i] + period / 2.0) % period - period / 2.0
        return dq


# ---------------------------------------------------------------------------
# Finite differences

def _jacobian_fd(f, q, h):
    q = np.asarray(q, dtype=float)
    n = q.size
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        cols.append((np.asarray(f(q + e)) - np.asarray(f(q - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _directional_diff4(f, q, i, h):
    """Fourth-order central difference of f along coordinate i."""
    e = np.zeros_like(q)
    e[i] = 1.0
    fp1 = np.asarray(f(q + h * e))
    fm1 = np.asarray(f(q - h * e))
    fp2 = np.asarray(f(q + 2.0 * h * e))
    fm2 = np.asarray(f(q - 2.0 * h * e))
    return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)


# ---------------------------------------------------------------------------
# Core operations

def metric_eval(model: SpacetimeModel, q, v, w) -> float:
    """Lorentzian inner product <v, w> at q."""
    q = model.require_in_chart(q)
    return float(_comps(v) @ model.g(q) @ _comps(w))


def killing_eval(model: SpacetimeModel, q) -> Tangent:
    """The observer field Y at q (timelike by model invariant)."""
    q = model.require_in_chart(q)
    return Tangent(Event(q), model.y(q))


def connection_coeffs(model: SpacetimeModel, q) -> np.ndarray:
    """Christoffel symbols Gamma[a, b, c] of the Lorentzian metric at q.

    Uses the analytic form when the model carries one; otherwise second-order
    central differences of the metric components with step ``fd_step``.
    """
    q = model.require_in_chart(q)
    if model.analytic_christoffels is not None:
        return np.asarray(model.analytic_christoffels(q), dtype=float)
    m, h = model.m, model.fd_step
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        if not (model.in_chart(q + e) and model.in_chart(q - e)):
            raise StencilOutOfChart(f"stencil around {q} leaves the chart")
    dg = np.empty((m, m, m))  # dg[c, a, b] = d_c g_ab
    for c in range(m):
        e = np.zeros(m)
        e[c] = h
        dg[c] = (model.g(q + e) - model.g(q - e)) / (2.0 * h)
    ginv = np.linalg.inv(model.g(q))
    # Gamma^a_bc = 1/2 g^{ad} (d_b g_dc + d_c g_db - d_d g_bc)
    term = np.einsum("bdc->dbc", dg) + np.einsum("cdb->dbc", dg) - np.einsum("dbc->dbc", dg)
    return 0.5 * np.einsum("ad,dbc->abc", ginv, term)


def curvature_tensor(model: SpacetimeModel, q) -> np.ndarray:
    """Curvature R[a, b, c, d] with R(X,Y) = nabla_X nabla_Y - nabla_Y nabla_X - nabla_[X,Y].

    Components satisfy (R(v, w) u)^a = R[a, b, c, d] u^b v^c w^d.  The
    derivative of Gamma is taken by central differences with step ``fd_step``.
    """
    q = model.require_in_chart(q)
    m, h = model.m, model.fd_step
    dG = np.empty((m, m, m, m))  # dG[c, a, d, b] = d_c Gamma^a_{db}
    for c in range(m):
        e = np.zeros(m)
        e[c] = h
        dG[c] = (connection_coeffs(model, q + e) - connection_coeffs(model, q - e)) / (2.0 * h)
    G = connection_coeffs(model, q)
    R = (np.einsum("cadb->abcd", dG) - np.einsum("dacb->abcd", dG)
         + np.einsum("ace,edb->abcd", G, G) - np.einsum("ade,ecb->abcd", G, G))
    return R


def riemannian_metric_eval(model: SpacetimeModel, q, v, w) -> float:
    """Auxiliary Riemannian product: <v,w> - 2 <v,Y><w,Y> / <Y,Y>."""
    q = model.require_in_chart(q)
    g = model.g(q)
    y = model.y(q)
    v = _comps(v)
    w = _comps(w)
    gy = g @ y
    yy = float(y @ gy)
    return float(v @ g @ w - 2.0 * (v @ gy) * (w @ gy) / yy)


def riemannian_metric_matrix(model: SpacetimeModel, q) -> np.ndarray:
    """Component matrix of the auxiliary Riemannian metric at q."""
    q = _coords(q)
    g = model.g(q)
    y = model.y(q)
    gy = g @ y
    yy = float(y @ gy)
    return g - 2.0 * np.outer(gy, gy) / yy


def uk_membership(model: SpacetimeModel, q, k: float) -> bool:
    """True iff <Y,Y> + k^2 > 0 at q."""
    q = model.require_in_chart(q)
    y = model.y(q)
    return float(y @ model.g(q) @ y) + k * k > 0.0


def conformal_factor(model: SpacetimeModel, q, k: float) -> float:
    """phi_k = -<Y,Y> / (k^2 + <Y,Y>); positive on the admissible region."""
    q = model.require_in_chart(q)
    y = model.y(q)
    yy = float(y @ model.g(q) @ y)
    denom = k * k + yy
    if denom <= 0.0:
        raise OutsideUk(f"k^2 + <Y,Y> = {denom} <= 0 at {q}")
    return -yy / denom


def nabla_y_matrix(model: SpacetimeModel, q) -> np.ndarray:
    """Matrix K[a, b] with (nabla_v Y)^a = K[a, b] v^b."""
    q = _coords(q)
    dy = model.dy(q)
    G = connection_coeffs(model, q)
    return dy + np.einsum("abc,c->ab", G, model.y(q))


def killing_residual(model: SpacetimeModel, q, v, w) -> float:
    """Antisymmetry defect <nabla_v Y, w> + <nabla_w Y, v> (zero for Killing Y)."""
    q = _coords(q)
    g = model.g(q)
    K = nabla_y_matrix(model, q)
    v = _comps(v)
    w = _comps(w)
    return float((K @ v) @ g @ w + (K @ w) @ g @ v)


def scalar_gradient(model: SpacetimeModel, q, f, h: Optional[float] = None) -> np.ndarray:
    """Lorentzian gradient components g^{ab} d_b f of a chart scalar f."""
    q = _coords(q)
    h = model.fd_step if h is None else h
    df = np.array([_directional_diff4(f, q, i, max(h, 1e-6)) for i in range(model.m)])
    return np.linalg.solve(model.g(q), df)


# ---------------------------------------------------------------------------
# Conformal geometry

@dataclass
class ConformalGeometry:
    """Evaluators for the Riemannian metric phi_k * g_R and its derived objects.

    The components are assembled analytically from the model; Christoffels and
    curvature use fourth-order central differences (the assembled metric is
    exact, so a wider high-order stencil keeps the two differentiation stages
    well above roundoff).
    """

    model: SpacetimeModel
    k: float
    fd_step: float = 1e-3

    @property
    def m(self) -> int:
        return self.model.m

    def phi(self, q) -> float:
        return conformal_factor(self.model, _coords(q), self.k)

    def metric(self, q) -> np.ndarray:
        q = _coords(q)
        g = self.model.g(q)
        y = self.model.y(q)
        gy = g @ y
        yy = float(y @ gy)
        denom = self.k * self.k + yy
        if denom <= 0.0:
            raise OutsideUk(f"k^2 + <Y,Y> = {denom} <= 0 at {q}")
        return (-yy / denom) * (g - 2.0 * np.outer(gy, gy) / yy)

    def inner(self, q, v, w) -> float:
        return float(_comps(v) @ self.metric(q) @ _comps(w))

    def christoffels(self, q) -> np.ndarray:
        q = self.model.require_in_chart(q)
        m, h = self.m, self.fd_step
        dg = np.empty((m, m, m))
        for c in range(m):
            dg[c] = _directional_diff4(self.metric, q, c, h)
        ginv = np.linalg.inv(self.metric(q))
        term = (np.einsum("bdc->dbc", dg) + np.einsum("cdb->dbc", dg)
                - np.einsum("dbc->dbc", dg))
        return 0.5 * np.einsum("ad,dbc->abc", ginv, term)

    def curvature(self, q) -> np.ndarray:
        """R[a, b, c, d] of phi_k * g_R, same index convention as curvature_tensor."""
        q = self.model.require_in_chart(q)
        m, h = self.m, self.fd_step
        dG = np.empty((m, m, m, m))
        for c in range(m):
            dG[c] = _directional_diff4(self.christoffels, q, c, h)
        G = self.christoffels(q)
        return (np.einsum("cadb->abcd", dG) - np.einsum("dacb->abcd", dG)
                + np.einsum("ace,edb->abcd", G, G) - np.einsum("ade,ecb->abcd", G, G))

    def nabla_y_matrix(self, q) -> np.ndarray:
        """(nabla^{conf}_v Y)^a = K[a, b] v^b in the conformal connection."""
        q = _coords(q)
        dy = self.model.dy(q)
        G = self.christoffels(q)
        return dy + np.einsum("abc,c->ab", G, self.model.y(q))


def conformal_geometry(model: SpacetimeModel, k: float) -> ConformalGeometry:
    """Bundle evaluators for the conformal Riemannian structure at energy k."""
    if not k > 0.0:
        raise OutsideUk("the energy constant k must be positive")
    return ConformalGeometry(model=model, k=k)
