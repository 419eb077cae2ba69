import numpy as np
import pytest

from brachkit.dynamics import integrate_brachistochrone
from brachkit.geometry import riemannian_metric_matrix
from brachkit.models import ModelSpec, make_model


def unit_horizontal(model, q, seed):
    """Project a chart vector to the horizontal space and g_R-normalize it."""
    q = np.asarray(q, dtype=float)
    g = model.g(q)
    y = model.y(q)
    u = np.asarray(seed, dtype=float)
    u = u - (float(u @ g @ y) / float(y @ g @ y)) * y
    gr = riemannian_metric_matrix(model, q)
    return u / np.sqrt(float(u @ gr @ u))


# A launch per model that exercises every term of the equation while staying
# well inside chart and admissible region.
STANDARD_LAUNCH = {
    "minkowski3": dict(params={}, k=np.sqrt(2.0), T=1.0,
                       p=[0.0, 0.0, 0.0], useed=[1.0, 0.3, 0.0]),
    "minkowski4": dict(params={}, k=np.sqrt(2.0), T=0.8,
                       p=[0.0, 0.0, 0.0, 0.0], useed=[1.0, 0.4, 0.2, 0.0]),
    "einstein_cylinder": dict(params={}, k=np.sqrt(2.0), T=1.2,
                              p=[np.pi / 2, 0.0, 0.0], useed=[0.3, 1.0, 0.0]),
    "static_well": dict(params={"a": 1.0}, k=2.0, T=0.5,
                        p=[0.2, 0.0, 0.0], useed=[1.0, 0.2, 0.0]),
    "rotating_frame": dict(params={}, k=1.5, T=0.6,
                           p=[0.3, 0.2, 0.0], useed=[1.0, 0.4, 0.0]),
}


@pytest.fixture(scope="session")
def models():
    return {name: make_model(ModelSpec(name, info["params"]))
            for name, info in STANDARD_LAUNCH.items()}


@pytest.fixture(scope="session")
def solutions(models):
    out = {}
    for name, info in STANDARD_LAUNCH.items():
        model = models[name]
        u = unit_horizontal(model, info["p"], info["useed"])
        out[name] = integrate_brachistochrone(model, info["k"], np.asarray(info["p"]),
                                              u, info["T"])
    return out


@pytest.fixture(scope="session")
def cylinder_long_arc(models):
    """Equatorial solution with deformed arc length 4.5 (one focal point)."""
    model = models["einstein_cylinder"]
    k = np.sqrt(2.0)
    L = 4.5
    u = unit_horizontal(model, [np.pi / 2, 0.0, 0.0], [0.0, 1.0, 0.0])
    return integrate_brachistochrone(model, k, np.array([np.pi / 2, 0.0, 0.0]), u,
                                     L / np.sqrt(k * k - 1.0))


@pytest.fixture(scope="session")
def cylinder_very_long_arc(models):
    """Arc length 7.0: two focal points."""
    model = models["einstein_cylinder"]
    k = np.sqrt(2.0)
    L = 7.0
    u = unit_horizontal(model, [np.pi / 2, 0.0, 0.0], [0.0, 1.0, 0.0])
    return integrate_brachistochrone(model, k, np.array([np.pi / 2, 0.0, 0.0]), u,
                                     L / np.sqrt(k * k - 1.0))
