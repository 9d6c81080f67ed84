import json

import numpy as np
import pytest

from frachessian.grid import GridFunction
from frachessian.profiles import affine, grid_backed, smoothed_cone


def test_multilinear_reproduces_affine():
    phi = affine([0.5, -1.0], 2.0, n=2)
    g = GridFunction.from_profile(phi, 2, 3.0, 7)
    X = np.random.default_rng(0).uniform(-5, 5, (200, 2))
    assert np.allclose(g(X), phi(X), atol=1e-13)


def test_outside_uses_phi_and_inside_interpolates():
    phi = smoothed_cone(1.0)
    g = GridFunction.from_profile(phi, 2, 2.0, 5).with_values(np.zeros((5, 5)))
    assert g(np.array([[3.0, 0.0]]))[0] == pytest.approx(phi(np.array([[3.0, 0.0]]))[0])
    assert g(np.array([[0.3, -0.7]]))[0] == 0.0
    assert g.inside(np.array([[2.0, -2.0]]))[0]


def test_center_shift():
    phi = smoothed_cone(1.0)
    g = GridFunction.from_profile(phi, 2, 1.0, 3, center=[10.0, 0.0])
    assert np.allclose(g.axis(0), [9.0, 10.0, 11.0])
    assert g.nodes()[0].tolist() == [9.0, -1.0]


def test_validation():
    phi = smoothed_cone(1.0)
    with pytest.raises(ValueError):
        GridFunction(1.0, 3, np.zeros((3, 4)), phi)
    with pytest.raises(ValueError):
        GridFunction(1.0, 2, np.array([[0.0, np.nan], [0.0, 0.0]]), phi)


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_persistence_roundtrip(tmp_path, fmt):
    phi = smoothed_cone(2.0)
    g = GridFunction.from_profile(phi, 2, 4.0, 9, center=[0.5, 0.0])
    g.meta.update(s=0.75, k=2)
    g = g.with_values(g.values + np.random.default_rng(1).normal(size=g.values.shape))
    paths = g.save(tmp_path / "u", fmt)
    head = json.loads(paths[0].read_text())
    assert {"n", "R", "m", "s", "k", "phi_name"} <= set(head)
    h = GridFunction.load(tmp_path / "u")
    assert np.array_equal(h.values, g.values)
    assert h.phi.params == phi.params and np.allclose(h.center, g.center)
    if fmt == "bin":
        raw = np.frombuffer(paths[1].read_bytes(), dtype="<f8")
        assert np.array_equal(raw, g.values.ravel(order="C"))


def test_grid_backed_profile():
    phi = smoothed_cone(1.0)
    g = GridFunction.from_profile(phi, 2, 4.0, 17)
    u = grid_backed(g)
    x = np.array([[0.25, 0.5]])
    assert u(x)[0] == pytest.approx(g(x)[0])
    assert u.far_field.valid_radius >= 4.0 * np.sqrt(2)
