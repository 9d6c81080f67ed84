import math

import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from frachessian.errors import AnisotropyTooExtreme, FrameNotOrthonormal, TailUnbounded
from frachessian.fracop import (
    QuadratureSpec,
    angular_rule,
    check_frame,
    linear_fracop,
    linear_fracop_ycoords,
    sphere_area,
    subspace_fraclap,
)
from frachessian.profiles import affine, gaussian_dimple, smoothed_cone

S = 0.75


def _radial_cone_integral(s):
    mp.mp.dps = 30
    g = lambda r: (mp.sqrt(1 + r * r) - 1) * r ** (-1 - 2 * mp.mpf(s))
    return float(mp.quad(g, [0, 1, mp.inf]))


@pytest.mark.parametrize("n", [2, 3])
def test_isotropic_cone_against_radial_oracle(n):
    # at x = 0, delta = 2 (sqrt(1 + r^2) - 1) on every ray
    ref = 0.5 * sphere_area(n) * 2 * _radial_cone_integral(S)
    r = linear_fracop(smoothed_cone(1.0), np.eye(n), np.zeros(n), S)
    assert r.value == pytest.approx(ref, rel=1e-8)
    assert abs(r.value - ref) <= max(r.trunc_bound, 1e-9 * ref)


def test_anisotropic_against_polar_oracle():
    u = smoothed_cone(1.0)
    M = np.array([[1.5, 0.4], [0.4, 0.8]])
    x = np.array([0.3, -0.5])
    w, q = np.linalg.eigh(M)
    Sq = (q * np.sqrt(w)) @ q.T

    def f(r, th):
        y = Sq @ np.array([r * math.cos(th), r * math.sin(th)])
        return 0.5 * float(u.second_difference(x, y[None, :])[0]) * r ** (-1 - 2 * S)

    R = 1e4
    cuts = [0, 1, 10, 100, 1e3, R]
    ref = sum(dblquad(f, 0, 2 * math.pi, a, b, epsabs=1e-12, epsrel=1e-12)[0] for a, b in zip(cuts, cuts[1:]))
    # beyond R: delta = 2 r |S theta| - 2 - 2 u(x) up to O(1/r)
    ux = float(u(x[None, :])[0])
    norm_int = quad(lambda t: np.linalg.norm(Sq @ [math.cos(t), math.sin(t)]), 0, 2 * math.pi, epsabs=1e-13)[0]
    ref += 0.5 * (2 * norm_int * R ** (1 - 2 * S) / (2 * S - 1) - 2 * math.pi * (2 + 2 * ux) * R ** (-2 * S) / (2 * S))
    assert linear_fracop(u, M, x, S).value == pytest.approx(ref, rel=1e-8)
    assert linear_fracop_ycoords(u, M, x, S).value == pytest.approx(ref, rel=1e-8)


def test_paths_agree_off_origin():
    u = gaussian_dimple(0.05)
    M = np.diag([4.0, 1.0, 1.0])
    x = np.array([0.3, -0.2, 0.5])
    a = linear_fracop(u, M, x, S)
    b = linear_fracop_ycoords(u, M, x, S)
    assert a.value == pytest.approx(b.value, rel=1e-6)


def test_affine_is_annihilated():
    u = affine([0.3, -1.0, 2.0], 4.0, n=3)
    assert linear_fracop(u, np.diag([2.0, 1.0, 0.5]), np.array([1.0, 2.0, 3.0]), S).value == 0.0


def test_scaling_law():
    # L_{cM} = c^s L_M: substitute z -> z / sqrt(c)
    u = smoothed_cone(1.0)
    M = np.diag([1.3, 0.7, 1.0])
    x = np.array([0.2, 0.1, -0.4])
    base = linear_fracop(u, M, x, S).value
    assert linear_fracop(u, 4.0 * M, x, S).value == pytest.approx(2.0 ** (2 * S) * base, rel=1e-9)


def test_convex_profile_gives_positive_value(rng):
    u = smoothed_cone(1.0)
    for _ in range(3):
        G = rng.normal(size=(3, 3))
        M = G @ G.T + 0.2 * np.eye(3)
        assert linear_fracop(u, M, rng.normal(size=3), S).value > 0


def test_tail_unbounded_for_small_s():
    with pytest.raises(TailUnbounded):
        linear_fracop(smoothed_cone(1.0), np.eye(2), np.zeros(2), 0.4)
    # bounded data is fine below s = 1/2
    assert linear_fracop(affine([1.0, 0.0], 0.0, n=2), np.eye(2), np.zeros(2), 0.4).value == 0.0


def test_anisotropy_guard_and_graded_rule():
    u = smoothed_cone(1.0)
    M = np.diag([1e-14, 1.0, 1.0])
    with pytest.raises(AnisotropyTooExtreme):
        linear_fracop(u, M, np.zeros(3), S)
    graded = QuadratureSpec(graded=True)
    M = np.diag([1e-3, 1.0, 1.0])
    a = linear_fracop(u, M, np.zeros(3), S, graded)
    b = linear_fracop_ycoords(u, M, np.zeros(3), S, graded)
    assert a.value == pytest.approx(b.value, rel=1e-6)


@pytest.mark.parametrize("dim", [2, 3])
def test_angular_rules_integrate_polynomials(dim):
    dirs, w, mc = angular_rule(dim, QuadratureSpec())
    assert not mc
    # hemisphere rule with doubled weights covers the sphere for even integrands
    assert w.sum() == pytest.approx(sphere_area(dim), rel=1e-12)
    assert np.sum(w * dirs[:, 0] ** 2) == pytest.approx(sphere_area(dim) / dim, rel=1e-10)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_monte_carlo_rule_for_n4():
    r = linear_fracop(smoothed_cone(1.0), np.eye(4), np.zeros(4), S)
    ref = 0.5 * sphere_area(4) * 2 * _radial_cone_integral(S)
    assert r.stderr > 0
    assert abs(r.value - ref) <= 5 * r.stderr + 1e-8 * ref


def test_subspace_forms_against_oracle():
    u = smoothed_cone(1.0)
    F = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    ref = 2 * math.pi * _radial_cone_integral(S)
    second = subspace_fraclap(u, F, np.zeros(3), S, QuadratureSpec())
    first = subspace_fraclap(u, F, np.zeros(3), S, QuadratureSpec(), form="first")
    assert second.value == pytest.approx(ref, rel=1e-8)
    assert first.value == pytest.approx(ref, rel=1e-8)
    with pytest.raises(ValueError):
        subspace_fraclap(u, F, np.zeros(3), 0.4, QuadratureSpec())


def test_frame_validation():
    with pytest.raises(FrameNotOrthonormal):
        check_frame(np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]]))
    with pytest.raises((FrameNotOrthonormal, ValueError)):
        check_frame(np.eye(3), n=3)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(r_min=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(n_angular=2)
    with pytest.raises(ValueError):
        QuadratureSpec(tail_policy="ignore")
    q = QuadratureSpec().refined()
    assert q.n_radial == 96 and q.to_record()["n_angular"] == 32
