import numpy as np
import pytest

from frachessian import experiments as X
from frachessian.fracop import QuadratureSpec
from frachessian.infimum import InfOptions
from frachessian.profiles import affine, smoothed_cone

Q8 = QuadratureSpec(n_angular=8)


def test_loglog_slope_recovers_power():
    eps = np.array([1e-1, 1e-2, 1e-3])
    assert X.loglog_slope(eps, 3.0 * eps**-0.6) == pytest.approx(-0.6, abs=1e-12)


def test_envelope_check_passes(rng):
    for n, k in [(2, 2), (3, 2), (3, 3), (4, 4)]:
        rep = X.envelope_check(n, k, 20, rng, n_tangent=10)
        assert rep.passed, rep.summary


def test_blowup_slope():
    rep = X.blowup_experiment(smoothed_cone(1.0), 3, 0.75, [1e-1, 1e-2, 1e-3], Q8)
    assert rep.summary["monotone"]
    assert rep.summary["slope"] == pytest.approx(-0.75, abs=0.05)
    with pytest.raises(ValueError):
        X.blowup_experiment(smoothed_cone(1.0), 3, 0.75, [1e-1, 1e-2], Q8)


def test_blowup_not_applicable_for_affine():
    rep = X.blowup_experiment(affine([1.0, 0.0, 0.0], 0.0, n=3), 3, 0.75, [1e-1, 1e-2, 1e-3], Q8)
    assert rep.status == X.NA and rep.passed is None


def test_subspace_upper_bound_and_sign(rng):
    rep = X.subspace_bounds_check(smoothed_cone(1.0), 3, 0.75, 5.0, 4, rng, Q8, n_weighted=2)
    assert rep.summary["upper_ok"] and rep.summary["nonnegative"]
    # the isotropic cone gives the same value on every frame
    assert rep.summary["spread"] < 1e-8
    assert "mu0" in rep.summary


def test_eigencheck(rng):
    for eps in (0.01, 0.2):
        rep = X.eigenvalue_constraint_check(3, eps, 50, rng)
        assert rep.passed and rep.summary["violations"] == 0
    with pytest.raises(ValueError):
        X.eigenvalue_constraint_check(2, 0.1, 5, rng)


def test_ellipticity_not_applicable_for_affine():
    opts = X.EllipticityOptions(inf=InfOptions(n_starts=1, n_probe=4, maxfev=50, quad=Q8))
    rep = X.ellipticity_check(affine([1.0, 0.0, 0.0], 0.0, n=3), np.zeros(3), 0.75, opts)
    assert rep.status == X.NA


def test_report_writes(tmp_path, rng):
    rep = X.eigenvalue_constraint_check(3, 0.05, 5, rng)
    rep.write(tmp_path / "r.json", tmp_path / "r.csv")
    assert (tmp_path / "r.json").read_text().startswith("{")
    assert (tmp_path / "r.csv").read_text().splitlines()[0].startswith("source,")
