"""Built-in test functions u: R^n -> R with declared regularity constants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class FarField:
    """Asymptotics ``u(z) = slope*|z| + linear.z + offset + O(remainder/|z|)``.

    The expansion is assumed valid for ``|z| >= valid_radius``.
    """

    slope: float
    offset: float
    remainder: float
    linear: Optional[tuple] = None
    valid_radius: float = 0.0

    def linear_dot(self, x: np.ndarray) -> float:
        if self.linear is None:
            return 0.0
        return float(np.dot(self.linear, x))


@dataclass(frozen=True)
class TestFunctionProfile:
    """A test function with Lipschitz constant L and semiconcavity constant SC.

    ``SC`` is used two-sidedly, |delta(u, x, y)| <= SC |y|^2, which holds for
    every built-in profile.  ``fourth`` bounds |delta - y.D2u.y| <= fourth |y|^4 / 12
    and tightens the truncation bound of the inner core when present.
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    L: float
    SC: float
    is_convex: bool
    far_field: Optional[FarField] = None
    delta: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    fourth: Optional[float] = None
    core_radius: float = 0.0
    radial: bool = False
    params: Optional[dict] = None
    # radial profiles: u(z) = radial_fn(|z|^2) and delta(u, x, y) = delta_qf(|x|^2, |y|^2, x.y)
    radial_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    delta_qf: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = None

    def __call__(self, X) -> np.ndarray:
        return self.evaluate(np.asarray(X, dtype=float))

    def second_difference(self, x, Y) -> np.ndarray:
        """delta(u, x, y) = u(x+y) - 2u(x) + u(x-y), vectorised over the rows of Y."""
        x = np.asarray(x, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if self.delta is not None:
            return self.delta(x, Y)
        return self.evaluate(x + Y) + self.evaluate(x - Y) - 2.0 * self.evaluate(x)

    def first_difference(self, x, Y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.evaluate(x + np.asarray(Y, dtype=float)) - self.evaluate(x)


def second_difference(u: TestFunctionProfile, x, y) -> np.ndarray:
    return u.second_difference(x, y)


def _cone_delta_qf(a: float):
    a2 = a * a

    def delta_qf(xx, yy, xy):
        s0 = math.sqrt(a2 + xx)
        sp = np.sqrt(a2 + np.maximum(xx + yy + 2.0 * xy, 0.0))
        sm = np.sqrt(a2 + np.maximum(xx + yy - 2.0 * xy, 0.0))
        p = sp + s0
        q = sm + s0
        # cancellation-free form: valid down to |y| ~ 1e-150
        return yy * (1.0 / p + 1.0 / q) - 8.0 * xy * xy / (p * q * (sp + sm))

    return delta_qf


def _from_qf(delta_qf):
    def delta(x, Y):
        return delta_qf(float(x @ x), np.sum(Y * Y, axis=-1), Y @ x)

    return delta


def smoothed_cone(a: float = 1.0) -> TestFunctionProfile:
    """sqrt(a^2 + |x|^2) - a: convex, L = 1, SC = 1/a."""
    if a <= 0:
        raise ValueError("a must be positive")

    def radial_fn(q):
        return np.sqrt(a * a + q) - a

    def evaluate(X):
        return radial_fn(np.sum(X * X, axis=-1))

    dqf = _cone_delta_qf(a)

    return TestFunctionProfile(
        name="smoothed_cone",
        evaluate=evaluate,
        L=1.0,
        SC=1.0 / a,
        is_convex=True,
        far_field=FarField(slope=1.0, offset=-a, remainder=0.5 * a * a),
        delta=_from_qf(dqf),
        fourth=3.0 / a**3,
        radial=True,
        params={"a": a},
        radial_fn=radial_fn,
        delta_qf=dqf,
    )


_MAX_RHO_EXP = math.exp(-0.5) / math.sqrt(2.0)  # max of rho*exp(-rho^2)


def gaussian_dimple(c: float = 0.05) -> TestFunctionProfile:
    """smoothed_cone(1) - c exp(-|x|^2) for c in [0, 0.1].

    L  = 1 + sqrt(2) e^{-1/2} c      (max gradient of the Gaussian bump)
    SC = 1 + 2c                       (Hessian eigenvalue bound at the origin)
    Convex on this range of c: the cone's radial curvature (1+r^2)^{-3/2}
    dominates c(4r^2 - 2)e^{-r^2} <= 0.9c.
    """
    if not 0.0 <= c <= 0.1:
        raise ValueError("gaussian_dimple needs c in [0, 0.1]")
    cone_qf = _cone_delta_qf(1.0)

    def radial_fn(q):
        return np.sqrt(1.0 + q) - 1.0 - c * np.exp(-q)

    def evaluate(X):
        return radial_fn(np.sum(X * X, axis=-1))

    def delta_qf(xx, yy, xy):
        t = np.abs(xy)
        small = t < 20.0
        ts = np.where(small, t, 0.0)
        tb = np.where(small, 0.0, t)
        # e^{-|y|^2} sinh^2(x.y), split to avoid both cancellation and overflow
        sh = np.where(
            small,
            np.exp(-yy) * np.sinh(ts) ** 2,
            0.25 * (np.exp(2 * tb - yy) - 2 * np.exp(-yy) + np.exp(-2 * tb - yy)),
        )
        bump = 2.0 * math.exp(-xx) * (2.0 * sh + np.expm1(-yy))
        return cone_qf(xx, yy, xy) - c * bump

    return TestFunctionProfile(
        name="gaussian_dimple",
        evaluate=evaluate,
        L=1.0 + math.sqrt(2.0) * math.exp(-0.5) * c,
        SC=1.0 + 2.0 * c,
        is_convex=True,
        far_field=FarField(slope=1.0, offset=-1.0, remainder=0.5 + c * _MAX_RHO_EXP),
        delta=_from_qf(delta_qf),
        fourth=3.0 + 12.0 * c,
        radial=True,
        params={"c": c},
        radial_fn=radial_fn,
        delta_qf=delta_qf,
    )


def affine(b=None, c0: float = 0.0, n: int = 3) -> TestFunctionProfile:
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    bt = tuple(float(v) for v in b)

    def evaluate(X):
        return X @ b + c0

    def delta(x, Y):
        return np.zeros(Y.shape[:-1])

    return TestFunctionProfile(
        name="affine",
        evaluate=evaluate,
        L=float(np.linalg.norm(b)),
        SC=0.0,
        is_convex=True,
        far_field=FarField(slope=0.0, offset=c0, remainder=0.0, linear=bt),
        delta=delta,
        fourth=0.0,
        radial=not np.any(b),
        params={"b": list(bt), "c0": c0},
    )


def grid_backed(g, phi: Optional[TestFunctionProfile] = None) -> TestFunctionProfile:
    """Wrap a solver GridFunction: multilinear inside its box, phi outside.

    The constants L, SC and the far field are inherited from phi; the far
    field only applies once both x + y and x - y have left the box.
    """
    phi = g.phi if phi is None else phi
    ff = None
    if phi.far_field is not None:
        f = phi.far_field
        ff = FarField(
            slope=f.slope,
            offset=f.offset,
            remainder=f.remainder,
            linear=f.linear,
            valid_radius=max(f.valid_radius, float(np.linalg.norm(g.center)) + g.R * math.sqrt(g.n)),
        )
    return TestFunctionProfile(
        name=f"grid[{phi.name}]",
        evaluate=g.evaluate,
        L=phi.L,
        SC=phi.SC,
        is_convex=False,
        far_field=ff,
        core_radius=g.h,
        params={"R": g.R, "m": g.m},
    )


_REGISTRY = {
    "smoothed_cone": lambda n, **kw: smoothed_cone(**kw),
    "gaussian_dimple": lambda n, **kw: gaussian_dimple(**kw),
    "affine": lambda n, **kw: affine(n=n, **kw),
}


def get_profile(name: str, n: int, **params) -> TestFunctionProfile:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(_REGISTRY)}") from None
    return factory(n, **params)


def builtin_profiles(n: int = 3) -> list[TestFunctionProfile]:
    return [smoothed_cone(1.0), gaussian_dimple(0.05), affine(np.arange(1, n + 1) / n, 0.5, n=n)]
