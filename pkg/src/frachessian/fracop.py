"""Quadrature for the anisotropic nonlocal operators

    L_M[u](x) = 1/2 int delta(u, x, y) det(M^{-1/2}) |M^{-1/2} y|^{-n-2s} dy
              = 1/2 int delta(u, x, M^{1/2} z) |z|^{-n-2s} dz.

Both forms are evaluated in polar coordinates.  Along each ray the radial
integral int_0^inf D(r v) r^{-1-2s} dr is split three ways:

* [0, r_min]: the Taylor core, D(r v) ~ D(r_min v) (r / r_min)^2, integrated
  exactly;
* [r_min, R_max]: Gauss-Legendre panels uniform in log r;
* [R_max, inf): the far-field expansion of u integrated analytically, with
  the O(1/|y|) remainder bounded.

The reported ``trunc_bound`` bounds the error of the two analytic pieces.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .envelope import EnvelopeMatrix
from .errors import (
    AnisotropyTooExtreme,
    FrameNotOrthonormal,
    SOutOfRange,
    TailUnbounded,
    TruncationTooLarge,
)
from .profiles import TestFunctionProfile, second_difference  # noqa: F401  (re-export)
from .symcone import SymMatrix

_POLICIES = ("error-bar", "reject-if-large")
_MAX_COND = 1e6


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts and cutoffs.

    ``n_radial`` counts log-uniform panels of ``radial_order`` Gauss nodes each.
    ``n_angular`` sets the angular resolution: 4*n_angular points on the
    half circle (n = 2), n_angular x 2*n_angular product nodes on the
    hemisphere (n = 3), 16*n_angular^2 Monte Carlo directions (n >= 4).
    ``graded`` switches to polar panels clustered around the eigen-axis of
    the smallest eigenvalue of M, for strongly degenerate M.
    """

    n_radial: int = 48
    n_angular: int = 16
    r_min: float = 1e-4
    R_max: float = 1e4
    tail_policy: str = "error-bar"
    tol: float = 1e-6
    radial_order: int = 8
    graded: bool = False
    graded_panels: int = 24
    seed: int = 0

    def __post_init__(self):
        if not (self.r_min > 0 and self.R_max > self.r_min):
            raise ValueError("need 0 < r_min < R_max")
        if min(self.n_radial, self.n_angular, self.radial_order, self.graded_panels) < 4:
            raise ValueError("node counts must be >= 4")
        if self.tail_policy not in _POLICIES:
            raise ValueError(f"tail_policy must be one of {_POLICIES}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    def refined(self) -> "QuadratureSpec":
        return replace(
            self,
            n_radial=2 * self.n_radial,
            n_angular=2 * self.n_angular,
            graded_panels=2 * self.graded_panels,
        )

    def to_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FracopResult:
    value: float
    trunc_bound: float
    stderr: float = 0.0
    path: str = "z"
    meta: dict = field(default_factory=dict, compare=False)

    def to_record(self) -> dict:
        rec = dict(self.meta)
        rec.update(value=self.value, trunc_bound=self.trunc_bound, stderr=self.stderr, path=self.path)
        return rec


# ---------------------------------------------------------------- rules


@lru_cache(maxsize=64)
def _gauss(order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1.0), 0.5 * w


@lru_cache(maxsize=64)
def _panel_rule(breaks: tuple, order: int):
    t, w = _gauss(order)
    b = np.asarray(breaks)
    lo, width = b[:-1, None], np.diff(b)[:, None]
    nodes = (lo + width * t).ravel()
    weights = (width * w).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _log_unit_rule(panels: int, order: int):
    """Composite Gauss rule on [0, 1] with equal panels."""
    return _panel_rule(tuple(np.linspace(0.0, 1.0, panels + 1)), order)


def sphere_area(dim: int) -> float:
    """|S^{dim-1}|, the surface measure of the unit sphere in R^dim."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def _graded_angles(width: float, panels: int, order: int):
    """Nodes on [0, pi/2] clustered geometrically towards 0 at scale ``width``."""
    half = 0.5 * math.pi
    t0 = min(max(width, 1e-12) * 1e-2, 1e-2)
    breaks = [0.0] + list(t0 * (half / t0) ** (np.arange(panels) / (panels - 1)))
    return _panel_rule(tuple(breaks), order)


def angular_rule(
    dim: int,
    spec: QuadratureSpec,
    *,
    full: bool = False,
    frame: Optional[np.ndarray] = None,
    grade: Optional[str] = None,
    width: float = 1.0,
):
    """Directions and weights integrating even functions over S^{dim-1}.

    Half-sphere rules carry doubled weights so that sum(w) = |S^{dim-1}|.
    ``full`` returns a whole-sphere rule without antipodal pairing, for the
    first-difference integrand.  With ``grade`` in {"pole", "equator"} the
    polar angle (measured from ``frame[:, 0]``) is graded towards the axis
    or towards the orthogonal great sphere at angular scale ``width``.
    Returns (dirs, weights, is_monte_carlo).
    """
    N = spec.n_angular
    area = sphere_area(dim)
    if dim == 1:
        if full:
            return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0]), False
        return np.array([[1.0]]), np.array([2.0]), False

    if dim == 2:
        if grade is not None:
            a, wa = _graded_angles(width, spec.graded_panels, spec.radial_order)
            if grade == "pole":
                th = np.concatenate([-a[::-1], a])
            else:
                th = np.concatenate([0.5 * np.pi - a, -0.5 * np.pi + a[::-1]])
            w = 2.0 * np.concatenate([wa[::-1], wa])
            if full:
                th = np.concatenate([th, th + np.pi])
                w = 0.5 * np.concatenate([w, w])
        else:
            m = 4 * N + (1 if full else 0)
            span = 2 * np.pi if full else np.pi
            th = (np.arange(m) + 0.5) * span / m
            w = np.full(m, area / m)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)

    elif dim == 3:
        n_phi = 2 * N + (1 if full else 0)
        phi = (np.arange(n_phi) + 0.5) * 2 * np.pi / n_phi
        if grade is not None:
            a, wa = _graded_angles(width, spec.graded_panels, spec.radial_order)
            th = a if grade == "pole" else 0.5 * np.pi - a
            ct, wt = np.cos(th), wa * np.sin(th)
            if full:
                ct, wt = np.concatenate([ct, -ct]), np.concatenate([wt, wt])
            else:
                wt = 2.0 * wt
        else:
            t, wg = _gauss(N if not full else 2 * N)
            ct = t if not full else 2.0 * t - 1.0
            wt = 2.0 * wg
        st = np.sqrt(np.clip(1.0 - ct * ct, 0.0, None))
        C, P = np.meshgrid(ct, phi, indexing="ij")
        S = np.meshgrid(st, phi, indexing="ij")[0]
        dirs = np.stack([C.ravel(), (S * np.cos(P)).ravel(), (S * np.sin(P)).ravel()], axis=1)
        w = (wt[:, None] * np.full(n_phi, 2 * np.pi / n_phi)[None, :]).ravel()

    else:
        rng = np.random.default_rng(spec.seed)
        m = 16 * N * N
        G = rng.standard_normal((m, dim))
        dirs = G / np.linalg.norm(G, axis=1, keepdims=True)
        if full:
            # antithetic pairs keep the odd part of the integrand exact
            dirs = np.concatenate([dirs, -dirs])
        w = np.full(dirs.shape[0], area / dirs.shape[0])
        if frame is not None:
            dirs = dirs @ np.asarray(frame).T
        return dirs, w, True

    if frame is not None:
        dirs = dirs @ np.asarray(frame).T
    return dirs, w, False


# ---------------------------------------------------------------- rays


def _check_s(s: float):
    if not 0.0 < s < 1.0:
        raise SOutOfRange(f"s = {s} must lie in (0, 1)")


def ray_integrals(u: TestFunctionProfile, x, V, s: float, spec: QuadratureSpec, kind: str = "second"):
    """Per-ray integrals int_0^inf D(u, x, r V_j) r^{-1-2s} dr and error bounds.

    ``kind`` is "second" (D = delta) or "first" (D = u(x + y) - u(x)).  The
    first-difference core and tail estimates are only meaningful after
    summation over a rule whose odd moments vanish.
    """
    _check_s(s)
    x = np.asarray(x, dtype=float)
    V = np.atleast_2d(np.asarray(V, dtype=float))
    m, n = V.shape
    norms = np.linalg.norm(V, axis=1)
    r0, R = spec.r_min, spec.R_max
    span = math.log(R / r0)
    t, wt = _log_unit_rule(spec.n_radial, spec.radial_order)
    r = r0 * np.exp(span * t)
    wr = wt * span * r ** (-2.0 * s)  # dr/r = span dt

    second = kind == "second"
    if kind not in ("first", "second"):
        raise ValueError("kind must be 'first' or 'second'")
    diff = u.second_difference if second else u.first_difference

    out = np.empty(m)
    if u.delta_qf is not None and u.radial_fn is not None:
        # radial profile: only |y|^2 and x.y enter, both cheap per ray
        xx = float(x @ x)
        vv = (norms**2)[:, None]
        vx = (V @ x)[:, None]
        yy, xy = vv * r**2, vx * r
        if second:
            D = u.delta_qf(xx, yy, xy)
        else:
            D = u.radial_fn(xx + yy + 2.0 * xy) - u.radial_fn(np.asarray(xx))
        out[:] = D @ wr
    else:
        block = max(1, 200_000 // r.size)
        for i in range(0, m, block):
            Vb = V[i : i + block]
            Y = (r[None, :, None] * Vb[:, None, :]).reshape(-1, n)
            D = diff(x, Y).reshape(Vb.shape[0], r.size)
            out[i : i + block] = D @ wr

    # core [0, r0]
    D0 = diff(x, r0 * V)
    out += D0 * r0 ** (-2.0 * s) / (2.0 - 2.0 * s)
    if second and u.fourth is not None:
        c = u.fourth * norms**4 * r0 ** (4.0 - 2.0 * s) / 12.0
        core_bound = c / (4.0 - 2.0 * s) + c / (2.0 - 2.0 * s)
    elif second:
        core_bound = 2.0 * u.SC * norms**2 * r0 ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    else:
        core_bound = u.SC * norms**2 * r0 ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)

    # tail [R, inf)
    ff = u.far_field
    xn = float(np.linalg.norm(x))
    mult = 2.0 if second else 1.0
    tail_bound = np.zeros(m)
    if ff is not None:
        ok = R * norms >= max(2.0 * xn, xn + ff.valid_radius)
        slope = ff.slope
        u_x = float(u.evaluate(x))
        c0 = ff.offset + ff.linear_dot(x) - u_x
        # D(rV) ~ grow * r + c0' for r >= R; the linear part of u drops out of delta
        grow = mult * slope * norms
        if not second and ff.linear is not None:
            grow = grow + V @ np.asarray(ff.linear)
        if np.any(grow != 0) and s <= 0.5:
            raise TailUnbounded(f"u grows linearly and s = {s} <= 1/2: the operator diverges")
        c0v = mult * c0
        if not second and slope > 0 and xn > 0:
            c0v = c0v + slope * (V @ x) / np.where(norms > 0, norms, 1.0)
        tail = c0v * R ** (-2.0 * s) / (2.0 * s)
        if s > 0.5:
            tail = tail + grow * R ** (1.0 - 2.0 * s) / (2.0 * s - 1.0)
        rem = (4.0 * slope * xn**2 + 4.0 * ff.remainder) / np.where(norms > 0, norms, np.inf)
        tb = rem * R ** (-1.0 - 2.0 * s) / (1.0 + 2.0 * s)
        crude = None
        if not np.all(ok):
            if s <= 0.5:
                raise TailUnbounded("far-field expansion not valid at R_max and s <= 1/2")
            crude = mult * u.L * norms * R ** (1.0 - 2.0 * s) / (2.0 * s - 1.0)
        out += np.where(ok, tail, 0.0)
        tail_bound = np.where(ok, tb, crude if crude is not None else 0.0)
    else:
        if s <= 0.5 and u.L > 0:
            raise TailUnbounded(f"no far-field descriptor and s = {s} <= 1/2")
        if u.L > 0:
            tail_bound = mult * u.L * norms * R ** (1.0 - 2.0 * s) / (2.0 * s - 1.0)
    return out, core_bound + tail_bound


# ---------------------------------------------------------------- operators


def _eigh(M):
    if isinstance(M, EnvelopeMatrix):
        return np.asarray(M.eigvals), np.asarray(M.eigvecs)
    S = M if isinstance(M, SymMatrix) else SymMatrix(M)
    w, q = S.eigvals, S.eigvecs
    if not w[0] > 0:
        raise ValueError("M must be positive definite")
    return np.asarray(w), np.asarray(q)


def _matrix_list(M) -> list:
    if isinstance(M, EnvelopeMatrix):
        return M.M.entries.ravel().tolist()
    return np.asarray(M.entries if isinstance(M, SymMatrix) else M, dtype=float).ravel().tolist()


def _finish(u, M, x, s, quad, value, bound, stderr, path):
    if quad.tail_policy == "reject-if-large" and bound > quad.tol:
        raise TruncationTooLarge(f"truncation bound {bound:.3e} exceeds tol {quad.tol:.3e}")
    meta = {
        "profile": u.name,
        "M": _matrix_list(M),
        "x": [float(v) for v in np.ravel(x)],
        "s": s,
        "spec": quad.to_record(),
    }
    return FracopResult(float(value), float(bound), float(stderr), path, meta)


def _anisotropy(w, quad):
    ratio = math.sqrt(w[-1] / w[0])
    if ratio > _MAX_COND and not quad.graded:
        raise AnisotropyTooExtreme(f"cond(sqrt M) = {ratio:.3e} > {_MAX_COND:.0e}; use a graded rule")
    return 1.0 / ratio


def _reduce(w_ang, I, B, mc):
    vals = w_ang * I
    value = 0.5 * math.fsum(vals)
    bound = 0.5 * math.fsum(w_ang * np.abs(B))
    stderr = 0.0
    if mc and vals.size > 1:
        stderr = 0.5 * float(np.std(vals * vals.size, ddof=1)) / math.sqrt(vals.size)
    return value, bound, stderr


def linear_fracop(u: TestFunctionProfile, M, x, s: float, quad: QuadratureSpec = QuadratureSpec()) -> FracopResult:
    """L_M[u](x) via the isotropic substitution y = sqrt(M) z."""
    _check_s(s)
    w, q = _eigh(M)
    x = np.asarray(x, dtype=float)
    n = w.size
    width = _anisotropy(w, quad)
    dirs, wa, mc = angular_rule(n, quad, frame=q, grade="pole" if quad.graded else None, width=width)
    sqrtM = (q * np.sqrt(w)) @ q.T
    V = dirs @ sqrtM
    I, B = ray_integrals(u, x, V, s, quad)
    value, bound, stderr = _reduce(wa, I, B, mc)
    return _finish(u, M, x, s, quad, value, bound, stderr, "z")


def linear_fracop_ycoords(u: TestFunctionProfile, M, x, s: float, quad: QuadratureSpec = QuadratureSpec()) -> FracopResult:
    """The same operator in the original coordinates, with the anisotropic kernel."""
    _check_s(s)
    w, q = _eigh(M)
    x = np.asarray(x, dtype=float)
    n = w.size
    width = _anisotropy(w, quad)
    dirs, wa, mc = angular_rule(n, quad, frame=q, grade="equator" if quad.graded else None, width=width)
    sqrt_inv = (q / np.sqrt(w)) @ q.T
    det = float(np.prod(w)) ** -0.5
    K = det * np.linalg.norm(dirs @ sqrt_inv, axis=1) ** (-n - 2.0 * s)
    I, B = ray_integrals(u, x, dirs, s, quad)
    value, bound, stderr = _reduce(wa * K, I, B, mc)
    return _finish(u, M, x, s, quad, value, bound, stderr, "y")


def check_frame(frame, n: Optional[int] = None, tol: float = 1e-10) -> np.ndarray:
    F = np.atleast_2d(np.asarray(frame, dtype=float))
    if n is not None and F.shape != (n - 1, n):
        raise FrameNotOrthonormal(f"frame must hold {n - 1} vectors of length {n}, got shape {F.shape}")
    err = np.max(np.abs(F @ F.T - np.eye(F.shape[0])))
    if err > tol:
        raise FrameNotOrthonormal(f"frame deviates from orthonormal by {err:.3e}")
    return F


def subspace_fraclap(
    u: TestFunctionProfile,
    frame,
    x,
    s: float,
    quad: QuadratureSpec = QuadratureSpec(),
    *,
    form: str = "second",
    scales=None,
) -> FracopResult:
    """int over R^{n-1} of the difference of u along span(frame) against |z|^{-(n-1)-2s}.

    ``form="second"`` returns 1/2 int delta(u, x, sum z_i e_i) |z|^{-(n-1)-2s} dz,
    ``form="first"`` the equal principal-value integral of u(x + sum z_i e_i) - u(x).
    Optional ``scales`` stretch the frame vectors, giving the weighted
    integrand delta(u, x, sum scales_i z_i e_i).
    """
    if not 0.5 < s < 1.0:
        raise SOutOfRange(f"s = {s} must lie in (1/2, 1) for the subspace integral")
    x = np.asarray(x, dtype=float)
    F = check_frame(frame, x.size)
    if scales is not None:
        F = np.asarray(scales, dtype=float)[:, None] * F
    dim = F.shape[0]
    if form == "second":
        dirs, wa, mc = angular_rule(dim, quad)
        I, B = ray_integrals(u, x, dirs @ F, s, quad, "second")
        value, bound, stderr = _reduce(wa, I, B, mc)
    elif form == "first":
        dirs, wa, mc = angular_rule(dim, quad, full=True)
        I, B = ray_integrals(u, x, dirs @ F, s, quad, "first")
        value, bound, stderr = _reduce(wa, I, B, mc)
        value, bound, stderr = 2 * value, 2 * bound, 2 * stderr
    else:
        raise ValueError("form must be 'first' or 'second'")
    meta = {"profile": u.name, "frame": F.tolist(), "x": x.tolist(), "s": s, "form": form, "spec": quad.to_record()}
    return FracopResult(float(value), float(bound), float(stderr), f"subspace-{form}", meta)


def builtin_profiles(n: int = 3):
    from .profiles import builtin_profiles as _bp

    return _bp(n)
