"""Fixed-point solver for F_{k,s}[u] = u - phi on R^n, with u = phi outside a box.

Discretisation
--------------
Every node x_i of the m^n lattice is an unknown.  The operator is evaluated
in the original coordinates,

    L_M[u](x_i) = sum_j c_j(M) D_ij,     c_j(M) = w_j det(M^{-1/2}) |M^{-1/2} e_j|^{-n-2s} / 2,
    D_ij = int_0^inf (u(x_i + r e_j) + u(x_i - r e_j) - 2 u(x_i)) r^{-1-2s} dr,

with the directions e_j of a fixed half-sphere rule.  The radial integral
uses a Taylor core on [0, h], log-uniform Gauss panels on [h, r_cut] with
r_cut = 2 R sqrt(n) (beyond which x_i +- r e_j is outside the box for every
node), and phi itself from r_cut to infinity.  Because the lattice is uniform,
u(x_i + d) for all nodes at once is a multilinear combination of shifted
slices of the value array, so one pass over the offsets d = +-r_l e_j
evaluates every D_ij.  Samples that fall outside the box use phi exactly and
are tabulated once.

The infimum over M_k is taken per node: a seeded candidate set is scored by
one matrix product, then compass searches refine the best few candidates
(and the previous argmin) in the (eigenvalue, Givens-angle) parameters.  The
anisotropy of M is capped so that the angular rule resolves the kernel.

Iteration
---------
The default is policy iteration: freeze the argmin M*(x_i), solve the linear
system (I - L_{M*}) u = phi + (outside-box part) by GMRES preconditioned with
1 + W, where W = 2 Q sum_j c_j(M*) is the weight of u(x_i) in F[u](x_i), then
recompute the argmin.  Preconditioned Picard steps

    u <- u + omega (phi + F[u] - u) / (1 + W)

are available too; they contract, but only at a rate of about 1 - 1/(1 + W).
The unpreconditioned damped map has Lipschitz constant about omega W >> 1.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .envelope import sample_gamma_k
from .errors import Diverged
from .fracop import QuadratureSpec, _gauss, angular_rule
from .grid import GridFunction
from .profiles import TestFunctionProfile


@dataclass(frozen=True)
class GridSpec:
    n: int
    R: float
    m: int
    center: tuple = ()

    def center_array(self) -> np.ndarray:
        return np.zeros(self.n) if not self.center else np.asarray(self.center, float)


# Default anisotropy caps: in 3D the coarse angular rules cannot resolve
# kernels much narrower than ~1/10 rad and the per-node search turns multimodal.
DEFAULT_CAP = {2: 50.0, 3: 10.0}
DEFAULT_STARTS = {2: 1, 3: 4}


@dataclass(frozen=True)
class SolveOptions:
    omega: float = 0.5
    max_iters: int = 400
    residual_tol: float = 1e-4
    n_angular: int = 16
    radial_panels: int = 12
    radial_order: int = 4
    far_panels: int = 24
    R_max: float = 1e4
    aniso_cap: Optional[float] = None  # None: 50 for n = 2, 10 for n = 3
    n_candidates: int = 192
    compass_rounds: int = 40
    compass_starts: Optional[int] = None  # None: 1 for n = 2, 4 for n = 3
    method: str = "howard"
    anderson: int = 0
    gmres_tol: float = 1e-10
    gmres_maxiter: int = 200
    seed: int = 0
    allow_3d: bool = False

    def __post_init__(self):
        if not 0 < self.omega <= 1:
            raise ValueError("omega must lie in (0, 1]")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.aniso_cap is not None and self.aniso_cap < 1:
            raise ValueError("aniso_cap must be >= 1")
        if self.compass_starts is not None and self.compass_starts < 1:
            raise ValueError("compass_starts must be >= 1")
        if self.method not in ("howard", "picard", "plain"):
            raise ValueError("method must be howard, picard or plain")

    def to_record(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------ M_k parameters


def _esym_batch(lam: np.ndarray, upto: int) -> np.ndarray:
    """Elementary symmetric polynomials e_0..e_upto of each row."""
    B, n = lam.shape
    e = np.zeros((B, upto + 1))
    e[:, 0] = 1.0
    for i in range(n):
        e[:, 1:] = e[:, 1:] + lam[:, i : i + 1] * e[:, :-1]
    return e


def _givens_batch(angles: np.ndarray, n: int) -> np.ndarray:
    B = angles.shape[0]
    Q = np.broadcast_to(np.eye(n), (B, n, n)).copy()
    idx = 0
    for i in range(n):
        for j in range(i + 1, n):
            c, s = np.cos(angles[:, idx]), np.sin(angles[:, idx])
            Qi, Qj = Q[:, :, i].copy(), Q[:, :, j].copy()
            Q[:, :, i] = Qi * c[:, None] + Qj * s[:, None]
            Q[:, :, j] = -Qi * s[:, None] + Qj * c[:, None]
            idx += 1
    return Q


class _Family:
    """Batched map from search parameters to kernel coefficients c_j(M).

    Parameters are (q, angles): eigenvalues lam = (q, 0) exponentiated when
    k = n (the positive cone) or (q, 1) taken literally otherwise; M = Df_k
    of Q diag(lam) Q^T with Q a product of Givens rotations.
    """

    def __init__(self, n, k, s, dirs, wdir, cap):
        self.n, self.k, self.s = n, k, s
        self.dirs, self.half_w = dirs, 0.5 * wdir
        self.log_cap2 = 2.0 * math.log(cap)
        self.n_ang = n * (n - 1) // 2
        self.dim = (n - 1) + self.n_ang

    def eigen(self, P):
        n, k = self.n, self.k
        q = P[:, : n - 1]
        if k == n:
            lam = np.exp(np.concatenate([q, np.zeros((q.shape[0], 1))], axis=1))
        else:
            lam = np.concatenate([q, np.ones((q.shape[0], 1))], axis=1)
        e = _esym_batch(lam, k)
        ok = np.all(e[:, 1:] > 0, axis=1)
        fk = np.where(ok, np.abs(e[:, k]), 1.0) ** (1.0 / k)
        lam = lam / fk[:, None]
        eta = np.empty_like(lam)
        for i in range(n):
            rest = np.delete(lam, i, axis=1)
            eta[:, i] = _esym_batch(rest, k - 1)[:, k - 1] / k
        ok &= np.all(eta > 0, axis=1)
        safe = np.where(eta > 0, eta, 1.0)
        ok &= np.log(safe.max(axis=1) / safe.min(axis=1)) <= self.log_cap2 + 1e-12
        return safe, ok

    def coeffs(self, P) -> tuple[np.ndarray, np.ndarray]:
        """(B, J) coefficients and a validity mask."""
        P = np.atleast_2d(P)
        eta, ok = self.eigen(P)
        Q = _givens_batch(P[:, self.n - 1 :], self.n)
        proj = np.matmul(Q.transpose(0, 2, 1), self.dirs.T)  # (B, n, J)
        quad = ((proj * proj) * (1.0 / eta)[:, :, None]).sum(axis=1)
        det = np.prod(eta, axis=1) ** -0.5
        c = self.half_w[None, :] * det[:, None] * quad ** (-(self.n + 2 * self.s) / 2)
        return c, ok

    def matrices(self, P) -> np.ndarray:
        eta, _ = self.eigen(np.atleast_2d(P))
        Q = _givens_batch(np.atleast_2d(P)[:, self.n - 1 :], self.n)
        return np.einsum("bij,bj,bkj->bik", Q, eta, Q)

    def candidates(self, count: int, rng: np.random.Generator) -> np.ndarray:
        n, k = self.n, self.k
        rows = [np.zeros(self.dim) if k == n else np.concatenate([np.ones(n - 1), np.zeros(self.n_ang)])]
        lc = self.log_cap2  # n = 2: the eta ratio is exp|q|; larger n is filtered below
        while len(rows) < count:
            if k == n:
                q = rng.uniform(-lc, lc, n - 1)
            else:
                lam = np.sort(sample_gamma_k(k, n, rng))
                q = lam[:-1] / lam[-1]
            a = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, self.n_ang)
            rows.append(np.concatenate([q, a]))
        P = np.array(rows)
        if n == 2:
            # minima often sit on the anisotropy cap in a narrow angular window,
            # so add a lattice in (q, angle) finer than the direction rule
            qs = np.linspace(-lc, lc, 17)
            na = 4 * len(self.half_w)
            ang = -0.5 * np.pi + np.pi * np.arange(na) / na
            Qg, Ag = np.meshgrid(qs, ang, indexing="ij")
            P = np.concatenate([P, np.stack([Qg.ravel(), Ag.ravel()], axis=1)])
        elif n == 3:
            P = np.concatenate([P, self._aligned(rng)])
        return P[self.eigen(P)[1]]

    def _aligned(self, rng, levels: int = 7, spins: int = 3) -> np.ndarray:
        """n = 3: eigen-shapes on a log grid with one axis pointed at each rule direction.

        At the anisotropy cap the kernel is sharply peaked, so the minimiser
        lines an axis up with a quadrature direction; random rotations miss it.
        Column 0 of the Givens product is (cos a cos b, sin a cos b, sin b), which
        aims that axis exactly, and the last angle spins about it.
        """
        n, k = self.n, self.k
        t = np.linspace(0.0, self.log_cap2, levels)
        shapes = [np.exp([a, b, 0.0]) for a in t for b in t if b <= a]
        v = self.dirs
        az, el = np.arctan2(v[:, 1], v[:, 0]), np.arcsin(np.clip(v[:, 2], -1, 1))
        spin = rng.uniform(0, np.pi) + np.pi * np.arange(spins) / spins
        rows = []
        for eta in shapes:
            for a in range(n):
                for rest in (((a + 1) % n, (a + 2) % n), ((a + 2) % n, (a + 1) % n)):
                    e = eta[[a, *rest]]
                    lam = 1.0 / e if k == n else e.sum() / (n - 1) - e
                    if lam[-1] <= 0:
                        continue
                    r = lam[:-1] / lam[-1]
                    q = np.log(r) if k == n else r
                    if k == n and not np.all(np.isfinite(q)):
                        continue
                    for sp in spin:
                        rows.append(np.column_stack([
                            np.broadcast_to(q, (len(v), n - 1)), az, el, np.full(len(v), sp)]))
                    break
        return np.concatenate(rows) if rows else np.zeros((0, self.dim))


# ------------------------------------------------------------ engine


@dataclass
class _Offset:
    j: int
    weight: float
    lo: tuple
    hi: tuple
    fl: tuple
    alpha: tuple


class Engine:
    """Discrete operator on a fixed grid geometry."""

    def __init__(self, phi: TestFunctionProfile, k: int, s: float, grid: GridSpec, opts: SolveOptions):
        n, R, m = grid.n, float(grid.R), int(grid.m)
        if not 0.5 < s < 1:
            raise ValueError("s must lie in (1/2, 1)")
        if n == 3 and not opts.allow_3d:
            raise ValueError("n = 3 needs allow_3d=True (coarse grids only)")
        if n == 3 and m > 24:
            raise ValueError("n = 3 is limited to m <= 24")
        if n not in (2, 3):
            raise ValueError("the solver supports n = 2 and, behind a flag, n = 3")
        if k not in (2, n):
            raise ValueError("k must be 2 or n")
        self.phi, self.k, self.s, self.n, self.R, self.m = phi, k, s, n, R, m
        self.center = grid.center_array()
        self.opts = opts
        self.h = 2 * R / (m - 1)
        self.shape = (m,) * n
        axes = [self.center[a] + np.linspace(-R, R, m) for a in range(n)]
        self.X = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        self.phi_nodes = phi(self.X)

        dirs, wdir, _ = angular_rule(n, QuadratureSpec(n_angular=opts.n_angular, seed=opts.seed))
        self.dirs, self.wdir = dirs, wdir
        self.cap = opts.aniso_cap if opts.aniso_cap is not None else DEFAULT_CAP[n]
        self.family = _Family(n, k, s, dirs, wdir, self.cap)

        # radial nodes on [h, r_cut] plus the Taylor core carried by r = h
        h = self.h
        self.r_cut = 2 * R * math.sqrt(n)
        t, w = _gauss(opts.radial_order)
        br = np.exp(np.linspace(math.log(h), math.log(self.r_cut), opts.radial_panels + 1))
        lo, wd = br[:-1, None], np.diff(br)[:, None]
        r = (lo + wd * t).ravel()
        wr = (wd * w).ravel() * r ** (-1 - 2 * s)
        self.r = np.concatenate([[h], r])
        self.wr = np.concatenate([[h ** (-2 * s) / (2 - 2 * s)], wr])
        self.Q = float(self.wr.sum() + self.r_cut ** (-2 * s) / (2 * s))

        self._build_offsets()
        self.static = self._static_part()
        self.rng = np.random.default_rng(opts.seed)
        self.cands = self.family.candidates(opts.n_candidates, self.rng)
        self.starts = opts.compass_starts if opts.compass_starts is not None else DEFAULT_STARTS[n]
        self.cand_c, _ = self.family.coeffs(self.cands)
        self.params: Optional[np.ndarray] = None

    # -------------------------------------------------------------- geometry

    def _build_offsets(self):
        m, h = self.m, self.h
        offs = []
        for j, e in enumerate(self.dirs):
            for r, w in zip(self.r, self.wr):
                for sign in (1.0, -1.0):
                    g = sign * r * e / h  # offset in index units
                    fl = np.floor(g).astype(int)
                    alpha = g - fl
                    lo = np.maximum(0, np.ceil(-g - 1e-12).astype(int))
                    hi = np.minimum(m - 1, np.floor(m - 1 - g + 1e-12).astype(int))
                    if np.any(hi < lo):
                        continue
                    offs.append(_Offset(j, float(w), tuple(lo), tuple(hi), tuple(fl), tuple(alpha)))
        self.offsets = offs

    def _static_part(self) -> np.ndarray:
        """Contributions of samples outside the box, which see phi only."""
        n, phi = self.n, self.phi
        N, J = self.X.shape[0], self.dirs.shape[0]
        S = np.zeros((N, J))
        lo_c, hi_c = self.center - self.R, self.center + self.R
        tol = 1e-9 * self.h
        # near part: r in [h, r_cut], only the samples that left the box
        for j, e in enumerate(self.dirs):
            for sign in (1.0, -1.0):
                P = self.X[:, None, :] + sign * self.r[None, :, None] * e[None, None, :]
                out = np.any((P < lo_c - tol) | (P > hi_c + tol), axis=-1)
                if np.any(out):
                    vals = np.zeros(out.shape)
                    vals[out] = phi(P[out])
                    S[:, j] += vals @ self.wr
        # far part: r >= r_cut, phi on log panels and its far-field tail
        o = self.opts
        t, w = _gauss(8)
        br = np.exp(np.linspace(math.log(self.r_cut), math.log(o.R_max), o.far_panels + 1))
        lo, wd = br[:-1, None], np.diff(br)[:, None]
        rf = (lo + wd * t).ravel()
        wf = (wd * w).ravel() * rf ** (-1 - 2 * self.s)
        for j, e in enumerate(self.dirs):
            Pp = self.X[:, None, :] + rf[None, :, None] * e
            Pm = self.X[:, None, :] - rf[None, :, None] * e
            S[:, j] += (phi(Pp) + phi(Pm)) @ wf
        ff = phi.far_field
        if ff is not None:
            Rm, s = o.R_max, self.s
            c0 = ff.offset + (self.X @ np.asarray(ff.linear) if ff.linear is not None else 0.0)
            tail = 2 * c0 * Rm ** (-2 * s) / (2 * s)
            if ff.slope:
                tail = tail + 2 * ff.slope * Rm ** (1 - 2 * s) / (2 * s - 1)
            S += np.asarray(tail).reshape(-1, 1)
        return S

    # -------------------------------------------------------------- operator

    def differences(self, U: np.ndarray, with_phi: bool = True) -> np.ndarray:
        """D_ij for the grid values U (shape m^n); ``with_phi=False`` drops the outside-box part."""
        n, m = self.n, self.m
        J = self.dirs.shape[0]
        Up = np.pad(U, [(0, 1)] * n)
        P = np.zeros((J,) + self.shape)
        corners = list(itertools.product((0, 1), repeat=n))
        for o in self.offsets:
            tgt = tuple(slice(l, h + 1) for l, h in zip(o.lo, o.hi))
            acc = P[o.j][tgt]
            for b in corners:
                coef = o.weight
                for a in range(n):
                    coef *= o.alpha[a] if b[a] else 1.0 - o.alpha[a]
                if coef == 0.0:
                    continue
                src = tuple(slice(l + f + bb, h + 1 + f + bb) for l, h, f, bb in zip(o.lo, o.hi, o.fl, b))
                acc += coef * Up[src]
        D = P.reshape(J, -1).T
        if with_phi:
            D += self.static
        D -= 2.0 * self.Q * U.reshape(-1, 1)
        return D

    def _values(self, C, D):
        return (C * D).sum(axis=1)

    def _top(self, D: np.ndarray, K: int):
        """Indices and scores of the K best candidates per node, shape (K, N)."""
        N = D.shape[0]
        F = np.full((K, N), np.inf)
        idx = np.zeros((K, N), dtype=int)
        cols = np.arange(N)
        for lo in range(0, len(self.cands), 512):
            sc = np.concatenate([F, self.cand_c[lo : lo + 512] @ D.T])
            ids = np.concatenate([idx, lo + np.broadcast_to(np.arange(sc.shape[0] - K)[:, None], (sc.shape[0] - K, N))])
            part = np.argsort(sc, axis=0, kind="stable")[:K]
            F, idx = sc[part, cols], ids[part, cols]
        return idx, F

    def _compass(self, D, P, F, step):
        fam = self.family
        for _ in range(self.opts.compass_rounds):
            if np.all(step < 1e-5):
                break
            bestF, bestP = F.copy(), P.copy()
            for d in range(fam.dim):
                for sign in (1.0, -1.0):
                    T = P.copy()
                    T[:, d] += sign * step
                    c, ok = fam.coeffs(T)
                    v = np.where(ok, self._values(c, D), np.inf)
                    imp = v < bestF
                    bestF[imp], bestP[imp] = v[imp], T[imp]
            moved = bestF < F
            step = np.where(moved, step, 0.5 * step)
            F, P = bestF, bestP
        return F, P

    def infimum(self, D: np.ndarray, warm: bool = True):
        """Per-node minimum over the capped family; returns (F, W, params).

        A compass search runs from each of the best ``starts`` candidates and,
        when warm, from the previous argmin; the lowest end point wins.
        """
        fam = self.family
        N = D.shape[0]
        idx, Fs = self._top(D, self.starts)
        runs = [(self.cands[idx[i]].copy(), Fs[i].copy(), np.full(N, 0.4)) for i in range(self.starts)]
        if warm and self.params is not None:
            c, ok = fam.coeffs(self.params)
            runs.insert(0, (self.params.copy(), np.where(ok, self._values(c, D), np.inf), np.full(N, 0.1)))
        F, P = np.full(N, np.inf), np.zeros((N, fam.dim))
        for P0, F0, step in runs:
            Fi, Pi = self._compass(D, P0, F0, step)
            better = Fi < F
            F[better], P[better] = Fi[better], Pi[better]
        c, _ = fam.coeffs(P)
        W = 2.0 * self.Q * c.sum(axis=1)
        return F, W, P

    def apply(self, U: np.ndarray, warm: bool = True):
        D = self.differences(U)
        F, W, P = self.infimum(D, warm)
        self.params = P
        return F, W

    def linear(self, U: np.ndarray, M) -> np.ndarray:
        """L_M[u] at every node for one fixed SPD matrix M."""
        w, q = np.linalg.eigh(np.asarray(M, float))
        proj = self.dirs @ q
        quad = (proj * proj / w).sum(axis=1)
        c = 0.5 * self.wdir * np.prod(w) ** -0.5 * quad ** (-(self.n + 2 * self.s) / 2)
        return self.differences(U) @ c


# ------------------------------------------------------------ driver


@dataclass
class SolveResult:
    u: GridFunction
    residual_history: list
    iterations: int
    converged: bool
    seconds: float
    argmin: np.ndarray = field(repr=False, default=None)

    def to_record(self) -> dict:
        return {
            "grid": self.u.header(),
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual": self.residual_history[-1] if self.residual_history else None,
            "residual_history": self.residual_history,
        }


def _grid_spec(grid, n=None) -> GridSpec:
    if isinstance(grid, GridSpec):
        return grid
    if isinstance(grid, GridFunction):
        return GridSpec(grid.n, grid.R, grid.m, tuple(grid.center.tolist()))
    if isinstance(grid, dict):
        return GridSpec(int(grid["n"]), float(grid["R"]), int(grid["m"]), tuple(grid.get("center", ())))
    n_, R, m = grid
    return GridSpec(int(n_), float(R), int(m))


def _anderson(Xh: list, Gh: list):
    """Type-II Anderson mixing from iterate and residual histories."""
    if len(Gh) < 2:
        return Xh[-1] + Gh[-1]
    dG = np.array([Gh[i + 1] - Gh[i] for i in range(len(Gh) - 1)]).T
    dX = np.array([Xh[i + 1] - Xh[i] for i in range(len(Xh) - 1)]).T
    gamma, *_ = np.linalg.lstsq(dG, Gh[-1], rcond=None)
    return Xh[-1] + Gh[-1] - (dX + dG) @ gamma


def _policy_solve(eng: Engine, u: np.ndarray, opts: SolveOptions) -> np.ndarray:
    """Solve (I - L_{M*}) u = phi + L_{M*}[outside part] with the current argmin frozen."""
    C, _ = eng.family.coeffs(eng.params)
    N = u.size
    rhs = eng.phi_nodes + (eng.static * C).sum(axis=1)

    def matvec(v):
        v = np.asarray(v).ravel()
        return v - (eng.differences(v.reshape(eng.shape), with_phi=False) * C).sum(axis=1)

    diag = 1.0 + 2.0 * eng.Q * C.sum(axis=1)
    A = LinearOperator((N, N), matvec=matvec, dtype=float)
    Pc = LinearOperator((N, N), matvec=lambda v: np.asarray(v).ravel() / diag, dtype=float)
    sol, _ = gmres(A, rhs, x0=u, M=Pc, rtol=opts.gmres_tol, atol=0.0, restart=50, maxiter=opts.gmres_maxiter)
    return sol


def solve_global(phi: TestFunctionProfile, k: int, s: float, grid, opts: SolveOptions = SolveOptions(),
                 callback=None) -> SolveResult:
    """Solve F_{k,s}[u] = u - phi with u = phi outside the box, starting from u = phi.

    ``method="howard"`` alternates the per-node argmin with a linear solve for
    the frozen policy; ``method="picard"`` takes preconditioned damped steps;
    ``method="plain"`` is u <- (1 - omega) u + omega (phi + F[u]), which is
    expansive once the diagonal weight W exceeds 2/omega - 1 and then raises
    Diverged.
    Either way the residual recorded per iteration is sup_i |phi + F[u] - u|.
    """
    spec = _grid_spec(grid)
    eng = Engine(phi, k, s, spec, opts)
    t0 = time.perf_counter()
    phi_v = eng.phi_nodes
    u = phi_v.copy()
    hist: list = []
    Xh: list = []
    Gh: list = []
    best = math.inf
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        F, W = eng.apply(u.reshape(eng.shape))
        r = phi_v + F - u
        res = float(np.max(np.abs(r)))
        hist.append(res)
        if callback is not None:
            callback(it, res)
        if res <= opts.residual_tol:
            converged = True
            break
        if not math.isfinite(res):
            raise Diverged("residual is not finite")
        # policy steps may overshoot once before settling, so Howard gets a short grace period
        window = 3 if opts.method == "howard" else 1
        if len(hist) > window and all(h > 10 * best for h in hist[-window:]):
            raise Diverged(f"residual {res:.3e} grew tenfold from its minimum {best:.3e}")
        best = min(best, res)
        if opts.method == "howard":
            u = _policy_solve(eng, u, opts)
            continue
        if opts.method == "plain":
            u = (1 - opts.omega) * u + opts.omega * (phi_v + F)
            continue
        g = opts.omega * r / (1.0 + W)
        if opts.anderson > 0:
            if len(hist) > 1 and res > 2 * hist[-2]:
                Xh, Gh = [], []  # restart the mixing after a bad step
            Xh.append(u.copy())
            Gh.append(g)
            Xh, Gh = Xh[-(opts.anderson + 1):], Gh[-(opts.anderson + 1):]
            u = _anderson(Xh, Gh)
        else:
            u = u + g
    seconds = time.perf_counter() - t0
    out = GridFunction(spec.R, spec.m, u.reshape(eng.shape), phi, spec.center_array(),
                       meta={"s": s, "k": k})
    return SolveResult(out, hist, it, converged, seconds, eng.params)


def operator_values(u: GridFunction, k: int, s: float, opts: SolveOptions = SolveOptions(),
                    policy: Optional[np.ndarray] = None) -> np.ndarray:
    """Discrete F_{k,s}[u] at the grid nodes.

    The per-node search always runs from scratch; a ``policy`` (the argmin
    parameters returned by the solver) is refined alongside it and the lower
    value kept.  For n = 3 the search landscape is multimodal, so the warm
    policy matters there.
    """
    eng = Engine(u.phi, k, s, _grid_spec(u), opts)
    if policy is not None:
        eng.params = np.asarray(policy, dtype=float)
    F, _ = eng.apply(u.values, warm=policy is not None)
    return F


def residual(u: GridFunction, phi: Optional[TestFunctionProfile], k: int, s: float,
             opts: SolveOptions = SolveOptions(), policy: Optional[np.ndarray] = None) -> float:
    """sup over grid nodes of |F[u] - u + phi|."""
    if phi is not None and phi is not u.phi:
        u = GridFunction(u.R, u.m, u.values, phi, u.center, u.meta)
    F = operator_values(u, k, s, opts, policy)
    phi_v = u.phi(u.nodes())
    return float(np.max(np.abs(F - u.values.ravel() + phi_v)))


def modulus_report(u: GridFunction) -> dict:
    """Largest first-difference and second-difference quotients along grid axes."""
    V, h = u.values, u.h
    lip, semi = 0.0, -math.inf
    for a in range(u.n):
        d1 = np.abs(np.diff(V, axis=a)) / h
        lip = max(lip, float(d1.max()))
        sl = [slice(None)] * u.n
        lo, mid, hi = list(sl), list(sl), list(sl)
        lo[a], mid[a], hi[a] = slice(0, -2), slice(1, -1), slice(2, None)
        d2 = (V[tuple(hi)] + V[tuple(lo)] - 2 * V[tuple(mid)]) / h**2
        semi = max(semi, float(d2.max()))
    return {"lipschitz_estimate": lip, "semiconcavity_estimate": semi, "h": h}
