"""F_{k,s}[u](x) = inf over M in M_k of L_M[u](x), its strictly elliptic
restriction, and the explicit degenerate family of envelope matrices."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .envelope import EnvelopeMatrix, dfk, from_eigen, random_orthogonal, sample_gamma_k
from .errors import EpsOutOfRange, InfeasibleConstraint, InfeasibleSample
from .fracop import QuadratureSpec, linear_fracop, linear_fracop_ycoords
from .profiles import TestFunctionProfile
from .symcone import SymMatrix, elementary_symmetric_all


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("FRAC_HESSIAN_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class InfOptions:
    """Search settings.

    ``mode``: "full" searches eigenvalues and Givens angles, "diagonal" only
    eigenvalues in the standard frame, "auto" picks diagonal for radial u
    evaluated at the origin and full otherwise.
    """

    n_starts: int = 8
    seed: int = 0
    mode: str = "auto"
    n_probe: int = 32
    maxfev: int = 600
    xatol: float = 1e-6
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    workers: int = field(default_factory=default_workers)

    def __post_init__(self):
        if self.mode not in ("auto", "full", "diagonal"):
            raise ValueError("mode must be auto, full or diagonal")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


@dataclass
class InfResult:
    value: float
    argmin: EnvelopeMatrix
    n_starts: int
    converged: bool
    history: list
    mode: str = "full"
    evaluations: int = 0
    start_values: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "value": self.value,
            "argmin": self.argmin.to_record(),
            "n_starts": self.n_starts,
            "converged": self.converged,
            "mode": self.mode,
            "evaluations": self.evaluations,
            "start_values": self.start_values,
            "history": self.history,
        }


def givens(angles: Sequence[float], n: int) -> np.ndarray:
    Q = np.eye(n)
    it = iter(angles)
    for i in range(n):
        for j in range(i + 1, n):
            a = next(it)
            c, s = math.cos(a), math.sin(a)
            G = np.eye(n)
            G[i, i] = G[j, j] = c
            G[i, j], G[j, i] = -s, s
            Q = Q @ G
    return Q


class _Objective:
    """Maps search parameters to operator values, caching the best point."""

    def __init__(self, u, x, k, s, quad, n, diagonal, eps0=0.0, base=None):
        self.u, self.x, self.k, self.s, self.quad = u, np.asarray(x, float), k, s, quad
        self.n, self.diagonal, self.eps0 = n, diagonal, eps0
        self.base = np.eye(n) if base is None else base
        self.best = (math.inf, None)
        self.count = 0

    def matrix(self, p) -> Optional[EnvelopeMatrix]:
        n = self.n
        lam = np.append(p[: n - 1], 1.0)
        e = elementary_symmetric_all(lam)
        if not np.all(e[1 : self.k + 1] > 0):
            return None
        Q = self.base if self.diagonal else self.base @ givens(p[n - 1 :], n)
        E = from_eigen(lam, Q, self.k)
        if E.lambda_min < self.eps0:
            return None
        return E

    def value_of(self, E: EnvelopeMatrix) -> float:
        self.count += 1
        v = linear_fracop(self.u, E.M.entries, self.x, self.s, self.quad).value
        if v < self.best[0]:
            self.best = (v, E)
        return v

    def __call__(self, p) -> float:
        E = self.matrix(np.asarray(p, float))
        if E is None:
            return math.inf
        return self.value_of(E)


def _params_of(E: EnvelopeMatrix, diagonal: bool):
    """Start parameters and base rotation: B = Q (base diag(p, 1) base^T) Q^T, Q = I."""
    B = E.source_B
    lam, base = B.eigvals, np.asarray(B.eigvecs)
    p = lam[:-1] / lam[-1]  # the largest eigenvalue is positive on Gamma_k
    if diagonal:
        return p.copy(), base
    n = lam.size
    return np.concatenate([p, np.zeros(n * (n - 1) // 2)]), base


def _run_start(obj: _Objective, p0: np.ndarray, opts: InfOptions):
    hist = []
    dim = p0.size
    simplex = np.vstack([p0] + [p0 + 0.1 * np.eye(dim)[i] for i in range(dim)])
    res = minimize(
        obj,
        p0,
        method="Nelder-Mead",
        callback=lambda xk: hist.append(float(obj.best[0])),
        options={
            "initial_simplex": simplex,
            "xatol": opts.xatol,
            "fatol": 1e-12,
            "maxfev": opts.maxfev,
        },
    )
    fs = res.final_simplex[0]
    diam = float(np.max(np.linalg.norm(fs - fs[0], axis=1)))
    return float(res.fun), diam < max(opts.xatol, 1e-6), hist


def _is_origin_radial(u: TestFunctionProfile, x) -> bool:
    return bool(u.radial and not np.any(np.asarray(x)))


def _search(u, x, k, s, opts: InfOptions, eps0: float = 0.0) -> InfResult:
    x = np.asarray(x, dtype=float)
    n = x.size
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range 1..{n}")
    mode = opts.mode
    if mode == "auto":
        mode = "diagonal" if _is_origin_radial(u, x) else "full"
    diagonal = mode == "diagonal"
    quad = opts.quad
    rng = np.random.default_rng(opts.seed)

    # candidate starts: the identity generator plus the best of a seeded probe
    ident = dfk(np.eye(n), k)
    probe_obj = _Objective(u, x, k, s, quad, n, diagonal, eps0)
    cands = []
    if ident.lambda_min >= eps0:
        cands.append((probe_obj.value_of(ident), 0, ident))
    for i in range(opts.n_probe):
        lam = sample_gamma_k(k, n, rng)
        Q = np.eye(n) if diagonal else _rotation(rng, n)
        E = from_eigen(lam, Q, k)
        if E.lambda_min < eps0:
            continue
        cands.append((probe_obj.value_of(E), i + 1, E))
    if not cands:
        raise InfeasibleConstraint(f"no probed start satisfies lambda_min(M) >= {eps0}")
    head = [c for c in cands if c[1] == 0]
    rest = sorted((c for c in cands if c[1] != 0), key=lambda c: (c[0], c[1]))
    starts = (head + rest)[: opts.n_starts]

    def run(start):
        p0, base = _params_of(start[2], diagonal)
        obj = _Objective(u, x, k, s, quad, n, diagonal, eps0, base)
        fval, conv, hist = _run_start(obj, p0, opts)
        best_v, best_E = obj.best
        if best_E is None:
            best_v, best_E = start[0], start[2]
        return best_v, best_E, conv, hist, obj.count

    if opts.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as ex:
            outs = list(ex.map(run, starts))
    else:
        outs = [run(st) for st in starts]

    # running minimum over probes and all starts, ties to the lowest start index
    best_v, best_E = probe_obj.best
    conv = False
    history, start_values = [], []
    evals = probe_obj.count
    for v, E, c, h, cnt in outs:
        history.extend(h)
        start_values.append(v)
        evals += cnt
        if v < best_v:
            best_v, best_E, conv = v, E, c
        elif v == best_v:
            conv = conv or c
    return InfResult(
        value=float(best_v),
        argmin=best_E,
        n_starts=len(starts),
        converged=bool(conv),
        history=history,
        mode=mode,
        evaluations=evals,
        start_values=start_values,
    )


def _rotation(rng, n):
    Q = random_orthogonal(n, rng)
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def F_ks(u: TestFunctionProfile, x, k: int, s: float, opts: InfOptions = InfOptions()) -> InfResult:
    """Multi-start simplex search for the infimum over M_k."""
    return _search(u, x, k, s, opts)


def F_ks_restricted(
    u: TestFunctionProfile, x, k: int, s: float, eps0: float, opts: InfOptions = InfOptions()
) -> InfResult:
    """The same search restricted to lambda_min(M) >= eps0 (infeasible points score +inf)."""
    if eps0 < 0:
        raise ValueError("eps0 must be >= 0")
    return _search(u, x, k, s, opts, eps0=eps0)


# ------------------------------------------------------------ degenerate family


def eps_upper(n: int) -> float:
    """Supremum of admissible eps for the degenerate family."""
    if n == 2:
        return 1.0 / math.sqrt(2.0)
    return 0.5 * math.sqrt((n - 1) / (2.0 * (n - 2)))


def h_of(eps: float, n: int) -> float:
    return (1.0 - 2.0 * (n - 2) * eps**2 / (n - 1)) / (2.0 * eps)


def g_of(eps: float, n: int) -> float:
    """g(eps) = ((n-2) eps/(n-1) + h(eps)/2)^{-1/2} = (1/(4 eps) + (n-2) eps/(2(n-1)))^{-1/2}."""
    return (1.0 / (4.0 * eps) + (n - 2) * eps / (2.0 * (n - 1))) ** -0.5


@dataclass(frozen=True)
class DegenerateFamily:
    eps: float
    n: int
    B_eps: SymMatrix
    h_eps: float
    g_eps: float

    @property
    def envelope(self) -> EnvelopeMatrix:
        lam = np.diag(self.B_eps.entries).copy()
        return from_eigen(lam, np.eye(self.n), 2)

    def sqrt_inv_expected(self) -> np.ndarray:
        return np.diag([self.g_eps] * (self.n - 1) + [self.eps**-0.5])


def degenerate_family(eps: float, n: int) -> DegenerateFamily:
    if n < 2:
        raise ValueError("n must be >= 2")
    hi = eps_upper(n)
    if not 0.0 < eps < hi:
        raise EpsOutOfRange(f"eps = {eps} outside (0, {hi:.6g}) for n = {n}")
    h = h_of(eps, n)
    B = SymMatrix(np.diag([2.0 * eps / (n - 1)] * (n - 1) + [h]))
    return DegenerateFamily(eps=eps, n=n, B_eps=B, h_eps=h, g_eps=g_of(eps, n))


def graded_spec(quad: Optional[QuadratureSpec] = None) -> QuadratureSpec:
    return replace(quad or QuadratureSpec(), graded=True)


def degenerate_sweep(
    u: TestFunctionProfile,
    x,
    k: int = 2,
    s: float = 0.75,
    eps_list: Sequence[float] = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3),
    quad: Optional[QuadratureSpec] = None,
    path: str = "z",
) -> list[dict]:
    """Operator values along the degenerate direction M(B_eps), eps descending."""
    if k != 2:
        raise ValueError("the degenerate family is defined for k = 2")
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly descending")
    x = np.asarray(x, dtype=float)
    n = x.size
    q = graded_spec(quad)
    op = linear_fracop if path == "z" else linear_fracop_ycoords
    rows = []
    for e in eps_list:
        fam = degenerate_family(e, n)
        r = op(u, fam.envelope, x, s, q)
        rows.append({"eps": e, "value": r.value, "trunc_bound": r.trunc_bound, "stderr": r.stderr})
    return rows


# ------------------------------------------------------------ min-eigenvalue slice


def min_eigen_generator(eps: float, head: Sequence[float], n: int) -> np.ndarray:
    """Diagonal generator with sigma_2 = 1 and lambda_min(M) = eps.

    ``head`` holds sigma_1..sigma_{n-2}; sigma_{n-1} closes the sum
    sigma_1 + ... + sigma_{n-1} = 2 eps and sigma_n solves sigma_2(B) = 1.
    Raises InfeasibleSample when the result leaves Gamma_2 or sigma_n is not
    the largest entry (then eps would not be the smallest eigenvalue of M).
    """
    head = np.asarray(head, dtype=float)
    low = np.append(head, 2.0 * eps - head.sum())
    e2 = elementary_symmetric_all(low)[2] if low.size >= 2 else 0.0
    top = (1.0 - e2) / (2.0 * eps)
    lam = np.append(low, top)
    e = elementary_symmetric_all(lam)
    if not (e[1] > 0 and e[2] > 0 and top >= low.max()):
        raise InfeasibleSample(f"sample {lam} leaves Gamma_2 or breaks the eigenvalue order")
    return lam


def probe_min_eigen_set(
    u: TestFunctionProfile,
    x,
    s: float,
    eps: float,
    rng: np.random.Generator,
    n_samples: int = 24,
    quad: Optional[QuadratureSpec] = None,
    refine: int = 2,
    maxfev: int = 200,
) -> dict:
    """Smallest probed operator value over {M in M_2 : lambda_min(M) = eps}.

    Random feasible generators (with random rotations away from the origin)
    are scored, then the best few are refined by a simplex search inside the
    slice.  Being a probe it only gives an upper estimate of the slice infimum.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    q = graded_spec(quad)
    rotate = not _is_origin_radial(u, x)
    scored = []
    attempts = 0
    while len(scored) < n_samples:
        attempts += 1
        if attempts > 100 * n_samples:
            raise InfeasibleSample(f"could not draw {n_samples} feasible slice points at eps={eps}")
        head = 2.0 * eps * rng.uniform(-0.5, 1.0, n - 2) / max(n - 1, 1)
        try:
            lam = min_eigen_generator(eps, head, n)
        except InfeasibleSample:
            continue
        Q = _rotation(rng, n) if rotate else np.eye(n)
        E = from_eigen(lam, Q, 2)
        v = linear_fracop(u, E.M.entries, x, s, q).value
        scored.append((v, len(scored), head, Q))
    scored.sort(key=lambda t: (t[0], t[1]))
    best_v, best_head = scored[0][0], scored[0][2]
    for v0, _, head0, Q in scored[:refine]:
        if n < 3:
            break

        def f(h, Q=Q):
            try:
                lam = min_eigen_generator(eps, h, n)
            except InfeasibleSample:
                return math.inf
            return linear_fracop(u, from_eigen(lam, Q, 2).M.entries, x, s, q).value

        res = minimize(f, head0, method="Nelder-Mead", options={"maxfev": maxfev, "xatol": 1e-8 * eps})
        if res.fun < best_v:
            best_v, best_head = float(res.fun), res.x
    return {"eps": eps, "value": float(best_v), "head": np.asarray(best_head).tolist(), "n_samples": n_samples}
