"""Elementary symmetric polynomials, k-Hessian values and Gamma_k membership."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConeViolation


def elementary_symmetric_all(lam) -> np.ndarray:
    """Return ``[sigma_0, sigma_1, ..., sigma_n]`` of the vector ``lam``.

    Uses the product expansion of ``prod (1 + lam_i t)``: one pass, O(n^2).
    """
    lam = np.asarray(lam, dtype=float).ravel()
    e = np.zeros(lam.size + 1)
    e[0] = 1.0
    for x in lam:
        e[1:] = e[1:] + x * e[:-1]
    return e


def elementary_symmetric(l: int, lam) -> float:
    lam = np.asarray(lam, dtype=float).ravel()
    if not 1 <= l <= lam.size:
        raise ValueError(f"l={l} out of range 1..{lam.size}")
    return float(elementary_symmetric_all(lam)[l])


def elementary_symmetric_bruteforce(l: int, lam) -> float:
    """Subset-sum expansion. Exponential cost; test oracle only."""
    lam = [float(v) for v in np.ravel(lam)]
    return float(sum(math.prod(c) for c in itertools.combinations(lam, l)))


def in_gamma_k(lam, k: int) -> bool:
    """Strict membership in the open cone: sigma_l > 0 for l = 1..k."""
    lam = np.asarray(lam, dtype=float).ravel()
    if not 1 <= k <= lam.size:
        raise ValueError(f"k={k} out of range 1..{lam.size}")
    e = elementary_symmetric_all(lam)
    return bool(np.all(e[1 : k + 1] > 0))


@dataclass(frozen=True)
class ConeVector:
    lam: np.ndarray
    k: int
    sigmas: np.ndarray = field(init=False, repr=False)
    in_gamma_k: bool = field(init=False)

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float).ravel()
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        sig = elementary_symmetric_all(lam)[1:]
        sig.setflags(write=False)
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "in_gamma_k", bool(np.all(sig[: self.k] > 0)))


class SymMatrix:
    """Immutable symmetric matrix with a cached ascending eigendecomposition."""

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("SymMatrix needs a square 2-D array")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self.entries = a

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def _eigh(self):
        w, q = np.linalg.eigh(self.entries)
        # eigh already sorts ascending; a stable argsort keeps ties in solver order
        order = np.argsort(w, kind="stable")
        w, q = w[order], q[:, order]
        w.setflags(write=False)
        q.setflags(write=False)
        return w, q

    @property
    def eigvals(self) -> np.ndarray:
        return self._eigh[0]

    @property
    def eigvecs(self) -> np.ndarray:
        return self._eigh[1]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"SymMatrix({self.entries.tolist()!r})"


def as_array(A) -> np.ndarray:
    if isinstance(A, SymMatrix):
        return A.entries
    return np.asarray(A, dtype=float)


def eigvals_of(A) -> np.ndarray:
    if isinstance(A, SymMatrix):
        return A.eigvals
    a = np.asarray(A, dtype=float)
    if np.array_equal(a, a.T):
        return np.linalg.eigvalsh(a)
    # non-symmetric input (finite-difference perturbations); sigma_l are
    # still the real characteristic-polynomial coefficients
    return None


def sigmas_of_matrix(A) -> np.ndarray:
    """``[sigma_1 .. sigma_n]`` of the eigenvalues of a square matrix."""
    lam = eigvals_of(A)
    if lam is not None:
        return elementary_symmetric_all(lam)[1:]
    c = np.real(np.poly(np.asarray(A, dtype=float)))
    signs = (-1.0) ** np.arange(c.size)
    return (c * signs)[1:]


def f_k(A, k: int) -> float:
    """sigma_k(eig A)^(1/k) for A with eigenvalues in the closure of Gamma_k.

    The boundary tolerance for sigma_l is ``1e-12 * ||A||^l`` so that it scales
    with the degree of the polynomial.
    """
    a = as_array(A)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range 1..{n}")
    sig = sigmas_of_matrix(A)
    scale = max(np.linalg.norm(a, 2), np.finfo(float).tiny)
    for l in range(1, k + 1):
        if sig[l - 1] < -1e-12 * scale**l:
            raise ConeViolation(f"sigma_{l} = {sig[l - 1]:.3e} < 0; eigenvalues leave Gamma_{k}")
    return float(max(sig[k - 1], 0.0) ** (1.0 / k))
