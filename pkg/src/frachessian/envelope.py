"""The derivative map B -> M(B) = Df_k(B) and the set M_k it generates.

f_k is concave and 1-homogeneous on Gamma_k, so it equals the infimum of its
tangent planes, and each tangent plane at B is the linear map A -> tr(M(B) A).
The canonical computation diagonalises B, applies the diagonal formula

    eta_i = sigma_{k-1}(lam without lam_i) / (k f_k(lam)^(k-1))

and rotates back.  Entrywise formulas are kept only as cross-checks.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConeViolation, SamplingExhausted
from .symcone import SymMatrix, as_array, elementary_symmetric_all, f_k


@dataclass(frozen=True)
class EnvelopeMatrix:
    M: SymMatrix
    source_B: SymMatrix  # normalised so that f_k(source_B) = 1
    k: int
    eigvals: np.ndarray  # eigenvalues of M, ascending
    eigvecs: np.ndarray  # matching orthonormal eigenvectors (columns)

    @property
    def n(self) -> int:
        return self.M.n

    @property
    def sqrt_inv_eigs(self) -> np.ndarray:
        """Eigenvalues of M^{-1/2}, ascending."""
        return np.sort(self.eigvals**-0.5)

    @property
    def lambda_min(self) -> float:
        return float(self.eigvals[0])

    def sqrt(self) -> np.ndarray:
        q = self.eigvecs
        return (q * np.sqrt(self.eigvals)) @ q.T

    def sqrt_inv(self) -> np.ndarray:
        q = self.eigvecs
        return (q / np.sqrt(self.eigvals)) @ q.T

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "M": self.M.entries.ravel().tolist(),
            "source_B": self.source_B.entries.ravel().tolist(),
        }


def _diag_eta(lam: np.ndarray, k: int) -> np.ndarray:
    """Diagonal formula for Df_k at diag(lam), assuming f_k(lam) = 1."""
    n = lam.size
    eta = np.empty(n)
    for i in range(n):
        eta[i] = elementary_symmetric_all(np.delete(lam, i))[k - 1] / k
    return eta


def _check_cone(lam: np.ndarray, k: int) -> float:
    e = elementary_symmetric_all(lam)
    bad = [l for l in range(1, k + 1) if not e[l] > 0]
    if bad:
        raise ConeViolation(f"eigenvalues {lam} not in Gamma_{k}: sigma_{bad[0]} = {e[bad[0]]:.3e}")
    return float(e[k] ** (1.0 / k))


def from_eigen(lam, Q, k: int) -> EnvelopeMatrix:
    """M(B) for B = Q diag(lam) Q^T, skipping the eigendecomposition."""
    lam = np.asarray(lam, dtype=float)
    Q = np.asarray(Q, dtype=float)
    fk = _check_cone(lam, k)
    lam = lam / fk
    eta = _diag_eta(lam, k)
    order = np.argsort(eta, kind="stable")
    eta, Qs = eta[order], Q[:, order]
    M = SymMatrix((Qs * eta) @ Qs.T)
    B = SymMatrix((Q * lam) @ Q.T)
    eta.setflags(write=False)
    Qs = Qs.copy()
    Qs.setflags(write=False)
    return EnvelopeMatrix(M=M, source_B=B, k=k, eigvals=eta, eigvecs=Qs)


def dfk(B, k: int) -> EnvelopeMatrix:
    Bs = B if isinstance(B, SymMatrix) else SymMatrix(B)
    if not 1 <= k <= Bs.n:
        raise ValueError(f"k={k} out of range 1..{Bs.n}")
    return from_eigen(Bs.eigvals, Bs.eigvecs, k)


def dfk_fd(B, k: int, h: float = 1e-5) -> SymMatrix:
    """Central-difference derivative of f_k, one matrix unit E_ij at a time.

    Raises ConeViolation when a perturbed matrix leaves the cone; shrink h.
    """
    b = as_array(B)
    n = b.shape[0]
    D = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n))
            E[i, j] = h
            D[i, j] = (f_k(b + E, k) - f_k(b - E, k)) / (2 * h)
    return SymMatrix(0.5 * (D + D.T))


def dfk_entries_k2(B) -> np.ndarray:
    """Entrywise formulas for k = 2.

    M_ii = sum_{j != i} b_jj / (2 f_2(B)),   M_ij = -b_ji / (2 f_2(B)).
    """
    b = as_array(B)
    f2 = f_k(b, 2)
    M = -b.T / (2 * f2)
    tr = np.trace(b)
    np.fill_diagonal(M, (tr - np.diag(b)) / (2 * f2))
    return M


def dfk_cofactor(B) -> np.ndarray:
    """k = n: M = (1/n) det(B)^(1/n - 1) cof(B), so det M = n^-n."""
    b = as_array(B)
    n = b.shape[0]
    det = np.linalg.det(b)
    if not det > 0:
        raise ConeViolation("det(B) <= 0; B is not in Gamma_n")
    cof = det * np.linalg.inv(b).T
    return cof * det ** (1.0 / n - 1.0) / n


def dfk_minors(B, k: int) -> np.ndarray:
    """Sum-of-minors formula for any k.

    d sigma_k / d b_ij is the sum, over index sets S of size k containing i and
    j, of the (i, j) cofactor of the principal submatrix B_S.
    """
    b = as_array(B)
    n = b.shape[0]
    fk = f_k(b, k)
    G = np.zeros((n, n))
    for S in itertools.combinations(range(n), k):
        sub = b[np.ix_(S, S)]
        if k == 1:
            adj = np.ones((1, 1))
        else:
            adj = np.array(
                [
                    [
                        (-1) ** (p + q) * np.linalg.det(np.delete(np.delete(sub, p, 0), q, 1))
                        for q in range(k)
                    ]
                    for p in range(k)
                ]
            )
        for p, i in enumerate(S):
            for q, j in enumerate(S):
                G[i, j] += adj[p, q]
    return G / (k * fk ** (k - 1))


def envelope_gap(A, B, k: int) -> float:
    """tr(M(B) A) - f_k(A); nonnegative by concavity, zero when B ~ A."""
    a = as_array(A)
    M = dfk(B, k).M.entries
    return float(np.sum(M * a) - f_k(a, k))


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def sample_gamma_k(
    k: int,
    n: int,
    rng: np.random.Generator,
    box: tuple[float, float] = (-1.0, 3.0),
    max_attempts: int = 10_000,
) -> np.ndarray:
    """Rejection-sample an eigenvalue vector in Gamma_k, normalised to f_k = 1."""
    lo, hi = box
    for _ in range(max_attempts):
        lam = rng.uniform(lo, hi, n)
        e = elementary_symmetric_all(lam)
        if np.all(e[1 : k + 1] > 0):
            return lam / e[k] ** (1.0 / k)
    raise SamplingExhausted(f"no Gamma_{k} sample in {max_attempts} draws from box {box}")


def sample_Mk(
    k: int,
    n: int,
    count: int,
    rng: np.random.Generator,
    box: tuple[float, float] = (-1.0, 3.0),
    max_attempts: int = 10_000,
) -> list[EnvelopeMatrix]:
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    for _ in range(count):
        lam = sample_gamma_k(k, n, rng, box, max_attempts)
        Q = random_orthogonal(n, rng)
        out.append(from_eigen(lam, Q, k))
    return out
