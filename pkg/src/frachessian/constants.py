"""The explicit constant chain C1, C2, C3, mu1, eps1, mu0, C, C5, C4, eps0.

Every base constant has a Gamma-function closed form and an independent
adaptive-quadrature value.  The derived constants are computed twice, once
from each set of base values, so the report carries both columns throughout.

C1 and mu1 integrate min{2L|t|, SC t^2}; the pointwise max would make both
integrals diverge at the origin for every s in (1/2, 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import ChainUndefined, EpsOutOfRange, SOutOfRange
from .infimum import eps_upper, g_of

_QUAD = dict(epsabs=0.0, epsrel=1e-13, limit=500)


def _need_half(s: float, what: str):
    if not 0.5 < s < 1.0:
        raise SOutOfRange(f"s must lie in (1/2,1) for {what}; got s = {s}")


def _need_unit(s: float, what: str):
    if not 0.0 < s < 1.0:
        raise SOutOfRange(f"s must lie in (0,1) for {what}; got s = {s}")


def _need_pos(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive; got {v}")


def sphere_area(dim: int) -> float:
    """|S^{dim-1}| in R^dim; |S^0| = 2."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def _crossover(L: float, SC: float) -> float:
    return 2.0 * L / SC


def _bracket(s, L, SC):
    """int_0^inf min{2L t, SC t^2} t^{-1-2s} dt."""
    t = _crossover(L, SC)
    return SC * t ** (2 - 2 * s) / (2 - 2 * s) + 2 * L * t ** (1 - 2 * s) / (2 * s - 1)


def _bracket_quad(s, L, SC):
    """The same integral by adaptive quadrature in w = log t, split at the crossover."""
    w0 = math.log(_crossover(L, SC))

    def f(w):
        # min{2L t, SC t^2} t^{-2s} with t = e^w, exponents combined to avoid 0**(-2s)
        a = math.log(2 * L) + (1 - 2 * s) * w
        b = math.log(SC) + (2 - 2 * s) * w
        return math.exp(min(a, b))

    return quad(f, -np.inf, w0, **_QUAD)[0] + quad(f, w0, np.inf, **_QUAD)[0]


def c1(s: float, L: float = 1.0, SC: float = 1.0) -> float:
    _need_half(s, "C1")
    _need_pos(L=L, SC=SC)
    return 2.0 * _bracket(s, L, SC)


def c1_quad(s: float, L: float = 1.0, SC: float = 1.0) -> float:
    _need_half(s, "C1")
    _need_pos(L=L, SC=SC)
    return 2.0 * _bracket_quad(s, L, SC)


def c2(n: int, s: float) -> float:
    """int over R^{n-1} of (1 + |z|^2)^{-(n+2s)/2}."""
    _need_unit(s, "C2")
    if n < 2:
        raise ValueError("n must be >= 2")
    return math.pi ** ((n - 1) / 2) * math.exp(math.lgamma(s + 0.5) - math.lgamma((n + 2 * s) / 2))


def c2_quad(n: int, s: float) -> float:
    _need_unit(s, "C2")
    a = (n + 2 * s) / 2
    radial = quad(lambda r: r ** (n - 2) * (1 + r * r) ** -a, 0.0, np.inf, **_QUAD)[0]
    return sphere_area(n - 1) * radial


def c3(n: int, s: float) -> float:
    """int over R of (1 + t^2)^{-(n+2s)/2}."""
    _need_unit(s, "C3")
    if n < 2:
        raise ValueError("n must be >= 2")
    return math.sqrt(math.pi) * math.exp(math.lgamma((n + 2 * s - 1) / 2) - math.lgamma((n + 2 * s) / 2))


def c3_quad(n: int, s: float) -> float:
    _need_unit(s, "C3")
    a = (n + 2 * s) / 2
    return 2.0 * quad(lambda t: (1 + t * t) ** -a, 0.0, np.inf, **_QUAD)[0]


def mu1(n: int, s: float, L: float = 1.0, SC: float = 1.0) -> float:
    _need_half(s, "mu1")
    _need_pos(L=L, SC=SC)
    return (1 - s) * sphere_area(n - 1) * _bracket(s, L, SC)


def mu1_quad(n: int, s: float, L: float = 1.0, SC: float = 1.0) -> float:
    _need_half(s, "mu1")
    _need_pos(L=L, SC=SC)
    return (1 - s) * sphere_area(n - 1) * _bracket_quad(s, L, SC)


def eps1(eta0: float, s: float, C1: float, C2: float) -> float:
    _need_pos(eta0=eta0, s=s, C1=C1, C2=C2)
    return (eta0 / (2 * (1 - s) * C1 * C2)) ** (1 / s)


def _mu0_from(n, s, eta0, C1, C2, C3):
    e1 = eps1(eta0, s, C1, C2)
    if not e1 < eps_upper(n):
        raise EpsOutOfRange(f"eps1 = {e1:.6g} leaves the degenerate family range (0, {eps_upper(n):.6g})")
    g = g_of(e1, n)
    return e1, g, eta0 / (2 * (1 - s) * C3) * g ** (2 * s)


def mu0(n: int, s: float, eta0: float, L: float = 1.0, SC: float = 1.0) -> float:
    _need_half(s, "mu0")
    _need_pos(eta0=eta0)
    return _mu0_from(n, s, eta0, c1(s, L, SC), c2(n, s), c3(n, s))[2]


def _tail(n, s, m0, m1):
    ratio = m0 / (2 * m1)
    C5 = 1 - ratio
    if not 0 < C5 < 1:
        raise ChainUndefined(f"mu0/(2 mu1) = {ratio:.6g} must lie in (0, 1) for C and C5")
    C = math.sqrt(C5 ** (-2 / (n + 2 * s)) - 1)
    C4 = C / 2
    e0 = math.sqrt(n / (n - 1)) * C4 ** (1 / s) * (m0 / m1) ** (1 / s)
    slack = math.sqrt(2 * n / (n - 1)) * C4 ** (1 / s) * (m0 / m1) ** (1 / s)
    return C, C5, C4, e0, slack


@dataclass(frozen=True)
class ConstantsReport:
    n: int
    s: float
    L: float
    SC: float
    eta0: float
    values: dict = field(repr=False)  # name -> {"closed_form": x, "quadrature": y}
    proof_bound: float = 0.0
    slack_ok: bool = False

    def __getitem__(self, name: str) -> float:
        return self.values[name]["closed_form"]

    def pair(self, name: str) -> tuple[float, float]:
        v = self.values[name]
        return v["closed_form"], v["quadrature"]

    def inputs(self) -> dict:
        return {"n": self.n, "s": self.s, "L": self.L, "SC": self.SC, "eta0": self.eta0}

    def to_record(self) -> dict:
        rec = {"inputs": self.inputs()}
        rec.update({k: dict(v) for k, v in self.values.items()})
        rec["proof_bound"] = self.proof_bound
        rec["eps0_below_proof_bound"] = self.slack_ok
        return rec


ORDER = ("C1", "C2", "C3", "mu1", "eps1", "g_eps1", "mu0", "C", "C5", "C4", "eps0")


def _chain(n, s, eta0, C1, C2, C3, M1):
    e1, g, m0 = _mu0_from(n, s, eta0, C1, C2, C3)
    C, C5, C4, e0, slack = _tail(n, s, m0, M1)
    vals = dict(C1=C1, C2=C2, C3=C3, mu1=M1, eps1=e1, g_eps1=g, mu0=m0, C=C, C5=C5, C4=C4, eps0=e0)
    return vals, slack


def ellipticity_threshold(n: int, s: float, L: float = 1.0, SC: float = 1.0, eta0: float = 0.1) -> ConstantsReport:
    """The full chain with closed-form and quadrature columns."""
    if n < 2:
        raise ValueError("n must be >= 2")
    _need_half(s, "C1")
    _need_pos(L=L, SC=SC, eta0=eta0)
    closed, slack = _chain(n, s, eta0, c1(s, L, SC), c2(n, s), c3(n, s), mu1(n, s, L, SC))
    quadv, _ = _chain(n, s, eta0, c1_quad(s, L, SC), c2_quad(n, s), c3_quad(n, s), mu1_quad(n, s, L, SC))
    values = {k: {"closed_form": closed[k], "quadrature": quadv[k]} for k in ORDER}
    return ConstantsReport(
        n=n, s=s, L=L, SC=SC, eta0=eta0, values=values, proof_bound=slack, slack_ok=closed["eps0"] < slack
    )


def lower_bound_constant(report: ConstantsReport) -> float:
    """C4 mu0 / (1 - s): the coefficient of eps^{-s} in the blow-up lower bound."""
    return report["C4"] * report["mu0"] / (1 - report.s)
