import math

import mpmath as mp
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frachessian import constants as K
from frachessian.errors import ChainUndefined, EpsOutOfRange, SOutOfRange
from frachessian.infimum import g_of

mp.mp.dps = 30
GRID = [(n, s) for n in (2, 3, 4) for s in (0.6, 0.75, 0.9)]


def mp_bracket(s, L, SC):
    s = mp.mpf(s)
    t0 = mp.mpf(2 * L) / SC
    # t = e^w: the slowly decaying tail becomes exponential in w
    f = lambda w: min(2 * L * mp.e**w, SC * mp.e ** (2 * w)) * mp.e ** (-2 * s * w)
    return mp.quad(f, [-mp.inf, mp.log(t0), mp.inf])


def mp_c2(n, s):
    a = (n + 2 * mp.mpf(s)) / 2
    area = 2 * mp.pi ** (mp.mpf(n - 1) / 2) / mp.gamma(mp.mpf(n - 1) / 2)
    return area * mp.quad(lambda r: r ** (n - 2) * (1 + r * r) ** -a, [0, 1, mp.inf])


def mp_c3(n, s):
    a = (n + 2 * mp.mpf(s)) / 2
    return 2 * mp.quad(lambda t: (1 + t * t) ** -a, [0, 1, mp.inf])


def test_spot_values():
    assert K.c1(0.75) == pytest.approx(8 * math.sqrt(2), rel=1e-14)
    assert K.c2(3, 0.75) == pytest.approx(math.pi / 1.25, rel=1e-14)


@pytest.mark.parametrize("n,s", GRID)
def test_base_constants_against_mpmath(n, s):
    assert K.c1(s) == pytest.approx(float(2 * mp_bracket(s, 1, 1)), rel=1e-12)
    assert K.c2(n, s) == pytest.approx(float(mp_c2(n, s)), rel=1e-12)
    assert K.c3(n, s) == pytest.approx(float(mp_c3(n, s)), rel=1e-12)
    area = 2 * math.pi ** ((n - 1) / 2) / math.gamma((n - 1) / 2)
    assert K.mu1(n, s) == pytest.approx((1 - s) * area * float(mp_bracket(s, 1, 1)), rel=1e-12)


@pytest.mark.parametrize("n,s", GRID)
def test_closed_form_and_quadrature_agree(n, s):
    for a, b in [(K.c1(s), K.c1_quad(s)), (K.c2(n, s), K.c2_quad(n, s)), (K.c3(n, s), K.c3_quad(n, s)),
                 (K.mu1(n, s), K.mu1_quad(n, s))]:
        assert a == pytest.approx(b, rel=1e-8)


@given(st.floats(0.55, 0.95), st.floats(0.2, 5), st.floats(0.2, 5))
@settings(max_examples=40, deadline=None)
def test_bracket_with_general_constants(s, L, SC):
    assert K.c1(s, L, SC) == pytest.approx(K.c1_quad(s, L, SC), rel=1e-9)


def test_n2_identity():
    for s in (0.6, 0.8):
        assert K.mu1(2, s) == pytest.approx((1 - s) * K.c1(s), rel=1e-14)


def test_chain_formulas():
    n, s, eta0 = 3, 0.75, 0.1
    rep = K.ellipticity_threshold(n, s, 1, 1, eta0)
    e1 = (eta0 / (2 * (1 - s) * rep["C1"] * rep["C2"])) ** (1 / s)
    assert rep["eps1"] == pytest.approx(e1, rel=1e-14)
    assert rep["g_eps1"] == pytest.approx(g_of(e1, n), rel=1e-14)
    m0 = eta0 / (2 * (1 - s) * rep["C3"]) * g_of(e1, n) ** (2 * s)
    assert rep["mu0"] == pytest.approx(m0, rel=1e-14)
    C5 = 1 - m0 / (2 * rep["mu1"])
    assert rep["C5"] == pytest.approx(C5, rel=1e-14)
    assert rep["C"] == pytest.approx(math.sqrt(C5 ** (-2 / (n + 2 * s)) - 1), rel=1e-13)
    assert rep["C4"] == pytest.approx(rep["C"] / 2)
    e0 = math.sqrt(n / (n - 1)) * rep["C4"] ** (1 / s) * (m0 / rep["mu1"]) ** (1 / s)
    assert rep["eps0"] == pytest.approx(e0, rel=1e-13)
    assert rep.slack_ok
    for name in K.ORDER:
        a, b = rep.pair(name)
        assert a == pytest.approx(b, rel=1e-8)
    rec = rep.to_record()
    assert rec["inputs"]["eta0"] == eta0 and set(K.ORDER) <= set(rec)


def test_lower_bound_constant():
    rep = K.ellipticity_threshold(3, 0.75, 1, 1, 1.0)
    assert K.lower_bound_constant(rep) == pytest.approx(rep["C4"] * rep["mu0"] / 0.25)


def test_range_errors():
    with pytest.raises(SOutOfRange, match=r"s must lie in \(1/2,1\) for C1"):
        K.ellipticity_threshold(3, 0.4)
    with pytest.raises(SOutOfRange):
        K.c2(3, 1.2)
    with pytest.raises(ValueError):
        K.c1(0.75, L=0.0)
    with pytest.raises(ValueError):
        K.ellipticity_threshold(1, 0.75)
    with pytest.raises(EpsOutOfRange):
        K.ellipticity_threshold(3, 0.75, eta0=20.0)
    with pytest.raises(ChainUndefined):
        K._tail(3, 0.75, 2.0, 1.0)
