from __future__ import annotations

import json
import math

import numpy as np
import pytest

from eqindex.charforms import FormMatrix, random_curvature, random_invariant_curvature
from eqindex.clifford import planar_decompose, rotation_from_half_angles
from eqindex.exterior import GQ, MultiVector
from eqindex.getzler import (NEG_INF, HeatParametrix, VolterraExpr, compose, composition_defect,
                             getzler_order, graded_iq, inverse_fourier, iq_coefficients, iq_expansion, kernel,
                             lichnerowicz_symbol, model_compose, model_of_dirac_squared, model_symbol,
                             parabolic_degree, parity_asymptotics, principal_leading, random_symbol, rescale,
                             spin_connection_symbol)
from eqindex.mehler import I_HR
from symbolic_oracles import hand_model

X = VolterraExpr


def test_parabolic_degree_examples():
    t = (X.xi(2, 1) * X.heat_inverse(2)).term_list()[0]
    assert parabolic_degree(t) == -1
    e = X.term(2, 1, form=[1, 2], alpha=(1, 0))
    assert getzler_order(e) == 1
    assert getzler_order(X.zero(3)) == NEG_INF


def test_spin_connection_order_one():
    R = FormMatrix.curvature(4, 4, {(1, 2, 1, 2): GQ(1), (1, 2, 3, 4): GQ(2, 0) / 3})
    for i in range(1, 5):
        assert getzler_order(spin_connection_symbol(R, i)) == 1


def test_rescale_examples():
    assert {d: e for d, e in rescale(X.const(2)).items()} == {0: X.const(2)}
    assert rescale(X.xi(2, 1)) == {1: X.xi(2, 1)}


def test_rescale_matches_literal_dilation():
    rng = np.random.default_rng(0)
    for _ in range(10):
        e = random_symbol(rng, 2, nterms=5, polynomial=bool(rng.integers(0, 2)))
        parts = rescale(e)
        x, xi, tau = rng.normal(size=2), rng.normal(size=2), float(rng.normal())
        for lam in (0.5, 2.0, 3.0):
            lit = e.evaluate(x, xi, tau, lam)
            acc = MultiVector.zero(2)
            for d, p in parts.items():
                acc = acc + p.evaluate(x, xi, tau).scale(lam ** d)
            assert (lit - acc).norm() <= 1e-9 * (1 + acc.norm())


def test_model_symbol_picks_max_degree_terms():
    rng = np.random.default_rng(1)
    for _ in range(20):
        e = random_symbol(rng, 3, nterms=6, polynomial=bool(rng.integers(0, 2)))
        degs = [t.getzler_degree for t in e.term_list()]
        top = max(degs)
        brute = X(3, {t.key: t.coeff for t in e.term_list() if t.getzler_degree == top})
        assert model_symbol(e) == brute
        assert getzler_order(e) == top


def test_compose_examples():
    assert compose(X.xi(1, 1), X.x(1, 1)) == X.x(1, 1) * X.xi(1, 1) + X.const(1, GQ(0, -1))
    rng = np.random.default_rng(2)
    q = random_symbol(rng, 2, polynomial=False)
    assert compose(X.const(2), q) == q


def test_compose_rejects_nonpolynomial_left():
    with pytest.raises(ValueError):
        compose(X.heat_inverse(2), X.const(2))


def test_compose_associative():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p, q, r = (random_symbol(rng, 2, nterms=2, maxdeg=2) for _ in range(3))
        assert compose(compose(p, q), r) == compose(p, compose(q, r))


def test_compose_with_pole_is_closed():
    rng = np.random.default_rng(4)
    p = random_symbol(rng, 2, nterms=3)
    q = random_symbol(rng, 2, nterms=3, polynomial=False)
    out = compose(p, q)
    assert all(t.gamma == 0 or t.k == 0 for t in out.term_list())


def test_xi_and_tau_derivatives_numerically():
    rng = np.random.default_rng(5)
    e = random_symbol(rng, 2, nterms=4, polynomial=False)
    x, xi, tau, h = rng.normal(size=2), np.array([0.7, -0.4]), 0.3, 1e-6
    for i in (1, 2):
        d = np.zeros(2)
        d[i - 1] = h
        fd = (e.evaluate(x, xi + d, tau) - e.evaluate(x, xi - d, tau)).scale(1 / (2 * h))
        assert (e.d_xi(i).evaluate(x, xi, tau) - fd).norm() <= 1e-6 * (1 + fd.norm())
    fd = (e.evaluate(x, xi, tau + h) - e.evaluate(x, xi, tau - h)).scale(1 / (2 * h))
    assert (e.d_tau().evaluate(x, xi, tau) - fd).norm() <= 1e-6 * (1 + fd.norm())


def test_leading_term_lemma():
    rng = np.random.default_rng(6)
    n = 2
    checked = 0
    while checked < 50:
        p = random_symbol(rng, n, nterms=3, maxdeg=1)
        if getzler_order(p) > 2 or not p:
            continue
        q = X.heat_inverse(n) + random_symbol(rng, n, nterms=2, polynomial=False, maxdeg=1)
        if getzler_order(q) != -2:
            continue
        d = composition_defect(p, q)
        assert d["defect_order"] < d["m1"] + d["m2"]
        mc = model_compose(p, q)
        if mc:
            assert getzler_order(mc) == d["m1"] + d["m2"]
            assert model_symbol(compose(p, q)) == mc
        checked += 1


def test_model_of_flat_dirac_squared():
    R = FormMatrix.zeros(2, 2)
    assert model_of_dirac_squared(R) == X.term(2, 1, beta=(2, 0)) + X.term(2, 1, beta=(0, 2)) + X.term(2, GQ(0, 1),
                                                                                                        gamma=1)


def test_model_equals_hand_expansion():
    rng = np.random.default_rng(7)
    for n in (2, 4):
        for _ in range(3):
            R = random_curvature(n, n, rng)
            M = model_of_dirac_squared(R)
            assert getzler_order(M) == 2
            assert M == hand_model(R)
            assert getzler_order(lichnerowicz_symbol(R) - M) < 2


def test_inverse_fourier_free_kernel_and_volterra():
    n = 2
    t = X.heat_inverse(n).term_list()[0]
    z = np.array([0.3, -0.4])
    v = complex(inverse_fourier(t, z, 0.7).scalar_part())
    assert abs(v - (4 * math.pi * 0.7) ** -1 * math.exp(-0.25 / 2.8)) < 1e-15
    assert inverse_fourier(t, z, -0.5) == MultiVector.zero(n)
    with pytest.raises(ValueError):
        inverse_fourier(X.xi(n, 1).term_list()[0], z, 1.0)


def test_inverse_fourier_parity():
    t = (X.xi(2, 1) * X.heat_inverse(2)).term_list()[0]
    for z in ([0.3, 0.2], [1.1, -0.7]):
        zr = [-z[0], z[1]]
        a = complex(inverse_fourier(t, z, 0.4).scalar_part())
        b = complex(inverse_fourier(t, zr, 0.4).scalar_part())
        assert abs(a + b) < 1e-15 and abs(a) > 0


def _forward_transform(term, xi: float, tau: float) -> complex:
    # int_0^inf int_{R^2} e^{-i(z.xi + t tau)} f(z, t) dz dt with xi = (xi, 0):
    # Gauss-Hermite in z scaled to width sqrt(t), Gauss-Legendre in s = sqrt(t)
    u1, w1 = np.polynomial.hermite.hermgauss(80)
    u2, w2 = np.polynomial.hermite.hermgauss(8)
    s_nodes, s_w = np.polynomial.legendre.leggauss(120)
    smax = 4.0  # e^{-t xi^2} is below 1e-11 past t = 16
    total = 0j
    for s, ws in zip(0.5 * smax * (s_nodes + 1), 0.5 * smax * s_w):
        t = s * s
        c = 2 * math.sqrt(t)
        acc = 0j
        for a, wa in zip(u1, w1):
            for b, wb in zip(u2, w2):
                z = (c * a, c * b)
                f = complex(inverse_fourier(term, z, t).scalar_part())
                acc += wa * wb * math.exp(a * a + b * b) * f * np.exp(-1j * z[0] * xi)
        total += ws * 2 * s * c * c * acc * np.exp(-1j * t * tau)
    return total


@pytest.mark.parametrize("beta,k", [(0, 1), (1, 1), (0, 2), (2, 2)])
def test_inverse_fourier_by_numeric_quadrature(beta, k):
    term = X.term(2, 1, beta=(beta, 0), k=k).term_list()[0]
    xi, tau = 1.3, 0.7
    expected = xi ** beta / (xi * xi + 1j * tau) ** k
    assert abs(_forward_transform(term, xi, tau) - expected) < 1e-7


def test_inverse_fourier_homogeneity():
    rng = np.random.default_rng(8)
    n = 2
    for _ in range(10):
        e = random_symbol(rng, n, nterms=1, polynomial=False).filter(lambda t: not any(t.alpha))
        if not e:
            continue
        t = e.term_list()[0]
        m = t.parabolic_degree
        z, s = rng.normal(size=n), float(rng.uniform(0.2, 1.5))
        for lam in (0.5, 2.0):
            lhs = inverse_fourier(t, lam * z, lam * lam * s)
            rhs = inverse_fourier(t, z, s).scale(lam ** (-(n + 2) - m))
            assert (lhs - rhs).norm() <= 1e-12 * (1 + rhs.norm())


def test_kernel_is_sum_of_term_transforms():
    rng = np.random.default_rng(9)
    e1 = random_symbol(rng, 2, polynomial=False)
    e2 = random_symbol(rng, 2, polynomial=False)
    z, x = np.array([0.2, 0.5]), np.array([0.4, -0.3])
    lhs = kernel(e1 + e2, z, 0.6, x)
    rhs = kernel(e1, z, 0.6, x) + kernel(e2, z, 0.6, x)
    assert (lhs - rhs).norm() < 1e-13


def test_iq_free_heat_leading():
    dec = rotation_from_half_angles([(GQ(3) / 5, GQ(4) / 5)])
    c = iq_coefficients(X.heat_inverse(2), dec, 0)
    assert c[0] == MultiVector.scalar(2, GQ(25) / 64)


def test_iq_rejects_fixed_directions():
    with pytest.raises(ValueError):
        iq_expansion(X.heat_inverse(2), planar_decompose(np.eye(2)), 0)


def _exact_dec(rng, b):
    pool = [(GQ(3) / 5, GQ(4) / 5), (GQ(5) / 13, GQ(12) / 13), (GQ(0), GQ(1)), (GQ(4) / 5, GQ(3) / 5)]
    half = [pool[int(i)] for i in rng.integers(0, len(pool), size=b // 2)]
    half.sort(key=lambda p: math.atan2(float(complex(p[1]).real), float(complex(p[0]).real)))
    return rotation_from_half_angles(half)


def test_iq_no_half_integer_powers():
    rng = np.random.default_rng(10)
    odd_seen = 0
    for _ in range(40):
        n = 4
        a = int(rng.choice([0, 2]))
        dec = _exact_dec(rng, n - a)
        q = random_symbol(rng, n, nterms=4, polynomial=False, maxdeg=2)
        for t in q.term_list():
            if t.k and (sum(t.alpha[a:]) + sum(t.beta)) % 2 and not any(t.alpha[:a]):
                odd_seen += 1
                single = X(n, {t.key: t.coeff})
                assert iq_expansion(single, dec, a, prefactor=False) == {}
        for p in iq_expansion(q, dec, a, prefactor=False):
            assert p.denominator == 1
    assert odd_seen > 10


def test_iq_leading_depends_on_principal_symbol():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 15:
        n, a = 4, 2
        dec = _exact_dec(rng, n - a)
        q = random_symbol(rng, n, nterms=4, polynomial=False, maxdeg=2)
        if q.parabolic_order() % 2:
            continue
        c = iq_coefficients(q, dec, a, prefactor=False)
        assert c[0] == principal_leading(q, dec, a, prefactor=False)
        checked += 1


def test_parity_heat_parametrix():
    dec = planar_decompose(-np.eye(2))
    rows = parity_asymptotics(HeatParametrix(None, FormMatrix.zeros(2, 2).to_complex()), 0, dec)
    assert rows[0]["parity"] == "even" and rows[0]["power"] == 0
    assert abs(complex(rows[0]["coefficient"].scalar_part()) - 0.25) < 1e-15
    assert rows[1]["parity"] == "odd" and rows[1]["coefficient"] is None


def test_parity_heat_parametrix_curved():
    rng = np.random.default_rng(12)
    dec = _exact_dec(rng, 2)
    Rp = random_curvature(2, 4, rng, a=2)
    Rpp = random_invariant_curvature(dec, 4, rng, a=2)
    rows = parity_asymptotics(HeatParametrix(Rp, Rpp), 2, dec)
    model = I_HR(Rp, Rpp, dec, 1)
    assert rows[2]["power"] == 0 and rows[2]["remainder"] == 1
    assert (rows[2]["coefficient"] - model.component(2)).norm() < 1e-14
    assert [r["parity"] for r in rows] == ["even", "odd", "even", "odd", "even"]


def test_parity_lemma_on_random_symbols():
    rng = np.random.default_rng(13)
    for _ in range(30):
        n = 4
        a = int(rng.choice([0, 2]))
        dec = _exact_dec(rng, n - a)
        q = random_symbol(rng, n, nterms=4, polynomial=False, maxdeg=2)
        m = getzler_order(q)
        rows = parity_asymptotics(q, a, dec)
        g = graded_iq(q, dec, a)
        for (j, p) in g:
            r = rows[j]
            floor = r["bound"] if r["parity"] == "odd" else r["power"]
            assert p >= floor
        for r in rows:
            if r["parity"] == "even":
                got = g.get((r["degree"], r["power"]), MultiVector.zero(n, a))
                assert (got - r["coefficient"]).norm() < 1e-12
        assert any(r["parity"] == "odd" for r in rows) or m == NEG_INF


def test_getzler_order_bound_for_differential_symbols():
    rng = np.random.default_rng(14)
    for _ in range(40):
        n = int(rng.choice([2, 4]))
        p = random_symbol(rng, n, nterms=3)
        q = random_symbol(rng, n, nterms=3)
        for e in (p, compose(p, q)):
            if e:
                assert getzler_order(e) <= e.parabolic_order() + n


def test_json_roundtrip():
    rng = np.random.default_rng(15)
    e = random_symbol(rng, 3, nterms=5, polynomial=False)
    assert X.from_json(json.loads(json.dumps(e.to_json()))) == e


def test_malformed_term_rejected():
    with pytest.raises(ValueError):
        X(2, {(0, (0,), (0, 0), 0, 0): 1})
