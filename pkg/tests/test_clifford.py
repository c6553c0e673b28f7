from __future__ import annotations

import math

import numpy as np
import pytest

from eqindex.clifford import (SpinorEnd, build_rep, equivariant_supertrace_identity, lift_rotation,
                              planar_decompose, quantize, random_endomorphism, random_rotation, supertrace,
                              supertrace_via_symbol, symbol)
from eqindex.exterior import GQ, MultiVector, component_kl, wedge


def rot(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def random_exact_mv(rng, n, a=None, support=None):
    terms = {}
    for m in range(1 << n):
        if support is not None and m & ~support:
            continue
        if rng.random() < 0.5:
            terms[m] = GQ(int(rng.integers(-5, 6)), int(rng.integers(-5, 6))) / int(rng.integers(1, 4))
    return MultiVector(n, terms, a)


def test_generators_n2():
    rep = build_rep(2)
    c1 = rep.c([1, 0]).to_complex().mat
    assert np.allclose(c1 @ c1, -np.eye(2))
    assert np.allclose(c1, 1j * np.array([[0, 1], [1, 0]]))


def test_chirality_n2_is_sigma3():
    assert np.allclose(build_rep(2).gamma, np.diag([1, -1]))


def test_chirality_anticommutes():
    for n in (2, 4, 6):
        rep = build_rep(n)
        g = rep.gamma
        assert np.allclose(g @ g, np.eye(rep.dim))
        for c in rep.gens:
            assert np.allclose(g @ c @ g, -c)


def test_n4_products_traceless():
    rep = build_rep(4)
    for i in range(4):
        for j in range(i + 1, 4):
            assert abs(np.trace(rep.gens[i] @ rep.gens[j])) < 1e-14


def test_odd_dimension_rejected():
    with pytest.raises(ValueError):
        build_rep(3)


def test_quantize_monomials():
    rep = build_rep(2)
    assert quantize(MultiVector.scalar(2)) == rep.identity(exact=True)
    c12 = quantize(MultiVector.monomial(2, [1, 2]), exact=False).mat
    assert np.allclose(c12, rep.gens[0] @ rep.gens[1])


def test_symbol_examples():
    rep = build_rep(2)
    assert symbol(rep.identity(exact=True)) == MultiVector.scalar(2)
    c12 = SpinorEnd(2, rep.gens[0] @ rep.gens[1])
    assert symbol(c12).allclose(MultiVector.monomial(2, [1, 2]))
    s3 = SpinorEnd(2, np.diag([1.0 + 0j, -1.0]))
    assert symbol(s3).allclose(MultiVector.monomial(2, [1, 2], 1j))


def test_symbol_quantize_roundtrip_exact():
    rng = np.random.default_rng(0)
    for i in range(50):
        n = (2, 4)[i % 2]
        u = random_exact_mv(rng, n)
        A = quantize(u, exact=True)
        assert A.exact
        assert symbol(A) == u
        assert quantize(symbol(A), exact=True) == A


def test_supertrace_examples():
    rep = build_rep(2)
    assert supertrace(rep.identity(exact=True)) == 0
    c12 = quantize(MultiVector.monomial(2, [1, 2]), exact=True)
    assert complex(supertrace(c12)) == -2j


def test_supertrace_via_symbol_random():
    rng = np.random.default_rng(1)
    for n in (2, 4, 6):
        for _ in range(10):
            u = random_exact_mv(rng, n)
            A = quantize(u, exact=True)
            top = u.coeff(range(1, n + 1))
            assert supertrace(A) == GQ(0, -2) ** (n // 2) * top
            assert supertrace(A) == supertrace_via_symbol(A)


def test_filtered_product_property():
    rng = np.random.default_rng(2)
    n, a = 4, 2
    checked = 0
    while checked < 20:
        k1, l1, k2, l2 = (int(v) for v in rng.integers(0, 3, size=4))
        if k1 + k2 > a or l1 + l2 > n - a:
            continue
        checked += 1
        w1 = component_kl(random_exact_mv(rng, n, a), k1, l1)
        w2 = component_kl(random_exact_mv(rng, n, a), k2, l2)
        prod = symbol(quantize(w1, exact=True) @ quantize(w2, exact=True), a)
        assert component_kl(prod, k1 + k2, l1 + l2) == wedge(w1, w2)


def test_planar_decompose_examples():
    assert np.allclose(planar_decompose(rot(math.pi / 2)).angles, [math.pi / 2])
    assert np.allclose(planar_decompose(-np.eye(2)).angles, [math.pi])
    O = np.zeros((4, 4))
    O[:2, :2] = rot(math.pi / 3)
    O[2:, 2:] = rot(math.pi / 5)
    assert np.allclose(planar_decompose(O).angles, [math.pi / 5, math.pi / 3])


def test_planar_decompose_reassembles():
    rng = np.random.default_rng(3)
    for b in (2, 3, 4, 6):
        O = random_rotation(b, rng)
        dec = planar_decompose(O)
        assert np.abs(dec.rotation() - O).max() < 1e-12
        assert all(0 < t <= math.pi for t in dec.angles)


def test_planar_decompose_errors():
    with pytest.raises(ValueError):
        planar_decompose(np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        planar_decompose(np.diag([1.0, -1.0]))


def test_lift_identity_and_pi():
    dec = planar_decompose(-np.eye(2))
    L = lift_rotation(dec)
    assert abs(complex(supertrace(L)) - (-2j)) < 1e-14
    dec0 = planar_decompose(np.eye(2))
    assert np.allclose(lift_rotation(dec0, 2).to_complex().mat, np.eye(2))


def test_lift_unitary_and_covariant():
    rng = np.random.default_rng(4)
    for n in (2, 4, 6):
        rep = build_rep(n)
        O = random_rotation(n, rng)
        dec = planar_decompose(O)
        L = lift_rotation(dec, n).to_complex().mat
        assert np.abs(L @ L.conj().T - np.eye(rep.dim)).max() < 1e-12
        Li = L.conj().T
        for _ in range(3):
            v = rng.normal(size=n)
            lhs = L @ rep.c(v).to_complex().mat @ Li
            rhs = rep.c(O @ v).to_complex().mat
            assert np.abs(lhs - rhs).max() < 1e-12


def test_identity_examples():
    rep = build_rep(2)
    dec = planar_decompose(-np.eye(2))
    lhs, rhs = equivariant_supertrace_identity(rep.identity(exact=False), dec, 0)
    assert abs(complex(lhs) + 2j) < 1e-14 and abs(complex(rhs) + 2j) < 1e-14
    dec0 = planar_decompose(np.zeros((0, 0)))
    lhs, rhs = equivariant_supertrace_identity(rep.identity(exact=False), dec0, 2)
    assert complex(lhs) == 0 and complex(rhs) == 0


def test_identity_tangential_endomorphisms():
    rng = np.random.default_rng(5)
    for n in (2, 4):
        for b in range(2, n + 1, 2):
            for _ in range(50):
                dec = planar_decompose(random_rotation(b, rng))
                v = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
                u = MultiVector.from_array(n, v).restrict((1 << (n - b)) - 1)
                lhs, rhs = equivariant_supertrace_identity(quantize(u, exact=False), dec, n - b)
                assert abs(complex(lhs) - complex(rhs)) <= 1e-10 * (1 + abs(complex(rhs)))


def test_identity_fails_off_the_tangential_algebra():
    # A = c(dx1)c(dx2) at a = 0: Str[phi^S A] = -2i cos(theta/2) while the Berezin side is 0
    theta = 2.0
    dec = planar_decompose(rot(theta))
    A = quantize(MultiVector.monomial(2, [1, 2]), exact=False)
    lhs, rhs = equivariant_supertrace_identity(A, dec, 0)
    assert abs(complex(lhs) - (-2j * math.cos(theta / 2))) < 1e-14
    assert complex(rhs) == 0


def test_identity_at_minus_identity_general_a():
    rng = np.random.default_rng(6)
    for _ in range(20):
        A = random_endomorphism(4, rng)
        dec = planar_decompose(-np.eye(4))
        lhs, rhs = equivariant_supertrace_identity(A, dec, 0)
        assert abs(complex(lhs) - complex(rhs)) <= 1e-10 * (1 + abs(complex(rhs)))
