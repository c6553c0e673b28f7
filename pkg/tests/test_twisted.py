from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from eqindex.twisted import (FiniteTriple, Idempotent, algebra_basis, bimodule_residual, conformal_deform,
                             dimension_index, hochschild_b, index_pair, odd_operator, pair_with_idempotent,
                             random_element, random_selfadjoint_element, random_triple, scaling_twist,
                             sigma_connection_index, sigma_derivation_residual, standard_grading, triple_from_json,
                             triple_to_json, twisted_cocycle, twisted_commutator, twisted_index)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def spectral_projection(h: np.ndarray, rank: int | None = None) -> np.ndarray:
    w, V = np.linalg.eigh(h)
    idx = np.argsort(w)[::-1][:rank] if rank is not None else np.nonzero(w > 0)[0]
    return V[:, idx] @ V[:, idx].conj().T


def rank_split(T: FiniteTriple, e: np.ndarray) -> int:
    g = T.gamma
    return int(round(np.trace(e @ (np.eye(len(g)) + g) / 2).real)) - int(round(np.trace(e @ (np.eye(len(g)) - g) / 2).real))


@pytest.fixture
def triple():
    return random_triple(np.random.default_rng(0))


def test_scalar_commutator_vanishes(triple):
    assert np.abs(twisted_commutator(triple, 3.0 * np.eye(triple.dim))).max() < 1e-14


def test_commutator_is_odd(triple):
    a = random_element(triple, np.random.default_rng(1))
    c = twisted_commutator(triple, a)
    assert np.abs(triple.gamma @ c + c @ triple.gamma).max() < 1e-12


def test_element_outside_algebra_rejected():
    rng = np.random.default_rng(2)
    gens = [np.diag(rng.normal(size=4)).astype(complex)]
    D = odd_operator(np.eye(2))
    T = FiniteTriple(D, standard_grading(2, 2), algebra_basis(gens))
    with pytest.raises(ValueError):
        twisted_commutator(T, np.ones((4, 4)) * np.kron(np.eye(2), np.ones((2, 2))))


def test_conformal_identity(triple):
    rng = np.random.default_rng(3)
    for _ in range(10):
        h = random_selfadjoint_element(triple, rng)
        Th = conformal_deform(triple, h)
        a = random_element(triple, rng)
        k = expm(-h / 2)
        half = expm(-h / 2) @ a @ expm(h / 2)
        rhs = k @ twisted_commutator(triple, half) @ k
        assert np.abs(twisted_commutator(Th, a) - rhs).max() < 1e-12


def test_conformal_trivial_cases(triple):
    T0 = conformal_deform(triple, np.zeros((triple.dim, triple.dim)))
    assert np.abs(T0.D - triple.D).max() < 1e-14
    c = 0.4
    Tc = conformal_deform(triple, c * np.eye(triple.dim))
    assert np.abs(Tc.D - math.exp(-c) * triple.D).max() < 1e-14
    a = random_element(triple, np.random.default_rng(4))
    assert np.abs(Tc.sigma(a) - a).max() < 1e-14
    with pytest.raises(ValueError):
        conformal_deform(triple, 1j * np.eye(triple.dim))


def test_deformed_twist_is_star_automorphism(triple):
    rng = np.random.default_rng(5)
    Th = conformal_deform(triple, random_selfadjoint_element(triple, rng))
    for _ in range(10):
        a, b = random_element(triple, rng), random_element(triple, rng)
        s = Th.sigma
        assert np.abs(s(a @ b) - s(a) @ s(b)).max() < 1e-12
        # sigma_h(a^*)^* = e^{h} a e^{-h} = sigma_h^{-1}(a), the *-compatibility of a selfadjoint inner twist
        assert np.abs(s(a.conj().T).conj().T - expm(Th.sigma.h) @ a @ expm(-Th.sigma.h)).max() < 1e-12


def _scaling_example(lam: float):
    D = odd_operator(1.7 * np.eye(2))
    g = standard_grading(2, 2)
    P = np.array([[0, 1], [1, 0]], dtype=complex)
    V = np.kron(np.eye(2), P)
    gens = [np.diag([1.0, 2.0, -1.0, 3.0]).astype(complex)]
    T = FiniteTriple(D, g, algebra_basis(gens))
    return T, math.sqrt(lam) * V


def test_scaling_identity_is_untwisted(triple):
    assert scaling_twist(triple, np.eye(triple.dim), 1.0) is triple


@pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
def test_scaling_constructed_example(lam):
    T, U = _scaling_example(lam)
    assert np.abs(U @ T.D @ U.conj().T - lam * T.D).max() < 1e-14
    Ts = scaling_twist(T, U, lam)
    assert not Ts.closed
    for b in T.basis:
        lhs = twisted_commutator(Ts, b @ U)
        rhs = (T.D @ b - T.sigma(b) @ T.D / lam) @ U
        assert np.abs(lhs - rhs).max() < 1e-12
        assert np.abs(Ts.sigma(b @ U) - b @ U / lam).max() < 1e-12


def test_scaling_errors():
    T, U = _scaling_example(2.0)
    with pytest.raises(ValueError):
        scaling_twist(T, U, 3.0)
    with pytest.raises(ValueError):
        scaling_twist(T, U, -1.0)


def test_index_of_identity_vanishes(triple):
    e = Idempotent(np.eye(triple.dim, dtype=complex), 1)
    assert twisted_index(triple, e) == 0
    assert pair_with_idempotent(triple, e, 0) == pytest.approx(0, abs=1e-12)


def test_plus_minus_indices_are_opposite(triple):
    rng = np.random.default_rng(6)
    for _ in range(10):
        e = spectral_projection(random_selfadjoint_element(triple, rng))
        ip, im = index_pair(triple, Idempotent(e, 1))
        assert ip == -im


def test_index_routes_agree_and_count_ranks(triple):
    rng = np.random.default_rng(7)
    for deform in (False, True):
        T = conformal_deform(triple, random_selfadjoint_element(triple, rng)) if deform else triple
        for r in (1, 2, 3, 5):
            e = Idempotent(spectral_projection(random_selfadjoint_element(triple, rng), r), 1)
            ind = twisted_index(T, e)
            assert ind == dimension_index(T, e)
            assert ind == rank_split(T, e.e)


def test_sigma_connection_perturbation_invariance(triple):
    rng = np.random.default_rng(8)
    T = conformal_deform(triple, random_selfadjoint_element(triple, rng))
    e = Idempotent(spectral_projection(random_selfadjoint_element(triple, rng), 3), 1)
    base = sigma_connection_index(T, e)
    assert base == twisted_index(T, e)
    for _ in range(5):
        B = odd_operator(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        assert sigma_connection_index(T, e, 0.3 * B) == base
    with pytest.raises(ValueError):
        sigma_connection_index(T, e, np.eye(T.dim))
    zero = Idempotent(np.zeros((T.dim, T.dim), dtype=complex), 1)
    assert sigma_connection_index(T, zero) == 0


def test_cocycle_of_units_vanishes(triple):
    one = np.eye(triple.dim, dtype=complex)
    for k in (0, 1, 2):
        assert abs(twisted_cocycle(triple, k, [one] * (2 * k + 1))) < 1e-12


def test_cocycle_needs_invertible_d():
    D = odd_operator(np.diag([1.0, 0.0]))
    T = FiniteTriple(D, standard_grading(2, 2))
    with pytest.raises(ValueError):
        twisted_cocycle(T, 0, [np.eye(4)])


@pytest.mark.parametrize("k", [0, 1, 2])
def test_cocycle_cyclic_and_closed(triple, k):
    rng = np.random.default_rng(9 + k)
    T = conformal_deform(triple, random_selfadjoint_element(triple, rng))
    for _ in range(5):
        args = [random_element(triple, rng) for _ in range(2 * k + 2)]
        v = twisted_cocycle(T, k, args[:-1])
        w = twisted_cocycle(T, k, [args[2 * k]] + args[:2 * k])
        assert abs(v - w) <= 1e-10 * max(1.0, abs(v))
        assert abs(hochschild_b(T, k, args)) <= 1e-10 * max(1.0, abs(v))


@pytest.mark.parametrize("k", [0, 1, 2])
def test_conformal_invariance_of_cocycle(triple, k):
    rng = np.random.default_rng(20 + k)
    h = random_selfadjoint_element(triple, rng)
    Th = conformal_deform(triple, h)
    args = [random_element(triple, rng) for _ in range(2 * k + 1)]
    moved = [expm(-h / 2) @ a @ expm(h / 2) for a in args]
    lhs = twisted_cocycle(Th, k, args)
    rhs = twisted_cocycle(triple, k, moved)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


@pytest.mark.parametrize("k", [0, 1, 2])
def test_pairing_matches_index(triple, k):
    rng = np.random.default_rng(30 + k)
    for deform in (False, True):
        T = conformal_deform(triple, random_selfadjoint_element(triple, rng)) if deform else triple
        e = Idempotent(spectral_projection(random_selfadjoint_element(triple, rng), 2), 1)
        assert abs(pair_with_idempotent(T, e, k) - twisted_index(T, e)) < 1e-9


def test_pairing_additive(triple):
    rng = np.random.default_rng(40)
    e1 = spectral_projection(random_selfadjoint_element(triple, rng), 1)
    e2 = spectral_projection(random_selfadjoint_element(triple, rng), 3)
    d = triple.dim
    big = np.zeros((2 * d, 2 * d), dtype=complex)
    big[:d, :d], big[d:, d:] = e1, e2
    for k in (0, 1):
        s = pair_with_idempotent(triple, Idempotent(e1, 1), k) + pair_with_idempotent(triple, Idempotent(e2, 1), k)
        assert abs(pair_with_idempotent(triple, Idempotent(big, 2), k) - s) < 1e-9


def test_pairing_rejects_non_selfadjoint(triple):
    d = triple.dim
    skew = np.diag(np.r_[1.0, np.zeros(d - 1)]).astype(complex)
    skew[0, 1] = 2.0
    with pytest.raises(ValueError):
        pair_with_idempotent(triple, Idempotent(skew, 1), 0)


def test_derivation_and_bimodule_laws(triple):
    rng = np.random.default_rng(50)
    T = conformal_deform(triple, random_selfadjoint_element(triple, rng))
    for _ in range(10):
        a, b, c, d = (random_element(triple, rng) for _ in range(4))
        assert sigma_derivation_residual(T, a, b) < 1e-12
        assert bimodule_residual(T, a, b, c, d) < 1e-12


def test_json_roundtrip():
    rng = np.random.default_rng(60)
    gens = [np.diag(rng.normal(size=4)).astype(complex)]
    T = FiniteTriple(odd_operator(rng.normal(size=(2, 2)) + 0j), standard_grading(2, 2), algebra_basis(gens))
    h = np.diag([0.1, -0.2, 0.3, 0.0]).astype(complex)
    d = json.loads(json.dumps(triple_to_json(T, gens, h)))
    back = triple_from_json(d)
    assert np.abs(back.D - conformal_deform(T, h).D).max() < 1e-15
    with pytest.raises(ValueError, match="missing key 'gamma'"):
        triple_from_json({"D": d["D"], "generators": []})
    with pytest.raises(ValueError, match=r"generators\[0\]"):
        triple_from_json({**d, "generators": [[[1, 2, 3]]]})


def test_fixture_triple():
    d = json.loads((FIXTURES / "triple.json").read_text())
    T = triple_from_json(d)
    w, V = np.linalg.eigh(T.D)
    assert T.dim == 8 and np.min(np.abs(w)) > 1e-6
