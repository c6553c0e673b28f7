from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from eqindex.charforms import FormMatrix, random_curvature, random_invariant_curvature
from eqindex.clifford import planar_decompose, rotation_from_half_angles
from eqindex.exterior import GQ, MultiVector, component
from eqindex.mehler import (I_HR, I_HR_by_integration, free_heat_kernel, gaussian_form_integral,
                            heat_prefactor, hermite_heat_kernel, mehler_kernel_B, mehler_kernel_R, theta_R)


def test_free_kernel_when_b_vanishes():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        x, y = rng.normal(size=n), rng.normal(size=n)
        assert abs(mehler_kernel_B(np.zeros((n, n)), x, y, 0.7) - free_heat_kernel(x, y, 0.7)) < 1e-15


def test_sinh_example():
    v = mehler_kernel_B(np.eye(1), [0.0], [0.0], 1.0)
    assert abs(v - (4 * math.pi) ** -0.5 * math.sinh(1.0) ** -0.5) < 1e-15


def test_nonpositive_time_rejected():
    with pytest.raises(ValueError):
        mehler_kernel_B(np.eye(1), [0.0], [0.0], 0.0)
    with pytest.raises(ValueError):
        mehler_kernel_R(np.zeros((2, 2)), [0.0, 0.0], [0.0, 0.0], -1.0)


def test_hermite_expansion(oracle_config):
    cfg = oracle_config["mehler_hermite"]
    g = np.linspace(*cfg["grid"][:2], int(cfg["grid"][2]))
    for t in cfg["times"]:
        H = hermite_heat_kernel(g, g, t, 1.0, cfg["modes"])
        M = np.array([[mehler_kernel_B(np.eye(1), [x], [y], t) for y in g] for x in g])
        assert np.max(np.abs(M - H)) / np.max(np.abs(H)) <= cfg["rtol"]


def test_semigroup_by_quadrature(oracle_config):
    cfg = oracle_config["semigroup"]
    z = np.linspace(-cfg["half_width"], cfg["half_width"], cfg["nodes"])
    s, t = cfg["s"], cfg["t"]
    B = np.eye(1) * 1.3
    for x, y in [(0.0, 0.0), (0.4, -0.7), (1.1, 0.9)]:
        f = np.array([mehler_kernel_B(B, [x], [v], s) * mehler_kernel_B(B, [v], [y], t) for v in z])
        lhs = np.trapezoid(f, z)
        rhs = mehler_kernel_B(B, [x], [y], s + t)
        assert abs(lhs - rhs) <= cfg["rtol"] * abs(rhs)


def test_kernel_R_zero_curvature_is_free():
    x, y = np.array([0.3, -0.2]), np.array([-0.5, 0.8])
    assert abs(mehler_kernel_R(np.zeros((2, 2)), x, y, 0.4) - free_heat_kernel(x, y, 0.4)) < 1e-15


def test_form_kernel_degree_zero_is_free():
    rng = np.random.default_rng(1)
    R = random_curvature(4, 4, rng)
    x, y = rng.normal(size=4), rng.normal(size=4)
    K = mehler_kernel_R(R, x, y, 0.6)
    assert abs(complex(K.scalar_part()) - free_heat_kernel(x, y, 0.6)) < 1e-14
    assert any(d > 0 for d in K.degrees())


def test_reversing_curvature_transposes_kernel():
    R = np.array([[0.0, 0.7], [-0.7, 0.0]])
    x, y = np.array([0.3, -0.2]), np.array([-0.5, 0.8])
    assert abs(mehler_kernel_R(-R, x, y, 0.5) - mehler_kernel_R(R, y, x, 0.5)) < 1e-15


def _crank_nicolson(cfg):
    L, h, dt, T, r = (cfg[k] for k in ("half_width", "h", "dt", "t", "r"))
    g = np.arange(-L, L + h / 2, h)
    m = len(g)
    I = sp.identity(m, format="csr")
    d1 = sp.diags([1 / 12, -2 / 3, 0, 2 / 3, -1 / 12], [-2, -1, 0, 1, 2], shape=(m, m)) / h
    d2 = sp.diags([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12], [-2, -1, 0, 1, 2], shape=(m, m)) / h ** 2
    X, Y = np.meshgrid(g, g, indexing="ij")
    Z = np.stack([X.ravel(), Y.ravel()], 1)
    R = np.array([[0.0, r], [-r, 0.0]])
    a = Z @ R.T / 4
    # -(d - a)^2 = -Laplacian + 2 a.grad - |a|^2 since div a = 0
    H = (-(sp.kron(d2, I) + sp.kron(I, d2)) + 2 * (sp.diags(a[:, 0]) @ sp.kron(d1, I)
         + sp.diags(a[:, 1]) @ sp.kron(I, d1)) - sp.diags((a ** 2).sum(1)))
    Id = sp.identity(H.shape[0])
    lu = spl.splu((Id + dt / 2 * H).tocsc())
    Bm = (Id - dt / 2 * H).tocsr()
    centre = np.array([0.5, -0.3])
    u0 = np.exp(-((Z - centre) ** 2).sum(1))
    u = u0
    for _ in range(round(T / dt)):
        u = lu.solve(Bm @ u)
    return R, Z, u0 * h * h, u


def test_kernel_R_against_crank_nicolson(oracle_config):
    cfg = oracle_config["crank_nicolson"]
    R, Z, w, u = _crank_nicolson(cfg)
    T = cfg["t"]
    inner = np.nonzero(np.all(np.abs(Z) <= cfg["inner"], axis=1))[0][::97]
    th = theta_R(R, T)
    err, scale = 0.0, 0.0
    for p in inner:
        x = Z[p]
        # the closed form carries <Q x, y>: the evolved point sits in the second slot
        theta = np.einsum("qi,ij,qj->q", Z, th.P, Z) + x @ th.P @ x - 2 * (Z @ th.Q.T @ x)
        K = th.D * np.exp(-theta / (4 * T)) * heat_prefactor(T, 2)
        assert abs(K[inner[0]] - mehler_kernel_R(R, Z[inner[0]], x, T)) < 1e-12
        err = max(err, abs(K @ w - u[p]))
        scale = max(scale, abs(u[p]))
    assert err <= cfg["rtol"] * scale


def test_gaussian_examples():
    assert abs(gaussian_form_integral(np.eye(1), 0.3) - (4 * math.pi * 0.3) ** 0.5) < 1e-14
    assert abs(gaussian_form_integral(2 * np.eye(2), 0.3) - 4 * math.pi * 0.3 / 2) < 1e-14
    with pytest.raises(ValueError):
        gaussian_form_integral(-np.eye(2), 0.3)


def _wick(N: FormMatrix, n: int, b: int) -> MultiVector:
    # int exp(-|v|^2/4t) exp(-<Nv,v>/4t) dv / (4 pi t)^{b/2} expanded in moments, E[v_i v_j] = 2t delta_ij
    def moment(idx):
        c = Fraction(1)
        for i in range(b):
            e = idx.count(i)
            if e % 2:
                return Fraction(0)
            c *= math.prod(range(e - 1, 0, -2)) if e else 1
        return c

    total = MultiVector.scalar(n, 1)
    for k in range(1, n // 2 + 1):
        acc = MultiVector.zero(n)
        for pairs in itertools.product(range(b), repeat=2 * k):
            mo = moment(list(pairs))
            if not mo:
                continue
            w = MultiVector.scalar(n, 1)
            for j in range(k):
                w = w.wedge(N.entries[pairs[2 * j]][pairs[2 * j + 1]])
            acc = acc + w.scale(GQ(mo.numerator) / mo.denominator)
        # (-1/4t)^k (2t)^k / k! = (-1/2)^k / k!
        c = Fraction(-1, 2) ** k / math.factorial(k)
        total = total + acc.scale(GQ(c.numerator) / c.denominator)
    return total


def test_gaussian_wick_oracle():
    rng = np.random.default_rng(2)
    for b, n in [(1, 4), (2, 4), (3, 4), (2, 6)]:
        R = random_curvature(b + 1, n, rng)
        # symmetric 2-form matrix with nonzero diagonal
        N = FormMatrix([[R.entries[min(i, j)][max(i, j) + 1] for j in range(b)] for i in range(b)])
        assert any(N.entries[i][i] for i in range(b))
        S = FormMatrix.identity(b, n) + N
        got = gaussian_form_integral(S, GQ(1), prefactor=False)
        assert got == _wick(N, n, b)


def test_i_hr_quarter():
    dec = planar_decompose(-np.eye(2))
    Rpp = FormMatrix.zeros(2, 2)
    for t in (0.1, 1.0, 3.0):
        assert abs(complex(I_HR(None, Rpp.to_complex(), dec, t).scalar_part()) - 0.25) < 1e-15


def test_i_hr_flat_is_inverse_determinant():
    half = [(GQ(3) / 5, GQ(4) / 5), (GQ(5) / 13, GQ(12) / 13)]
    dec = rotation_from_half_angles(half)
    Rpp = FormMatrix.zeros(4, 6, 2)
    Rp = FormMatrix.zeros(2, 6, 2)
    expected = GQ(1)
    for c, s in half:
        expected = expected / (4 * s * s)
    for t in (GQ(1), GQ(1, 0) / 3):
        got = I_HR(Rp, Rpp, dec, t, prefactor=False)
        assert got == MultiVector.scalar(6, expected, 2)


def test_i_hr_rejects_bad_data():
    with pytest.raises(ValueError):
        I_HR(None, FormMatrix.zeros(2, 2), planar_decompose(-np.eye(2)), 0.0)
    dec = rotation_from_half_angles([(GQ(3) / 5, GQ(4) / 5)])
    R = FormMatrix([[MultiVector.dx(2, 1).wedge(MultiVector.dx(2, 2)), MultiVector.zero(2)],
                    [MultiVector.zero(2), MultiVector.zero(2)]])
    with pytest.raises(ValueError):
        I_HR(None, R, dec, GQ(1))


def _pool(cfg):
    return [(GQ(c) / cd, GQ(s) / sd) for c, cd, s, sd in cfg["half_pool"]]


def test_i_hr_closed_form_equals_integration(oracle_config):
    cfg = oracle_config["i_hr"]
    pool = _pool(cfg)
    rng = np.random.default_rng(3)
    for a in range(0, 7, 2):
        for b in range(2, 7 - a, 2):
            n = a + b
            for _ in range(cfg["datasets"] if n <= 4 else 2):
                half = [pool[int(i)] for i in rng.integers(0, len(pool), size=b // 2)]
                half.sort(key=lambda p: math.atan2(float(complex(p[1]).real), float(complex(p[0]).real)))
                dec = rotation_from_half_angles(half)
                Rp = random_curvature(a, n, rng, a=a) if a else None
                Rpp = random_invariant_curvature(dec, n, rng, a=a)
                t = Fraction(int(rng.integers(1, 6)), int(rng.integers(1, 4)))
                assert I_HR(Rp, Rpp, dec, t, prefactor=False) == I_HR_by_integration(Rp, Rpp, dec, t,
                                                                                      prefactor=False)


def test_i_hr_top_degree_nonzero_somewhere():
    rng = np.random.default_rng(4)
    dec = rotation_from_half_angles([(GQ(3) / 5, GQ(4) / 5)])
    Rp = random_curvature(2, 4, rng, a=2)
    Rpp = random_invariant_curvature(dec, 4, rng, a=2)
    v = I_HR(Rp, Rpp, dec, GQ(1), prefactor=False)
    assert component(v, 4) != MultiVector.zero(4, 2) or component(v, 2) != MultiVector.zero(4, 2)
