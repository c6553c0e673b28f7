"""Mehler kernels of harmonic oscillators and the model fixed-point integral.

Two regimes share one code path wherever possible:

* scalar mode: numeric matrices, functions of t*sqrt(B) via eigendecomposition;
* form mode: :class:`FormMatrix` curvature, all analytic functions routed
  through :func:`charforms.mat_func` (no square roots are ever taken).

Functions that produce a (4 pi t)^{-k/2} factor accept ``prefactor``; with
``prefactor=False`` that transcendental factor is omitted so rational inputs
give exact results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charforms import FormMatrix, commutes_with, det_inv_sqrt, det_sqrt, mat_func
from .exterior import GQ, MultiVector, coerce, mpq, mv_exp


def _check_t(t):
    if not float(complex(t).real) > 0:
        raise ValueError(f"t must be positive, got {t}")


def heat_prefactor(t, k: int) -> float:
    """(4 pi t)^{-k/2}."""
    return float((4 * math.pi * float(complex(t).real)) ** (-k / 2))


# scalar helpers -------------------------------------------------------------------


def _z_over_sinh(z):
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    out = np.empty_like(z)
    zz = z[~small]
    out[~small] = zz / np.sinh(zz)
    zs = z[small]
    out[small] = 1 - zs ** 2 / 6 + 7 * zs ** 4 / 360
    return out


def _z_over_tanh(z):
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    out = np.empty_like(z)
    zz = z[~small]
    out[~small] = zz / np.tanh(zz)
    zs = z[small]
    out[small] = 1 + zs ** 2 / 3 - zs ** 4 / 45
    return out


def _matfun(M: np.ndarray, f):
    """f(M) for a diagonalizable numeric matrix via eigendecomposition."""
    M = np.asarray(M, dtype=complex)
    if np.allclose(M, M.conj().T):
        w, V = np.linalg.eigh(M)
        return (V * f(w)) @ V.conj().T, w
    w, V = np.linalg.eig(M)
    return (V * f(w)) @ np.linalg.inv(V), w


def _sqrt_psd(B: np.ndarray) -> np.ndarray:
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not np.allclose(B, B.T):
        raise ValueError("B must be symmetric")
    w, V = np.linalg.eigh(B)
    if w.min() < -1e-12 * max(1.0, abs(w).max()):
        raise ValueError("B must be positive semidefinite")
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


# scalar-mode kernels ----------------------------------------------------------------


def mehler_kernel_B(B, x, y, t, prefactor: bool = True):
    """Heat kernel of H_B = -Laplacian + <Bx, x>/4.

    Numeric B (symmetric PSD) returns a float; a :class:`FormMatrix` B
    (even entries, nilpotent) returns a MultiVector, evaluated as an analytic
    function of B itself.
    """
    _check_t(t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if isinstance(B, FormMatrix):
        n = B.size
        t2B = B.scale(coerce(t) * coerce(t)) if not isinstance(t, float) else B.scale(t * t)
        D = det_sqrt(mat_func(t2B, "x/sinh", even_arg=True), branch=1)
        C = mat_func(t2B, "x/tanh", even_arg=True)
        S = mat_func(t2B, "x/sinh", even_arg=True)
        theta = _quad(C, x, x) + _quad(C, y, y) - _quad(S, x, y).scale(2)
        val = D.wedge(mv_exp(theta.scale(-1 / (4 * float(t)))))
        return val.scale(heat_prefactor(t, n)) if prefactor else val
    Bm = np.atleast_2d(np.asarray(B, dtype=float))
    n = Bm.shape[0]
    if x.shape != (n,) or y.shape != (n,):
        raise ValueError("x, y must have the dimension of B")
    w, V = np.linalg.eigh(Bm)
    if w.min() < -1e-12 * max(1.0, abs(w).max()):
        raise ValueError("B must be positive semidefinite")
    z = t * np.sqrt(np.clip(w, 0, None))
    xs, ys = V.T @ x, V.T @ y
    sh = _z_over_sinh(z).real
    th = _z_over_tanh(z).real
    theta = np.sum(th * (xs ** 2 + ys ** 2) - 2 * sh * xs * ys)
    val = math.sqrt(float(np.prod(sh))) * math.exp(-theta / (4 * t))
    return val * heat_prefactor(t, n) if prefactor else val


def _quad(M: FormMatrix, u, v) -> MultiVector:
    """<M u, v> = sum_ij v_i M_ij u_j for numeric vectors u, v."""
    acc = MultiVector.zero(M.n, M.a)
    for i in range(M.size):
        for j in range(M.size):
            c = v[i] * u[j]
            if c:
                acc = acc + M.entries[i][j].scale(float(c))
    return acc


@dataclass(frozen=True)
class ThetaR:
    """Quadratic data of Theta_R(x, y, t) = <P x, x> + <P y, y> - 2 <Q x, y>.

    ``D`` is det^{1/2}((tR/2)/sinh(tR/2)).
    """

    P: object
    Q: object
    D: object


def theta_R(R, t) -> ThetaR:
    """P = (tR/2)/tanh(tR/2), Q = (tR/2)/sinh(tR/2) e^{tR/2}, D = det^{1/2}((tR/2)/sinh(tR/2))."""
    _check_t(t)
    if isinstance(R, FormMatrix):
        if not R.is_antisymmetric() or not R.is_nilpotent():
            raise ValueError("R must be antisymmetric with 2-form entries")
        half_t = coerce(t) * GQ(mpq(1, 2)) if not isinstance(t, float) else t / 2
        A = R.scale(half_t)
        S = mat_func(A, "x/sinh")
        P = mat_func(A, "x/tanh")
        Q = S @ mat_func(A, "exp")
        return ThetaR(P, Q, det_sqrt(S, branch=1))
    Rm = np.asarray(R, dtype=float)
    if not np.allclose(Rm, -Rm.T):
        raise ValueError("R must be antisymmetric")
    A = Rm * (t / 2)
    S, w = _matfun(A, _z_over_sinh)
    P, _ = _matfun(A, _z_over_tanh)
    E, _ = _matfun(A, np.exp)
    Q = S @ E
    det = np.prod(_z_over_sinh(w))
    return ThetaR(P.real, Q.real, math.sqrt(det.real))


def mehler_kernel_R(R, x, y, t, prefactor: bool = True):
    """Kernel of (H_R + d/dt)^{-1}, H_R = -sum_i (d_i - R_ij x^j / 4)^2, at t > 0.

    Numeric antisymmetric R returns a float; FormMatrix R returns a MultiVector.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    th = theta_R(R, t)
    if isinstance(R, FormMatrix):
        n = R.size
        theta = _quad(th.P, x, x) + _quad(th.P, y, y) - _quad(th.Q, x, y).scale(2)
        val = th.D.wedge(mv_exp(theta.scale(-1 / (4 * float(complex(t).real)))))
        return val.scale(heat_prefactor(t, n)) if prefactor else val
    n = len(x)
    theta = x @ th.P @ x + y @ th.P @ y - 2 * (y @ th.Q @ x)
    val = th.D * math.exp(-theta / (4 * t))
    return val * heat_prefactor(t, n) if prefactor else val


def free_heat_kernel(x, y, t) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return heat_prefactor(t, len(x)) * math.exp(-float(np.sum((x - y) ** 2)) / (4 * t))


# Gaussian integrals --------------------------------------------------------------------


def gaussian_form_integral(S, t, b: int | None = None, prefactor: bool = True):
    """int_{R^b} exp(-<S v, v>/(4t)) dv = (4 pi t)^{b/2} det^{-1/2}(S_sym)."""
    _check_t(t)
    if isinstance(S, FormMatrix):
        b = S.size if b is None else b
        if b != S.size:
            raise ValueError("fiber dimension does not match S")
        Ssym = S.sym()
        S0 = Ssym.scalar_part()
        S0f = np.vectorize(lambda z: complex(z), otypes=[complex])(S0)
        if not np.allclose(S0f.imag, 0) or np.linalg.eigvalsh(S0f.real).min() <= 0:
            raise ValueError("scalar part of S must have positive-definite symmetric part")
        val = det_inv_sqrt(Ssym)
        return val.scale(heat_prefactor(t, -b)) if prefactor else val
    Sm = np.atleast_2d(np.asarray(S, dtype=float))
    b = Sm.shape[0] if b is None else b
    Ssym = 0.5 * (Sm + Sm.T)
    w = np.linalg.eigvalsh(Ssym)
    if w.min() <= 0:
        raise ValueError("S must have positive-definite symmetric part")
    val = 1.0 / math.sqrt(float(np.prod(w)))
    return val * heat_prefactor(t, -b) if prefactor else val


# the fixed-point model integral ------------------------------------------------------


def _block_diag(Rp: FormMatrix | None, Rpp: FormMatrix) -> FormMatrix:
    if Rp is None:
        return Rpp
    a, b = Rp.size, Rpp.size
    n, sp = Rpp.n, Rpp.a
    z = MultiVector.zero(n, sp)
    rows = [list(r) + [z] * b for r in Rp.entries] + [[z] * a + list(r) for r in Rpp.entries]
    return FormMatrix(rows)


def _scalar_to_form(Phi, n: int, a: int) -> FormMatrix:
    return FormMatrix.from_scalar(Phi, n, a)


def I_HR(Rp: FormMatrix | None, Rpp: FormMatrix, dec, t, prefactor: bool = True) -> MultiVector:
    """Closed form of I_{(H_R + d/dt)^{-1}}(0, t).

    (4 pi t)^{-a/2} det^{-1/2}(1 - phi^N) det^{1/2}((tR'/2)/sinh(tR'/2))
    det^{-1/2}(1 - phi^N e^{-tR''}).  ``Rp`` may be None when a = 0.
    """
    _check_t(t)
    b = Rpp.size
    if dec.dim != b:
        raise ValueError("rotation and normal curvature sizes differ")
    if any(th <= 0 for th in dec.angles) or 2 * len(dec.angles) != b:
        raise ValueError("theta_j = 0 in the normal rotation")
    n, sp = Rpp.n, Rpp.a
    if not commutes_with(Rpp, dec.rotation()):
        raise ValueError("normal curvature must commute with phi^N")
    a = 0 if Rp is None else Rp.size
    tq = coerce(t) if not isinstance(t, float) else t
    half_t = tq * GQ(mpq(1, 2)) if isinstance(tq, GQ) else tq / 2
    dh = dec.det_half()
    out = MultiVector.scalar(n, 1 / dh, sp)
    if a:
        out = out.wedge(det_sqrt(mat_func(Rp.scale(half_t), "x/sinh"), branch=1))
    Phi = _scalar_to_form(dec.rotation(), n, sp)
    M = FormMatrix.identity(b, n, sp) - Phi @ mat_func(Rpp.scale(-tq), "exp")
    out = out.wedge(det_inv_sqrt(M, branch=1 / dh))
    return out.scale(heat_prefactor(t, a)) if prefactor and a else out


def theta_fixed_point_form(Rp: FormMatrix | None, Rpp: FormMatrix, dec, t) -> FormMatrix:
    """Matrix S with Theta_R(v, phi^N v, t) = <S v, v> on the normal fiber."""
    R = _block_diag(Rp, Rpp)
    a = 0 if Rp is None else Rp.size
    b = Rpp.size
    th = theta_R(R, t)
    n, sp = Rpp.n, Rpp.a
    idx = list(range(a, a + b))
    P = FormMatrix([[th.P.entries[i][j] for j in idx] for i in idx])
    Q = FormMatrix([[th.Q.entries[i][j] for j in idx] for i in idx])
    Phi = _scalar_to_form(dec.rotation(), n, sp)
    # <P v,v> + <P phi v, phi v> - 2 <Q v, phi v>
    return P + Phi.transpose() @ P @ Phi - (Phi.transpose() @ Q).scale(2)


def I_HR_by_integration(Rp: FormMatrix | None, Rpp: FormMatrix, dec, t, prefactor: bool = True) -> MultiVector:
    """I_{(H_R + d/dt)^{-1}}(0, t) as int_{R^b} K_R((0,v), (0,phi^N v), t) dv."""
    _check_t(t)
    R = _block_diag(Rp, Rpp)
    th = theta_R(R, t)
    n_tot = R.size
    S = theta_fixed_point_form(Rp, Rpp, dec, t)
    g = gaussian_form_integral(S, t, prefactor=False)
    val = th.D.wedge(g)
    a = n_tot - Rpp.size
    return val.scale(heat_prefactor(t, a)) if prefactor and a else val


# Hermite oracle --------------------------------------------------------------------------


def hermite_functions(x, kmax: int, omega: float = 1.0) -> np.ndarray:
    """Normalized eigenfunctions of -d^2 + omega^2 x^2, shape (kmax, len(x)).

    Stable three-term recurrence for the Hermite functions.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = math.sqrt(omega)
    u = s * x
    out = np.empty((kmax, len(x)))
    out[0] = (s / math.sqrt(math.pi)) ** 0.5 * np.exp(-u ** 2 / 2)
    if kmax > 1:
        out[1] = math.sqrt(2) * u * out[0]
    for k in range(2, kmax):
        out[k] = math.sqrt(2 / k) * u * out[k - 1] - math.sqrt((k - 1) / k) * out[k - 2]
    return out


def hermite_heat_kernel(x, y, t: float, B: float = 1.0, modes: int = 200) -> np.ndarray:
    """sum_k e^{-t E_k} psi_k(x) psi_k(y) for -d^2 + B x^2 / 4 in one dimension.

    With omega = sqrt(B)/2 the levels are E_k = omega (2k + 1).
    """
    omega = math.sqrt(B) / 2
    px = hermite_functions(x, modes, omega)
    py = hermite_functions(y, modes, omega)
    w = np.exp(-t * omega * (2 * np.arange(modes) + 1))
    return np.einsum("k,ki,kj->ij", w, px, py)
