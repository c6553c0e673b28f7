"""Spectral brute-force oracles on flat T^2 = R^2 / 2 pi Z^2 and the round S^2.

Torus conventions: spinors are C^2-valued with gamma = sigma_3 and
c(dx^j) = i sigma_j, so D = i sigma_j d_j acts on e^{i k.x} as -(k . sigma).
The spin structure delta in {0,1}^2 shifts momenta to k in Z^2 + delta/2.
Truncation keeps |k_i| <= cutoff/2, i.e. about ``cutoff`` momenta per axis.
Basis layout is spin-major: index = s * N + mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import LinearOperator, eigsh

from .charforms import FormMatrix
from .clifford import lift_rotation, planar_decompose
from .density import FixedComponent, local_density

SIGMA = [np.array([[0, 1], [1, 0]], dtype=complex),
         np.array([[0, -1j], [1j, 0]], dtype=complex),
         np.array([[1, 0], [0, -1]], dtype=complex)]
C1C2 = (1j * SIGMA[0]) @ (1j * SIGMA[1])


# trigonometric polynomials ------------------------------------------------------------------


@dataclass(frozen=True)
class TrigPoly:
    """f(x) = sum_m c_m e^{i m.x} with integer frequency pairs m."""

    coeffs: tuple  # ((m1, m2), c) pairs

    @classmethod
    def from_dict(cls, d: dict) -> "TrigPoly":
        return cls(tuple(sorted((tuple(int(v) for v in m), complex(c)) for m, c in d.items() if c != 0)))

    @classmethod
    def const(cls, c) -> "TrigPoly":
        return cls.from_dict({(0, 0): c})

    @classmethod
    def cos(cls, m, amp=1.0) -> "TrigPoly":
        m = tuple(m)
        return cls.from_dict({m: amp / 2, (-m[0], -m[1]): amp / 2})

    @classmethod
    def sin(cls, m, amp=1.0) -> "TrigPoly":
        m = tuple(m)
        return cls.from_dict({m: amp / 2j, (-m[0], -m[1]): -amp / 2j})

    def __add__(self, other: "TrigPoly") -> "TrigPoly":
        d = dict(self.coeffs)
        for m, c in other.coeffs:
            d[m] = d.get(m, 0) + c
        return TrigPoly.from_dict(d)

    def __mul__(self, other):
        if not isinstance(other, TrigPoly):
            return TrigPoly.from_dict({m: c * other for m, c in self.coeffs})
        d: dict = {}
        for m1, c1 in self.coeffs:
            for m2, c2 in other.coeffs:
                m = (m1[0] + m2[0], m1[1] + m2[1])
                d[m] = d.get(m, 0) + c1 * c2
        return TrigPoly.from_dict(d)

    __rmul__ = __mul__

    @property
    def bandwidth(self) -> int:
        return max((max(abs(m[0]), abs(m[1])) for m, _ in self.coeffs), default=0)

    def value(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros(len(x), dtype=complex)
        for m, c in self.coeffs:
            out += c * np.exp(1j * (x @ np.array(m, dtype=float)))
        return out

    def grad(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros((len(x), 2), dtype=complex)
        for m, c in self.coeffs:
            ph = c * np.exp(1j * (x @ np.array(m, dtype=float)))
            out += 1j * ph[:, None] * np.array(m, dtype=float)[None, :]
        return out

    def pullback(self, A: np.ndarray, c: np.ndarray) -> "TrigPoly":
        """f(A x + c) for integer A."""
        d: dict = {}
        for m, co in self.coeffs:
            mm = tuple(int(round(v)) for v in np.asarray(m) @ A)
            d[mm] = d.get(mm, 0) + co * np.exp(1j * float(np.dot(m, c)))
        return TrigPoly.from_dict(d)

    def smooth(self):
        from .density import SmoothFunction
        return SmoothFunction(self.value, self.grad)


def random_trig_poly(rng: np.random.Generator, band: int = 2, nterms: int = 4, real: bool = True) -> TrigPoly:
    d: dict = {}
    for _ in range(nterms):
        m = tuple(int(v) for v in rng.integers(-band, band + 1, size=2))
        c = complex(rng.normal(), rng.normal()) / 2
        d[m] = d.get(m, 0) + c
        if real:
            mm = (-m[0], -m[1])
            d[mm] = d.get(mm, 0) + np.conj(c)
    return TrigPoly.from_dict(d)


# torus model ---------------------------------------------------------------------------------


@dataclass
class TorusModel:
    delta: tuple = (0, 0)
    cutoff: int = 40
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.delta = tuple(int(v) for v in self.delta)
        if any(v not in (0, 1) for v in self.delta):
            raise ValueError("spin structure entries must be 0 or 1")
        if self.cutoff < 2:
            raise ValueError("cutoff too small")
        half = self.cutoff / 2
        axes = []
        for dl in self.delta:
            j = np.arange(-math.ceil(half) - 1, math.ceil(half) + 2) + dl / 2
            axes.append(j[np.abs(j) <= half])
        K1, K2 = np.meshgrid(axes[0], axes[1], indexing="ij")
        self.K = np.stack([K1.ravel(), K2.ravel()], axis=1)
        self.kmax = max(abs(axes[0]).max(), abs(axes[1]).max())
        self.shape = (len(axes[0]), len(axes[1]))
        self.index = {self._key(k): i for i, k in enumerate(self.K)}

    def _key(self, k) -> tuple:
        return (int(round(2 * k[0])), int(round(2 * k[1])))

    @property
    def N(self) -> int:
        return len(self.K)

    @property
    def dim(self) -> int:
        return 2 * self.N

    # operators -----------------------------------------------------------------------------
    def shift_pairs(self, m) -> tuple[np.ndarray, np.ndarray]:
        """(rows, cols) with K[rows] = K[cols] + m inside the truncated box."""
        L1, L2 = self.shape
        i1, i2 = np.divmod(np.arange(self.N), L2)
        j1, j2 = i1 + int(m[0]), i2 + int(m[1])
        ok = (j1 >= 0) & (j1 < L1) & (j2 >= 0) & (j2 < L2)
        return j1[ok] * L2 + j2[ok], np.arange(self.N)[ok]

    def scalar_mult(self, f: TrigPoly) -> sp.csr_matrix:
        """<k|f|k'> = c_{k-k'} on the truncated modes."""
        rows, cols, vals = [], [], []
        for m, c in f.coeffs:
            r, q = self.shift_pairs(m)
            rows.append(r)
            cols.append(q)
            vals.append(np.full(len(r), c, dtype=complex))
        if not rows:
            return sp.csr_matrix((self.N, self.N), dtype=complex)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.N, self.N))

    def mult(self, f: TrigPoly) -> sp.csr_matrix:
        return sp.kron(sp.identity(2), self.scalar_mult(f), format="csr")

    def dplus(self) -> np.ndarray:
        """Diagonal of D^+ : H^+ -> H^-, equal to -(k1 + i k2)."""
        return -(self.K[:, 0] + 1j * self.K[:, 1])

    def D(self) -> sp.csr_matrix:
        if "D" not in self._cache:
            dp = sp.diags(self.dplus())
            dm = sp.diags(np.conj(self.dplus()))
            self._cache["D"] = sp.bmat([[None, dm], [dp, None]], format="csr")
        return self._cache["D"]

    def gamma(self) -> sp.csr_matrix:
        return sp.diags(np.r_[np.ones(self.N), -np.ones(self.N)]).tocsr()

    def ksq(self) -> np.ndarray:
        return np.sum(self.K ** 2, axis=1)

    def heat(self, t: float) -> sp.csr_matrix:
        e = np.exp(-t * self.ksq())
        return sp.diags(np.r_[e, e]).tocsr()

    def D2(self) -> sp.csr_matrix:
        k2 = self.ksq()
        return sp.diags(np.r_[k2, k2]).tocsr()

    def commutator_D(self, f: TrigPoly) -> sp.csr_matrix:
        M = self.mult(f)
        return (self.D() @ M - M @ self.D()).tocsr()

    def commutator_D2(self, T: sp.csr_matrix, times: int = 1) -> sp.csr_matrix:
        D2 = self.D2()
        for _ in range(times):
            T = (D2 @ T - T @ D2).tocsr()
        return T

    def interior(self, margin: int) -> np.ndarray:
        """Mask of modes whose matrix rows are unaffected by truncation up to ``margin``."""
        return np.all(np.abs(self.K) <= self.kmax - margin, axis=1)

    def unitary(self, iso: "TorusIsometry") -> sp.csr_matrix:
        """(U psi)(x) = s phi^S psi(phi^{-1} x): |k> -> e^{-i (Ak).c} |Ak> (x) phi^S."""
        iso.check(self)
        rows, cols, vals = [], [], []
        S = iso.spin_matrix() * iso.lift_sign
        for j, k in enumerate(self.K):
            Ak = iso.A @ k
            i = self.index.get(self._key(Ak))
            if i is None:
                raise ValueError("isometry does not preserve the truncated momentum box")
            ph = np.exp(-1j * float(Ak @ iso.c))
            for a in range(2):
                for b in range(2):
                    if S[a, b] != 0:
                        rows.append(a * self.N + i)
                        cols.append(b * self.N + j)
                        vals.append(S[a, b] * ph)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))


@dataclass(frozen=True)
class TorusIsometry:
    """x -> A x + c with A in SO(2) preserving Z^2; lift s(cos(t/2) + sin(t/2) c1 c2), t in (-pi, pi]."""

    A: np.ndarray
    c: np.ndarray = field(default_factory=lambda: np.zeros(2))
    lift_sign: int = 1

    @classmethod
    def rotation(cls, quarter_turns: int, c=(0.0, 0.0), lift_sign: int = 1) -> "TorusIsometry":
        q = quarter_turns % 4
        A = np.round(np.array([[math.cos(q * math.pi / 2), -math.sin(q * math.pi / 2)],
                               [math.sin(q * math.pi / 2), math.cos(q * math.pi / 2)]])).astype(int)
        return cls(A, np.asarray(c, dtype=float), lift_sign)

    @classmethod
    def identity(cls) -> "TorusIsometry":
        return cls.rotation(0)

    @classmethod
    def involution(cls, lift_sign: int = 1) -> "TorusIsometry":
        return cls.rotation(2, lift_sign=lift_sign)

    @property
    def angle(self) -> float:
        """Rotation angle in (-pi, pi]; the identity-component lift follows it continuously."""
        t = math.atan2(self.A[1, 0], self.A[0, 0])
        return math.pi if abs(t + math.pi) < 1e-12 else t

    def spin_matrix(self) -> np.ndarray:
        t = self.angle
        return math.cos(t / 2) * np.eye(2) + math.sin(t / 2) * C1C2

    def with_sign(self, s: int) -> "TorusIsometry":
        return TorusIsometry(self.A, self.c, s)

    def check(self, model: TorusModel):
        A = np.asarray(self.A)
        if not np.allclose(A.T @ A, np.eye(2)) or round(np.linalg.det(A)) != 1:
            raise ValueError("only orientation-preserving isometries are supported")
        if not np.allclose(A, np.round(A)):
            raise ValueError("A must preserve the lattice")
        # psi(phi^{-1}(x + 2 pi n)) = (-1)^{delta . A^{-1} n} psi(phi^{-1} x) must match (-1)^{delta . n}
        d = np.asarray(model.delta)
        Ai = np.round(A.T).astype(int)
        for n in ((1, 0), (0, 1)):
            if (d @ (Ai @ np.array(n)) - d @ np.array(n)) % 2:
                raise ValueError(f"isometry does not preserve the spin structure delta={model.delta}")


def _pairwise_sum(v: np.ndarray):
    v = list(v)
    if not v:
        return 0j
    while len(v) > 1:
        v = [v[i] + v[i + 1] if i + 1 < len(v) else v[i] for i in range(0, len(v), 2)]
    return v[0]


def _trace_product(A: sp.spmatrix, B: sp.spmatrix):
    """tr(A B) as the pairwise sum of the diagonal."""
    diag = np.asarray(A.multiply(B.T).sum(axis=1)).ravel()
    return complex(_pairwise_sum(diag))


def gaussian_tail(t: float, kmax: float, delta: tuple) -> float:
    """sum over k outside the box |k_i| <= kmax of e^{-t|k|^2} (both spin components)."""
    tot, box = 1.0, 1.0
    for dl in delta:
        off = dl / 2
        j = np.arange(-4000, 4001) + off
        w = np.exp(-t * j ** 2)
        tot *= w.sum()
        box *= w[np.abs(j) <= kmax + 1e-9].sum()
    return 2 * max(tot - box, 0.0)


def equivariant_heat_supertrace(model: TorusModel, iso: TorusIsometry | None, P: sp.spmatrix | None,
                                t: float, margin: int = 0, pnorm: float = 1.0, tol: float | None = None) -> dict:
    """Str[P e^{-tD^2} U_phi] by a direct mode sum, with a Gaussian tail bound.

    ``margin`` is the number of boundary shells where a truncated P is unreliable
    and ``pnorm`` an operator-norm bound for P; with ``tol`` set, a tail bound
    above it raises.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    iso = TorusIsometry.identity() if iso is None else iso
    U = model.unitary(iso)
    EU = (model.heat(t) @ U).tocsr()
    G = model.gamma()
    GP = G if P is None else (G @ P).tocsr()
    val = _trace_product(GP, EU)
    tail = pnorm * gaussian_tail(t, model.kmax - margin, model.delta)
    if tol is not None and tail > tol:
        raise ValueError(f"cutoff {model.cutoff} too small: tail bound {tail:.3e} exceeds {tol:.3e}")
    return {"value": val, "tail_bound": tail, "cutoff": model.cutoff, "lift_sign": iso.lift_sign, "t": t}


def torus_fixed_points(model: TorusModel, iso: TorusIsometry) -> list[FixedComponent]:
    """Fixed points of x -> A x + c on R^2 / 2 pi Z^2 with local lift signs (-1)^{delta . m_p}.

    m_p is the lattice vector with phi^{-1}(p) = p + 2 pi m_p; the identity
    map returns one a = 2 component carrying trapezoid quadrature.
    """
    A = np.asarray(iso.A, dtype=float)
    if np.allclose(A, np.eye(2)):
        if np.allclose(np.mod(iso.c, 2 * math.pi), 0) or np.allclose(np.mod(iso.c, 2 * math.pi), 2 * math.pi):
            g = 64
            x = np.arange(g) * 2 * math.pi / g
            X1, X2 = np.meshgrid(x, x, indexing="ij")
            nodes = np.stack([X1.ravel(), X2.ravel()], axis=1)
            w = np.full(len(nodes), (2 * math.pi / g) ** 2)
            return [FixedComponent(2, 2, weight=(2 * math.pi) ** 2, lift_sign=iso.lift_sign, label="T2",
                                   nodes=nodes, weights=w, frame=np.eye(2))]
        return []
    M = np.eye(2) - A
    Mi = np.linalg.inv(M)
    pts = []
    count = int(round(abs(np.linalg.det(M))))
    rng_n = range(-3, 4)
    for n1 in rng_n:
        for n2 in rng_n:
            p = Mi @ (np.asarray(iso.c) + 2 * math.pi * np.array([n1, n2]))
            p = np.mod(p, 2 * math.pi)
            p[np.isclose(p, 2 * math.pi)] = 0.0
            if not any(np.allclose(p, q) for q in pts):
                pts.append(p)
    if len(pts) != count:
        raise AssertionError("fixed point enumeration failed")
    dec = planar_decompose(A)
    out = []
    for p in sorted(pts, key=lambda v: tuple(np.round(v, 9))):
        back = A.T @ (p - iso.c)  # phi^{-1}(p)
        m = np.round((back - p) / (2 * math.pi)).astype(int)
        s_loc = -1 if int(np.dot(model.delta, m)) % 2 else 1
        # compare the global spinor lift with the lift built from the planar frame
        s_frame = _frame_sign(iso.spin_matrix(), dec)
        out.append(FixedComponent(2, 0, dec, weight=1.0, lift_sign=iso.lift_sign * s_loc * s_frame,
                                  label=f"p=({p[0]:.6f},{p[1]:.6f})", nodes=p[None, :]))
    return out


def _frame_sign(S: np.ndarray, dec) -> int:
    """+1 or -1 with S = sign * lift_rotation(dec) in the c(dx^j) = i sigma_j representation."""
    L = lift_rotation(dec).to_complex().mat
    if np.allclose(S, L, atol=1e-12):
        return 1
    if np.allclose(S, -L, atol=1e-12):
        return -1
    raise AssertionError("spinor lifts differ by more than a sign")


def torus_density_total(model: TorusModel, iso: TorusIsometry) -> complex:
    comps = torus_fixed_points(model, iso)
    return complex(sum(complex(local_density(c)) * c.weight for c in comps))


def torus_kernel_lefschetz(model: TorusModel, iso: TorusIsometry) -> complex:
    """Tr U|ker D^+ - Tr U|ker D^-; the kernel is the k = 0 mode when delta = 0."""
    if any(model.delta):
        return 0j
    i0 = model.index[(0, 0)]
    U = model.unitary(iso).toarray()
    idx = [i0, model.N + i0]
    block = U[np.ix_(idx, idx)]
    return complex(block[0, 0] - block[1, 1])


def lefschetz_number(model, iso, t_values=(0.05, 0.2, 0.5, 1.0), tol: float = 1e-8) -> dict:
    """Three routes: kernel traces, heat supertraces (constancy checked) and fixed-point densities."""
    if isinstance(model, SphereModel):
        heat = [sphere_heat_supertrace(model, iso, t)["value"] for t in t_values]
        dens = sphere_density_total(iso)
        kern = 0j
    else:
        heat = [equivariant_heat_supertrace(model, iso, None, t)["value"] for t in t_values]
        dens = torus_density_total(model, iso)
        kern = torus_kernel_lefschetz(model, iso)
    spread = max(abs(h - heat[0]) for h in heat)
    ok = spread < tol and abs(heat[0] - dens) < tol and abs(kern - heat[0]) < tol
    return {"kernel": kern, "heat": heat, "heat_spread": spread, "density": dens,
            "lift_sign": getattr(iso, "lift_sign", 1), "t_grid": list(t_values), "agree": bool(ok)}


# small-time fits -----------------------------------------------------------------------------


def geometric_grid(a: float, b: float, n: int) -> np.ndarray:
    if n < 6 or not (0 < a < b):
        raise ValueError("need at least 6 points on a positive interval")
    return np.geomspace(a, b, n)


def smalltime_fit(values: Sequence[complex], t_grid: Sequence[float], lead_power: int, nterms: int | None = None,
                  tol: float | None = None) -> dict:
    """Fit S(t) = sum_{j} c_{p+j} t^{p+j}, p = lead_power, by polynomial extrapolation of t^{-p} S(t).

    Returns the coefficients keyed by power and the max fit residual.
    """
    t = np.asarray(t_grid, dtype=float)
    v = np.asarray(values, dtype=complex)
    if len(t) < 6:
        raise ValueError("need at least 6 grid points")
    if t.min() < 0.02 - 1e-15 or t.max() > 0.5 + 1e-15:
        raise ValueError("t-grid must lie in [0.02, 0.5]")
    nterms = len(t) - 2 if nterms is None else nterms
    g = v * t ** (-lead_power)
    V = np.vander(t, nterms, increasing=True)
    cr, *_ = np.linalg.lstsq(V, g.real, rcond=None)
    ci, *_ = np.linalg.lstsq(V, g.imag, rcond=None)
    c = cr + 1j * ci
    resid = float(np.max(np.abs(V @ c - g) * t ** lead_power))
    if tol is not None and resid > tol:
        raise ValueError(f"fit residual {resid:.3e} exceeds {tol:.3e}")
    return {"coefficients": {lead_power + j: complex(c[j]) for j in range(nterms)}, "residual": resid,
            "t_grid": [float(x) for x in t]}


def torus_pk_operator(model: TorusModel, funcs: Sequence[TrigPoly], alpha: Sequence[int] | None = None) -> sp.csr_matrix:
    """f^0 [D,f^1]^{[alpha_1]} ... [D,f^{2k}]^{[alpha_2k]} on the truncated basis."""
    k2 = len(funcs) - 1
    alpha = tuple(alpha or (0,) * k2)
    P = model.mult(funcs[0])
    for f, a in zip(funcs[1:], alpha):
        P = (P @ model.commutator_D2(model.commutator_D(f), a)).tocsr()
    return P


def torus_pk_series(model: TorusModel, funcs, alpha, t_grid) -> list[complex]:
    P = torus_pk_operator(model, funcs, alpha)
    return [equivariant_heat_supertrace(model, None, P, float(t))["value"] for t in t_grid]


def transverse_integral(funcs: Sequence[TrigPoly], g: int = 64) -> complex:
    """int_{T^2} f^0 df^1 ^ df^2 by the trapezoid rule (exact for trig polynomials of low degree)."""
    x = np.arange(g) * 2 * math.pi / g
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
    f0 = funcs[0].value(pts)
    g1, g2 = funcs[1].grad(pts), funcs[2].grad(pts)
    dens = f0 * (g1[:, 0] * g2[:, 1] - g1[:, 1] * g2[:, 0])
    return complex(_pairwise_sum(dens) * (2 * math.pi / g) ** 2)


# sphere model --------------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereModel:
    """Round unit S^2: D eigenvalues +-(l+1), each eigenspace of D^2 carries spin l+1/2 on S^+ and S^-."""

    lmax: int = 400


@dataclass(frozen=True)
class SphereRotation:
    theta: float
    lift_sign: int = 1

    def __post_init__(self):
        if not 0 < self.theta <= math.pi:
            raise ValueError("theta must lie in (0, pi]")


def su2_character(j2: int, theta: float) -> float:
    """Character of the spin j = j2/2 representation at rotation angle theta (SU(2) lift with angle theta)."""
    return math.sin((j2 + 1) * theta / 2) / math.sin(theta / 2)


def sphere_heat_supertrace(model: SphereModel, iso: SphereRotation, t: float) -> dict:
    """sum_l e^{-t (l+1)^2} (chi^+_l - chi^-_l), each chi the spin l+1/2 character."""
    plus, minus = [], []
    for l in range(model.lmax + 1):
        w = math.exp(-t * (l + 1) ** 2)
        ch = su2_character(2 * l + 1, iso.theta) * iso.lift_sign
        plus.append(w * ch)
        minus.append(w * ch)
    val = complex(_pairwise_sum(np.array(plus)) - _pairwise_sum(np.array(minus)))
    tail = 2 * (model.lmax + 2) * math.exp(-t * (model.lmax + 2) ** 2) / max(math.sin(iso.theta / 2), 1e-300)
    return {"value": val, "tail_bound": tail, "plus": complex(_pairwise_sum(np.array(plus))),
            "lift_sign": iso.lift_sign, "t": t}


def sphere_fixed_points(iso: SphereRotation) -> list[FixedComponent]:
    """North and south poles; the oriented frame sees rotation by +theta resp. -theta."""
    th = iso.theta
    curv = FormMatrix.curvature(2, 2, {(1, 2, 1, 2): 1}, 0)
    out = []
    for label, ang in (("north", th), ("south", -th)):
        O = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
        dec = planar_decompose(O)
        target = math.cos(ang / 2) * np.eye(2) + math.sin(ang / 2) * C1C2
        s = _frame_sign(target, dec) * iso.lift_sign
        out.append(FixedComponent(2, 0, dec, None, curv, 1.0, s, label))
    return out


def sphere_density_total(iso: SphereRotation) -> complex:
    return complex(sum(complex(local_density(c)) for c in sphere_fixed_points(iso)))


# truncated projections and the index pairing ----------------------------------------------------


@dataclass
class TruncatedProjection:
    model: TorusModel
    degree: int
    E: np.ndarray  # (2N, 2N) compressed multiplication, layout q-major
    chern: float
    mass: float
    band: int
    meta: dict = field(default_factory=dict)

    def idempotent(self):
        """The compressed matrix as a q = 2 Idempotent (approximately idempotent after truncation)."""
        from .twisted import Idempotent
        return Idempotent(self.E, 2)

    @property
    def idempotent_defect(self) -> float:
        return float(np.abs(self.E @ self.E - self.E).max())

    def reference_index(self) -> int:
        return brute_force_index(self)["index"]


def projection_field(x: np.ndarray, degree: int, mass: float) -> np.ndarray:
    """e(x) = (1 - n.sigma)/2 with n = h/|h|, h = (sin(d x1), sin x2, m + cos(d x1) + cos x2)."""
    d = degree
    h = np.stack([np.sin(d * x[..., 0]), np.sin(x[..., 1]), mass + np.cos(d * x[..., 0]) + np.cos(x[..., 1])], -1)
    n = h / np.linalg.norm(h, axis=-1, keepdims=True)
    ns = np.einsum("...i,ijk->...jk", n, np.array(SIGMA))
    return 0.5 * (np.eye(2) - ns)


def chern_number(degree: int, mass: float, g: int = 200) -> float:
    """(1/2 pi i) int tr(e de ^ de) on a trapezoid grid with spectral derivatives."""
    if degree == 0:
        return 0.0
    x = np.arange(g) * 2 * math.pi / g
    X = np.stack(np.meshgrid(x, x, indexing="ij"), -1)
    e = projection_field(X, degree, mass)
    k = np.fft.fftfreq(g, 1.0 / g)
    E = np.fft.fft2(e, axes=(0, 1))
    d1 = np.fft.ifft2(1j * k[:, None, None, None] * E, axes=(0, 1))
    d2 = np.fft.ifft2(1j * k[None, :, None, None] * E, axes=(0, 1))
    w = np.einsum("xyab,xybc,xyca->xy", e, d1, d2) - np.einsum("xyab,xybc,xyca->xy", e, d2, d1)
    val = w.sum() * (2 * math.pi / g) ** 2 / (2j * math.pi)
    return float(val.real)


def _fourier_coeffs(degree: int, mass: float, g: int = 256, tol: float = 1e-14):
    x = np.arange(g) * 2 * math.pi / g
    X = np.stack(np.meshgrid(x, x, indexing="ij"), -1)
    if degree == 0:
        e = np.broadcast_to(np.diag([1.0, 0.0]), (g, g, 2, 2)).astype(complex)
    else:
        e = projection_field(X, degree, mass)
    C = np.fft.fft2(e, axes=(0, 1)) / g ** 2
    freqs = np.fft.fftfreq(g, 1.0 / g).astype(int)
    mags = np.abs(C).max(axis=(2, 3))
    keep = mags > tol
    band = int(max(np.abs(freqs[np.nonzero(keep)[0]]).max(), np.abs(freqs[np.nonzero(keep)[1]]).max()))
    coeffs = {}
    for i, j in zip(*np.nonzero(keep)):
        coeffs[(int(freqs[i]), int(freqs[j]))] = C[i, j]
    return coeffs, band


def effective_bandwidth(coeffs: dict, tol: float = 1e-3) -> int:
    return max((max(abs(m[0]), abs(m[1])) for m, C in coeffs.items() if np.abs(C).max() > tol), default=0)


def truncated_projection(model: TorusModel, degree: int, mass: float = 1.0) -> TruncatedProjection:
    """Compression of a smooth projection with first Chern number ``degree`` (for 0 < mass < 2)."""
    if not 0 < abs(mass) < 2 and degree:
        raise ValueError("|mass| must lie in (0, 2) for a nontrivial bundle")
    coeffs, band = _fourier_coeffs(degree, mass)
    eff = effective_bandwidth(coeffs)
    if model.cutoff < 3 * eff:
        raise ValueError(f"cutoff {model.cutoff} below 3x the projection bandwidth {eff}")
    N = model.N
    E = np.zeros((2 * N, 2 * N), dtype=complex)
    for m, C in coeffs.items():
        r, q = model.shift_pairs(m)
        for a in range(2):
            for b in range(2):
                E[a * N + r, b * N + q] += C[a, b]
    ch = chern_number(degree, mass)
    meta = {"chern": ch, "band": band, "effective_band": eff,
            "orientation": "dx1 ^ dx2 positive, gamma = sigma_3 on S^+; index = -chern"}
    return TruncatedProjection(model, degree, E, ch, mass, band, meta)


def _bottom_eigs(H: np.ndarray, nev: int, shift: float = 1e-8):
    """Lowest eigenpairs of a positive semidefinite H by shift-invert Lanczos on a Cholesky factor."""
    fac = cho_factor(H + shift * np.eye(len(H)))
    op = LinearOperator(H.shape, matvec=lambda v: cho_solve(fac, v), dtype=H.dtype)
    mu, V = eigsh(op, k=nev, which="LM", v0=np.ones(len(H), dtype=H.dtype))
    w = 1.0 / mu - shift
    order = np.argsort(w)
    return w[order], V[:, order]


def brute_force_index(tp: TruncatedProjection, small: float = 1e-3, low_frac: float = 0.5) -> dict:
    """Index of e D^+ e on e H^+ by counting localized small singular values of B = e D^+ e + (1 - e).

    The truncated B is square, so every small singular value pairs a left and
    a right vector; only vectors concentrated on low momenta (|k|_inf <= low_frac
    * kmax) count, edge-localized partners are truncation artifacts.
    """
    m = tp.model
    N = m.N
    dp = np.tile(m.dplus(), 2)
    E = tp.E
    B = E @ (dp[:, None] * E) + (np.eye(2 * N) - E)
    low = np.tile(np.all(np.abs(m.K) <= low_frac * m.kmax, axis=1), 2)
    nev = 8
    # small singular values of B from the bottom of B^H B (right) and B B^H (left)
    wr, vr = _bottom_eigs(B.conj().T @ B, nev)
    wl, vl = _bottom_eigs(B @ B.conj().T, nev)
    sr, sl = np.sqrt(np.clip(wr, 0, None)), np.sqrt(np.clip(wl, 0, None))
    if sr[-1] < small or sl[-1] < small:
        raise AssertionError("too many small singular values for the eigen window")
    ker = sum(1 for i in range(nev) if sr[i] < small and np.sum(np.abs(vr[low, i]) ** 2) > 0.9)
    cok = sum(1 for i in range(nev) if sl[i] < small and np.sum(np.abs(vl[low, i]) ** 2) > 0.9)
    nsmall = int(np.sum(sr < small))
    return {"index": ker - cok, "kernel": ker, "cokernel": cok,
            "small_values": [float(v) for v in sr[:nsmall]], "gap": float(sr[nsmall])}


def torus_pairing(tp: TruncatedProjection) -> complex:
    """<tau_2, e> = (2!/1!) (1/2)(1!/2!) Str((D^{-1}[D, e])^3) with the chiral block structure.

    D^{-1}[D, e] is block diagonal: X^+ = e - (D^+)^{-1} e D^+ on H^+ and
    X^- = e - (D^-)^{-1} e D^- on H^-.
    """
    m = tp.model
    if not all(m.delta):
        raise ValueError("the pairing needs an invertible D: use delta = (1, 1)")
    dp = np.tile(m.dplus(), 2)
    dm = np.conj(dp)
    E = tp.E
    Xp = E - (E * dp[None, :]) / dp[:, None]
    Xm = E - (E * dm[None, :]) / dm[:, None]
    tp3 = np.einsum("ij,ji->", Xp @ Xp, Xp)
    tm3 = np.einsum("ij,ji->", Xm @ Xm, Xm)
    return complex(0.5 * (tp3 - tm3))


def torus_finite_triple(tp: TruncatedProjection):
    """The truncated torus as a FiniteTriple (q = 2 ampliation folded into H) for generic cross-checks."""
    from .twisted import FiniteTriple
    m = tp.model
    N = m.N
    dp = np.tile(m.dplus(), 2)
    Z = np.zeros((2 * N, 2 * N), dtype=complex)
    D = np.block([[Z, np.diag(np.conj(dp))], [np.diag(dp), Z]])
    g = np.diag(np.r_[np.ones(2 * N), -np.ones(2 * N)]).astype(complex)
    Eb = np.block([[tp.E, Z], [Z, tp.E]])
    return FiniteTriple(D, g, None), Eb
