"""Spinor representation of Cl(n), quantization/symbol maps and rotation lifts.

Generators are iterated Pauli tensor products

    c(dx^{2k-1}) = s3 x ... x s3 x (i s1) x 1 x ... ,
    c(dx^{2k})   = s3 x ... x s3 x (i s2) x 1 x ... ,

so that c(v)^2 = -|v|^2 and every entry lies in {0, +-1, +-i}.  Matrices are
complex numpy arrays, or object arrays of :class:`GQ` in exact mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .exterior import GQ, MultiVector, NMAX, berezin_a0, coerce, indices_of

_S1 = np.array([[0, 1], [1, 0]], dtype=complex)
_S2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_S3 = np.array([[1, 0], [0, -1]], dtype=complex)
_ID2 = np.eye(2, dtype=complex)


def _exactify(m: np.ndarray) -> np.ndarray:
    """Turn a complex matrix with Gaussian-integer entries into a GQ object array."""
    out = np.empty(m.shape, dtype=object)
    for ij, z in np.ndenumerate(m):
        re, im = round(z.real), round(z.imag)
        if abs(z.real - re) > 1e-12 or abs(z.imag - im) > 1e-12:
            raise ValueError("entry is not a Gaussian integer")
        out[ij] = GQ(re, im)
    return out


def exact_matrix(m) -> np.ndarray:
    """Object array of GQ from nested lists / arrays of exact numbers."""
    arr = np.array(m, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for ij, z in np.ndenumerate(arr):
        out[ij] = coerce(z)
        if not isinstance(out[ij], GQ):
            raise TypeError(f"inexact entry {z!r}")
    return out


def exact_eye(d: int) -> np.ndarray:
    out = np.empty((d, d), dtype=object)
    for ij in np.ndindex(d, d):
        out[ij] = GQ(1 if ij[0] == ij[1] else 0)
    return out


def _kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


@dataclass(frozen=True)
class SpinorEnd:
    """Endomorphism of the 2^{n/2}-dimensional spinor space."""

    n: int
    mat: np.ndarray

    @property
    def exact(self) -> bool:
        return self.mat.dtype == object

    def to_complex(self) -> "SpinorEnd":
        if not self.exact:
            return self
        return SpinorEnd(self.n, np.vectorize(complex, otypes=[complex])(self.mat))

    def _other(self, o):
        if isinstance(o, SpinorEnd):
            if o.n != self.n:
                raise ValueError(f"dimension mismatch: {self.n} vs {o.n}")
            a, b = self.mat, o.mat
            if a.dtype != b.dtype:
                return self.to_complex().mat, o.to_complex().mat
            return a, b
        return None

    def __matmul__(self, o: "SpinorEnd") -> "SpinorEnd":
        a, b = self._other(o)
        return SpinorEnd(self.n, a.dot(b))

    def __add__(self, o):
        a, b = self._other(o)
        return SpinorEnd(self.n, a + b)

    def __sub__(self, o):
        a, b = self._other(o)
        return SpinorEnd(self.n, a - b)

    def __neg__(self):
        return SpinorEnd(self.n, -self.mat)

    def __mul__(self, c):
        if self.exact:
            c = coerce(c)
            if isinstance(c, GQ):
                return SpinorEnd(self.n, self.mat * c)
            return SpinorEnd(self.n, self.to_complex().mat * c)
        return SpinorEnd(self.n, self.mat * complex(c))

    __rmul__ = __mul__

    def dagger(self) -> "SpinorEnd":
        if self.exact:
            return SpinorEnd(self.n, np.vectorize(lambda z: z.conjugate(), otypes=[object])(self.mat.T))
        return SpinorEnd(self.n, self.mat.conj().T)

    def trace(self):
        if self.exact:
            return sum(np.diag(self.mat), GQ(0))
        return complex(np.trace(self.mat))

    def __eq__(self, other):
        if not isinstance(other, SpinorEnd) or other.n != self.n:
            return False
        if self.exact and other.exact:
            return bool(np.all(self.mat == other.mat))
        return bool(np.array_equal(self.to_complex().mat, other.to_complex().mat))

    __hash__ = None


class CliffordRep:
    """Spinor representation of Cl(n) for even n <= 8."""

    def __init__(self, n: int):
        if n % 2 or not 2 <= n <= NMAX:
            raise ValueError(f"n must be even in [2, {NMAX}], got {n}")
        self.n = n
        self.dim = 2 ** (n // 2)
        half = n // 2
        gens = []
        for k in range(1, half + 1):
            for s in (_S1, _S2):
                gens.append(_kron_all([_S3] * (k - 1) + [1j * s] + [_ID2] * (half - k)))
        self.gens = gens
        self.gens_exact = [_exactify(g) for g in gens]
        prod = np.eye(self.dim, dtype=complex)
        for g in gens:
            prod = prod @ g
        self.gamma = (1j ** half) * prod
        self.gamma_exact = _exactify(self.gamma)
        self._basis = None
        self._basis_exact = {}
        self._check()

    def _check(self):
        d, eye = self.dim, np.eye(self.dim)
        for i, gi in enumerate(self.gens):
            for j, gj in enumerate(self.gens):
                anti = gi @ gj + gj @ gi
                if not np.array_equal(anti, -2 * eye * (i == j)):
                    raise AssertionError("Clifford relation violated")
        if not np.array_equal(self.gamma @ self.gamma, eye):
            raise AssertionError("chirality does not square to one")
        b = self.basis()
        gram = np.einsum("kij,lij->kl", b.conj(), b)
        if not np.allclose(gram, d * np.eye(len(b))):
            raise AssertionError("trace pairing normalization failed")

    def basis(self) -> np.ndarray:
        """Stack of c(dx^I) indexed by bitset I, shape (2^n, d, d)."""
        if self._basis is None:
            out = np.empty((1 << self.n, self.dim, self.dim), dtype=complex)
            for m in range(1 << self.n):
                out[m] = self._mono(m)
            self._basis = out
        return self._basis

    def _mono(self, m: int) -> np.ndarray:
        out = np.eye(self.dim, dtype=complex)
        for i in indices_of(m):
            out = out @ self.gens[i - 1]
        return out

    def mono_exact(self, m: int) -> np.ndarray:
        if m not in self._basis_exact:
            self._basis_exact[m] = _exactify(self.basis()[m])
        return self._basis_exact[m]

    def c(self, v) -> SpinorEnd:
        """Clifford multiplication by the covector sum_i v_i dx^i."""
        v = np.asarray(v)
        if v.dtype == object:
            out = np.empty((self.dim, self.dim), dtype=object)
            out[...] = GQ(0)
            for i, vi in enumerate(v):
                out = out + self.gens_exact[i] * coerce(vi)
            return SpinorEnd(self.n, out)
        return SpinorEnd(self.n, np.tensordot(v.astype(complex), np.array(self.gens), axes=1))

    def identity(self, exact: bool = False) -> SpinorEnd:
        if exact:
            return SpinorEnd(self.n, exact_eye(self.dim))
        return SpinorEnd(self.n, np.eye(self.dim, dtype=complex))


@lru_cache(maxsize=None)
def build_rep(n: int) -> CliffordRep:
    """Generators c(dx^1..dx^n) and chirality gamma = i^{n/2} c(dx^1)...c(dx^n)."""
    return CliffordRep(n)


def quantize(u: MultiVector, exact: bool | None = None) -> SpinorEnd:
    """The map c: Lambda(n) -> End(S_n), monomials go to ordered products."""
    rep = build_rep(u.n)
    exact = u.exact if exact is None else exact
    if exact:
        if not u.exact:
            raise ValueError("exact quantization of an inexact form")
        out = np.empty((rep.dim, rep.dim), dtype=object)
        out[...] = GQ(0)
        for m, c in u.terms.items():
            out = out + rep.mono_exact(m) * c
        return SpinorEnd(u.n, out)
    v = u.to_array()
    return SpinorEnd(u.n, np.tensordot(v, rep.basis(), axes=1))


def symbol(A: SpinorEnd, a: int | None = None) -> MultiVector:
    """Inverse of :func:`quantize` via tr(c_I^dagger c_J) = 2^{n/2} delta_IJ."""
    rep = build_rep(A.n)
    if A.exact:
        t = {}
        for m in range(1 << A.n):
            cm = rep.mono_exact(m)
            # c_I is a signed monomial matrix, so the conjugate pairing is cheap
            s = GQ(0)
            for (i, j), z in np.ndenumerate(cm):
                if z:
                    s = s + z.conjugate() * A.mat[i, j]
            if s:
                t[m] = s / rep.dim
        return MultiVector(A.n, t, a)
    coeffs = np.einsum("kij,ij->k", rep.basis().conj(), A.mat) / rep.dim
    return MultiVector(A.n, {m: complex(c) for m, c in enumerate(coeffs) if c != 0}, a)


def supertrace(A: SpinorEnd):
    """Str[A] = tr(gamma A)."""
    rep = build_rep(A.n)
    if A.exact:
        return SpinorEnd(A.n, rep.gamma_exact).__matmul__(A).trace()
    return complex(np.einsum("ij,ji->", rep.gamma, A.mat))


def supertrace_via_symbol(A: SpinorEnd):
    """(-2i)^{n/2} times the top coefficient of symbol(A)."""
    top = symbol(A).top()
    return (GQ(0, -2) ** (A.n // 2)) * top


# rotations ---------------------------------------------------------------

@dataclass(frozen=True)
class PlanarDecomposition:
    """Real canonical form of a rotation.

    ``planes[j]`` is an orthonormal pair (v1, v2) with O v1 = cos t v1 + sin t v2.
    ``orientation`` is det[fixed_frame, planes...]; it is +1 except when no
    free choice (fixed vector or pi-plane) can make the frame positive.
    ``half`` optionally holds exact (cos(t/2), sin(t/2)) pairs.
    """

    dim: int
    angles: tuple
    planes: tuple
    fixed_frame: np.ndarray
    orientation: int = 1
    half: tuple | None = None
    matrix: np.ndarray | None = field(default=None, compare=False)

    @property
    def b(self) -> int:
        return 2 * len(self.angles)

    @property
    def exact(self) -> bool:
        return self.half is not None

    def half_angles(self):
        """Pairs (cos(theta_j/2), sin(theta_j/2)), exact when available."""
        if self.half is not None:
            return list(self.half)
        return [(math.cos(t / 2), math.sin(t / 2)) for t in self.angles]

    def normal_frame(self) -> np.ndarray:
        cols = [v for pl in self.planes for v in pl]
        if not cols:
            return np.zeros((self.dim, 0))
        return np.column_stack(cols)

    def rotation(self) -> np.ndarray:
        """Reassemble the orthogonal matrix (exact object array if available)."""
        if self.matrix is not None:
            return self.matrix
        O = np.zeros((self.dim, self.dim))
        if self.fixed_frame.size:
            F = self.fixed_frame
            O += F @ F.T
        for t, (u, v) in zip(self.angles, self.planes):
            c, s = math.cos(t), math.sin(t)
            O += c * (np.outer(u, u) + np.outer(v, v)) + s * (np.outer(v, u) - np.outer(u, v))
        return O

    def det_half(self):
        """det^{1/2}(1 - phi^N) = orientation * prod_j 2 sin(theta_j/2)."""
        out = GQ(self.orientation) if self.exact else float(self.orientation)
        for _, s in self.half_angles():
            out = out * (2 * s)
        return out


def _orth_basis(P: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Deterministic orthonormal basis of range(P): Gram-Schmidt on P e_1, P e_2, ..."""
    vecs = []
    for i in range(P.shape[0]):
        w = P[:, i].copy()
        for v in vecs:
            w -= (v @ w) * v
        nrm = np.linalg.norm(w)
        if nrm > tol:
            vecs.append(w / nrm)
    return np.array(vecs).T if vecs else np.zeros((P.shape[0], 0))


def planar_decompose(O, b: int | None = None, tol: float = 1e-12) -> PlanarDecomposition:
    """Decompose a rotation into invariant planes with angles in (0, pi]."""
    O = np.asarray(O)
    exact_O = O if O.dtype == object else None
    Of = np.vectorize(float, otypes=[float])(O) if O.dtype == object else np.asarray(O, dtype=float)
    d = Of.shape[0]
    if Of.shape != (d, d) or (b is not None and b != d):
        raise ValueError(f"expected a {b}x{b} matrix, got shape {Of.shape}")
    if np.max(np.abs(Of.T @ Of - np.eye(d)), initial=0.0) > tol * max(1, d):
        raise ValueError("matrix is not orthogonal")
    if d and np.linalg.det(Of) < 0:
        raise ValueError("det = -1: reflections are not orientation preserving")
    if d == 0:
        return PlanarDecomposition(0, (), (), np.zeros((0, 0)))
    T, Z = scipy.linalg.schur(Of, output="real")
    fixed, minus, planes = [], [], []
    i = 0
    while i < d:
        if i + 1 < d and abs(T[i + 1, i]) > 1e-9:
            c = 0.5 * (T[i, i] + T[i + 1, i + 1])
            x, y = T[i, i + 1], T[i + 1, i]
            s = 0.5 * (abs(x) + abs(y))
            theta = math.atan2(s, c)
            u, v = Z[:, i], Z[:, i + 1]
            planes.append((theta, (u, v) if y > 0 else (v, u)))
            i += 2
        else:
            (fixed if T[i, i] > 0 else minus).append(Z[:, i])
            i += 1
    # canonical bases of the +-1 eigenspaces, lowest index first
    F = np.array(fixed).T if fixed else np.zeros((d, 0))
    fixed_frame = _orth_basis(F @ F.T) if fixed else np.zeros((d, 0))
    if minus:
        M = np.array(minus).T
        mb = _orth_basis(M @ M.T)
        for j in range(0, mb.shape[1], 2):
            planes.append((math.pi, (mb[:, j], mb[:, j + 1])))
    planes.sort(key=lambda p: p[0])
    angles = [p[0] for p in planes]
    vecs = [list(p[1]) for p in planes]

    def frame():
        cols = [fixed_frame[:, k] for k in range(fixed_frame.shape[1])] + [w for pr in vecs for w in pr]
        return np.column_stack(cols)

    orient = 1 if np.linalg.det(frame()) > 0 else -1
    if orient < 0:
        if fixed_frame.shape[1]:
            fixed_frame = fixed_frame.copy()
            fixed_frame[:, -1] *= -1
            orient = 1
        else:
            for j, t in enumerate(angles):
                if t == math.pi:
                    vecs[j] = [vecs[j][1], vecs[j][0]]
                    orient = 1
                    break
    dec = PlanarDecomposition(d, tuple(angles), tuple(tuple(p) for p in vecs), fixed_frame, orient,
                              None, exact_O)
    err = np.max(np.abs(dec.rotation().astype(float) - Of)) if exact_O is None else 0.0
    if err > 1e-10:
        raise AssertionError(f"planar decomposition does not reassemble (err={err:.2e})")
    return dec


def rotation_from_half_angles(half, exact: bool = True) -> PlanarDecomposition:
    """Block rotation in standard planes from (cos(t/2), sin(t/2)) pairs.

    With rational pairs on the unit circle (e.g. (3/5, 4/5)) everything,
    including det^{1/2}(1 - phi^N) = prod 2 sin(t/2), stays rational.
    """
    half = [(coerce(c), coerce(s)) for c, s in half]
    b = 2 * len(half)
    for c, s in half:
        if (c * c + s * s) != 1:
            raise ValueError("half-angle pair not on the unit circle")
        if not (complex(s).real > 0 and complex(c).real >= 0):
            raise ValueError("need cos(t/2) >= 0 and sin(t/2) > 0 so that t lies in (0, pi]")
    M = np.empty((b, b), dtype=object)
    M[...] = GQ(0)
    planes, angles = [], []
    for j, (c, s) in enumerate(half):
        cc, ss = c * c - s * s, 2 * c * s
        M[2 * j, 2 * j], M[2 * j, 2 * j + 1] = cc, -ss
        M[2 * j + 1, 2 * j], M[2 * j + 1, 2 * j + 1] = ss, cc
        e1, e2 = np.zeros(b), np.zeros(b)
        e1[2 * j], e2[2 * j + 1] = 1.0, 1.0
        planes.append((e1, e2))
        angles.append(2 * math.atan2(float(complex(s).real), float(complex(c).real)))
    order = sorted(range(len(angles)), key=lambda j: angles[j])
    if order != list(range(len(angles))):
        raise ValueError("half-angle pairs must be given in ascending angle order")
    if not exact:
        return PlanarDecomposition(b, tuple(angles), tuple(planes), np.zeros((b, 0)), 1,
                                   None, np.vectorize(float, otypes=[float])(M))
    return PlanarDecomposition(b, tuple(angles), tuple(planes), np.zeros((b, 0)), 1, tuple(half), M)


def rotation_from_angles(angles) -> PlanarDecomposition:
    """Float block rotation with given angles in (0, pi] on standard planes."""
    b = 2 * len(angles)
    O = np.eye(b)
    for j, t in enumerate(angles):
        c, s = math.cos(t), math.sin(t)
        O[2 * j:2 * j + 2, 2 * j:2 * j + 2] = [[c, -s], [s, c]]
    return planar_decompose(O)


def lift_rotation(dec: PlanarDecomposition, n: int | None = None) -> SpinorEnd:
    """phi^S = prod_j (cos(t_j/2) + sin(t_j/2) c(v^{2j-1}) c(v^{2j})).

    The rotated space sits in the last ``dec.dim`` coordinates of R^n.
    """
    n = dec.dim if n is None else n
    off = n - dec.dim
    if off < 0 or off % 2:
        raise ValueError("rotation does not fit the ambient dimension")
    if n == 0:
        raise ValueError("n must be positive")
    rep = build_rep(n)
    exact = dec.exact
    out = rep.identity(exact)
    for (c, s), (u, v) in zip(dec.half_angles(), dec.planes):
        U = np.zeros(n, dtype=object if exact else float)
        V = np.zeros(n, dtype=object if exact else float)
        if exact:
            U[...] = 0
            V[...] = 0
            for k in range(dec.dim):
                U[off + k] = int(round(u[k]))
                V[off + k] = int(round(v[k]))
        else:
            U[off:], V[off:] = u, v
        cv = rep.c(U) @ rep.c(V)
        out = out @ (rep.identity(exact) * c + cv * s)
    return out


def equivariant_supertrace_identity(A: SpinorEnd, dec: PlanarDecomposition, a: int | None = None):
    """Return (Str[phi^S A], (-2i)^{n/2} 2^{-b/2} det^{1/2}(1-phi^N) |sigma(A)|^{(a,0)})."""
    n = A.n
    a = n - dec.dim if a is None else a
    if a + dec.dim != n:
        raise ValueError("split inconsistent with the rotation dimension")
    b = n - a
    phi = lift_rotation(dec, n) if b else build_rep(n).identity(A.exact)
    lhs = supertrace(phi @ A)
    top = berezin_a0(symbol(A), a)
    scale = (GQ(0, -2) ** (n // 2)) * GQ(1, 0) / GQ(2 ** (b // 2))
    rhs = scale * dec.det_half() * top if b else scale * top
    return lhs, rhs


def random_endomorphism(n: int, rng: np.random.Generator) -> SpinorEnd:
    d = 2 ** (n // 2)
    return SpinorEnd(n, rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))


def random_rotation(b: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random element of SO(b) via QR with sign correction."""
    q, r = np.linalg.qr(rng.normal(size=(b, b)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q
