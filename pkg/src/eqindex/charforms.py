"""Matrix functions of form-valued matrices: exp, log, det^{+-1/2}, A-hat, nu_phi.

Entries of a :class:`FormMatrix` are even forms, hence commute, so
determinants and traces behave as over a commutative ring.  All power series
act on nilpotent arguments and terminate exactly.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import gmpy2
import numpy as np

from .exterior import GQ, MultiVector, coerce, mpq, mv_exp

# exact Taylor coefficients -------------------------------------------------


@lru_cache(maxsize=None)
def bernoulli(m: int) -> Fraction:
    """Bernoulli number B_m with B_1 = -1/2."""
    B = [Fraction(1)]
    for k in range(1, m + 1):
        B.append(-sum(math.comb(k + 1, j) * B[j] for j in range(k)) / (k + 1))
    return B[m]


def _q(fr: Fraction) -> GQ:
    return GQ(mpq(fr.numerator, fr.denominator))


def _exp_c(k):
    return _q(Fraction(1, math.factorial(k)))


def _x_over_sinh_c(k):
    if k % 2:
        return GQ(0)
    return _q((2 - 2 ** k) * bernoulli(k) / math.factorial(k))


def _x_over_tanh_c(k):
    if k % 2:
        return GQ(0)
    return _q(2 ** k * bernoulli(k) / math.factorial(k))


def _sinhc_c(k):
    return GQ(0) if k % 2 else _q(Fraction(1, math.factorial(k + 1)))


def _cosh_c(k):
    return GQ(0) if k % 2 else _q(Fraction(1, math.factorial(k)))


def _log1p_c(k):
    return GQ(0) if k == 0 else _q(Fraction((-1) ** (k + 1), k))


SERIES: dict[str, Callable[[int], GQ]] = {
    "exp": _exp_c,
    "x/sinh": _x_over_sinh_c,
    "x/tanh": _x_over_tanh_c,
    "sinh/x": _sinhc_c,
    "cosh": _cosh_c,
    "log1p": _log1p_c,
}


def series_coeffs(series) -> Callable[[int], object]:
    if callable(series):
        return series
    if isinstance(series, str):
        return SERIES[series]
    seq = list(series)
    return lambda k: seq[k] if k < len(seq) else 0


# form-valued matrices -------------------------------------------------------


class FormMatrix:
    """Square matrix with even-form entries over a common Lambda(n)."""

    __slots__ = ("n", "a", "entries")

    def __init__(self, entries):
        entries = [list(row) for row in entries]
        m = len(entries)
        if any(len(r) != m for r in entries):
            raise ValueError("FormMatrix must be square")
        if m == 0:
            raise ValueError("empty FormMatrix; use FormMatrix.empty(n)")
        self.n = entries[0][0].n
        self.a = entries[0][0].a
        for r in entries:
            for e in r:
                if not isinstance(e, MultiVector) or e.n != self.n:
                    raise ValueError("entries must be MultiVectors over the same Lambda(n)")
                if not e.is_even():
                    raise ValueError("FormMatrix entries must have even degree")
        self.entries = entries

    @property
    def size(self) -> int:
        return len(self.entries)

    # constructors ---------------------------------------------------------
    @classmethod
    def identity(cls, m: int, n: int, a: int | None = None, c=1) -> "FormMatrix":
        return cls([[MultiVector.scalar(n, c if i == j else 0, a) for j in range(m)] for i in range(m)])

    @classmethod
    def zeros(cls, m: int, n: int, a: int | None = None) -> "FormMatrix":
        return cls.identity(m, n, a, c=0)

    @classmethod
    def from_scalar(cls, S, n: int, a: int | None = None) -> "FormMatrix":
        """Lift a numeric (or exact object) matrix to degree-0 forms."""
        S = np.asarray(S)
        return cls([[MultiVector.scalar(n, S[i, j], a) for j in range(S.shape[1])] for i in range(S.shape[0])])

    @classmethod
    def curvature(cls, m: int, n: int, comps: dict, a: int | None = None) -> "FormMatrix":
        """Antisymmetric 2-form matrix from {(i, j, k, l): R_ijkl} with i<j, k<l (1-based).

        R_ij = sum_{k<l} R_ijkl dx^k ^ dx^l and R_ji = -R_ij.
        """
        E = [[MultiVector.zero(n, a) for _ in range(m)] for _ in range(m)]
        for (i, j, k, l), v in comps.items():
            if not (i < j and k < l):
                raise ValueError("use i<j and k<l keys")
            w = MultiVector.monomial(n, [k, l], v, a)
            E[i - 1][j - 1] = E[i - 1][j - 1] + w
            E[j - 1][i - 1] = E[j - 1][i - 1] - w
        return cls(E)

    # algebra --------------------------------------------------------------
    def _zip(self, other, op):
        if other.size != self.size or other.n != self.n:
            raise ValueError("FormMatrix shape mismatch")
        return FormMatrix([[op(x, y) for x, y in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)])

    def __add__(self, other):
        return self._zip(other, lambda x, y: x + y)

    def __sub__(self, other):
        return self._zip(other, lambda x, y: x - y)

    def __neg__(self):
        return FormMatrix([[-x for x in r] for r in self.entries])

    def scale(self, c) -> "FormMatrix":
        return FormMatrix([[x.scale(c) for x in r] for r in self.entries])

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def __matmul__(self, other: "FormMatrix") -> "FormMatrix":
        if other.size != self.size or other.n != self.n:
            raise ValueError("FormMatrix shape mismatch")
        m = self.size
        out = []
        for i in range(m):
            row = []
            for j in range(m):
                acc = MultiVector.zero(self.n, self.a)
                for k in range(m):
                    x, y = self.entries[i][k], other.entries[k][j]
                    if x and y:
                        acc = acc + x.wedge(y)
                row.append(acc)
            out.append(row)
        return FormMatrix(out)

    def wedge_scalar(self, w: MultiVector) -> "FormMatrix":
        return FormMatrix([[x.wedge(w) for x in r] for r in self.entries])

    def transpose(self) -> "FormMatrix":
        m = self.size
        return FormMatrix([[self.entries[j][i] for j in range(m)] for i in range(m)])

    def sym(self) -> "FormMatrix":
        """Symmetric part (M + M^T)/2."""
        return (self + self.transpose()).scale(GQ(mpq(1, 2)))

    def trace(self) -> MultiVector:
        acc = MultiVector.zero(self.n, self.a)
        for i in range(self.size):
            acc = acc + self.entries[i][i]
        return acc

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def __eq__(self, other):
        if not isinstance(other, FormMatrix) or other.size != self.size:
            return False
        return all(x == y for r1, r2 in zip(self.entries, other.entries) for x, y in zip(r1, r2))

    __hash__ = None

    def __repr__(self):
        return "FormMatrix(" + repr([[repr(x) for x in r] for r in self.entries]) + ")"

    @property
    def exact(self) -> bool:
        return all(x.exact for r in self.entries for x in r)

    def scalar_part(self) -> np.ndarray:
        """Degree-0 parts; an exact GQ object array when all entries are exact."""
        if self.exact:
            out = np.empty((self.size, self.size), dtype=object)
            for ij in np.ndindex(out.shape):
                out[ij] = self.entries[ij[0]][ij[1]].scalar_part()
            return out
        return np.array([[complex(x.scalar_part()) for x in r] for r in self.entries])

    def nilpotent_part(self) -> "FormMatrix":
        return FormMatrix([[x.nilpotent_part() for x in r] for r in self.entries])

    def is_nilpotent(self) -> bool:
        return all(x.scalar_part() == 0 for r in self.entries for x in r)

    def is_antisymmetric(self) -> bool:
        m = self.size
        return all(self.entries[i][j] == -self.entries[j][i] for i in range(m) for j in range(m))

    def to_complex(self) -> "FormMatrix":
        return FormMatrix([[x.to_complex() for x in r] for r in self.entries])

    def left_scalar(self, S) -> "FormMatrix":
        """S @ self for a scalar (numeric or exact) matrix S."""
        return FormMatrix.from_scalar(S, self.n, self.a) @ self

    def to_json(self) -> dict:
        return {"size": self.size, "entries": [[x.to_json() for x in r] for r in self.entries]}

    @classmethod
    def from_json(cls, d: dict) -> "FormMatrix":
        ents = [[MultiVector.from_json(x) for x in r] for r in d["entries"]]
        if len(ents) != int(d["size"]):
            raise ValueError("size field does not match entries")
        return cls(ents)


# scalar-matrix helpers --------------------------------------------------------


def exact_inverse(S: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse of a GQ object matrix."""
    m = S.shape[0]
    A = [[coerce(S[i, j]) for j in range(m)] + [GQ(1 if i == j else 0) for j in range(m)] for i in range(m)]
    for c in range(m):
        p = next((r for r in range(c, m) if A[r][c] != 0), None)
        if p is None:
            raise ZeroDivisionError("singular scalar part")
        A[c], A[p] = A[p], A[c]
        piv = A[c][c]
        A[c] = [x / piv for x in A[c]]
        for r in range(m):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    out = np.empty((m, m), dtype=object)
    for i in range(m):
        for j in range(m):
            out[i, j] = A[i][m + j]
    return out


def exact_det(S: np.ndarray):
    m = S.shape[0]
    A = [[coerce(S[i, j]) for j in range(m)] for i in range(m)]
    det = GQ(1)
    for c in range(m):
        p = next((r for r in range(c, m) if A[r][c] != 0), None)
        if p is None:
            return GQ(0)
        if p != c:
            A[c], A[p] = A[p], A[c]
            det = -det
        det = det * A[c][c]
        for r in range(c + 1, m):
            if A[r][c] != 0:
                f = A[r][c] / A[c][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    return det


def scalar_inverse(S: np.ndarray) -> np.ndarray:
    if S.dtype == object:
        return exact_inverse(S)
    if abs(np.linalg.det(S)) < 1e-300:
        raise ZeroDivisionError("singular scalar part")
    return np.linalg.inv(S)


def scalar_det(S: np.ndarray):
    return exact_det(S) if S.dtype == object else complex(np.linalg.det(S))


def exact_sqrt(q: GQ):
    """Square root of a nonnegative rational GQ if it is a perfect square, else None."""
    if q.im != 0 or q.re < 0:
        return None
    num, den = q.re.numerator, q.re.denominator
    if gmpy2.is_square(num) and gmpy2.is_square(den):
        return GQ(mpq(gmpy2.isqrt(num), gmpy2.isqrt(den)))
    return None


# operations ---------------------------------------------------------------------


def _max_power(F: FormMatrix) -> int:
    # entries of a nilpotent even-form matrix have degree >= 2, so F^k = 0 once 2k > n
    return F.n // 2


def mat_func(F: FormMatrix, series, even_arg: bool = False) -> FormMatrix:
    """Evaluate a power series at a nilpotent form-valued matrix.

    With ``even_arg=True`` the input is the square X^2 of the actual argument X
    and only the even coefficients c_{2k} are used, multiplying (X^2)^k; this is
    how functions of t*sqrt(B) are evaluated without a square root.
    """
    if not F.is_nilpotent():
        raise ValueError("mat_func needs a nilpotent argument (zero scalar part)")
    coeff = series_coeffs(series)
    m = F.size
    kmax = _max_power(F)
    out = FormMatrix.identity(m, F.n, F.a, c=coeff(0))
    P = FormMatrix.identity(m, F.n, F.a)
    for k in range(1, kmax + 1):
        P = P @ F
        c = coeff(2 * k if even_arg else k)
        if c != 0:
            out = out + P.scale(c)
    P = P @ F
    assert all(not x for r in P.entries for x in r), "nilpotency bound violated"
    return out


def tr_log(M: FormMatrix, scalar_log=None) -> MultiVector:
    """Positive-degree part of tr log M, i.e. tr log(1 + M0^{-1} N).

    The degree-0 part log det M0 is not returned (its branch is handled by the
    callers); ``scalar_log`` may be added to include it.
    """
    M0 = M.scalar_part()
    N = M.nilpotent_part()
    X = N.left_scalar(scalar_inverse(M0))
    out = mat_func(X, "log1p").trace()
    if scalar_log is not None:
        out = out + scalar_log
    return out


def _branch_value(M0: np.ndarray, branch, power: int):
    """Pinned value of det(M0)^{power/2}, power = +-1."""
    det0 = scalar_det(M0)
    if branch is not None:
        val = coerce(branch)
        sq = val * val
        target = det0 if power > 0 else 1 / det0
        if isinstance(sq, GQ) and isinstance(target, GQ):
            if sq != target:
                raise ValueError("branch value does not square to the scalar determinant")
        elif abs(complex(sq) - complex(target)) > 1e-9 * max(1.0, abs(complex(target))):
            raise ValueError("branch value does not square to the scalar determinant")
        return val
    if det0 == 0:
        raise ZeroDivisionError("zero scalar determinant")
    if isinstance(det0, GQ):
        r = exact_sqrt(det0)
        if r is not None:
            return r if power > 0 else 1 / r
        d = complex(det0)
    else:
        d = det0
    if abs(d.imag) > 1e-12 * max(1.0, abs(d)) or d.real <= 0:
        raise ValueError("scalar determinant is not real positive; pass an explicit branch")
    r = math.sqrt(d.real)
    return r if power > 0 else 1.0 / r


def det_sqrt(M: FormMatrix, branch=None) -> MultiVector:
    """det^{1/2}(M) = det^{1/2}(M0) exp(1/2 tr log(1 + M0^{-1} N))."""
    c0 = _branch_value(M.scalar_part(), branch, +1)
    return mv_exp(tr_log(M).scale(GQ(mpq(1, 2)))).scale(c0)


def det_inv_sqrt(M: FormMatrix, branch=None) -> MultiVector:
    """det^{-1/2}(M); ``branch`` pins det^{-1/2}(M0)."""
    c0 = _branch_value(M.scalar_part(), branch, -1)
    return mv_exp(tr_log(M).scale(GQ(mpq(-1, 2)))).scale(c0)


def det_leibniz(M: FormMatrix) -> MultiVector:
    """Commutative determinant by the Leibniz expansion (independent check)."""
    m = M.size
    acc = MultiVector.zero(M.n, M.a)
    for perm in itertools.permutations(range(m)):
        inv = sum(1 for i in range(m) for j in range(i + 1, m) if perm[i] > perm[j])
        term = MultiVector.scalar(M.n, -1 if inv % 2 else 1, M.a)
        for i, j in enumerate(perm):
            term = term.wedge(M.entries[i][j])
            if not term:
                break
        acc = acc + term
    return acc


def a_hat(R: FormMatrix) -> MultiVector:
    """A-hat form det^{1/2}((R/2)/sinh(R/2)) of a 2-form curvature matrix."""
    if not R.is_nilpotent():
        raise ValueError("curvature must have zero scalar part")
    half = R.scale(GQ(mpq(1, 2)))
    return det_sqrt(mat_func(half, "x/sinh"), branch=1)


def rotation_matrix(dec) -> np.ndarray:
    return dec.rotation()


def nu_phi(R_normal: FormMatrix, dec) -> MultiVector:
    """det^{-1/2}(1 - phi^N e^{-R''}) with scalar branch 1/det^{1/2}(1 - phi^N).

    The scalar branch is orientation * prod_j (2 sin(theta_j/2))^{-1}; it is
    the positive value whenever the planar frame is positively oriented.
    """
    b = R_normal.size
    if dec.dim != b:
        raise ValueError("rotation and normal curvature sizes differ")
    if not dec.angles or len(dec.angles) * 2 != b:
        raise ValueError("normal rotation must have no fixed vectors (theta_j = 0 present)")
    if any(t <= 0 for t in dec.angles):
        raise ValueError("theta_j = 0 in the normal rotation")
    Phi = dec.rotation()
    E = mat_func(-R_normal, "exp")
    M = FormMatrix.identity(b, R_normal.n, R_normal.a) - E.left_scalar(Phi)
    dh = dec.det_half()
    return det_inv_sqrt(M, branch=1 / dh)


# random data ------------------------------------------------------------------


def random_curvature(m: int, n: int, rng: np.random.Generator, a: int | None = None,
                     exact: bool = True, support: Sequence[int] | None = None,
                     den: int = 7, lo: int = -4, hi: int = 4) -> FormMatrix:
    """Random antisymmetric 2-form matrix; rational coefficients p/den by default.

    ``support`` restricts the 2-forms dx^k ^ dx^l to indices in the list.
    """
    idx = list(support) if support is not None else list(range(1, n + 1))
    comps = {}
    for i in range(1, m + 1):
        for j in range(i + 1, m + 1):
            for x in range(len(idx)):
                for y in range(x + 1, len(idx)):
                    v = int(rng.integers(lo, hi + 1))
                    if v:
                        comps[(i, j, idx[x], idx[y])] = GQ(mpq(v, den)) if exact else v / den
    if not comps:
        return FormMatrix.zeros(m, n, a)
    return FormMatrix.curvature(m, n, comps, a)


def commutes_with(R: FormMatrix, Phi) -> bool:
    """Exact (or 1e-12) check of Phi R = R Phi for a scalar matrix Phi."""
    P = FormMatrix.from_scalar(Phi, R.n, R.a)
    D = P @ R - R @ P
    if D.exact:
        return all(not x for r in D.entries for x in r)
    return all(x.norm() < 1e-12 for r in D.entries for x in r)


def random_invariant_curvature(dec, n: int, rng: np.random.Generator, a: int | None = None,
                               exact: bool = True, support=None, den: int = 7,
                               lo: int = -4, hi: int = 4) -> FormMatrix:
    """Random normal curvature commuting with the rotation of ``dec``.

    Each invariant plane with an angle in (0, pi) carries a multiple of the
    plane's rotation generator; the pi-planes together carry an arbitrary
    antisymmetric block.  Built in the planar frame and rotated back.
    """
    b = dec.dim
    idx = list(support) if support is not None else list(range(1, n + 1))
    pairs = [(idx[x], idx[y]) for x in range(len(idx)) for y in range(x + 1, len(idx))]

    def rnd_form():
        w = MultiVector.zero(n, a)
        for k, l in pairs:
            v = int(rng.integers(lo, hi + 1))
            if v:
                w = w + MultiVector.monomial(n, [k, l], GQ(mpq(v, den)) if exact else v / den, a)
        return w

    X = [[MultiVector.zero(n, a) for _ in range(b)] for _ in range(b)]
    pi_idx = []
    for j, th in enumerate(dec.angles):
        if th == math.pi:
            pi_idx += [2 * j, 2 * j + 1]
        else:
            w = rnd_form()
            X[2 * j][2 * j + 1] = w
            X[2 * j + 1][2 * j] = -w
    for x in range(len(pi_idx)):
        for y in range(x + 1, len(pi_idx)):
            w = rnd_form()
            X[pi_idx[x]][pi_idx[y]] = w
            X[pi_idx[y]][pi_idx[x]] = -w
    Xm = FormMatrix(X)
    V = dec.normal_frame()
    if np.allclose(V, np.eye(b)):
        return Xm
    Vf = FormMatrix.from_scalar(V, n, a)
    return Vf @ Xm @ Vf.transpose()
