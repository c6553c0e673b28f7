"""Exact arithmetic in the complexified exterior algebra of R^n.

Basis monomials dx^{i1} ^ ... ^ dx^{ik} are keyed by bitsets (bit ``i-1``
stands for ``dx^i``).  Coefficients are Gaussian rationals (:class:`GQ`) by
default; anything touching a Python float or complex silently becomes a
float-complex coefficient, so exactness is tracked per value.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from numbers import Number
from typing import Iterable

import gmpy2
import numpy as np

mpq = gmpy2.mpq
_MPQ = type(mpq(0))

NMAX = 8


def _to_mpq(x):
    if isinstance(x, _MPQ):
        return x
    if isinstance(x, (int, np.integer)):
        return mpq(int(x))
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, str):
        return mpq(x.strip())
    if isinstance(x, type(gmpy2.mpz(0))):
        return mpq(x)
    raise TypeError(f"not a rational: {x!r}")


class GQ:
    """Gaussian rational ``re + i*im`` with gmpy2 rational parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _to_mpq(re)
        self.im = _to_mpq(im)

    @classmethod
    def parse(cls, re: str, im: str = "0") -> "GQ":
        return cls(mpq(re), mpq(im))

    # arithmetic -------------------------------------------------------
    def _lift(self, other):
        if isinstance(other, GQ):
            return other
        if isinstance(other, (int, np.integer, Fraction, _MPQ)):
            return GQ(other)
        return None

    def __add__(self, other):
        o = self._lift(other)
        if o is None:
            return complex(self) + other
        return GQ(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        if o is None:
            return complex(self) - other
        return GQ(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        o = self._lift(other)
        if o is None:
            return other - complex(self)
        return GQ(o.re - self.re, o.im - self.im)

    def __mul__(self, other):
        o = self._lift(other)
        if o is None:
            return complex(self) * other
        return GQ(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o is None:
            return complex(self) / other
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("GQ division by zero")
        return GQ((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)

    def __rtruediv__(self, other):
        o = self._lift(other)
        if o is None:
            return other / complex(self)
        return o / self

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)):
            return complex(self) ** k
        k = int(k)
        if k < 0:
            return GQ(1) / (self ** (-k))
        out, base = GQ(1), self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __neg__(self):
        return GQ(-self.re, -self.im)

    def __pos__(self):
        return self

    def conjugate(self):
        return GQ(self.re, -self.im)

    def __abs__(self):
        return abs(complex(self))

    # comparisons / conversions -----------------------------------------
    def __eq__(self, other):
        o = self._lift(other)
        if o is None:
            if isinstance(other, Number):
                return complex(self) == other
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __float__(self):
        if self.im:
            raise TypeError("GQ with nonzero imaginary part")
        return float(self.re)

    @property
    def real(self):
        return GQ(self.re)

    @property
    def imag(self):
        return GQ(self.im)

    def __repr__(self):
        if not self.im:
            return f"{self.re}"
        if not self.re:
            return f"{self.im}i"
        return f"({self.re}{'+' if self.im > 0 else '-'}{abs(self.im)}i)"


I = GQ(0, 1)


def coerce(x):
    """Map a number to a coefficient: exact inputs give GQ, inexact give complex."""
    if isinstance(x, GQ):
        return x
    if isinstance(x, (bool,)):
        return GQ(int(x))
    if isinstance(x, (int, np.integer, Fraction, _MPQ)):
        return GQ(x)
    if isinstance(x, str):
        return GQ(mpq(x))
    return complex(x)


def is_exact(x) -> bool:
    return isinstance(x, GQ)


def rational_str(q) -> str:
    q = _to_mpq(q) if not isinstance(q, float) else mpq(Fraction(q))
    return str(q) if q.denominator != 1 else str(q.numerator)


# bitset helpers --------------------------------------------------------

def mask_of(idx: Iterable[int]) -> int:
    m = 0
    for i in idx:
        b = 1 << (int(i) - 1)
        if m & b:
            raise ValueError(f"repeated index {i}")
        m |= b
    return m


def indices_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def popcount(m: int) -> int:
    return bin(m).count("1")


@lru_cache(maxsize=1 << 16)
def wedge_sign(m1: int, m2: int) -> int:
    """Sign of dx^{m1} ^ dx^{m2} relative to dx^{m1|m2} (0 when they overlap)."""
    if m1 & m2:
        return 0
    swaps = 0
    b = m2
    while b:
        low = b & -b
        swaps += popcount(m1 & ~((low << 1) - 1))
        b ^= low
    return -1 if swaps & 1 else 1


def _split_masks(a: int):
    tang = (1 << a) - 1
    return tang


# the algebra -----------------------------------------------------------

class MultiVector:
    """Element of Lambda(n) with split ``a`` (indices 1..a tangential)."""

    __slots__ = ("n", "a", "terms")

    def __init__(self, n: int, terms: dict | None = None, a: int | None = None):
        if n % 2 or not 0 <= n <= NMAX:
            raise ValueError(f"n must be even and at most {NMAX}, got {n}")
        a = n if a is None else int(a)
        if not 0 <= a <= n:
            raise ValueError(f"split a={a} outside [0, {n}]")
        self.n = n
        self.a = a
        full = (1 << n) - 1
        clean = {}
        for m, c in (terms or {}).items():
            if m & ~full:
                raise ValueError(f"index set {indices_of(m)} outside 1..{n}")
            c = coerce(c)
            if c != 0:
                clean[m] = c
        self.terms = clean

    # constructors -----------------------------------------------------
    @classmethod
    def scalar(cls, n: int, c=1, a: int | None = None) -> "MultiVector":
        return cls(n, {0: c}, a)

    @classmethod
    def monomial(cls, n: int, idx: Iterable[int], c=1, a: int | None = None) -> "MultiVector":
        """``c * dx^{idx}``; unsorted indices are sorted with the wedge sign."""
        out = cls.scalar(n, c, a)
        for i in idx:
            out = out.wedge(cls(n, {mask_of([i]): 1}, a))
        return out

    @classmethod
    def dx(cls, n: int, i: int, a: int | None = None) -> "MultiVector":
        return cls(n, {mask_of([i]): 1}, a)

    @classmethod
    def zero(cls, n: int, a: int | None = None) -> "MultiVector":
        return cls(n, {}, a)

    def with_split(self, a: int) -> "MultiVector":
        return MultiVector(self.n, self.terms, a)

    # basic protocol ---------------------------------------------------
    def _check(self, other: "MultiVector"):
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def _wrap(self, other):
        if isinstance(other, MultiVector):
            self._check(other)
            return other
        return MultiVector.scalar(self.n, other, self.a)

    def __add__(self, other):
        other = self._wrap(other)
        t = dict(self.terms)
        for m, c in other.terms.items():
            t[m] = t[m] + c if m in t else c
        return MultiVector(self.n, t, self.a)

    __radd__ = __add__

    def __neg__(self):
        return MultiVector(self.n, {m: -c for m, c in self.terms.items()}, self.a)

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) - self

    def scale(self, c) -> "MultiVector":
        c = coerce(c)
        return MultiVector(self.n, {m: c * v for m, v in self.terms.items()}, self.a)

    def __mul__(self, other):
        if isinstance(other, MultiVector):
            return self.wedge(other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __truediv__(self, c):
        c = coerce(c)
        return MultiVector(self.n, {m: v / c for m, v in self.terms.items()}, self.a)

    def wedge(self, other: "MultiVector") -> "MultiVector":
        self._check(other)
        t: dict[int, object] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                s = wedge_sign(m1, m2)
                if not s:
                    continue
                m = m1 | m2
                v = c1 * c2 if s > 0 else -(c1 * c2)
                t[m] = t[m] + v if m in t else v
        return MultiVector(self.n, t, self.a)

    def __xor__(self, other):
        return self.wedge(other)

    def __pow__(self, k: int):
        out = MultiVector.scalar(self.n, 1, self.a)
        for _ in range(int(k)):
            out = out.wedge(self)
        return out

    def __eq__(self, other):
        if isinstance(other, MultiVector):
            if other.n != self.n:
                return False
            return self.terms == other.terms
        if isinstance(other, Number) or isinstance(other, GQ):
            return self == MultiVector.scalar(self.n, other, self.a)
        return NotImplemented

    __hash__ = None

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for m in sorted(self.terms, key=lambda m: (popcount(m), m)):
            c = self.terms[m]
            mono = "^".join(f"dx{i}" for i in indices_of(m))
            parts.append(f"{c!r}" + (f" {mono}" if mono else ""))
        return " + ".join(parts)

    # grading ----------------------------------------------------------
    @property
    def b(self) -> int:
        return self.n - self.a

    def bidegree(self, m: int) -> tuple[int, int]:
        tang = (1 << self.a) - 1
        return popcount(m & tang), popcount(m & ~tang)

    def component(self, j: int) -> "MultiVector":
        if not 0 <= j <= self.n:
            raise ValueError(f"degree {j} outside [0, {self.n}]")
        return MultiVector(self.n, {m: c for m, c in self.terms.items() if popcount(m) == j}, self.a)

    def component_kl(self, k: int, l: int) -> "MultiVector":
        if not (0 <= k <= self.a and 0 <= l <= self.b):
            raise ValueError(f"bidegree ({k},{l}) outside [0,{self.a}]x[0,{self.b}]")
        return MultiVector(self.n, {m: c for m, c in self.terms.items()
                                    if self.bidegree(m) == (k, l)}, self.a)

    def coeff(self, idx: Iterable[int] = ()):
        """Coefficient of the monomial ``dx^idx`` (indices increasing)."""
        m = mask_of(idx)
        return self.terms.get(m, GQ(0))

    def scalar_part(self):
        return self.terms.get(0, GQ(0))

    def nilpotent_part(self) -> "MultiVector":
        return MultiVector(self.n, {m: c for m, c in self.terms.items() if m}, self.a)

    def top(self):
        return self.terms.get((1 << self.n) - 1, GQ(0))

    def degrees(self) -> set[int]:
        return {popcount(m) for m in self.terms}

    def is_even(self) -> bool:
        return all(popcount(m) % 2 == 0 for m in self.terms)

    def restrict(self, support: int) -> "MultiVector":
        """Keep only monomials supported on the index bitset ``support``."""
        return MultiVector(self.n, {m: c for m, c in self.terms.items() if not m & ~support}, self.a)

    # exactness / numerics ---------------------------------------------
    @property
    def exact(self) -> bool:
        return all(isinstance(c, GQ) for c in self.terms.values())

    def to_complex(self) -> "MultiVector":
        return MultiVector(self.n, {m: complex(c) for m, c in self.terms.items()}, self.a)

    def to_array(self) -> np.ndarray:
        v = np.zeros(1 << self.n, dtype=complex)
        for m, c in self.terms.items():
            v[m] = complex(c)
        return v

    @classmethod
    def from_array(cls, n: int, v: np.ndarray, a: int | None = None, tol: float = 0.0) -> "MultiVector":
        return cls(n, {m: complex(c) for m, c in enumerate(v) if abs(c) > tol}, a)

    def allclose(self, other, tol: float = 1e-12) -> bool:
        other = self._wrap(other)
        return bool(np.max(np.abs(self.to_array() - other.to_array()), initial=0.0) <= tol)

    def norm(self) -> float:
        return float(np.max(np.abs(self.to_array()), initial=0.0))

    # serialization ----------------------------------------------------
    def to_json(self) -> dict:
        terms = []
        for m in sorted(self.terms, key=lambda m: (popcount(m), indices_of(m))):
            c = self.terms[m]
            if isinstance(c, GQ):
                re, im = rational_str(c.re), rational_str(c.im)
            else:
                re, im = rational_str(float(c.real)), rational_str(float(c.imag))
            terms.append({"idx": list(indices_of(m)), "re": re, "im": im})
        return {"n": self.n, "a": self.a, "terms": terms}

    @classmethod
    def from_json(cls, d: dict) -> "MultiVector":
        n, a = int(d["n"]), int(d.get("a", d["n"]))
        t = {}
        for term in d["terms"]:
            idx = [int(i) for i in term["idx"]]
            if list(idx) != sorted(set(idx)):
                raise ValueError(f"index list {idx} must be strictly increasing")
            t[mask_of(idx)] = GQ(mpq(term.get("re", "0")), mpq(term.get("im", "0")))
        return cls(n, t, a)


# module-level operations ---------------------------------------------

def wedge(u: MultiVector, v: MultiVector) -> MultiVector:
    return u.wedge(v)


def component(u: MultiVector, j: int) -> MultiVector:
    return u.component(j)


def component_kl(u: MultiVector, k: int, l: int) -> MultiVector:
    return u.component_kl(k, l)


def berezin_a0(u: MultiVector, a: int | None = None):
    """Coefficient of dx^1 ^ ... ^ dx^a in the Lambda^{*,0} part of ``u``."""
    a = u.a if a is None else a
    if not 0 <= a <= u.n:
        raise ValueError(f"split a={a} outside [0, {u.n}]")
    return u.terms.get((1 << a) - 1, GQ(0))


def berezin_a(u: MultiVector, a: int | None = None):
    """Top coefficient of a form on the a-dimensional tangential factor.

    Normal monomials are discarded first, so on forms pulled back from the
    fixed-point component this is the usual Berezin integral.
    """
    a = u.a if a is None else a
    tang = (1 << a) - 1
    return u.restrict(tang).terms.get(tang, GQ(0))


def series_eval(u: MultiVector, coeffs) -> MultiVector:
    """Evaluate ``sum_k coeffs[k] * N^k`` for a nilpotent MultiVector ``N``.

    ``coeffs`` may be a sequence or a callable ``k -> c_k``; the sum stops at
    the nilpotency bound n//2 + 1 (even forms) or n + 1.
    """
    if u.scalar_part() != 0:
        raise ValueError("series_eval needs a nilpotent argument")
    get = coeffs if callable(coeffs) else (lambda k: coeffs[k] if k < len(coeffs) else 0)
    out = MultiVector.scalar(u.n, get(0), u.a)
    p = MultiVector.scalar(u.n, 1, u.a)
    for k in range(1, u.n + 1):
        p = p.wedge(u)
        if not p:
            break
        c = get(k)
        if c != 0:
            out = out + p.scale(c)
    return out


def mv_exp(u: MultiVector) -> MultiVector:
    """Exponential of a form; exact when the scalar part is zero."""
    c0 = u.scalar_part()
    nil = u.nilpotent_part()
    core = series_eval(nil, lambda k: GQ(mpq(1, math.factorial(k))))
    if c0 == 0:
        return core
    return core.scale(complex(np.exp(complex(c0))))
