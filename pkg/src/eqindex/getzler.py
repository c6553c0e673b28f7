"""Exact Volterra symbol calculus on a Gaussian-closed class.

A term is ``c * dx^I * x^alpha * xi^beta * tau^gamma * Q^{-k}`` with
``Q = |xi|^2 + i tau``.  Expressions are kept canonical: whenever ``k >= 1``
the tau power is eliminated through ``i tau = Q - |xi|^2``, so the monomials
``xi^beta tau^gamma`` (k = 0) and ``xi^beta Q^{-k}`` (k >= 1) form a basis and
equality of expressions is equality of coefficient dictionaries.

Conventions: ``D_x = -i d/dx``, Fourier kernel ``e^{i(x.xi + t tau)}``,
so the operator ``d/dt`` has symbol ``i tau`` and ``Q^{-1}`` is the heat
parametrix with kernel ``(4 pi t)^{-n/2} e^{-|z|^2/4t}`` for ``t > 0``.

Grading: parabolic degree ``|beta| + 2 gamma - 2k``; Getzler degree adds the
form degree and subtracts ``|alpha|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iproduct

import numpy as np

from .exterior import GQ, MultiVector, coerce, indices_of, is_exact, mask_of, mpq, popcount
from .charforms import FormMatrix, exact_det, exact_inverse

NEG_INF = -(10 ** 9)
I = GQ(0, 1)


def _zero_tuple(n: int) -> tuple:
    return (0,) * n


def _add_tuple(u, v):
    return tuple(a + b for a, b in zip(u, v))


def _unit(n: int, i: int) -> tuple:
    """Multi-index with a one in slot ``i`` (1-based)."""
    return tuple(int(j == i - 1) for j in range(n))


def clifford_mono_product(m1: int, m2: int) -> tuple[int, int]:
    """c(dx^{m1}) c(dx^{m2}) = sign * c(dx^{m1 xor m2}) with c_i^2 = -1."""
    swaps = 0
    b = m2
    while b:
        low = b & -b
        swaps += popcount(m1 & ~((low << 1) - 1))
        b ^= low
    swaps += popcount(m1 & m2)
    return (-1 if swaps & 1 else 1), m1 ^ m2


def wedge_mono_product(m1: int, m2: int) -> tuple[int, int]:
    if m1 & m2:
        return 0, 0
    s, m = clifford_mono_product(m1, m2)
    return s, m


@dataclass(frozen=True)
class VolterraTerm:
    """One monomial of a symbol.  ``form`` is a bitset of dx indices."""

    n: int
    coeff: object
    form: int
    alpha: tuple
    beta: tuple
    gamma: int
    k: int

    @property
    def key(self) -> tuple:
        return (self.form, self.alpha, self.beta, self.gamma, self.k)

    @property
    def form_degree(self) -> int:
        return popcount(self.form)

    @property
    def parabolic_degree(self) -> int:
        return sum(self.beta) + 2 * self.gamma - 2 * self.k

    @property
    def getzler_degree(self) -> int:
        return self.parabolic_degree + self.form_degree - sum(self.alpha)

    def form_mv(self, a: int | None = None) -> MultiVector:
        return MultiVector(self.n, {self.form: self.coeff}, a)


def parabolic_degree(t: VolterraTerm) -> int:
    return t.parabolic_degree


# canonical reduction ------------------------------------------------------------------------


def _binom(n: int, k: int) -> int:
    return math.comb(n, k)


def _q_power_poly(n: int, p: int) -> dict:
    """Q^p = (|xi|^2 + i tau)^p for p >= 0 as {(beta, gamma): coeff}."""
    out: dict = {}
    # multinomial over xi_1^2, ..., xi_n^2, i tau
    for parts in _compositions(p, n + 1):
        c = math.factorial(p)
        for e in parts:
            c //= math.factorial(e)
        beta = tuple(2 * e for e in parts[:n])
        g = parts[n]
        key = (beta, g)
        out[key] = out.get(key, GQ(0)) + GQ(c) * (I ** g)
    return out


def _compositions(total: int, slots: int):
    if slots == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, slots - 1):
            yield (first,) + rest


def _canonical(n: int, beta: tuple, gamma: int, k: int) -> list:
    """Rewrite xi^beta tau^gamma Q^{-k} in the canonical basis: list of (c, beta, gamma, k)."""
    if k <= 0:
        if k == 0:
            return [(GQ(1), beta, gamma, 0)]
        out = []
        for (b2, g2), c in _q_power_poly(n, -k).items():
            out.append((c, _add_tuple(beta, b2), gamma + g2, 0))
        return out
    if gamma == 0:
        return [(GQ(1), beta, 0, k)]
    # tau = -i (Q - |xi|^2)
    out = []
    mi = GQ(0, -1) ** gamma
    for s in range(gamma + 1):
        # C(gamma, s) Q^s (-|xi|^2)^{gamma - s}
        r = gamma - s
        sign = -1 if r % 2 else 1
        for parts in _compositions(r, n):
            c = math.factorial(r)
            for e in parts:
                c //= math.factorial(e)
            b2 = _add_tuple(beta, tuple(2 * e for e in parts))
            for c3, b3, g3, k3 in _canonical(n, b2, 0, k - s):
                out.append((mi * _binom(gamma, s) * sign * c * c3, b3, g3, k3))
    return out


# expressions ---------------------------------------------------------------------------------


class VolterraExpr:
    """Finite sum of :class:`VolterraTerm` over R^n, canonically merged."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        merged: dict = {}
        for key, c in (terms or {}).items():
            form, alpha, beta, gamma, k = key
            if len(alpha) != n or len(beta) != n or gamma < 0 or min(alpha + beta, default=0) < 0:
                raise ValueError(f"malformed term key {key}")
            if form >> n:
                raise ValueError("form index outside 1..n")
            c = coerce(c)
            if c == 0:
                continue
            for c2, b2, g2, k2 in _canonical(n, beta, gamma, k):
                kk = (form, alpha, b2, g2, k2)
                merged[kk] = merged.get(kk, GQ(0)) + c * c2
        self.terms = {kk: c for kk, c in merged.items() if c != 0}

    # constructors ------------------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> "VolterraExpr":
        return cls(n)

    @classmethod
    def term(cls, n: int, c=1, form=0, alpha=None, beta=None, gamma: int = 0, k: int = 0) -> "VolterraExpr":
        if not isinstance(form, int):
            form = mask_of(form)
        z = _zero_tuple(n)
        alpha = z if alpha is None else tuple(alpha)
        beta = z if beta is None else tuple(beta)
        return cls(n, {(form, alpha, beta, gamma, k): c})

    @classmethod
    def const(cls, n: int, c=1) -> "VolterraExpr":
        return cls.term(n, c)

    @classmethod
    def xi(cls, n: int, i: int) -> "VolterraExpr":
        return cls.term(n, beta=_unit(n, i))

    @classmethod
    def x(cls, n: int, i: int) -> "VolterraExpr":
        return cls.term(n, alpha=_unit(n, i))

    @classmethod
    def tau(cls, n: int) -> "VolterraExpr":
        return cls.term(n, gamma=1)

    @classmethod
    def heat_inverse(cls, n: int, k: int = 1) -> "VolterraExpr":
        """(|xi|^2 + i tau)^{-k}."""
        return cls.term(n, k=k)

    @classmethod
    def from_form(cls, u: MultiVector) -> "VolterraExpr":
        z = _zero_tuple(u.n)
        return cls(u.n, {(m, z, z, 0, 0): c for m, c in u.terms.items()})

    # protocol --------------------------------------------------------------------
    def term_list(self) -> list[VolterraTerm]:
        return [VolterraTerm(self.n, c, *key) for key, c in sorted(self.terms.items(), key=_sort_key)]

    def __iter__(self):
        return iter(self.term_list())

    def __len__(self):
        return len(self.terms)

    def __bool__(self):
        return bool(self.terms)

    def _check(self, other: "VolterraExpr"):
        if not isinstance(other, VolterraExpr) or other.n != self.n:
            raise ValueError("expressions over different dimensions")

    def __add__(self, other):
        if not isinstance(other, VolterraExpr):
            other = VolterraExpr.const(self.n, other)
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, GQ(0)) + c
        return VolterraExpr(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        if not isinstance(other, VolterraExpr):
            other = VolterraExpr.const(self.n, other)
        return self + (-other)

    def scale(self, c) -> "VolterraExpr":
        c = coerce(c)
        return VolterraExpr(self.n, {k: v * c for k, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, VolterraExpr):
            return self.times(other, "wedge")
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __eq__(self, other):
        if not isinstance(other, VolterraExpr):
            return NotImplemented
        return self.n == other.n and (self - other).terms == {}

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return "VolterraExpr(0)"
        parts = []
        for t in self.term_list()[:8]:
            parts.append(f"{t.coeff}*dx{list(indices_of(t.form))}*x^{t.alpha}*xi^{t.beta}*tau^{t.gamma}*Q^-{t.k}")
        more = "" if len(self.terms) <= 8 else f" + ... ({len(self.terms)} terms)"
        return "VolterraExpr(" + " + ".join(parts) + more + ")"

    @property
    def exact(self) -> bool:
        return all(is_exact(c) for c in self.terms.values())

    def is_polynomial(self) -> bool:
        """Polynomial in (xi, tau): the symbol of a differential operator."""
        return all(key[4] == 0 for key in self.terms)

    # products and derivatives ------------------------------------------------------
    def times(self, other: "VolterraExpr", product: str = "clifford") -> "VolterraExpr":
        """Pointwise product; form parts multiply by Clifford or wedge product."""
        self._check(other)
        mult = _form_product(product)
        out: dict = {}
        for (f1, a1, b1, g1, k1), c1 in self.terms.items():
            for (f2, a2, b2, g2, k2), c2 in other.terms.items():
                s, f = mult(f1, f2)
                if not s:
                    continue
                key = (f, _add_tuple(a1, a2), _add_tuple(b1, b2), g1 + g2, k1 + k2)
                out[key] = out.get(key, GQ(0)) + c1 * c2 * s
        return VolterraExpr(self.n, out)

    def d_x(self, i: int) -> "VolterraExpr":
        out = {}
        for (f, a, b, g, k), c in self.terms.items():
            if a[i - 1]:
                a2 = tuple(e - (j == i - 1) for j, e in enumerate(a))
                out[(f, a2, b, g, k)] = c * a[i - 1]
        return VolterraExpr(self.n, out)

    def D_x(self, i: int) -> "VolterraExpr":
        return self.d_x(i).scale(GQ(0, -1))

    def d_xi(self, i: int) -> "VolterraExpr":
        """d/dxi_i, using dQ^{-k}/dxi_i = -2k xi_i Q^{-k-1}."""
        out: dict = {}
        for (f, a, b, g, k), c in self.terms.items():
            if b[i - 1]:
                b2 = tuple(e - (j == i - 1) for j, e in enumerate(b))
                key = (f, a, b2, g, k)
                out[key] = out.get(key, GQ(0)) + c * b[i - 1]
            if k:
                b3 = tuple(e + (j == i - 1) for j, e in enumerate(b))
                key = (f, a, b3, g, k + 1)
                out[key] = out.get(key, GQ(0)) + c * (-2 * k)
        return VolterraExpr(self.n, out)

    def d_tau(self) -> "VolterraExpr":
        out: dict = {}
        for (f, a, b, g, k), c in self.terms.items():
            if g:
                key = (f, a, b, g - 1, k)
                out[key] = out.get(key, GQ(0)) + c * g
            if k:
                key = (f, a, b, g, k + 1)
                out[key] = out.get(key, GQ(0)) + c * (-k) * I
        return VolterraExpr(self.n, out)

    # grading ----------------------------------------------------------------------------
    def getzler_order(self) -> int:
        return getzler_order(self)

    def parabolic_order(self) -> int:
        if not self.terms:
            return NEG_INF
        return max(t.parabolic_degree for t in self.term_list())

    def graded(self) -> dict[int, "VolterraExpr"]:
        return rescale(self)

    def model_symbol(self) -> "VolterraExpr":
        return model_symbol(self)

    def filter(self, pred) -> "VolterraExpr":
        return VolterraExpr(self.n, {k: c for k, c in self.terms.items()
                                     if pred(VolterraTerm(self.n, c, *k))})

    def truncate_x(self, order: int) -> "VolterraExpr":
        """Drop terms with |alpha| > order."""
        return self.filter(lambda t: sum(t.alpha) <= order)

    def homogeneous_part(self, m: int) -> "VolterraExpr":
        """Parabolic-degree-m part q_m."""
        return self.filter(lambda t: t.parabolic_degree == m)

    # evaluation ---------------------------------------------------------------------------
    def evaluate(self, x, xi, tau, lam: float = 1.0, a: int | None = None) -> MultiVector:
        """Numeric value; ``lam`` applies the Getzler dilation literally.

        With lam != 1 the value is lam^{deg form} q(x/lam, lam xi, lam^2 tau),
        i.e. the dilation acting on every ingredient separately.
        """
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        xl, xil, taul = x / lam, xi * lam, tau * lam ** 2
        Q = float(xil @ xil) + 1j * taul
        out: dict = {}
        for (f, al, be, g, k), c in self.terms.items():
            v = complex(c) * (lam ** popcount(f))
            v *= np.prod(xl ** np.array(al)) * np.prod(xil ** np.array(be)) * taul ** g
            if k:
                v /= Q ** k
            out[f] = out.get(f, 0) + v
        return MultiVector(self.n, out, a)

    # serialization ------------------------------------------------------------------------
    def to_json(self) -> dict:
        rows = []
        for t in self.term_list():
            c = coerce(t.coeff)
            if isinstance(c, GQ):
                re, im = str(c.re), str(c.im)
            else:
                re, im = repr(complex(c).real), repr(complex(c).imag)
            rows.append({"form": list(indices_of(t.form)), "alpha": list(t.alpha),
                         "beta": list(t.beta), "gamma": t.gamma, "k": t.k, "re": re, "im": im})
        return {"n": self.n, "terms": rows}

    @classmethod
    def from_json(cls, d: dict) -> "VolterraExpr":
        n = int(d["n"])
        terms = {}
        for r in d["terms"]:
            re, im = r["re"], r.get("im", "0")
            try:
                c = GQ(mpq(re), mpq(im))
            except ValueError:
                c = complex(float(re), float(im))
            key = (mask_of(r["form"]), tuple(r["alpha"]), tuple(r["beta"]), int(r["gamma"]), int(r["k"]))
            terms[key] = terms.get(key, GQ(0)) + c
        return cls(n, terms)


def _sort_key(item):
    (f, a, b, g, k), _ = item
    return (k, g, b, a, f)


def _form_product(product: str):
    if product == "clifford":
        return clifford_mono_product
    if product == "wedge":
        return wedge_mono_product
    raise ValueError(f"unknown product {product!r}")


# grading -----------------------------------------------------------------------------------------


def getzler_order(e: VolterraExpr) -> int:
    """Max Getzler degree over terms; NEG_INF for the zero expression."""
    if not e.terms:
        return NEG_INF
    return max(t.getzler_degree for t in e.term_list())


def rescale(e: VolterraExpr) -> dict[int, VolterraExpr]:
    """Split ``e`` by Getzler degree: delta_lambda^* e = sum_d lambda^d e_d."""
    out: dict[int, dict] = {}
    for key, c in e.terms.items():
        d = VolterraTerm(e.n, c, *key).getzler_degree
        out.setdefault(d, {})[key] = c
    return {d: VolterraExpr(e.n, t) for d, t in sorted(out.items(), reverse=True)}


def model_symbol(e: VolterraExpr) -> VolterraExpr:
    """Coefficient of lambda^m with m the Getzler order."""
    parts = rescale(e)
    if not parts:
        return VolterraExpr.zero(e.n)
    return parts[max(parts)]


# composition -------------------------------------------------------------------------------------


def _multi_indices(bound: tuple):
    return iproduct(*(range(b + 1) for b in bound))


def compose(p: VolterraExpr, q: VolterraExpr, product: str = "clifford") -> VolterraExpr:
    """p # q = sum_alpha (1/alpha!) d_xi^alpha p . D_x^alpha q, finite for polynomial p."""
    p._check(q)
    if not p.is_polynomial():
        raise ValueError("left factor must be polynomial in (xi, tau)")
    n = p.n
    maxb = tuple(max((key[2][i] for key in p.terms), default=0) for i in range(n))
    out = VolterraExpr.zero(n)
    for al in _multi_indices(maxb):
        dp = p
        for i, e in enumerate(al):
            for _ in range(e):
                dp = dp.d_xi(i + 1)
        if not dp:
            continue
        dq = q
        for i, e in enumerate(al):
            for _ in range(e):
                dq = dq.D_x(i + 1)
        if not dq:
            continue
        fact = 1
        for e in al:
            fact *= math.factorial(e)
        out = out + dp.times(dq, product).scale(GQ(mpq(1, fact)))
    return out


def model_compose(p: VolterraExpr, q: VolterraExpr) -> VolterraExpr:
    """Composition of the Getzler-leading parts, with the wedge product on forms."""
    return compose(model_symbol(p), model_symbol(q), product="wedge")


def composition_defect(p: VolterraExpr, q: VolterraExpr) -> dict:
    """Getzler orders of p, q and of compose(p, q) - model_compose(p, q)."""
    m1, m2 = getzler_order(p), getzler_order(q)
    d = compose(p, q) - model_compose(p, q)
    return {"m1": m1, "m2": m2, "defect_order": getzler_order(d), "defect": d}


def random_symbol(rng, n: int, nterms: int = 3, polynomial: bool = True, maxdeg: int = 2) -> VolterraExpr:
    """Random exact symbol with small integer-rational coefficients; Q^{-k} factors when not polynomial."""
    terms: dict = {}
    for _ in range(nterms):
        mask = int(rng.integers(0, 1 << n))
        alpha = tuple(int(v) for v in rng.integers(0, maxdeg + 1, size=n))
        beta = tuple(int(v) for v in rng.integers(0, maxdeg + 1, size=n))
        gamma = int(rng.integers(0, 2)) if polynomial else 0
        k = 0 if polynomial else int(rng.integers(1, 3))
        c = GQ(mpq(int(rng.integers(-5, 6)) or 1, int(rng.integers(1, 4))), mpq(int(rng.integers(-3, 4)), 1))
        e = VolterraExpr.term(n, c, mask, alpha, beta, gamma, k)
        terms_e = e.terms
        for key, v in terms_e.items():
            terms[key] = terms.get(key, GQ(0)) + v
    return VolterraExpr(n, terms)


# Lichnerowicz -----------------------------------------------------------------------------------


def _riemann(R: FormMatrix, i: int, j: int, k: int, l: int):
    """Component R_{ijkl}: the dx^k ^ dx^l coefficient of R[i][j] (0-based)."""
    if k == l:
        return GQ(0)
    c = R.entries[i][j].terms.get((1 << k) | (1 << l), GQ(0))
    return c if k < l else -c


def _check_curvature(R: FormMatrix):
    if not isinstance(R, FormMatrix):
        raise TypeError("R must be a FormMatrix")
    n = R.size
    if R.n != n:
        raise ValueError("curvature forms must live on the same R^n")
    if not R.is_antisymmetric():
        raise ValueError("R must be antisymmetric")
    for row in R.entries:
        for u in row:
            if u.degrees() - {2}:
                raise ValueError("R entries must be 2-forms")


def _form_expr(u: MultiVector, alpha=None) -> VolterraExpr:
    n = u.n
    alpha = _zero_tuple(n) if alpha is None else alpha
    z = _zero_tuple(n)
    return VolterraExpr(n, {(m, alpha, z, 0, 0): c for m, c in u.terms.items()})


def spin_connection_symbol(R: FormMatrix, i: int) -> VolterraExpr:
    """Symbol of nabla_i = d_i - (1/4) sum_j R_ij x^j (i 1-based)."""
    n = R.size
    out = VolterraExpr.term(n, GQ(0, 1), beta=_unit(n, i))
    for j in range(1, n + 1):
        out = out + _form_expr(R.entries[i - 1][j - 1], _unit(n, j)).scale(GQ(mpq(-1, 4)))
    return out


def scalar_curvature(R: FormMatrix):
    n = R.size
    s = GQ(0)
    for i in range(n):
        for j in range(n):
            s = s + _riemann(R, i, j, i, j)
    return s


def lichnerowicz_symbol(R: FormMatrix, kappa=None) -> VolterraExpr:
    """Symbol of D^2 + d/dt in normal coordinates, through quadratic order in x.

    Uses g^{ij} = delta + (1/3) R_ikjl x^k x^l, Gamma^k_ij =
    -(1/3)(R_kijl + R_kjil) x^l and nabla_i = d_i - (1/4) R_ij x^j, composed
    with the Clifford product: D^2 = -g^{ij}(nabla_i nabla_j - Gamma^k_ij nabla_k) + kappa/4.
    """
    _check_curvature(R)
    n = R.size
    kappa = scalar_curvature(R) if kappa is None else coerce(kappa)
    third = GQ(mpq(1, 3))
    nab = [spin_connection_symbol(R, i) for i in range(1, n + 1)]
    out = VolterraExpr.zero(n)
    for i in range(n):
        for j in range(n):
            g = VolterraExpr.const(n, int(i == j))
            for k in range(n):
                for l in range(n):
                    c = _riemann(R, i, k, j, l)
                    if c:
                        g = g + VolterraExpr.term(n, c * third, alpha=_add_tuple(_unit(n, k + 1), _unit(n, l + 1)))
            inner = compose(nab[i], nab[j], "clifford")
            for k in range(n):
                gam = VolterraExpr.zero(n)
                for l in range(n):
                    c = _riemann(R, k, i, j, l) + _riemann(R, k, j, i, l)
                    if c:
                        gam = gam + VolterraExpr.term(n, -c * third, alpha=_unit(n, l + 1))
                if gam:
                    inner = inner - gam.times(nab[k], "clifford")
            out = out - g.times(inner, "clifford")
    out = out + VolterraExpr.const(n, kappa * GQ(mpq(1, 4)))
    out = out.truncate_x(2)
    return out + VolterraExpr.term(n, GQ(0, 1), gamma=1)


def model_of_dirac_squared(R: FormMatrix) -> VolterraExpr:
    """Getzler model of D^2 + d/dt: the symbol of H_R + i tau."""
    return model_symbol(lichnerowicz_symbol(R))


# inverse Fourier transform ----------------------------------------------------------------------


def _hermite_coeffs(m: int) -> list[int]:
    """Physicists' Hermite polynomial H_m as integer coefficients, low to high."""
    h0, h1 = [1], [0, 2]
    if m == 0:
        return h0
    for k in range(1, m):
        nxt = [0] * (k + 2)
        for i, c in enumerate(h1):
            nxt[i + 1] += 2 * c
        for i, c in enumerate(h0):
            nxt[i] -= 2 * k * c
        h0, h1 = h1, nxt
    return h1


def _gauss_deriv_1d(b: int, z: float, t: float) -> float:
    """d^b/dz^b of e^{-z^2/(4t)}."""
    s = z / (2 * math.sqrt(t))
    h = np.polynomial.polynomial.polyval(s, _hermite_coeffs(b))
    return (-1) ** b * (4 * t) ** (-b / 2) * h * math.exp(-z * z / (4 * t))


def inverse_fourier(term: VolterraTerm, z, time: float, x=None, a: int | None = None) -> MultiVector:
    """Inverse Fourier transform in (xi, tau) of one canonical term, at (z, time).

    ``xi^beta Q^{-k}`` maps to ``(-i d_z)^beta [t^{k-1}/(k-1)! (4 pi t)^{-n/2} e^{-|z|^2/4t}]``
    for t > 0 and to 0 for t <= 0.  ``x`` is the base point for the x^alpha
    factor (omitted means the monomial is dropped unless alpha = 0).
    """
    if term.k < 1:
        raise ValueError("no Volterra extension in this class for k = 0 (polynomial symbol)")
    if term.gamma:
        raise ValueError("non-canonical term: tau power with a pole")
    n = term.n
    z = np.asarray(z, dtype=float).reshape(n)
    if time <= 0:
        return MultiVector.zero(n, a)
    if x is None:
        xa = 1.0 if not any(term.alpha) else 0.0
    else:
        xa = float(np.prod(np.asarray(x, dtype=float) ** np.array(term.alpha)))
    val = time ** (term.k - 1) / math.factorial(term.k - 1) * (4 * math.pi * time) ** (-n / 2)
    g = 1.0
    for i in range(n):
        g *= _gauss_deriv_1d(term.beta[i], z[i], time)
    val *= g * (-1j) ** sum(term.beta) * xa
    return MultiVector(n, {term.form: complex(term.coeff) * val}, a)


def kernel(e: VolterraExpr, z, time: float, x=None, a: int | None = None) -> MultiVector:
    """Sum of term transforms; polynomial terms (supported at t = 0) are rejected."""
    out = MultiVector.zero(e.n, a)
    for t in e.term_list():
        out = out + inverse_fourier(t, z, time, x, a)
    return out


# I_Q coefficients --------------------------------------------------------------------------------


def _gauss_moment(e: int):
    """int u^e e^{-u^2/4} du divided by sqrt(4 pi): (e-1)!! 2^{e/2} for even e."""
    if e % 2:
        return 0
    p = e // 2
    df = 1
    for j in range(1, 2 * p, 2):
        df *= j
    return df * 2 ** p


def _poly_mul(p1: dict, p2: dict) -> dict:
    out: dict = {}
    for e1, c1 in p1.items():
        for e2, c2 in p2.items():
            e = _add_tuple(e1, e2)
            out[e] = out.get(e, 0) + c1 * c2
    return out


def _linear_power(row, power: int, b: int) -> dict:
    out = {_zero_tuple(b): 1}
    lin = {tuple(int(j == l) for j in range(b)): row[l] for l in range(b) if row[l] != 0}
    for _ in range(power):
        out = _poly_mul(out, lin)
    return out


def _hermite_poly_scaled(m: int, l: int, b: int, exact: bool) -> dict:
    """(-1)^m 2^{-m} H_m(u_l / 2) as a polynomial in u (the t = 1 Gaussian derivative factor)."""
    out = {}
    for p, c in enumerate(_hermite_coeffs(m)):
        if c:
            coef = Fraction((-1) ** m * c, 2 ** (m + p))
            e = tuple(p if j == l else 0 for j in range(b))
            out[e] = GQ(mpq(coef.numerator, coef.denominator)) if exact else float(coef)
    return out


def _normal_data(dec, b: int):
    Phi = dec.rotation()
    if Phi.shape != (b, b):
        raise ValueError("rotation size does not match the normal dimension")
    if any(th <= 0 for th in dec.angles) or 2 * len(dec.angles) != b:
        raise ValueError("theta_j = 0 in the normal rotation")
    exact = dec.exact and Phi.dtype == object
    if exact:
        M = np.empty((b, b), dtype=object)
        for i in range(b):
            for j in range(b):
                M[i, j] = GQ(int(i == j)) - Phi[i, j]
        N = exact_inverse(M)
        det = exact_det(M)
    else:
        M = np.eye(b) - np.asarray(Phi, dtype=float)
        N = np.linalg.inv(M)
        det = float(np.linalg.det(M))
    return exact, N, det


def _term_integral(term: VolterraTerm, a: int, N, det, exact: bool):
    """int_{R^b} v^alpha'' f_check((0, (1-phi')v), 1) dv without the (4 pi)^{-a/2} factor."""
    n = term.n
    b = n - a
    beta_t, beta_n = term.beta[:a], term.beta[a:]
    alpha_n = term.alpha[a:]
    # tangential factor: derivatives of e^{-z^2/4} at z = 0
    tang = 1
    for m in beta_t:
        h0 = _hermite_coeffs(m)[0]
        if h0 == 0:
            return 0
        coef = Fraction((-1) ** m * h0, 2 ** m)
        tang = tang * (GQ(mpq(coef.numerator, coef.denominator)) if exact else float(coef))
    poly = {_zero_tuple(b): 1}
    for j in range(b):
        if alpha_n[j]:
            poly = _poly_mul(poly, _linear_power(N[j], alpha_n[j], b))
    for l in range(b):
        if beta_n[l]:
            poly = _poly_mul(poly, _hermite_poly_scaled(beta_n[l], l, b, exact))
    total = 0
    for e, c in poly.items():
        mom = 1
        for ei in e:
            mom *= _gauss_moment(ei)
            if not mom:
                break
        if mom:
            total = total + c * mom
    if not exact:
        total = complex(total)
    phase = GQ(0, -1) ** sum(term.beta) if exact else (-1j) ** sum(term.beta)
    inv_fact = GQ(mpq(1, math.factorial(term.k - 1))) if exact else 1 / math.factorial(term.k - 1)
    val = coerce(term.coeff) * phase * inv_fact * tang * total
    if complex(det).real <= 0:
        raise ValueError("det(1 - phi') must be positive for a rotation")
    return val / det


def iq_expansion(q: VolterraExpr, dec, a: int, prefactor: bool = True) -> dict:
    """I_Q(0, t) = sum_p t^p C_p exactly on the class; returns {p (Fraction): MultiVector}.

    Terms with tangential x-dependence vanish at the base point, polynomial
    terms are supported at t = 0 and do not contribute for t > 0.  The
    multiplier phi^E(x,0)^{-1} phi^E(x,v) is taken to be the identity (flat model).
    """
    n = q.n
    b = n - a
    if b < 0 or a % 2:
        raise ValueError("invalid split")
    if b:
        exact, N, det = _normal_data(dec, b)
    else:
        exact, N, det = True, None, GQ(1)
    exact = exact and q.exact
    out: dict = {}
    for t in q.term_list():
        if t.k == 0 or any(t.alpha[:a]):
            continue
        p = Fraction(sum(t.alpha[a:]) - a - 2 - t.parabolic_degree, 2)
        v = _term_integral(t, a, N, det, exact)
        if v == 0:
            continue
        if prefactor and a:
            v = complex(v) * (4 * math.pi) ** (-a / 2)
        cur = out.get(p, MultiVector.zero(n, a))
        out[p] = cur + MultiVector(n, {t.form: v}, a)
    return {p: v for p, v in sorted(out.items()) if v}


def iq_coefficients(q: VolterraExpr, dec, a: int, jmax: int | None = None, prefactor: bool = True) -> list:
    """I_Q^{(j)} in I_Q(0,t) ~ sum_j t^{-(a/2 + [m/2] + 1) + j} I_Q^{(j)}, m the parabolic order.

    Raises if a half-integer power survives (it cannot: odd Gaussian moments vanish).
    """
    m = q.parabolic_order()
    if m == NEG_INF:
        return []
    lead = Fraction(-(a // 2 + m // 2 + 1))
    exp = iq_expansion(q, dec, a, prefactor)
    for p in exp:
        if p.denominator != 1:
            raise AssertionError(f"half-integer power t^{p} with nonzero coefficient")
        if p < lead:
            raise AssertionError(f"power t^{p} below the predicted leading power")
    top = max([int(p - lead) for p in exp], default=0)
    jmax = top if jmax is None else jmax
    return [exp.get(lead + j, MultiVector.zero(q.n, a)) for j in range(jmax + 1)]


def principal_leading(q: VolterraExpr, dec, a: int, prefactor: bool = True) -> MultiVector:
    """|1 - phi'|^{-1} int q_m_check(0; 0, v; 1) dv, the principal-symbol formula for I_Q^{(0)}."""
    m = q.parabolic_order()
    qm = q.homogeneous_part(m).filter(lambda t: not any(t.alpha))
    exp = iq_expansion(qm, dec, a, prefactor)
    lead = Fraction(-(a // 2 + m // 2 + 1))
    return exp.get(lead, MultiVector.zero(q.n, a))


# parity lemma ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class HeatParametrix:
    """Stand-in for (D^2 + d/dt)^{-1}: Getzler order -2, model (H_R + d/dt)^{-1}."""

    Rp: FormMatrix | None
    Rpp: FormMatrix

    @property
    def n(self) -> int:
        return self.Rpp.n

    def getzler_order(self) -> int:
        return -2


def parity_asymptotics(q, a: int, dec=None) -> list[dict]:
    """Classify sigma[I_Q(0,t)]^{(j)} by the parity of m - j.

    Odd: O(t^{(j-m-a-1)/2}) with no coefficient.  Even: leading power
    (j-m-a)/2 - 1 with coefficient I_{Q_(m)}(0,1)^{(j)}; the model value comes
    from mehler.I_HR for a heat parametrix and from the exact expansion otherwise.
    """
    from .mehler import I_HR

    if isinstance(q, HeatParametrix):
        m = -2
        model_val = I_HR(q.Rp, q.Rpp, dec, 1)
        n = q.n
    else:
        m = getzler_order(q)
        n = q.n
        mod = model_symbol(q)
        exp = iq_expansion(mod, dec, a)
        model_val = MultiVector.zero(n, a)
        for v in exp.values():
            model_val = model_val + v
    rows = []
    for j in range(n + 1):
        if (m - j) % 2:
            rows.append({"degree": j, "parity": "odd", "bound": Fraction(j - m - a - 1, 2), "coefficient": None})
        else:
            rows.append({"degree": j, "parity": "even", "power": Fraction(j - m - a, 2) - 1,
                         "remainder": Fraction(j - m - a, 2),
                         "coefficient": model_val.component(j)})
    return rows


def graded_iq(q: VolterraExpr, dec, a: int) -> dict:
    """{(form degree, power): MultiVector} from the exact expansion, for checking the parity lemma."""
    out: dict = {}
    for p, v in iq_expansion(q, dec, a).items():
        for j in v.degrees():
            c = v.component(j)
            if c:
                out[(j, p)] = c
    return out
