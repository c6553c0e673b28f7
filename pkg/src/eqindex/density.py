"""Fixed-point index densities and the local cocycle components built from them.

Forms on a component live in Lambda(R^n) with split ``a``: indices 1..a are
tangential to the fixed-point set, a+1..n normal.  The normal rotation is a
:class:`PlanarDecomposition` acting on the last ``b`` coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .charforms import FormMatrix, a_hat, nu_phi
from .clifford import PlanarDecomposition, rotation_from_angles, rotation_from_half_angles
from .exterior import GQ, MultiVector, berezin_a, coerce, mpq
from .mehler import I_HR, mehler_kernel_R
from . import getzler as gz


@dataclass(frozen=True)
class FixedComponent:
    """One component M_a^phi of the fixed-point set.

    ``nodes``/``weights`` are a quadrature rule on the component (a single
    node of weight 1 for an isolated point); ``frame`` holds ambient tangent
    vectors e_1..e_a used to restrict differentials.  ``lift_sign`` multiplies
    the spinor lift and hence every density.
    """

    n: int
    a: int
    dec: PlanarDecomposition | None = None
    Rp: FormMatrix | None = None
    Rpp: FormMatrix | None = None
    weight: float = 1.0
    lift_sign: int = 1
    label: str = ""
    nodes: np.ndarray | None = field(default=None, compare=False)
    weights: np.ndarray | None = field(default=None, compare=False)
    frame: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.a % 2 or not 0 <= self.a <= self.n or self.n % 2:
            raise ValueError(f"invalid dimensions n={self.n}, a={self.a}")
        if self.lift_sign not in (1, -1):
            raise ValueError("lift_sign must be +1 or -1")
        if self.b:
            if self.dec is None or self.dec.dim != self.b:
                raise ValueError("normal rotation missing or of the wrong size")
            if len(self.dec.angles) * 2 != self.b or any(t <= 0 for t in self.dec.angles):
                raise ValueError("normal rotation must have all theta_j in (0, pi]")
        for R, m in ((self.Rp, self.a), (self.Rpp, self.b)):
            if R is not None:
                if R.size != m or R.n != self.n:
                    raise ValueError("curvature block has the wrong size")
                if not R.is_antisymmetric():
                    raise ValueError("curvature must be antisymmetric")

    @property
    def b(self) -> int:
        return self.n - self.a

    def tangential_curvature(self) -> FormMatrix:
        if self.Rp is not None:
            return self.Rp
        return FormMatrix.zeros(self.a, self.n, self.a)

    def normal_curvature(self) -> FormMatrix:
        if self.Rpp is not None:
            return self.Rpp
        return FormMatrix.zeros(self.b, self.n, self.a)

    def with_sign(self, s: int) -> "FixedComponent":
        return FixedComponent(self.n, self.a, self.dec, self.Rp, self.Rpp, self.weight, s,
                              self.label, self.nodes, self.weights, self.frame)

    # serialization --------------------------------------------------------------
    def to_json(self) -> dict:
        d = {"n": self.n, "a": self.a, "weight": repr(float(self.weight)),
             "lift_sign": self.lift_sign, "label": self.label}
        if self.dec is not None:
            if self.dec.exact:
                d["half"] = [[str(coerce(c)), str(coerce(s))] for c, s in self.dec.half]
            else:
                d["angles"] = [repr(float(t)) for t in self.dec.angles]
            d["orientation"] = self.dec.orientation
        if self.Rp is not None:
            d["Rp"] = self.Rp.to_json()
        if self.Rpp is not None:
            d["Rpp"] = self.Rpp.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict, where: str = "component") -> "FixedComponent":
        try:
            n, a = int(d["n"]), int(d["a"])
        except KeyError as e:
            raise ValueError(f"{where}: missing field {e.args[0]!r}") from None
        dec = None
        if n - a:
            if "half" in d:
                dec = rotation_from_half_angles([(GQ.parse(c), GQ.parse(s)) for c, s in d["half"]])
            elif "angles" in d:
                dec = rotation_from_angles([float(t) for t in d["angles"]])
            else:
                raise ValueError(f"{where}: normal rotation needs 'half' or 'angles'")
            if int(d.get("orientation", 1)) == -1:
                dec = _flip_orientation(dec)
        Rp = FormMatrix.from_json(d["Rp"]) if "Rp" in d else None
        Rpp = FormMatrix.from_json(d["Rpp"]) if "Rpp" in d else None
        try:
            return cls(n, a, dec, Rp, Rpp, float(d.get("weight", 1.0)), int(d.get("lift_sign", 1)),
                       str(d.get("label", "")))
        except ValueError as e:
            raise ValueError(f"{where}: {e}") from None


def _flip_orientation(dec: PlanarDecomposition) -> PlanarDecomposition:
    return PlanarDecomposition(dec.dim, dec.angles, dec.planes, dec.fixed_frame,
                               -dec.orientation, dec.half, dec.matrix)


@dataclass(frozen=True)
class FunctionJets:
    """Values f^j(x0) and tangential differentials d'f^j (degree-1 forms on indices <= a)."""

    values: tuple
    diffs: tuple

    def __post_init__(self):
        if len(self.values) != len(self.diffs):
            raise ValueError("values and differentials differ in length")
        for u in self.diffs:
            if u.degrees() - {1}:
                raise ValueError("differentials must be 1-forms")
            if any(m >> u.a for m in u.terms):
                raise ValueError("d'f has normal components")


def flat_jets(n: int, a: int, values, grads) -> FunctionJets:
    """Jets from values and gradient vectors; only the first ``a`` entries are kept."""
    diffs = []
    for g in grads:
        g = np.asarray(g)
        diffs.append(MultiVector(n, {1 << i: complex(g[i]) for i in range(a) if g[i] != 0}, a))
    return FunctionJets(tuple(values), tuple(diffs))


# local densities ------------------------------------------------------------------------


def _phase(n: int):
    return GQ(0, -1) ** (n // 2)


def characteristic_form(c: FixedComponent) -> MultiVector:
    """A-hat(R') ^ nu_phi(R'') on the component."""
    out = MultiVector.scalar(c.n, 1, c.a)
    if c.a:
        out = out.wedge(a_hat(c.tangential_curvature()))
    if c.b:
        out = out.wedge(nu_phi(c.normal_curvature(), c.dec))
    return out


def _norm_const(n: int, a: int):
    """(-i)^{n/2} (2 pi)^{-a/2}, exact when a = 0."""
    ph = _phase(n)
    return ph if a == 0 else complex(ph) * (2 * math.pi) ** (-a / 2)


def local_density(c: FixedComponent):
    """(-i)^{n/2} (2 pi)^{-a/2} |A-hat ^ nu_phi|^{(a)}, times the lift sign."""
    top = berezin_a(characteristic_form(c), c.a)
    return _norm_const(c.n, c.a) * top * c.lift_sign


def density_via_model(c: FixedComponent):
    """Same density assembled from the supertrace identity and the Mehler value I_HR(0,1).

    (-2i)^{n/2} 2^{-b/2} det^{1/2}(1 - phi^N) |I_HR(0,1)|^{(a,0)}; the powers of
    two and pi reconcile to (-i)^{n/2} (2 pi)^{-a/2}.
    """
    if c.b == 0:
        # phi = id: the diagonal of the Mehler kernel, (-2i)^{n/2} |K_R(0, 0, 1)|^{(n)}
        val = mehler_kernel_R(c.tangential_curvature(), np.zeros(c.n), np.zeros(c.n), 1)
        return complex(GQ(0, -2) ** (c.n // 2)) * complex(berezin_a(val, c.a)) * c.lift_sign
    Rp = c.tangential_curvature() if c.a else None
    val = I_HR(Rp, c.normal_curvature(), c.dec, 1)
    top = berezin_a(val, c.a)
    pre = GQ(0, -2) ** (c.n // 2) * GQ(mpq(1, 2 ** (c.b // 2)))
    return pre * c.dec.det_half() * top * c.lift_sign


def total_density(components: Sequence[FixedComponent]):
    """sum_c weight * density, reduced pairwise in input order."""
    vals = [local_density(c) * c.weight for c in components]
    return _pairwise([complex(v) for v in vals])


def _pairwise(vals: list):
    if not vals:
        return 0j
    while len(vals) > 1:
        vals = [vals[i] + vals[i + 1] if i + 1 < len(vals) else vals[i] for i in range(0, len(vals), 2)]
    return vals[0]


# differentiable asymptotics ----------------------------------------------------------------


def omega_k(c: FixedComponent, jets: FunctionJets, k: int) -> MultiVector:
    """A-hat ^ nu_phi ^ f^0 d'f^1 ^ ... ^ d'f^{2k}; zero when 2k > a."""
    if len(jets.values) < 2 * k + 1:
        raise ValueError("need 2k+1 functions")
    if 2 * k > c.a:
        return MultiVector.zero(c.n, c.a)
    w = characteristic_form(c).scale(jets.values[0])
    for j in range(1, 2 * k + 1):
        w = w.wedge(jets.diffs[j].with_split(c.a))
    return w


def dirac_symbol(R: FormMatrix | None, n: int) -> gz.VolterraExpr:
    """Symbol of D = sum_i c(dx^i) nabla_i in the Getzler calculus (frame corrections dropped)."""
    R = FormMatrix.zeros(n, n) if R is None else R
    out = gz.VolterraExpr.zero(n)
    for i in range(1, n + 1):
        ci = gz.VolterraExpr.from_form(MultiVector.dx(n, i))
        out = out + ci.times(gz.spin_connection_symbol(R, i), "clifford")
    return out


def _function_symbol(n: int, value, grad, hess=None) -> gz.VolterraExpr:
    out = gz.VolterraExpr.const(n, coerce(value))
    for i, g in enumerate(grad):
        if g:
            out = out + gz.VolterraExpr.term(n, coerce(g), alpha=gz._unit(n, i + 1))
    if hess is not None:
        for i in range(n):
            for j in range(n):
                if hess[i][j]:
                    out = out + gz.VolterraExpr.term(n, coerce(hess[i][j]) * GQ(mpq(1, 2)),
                                                     alpha=gz._add_tuple(gz._unit(n, i + 1), gz._unit(n, j + 1)))
    return out


def pk_alpha_symbol(R: FormMatrix | None, n: int, funcs, alpha: Sequence[int]) -> gz.VolterraExpr:
    """Symbol of f^0 [D, f^1]^{[alpha_1]} ... [D, f^{2k}]^{[alpha_2k]}.

    ``funcs`` are (value, gradient[, hessian]) tuples on R^n; T^{[j]} is the
    j-fold iterated commutator with D^2.
    """
    R = FormMatrix.zeros(n, n) if R is None else R
    D = dirac_symbol(R, n)
    D2 = gz.lichnerowicz_symbol(R) - gz.VolterraExpr.term(n, GQ(0, 1), gamma=1)
    fs = [_function_symbol(n, *f) for f in funcs]
    out = fs[0]
    for j, f in enumerate(fs[1:]):
        T = gz.compose(D, f) - gz.compose(f, D)
        for _ in range(alpha[j]):
            T = gz.compose(D2, T) - gz.compose(T, D2)
        out = gz.compose(out, T)
    return out


def pka_leading(c: FixedComponent, jets: FunctionJets, k: int, alpha: Sequence[int] | None = None,
                funcs=None) -> dict:
    """Leading small-time behaviour of Str[P_{k,alpha} e^{-tD^2} U_phi] localized on ``c``.

    alpha = 0: power -k with coefficient (-i)^{n/2}(2 pi)^{-a/2} |omega_k|^{(a)}.
    alpha != 0: the Getzler order of P_{k,alpha} is computed from its symbol
    and the parity lemma gives the bound exponent.
    """
    alpha = tuple(alpha or (0,) * (2 * k))
    if len(alpha) != 2 * k:
        raise ValueError("alpha must have 2k entries")
    if not any(alpha):
        coeff = _norm_const(c.n, c.a) * berezin_a(omega_k(c, jets, k), c.a) * c.lift_sign
        return {"power": -k, "coeff": coeff}
    n = c.n
    if funcs is None:
        funcs = [(jets.values[j], [complex(jets.diffs[j].coeff((i,))) for i in range(1, n + 1)])
                 for j in range(2 * k + 1)]
    R = None
    if c.a and c.Rp is not None and c.b == 0:
        R = c.Rp
    P = pk_alpha_symbol(R, n, funcs, alpha)
    m_p = gz.getzler_order(P)
    if m_p == gz.NEG_INF:
        return {"bound": None, "getzler_order": None, "reference": -(sum(alpha) + k), "vanishes": True}
    bound_claim = 2 * k + 2 * sum(alpha) - 1
    if m_p > bound_claim:
        raise AssertionError(f"Getzler order {m_p} exceeds 2k + 2|alpha| - 1 = {bound_claim}")
    # Q = P (D^2 + d/dt)^{-1} has order m_p - 2; the (a,0) component is degree j = a
    m = m_p - 2
    if (m - c.a) % 2:
        power = Fraction(c.a - m - c.a - 1, 2)
    else:
        power = Fraction(c.a - m - c.a, 2) - 1
    return {"bound": power, "getzler_order": m_p, "reference": -(sum(alpha) + k)}


# CM cocycle -----------------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineIsometry:
    """x -> A x + c on R^n (descending to the torus when A preserves the lattice)."""

    A: np.ndarray
    c: np.ndarray

    def __call__(self, x):
        return x @ self.A.T + self.c

    def inverse(self) -> "AffineIsometry":
        Ai = self.A.T
        return AffineIsometry(Ai, -(Ai @ self.c))

    def compose(self, other: "AffineIsometry") -> "AffineIsometry":
        """self o other."""
        return AffineIsometry(self.A @ other.A, self.A @ other.c + self.c)

    @classmethod
    def identity(cls, n: int) -> "AffineIsometry":
        return cls(np.eye(n), np.zeros(n))


@dataclass(frozen=True)
class SmoothFunction:
    """A function with value and gradient callables on arrays of points (N, n)."""

    value: Callable
    grad: Callable

    def pullback(self, psi: AffineIsometry) -> "SmoothFunction":
        """f o psi, with gradient psi.A^T (grad f)(psi x)."""
        return SmoothFunction(lambda x: self.value(psi(x)), lambda x: self.grad(psi(x)) @ psi.A)


def compose_word(words: Sequence[AffineIsometry]) -> AffineIsometry:
    out = AffineIsometry.identity(len(words[0].c))
    for w in words:
        out = out.compose(w)
    return out


def twisted_functions(funcs: Sequence[SmoothFunction], words: Sequence[AffineIsometry]):
    """f~^j = f^j o phi_0^{-1} o ... o phi_{j-1}^{-1}."""
    out = [funcs[0]]
    psi = AffineIsometry.identity(len(words[0].c))
    for j in range(1, len(funcs)):
        psi = psi.compose(words[j - 1].inverse())
        out.append(funcs[j].pullback(psi))
    return out


def cm_component(components: Sequence[FixedComponent], words: Sequence[AffineIsometry],
                 funcs: Sequence[SmoothFunction], k: int):
    """(-i)^{n/2}/(2k)! sum_a (2 pi)^{-a/2} int_{M_a} A-hat ^ nu ^ f^0 d'f~^1 ^ ... ^ d'f~^{2k}.

    ``components`` describe the fixed set of phi_0 o ... o phi_{2k} and carry
    quadrature nodes, weights and tangent frames.
    """
    if len(funcs) != 2 * k + 1 or len(words) != 2 * k + 1:
        raise ValueError("need 2k+1 functions and group elements")
    ft = twisted_functions(funcs, words)
    total = []
    for c in components:
        if 2 * k > c.a:
            continue
        if c.nodes is None:
            raise ValueError("component lacks quadrature nodes")
        x = np.atleast_2d(c.nodes)
        w = np.ones(len(x)) if c.weights is None else np.asarray(c.weights)
        frame = np.zeros((c.n, 0)) if c.frame is None else np.asarray(c.frame)
        char = characteristic_form(c)
        vals = ft[0].value(x)
        grads = [f.grad(x) @ frame for f in ft[1:]]  # (N, a)
        top = berezin_a(char, c.a)
        if k == 0:
            dens = complex(top) * vals
        else:
            dens = np.zeros(len(x), dtype=complex)
            for i in range(len(x)):
                wedge = MultiVector.scalar(c.n, complex(vals[i]), c.a)
                for g in grads:
                    wedge = wedge.wedge(MultiVector(c.n, {1 << l: complex(g[i, l]) for l in range(c.a)}, c.a))
                dens[i] = complex(berezin_a(char.wedge(wedge), c.a))
        contrib = _norm_const(c.n, c.a) / math.factorial(2 * k) * c.lift_sign
        total.append(complex(contrib) * _pairwise(list(w * dens)))
    return _pairwise(total)


# Mellin ---------------------------------------------------------------------------------------


def mellin_residue(expansion: dict, s) -> complex:
    """Coefficient of t^{-s} in {power: coeff}; absent powers give 0."""
    s = Fraction(s).limit_denominator(8)
    for p, c in expansion.items():
        if Fraction(p).limit_denominator(8) == -s:
            return c
    return 0


# JSON -----------------------------------------------------------------------------------------


def load_fixed_points(data) -> list[FixedComponent]:
    if isinstance(data, dict):
        data = data.get("components", None)
        if data is None:
            raise ValueError("root: expected a list or an object with 'components'")
    if not isinstance(data, list):
        raise ValueError("root: expected a list of components")
    return [FixedComponent.from_json(d, f"components[{i}]") for i, d in enumerate(data)]


def dump_fixed_points(components: Sequence[FixedComponent]) -> dict:
    return {"schema": "eqindex.fixed_points/1", "components": [c.to_json() for c in components]}
