"""Finite-dimensional (twisted) spectral triples.

A triple is a Z/2-graded space H = H^+ + H^-, an odd selfadjoint D, an even
algebra given by a linear basis of matrices, and an automorphism sigma.
Everything is dense numpy linear algebra; tolerances follow the rank guard
band below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

RANK_TOL = 1e-8
GUARD_LO, GUARD_HI = 1e-10, 1e-6
SPAN_TOL = 1e-8


class RankError(ValueError):
    """Singular values fell inside the guard band."""


# automorphisms ------------------------------------------------------------------------


class Automorphism:
    kind = "abstract"

    def __call__(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


class IdentityTwist(Automorphism):
    kind = "identity"

    def __call__(self, a):
        return a


@dataclass
class InnerTwist(Automorphism):
    """a -> e^{-h} a e^{h}."""

    h: np.ndarray
    kind: str = "inner"
    _eh: np.ndarray = field(default=None, repr=False)
    _emh: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._eh = expm(self.h)
        self._emh = expm(-self.h)

    def __call__(self, a):
        return self._emh @ a @ self._eh


@dataclass
class ConjugatedTwist(Automorphism):
    """a -> L sigma(R a R^{-1}) L^{-1} style composite: a -> left @ inner(right_inv @ a @ right) @ left_inv."""

    inner: Automorphism
    left: np.ndarray
    left_inv: np.ndarray
    right: np.ndarray
    right_inv: np.ndarray
    kind: str = "conjugated"

    def __call__(self, a):
        return self.left @ self.inner(self.right_inv @ a @ self.right) @ self.left_inv


@dataclass
class BasisTwist(Automorphism):
    """Linear map fixed by the images of a basis (used for scaling twists)."""

    basis: list
    images: list
    kind: str = "basis"

    def __call__(self, a):
        c = _coords(self.basis, a)
        return sum(ci * im for ci, im in zip(c, self.images))


def _coords(basis: Sequence[np.ndarray], a: np.ndarray, tol: float = SPAN_TOL) -> np.ndarray:
    B = np.stack([b.ravel() for b in basis], axis=1)
    c, *_ = np.linalg.lstsq(B, a.ravel(), rcond=None)
    res = np.linalg.norm(B @ c - a.ravel())
    if res > tol * max(1.0, np.linalg.norm(a)):
        raise ValueError(f"element outside the algebra span (residual {res:.2e})")
    return c


def algebra_basis(gens: Sequence[np.ndarray], max_words: int = 64, include_unit: bool = True,
                  tol: float = 1e-10) -> list:
    """Linear basis of the *-algebra generated by ``gens`` (words up to ``max_words``)."""
    d = gens[0].shape[0]
    gens = list(gens) + [g.conj().T for g in gens]
    words = [np.eye(d, dtype=complex)] if include_unit else []
    words += [np.asarray(g, dtype=complex) for g in gens]
    basis: list = []

    def add(m):
        if not basis:
            if np.linalg.norm(m) > tol:
                basis.append(m)
                return True
            return False
        B = np.stack([b.ravel() for b in basis], axis=1)
        c, *_ = np.linalg.lstsq(B, m.ravel(), rcond=None)
        if np.linalg.norm(B @ c - m.ravel()) > tol * max(1.0, np.linalg.norm(m)):
            basis.append(m)
            return True
        return False

    frontier = [w for w in words if add(w)]
    for _ in range(max_words - 1):
        new = []
        for w in frontier:
            for g in gens:
                m = w @ g
                if add(m):
                    new.append(m)
        if not new:
            break
        frontier = new
    return basis


# triples ---------------------------------------------------------------------------------


@dataclass
class FiniteTriple:
    """(A, H, D, sigma) with grading gamma; ``basis`` None means "any even matrix"."""

    D: np.ndarray
    gamma: np.ndarray
    basis: list | None = None
    sigma: Automorphism = field(default_factory=IdentityTwist)
    closed: bool = True

    def __post_init__(self):
        D, g = self.D, self.gamma
        if not np.allclose(D, D.conj().T, atol=1e-12):
            raise ValueError("D must be selfadjoint")
        if not np.allclose(g @ g, np.eye(len(g)), atol=1e-12) or not np.allclose(g, g.conj().T):
            raise ValueError("gamma must be a selfadjoint involution")
        if not np.allclose(g @ D, -D @ g, atol=1e-12):
            raise ValueError("D must be odd")
        for b in self.basis or []:
            if not np.allclose(g @ b, b @ g, atol=1e-12):
                raise ValueError("algebra elements must be even")

    @property
    def dim(self) -> int:
        return self.D.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        ev = np.real(np.diag(self.gamma)) if _is_diag(self.gamma) else np.linalg.eigvalsh(self.gamma)
        return int(np.sum(ev > 0)), int(np.sum(ev < 0))

    def check_element(self, a: np.ndarray):
        if self.basis is not None:
            _coords(self.basis, a)
        elif not np.allclose(self.gamma @ a, a @ self.gamma, atol=1e-10):
            raise ValueError("element is not even")

    def supertrace(self, A: np.ndarray) -> complex:
        return complex(np.einsum("ij,ji->", self.gamma, A))


def _is_diag(m):
    return np.allclose(m, np.diag(np.diag(m)))


def standard_grading(p: int, m: int) -> np.ndarray:
    return np.diag(np.r_[np.ones(p), -np.ones(m)]).astype(complex)


def odd_operator(M: np.ndarray) -> np.ndarray:
    """[[0, M^*], [M, 0]] mapping H^+ (dim M.shape[1]) to H^- (dim M.shape[0])."""
    r, c = M.shape
    D = np.zeros((c + r, c + r), dtype=complex)
    D[c:, :c] = M
    D[:c, c:] = M.conj().T
    return D


def twisted_commutator(T: FiniteTriple, a: np.ndarray) -> np.ndarray:
    """[D, a]_sigma = D a - sigma(a) D."""
    T.check_element(a)
    return T.D @ a - T.sigma(a) @ T.D


def _is_selfadjoint(h, tol=1e-12):
    return np.allclose(h, h.conj().T, atol=tol)


def conformal_deform(T: FiniteTriple, h: np.ndarray) -> FiniteTriple:
    """D_h = e^{-h/2} D e^{-h/2}, sigma_h(a) = e^{-h/2} sigma(e^{-h/2} a e^{h/2}) e^{h/2}.

    For sigma = id this is the inner automorphism a -> e^{-h} a e^{h}.
    """
    if not _is_selfadjoint(h):
        raise ValueError("h must be selfadjoint")
    T.check_element(h)
    k = expm(-h / 2)
    ki = expm(h / 2)
    Dh = k @ T.D @ k
    Dh = (Dh + Dh.conj().T) / 2
    if isinstance(T.sigma, IdentityTwist):
        sig = InnerTwist(h)
    else:
        sig = ConjugatedTwist(T.sigma, k, ki, ki, k)
    return FiniteTriple(Dh, T.gamma, T.basis, sig, T.closed)


def scaling_twist(T: FiniteTriple, U: np.ndarray, lam: float, tol: float = 1e-10) -> FiniteTriple:
    """Adjoin elements aU with sigma(aU) = lam^{-1} sigma_T(a) U, given U D U^* = lam D.

    In finite dimensions a unitary U forces lam = 1 (spectra are preserved),
    so lam != 1 needs U = lam^{1/2} V with V a unitary symmetry of D.  The
    twist is then defined on span{a} + span{aU} only, which must be a direct
    sum; the resulting triple is flagged ``closed=False``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if np.linalg.norm(U @ T.D @ U.conj().T - lam * T.D) > tol:
        raise ValueError("U does not implement the scaling U D U^* = lam D")
    if not np.allclose(T.gamma @ U, U @ T.gamma):
        raise ValueError("U must be even")
    if np.allclose(U, np.eye(len(U))) and lam == 1:
        return T
    base = T.basis if T.basis is not None else [np.eye(T.dim, dtype=complex)]
    new = [b @ U for b in base]
    full = list(base) + new
    B = np.stack([m.ravel() for m in full], axis=1)
    if np.linalg.matrix_rank(B, tol=1e-10) < len(full):
        raise ValueError("span{a} and span{aU} overlap; the twist would not be well defined")
    images = [T.sigma(b) for b in base] + [T.sigma(b) @ U / lam for b in base]
    return FiniteTriple(T.D, T.gamma, full, BasisTwist(full, images), closed=False)


# modules and indices -------------------------------------------------------------------------


@dataclass
class Idempotent:
    """q x q matrix over the algebra, stored as a (q d) x (q d) matrix with blocks e_{ij}."""

    e: np.ndarray
    q: int

    def __post_init__(self):
        if np.linalg.norm(self.e @ self.e - self.e) > 1e-10 * max(1.0, np.linalg.norm(self.e)):
            raise ValueError("e is not idempotent")

    def blocks(self, d: int):
        return [[self.e[i * d:(i + 1) * d, j * d:(j + 1) * d] for j in range(self.q)] for i in range(self.q)]

    @property
    def selfadjoint(self) -> bool:
        return np.allclose(self.e, self.e.conj().T, atol=1e-10)


def ampliate(M: np.ndarray, q: int) -> np.ndarray:
    """M tensor 1_q in the block layout used by :class:`Idempotent`."""
    return np.kron(np.eye(q), M)


def _apply_blockwise(f: Callable, e: Idempotent, d: int) -> np.ndarray:
    out = np.zeros_like(e.e)
    for i, row in enumerate(e.blocks(d)):
        for j, b in enumerate(row):
            out[i * d:(i + 1) * d, j * d:(j + 1) * d] = f(b)
    return out


def sigma_of(T: FiniteTriple, e: Idempotent) -> np.ndarray:
    return _apply_blockwise(T.sigma, e, T.dim)


def check_idempotent(T: FiniteTriple, e: Idempotent):
    if e.e.shape != (e.q * T.dim, e.q * T.dim):
        raise ValueError("idempotent has the wrong size")
    for row in e.blocks(T.dim):
        for b in row:
            T.check_element(b)


def _range_basis(P: np.ndarray) -> np.ndarray:
    """Orthonormal basis of range(P), with the guard-band check on singular values."""
    if P.size == 0:
        return np.zeros((P.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(P)
    scale = max(1.0, s[0] if len(s) else 1.0)
    rel = s / scale
    if np.any((rel > GUARD_LO) & (rel < GUARD_HI)):
        raise RankError("singular values inside the rank guard band")
    r = int(np.sum(rel > RANK_TOL))
    return u[:, :r]


def _rank(M: np.ndarray) -> int:
    if min(M.shape) == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    scale = max(1.0, s[0])
    rel = s / scale
    if np.any((rel > GUARD_LO) & (rel < GUARD_HI)):
        raise RankError("singular values inside the rank guard band")
    return int(np.sum(rel > RANK_TOL))


def _chiral_projections(T: FiniteTriple, q: int):
    g = ampliate(T.gamma, q)
    Pp = (np.eye(len(g)) + g) / 2
    Pm = (np.eye(len(g)) - g) / 2
    return Pp, Pm


def index_pair(T: FiniteTriple, e: Idempotent, perturbation: np.ndarray | None = None) -> tuple[int, int]:
    """(ind D^+_{e,sigma}, ind D^-_{e,sigma}) as dim ker - dim coker between the chiral ranges."""
    check_idempotent(T, e)
    q = e.q
    se = sigma_of(T, e)
    Dq = ampliate(T.D, q)
    if perturbation is not None:
        Dq = Dq + perturbation
    Pp, Pm = _chiral_projections(T, q)
    out = []
    for Pin, Pout in ((Pp, Pm), (Pm, Pp)):
        V = _range_basis(e.e @ Pin)
        W = _range_basis(se @ Pout)
        M = W.conj().T @ se @ Dq @ V
        r = _rank(M)
        out.append((V.shape[1] - r) - (W.shape[1] - r))
    return out[0], out[1]


def twisted_index(T: FiniteTriple, e: Idempotent) -> float:
    """(ind^+ - ind^-)/2 for D_{e,sigma} = sigma(e)(D x 1) from e H^pm to sigma(e) H^mp.

    In finite dimensions ind^pm reduce to differences of subspace dimensions.
    """
    ip, im = index_pair(T, e)
    return (ip - im) / 2


def dimension_index(T: FiniteTriple, e: Idempotent) -> float:
    """Rank-only evaluation of :func:`twisted_index` (independent route)."""
    q = e.q
    se = sigma_of(T, e)
    Pp, Pm = _chiral_projections(T, q)
    ep, em = _rank(e.e @ Pp), _rank(e.e @ Pm)
    sp, sm = _rank(se @ Pp), _rank(se @ Pm)
    return ((ep - sm) - (em - sp)) / 2


def sigma_connection_index(T: FiniteTriple, e: Idempotent, perturbation: np.ndarray | None = None) -> float:
    """Index of the Dirac operator of a sigma-connection: Grassmannian plus a perturbation.

    The perturbation must be an odd operator on H^q mapping e H^q into sigma(e) H^q
    (a module map in this setting); it is applied as sigma(e) B e.
    """
    if perturbation is not None:
        g = ampliate(T.gamma, e.q)
        if not np.allclose(g @ perturbation, -perturbation @ g, atol=1e-10):
            raise ValueError("perturbation must be odd")
        se = sigma_of(T, e)
        perturbation = se @ perturbation @ e.e
    ip, im = index_pair(T, e, perturbation)
    return (ip - im) / 2


# cocycles -------------------------------------------------------------------------------------


def _dinv(T: FiniteTriple) -> np.ndarray:
    s = np.linalg.svd(T.D, compute_uv=False)
    if s[-1] < 1e-12 * max(1.0, s[0]):
        raise ValueError("D is singular; the cocycle needs an invertible D")
    return np.linalg.inv(T.D)


def twisted_cocycle(T: FiniteTriple, k: int, args: Sequence[np.ndarray], Dinv: np.ndarray | None = None) -> complex:
    """tau_{2k}(a^0,...,a^{2k}) = (1/2) k!/(2k)! Str(D^{-1}[D,a^0]_sigma ... D^{-1}[D,a^{2k}]_sigma)."""
    if len(args) != 2 * k + 1:
        raise ValueError("need 2k+1 arguments")
    Di = _dinv(T) if Dinv is None else Dinv
    prod = np.eye(T.dim, dtype=complex)
    for a in args:
        prod = prod @ (Di @ twisted_commutator(T, a))
    c = 0.5 * math.factorial(k) / math.factorial(2 * k)
    return c * T.supertrace(prod)


def hochschild_b(T: FiniteTriple, k: int, args: Sequence[np.ndarray]) -> complex:
    """(b tau_{2k})(a^0, ..., a^{2k+1}) with the untwisted Hochschild boundary."""
    n = 2 * k + 1
    if len(args) != n + 1:
        raise ValueError("need 2k+2 arguments")
    Di = _dinv(T)
    total = 0j
    for j in range(n):
        new = list(args[:j]) + [args[j] @ args[j + 1]] + list(args[j + 2:])
        total += (-1) ** j * twisted_cocycle(T, k, new, Di)
    last = [args[n] @ args[0]] + list(args[1:n])
    total += (-1) ** n * twisted_cocycle(T, k, last, Di)
    return total


def pairing_constant(k: int) -> float:
    """(2k)!/k!, fixed so that <tau_{2k}, e> is independent of k and <tau_0, e> = Str-rank."""
    return math.factorial(2 * k) / math.factorial(k)


def pair_with_idempotent(T: FiniteTriple, e: Idempotent, k: int) -> complex:
    """<tau_{2k}, e> = (2k)!/k! (tr x tau_{2k})(e, ..., e), requires e = e^*."""
    if not e.selfadjoint:
        raise ValueError("pairing requires a selfadjoint idempotent")
    check_idempotent(T, e)
    q = e.q
    Tq = FiniteTriple(ampliate(T.D, q), ampliate(T.gamma, q), None, _AmpliatedTwist(T.sigma, T.dim, q))
    return pairing_constant(k) * twisted_cocycle(Tq, k, [e.e] * (2 * k + 1))


@dataclass
class _AmpliatedTwist(Automorphism):
    inner: Automorphism
    d: int
    q: int
    kind: str = "ampliated"

    def __call__(self, a):
        return _blockmap(self.inner, a, self.d, self.q)


def _blockmap(f, a, d, q):
    out = np.zeros_like(a)
    for i in range(q):
        for j in range(q):
            out[i * d:(i + 1) * d, j * d:(j + 1) * d] = f(a[i * d:(i + 1) * d, j * d:(j + 1) * d])
    return out


def sigma_derivation_residual(T: FiniteTriple, a: np.ndarray, b: np.ndarray) -> float:
    """|| d(ab) - d(a) b - sigma(a) d(b) || with d = [D, .]_sigma."""
    lhs = twisted_commutator(T, a @ b)
    rhs = twisted_commutator(T, a) @ b + T.sigma(a) @ twisted_commutator(T, b)
    return float(np.linalg.norm(lhs - rhs))


def bimodule_residual(T: FiniteTriple, a1, b1, a2, b2) -> float:
    """a2 (a1 [D,b1]_sigma) b2 expanded with the sigma-derivation rule."""
    lhs = a2 @ (a1 @ twisted_commutator(T, b1)) @ b2
    # [D, b1 b2]_sigma = [D,b1]_sigma b2 + sigma(b1)[D,b2]_sigma
    rhs = (a2 @ a1) @ (twisted_commutator(T, b1 @ b2) - T.sigma(b1) @ twisted_commutator(T, b2))
    return float(np.linalg.norm(lhs - rhs))


# random instances ------------------------------------------------------------------------------


def random_triple(rng: np.random.Generator, p: int = 4, m: int = 4, n_gens: int = 2) -> FiniteTriple:
    """Random even algebra (block matrices) with an invertible odd D on C^p + C^m."""
    if p != m:
        raise ValueError("invertible odd D needs dim H^+ = dim H^-")
    M = rng.normal(size=(m, p)) + 1j * rng.normal(size=(m, p))
    D = odd_operator(M)
    g = standard_grading(p, m)
    gens = []
    for _ in range(n_gens):
        A = rng.normal(size=(p, p)) + 1j * rng.normal(size=(p, p))
        B = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        gens.append(np.block([[A, np.zeros((p, m))], [np.zeros((m, p)), B]]))
    return FiniteTriple(D, g, algebra_basis(gens))


def random_selfadjoint_element(T: FiniteTriple, rng: np.random.Generator, scale: float = 0.3) -> np.ndarray:
    c = rng.normal(size=len(T.basis)) + 1j * rng.normal(size=len(T.basis))
    a = sum(ci * b for ci, b in zip(c, T.basis))
    h = (a + a.conj().T) / 2
    h = h / max(1.0, np.linalg.norm(h, 2)) * scale
    T.check_element(h)
    return h


def random_element(T: FiniteTriple, rng: np.random.Generator) -> np.ndarray:
    c = rng.normal(size=len(T.basis)) + 1j * rng.normal(size=len(T.basis))
    a = sum(ci * b for ci, b in zip(c, T.basis))
    return a / max(1.0, np.linalg.norm(a, 2))


# JSON ---------------------------------------------------------------------------------------


def _mat_to_json(M: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in r] for r in np.asarray(M, dtype=complex)]


def _mat_from_json(d, where: str) -> np.ndarray:
    try:
        M = np.array([[complex(re, im) for re, im in r] for r in d], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{where}: expected rows of [re, im] pairs") from exc
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{where}: expected a square matrix")
    return M


def triple_to_json(T: FiniteTriple, generators: Sequence[np.ndarray], h: np.ndarray | None = None) -> dict:
    """Untwisted data plus an optional conformal factor h; sigma is rebuilt on load."""
    out = {"schema": "eqindex.triple/1", "D": _mat_to_json(T.D), "gamma": _mat_to_json(T.gamma),
           "generators": [_mat_to_json(g) for g in generators]}
    if h is not None:
        out["h"] = _mat_to_json(h)
    return out


def triple_from_json(d: dict) -> FiniteTriple:
    """Load {"D", "gamma", "generators", optional "h"}; with h the conformally deformed triple is returned."""
    for key in ("D", "gamma", "generators"):
        if key not in d:
            raise ValueError(f"root: missing key {key!r}")
    D = _mat_from_json(d["D"], "D")
    g = _mat_from_json(d["gamma"], "gamma")
    gens = [_mat_from_json(m, f"generators[{i}]") for i, m in enumerate(d["generators"])]
    T = FiniteTriple(D, g, algebra_basis(gens) if gens else None)
    if "h" in d:
        T = conformal_deform(T, _mat_from_json(d["h"], "h"))
    return T
