from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from eqindex.exterior import (GQ, MultiVector, berezin_a, berezin_a0, component, component_kl, mask_of,
                              wedge)

N = 4


@st.composite
def multivectors(draw, n=N, homogeneous=None):
    terms = {}
    for _ in range(draw(st.integers(0, 5))):
        m = draw(st.integers(0, (1 << n) - 1))
        if homogeneous is not None and bin(m).count("1") != homogeneous:
            continue
        re = draw(st.integers(-6, 6))
        im = draw(st.integers(-6, 6))
        den = draw(st.integers(1, 5))
        terms[m] = GQ(re, im) / den
    return MultiVector(n, terms, 2)


def test_wedge_antisymmetry():
    dx1 = MultiVector.dx(2, 1)
    assert wedge(dx1, dx1) == MultiVector.zero(2)


def test_wedge_sign_rule():
    dx1, dx2 = MultiVector.dx(2, 1), MultiVector.dx(2, 2)
    assert wedge(dx1, dx2) == MultiVector.monomial(2, [1, 2])
    assert wedge(dx2, dx1) == MultiVector.monomial(2, [1, 2], -1)


def test_wedge_distributivity():
    one = MultiVector.scalar(2)
    dx1, dx2 = MultiVector.dx(2, 1), MultiVector.dx(2, 2)
    assert wedge(one + dx1, one + dx2) == one + dx1 + dx2 + MultiVector.monomial(2, [1, 2])


def test_wedge_dimension_mismatch():
    with pytest.raises(ValueError):
        wedge(MultiVector.dx(2, 1), MultiVector.dx(4, 1))


def test_component_examples():
    u = MultiVector.scalar(2, 3) + MultiVector.monomial(2, [1, 2], 5)
    assert component(u, 2) == MultiVector.monomial(2, [1, 2], 5)
    w = MultiVector.monomial(4, [1, 3], 1, 2)
    assert component_kl(w, 1, 1) == w
    v = MultiVector.monomial(4, [1, 2], 1, 2)
    assert component_kl(v, 2, 0) == v


def test_component_out_of_range():
    with pytest.raises(ValueError):
        component(MultiVector.dx(2, 1), 5)


def test_berezin_examples():
    assert berezin_a0(MultiVector.monomial(2, [1, 2], 7, 2), 2) == 7
    assert berezin_a0(MultiVector.monomial(4, [1, 3], 1, 2), 2) == 0
    assert berezin_a0(MultiVector.scalar(2, 1, 0), 0) == 1


def test_berezin_a_on_tangential_factor():
    u = MultiVector.monomial(4, [1, 2], 3, 2) + MultiVector.monomial(4, [1, 2, 3, 4], 5, 2)
    assert berezin_a(u, 2) == 3


@settings(max_examples=60, deadline=None)
@given(multivectors(homogeneous=1), multivectors(homogeneous=2), multivectors(homogeneous=1))
def test_graded_commutativity(u, v, w):
    assert wedge(u, v) == wedge(v, u)
    assert wedge(u, w) == -wedge(w, u)


@settings(max_examples=60, deadline=None)
@given(multivectors(), multivectors(), multivectors())
def test_associativity(u, v, w):
    assert wedge(wedge(u, v), w) == wedge(u, wedge(v, w))


@settings(max_examples=60, deadline=None)
@given(multivectors())
def test_decompositions_reconstruct(u):
    total = MultiVector.zero(N, 2)
    for j in range(N + 1):
        total = total + component(u, j)
    assert total == u
    total = MultiVector.zero(N, 2)
    for k in range(3):
        for l in range(3):
            total = total + component_kl(u, k, l)
    assert total == u
    assert component(component(u, 2), 2) == component(u, 2)


@settings(max_examples=40, deadline=None)
@given(multivectors(), multivectors(), st.integers(-3, 3))
def test_berezin_linear(u, v, c):
    assert berezin_a0(u + v.scale(GQ(c)), 2) == berezin_a0(u, 2) + GQ(c) * berezin_a0(v, 2)


@settings(max_examples=30, deadline=None)
@given(multivectors())
def test_json_roundtrip(u):
    d = json.loads(json.dumps(u.to_json()))
    assert set(d) == {"n", "a", "terms"}
    assert MultiVector.from_json(d) == u


def test_no_zero_terms_stored():
    u = MultiVector.dx(2, 1) - MultiVector.dx(2, 1)
    assert not u.terms


def test_mask_of_orders_indices():
    assert mask_of([2, 1]) == mask_of([1, 2]) == 0b11


def test_float_conversion_is_explicit():
    u = MultiVector.monomial(2, [1], GQ(1) / 3)
    assert u.exact
    assert not u.to_complex().exact
    assert abs(complex(u.to_complex().coeff([1])) - 1 / 3) < 1e-15
