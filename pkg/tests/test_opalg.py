"""Tests of the exact operator-string algebra and coefficient tables."""

from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floqpert import opalg
from floqpert.opalg import (
    StringSum,
    add,
    adjoint,
    build_L,
    build_N_powers,
    compose,
    heff_table,
    projector,
    scale,
    vjoin,
    w_table,
)

# Frozen reference tables for the multiplicity coefficients.  Keys are ordered
# (m_{r-1}, ..., m_1) for the effective Hamiltonian and (m_r, ..., m_1) for
# the transformation; values are exact rationals.

HEFF_ORDER_3 = {
    (0, 2): F(-1, 2),
    (1, 1): F(1),
    (2, 0): F(-1, 2),
}

HEFF_ORDER_4 = {
    (0, 0, 3): F(1, 2),
    (0, 1, 2): F(-1, 2),
    (0, 2, 1): F(-1, 2),
    (1, 0, 2): F(-1, 2),
    (1, 1, 1): F(1),
    (1, 2, 0): F(-1, 2),
    (2, 0, 1): F(-1, 2),
    (2, 1, 0): F(-1, 2),
    (3, 0, 0): F(1, 2),
}

HEFF_ORDER_5 = {
    (0, 0, 0, 4): F(-1, 2),
    (0, 0, 1, 3): F(1, 2),
    (0, 0, 2, 2): F(1, 2),
    (0, 0, 3, 1): F(1, 2),
    (0, 1, 0, 3): F(1, 2),
    (0, 1, 1, 2): F(-1, 2),
    (0, 1, 2, 1): F(-1, 2),
    (0, 2, 0, 2): F(3, 8),
    (0, 2, 1, 1): F(-1, 2),
    (1, 0, 0, 3): F(1, 2),
    (1, 0, 1, 2): F(-1, 2),
    (1, 0, 2, 1): F(-1, 2),
    (1, 1, 0, 2): F(-1, 2),
    (1, 1, 1, 1): F(1),
    (1, 1, 2, 0): F(-1, 2),
    (1, 2, 0, 1): F(-1, 2),
    (1, 2, 1, 0): F(-1, 2),
    (1, 3, 0, 0): F(1, 2),
    (2, 0, 0, 2): F(1, 4),
    (2, 0, 1, 1): F(-1, 2),
    (2, 0, 2, 0): F(3, 8),
    (2, 1, 0, 1): F(-1, 2),
    (2, 1, 1, 0): F(-1, 2),
    (2, 2, 0, 0): F(1, 2),
    (3, 0, 0, 1): F(1, 2),
    (3, 0, 1, 0): F(1, 2),
    (3, 1, 0, 0): F(1, 2),
    (4, 0, 0, 0): F(-1, 2),
}

W_ORDER_2 = {
    (0, 2): F(-1, 2),
    (1, 1): F(1),
    (2, 0): F(-1),
}

W_ORDER_3 = {
    (0, 0, 3): F(1, 2),
    (0, 1, 2): F(-1, 2),
    (0, 2, 1): F(-1, 2),
    (0, 3, 0): F(1, 2),
    (1, 0, 2): F(-1, 2),
    (1, 1, 1): F(1),
    (1, 2, 0): F(-1),
    (2, 0, 1): F(-1),
    (2, 1, 0): F(-1),
    (3, 0, 0): F(1),
}

W_ORDER_4 = {
    (0, 0, 0, 4): F(-1, 2),
    (0, 0, 1, 3): F(1, 2),
    (0, 0, 2, 2): F(1, 2),
    (0, 0, 3, 1): F(1, 2),
    (0, 0, 4, 0): F(-1, 2),
    (0, 1, 0, 3): F(1, 2),
    (0, 1, 1, 2): F(-1, 2),
    (0, 1, 2, 1): F(-1, 2),
    (0, 1, 3, 0): F(1, 2),
    (0, 2, 0, 2): F(3, 8),
    (0, 2, 1, 1): F(-1, 2),
    (0, 2, 2, 0): F(1, 2),
    (0, 3, 0, 1): F(1, 2),
    (0, 3, 1, 0): F(1, 2),
    (0, 4, 0, 0): F(-1, 2),
    (1, 0, 0, 3): F(1, 2),
    (1, 0, 1, 2): F(-1, 2),
    (1, 0, 2, 1): F(-1, 2),
    (1, 0, 3, 0): F(1, 2),
    (1, 1, 0, 2): F(-1, 2),
    (1, 1, 1, 1): F(1),
    (1, 1, 2, 0): F(-1),
    (1, 2, 0, 1): F(-1),
    (1, 2, 1, 0): F(-1),
    (1, 3, 0, 0): F(1),
    (2, 0, 0, 2): F(1, 2),
    (2, 0, 1, 1): F(-1),
    (2, 0, 2, 0): F(1),
    (2, 1, 0, 1): F(-1),
    (2, 1, 1, 0): F(-1),
    (2, 2, 0, 0): F(1),
    (3, 0, 0, 1): F(1),
    (3, 0, 1, 0): F(1),
    (3, 1, 0, 0): F(1),
    (4, 0, 0, 0): F(-1),
}


def test_heff_tables_match_reference_exactly():
    assert heff_table(2).entries == {(1,): F(1)}
    assert heff_table(3).entries == HEFF_ORDER_3
    assert heff_table(4).entries == HEFF_ORDER_4
    assert heff_table(5).entries == HEFF_ORDER_5


def test_w_tables_match_reference_exactly():
    assert w_table(1).entries == {(1,): F(1)}
    assert w_table(2).entries == W_ORDER_2
    assert w_table(3).entries == W_ORDER_3
    assert w_table(4).entries == W_ORDER_4


def test_w_table_is_asymmetric_under_reversal():
    # the transformation table has no reversal symmetry, unlike heff
    table = w_table(2)
    assert table[(2, 0)] == F(-1)
    assert table[(0, 2)] == F(-1, 2)


@pytest.mark.parametrize("r", range(2, 9))
def test_heff_table_reversal_symmetry(r):
    table = heff_table(r)
    for tup, coeff in table.entries.items():
        assert table[tup[::-1]] == coeff


@pytest.mark.parametrize("r", range(1, 9))
def test_tuple_sums(r):
    assert all(sum(t) == r - 1 for t in heff_table(r).entries)
    assert all(sum(t) == r for t in w_table(r).entries)
    assert all(len(t) == r - 1 for t in heff_table(r).entries)
    assert all(len(t) == r for t in w_table(r).entries)


def test_trivial_coefficient_is_one():
    for r in range(2, 8):
        assert heff_table(r)[(1,) * (r - 1)] == F(1)
        assert w_table(r)[(1,) * r] == F(1)


def test_compose_projector_idempotent():
    p = projector()
    assert compose(p, p).terms == {(0,): F(1)}


def test_compose_annihilates_mixed_boundaries():
    p = projector()
    rvp = StringSum(1, {(1, 0): F(1)})
    assert not compose(p, rvp)
    assert not compose(adjoint(rvp), p)


def test_compose_merges_resolvent_exponents():
    # hand-composed adjoint(L_1) . L_1 gives the second-order normalization
    l1 = build_L(1)
    prod = compose(adjoint(l1), l1)
    assert prod.terms == {(0, 2, 0): F(1)}
    assert build_N_powers(2)[0].terms == prod.terms


def test_wave_operator_low_orders():
    assert build_L(0).terms == {(0,): F(1)}
    assert build_L(1).terms == {(1, 0): F(1)}
    # one recurrence step by hand: L_2 = R V L_1 - R L_1 V L_0
    assert build_L(2).terms == {(1, 1, 0): F(1), (2, 0, 0): F(-1)}


def test_wave_operator_boundary_slots():
    for r in range(1, 7):
        for tup in build_L(r).terms:
            assert tup[0] >= 1
            assert tup[-1] == 0


def test_normalization_low_orders():
    n0, h0, m0 = build_N_powers(0)
    assert n0.terms == h0.terms == m0.terms == {(0,): F(1)}
    n1, h1, m1 = build_N_powers(1)
    assert not n1 and not h1 and not m1
    n2 = build_N_powers(2)[0]
    assert n2.terms == {(0, 2, 0): F(1)}


def test_normalization_strings_are_p_bounded():
    for r in range(0, 7):
        for s in build_N_powers(r):
            for tup in s.terms:
                assert tup[0] == 0 and tup[-1] == 0


@pytest.mark.parametrize("r", range(0, 7))
def test_w_unitarity_order_by_order(r):
    # sum_k adjoint(W_k) W_{r-k} telescopes to P at r=0 and vanishes after
    total = add(
        *(compose(adjoint(opalg._w_sum(k)), opalg._w_sum(r - k)) for k in range(r + 1))
    )
    if r == 0:
        assert total.terms == {(0,): F(1)}
    else:
        assert not total


def test_adjoint_is_an_involution_and_respects_coefficients():
    s = opalg._w_sum(3)
    assert adjoint(adjoint(s)).terms == s.terms
    # rational coefficients conjugate to themselves
    assert all(isinstance(c, F) for c in adjoint(s).terms.values())


tuples = st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=4)


@st.composite
def string_sums(draw):
    order = draw(st.integers(min_value=0, max_value=3))
    n_terms = draw(st.integers(min_value=0, max_value=4))
    terms = {}
    for _ in range(n_terms):
        tup = tuple(
            draw(st.integers(min_value=0, max_value=3)) for _ in range(order + 1)
        )
        coeff = F(draw(st.integers(-4, 4)), draw(st.integers(1, 4)))
        if coeff:
            terms[tup] = coeff
    return StringSum(order, terms)


@given(string_sums(), string_sums(), string_sums())
@settings(max_examples=80, deadline=None)
def test_compose_is_associative_and_bilinear(a, b, c):
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert left.terms == right.terms
    distributed = add(compose(a, c), compose(b, c)) if a.order == b.order else None
    if distributed is not None:
        assert compose(add(a, b), c).terms == distributed.terms


@given(string_sums(), string_sums())
@settings(max_examples=80, deadline=None)
def test_adjoint_reverses_products(a, b):
    assert adjoint(compose(a, b)).terms == compose(adjoint(b), adjoint(a)).terms
    assert adjoint(vjoin(a, b)).terms == vjoin(adjoint(b), adjoint(a)).terms


def test_zero_coefficients_are_never_stored():
    a = StringSum(0, {(1,): F(1)})
    b = scale(a, -1)
    assert not add(a, b).terms


def test_disk_cache_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv(opalg.CACHE_ENV_VAR, str(tmp_path))
    table = opalg.CoefficientTable("heff", 5, dict(HEFF_ORDER_5))
    opalg._store_cached(table)
    loaded = opalg._load_cached("heff", 5)
    assert loaded is not None
    assert loaded.entries == HEFF_ORDER_5
    # corrupt files are ignored rather than trusted
    path = opalg._cache_path("heff", 5)
    path.write_text("garbage\n1 2 3\n")
    assert opalg._load_cached("heff", 5) is None
