import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from propvol.errors import InvalidInputError
from propvol.linalg import elementary_symmetric
from propvol.oracle import brute_coeff_sum, reference_hardcore_series
from propvol.tpoly import (CompactVectorSet, LogScaled, TruncPoly3, coeff_intersection_sums,
                           coeff_sum_without_rep, hardcore_series, log_comb, log_sum, poly_det,
                           size_sums, sum_det_containing, sum_det_containing_spread, tp_add,
                           tp_inv_unit, tp_mul, SPREAD_MAX_SUBSETS)


def P(caps, terms):
    """Polynomial from {(a, b, c): coef}."""
    arr = np.zeros(tuple(c + 1 for c in caps))
    for idx, v in terms.items():
        arr[idx] = v
    return TruncPoly3(caps, arr)


CAPS = (2, 2, 2)
ONE = TruncPoly3.constant(1.0, CAPS)
T1 = TruncPoly3.monomial(1, 0, 0, CAPS)
T2 = TruncPoly3.monomial(0, 1, 0, CAPS)


def test_add():
    assert tp_add(ONE, T1).allclose(P(CAPS, {(0, 0, 0): 1, (1, 0, 0): 1}))
    zero = TruncPoly3.constant(0.0, CAPS)
    assert (T1 + zero).allclose(T1)
    assert ((T1 + T2) + (T1 - T2)).allclose(P(CAPS, {(1, 0, 0): 2}))


def test_mul_truncates():
    caps = (1, 0, 0)
    t1 = TruncPoly3.monomial(1, 0, 0, caps)
    assert (t1 * t1).allclose(TruncPoly3.constant(0.0, caps))


def test_mul_product():
    caps = (1, 1, 0)
    a = TruncPoly3.constant(1.0, caps) + TruncPoly3.monomial(1, 0, 0, caps)
    b = TruncPoly3.constant(1.0, caps) + TruncPoly3.monomial(0, 1, 0, caps)
    want = P(caps, {(0, 0, 0): 1, (1, 0, 0): 1, (0, 1, 0): 1, (1, 1, 0): 1})
    assert tp_mul(a, b).allclose(want)
    assert (a * TruncPoly3.constant(1.0, caps)).allclose(a)


def test_cap_mismatch():
    with pytest.raises(InvalidInputError):
        tp_add(ONE, TruncPoly3.constant(1.0, (1, 1, 1)))


def test_inverse_geometric_series():
    caps = (3, 0, 0)
    p = P(caps, {(0, 0, 0): 1, (1, 0, 0): -1})
    assert tp_inv_unit(p).allclose(P(caps, {(i, 0, 0): 1 for i in range(4)}))
    assert tp_inv_unit(TruncPoly3.constant(2.0, caps)).allclose(TruncPoly3.constant(0.5, caps))


def test_inverse_needs_unit():
    with pytest.raises(InvalidInputError):
        tp_inv_unit(T1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_inverse_roundtrip(seed):
    rng = np.random.default_rng(seed)
    caps = tuple(int(c) for c in rng.integers(0, 4, 3))
    arr = rng.uniform(-1, 1, tuple(c + 1 for c in caps))
    arr[0, 0, 0] = rng.choice([-1, 1]) * rng.uniform(0.5, 2)
    p = TruncPoly3(caps, arr)
    assert (p * tp_inv_unit(p)).allclose(TruncPoly3.constant(1.0, caps), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_mul_commutative_associative(seed):
    rng = np.random.default_rng(seed)
    caps = tuple(int(c) for c in rng.integers(0, 3, 3))
    a, b, c = (TruncPoly3(caps, rng.standard_normal(tuple(x + 1 for x in caps)))
               for _ in range(3))
    assert (a * b).allclose(b * a, atol=1e-12)
    assert ((a * b) * c).allclose(a * (b * c), atol=1e-10)


def test_det_diagonal():
    caps = (1, 1, 0)
    one = TruncPoly3.constant(1.0, caps)
    a = one + TruncPoly3.monomial(1, 0, 0, caps)
    b = one + TruncPoly3.monomial(0, 1, 0, caps)
    z = TruncPoly3.constant(0.0, caps)
    want = P(caps, {(0, 0, 0): 1, (1, 0, 0): 1, (0, 1, 0): 1, (1, 1, 0): 1})
    assert poly_det([[a, z], [z, b]]).allclose(want)


def test_det_numeric(rng):
    caps = (0, 0, 0)
    A = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    D = poly_det([[TruncPoly3.constant(v, caps) for v in row] for row in A])
    assert D.coeff(0, 0, 0) == pytest.approx(np.linalg.det(A), rel=1e-10)


def test_det_polynomial_against_expansion(rng):
    # det(I + t1 A + t2 B) at first order in each variable: 1 + t1 tr A + t2 tr B + t1 t2 (trA trB - tr AB)
    A, B = rng.standard_normal((2, 3, 3))
    caps = (1, 1, 0)
    rows = [[TruncPoly3.constant(float(i == j), caps) + TruncPoly3.monomial(1, 0, 0, caps, A[i, j])
             + TruncPoly3.monomial(0, 1, 0, caps, B[i, j]) for j in range(3)] for i in range(3)]
    D = poly_det(rows)
    assert D.coeff(1, 0, 0) == pytest.approx(np.trace(A))
    assert D.coeff(0, 1, 0) == pytest.approx(np.trace(B))
    assert D.coeff(1, 1, 0) == pytest.approx(np.trace(A) * np.trace(B) - np.trace(A @ B))


def test_coeff_sum_small_examples():
    V = np.array([[1.0], [2.0]])
    assert coeff_sum_without_rep([1, 1], V, [], [], 1, 1) == pytest.approx(5.0)
    assert coeff_sum_without_rep([1, 1], V, [0], [], 1, 1) == pytest.approx(1.0)


def test_coeff_sum_hand_value():
    # lam=(1,2,3), v=(1,2,3) in R^1, k=2, d0=1: 2*(1+4) + 3*(1+9) + 6*(4+9) = 118
    V = np.array([[1.0], [2.0], [3.0]])
    assert coeff_sum_without_rep([1, 2, 3], V, [], [], 2, 1) == pytest.approx(118.0)
    assert brute_coeff_sum([1, 2, 3], V, [], [], 2, 1) == 118.0


def test_coeff_sum_d0_zero_counts_sets(rng):
    V = rng.standard_normal((6, 2))
    assert coeff_sum_without_rep(np.ones(6), V, [], [], 3, 0) == pytest.approx(math.comb(6, 3))


def test_coeff_sum_cauchy_binet(rng):
    V = rng.standard_normal((7, 3))
    got = coeff_sum_without_rep(np.ones(7), V, [], [], 3, 3)
    assert got == pytest.approx(elementary_symmetric(V.T @ V, 3), rel=1e-9)


def test_coeff_sum_index_checks():
    V = np.eye(3)
    with pytest.raises(InvalidInputError):
        coeff_sum_without_rep(np.ones(3), V, [0], [0], 2, 1)
    with pytest.raises(InvalidInputError):
        coeff_sum_without_rep(np.ones(3), V, [5], [], 2, 1)


def test_factored_series_matches_reference(rng):
    for _ in range(30):
        n = int(rng.integers(1, 7))
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, n + 1))
        d0 = int(rng.integers(0, d + 1))
        V = rng.standard_normal((n, d))
        lam = rng.uniform(0.05, 1.0, n)
        perm = rng.permutation(n)
        a = int(rng.integers(0, k + 1))
        I = [int(i) for i in perm[:a]]
        J = [int(i) for i in perm[a:a + int(rng.integers(0, n - a + 1))]]
        got = hardcore_series(lam, V, I, J, k, d0)
        ref = reference_hardcore_series(lam, V, I, J, k, d0)
        np.testing.assert_allclose(got, ref, atol=1e-10 * max(1.0, np.abs(ref).max()))


def test_size_sums(rng):
    V = rng.standard_normal((5, 2))
    lam = rng.uniform(0.1, 1, 5)
    s = size_sums(lam, V, [], [], 3, 2)
    for j in range(4):
        assert s[j] == pytest.approx(brute_coeff_sum(lam, V, [], [], j, 2), rel=1e-9, abs=1e-12)


# --- compact multisets -------------------------------------------------------

def _expand(W):
    rows = [W.vectors[i] for i, m in enumerate(W.multiplicities) for _ in range(m)]
    owner = [i for i, m in enumerate(W.multiplicities) for _ in range(m)]
    return np.array(rows), owner


def _brute_intersections(W, F, d0):
    rows, owner = _expand(W)
    # the first F[i] copies of each vector form F
    seen = {}
    in_f = []
    for o in owner:
        seen[o] = seen.get(o, 0) + 1
        in_f.append(seen[o] <= F[o])
    out = np.zeros(d0 + 1)
    for T in itertools.combinations(range(len(rows)), d0):
        r = sum(in_f[t] for t in T)
        out[r] += np.linalg.det(rows[list(T)] @ rows[list(T)].T) if T else 1.0
    return out


def test_intersection_basis_example():
    W = CompactVectorSet(np.eye(2), (1, 1))
    np.testing.assert_allclose(coeff_intersection_sums(W, (1, 0), 1), [1.0, 1.0])


def test_intersection_empty_F(rng):
    W = CompactVectorSet(rng.standard_normal((3, 2)), (2, 1, 2))
    got = coeff_intersection_sums(W, (0, 0, 0), 2)
    M = (W.vectors.T * np.array([2, 1, 2.0])) @ W.vectors
    assert got[0] == pytest.approx(elementary_symmetric(M, 2), rel=1e-10)
    np.testing.assert_allclose(got[1:], 0.0, atol=1e-10)
    np.testing.assert_allclose(coeff_intersection_sums(W, (1, 0, 1), 0), [1.0])


def test_intersection_matches_enumeration(rng):
    for _ in range(25):
        n = int(rng.integers(1, 4))
        d = int(rng.integers(1, 4))
        m = tuple(int(x) for x in rng.integers(0, 4, n))
        W = CompactVectorSet(rng.standard_normal((n, d)), m)
        F = tuple(int(rng.integers(0, mi + 1)) for mi in m)
        d0 = int(rng.integers(0, d + 1))
        np.testing.assert_allclose(coeff_intersection_sums(W, F, d0), _brute_intersections(W, F, d0),
                                   atol=1e-9 * max(1.0, np.abs(_brute_intersections(W, F, d0)).max()))


def _brute_containing(W, F, k, d0):
    rows, owner = _expand(W)
    seen = {}
    forced = []
    for idx, o in enumerate(owner):
        seen[o] = seen.get(o, 0) + 1
        if seen[o] <= F[o]:
            forced.append(idx)
    total = 0.0
    for S in itertools.combinations(range(len(rows)), k):
        if not set(forced) <= set(S):
            continue
        M = rows[list(S)].T @ rows[list(S)]
        total += elementary_symmetric(M, d0) if d0 else 1.0
    return total


def test_sum_det_containing_matches_enumeration(rng):
    for _ in range(25):
        n = int(rng.integers(1, 4))
        d = int(rng.integers(1, 4))
        m = tuple(int(x) for x in rng.integers(0, 4, n))
        if sum(m) == 0:
            continue
        W = CompactVectorSet(rng.standard_normal((n, d)), m)
        F = tuple(int(rng.integers(0, mi + 1)) for mi in m)
        k = int(rng.integers(sum(F), sum(m) + 1))
        d0 = int(rng.integers(0, d + 1))
        want = _brute_containing(W, F, k, d0)
        assert sum_det_containing(W, F, k, d0).value == pytest.approx(want, rel=1e-8, abs=1e-9)


def test_sum_det_containing_distinct_is_cauchy_binet(rng):
    V = rng.standard_normal((6, 3))
    W = CompactVectorSet(V, (1,) * 6)
    got = sum_det_containing(W, (0,) * 6, 3, 3).value
    assert got == pytest.approx(elementary_symmetric(V.T @ V, 3), rel=1e-9)


def test_sum_det_containing_unique_superset(rng):
    W = CompactVectorSet(rng.standard_normal((3, 2)), (2, 2, 1))
    F = (1, 2, 0)
    M = (W.vectors.T * np.array(F, float)) @ W.vectors
    for d0 in range(3):
        assert sum_det_containing(W, F, 3, d0).value == pytest.approx(
            elementary_symmetric(M, d0), rel=1e-10)


@pytest.mark.parametrize("q,k,dd", [(5, 4, 3), (3, 6, 2), (7, 5, 5)])
def test_uniform_conditional_ratio(q, k, dd):
    # k distinct vectors with q copies each (qk copies): counting sets with the
    # uniform base measure, containing dd-1 vs dd given copies
    W = CompactVectorSet(np.eye(k), (q,) * k)
    small = tuple([1] * (dd - 1) + [0] * (k - dd + 1))
    large = tuple([1] * dd + [0] * (k - dd))
    r = sum_det_containing(W, small, k, 0).ratio(sum_det_containing(W, large, k, 0))
    assert r == pytest.approx((q * k - dd + 1) / (k - dd + 1), rel=1e-12)
    # against the marginal ratio y_i = q the bound k/(k-dd+1) follows
    assert r / q <= k / (k - dd + 1) + 1e-12


def test_log_helpers():
    assert log_comb(10, 3) == pytest.approx(math.log(120))
    assert log_comb(3, 5) == -math.inf
    s = log_sum([(1.0, math.log(5.0)), (-1.0, math.log(2.0))])
    assert s.value == pytest.approx(3.0)
    assert log_sum([(1.0, 0.0), (-1.0, 0.0)]).sign == 0
    assert LogScaled(1.0, 1000.0).ratio(LogScaled(1.0, 999.0)) == pytest.approx(math.e)


def test_sum_det_containing_huge_multiplicity():
    # C(10^6, ...) overflows floats; the log domain keeps the ratio exact
    W = CompactVectorSet(np.eye(2), (10 ** 6, 10 ** 6))
    a = sum_det_containing(W, (1, 0), 500, 2)
    b = sum_det_containing(W, (1, 1), 500, 2)
    assert math.isfinite(a.log) and a.ratio(b) > 1


# --- sums restricted to spread-out copy-sets --------------------------------

def _brute_containing_spread(W, F, k, d0, spread):
    rows, owner = _expand(W)
    seen = {}
    forced = []
    for idx, o in enumerate(owner):
        seen[o] = seen.get(o, 0) + 1
        if seen[o] <= F[o]:
            forced.append(idx)
    total = 0.0
    for S in itertools.combinations(range(len(rows)), k):
        if not set(forced) <= set(S) or len({owner[t] for t in S}) < spread:
            continue
        M = rows[list(S)].T @ rows[list(S)]
        total += elementary_symmetric(M, d0) if d0 else 1.0
    return total


def test_spread_sums_match_enumeration(rng):
    done = 0
    while done < 40:
        n = int(rng.integers(1, 5))
        d = int(rng.integers(1, 4))
        m = tuple(int(x) for x in rng.integers(0, 4, n))
        if sum(m) == 0:
            continue
        W = CompactVectorSet(rng.standard_normal((n, d)), m)
        F = tuple(int(rng.integers(0, mi + 1)) for mi in m)
        k = int(rng.integers(sum(F), sum(m) + 1))
        d0 = int(rng.integers(0, d + 1))
        spread = int(rng.integers(0, n + 2))
        want = _brute_containing_spread(W, F, k, d0, spread)
        got = sum_det_containing_spread(W, F, k, d0, spread).value
        assert got == pytest.approx(want, rel=1e-8, abs=1e-9)
        done += 1


def test_spread_zero_is_plain_sum(rng):
    W = CompactVectorSet(rng.standard_normal((3, 2)), (3, 1, 2))
    for F in [(0, 0, 0), (1, 0, 1), (2, 1, 0)]:
        for d0 in range(3):
            a = sum_det_containing_spread(W, F, 5, d0, 0)
            b = sum_det_containing(W, F, 5, d0)
            assert a.ratio(b) == pytest.approx(1.0, rel=1e-10)


def test_spread_above_support_is_zero(rng):
    W = CompactVectorSet(rng.standard_normal((2, 2)), (3, 3))
    assert sum_det_containing_spread(W, (0, 0), 3, 1, 3).value == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("mult,k", [(10 ** 3, 40), (10 ** 6, 40), (10 ** 6, 500)])
def test_spread_large_multiplicity_in_log_domain(mult, k):
    W = CompactVectorSet(np.eye(2), (mult, mult))
    # sets missing a vector have det 0, so the restriction changes nothing for d0 = 2
    a = sum_det_containing_spread(W, (0, 0), k, 2, 2)
    assert a.ratio(sum_det_containing(W, (0, 0), k, 2)) == pytest.approx(1.0, rel=1e-9)
    # for d0 = 1 it drops the two single-vector sets, C(mult, k) * k each
    a = sum_det_containing_spread(W, (0, 0), k, 1, 2)
    b = sum_det_containing(W, (0, 0), k, 1)
    dropped = 2 * k * math.comb(mult, k)
    want = 1 - dropped / (math.comb(2 * mult, k) * k)
    assert a.ratio(b) == pytest.approx(want, rel=1e-9)


def test_spread_support_cap(rng):
    W = CompactVectorSet(rng.standard_normal((60, 5)), (1,) * 60)
    assert math.comb(60, 4) > SPREAD_MAX_SUBSETS
    with pytest.raises(InvalidInputError):
        sum_det_containing_spread(W, (0,) * 60, 6, 3, 5)
