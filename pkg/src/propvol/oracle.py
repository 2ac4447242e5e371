"""Brute-force ground truth for small instances.

Everything here enumerates explicitly and is meant for tests and gap
experiments; callers over the state cap get a SizeCapError rather than a
truncated answer.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from .errors import InvalidInputError, SizeCapError
from .linalg import (Selection, a_objective, e_objective, esp, psd_eigvalsh,
                     ratio_objective, ratio_value)
from .sampler import brute_distribution
from .tpoly import _check_index_sets, _det

STATE_CAP = 10 ** 6
COEFF_MAX_N = 12


def _compositions(total: int, parts: int):
    """All nonnegative integer vectors of length ``parts`` summing to ``total``, lex-descending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _feasible_counts(inst, cap: int):
    n, k = inst.n, inst.k
    if inst.repetitions:
        size = math.comb(k + n - 1, n - 1)
        if size > cap:
            raise SizeCapError(f"{size} compositions exceed the cap {cap}")
        return _compositions(k, n)
    size = math.comb(n, k)
    if size > cap:
        raise SizeCapError(f"C({n},{k}) = {size} subsets exceed the cap {cap}")

    def gen():
        for S in itertools.combinations(range(n), k):
            c = [0] * n
            for i in S:
                c[i] = 1
            yield tuple(c)
    return gen()


def selection_objective(inst, sel: Selection, obj) -> float:
    if obj.kind in ("a-opt", "small-k"):
        return a_objective(inst, sel)
    if obj.kind == "ratio":
        return ratio_objective(inst, sel, obj.lp, obj.l)
    return e_objective(inst, sel)


def brute_opt(inst, obj, cap: int = STATE_CAP) -> Selection:
    """Exact optimum by enumeration (minimise; maximise lambda_min for e-opt).

    Ties keep the first candidate in enumeration order, which is
    lexicographically largest count vector first.
    """
    if obj.kind == "small-k" and inst.k > inst.d:
        raise InvalidInputError("small-k objective needs k <= d")
    maximise = obj.kind == "e-opt"
    best_c, best_v = None, None
    for c in _feasible_counts(inst, cap):
        v = selection_objective(inst, Selection(c), obj)
        if best_v is None:
            best_c, best_v = c, v
            continue
        if maximise:
            better = v > best_v + 1e-12 * max(1.0, abs(best_v))
        else:
            better = v < best_v - 1e-12 * max(1.0, abs(best_v)) if math.isfinite(best_v) else v < best_v
        if better:
            best_c, best_v = c, v
    return Selection(best_c, best_v)


# ---------------------------------------------------------------------------
# coefficient sums

def _frac_det(rows) -> Fraction:
    """Exact determinant by fraction Gaussian elimination."""
    A = [list(r) for r in rows]
    m = len(A)
    det = Fraction(1)
    for c in range(m):
        piv = next((r for r in range(c, m) if A[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            det = -det
        det *= A[c][c]
        for r in range(c + 1, m):
            f = A[r][c] / A[c][c]
            if f:
                for j in range(c, m):
                    A[r][j] -= f * A[c][j]
    return det


def _integral(a) -> bool:
    a = np.asarray(a, dtype=float)
    return bool(np.all(a == np.round(a)) and np.all(np.abs(a) < 2 ** 52))


def brute_coeff_sum(lam, V, I, J, k: int, d0: int):
    """Double sum over S (|S|=k, I in S, J out) and T in S (|T|=d0) of lam^S det(V_T V_T^T).

    Exact (returned as a float of an exact Fraction) when lam and V are integral.
    """
    lam = np.asarray(lam, dtype=float)
    V = np.asarray(V, dtype=float)
    n = V.shape[0]
    if n > COEFF_MAX_N:
        raise SizeCapError(f"brute_coeff_sum limited to n <= {COEFF_MAX_N}")
    I, J = _check_index_sets(n, I, J)
    exact = _integral(lam) and _integral(V)
    Iset, Jset = set(I), set(J)
    if exact:
        lamq = [Fraction(int(x)) for x in lam]
        Vq = [[Fraction(int(x)) for x in row] for row in V]
        gram_det = {}

        def det_T(T):
            if T not in gram_det:
                G = [[sum(Vq[a][p] * Vq[b][p] for p in range(V.shape[1])) for b in T] for a in T]
                gram_det[T] = _frac_det(G) if T else Fraction(1)
            return gram_det[T]
        total = Fraction(0)
        for S in itertools.combinations(range(n), k):
            if not Iset <= set(S) or Jset & set(S):
                continue
            w = math.prod((lamq[i] for i in S), start=Fraction(1))
            total += w * sum((det_T(T) for T in itertools.combinations(S, d0)), Fraction(0))
        return float(total)
    terms = []
    for S in itertools.combinations(range(n), k):
        if not Iset <= set(S) or Jset & set(S):
            continue
        w = float(np.prod(lam[list(S)])) if S else 1.0
        inner = math.fsum(float(np.linalg.det(V[list(T)] @ V[list(T)].T)) if T else 1.0
                          for T in itertools.combinations(S, d0))
        terms.append(w * inner)
    return math.fsum(terms)


def reference_hardcore_series(lam, V, I, J, k: int, d0: int) -> np.ndarray:
    """Unfactored n x n generating function det(I_n + t1 diag(y) (I_n + t2 V V^T)).

    ``diag(y)^(1/2) L diag(y)^(1/2)`` is similar to ``diag(y) L``, which keeps
    integer powers of t3.  Test-only cross-check of the factored form.
    """
    lam = np.asarray(lam, dtype=float)
    V = np.asarray(V, dtype=float)
    n = V.shape[0]
    I, J = _check_index_sets(n, I, J)
    caps = (k, d0, len(I))
    shape = tuple(c + 1 for c in caps)
    G = V @ V.T
    A = np.zeros((n, n) + shape)
    for i in range(n):
        A[i, i, 0, 0, 0] = 1.0
        if i in J:
            continue
        c3 = 1 if i in I else 0
        if c3 > caps[2] or k < 1:
            continue
        A[i, i, 1, 0, c3] += lam[i]
        if d0 >= 1:
            A[i, :, 1, 1, c3] += lam[i] * G[i]
    return _det(A)


# ---------------------------------------------------------------------------
# expectations

def brute_expectation(inst, mu, lp: int, l: int, power: bool = False) -> float:
    """E over mu' (l-volume) of E_lp(S)/E_l(S), optionally to the power 1/(l-lp)."""
    if inst.n > COEFF_MAX_N:
        raise SizeCapError(f"brute_expectation limited to n <= {COEFF_MAX_N}")
    dist = brute_distribution(inst, mu, l)
    acc = []
    for S, p in dist.items():
        M = inst.gram(Selection.from_indices(inst.n, S).counts)
        acc.append(p * ratio_value(M, lp, l, power=power))
    return math.fsum(acc)


def brute_compact_distribution(W, k: int, l: int, cap: int = STATE_CAP) -> dict:
    """Exact distribution of copy counts when a k-subset of copies is drawn with Pr ~ E_l.

    Weight of counts c is prod_i C(m_i, c_i) * E_l(sum_i c_i w_i w_i^T).
    """
    m = W.multiplicities
    n = len(m)
    if math.comb(k + n - 1, n - 1) > cap:
        raise SizeCapError("too many count vectors")
    weights = {}
    for c in _compositions(k, n):
        if any(ci > mi for ci, mi in zip(c, m)):
            continue
        mult = math.prod(math.comb(mi, ci) for ci, mi in zip(c, m))
        ev = psd_eigvalsh((W.vectors.T * np.array(c, dtype=float)) @ W.vectors)
        e = float(esp(ev, l)[l])
        if e > 1e-12 * max(1.0, float(ev[-1]) ** l) and mult > 0:
            weights[c] = mult * e
    total = math.fsum(weights.values())
    if total <= 0:
        raise InvalidInputError("compact measure has zero mass")
    return {c: w / total for c, w in weights.items()}


def brute_compact_expectation(W, k: int, lp: int, l: int, power: bool = False) -> float:
    dist = brute_compact_distribution(W, k, l)
    acc = []
    for c, p in dist.items():
        M = (W.vectors.T * np.array(c, dtype=float)) @ W.vectors
        acc.append(p * ratio_value(M, lp, l, power=power))
    return math.fsum(acc)


def brute_ratio_of_sums(inst, mu, lp: int, l: int) -> float:
    """sum lam^S E_lp(S) / sum lam^S E_l(S) over the support family.

    This is the quantity the conditional-expectation walk actually tracks.
    It equals ``brute_expectation`` unless some set with E_l(S) = 0 (a
    mu'-null set) has E_lp(S) > 0, in which case it is strictly larger.
    """
    if inst.n > COEFF_MAX_N:
        raise SizeCapError(f"brute_ratio_of_sums limited to n <= {COEFF_MAX_N}")
    sizes = [mu.k] if mu.support == "exactly-k" else range(0, mu.k + 1)
    num, den = [], []
    for size in sizes:
        for S in itertools.combinations(range(inst.n), size):
            w = math.prod(float(mu.lam[i]) for i in S)
            if w == 0.0:
                continue
            e = esp(psd_eigvalsh(inst.gram(Selection.from_indices(inst.n, S).counts)), l)
            num.append(w * e[lp])
            den.append(w * e[l])
    return math.fsum(num) / math.fsum(den)


def brute_compact_ratio_of_sums(W, k: int, lp: int, l: int, cap: int = STATE_CAP) -> float:
    """Compact analogue of ``brute_ratio_of_sums`` over all k-subsets of copies."""
    m = W.multiplicities
    if math.comb(k + len(m) - 1, len(m) - 1) > cap:
        raise SizeCapError("too many count vectors")
    num, den = [], []
    for c in _compositions(k, len(m)):
        if any(ci > mi for ci, mi in zip(c, m)):
            continue
        mult = math.prod(math.comb(mi, ci) for ci, mi in zip(c, m))
        e = esp(psd_eigvalsh((W.vectors.T * np.array(c, dtype=float)) @ W.vectors), l)
        num.append(mult * e[lp])
        den.append(mult * e[l])
    return math.fsum(num) / math.fsum(den)
