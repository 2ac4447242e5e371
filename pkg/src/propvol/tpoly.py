"""Truncated trivariate power series and polynomial-matrix determinants.

Coefficients live in dense numpy arrays of shape ``(c1+1, c2+1, c3+1)``;
entry ``[a, b, c]`` multiplies ``t1^a t2^b t3^c``.  Products drop every
term above a cap, so the arithmetic is that of the quotient ring
``R[t1,t2,t3] / (t1^(c1+1), t2^(c2+1), t3^(c3+1))``.  In that ring an
element is invertible iff its constant term is nonzero.

The low-level helpers (``_mul``, ``_inv``, ``_det``) work on arrays with
arbitrary leading batch axes so a whole matrix row can be updated at once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError

UNIT_EPS = 1e-300
PLAN_MAX = 256


@lru_cache(maxsize=64)
def _mul_plan(caps: tuple):
    """Index triples (out, p, q) over flattened coefficients with out = p + q in every degree."""
    grid = np.array(list(np.ndindex(*caps)))
    size = len(grid)
    flat = lambda g: np.ravel_multi_index(g.T, caps)
    O, P, Q = [], [], []
    for pi in range(size):
        rest = caps - grid[pi]                          # room left per variable
        qs = np.flatnonzero(np.all(grid < rest, axis=1))
        out = grid[qs] + grid[pi]
        O.append(flat(out))
        P.append(np.full(len(qs), pi))
        Q.append(qs)
    return np.concatenate(O), np.concatenate(P), np.concatenate(Q), size


def _mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Truncated product over the last three axes, broadcasting the rest.

    The product is a matrix-vector product with the (lower-triangular,
    Toeplitz-like) multiplication matrix of p, assembled from a cached plan.
    """
    caps = p.shape[-3:]
    batch = np.broadcast_shapes(p.shape[:-3], q.shape[:-3])
    if math.prod(caps) > PLAN_MAX:
        return _mul_loop(p, q, caps, batch)
    O, P, Q, size = _mul_plan(tuple(caps))
    pf = np.broadcast_to(p, batch + caps).reshape(batch + (size,))
    qf = np.broadcast_to(q, batch + caps).reshape(batch + (size,))
    T = np.zeros(batch + (size, size))
    T[..., O, Q] = pf[..., P]
    return (T @ qf[..., None])[..., 0].reshape(batch + caps)


def _mul_loop(p, q, caps, batch):
    # shift-and-add over the nonzero coefficients of p; used when the plan would be large
    out = np.zeros(batch + caps)
    c1, c2, c3 = caps
    mask = p != 0
    if p.ndim > 3:
        mask = np.any(mask, axis=tuple(range(p.ndim - 3)))
    for a, b, c in np.argwhere(mask):
        coef = p[..., a, b, c][..., None, None, None]
        out[..., a:, b:, c:] += coef * q[..., : c1 - a, : c2 - b, : c3 - c]
    return out


def _one(caps, batch=()) -> np.ndarray:
    out = np.zeros(tuple(batch) + tuple(c + 1 for c in caps))
    out[..., 0, 0, 0] = 1.0
    return out


def _inv(p: np.ndarray) -> np.ndarray:
    """Power-series inverse by Newton iteration: q <- q (2 - p q).

    The error ``1 - p q`` squares each step and the maximal ideal is
    nilpotent of order c1+c2+c3+1, so a logarithmic number of steps is exact.
    """
    p0 = p[..., 0, 0, 0]
    if np.any(np.abs(p0) <= UNIT_EPS):
        raise InvalidInputError("series has zero constant term; not invertible")
    total = sum(s - 1 for s in p.shape[-3:])
    q = np.zeros_like(p)
    q[..., 0, 0, 0] = 1.0 / p0
    two = 2.0 * _one([s - 1 for s in p.shape[-3:]], p.shape[:-3])
    steps = 0
    while (1 << steps) <= total:
        q = _mul(q, two - _mul(p, q))
        steps += 1
    return q


def _det(A: np.ndarray) -> np.ndarray:
    """Determinant of an m x m matrix of series (shape (m, m, *caps)).

    Gaussian elimination; the pivot in each column is the entry with the
    largest constant term, which must be a unit.
    """
    A = np.array(A, dtype=float, copy=True)
    m = A.shape[0]
    caps = [s - 1 for s in A.shape[2:]]
    det = _one(caps)
    sign = 1.0
    for c in range(m):
        r = c + int(np.argmax(np.abs(A[c:, c, 0, 0, 0])))
        if abs(A[r, c, 0, 0, 0]) <= UNIT_EPS:
            raise InvalidInputError(
                f"no unit pivot in column {c}; polynomial matrix not supported")
        if r != c:
            A[[c, r]] = A[[r, c]]
            sign = -sign
        piv = A[c, c]
        det = _mul(det, piv)
        if c + 1 == m:
            break
        factors = _mul(A[c + 1:, c], _inv(piv))   # (m-c-1, *caps)
        A[c + 1:, c + 1:] -= _mul(factors[:, None], A[c, c + 1:][None])
    return sign * det


@dataclass(frozen=True, eq=False)
class TruncPoly3:
    """Element of the truncated ring with per-variable degree caps."""

    caps: tuple
    coeffs: np.ndarray

    def __post_init__(self):
        caps = tuple(int(c) for c in self.caps)
        if len(caps) != 3 or min(caps) < 0:
            raise InvalidInputError(f"caps must be three nonnegative ints, got {self.caps}")
        shape = tuple(c + 1 for c in caps)
        arr = np.zeros(shape)
        src = np.asarray(self.coeffs, dtype=float)
        if src.ndim != 3:
            raise InvalidInputError("coeffs must be a 3-D array")
        sl = tuple(slice(0, min(a, b)) for a, b in zip(shape, src.shape))
        arr[sl] = src[sl]
        arr.setflags(write=False)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def constant(cls, value: float, caps) -> "TruncPoly3":
        return cls(caps, np.full((1, 1, 1), float(value)))

    @classmethod
    def monomial(cls, a: int, b: int, c: int, caps, coef: float = 1.0) -> "TruncPoly3":
        arr = np.zeros(tuple(x + 1 for x in caps))
        if a <= caps[0] and b <= caps[1] and c <= caps[2]:
            arr[a, b, c] = coef
        return cls(caps, arr)

    def coeff(self, a: int, b: int, c: int) -> float:
        if a > self.caps[0] or b > self.caps[1] or c > self.caps[2]:
            return 0.0
        return float(self.coeffs[a, b, c])

    def __add__(self, other):
        return tp_add(self, other)

    def __sub__(self, other):
        _check_caps(self, other)
        return TruncPoly3(self.caps, self.coeffs - other.coeffs)

    def __mul__(self, other):
        return tp_mul(self, other)

    def allclose(self, other, atol=1e-12) -> bool:
        return self.caps == other.caps and bool(
            np.allclose(self.coeffs, other.coeffs, rtol=0, atol=atol))


def _check_caps(p: TruncPoly3, q: TruncPoly3) -> None:
    if p.caps != q.caps:
        raise InvalidInputError(f"cap mismatch: {p.caps} vs {q.caps}")


def tp_add(p: TruncPoly3, q: TruncPoly3) -> TruncPoly3:
    _check_caps(p, q)
    return TruncPoly3(p.caps, p.coeffs + q.coeffs)


def tp_mul(p: TruncPoly3, q: TruncPoly3) -> TruncPoly3:
    _check_caps(p, q)
    return TruncPoly3(p.caps, _mul(p.coeffs, q.coeffs))


def tp_inv_unit(p: TruncPoly3) -> TruncPoly3:
    return TruncPoly3(p.caps, _inv(p.coeffs))


def poly_det(A) -> TruncPoly3:
    """Determinant of a square list-of-lists of TruncPoly3 with shared caps."""
    m = len(A)
    if m == 0 or any(len(row) != m for row in A):
        raise InvalidInputError("poly_det needs a non-empty square matrix")
    caps = A[0][0].caps
    for row in A:
        for p in row:
            _check_caps(A[0][0], p)
    arr = np.stack([np.stack([p.coeffs for p in row]) for row in A])
    return TruncPoly3(caps, _det(arr))


# ---------------------------------------------------------------------------
# hard-core generating function (no repetitions)

def _check_index_sets(n, I, J):
    I, J = sorted(set(I)), sorted(set(J))
    if set(I) & set(J):
        raise InvalidInputError("I and J must be disjoint")
    if any(not 0 <= i < n for i in I + J):
        raise InvalidInputError("index out of range")
    return I, J


def hardcore_series(lam, V, I, J, k: int, d0: int) -> np.ndarray:
    """Coefficients of the generating function F, capped at (k, d0, |I|).

    ``V`` is n x d (rows are vectors).  Uses the factored form
    ``F = prod_i (1 + t1 y_i) * det(I_d + t1 t2 sum_i y_i/(1 + t1 y_i) v_i v_i^T)``
    with ``y_i = lam_i t3`` on I, 0 on J and ``lam_i`` elsewhere, so no
    square roots of t3 appear and the determinant is only d x d.
    """
    lam = np.asarray(lam, dtype=float)
    V = np.asarray(V, dtype=float)
    n, d = V.shape
    I, J = _check_index_sets(n, I, J)
    caps = (k, d0, len(I))
    shape = tuple(c + 1 for c in caps)
    inI = np.zeros(n, dtype=bool)
    inI[I] = True
    live = np.ones(n, dtype=bool)
    live[J] = False
    live &= lam != 0

    # y_i as a series in (t1, t3); both y and the prefactor ignore t2
    prefactor = _one(caps)
    g = np.zeros((n,) + shape)                 # y_i / (1 + t1 y_i), times t1 t2 later
    for i in np.flatnonzero(live):
        c3 = 1 if inI[i] else 0
        if c3 > caps[2]:
            continue
        if k >= 1:
            # multiply by (1 + lam_i t1 t3^c3) via a shift
            prefactor[1:, :, c3:] += lam[i] * prefactor[:-1, :, : caps[2] + 1 - c3].copy()
        # sum_{a>=1} (-1)^(a-1) t1^(a-1) lam^a t3^(a*c3)
        for a in range(1, k + 1):
            if a * c3 > caps[2]:
                break
            g[i, a - 1, 0, a * c3] = (-1.0) ** (a - 1) * lam[i] ** a
    if d0 == 0 or k == 0:
        return prefactor
    # M(t1, t3) = sum_i g_i v_i v_i^T, then shift by t1 t2
    Mser = np.einsum("iabc,ip,iq->pqabc", g, V, V)
    A = np.zeros((d, d) + shape)
    A[:, :, 1:, 1:, :] = Mser[:, :, :-1, :-1, :]
    A[np.arange(d), np.arange(d), 0, 0, 0] += 1.0
    return _mul(prefactor, _det(A))


def coeff_sum_without_rep(lam, V, I, J, k: int, d0: int) -> float:
    """sum over |S|=k, I in S, S disjoint from J of lam^S * E_d0(V_S V_S^T)."""
    lam = np.asarray(lam, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or lam.shape != (V.shape[0],):
        raise InvalidInputError("lam must have one entry per row of V")
    n, d = V.shape
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise InvalidInputError("lam must be finite and nonnegative")
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} outside [1, {n}]")
    if not 0 <= d0 <= d:
        raise InvalidInputError(f"d0={d0} outside [0, {d}]")
    I, J = _check_index_sets(n, I, J)
    if len(I) > k:
        return 0.0
    s = float(lam.max())
    if s == 0.0:
        return 0.0
    ser = hardcore_series(lam / s, V, I, J, k, d0)
    return float(ser[k, d0, len(I)] * s ** k)


def size_sums(lam, V, I, J, k: int, d0: int) -> np.ndarray:
    """Per-size sums: entry j is the hard-core sum over |S| = j (j = 0..k)."""
    I, J = _check_index_sets(len(lam), I, J)
    ser = hardcore_series(lam, V, I, J, k, d0)
    return ser[:, d0, len(I)].copy()


# ---------------------------------------------------------------------------
# compact multisets (with repetitions)

@dataclass(frozen=True, eq=False)
class CompactVectorSet:
    """n distinct vectors (rows) with exact integer multiplicities."""

    vectors: np.ndarray
    multiplicities: tuple

    def __post_init__(self):
        W = np.array(self.vectors, dtype=float)
        if W.ndim != 2:
            raise InvalidInputError("vectors must be an n x d array")
        m = tuple(int(x) for x in self.multiplicities)
        if len(m) != W.shape[0] or any(x < 0 for x in m):
            raise InvalidInputError("need one nonnegative multiplicity per vector")
        W.setflags(write=False)
        object.__setattr__(self, "vectors", W)
        object.__setattr__(self, "multiplicities", m)

    @property
    def total(self) -> int:
        return sum(self.multiplicities)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def _check_sub_multiset(V: CompactVectorSet, F) -> tuple:
    F = tuple(int(x) for x in F)
    if len(F) != len(V.multiplicities):
        raise InvalidInputError("F must give a count for every distinct vector")
    if any(f < 0 or f > m for f, m in zip(F, V.multiplicities)):
        raise InvalidInputError("F is not a sub-multiset of the vector set")
    return F


def coeff_intersection_sums(V: CompactVectorSet, F, d0: int) -> np.ndarray:
    """Entry r: sum over copy-sets T, |T| = d0, |T & F| = r, of det(V_T^T V_T).

    Read off ``det(I + t3 sum_F v v^T + t2 sum_rest v v^T)`` at ``t2^(d0-r) t3^r``;
    this is the t1 -> 1 dehomogenisation of det(t1 I + ...), which is valid
    because each rank-one term carries exactly one power of t2 or t3.
    """
    F = _check_sub_multiset(V, F)
    d = V.d
    if not 0 <= d0 <= d:
        raise InvalidInputError(f"d0={d0} outside [0, {d}]")
    if d0 == 0:
        return np.ones(1)
    W = V.vectors
    f = np.array(F, dtype=float)
    rest = np.array([m - x for m, x in zip(V.multiplicities, F)], dtype=float)
    caps = (0, d0, d0)
    A = np.zeros((d, d) + tuple(c + 1 for c in caps))
    A[:, :, 0, 0, 1] = (W.T * f) @ W
    A[:, :, 0, 1, 0] = (W.T * rest) @ W
    A[np.arange(d), np.arange(d), 0, 0, 0] += 1.0
    D = _det(A)
    return np.array([D[0, d0 - r, r] for r in range(d0 + 1)])


@dataclass(frozen=True)
class LogScaled:
    """A real number stored as sign * exp(log); sign 0 means exactly zero."""

    sign: float
    log: float

    @property
    def value(self) -> float:
        return 0.0 if self.sign == 0 else self.sign * math.exp(self.log)

    def ratio(self, other: "LogScaled") -> float:
        """self / other evaluated without forming either magnitude."""
        if other.sign == 0:
            raise ZeroDivisionError("ratio with a zero denominator")
        if self.sign == 0:
            return 0.0
        return self.sign * other.sign * math.exp(self.log - other.log)


LOG_ZERO = LogScaled(0.0, -math.inf)


def log_comb(a: int, b: int) -> float:
    """log C(a, b) from the exact integer binomial; -inf when it is zero."""
    if b < 0 or a < 0 or b > a:
        return -math.inf
    return math.log(math.comb(a, b))


def log_sum(terms) -> LogScaled:
    """Signed sum of (sign, log) terms."""
    terms = [(s, l) for s, l in terms if s != 0 and l > -math.inf]
    if not terms:
        return LOG_ZERO
    signs = np.array([s for s, _ in terms])
    logs = np.array([l for _, l in terms])
    val, sgn = logsumexp(logs, b=signs, return_sign=True)
    if sgn == 0 or not np.isfinite(val):
        return LOG_ZERO
    return LogScaled(float(sgn), float(val))


def sum_det_containing(V: CompactVectorSet, F, k: int, d0: int) -> LogScaled:
    """sum over copy-sets S, |S| = k, S containing F, of E_d0(V_S V_S^T).

    Each T with |T| = d0 and |T & F| = r lies in C(m-|F|-d0+r, k-|F|-d0+r)
    such sets S, which gives a short sum over r of binomial-weighted
    intersection sums.  Computed in the log domain since m may be large.
    """
    F = _check_sub_multiset(V, F)
    m = V.total
    size_f = sum(F)
    if not size_f <= k <= m:
        raise InvalidInputError(f"need |F| <= k <= m, got |F|={size_f}, k={k}, m={m}")
    inter = coeff_intersection_sums(V, F, d0)
    terms = []
    for r, val in enumerate(inter):
        if val == 0.0:
            continue
        lc = log_comb(m - size_f - d0 + r, k - size_f - d0 + r)
        if lc == -math.inf:
            continue
        terms.append((math.copysign(1.0, val), lc + math.log(abs(val))))
    return log_sum(terms)


SPREAD_MAX_SUBSETS = 20000


def sum_det_containing_spread(V: CompactVectorSet, F, k: int, d0: int, spread: int) -> LogScaled:
    """Like ``sum_det_containing`` but only over copy-sets using >= ``spread`` distinct vectors.

    Let f(U) be the plain sum restricted to copies of the vectors in U.  By
    Moebius inversion over supports, sets with fewer than ``spread`` distinct
    vectors contribute sum_U c(U) f(U) with
    c(U) = sum_{j < spread-|U|} (-1)^j C(n-|U|, j), n the number of vectors
    present.  Only supp(F) <= U and |U| >= d0 matter (E_d0 vanishes below
    rank d0), so this is a short list of log-domain binomial sums; the result
    is f(all) minus that nonnegative remainder.
    """
    F = _check_sub_multiset(V, F)
    m = V.multiplicities
    if not sum(F) <= k <= V.total:
        raise InvalidInputError(f"need |F| <= k <= m, got |F|={sum(F)}, k={k}, m={V.total}")
    if not 0 <= d0 <= V.d:
        raise InvalidInputError(f"d0={d0} outside [0, {V.d}]")
    total = sum_det_containing(V, F, k, d0)
    present = [i for i, mi in enumerate(m) if mi > 0]
    fixed = [i for i in present if F[i] > 0]
    free = [i for i in present if F[i] == 0]
    n = len(present)
    lo = max(0, d0 - len(fixed))
    hi = min(spread - 1 - len(fixed), len(free))
    if hi < lo or total.sign == 0:
        return total
    if sum(math.comb(len(free), j) for j in range(lo, hi + 1)) > SPREAD_MAX_SUBSETS:
        raise InvalidInputError(f"more than {SPREAD_MAX_SUBSETS} supports below spread {spread}")
    terms = []
    for j in range(lo, hi + 1):
        size_u = len(fixed) + j
        c = sum((-1) ** t * math.comb(n - size_u, t) for t in range(spread - size_u))
        if c == 0:
            continue
        for extra in itertools.combinations(free, j):
            keep = set(fixed) | set(extra)
            sub = CompactVectorSet(V.vectors, tuple(mi if i in keep else 0 for i, mi in enumerate(m)))
            if sub.total < k:
                continue
            f = sum_det_containing(sub, F, k, d0)
            if f.sign != 0:
                terms.append((math.copysign(1.0, c) * f.sign, math.log(abs(c)) + f.log))
    rest = log_sum(terms)
    if rest.sign == 0:
        return total
    if rest.sign < 0 or rest.log >= total.log:
        return LOG_ZERO
    # total - rest with both positive
    return LogScaled(1.0, total.log + math.log1p(-math.exp(rest.log - total.log)))
