"""Spectral helpers and design objectives.

Singularity is decided on the Jacobi-equilibrated matrix ``D^-1/2 M D^-1/2``
(unit diagonal), so a matrix such as ``diag(1e16, 1)`` counts as full rank
while a genuinely rank-deficient one does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import InvalidInputError

RANK_RTOL = 1e-9


def as_symmetric(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    tol = 1e-12 * np.maximum(1.0, np.abs(M))
    if np.any(np.abs(M - M.T) > tol):
        raise InvalidInputError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def esp(values, j_max: int | None = None) -> np.ndarray:
    """Elementary symmetric polynomials e_0..e_{j_max} of ``values``.

    Coefficients of prod(1 + t*v) accumulated one factor at a time.
    """
    values = np.asarray(values, dtype=float)
    if j_max is None:
        j_max = len(values)
    e = np.zeros(j_max + 1)
    e[0] = 1.0
    for v in values:
        e[1:] = e[1:] + v * e[:-1]
    return e


def psd_eigvalsh(M) -> np.ndarray:
    """Ascending eigenvalues with round-off negatives clamped to zero."""
    w = np.linalg.eigvalsh(M)
    return np.clip(w, 0.0, None)


def numerical_rank(M) -> int:
    """Rank of a PSD matrix under the scale-free equilibrated tolerance."""
    M = np.asarray(M, dtype=float)
    diag = np.diag(M).copy()
    live = diag > 0
    if not np.any(live):
        return 0
    s = 1.0 / np.sqrt(diag[live])
    A = M[np.ix_(live, live)] * s[:, None] * s[None, :]
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    top = max(1.0, w[-1])
    return int(np.sum(w > RANK_RTOL * top))


def elementary_symmetric(M, j: int) -> float:
    """E_j(M): the j-th elementary symmetric polynomial of M's eigenvalues."""
    M = as_symmetric(M)
    d = M.shape[0]
    if not 0 <= j <= d:
        raise InvalidInputError(f"j={j} outside [0, {d}]")
    if j == 0:
        return 1.0
    return float(esp(psd_eigvalsh(M), j)[j])


def trace_inverse(M) -> float:
    """tr(M^-1) computed as E_{d-1}(M)/E_d(M); +inf when M is singular."""
    M = as_symmetric(M)
    d = M.shape[0]
    if numerical_rank(M) < d:
        return float("inf")
    e = esp(psd_eigvalsh(M))
    if e[d] == 0.0:      # E_d underflowed
        return float("inf")
    return float(e[d - 1] / e[d])


def ratio_value(M, lp: int, l: int, power: bool = True) -> float:
    """(E_lp(M)/E_l(M))^(1/(l-lp)), or the bare ratio when ``power`` is False."""
    d = M.shape[0]
    if not 0 <= lp < l <= d:
        raise InvalidInputError(f"need 0 <= lp < l <= d, got lp={lp}, l={l}, d={d}")
    if numerical_rank(M) < l:
        return float("inf")
    e = esp(psd_eigvalsh(M), l)
    r = e[lp] / e[l]
    return float(r ** (1.0 / (l - lp))) if power else float(r)


def top_k_reciprocal_sum(M, k: int) -> float:
    """Sum of reciprocals of the k largest eigenvalues; +inf if rank < k."""
    if numerical_rank(M) < k:
        return float("inf")
    w = np.linalg.eigvalsh(M)[::-1][:k]
    return float(np.sum(1.0 / w))


@dataclass(frozen=True, eq=False)
class Selection:
    """Chosen multiset as per-index counts, plus its objective value."""

    counts: np.ndarray
    objective_value: float = float("nan")

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or np.any(c < 0):
            raise InvalidInputError("counts must be a 1-D array of nonnegative integers")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_indices(cls, n: int, indices, objective_value: float = float("nan")):
        c = np.zeros(n, dtype=np.int64)
        for i in indices:
            c[i] += 1
        return cls(c, objective_value)

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    @property
    def indices(self) -> list:
        """Indices with multiplicity, ascending."""
        return [i for i, c in enumerate(self.counts) for _ in range(int(c))]

    def with_value(self, value: float) -> "Selection":
        return Selection(self.counts, float(value))

    def validate(self, inst) -> None:
        if len(self.counts) != inst.n:
            raise InvalidInputError("selection length differs from instance n")
        if self.size != inst.k:
            raise InvalidInputError(f"selection has {self.size} items, k={inst.k}")
        if not inst.repetitions and np.any(self.counts > 1):
            raise InvalidInputError("repeated index without repetitions")


def selection_matrix(inst, sel: Selection) -> np.ndarray:
    return inst.gram(sel.counts)


def a_objective(inst, sel: Selection) -> float:
    """tr(M(S)^-1) for k >= d; sum of 1/lambda over the top k eigenvalues for k < d."""
    M = selection_matrix(inst, sel)
    if inst.k >= inst.d:
        return trace_inverse(M)
    return top_k_reciprocal_sum(M, inst.k)


def ratio_objective(inst, sel: Selection, lp: int, l: int) -> float:
    return ratio_value(selection_matrix(inst, sel), lp, l)


def e_objective(inst, sel: Selection) -> float:
    """Smallest eigenvalue of M(S) (to be maximised)."""
    return float(psd_eigvalsh(selection_matrix(inst, sel))[0])


def ones_ratio(d: int, lp: int, l: int) -> float:
    """Ratio objective of the identity matrix, from e_j(1,...,1) = C(d, j)."""
    return (comb(d, lp) / comb(d, l)) ** (1.0 / (l - lp))
