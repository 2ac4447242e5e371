"""Proportional l-volume sampling from hard-core measures, and its derandomization.

The target distribution is ``mu'(S) ~ lam^S * E_l(V_S V_S^T)`` over either
all k-subsets or all subsets of size at most k.  Items are decided one at a
time; the inclusion probability of item i given the decisions so far is a
ratio of two coefficient sums (see ``tpoly.hardcore_series``), one with i
forced in and one with i forced out.

The with-repetitions variant works over ``q * k`` implicit copies stored as a
``CompactVectorSet``; the walk there decides the copy count of each distinct
vector in turn.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMeasureError, InvalidInputError, SizeCapError
from .linalg import Selection, esp, psd_eigvalsh, ratio_value
from .tpoly import (CompactVectorSet, hardcore_series, log_comb, log_sum,
                    sum_det_containing, sum_det_containing_spread)

log = logging.getLogger(__name__)

SUPPORTS = ("exactly-k", "at-most-k")
REGIMES = ("k-eq-d", "asymptotic", "small-k", "with-repetitions", "brute")
TIE_RTOL = 1e-12
ZERO_RTOL = 1e-12
RENORM_TOL = 1e-6
BRUTE_MAX_N = 20


@dataclass(frozen=True, eq=False)
class HardCoreMeasure:
    lam: np.ndarray
    support: str
    k: int

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 1 or not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise InvalidInputError("lambda must be a finite nonnegative vector")
        if self.support not in SUPPORTS:
            raise InvalidInputError(f"support must be one of {SUPPORTS}")
        if self.k < 1:
            raise InvalidInputError("k must be >= 1")
        if self.support == "exactly-k" and np.count_nonzero(lam) < self.k:
            raise DegenerateMeasureError(
                "fewer than k items have positive lambda; no k-set has mass")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def n(self) -> int:
        return len(self.lam)


@dataclass(frozen=True)
class RegimeChoice:
    regime: str
    eps: float | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidInputError(f"regime must be one of {REGIMES}")
        if self.regime == "asymptotic":
            if self.eps is None or not 0 < self.eps <= 2:
                raise InvalidInputError("asymptotic regime needs 0 < eps <= 2")
        if self.regime == "with-repetitions":
            if self.eps is None or not 0 < self.eps <= 1:
                raise InvalidInputError("with-repetitions regime needs 0 < eps <= 1")


def build_measure(x, inst, regime: RegimeChoice) -> HardCoreMeasure:
    """Hard-core measure for the regime, parameterised by the fractional solution."""
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n,):
        raise InvalidInputError("x must have length n")
    x = np.clip(x, 0.0, None)
    r = regime.regime
    if r in ("with-repetitions", "brute"):
        raise InvalidInputError(f"regime {r!r} does not use a hard-core measure")
    if inst.repetitions:
        raise InvalidInputError(f"regime {r!r} needs an instance without repetitions")
    if r == "k-eq-d":
        if inst.k != inst.d:
            raise InvalidInputError(f"k-eq-d regime needs k = d, got k={inst.k}, d={inst.d}")
        return HardCoreMeasure(x, "exactly-k", inst.k)
    if r == "small-k":
        if inst.k > inst.d:
            raise InvalidInputError(f"small-k regime needs k <= d, got k={inst.k}, d={inst.d}")
        return HardCoreMeasure(x, "exactly-k", inst.k)
    x = np.clip(x, 0.0, 1.0)
    lam = x / (1.0 + regime.eps / 4.0 - x)
    return HardCoreMeasure(lam, "at-most-k", inst.k)


# ---------------------------------------------------------------------------
# sequential walk without repetitions

class _Sums:
    """Coefficient sums over sets consistent with (I, J), per E-order 0..l."""

    def __init__(self, inst, mu: HardCoreMeasure, l: int):
        if mu.n != inst.n:
            raise InvalidInputError("measure and instance sizes differ")
        if mu.k != inst.k:
            raise InvalidInputError("measure k differs from instance k")
        if not 0 <= l <= inst.d:
            raise InvalidInputError(f"l={l} outside [0, d={inst.d}]")
        self.V = inst.vectors
        self.k = mu.k
        self.l = l
        self.exact = mu.support == "exactly-k"
        lam = mu.lam
        # scaling lam is harmless when every set has the same size
        self.lam = lam / lam.max() if self.exact and lam.max() > 0 else lam
        self.zero = [int(i) for i in np.flatnonzero(lam == 0)]

    def __call__(self, I, J) -> np.ndarray:
        k = min(self.k, len(self.lam) - len(J))
        if len(I) > self.k or (self.exact and k < self.k):
            return np.zeros(self.l + 1)
        ser = hardcore_series(self.lam, self.V, I, J, self.k, self.l)
        coef = ser[:, :, len(I)]                             # (sizes, orders)
        # sets smaller than l have E_l = 0: no mu' mass, so keep them out of every order
        return coef[self.k].copy() if self.exact else coef[self.l:].sum(axis=0)


class _ZeroPath(Exception):
    """Raised by a decision callback once the forced path has probability zero."""


def _branch(sums, I, J, i, parent, floor):
    """Masses with item i forced in / out and the normalised inclusion probability."""
    l = sums.l
    s_in = sums(I + [i], J)
    s_out = sums(I, J + [i])
    m_in = s_in[l] if s_in[l] > floor else 0.0
    m_out = s_out[l] if s_out[l] > floor else 0.0
    tot = m_in + m_out
    if tot <= 0.0:
        raise DegenerateMeasureError(f"both branches vanish at item {i}")
    drift = abs(tot - parent[l]) / parent[l]
    if drift > RENORM_TOL:
        raise DegenerateMeasureError(f"conditional masses drift by {drift:.3g} at item {i}")
    return m_in / tot, m_out / tot, s_in, s_out


def _walk(inst, mu: HardCoreMeasure, l: int, decide):
    """Run the sequential walk; ``decide(i, p_in, s_in, s_out, parent)`` returns include?

    Returns (included indices, list of (p_in, p_out) per decided item).
    """
    sums = _Sums(inst, mu, l)
    I, J = [], list(sums.zero)
    parent = sums(I, J)
    if parent[l] <= 0.0:
        raise DegenerateMeasureError("measure has zero total mass")
    # masses below this are round-off on top of an exact zero
    floor = ZERO_RTOL * parent[l]
    steps = []
    for i in range(inst.n):
        if i in J:
            continue
        p_in, p_out, s_in, s_out = _branch(sums, I, J, i, parent, floor)
        steps.append((p_in, p_out))
        if decide(i, p_in, s_in, s_out, parent):
            I.append(i)
            parent = s_in
        else:
            J.append(i)
            parent = s_out
    return I, steps


def walk_tree(inst, mu: HardCoreMeasure, l: int) -> tuple:
    """Every positive-probability outcome of the walk with its path probability.

    Depth-first over the same conditionals the sampler uses, so shared
    prefixes are computed once.  Returns ({S: prob}, worst |p_in + p_out - 1|).
    """
    sums = _Sums(inst, mu, l)
    root = sums([], list(sums.zero))
    if root[l] <= 0.0:
        raise DegenerateMeasureError("measure has zero total mass")
    floor = ZERO_RTOL * root[l]
    out = {}
    worst = [0.0]

    def rec(i, I, J, parent, prob):
        while i < inst.n and i in J:
            i += 1
        if i == inst.n:
            out[tuple(I)] = prob
            return
        p_in, p_out, s_in, s_out = _branch(sums, I, J, i, parent, floor)
        worst[0] = max(worst[0], abs(p_in + p_out - 1.0))
        if p_in > 0.0:
            rec(i + 1, I + [i], J, s_in, prob * p_in)
        if p_out > 0.0:
            rec(i + 1, I, J + [i], s_out, prob * p_out)

    rec(0, [], list(sums.zero), root, 1.0)
    return out, worst[0]


def _finish(inst, I, lp, l) -> Selection:
    sel = Selection.from_indices(inst.n, I)
    M = inst.gram(sel.counts)
    return sel.with_value(ratio_value(M, lp, l) if l <= inst.d and len(I) >= l
                          else float("inf"))


def sample_proportional_volume(inst, mu: HardCoreMeasure, l: int, rng_seed: int) -> Selection:
    """One exact draw from mu'(S) ~ lam^S E_l(V_S V_S^T)."""
    rng = np.random.default_rng(rng_seed)

    def decide(i, p_in, s_in, s_out, parent):
        return bool(rng.random() < p_in)

    I, _ = _walk(inst, mu, l, decide)
    lp = l - 1 if l >= 1 else 0
    return _finish(inst, I, lp, l) if l >= 1 else Selection.from_indices(inst.n, I)


def path_probability(inst, mu: HardCoreMeasure, l: int, S) -> tuple:
    """Product of the walk's conditionals along the decisions of S, plus per-step pairs."""
    S = set(int(i) for i in S)
    prob = [1.0]

    def decide(i, p_in, s_in, s_out, parent):
        take = i in S
        prob[0] *= p_in if take else 1.0 - p_in
        if prob[0] == 0.0:
            raise _ZeroPath
        return take

    if any(mu.lam[i] == 0 for i in S):
        return 0.0, []
    try:
        _, steps = _walk(inst, mu, l, decide)
    except _ZeroPath:
        return 0.0, []
    return prob[0], steps


def derandomized_round(inst, mu: HardCoreMeasure, lp: int, l: int) -> Selection:
    """Method of conditional expectations on E_lp(S)/E_l(S) under mu' (l-volume).

    Each step keeps the branch with the smaller conditional expectation
    X = sum lam^S E_lp / sum lam^S E_l, both over sets of size >= l (smaller
    sets are mu'-null); ties within TIE_RTOL include the item.
    """
    if not 0 <= lp < l <= inst.d:
        raise InvalidInputError(f"need 0 <= lp < l <= d, got lp={lp}, l={l}")

    def decide(i, p_in, s_in, s_out, parent):
        if p_in == 1.0:
            return True
        if p_in == 0.0:
            return False
        x_in, x_out = s_in[lp] / s_in[l], s_out[lp] / s_out[l]
        return x_in <= x_out + TIE_RTOL * max(1.0, abs(x_out))

    I, _ = _walk(inst, mu, l, decide)
    return _finish(inst, I, lp, l)


def brute_distribution(inst, mu: HardCoreMeasure, l: int) -> dict:
    """Exact mu' by enumeration: {sorted index tuple: probability}."""
    n = inst.n
    if n > BRUTE_MAX_N:
        raise SizeCapError(f"brute_distribution limited to n <= {BRUTE_MAX_N}, got {n}")
    sizes = [mu.k] if mu.support == "exactly-k" else range(0, mu.k + 1)
    weights = {}
    for size in sizes:
        for S in itertools.combinations(range(n), size):
            w = float(np.prod(mu.lam[list(S)])) if S else 1.0
            if w == 0.0:
                continue
            if l > 0:
                ev = psd_eigvalsh(inst.vectors[list(S)] @ inst.vectors[list(S)].T) if S else []
                w *= float(esp(ev, l)[l]) if len(ev) >= l else 0.0
            if w > 0.0:
                weights[S] = w
    total = math.fsum(weights.values())
    if total <= 0.0:
        raise DegenerateMeasureError("measure has zero total mass")
    return {S: w / total for S, w in weights.items()}


# ---------------------------------------------------------------------------
# with repetitions: compact multisets

def repetition_multiplicities(x, k: int, eps: float) -> tuple:
    """q = ceil(2n/(eps k)) and integer copy counts m_i = q x'_i with sum m = q k.

    x'_i is ((k - n/q)/k) x_i rounded up to a multiple of 1/q; the remaining
    units go one at a time to the largest x'_i (ties by index), cycling.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if not 0 < eps <= 1:
        raise InvalidInputError(f"eps must be in (0, 1], got {eps}")
    if abs(x.sum() - k) > 1e-6 * max(1, k) or np.any(x < -1e-12):
        raise InvalidInputError("x must be nonnegative with sum k")
    q = math.ceil(2 * n / (eps * k))
    scale = (q * k - n) / k
    units = [max(0, math.ceil(scale * xi - 1e-9)) for xi in np.clip(x, 0.0, None)]
    deficit = q * k - sum(units)
    if deficit < 0:
        raise InvalidInputError("rounded multiplicities exceed q k")
    order = sorted(range(n), key=lambda i: (-units[i], i))
    for step in range(deficit):
        units[order[step % n]] += 1
    return q, tuple(units)


def _compact_weights(W: CompactVectorSet, prefix, t: int, k: int, orders) -> list:
    """For each copy count j of vector t: (j, log C(m_t, j), sums by order)."""
    m = W.multiplicities
    used = sum(prefix)
    out = []
    for j in range(0, min(m[t], k - used) + 1):
        mult = tuple(prefix) + (j,) + m[t + 1:]
        if sum(mult) < k:
            continue
        sub = CompactVectorSet(W.vectors, mult)
        F = tuple(prefix) + (j,) + (0,) * (len(m) - t - 1)
        sums = {o: sum_det_containing(sub, F, k, o) for o in orders}
        if len(orders) == 2:
            sums["num"] = _null_free_numerator(sub, F, k, orders, sums)
        out.append((j, log_comb(m[t], j), sums))
    return out


def _null_free_numerator(sub, F, k, orders, sums):
    """sum E_lp over copy-sets with at least l distinct vectors.

    Sets spanning fewer than l distinct vectors have E_l = 0, so they carry no
    mass under mu' and are dropped from the numerator; for vectors in general
    position this makes the ratio the exact conditional expectation.  Falls
    back to the unrestricted sum if there are too many small supports to subtract.
    """
    lp, l = orders
    try:
        return sum_det_containing_spread(sub, F, k, lp, l)
    except InvalidInputError:
        log.warning("too many small supports; using the unrestricted numerator")
        return sums[lp]


def _compact_walk(W: CompactVectorSet, k: int, l: int, decide, lp=None):
    orders = (l,) if lp is None else (lp, l)
    counts = []
    steps = []
    for t in range(len(W.multiplicities)):
        cands = _compact_weights(W, counts, t, k, orders)
        logw = [(s[l].sign, lc + s[l].log) for j, lc, s in cands]
        total = log_sum(logw)
        if total.sign <= 0:
            raise DegenerateMeasureError(f"no copy count of vector {t} has mass")
        probs = [0.0 if sg <= 0 else math.exp(lw - total.log) for sg, lw in logw]
        steps.append({j: p for (j, _, _), p in zip(cands, probs)})
        counts.append(decide(t, cands, probs))
    if sum(counts) != k:
        raise DegenerateMeasureError("walk ended with the wrong total count")
    return counts, steps


def sample_compact(W: CompactVectorSet, k: int, l: int, rng_seed: int) -> tuple:
    """Copy counts of a k-subset of the copies drawn with Pr ~ E_l(W_S W_S^T)."""
    rng = np.random.default_rng(rng_seed)

    def decide(t, cands, probs):
        u = rng.random()
        acc = 0.0
        for (j, _, _), p in zip(cands, probs):
            acc += p
            if u < acc and p > 0:
                return j
        return max(j for (j, _, _), p in zip(cands, probs) if p > 0)

    counts, _ = _compact_walk(W, k, l, decide)
    return tuple(counts)


def compact_path_probability(W: CompactVectorSet, k: int, l: int, counts) -> tuple:
    """Probability the compact walk outputs ``counts``, plus the per-step distributions."""
    counts = tuple(int(c) for c in counts)
    prob = [1.0]

    def decide(t, cands, probs):
        for (j, _, _), p in zip(cands, probs):
            if j == counts[t] and p > 0.0:
                prob[0] *= p
                return j
        raise _ZeroPath

    try:
        _, steps = _compact_walk(W, k, l, decide)
    except _ZeroPath:
        return 0.0, []
    return prob[0], steps


def derandomize_compact(W: CompactVectorSet, k: int, lp: int, l: int) -> tuple:
    """Pick each copy count minimising E[E_lp/E_l | prefix] (ties: smallest count).

    The numerator skips copy-sets spanning fewer than l distinct vectors,
    which have E_l = 0 and so no probability.
    """

    def decide(t, cands, probs):
        best_j, best_x = None, math.inf
        for (j, _, s), p in zip(cands, probs):
            if p <= ZERO_RTOL:
                continue
            x = s["num"].ratio(s[l])
            if best_j is None or x < best_x - TIE_RTOL * max(1.0, abs(best_x)):
                best_j, best_x = j, x
        if best_j is None:
            raise DegenerateMeasureError(f"no admissible copy count for vector {t}")
        return best_j

    counts, _ = _compact_walk(W, k, l, decide, lp=lp)
    return tuple(counts)


def _rep_orders(inst, lp, l):
    if l is None:
        lp, l = inst.d - 1, inst.d
    if not 0 <= lp < l <= inst.d:
        raise InvalidInputError(f"need 0 <= lp < l <= d, got lp={lp}, l={l}")
    if inst.k < l:
        raise InvalidInputError(f"with repetitions the walk needs k >= l, got k={inst.k}")
    return lp, l


def sample_with_repetitions(inst, x, eps: float, rng_seed: int,
                            lp: int | None = None, l: int | None = None) -> Selection:
    lp, l = _rep_orders(inst, lp, l)
    _, m = repetition_multiplicities(x, inst.k, eps)
    counts = sample_compact(CompactVectorSet(inst.vectors, m), inst.k, l, rng_seed)
    sel = Selection(counts)
    return sel.with_value(ratio_value(inst.gram(sel.counts), lp, l))


def derandomized_with_repetitions(inst, x, eps: float,
                                  lp: int | None = None, l: int | None = None) -> Selection:
    lp, l = _rep_orders(inst, lp, l)
    _, m = repetition_multiplicities(x, inst.k, eps)
    counts = derandomize_compact(CompactVectorSet(inst.vectors, m), inst.k, lp, l)
    sel = Selection(counts)
    return sel.with_value(ratio_value(inst.gram(sel.counts), lp, l))
