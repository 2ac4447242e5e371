"""Convex relaxations over the capped simplex, solved by Frank-Wolfe.

Every supported relaxation is a ratio of elementary symmetric polynomials,
``f(x) = (E_lp(M(x)) / E_l(M(x)))^(1/(l - lp))`` with ``M(x) = sum x_i v_i v_i^T``:

* A-opt:   (lp, l) = (d-1, d), i.e. tr M(x)^-1
* small-k: (lp, l) = (k-1, k), the k < d relaxation
* ratio:   caller-supplied (lp, l)

E-opt is evaluation-only (lambda_min of M(x)); there is no relaxation solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, InvalidInputError
from .linalg import esp, ratio_value, psd_eigvalsh

KINDS = ("a-opt", "small-k", "ratio", "e-opt")
RIDGE = 1e-10
CLUSTER_RTOL = 1e-8
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    lp: int | None = None
    l: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown objective kind {self.kind!r}")
        if self.kind == "ratio":
            if self.lp is None or self.l is None or not 0 <= self.lp < self.l:
                raise InvalidInputError("ratio objective needs 0 <= lp < l")

    @classmethod
    def parse(cls, text: str) -> "ObjectiveSpec":
        """Parse 'a-opt', 'small-k', 'e-opt' or 'ratio:LP:L'."""
        if text.startswith("ratio:"):
            parts = text.split(":")
            if len(parts) != 3:
                raise InvalidInputError(f"bad ratio objective {text!r}; use ratio:LP:L")
            try:
                return cls("ratio", int(parts[1]), int(parts[2]))
            except ValueError as exc:
                raise InvalidInputError(f"bad ratio objective {text!r}") from exc
        return cls(text)

    def orders(self, d: int, k: int) -> tuple:
        """(lp, l) for this objective on an instance of dimension d, budget k."""
        if self.kind == "a-opt":
            return (k - 1, k) if k < d else (d - 1, d)
        if self.kind == "small-k":
            if k > d:
                raise InvalidInputError(f"small-k objective needs k <= d, got k={k}, d={d}")
            return k - 1, k
        if self.kind == "ratio":
            if self.l > d:
                raise InvalidInputError(f"ratio needs l <= d, got l={self.l}, d={d}")
            return self.lp, self.l
        raise InvalidInputError("e-opt has no ratio form")

    def label(self) -> str:
        return f"ratio:{self.lp}:{self.l}" if self.kind == "ratio" else self.kind


@dataclass(frozen=True, eq=False)
class FractionalSolution:
    x: np.ndarray
    cp_value: float
    iterations: int
    converged: bool
    gap: float = float("nan")


def _validate_x(inst, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n,):
        raise InvalidInputError(f"x must have length n={inst.n}")
    return x


def objective_value(inst, x, obj: ObjectiveSpec) -> float:
    """Relaxation objective at x (+inf where undefined)."""
    x = _validate_x(inst, x)
    M = inst.gram(x)
    if obj.kind == "e-opt":
        return float(psd_eigvalsh(M)[0])
    lp, l = obj.orders(inst.d, inst.k)
    return ratio_value(M, lp, l)


def _esp_deleted(w: np.ndarray, j: int) -> np.ndarray:
    """e_j of w with entry m removed, for every m."""
    out = np.zeros(len(w))
    if j < 0:
        return out
    for m in range(len(w)):
        out[m] = esp(np.delete(w, m), j)[j] if j <= len(w) - 1 else 0.0
    return out


def _cluster_average(w: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Average c over runs of (sorted) eigenvalues closer than CLUSTER_RTOL * max."""
    tol = CLUSTER_RTOL * max(w[-1], 1e-300)
    out = c.copy()
    start = 0
    for m in range(1, len(w) + 1):
        if m == len(w) or w[m] - w[m - 1] > tol:
            out[start:m] = c[start:m].mean()
            start = m
    return out


def objective_gradient(inst, x, obj: ObjectiveSpec) -> np.ndarray:
    """Gradient of the relaxation objective via dE_j/dlambda_m = e_{j-1}(lambda without m)."""
    x = _validate_x(inst, x)
    if obj.kind == "e-opt":
        raise InvalidInputError("e-opt is evaluation-only; no gradient")
    lp, l = obj.orders(inst.d, inst.k)
    M = inst.gram(x)
    w, U = np.linalg.eigh(M)
    top = max(w[-1], 0.0)
    if top <= 0.0:
        raise InfeasibleError("M(x) is zero; gradient undefined")
    if w[0] < RIDGE * top:
        w = w + RIDGE * top
    w = np.clip(w, 0.0, None)
    e = esp(w, l)
    if e[l] <= 0.0:
        raise InfeasibleError("M(x) singular beyond ridge repair")
    dlog = (_esp_deleted(w, lp - 1) / e[lp] - _esp_deleted(w, l - 1) / e[l]) / (l - lp)
    dlog = _cluster_average(w, dlog)
    f = (e[lp] / e[l]) ** (1.0 / (l - lp))
    proj = (inst.vectors @ U) ** 2                       # (v_i . u_m)^2
    return f * (proj @ dlog)


def _line_search(fun, f0: float):
    """Golden-section minimisation of a convex fun on [0, 1]; returns (t, f(t))."""
    a, b = 0.0, 1.0
    c, dd = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(dd)
    for _ in range(60):
        if fc <= fd:
            b, dd, fd = dd, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, dd, fd
            dd = a + GOLDEN * (b - a)
            fd = fun(dd)
    best_t, best_f = (c, fc) if fc <= fd else (dd, fd)
    f1 = fun(1.0)
    if f1 <= best_f:
        best_t, best_f = 1.0, f1
    if best_f > f0:
        return 0.0, f0
    return best_t, best_f


def _snap(x: np.ndarray, k: int, capped: bool, eps: float = 1e-12) -> np.ndarray:
    """Snap coordinates within eps of a bound onto it; push the residual into the interior."""
    x = np.clip(x, 0.0, 1.0 if capped else None)
    x[x < eps] = 0.0
    if capped:
        x[x > 1.0 - eps] = 1.0
    resid = k - x.sum()
    inner = (x > 0.0) & (x < 1.0) if capped else x > 0.0
    if resid != 0.0 and np.any(inner):
        j = int(np.flatnonzero(inner)[np.argmax(x[inner])])
        x[j] = min(max(x[j] + resid, 0.0), 1.0) if capped else max(x[j] + resid, 0.0)
    return x


def solve_relaxation(inst, obj: ObjectiveSpec, tol: float = 1e-6,
                     max_iters: int = 5000) -> FractionalSolution:
    """Frank-Wolfe with an extra pairwise (away) candidate step each iteration.

    Both candidates get an exact golden-section line search and the better
    one is taken, so iterates stay feasible and the objective never rises.
    """
    if obj.kind == "e-opt":
        raise InvalidInputError("e-opt relaxation is evaluation-only; use eopt_experiment")
    lp, l = obj.orders(inst.d, inst.k)
    n, k = inst.n, inst.k
    if not inst.repetitions and k > n:
        raise InfeasibleError(f"k={k} exceeds n={n}")
    capped = not inst.repetitions
    x = np.full(n, k / n)
    V = inst.vectors

    def f_of(M):
        return ratio_value(M, lp, l)

    def f_fast(M):
        # line-search evaluator: one eigvalsh, no equilibrated rank test
        w = np.linalg.eigvalsh(M)
        if w[-1] <= 0.0:
            return math.inf
        e = esp(np.clip(w, 0.0, None), l)
        if w[-l] <= 1e-15 * w[-1]:
            return math.inf
        return (e[lp] / e[l]) ** (1.0 / (l - lp))

    M = inst.gram(x)
    f = f_of(M)
    if not math.isfinite(f):
        return FractionalSolution(x, float("inf"), 0, False, float("inf"))

    gap = float("inf")
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        g = objective_gradient(inst, x, obj)
        if capped:
            s = np.zeros(n)
            s[np.argsort(g, kind="stable")[:k]] = 1.0
        else:
            s = np.zeros(n)
            s[int(np.argmin(g))] = float(k)
        gap = float(g @ (x - s))
        if gap <= tol * max(1.0, abs(f)):
            converged = True
            break

        # frank-wolfe candidate
        dir_fw = s - x
        D_fw = (V.T * dir_fw) @ V
        t_fw, f_fw = _line_search(lambda t: f_fast(M + t * D_fw), f)

        # pairwise candidate: move mass from the worst active to the best open coordinate
        open_ = x < 1.0 if capped else np.ones(n, dtype=bool)
        active = x > 0.0
        t_pw, f_pw, dir_pw = 0.0, f, None
        if np.any(open_) and np.any(active):
            i = int(np.flatnonzero(open_)[np.argmin(g[open_])])
            j = int(np.flatnonzero(active)[np.argmax(g[active])])
            if i != j and g[i] < g[j]:
                span = min(x[j], 1.0 - x[i]) if capped else x[j]
                dir_pw = np.zeros(n)
                dir_pw[i], dir_pw[j] = span, -span
                D_pw = np.outer(V[i], V[i]) * span - np.outer(V[j], V[j]) * span
                t_pw, f_pw = _line_search(lambda t: f_fast(M + t * D_pw), f)

        if f_pw < f_fw and dir_pw is not None:
            step, f_new = t_pw * dir_pw, f_pw
            if t_pw == 1.0:
                # land exactly on the bound to avoid drift
                x_new = x + step
                if span == x[j]:
                    x_new[j] = 0.0
                if capped and span == 1.0 - x[i]:
                    x_new[i] = 1.0
            else:
                x_new = x + step
        else:
            step, f_new = t_fw * dir_fw, f_fw
            x_new = x + step
        if f_new >= f or not np.any(step):
            break
        x_try = _snap(x_new, k, capped)
        M_try = inst.gram(x_try)
        f_try = f_of(M_try)
        if not f_try < f:
            break
        x, M, f = x_try, M_try, f_try

    return FractionalSolution(x, float(f), it, converged, gap)
