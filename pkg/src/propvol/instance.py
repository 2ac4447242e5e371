"""Design instances, their JSON format, and instance generators.

A :class:`DesignInstance` stores the vectors row-wise: ``vectors[i]`` is
``v_i`` in R^d.  Gap generators return repetition-mode instances with one
row per distinct vector instead of materialising many copies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BudgetRangeError,
    DimensionMismatchError,
    InstanceParseError,
    InvalidInputError,
    NonFiniteError,
)


@dataclass(frozen=True, eq=False)
class DesignInstance:
    vectors: np.ndarray
    k: int
    repetitions: bool = False
    d: int = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        V = np.array(self.vectors, dtype=float)
        if V.ndim != 2 or V.shape[0] < 1 or V.shape[1] < 1:
            raise DimensionMismatchError(
                f"vectors must be a non-empty n x d array, got shape {V.shape}")
        if not np.all(np.isfinite(V)):
            raise NonFiniteError("instance vectors contain non-finite entries")
        V.setflags(write=False)
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "n", V.shape[0])
        object.__setattr__(self, "d", V.shape[1])
        if isinstance(self.k, bool) or int(self.k) != self.k:
            raise BudgetRangeError(f"k must be an integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if self.k < 1:
            raise BudgetRangeError(f"k must be >= 1, got {self.k}")
        if not self.repetitions and self.k > self.n:
            raise BudgetRangeError(
                f"k={self.k} exceeds n={self.n} without repetitions")

    def __eq__(self, other):
        if not isinstance(other, DesignInstance):
            return NotImplemented
        return (self.k == other.k and self.repetitions == other.repetitions
                and self.vectors.shape == other.vectors.shape
                and bool(np.array_equal(self.vectors, other.vectors)))

    __hash__ = None

    def gram(self, weights) -> np.ndarray:
        """``sum_i w_i v_i v_i^T`` for a length-n weight vector."""
        w = np.asarray(weights, dtype=float)
        return (self.vectors.T * w) @ self.vectors

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "k": self.k,
            "repetitions": self.repetitions,
            "vectors": self.vectors.tolist(),
        }

    def summary(self) -> dict:
        return {"d": self.d, "n": self.n, "k": self.k,
                "repetitions": self.repetitions}


@dataclass(frozen=True)
class SimpleGraph:
    """Undirected simple graph on vertices 1..num_vertices."""

    num_vertices: int
    edges: tuple

    def __post_init__(self):
        if int(self.num_vertices) != self.num_vertices or self.num_vertices < 1:
            raise InvalidInputError("num_vertices must be a positive integer")
        seen = set()
        norm = []
        for e in self.edges:
            if len(e) != 2:
                raise InvalidInputError(f"edge {e!r} must have two endpoints")
            a, b = int(e[0]), int(e[1])
            if a == b:
                raise InvalidInputError(f"self-loop at vertex {a}")
            if not (1 <= a <= self.num_vertices and 1 <= b <= self.num_vertices):
                raise InvalidInputError(f"edge {e!r} out of range")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise InvalidInputError(f"duplicate edge {key}")
            seen.add(key)
            norm.append((a, b))
        object.__setattr__(self, "edges", tuple(norm))


def instance_from_dict(data) -> DesignInstance:
    if not isinstance(data, dict):
        raise InstanceParseError("instance JSON must be an object")
    missing = {"d", "n", "k", "vectors"} - set(data)
    if missing:
        raise InstanceParseError(f"missing fields: {sorted(missing)}")
    d, n, k = data["d"], data["n"], data["k"]
    for name, val in (("d", d), ("n", n), ("k", k)):
        if isinstance(val, bool) or not isinstance(val, int):
            raise InstanceParseError(f"field {name!r} must be an integer")
    if d < 1 or n < 1:
        raise DimensionMismatchError("d and n must be positive")
    reps = data.get("repetitions", False)
    if not isinstance(reps, bool):
        raise InstanceParseError("field 'repetitions' must be a boolean")
    rows = data["vectors"]
    if not isinstance(rows, list):
        raise InstanceParseError("field 'vectors' must be a list")
    if len(rows) != n:
        raise DimensionMismatchError(f"declared n={n} but got {len(rows)} vectors")
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise InstanceParseError(f"vector {i} is not a list")
        if len(row) != d:
            raise DimensionMismatchError(
                f"vector {i} has {len(row)} coordinates, expected d={d}")
        for x in row:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                if x is None or isinstance(x, str):
                    raise NonFiniteError(f"vector {i} has a non-numeric entry {x!r}")
                raise InstanceParseError(f"vector {i} has entry {x!r}")
            if not math.isfinite(x):
                raise NonFiniteError(f"vector {i} has a non-finite entry")
    return DesignInstance(np.array(rows, dtype=float).reshape(n, d), k, reps)


def load_instance(path) -> DesignInstance:
    """Read and validate an instance JSON file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InstanceParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: invalid JSON: {exc}") from exc
    return instance_from_dict(data)


def save_instance(inst: DesignInstance, path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict(), indent=1) + "\n")


def load_graph(path) -> SimpleGraph:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceParseError(f"cannot read graph {path}: {exc}") from exc
    try:
        return SimpleGraph(data["num_vertices"], tuple(map(tuple, data["edges"])))
    except (KeyError, TypeError) as exc:
        raise InstanceParseError(f"malformed graph JSON: {exc}") from exc


def _require(cond, msg):
    if not cond:
        raise InvalidInputError(msg)


def gen_random(n: int, d: int, k: int, seed: int,
               repetitions: bool = False) -> DesignInstance:
    """I.i.d. standard normal vectors, reproducible from ``seed``."""
    _require(n >= d >= 1, f"need n >= d >= 1, got n={n}, d={d}")
    _require(k >= 1, f"need k >= 1, got {k}")
    rng = np.random.default_rng(seed)
    return DesignInstance(rng.standard_normal((n, d)), k, repetitions)


def gen_aopt_gap(d: int, k: int, N: float) -> DesignInstance:
    """A-optimal integrality gap instance.

    Rows ``sqrt(N) e_i`` for i < d and ``e_d``, in repetition mode.  The
    scale is chosen so each large direction contributes eigenvalue ``N``
    per copy, which is what the closed forms ``OPT = (d-1)/N + 1/(k-d+1)``
    and ``delta_0 = k/(sqrt(N)+d-1)`` describe.
    """
    _require(k >= d >= 2, f"need k >= d >= 2, got d={d}, k={k}")
    _require(N > 0 and math.isfinite(N), "N must be a positive finite number")
    V = np.eye(d)
    V[: d - 1] *= math.sqrt(N)
    return DesignInstance(V, k, repetitions=True)


def aopt_gap_closed_forms(d: int, k: int, N: float) -> dict:
    """Finite-N optimum, relaxation value and fractional point of the gap instance."""
    delta0 = k / (math.sqrt(N) + d - 1)
    cp = (d - 1) / (delta0 * N) + 1.0 / (k - (d - 1) * delta0)
    opt = (d - 1) / N + 1.0 / (k - d + 1)
    x = [delta0] * (d - 1) + [k - (d - 1) * delta0]
    return {"delta0": delta0, "cp": cp, "opt": opt, "x": x,
            "opt_counts": [1] * (d - 1) + [k - d + 1]}


def _orthonormal_complement_basis(d: int) -> np.ndarray:
    """(d+1) x d orthonormal basis of the hyperplane orthogonal to all-ones."""
    B = np.zeros((d + 1, d))
    for j in range(d):
        w = np.zeros(d + 1)
        w[j], w[d] = 1.0, -1.0
        for i in range(j):
            w -= (B[:, i] @ w) * B[:, i]
        B[:, j] = w / np.linalg.norm(w)
    return B


def gen_eopt_gap(d: int, k: int) -> DesignInstance:
    """Complete-graph instance: edge vectors of K_{d+1} projected onto 1^perp."""
    _require(d >= 2 and k >= 1, f"need d >= 2, k >= 1, got d={d}, k={k}")
    n = (d + 1) * d // 2
    _require(k <= n, f"k={k} exceeds the {n} edges of K_{d + 1}")
    B = _orthonormal_complement_basis(d)
    rows = []
    for i in range(d + 1):
        for j in range(i + 1, d + 1):
            u = np.zeros(d + 1)
            u[i], u[j] = 1.0, -1.0
            rows.append(B.T @ u)
    return DesignInstance(np.array(rows), k, repetitions=False)


def gen_ratio_gap(d: int, k: int, l: int, lp: int, N: float) -> DesignInstance:
    """Generalized-ratio gap instance: ``sqrt(N) e_i`` (i <= lp), ``e_i`` (lp < i <= l)."""
    _require(0 <= lp < l <= d, f"need 0 <= lp < l <= d, got lp={lp}, l={l}, d={d}")
    _require(k > lp, f"need k > lp, got k={k}, lp={lp}")
    _require(N > 0 and math.isfinite(N), "N must be a positive finite number")
    V = np.zeros((l, d))
    for i in range(l):
        V[i, i] = math.sqrt(N) if i < lp else 1.0
    return DesignInstance(V, k, repetitions=True)


def gen_graph_incidence(g: SimpleGraph) -> DesignInstance:
    """Vertex-by-edge incidence vectors (0/1, no signs); ``k = d``."""
    d = g.num_vertices
    _require(len(g.edges) >= d, f"graph needs at least d={d} edges for k=d")
    V = np.zeros((len(g.edges), d))
    for row, (a, b) in enumerate(g.edges):
        V[row, a - 1] = V[row, b - 1] = 1.0
    return DesignInstance(V, d, repetitions=False)
