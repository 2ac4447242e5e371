"""End-to-end runs: relax, build a measure, sample or derandomize, pad, evaluate.

Also hosts the gap, restricted-invertibility, E-opt and batch experiments,
plus the deterministic JSON/CSV writers used by the CLI.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import instance as inst_mod
from .errors import DesignError, InfeasibleError, InvalidInputError
from .instance import DesignInstance
from .linalg import Selection, esp, psd_eigvalsh, ratio_value, top_k_reciprocal_sum
from .oracle import STATE_CAP, brute_opt, selection_objective
from .relax import ObjectiveSpec, solve_relaxation
from .sampler import (RegimeChoice, build_measure, derandomized_round,
                      derandomized_with_repetitions, sample_proportional_volume,
                      sample_with_repetitions)

DEFAULT_EPS = 0.5
CLI_REGIMES = ("auto", "k-eq-d", "asymptotic", "repetitions", "small-k", "brute")


# ---------------------------------------------------------------------------
# regime handling

def auto_regime(k: int, d: int, repetitions: bool) -> str:
    """Pure function of (k, d, repetitions); repetition mode is checked first."""
    if repetitions:
        return "with-repetitions"
    if k == d:
        return "k-eq-d"
    if k < d:
        return "small-k"
    return "asymptotic"


def resolve_regime(name: str, inst: DesignInstance, eps: float | None = None) -> RegimeChoice:
    if name not in CLI_REGIMES and name != "with-repetitions":
        raise InvalidInputError(f"unknown regime {name!r}")
    if name == "auto":
        name = auto_regime(inst.k, inst.d, inst.repetitions)
    if name == "repetitions":
        name = "with-repetitions"
    if name in ("asymptotic", "with-repetitions"):
        return RegimeChoice(name, DEFAULT_EPS if eps is None else float(eps))
    if inst.repetitions and name != "brute":
        raise InvalidInputError(f"regime {name!r} is not available with repetitions")
    return RegimeChoice(name)


def theoretical_alpha(obj: ObjectiveSpec, regime: RegimeChoice, d: int, k: int):
    """Approximation factor proven for this (objective, regime), or None."""
    r, eps = regime.regime, regime.eps
    if r == "brute":
        return 1.0
    lp, l = obj.orders(d, k)
    if r == "with-repetitions":
        return k * (1.0 + eps) / (k - l + 1) if k >= l else None
    if r == "asymptotic":
        return 1.0 + eps
    if r == "small-k":
        return float(k) if (lp, l) == (k - 1, k) else None
    if r == "k-eq-d":
        if obj.kind == "ratio":
            return math.e * l / (l - lp) if k == l else None
        return float(d)
    return None


# ---------------------------------------------------------------------------
# reports

@dataclass
class RunReport:
    instance: dict
    objective: str
    regime: str
    epsilon: float | None
    seed: int
    derandomized: bool
    cp_value: float
    objective_value: float
    ratio: float
    alpha: float | None
    counts: list
    padded: int = 0
    iterations: int = 0
    converged: bool = True
    fw_gap: float = float("nan")
    wall_time_s: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "instance": self.instance,
            "objective": self.objective,
            "regime": self.regime,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "derandomized": self.derandomized,
            "cp_value": self.cp_value,
            "objective_value": self.objective_value,
            "ratio": self.ratio,
            "alpha": self.alpha,
            "counts": list(self.counts),
            "padded": self.padded,
            "iterations": self.iterations,
            "converged": self.converged,
            "fw_gap": self.fw_gap,
        }
        out.update(self.extra)
        if timing and self.wall_time_s is not None:
            out["wall_time_s"] = self.wall_time_s
        return out


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    text = format(v, ".17g")
    return text if any(ch in text for ch in ".en") else text + ".0"


def to_json(obj, indent: int = 1, _level: int = 0) -> str:
    """Deterministic JSON: floats with 17 significant digits, non-finite as strings."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _fmt_float(float(v)).strip('"')
    return str(v)


# ---------------------------------------------------------------------------
# the main run

def _objective_of(inst, counts, obj: ObjectiveSpec) -> float:
    return selection_objective(inst, Selection(counts), obj)


def pad_selection(inst, counts, obj: ObjectiveSpec, x=None) -> tuple:
    """Greedily add the item that gives the smallest objective until |S| = k.

    Ties (including all-infinite steps) go to the larger x_i, then the lower index.
    """
    counts = np.array(counts, dtype=np.int64)
    x = np.zeros(inst.n) if x is None else np.asarray(x, dtype=float)
    added = 0
    while counts.sum() < inst.k:
        best = None
        for i in range(inst.n):
            if not inst.repetitions and counts[i] >= 1:
                continue
            trial = counts.copy()
            trial[i] += 1
            key = (_pad_key(inst, trial, obj), -x[i], i)
            if best is None or key < best[0]:
                best = (key, i)
        if best is None:
            raise InfeasibleError("no item left to pad with")
        counts[best[1]] += 1
        added += 1
    return counts, added


def _pad_key(inst, counts, obj):
    # objective of the partial set; with too few items, prefer larger E_size
    if obj.kind == "e-opt":
        return -_objective_of(inst, counts, obj)
    lp, l = obj.orders(inst.d, inst.k)
    size = int(counts.sum())
    M = inst.gram(counts)
    if size >= l:
        v = ratio_value(M, lp, l)
        if math.isfinite(v):
            return (0, v)
    j = min(size, inst.d)
    return (1, -float(esp(psd_eigvalsh(M), j)[j]))


def run_design(inst: DesignInstance, obj: ObjectiveSpec, regime, seed: int = 0,
               derandomize: bool = False, eps: float | None = None,
               tol: float = 1e-6, max_iters: int = 5000) -> RunReport:
    """solve -> measure -> sample or derandomize -> pad -> evaluate."""
    t0 = time.perf_counter()
    if obj.kind == "e-opt":
        raise InvalidInputError("e-opt has no rounding guarantee; use eopt_experiment")
    if not isinstance(regime, RegimeChoice):
        regime = resolve_regime(regime, inst, eps)
    lp, l = obj.orders(inst.d, inst.k)
    sol = solve_relaxation(inst, obj, tol=tol, max_iters=max_iters)
    if not math.isfinite(sol.cp_value):
        raise InfeasibleError("relaxation objective is infinite for every feasible x")

    r = regime.regime
    if r == "brute":
        counts = brute_opt(inst, obj).counts
    elif r == "with-repetitions":
        if not inst.repetitions:
            raise InvalidInputError("with-repetitions regime needs repetitions=true")
        if derandomize:
            counts = derandomized_with_repetitions(inst, sol.x, regime.eps, lp, l).counts
        else:
            counts = sample_with_repetitions(inst, sol.x, regime.eps, seed, lp, l).counts
    else:
        mu = build_measure(sol.x, inst, regime)
        if derandomize:
            counts = derandomized_round(inst, mu, lp, l).counts
        else:
            counts = sample_proportional_volume(inst, mu, l, seed).counts
    counts, added = pad_selection(inst, counts, obj, sol.x)
    value = _objective_of(inst, counts, obj)
    return RunReport(
        instance=inst.summary(),
        objective=obj.label(),
        regime=r,
        epsilon=regime.eps,
        seed=int(seed),
        derandomized=bool(derandomize),
        cp_value=sol.cp_value,
        objective_value=value,
        ratio=value / sol.cp_value if sol.cp_value > 0 else float("inf"),
        alpha=theoretical_alpha(obj, regime, inst.d, inst.k),
        counts=[int(c) for c in counts],
        padded=added,
        iterations=sol.iterations,
        converged=sol.converged,
        fw_gap=sol.gap,
        wall_time_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# experiments

def evaluate_gap(inst: DesignInstance, obj: ObjectiveSpec, tol: float = 1e-9,
                 max_iters: int = 5000) -> dict:
    """Relaxation value, brute-force optimum and their ratio OPT/CP."""
    sol = solve_relaxation(inst, obj, tol=tol, max_iters=max_iters)
    best = brute_opt(inst, obj)
    return {
        "instance": inst.summary(),
        "objective": obj.label(),
        "cp_value": sol.cp_value,
        "opt_value": best.objective_value,
        "gap": best.objective_value / sol.cp_value,
        "opt_counts": [int(c) for c in best.counts],
        "x": [float(v) for v in sol.x],
        "converged": sol.converged,
    }


def stable_rank(M) -> float:
    w = psd_eigvalsh(M)
    return float(w.sum() / w[-1]) if w[-1] > 0 else 0.0


def rip_subset(vectors, c, k: int) -> tuple:
    """Deterministic k-subset with a harmonic-mean lower bound on its top-k eigenvalues.

    Returns (Selection, report).  The report's ``slack`` is harmonic mean minus
    the bound ``(r-k+1)/r * tr(M)/sum(c)``.
    """
    V = np.asarray(vectors, dtype=float)
    c = np.asarray(c, dtype=float)
    if V.ndim != 2 or c.shape != (V.shape[0],):
        raise InvalidInputError("need one weight per vector")
    if np.any(c < 0) or not np.all(np.isfinite(c)) or c.sum() <= 0:
        raise InvalidInputError("weights must be finite, nonnegative and not all zero")
    M = (V.T * c) @ V
    r = stable_rank(M)
    if k < 1 or k > r + 1e-9:
        raise InvalidInputError(f"k={k} must lie in [1, r] with stable rank r={r:.6g}")
    inst = DesignInstance(V, k)
    x = k * c / c.sum()
    mu = build_measure(x, inst, RegimeChoice("small-k"))
    sel = derandomized_round(inst, mu, k - 1, k)
    recip = top_k_reciprocal_sum(inst.gram(sel.counts), k)
    hm = k / recip if math.isfinite(recip) and recip > 0 else 0.0
    bound = (r - k + 1) / r * float(np.trace(M)) / float(c.sum())
    report = {"k": k, "stable_rank": r, "harmonic_mean": hm, "bound": bound,
              "slack": hm - bound, "counts": [int(v) for v in sel.counts]}
    return sel.with_value(hm), report


def eopt_experiment(d: int, k: int, trials: int = 1000, seed: int = 0,
                    cap: int = STATE_CAP) -> dict:
    """Fractional vs best-found integral lambda_min on the complete-graph instance."""
    inst = inst_mod.gen_eopt_gap(d, k)
    x = np.full(inst.n, k / inst.n)
    frac = float(psd_eigvalsh(inst.gram(x))[0])
    if math.comb(inst.n, k) <= cap:
        best = brute_opt(inst, ObjectiveSpec("e-opt"), cap=cap)
        method, best_val, best_counts = "enumeration", best.objective_value, best.counts
    else:
        if trials < 1:
            raise InvalidInputError("trials must be positive when enumeration is too large")
        rng = np.random.default_rng(seed)
        best_val, best_counts = -math.inf, None
        for _ in range(trials):
            S = np.sort(rng.choice(inst.n, size=k, replace=False))
            counts = np.zeros(inst.n, dtype=np.int64)
            counts[S] = 1
            v = float(psd_eigvalsh(inst.gram(counts))[0])
            if v > best_val:
                best_val, best_counts = v, counts
        method = "sampled"
    return {
        "d": d, "k": k, "n": inst.n, "method": method,
        "trials": trials if method == "sampled" else math.comb(inst.n, k),
        "seed": seed,
        "fractional_lambda_min": frac,
        "closed_form": 2.0 * k / d,
        "best_integral_lambda_min": best_val,
        "gap": frac / best_val if best_val > 1e-12 else float("inf"),
        "best_counts": [int(v) for v in best_counts],
    }


# ---------------------------------------------------------------------------
# batch runs

BENCH_COLUMNS = ("name", "kind", "d", "n", "k", "repetitions", "objective", "regime",
                 "epsilon", "seed", "derandomized", "cp_value", "objective_value",
                 "ratio", "alpha", "converged", "error")


def _bench_instance(spec: dict, base: Path) -> DesignInstance:
    if "instance" in spec:
        return inst_mod.load_instance(base / spec["instance"])
    gen = spec.get("generator")
    if not isinstance(gen, dict) or "name" not in gen:
        raise InvalidInputError("row needs an 'instance' path or a 'generator' object")
    if gen["name"] == "graph" and "graph" in gen:
        gen = dict(gen, graph=str(base / gen["graph"]))
    return generate(gen["name"], gen)


def generate(name: str, p: dict) -> DesignInstance:
    """Build an instance from a generator name and a parameter mapping."""
    try:
        if name == "random":
            return inst_mod.gen_random(int(p["n"]), int(p["d"]), int(p["k"]),
                                       int(p.get("seed", 0)), bool(p.get("repetitions", False)))
        if name == "aopt-gap":
            return inst_mod.gen_aopt_gap(int(p["d"]), int(p["k"]), float(p["N"]))
        if name == "eopt-gap":
            return inst_mod.gen_eopt_gap(int(p["d"]), int(p["k"]))
        if name == "ratio-gap":
            return inst_mod.gen_ratio_gap(int(p["d"]), int(p["k"]), int(p["l"]),
                                          int(p["lp"]), float(p["N"]))
        if name == "graph":
            return inst_mod.gen_graph_incidence(inst_mod.load_graph(p["graph"]))
    except KeyError as exc:
        raise InvalidInputError(f"generator {name!r} is missing parameter {exc}") from exc
    raise InvalidInputError(f"unknown generator {name!r}")


def _bench_row(spec: dict, base: Path) -> dict:
    row = {c: None for c in BENCH_COLUMNS}
    row["name"] = spec.get("name", "")
    row["kind"] = kind = spec.get("kind", "design")
    try:
        inst = _bench_instance(spec, base)
        row.update(d=inst.d, n=inst.n, k=inst.k, repetitions=inst.repetitions)
        obj = ObjectiveSpec.parse(spec.get("objective", "a-opt"))
        row["objective"] = obj.label()
        if kind == "design":
            rep = run_design(inst, obj, spec.get("regime", "auto"),
                             seed=int(spec.get("seed", 0)),
                             derandomize=bool(spec.get("derandomize", False)),
                             eps=spec.get("epsilon"))
            row.update(regime=rep.regime, epsilon=rep.epsilon, seed=rep.seed,
                       derandomized=rep.derandomized, cp_value=rep.cp_value,
                       objective_value=rep.objective_value, ratio=rep.ratio,
                       alpha=rep.alpha, converged=rep.converged)
        elif kind == "gap":
            g = evaluate_gap(inst, obj)
            row.update(regime="brute", cp_value=g["cp_value"], objective_value=g["opt_value"],
                       ratio=g["gap"], converged=g["converged"])
        else:
            raise InvalidInputError(f"unknown row kind {kind!r}")
    except (DesignError, ValueError, TypeError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def bench(config_path) -> str:
    """Run every row of a JSON config and return the CSV text (config order)."""
    path = Path(config_path)
    try:
        config = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read bench config {path}: {exc}") from exc
    runs = config.get("runs") if isinstance(config, dict) else None
    if not isinstance(runs, list):
        raise InvalidInputError("bench config must be an object with a 'runs' list")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for spec in runs:
        row = _bench_row(spec if isinstance(spec, dict) else {}, path.parent)
        writer.writerow([_csv_cell(row[c]) for c in BENCH_COLUMNS])
    return buf.getvalue()
