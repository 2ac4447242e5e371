import itertools
import math

import numpy as np
import pytest

from propvol.errors import SizeCapError
from propvol.instance import (DesignInstance, SimpleGraph, aopt_gap_closed_forms, gen_aopt_gap,
                              gen_graph_incidence, gen_random)
from propvol.linalg import elementary_symmetric
from propvol.oracle import (brute_coeff_sum, brute_compact_distribution, brute_expectation,
                            brute_opt, brute_ratio_of_sums)
from propvol.relax import ObjectiveSpec
from propvol.sampler import HardCoreMeasure
from propvol.tpoly import CompactVectorSet

AOPT = ObjectiveSpec("a-opt")


def test_basis_optimum():
    best = brute_opt(DesignInstance(np.eye(3), 3), AOPT)
    assert best.objective_value == pytest.approx(3.0)
    assert list(best.counts) == [1, 1, 1]


def test_two_triangles_optimum():
    g = SimpleGraph(6, ((1, 2), (2, 3), (1, 3), (4, 5), (5, 6), (4, 6), (3, 4)))
    best = brute_opt(gen_graph_incidence(g), AOPT)
    assert best.objective_value == pytest.approx(4.5, abs=1e-9)
    assert best.counts[6] == 0


def test_gap_optimum_counts():
    for d, k in [(2, 3), (2, 4), (3, 5)]:
        inst = gen_aopt_gap(d, k, 1e6)
        best = brute_opt(inst, AOPT)
        cf = aopt_gap_closed_forms(d, k, 1e6)
        assert list(best.counts) == cf["opt_counts"]
        assert best.objective_value == pytest.approx(cf["opt"], rel=1e-12)


def test_eopt_maximises():
    inst = DesignInstance([[1, 0], [0, 1], [1, 0], [0, 2]], 2)
    best = brute_opt(inst, ObjectiveSpec("e-opt"))
    assert best.objective_value == pytest.approx(1.0)


def test_size_cap():
    inst = gen_random(30, 2, 15, 0)
    with pytest.raises(SizeCapError):
        brute_opt(inst, AOPT)


def test_coeff_sum_oracle_examples():
    V = np.array([[1.0], [2.0]])
    assert brute_coeff_sum([1, 1], V, [], [], 1, 1) == 5.0
    assert brute_coeff_sum([1, 1], V, [0], [], 1, 1) == 1.0
    assert brute_coeff_sum(np.ones(5), np.eye(5)[:, :2], [], [], 3, 0) == math.comb(5, 3)


def test_coeff_sum_oracle_cauchy_binet(rng):
    V = rng.standard_normal((6, 3))
    assert brute_coeff_sum(np.ones(6), V, [], [], 3, 3) == pytest.approx(
        elementary_symmetric(V.T @ V, 3), rel=1e-10)


def test_expectation_single_support():
    inst = gen_random(5, 2, 2, 1)
    mu = HardCoreMeasure(np.array([1.0, 1.0, 0, 0, 0]), "exactly-k", 2)
    M = inst.gram([1, 1, 0, 0, 0])
    assert brute_expectation(inst, mu, 1, 2) == pytest.approx(np.trace(np.linalg.inv(M)))


def test_expectation_orthonormal_constant():
    inst = DesignInstance(np.vstack([np.eye(2), np.eye(2)]), 2)
    mu = HardCoreMeasure(np.ones(4), "exactly-k", 2)
    assert brute_expectation(inst, mu, 1, 2) == pytest.approx(2.0)
    assert brute_ratio_of_sums(inst, mu, 1, 2) > 2.0     # repeated pairs carry E_1 but no det


def test_compact_distribution_normalised(rng):
    W = CompactVectorSet(rng.standard_normal((3, 2)), (2, 1, 3))
    dist = brute_compact_distribution(W, 3, 2)
    assert math.fsum(dist.values()) == pytest.approx(1.0)
    # multinomial weight check against explicit copies
    rows = [W.vectors[i] for i, m in enumerate(W.multiplicities) for _ in range(m)]
    owner = [i for i, m in enumerate(W.multiplicities) for _ in range(m)]
    weights = {}
    for S in itertools.combinations(range(len(rows)), 3):
        c = tuple(sum(owner[s] == i for s in S) for i in range(3))
        A = np.array([rows[s] for s in S])
        weights[c] = weights.get(c, 0.0) + elementary_symmetric(A.T @ A, 2)
    total = sum(weights.values())
    for c, p in dist.items():
        assert p == pytest.approx(weights[c] / total, rel=1e-9)
