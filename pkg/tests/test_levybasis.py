import math

import numpy as np
import pytest

from idmix.idlaw import charfn, compound_poisson, gaussian_triplet, zero_triplet
from idmix.levybasis import CellPartition, GeneratingQuadruple, cell_law, sample_increments, sample_law, stream

THETAS = np.linspace(-2, 2, 9)


def test_cell_law_examples():
    q = GeneratingQuadruple(compound_poisson([1.0], [1.0]))
    z = cell_law(q, 0.0)
    np.testing.assert_allclose(charfn(z, THETAS), 1.0)
    np.testing.assert_allclose(charfn(cell_law(q, 1.0), THETAS), charfn(q.base, THETAS))
    two = cell_law(q, 2.0)
    np.testing.assert_allclose(charfn(two, THETAS), charfn(compound_poisson([1.0], [2.0]), THETAS), atol=1e-14)


def test_quadruple_validation():
    with pytest.raises(ValueError):
        GeneratingQuadruple(gaussian_triplet(1.0), weights=[0.5, 0.6])
    with pytest.raises(ValueError):
        GeneratingQuadruple(gaussian_triplet(1.0), weights=[1.0, 0.0])


def test_partition_geometry():
    p = CellPartition([0.0, 0.0], [1.0, 2.0], 0.5, weights=[0.25, 0.75])
    assert p.n_spatial == 8 and len(p) == 16
    assert p.volume == 0.25
    np.testing.assert_allclose(p.measures.sum(), 2.0)
    np.testing.assert_allclose(p.centers[0], [0.25, 0.25])


def test_zero_base_gives_zero_increments():
    q = GeneratingQuadruple(zero_triplet(2))
    inc = sample_increments(q, CellPartition([0.0], [5.0], 0.1), seed=1)
    assert inc.shape == (50, 2)
    assert not np.any(inc)


def test_gaussian_increment_variance():
    q = GeneratingQuadruple(gaussian_triplet(1.0))
    inc = sample_increments(q, CellPartition([0.0], [10_000.0], 1.0), seed=7)[:, 0]
    # relative stderr of the variance is sqrt(2 / n) ~ 1.4 %
    assert abs(inc.var(ddof=1) - 1.0) <= 0.05


def test_poisson_counts():
    q = GeneratingQuadruple(compound_poisson([1.0], [1.0]))
    n = 10_000
    inc = sample_increments(q, CellPartition([0.0], [float(n)], 1.0), seed=11)[:, 0]
    np.testing.assert_allclose(inc, np.round(inc))
    assert abs(inc.mean() - 1.0) <= 3 * math.sqrt(1.0 / n)


def test_streams_are_keyed_not_ordered():
    a = stream(5, 2).standard_normal(3)
    stream(5, 1).standard_normal(10)
    np.testing.assert_array_equal(a, stream(5, 2).standard_normal(3))
    assert not np.array_equal(a, stream(5, 3).standard_normal(3))


def test_replicates_are_reproducible():
    q = GeneratingQuadruple(compound_poisson([1.0, -0.3], [0.5, 2.0]))
    p = CellPartition([0.0], [3.0], 0.25)
    np.testing.assert_array_equal(sample_increments(q, p, 3, 4), sample_increments(q, p, 3, 4))


def test_merged_cells_have_the_same_law():
    # one draw over measure 2 against the sum of two unit draws: empirical charfns agree
    t = compound_poisson([1.0, -0.5], [1.0, 0.5], drift=[0.1])
    M = 20_000
    whole = sample_law(t, np.full(M, 2.0), stream(1, 0))[:, 0]
    halves = sample_law(t, np.ones(2 * M), stream(1, 1))[:, 0].reshape(M, 2).sum(axis=1)
    ecf_a = np.exp(1j * np.outer(THETAS, whole)).mean(axis=1)
    ecf_b = np.exp(1j * np.outer(THETAS, halves)).mean(axis=1)
    assert np.max(np.abs(ecf_a - ecf_b)) <= 4 / math.sqrt(M)
    assert np.max(np.abs(ecf_a - charfn(t.scaled(2.0), THETAS))) <= 4 / math.sqrt(M)
