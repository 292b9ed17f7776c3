import math

import numpy as np
import pytest

from idmix.errors import HypothesisError
from idmix.idlaw import CharTriplet, compound_poisson, cumulant, gaussian_triplet
from idmix.levybasis import GeneratingQuadruple, stream
from idmix.mixdiag import SequenceSpec, combined_criterion
from idmix.mmafield import MmaModel, exponential_kernel, zero_kernel
from idmix.subord import (
    SheetSpec,
    drift_subordinator,
    poisson_subordinator,
    sample_subordinated,
    simulate_subordinated_mma,
    subordinated_cell_cumulant,
    subordinated_cell_mc,
    subordinated_model,
    subordinated_triplet,
)

X = SheetSpec(gaussian_triplet(1.0))
T = poisson_subordinator()
THETAS = np.array([0.5, 1.3, 2.0])


def test_drift_subordinator_is_identity():
    for m in (0.5, 2.0):
        np.testing.assert_allclose(subordinated_cell_cumulant(X, drift_subordinator(), m, THETAS),
                                   m * cumulant(X.base_triplet, THETAS), atol=1e-15)


def test_poisson_time_gaussian_space():
    np.testing.assert_allclose(subordinated_cell_cumulant(X, T, 1.0, THETAS), np.exp(-THETAS ** 2 / 2) - 1, atol=1e-15)
    assert subordinated_cell_cumulant(X, T, 1.0, 0.0) == 0
    M = 10_000
    est, _ = subordinated_cell_mc(X, T, 1.0, 1.3, M, seed=1)
    assert abs(est - np.exp(np.exp(-1.3 ** 2 / 2) - 1)) <= 4 / math.sqrt(M)


def test_subordinated_triplet_reproduces_exponent():
    tr = subordinated_triplet(X, T)
    np.testing.assert_allclose(cumulant(tr, THETAS), subordinated_cell_cumulant(X, T, 1.0, THETAS), atol=1e-12)
    Xc = SheetSpec(compound_poisson([1.0, -0.5], [1.0, 0.5], drift=[0.2]))
    T2 = poisson_subordinator(2.0, 0.7)
    np.testing.assert_allclose(cumulant(subordinated_triplet(Xc, T2), THETAS),
                               subordinated_cell_cumulant(Xc, T2, 1.0, THETAS), atol=1e-12)


def test_subordinator_hypotheses():
    with pytest.raises(HypothesisError):
        SheetSpec(gaussian_triplet(1.0), nonneg=True)
    with pytest.raises(HypothesisError):
        SheetSpec(compound_poisson([-1.0], [1.0]), nonneg=True)
    with pytest.raises(HypothesisError):
        SheetSpec(CharTriplet([-1.0], [[0.0]]), nonneg=True)
    with pytest.raises(HypothesisError):
        subordinated_cell_cumulant(X, X, 1.0, 1.0)


def test_half_cells_sum_to_a_full_cell():
    M = 20_000
    full = sample_subordinated(X, T, np.ones(M), stream(3, 0), stream(3, 1))[:, 0]
    halves = sample_subordinated(X, T, np.full(2 * M, 0.5), stream(4, 0), stream(4, 1))[:, 0]
    halves = halves.reshape(M, 2).sum(axis=1)
    ecf_full = np.exp(1j * np.outer(THETAS, full)).mean(axis=1)
    ecf_half = np.exp(1j * np.outer(THETAS, halves)).mean(axis=1)
    assert np.max(np.abs(ecf_full - ecf_half)) <= 4 / math.sqrt(M)


def test_drift_time_matches_plain_mma():
    M = 10_000
    pts = np.array([[0.0]])
    sub = simulate_subordinated_mma(exponential_kernel(1.0), X, drift_subordinator(), pts, 0.01, M, seed=2)
    plain = MmaModel(exponential_kernel(1.0), GeneratingQuadruple(X.base_triplet))
    ecf = np.exp(1j * np.outer(THETAS, sub.values[:, 0, 0])).mean(axis=1)
    assert np.max(np.abs(ecf - plain.charfn(THETAS))) <= 4 / math.sqrt(M)


def test_poisson_time_ou_decays_like_ou():
    m = subordinated_model(exponential_kernel(1.0), X, T)
    tr = combined_criterion(m, SequenceSpec(n=20, t_max=20.0))
    fit = tr.decay_fit()
    assert fit["rate"] == pytest.approx(1.0, rel=1e-3)
    M = 10_000
    real = simulate_subordinated_mma(exponential_kernel(1.0), X, T, np.array([[0.0]]), 0.01, M, seed=3, model=m)
    assert abs(np.exp(1j * real.values[:, 0, 0]).mean() - m.charfn(1.0)) <= 4 / math.sqrt(M)


def test_zero_kernel_zero_field():
    real = simulate_subordinated_mma(zero_kernel(), X, T, np.array([[0.0], [1.0]]), 0.1, 10, seed=0)
    assert not np.any(real.values)
