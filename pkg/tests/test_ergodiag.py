import math

import numpy as np
import pytest

from idmix.ergodiag import (
    ERGODIC,
    INCONCLUSIVE,
    NON_ERGODIC,
    FourierTransform,
    cesaro_average,
    codiff_nnd_check,
    density_of_set,
    ergodic_time_average,
    full_space,
    fuse_verdicts,
    half_space,
    lattice_ball_complement,
    lemma_rate_bound,
    weak_mixing_check,
)
from idmix.errors import HypothesisError
from idmix.idlaw import compound_poisson
from idmix.mixdiag import CONSISTENT, INCONSISTENT, SequenceSpec, combined_criterion
from idmix.mmafield import ConstantField

from test_mixdiag import block_model

CONST = ConstantField(compound_poisson([1.0], [1.0]))


def test_density_full_and_half():
    np.testing.assert_allclose(density_of_set(full_space(1), [5, 50]).values, 1.0)
    np.testing.assert_allclose(density_of_set(half_space(1), [5, 50]).values, 0.5)
    np.testing.assert_allclose(density_of_set(half_space(2), [5, 20]).values, 0.5)


def test_unit_balls_on_lattice_are_not_density_one():
    s = lattice_ball_complement(1, radius=lambda k: np.ones(np.shape(k)[0]))
    rep = density_of_set(s, [10, 100, 1000])
    np.testing.assert_allclose(rep.values, rep.closed_form, atol=1e-12)
    assert rep.limit == pytest.approx(1 - 1 / math.pi, abs=1e-2)
    assert not rep.density_one


def test_shrinking_balls_are_density_one():
    rep = density_of_set(lattice_ball_complement(1), [100, 1000, 10000])
    np.testing.assert_allclose(rep.values, rep.closed_form, atol=1e-12)
    assert rep.density_one


def test_cesaro_examples():
    assert cesaro_average(FourierTransform([[0.0]], [1.0]), 37.0) == pytest.approx(1.0)
    assert cesaro_average(FourierTransform([[1.0]], [1.0]), 100.0) == pytest.approx(math.sin(100) / 100, abs=1e-12)
    assert cesaro_average(lambda p: np.exp(1j * p[:, 0]), 100.0, 1) == pytest.approx(math.sin(100) / 100, abs=1e-10)
    ft = FourierTransform([[0.0], [1.0]], [0.3, 0.7])
    for T in (10.0, 100.0, 1000.0):
        assert abs(cesaro_average(ft, T) - 0.3) <= 0.7 / T
        assert lemma_rate_bound(ft, T) == pytest.approx(0.7 / T)


def test_cesaro_of_combined_trace_vanishes(ou):
    # the OU combined trace e^{-|t|}/2 has Cesaro average (1 - e^{-T}) / (2T)
    f = lambda p: np.exp(-np.abs(p[:, 0])) / 2  # noqa: E731
    for T in (10.0, 100.0):
        assert cesaro_average(f, T, 1) == pytest.approx((1 - math.exp(-T)) / (2 * T), rel=1e-8)
    D = lattice_ball_complement(1)
    pts = D.filter(np.linspace(0.5, 25.0, 60))
    tr = combined_criterion(ou, pts)
    assert tr.final <= 1e-6


def test_weak_mixing_examples(ou):
    seq = SequenceSpec(n=40, t_max=20.0)
    full = weak_mixing_check(ou, full_space(1), seq)
    np.testing.assert_array_equal(full.values, combined_criterion(ou, seq).values)
    D = lattice_ball_complement(1)
    pts = D.filter(seq.generate())
    tr = weak_mixing_check(ou, D, pts)
    np.testing.assert_allclose(tr.values, np.exp(-pts[:, 0]) / 2, atol=1e-12)
    assert tr.verdict == CONSISTENT
    assert weak_mixing_check(CONST, D, pts).verdict == INCONSISTENT
    with pytest.raises(HypothesisError):
        weak_mixing_check(ou, D, [[2 * math.pi]])


def test_ergodic_constant_field():
    grid = np.arange(-100, 100.01, 0.5)[:, None]
    rep = ergodic_time_average(CONST.simulate(grid, 64, seed=5))
    assert rep.verdict == NON_ERGODIC
    assert rep.gap > 4 * rep.ensemble_stderr
    expect = complex(np.exp(np.exp(1j) - 1))
    assert abs(rep.ensemble_mean - expect) <= 4 * rep.ensemble_stderr


def test_ergodic_ou(ou):
    grid = np.arange(-100, 100.01, 0.1)[:, None]
    rep = ergodic_time_average(ou.simulate(grid, 64, 0.05, seed=5), decay_rate=1.0)
    assert rep.verdict == ERGODIC
    short = ergodic_time_average(ou.simulate(grid[:200], 16, 0.05, seed=5), decay_rate=1.0)
    assert short.verdict == INCONCLUSIVE


def test_ergodic_trivial_g(ou):
    real = ou.simulate(np.arange(0, 10.01, 0.5)[:, None], 8, 0.05, seed=1)
    rep = ergodic_time_average(real, lambda x: np.ones(x.shape[:-1]))
    assert rep.gap == 0.0 and rep.verdict == ERGODIC


def test_fuse():
    assert fuse_verdicts(CONSISTENT, ERGODIC) == "ergodic and weakly mixing"
    assert fuse_verdicts(INCONSISTENT, NON_ERGODIC) == "neither ergodic nor weakly mixing"
    assert fuse_verdicts(CONSISTENT, NON_ERGODIC).startswith("inconclusive")


def test_codiff_gram(ou):
    pts = np.linspace(0, 4, 5)
    rep = codiff_nnd_check(ou, pts)
    expect = np.exp(-np.abs(pts[:, None] - pts[None, :])) / 2
    np.testing.assert_allclose(rep.gram.real, expect, atol=1e-10)
    assert rep.min_eigenvalue == pytest.approx(np.linalg.eigvalsh(expect).min(), abs=1e-9)
    assert rep.min_eigenvalue > 0 and rep.ok
    one = codiff_nnd_check(ou, [0.0])
    assert one.gram.shape == (1, 1) and one.gram[0, 0].real >= 0 and abs(one.gram[0, 0].imag) < 1e-15
    blk = codiff_nnd_check(block_model(), pts, j=0, k=1)
    assert np.max(np.abs(blk.gram)) < 1e-14 and abs(blk.min_eigenvalue) < 1e-14


def test_gram_csv(tmp_path, ou):
    rep = codiff_nnd_check(ou, [0.0, 1.0])
    rep.to_csv(tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "a,b,re,im"
