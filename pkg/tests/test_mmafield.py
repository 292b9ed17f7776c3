import math

import numpy as np
import pytest

from idmix.errors import NonIntegrableError, WindowError
from idmix.idlaw import charfn, compound_poisson, cumulant, gaussian_triplet, zero_triplet
from idmix.levybasis import GeneratingQuadruple
from idmix.mixdiag import min_product_functional
from idmix.mmafield import (
    ConstantField,
    FieldRealization,
    MmaModel,
    ScaledField,
    StepKernel,
    SumField,
    constant_kernel,
    exponential_kernel,
    indicator_kernel,
    radial_gaussian_kernel,
    zero_kernel,
)

GAUSS = GeneratingQuadruple(gaussian_triplet(1.0))
CP = GeneratingQuadruple(compound_poisson([1.0], [1.0]))
THETAS = np.linspace(-2, 2, 9)


def test_zero_kernel_integrability_and_triplet():
    m = MmaModel(zero_kernel(), CP)
    rep = m.check_integrability()
    assert rep.integrable
    assert (rep.condition1.value, rep.condition2.value, rep.condition3.value) == (0.0, 0.0, 0.0)
    np.testing.assert_allclose(charfn(m.marginal_triplet(), THETAS), 1.0)


def test_ou_condition2():
    rep = MmaModel(exponential_kernel(1.0), GAUSS).check_integrability()
    assert rep.integrable
    assert rep.condition2.value == pytest.approx(0.5, abs=1e-6)


def test_constant_kernel_is_not_integrable():
    m = MmaModel(constant_kernel(), CP)
    rep = m.check_integrability()
    assert not rep.integrable
    assert math.isinf(rep.condition3.value)
    with pytest.raises(NonIntegrableError):
        m.marginal_triplet()


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_ou_marginal_sigma(lam):
    m = MmaModel(exponential_kernel(lam), GAUSS)
    assert m.marginal_triplet().sigma[0, 0] == pytest.approx(1 / (2 * lam), abs=1e-9)


def test_indicator_cp_marginal_atoms(ind_cp):
    pts, w = ind_cp.marginal_triplet().levy.discretize()
    np.testing.assert_allclose(pts, [[1.0]])
    np.testing.assert_allclose(w, [1.0])
    np.testing.assert_allclose(ind_cp.charfn(THETAS), np.exp(np.exp(1j * THETAS) - 1), atol=1e-12)


def test_joint_pair_examples(ou, ind_cp):
    assert ou.joint_pair(0.0).gauss_cross[0, 0] == pytest.approx(0.5, abs=1e-9)
    assert ou.joint_pair(math.log(2)).gauss_cross[0, 0] == pytest.approx(0.25, abs=1e-9)
    far = ind_cp.joint_pair(2.0)
    assert far.gauss_cross[0, 0] == 0.0
    assert far.levy_pair_functional(min_product_functional()) == 0.0
    near = ind_cp.joint_pair(0.5)
    assert near.levy_pair_functional(min_product_functional()) == pytest.approx(0.5, abs=1e-12)


def test_joint_cumulant_ou_closed_form(ou):
    # X_0 + X_t has variance 2 * (1/2) + 2 * e^{-t}/2
    for t in (0.3, 2.0, 10.0):
        val = ou.joint_cumulant(1.0, 1.0, t)
        assert val == pytest.approx(-0.5 * (1 + math.exp(-t)), abs=1e-10)


def test_joint_cumulant_cp_indicator(ind_cp):
    # jumps in the overlap count twice: (1-t)(e^{2i}-1) + 2t(e^{i}-1)
    t = 0.3
    expect = (1 - t) * (np.exp(2j) - 1) + 2 * t * (np.exp(1j) - 1)
    assert ind_cp.joint_cumulant(1.0, 1.0, t) == pytest.approx(expect, abs=1e-10)


def test_step_kernel_exact_marginal():
    k = StepKernel([[([0.0], [1.0], [[1.0]]), ([0.5], [2.0], [[0.5]])]])
    m = MmaModel(k, GeneratingQuadruple(compound_poisson([1.0], [2.0])))
    # values 1 on [0,.5), 1.5 on [.5,1], 0.5 on (1,2]
    th = 0.7
    expect = 2 * (0.5 * (np.exp(1j * th) - 1) + 0.5 * (np.exp(1.5j * th) - 1) + 1.0 * (np.exp(0.5j * th) - 1))
    assert m.marginal_cumulant(th) == pytest.approx(expect, abs=1e-10)
    assert cumulant(m.marginal_triplet(), th) == pytest.approx(expect, abs=1e-10)


def test_radial_gaussian_2d_covariance():
    m = MmaModel(radial_gaussian_kernel(1.0, 2), GeneratingQuadruple(gaussian_triplet(1.0), l=2))
    # int exp(-|s|^2 - |t-s|^2) ds = (pi / 2) exp(-|t|^2 / 2)
    for t in ([0.0, 0.0], [1.0, 0.5], [3.0, -2.0]):
        expect = math.pi / 2 * math.exp(-np.dot(t, t) / 2)
        assert m.joint_pair(np.array(t)).gauss_cross[0, 0] == pytest.approx(expect, rel=1e-8, abs=1e-12)


def test_simulate_zero_kernel():
    real = MmaModel(zero_kernel(), GAUSS).simulate(np.array([[0.0], [1.0]]), 20, 0.1, seed=0)
    assert real.values.shape == (20, 2, 1)
    assert not np.any(real.values)


def test_simulate_ou_variance(ou):
    M = 10_000
    real = ou.simulate(np.array([[0.0], [3.0]]), M, 0.01, seed=2)
    se = 0.5 * math.sqrt(2 / M)
    for v in real.values[:, :, 0].var(axis=0, ddof=1):
        assert abs(v - 0.5) <= 3 * se


def test_simulate_indicator_cp_ecf(ind_cp):
    M = 10_000
    real = ind_cp.simulate(np.array([[0.0]]), M, 0.01, seed=4)
    ecf = np.exp(1j * real.values[:, 0, 0]).mean()
    assert abs(ecf - np.exp(np.exp(1j) - 1)) <= 4 / math.sqrt(M)


def test_simulation_is_stationary(ind_cp):
    M = 10_000
    pts = np.array([[0.0], [2.5], [7.0]])
    real = ind_cp.simulate(pts, M, 0.01, seed=5)
    ecf = np.exp(1j * real.values[:, :, 0, None] * THETAS).mean(axis=0)
    assert np.max(np.abs(ecf - ecf[0])) <= 4 / math.sqrt(M)


def test_window_must_cover_support(ind_cp):
    with pytest.raises(WindowError):
        ind_cp.simulate(np.array([[0.0]]), 5, 0.1, seed=0, window=([0.0], [0.5]))


def test_realization_roundtrip(tmp_path, ind_cp):
    real = ind_cp.simulate(np.array([[0.0], [1.0]]), 7, 0.1, seed=9)
    real.save(tmp_path / "r.npz")
    back = FieldRealization.load(tmp_path / "r.npz")
    np.testing.assert_array_equal(back.values, real.values)
    assert back.meta["h"] == real.meta["h"]
    real.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "replicate,t1,x1" and len(lines) == 1 + 14
    np.testing.assert_array_equal(real.at([1.0]), real.values[:, 1])
    with pytest.raises(WindowError):
        real.index_of([0.5])


def test_same_seed_same_realization(ou):
    a = ou.simulate(np.array([[0.0]]), 50, 0.05, seed=3)
    b = ou.simulate(np.array([[0.0]]), 50, 0.05, seed=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_constant_field():
    c = ConstantField(compound_poisson([1.0], [1.0]))
    assert c.joint_cumulant(1.0, -1.0, 50.0) == 0
    real = c.simulate(np.array([[0.0], [5.0]]), 10, seed=1)
    np.testing.assert_array_equal(real.values[:, 0], real.values[:, 1])


def test_sum_and_scaled_fields():
    a = MmaModel(exponential_kernel(1.0), GAUSS)
    b = MmaModel(exponential_kernel(2.0), GAUSS)
    s = SumField([a, b])
    assert s.joint_pair(1.0).gauss_cross[0, 0] == pytest.approx(math.exp(-1) / 2 + math.exp(-2) / 4, abs=1e-10)
    sc = ScaledField(a, [[3.0]])
    assert sc.marginal_triplet().sigma[0, 0] == pytest.approx(4.5, abs=1e-8)
    assert sc.joint_cumulant(1.0, 0.0, 0.0) == pytest.approx(a.joint_cumulant(3.0, 0.0, 0.0), abs=1e-12)


def test_q0_atoms(ou, ind_cp):
    assert ou.q0_atoms() is None or ou.q0_atoms().points.shape[0] == 0
    np.testing.assert_allclose(ind_cp.q0_atoms().points, [[1.0]])
