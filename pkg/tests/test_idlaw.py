import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idmix.errors import AdmissibleScaleError, DimensionError
from idmix.idlaw import (
    AtomicLevy,
    CharTriplet,
    charfn,
    compound_poisson,
    convolve,
    cumulant,
    find_admissible_scale,
    gamma_subordinator,
    gaussian_jump_measure,
    gaussian_triplet,
    linear_map,
    product_triplet,
    scan_atoms_2pi,
    triplet_from_dict,
    triplet_to_dict,
    zero_triplet,
)

THETAS = np.linspace(-3, 3, 10)


def atom_triplet(points, masses, gamma=None):
    lev = AtomicLevy(points, masses)
    d = lev.dim
    return CharTriplet(np.zeros(d) if gamma is None else gamma, np.zeros((d, d)), lev)


def test_cumulant_examples():
    assert cumulant(gaussian_triplet(1.0), 1.0) == pytest.approx(-0.5)
    assert cumulant(CharTriplet([2.0], [[0.0]]), 1.0) == pytest.approx(2j)
    # gamma = 0: the truncation term -i theta x 1{|x| <= 1} is part of the integrand
    assert cumulant(atom_triplet([1.0], [1.0]), math.pi) == pytest.approx(-2 - 1j * math.pi, abs=1e-14)


def test_charfn_examples():
    assert charfn(compound_poisson([0.7], [2.0]), 0.0) == 1
    assert charfn(gaussian_triplet(1.0), 1.0) == pytest.approx(math.exp(-0.5))
    phi = charfn(compound_poisson([1.0], [1.0]), 1.0)
    assert phi == pytest.approx(np.exp(np.exp(1j) - 1), abs=1e-14)
    assert abs(phi) == pytest.approx(math.exp(math.cos(1) - 1), abs=1e-14)


def test_convolve_examples():
    x = compound_poisson([0.3, -2.0], [1.0, 0.5])
    z = convolve(x, zero_triplet(1))
    np.testing.assert_allclose(charfn(z, THETAS), charfn(x, THETAS), atol=1e-14)
    s = convolve(compound_poisson([1.0], [1.0]), compound_poisson([1.0], [2.0]))
    pts, w = s.levy.discretize()
    np.testing.assert_allclose(pts, [[1.0]])
    np.testing.assert_allclose(w, [3.0])
    g = convolve(gaussian_triplet(1.0), gaussian_triplet(2.0))
    np.testing.assert_allclose(g.sigma, [[3.0]])
    np.testing.assert_allclose(charfn(g, THETAS), charfn(gaussian_triplet(1.0), THETAS) * charfn(gaussian_triplet(2.0), THETAS),
                               atol=1e-14)


def test_convolve_dimension_mismatch():
    with pytest.raises(DimensionError):
        convolve(gaussian_triplet(1.0), gaussian_triplet(np.eye(2)))


def test_linear_map_examples():
    t = compound_poisson([0.5, 3.0], [1.0, 2.0])
    same = linear_map(t, [[1.0]])
    np.testing.assert_allclose(charfn(same, THETAS), charfn(t, THETAS), atol=1e-14)
    m = linear_map(atom_triplet([[2 * math.pi, 0.0]], [1.0]), np.diag([0.5, 1.0]))
    np.testing.assert_allclose(m.levy.discretize()[0], [[math.pi, 0.0]])
    np.testing.assert_allclose(m.levy.discretize()[1], [1.0])
    p = linear_map(atom_triplet([[1.0, 2.0]], [1.0]), [[1.0, 0.0]])
    np.testing.assert_allclose(p.levy.discretize()[0], [[1.0]])
    np.testing.assert_allclose(p.levy.discretize()[1], [1.0])


def test_linear_map_matches_charfn_of_image():
    t = CharTriplet([0.2, -0.1], [[1.0, 0.3], [0.3, 0.5]], AtomicLevy([[0.4, 0.2], [1.5, -2.0]], [1.0, 0.3]))
    M = np.array([[1.0, 2.0], [0.0, -1.0], [0.5, 0.5]])
    img = linear_map(t, M)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.normal(size=3)
        assert charfn(img, u) == pytest.approx(charfn(t, M.T @ u), abs=1e-12)


def test_scan_atoms_examples():
    assert len(scan_atoms_2pi(AtomicLevy([[1.0, 1.0]], [1.0]))) == 0
    bad = scan_atoms_2pi(AtomicLevy([[2 * math.pi, 1.0], [1.0, 1.0]], [1.0, 1.0]))
    np.testing.assert_allclose(bad.offending, [[2 * math.pi, 1.0]])
    bad = scan_atoms_2pi(AtomicLevy([[4 * math.pi, 2 * math.pi]], [3.0]))
    np.testing.assert_allclose(bad.offending, [[4 * math.pi, 2 * math.pi]])


def test_scan_atomless_not_applicable():
    s = scan_atoms_2pi(gaussian_jump_measure(1.0, [0.0], [[1.0]]))
    assert len(s) == 0 and not s.applicable


def test_zero_coordinate_is_in_lattice():
    s = scan_atoms_2pi(AtomicLevy([[0.0, 1.0]], [1.0]))
    assert len(s) == 1
    with pytest.raises(AdmissibleScaleError):
        find_admissible_scale(AtomicLevy([[0.0, 1.0]], [1.0]))


def test_find_admissible_scale_examples():
    np.testing.assert_array_equal(find_admissible_scale(AtomicLevy([[1.0, 1.0]], [1.0])), [1.0, 1.0])
    for Q in (AtomicLevy([2 * math.pi], [1.0]), AtomicLevy([2 * math.pi, 4 * math.pi], [1.0, 2.0])):
        a = find_admissible_scale(Q, seed=3)
        assert np.all(a != 0)
        assert len(scan_atoms_2pi(linear_map(CharTriplet([0.0], [[0.0]], Q), np.diag(a)).levy)) == 0


def test_product_triplet_cumulant_is_sum():
    a = compound_poisson([0.5, -1.0], [1.0, 2.0])
    b = gaussian_triplet([[2.0]])
    p = product_triplet(a, b)
    for th in [(0.3, -1.2), (2.0, 0.5)]:
        assert cumulant(p, th) == pytest.approx(cumulant(a, th[0]) + cumulant(b, th[1]), abs=1e-13)


def test_gaussian_jump_measure_moments():
    # mass and first two moments of rate * N(m, s^2) are reproduced by the nodes
    Q = gaussian_jump_measure(2.0, [0.5], [[0.25]], order=20)
    pts, w = Q.discretize()
    assert w.sum() == pytest.approx(2.0)
    assert (w @ pts[:, 0]) == pytest.approx(1.0)
    assert (w @ pts[:, 0] ** 2) == pytest.approx(2.0 * (0.25 + 0.25))


def test_gamma_subordinator_laplace():
    # E exp(-u T(1)) = (1 + u / b)^(-a) for a Gamma(a, b) subordinator
    a, b = 1.5, 2.0
    t = gamma_subordinator(a, b)
    for u in (0.5, 1.0, 3.0):
        val = cumulant(t, 1j * u)
        assert val.real == pytest.approx(-a * math.log1p(u / b), rel=1e-3)


def test_dict_roundtrip():
    t = CharTriplet([0.1, 0.2], [[1.0, 0.0], [0.0, 2.0]], AtomicLevy([[1.0, 2.0], [-0.5, 0.1]], [0.3, 0.7]))
    back = triplet_from_dict(triplet_to_dict(t))
    for th in [(0.2, 0.4), (-1.0, 3.0)]:
        assert charfn(back, th) == pytest.approx(charfn(t, th), abs=1e-15)


def test_invalid_triplets():
    with pytest.raises(ValueError):
        CharTriplet([0.0], [[-1.0]])
    with pytest.raises(ValueError):
        AtomicLevy([0.0], [1.0])
    with pytest.raises(ValueError):
        AtomicLevy([1.0], [-1.0])
    with pytest.raises(DimensionError):
        CharTriplet([0.0, 0.0], np.eye(2), AtomicLevy([1.0], [1.0]))


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(gamma=finite, s=st.floats(0, 4), x=st.floats(0.05, 6), m=st.floats(0.01, 3), th=finite)
def test_charfn_bounded_and_hermitian(gamma, s, x, m, th):
    t = CharTriplet([gamma], [[s]], AtomicLevy([x, -0.5 * x], [m, 0.5]))
    phi = charfn(t, th)
    assert abs(phi) <= 1 + 1e-12
    assert charfn(t, -th) == pytest.approx(np.conj(phi), abs=1e-12)
