import numpy as np
import pytest
from scipy.integrate import dblquad, quad

import kbinfer as kb


@pytest.fixture
def spec1d():
    return kb.GaussianKernel(np.eye(1))


def fourier_ip_1d(mu1, c1, mu2, c2, r):
    """RKHS inner product of two 1-D Gaussian densities via spectral
    quadrature: (1/2pi) int f1^(w) conj(f2^(w)) / psi^(w) dw."""
    d = mu1 - mu2

    def integrand(w):
        return np.exp(-0.5 * (c1 + c2 - r) * w * w) * np.cos(w * d) / (2 * np.pi)

    return quad(integrand, -np.inf, np.inf, limit=400)[0]


def fourier_ip_2d(mu1, c1, mu2, c2, r):
    d = np.asarray(mu1) - np.asarray(mu2)
    cov = c1 + c2 - r

    def integrand(wy, wx):
        w = np.array([wx, wy])
        return (
            np.exp(-0.5 * w @ cov @ w) * np.cos(w @ d) / (2 * np.pi) ** 2
        )

    lim = 12.0
    return dblquad(integrand, -lim, lim, -lim, lim, epsabs=1e-10)[0]


def test_feature_self_product_is_reproducing(spec1d):
    # <k(., x), k(., x)> = k(x, x)
    m = kb.EmpiricalMean(spec1d, np.array([[0.0]]), np.array([1.0]))
    assert kb.inner_product(m, m) == pytest.approx(
        kb.eval_kernel(spec1d, 0.0, 0.0), abs=1e-14
    )


def test_scaled_feature_distance(spec1d):
    # || k - 2k ||^2 = k(x, x)
    a = kb.EmpiricalMean(spec1d, np.array([[0.0]]), np.array([1.0]))
    b = kb.EmpiricalMean(spec1d, np.array([[0.0]]), np.array([2.0]))
    assert kb.rkhs_distance_sq(a, b) == pytest.approx(
        kb.eval_kernel(spec1d, 0.0, 0.0), abs=1e-12
    )


def test_eval_single_anchor(spec1d):
    m = kb.EmpiricalMean(spec1d, np.array([[0.7]]), np.array([1.0]))
    assert kb.eval_mean(m, 0.2) == pytest.approx(kb.eval_kernel(spec1d, 0.7, 0.2))


def test_eval_zero_weights(spec1d):
    m = kb.EmpiricalMean(spec1d, np.array([[0.7], [1.0]]), np.zeros(2))
    assert kb.eval_mean(m, 0.3) == 0.0
    atom = kb.GaussianAtom([0.0], [[2.0]])
    mm = kb.ModelMean(spec1d, np.zeros(1), (atom,))
    assert kb.eval_mean(mm, 0.3) == 0.0


def test_gaussian_atom_value(spec1d):
    # smoothed unit-variance noise evaluated at its center
    atom = kb.GaussianAtom([0.0], [[2.0]])
    mm = kb.ModelMean(spec1d, np.array([1.0]), (atom,))
    assert kb.eval_mean(mm, 0.0) == pytest.approx(1.0 / np.sqrt(4 * np.pi))


def test_expectation_constant_and_linear(spec1d):
    m = kb.EmpiricalMean(spec1d, np.array([[0.0], [2.0]]), np.array([0.5, 0.5]))
    assert kb.expectation(m, lambda x: 1.0) == pytest.approx(1.0)
    assert kb.expectation(m, lambda x: x) == pytest.approx(1.0)


def test_inner_product_symmetry():
    rng = np.random.default_rng(0)
    spec = kb.GaussianKernel(np.array([[0.8, 0.1], [0.1, 0.6]]))
    a = kb.EmpiricalMean(spec, rng.normal(size=(5, 2)), rng.normal(size=5))
    b = kb.EmpiricalMean(spec, rng.normal(size=(4, 2)), rng.normal(size=4))
    atoms = tuple(
        kb.GaussianAtom(rng.normal(size=2), spec.R + np.eye(2)) for _ in range(3)
    )
    mm = kb.ModelMean(spec, rng.normal(size=3), atoms)
    for u, v in [(a, b), (a, mm), (mm, mm)]:
        assert kb.inner_product(u, v) == pytest.approx(
            kb.inner_product(v, u), abs=1e-12
        )


def test_bilinearity():
    rng = np.random.default_rng(1)
    spec = kb.GaussianKernel(np.eye(1))
    pts = rng.normal(size=(4, 1))
    a = kb.EmpiricalMean(spec, pts, rng.normal(size=4))
    b = kb.EmpiricalMean(spec, pts, rng.normal(size=4))
    c = kb.EmpiricalMean(spec, pts, rng.normal(size=4))
    alpha, beta = 1.7, -0.4
    combo = kb.EmpiricalMean(spec, pts, alpha * b.weights + beta * c.weights)
    lhs = kb.inner_product(a, combo)
    rhs = alpha * kb.inner_product(a, b) + beta * kb.inner_product(a, c)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_distance_to_self_zero():
    rng = np.random.default_rng(2)
    spec = kb.GaussianKernel(np.eye(2))
    m = kb.EmpiricalMean(spec, rng.normal(size=(6, 2)), rng.normal(size=6))
    assert kb.rkhs_distance_sq(m, m) <= 1e-12


def test_distance_matches_weight_difference_form():
    rng = np.random.default_rng(3)
    spec = kb.GaussianKernel(np.eye(2))
    pts = rng.normal(size=(7, 2))
    wa, wb = rng.normal(size=7), rng.normal(size=7)
    a = kb.EmpiricalMean(spec, pts, wa)
    b = kb.EmpiricalMean(spec, pts, wb)
    g = kb.gram(spec, pts)
    expected = (wa - wb) @ g @ (wa - wb)
    assert kb.rkhs_distance_sq(a, b) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_gaussian_atom_ip_matches_spectral_quadrature_1d(seed):
    rng = np.random.default_rng(seed)
    r = float(rng.uniform(0.5, 2.0))
    spec = kb.GaussianKernel([[r]])
    mu1, mu2 = rng.uniform(-2.5, 2.5, size=2)
    c1, c2 = rng.uniform(0.5 + r, 5.0, size=2)
    a = kb.ModelMean(spec, [1.0], (kb.GaussianAtom([mu1], [[c1]]),))
    b = kb.ModelMean(spec, [1.0], (kb.GaussianAtom([mu2], [[c2]]),))
    assert kb.inner_product(a, b) == pytest.approx(
        fourier_ip_1d(mu1, c1, mu2, c2, r), abs=1e-6
    )


def test_gaussian_atom_ip_matches_spectral_quadrature_2d():
    # composed covariances with identity parameters everywhere
    spec = kb.GaussianKernel(np.eye(2))
    c = 3.0 * np.eye(2)
    mu = np.array([0.4, -0.2])
    a = kb.ModelMean(spec, [1.0], (kb.GaussianAtom(mu, c),))
    val = kb.inner_product(a, a)
    assert val == pytest.approx(1.0 / (10 * np.pi), abs=1e-12)
    assert val == pytest.approx(
        fourier_ip_2d(mu, c, mu, c, np.eye(2)), abs=1e-6
    )


def test_empirical_times_atom_is_atom_evaluation(spec1d):
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(5, 1))
    w = rng.normal(size=5)
    emp = kb.EmpiricalMean(spec1d, pts, w)
    atom = kb.LaplaceAtom(0.3, 1.5, 1.0)
    lap_spec = kb.LaplaceKernel(1.0)
    emp_l = kb.EmpiricalMean(lap_spec, pts, w)
    mm = kb.ModelMean(lap_spec, np.array([2.0]), (atom,))
    expected = 2.0 * float(w @ atom.eval(pts))
    assert kb.inner_product(emp_l, mm) == pytest.approx(expected, abs=1e-12)
    del emp


def test_non_gaussian_atom_pairs_unsupported():
    lap_spec = kb.LaplaceKernel(1.0)
    mm = kb.ModelMean(lap_spec, [1.0], (kb.LaplaceAtom(0.0, 1.0, 1.0),))
    with pytest.raises(kb.CapabilityError):
        kb.inner_product(mm, mm)


def test_rkhs_mismatch_rejected():
    a = kb.EmpiricalMean(kb.GaussianKernel(np.eye(1)), [[0.0]], [1.0])
    b = kb.EmpiricalMean(kb.GaussianKernel(2 * np.eye(1)), [[0.0]], [1.0])
    with pytest.raises(ValueError):
        kb.inner_product(a, b)


def test_mixture_atom_linearity(spec1d):
    a1 = kb.GaussianAtom([0.0], [[2.0]])
    a2 = kb.GaussianAtom([1.0], [[3.0]])
    mix = kb.MixtureAtom((a1, a2), np.array([0.3, 0.7]))
    ys = np.linspace(-2, 2, 9).reshape(-1, 1)
    expected = 0.3 * a1.eval(ys) + 0.7 * a2.eval(ys)
    assert np.allclose(mix.eval(ys), expected, atol=1e-14)


def test_single_component_mixture_equals_atom(spec1d):
    a1 = kb.GaussianAtom([0.5], [[2.0]])
    mix = kb.MixtureAtom((a1,), np.array([1.0]))
    ys = np.linspace(-2, 2, 7).reshape(-1, 1)
    assert np.allclose(mix.eval(ys), a1.eval(ys))


def test_weight_validation(spec1d):
    with pytest.raises(ValueError):
        kb.EmpiricalMean(spec1d, np.array([[0.0]]), np.array([np.nan]))
    with pytest.raises(ValueError):
        kb.EmpiricalMean(spec1d, np.array([[0.0]]), np.array([1.0, 2.0]))


def test_mean_csv_round_trip(tmp_path, spec1d):
    rng = np.random.default_rng(6)
    m = kb.EmpiricalMean(spec1d, rng.normal(size=(5, 1)), rng.normal(size=5))
    path = tmp_path / "mean.csv"
    from kbinfer.means import read_mean_csv, write_mean_csv

    write_mean_csv(m, path)
    back = read_mean_csv(path, spec1d)
    assert np.array_equal(back.anchors, m.anchors)
    assert np.array_equal(back.weights, m.weights)
