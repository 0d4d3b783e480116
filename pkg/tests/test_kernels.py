import numpy as np
import pytest
from scipy.integrate import quad

import kbinfer as kb
from kbinfer.kernels import as_points


def specs():
    return [
        kb.GaussianKernel(np.eye(1)),
        kb.GaussianKernel(np.array([[0.5, 0.2], [0.2, 0.8]])),
        kb.LaplaceKernel(2.0),
        kb.CauchyKernel(1.0),
    ]


def random_points(spec, n, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, spec.dim), scale=2.0)


def test_gaussian_zero_distance():
    spec = kb.GaussianKernel(np.eye(1))
    assert kb.eval_kernel(spec, 0.0, 0.0) == pytest.approx(1.0 / np.sqrt(2 * np.pi))


def test_gaussian_unit_distance_matches_normal_pdf():
    spec = kb.GaussianKernel(np.eye(1))
    expected = np.exp(-0.5) / np.sqrt(2 * np.pi)
    assert kb.eval_kernel(spec, 0.0, 1.0) == pytest.approx(expected, abs=1e-12)


def test_laplace_zero_distance():
    assert kb.eval_kernel(kb.LaplaceKernel(2.0), 0.0, 0.0) == pytest.approx(1.0)


def test_cauchy_zero_distance():
    assert kb.eval_kernel(kb.CauchyKernel(1.0), 0.0, 0.0) == pytest.approx(1.0 / np.pi)


@pytest.mark.parametrize("seed", range(3))
def test_symmetry_exact(seed):
    for spec in specs():
        pts = random_points(spec, 8, seed)
        for i in range(4):
            x, y = pts[2 * i], pts[2 * i + 1]
            assert kb.eval_kernel(spec, x, y) == kb.eval_kernel(spec, y, x)


@pytest.mark.parametrize("seed", range(3))
def test_gram_psd(seed):
    for spec in specs():
        pts = random_points(spec, 50, seed)
        g = kb.gram(spec, pts)
        eigs = np.linalg.eigvalsh(g)
        assert eigs.min() >= -1e-10


def test_gram_exactly_symmetric():
    for spec in specs():
        pts = random_points(spec, 30, 7)
        g = kb.gram(spec, pts)
        assert np.array_equal(g, g.T)


def test_gram_same_array_twice_uses_symmetric_path():
    spec = kb.GaussianKernel(np.eye(2))
    pts = random_points(spec, 20, 1)
    g = kb.gram(spec, pts, pts)
    assert np.array_equal(g, g.T)


def test_gram_matches_eval_kernel():
    for spec in specs():
        a = random_points(spec, 4, 2)
        b = random_points(spec, 3, 3)
        g = kb.gram(spec, a, b)
        for i in range(4):
            for j in range(3):
                assert g[i, j] == pytest.approx(
                    kb.eval_kernel(spec, a[i], b[j]), abs=1e-14
                )


def test_single_point_gram():
    spec = kb.LaplaceKernel(0.7)
    x = np.array([[0.4]])
    g = kb.gram(spec, x, x)
    assert g.shape == (1, 1)
    assert g[0, 0] == pytest.approx(kb.eval_kernel(spec, 0.4, 0.4))


@pytest.mark.parametrize("shift", [0.3, -1.7, 12.0])
def test_shift_invariance(shift):
    for spec in specs():
        pts = random_points(spec, 6, 5)
        c = np.full(spec.dim, shift)
        for i in range(3):
            x, y = pts[2 * i], pts[2 * i + 1]
            assert kb.eval_kernel(spec, x + c, y + c) == pytest.approx(
                kb.eval_kernel(spec, x, y), abs=1e-12
            )


def test_kernels_integrate_to_one():
    # density normalization in the second argument
    for spec in [kb.GaussianKernel(np.array([[0.7]])), kb.LaplaceKernel(1.3),
                 kb.CauchyKernel(0.8)]:
        total = quad(
            lambda t: kb.eval_kernel(spec, 0.4, t), -np.inf, np.inf, limit=400
        )[0]
        assert total == pytest.approx(1.0, abs=1e-4)


def test_gaussian_rejects_non_spd():
    with pytest.raises(ValueError):
        kb.GaussianKernel(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        kb.GaussianKernel(np.array([[0.0]]))


def test_gaussian_rejects_asymmetric():
    with pytest.raises(ValueError):
        kb.GaussianKernel(np.array([[1.0, 0.5], [0.1, 1.0]]))


def test_positive_param_validation():
    with pytest.raises(ValueError):
        kb.LaplaceKernel(0.0)
    with pytest.raises(ValueError):
        kb.CauchyKernel(-1.0)


def test_dimension_mismatch():
    spec = kb.GaussianKernel(np.eye(2))
    with pytest.raises(ValueError):
        kb.gram(spec, np.zeros((3, 1)))


def test_config_round_trip():
    for spec in specs():
        cfg = kb.kernel_to_config(spec)
        back = kb.kernel_from_config(cfg)
        assert back.same_rkhs(spec)


def test_config_rejects_unknown_fields():
    with pytest.raises(kb.ConfigError):
        kb.kernel_from_config({"family": "laplace", "lambda": 1.0, "junk": 2})
    with pytest.raises(kb.ConfigError):
        kb.kernel_from_config({"family": "spline"})


def test_as_points_shapes():
    assert as_points(1.0).shape == (1, 1)
    assert as_points([1.0, 2.0], dim=2).shape == (1, 2)
    assert as_points([1.0, 2.0, 3.0], dim=1).shape == (3, 1)
    assert as_points(np.zeros((4, 2)), dim=2).shape == (4, 2)
