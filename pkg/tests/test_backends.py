"""Agreement between the compiled kernels and their numpy twins."""

import numpy as np
import pytest

from kbinfer import _backend

HAS_NUMBA = _backend.active_backend() == "numba"

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba backend unavailable")


@needs_numba
@pytest.mark.parametrize("seed", range(3))
def test_gauss_pair_agreement(seed):
    rng = np.random.default_rng(seed)
    za, zb = rng.normal(size=(20, 2)), rng.normal(size=(15, 2))
    from kbinfer._accel import gauss_pair

    fast = gauss_pair(za, zb, 0.37)
    ref = _backend.gauss_pair_numpy(za, zb, 0.37)
    assert np.allclose(fast, ref, atol=1e-13)


@needs_numba
def test_gauss_pair_sym_agreement():
    rng = np.random.default_rng(5)
    za = rng.normal(size=(25, 3))
    from kbinfer._accel import gauss_pair_sym

    fast = gauss_pair_sym(za, 0.11)
    ref = _backend.gauss_pair_sym_numpy(za, 0.11)
    assert np.allclose(fast, ref, atol=1e-13)
    assert np.array_equal(fast, fast.T)


@needs_numba
def test_laplace_and_cauchy_agreement():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=30), rng.normal(size=12)
    from kbinfer._accel import (
        cauchy_pair,
        cauchy_pair_sym,
        laplace_pair,
        laplace_pair_sym,
        laplace_smoothed_pair,
    )

    assert np.allclose(
        laplace_pair(a, b, 1.7), _backend.laplace_pair_numpy(a, b, 1.7), atol=1e-14
    )
    assert np.allclose(
        cauchy_pair(a, b, 0.8), _backend.cauchy_pair_numpy(a, b, 0.8), atol=1e-14
    )
    assert np.array_equal(
        laplace_pair_sym(a, 1.7), laplace_pair_sym(a, 1.7).T
    )
    assert np.array_equal(cauchy_pair_sym(a, 0.8), cauchy_pair_sym(a, 0.8).T)
    for lam, lam0, equal in ((2.0, 1.0, False), (1.3, 1.3, True)):
        assert np.allclose(
            laplace_smoothed_pair(a, b, lam, lam0, equal),
            _backend.laplace_smoothed_pair_numpy(a, b, lam, lam0, equal),
            atol=1e-14,
        )


@needs_numba
@pytest.mark.parametrize("seed", range(4))
def test_preimage_agreement(seed):
    rng = np.random.default_rng(seed)
    anchors = rng.normal(size=(12, 2))
    weights = np.abs(rng.normal(size=12))
    chol = np.linalg.cholesky(0.5 * np.eye(2))
    x0 = anchors[int(np.argmax(weights))]
    from kbinfer._accel import preimage_iterate

    x_fast, s_fast, _, ok_fast = preimage_iterate(
        anchors, weights, chol, x0.copy(), 1e-10, 300
    )
    x_ref, s_ref, _, ok_ref = _backend.preimage_iterate_numpy(
        anchors, weights, chol, x0.copy(), 1e-10, 300
    )
    assert ok_fast == ok_ref
    assert np.allclose(x_fast, x_ref, atol=1e-7)
    assert s_fast == pytest.approx(s_ref, rel=1e-9)
