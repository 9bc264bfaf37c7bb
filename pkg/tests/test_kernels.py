import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvgen import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")


def _both(fn_name, *args):
    out = {}
    for b in ("numpy", "numba"):
        prev = _kernels.set_backend(b)
        try:
            out[b] = getattr(_kernels, fn_name)(*args)
        finally:
            _kernels.set_backend(prev)
    return out["numpy"], out["numba"]


@given(
    n=st.integers(0, 200),
    radius=st.integers(0, 2),
    seed=st.integers(0, 2**31 - 1),
    ties=st.booleans(),
)
def test_zbuffer_backends_bit_identical(n, radius, seed, ties):
    rng = np.random.default_rng(seed)
    px = rng.integers(-3, 11, n)
    py = rng.integers(-3, 9, n)
    z = rng.choice([1.0, 1.0 + 5e-10, 2.0], n) if ties else rng.uniform(0.1, 3, n)
    a, b = _both("zbuffer", px, py, z, 8, 10, _kernels.disc_offsets(radius))
    np.testing.assert_array_equal(a, b)


@given(k=st.integers(1, 5), d=st.integers(1, 40), seed=st.integers(0, 2**31 - 1), zero=st.booleans())
def test_gmm_backends_agree(k, d, seed, zero):
    rng = np.random.default_rng(seed)
    means = rng.uniform(-1, 1, (k, d))
    var = np.zeros((k, d)) if zero else rng.uniform(0.01, 1, (k, d))
    logw = np.log(rng.dirichlet(np.ones(k)))
    x = rng.standard_normal(d)
    (ma, ra, ua), (mb, rb, ub) = _both("gmm_posterior", x, 0.6, means, var, logw)
    np.testing.assert_allclose(ma, mb, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(ra, rb, rtol=1e-12, atol=1e-14)
    assert ua == ub


def test_tie_break_prefers_lowest_index_within_tolerance():
    px = np.array([2, 2, 2])
    py = np.array([1, 1, 1])
    z = np.array([1.0 + 5e-10, 1.0, 1.0 + 5e-9])
    for b in _kernels.available_backends():
        prev = _kernels.set_backend(b)
        try:
            w = _kernels.zbuffer(px, py, z, 3, 4, _kernels.disc_offsets(0))
        finally:
            _kernels.set_backend(prev)
        assert w[1 * 4 + 2] == 0
        assert np.count_nonzero(w >= 0) == 1


def test_disc_offsets():
    assert _kernels.disc_offsets(0).tolist() == [[0, 0]]
    assert len(_kernels.disc_offsets(1)) == 5
    with pytest.raises(ValueError):
        _kernels.disc_offsets(-1)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _kernels.set_backend("cuda")


def test_env_flag_selects_backend(monkeypatch):
    monkeypatch.setenv("PVGEN_BACKEND", "numpy")
    assert _kernels._initial_backend() == "numpy"
    monkeypatch.setenv("PVGEN_BACKEND", "numba")
    assert _kernels._initial_backend() == "numba"
    monkeypatch.setenv("PVGEN_BACKEND", "fortran")
    with pytest.raises(ValueError):
        _kernels._initial_backend()
