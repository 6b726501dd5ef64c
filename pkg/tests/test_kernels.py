"""The numba and numpy kernel paths must agree exactly."""
import os
import subprocess
import sys

import numpy as np
import pytest

from vesselmtl import kernels


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,stride", [(3, 1), (1, 1), (3, 2), (2, 2)])
def test_im2col_paths_agree(rng, dtype, k, stride):
    xh = rng.normal(size=(2, 9, 7, 3)).astype(dtype)
    ho, wo = (9 - k) // stride + 1, (7 - k) // stride + 1
    a = kernels.im2col_numpy(xh, k, k, stride, ho, wo)
    b = kernels.im2col_numba(xh, k, k, stride, ho, wo)
    assert a.dtype == b.dtype == dtype
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("k,stride", [(3, 1), (3, 2), (1, 1)])
def test_col2im_is_adjoint_of_im2col(rng, k, stride):
    shape = (2, 8, 6, 3)
    ho, wo = (8 - k) // stride + 1, (6 - k) // stride + 1
    x = rng.normal(size=shape)
    c = rng.normal(size=(2 * ho * wo, k * k * 3))
    for im2col, col2im in [(kernels.im2col_numpy, kernels.col2im_numpy), (kernels.im2col_numba, kernels.col2im_numba)]:
        lhs = np.sum(im2col(x, k, k, stride, ho, wo) * c)
        rhs = np.sum(x * col2im(c, shape, k, k, stride, ho, wo))
        assert lhs == pytest.approx(rhs, rel=1e-12)
    np.testing.assert_allclose(
        kernels.col2im_numpy(c, shape, k, k, stride, ho, wo),
        kernels.col2im_numba(c, shape, k, k, stride, ho, wo),
        rtol=1e-13, atol=1e-13,
    )


def test_maxpool_paths_agree_including_ties(rng):
    x = rng.integers(0, 3, size=(2, 3, 6, 8)).astype(np.float64)
    out_a, arg_a = kernels.maxpool2_forward_numpy(x)
    out_b, arg_b = kernels.maxpool2_forward_numba(x)
    np.testing.assert_array_equal(out_a, out_b)
    np.testing.assert_array_equal(arg_a, arg_b)
    g = rng.normal(size=out_a.shape)
    np.testing.assert_array_equal(kernels.maxpool2_backward_numpy(g, arg_a), kernels.maxpool2_backward_numba(g, arg_b))


def test_edt_rows_matches_direct_minimum(rng):
    f = np.where(rng.random((5, 13)) < 0.3, 0.0, np.inf)
    f[0] = np.inf
    out = kernels.edt_sq_rows(f)
    q = np.arange(13)
    for r in range(5):
        seeds = np.flatnonzero(np.isfinite(f[r]))
        if seeds.size == 0:
            assert np.isinf(out[r]).all()
        else:
            ref = ((q[:, None] - seeds[None, :]) ** 2).min(axis=1)
            np.testing.assert_array_equal(out[r], ref)


def test_env_flag_selects_numpy_path():
    code = (
        "import numpy as np\n"
        "from vesselmtl import USE_NUMBA, kernels\n"
        "from vesselmtl.distance import edt_exact\n"
        "assert not USE_NUMBA and kernels.im2col is kernels.im2col_numpy\n"
        "m = np.zeros((5, 5), bool); m[1:4, 1:4] = True\n"
        "print(edt_exact(m).values[2, 2])\n"
    )
    env = dict(os.environ, VESSELMTL_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "2.0"
