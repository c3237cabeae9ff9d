import os
import subprocess
import sys

import numpy as np

from viab_qt import _kernels

_PROBE = r"""
import hashlib
import numpy as np
from viab_qt import _kernels

rng = np.random.default_rng(42)
mats = []
for _ in range(64):
    n = int(rng.integers(1, 6))
    A = rng.standard_normal((n, 3))
    mats.append(A @ A.T)      # mixed ranks, some deficient
digest = hashlib.sha256()
for C in mats:
    L, flags = _kernels.factor_psd_batch(C[None])
    R = _kernels.sqrt_psd_batch(C[None])
    digest.update(L.tobytes())
    digest.update(flags.tobytes())
    digest.update(R.tobytes())
pts = rng.standard_normal((200, 3)) * 2.0
params = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
out = _kernels.project_levelset_batch(pts, 0, params)
for arr in out:
    digest.update(np.ascontiguousarray(arr).tobytes())
print(_kernels.backend_name(), digest.hexdigest())
"""


def _run_probe(numba_flag: str) -> str:
    env = dict(os.environ, VIABQT_NUMBA=numba_flag)
    proc = subprocess.run([sys.executable, "-c", _PROBE], env=env,
                          capture_output=True, text=True, check=True)
    return proc.stdout.strip()


def test_backends_bitwise_identical():
    """The numba path and the pure-Python fallback must agree bit for bit."""
    with_numba = _run_probe("1")
    without = _run_probe("0")
    assert with_numba.split()[0] == "numba"
    assert without.split()[0] == "numpy"
    assert with_numba.split()[1] == without.split()[1]


def test_factor_psd_batch_reconstructs():
    rng = np.random.default_rng(0)
    mats = []
    for _ in range(50):
        A = rng.standard_normal((4, 2))
        mats.append(A @ A.T)
    mats = np.stack(mats)
    L, flags = _kernels.factor_psd_batch(mats)
    rebuilt = np.einsum("bij,bkj->bik", L, L)
    np.testing.assert_allclose(rebuilt, mats, atol=1e-10)
    # rank-2 matrices in 4-D cannot pass plain Cholesky; the jittered
    # retry (or the eigendecomposition) must kick in
    assert np.all(flags >= 1)


def test_factor_psd_batch_clamps_indefinite():
    C = np.diag([1.0, -0.5])
    L, flags = _kernels.factor_psd_batch(C[None])
    assert flags[0] == 2
    np.testing.assert_allclose(L[0] @ L[0].T, np.diag([1.0, 0.0]),
                               atol=1e-12)


def test_factor_psd_batch_positive_definite_uses_cholesky():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 3, 3))
    mats = np.einsum("bij,bkj->bik", A, A) + 3.0 * np.eye(3)
    L, flags = _kernels.factor_psd_batch(mats)
    assert np.all(flags == 0)
    np.testing.assert_allclose(np.einsum("bij,bkj->bik", L, L), mats,
                               rtol=1e-12, atol=1e-12)
    # lower triangular by construction
    assert np.allclose(L[0][np.triu_indices(3, 1)], 0.0)


def test_sqrt_psd_is_symmetric_and_continuous():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((3, 2))
    C = A @ A.T
    R = _kernels.sqrt_psd_batch(C[None])[0]
    np.testing.assert_allclose(R, R.T, atol=1e-14)
    np.testing.assert_allclose(R @ R, C, atol=1e-12)
    # nearby matrices give nearby roots (no sign flips)
    C2 = C + 1e-6 * np.eye(3)
    R2 = _kernels.sqrt_psd_batch(C2[None])[0]
    assert np.linalg.norm(R2 - R) < 1e-2


def test_zero_matrix_factors_to_zero():
    L, flags = _kernels.factor_psd_batch(np.zeros((1, 3, 3)))
    np.testing.assert_array_equal(L[0], np.zeros((3, 3)))
    assert flags[0] == 0
    np.testing.assert_array_equal(_kernels.sqrt_psd_batch(np.zeros((1, 2, 2)))[0],
                                  np.zeros((2, 2)))


def test_levelset_projection_matches_ball():
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((100, 3)) * 2.0
    params = np.array([1.0, 1.0, 0.0, 0.0, 0.0])  # scale, r, center
    proj, dist, conv, iters = _kernels.project_levelset_batch(
        pts, _kernels.LEVELSET_SPHERE, params)
    assert np.all(conv == 1)
    norms = np.linalg.norm(pts, axis=1)
    outside = norms > 1.0
    expected = pts.copy()
    expected[outside] /= norms[outside][:, None]
    np.testing.assert_allclose(proj, expected, atol=1e-7)
    np.testing.assert_allclose(dist, np.maximum(norms - 1.0, 0.0), atol=1e-7)


def test_levelset_projection_ellipsoid_kkt():
    # the projection of an exterior point must be a KKT point: the residual
    # y - x + lam * grad(y) vanishes for the recovered multiplier
    coeffs = np.array([2.0, 0.5])
    params = np.concatenate([coeffs, np.zeros(2)])
    x = np.array([[2.0, 1.5]])
    proj, dist, conv, _ = _kernels.project_levelset_batch(
        x, _kernels.LEVELSET_ELLIPSOID, params)
    assert conv[0] == 1
    y = proj[0]
    phi = coeffs @ (y * y) - 1.0
    assert abs(phi) <= 1e-9
    grad = 2.0 * coeffs * y
    lam = (x[0] - y) @ grad / (grad @ grad)
    np.testing.assert_allclose(y - x[0] + lam * grad, 0.0, atol=1e-7)


def test_gd_fallback_still_reaches_the_set():
    # starve Newton of iterations to force the penalized-descent fallback;
    # the result must still satisfy the membership tolerance even though
    # the KKT flag may stay down
    params = np.array([1.0, 1.0, 0.0, 0.0])
    pts = np.array([[2.0, 0.5], [-1.5, 1.5]])
    proj, dist, conv, _ = _kernels.project_levelset_batch(
        pts, _kernels.LEVELSET_SPHERE, params, newton_iters=1,
        gd_steps=2000)
    norms = np.linalg.norm(proj, axis=1)
    assert np.all(norms <= 1.0 + 1e-8)
    assert np.all(dist >= np.linalg.norm(pts, axis=1) - 1.0 - 1e-6)


def test_bisect_rays_land_on_level():
    params = np.array([1.0, 1.0, 0.0, 0.0])
    dirs = np.array([[1.0, 0.0], [0.6, 0.8], [-1.0, 0.0]])
    pts, ok = _kernels.bisect_levelset_rays(np.zeros(2), dirs,
                                            _kernels.LEVELSET_SPHERE, params)
    assert np.all(ok == 1)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-9)
