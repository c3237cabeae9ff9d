"""Hot numerical kernels: batched PSD factorization and level-set projection.

Kernels are compiled with numba when available. Setting ``VIABQT_NUMBA=0``
selects the pure-Python fallback; both paths execute the same scalar
arithmetic in the same order, so results are bitwise identical.
``benchmarks/bench_kernels.py`` times the two backends against each other.

Level sets are encoded as (code, params) pairs so they can cross into
nopython kernels:

  code 0: quadratic sphere  phi(x) = scale * (|x - c|^2 - r^2),
          params = [scale, r, c_1..c_n]  (scale < 0 flips to the
          complement-of-ball set, which is closed but nonconvex)
  code 1: ellipsoid         phi(x) = sum_i a_i (x_i - c_i)^2 - 1,
          params = [a_1..a_n, c_1..c_n]

Both registry entries have constant diagonal Hessians, which the Newton
solver exploits.
"""

import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("VIABQT_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


USING_NUMBA = False
if _numba_requested():
    try:
        import numba

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"


def _maybe_jit(fn):
    if USING_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# symmetric eigendecomposition (cyclic Jacobi), small n
# ---------------------------------------------------------------------------


def _jacobi_eigh(A, V):
    # In-place Jacobi sweeps on A (symmetric); V accumulates rotations.
    # Deterministic sweep order (p < q), fixed tolerance, bounded sweeps.
    n = A.shape[0]
    for i in range(n):
        for j in range(n):
            V[i, j] = 1.0 if i == j else 0.0
    scale = 0.0
    for i in range(n):
        for j in range(n):
            a = abs(A[i, j])
            if a > scale:
                scale = a
    if scale == 0.0:
        return
    tol = 1e-14 * scale
    for _sweep in range(64):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) > off:
                    off = abs(A[p, q])
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= tol:
                    continue
                theta = 0.5 * (A[q, q] - A[p, p]) / apq
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq


_jacobi_eigh = _maybe_jit(_jacobi_eigh)


def _cholesky_inplace(C, L):
    # Returns True on success. Fails on a pivot below the PSD floor, which
    # covers indefinite and (numerically) rank-deficient inputs.
    n = C.shape[0]
    scale = 0.0
    for i in range(n):
        if C[i, i] > scale:
            scale = C[i, i]
    floor = 1e-12 * scale
    for i in range(n):
        for j in range(n):
            L[i, j] = 0.0
    for j in range(n):
        d = C[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if d <= floor:
            return False
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            v = C[i, j]
            for k in range(j):
                v -= L[i, k] * L[j, k]
            L[i, j] = v / L[j, j]
    return True


_cholesky_inplace = _maybe_jit(_cholesky_inplace)


def _eigh_factor(C, L, work, V):
    # L = V sqrt(clamp(eigenvalues, 0)); valid factor for any symmetric
    # matrix that is PSD up to the clamped (negative) tail.
    n = C.shape[0]
    for i in range(n):
        for j in range(n):
            work[i, j] = C[i, j]
    _jacobi_eigh(work, V)
    for j in range(n):
        lam = work[j, j]
        if lam < 0.0:
            lam = 0.0
        root = np.sqrt(lam)
        for i in range(n):
            L[i, j] = V[i, j] * root


_eigh_factor = _maybe_jit(_eigh_factor)


def _factor_psd_batch_core(mats, out, flags, rel_jitter):
    B, n, _ = mats.shape
    Cw = np.zeros((n, n))
    work = np.zeros((n, n))
    V = np.zeros((n, n))
    for b in range(B):
        C = mats[b]
        L = out[b]
        tr = 0.0
        allzero = True
        for i in range(n):
            tr += C[i, i]
            for j in range(n):
                if C[i, j] != 0.0:
                    allzero = False
        if allzero:
            continue
        if _cholesky_inplace(C, L):
            continue
        jitter = rel_jitter * tr
        for i in range(n):
            for j in range(n):
                Cw[i, j] = C[i, j]
            Cw[i, i] += jitter
        if _cholesky_inplace(Cw, L):
            flags[b] = 1
            continue
        _eigh_factor(C, L, work, V)
        flags[b] = 2


_factor_psd_batch_core = _maybe_jit(_factor_psd_batch_core)


def factor_psd_batch(mats, rel_jitter=1e-12):
    """Factor a batch of symmetric PSD matrices: out[b] @ out[b].T = mats[b].

    Tries Cholesky, retries once with relative diagonal jitter, then falls
    back to a Jacobi eigendecomposition with negative eigenvalues clamped
    to zero. Returns (factors, per-matrix fallback flags: 0 plain Cholesky,
    1 jittered Cholesky, 2 eigendecomposition).
    """
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    B, n, _ = mats.shape
    out = np.zeros((B, n, n))
    flags = np.zeros(B, dtype=np.uint8)
    _factor_psd_batch_core(mats, out, flags, rel_jitter)
    return out, flags


def _sqrt_psd_batch_core(mats, out):
    B, n, _ = mats.shape
    work = np.zeros((n, n))
    V = np.zeros((n, n))
    for b in range(B):
        C = mats[b]
        allzero = True
        for i in range(n):
            for j in range(n):
                work[i, j] = C[i, j]
                if C[i, j] != 0.0:
                    allzero = False
        if allzero:
            continue
        _jacobi_eigh(work, V)
        # out = V sqrt(clamp(lam, 0)) V^T; the sign ambiguity of the
        # eigenvectors cancels, so the root is continuous in C
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(n):
                    lam = work[k, k]
                    if lam > 0.0:
                        s += V[i, k] * np.sqrt(lam) * V[j, k]
                out[b, i, j] = s


_sqrt_psd_batch_core = _maybe_jit(_sqrt_psd_batch_core)


def sqrt_psd_batch(mats):
    """Symmetric PSD square roots: out[b] @ out[b] = mats[b].

    Unlike a Cholesky or eigenvector factor, the symmetric root is a
    continuous function of the matrix, which is what keeps noise coupled
    across nearby states when two processes share the same normals.
    """
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    B, n, _ = mats.shape
    out = np.zeros((B, n, n))
    _sqrt_psd_batch_core(mats, out)
    return out


# ---------------------------------------------------------------------------
# level-set evaluation
# ---------------------------------------------------------------------------

LEVELSET_SPHERE = 0
LEVELSET_ELLIPSOID = 1


def _phi_value(code, params, y):
    n = y.shape[0]
    if code == 0:
        scale = params[0]
        r = params[1]
        s = 0.0
        for i in range(n):
            d = y[i] - params[2 + i]
            s += d * d
        return scale * (s - r * r)
    s = 0.0
    for i in range(n):
        d = y[i] - params[n + i]
        s += params[i] * d * d
    return s - 1.0


_phi_value = _maybe_jit(_phi_value)


def _phi_grad(code, params, y, out):
    n = y.shape[0]
    if code == 0:
        scale = params[0]
        for i in range(n):
            out[i] = 2.0 * scale * (y[i] - params[2 + i])
    else:
        for i in range(n):
            out[i] = 2.0 * params[i] * (y[i] - params[n + i])


_phi_grad = _maybe_jit(_phi_grad)


def _phi_hess_diag(code, params, n, out):
    # Both registry families have constant diagonal Hessians.
    if code == 0:
        scale = params[0]
        for i in range(n):
            out[i] = 2.0 * scale
    else:
        for i in range(n):
            out[i] = 2.0 * params[i]


_phi_hess_diag = _maybe_jit(_phi_hess_diag)


def _merit(code, params, x, y, lam, grad):
    n = x.shape[0]
    phi = _phi_value(code, params, y)
    _phi_grad(code, params, y, grad)
    m = phi * phi
    for i in range(n):
        r = y[i] - x[i] + lam * grad[i]
        m += r * r
    return m


_merit = _maybe_jit(_merit)


def _project_one(code, params, x, y, yt, grad, hdiag, newton_iters,
                 gd_steps, kkt_tol, phi_tol):
    # KKT system for min |y-x|^2 s.t. phi(y) = 0 (entered when phi(x) > 0):
    # damped Newton on (y - x + lam*grad(y), phi(y)) with backtracking on
    # the squared KKT residual, then a penalized gradient-descent fallback.
    # Returns (converged, iterations).
    n = x.shape[0]
    for i in range(n):
        y[i] = x[i]
    lam = 0.0
    xnorm = 0.0
    for i in range(n):
        xnorm += x[i] * x[i]
    xnorm = np.sqrt(xnorm)
    tol1 = kkt_tol * (1.0 if xnorm < 1.0 else xnorm)
    _phi_hess_diag(code, params, n, hdiag)
    it = 0
    while it < newton_iters:
        it += 1
        phi = _phi_value(code, params, y)
        _phi_grad(code, params, y, grad)
        r1norm2 = 0.0
        for i in range(n):
            r = y[i] - x[i] + lam * grad[i]
            r1norm2 += r * r
        if np.sqrt(r1norm2) <= tol1 and abs(phi) <= phi_tol:
            return True, it
        # Newton step for [[D, g], [g^T, 0]], D = I + lam * diag(H).
        gDg = 0.0
        gDr = 0.0
        bad = False
        for i in range(n):
            d = 1.0 + lam * hdiag[i]
            if abs(d) < 1e-14:
                bad = True
                break
            gi = grad[i]
            ri = y[i] - x[i] + lam * gi
            gDg += gi * gi / d
            gDr += gi * ri / d
        if bad or abs(gDg) < 1e-300:
            break
        dlam = (phi - gDr) / gDg
        merit0 = r1norm2 + phi * phi
        step = 1.0
        accepted = False
        for _bt in range(10):
            lam_t = lam + step * dlam
            for i in range(n):
                d = 1.0 + lam * hdiag[i]
                ri = y[i] - x[i] + lam * grad[i]
                yt[i] = y[i] - step * (ri + dlam * grad[i]) / d
            mt = _merit(code, params, x, yt, lam_t, grad)
            # _merit overwrote grad at the trial point; refresh at y below
            if mt < merit0:
                for i in range(n):
                    y[i] = yt[i]
                lam = lam_t
                accepted = True
                break
            step *= 0.5
            _phi_grad(code, params, y, grad)
        if not accepted:
            break
    # Penalized gradient descent on 0.5|y-x|^2 + rho * max(phi, 0)^2,
    # followed by a bisection pull onto the zero level along -grad.
    rho = 1e4
    lr = 1e-2
    for _s in range(gd_steps):
        phi = _phi_value(code, params, y)
        _phi_grad(code, params, y, grad)
        viol = phi if phi > 0.0 else 0.0
        gnorm2 = 0.0
        for i in range(n):
            g = (y[i] - x[i]) + 2.0 * rho * viol * grad[i]
            gnorm2 += g * g
            yt[i] = g
        if gnorm2 < 1e-30:
            break
        denom = 1.0 + np.sqrt(gnorm2)
        for i in range(n):
            y[i] -= lr * yt[i] / denom
    phi = _phi_value(code, params, y)
    if phi > phi_tol:
        # pull back to the boundary along -grad
        _phi_grad(code, params, y, grad)
        lo = 0.0
        hi = 1.0
        gn = 0.0
        for i in range(n):
            gn += grad[i] * grad[i]
        gn = np.sqrt(gn)
        if gn > 0.0:
            for _d in range(60):
                ok = False
                for i in range(n):
                    yt[i] = y[i] - hi * grad[i] / gn
                if _phi_value(code, params, yt) <= 0.0:
                    ok = True
                if ok:
                    break
                hi *= 2.0
            for _b in range(200):
                mid = 0.5 * (lo + hi)
                for i in range(n):
                    yt[i] = y[i] - mid * grad[i] / gn
                pm = _phi_value(code, params, yt)
                if abs(pm) <= phi_tol:
                    lo = mid
                    break
                if pm > 0.0:
                    lo = mid
                else:
                    hi = mid
            for i in range(n):
                y[i] = y[i] - lo * grad[i] / gn
    phi = _phi_value(code, params, y)
    _phi_grad(code, params, y, grad)
    # recompute multiplier from the first-order condition for the flag
    num = 0.0
    den = 0.0
    for i in range(n):
        num += (x[i] - y[i]) * grad[i]
        den += grad[i] * grad[i]
    lam = num / den if den > 0.0 else 0.0
    r1norm2 = 0.0
    for i in range(n):
        r = y[i] - x[i] + lam * grad[i]
        r1norm2 += r * r
    converged = np.sqrt(r1norm2) <= 10.0 * tol1 and abs(phi) <= phi_tol
    return converged, newton_iters


_project_one = _maybe_jit(_project_one)


def _project_levelset_core(pts, code, params, out_pts, out_dist, out_conv,
                           out_iters, newton_iters, gd_steps, kkt_tol,
                           phi_tol):
    B, n = pts.shape
    y = np.zeros(n)
    yt = np.zeros(n)
    grad = np.zeros(n)
    hdiag = np.zeros(n)
    for b in range(B):
        x = pts[b]
        if _phi_value(code, params, x) <= 0.0:
            for i in range(n):
                out_pts[b, i] = x[i]
            out_dist[b] = 0.0
            out_conv[b] = 1
            out_iters[b] = 0
            continue
        ok, iters = _project_one(code, params, x, y, yt, grad, hdiag,
                                 newton_iters, gd_steps, kkt_tol, phi_tol)
        d2 = 0.0
        for i in range(n):
            out_pts[b, i] = y[i]
            d2 += (y[i] - x[i]) * (y[i] - x[i])
        out_dist[b] = np.sqrt(d2)
        out_conv[b] = 1 if ok else 0
        out_iters[b] = iters


_project_levelset_core = _maybe_jit(_project_levelset_core)


def project_levelset_batch(pts, code, params, newton_iters=100,
                           gd_steps=1000, kkt_tol=1e-8, phi_tol=1e-10):
    """Project a batch of points onto {phi <= 0} for an encoded level set.

    Returns (points, distances, converged flags, iteration counts).
    """
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    params = np.ascontiguousarray(params, dtype=np.float64)
    B, n = pts.shape
    out_pts = np.zeros((B, n))
    out_dist = np.zeros(B)
    out_conv = np.zeros(B, dtype=np.uint8)
    out_iters = np.zeros(B, dtype=np.int64)
    _project_levelset_core(pts, code, params, out_pts, out_dist, out_conv,
                           out_iters, newton_iters, gd_steps, kkt_tol,
                           phi_tol)
    return out_pts, out_dist, out_conv, out_iters


def _bisect_rays_core(anchor, dirs, code, params, out_pts, out_ok, phi_tol):
    B, n = dirs.shape
    yt = np.zeros(n)
    for b in range(B):
        t_hi = 1.0
        bracketed = False
        for _d in range(80):
            for i in range(n):
                yt[i] = anchor[i] + t_hi * dirs[b, i]
            if _phi_value(code, params, yt) > 0.0:
                bracketed = True
                break
            t_hi *= 2.0
        if not bracketed:
            out_ok[b] = 0
            continue
        t_lo = 0.0
        t_mid = t_hi
        for _b in range(200):
            t_mid = 0.5 * (t_lo + t_hi)
            for i in range(n):
                yt[i] = anchor[i] + t_mid * dirs[b, i]
            pm = _phi_value(code, params, yt)
            if abs(pm) <= phi_tol:
                break
            if pm > 0.0:
                t_hi = t_mid
            else:
                t_lo = t_mid
        for i in range(n):
            out_pts[b, i] = anchor[i] + t_mid * dirs[b, i]
        ok = abs(_phi_value(code, params, out_pts[b])) <= phi_tol
        out_ok[b] = 1 if ok else 0


_bisect_rays_core = _maybe_jit(_bisect_rays_core)


def bisect_levelset_rays(anchor, dirs, code, params, phi_tol=1e-10):
    """Walk rays from an interior anchor to the zero level of phi.

    Returns (boundary points, per-ray success flags). A ray fails when no
    sign change is bracketed (phi stays negative along it).
    """
    anchor = np.ascontiguousarray(anchor, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    params = np.ascontiguousarray(params, dtype=np.float64)
    B, n = dirs.shape
    out_pts = np.zeros((B, n))
    out_ok = np.zeros(B, dtype=np.uint8)
    _bisect_rays_core(anchor, dirs, code, params, out_pts, out_ok, phi_tol)
    return out_pts, out_ok
