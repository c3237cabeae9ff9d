"""Closed constraint sets with distance, projection and boundary sampling.

Three variants: balls and half-spaces project in closed form; smooth
level sets {phi <= 0} from a small registry (quadratic sphere, ellipsoid)
project through a damped Newton KKT solver with a penalized descent
fallback. Tolerances are centralized here: membership 1e-10, projection
1e-8.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, ProjectionError

MEMBERSHIP_TOL = 1e-10
PROJECTION_TOL = 1e-8


@dataclass(frozen=True)
class ProjectionResult:
    point: np.ndarray
    distance: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball of given radius around center."""

    radius: float
    center: np.ndarray

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", center)
        if self.radius < 0:
            raise ConfigError("ball radius must be >= 0")

    @property
    def convex(self) -> bool:
        return True

    def project_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rel = pts - self.center
        norms = np.linalg.norm(rel, axis=1)
        outside = norms > self.radius
        scale = np.ones_like(norms)
        scale[outside] = self.radius / norms[outside]
        proj = self.center + rel * scale[:, None]
        dist = np.where(outside, norms - self.radius, 0.0)
        ok = np.ones(len(pts), dtype=bool)
        iters = np.zeros(len(pts), dtype=np.int64)
        return proj, dist, ok, iters

    def distance_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        norms = np.linalg.norm(pts - self.center, axis=1)
        return np.maximum(norms - self.radius, 0.0)

    def boundary_sample(self, count, rng):
        z = rng.standard_normal((count, self.center.shape[0]))
        z /= np.linalg.norm(z, axis=1)[:, None]
        return self.center + self.radius * z

    # smooth representation phi = 0.5 (|x-c|^2 - r^2)
    def phi(self, x):
        rel = np.asarray(x, float) - self.center
        return 0.5 * (rel @ rel - self.radius**2)

    def phi_grad(self, x):
        return np.asarray(x, float) - self.center

    def phi_hess(self, x):
        return np.eye(self.center.shape[0])


@dataclass(frozen=True)
class HalfSpace:
    """K = {x : <normal, x> <= offset}."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.atleast_1d(np.asarray(self.normal, dtype=float))
        object.__setattr__(self, "normal", normal)
        if not np.any(normal):
            raise ConfigError("half-space normal must be nonzero")

    @property
    def convex(self) -> bool:
        return True

    def project_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = self.normal
        aa = a @ a
        excess = np.maximum(pts @ a - self.offset, 0.0)
        proj = pts - (excess / aa)[:, None] * a
        dist = excess / np.sqrt(aa)
        ok = np.ones(len(pts), dtype=bool)
        iters = np.zeros(len(pts), dtype=np.int64)
        return proj, dist, ok, iters

    def distance_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = self.normal
        return np.maximum(pts @ a - self.offset, 0.0) / np.linalg.norm(a)

    def boundary_sample(self, count, rng):
        z = rng.standard_normal((count, self.normal.shape[0]))
        a = self.normal
        aa = a @ a
        return z - ((z @ a - self.offset) / aa)[:, None] * a

    def phi(self, x):
        return float(np.asarray(x, float) @ self.normal - self.offset)

    def phi_grad(self, x):
        return self.normal.copy()

    def phi_hess(self, x):
        n = self.normal.shape[0]
        return np.zeros((n, n))


@dataclass(frozen=True)
class LevelSet:
    """K = {x : phi(x) <= 0} for a registry function phi.

    ``family`` is "sphere" (phi = scale (|x-c|^2 - r^2), nonconvex when
    scale < 0) or "ellipsoid" (phi = sum a_i (x_i-c_i)^2 - 1). ``anchor``
    is an interior point used by the ray sampler; it defaults to the
    center and is validated at construction.
    """

    family: str
    params: np.ndarray = field(repr=False)
    anchor: np.ndarray = field(repr=False)
    code: int = 0

    @property
    def convex(self) -> bool:
        if self.family == "sphere":
            return self.params[0] > 0
        return True

    def project_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        proj, dist, conv, iters = _kernels.project_levelset_batch(
            pts, self.code, self.params,
            kkt_tol=PROJECTION_TOL, phi_tol=MEMBERSHIP_TOL,
        )
        return proj, dist, conv.astype(bool), iters

    def distance_batch(self, pts):
        return self.project_batch(pts)[1]

    def boundary_sample(self, count, rng):
        n = self.anchor.shape[0]
        dirs = rng.standard_normal((count, n))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        pts, ok = _kernels.bisect_levelset_rays(
            self.anchor, dirs, self.code, self.params, phi_tol=MEMBERSHIP_TOL
        )
        if not np.all(ok):
            bad = int(np.argmin(ok))
            raise ProjectionError(
                f"boundary ray {bad} from anchor {self.anchor.tolist()} "
                f"along {dirs[bad].tolist()} never crossed the zero level"
            )
        return pts

    def phi(self, x):
        return float(_kernels._phi_value(self.code, self.params,
                                         np.asarray(x, dtype=float)))

    def phi_grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        _kernels._phi_grad(self.code, self.params, x, out)
        return out

    def phi_hess(self, x):
        x = np.asarray(x, dtype=float)
        diag = np.zeros_like(x)
        _kernels._phi_hess_diag(self.code, self.params, x.shape[0], diag)
        return np.diag(diag)


def make_levelset(family: str, n: int, anchor=None, **params) -> LevelSet:
    if family == "sphere":
        scale = float(params.get("scale", 1.0))
        radius = float(params.get("radius", 1.0))
        center = np.atleast_1d(np.asarray(params.get("center", np.zeros(n)),
                                          dtype=float))
        if scale == 0.0:
            raise ConfigError("sphere level set needs scale != 0")
        packed = np.concatenate(([scale, radius], center))
        code = _kernels.LEVELSET_SPHERE
        default_anchor = center if scale > 0 else center + np.full(n, 2.0 * radius)
    elif family == "ellipsoid":
        coeffs = np.atleast_1d(np.asarray(params["coeffs"], dtype=float))
        center = np.atleast_1d(np.asarray(params.get("center", np.zeros(n)),
                                          dtype=float))
        if coeffs.shape != (n,) or np.any(coeffs <= 0):
            raise ConfigError("ellipsoid coeffs must be n positive reals")
        packed = np.concatenate((coeffs, center))
        code = _kernels.LEVELSET_ELLIPSOID
        default_anchor = center
    else:
        raise ConfigError(f"unknown level-set family '{family}'")
    anchor = default_anchor if anchor is None \
        else np.atleast_1d(np.asarray(anchor, dtype=float))
    ls = LevelSet(family=family, params=packed, anchor=anchor, code=code)
    if ls.phi(anchor) >= 0:
        raise ConfigError("level-set anchor must satisfy phi(anchor) < 0")
    return ls


def project(K, x) -> ProjectionResult:
    """Euclidean projection onto K with convergence diagnostics."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("projection input must be finite")
    pts, dist, ok, iters = K.project_batch(x[None, :])
    return ProjectionResult(point=pts[0], distance=float(dist[0]),
                            converged=bool(ok[0]), iterations=int(iters[0]))


def distance(K, x) -> float:
    """d_K(x), the Euclidean distance to the set."""
    return project(K, x).distance


def boundary_sample(K, count: int, seed) -> np.ndarray:
    """Deterministic-per-seed sample of points on the boundary of K."""
    from .streams import as_generator

    if count < 1:
        raise ValueError("boundary sample count must be >= 1")
    rng = as_generator(seed, "boundary")
    return K.boundary_sample(count, rng)


def make_constraint(variant: str, n: int, **params):
    """Constraint factory used by the config layer."""
    variant = variant.lower()
    if variant == "ball":
        return Ball(radius=float(params.get("radius", 1.0)),
                    center=np.asarray(params.get("center", np.zeros(n)), float))
    if variant in ("halfspace", "half-space"):
        return HalfSpace(normal=np.asarray(params["normal"], float),
                         offset=float(params.get("offset", 0.0)))
    if variant in ("levelset", "level-set"):
        ls_params = {k: v for k, v in params.items()
                     if k not in ("family", "anchor")}
        return make_levelset(params.get("family", "sphere"), n,
                             anchor=params.get("anchor"), **ls_params)
    raise ConfigError(f"unknown constraint variant '{variant}'")
