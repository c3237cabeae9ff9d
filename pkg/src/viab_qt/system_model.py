"""Coefficient models, control sets and validation probes.

Models come from a closed registry of parameterized families so that every
experiment is reproducible from a declarative config: zero, constant
(diagonal noise, optional constant drift), linear (B u drift, C x + D u
noise, optional affine offsets), radial-restoring, tangential-rotation and
clipped-polynomial. ``register_family`` is the extension hook for library
users; config files cannot carry code.

Evaluators are vectorized over a leading batch axis: states (B, n),
controls (d,) or (B, d), drift (B, n), noise (B, n, m).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .spectral_core import SpectralSpace
from .streams import as_generator


@dataclass(frozen=True)
class CoefficientModel:
    """Drift/noise evaluators with declared regularity constants.

    ``c`` is the declared Lipschitz/growth constant and ``gamma`` the
    declared smoothing-singularity exponent, kept as metadata (a finite
    truncation cannot reproduce the singular behavior structurally).
    """

    family: str
    params: dict = field(repr=False)
    c: float
    gamma: float
    n: int
    m: int
    d: int
    drift_fn: object = field(repr=False)
    noise_fn: object = field(repr=False)
    drift_state_dependent: bool
    noise_state_dependent: bool

    @property
    def state_dependent(self) -> bool:
        return self.drift_state_dependent or self.noise_state_dependent


def _as_batch(x, width, name):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != width:
            raise ConfigError(f"{name} must have {width} components")
        return x[None, :], True
    if x.ndim == 2 and x.shape[1] == width:
        return x, False
    raise ConfigError(f"{name} must be ({width},) or (B, {width})")


def eval_drift(model: CoefficientModel, x, u=None):
    """f(x, u); families without a control input ignore u."""
    xb, squeeze = _as_batch(x, model.n, "state")
    ub = _control_batch(model, u, xb.shape[0])
    out = model.drift_fn(xb, ub)
    return out[0] if squeeze else out


def eval_noise(model: CoefficientModel, x, u=None):
    """g(x, u) as an (n, m) matrix per batch entry."""
    xb, squeeze = _as_batch(x, model.n, "state")
    ub = _control_batch(model, u, xb.shape[0])
    out = model.noise_fn(xb, ub)
    return out[0] if squeeze else out


def _control_batch(model, u, batch):
    if u is None:
        return np.zeros((1, model.d))
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        return u[None, :]
    return u


# ---------------------------------------------------------------------------
# registry families
# ---------------------------------------------------------------------------

_REGISTRY = {}


def register_family(name, builder):
    """Extension hook: builder(space, params) -> CoefficientModel pieces."""
    _REGISTRY[name] = builder


def registry_families():
    return sorted(_REGISTRY)


def _diag_noise(n, m, sigma):
    g = np.zeros((n, m))
    k = min(n, m)
    g[np.arange(k), np.arange(k)] = sigma
    return g


def _build_zero(space, params):
    n, m = space.n, space.m

    def drift(x, u):
        return np.zeros((x.shape[0], n))

    def noise(x, u):
        return np.zeros((x.shape[0], n, m))

    return drift, noise, False, False, 1.0


def _build_constant_diagonal(space, params):
    n, m = space.n, space.m
    sigma = float(params.get("sigma", 1.0))
    drift_vec = np.atleast_1d(np.asarray(params.get("drift", np.zeros(n)),
                                         dtype=float))
    if drift_vec.shape != (n,):
        raise ConfigError("constant-diagonal drift must be an n-vector")
    g = _diag_noise(n, m, sigma)

    def drift(x, u):
        return np.broadcast_to(drift_vec, (x.shape[0], n)).copy()

    def noise(x, u):
        return np.broadcast_to(g, (x.shape[0], n, m)).copy()

    return drift, noise, False, False, 1.0


def _matrix_blocks(value, m, rows, cols, name):
    if value is None:
        return np.zeros((m, rows, cols))
    if isinstance(value, np.ndarray) and value.ndim == 3:
        mats = list(value)
    elif isinstance(value, (list, tuple)):
        mats = [np.atleast_2d(np.asarray(v, dtype=float)) for v in value]
    else:
        mats = [np.atleast_2d(np.asarray(value, dtype=float))]
    if len(mats) != m:
        raise ConfigError(f"{name} needs {m} blocks, got {len(mats)}")
    try:
        return np.stack([M.reshape(rows, cols) for M in mats])
    except ValueError:
        raise ConfigError(f"each {name} block must be {rows}x{cols}") from None


def _build_linear(space, params):
    n, m, d = space.n, space.m, space.d
    B = np.atleast_2d(np.asarray(params.get("B", np.zeros((n, d))),
                                 dtype=float)).reshape(n, d)
    Cmats = _matrix_blocks(params.get("C"), m, n, n, "C")
    Dmats = _matrix_blocks(params.get("D"), m, n, d, "D")
    f0 = np.atleast_1d(np.asarray(params.get("f0", np.zeros(n)),
                                  dtype=float))
    g0 = np.atleast_2d(np.asarray(params.get("g0", np.zeros((n, m))),
                                  dtype=float)).reshape(n, m)

    def drift(x, u):
        return f0 + np.broadcast_to(u @ B.T, (x.shape[0], n)).copy()

    def noise(x, u):
        # column j: g0[:, j] + C_j x + D_j u
        ub = np.broadcast_to(u, (x.shape[0], d))
        out = np.einsum("jni,bi->bnj", Cmats, x)
        out = out + np.einsum("jni,bi->bnj", Dmats, ub)
        return out + g0

    lip = max((np.linalg.norm(C, 2) for C in Cmats), default=0.0)
    c_default = float(lip) if lip > 0 else 1.0
    return drift, noise, False, bool(np.any(Cmats)), c_default


def _build_radial_restoring(space, params):
    n, m = space.n, space.m
    rate = float(params.get("rate", 1.0))
    sigma = float(params.get("sigma", 0.0))
    g = _diag_noise(n, m, sigma)

    def drift(x, u):
        return -rate * x

    def noise(x, u):
        return np.broadcast_to(g, (x.shape[0], n, m)).copy()

    return drift, noise, True, False, max(rate, 1e-9)


def _rotation_planes(n, m):
    # noise direction j acts in coordinate plane (2j, 2j+1); directions
    # beyond the available planes carry no noise
    return min(m, n // 2)


def _build_tangential_rotation(space, params):
    n, m = space.n, space.m
    rate = float(params.get("rate", 1.0))
    scale = float(params.get("scale", 1.0))
    planes = _rotation_planes(n, m)

    def drift(x, u):
        return -rate * x

    def noise(x, u):
        out = np.zeros((x.shape[0], n, m))
        for j in range(planes):
            a, b = 2 * j, 2 * j + 1
            out[:, a, j] = scale * x[:, b]
            out[:, b, j] = -scale * x[:, a]
        return out

    return drift, noise, True, True, max(rate, scale, 1e-9)


def _build_clipped_polynomial(space, params):
    n, m = space.n, space.m
    amp = float(params.get("amp", 1.0))
    radius = float(params.get("radius", 2.0))
    sigma = float(params.get("sigma", 0.0))
    g = _diag_noise(n, m, sigma)

    def drift(x, u):
        # cubic restoring force saturated at |x| = radius keeps the global
        # Lipschitz constant finite (3 amp radius^2)
        r = np.linalg.norm(x, axis=1)
        rc = np.minimum(r, radius)
        return -amp * (rc * rc)[:, None] * x

    def noise(x, u):
        return np.broadcast_to(g, (x.shape[0], n, m)).copy()

    return drift, noise, True, False, 3.0 * amp * radius * radius


register_family("zero", _build_zero)
register_family("constant-diagonal", _build_constant_diagonal)
register_family("linear", _build_linear)
register_family("radial-restoring", _build_radial_restoring)
register_family("tangential-rotation", _build_tangential_rotation)
register_family("clipped-polynomial", _build_clipped_polynomial)


def make_model(space: SpectralSpace, family: str, c=None, gamma=0.0,
               **params) -> CoefficientModel:
    """Build a registry model over the given space."""
    if family not in _REGISTRY:
        raise ConfigError(f"unknown model family '{family}'; "
                          f"registry: {', '.join(registry_families())}")
    gamma = float(gamma)
    if not (0.0 <= gamma < 0.5):
        raise ConfigError(f"gamma={gamma} outside the admissible range [0, 0.5)")
    drift, noise, dsd, nsd, c_default = _REGISTRY[family](space, params)
    declared = float(c) if c is not None else float(c_default)
    if declared <= 0:
        raise ConfigError("declared regularity constant c must be > 0")
    return CoefficientModel(family=family, params=dict(params), c=declared,
                            gamma=gamma, n=space.n, m=space.m, d=space.d,
                            drift_fn=drift, noise_fn=noise,
                            drift_state_dependent=dsd,
                            noise_state_dependent=nsd)


@dataclass(frozen=True)
class LinearModel:
    """Operator blocks of a linear control system.

    Drift B u, noise direction j given by Cmats[j] x + Dmats[j] u. The
    generator itself lives in the spectral space.
    """

    Bmat: np.ndarray
    Cmats: list
    Dmats: list

    def to_model(self, space: SpectralSpace, c=None, gamma=0.0) -> CoefficientModel:
        return make_model(space, "linear", c=c, gamma=gamma,
                          B=self.Bmat, C=self.Cmats, D=self.Dmats)


# ---------------------------------------------------------------------------
# control sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlSet:
    """Closed bounded (convex) control region with a deterministic grid."""

    shape: str
    center: np.ndarray
    radius_or_halfwidths: np.ndarray
    grid_resolution: int

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", center)
        rh = np.atleast_1d(np.asarray(self.radius_or_halfwidths, dtype=float))
        object.__setattr__(self, "radius_or_halfwidths", rh)
        if self.shape not in ("box", "ball"):
            raise ConfigError("control set shape must be 'box' or 'ball'")
        if self.grid_resolution < 1:
            raise ConfigError("grid resolution must be >= 1")
        if np.any(rh < 0):
            raise ConfigError("control set extent must be >= 0")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, u, tol=1e-12) -> bool:
        u = np.asarray(u, dtype=float)
        if self.shape == "box":
            return bool(np.all(np.abs(u - self.center)
                               <= self.radius_or_halfwidths + tol))
        return bool(np.linalg.norm(u - self.center)
                    <= float(self.radius_or_halfwidths[0]) + tol)


def singleton_control(d: int) -> ControlSet:
    """Degenerate control set for uncontrolled systems."""
    return ControlSet(shape="ball", center=np.zeros(d),
                      radius_or_halfwidths=np.zeros(1), grid_resolution=1)


def control_grid(cs: ControlSet) -> np.ndarray:
    """Deterministic grid covering the control set; always contains the center."""
    d = cs.dim
    res = cs.grid_resolution
    if cs.shape == "box":
        axes = [np.linspace(cs.center[i] - cs.radius_or_halfwidths[i],
                            cs.center[i] + cs.radius_or_halfwidths[i],
                            res) for i in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        pts = mesh.reshape(-1, d)
    else:
        r = float(cs.radius_or_halfwidths[0])
        axes = [np.linspace(cs.center[i] - r, cs.center[i] + r, res)
                for i in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        pts = mesh.reshape(-1, d)
        keep = np.linalg.norm(pts - cs.center, axis=1) <= r + 1e-12
        pts = pts[keep]
    if not any(np.array_equal(p, cs.center) for p in pts):
        pts = np.vstack([pts, cs.center])
    pts = np.unique(pts, axis=0)
    order = np.lexsort(tuple(pts[:, i] for i in range(d - 1, -1, -1)))
    return pts[order]


# ---------------------------------------------------------------------------
# regularity probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeRecord:
    drift_ratio: float
    noise_ratio: float
    declared_c: float
    passed: bool


def lipschitz_probe(model: CoefficientModel, sample_count: int,
                    domain_radius: float, seed) -> ProbeRecord:
    """Empirical check of the declared Lipschitz constant.

    Samples pairs uniformly in a ball of the given radius (control frozen
    at zero) and records the worst observed difference ratios for the
    drift and the noise coefficient (Frobenius norm).
    """
    if sample_count < 2:
        raise ConfigError("probe needs at least 2 samples")
    rng = as_generator(seed, "probe")
    n = model.n
    z = rng.standard_normal((2 * sample_count, n))
    radii = domain_radius * rng.random(2 * sample_count) ** (1.0 / n)
    pts = z / np.linalg.norm(z, axis=1)[:, None] * radii[:, None]
    x, y = pts[:sample_count], pts[sample_count:]
    gaps = np.linalg.norm(x - y, axis=1)
    ok = gaps > 1e-12
    x, y, gaps = x[ok], y[ok], gaps[ok]
    fx = eval_drift(model, x)
    fy = eval_drift(model, y)
    gx = eval_noise(model, x)
    gy = eval_noise(model, y)
    drift_ratio = float(np.max(np.linalg.norm(fx - fy, axis=1) / gaps,
                               initial=0.0))
    noise_diff = np.sqrt(np.sum((gx - gy) ** 2, axis=(1, 2)))
    noise_ratio = float(np.max(noise_diff / gaps, initial=0.0))
    worst = max(drift_ratio, noise_ratio)
    passed = worst <= model.c * (1.0 + 1e-7) + 1e-12
    return ProbeRecord(drift_ratio=drift_ratio, noise_ratio=noise_ratio,
                       declared_c=model.c, passed=passed)
