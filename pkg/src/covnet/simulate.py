"""Analytic covariance kernels and Gaussian random field simulation.

Five kernel families on [0,1]^d: the Brownian sheet, the integrated Brownian
sheet, rotated versions of both, and the Matern covariance.  The product
kernels factor over axes; rotation composes them with an orthogonal map of
the coordinates, which destroys separability.  Rotated coordinates can leave
[0,1]^d, so the per-axis Brownian covariances are the two-sided ones,
(|u|+|v|-|u-v|)/2 for Brownian motion and 1{uv>=0} c_ibm(|u|,|v|) for its
integral; on [0,1] these coincide with min(u,v) and the usual integrated-BM
formula, and they stay valid covariances on all of R (the raw formulas do
not, and yield indefinite matrices after rotation).

Sampling draws rows L z with L a jittered Cholesky factor of the kernel
matrix at the grid midpoints, optionally adding i.i.d. pointwise measurement
noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma, kv

from .errors import NumericError, ResourceLimitError
from .fields import FieldMatrix, Grid
from .rng import gaussian, make_rng

KERNEL_MATRIX_CAP = 20000


def _check_rotation(o: np.ndarray, d: int) -> np.ndarray:
    o = np.asarray(o, dtype=float)
    if o.shape != (d, d):
        raise ValueError(f"rotation must be {d}x{d}, got {o.shape}")
    if np.abs(o.T @ o - np.eye(d)).max() > 1e-12:
        raise ValueError("rotation matrix is not orthogonal to 1e-12")
    return o


@dataclass(frozen=True)
class BrownianSheet:
    """Product of standard Brownian motion covariances min(u_k, v_k)."""

    d: int = 2


@dataclass(frozen=True)
class RotatedBrownianSheet:
    """Brownian sheet covariance evaluated at rotated coordinates."""

    rotation: np.ndarray

    def __post_init__(self):
        o = _check_rotation(self.rotation, np.asarray(self.rotation).shape[0])
        object.__setattr__(self, "rotation", o)

    @property
    def d(self) -> int:
        return self.rotation.shape[0]


@dataclass(frozen=True)
class IntegratedBrownianSheet:
    """Product of integrated Brownian motion covariances."""

    d: int = 2


@dataclass(frozen=True)
class RotatedIntegratedBrownianSheet:
    """Integrated Brownian sheet covariance at rotated coordinates."""

    rotation: np.ndarray

    def __post_init__(self):
        o = _check_rotation(self.rotation, np.asarray(self.rotation).shape[0])
        object.__setattr__(self, "rotation", o)

    @property
    def d(self) -> int:
        return self.rotation.shape[0]


@dataclass(frozen=True)
class Matern:
    """Isotropic Matern covariance with smoothness nu and unit scale."""

    nu: float
    d: int = 2

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"matern smoothness must be positive, got {self.nu}")


KernelSpec = (
    BrownianSheet
    | RotatedBrownianSheet
    | IntegratedBrownianSheet
    | RotatedIntegratedBrownianSheet
    | Matern
)


@dataclass(frozen=True)
class NoiseSpec:
    """I.i.d. centered Gaussian measurement noise added per grid value."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"noise s.d. must be nonnegative, got {self.sigma}")


def rotation_2d_45() -> np.ndarray:
    """The 45-degree planar rotation used in the 2-D rotated examples."""
    s = 1.0 / np.sqrt(2.0)
    return np.array([[s, -s], [s, s]])


def rotation_3d_composed() -> np.ndarray:
    """Composition O_z O_y O_x of the three basic 45-degree 3-D rotations."""
    s = 1.0 / np.sqrt(2.0)
    ox = np.array([[1, 0, 0], [0, s, -s], [0, s, s]])
    oy = np.array([[s, 0, s], [0, 1, 0], [-s, 0, s]])
    oz = np.array([[s, -s, 0], [s, s, 0], [0, 0, 1]])
    return oz @ oy @ ox


def _bm_axis(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # two-sided Brownian covariance; equals min(u, v) for u, v >= 0
    return 0.5 * (np.abs(u) + np.abs(v) - np.abs(u - v))


def _ibm_axis(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # two-sided integrated Brownian covariance; equals the one-sided
    # formula (m^2/2)(M - m/3) with m = min, M = max for u, v >= 0
    m = np.minimum(np.abs(u), np.abs(v))
    big = np.maximum(np.abs(u), np.abs(v))
    return np.where(u * v >= 0, 0.5 * m * m * (big - m / 3.0), 0.0)


def _matern_radial(nu: float, r: np.ndarray) -> np.ndarray:
    x = np.sqrt(2.0 * nu) * r
    out = np.ones_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = (2.0 ** (1.0 - nu) / gamma(nu)) * xp**nu * kv(nu, xp)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"matern evaluation produced non-finite values (nu={nu})")
    return out


def kernel_pairs(spec: KernelSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Evaluate c(u_i, v_i) for paired rows of two (M, d) point arrays."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if u.shape != v.shape or u.shape[1] != spec.d:
        raise ValueError(f"point arrays must both be (M, {spec.d})")
    if isinstance(spec, (RotatedBrownianSheet, RotatedIntegratedBrownianSheet)):
        u = u @ spec.rotation.T
        v = v @ spec.rotation.T
        axis = _bm_axis if isinstance(spec, RotatedBrownianSheet) else _ibm_axis
    elif isinstance(spec, BrownianSheet):
        axis = _bm_axis
    elif isinstance(spec, IntegratedBrownianSheet):
        axis = _ibm_axis
    else:
        r = np.linalg.norm(u - v, axis=1)
        return _matern_radial(spec.nu, r)
    out = np.ones(u.shape[0])
    for k in range(spec.d):
        out *= axis(u[:, k], v[:, k])
    return out


def kernel_eval(spec: KernelSpec, u, v) -> float:
    """Kernel value c(u, v) at a single pair of points."""
    return float(kernel_pairs(spec, np.asarray(u)[None, :], np.asarray(v)[None, :])[0])


def kernel_matrix(spec: KernelSpec, grid: Grid, cap: int = KERNEL_MATRIX_CAP) -> np.ndarray:
    """Dense D x D kernel values at the grid midpoints (symmetrized)."""
    if grid.d != spec.d:
        raise ValueError(f"kernel is {spec.d}-dimensional, grid is {grid.d}-dimensional")
    n = grid.n_points
    if n > cap:
        raise ResourceLimitError(f"grid size {n} exceeds kernel matrix cap {cap}")
    pts = grid.coordinates()
    if isinstance(spec, Matern):
        r2 = np.zeros((n, n))
        for k in range(spec.d):
            delta = pts[:, k][:, None] - pts[:, k][None, :]
            r2 += delta * delta
        c = _matern_radial(spec.nu, np.sqrt(r2))
    else:
        if isinstance(spec, (RotatedBrownianSheet, RotatedIntegratedBrownianSheet)):
            pts = pts @ spec.rotation.T
        axis = (
            _bm_axis
            if isinstance(spec, (BrownianSheet, RotatedBrownianSheet))
            else _ibm_axis
        )
        c = np.ones((n, n))
        for k in range(spec.d):
            c *= axis(pts[:, k][:, None], pts[:, k][None, :])
    return (c + c.T) / 2.0


def sample_gaussian_fields(
    spec: KernelSpec,
    grid: Grid,
    n: int,
    seed: int,
    noise: NoiseSpec | None = None,
) -> FieldMatrix:
    """Draw n i.i.d. centered Gaussian fields with covariance `spec` on `grid`.

    Rows are L z with z standard normal and L L^T the kernel matrix plus an
    escalating diagonal jitter (Brownian-type matrices are numerically
    semidefinite).  Deterministic for a fixed seed; noise, when given, uses
    its own seed so the field draw is unchanged.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    c = kernel_matrix(spec, grid)
    n_points = grid.n_points
    base = 1e-12 * np.trace(c) / n_points
    chol = None
    jitter = 0.0
    for attempt in range(7):
        jitter = base * 10.0**attempt
        try:
            chol = np.linalg.cholesky(c + jitter * np.eye(n_points))
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise NumericError(
            f"cholesky failed for kernel matrix even with jitter {jitter:g}"
        )
    z = gaussian(make_rng(seed), (n, n_points))
    values = z @ chol.T
    if noise is not None and noise.sigma > 0:
        values = values + noise.sigma * gaussian(make_rng(noise.seed), (n, n_points))
    return FieldMatrix(grid, values)
