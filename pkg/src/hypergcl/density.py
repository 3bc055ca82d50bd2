"""Analytic ambient density of a tangent-plane Gaussian pushed through exp0.

For z = exp0(y) with y ~ N(mu, Sigma), the ambient density is

    p(z) = N(log0(z); mu, Sigma) * 0.5 * lam(z) * g(z)^(d-1)

where lam(z) = 2 / (1 - c ||z||^2) and g(z) = artanh(sqrt(c) ||z||) /
(sqrt(c) ||z||); the factor 0.5 * lam * g^(d-1) is the Jacobian determinant
of log0 (a radial map), so the density integrates to one over the open
ball.  Evaluation at or outside the boundary returns exactly zero.

These evaluators are plain vectorized numpy (no tape): they feed quadrature
grids of millions of points.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import Curvature
from .linalg import cholesky, solve_lower

__all__ = [
    "AmbientDensitySpec",
    "ambient_density",
    "ambient_density_grid",
    "sample_ambient",
    "integrate_density",
    "density_profile",
    "radial_cdf",
    "write_profile_csv",
]

# below this value of x = sqrt(c)*||z||, artanh(x)/x is evaluated by series
_G_SERIES_CUTOFF = 1e-4


@dataclass(frozen=True, eq=False)
class AmbientDensitySpec:
    """Tangent Gaussian parameters plus the ball curvature."""

    mu: np.ndarray
    sigma: np.ndarray
    curvature: Curvature

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        if mu.ndim != 1 or sigma.shape != (mu.shape[0], mu.shape[0]):
            raise ValueError(f"inconsistent spec shapes: mu {mu.shape}, sigma {sigma.shape}")
        cholesky(sigma)  # raises NotSPDError unless SPD
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def isotropic_spec(sigma: float, c: float, d: int) -> AmbientDensitySpec:
    """Convenience constructor for N(0, sigma^2 I) on a ball of curvature c."""
    return AmbientDensitySpec(np.zeros(d), float(sigma) ** 2 * np.eye(d), Curvature(float(c)))


def _g_factor(x: np.ndarray) -> np.ndarray:
    """artanh(x)/x with the removable singularity at 0 handled by series."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < _G_SERIES_CUTOFF
    xs = x[small]
    out[small] = 1.0 + xs * xs / 3.0 + xs ** 4 / 5.0
    xb = x[~small]
    out[~small] = np.arctanh(xb) / xb
    return out


def _mvn_logpdf(y: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    d = mu.shape[0]
    L = cholesky(sigma)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    w = solve_lower(L, (y - mu).T)
    quad = np.sum(w * w, axis=0)
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + quad)


def ambient_density_grid(z: np.ndarray, spec: AmbientDensitySpec) -> np.ndarray:
    """Density at each row of z; exactly zero at or outside the boundary."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != spec.dim:
        raise ValueError(f"points have dim {z.shape[1]}, spec has dim {spec.dim}")
    c = spec.curvature.c
    r2 = c * np.sum(z * z, axis=1)
    out = np.zeros(z.shape[0])
    inside = r2 < 1.0
    if not np.any(inside):
        return out
    zi = z[inside]
    x = np.sqrt(r2[inside])  # sqrt(c) * ||z||
    g = _g_factor(x)
    y = zi * g[:, None]  # log0(z)
    lam = 2.0 / (1.0 - r2[inside])
    logpdf = _mvn_logpdf(y, spec.mu, spec.sigma)
    out[inside] = np.exp(logpdf) * 0.5 * lam * g ** (spec.dim - 1)
    return out


def ambient_density(z, spec: AmbientDensitySpec) -> float:
    """Density at a single point (PoincarePoint or coordinate vector)."""
    coords = getattr(z, "coords", z)
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 1:
        raise ValueError("ambient_density expects a single point")
    if spec.curvature.c * float(coords @ coords) >= 1.0:
        return 0.0
    return float(ambient_density_grid(coords[None, :], spec)[0])


def sample_ambient(n: int, spec: AmbientDensitySpec, seed: int) -> np.ndarray:
    """exp0 of n Gaussian tangent draws; deterministic for a given seed.

    Returns an (n, d) array whose rows all lie strictly inside the ball.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, spec.dim))
    y = spec.mu + u @ cholesky(spec.sigma).T
    sc = np.sqrt(spec.curvature.c)
    r = np.sqrt(np.sum(y * y, axis=1))
    t = np.minimum(np.tanh(sc * r), np.nextafter(1.0, 0.0))
    factor = np.ones_like(r)
    nz = r > 0.0
    factor[nz] = t[nz] / (sc * r[nz])
    return y * factor[:, None]


def integrate_density(spec: AmbientDensitySpec, resolution: int = 2048) -> float:
    """Midpoint-rule integral of the density over the ball (d = 1 or 2).

    1-D uses a uniform grid on (-R, R); 2-D uses a polar grid with the
    radial Jacobian.  Grid midpoints never touch the boundary, where the
    density vanishes anyway.
    """
    if spec.dim not in (1, 2):
        raise ValueError(f"quadrature supports d in {{1, 2}}, got d={spec.dim}")
    if resolution < 256:
        raise ValueError("resolution must be at least 256")
    radius = spec.curvature.radius
    if spec.dim == 1:
        h = 2.0 * radius / resolution
        zs = -radius + h * (np.arange(resolution) + 0.5)
        vals = ambient_density_grid(zs[:, None], spec)
        return float(np.sum(vals) * h)
    hr = radius / resolution
    ht = 2.0 * np.pi / resolution
    rs = hr * (np.arange(resolution) + 0.5)
    total = 0.0
    chunk = max(1, (1 << 22) // resolution)
    for start in range(0, resolution, chunk):
        thetas = ht * (np.arange(start, min(start + chunk, resolution)) + 0.5)
        rr, tt = np.meshgrid(rs, thetas, indexing="ij")
        pts = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)
        vals = ambient_density_grid(pts, spec).reshape(rr.shape)
        total += float(np.sum(vals * rr) * hr * ht)
    return total


def density_profile(spec: AmbientDensitySpec, n_radii: int, eps: float = 1e-5) -> np.ndarray:
    """(radius, density) pairs on a uniform radial grid in [0, (1-eps)*R].

    Only isotropic covariances are accepted; the density is then a function
    of the radius alone.
    """
    sigma = spec.sigma
    iso = sigma[0, 0] * np.eye(spec.dim)
    if not np.allclose(sigma, iso, rtol=0.0, atol=1e-12 * max(sigma[0, 0], 1.0)):
        raise ValueError("density_profile requires an isotropic covariance sigma^2 * I")
    if np.any(spec.mu != 0.0):
        raise ValueError("density_profile requires a zero mean")
    if n_radii < 2:
        raise ValueError("need at least two radii")
    radii = np.linspace(0.0, (1.0 - eps) * spec.curvature.radius, n_radii)
    pts = np.zeros((n_radii, spec.dim))
    pts[:, 0] = radii
    dens = ambient_density_grid(pts, spec)
    return np.column_stack([radii, dens])


def radial_cdf(spec: AmbientDensitySpec, radii: np.ndarray, grid: int = 8192) -> np.ndarray:
    """CDF of the sample radius ||z||, by cumulative quadrature of the density.

    Isotropic zero-mean specs only (the radial marginal is well defined
    there): f(r) = 2 p(r) in 1-D and 2 pi r p(r) in 2-D.
    """
    sigma = spec.sigma
    if not np.allclose(sigma, sigma[0, 0] * np.eye(spec.dim)) or np.any(spec.mu != 0.0):
        raise ValueError("radial_cdf requires a zero-mean isotropic spec")
    if spec.dim not in (1, 2):
        raise ValueError("radial_cdf supports d in {1, 2}")
    radius = spec.curvature.radius
    h = radius / grid
    rs = h * (np.arange(grid) + 0.5)
    pts = np.zeros((grid, spec.dim))
    pts[:, 0] = rs
    dens = ambient_density_grid(pts, spec)
    f = 2.0 * dens if spec.dim == 1 else 2.0 * np.pi * rs * dens
    cum = np.concatenate([[0.0], np.cumsum(f) * h])
    edges = np.concatenate([[0.0], rs + 0.5 * h])
    return np.interp(np.asarray(radii, dtype=float), edges, cum)


def write_profile_csv(path, table: np.ndarray) -> None:
    """Emit a density profile as CSV with header `radius,density`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["radius", "density"])
        for radius, dens in table:
            writer.writerow([repr(float(radius)), repr(float(dens))])
