"""Vertex-centred annulus grid, polar-node stencils for Cartesian components,
boundary quadrature and bilinear interpolation.

Array layout: scalars are ``(n_r, n_theta)``; vector fields carry a leading
component axis, ``(2, n_r, n_theta)``. Radial index 0 is the body surface,
index ``n_r - 1`` the container wall. Ghost layers live at index -1 and
``n_r`` and are stored separately as ``(..., n_theta)`` arrays.

The angular stencils use ``2 sin(h)`` and ``2 (1 - cos(h))`` denominators in
place of ``2h`` and ``h^2``. Both remain second order and become exact for
frequency-one modes, so fields that are linear in Cartesian coordinates
(rigid motions in particular) are differentiated without error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    ExtrapolationError,
    GhostLayerError,
    ShapeMismatchError,
)


@dataclass(frozen=True)
class AnnulusGrid:
    n_r: int
    n_theta: int
    r_inner: float
    r_outer: float

    def __post_init__(self):
        if not (self.r_inner > 0 and self.r_outer > self.r_inner):
            raise ConfigError(
                f"need 0 < r_inner < r_outer, got {self.r_inner}, {self.r_outer}"
            )
        if self.n_r < 8 or self.n_theta < 8:
            raise ConfigError(f"need n_r, n_theta >= 8, got {self.n_r}, {self.n_theta}")
        hr = (self.r_outer - self.r_inner) / (self.n_r - 1)
        hth = 2.0 * np.pi / self.n_theta
        r = self.r_inner + hr * np.arange(self.n_r)
        r[-1] = self.r_outer
        th = hth * np.arange(self.n_theta)
        H = np.full(self.n_r, hr)
        H[0] = H[-1] = 0.5 * hr
        put = lambda k, v: object.__setattr__(self, k, v)
        put("hr", hr)
        put("hth", hth)
        put("r", r)
        put("theta", th)
        put("cos", np.cos(th))
        put("sin", np.sin(th))
        put("H", H)
        put("d1_den", 2.0 * np.sin(hth))
        put("d2_den", 2.0 * (1.0 - np.cos(hth)))
        put("weights", (H * r)[:, None] * hth * np.ones(self.n_theta))
        put("R", np.repeat(r[:, None], self.n_theta, axis=1))
        put("inv_r", 1.0 / r)
        xy = np.stack([np.outer(r, self.cos), np.outer(r, self.sin)])
        put("xy", xy)
        e_r = np.stack([np.broadcast_to(self.cos, (self.n_r, self.n_theta)),
                        np.broadcast_to(self.sin, (self.n_r, self.n_theta))])
        e_t = np.stack([-e_r[1], e_r[0]])
        put("e_r", np.ascontiguousarray(e_r))
        put("e_theta", np.ascontiguousarray(e_t))

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    @property
    def h(self):
        """Smallest node spacing (radial or arc length at the body)."""
        return min(self.hr, self.r_inner * self.hth)

    @property
    def inner_nodes(self):
        return [(0, j) for j in range(self.n_theta)]

    @property
    def outer_nodes(self):
        return [(self.n_r - 1, j) for j in range(self.n_theta)]

    def area(self):
        return float(self.weights.sum())

    def integrate(self, f):
        """Trapezoid-in-r, periodic-in-theta quadrature of ``f`` over the annulus."""
        return np.sum(np.asarray(f) * self.weights, axis=(-2, -1))


def build_annulus_grid(config) -> AnnulusGrid:
    return AnnulusGrid(config.n_r, config.n_theta, config.r_inner, config.r_outer)


@dataclass
class GridField:
    """Node values plus optional ghost layers at the two radial boundaries."""

    values: np.ndarray
    t: float = 0.0
    ghost_lo: np.ndarray | None = None
    ghost_hi: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridField values must be finite")

    @property
    def has_ghosts(self):
        return self.ghost_lo is not None and self.ghost_hi is not None

    def fill_ghosts_extrapolated(self):
        self.ghost_lo = extrapolate_lo(self.values)
        self.ghost_hi = extrapolate_hi(self.values)
        return self

    def copy(self):
        return GridField(
            self.values.copy(), self.t,
            None if self.ghost_lo is None else self.ghost_lo.copy(),
            None if self.ghost_hi is None else self.ghost_hi.copy(),
        )


# ---------------------------------------------------------------- stencils


def extrapolate_lo(f):
    """Cubic extrapolation to the ghost row below radial index 0."""
    return 4 * f[..., 0, :] - 6 * f[..., 1, :] + 4 * f[..., 2, :] - f[..., 3, :]


def extrapolate_hi(f):
    return 4 * f[..., -1, :] - 6 * f[..., -2, :] + 4 * f[..., -3, :] - f[..., -4, :]


def pad_r(f, lo=None, hi=None):
    """Stack ghost rows around ``f`` along the radial axis."""
    f = np.asarray(f, dtype=float)
    lo = extrapolate_lo(f) if lo is None else lo
    hi = extrapolate_hi(f) if hi is None else hi
    return np.concatenate([lo[..., None, :], f, hi[..., None, :]], axis=-2)


def d_r(fp, hr):
    return (fp[..., 2:, :] - fp[..., :-2, :]) / (2.0 * hr)


def d_rr(fp, hr):
    return (fp[..., 2:, :] - 2.0 * fp[..., 1:-1, :] + fp[..., :-2, :]) / hr**2


def d_th(f, grid):
    return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / grid.d1_den


def d_thth(f, grid):
    return (np.roll(f, -1, axis=-1) - 2.0 * f + np.roll(f, 1, axis=-1)) / grid.d2_den


def polar_derivatives(f, grid, lo=None, hi=None):
    """Return f_r, f_t, f_rr, f_tt, f_rt on the node set."""
    fp = pad_r(f, lo, hi)
    fr = d_r(fp, grid.hr)
    frr = d_rr(fp, grid.hr)
    ft = d_th(f, grid)
    ftt = d_thth(f, grid)
    frt = d_th(fr, grid)
    return fr, ft, frr, ftt, frt


def cart_gradient(f, grid, lo=None, hi=None):
    """Cartesian gradient, shape ``(2, *f.shape)``; last axis index is d/dx_k first."""
    fp = pad_r(f, lo, hi)
    fr = d_r(fp, grid.hr)
    ft = d_th(f, grid) * grid.inv_r[:, None]
    c, s = grid.cos, grid.sin
    return np.stack([c * fr - s * ft, s * fr + c * ft])


def cart_hessian(f, grid, lo=None, hi=None):
    """Cartesian second derivatives (f_11, f_12, f_22), shape ``(3, *f.shape)``."""
    fr, ft, frr, ftt, frt = polar_derivatives(f, grid, lo, hi)
    ir = grid.inv_r[:, None]
    a = frr
    b = frt * ir - ft * ir**2
    d = fr * ir + ftt * ir**2
    c, s = grid.cos, grid.sin
    f11 = c * c * a - 2 * c * s * b + s * s * d
    f12 = c * s * (a - d) + (c * c - s * s) * b
    f22 = s * s * a + 2 * c * s * b + c * c * d
    return np.stack([f11, f12, f22])


def laplacian(f, grid, lo=None, hi=None):
    fr, _, frr, ftt, _ = polar_derivatives(f, grid, lo, hi)
    ir = grid.inv_r[:, None]
    return frr + fr * ir + ftt * ir**2


def divergence(v, grid, lo=None, hi=None):
    """Divergence of a Cartesian vector field sampled at polar nodes."""
    g1 = cart_gradient(v[0], grid, None if lo is None else lo[0], None if hi is None else hi[0])
    g2 = cart_gradient(v[1], grid, None if lo is None else lo[1], None if hi is None else hi[1])
    return g1[0] + g2[1]


def discrete_operator(fld: GridField, kind: str, grid: AnnulusGrid, one_sided=False) -> GridField:
    """Apply ``gradient``, ``divergence`` or ``laplacian`` to a ghosted field.

    With ``one_sided=True`` missing ghosts are replaced by cubic
    extrapolation, which makes the radial boundary stencils one-sided and
    second order.
    """
    vals = fld.values
    if vals.shape[-2:] != grid.shape:
        raise ShapeMismatchError(f"field shape {vals.shape} does not match grid {grid.shape}")
    if not fld.has_ghosts and not one_sided:
        raise GhostLayerError("ghost layers not filled; apply a boundary condition first")
    lo, hi = fld.ghost_lo, fld.ghost_hi
    if kind == "gradient":
        out = cart_gradient(vals, grid, lo, hi)
    elif kind == "laplacian":
        out = laplacian(vals, grid, lo, hi)
    elif kind == "divergence":
        if vals.shape[0] != 2 or vals.ndim != 3:
            raise ShapeMismatchError("divergence needs a (2, n_r, n_theta) field")
        out = divergence(vals, grid, lo, hi)
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    return GridField(out, fld.t)


# ------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class BoundaryQuadrature:
    points: np.ndarray  # (n, 2)
    normals: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)
    tangents: np.ndarray = field(default=None)

    def __iter__(self):
        return iter(zip(self.points, self.normals, self.weights))

    def __len__(self):
        return len(self.weights)


def boundary_quadrature(grid: AnnulusGrid, which="inner") -> BoundaryQuadrature:
    """Nodes, unit normals and arc weights on one boundary circle.

    Inner normals point into the body (toward its centre). Outer normals
    point out of the container. Tangents are counter-clockwise.
    """
    e_r = np.stack([grid.cos, grid.sin], axis=1)
    e_t = np.stack([-grid.sin, grid.cos], axis=1)
    if which == "inner":
        R, n = grid.r_inner, -e_r
    elif which == "outer":
        R, n = grid.r_outer, e_r
    else:
        raise ValueError("which must be 'inner' or 'outer'")
    w = np.full(grid.n_theta, R * grid.hth)
    return BoundaryQuadrature(R * e_r, n, w, e_t)


# ---------------------------------------------------------- interpolation


def locate(grid: AnnulusGrid, points, tol_cells=0.5):
    """Fractional (r, theta) indices for points given in grid coordinates."""
    p = np.asarray(points, dtype=float)
    r = np.hypot(p[..., 0], p[..., 1])
    lo = grid.r_inner - tol_cells * grid.hr
    hi = grid.r_outer + tol_cells * grid.hr
    bad = (r < lo - 1e-14) | (r > hi + 1e-14)
    if np.any(bad):
        k = np.flatnonzero(bad.ravel())[0]
        raise ExtrapolationError(
            f"point at radius {r.ravel()[k]:.6g} outside [{grid.r_inner}, {grid.r_outer}]"
        )
    fr = (r - grid.r_inner) / grid.hr
    th = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2.0 * np.pi)
    ft = th / grid.hth
    return fr, ft


def interpolate_indices(values, grid, fr, ft):
    """Bilinear interpolation at fractional indices; handles leading axes."""
    from ._kernels import bilinear_polar

    return bilinear_polar(np.asarray(values, dtype=float), fr, ft, grid.n_r, grid.n_theta)


def interpolate(fld, point, grid: AnnulusGrid):
    """Bilinear (r, theta) interpolation of a GridField or array at points.

    Points within half a radial cell outside the annulus are linearly
    extrapolated; farther points raise ExtrapolationError.
    """
    vals = fld.values if isinstance(fld, GridField) else np.asarray(fld, dtype=float)
    fr, ft = locate(grid, point)
    return interpolate_indices(vals, grid, fr, ft)
