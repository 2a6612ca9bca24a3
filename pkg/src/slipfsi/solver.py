"""Time stepping of the transformed Navier-Stokes system on the reference annulus.

Each step is Heun's method (two forward-Euler stages, averaged). A stage
evaluates ``-N(U) - M(U) + mu L(U)`` with the Navier slip condition built
into the ghost row at the body, advances the body velocity with the
viscous surface force and torque, and then applies the kinetic-energy
projection. The projection enforces the discrete divergence constraint
and supplies the pressure force on the body (free body) in one solve, so
body and fluid are coupled monolithically within each stage.

The friction term of the slip condition is stiff for large ``beta`` and
is taken implicitly at the body-surface nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .config import SimConfig
from .errors import CFLError, InvalidInputError, SolverError
from .grid import AnnulusGrid, GridField, cart_gradient, d_th, extrapolate_hi
from .kinematics import RigidState, body_inertia, rigid_velocity, step_rigid
from .projection import Projector
from .transform import (
    TransformAtlas,
    advance_flow_map,
    build_extension,
    flat_atlas,
    initial_atlas,
)


@dataclass
class FlowState:
    """Transformed velocity and pressure on the reference grid at time ``t``."""

    U: GridField
    P: GridField
    t: float
    atlas_ref: int = 0

    @property
    def velocity(self):
        return self.U.values

    @property
    def pressure(self):
        return self.P.values


@dataclass
class StepInfo:
    dt: float
    divergence: float
    normal_residual: float
    stage_pressures: tuple = field(default=())


# ------------------------------------------------------------- utilities


def grid_for(cfg: SimConfig) -> AnnulusGrid:
    return _grid(cfg.n_r, cfg.n_theta, cfg.r_inner, cfg.r_outer)


@lru_cache(maxsize=16)
def _grid(n_r, n_theta, r_in, r_out):
    return AnnulusGrid(n_r, n_theta, r_in, r_out)


@lru_cache(maxsize=16)
def _projector(n_r, n_theta, r_in, r_out, free, slip, mass, tol):
    return Projector(_grid(n_r, n_theta, r_in, r_out), body_free=free, body_mass=mass,
                     tol=tol, slip=slip)


def projector_for(cfg: SimConfig, free=None) -> Projector:
    free = cfg.body_free if free is None else free
    return _projector(cfg.n_r, cfg.n_theta, cfg.r_inner, cfg.r_outer, free,
                      not cfg.no_slip, cfg.body_mass, cfg.proj_tol)


def inertia_for(cfg: SimConfig):
    return body_inertia(cfg.r_inner, cfg.body_mass, 2)


def body_frame(atlas: TransformAtlas):
    """Jacobian of the map on the body surface (a rotation)."""
    return atlas.X_jac[:, :, 0, 0]


def surface_velocity(rigid: RigidState, atlas: TransformAtlas):
    """Rigid velocity at the body-surface nodes in reference components, (2, n_theta)."""
    xb = np.moveaxis(atlas.X[:, 0, :], 0, -1)
    us = rigid_velocity(rigid, xb)
    return np.einsum("ikj,jk->ij", atlas.Y_jac[:, :, 0, :], us)


def robin_ghost(U, Us, grid: AnnulusGrid, mu, beta, with_friction=True):
    """Ghost row below the body surface.

    The tangential part makes the centred stencil satisfy
    mu (2 D(U) N) . tau = beta (U_s - U) . tau with N = -e_r, tau = e_theta;
    the normal part makes the centred divergence vanish on the surface.
    """
    h, r0 = grid.hr, grid.r_inner
    er = grid.e_r[:, 0, :]
    et = grid.e_theta[:, 0, :]
    dth = d_th(U[:, 0, :], grid)
    u1n = np.sum(U[:, 1, :] * er, axis=0)
    u1t = np.sum(U[:, 1, :] * et, axis=0)
    gt = u1t + 2 * h * np.sum(dth * er, axis=0) / r0
    if with_friction:
        u0t = np.sum(U[:, 0, :] * et, axis=0)
        ust = np.sum(Us * et, axis=0)
        gt = gt - 2 * h * (beta / mu) * (u0t - ust)
    gn = u1n + 2 * h * np.sum(dth * et, axis=0) / r0
    return gn * er + gt * et


def friction_rate(grid: AnnulusGrid, beta):
    """Coefficient of the friction term that the Robin ghost adds to mu Lap U at the surface."""
    return 2 * beta / grid.hr * (1 - grid.hr / (2 * grid.r_inner))


def surface_traction(U, P, Us, grid: AnnulusGrid, mu, beta, include_pressure=True):
    """Fluid traction T N at the body-surface nodes, (n_theta, 2), from the slip relation.

    Tangential part beta (U_s - U) . tau; normal part -P + 2 mu d_r U_r with
    d_r U_r eliminated through the divergence constraint.
    """
    er = grid.e_r[:, 0, :]
    et = grid.e_theta[:, 0, :]
    dth = d_th(U[:, 0, :], grid)
    drur = -np.sum(dth * et, axis=0) / grid.r_inner
    tn = 2 * mu * drur
    if include_pressure:
        tn = tn - P[0]
    tt = beta * np.sum((Us - U[:, 0, :]) * et, axis=0)
    N = -er
    return (tn * N + tt * et).T


def body_force_from_traction(t, grid: AnnulusGrid):
    """Force and torque on the body, -sum w T N and -sum w (x - q) x T N."""
    w = grid.r_inner * grid.hth
    F = -w * np.sum(t, axis=0)
    rel = grid.r_inner * np.stack([grid.cos, grid.sin], axis=1)
    torque = -w * np.sum(rel[:, 0] * t[:, 1] - rel[:, 1] * t[:, 0])
    return F, float(torque)


def stable_dt(U, atlas: TransformAtlas, cfg: SimConfig, grid: AnnulusGrid):
    """Largest dt allowed by the diffusive and advective limits."""
    gmax = _max_eig(atlas.g_up)
    mu_eff = cfg.mu * gmax
    h = grid.h
    lim_a = 0.4 * h * h / mu_eff
    lim_b = 0.45 / (mu_eff * (1 / grid.hr**2 + 1 / (grid.r_inner**2 * grid.d2_den)))
    speed = float(np.max(np.sqrt(np.sum(U * U, axis=0))))
    if atlas.Ydot is not None:
        speed += float(np.max(np.sqrt(np.sum(atlas.Ydot**2, axis=0))))
    lim_c = 0.5 * h / speed if speed > 0 else np.inf
    return min(lim_a, lim_b, lim_c)


def _max_eig(g):
    a, b, d = g[0, 0], g[0, 1], g[1, 1]
    return float(np.max(0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + b * b)))


def check_cfl(dt, U, atlas, cfg, grid):
    lim = stable_dt(U, atlas, cfg, grid)
    if dt > lim * (1 + 1e-12):
        raise CFLError(f"dt = {dt:.6g} exceeds the stability limit", lim)
    return lim


# ------------------------------------------------------ boundary handling


def apply_slip_bc(flow: FlowState, us_boundary, atlas: TransformAtlas, cfg: SimConfig) -> FlowState:
    """Impose the surface normal velocity and wall no-slip; fill both ghost rows."""
    grid = atlas.grid
    U = flow.U.values.copy()
    er = grid.e_r[:, 0, :]
    un = np.sum(us_boundary * er, axis=0)
    ut = np.sum(U[:, 0, :] * grid.e_theta[:, 0, :], axis=0)
    if cfg.no_slip:
        ut = np.sum(us_boundary * grid.e_theta[:, 0, :], axis=0)
    U[:, 0, :] = un * er + ut * grid.e_theta[:, 0, :]
    U[:, -1, :] = 0.0
    lo = robin_ghost(U, us_boundary, grid, cfg.mu, cfg.beta)
    hi = extrapolate_hi(U)
    return FlowState(GridField(U, flow.t, lo, hi), flow.P, flow.t, flow.atlas_ref)


def slip_residuals(U, Us, grid: AnnulusGrid, mu, beta, lo=None):
    """(normal, tangential) residuals of the slip condition at the surface.

    The tangential residual uses one-sided second-order radial differences
    unless ghost values ``lo`` are supplied.
    """
    er = grid.e_r[:, 0, :]
    et = grid.e_theta[:, 0, :]
    normal = float(np.max(np.abs(np.sum((U[:, 0, :] - Us) * er, axis=0))))
    if lo is None:
        dr = (-3 * U[:, 0, :] + 4 * U[:, 1, :] - U[:, 2, :]) / (2 * grid.hr)
    else:
        dr = (U[:, 1, :] - lo) / (2 * grid.hr)
    dth = d_th(U[:, 0, :], grid) / grid.r_inner
    two_d_rt = np.sum(dr * et, axis=0) + np.sum(dth * er, axis=0)
    tang = -mu * two_d_rt - beta * np.sum((Us - U[:, 0, :]) * et, axis=0)
    return normal, float(np.max(np.abs(tang)))


def traction(flow: FlowState, atlas: TransformAtlas, grid: AnnulusGrid, mu):
    """T(U, P) N at the body-surface nodes, (n_theta, 2).

    D(U) uses the stored ghost row when present and one-sided second-order
    radial differences otherwise.
    """
    U = flow.U.values
    P = flow.P.values
    lo = flow.U.ghost_lo
    G = np.stack([cart_gradient(U[i], grid, None if lo is None else lo[i]) for i in range(2)])
    if lo is None:
        # replace the radial part with the one-sided formula at the surface
        dr = (-3 * U[:, 0, :] + 4 * U[:, 1, :] - U[:, 2, :]) / (2 * grid.hr)
        ft = d_th(U[:, 0, :], grid) / grid.r_inner
        c, s = grid.cos, grid.sin
        G0 = np.stack([c * dr - s * ft, s * dr + c * ft], axis=1)
    else:
        G0 = G[:, :, 0, :]
    D = 0.5 * (G0 + np.swapaxes(G0, 0, 1))
    N = -grid.e_r[:, 0, :]
    t = 2 * mu * np.einsum("ijn,jn->in", D, N) - P[0] * N
    return t.T


# --------------------------------------------------------- pressure solve


def _radial_ops(grid: AnnulusGrid):
    """First and second radial differences with homogeneous Neumann ghosts."""
    n, h = grid.n_r, grid.hr
    e = np.ones(n - 1)
    D1 = sps.diags([-e, e], [-1, 1], shape=(n, n), format="lil") / (2 * h)
    D1[0, 1] = 0.0
    D1[n - 1, n - 2] = 0.0
    D2 = sps.diags([e, -2 * np.ones(n), e], [-1, 0, 1], shape=(n, n), format="lil") / h**2
    D2[0, 1] = 2 / h**2
    D2[n - 1, n - 2] = 2 / h**2
    return D1.tocsr(), D2.tocsr()


def _angular_ops(grid: AnnulusGrid):
    n = grid.n_theta
    one = np.ones(n)
    sh = sps.diags([one[:-1], one[:1]], [1, -(n - 1)], shape=(n, n))
    D1 = (sh - sh.T) / grid.d1_den
    D2 = (sh + sh.T - 2 * sps.eye(n)) / grid.d2_den
    return D1.tocsr(), D2.tocsr()


def poisson_matrix(atlas: TransformAtlas):
    """Sparse matrix of p -> d_i (g^ij d_j p) with homogeneous Neumann rows."""
    grid = atlas.grid
    nr, nt = grid.shape
    R1, R2 = _radial_ops(grid)
    T1, T2 = _angular_ops(grid)
    Ir, It = sps.eye(nr), sps.eye(nt)
    Dr, Drr = sps.kron(R1, It), sps.kron(R2, It)
    Dt, Dtt = sps.kron(Ir, T1), sps.kron(Ir, T2)
    Drt = Dt @ Dr
    dg = lambda a: sps.diags(np.ravel(a))
    c, s = dg(np.tile(grid.cos, nr)), dg(np.tile(grid.sin, nr))
    ir = dg(np.repeat(grid.inv_r, nt))
    a, b, d = Drr, ir @ Drt - ir @ ir @ Dt, ir @ Dr + ir @ ir @ Dtt
    H11 = c @ c @ a - 2 * c @ s @ b + s @ s @ d
    H12 = c @ s @ (a - d) + (c @ c - s @ s) @ b
    H22 = s @ s @ a + 2 * c @ s @ b + c @ c @ d
    G1 = c @ Dr - s @ ir @ Dt
    G2 = s @ Dr + c @ ir @ Dt
    gu = atlas.g_up
    A = dg(gu[0, 0]) @ H11 + 2 * dg(gu[0, 1]) @ H12 + dg(gu[1, 1]) @ H22
    A = A + dg(atlas.dg[0]) @ G1 + dg(atlas.dg[1]) @ G2
    return A.tocsr()


def pressure_solve(rhs, atlas: TransformAtlas, tol=1e-10, neumann=None):
    """Solve d_i (g^ij d_j p) = rhs with Neumann data and a zero-mean gauge.

    ``neumann = (dp_lo, dp_hi)`` gives the radial derivative on the two
    circles (default zero; the metric is the identity there). An
    incompatible right-hand side is first made compatible by removing its
    weighted mean. Returns a GridField; raises SolverError when the
    relative residual exceeds ``tol``.
    """
    grid = atlas.grid
    f = np.asarray(rhs.values if isinstance(rhs, GridField) else rhs, dtype=float).copy()
    h = grid.hr
    A = poisson_matrix(atlas)
    if neumann is not None:
        lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (grid.n_theta,)) for v in neumann)
        # ghost p_-1 = p_1 - 2h dp_lo enters d_rr and (1/r) d_r
        f[0] -= -2 * lo / h + lo * grid.inv_r[0]
        f[-1] -= 2 * hi / h + hi * grid.inv_r[-1]
    w = grid.weights.ravel()
    b = f.ravel()
    b = b - w @ b / w.sum()
    N = b.size
    K = sps.bmat([[A, w[:, None]], [w[None, :], None]], format="csc")
    lu = spla.splu(K)
    rhs_full = np.append(b, 0.0)
    sol = lu.solve(rhs_full)
    for _ in range(3):
        r = rhs_full - K @ sol
        sol = sol + lu.solve(r)
    p = sol[:N]
    res = float(np.linalg.norm(A @ p + sol[N] * w - b) / max(np.linalg.norm(b), 1e-300))
    if np.linalg.norm(b) == 0:
        res = float(np.linalg.norm(A @ p))
    if res > tol:
        raise SolverError("pressure Poisson solve did not reach tolerance", res)
    p = p - w @ p / w.sum()
    return GridField(p.reshape(grid.shape), atlas.t)


# ------------------------------------------------------------ initial data


def bump_field(x, center, radius):
    """Divergence-free bump with unit peak speed, supported in |x - c| < radius.

    Perpendicular gradient of (1 - |x-c|^2/rho^2)^4, scaled by its
    analytic maximum.
    """
    d = x - center
    s = np.sum(d * d, axis=-1) / radius**2
    inside = s < 1
    peak = 8 * (6 / 7) ** 3 / np.sqrt(7) / radius
    f = np.where(inside, -8 * (1 - s) ** 3 / radius**2, 0.0) / peak
    gx = f * d[..., 0]
    gy = f * d[..., 1]
    return np.stack([gy, -gx], axis=-1)


def perturbation_bump(cfg: SimConfig, seed=None):
    """Seeded bump centre and radius inside the fluid annulus."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    L = cfg.r_outer - cfg.r_inner
    radius = 0.4 * L
    rc = cfg.r_inner + 0.5 * L + rng.uniform(-0.05, 0.05) * L
    ang = rng.uniform(0, 2 * np.pi)
    return np.array([rc * np.cos(ang), rc * np.sin(ang)]), radius


def initial_velocity(cfg: SimConfig, grid: AnnulusGrid, u0=None):
    """Node velocity (2, n_r, n_theta) and body velocities (a0, omega0)."""
    x = np.moveaxis(grid.xy, 0, -1)
    a0 = np.array(cfg.a0, dtype=float)
    om0 = cfg.omega0
    if u0 is not None:
        U = np.moveaxis(np.asarray(u0(x), dtype=float), -1, 0).copy()
    elif cfg.initial == "rest":
        U = np.zeros((2, *grid.shape))
    elif cfg.initial == "rigid-rotation":
        om0 = cfg.amplitude
        U = np.moveaxis(om0 * np.stack([-x[..., 1], x[..., 0]], axis=-1), -1, 0).copy()
        U[:, -1, :] = 0.0
    elif cfg.initial == "swirl":
        L = cfg.r_outer - cfg.r_inner
        prof = 4 * (grid.R - cfg.r_inner) * (cfg.r_outer - grid.R) / L**2
        U = cfg.amplitude * prof * grid.e_theta
    elif cfg.initial == "bump":
        c, rad = perturbation_bump(cfg, seed=cfg.seed + 1)
        U = cfg.amplitude * np.moveaxis(bump_field(x, c, rad), -1, 0)
    else:  # pragma: no cover - validated in SimConfig
        raise InvalidInputError(f"unknown initial kind {cfg.initial!r}")
    if cfg.perturbation:
        c, rad = perturbation_bump(cfg)
        U = U + cfg.perturbation * np.moveaxis(bump_field(x, c, rad), -1, 0)
    if cfg.body_motion == "pinned":
        a0 = np.zeros(2)
    return U, a0, om0


INIT_PROJECTION_LIMIT = 0.25


def initialize_state(cfg: SimConfig, u0=None):
    """Projected initial flow and rigid state at t = 0.

    ``u0`` is either None (use ``cfg.initial``) or a callable mapping
    points ``(..., 2)`` to velocities ``(..., 2)``.
    """
    flow, rigid, _ = initial_triple(cfg, u0)
    return flow, rigid


def initial_triple(cfg: SimConfig, u0=None):
    """Projected initial flow, rigid state and atlas at t = 0."""
    grid = grid_for(cfg)
    U, a0, om0 = initial_velocity(cfg, grid, u0)
    if not np.all(np.isfinite(U)):
        raise InvalidInputError("initial velocity is not finite")
    rigid = RigidState.initial(np.zeros(2), a0, om0)
    atlas = atlas_for(rigid, cfg, grid)
    proj = projector_for(cfg, free=False)
    Us = surface_velocity(rigid, atlas)
    xi = body_frame(atlas).T @ rigid.a
    fixed = proj.fixed_field(xi, np.sum(Us * grid.e_theta[:, 0, :], axis=0))
    xs = proj.gather(U, xi)
    x, _, _ = proj.project(xs, None, fixed)
    Up = proj.scatter(x, fixed)
    U = proj.scatter(xs, fixed)  # boundary values imposed, not yet solenoidal
    size = np.sqrt(grid.integrate(np.sum(U * U, axis=0)))
    moved = np.sqrt(grid.integrate(np.sum((Up - U) ** 2, axis=0)))
    if moved > INIT_PROJECTION_LIMIT * max(size, 1e-300) and moved > 1e-12:
        raise InvalidInputError(
            f"initial velocity is far from solenoidal (projection changed it by {moved / size:.3g} relative)")
    U = Up
    flow = FlowState(GridField(U, 0.0), GridField(np.zeros(grid.shape), 0.0), 0.0, 0)
    flow = apply_slip_bc(flow, Us, atlas, cfg)
    return flow, rigid, atlas


def atlas_for(rigid: RigidState, cfg: SimConfig, grid=None):
    """Atlas matching ``rigid``: the identity map for a pinned body.

    A disk spinning about its fixed centre leaves the fluid domain
    unchanged, so the pinned body keeps the flat atlas and its rotation
    enters only through the surface velocity.
    """
    grid = grid_for(cfg) if grid is None else grid
    if cfg.body_motion == "pinned":
        return flat_atlas(grid, rigid.t)
    return initial_atlas(grid, rigid, cfg.delta0)


# ------------------------------------------------------------------ step


def _gup_interior(atlas: TransformAtlas):
    if atlas.flat:
        return None
    g = atlas.g_up[:, :, 1:-1, :]
    return g.reshape(2, 2, -1)


def _stage(base, U, rigid, atlas, cfg, grid, proj, h, t, forcing, inertia):
    """One forward-Euler stage ``base + h * rhs(U)`` followed by the projection.

    ``base`` is (U, xi, omega) of the combination being advanced; the
    right-hand side is evaluated at ``U`` with the body state ``rigid`` and
    geometry ``atlas``.
    """
    Ub, xib, wb = base
    mu, beta = cfg.mu, cfg.beta
    Us = surface_velocity(rigid, atlas)
    xi = body_frame(atlas).T @ rigid.a
    lo = robin_ghost(U, Us, grid, mu, beta, with_friction=False)
    F = atlas.transformed_rhs(U, mu, lo, None)
    if forcing is not None:
        F = F + forcing(t, atlas)
    Ustar = Ub + h * F
    if cfg.body_free:
        tr = surface_traction(U, None, Us, grid, mu, beta, include_pressure=False)
        Fv, torque = body_force_from_traction(tr, grid)
        w = rigid.omega
        xi_star = xib + h * (Fv / cfg.body_mass - w * np.array([-xi[1], xi[0]]))
        w_star = wb + h * torque / inertia.J
    else:
        xi_star = xib
        w_star = rigid.omega
    # surface velocity the stage is relaxed toward, in reference components
    et = grid.e_theta[:, 0, :]
    ust = xi_star @ et + w_star * grid.r_inner
    tw = 1.0
    if not cfg.no_slip:
        kap = friction_rate(grid, beta)
        tw = 1 + h * kap
        ut = np.sum(Ustar[:, 0, :] * et, axis=0)
        Ustar[:, 0, :] += ((ut + h * kap * ust) / tw - ut) * et
    fixed = proj.fixed_field(xi_star, ust if cfg.no_slip else None)
    x, lam, res = proj.project(proj.gather(Ustar, xi_star), _gup_interior(atlas), fixed, tw)
    Unew = proj.scatter(x, fixed)
    if cfg.body_free:
        xi_star = x[-2:].copy()
    P = proj.pressure_from_multiplier(lam, h)
    return Unew, P, xi_star, w_star, res


def step(flow: FlowState, rigid: RigidState, atlas: TransformAtlas, cfg: SimConfig,
         forcing=None, dt=None, info=None):
    """Advance (flow, rigid, atlas) by one step of Heun's method.

    The second stage is written as ``(U0 + U1)/2 + dt/2 * rhs(U1)`` and
    projected, so the implicit friction and the constraint act on the
    final combination. ``forcing(t, atlas)`` optionally adds a body force
    in reference components. ``dt`` defaults to ``cfg.dt`` or, when that
    is 0, to ``cfg.cfl`` times the stability limit.
    """
    grid = atlas.grid
    U0 = flow.U.values
    lim = stable_dt(U0, atlas, cfg, grid)
    if dt is None:
        dt = cfg.dt if cfg.dt > 0 else cfg.cfl * lim
    if dt > lim * (1 + 1e-12):
        raise CFLError(f"dt = {dt:.6g} exceeds the stability limit", lim)
    proj = projector_for(cfg)
    inertia = inertia_for(cfg)
    t = flow.t
    xi0 = body_frame(atlas).T @ rigid.a
    w0 = rigid.omega
    U1, P1, xi1, w1, r1 = _stage((U0, xi0, w0), U0, rigid, atlas, cfg, grid, proj, dt, t,
                                 forcing, inertia)
    if cfg.body_free:
        pred = step_rigid(rigid, rigid.a, w0, dt)
        rigid1 = RigidState(t + dt, pred.q, pred.Q, pred.Q @ xi1, w1)
        fld0 = build_extension(rigid, cfg, cfg.delta0)
        atlas1 = advance_flow_map(atlas, fld0, dt, build_extension(rigid1, cfg, cfg.delta0))
    else:
        rigid1 = step_rigid(rigid, np.zeros(2), w0, dt)
        atlas1 = flat_atlas(grid, t + dt)
    base = (0.5 * (U0 + U1), 0.5 * (xi0 + xi1), 0.5 * (w0 + w1))
    Un, P, xin, wn, r2 = _stage(base, U1, rigid1, atlas1, cfg, grid, proj, 0.5 * dt, t + dt,
                                forcing, inertia)
    if cfg.body_free:
        mov = step_rigid(rigid, 0.5 * (rigid.a + rigid1.a), 0.5 * (w0 + w1), dt)
        rigid_new = RigidState(t + dt, mov.q, mov.Q, mov.Q @ xin, wn)
        atlas_new = advance_flow_map(atlas, fld0, dt, build_extension(rigid_new, cfg, cfg.delta0))
    else:
        rigid_new = step_rigid(rigid, np.zeros(2), w0, dt)
        atlas_new = flat_atlas(grid, t + dt)
    new = FlowState(GridField(Un, t + dt), GridField(P, t + dt), t + dt, flow.atlas_ref + 1)
    Us = surface_velocity(rigid_new, atlas_new)
    new = apply_slip_bc(new, Us, atlas_new, cfg)
    if info is not None:
        er = grid.e_r[:, 0, :]
        info.append(StepInfo(
            dt, max(r1, r2),
            float(np.max(np.abs(np.sum((new.U.values[:, 0, :] - Us) * er, axis=0)))),
            (P1, P)))
    return new, rigid_new, atlas_new


def run(cfg: SimConfig, t_end=None, u0=None, forcing=None, callback=None, state=None, dt=None):
    """Integrate to ``t_end``; ``callback(flow, rigid, atlas, dt)`` after every step."""
    flow, rigid, atlas = initial_triple(cfg, u0) if state is None else state
    t_end = cfg.t_end if t_end is None else t_end
    while flow.t < t_end - 1e-12:
        h = dt
        if h is None:
            h = cfg.dt if cfg.dt > 0 else cfg.cfl * stable_dt(flow.U.values, atlas, cfg, atlas.grid)
        left = t_end - flow.t
        if left < 2 * h:
            # split the remainder evenly instead of ending on a sliver step
            h = left / np.ceil(left / h - 1e-9)
        flow, rigid, atlas = step(flow, rigid, atlas, cfg, forcing, h)
        if callback is not None:
            callback(flow, rigid, atlas, h)
    return flow, rigid, atlas
