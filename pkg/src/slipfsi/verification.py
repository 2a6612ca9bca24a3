"""Numerical checks of the energy inequality, the transport identity, the
transformed-residual estimate and the weak-strong perturbation mechanism."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import SimConfig
from .grid import AnnulusGrid, cart_gradient
from .transform import TransformAtlas

# --------------------------------------------------------- transform identities

IDENTITY_TOLERANCES = {"det": 1e-12, "metric": 1e-8, "christoffel": 1e-8, "flat": 1e-12}


def _sample_states(n, seed):
    from .kinematics import RigidState, rotation2d

    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        q = rng.uniform(-0.2, 0.2, 2)
        out.append(RigidState(0.1 * k, q, rotation2d(rng.uniform(-np.pi, np.pi)),
                              rng.uniform(-1, 1, 2), rng.uniform(-2, 2)))
    return out


def transform_identity_suite(grid: AnnulusGrid, states=None, seed=0):
    """Geometric identities of rigid atlases and the flat-atlas reductions.

    Returns {check: (value, tolerance, passed)}. Flat reductions are
    measured relative to the size of the plain operator.
    """
    from .grid import cart_hessian, laplacian
    from .transform import flat_atlas, op_conv, op_G, op_L, op_M, rigid_atlas

    states = _sample_states(4, seed) if states is None else states
    det = metric = gam = 0.0
    for st in states:
        A = rigid_atlas(grid, st)
        det = max(det, float(np.max(np.abs(A.det() - 1))))
        metric = max(metric, A.metric_identity_error())
        # Gamma^k_ij against an explicit loop over Y_kl X_l,ij
        ref = np.zeros_like(A.christoffel)
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    for l in range(2):
                        ref[k, i, j] += A.Y_jac[k, l] * A.X_hess[l, i, j]
        gam = max(gam, float(np.max(np.abs(A.christoffel - ref))))

    F = flat_atlas(grid)
    x, y = grid.xy
    u = np.stack([np.sin(x) * y + x * x, np.cos(y) * x * x - y])
    p = np.sin(x) * np.cos(2 * y)
    G = np.stack([cart_gradient(u[i], grid) for i in range(2)])

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1.0))

    lap = np.stack([laplacian(u[i], grid) for i in range(2)])
    # the transformed Laplacian uses the Cartesian Hessian; laplacian() its trace
    hs = np.stack([cart_hessian(u[i], grid) for i in range(2)])
    flat = {
        "flat_L": max(rel(op_L(u, F), lap), rel(op_L(u, F), hs[:, 0] + hs[:, 2])),
        "flat_N": rel(op_conv(u, F), np.einsum("jxy,ijxy->ixy", u, G)),
        "flat_M": float(np.max(np.abs(op_M(u, F)))),
        "flat_G": rel(op_G(p, F), cart_gradient(p, grid)),
    }
    tol = IDENTITY_TOLERANCES
    out = {"det": (det, tol["det"]), "metric": (metric, tol["metric"]),
           "christoffel": (gam, tol["christoffel"])}
    out.update({k: (v, tol["flat"]) for k, v in flat.items()})
    return {k: (v, t, bool(v <= t)) for k, (v, t) in out.items()}


# ------------------------------------------------------------------ energy


def physical_velocity(U, atlas: TransformAtlas):
    """Physical components J_X U at the reference nodes."""
    return np.einsum("ijxy,jxy->ixy", atlas.X_jac, U)


def physical_gradient(U, atlas: TransformAtlas, lo=None, hi=None):
    """grad_x u at the nodes, G[i, j] = d u_i / d x_j.

    Ghost rows ``lo``/``hi`` are those of U; the map is rigid next to the
    body and the identity next to the wall, so they carry over with the
    boundary Jacobian.
    """
    grid = atlas.grid
    V = physical_velocity(U, atlas)
    vlo = None if lo is None else atlas.X_jac[:, :, 0, :].transpose(2, 0, 1) @ lo.T[:, :, None]
    vhi = None if hi is None else atlas.X_jac[:, :, -1, :].transpose(2, 0, 1) @ hi.T[:, :, None]
    if vlo is not None:
        vlo = vlo[:, :, 0].T
    if vhi is not None:
        vhi = vhi[:, :, 0].T
    Gy = np.stack([cart_gradient(V[i], grid,
                                 None if vlo is None else vlo[i],
                                 None if vhi is None else vhi[i]) for i in range(2)])
    return np.einsum("ikxy,kjxy->ijxy", Gy, atlas.Y_jac)


def kinetic_energy(U, atlas: TransformAtlas):
    return 0.5 * float(atlas.grid.integrate(np.einsum("ijxy,ixy,jxy->xy", atlas.g_lo, U, U)))


def body_energy(rigid, mass, inertia):
    return 0.5 * mass * float(rigid.a @ rigid.a) + 0.5 * inertia * float(rigid.omega) ** 2


def dissipation_rates(U, Us, atlas: TransformAtlas, mu, beta, lo=None, hi=None):
    """(int 2 mu |D u|^2 over the fluid, int beta |u - u_s|^2 over the body surface)."""
    grid = atlas.grid
    G = physical_gradient(U, atlas, lo, hi)
    D = 0.5 * (G + np.swapaxes(G, 0, 1))
    visc = 2 * mu * float(grid.integrate(np.sum(D * D, axis=(0, 1))))
    slip = beta * float(np.sum(np.sum((U[:, 0, :] - Us) ** 2, axis=0)) * grid.r_inner * grid.hth)
    return visc, slip


@dataclass(frozen=True)
class EnergyLedger:
    """Running energy balance. ``defect = E_total + D_visc + D_slip - E0``.

    E_total is the kinetic energy of the rigid-extended velocity: fluid
    plus body (unit density, so body mass equals its area).
    """

    t: float
    E_total: float
    D_visc: float
    D_slip: float
    E0: float
    mu: float
    beta: float
    mass: float
    inertia: float
    rate_visc: float = 0.0
    rate_slip: float = 0.0
    E_fluid: float = 0.0
    history: tuple = field(default=(), repr=False)

    @property
    def defect(self):
        return self.E_total + self.D_visc + self.D_slip - self.E0

    def row(self):
        return (self.t, self.E_total, self.D_visc, self.D_slip, self.defect)

    @classmethod
    def start(cls, flow, rigid, atlas: TransformAtlas, cfg: SimConfig):
        from .solver import inertia_for, surface_velocity

        J = inertia_for(cfg).J
        Ef = kinetic_energy(flow.U.values, atlas)
        E = Ef + body_energy(rigid, cfg.body_mass, J)
        rv, rs = dissipation_rates(flow.U.values, surface_velocity(rigid, atlas), atlas,
                                   cfg.mu, cfg.beta, flow.U.ghost_lo, flow.U.ghost_hi)
        led = cls(flow.t, E, 0.0, 0.0, E, cfg.mu, cfg.beta, cfg.body_mass, J, rv, rs, Ef)
        return replace(led, history=(led.row(),))


def energy_update(flow, rigid, ledger: EnergyLedger, dt, atlas: TransformAtlas) -> EnergyLedger:
    """Advance the ledger to ``flow.t``; dissipation integrated by the trapezoid rule."""
    from .solver import surface_velocity

    if abs(flow.t - (ledger.t + dt)) > 1e-9 * max(1.0, abs(flow.t)):
        raise ValueError(f"ledger at t={ledger.t} cannot step by {dt} to t={flow.t}")
    Ef = kinetic_energy(flow.U.values, atlas)
    E = Ef + body_energy(rigid, ledger.mass, ledger.inertia)
    rv, rs = dissipation_rates(flow.U.values, surface_velocity(rigid, atlas), atlas,
                               ledger.mu, ledger.beta, flow.U.ghost_lo, flow.U.ghost_hi)
    new = replace(ledger, t=flow.t, E_total=E, E_fluid=Ef,
                  D_visc=ledger.D_visc + 0.5 * dt * (ledger.rate_visc + rv),
                  D_slip=ledger.D_slip + 0.5 * dt * (ledger.rate_slip + rs),
                  rate_visc=rv, rate_slip=rs)
    return replace(new, history=ledger.history + (new.row(),))


def energy_run(cfg: SimConfig, u0=None, t_end=None, callback=None):
    """Run ``cfg`` and return the final EnergyLedger (with history)."""
    from .solver import initial_triple, run

    flow, rigid, atlas = initial_triple(cfg, u0)
    box = [EnergyLedger.start(flow, rigid, atlas, cfg)]

    def cb(f, r, a, dt):
        box[0] = energy_update(f, r, box[0], dt, a)
        if callback is not None:
            callback(f, r, a, dt, box[0])

    run(cfg, t_end=t_end, state=(flow, rigid, atlas), callback=cb)
    return box[0]


def max_defect(ledger: EnergyLedger, signed=False):
    """Largest defect over the history, relative to E0 (absolute value by default)."""
    d = np.array([row[4] for row in ledger.history])
    if ledger.E0 == 0:
        return 0.0
    return float((d.max() if signed else np.abs(d).max()) / ledger.E0)


def refinement_slope(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    hs, errs = np.log(np.asarray(hs, float)), np.log(np.asarray(errs, float))
    return float(np.polyfit(hs, errs, 1)[0])


# --------------------------------------------------------- Reynolds transport


def disk_mesh(center, radius, n):
    """Vertices (n+1, 2n, 2) of a polar mesh of a disk; cell (i, j) spans
    rings i..i+1 and rays j..j+1."""
    rho = radius * np.arange(n + 1) / n
    th = 2 * np.pi * np.arange(2 * n) / (2 * n)
    c = np.asarray(center, dtype=float)
    return c + rho[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)[None]


def _cells(P):
    a = P[:-1]
    b = P[1:]
    b2 = np.roll(P[1:], -1, axis=1)
    a2 = np.roll(P[:-1], -1, axis=1)
    return np.stack([a, b, b2, a2], axis=-2)  # (n, 2n, 4, 2), counter-clockwise


def polygon_quadrature(P):
    """Areas and centroids of the mesh cells (shoelace formulas)."""
    C = _cells(P)
    x, y = C[..., 0], C[..., 1]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    cr = x * yn - xn * y
    A = 0.5 * cr.sum(-1)
    safe = np.where(np.abs(A) > 0, A, 1.0)
    cx = ((x + xn) * cr).sum(-1) / (6 * safe)
    cy = ((y + yn) * cr).sum(-1) / (6 * safe)
    return A, np.stack([cx, cy], axis=-1)


def _heun_points(v, t, P, dt):
    k1 = v(t, P)
    k2 = v(t + dt, P + dt * k1)
    return P + 0.5 * dt * (k1 + k2)


def reynolds_check(f, v, V0, T, n=32, dt=None, eps=1e-5, df_dt=None, grad_f=None,
                   return_series=False):
    """Max over time of |d/dt int_V(t) f - int_V(t) (f_t + v . grad f)|.

    ``V0 = (center, radius)`` is a disk advected by ``v(t, x)``. The volume
    is a polygon mesh with n rings, moved by Heun's method; the left side
    is a centred difference of the mesh integral, the right side the
    centroid rule on the same mesh. Derivatives of ``f`` are centred
    differences unless ``df_dt``/``grad_f`` are given.
    """
    center, radius = V0
    P = disk_mesh(center, radius, n)
    if dt is None:
        dt = 0.5 * radius / n
    steps = max(2, int(np.ceil(T / dt)))
    dt = T / steps
    if df_dt is None:
        df_dt = lambda t, x: (f(t + eps, x) - f(t - eps, x)) / (2 * eps)
    if grad_f is None:
        def grad_f(t, x):
            e1 = np.array([eps, 0.0])
            e2 = np.array([0.0, eps])
            return np.stack([(f(t, x + e1) - f(t, x - e1)) / (2 * eps),
                             (f(t, x + e2) - f(t, x - e2)) / (2 * eps)], axis=-1)

    integrals, rhs = [], []
    t = 0.0
    for k in range(steps + 1):
        A, c = polygon_quadrature(P)
        integrals.append(float(np.sum(A * f(t, c))))
        rate = df_dt(t, c) + np.sum(v(t, c) * grad_f(t, c), axis=-1)
        rhs.append(float(np.sum(A * rate)))
        if k < steps:
            P = _heun_points(v, t, P, dt)
            t = (k + 1) * dt
    I = np.array(integrals)
    lhs = (I[2:] - I[:-2]) / (2 * dt)
    defect = np.abs(lhs - np.array(rhs[1:-1]))
    if return_series:
        return float(defect.max()), dt * np.arange(1, steps), lhs, np.array(rhs[1:-1])
    return float(defect.max())


def rotating_disk_case(n, omega=1.0, T=1.0, center=(0.5, 0.2), radius=0.3, cfl=0.5):
    """Defect for f = x1 on an off-centre disk carried by rigid rotation; dt ~ h."""
    f = lambda t, x: x[..., 0]
    v = lambda t, x: omega * np.stack([-x[..., 1], x[..., 0]], axis=-1)
    h = radius / n
    return reynolds_check(f, v, (center, radius), T, n=n, dt=cfl * h,
                          df_dt=lambda t, x: np.zeros(x.shape[:-1]),
                          grad_f=lambda t, x: np.broadcast_to([1.0, 0.0], x.shape))


# ------------------------------------------------------------- weak-strong


@dataclass(frozen=True)
class PairSnapshot:
    """States of the perturbed run (1) and the reference run (2) at time t."""

    t: float
    flow1: object
    rigid1: object
    atlas1: TransformAtlas
    flow2: object
    rigid2: object
    atlas2: TransformAtlas


def run_pair(cfg: SimConfig, delta, t_end=None, sample_every=1, dt=None):
    """Step the reference run and the run perturbed by ``delta`` in lockstep.

    Both runs use the same fixed dt (the stability limit of the reference
    initial state times ``cfg.cfl``, or ``dt``) so the sample times match.
    Returns the list of PairSnapshot at t = 0 and every ``sample_every`` steps.
    """
    from .solver import initial_triple, stable_dt, step

    t_end = cfg.t_end if t_end is None else t_end
    s2 = initial_triple(cfg.with_(perturbation=0.0))
    s1 = initial_triple(cfg.with_(perturbation=float(delta)))
    if dt is None:
        dt = 0.8 * cfg.cfl * stable_dt(s2[0].U.values, s2[2], cfg, s2[2].grid)
    steps = max(1, int(np.ceil(t_end / dt - 1e-9))) if t_end > 0 else 0
    dt = t_end / steps if steps else dt
    c1 = cfg.with_(perturbation=float(delta))
    out = [PairSnapshot(0.0, *s1, *s2)]
    for k in range(1, steps + 1):
        s1 = step(*s1, c1, dt=dt)
        s2 = step(*s2, cfg, dt=dt)
        if k % sample_every == 0 or k == steps:
            out.append(PairSnapshot(s2[0].t, *s1, *s2))
    return out


def pair_gap(snap: PairSnapshot, mass, inertia):
    """(gap_L2, |a1 - A2|, |omega1 - Omega2|, ||U2||_L4) with run 2 pulled into run 1's frame.

    The L2 gap covers the whole container: the fluid part plus the rigid
    parts, which integrate to m |a1 - A2|^2 + J (omega1 - Omega2)^2.
    """
    from .transform import transform_strong_solution

    a1, a2 = snap.atlas1, snap.atlas2
    tr = transform_strong_solution(snap.flow2.U.values, snap.flow2.P.values,
                                   snap.rigid1, snap.rigid2, a1, a2)
    grid = a1.grid
    u1 = physical_velocity(snap.flow1.U.values, a1)
    d = u1 - tr.U
    fluid = float(grid.integrate(np.sum(d * d, axis=0)))
    da = snap.rigid1.a - tr.A2
    dw = float(snap.rigid1.omega - tr.Omega2)
    body = mass * float(da @ da) + inertia * dw * dw
    l4 = float(grid.integrate(np.sum(tr.U * tr.U, axis=0) ** 2)) ** 0.25
    return np.sqrt(fluid + body), float(np.linalg.norm(da)), abs(dw), l4


def transformed_residual(snap: PairSnapshot, mu):
    """L2 norm over run 1's fluid domain of the pulled-back residual.

    With both runs on the same reference annulus the pulled-back residual
    mu (L - Lap) U2 - M U2 - N~ U2 - (G - grad) P2 equals, in run 1's
    reference coordinates, the difference of the two runs' transformed
    right-hand sides applied to run 2's reference fields.
    """
    from .transform import op_G

    a1, a2 = snap.atlas1, snap.atlas2
    U = snap.flow2.U.values
    P = snap.flow2.P.values
    lo, hi = snap.flow2.U.ghost_lo, snap.flow2.U.ghost_hi
    r = (a2.transformed_rhs(U, mu, lo, hi) - op_G(P, a2)) - (a1.transformed_rhs(U, mu, lo, hi) - op_G(P, a1))
    return float(np.sqrt(a1.grid.integrate(np.einsum("ijxy,ixy,jxy->xy", a1.g_lo, r, r))))


def map_deviation(snap: PairSnapshot):
    """W^{1,inf} distance of the composed map X~2 = X2 o Y1 from the identity."""
    a1, a2 = snap.atlas1, snap.atlas2
    d0 = float(np.max(np.linalg.norm(a2.X - a1.X, axis=0)))
    J = np.einsum("ikxy,kjxy->ijxy", a2.X_jac, a1.Y_jac) - np.eye(2)[:, :, None, None]
    return d0 + float(np.max(np.abs(J)))


@dataclass
class GapReport:
    times: np.ndarray
    gap_L2: np.ndarray
    gap_a: np.ndarray
    gap_omega: np.ndarray
    gronwall_integrand: np.ndarray
    fitted_C: float
    residual_norm: np.ndarray
    integrand_alt: np.ndarray = None
    fitted_C_alt: float = float("nan")
    bound: np.ndarray = None
    map_dev: np.ndarray = None
    delta: float = 0.0

    def cumulative(self, alt=False):
        w = self.integrand_alt if alt else self.gronwall_integrand
        return _cumtrapz(w, self.times)

    def gronwall_holds(self, alt=False, rtol=1e-9):
        """gap^2(t) <= gap^2(0) + C int_0^t integrand at every sampled time."""
        C = self.fitted_C_alt if alt else self.fitted_C
        lhs = self.gap_L2**2
        rhs = lhs[0] + C * self.cumulative(alt)
        return bool(np.all(lhs <= rhs * (1 + rtol) + 1e-300))

    def rows(self):
        return [(float(t), float(g), float(a), float(w), float(i)) for t, g, a, w, i in zip(
            self.times, self.gap_L2, self.gap_a, self.gap_omega, self.gronwall_integrand)]


def _cumtrapz(y, x):
    y, x = np.asarray(y, float), np.asarray(x, float)
    out = np.zeros_like(y)
    if len(y) > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def fit_gronwall_constant(gap, cum):
    """Least-squares C in gap^2(t) ~ C int_0^t integrand over sampled t > 0."""
    m = cum > 0
    if not np.any(m):
        return 0.0
    g2 = np.asarray(gap)[m] ** 2
    c = np.asarray(cum)[m]
    return float(np.dot(g2, c) / np.dot(c, c))


def gap_report(snaps, cfg: SimConfig, delta=0.0) -> GapReport:
    from .solver import inertia_for

    J = inertia_for(cfg).J
    rows = np.array([pair_gap(s, cfg.body_mass, J) for s in snaps])
    times = np.array([s.t for s in snaps])
    gap, ga, gw, l4 = rows.T
    integrand = gap**2 * (1 + l4**2 + l4**8)
    integrand_alt = gap**2 * (1 + l4**4 + l4**8)
    res = np.array([transformed_residual(s, cfg.mu) for s in snaps])
    mdev = np.array([map_deviation(s) for s in snaps])
    bound = np.sqrt(_cumtrapz(ga**2, times)) + np.sqrt(_cumtrapz(gw**2, times))
    rep = GapReport(times, gap, ga, gw, integrand, 0.0, res, integrand_alt, float("nan"),
                    bound, mdev, float(delta))
    rep.fitted_C = fit_gronwall_constant(gap, rep.cumulative())
    rep.fitted_C_alt = fit_gronwall_constant(gap, rep.cumulative(alt=True))
    return rep


def weak_strong_experiment(cfg: SimConfig, delta, t_end=None, sample_every=1, dt=None) -> GapReport:
    """Perturbed-vs-reference run pair, compared in the perturbed run's frame."""
    snaps = run_pair(cfg, delta, t_end, sample_every, dt)
    return gap_report(snaps, cfg, delta)


@dataclass
class ResidualReport:
    times: np.ndarray
    residual: np.ndarray
    bound: np.ndarray
    ratio: np.ndarray
    map_dev: np.ndarray
    map_ratio: np.ndarray

    @property
    def max_ratio(self):
        r = self.ratio[np.isfinite(self.ratio)]
        return float(r.max()) if r.size else 0.0


def residual_estimate_check(report_or_snaps, cfg: SimConfig = None) -> ResidualReport:
    """Residual of the transformed reference solution against the body-velocity bound.

    Accepts a GapReport or a list of PairSnapshot (then ``cfg`` is needed).
    Ratios are reported where the bound is positive.
    """
    rep = report_or_snaps
    if not isinstance(rep, GapReport):
        rep = gap_report(rep, cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = rep.bound > 0
        ratio = np.where(pos, rep.residual_norm / np.where(pos, rep.bound, 1), np.nan)
        mratio = np.where(pos, rep.map_dev / np.where(pos, rep.bound, 1), np.nan)
    return ResidualReport(rep.times, rep.residual_norm, rep.bound, ratio, rep.map_dev, mratio)


def sweep_slope(deltas, sup_gaps):
    return float(np.polyfit(np.log(deltas), np.log(sup_gaps), 1)[0])
