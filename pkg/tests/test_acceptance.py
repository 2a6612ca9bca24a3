"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary)
before asserting.
"""

import numpy as np
import pytest
import sympy as sp

from slipfsi import io
from slipfsi import solver as S
from slipfsi.config import SimConfig
from slipfsi.grid import AnnulusGrid
from slipfsi.kinematics import RigidState, check_rotation, hat, relative_angular_velocity, rotation2d, \
    rotation_about, step_rigid, vee
from slipfsi.transform import atlas_from_map, op_G, op_L, op_M, op_conv, rigid_atlas
from slipfsi.verification import (
    EnergyLedger,
    energy_update,
    refinement_slope,
    residual_estimate_check,
    rotating_disk_case,
    sweep_slope,
    transform_identity_suite,
    weak_strong_experiment,
)

from conftest import l2, record, slope, sym_eval

RS, RO = 1 / np.sqrt(np.pi), 1.5


# ---------------------------------------------------------------- 1


def test_c01_transform_identities():
    rep = transform_identity_suite(AnnulusGrid(32, 64, RS, RO), seed=0)
    worst = {k: v for k, (v, _, _) in rep.items()}
    ok = all(p for _, _, p in rep.values())
    record(1, "transform identities", ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


# ---------------------------------------------------------------- 2

Y1, Y2, X1, X2 = sp.symbols("y1 y2 x1 x2", real=True)
V = [sp.sin(X1) * X2, sp.cos(X2) * X1**2 + X1]
LAPV = [sp.diff(V[i], X1, 2) + sp.diff(V[i], X2, 2) for i in range(2)]
CONV = [sum(V[j] * sp.diff(V[i], xx) for j, xx in enumerate((X1, X2))) for i in range(2)]
PRES = sp.sin(X1) * sp.cos(2 * X2)
GRADP = [sp.diff(PRES, X1), sp.diff(PRES, X2)]


def _twist_map():
    # radial twist followed by a rotation and a translation
    r = sp.sqrt(Y1**2 + Y2**2)
    phi = 0.3 * sp.sin(sp.pi * (r - RS) / (RO - RS)) ** 2 + 0.4
    c, s = sp.cos(phi), sp.sin(phi)
    X = [c * Y1 - s * Y2 + 0.1, s * Y1 + c * Y2 - 0.05]
    J = [[sp.diff(X[k], v) for v in (Y1, Y2)] for k in range(2)]
    H = [[[sp.diff(X[l], a, b) for b in (Y1, Y2)] for a in (Y1, Y2)] for l in range(2)]
    return X, J, H


def test_c02_pullback_oracle():
    X, J, H = _twist_map()
    errs = {"L": [], "N": [], "G": [], "M": []}
    hs = []
    f = [sp.lambdify((X1, X2), e, "numpy") for e in V]
    w = 0.9
    for n in (32, 64, 128):
        g = AnnulusGrid(n, n, RS, RO)
        ys = (*g.xy, (Y1, Y2))
        A = atlas_from_map(g, sym_eval(X, *ys), sym_eval(J, *ys), sym_eval(H, *ys))
        pull = lambda e: np.einsum("ikxy,kxy->ixy", A.Y_jac, sym_eval(e, A.X[0], A.X[1], (X1, X2)))
        u = pull(V)
        errs["L"].append(l2(g, op_L(u, A) - pull(LAPV)))
        errs["N"].append(l2(g, op_conv(u, A) - pull(CONV)))
        errs["G"].append(l2(g, op_G(sym_eval(PRES, A.X[0], A.X[1], (X1, X2)), A) - pull(GRADP)))
        # steady field seen through a rotating rigid map: d_t u + M u = 0
        dt, us = 1e-4, []
        for t in (0.5 - dt, 0.5, 0.5 + dt):
            R = rigid_atlas(g, RigidState(t, [0.1, 0.0], rotation2d(w * t), [0.0, 0.0], w))
            v = np.stack([np.broadcast_to(fi(R.X[0], R.X[1]), g.shape) for fi in f])
            us.append(np.einsum("ikxy,kxy->ixy", R.Y_jac, v))
            if t == 0.5:
                R0 = R
        errs["M"].append(l2(g, (us[2] - us[0]) / (2 * dt) + op_M(us[1], R0)))
        hs.append(g.hr)
    slopes = {k: slope(hs, e) for k, e in errs.items()}
    ok = min(slopes.values()) >= 1.8
    record(2, "pullback oracle slope", ok, " ".join(f"{k}={s:.2f}" for k, s in slopes.items()))
    assert ok


# ---------------------------------------------------------------- 3


def test_c03_rotation_group_and_kinematics():
    rng = np.random.default_rng(1)
    s3 = RigidState.initial([0.0, 0.0, 0.0])
    s2 = RigidState.initial([0.0, 0.0])
    worst = 0.0
    for k in range(10_000):
        w = rng.normal(size=3) * 3
        s3 = step_rigid(s3, np.zeros(3), w, 0.01)
        s2 = step_rigid(s2, np.zeros(2), float(w[0]), 0.01)
        worst = max(worst, np.linalg.norm(s3.Q @ s3.Q.T - np.eye(3)), np.linalg.norm(s2.Q @ s2.Q.T - np.eye(2)))
    ok_orth = worst <= 1e-10
    # omega(t) = cos t, a(t) = (cos t, -sin 2t): angle sin t, q = (sin t, (cos 2t - 1) / 2)
    errs, dts = [], []
    for dt in (0.02, 0.01, 0.005, 0.0025):
        s = RigidState.initial([0.0, 0.0])
        T = 2.0
        for k in range(round(T / dt)):
            tm = (k + 0.5) * dt
            s = step_rigid(s, [np.cos(tm), -np.sin(2 * tm)], np.cos(tm), dt)
        e = max(np.abs(s.Q - rotation2d(np.sin(T))).max(),
                np.abs(s.q - [np.sin(T), (np.cos(2 * T) - 1) / 2]).max())
        errs.append(e)
        dts.append(dt)
    sl = slope(dts, errs)
    ok = ok_orth and sl >= 1.8
    record(3, "SO(N) and kinematics", ok, f"max|QQ^T-I|={worst:.1e} slope={sl:.2f}")
    assert ok


# ---------------------------------------------------------------- 4


def _q3(t):
    """Two closed-form 3D attitudes with their spins P = Q' Q^T."""
    n1, n2, n3 = np.array([1.0, 2, 2]) / 3, np.array([0.0, 0, 1]), np.array([1.0, 0, 0])
    Q1 = rotation_about(n1, 0.7 * t)
    P1 = 0.7 * hat(n1)
    A, B = rotation_about(n2, t**2), rotation_about(n3, np.sin(t))
    Q2 = A @ B
    P2 = 2 * t * hat(n2) + A @ (np.cos(t) * hat(n3)) @ A.T
    return Q1, P1, Q2, P2


def test_c04_relative_angular_velocity():
    err2 = 0.0
    rng = np.random.default_rng(4)
    for _ in range(200):
        a1, a2, w1, w2 = rng.uniform(-5, 5, 4)
        wt = relative_angular_velocity(rotation2d(a1), hat(w1), rotation2d(a2), hat(w2))
        err2 = max(err2, abs(float(np.asarray(wt).reshape(-1)[0]) - (w2 - w1)))
    err3 = 0.0
    e = 1e-3
    for t in np.linspace(0.1, 2.0, 20):
        Q1, P1, Q2, P2 = _q3(t)
        Q = lambda s: _q3(s)[2] @ _q3(s)[0].T
        dQ = (-Q(t + 2 * e) + 8 * Q(t + e) - 8 * Q(t - e) + Q(t - 2 * e)) / (12 * e)
        oracle = vee(0.5 * (Q(t).T @ dQ - dQ.T @ Q(t)))
        err3 = max(err3, np.abs(relative_angular_velocity(Q1, P1, Q2, P2) - oracle).max())
        # the same identity in the form Omega2 - omega1
        om1, om2 = vee(P1), vee(P2)
        err3 = max(err3, np.abs(relative_angular_velocity(Q1, P1, Q2, P2) - (Q(t).T @ om2 - om1)).max())
    ok = err2 <= 1e-14 and err3 <= 1e-10
    record(4, "relative angular velocity", ok, f"2D err={err2:.1e} 3D err={err3:.1e}")
    assert ok


# ---------------------------------------------------------------- 5


def _energy_levels(cfg):
    out = []
    for n in (16, 32, 64):
        c = cfg.with_(n_r=n, n_theta=2 * n)
        flow, rig, at = S.initial_triple(c)
        led = [EnergyLedger.start(flow, rig, at, c)]
        S.run(c, state=(flow, rig, at), callback=lambda f, r, a, dt: led.append(energy_update(f, r, led[-1], dt, a)))
        d = np.array([row[4] for row in led[-1].history]) / led[-1].E0
        out.append((1.0 / (n - 1), float(d.max()), float(np.abs(d).max())))
    return out


@pytest.mark.slow
@pytest.mark.parametrize("scenario", ["pinned swirl", "free perturbed"])
def test_c05_energy_inequality(scenario):
    if scenario == "pinned swirl":
        cfg = SimConfig(body_motion="pinned", initial="swirl", t_end=0.5)
    else:
        cfg = SimConfig(body_motion="free", initial="swirl", perturbation=0.2, t_end=0.5)
    lv = _energy_levels(cfg)
    sl = refinement_slope([h for h, _, _ in lv], [a for _, _, a in lv])
    fine = lv[-1][1]
    # the signed defect is what the inequality bounds; |defect| is checked too
    ok = fine <= 1e-3 and lv[-1][2] <= 1e-3 and sl >= 1.0
    record(5, f"energy ({scenario})", ok,
           f"64x128 max defect/E0={fine:.2e} |defect| {', '.join(f'{a:.1e}' for _, _, a in lv)} slope={sl:.2f}")
    assert ok


# ---------------------------------------------------------------- 6


def test_c06_reynolds_transport():
    ns = (16, 32, 64)
    d = [rotating_disk_case(n) for n in ns]
    sl = refinement_slope([1 / n for n in ns], d)
    ok = sl >= 1.8
    record(6, "Reynolds transport", ok, f"defects {', '.join(f'{x:.1e}' for x in d)} slope={sl:.2f}")
    assert ok


# ---------------------------------------------------------------- 7


def _couette(mu, beta, om):
    M = np.array([[RO, 1 / RO], [beta * RS, 2 * mu / RS**2 + beta / RS]])
    A, B = np.linalg.solve(M, [0.0, beta * om * RS])

    def u0(z):
        r = np.hypot(z[..., 0], z[..., 1])
        ut = A * r + B / r
        return np.stack([-ut * z[..., 1] / r, ut * z[..., 0] / r], -1)

    return u0


def test_c07_slip_condition():
    # normal residual at every step of a free-body run
    cfg = SimConfig(n_r=33, n_theta=64, initial="swirl", perturbation=0.2, t_end=0.2)
    info = []
    st = S.initial_triple(cfg)
    while st[0].t < cfg.t_end - 1e-12:
        h = min(cfg.cfl * S.stable_dt(st[0].U.values, st[2], cfg, st[2].grid), cfg.t_end - st[0].t)
        st = S.step(*st, cfg, dt=h, info=info)
    worst_n = max(i.normal_residual for i in info)
    # tangential residual of the Couette-with-slip steady state
    mu, beta, om = 0.1, 1.0, 1.0
    u0 = _couette(mu, beta, om)
    tang, hs = [], []
    for n in (16, 32, 64):
        c = SimConfig(n_r=n + 1, n_theta=2 * n, body_motion="pinned", omega0=om, mu=mu, beta=beta, initial="rest")
        st = S.initial_triple(c, u0)
        flow, rig, at = S.run(c, t_end=0.1, state=st)
        tang.append(S.slip_residuals(flow.U.values, S.surface_velocity(rig, at), at.grid, mu, beta)[1])
        hs.append(at.grid.hr)
    sl = slope(hs, tang)
    # large-beta limit against a no-slip run
    gaps, bnd = [], []
    for n in (16, 32):
        base = SimConfig(n_r=n + 1, n_theta=2 * n, body_motion="pinned", omega0=1.0, initial="rest")
        a = S.run(base.with_(beta=1e6), t_end=0.1)[0].U.values
        b = S.run(base.with_(no_slip=True), t_end=0.1)[0].U.values
        gaps.append(float(np.abs(a - b).max()))
        bnd.append(1e-6 + (RO - RS) / n)
    ok_n = worst_n <= 1e-10
    ok_t = sl >= 1.0
    ok_b = all(gp <= bd for gp, bd in zip(gaps, bnd)) and gaps[1] < gaps[0]
    ok = ok_n and ok_t and ok_b
    record(7, "slip condition", ok,
           f"normal={worst_n:.1e} tangential slope={sl:.2f} beta=1e6 vs no-slip {gaps[0]:.1e}, {gaps[1]:.1e}")
    assert ok


# ---------------------------------------------------------------- 8, 9

WS_CFG = SimConfig(n_r=17, n_theta=32, initial="swirl", t_end=0.3)
DELTAS = (1e-2, 5e-3, 2.5e-3)


@pytest.fixture(scope="module")
def sweep():
    return {d: weak_strong_experiment(WS_CFG, d, sample_every=4) for d in (0.0, *DELTAS)}


@pytest.mark.slow
def test_c08_weak_strong_gap(sweep):
    pos = [sweep[d] for d in DELTAS]
    sl = sweep_slope(DELTAS, [r.gap_L2.max() for r in pos])
    gron = all(r.gronwall_holds() for r in pos)
    C = np.array([r.fitted_C for r in pos])
    spread = float(np.max(np.abs(C / np.median(C) - 1)))
    zero = float(sweep[0.0].gap_L2.max())
    ok = abs(sl - 1) <= 0.2 and gron and spread <= 0.5 and zero <= 1e-12
    record(8, "weak-strong gap", ok,
           f"slope={sl:.3f} gronwall={gron} C={', '.join(f'{c:.3f}' for c in C)} delta0 gap={zero:.1e}")
    assert ok


@pytest.mark.slow
def test_c09_residual_ratio(sweep):
    r_hi = residual_estimate_check(sweep[DELTAS[0]]).ratio
    r_lo = residual_estimate_check(sweep[DELTAS[-1]]).ratio
    m = np.isfinite(r_hi) & (r_hi > 0) & np.isfinite(r_lo)
    spread = float(np.max(np.abs(r_lo[m] / r_hi[m] - 1)))
    bounded = float(np.max(np.r_[r_hi[m], r_lo[m]]))
    zero = float(np.max(residual_estimate_check(sweep[0.0]).residual))
    ok = m.any() and spread <= 0.3 and np.isfinite(bounded) and zero == 0.0
    record(9, "residual ratio", ok, f"max ratio={bounded:.3f} spread over 4x delta={spread:.1e} identical-run residual={zero:.1e}")
    assert ok


# ---------------------------------------------------------------- 10


def test_c10_reproducibility(tmp_path):
    cfg = SimConfig(n_r=17, n_theta=32, perturbation=0.2, seed=7, t_end=0.1, dt=0.01, dump_every=5)
    io.simulate(cfg, tmp_path / "a")
    io.simulate(cfg, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in names)
    # split run: stop at 0.05, checkpoint, restore, continue to 0.1
    st, _ = io.simulate(cfg, tmp_path / "p1", t_end=0.05)
    io.checkpoint(st, tmp_path / "mid.ckpt", cfg)
    back, c2 = io.restore(tmp_path / "mid.ckpt", with_config=True)
    final, _ = io.simulate(c2, tmp_path / "p2", state=back, t_end=0.1)
    full = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()
    p1 = (tmp_path / "p1" / "trajectory.csv").read_text().splitlines()
    p2 = (tmp_path / "p2" / "trajectory.csv").read_text().splitlines()
    split_traj = full == p1 + p2[2:]
    io.checkpoint(final, tmp_path / "split.ckpt", cfg)
    cont, _ = io.simulate(cfg, tmp_path / "c")
    io.checkpoint(cont, tmp_path / "cont.ckpt", cfg)
    split_state = (tmp_path / "split.ckpt").read_bytes() == (tmp_path / "cont.ckpt").read_bytes()
    ok = same and split_traj and split_state
    record(10, "reproducibility", ok,
           f"{len(names)} files identical={same} split trajectory={split_traj} split checkpoint={split_state}")
    assert ok
