"""Moving-domain machinery on the reference annulus.

A solenoidal extension field ``Lambda`` of the rigid velocity generates a
volume-preserving flow map ``X(t, y)``. The atlas stores, per reference
node, the map, its Jacobian and Hessian, the metric tensors, Christoffel
symbols and the precomputed coefficients of the transformed operators

    (L u)_i = d_j(g^jk d_k u_i) + 2 g^kl G^i_jk d_l u_j
              + (d_k(g^kl G^i_jl) + g^kl G^m_jl G^i_km) u_j
    (N u)_i = u_j d_j u_i + G^i_jk u_j u_k
    (M u)_i = Ydot_j d_j u_i + (G^i_jk Ydot_k + Y_i,k d_j Xdot_k) u_j
    (G p)_i = g^ij d_j p

Index conventions: ``X_jac[k, i] = dX_k/dy_i``, ``Y_jac[i, k] = dY_i/dx_k``,
``X_hess[l, i, j] = d2 X_l / dy_i dy_j``, ``christoffel[k, i, j] = G^k_ij``.
The reference body is centred at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    ExtrapolationError,
    InversionError,
    InvalidInputError,
    MapBlowupError,
    ProximityError,
    ShapeMismatchError,
    UnsupportedDimensionError,
)
from .grid import AnnulusGrid, cart_gradient, cart_hessian, locate, pad_r
from .kinematics import RigidState, hat, rigid_velocity, step_rigid

# ------------------------------------------------------------ extension field


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    s = x**3 * (10 - 15 * x + 6 * x * x)
    s1 = 30 * x * x * (x - 1) ** 2
    s2 = 60 * x * (x - 1) * (2 * x - 1)
    return s, s1, s2


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


@dataclass(frozen=True)
class ExtensionField:
    """Divergence-free extension of the body's rigid velocity.

    ``psi = chi * psi_rigid`` with ``Lambda = (d2 psi, -d1 psi)``. The
    cutoff ``chi = 1 - s(xi)`` uses the quintic smoothstep ``s`` of the
    blended coordinate ``xi = (d_b - c) / (d_b + d_w - 2c)``, ``c = delta0/4``,
    where ``d_b`` is the distance to the body and ``d_w`` a smooth distance to
    the wall. So ``chi = 1`` within ``c`` of the body and ``0`` within ``c`` of
    the wall.
    """

    body_state: RigidState
    r_inner: float
    r_outer: float
    delta0: float
    wall_smoothing: float = field(default=None)

    def __post_init__(self):
        if self.wall_smoothing is None:
            object.__setattr__(self, "wall_smoothing", 0.5 * self.r_inner)

    @property
    def t(self):
        return self.body_state.t

    def _wall_distance(self, x):
        l2 = self.wall_smoothing**2
        R = np.sqrt(np.sum(x * x, axis=-1) + l2)
        dw = np.sqrt(self.r_outer**2 + l2) - R
        grad = -x / R[..., None]
        eye = np.eye(2)
        hess = -(eye - _outer(x, x) / (R**2)[..., None, None]) / R[..., None, None]
        return dw, grad, hess

    def evaluate(self, x, with_gradient=False):
        """Lambda at points ``x`` (..., 2); optionally also dLambda_k/dx_l."""
        st = self.body_state
        x = np.asarray(x, dtype=float)
        d = x - st.q
        rho = np.maximum(np.sqrt(np.sum(d * d, axis=-1)), 1e-300)
        e = d / rho[..., None]
        c = 0.25 * self.delta0
        db = rho - self.r_inner
        dw, gw, hw = self._wall_distance(x)
        N = db - c
        D = db + dw - 2 * c
        D = np.where(np.abs(D) < 1e-14, 1e-14, D)
        xi = N / D
        s, s1, s2 = _smoothstep(xi)
        chi = 1.0 - s
        a1, a2 = st.a
        w = st.omega
        psir = a1 * d[..., 1] - a2 * d[..., 0] - 0.5 * w * (rho**2 - self.r_inner**2)
        dpsir = np.stack([-a2 - w * d[..., 0], a1 - w * d[..., 1]], axis=-1)
        dN = e
        dD = e + gw
        dxi = dN / D[..., None] - (N / D**2)[..., None] * dD
        dchi = -s1[..., None] * dxi
        dpsi = psir[..., None] * dchi + chi[..., None] * dpsir
        lam = np.stack([dpsi[..., 1], -dpsi[..., 0]], axis=-1)
        if not with_gradient:
            return lam
        eye = np.eye(2)
        hN = (eye - _outer(e, e)) / rho[..., None, None]
        hD = hN + hw
        Dx = D[..., None, None]
        Nx = N[..., None, None]
        hxi = (hN / Dx - (_outer(dN, dD) + _outer(dD, dN)) / Dx**2
               - Nx * hD / Dx**2 + 2 * Nx * _outer(dD, dD) / Dx**3)
        hchi = -s2[..., None, None] * _outer(dxi, dxi) - s1[..., None, None] * hxi
        hpsi = (psir[..., None, None] * hchi + _outer(dchi, dpsir) + _outer(dpsir, dchi)
                - (chi * w)[..., None, None] * eye)
        grad = np.stack([hpsi[..., 1, :], -hpsi[..., 0, :]], axis=-2)
        return lam, grad

    def __call__(self, x):
        return self.evaluate(x)


def build_extension(state: RigidState, geometry, delta0) -> ExtensionField:
    """Extension field for ``state``; ``geometry`` is (r_inner, r_outer) or a config."""
    if state.dim != 2:
        raise UnsupportedDimensionError("the extension field is built in 2D only")
    if hasattr(geometry, "r_inner"):
        r_in, r_out = geometry.r_inner, geometry.r_outer
    else:
        r_in, r_out = geometry
    if delta0 <= 0:
        raise InvalidInputError("delta0 must be positive")
    gap = r_out - np.linalg.norm(state.q) - r_in
    if gap <= delta0:
        raise ProximityError(
            f"body-wall distance {gap:.6g} is not above the safety distance {delta0:.6g}"
        )
    return ExtensionField(state, r_in, r_out, delta0)


# ------------------------------------------------------------------ atlas


@dataclass
class TransformAtlas:
    grid: AnnulusGrid
    t: float
    X: np.ndarray
    X_jac: np.ndarray
    X_hess: np.ndarray
    Xdot: np.ndarray | None = None
    dXdot: np.ndarray | None = None
    body_state: RigidState | None = None
    delta0: float | None = None
    flat: bool = False
    Y_jac: np.ndarray = field(init=False)
    g_lo: np.ndarray = field(init=False)
    g_up: np.ndarray = field(init=False)
    christoffel: np.ndarray = field(init=False)
    Ydot: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        shp = self.grid.shape
        if self.X.shape != (2, *shp) or self.X_jac.shape != (2, 2, *shp):
            raise ShapeMismatchError("atlas arrays do not match the grid")
        J = np.moveaxis(self.X_jac, (0, 1), (-2, -1))
        Yj = np.linalg.inv(J)
        self.Y_jac = np.ascontiguousarray(np.moveaxis(Yj, (-2, -1), (0, 1)))
        self.g_lo = np.einsum("kixy,kjxy->ijxy", self.X_jac, self.X_jac)
        self.g_up = np.einsum("ikxy,jkxy->ijxy", self.Y_jac, self.Y_jac)
        gam = np.einsum("klxy,lijxy->kijxy", self.Y_jac, self.X_hess)
        self.christoffel = 0.5 * (gam + np.swapaxes(gam, 1, 2))
        if self.Xdot is not None:
            self.Ydot = -np.einsum("ikxy,kxy->ixy", self.Y_jac, self.Xdot)
        self._coefficients()

    # coefficient arrays ---------------------------------------------------

    def _coefficients(self):
        g = self.grid
        gup, Gam = self.g_up, self.christoffel
        shp = g.shape
        if self.flat:
            z2 = np.zeros((2, *shp))
            self.dg = z2
            self.Bc = np.zeros((2, 2, 2, *shp))
            self.Cc = np.zeros((2, 2, *shp))
        else:
            # dg[b] = d_a g^ab
            dg = np.zeros((2, *shp))
            for a in range(2):
                for b in range(2):
                    dg[b] += cart_gradient(gup[a, b], g)[a]
            self.dg = dg
            self.Bc = 2 * np.einsum("klxy,ijkxy->ijlxy", gup, Gam)
            A = np.einsum("klxy,ijlxy->kijxy", gup, Gam)  # A[k, i, j] = g^kl G^i_jl
            Cc = np.einsum("klxy,mjlxy,ikmxy->ijxy", gup, Gam, Gam)
            for k in range(2):
                for i in range(2):
                    for j in range(2):
                        Cc[i, j] += cart_gradient(A[k, i, j], g)[k]
            self.Cc = Cc
        if self.Xdot is not None:
            dXd = np.zeros((2, 2, *shp)) if self.dXdot is None else self.dXdot
            self.Em = (np.einsum("ijkxy,kxy->ijxy", Gam, self.Ydot)
                       + np.einsum("ikxy,kjxy->ijxy", self.Y_jac, dXd))
        else:
            self.Em = None

    # diagnostics ----------------------------------------------------------

    @property
    def has_time_derivatives(self):
        return self.Xdot is not None

    def det(self):
        J = self.X_jac
        return J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]

    def metric_identity_error(self):
        prod = np.einsum("ijxy,jkxy->ikxy", self.g_up, self.g_lo)
        return float(np.max(np.abs(prod - np.eye(2)[:, :, None, None])))

    def christoffel_from_metric(self, g_lo_grad=None):
        """Gamma^k_ij = g^kl (d_j g_il + d_i g_jl - d_l g_ij) / 2 by differences of g_lo."""
        if g_lo_grad is None:
            g_lo_grad = np.stack([np.stack([cart_gradient(self.g_lo[i, j], self.grid)
                                            for j in range(2)]) for i in range(2)])
        dg = g_lo_grad  # dg[i, j, l] = d_l g_ij
        t = (np.einsum("iljxy->ijlxy", dg) + np.einsum("jlixy->ijlxy", dg)
             - np.einsum("ijlxy->ijlxy", dg))
        return 0.5 * np.einsum("klxy,ijlxy->kijxy", self.g_up, t)

    def max_metric_deviation(self):
        return float(np.max(np.abs(self.g_up - np.eye(2)[:, :, None, None])))

    def transformed_rhs(self, U, mu, lo=None, hi=None):
        """-N(U) - M(U) + mu L(U) via the compiled kernel when available."""
        if self.Em is None:
            raise InvalidInputError("atlas has no time-derivative samples")
        g = self.grid
        Up = pad_r(U, lo, hi)
        return _kernels.transformed_rhs(
            np.ascontiguousarray(Up), g.hr, g.d1_den, g.d2_den, g.inv_r, g.cos, g.sin,
            self.g_up, self.dg, self.Bc, self.Cc, self.christoffel, self.Ydot, self.Em, mu)


def flat_atlas(grid: AnnulusGrid, t=0.0) -> TransformAtlas:
    shp = grid.shape
    I = np.broadcast_to(np.eye(2)[:, :, None, None], (2, 2, *shp)).copy()
    return TransformAtlas(grid, t, grid.xy.copy(), I, np.zeros((2, 2, 2, *shp)),
                          np.zeros((2, *shp)), np.zeros((2, 2, *shp)), flat=True)


def rigid_atlas(grid: AnnulusGrid, state: RigidState, q0=(0.0, 0.0), delta0=None) -> TransformAtlas:
    """Closed-form atlas of the isometry y -> q + Q (y - q0)."""
    shp = grid.shape
    q0 = np.asarray(q0, dtype=float)
    y = np.moveaxis(grid.xy, 0, -1)
    x = state.q + (y - q0) @ state.Q.T
    X = np.moveaxis(x, -1, 0).copy()
    J = np.broadcast_to(state.Q[:, :, None, None], (2, 2, *shp)).copy()
    Xd = np.moveaxis(rigid_velocity(state, x), -1, 0).copy()
    dXd = np.broadcast_to((hat(state.omega) @ state.Q)[:, :, None, None], (2, 2, *shp)).copy()
    return TransformAtlas(grid, state.t, X, J, np.zeros((2, 2, 2, *shp)), Xd, dXd,
                          body_state=state, delta0=delta0, flat=True)


def atlas_from_map(grid: AnnulusGrid, X, J, H, Xdot=None, dXdot=None, t=0.0) -> TransformAtlas:
    """Atlas from closed-form map data given as callables of points (..., 2) or arrays."""
    y = np.moveaxis(grid.xy, 0, -1)

    def ev(f, nd):
        if f is None:
            return None
        v = f(y) if callable(f) else np.asarray(f, dtype=float)
        if callable(f):
            v = np.moveaxis(v, list(range(-nd, 0)), list(range(nd)))
        return np.ascontiguousarray(v)

    return TransformAtlas(grid, t, ev(X, 1), ev(J, 2), ev(H, 3), ev(Xdot, 1), ev(dXdot, 2))


def atlas_from_samples(grid: AnnulusGrid, X, Xdot=None, dXdot=None, t=0.0,
                       body_state=None, delta0=None) -> TransformAtlas:
    """Atlas from sampled map values; Jacobian and Hessian by differences.

    With ``body_state`` and ``delta0`` given, nodes within ``delta0/4`` of
    the reference body or wall get the exact rigid or identity values.
    """
    X = np.asarray(X, dtype=float)
    J = np.stack([cart_gradient(X[k], grid) for k in range(2)])
    Hc = np.stack([cart_hessian(X[k], grid) for k in range(2)])
    H = np.stack([np.stack([Hc[:, 0], Hc[:, 1]], axis=1), np.stack([Hc[:, 1], Hc[:, 2]], axis=1)], axis=2)
    if body_state is not None and delta0 is not None:
        rig, wall = zone_masks(grid, delta0)
        Q = body_state.Q
        for k in range(2):
            for i in range(2):
                J[k, i][rig] = Q[k, i]
                J[k, i][wall] = float(k == i)
        H[:, :, :, rig] = 0.0
        H[:, :, :, wall] = 0.0
    return TransformAtlas(grid, t, X, J, H, Xdot, dXdot, body_state=body_state, delta0=delta0)


def zone_masks(grid: AnnulusGrid, delta0):
    c = 0.25 * delta0
    rig = grid.R <= grid.r_inner + c + 1e-12
    wall = grid.R >= grid.r_outer - c - 1e-12
    return rig, wall


def initial_atlas(grid: AnnulusGrid, state: RigidState, delta0) -> TransformAtlas:
    """Atlas at t = 0 (identity map) with time derivatives from the extension field."""
    fld = build_extension(state, (grid.r_inner, grid.r_outer), delta0)
    return _atlas_at(grid, grid.xy.copy(), fld, delta0)


def _atlas_at(grid, X, fld: ExtensionField, delta0, J=None):
    """Atlas at the field's time from node positions and, if given, the
    transported Jacobian (otherwise the Jacobian is differenced from X)."""
    st = fld.body_state
    rig, wall = zone_masks(grid, delta0)
    y = grid.xy
    for k in range(2):
        X[k][rig] = st.q[k] + st.Q[k, 0] * y[0][rig] + st.Q[k, 1] * y[1][rig]
        X[k][wall] = y[k][wall]
    x = np.moveaxis(X, 0, -1)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(r > grid.r_outer * (1 + 1e-12)):
        raise MapBlowupError("a flow-map node left the container")
    lam, dlam = fld.evaluate(x, with_gradient=True)
    Xdot = np.moveaxis(lam, -1, 0)
    atl = atlas_from_samples(grid, X, None, None, fld.t, st, delta0)
    Xj, Xh = atl.X_jac, atl.X_hess
    if J is not None:
        Xj = np.array(J, dtype=float)
        for k in range(2):
            for i in range(2):
                Xj[k, i][rig] = st.Q[k, i]
                Xj[k, i][wall] = float(k == i)
        # second derivatives as first differences of the transported Jacobian
        dJ = np.stack([np.stack([cart_gradient(Xj[k, i], grid) for i in range(2)]) for k in range(2)])
        Xh = 0.5 * (dJ + np.swapaxes(dJ, 1, 2))
        Xh[:, :, :, rig] = 0.0
        Xh[:, :, :, wall] = 0.0
    dXdot = np.einsum("xykl,lixy->kixy", dlam, Xj)
    return TransformAtlas(grid, fld.t, atl.X, np.ascontiguousarray(Xj), np.ascontiguousarray(Xh),
                          np.ascontiguousarray(Xdot), np.ascontiguousarray(dXdot),
                          body_state=st, delta0=delta0)


def advance_flow_map(atlas: TransformAtlas, fld: ExtensionField, dt, next_field=None) -> TransformAtlas:
    """Heun step of dX/dt = Lambda(t, X) at every node, together with the
    variational equation dJ/dt = grad Lambda(t, X) J for the Jacobian.

    ``fld`` is the extension at the current time and ``next_field`` the one
    at ``t + dt`` (defaults to ``fld``, a frozen field). Nodes in the rigid
    and wall zones are set to their exact values. Transporting J keeps
    det J = 1 up to the time error instead of the differencing error of a
    sheared map.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    nxt = fld if next_field is None else next_field
    # with no next field the body keeps its velocity over the step
    delta0 = fld.delta0
    x = np.moveaxis(atlas.X, 0, -1)
    J = np.moveaxis(atlas.X_jac, (0, 1), (-2, -1))
    k1, g1 = fld.evaluate(x, with_gradient=True)
    xs = x + dt * k1
    Js = J + dt * g1 @ J
    k2, g2 = nxt.evaluate(xs, with_gradient=True)
    xn = x + 0.5 * dt * (k1 + k2)
    Jn = J + 0.5 * dt * (g1 @ J + g2 @ Js)
    Xn = np.ascontiguousarray(np.moveaxis(xn, -1, 0))
    Jn = np.moveaxis(Jn, (-2, -1), (0, 1))
    if next_field is None:
        st = step_rigid(fld.body_state, fld.body_state.a, fld.body_state.omega, dt)
        nxt = ExtensionField(st, fld.r_inner, fld.r_outer, fld.delta0, fld.wall_smoothing)
    return _atlas_at(atlas.grid, Xn, nxt, delta0, Jn)


# --------------------------------------------------------------- operators


def _grad_vec(u, grid, lo=None, hi=None):
    """G[i, k] = d_k u_i for a vector field."""
    return np.stack([cart_gradient(u[i], grid, None if lo is None else lo[i],
                                   None if hi is None else hi[i]) for i in range(2)])


def _check(u, atlas):
    if u.shape != (2, *atlas.grid.shape):
        raise ShapeMismatchError(f"field shape {u.shape} does not match grid {atlas.grid.shape}")


def op_L(u, atlas: TransformAtlas, lo=None, hi=None):
    _check(u, atlas)
    g = atlas.grid
    out = np.zeros_like(u)
    G = _grad_vec(u, g, lo, hi)
    for i in range(2):
        H = cart_hessian(u[i], g, None if lo is None else lo[i], None if hi is None else hi[i])
        out[i] = (atlas.g_up[0, 0] * H[0] + 2 * atlas.g_up[0, 1] * H[1] + atlas.g_up[1, 1] * H[2]
                  + atlas.dg[0] * G[i, 0] + atlas.dg[1] * G[i, 1])
    out += np.einsum("ijlxy,jlxy->ixy", atlas.Bc, G)
    out += np.einsum("ijxy,jxy->ixy", atlas.Cc, u)
    return out


def op_conv(u, atlas: TransformAtlas, lo=None, hi=None, split=False):
    """N u; with ``split=True`` returns (N u, u.grad u, N~ u)."""
    _check(u, atlas)
    G = _grad_vec(u, atlas.grid, lo, hi)
    adv = np.einsum("jxy,ijxy->ixy", u, G)
    extra = np.einsum("ijkxy,jxy,kxy->ixy", atlas.christoffel, u, u)
    if split:
        return adv + extra, adv, extra
    return adv + extra


def op_M(u, atlas: TransformAtlas, lo=None, hi=None):
    _check(u, atlas)
    if atlas.Em is None:
        raise InvalidInputError("atlas has no time-derivative samples")
    G = _grad_vec(u, atlas.grid, lo, hi)
    return np.einsum("jxy,ijxy->ixy", atlas.Ydot, G) + np.einsum("ijxy,jxy->ixy", atlas.Em, u)


def op_G(p, atlas: TransformAtlas, lo=None, hi=None):
    if p.shape != atlas.grid.shape:
        raise ShapeMismatchError(f"field shape {p.shape} does not match grid {atlas.grid.shape}")
    gp = cart_gradient(p, atlas.grid, lo, hi)
    return np.einsum("ijxy,jxy->ixy", atlas.g_up, gp)


# ------------------------------------------------------------- inversion


def _base_map(atlas, y):
    """Rigid placement of the atlas' body (identity without one) and its Jacobian."""
    st = atlas.body_state
    if st is None:
        return y, np.eye(2)
    return st.q + y @ st.Q.T, st.Q


def _bilinear_map_and_derivative(atlas, y):
    """X and dX/dy from the rigid base map plus the bilinear (r, theta)
    interpolant of the remainder X - base, so rigid atlases are exact."""
    g = atlas.grid
    fr, ft = locate(g, y, tol_cells=0.5)
    r = np.hypot(y[..., 0], y[..., 1])
    th = np.arctan2(y[..., 1], y[..., 0])
    i0 = np.clip(np.floor(fr).astype(np.int64), 0, g.n_r - 2)
    jf = np.floor(ft)
    wr, wt = fr - i0, ft - jf
    j0 = np.mod(jf.astype(np.int64), g.n_theta)
    j1 = np.mod(j0 + 1, g.n_theta)
    bn, _ = _base_map(atlas, np.moveaxis(g.xy, 0, -1))
    D = atlas.X - np.moveaxis(bn, -1, 0)
    v00, v01 = D[:, i0, j0], D[:, i0, j1]
    v10, v11 = D[:, i0 + 1, j0], D[:, i0 + 1, j1]
    val = (1 - wr) * ((1 - wt) * v00 + wt * v01) + wr * ((1 - wt) * v10 + wt * v11)
    d_wr = ((1 - wt) * (v10 - v00) + wt * (v11 - v01)) / g.hr
    d_wt = ((1 - wr) * (v01 - v00) + wr * (v11 - v10)) / g.hth
    c, s = np.cos(th), np.sin(th)
    # d/dy1 = c d/dr - s/r d/dth, d/dy2 = s d/dr + c/r d/dth
    J = np.stack([c * d_wr - s / r * d_wt, s * d_wr + c / r * d_wt], axis=1)
    b, Jb = _base_map(atlas, y)
    return val + b.T, J + Jb[:, :, None]


def invert_map(atlas: TransformAtlas, x, tol=1e-12, maxiter=50):
    """Solve X(y) = x for y with Newton on the interpolated map."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = x.copy()
    st = atlas.body_state
    if st is not None:
        # start from the rigid inverse where it is closer
        yr = (x - st.q) @ st.Q
        Xa, _ = _bilinear_map_and_derivative(atlas, _clip_to_annulus(atlas.grid, y))
        Xb, _ = _bilinear_map_and_derivative(atlas, _clip_to_annulus(atlas.grid, yr))
        ea = np.linalg.norm(Xa.T - x, axis=1)
        eb = np.linalg.norm(Xb.T - x, axis=1)
        y = np.where((eb < ea)[:, None], yr, y)
    y = _clip_to_annulus(atlas.grid, y)
    err = np.inf
    for _ in range(maxiter):
        Xv, J = _bilinear_map_and_derivative(atlas, y)
        res = Xv.T - x
        err = np.max(np.linalg.norm(res, axis=1))
        if err <= tol:
            return y if len(y) > 1 else y[0]
        Jm = np.moveaxis(J, -1, 0)
        step = np.linalg.solve(Jm, res[..., None])[..., 0]
        y = _clip_to_annulus(atlas.grid, y - step)
    raise InversionError(f"map inversion did not converge in {maxiter} iterations (|X(y)-x| = {err:.3e})")


def _clip_to_annulus(grid, y):
    r = np.hypot(y[:, 0], y[:, 1])
    lo = grid.r_inner - 0.49 * grid.hr
    hi = grid.r_outer + 0.49 * grid.hr
    rc = np.clip(r, lo, hi)
    return y * (rc / np.maximum(r, 1e-300))[:, None]


def map_points(atlas: TransformAtlas, y):
    """Interpolated forward map X at reference points y (..., 2)."""
    y = np.asarray(y, dtype=float)
    flat = y.reshape(-1, 2)
    val, _ = _bilinear_map_and_derivative(atlas, flat)
    return val.T.reshape(y.shape)


# ------------------------------------------------ composed maps / transfer


def compose_relative_map(state1: RigidState, state2: RigidState, x, direction="2"):
    """Rigid composed maps near the body.

    ``direction='2'`` gives X~2(x1) = q2 + Q2 Q1^T (x1 - q1); ``'1'`` the
    inverse X~1(x2) = q1 + Q1 Q2^T (x2 - q2).
    """
    x = np.asarray(x, dtype=float)
    if direction == "2":
        Q = state2.Q @ state1.Q.T
        return state2.q + (x - state1.q) @ Q.T
    if direction == "1":
        Q = state1.Q @ state2.Q.T
        return state1.q + (x - state2.q) @ Q.T
    raise ValueError("direction must be '1' or '2'")


def compose_maps(atlas1: TransformAtlas, atlas2: TransformAtlas, x1, tol=1e-12):
    """X~2(x1) = X2(Y1(x1)) for points away from the rigid neighbourhood."""
    y = invert_map(atlas1, x1, tol)
    return map_points(atlas2, np.atleast_2d(y))


@dataclass
class TransformedSolution:
    U: np.ndarray
    P: np.ndarray
    A2: np.ndarray
    Omega2: float
    Us: np.ndarray  # transformed rigid velocity at the body-surface nodes of run 1


def transform_strong_solution(u2, p2, state1: RigidState, state2: RigidState,
                              atlas1: TransformAtlas, atlas2: TransformAtlas,
                              points=None) -> TransformedSolution:
    """Pull run 2's solution into run 1's physical frame.

    ``u2``, ``p2`` are run 2's reference-grid fields (U2 = J_Y2 u2). The
    result, sampled at run 1's reference nodes (or at physical ``points`` of
    run 1's fluid domain), is expressed in physical components:
    U(x1) = J_X~1 u2(X~2(x1)) with X~2 = X2 o Y1.
    """
    g = atlas1.grid
    if points is None:
        # X~2(X1(y)) = X2(y): node-by-node, no interpolation
        u2_phys = np.einsum("kixy,ixy->kxy", atlas2.X_jac, u2)
        Jc = np.einsum("kixy,ijxy->kjxy", atlas1.X_jac, atlas2.Y_jac)  # J_X~1 at X2(y)
        U = np.einsum("kjxy,jxy->kxy", Jc, u2_phys)
        P = np.array(p2, copy=True)
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y = np.atleast_2d(invert_map(atlas1, pts))
        fr, ft = locate(g, y)
        vals = np.concatenate([u2, p2[None], atlas1.X_jac.reshape(4, *g.shape),
                               atlas2.Y_jac.reshape(4, *g.shape), atlas2.X_jac.reshape(4, *g.shape)])
        iv = _kernels.bilinear_polar(vals, fr, ft, g.n_r, g.n_theta)
        Ur, P = iv[:2], iv[2]
        J1 = iv[3:7].reshape(2, 2, -1)
        Y2 = iv[7:11].reshape(2, 2, -1)
        J2 = iv[11:15].reshape(2, 2, -1)
        u2p = np.einsum("kip,ip->kp", J2, Ur)
        U = np.einsum("kip,ijp,jp->kp", J1, Y2, u2p)
    Q = state2.Q @ state1.Q.T
    A2 = Q.T @ state2.a
    Om2 = state2.omega if state2.dim == 2 else Q.T @ state2.omega
    xb = np.moveaxis(atlas1.X[:, 0, :], 0, -1)
    Us = A2 + (xb - state1.q) @ hat(Om2).T
    return TransformedSolution(U, P, A2, Om2, Us)


def transform_traction_normal(n2, traction2, Q):
    """n1 = Q^T n2 and the transformed traction Q^T (T n2)."""
    n2 = np.asarray(n2, dtype=float)
    if abs(np.linalg.norm(n2) - 1.0) > 1e-10:
        raise InvalidInputError("n2 must be a unit vector")
    Q = np.asarray(Q, dtype=float)
    return Q.T @ n2, Q.T @ np.asarray(traction2, dtype=float)
