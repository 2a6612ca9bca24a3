"""Discrete divergence constraint and the kinetic-energy projection.

Unknowns of the constrained velocity (the "dof vector" ``x``):

* both Cartesian components at interior nodes,
* the tangential component at body-surface nodes,
* the body translational velocity in the reference frame (free body only).

The normal component on the body surface is tied to the body velocity and
the container wall is no-slip, so neither is an unknown. The constraint is
the flat divergence in reference coordinates, which is exact for the
transformed problem because the flow map preserves volume. The radial
difference operator is the second-order summation-by-parts one, with
first-order one-sided rows at the two boundary circles; its weighted
adjoint is therefore a consistent gradient at every dof.

The projection minimises the kinetic energy ``(x - x*)^T M (x - x*)`` under
``B x = c``, with ``M`` carrying the metric ``g_ij`` and quadrature weights.
It never increases the discrete kinetic energy.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .grid import AnnulusGrid


def _sbp_dr(grid: AnnulusGrid):
    n = grid.n_r
    e = np.ones(n - 1)
    D = sp.diags([-e, e], [-1, 1], shape=(n, n), format="lil") / (2 * grid.hr)
    D[0, 0], D[0, 1] = -1 / grid.hr, 1 / grid.hr
    D[n - 1, n - 2], D[n - 1, n - 1] = -1 / grid.hr, 1 / grid.hr
    return D.tocsr()


def _periodic_dth(grid: AnnulusGrid):
    n = grid.n_theta
    D = sp.diags([np.ones(n - 1), -np.ones(n - 1)], [1, -1], shape=(n, n), format="lil")
    D[0, n - 1] = -1
    D[n - 1, 0] = 1
    return D.tocsr() / grid.d1_den


def divergence_matrix(grid: AnnulusGrid):
    """Sparse map from node velocities ``(2, n_r, n_theta)`` to node divergence."""
    nr, nt = grid.shape
    DR = sp.kron(_sbp_dr(grid), sp.eye(nt), format="csr")
    DT = sp.kron(sp.eye(nr), _periodic_dth(grid), format="csr")
    C = sp.diags(np.tile(grid.cos, nr))
    S = sp.diags(np.tile(grid.sin, nr))
    IR = sp.diags(np.repeat(grid.inv_r, nt))
    B1 = C @ DR - IR @ S @ DT
    B2 = S @ DR + IR @ C @ DT
    return sp.hstack([B1, B2], format="csr")


def sbp_divergence(U, grid: AnnulusGrid):
    """Apply the constraint divergence to a node field (no ghosts needed)."""
    B = divergence_matrix(grid)
    return (B @ np.asarray(U).ravel()).reshape(grid.shape)


class Projector:
    """Kinetic-energy projection onto discretely divergence-free fields.

    ``body_free`` makes the body translation an unknown with mass
    ``body_mass``; ``slip=False`` fixes the tangential surface velocity
    (no-slip). Fixed values enter through a node field ``U_fixed`` that is
    zero at every unknown.
    """

    def __init__(self, grid: AnnulusGrid, body_free=True, body_mass=1.0, tol=1e-10, slip=True):
        self.grid = grid
        self.body_free = body_free
        self.slip = slip
        self.body_mass = body_mass
        self.tol = tol
        nr, nt = grid.shape
        N = nr * nt
        self.N = N
        self.Bfull = divergence_matrix(grid)
        idx = np.arange(N).reshape(nr, nt)
        self.interior = idx[1:-1].ravel()
        self.n_int = self.interior.size
        c, s = grid.cos, grid.sin
        rows, cols, vals = [], [], []
        for comp in range(2):
            rows.append(comp * N + self.interior)
            cols.append(comp * self.n_int + np.arange(self.n_int))
            vals.append(np.ones(self.n_int))
        base = 2 * self.n_int
        inner = idx[0]
        n_t = nt if slip else 0
        if slip:
            rows += [inner, N + inner]
            cols += [base + np.arange(nt)] * 2
            vals += [-s, c]
        self.ndof = base + n_t + (2 if body_free else 0)
        # normal part of the body-surface velocity: (xi . e_r) e_r
        Xi = sp.csr_matrix(
            (np.concatenate([c * c, c * s, s * c, s * s]),
             (np.concatenate([inner, N + inner, inner, N + inner]),
              np.concatenate([np.zeros(nt, int), np.zeros(nt, int),
                              np.ones(nt, int), np.ones(nt, int)]))),
            shape=(2 * N, 2))
        self.Xi = Xi
        T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(2 * N, base + n_t))
        if body_free:
            T = sp.hstack([T, Xi], format="csr")
        self.T = T
        self.B = (self.Bfull @ T).tocsr()
        self.BT = self.B.T.tocsr()
        self._null = self._null_space()
        self._pins = self._choose_pins()
        keep = np.ones(N, bool)
        keep[self._pins] = False
        self._keep = np.flatnonzero(keep)
        self._flat = {}

    # ---------------------------------------------------------- structure

    def _null_space(self):
        """Null space of B^T, searched among theta-frequency 0 and pi modes."""
        g = self.grid
        nr, nt = g.shape
        Z = []
        for i in range(nr):
            z = np.zeros((nr, nt))
            z[i] = 1.0
            Z.append(z.ravel())
            if nt % 2 == 0:
                z = np.zeros((nr, nt))
                z[i] = (-1.0) ** np.arange(nt)
                Z.append(z.ravel())
        Z = np.array(Z).T
        A = self.BT @ Z
        A = A.toarray() if sp.issparse(A) else A
        _, sv, vt = sla.svd(A, full_matrices=False)
        scale = sv[0] if sv.size else 1.0
        rank = int(np.sum(sv > 1e-11 * scale))
        basis = Z @ vt[rank:].T
        q, _ = np.linalg.qr(basis)
        return q

    def _choose_pins(self):
        _, _, piv = sla.qr(self._null.T, pivoting=True)
        return np.sort(piv[: self._null.shape[1]])

    @property
    def null_dim(self):
        return self._null.shape[1]

    # ------------------------------------------------------------ mapping

    def mass_diagonal_blocks(self, gup_int=None, tangent_weight=1.0):
        """Inverse mass as a sparse matrix; ``gup_int`` is (2, 2, n_int).

        ``tangent_weight`` scales the mass of the tangential surface dofs;
        an implicit friction term enters the projection this way.
        """
        W = self.grid.weights.ravel()
        wi = W[self.interior]
        n = self.n_int
        if gup_int is None:
            a = 1 / wi
            Minv = sp.diags(np.concatenate([a, a]))
        else:
            g11, g12, g22 = gup_int[0, 0] / wi, gup_int[0, 1] / wi, gup_int[1, 1] / wi
            ar = np.arange(n)
            Minv = sp.csr_matrix(
                (np.concatenate([g11, g12, g12, g22]),
                 (np.concatenate([ar, ar, ar + n, ar + n]),
                  np.concatenate([ar, ar + n, ar, ar + n]))), shape=(2 * n, 2 * n))
        w0 = W.reshape(self.grid.shape)[0]
        tail = [1 / (w0 * tangent_weight)] if self.slip else []
        if self.body_free:
            tail.append(np.full(2, 1.0 / self.body_mass))
        if not tail:
            return Minv.tocsr()
        return sp.block_diag([Minv, sp.diags(np.concatenate(tail))], format="csr")

    def gather(self, U, xi=None):
        """Node field (2, n_r, n_theta) -> dof vector."""
        g = self.grid
        U = np.asarray(U)
        u1 = U[0].ravel()[self.interior]
        u2 = U[1].ravel()[self.interior]
        parts = [u1, u2]
        if self.slip:
            parts.append(-g.sin * U[0, 0] + g.cos * U[1, 0])
        if self.body_free:
            parts.append(np.asarray(xi, dtype=float))
        return np.concatenate(parts)

    def scatter(self, x, U_fixed=None):
        """dof vector -> node field (2, n_r, n_theta), adding the fixed values."""
        U = self.T @ x
        if U_fixed is not None:
            U = U + np.ravel(U_fixed)
        return U.reshape(2, *self.grid.shape)

    def fixed_field(self, xi=None, u_tangent=None):
        """Node field of prescribed body-surface values (zero elsewhere).

        ``xi`` is the prescribed body translation (pinned or moving body)
        and ``u_tangent`` the tangential surface velocity (no-slip).
        """
        g = self.grid
        F = np.zeros((2, *g.shape))
        if not self.body_free and xi is not None:
            F += (self.Xi @ np.asarray(xi, dtype=float)).reshape(F.shape)
        if not self.slip and u_tangent is not None:
            F[0, 0] += -g.sin * u_tangent
            F[1, 0] += g.cos * u_tangent
        return F

    # -------------------------------------------------------------- solve

    def _operator(self, gup_int, tangent_weight=1.0):
        Minv = self.mass_diagonal_blocks(gup_int, tangent_weight)
        S = (self.B @ Minv @ self.BT).tocsr()
        return Minv, S

    def _reduced(self, S):
        k = self._keep
        return S[k][:, k].tocsc()

    def _factor(self, Sr):
        return spla.splu(Sr, permc_spec="COLAMD")

    def _flat_factor(self, tangent_weight):
        """LU of the flat operator for the tangential weight rounded to a
        quarter octave; exact when the weight matches the bucket."""
        key = float(2.0 ** (np.round(4 * np.log2(tangent_weight)) / 4))
        if key not in self._flat:
            if len(self._flat) >= 8:
                self._flat.pop(next(iter(self._flat)))
            _, S0 = self._operator(None, key)
            Sr = self._reduced(S0)
            self._flat[key] = (self._factor(Sr), Sr)
        return key, self._flat[key]

    def solve_schur(self, S, rhs, flat, tangent_weight=1.0):
        """Solve S lam = rhs (rhs compatible) on the pinned subspace.

        The flat-metric operator is factorised once per tangential weight
        bucket; other operators use that factor as a preconditioner for
        conjugate gradients.
        """
        k = self._keep
        b = rhs[k]
        tol = 0.01 * self.tol * max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
        key, (lu, S0) = self._flat_factor(tangent_weight)
        if flat and key == tangent_weight:
            y = lu.solve(b)
            for _ in range(5):
                r = b - S0 @ y
                if np.max(np.abs(r)) <= tol:
                    break
                y = y + lu.solve(r)
        else:
            y = _pcg(self._reduced(S), b, lu.solve, tol)
        lam = np.zeros(self.N)
        lam[k] = y
        return lam

    def project(self, xstar, gup_int=None, U_fixed=None, tangent_weight=1.0):
        """Return (x, lam, residual) with B x = c to the solver tolerance."""
        Minv, S = self._operator(gup_int, tangent_weight)
        c = np.zeros(self.N) if U_fixed is None else -(self.Bfull @ np.ravel(U_fixed))
        rhs = self.B @ xstar - c
        self.check_compatible(rhs)
        lam = self.solve_schur(S, rhs, gup_int is None, tangent_weight)
        x = xstar - Minv @ (self.BT @ lam)
        res = float(np.max(np.abs(self.B @ x - c)))
        if res > self.tol * max(1.0, float(np.max(np.abs(rhs)))):
            raise SolverError("projection did not reach tolerance", res)
        return x, lam, res

    def check_compatible(self, rhs):
        z = self._null.T @ rhs
        bad = float(np.max(np.abs(z))) if z.size else 0.0
        if bad > 1e-8 * max(1.0, float(np.max(np.abs(rhs)))):
            raise SolverError("constraint right-hand side incompatible with the divergence operator", bad)

    def pressure_from_multiplier(self, lam, dt):
        """Node pressure from the multiplier, gauge fixed by removing null modes."""
        W = self.grid.weights.ravel()
        P = -lam / (dt * W)
        return self.remove_null_modes(P).reshape(self.grid.shape)

    def remove_null_modes(self, P):
        """W-orthogonal removal of pressure modes invisible to the constraint.

        The constant is one of them, so the result has zero weighted mean.
        """
        W = self.grid.weights.ravel()
        m = self._null / W[:, None]
        G = m.T @ (W[:, None] * m)
        coef = np.linalg.solve(G, m.T @ (W * np.ravel(P)))
        return np.ravel(P) - m @ coef

    def gradient(self, P, gup_int=None):
        """Discrete transformed pressure gradient at the dofs, -M^-1 B^T (W P)."""
        W = self.grid.weights.ravel()
        Minv = self.mass_diagonal_blocks(gup_int)
        return -(Minv @ (self.BT @ (W * np.ravel(P))))


def _pcg(A, b, M, tol, maxiter=500):
    x = M(b)
    r = b - A @ x
    if np.max(np.abs(r)) <= tol:
        return x
    z = M(r)
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.max(np.abs(r)) <= tol:
            return x
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError("preconditioned CG did not converge", float(np.max(np.abs(r))))
