"""Rigid-body configuration, SO(N) stepping and inertia for N = 2, 3.

In 2D the angular velocity is a scalar and ``hat`` returns
``omega * [[0, -1], [1, 0]]``; in 3D it is a length-3 vector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, UnsupportedDimensionError

SKEW_TOL = 1e-8
ROTATION_TOL = 1e-8


def _omega_dim(omega):
    w = np.asarray(omega, dtype=float)
    if w.ndim == 0 or w.shape == (1,):
        return 2
    if w.shape == (3,):
        return 3
    raise UnsupportedDimensionError(
        f"angular velocity of shape {w.shape} is neither 2D (scalar) nor 3D"
    )


def hat(omega):
    """Skew matrix P with P x = omega x x (3D) or omega * J (2D)."""
    n = _omega_dim(omega)
    if n == 2:
        w = float(np.asarray(omega, dtype=float).reshape(()))
        return np.array([[0.0, -w], [w, 0.0]])
    w1, w2, w3 = np.asarray(omega, dtype=float)
    return np.array([[0.0, -w3, w2], [w3, 0.0, -w1], [-w2, w1, 0.0]])


def vee(P):
    """Inverse of :func:`hat`; rejects matrices that are not skew."""
    P = np.asarray(P, dtype=float)
    if P.shape not in ((2, 2), (3, 3)):
        raise UnsupportedDimensionError(f"expected 2x2 or 3x3, got {P.shape}")
    asym = np.linalg.norm(P + P.T)
    if asym > SKEW_TOL:
        raise InvalidInputError(f"matrix is not skew-symmetric (|P + P^T| = {asym:.3e})")
    if P.shape == (2, 2):
        return 0.5 * (P[1, 0] - P[0, 1])
    return 0.5 * np.array([P[2, 1] - P[1, 2], P[0, 2] - P[2, 0], P[1, 0] - P[0, 1]])


def rotation2d(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation_about(axis, angle):
    """3D rotation by ``angle`` about ``axis`` (Rodrigues)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = hat(k)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def check_rotation(Q, tol=ROTATION_TOL):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] not in (2, 3):
        raise InvalidInputError(f"not a 2x2 or 3x3 matrix: shape {Q.shape}")
    err = np.linalg.norm(Q @ Q.T - np.eye(Q.shape[0]))
    if err > tol or np.linalg.det(Q) <= 0.0:
        raise InvalidInputError(f"matrix is not in SO({Q.shape[0]}) (|QQ^T - I| = {err:.3e})")
    return Q


def polar_project(M):
    """Closest rotation to M in the Frobenius norm (orthogonal polar factor)."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


def cayley(W):
    """Cayley transform (I - W/2)^-1 (I + W/2); orthogonal for skew W."""
    n = W.shape[0]
    I = np.eye(n)
    return np.linalg.solve(I - 0.5 * W, I + 0.5 * W)


@dataclass(frozen=True)
class RigidState:
    """Body configuration ``q, Q`` and velocity ``a, omega`` at time ``t``."""

    t: float
    q: np.ndarray
    Q: np.ndarray
    a: np.ndarray
    omega: object  # float in 2D, (3,) array in 3D

    def __post_init__(self):
        object.__setattr__(self, "q", np.array(self.q, dtype=float))
        object.__setattr__(self, "Q", np.array(self.Q, dtype=float))
        object.__setattr__(self, "a", np.array(self.a, dtype=float))
        if self.dim == 2:
            object.__setattr__(self, "omega", float(np.asarray(self.omega).reshape(())))
        else:
            object.__setattr__(self, "omega", np.array(self.omega, dtype=float))

    @property
    def dim(self):
        return self.q.shape[0]

    @classmethod
    def initial(cls, q0, a0=None, omega0=0.0):
        q0 = np.asarray(q0, dtype=float)
        n = q0.shape[0]
        if n not in (2, 3):
            raise UnsupportedDimensionError(f"dimension {n} not supported")
        a0 = np.zeros(n) if a0 is None else a0
        if n == 3 and np.ndim(omega0) == 0:
            omega0 = np.zeros(3) if omega0 == 0.0 else omega0
        return cls(0.0, q0, np.eye(n), a0, omega0)

    @property
    def angle(self):
        """Rotation angle of Q (2D only)."""
        return float(np.arctan2(self.Q[1, 0], self.Q[0, 0]))

    def with_velocity(self, a, omega):
        return replace(self, a=a, omega=omega)

    def placement(self, y, q0):
        """Isometry B(t, y) = q + Q (y - q0)."""
        y = np.asarray(y, dtype=float)
        return self.q + (y - q0) @ self.Q.T


def rigid_velocity(state: RigidState, x):
    """u_s(x) = a + hat(omega) (x - q); ``x`` may carry leading batch axes."""
    x = np.asarray(x, dtype=float)
    P = hat(state.omega)
    return state.a + (x - state.q) @ P.T


def step_rigid(state: RigidState, a, omega, dt) -> RigidState:
    """Advance q, Q one step with velocities ``a`` and ``omega``.

    q moves by ``dt * a``; Q by the Cayley map of ``dt * hat(omega)``
    (second order), followed by polar re-projection onto SO(N).
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    a = np.asarray(a, dtype=float)
    W = hat(omega)
    Q = polar_project(cayley(dt * W) @ state.Q)
    return RigidState(state.t + dt, state.q + dt * a, Q, a, omega)


@dataclass(frozen=True)
class InertiaTensor:
    J: object  # float (2D) or (3, 3) array
    mass: float = 1.0

    @property
    def dim(self):
        return 2 if np.ndim(self.J) == 0 else 3

    def apply(self, omega):
        if self.dim == 2:
            return self.J * omega
        return self.J @ np.asarray(omega, dtype=float)

    def solve(self, L):
        if self.dim == 2:
            return L / self.J
        return np.linalg.solve(self.J, np.asarray(L, dtype=float))


def body_inertia(radius, mass=1.0, dim=2) -> InertiaTensor:
    """Inertia of a uniform disk (2D) or ball (3D) about its center."""
    if radius <= 0 or mass <= 0:
        raise InvalidInputError("radius and mass must be positive")
    if dim == 2:
        return InertiaTensor(0.5 * mass * radius**2, mass)
    if dim == 3:
        return InertiaTensor(0.4 * mass * radius**2 * np.eye(3), mass)
    raise UnsupportedDimensionError(f"no inertia formula for dimension {dim}")


def transform_inertia(J2: InertiaTensor, Q) -> InertiaTensor:
    """Conjugate inertia into the other body's frame: J1 = Q^T J2 Q."""
    Q = check_rotation(Q)
    if J2.dim == 2:
        if Q.shape != (2, 2):
            raise InvalidInputError("2D inertia needs a 2x2 rotation")
        return InertiaTensor(J2.J, J2.mass)
    J1 = Q.T @ J2.J @ Q
    return InertiaTensor(0.5 * (J1 + J1.T), J2.mass)


def relative_angular_velocity(Q1, P1, Q2, P2):
    """Angular velocity of Q = Q2 Q1^T seen in frame 1.

    Uses hat(w~) = Q^T P2 Q - P1 where P_k = Q_k' Q_k^T; equals
    Omega2 - omega1 with Omega2 = Q^T omega2.
    """
    Q1 = check_rotation(Q1)
    Q2 = check_rotation(Q2)
    Q = Q2 @ Q1.T
    P_omega2 = Q.T @ np.asarray(P2, dtype=float) @ Q
    return vee(P_omega2 - np.asarray(P1, dtype=float))
