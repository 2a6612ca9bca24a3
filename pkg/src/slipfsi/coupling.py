"""Newton-Euler equations of the rigid body, driven by fluid traction.

The traction is T n with n the normal pointing into the body, so the
force on the body is ``-sum w T n`` and the torque ``-sum w (x - q) x T n``.
Both updates are Heun (RK2) steps. Forces may be given as a BodyForce
(held fixed over the step) or as a callable ``force(t, state)`` evaluated
at the two stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .grid import BoundaryQuadrature
from .kinematics import InertiaTensor, RigidState, hat, step_rigid


@dataclass(frozen=True)
class BodyForce:
    F: np.ndarray
    torque: object  # float in 2D, (3,) in 3D

    def __post_init__(self):
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float))
        tq = np.asarray(self.torque, dtype=float)
        object.__setattr__(self, "torque", float(tq) if tq.ndim == 0 else tq)
        if not (np.all(np.isfinite(self.F)) and np.all(np.isfinite(self.torque))):
            raise InvalidInputError("body force must be finite")

    @classmethod
    def zero(cls, dim=2):
        return cls(np.zeros(dim), 0.0 if dim == 2 else np.zeros(3))


def _cross(r, t):
    if r.shape[-1] == 2:
        return r[..., 0] * t[..., 1] - r[..., 1] * t[..., 0]
    return np.cross(r, t)


def surface_force(traction, quad: BoundaryQuadrature, q) -> BodyForce:
    """Force and torque exerted by the fluid on the body."""
    t = np.asarray(traction, dtype=float)
    if t.shape != quad.points.shape:
        raise InvalidInputError(f"traction shape {t.shape} does not match {quad.points.shape}")
    w = quad.weights
    F = -np.einsum("k,ki->i", w, t)
    tq = -np.einsum("k,k...->...", w, _cross(quad.points - np.asarray(q, dtype=float), t))
    return BodyForce(F, tq)


def _eval(force, t, state):
    return force(t, state) if callable(force) else force


def _cross_omega(omega, v):
    """omega x v; in 2D omega is a scalar and v a 2-vector."""
    if np.ndim(omega) == 0:
        return omega * np.array([-v[1], v[0]])
    return np.cross(omega, v)


def step_newton_euler(rigid: RigidState, force, J: InertiaTensor, dt) -> RigidState:
    """One Heun step of m a' = F, (J omega)' = torque, with q, Q following.

    In 3D the spatial inertia is Q J Q^T, so the angular momentum is
    advanced and omega recovered from it at the new attitude.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    m = J.mass
    f0 = _eval(force, rigid.t, rigid)
    if rigid.dim == 2:
        a1 = rigid.a + dt * f0.F / m
        w1 = rigid.omega + dt * f0.torque / J.J
        s1 = step_rigid(rigid, rigid.a, rigid.omega, dt).with_velocity(a1, w1)
        f1 = _eval(force, rigid.t + dt, s1)
        a = rigid.a + 0.5 * dt * (f0.F + f1.F) / m
        w = rigid.omega + 0.5 * dt * (f0.torque + f1.torque) / J.J
        moved = step_rigid(rigid, 0.5 * (rigid.a + a1), 0.5 * (rigid.omega + w1), dt)
        return moved.with_velocity(a, w)
    Jb = np.asarray(J.J, dtype=float)

    def spatial(Q):
        return Q @ Jb @ Q.T

    L0 = spatial(rigid.Q) @ rigid.omega
    a1 = rigid.a + dt * f0.F / m
    L1 = L0 + dt * f0.torque
    s1 = step_rigid(rigid, rigid.a, rigid.omega, dt)
    w1 = np.linalg.solve(spatial(s1.Q), L1)
    s1 = s1.with_velocity(a1, w1)
    f1 = _eval(force, rigid.t + dt, s1)
    a = rigid.a + 0.5 * dt * (f0.F + f1.F) / m
    L = L0 + 0.5 * dt * (f0.torque + f1.torque)
    moved = step_rigid(rigid, 0.5 * (rigid.a + a1), 0.5 * (rigid.omega + w1), dt)
    return moved.with_velocity(a, np.linalg.solve(spatial(moved.Q), L))


def step_transformed_newton_euler(A2, Omega2, omega_tilde, force, J1: InertiaTensor, dt, t=0.0):
    """Heun step of the body equations seen in the other body's frame.

    A' = -w x A + F / m and (J1 Omega)' = -w x (J1 Omega) + torque, with
    w the relative angular velocity. ``force`` and ``omega_tilde`` may be
    callables of time.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    m = J1.mass
    A2 = np.asarray(A2, dtype=float)
    wt = omega_tilde if callable(omega_tilde) else (lambda s: omega_tilde)
    fc = force if callable(force) else (lambda s: force)

    def rhs(s, A, L):
        f = fc(s)
        w = wt(s)
        dA = -_cross_omega(w, A) + f.F / m
        if np.ndim(L) == 0:
            dL = f.torque
        else:
            dL = -np.cross(w, L) + f.torque
        return dA, dL

    L0 = J1.apply(Omega2)
    dA0, dL0 = rhs(t, A2, L0)
    A1 = A2 + dt * dA0
    L1 = L0 + dt * dL0
    dA1, dL1 = rhs(t + dt, A1, L1)
    A = A2 + 0.5 * dt * (dA0 + dA1)
    L = L0 + 0.5 * dt * (dL0 + dL1)
    return A, J1.solve(L)


def rotation_generator(omega):
    """hat(omega); exposed for frame-consistency checks."""
    return hat(omega)
