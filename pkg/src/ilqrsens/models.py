"""Parametric dynamics and cost models with analytic derivatives.

Every dynamics model provides the discrete step ``x' = f(x, u, theta)``
together with first derivatives (A = df/dx, B = df/du, df/dtheta) and the
second-derivative tensors of the stacked Jacobian D = [A, B] with respect
to state, control and parameters.  The bundled benchmark models (pendulum,
cartpole) carry closed-form expressions; ``FiniteDiffDynamics`` wraps a
step-only model with a finite-difference implementation of the same
interface for user-supplied systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DynamicsEval",
    "CostEval",
    "DynamicsModel",
    "CostModel",
    "Pendulum",
    "Cartpole",
    "LinearModel",
    "FiniteDiffDynamics",
    "GoalWeightedCost",
    "ControlProblem",
    "get_model",
    "MODEL_IDS",
    "ConfigurationError",
    "NumericError",
]


class ConfigurationError(ValueError):
    """Raised on dimension mismatches or invalid model configuration."""


class NumericError(ArithmeticError):
    """Raised when a model evaluation produces non-finite values."""

    def __init__(self, message: str, t: int | None = None):
        super().__init__(message if t is None else f"{message} (t={t})")
        self.t = t


@dataclass
class DynamicsEval:
    """One dynamics evaluation: next state, Jacobians and their derivatives.

    Shapes (n = state dim, m = control dim, p = parameter dim):
      next_state (n,), A (n, n), B (n, m), df_dtheta (n, p),
      dD_dx (n, n+m, n), dD_du (n, n+m, m), dD_dtheta (n, n+m, p),
    where D = [A, B] is the n x (n+m) stacked Jacobian.
    """

    next_state: np.ndarray
    A: np.ndarray
    B: np.ndarray
    df_dtheta: np.ndarray
    dD_dx: np.ndarray | None = None
    dD_du: np.ndarray | None = None
    dD_dtheta: np.ndarray | None = None

    @property
    def D(self) -> np.ndarray:
        return np.hstack([self.A, self.B])

    def offset(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Affine offset d = f(x, u) - D @ [x; u] of the linearization."""
        return self.next_state - self.A @ x - self.B @ u


@dataclass
class CostEval:
    """Stage cost value with gradient/Hessian in tau = (x, u) and parameters.

    Shapes (q = n+m, pc = cost parameter dim):
      c (q,), C (q, q), dC_dtheta (q, q, pc), dc_dtheta (q, pc),
      dC_dx (q, q, n), dC_du (q, q, m), dc_dx (q, n), dc_du (q, m).
    """

    value: float
    c: np.ndarray
    C: np.ndarray
    dC_dtheta: np.ndarray
    dc_dtheta: np.ndarray
    dC_dx: np.ndarray
    dC_du: np.ndarray
    dc_dx: np.ndarray
    dc_du: np.ndarray


def _check_vec(name: str, v: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (dim,):
        raise ConfigurationError(f"{name} has shape {v.shape}, expected ({dim},)")
    return v


class DynamicsModel:
    """Interface for a discrete-time parametric dynamics model.

    Subclasses define n, m, p, defaults, and implement ``step``/``linearize``.
    All evaluations are pure functions of their arguments and safe to call
    concurrently.
    """

    n: int
    m: int
    p: int
    model_id: str = "custom"
    dt: float = 0.05
    # default control box; overridable via solver options
    u_lower_default: np.ndarray
    u_upper_default: np.ndarray
    theta_default: np.ndarray
    # per-dimension sampling box for initial states (used by dataset generation)
    x_init_ranges: np.ndarray  # (n, 2)

    def step(self, x: np.ndarray, u: np.ndarray, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def linearize(
        self, x: np.ndarray, u: np.ndarray, theta: np.ndarray, second_order: bool = True
    ) -> DynamicsEval:
        raise NotImplementedError

    def check_args(self, x, u, theta):
        return (
            _check_vec("x", x, self.n),
            _check_vec("u", u, self.m),
            _check_vec("theta", theta, self.p),
        )


class Pendulum(DynamicsModel):
    """Torque-limited pendulum, explicit Euler.

    State (angle, angular velocity); angle 0 is the unforced equilibrium.
    Continuous dynamics: omega_dot = (g/l) sin(angle) + u / (m l^2).
    theta = (m, l, g).  Angles are never wrapped: the step stays smooth in
    all arguments, and goal costs work on raw angle differences.
    """

    n = 2
    m = 1
    p = 3
    model_id = "pendulum"

    def __init__(self, dt: float = 0.05, u_max: float = 2.0):
        self.dt = dt
        self.u_lower_default = np.array([-u_max])
        self.u_upper_default = np.array([u_max])
        self.theta_default = np.array([1.0, 1.0, 9.81])
        self.x_init_ranges = np.array([[-np.pi, np.pi], [-1.0, 1.0]])

    def step(self, x, u, theta):
        x, u, theta = self.check_args(x, u, theta)
        mass, length, grav = theta
        ang, om = x
        dom = (grav / length) * np.sin(ang) + u[0] / (mass * length**2)
        return np.array([ang + self.dt * om, om + self.dt * dom])

    def linearize(self, x, u, theta, second_order=True):
        x, u, theta = self.check_args(x, u, theta)
        mass, length, grav = theta
        ang, _ = x
        dt = self.dt
        sin_a, cos_a = np.sin(ang), np.cos(ang)
        ml2 = mass * length**2

        A = np.array([[1.0, dt], [dt * (grav / length) * cos_a, 1.0]])
        B = np.array([[0.0], [dt / ml2]])
        df_dtheta = np.array(
            [
                [0.0, 0.0, 0.0],
                [
                    -dt * u[0] / (mass**2 * length**2),
                    dt * (-grav * sin_a / length**2 - 2.0 * u[0] / (mass * length**3)),
                    dt * sin_a / length,
                ],
            ]
        )
        ev = DynamicsEval(self.step(x, u, theta), A, B, df_dtheta)
        if not second_order:
            return ev

        # only D[1, 0] = dt (g/l) cos(ang) and D[1, 2] = dt/(m l^2) are nonconstant
        dD_dx = np.zeros((2, 3, 2))
        dD_dx[1, 0, 0] = -dt * (grav / length) * sin_a
        dD_du = np.zeros((2, 3, 1))
        dD_dtheta = np.zeros((2, 3, 3))
        dD_dtheta[1, 0, 1] = -dt * grav * cos_a / length**2
        dD_dtheta[1, 0, 2] = dt * cos_a / length
        dD_dtheta[1, 2, 0] = -dt / (mass**2 * length**2)
        dD_dtheta[1, 2, 1] = -2.0 * dt / (mass * length**3)
        ev.dD_dx, ev.dD_du, ev.dD_dtheta = dD_dx, dD_du, dD_dtheta
        return ev


class Cartpole(DynamicsModel):
    """Cart-pole (point-mass pole), explicit Euler.

    State (cart position, cart velocity, pole angle, pole angular velocity);
    angle 0 is the upright equilibrium.  theta = (m_c, m_p, g, l).
    Continuous accelerations:
      xddot   = (u + m_p sin(phi) (l om^2 + g cos(phi))) / (m_c + m_p sin^2(phi))
      phiddot = (-u cos(phi) - m_p l om^2 cos(phi) sin(phi)
                 - (m_c + m_p) g sin(phi)) / (l (m_c + m_p sin^2(phi)))
    Jacobian expressions below were derived symbolically from the Euler step
    and reduced with common-subexpression elimination.
    """

    n = 4
    m = 1
    p = 4
    model_id = "cartpole"

    def __init__(self, dt: float = 0.05, u_max: float = 10.0):
        self.dt = dt
        self.u_lower_default = np.array([-u_max])
        self.u_upper_default = np.array([u_max])
        self.theta_default = np.array([1.0, 0.1, 9.81, 0.5])
        self.x_init_ranges = np.array(
            [[-1.0, 1.0], [0.0, 0.0], [-0.3, 0.3], [0.0, 0.0]]
        )

    def step(self, x, u, theta):
        x, u, theta = self.check_args(x, u, theta)
        mc, mp, grav, length = theta
        pos, vel, phi, om = x
        force = u[0]
        s, c = np.sin(phi), np.cos(phi)
        den = mc + mp * s**2
        xacc = (force + mp * s * (length * om**2 + grav * c)) / den
        phiacc = (-force * c - mp * length * om**2 * c * s - (mc + mp) * grav * s) / (
            length * den
        )
        dt = self.dt
        return np.array(
            [pos + dt * vel, vel + dt * xacc, phi + dt * om, om + dt * phiacc]
        )

    def linearize(self, x, u, theta, second_order=True):
        x, u, theta = self.check_args(x, u, theta)
        mc, mp, g, l = theta
        _, _, phi, om = x
        uf = u[0]
        dt = self.dt

        x0 = np.sin(phi)
        x1 = x0**2
        x2 = np.cos(phi)
        x3 = g * x2
        x4 = om**2
        x5 = l * x4
        x6 = x3 + x5
        x7 = mp * x1
        x8 = mc + x7
        x9 = 1.0 / x8
        x10 = mp * x0
        x11 = uf + x10 * x6
        x12 = x0 * x11 * x9
        x13 = dt * x9
        x14 = x10 * x13
        x15 = 2.0 * om
        x16 = mc + mp
        x17 = g * x0
        x18 = x2 * x5
        x19 = uf * x2 + x10 * x18 + x16 * x17
        x20 = x10 * x2
        x21 = 1.0 / l
        x22 = x13 * x21
        x23 = x13 * x20
        x24 = x0 * x22

        A = np.zeros((4, 4))
        A[0, 0] = 1.0
        A[0, 1] = dt
        A[1, 1] = 1.0
        A[1, 2] = -mp * x13 * (g * x1 + 2.0 * x12 * x2 - x2 * x6)
        A[1, 3] = l * x14 * x15
        A[2, 2] = 1.0
        A[2, 3] = dt
        A[3, 2] = x22 * (
            -mp * x2**2 * x5 + uf * x0 - x16 * x3 + 2.0 * x19 * x20 * x9 + x5 * x7
        )
        A[3, 3] = 1.0 - x15 * x23

        B = np.zeros((4, 1))
        B[1, 0] = x13
        B[3, 0] = -x2 * x22

        FT = np.zeros((4, 4))
        FT[1, 0] = -dt * x11 / x8**2
        FT[1, 1] = x0 * x13 * (-x12 + x6)
        FT[1, 2] = x23
        FT[1, 3] = x14 * x4
        FT[3, 0] = x22 * (-x17 + x19 * x9)
        FT[3, 1] = x24 * (-g + x0 * x19 * x9 - x18)
        FT[3, 2] = -x16 * x24
        FT[3, 3] = x22 * (x19 * x21 - x20 * x4)

        ev = DynamicsEval(self.step(x, u, theta), A, B, FT)
        if not second_order:
            return ev
        ev.dD_dx, ev.dD_du, ev.dD_dtheta = self._second_derivs(x, u, theta)
        return ev

    def _second_derivs(self, x, u, theta):
        mc, mp, g, l = theta
        _, _, phi, om = x
        uf = u[0]
        dt = self.dt

        x0 = np.sin(phi)
        x1 = np.cos(phi)
        x2 = g * x1
        x3 = om**2
        x4 = l * x3
        x5 = x0**2
        x6 = mp * x5
        x7 = mc + x6
        x8 = 1.0 / x7
        x9 = x2 + x4
        x10 = mp * x0
        x11 = uf + x10 * x9
        x12 = x11 * x8
        x13 = 2.0 * x12
        x14 = x1**2
        x15 = 2.0 * x14
        x16 = x7 ** (-2.0)
        x17 = 8.0 * x14
        x18 = x1 * x9
        x19 = g * x5 - x18
        x20 = x1 * x10
        x21 = 4.0 * x20
        x22 = dt * x8
        x23 = mp * x22
        x24 = x6 * x8
        x25 = 2.0 * x24
        x26 = x25 - 1.0
        x27 = -x26
        x28 = 2.0 * om
        x29 = l * x1 * x23 * x27 * x28
        x30 = dt * x16
        x31 = 2.0 * x30
        x32 = x20 * x31
        x33 = -x32
        x34 = x1 * x4
        x35 = x10 * x34
        x36 = mc + mp
        x37 = g * x0 * x36 + uf * x1
        x38 = x35 + x37
        x39 = x15 * x8
        x40 = mp * x39
        x41 = x16 * x38
        x42 = mp**2 * x5
        x43 = x14 * x4
        x44 = mp * x43 - uf * x0 + x2 * x36 - x4 * x6
        x45 = x44 * x8
        x46 = 1.0 / l
        x47 = x22 * x46
        x48 = -x14 + x5
        x49 = x23 * (x15 * x24 + x48)
        x50 = x28 * x49
        x51 = x0 * x47 * (x40 + 1.0)
        x52 = 2.0 * x10
        x53 = l * x22
        x54 = x1 * x22
        x55 = x0 * x1
        x56 = -x2
        x57 = x1 * x46
        x58 = x0**3
        x59 = x24 - 1.0
        x60 = x0 * x28
        x61 = x30 * x5
        x62 = 2.0 * x38 * x8
        x63 = mp * x3

        dD_dx = np.zeros((4, 5, 4))
        dD_dx[1, 2, 2] = x23 * (
            -x0 * (4.0 * x2 + x4)
            + x11 * x16 * x17 * x6
            - x12 * x15
            + x13 * x5
            + x19 * x21 * x8
        )
        dD_dx[1, 3, 2] = x29
        dD_dx[1, 4, 2] = x33
        dD_dx[3, 2, 2] = x47 * (
            -x17 * x41 * x42 + x21 * x45 - x25 * x38 + 4.0 * x35 + x37 + x38 * x40
        )
        dD_dx[3, 3, 2] = x50
        dD_dx[3, 4, 2] = x51
        dD_dx[1, 2, 3] = x29
        dD_dx[1, 3, 3] = x52 * x53
        dD_dx[3, 2, 3] = x50
        dD_dx[3, 3, 3] = -x52 * x54

        dD_du = np.zeros((4, 5, 1))
        dD_du[1, 2, 0] = x33
        dD_du[3, 2, 0] = x51

        dD_dtheta = np.zeros((4, 5, 4))
        dD_dtheta[1, 2, 0] = mp * x30 * (4.0 * x12 * x55 + x19)
        dD_dtheta[1, 3, 0] = -l * om * x10 * x31
        dD_dtheta[1, 4, 0] = -x30
        dD_dtheta[3, 2, 0] = x47 * (x2 * x25 - x21 * x41 + x45 + x56)
        dD_dtheta[3, 3, 0] = om * x32
        dD_dtheta[3, 4, 0] = x30 * x57
        dD_dtheta[1, 2, 1] = x22 * (
            4.0 * mp * x1 * x11 * x16 * x58
            + mp * x19 * x5 * x8
            - x13 * x55
            - x18 * x25
            - x19
        )
        dD_dtheta[1, 3, 1] = -x53 * x59 * x60
        dD_dtheta[1, 4, 1] = -x61
        dD_dtheta[3, 2, 1] = x47 * (
            -4.0 * mp * x1 * x41 * x58
            + x1 * x25 * (g + x34)
            + x4 * x5
            - x43
            + x45 * x5
            + x55 * x62
            + x56
        )
        dD_dtheta[3, 3, 1] = x54 * x59 * x60
        dD_dtheta[3, 4, 1] = x57 * x61
        dD_dtheta[1, 2, 2] = -x49
        dD_dtheta[3, 2, 2] = x1 * x26 * x36 * x47
        dD_dtheta[1, 2, 3] = x27 * x54 * x63
        dD_dtheta[1, 3, 3] = x10 * x22 * x28
        dD_dtheta[3, 2, 3] = x47 * (
            -x10 * x57 * x62 + x3 * x39 * x42 + x44 * x46 + x48 * x63
        )
        dD_dtheta[3, 4, 3] = x54 / l**2
        return dD_dx, dD_du, dD_dtheta


class LinearModel(DynamicsModel):
    """Linear dynamics affine in the parameters.

    x' = (A0 + sum_k theta_k * EA[k]) @ x + (B0 + sum_k theta_k * EB[k]) @ u
         + b0 + Gtheta @ theta

    With all parameter maps zero this is a plain fixed linear system.  D is
    independent of the trajectory, so all dD_dx/dD_du tensors vanish.
    """

    model_id = "linear-test"

    def __init__(
        self,
        A0: np.ndarray,
        B0: np.ndarray,
        EA: np.ndarray | None = None,
        EB: np.ndarray | None = None,
        b0: np.ndarray | None = None,
        Gtheta: np.ndarray | None = None,
        p: int = 0,
        u_max: float = np.inf,
    ):
        A0 = np.asarray(A0, dtype=float)
        B0 = np.asarray(B0, dtype=float)
        self.n, self.m = B0.shape
        if A0.shape != (self.n, self.n):
            raise ConfigurationError("A0/B0 shapes are inconsistent")
        self.A0, self.B0 = A0, B0
        self.p = int(p)
        self.EA = np.zeros((self.p, self.n, self.n)) if EA is None else np.asarray(EA, float)
        self.EB = np.zeros((self.p, self.n, self.m)) if EB is None else np.asarray(EB, float)
        self.b0 = np.zeros(self.n) if b0 is None else np.asarray(b0, float)
        self.Gtheta = (
            np.zeros((self.n, self.p)) if Gtheta is None else np.asarray(Gtheta, float)
        )
        if self.EA.shape != (self.p, self.n, self.n) or self.EB.shape != (self.p, self.n, self.m):
            raise ConfigurationError("parameter map shapes are inconsistent")
        self.u_lower_default = np.full(self.m, -u_max)
        self.u_upper_default = np.full(self.m, u_max)
        self.theta_default = np.zeros(self.p)
        self.x_init_ranges = np.tile([-1.0, 1.0], (self.n, 1))

    def _AB(self, theta):
        A = self.A0 + np.tensordot(theta, self.EA, axes=1)
        B = self.B0 + np.tensordot(theta, self.EB, axes=1)
        return A, B

    def step(self, x, u, theta):
        x, u, theta = self.check_args(x, u, theta)
        A, B = self._AB(theta)
        return A @ x + B @ u + self.b0 + self.Gtheta @ theta

    def linearize(self, x, u, theta, second_order=True):
        x, u, theta = self.check_args(x, u, theta)
        A, B = self._AB(theta)
        df_dtheta = (
            np.einsum("kij,j->ik", self.EA, x)
            + np.einsum("kij,j->ik", self.EB, u)
            + self.Gtheta
        )
        ev = DynamicsEval(self.step(x, u, theta), A, B, df_dtheta)
        if second_order:
            nm = self.n + self.m
            ev.dD_dx = np.zeros((self.n, nm, self.n))
            ev.dD_du = np.zeros((self.n, nm, self.m))
            dD_dtheta = np.zeros((self.n, nm, self.p))
            for k in range(self.p):
                dD_dtheta[:, : self.n, k] = self.EA[k]
                dD_dtheta[:, self.n :, k] = self.EB[k]
            ev.dD_dtheta = dD_dtheta
        return ev


def _fd_steps(v: np.ndarray, base: float) -> np.ndarray:
    return base * (1.0 + np.abs(v))


class FiniteDiffDynamics(DynamicsModel):
    """Finite-difference implementation of the dynamics interface.

    Wraps a plain step function for user-supplied models without analytic
    derivatives.  First derivatives use central differences of ``step``;
    second-derivative tensors use central differences of the first ones.
    """

    model_id = "finite-diff"

    def __init__(
        self,
        step_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
        n: int,
        m: int,
        p: int,
        theta_default: np.ndarray | None = None,
        u_max: float = np.inf,
        h_first: float = 1e-6,
        h_second: float = 1e-4,
    ):
        self._step_fn = step_fn
        self.n, self.m, self.p = n, m, p
        self.theta_default = (
            np.zeros(p) if theta_default is None else np.asarray(theta_default, float)
        )
        self.u_lower_default = np.full(m, -u_max)
        self.u_upper_default = np.full(m, u_max)
        self.x_init_ranges = np.tile([-1.0, 1.0], (n, 1))
        self.h_first = h_first
        self.h_second = h_second

    def step(self, x, u, theta):
        x, u, theta = self.check_args(x, u, theta)
        return np.asarray(self._step_fn(x, u, theta), dtype=float)

    def _jacobians(self, x, u, theta):
        def jac(vec, apply):
            h = _fd_steps(vec, self.h_first)
            cols = []
            for j in range(vec.size):
                e = np.zeros_like(vec)
                e[j] = h[j]
                cols.append((apply(vec + e) - apply(vec - e)) / (2.0 * h[j]))
            return np.stack(cols, axis=1)

        A = jac(x, lambda xv: self.step(xv, u, theta))
        B = jac(u, lambda uv: self.step(x, uv, theta))
        FT = jac(theta, lambda tv: self.step(x, u, tv))
        return A, B, FT

    def linearize(self, x, u, theta, second_order=True):
        x, u, theta = self.check_args(x, u, theta)
        A, B, FT = self._jacobians(x, u, theta)
        ev = DynamicsEval(self.step(x, u, theta), A, B, FT)
        if not second_order:
            return ev

        def d_of(vec, rebuild):
            h = _fd_steps(vec, self.h_second)
            slabs = []
            for j in range(vec.size):
                e = np.zeros_like(vec)
                e[j] = h[j]
                Ap, Bp, _ = rebuild(vec + e)
                Am, Bm, _ = rebuild(vec - e)
                slabs.append((np.hstack([Ap, Bp]) - np.hstack([Am, Bm])) / (2.0 * h[j]))
            return np.stack(slabs, axis=2)

        ev.dD_dx = d_of(x, lambda xv: self._jacobians(xv, u, theta))
        ev.dD_du = d_of(u, lambda uv: self._jacobians(x, uv, theta))
        ev.dD_dtheta = d_of(theta, lambda tv: self._jacobians(x, u, tv))
        return ev


class CostModel:
    """Interface for a parametric stage cost g_t(x, u, theta_cost)."""

    p: int

    def value(self, x, u, theta, t: int) -> float:
        raise NotImplementedError

    def eval(self, x, u, theta, t: int) -> CostEval:
        raise NotImplementedError


class GoalWeightedCost(CostModel):
    """Weighted squared distance to a goal point in (x, u) space.

    value = 0.5 * sum_j w_j * (tau_j - goal_j)^2 with tau = (x, u).
    theta_cost packs (w, goal), each of length n+m.  The Hessian is diag(w);
    with unit weights it is the identity.
    """

    def __init__(self, n: int, m: int, w_default=None, goal_default=None):
        self.n, self.m = n, m
        q = n + m
        self.q = q
        self.p = 2 * q
        if w_default is None:
            w_default = np.concatenate([np.ones(n), 0.1 * np.ones(m)])
        if goal_default is None:
            goal_default = np.zeros(q)
        self.theta_default = np.concatenate([w_default, goal_default])

    def split(self, theta):
        theta = _check_vec("theta_cost", theta, self.p)
        return theta[: self.q], theta[self.q :]

    def value(self, x, u, theta, t: int) -> float:
        w, goal = self.split(theta)
        diff = np.concatenate([x, u]) - goal
        val = 0.5 * float(w @ diff**2)
        if not np.isfinite(val):
            raise NumericError("non-finite cost value", t)
        return val

    def eval(self, x, u, theta, t: int) -> CostEval:
        w, goal = self.split(theta)
        n, m, q = self.n, self.m, self.q
        diff = np.concatenate([x, u]) - goal
        C = np.diag(w)
        c = w * diff
        dC_dtheta = np.zeros((q, q, self.p))
        for j in range(q):
            dC_dtheta[j, j, j] = 1.0
        dc_dtheta = np.zeros((q, self.p))
        dc_dtheta[np.arange(q), np.arange(q)] = diff
        dc_dtheta[:, q:] = -np.diag(w)
        value = 0.5 * float(w @ diff**2)
        if not np.isfinite(value):
            raise NumericError("non-finite cost value", t)
        return CostEval(
            value=value,
            c=c,
            C=C,
            dC_dtheta=dC_dtheta,
            dc_dtheta=dc_dtheta,
            dC_dx=np.zeros((q, q, n)),
            dC_du=np.zeros((q, q, m)),
            dc_dx=C[:, :n].copy(),
            dc_du=C[:, n:].copy(),
        )


@dataclass
class ControlProblem:
    """Binds a dynamics model and a cost model into one parametric problem.

    ``learn`` selects which parameter block the single learnable vector theta
    refers to; the other block stays at the fixed values provided here (model
    defaults when omitted).  Downstream code sees a single theta of length
    ``p`` with derivative columns mapped accordingly.
    """

    dynamics: DynamicsModel
    cost: CostModel
    learn: str = "dynamics"  # "dynamics" | "cost" | "both"
    theta_dynamics_fixed: np.ndarray | None = None
    theta_cost_fixed: np.ndarray | None = None

    def __post_init__(self):
        if self.learn not in ("dynamics", "cost", "both"):
            raise ConfigurationError(f"unknown learn mode {self.learn!r}")
        if self.theta_dynamics_fixed is None:
            self.theta_dynamics_fixed = np.asarray(self.dynamics.theta_default, float)
        if self.theta_cost_fixed is None:
            self.theta_cost_fixed = np.asarray(self.cost.theta_default, float)

    @property
    def n(self) -> int:
        return self.dynamics.n

    @property
    def m(self) -> int:
        return self.dynamics.m

    @property
    def p(self) -> int:
        if self.learn == "dynamics":
            return self.dynamics.p
        if self.learn == "cost":
            return self.cost.p
        return self.dynamics.p + self.cost.p

    def split(self, theta: np.ndarray):
        theta = _check_vec("theta", theta, self.p)
        if self.learn == "dynamics":
            return theta, self.theta_cost_fixed
        if self.learn == "cost":
            return self.theta_dynamics_fixed, theta
        return theta[: self.dynamics.p], theta[self.dynamics.p :]

    def default_theta(self) -> np.ndarray:
        if self.learn == "dynamics":
            return self.theta_dynamics_fixed.copy()
        if self.learn == "cost":
            return self.theta_cost_fixed.copy()
        return np.concatenate([self.theta_dynamics_fixed, self.theta_cost_fixed])

    def step(self, x, u, theta):
        th_d, _ = self.split(theta)
        return self.dynamics.step(x, u, th_d)

    def linearize(self, x, u, theta, second_order=True):
        th_d, _ = self.split(theta)
        ev = self.dynamics.linearize(x, u, th_d, second_order=second_order)
        return self._remap_dyn(ev)

    def _remap_dyn(self, ev: DynamicsEval) -> DynamicsEval:
        if self.learn == "dynamics":
            return ev
        n, m = self.n, self.m
        pd = self.dynamics.p
        if self.learn == "cost":
            ev.df_dtheta = np.zeros((n, self.p))
            if ev.dD_dtheta is not None:
                ev.dD_dtheta = np.zeros((n, n + m, self.p))
            return ev
        df = np.zeros((n, self.p))
        df[:, :pd] = ev.df_dtheta
        ev.df_dtheta = df
        if ev.dD_dtheta is not None:
            dD = np.zeros((n, n + m, self.p))
            dD[:, :, :pd] = ev.dD_dtheta
            ev.dD_dtheta = dD
        return ev

    def cost_value(self, x, u, theta, t):
        _, th_c = self.split(theta)
        return self.cost.value(x, u, th_c, t)

    def cost_eval(self, x, u, theta, t) -> CostEval:
        _, th_c = self.split(theta)
        ce = self.cost.eval(x, u, th_c, t)
        if self.learn == "cost":
            return ce
        q = self.n + self.m
        if self.learn == "dynamics":
            ce.dC_dtheta = np.zeros((q, q, self.p))
            ce.dc_dtheta = np.zeros((q, self.p))
            return ce
        pd = self.dynamics.p
        dC = np.zeros((q, q, self.p))
        dC[:, :, pd:] = ce.dC_dtheta
        dc = np.zeros((q, self.p))
        dc[:, pd:] = ce.dc_dtheta
        ce.dC_dtheta, ce.dc_dtheta = dC, dc
        return ce

    def u_bounds(self):
        return self.dynamics.u_lower_default, self.dynamics.u_upper_default


def _default_linear_test() -> LinearModel:
    A0 = np.array([[0.9, 0.2], [-0.1, 0.95]])
    B0 = np.array([[0.0], [0.5]])
    EA = np.zeros((2, 2, 2))
    EA[0, 0, 1] = 0.1
    EA[1, 1, 0] = -0.05
    Gtheta = np.array([[0.02, 0.0], [0.0, 0.01]])
    return LinearModel(A0, B0, EA=EA, Gtheta=Gtheta, p=2)


MODEL_IDS = ("pendulum", "cartpole", "linear-test")


def get_model(model_id: str) -> DynamicsModel:
    """Look up a bundled dynamics model by string id."""
    if model_id == "pendulum":
        return Pendulum()
    if model_id == "cartpole":
        return Cartpole()
    if model_id == "linear-test":
        return _default_linear_test()
    raise ConfigurationError(
        f"unknown model id {model_id!r}; known ids: {', '.join(MODEL_IDS)}"
    )


def default_problem(model_id: str, learn: str = "dynamics") -> ControlProblem:
    """A ready-to-use problem: bundled model + goal-weighted cost at origin."""
    model = get_model(model_id)
    cost = GoalWeightedCost(model.n, model.m)
    return ControlProblem(model, cost, learn=learn)
