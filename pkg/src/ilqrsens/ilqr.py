"""The iLQR fixed-point iteration.

One iteration linearizes the dynamics and quadraticizes the cost around the
current trajectory, solves the resulting box-constrained LQR subproblem in
deviation coordinates, applies the control update, and re-rolls the states
through the true dynamics.  Iterating to convergence produces a trajectory
that the iteration maps onto itself; that fixed point is what the
differentiation machinery in ``implicit_diff`` works on.

The subproblem's offset slot carries the dynamics defect
r_t = f(x_t, u_t, theta) - x_{t+1}, which vanishes on feasible input
trajectories.  This keeps the iteration map well defined (and smooth) under
the infinitesimally infeasible inputs probed by finite-difference oracles.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .lqr import (
    LqrBackward,
    LqrProblem,
    LqrSolution,
    lqr_backward,
    lqr_forward,
)
from .models import ControlProblem, NumericError

__all__ = [
    "Trajectory",
    "IlqrOptions",
    "IlqrResult",
    "rollout",
    "trajectory_cost",
    "build_subproblem",
    "iteration_map",
    "ilqr_solve",
]


@dataclass
class Trajectory:
    """Paired state/control sequences over the horizon: X (T, n), U (T, m)."""

    X: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, float)
        self.U = np.asarray(self.U, float)
        if self.X.ndim != 2 or self.U.ndim != 2 or self.X.shape[0] != self.U.shape[0]:
            raise ValueError("X and U must be (T, n) and (T, m)")

    @property
    def T(self) -> int:
        return self.X.shape[0]

    def stacked(self) -> np.ndarray:
        """Flat (T*(n+m),) vector, step-major with (x, u) inside each step."""
        return np.hstack([self.X, self.U]).ravel()

    def copy(self) -> "Trajectory":
        return Trajectory(self.X.copy(), self.U.copy())


@dataclass
class IlqrOptions:
    horizon: int = 10
    fp_tol: float = 1e-8
    max_iter: int = 200
    line_search: bool = True
    u_lower: np.ndarray | None = None  # defaults to the model's box
    u_upper: np.ndarray | None = None
    alphas: np.ndarray = field(
        default_factory=lambda: 0.5 ** np.arange(11, dtype=float)
    )

    def bounds(self, problem: ControlProblem):
        lo, hi = problem.u_bounds()
        lo = lo if self.u_lower is None else np.asarray(self.u_lower, float)
        hi = hi if self.u_upper is None else np.asarray(self.u_upper, float)
        return lo, hi


@dataclass
class IlqrResult:
    """Converged (or stalled) iLQR solve with everything the backward needs."""

    traj: Trajectory
    K: np.ndarray  # (T, m, n) gains of the final backward pass at traj
    k: np.ndarray  # (T, m)
    iterations: int
    residual: float
    converged: bool
    cost: float
    cost_history: list[float]
    subproblem: LqrProblem  # subproblem built at traj
    backward: LqrBackward  # backward pass at traj
    solution: LqrSolution  # its (near-zero, at a fixed point) solution
    solve_time: float = 0.0

    @property
    def gains(self):
        return self.K, self.k


def rollout(problem: ControlProblem, x_init: np.ndarray, U: np.ndarray, theta) -> np.ndarray:
    """States produced by applying U open loop through the true dynamics."""
    T = U.shape[0]
    X = np.zeros((T, problem.n))
    X[0] = x_init
    for t in range(T - 1):
        X[t + 1] = problem.step(X[t], U[t], theta)
    if not np.isfinite(X).all():
        raise NumericError("non-finite state in rollout")
    return X


def trajectory_cost(problem: ControlProblem, traj: Trajectory, theta) -> float:
    return sum(
        problem.cost_value(traj.X[t], traj.U[t], theta, t) for t in range(traj.T)
    )


def build_subproblem(
    problem: ControlProblem, traj: Trajectory, theta, opts: IlqrOptions
) -> tuple[LqrProblem, list]:
    """Local LQR model around ``traj``: linearization, quadratic cost, defect."""
    T = traj.T
    n, m = problem.n, problem.m
    lo, hi = opts.bounds(problem)
    D = np.zeros((T, n, n + m))
    d = np.zeros((T, n))
    C = np.zeros((T, n + m, n + m))
    c = np.zeros((T, n + m))
    lb = np.zeros((T, m))
    ub = np.zeros((T, m))
    evals = []
    for t in range(T):
        ev = problem.linearize(traj.X[t], traj.U[t], theta, second_order=False)
        ce = problem.cost_eval(traj.X[t], traj.U[t], theta, t)
        evals.append((ev, ce))
        D[t] = np.hstack([ev.A, ev.B])
        if t < T - 1:
            d[t] = ev.next_state - traj.X[t + 1]  # dynamics defect
        C[t] = ce.C
        c[t] = ce.c
        lb[t] = lo - traj.U[t]
        ub[t] = hi - traj.U[t]
    prob = LqrProblem(D, d, C, c, np.zeros(n), lb, ub)
    return prob, evals


def iteration_map(
    problem: ControlProblem,
    traj: Trajectory,
    theta,
    opts: IlqrOptions,
    alpha: float = 1.0,
    return_info: bool = False,
):
    """One full iLQR pass: linearize, solve the subproblem, update, re-roll.

    The feedforward is scaled by ``alpha`` (1.0 is the plain map whose fixed
    point is differentiated; the line search in ``ilqr_solve`` retries with
    smaller values).  Output states are re-rolled through the true dynamics,
    so the output is always dynamically feasible.
    """
    subprob, _ = build_subproblem(problem, traj, theta, opts)
    backward = lqr_backward(subprob)
    sol = lqr_forward(subprob, backward, alpha=alpha)
    lo, hi = opts.bounds(problem)
    U_new = np.clip(traj.U + sol.delta_u, lo, hi)
    X_new = rollout(problem, traj.X[0], U_new, theta)
    new = Trajectory(X_new, U_new)
    if return_info:
        return new, (subprob, backward, sol)
    return new


def ilqr_solve(
    problem: ControlProblem,
    x_init: np.ndarray,
    theta,
    opts: IlqrOptions,
    U0: np.ndarray | None = None,
) -> IlqrResult:
    """Iterate the map to a fixed point.

    Convergence is declared when the full-step control change of one more
    iteration is below ``fp_tol`` in max norm.  The returned gains, subproblem
    and backward pass are recomputed at the final trajectory, so they are
    consistent with the fixed point itself.
    """
    t_start = time.perf_counter()
    T = opts.horizon
    lo, hi = opts.bounds(problem)
    if U0 is None:
        U = np.clip(np.zeros((T, problem.m)), lo, hi)
    else:
        U = np.clip(np.asarray(U0, float).copy(), lo, hi)
    X = rollout(problem, np.asarray(x_init, float), U, theta)
    traj = Trajectory(X, U)
    cost = trajectory_cost(problem, traj, theta)
    history = [cost]

    converged = False
    residual = np.inf
    iterations = 0
    final = None
    for _ in range(opts.max_iter):
        iterations += 1
        subprob, _ = build_subproblem(problem, traj, theta, opts)
        backward = lqr_backward(subprob)
        sol_full = lqr_forward(subprob, backward, alpha=1.0)
        residual = float(np.abs(sol_full.delta_u).max())
        if residual <= opts.fp_tol:
            converged = True
            final = (subprob, backward, sol_full)
            break
        accepted = False
        alphas = opts.alphas if opts.line_search else opts.alphas[:1]
        for alpha in alphas:
            sol = sol_full if alpha == 1.0 else lqr_forward(subprob, backward, alpha=alpha)
            U_new = np.clip(traj.U + sol.delta_u, lo, hi)
            X_new = rollout(problem, traj.X[0], U_new, theta)
            cand = Trajectory(X_new, U_new)
            cand_cost = trajectory_cost(problem, cand, theta)
            if cand_cost < cost or not opts.line_search:
                residual = float(np.abs(U_new - traj.U).max())
                traj, cost = cand, cand_cost
                history.append(cost)
                accepted = True
                break
        if not accepted:
            break  # stalled: no step improves the cost

    if final is None:
        # re-linearize at the returned trajectory so gains, active sets and
        # value functions are evaluated exactly where the caller sees them
        subprob, _ = build_subproblem(problem, traj, theta, opts)
        backward = lqr_backward(subprob)
        sol = lqr_forward(subprob, backward, alpha=1.0)
        final_residual = float(np.abs(sol.delta_u).max())
        if final_residual <= opts.fp_tol:
            converged = True
            residual = final_residual
    else:
        subprob, backward, sol = final
    return IlqrResult(
        traj=traj,
        K=backward.K,
        k=backward.k,
        iterations=iterations,
        residual=residual,
        converged=converged,
        cost=cost,
        cost_history=history,
        subproblem=subprob,
        backward=backward,
        solution=sol,
        solve_time=time.perf_counter() - t_start,
    )
