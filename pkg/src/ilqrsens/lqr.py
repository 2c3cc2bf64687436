"""Time-varying box-constrained affine LQR and its coefficient derivatives.

The problem solved here, over z_t = (y_t, w_t) with t = 0..T-1 (0-based):

    min   sum_t 0.5 z_t' C_t z_t + c_t' z_t
    s.t.  y_0 = x_init
          y_{t+1} = D_t z_t + d_t          (t < T-1)
          u_lower <= w_t <= u_upper

The backward pass is a Riccati recursion with a projected-Newton box QP on
each control block; the forward pass rolls out the affine policy
w_t = k_t + K_t y_t with clamped components pinned to their bound.  The last
entries D_{T-1}, d_{T-1} constrain nothing and receive zero gradients.

``lqr_grad_scalar`` differentiates a scalar function of the solution with
respect to every coefficient through one auxiliary solve of the same
structure (the adjoint of the frozen-active-set KKT system), so its cost is
O(T) like the solve itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "LqrProblem",
    "LqrBackward",
    "LqrSolution",
    "LqrGradients",
    "SolverFailure",
    "boxqp",
    "lqr_backward",
    "lqr_forward",
    "lqr_solve",
    "lqr_costates",
    "lqr_grad_scalar",
    "lqr_jacobian_batched",
    "lqr_sensitivity_solve",
]

REG_INIT = 1e-6
REG_SCALE = 10.0
REG_MAX = 1e6
DEGENERACY_TOL = 1e-10


class SolverFailure(RuntimeError):
    """Backward pass failed (indefinite control Hessian after max regularization)."""

    def __init__(self, message: str, t: int):
        super().__init__(f"{message} (t={t})")
        self.t = t


@dataclass
class LqrProblem:
    """Coefficients of one box-constrained affine LQR instance.

    D: (T, n, n+m), d: (T, n), C: (T, n+m, n+m), c: (T, n+m), x_init: (n,).
    Bounds may be (m,) vectors or (T, m) arrays for per-step boxes.
    """

    D: np.ndarray
    d: np.ndarray
    C: np.ndarray
    c: np.ndarray
    x_init: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray

    def __post_init__(self):
        self.D = np.asarray(self.D, float)
        self.d = np.asarray(self.d, float)
        self.C = np.asarray(self.C, float)
        self.c = np.asarray(self.c, float)
        self.x_init = np.asarray(self.x_init, float)
        T, n, nm = self.D.shape
        m = nm - n
        if m <= 0:
            raise ValueError("D must be (T, n, n+m) with m >= 1")
        if self.d.shape != (T, n) or self.C.shape != (T, nm, nm) or self.c.shape != (T, nm):
            raise ValueError("inconsistent coefficient shapes")
        if self.x_init.shape != (n,):
            raise ValueError("x_init has the wrong length")
        if not np.allclose(self.C, np.swapaxes(self.C, 1, 2), atol=1e-10):
            raise ValueError("C blocks must be symmetric")
        self.u_lower = np.broadcast_to(np.asarray(self.u_lower, float), (T, m)).copy()
        self.u_upper = np.broadcast_to(np.asarray(self.u_upper, float), (T, m)).copy()
        if np.any(self.u_lower > self.u_upper):
            raise ValueError("u_lower must be <= u_upper elementwise")

    @property
    def T(self) -> int:
        return self.D.shape[0]

    @property
    def n(self) -> int:
        return self.D.shape[1]

    @property
    def m(self) -> int:
        return self.D.shape[2] - self.D.shape[1]


@dataclass
class LqrBackward:
    """Backward-pass products: gains, value quadratics and Q-function blocks."""

    K: np.ndarray  # (T, m, n), clamped rows zero
    k: np.ndarray  # (T, m), clamped entries at their bound
    V: np.ndarray  # (T, n, n) value Hessians
    v: np.ndarray  # (T, n) value gradients at y = 0
    H: np.ndarray  # (T, n+m, n+m) Q-function Hessians (includes regularization)
    h: np.ndarray  # (T, n+m) Q-function linear terms
    free: np.ndarray  # (T, m) bool, True where the control component is free
    uu_chol: list = field(default_factory=list)  # per-step factor of H_uu[free, free]
    reg: float = 0.0  # largest regularization applied to any step
    degenerate: bool = False  # a bound was touched with (near-)zero multiplier


@dataclass
class LqrSolution:
    """Solution trajectory of the subproblem plus the policy that made it."""

    delta_x: np.ndarray  # (T, n)
    delta_u: np.ndarray  # (T, m)
    K: np.ndarray
    k: np.ndarray
    active_set: np.ndarray  # (T, m) bool, True where clamped at a bound
    clipped_beyond_backward: bool = False  # forward clip disagreed with backward sets


@dataclass
class LqrGradients:
    """Gradients of a scalar function of the solution w.r.t. coefficients."""

    dC: np.ndarray  # (T, n+m, n+m), symmetrized
    dc: np.ndarray  # (T, n+m)
    dD: np.ndarray  # (T, n, n+m)
    dd: np.ndarray  # (T, n)
    dx_init: np.ndarray  # (n,)
    dbound: np.ndarray  # (T, m): sensitivity to the active bound value, zero on free
    degenerate: bool = False


def boxqp(H, q, lb, ub, w0=None, max_iter=100, tol=1e-12):
    """Minimize 0.5 w'Hw + q'w subject to lb <= w <= ub by projected Newton.

    Returns (w, free_mask, degenerate).  ``free_mask`` is False on components
    clamped at a bound with a strictly outward-pointing gradient; a clamped
    component whose gradient is within DEGENERACY_TOL of zero is resolved as
    free and reported as degenerate.
    """
    m = q.size
    w = np.clip(np.zeros(m) if w0 is None else w0.copy(), lb, ub)
    free = np.ones(m, dtype=bool)
    degenerate = False
    for _ in range(max_iter):
        g = q + H @ w
        at_lb = (w <= lb + 1e-14) & (g > 0)
        at_ub = (w >= ub - 1e-14) & (g < 0)
        clamped = at_lb | at_ub
        free = ~clamped
        if not free.any():
            break
        gf = g[free]
        if np.linalg.norm(gf, np.inf) < tol:
            break
        Hff = H[np.ix_(free, free)]
        try:
            cf = scipy.linalg.cho_factor(Hff)
            step = -scipy.linalg.cho_solve(cf, gf)
        except np.linalg.LinAlgError:  # caller regularizes and retries
            raise SolverFailure("indefinite Hessian in box QP", -1)
        w_new = w.copy()
        w_new[free] = w[free] + step
        w_new = np.clip(w_new, lb, ub)
        # backtrack on the quadratic objective
        f_old = 0.5 * w @ H @ w + q @ w
        alpha = 1.0
        accepted = False
        for _ in range(20):
            w_try = w.copy()
            w_try[free] = w[free] + alpha * step
            w_try = np.clip(w_try, lb, ub)
            f_try = 0.5 * w_try @ H @ w_try + q @ w_try
            if f_try <= f_old - 1e-10 * alpha * abs(gf @ step):
                w = w_try
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
    g = q + H @ w
    at_lb = (w <= lb + 1e-14) & (g > DEGENERACY_TOL)
    at_ub = (w >= ub - 1e-14) & (g < -DEGENERACY_TOL)
    touching = ((w <= lb + 1e-14) | (w >= ub - 1e-14)) & (np.abs(g) <= DEGENERACY_TOL)
    if touching.any():
        degenerate = True  # resolved as inactive
    free = ~(at_lb | at_ub)
    return w, free, degenerate


def _chol_pd(M, reg, reg_max, t):
    """Cholesky with escalating diagonal regularization; returns (factor, reg)."""
    lam = 0.0
    while True:
        try:
            return scipy.linalg.cho_factor(M + lam * np.eye(M.shape[0])), lam
        except np.linalg.LinAlgError:
            lam = reg if lam == 0.0 else lam * REG_SCALE
            if lam > reg_max:
                raise SolverFailure("control Hessian not positive definite", t)


def lqr_backward(prob: LqrProblem) -> LqrBackward:
    """Riccati backward pass with projected-Newton handling of the control box."""
    T, n, m = prob.T, prob.n, prob.m
    K = np.zeros((T, m, n))
    k = np.zeros((T, m))
    V = np.zeros((T, n, n))
    v = np.zeros((T, n))
    Hs = np.zeros((T, n + m, n + m))
    hs = np.zeros((T, n + m))
    free = np.ones((T, m), dtype=bool)
    chols: list = [None] * T
    reg_used = 0.0
    degenerate = False

    V_next = np.zeros((n, n))
    v_next = np.zeros(n)
    for t in range(T - 1, -1, -1):
        if t == T - 1:
            H = prob.C[t].copy()
            h = prob.c[t].copy()
        else:
            DV = prob.D[t].T @ V_next
            H = prob.C[t] + DV @ prob.D[t]
            H = 0.5 * (H + H.T)
            h = prob.c[t] + prob.D[t].T @ (V_next @ prob.d[t] + v_next)
        Huu = H[n:, n:]
        Hux = H[n:, :n]
        hu = h[n:]

        lam = 0.0
        cf = None
        while True:
            try:
                w, fmask, degen = boxqp(
                    Huu + lam * np.eye(m), hu, prob.u_lower[t], prob.u_upper[t]
                )
                if fmask.any():
                    Hff = (Huu + lam * np.eye(m))[np.ix_(fmask, fmask)]
                    cf = scipy.linalg.cho_factor(Hff)
                break
            except (SolverFailure, np.linalg.LinAlgError):
                lam = REG_INIT if lam == 0.0 else lam * REG_SCALE
                if lam > REG_MAX:
                    raise SolverFailure(
                        "control Hessian not positive definite", t
                    ) from None
        reg_used = max(reg_used, lam)
        degenerate = degenerate or degen
        if lam > 0.0:
            Huu = Huu + lam * np.eye(m)
            H[n:, n:] = Huu

        Kt = np.zeros((m, n))
        if fmask.any():
            Kt[fmask, :] = -scipy.linalg.cho_solve(cf, Hux[fmask, :])
        kt = w

        K[t], k[t] = Kt, kt
        Hs[t], hs[t] = H, h
        free[t] = fmask
        chols[t] = cf

        Hxx = H[:n, :n]
        Hxu = H[:n, n:]
        V_t = Hxx + Hxu @ Kt + Kt.T @ Hux + Kt.T @ Huu @ Kt
        V_next = 0.5 * (V_t + V_t.T)
        v_next = h[:n] + Hxu @ kt + Kt.T @ (hu + Huu @ kt)
        V[t], v[t] = V_next, v_next

    return LqrBackward(K, k, V, v, Hs, hs, free, chols, reg_used, degenerate)


def lqr_forward(prob: LqrProblem, backward: LqrBackward, alpha: float = 1.0) -> LqrSolution:
    """Roll the affine policy through the linear dynamics.

    ``alpha`` scales the feedforward on free components (line-search knob);
    clamped components stay pinned to their bound regardless.
    """
    T, n, m = prob.T, prob.n, prob.m
    dx = np.zeros((T, n))
    du = np.zeros((T, m))
    active = np.zeros((T, m), dtype=bool)
    clipped = False
    y = prob.x_init.copy()
    for t in range(T):
        dx[t] = y
        w = backward.K[t] @ y
        w[backward.free[t]] += alpha * backward.k[t][backward.free[t]]
        w[~backward.free[t]] = backward.k[t][~backward.free[t]]
        w_clip = np.clip(w, prob.u_lower[t], prob.u_upper[t])
        newly = (w_clip != w) & backward.free[t]
        if newly.any():
            clipped = True
        du[t] = w_clip
        active[t] = ~backward.free[t] | (w_clip != w)
        if t < T - 1:
            y = prob.D[t] @ np.concatenate([y, du[t]]) + prob.d[t]
    return LqrSolution(dx, du, backward.K, backward.k, active, clipped)


def lqr_solve(prob: LqrProblem) -> tuple[LqrBackward, LqrSolution]:
    backward = lqr_backward(prob)
    return backward, lqr_forward(prob, backward)


def lqr_costates(prob: LqrProblem, backward: LqrBackward, sol: LqrSolution) -> np.ndarray:
    """Multipliers of the dynamics constraints: lambda_t = -(V_t y_t + v_t), (T, n)."""
    return -(
        np.einsum("tij,tj->ti", backward.V, sol.delta_x) + backward.v
    )


def _feedforward_pass(
    prob: LqrProblem,
    backward: LqrBackward,
    g: np.ndarray,
    d_off: np.ndarray | None = None,
    x_init: np.ndarray | None = None,
    clamp_values: np.ndarray | None = None,
):
    """Solve the frozen-active-set LQR with the same (C, D) and new linear data.

    min sum 0.5 a'C a + g'a  s.t. a_y0 = x_init, a_{y,t+1} = D a_t + d_off_t,
    with clamped control components pinned to ``clamp_values`` (default 0).
    Reuses the stored Q-function Hessians and gains; only the linear parts are
    recomputed, so the cost is O(T).  Returns (a, p) with a the stacked
    solution (T, n+m) and p the multipliers (T, n).
    """
    T, n, m = prob.T, prob.n, prob.m
    g = g.reshape(T, n + m)
    d_off = np.zeros((T, n)) if d_off is None else d_off
    clamp_values = np.zeros((T, m)) if clamp_values is None else clamp_values
    x0 = np.zeros(n) if x_init is None else x_init

    kff = np.zeros((T, m))
    vlin = np.zeros((T, n))
    v_next = np.zeros(n)
    for t in range(T - 1, -1, -1):
        if t == T - 1:
            h = g[t].copy()
        else:
            h = g[t] + prob.D[t].T @ (backward.V[t + 1] @ d_off[t] + v_next)
        H = backward.H[t]
        fmask = backward.free[t]
        kt = clamp_values[t].copy()
        if fmask.any():
            rhs = h[n:][fmask]
            if (~fmask).any():
                rhs = rhs + H[n:, n:][np.ix_(fmask, ~fmask)] @ clamp_values[t][~fmask]
            kt[fmask] = -scipy.linalg.cho_solve(backward.uu_chol[t], rhs)
        Kt = backward.K[t]
        v_next = h[:n] + H[:n, n:] @ kt + Kt.T @ (h[n:] + H[n:, n:] @ kt)
        kff[t] = kt
        vlin[t] = v_next

    a = np.zeros((T, n + m))
    p = np.zeros((T, n))
    y = x0.copy()
    for t in range(T):
        w = kff[t] + backward.K[t] @ y
        w[~backward.free[t]] = clamp_values[t][~backward.free[t]]
        a[t, :n] = y
        a[t, n:] = w
        p[t] = -(backward.V[t] @ y + vlin[t])
        if t < T - 1:
            y = prob.D[t] @ a[t] + d_off[t]
    return a, p


def lqr_grad_scalar(
    prob: LqrProblem,
    sol: LqrSolution,
    dL_dtau: np.ndarray,
    backward: LqrBackward | None = None,
) -> LqrGradients:
    """Gradients of a scalar L(solution) with respect to (C, c, D, d).

    ``dL_dtau`` is the cotangent on the stacked solution, shape (T, n+m) or
    flat (T*(n+m),).  Components on clamped controls are locally constant and
    contribute nothing.  One auxiliary solve of the same LQR structure gives
    all coefficient gradients; cost is O(T).
    """
    if backward is None:
        backward = lqr_backward(prob)
    T, n, m = prob.T, prob.n, prob.m
    g = np.asarray(dL_dtau, float).reshape(T, n + m)

    z = np.hstack([sol.delta_x, sol.delta_u])  # (T, n+m)
    lam = lqr_costates(prob, backward, sol)  # (T, n)
    a, paux = _feedforward_pass(prob, backward, g)

    dc = a.copy()
    dC = 0.5 * (np.einsum("ti,tj->tij", a, z) + np.einsum("ti,tj->tij", z, a))
    dD = np.zeros((T, n, n + m))
    dd = np.zeros((T, n))
    # dynamics-constraint channels exist for t < T-1 only
    dD[:-1] = -(
        np.einsum("ti,tj->tij", lam[1:], a[:-1])
        + np.einsum("ti,tj->tij", paux[1:], z[:-1])
    )
    dd[:-1] = -paux[1:]
    dx_init = -paux[0]

    # bound-value sensitivity: the clamp multiplier of the auxiliary problem
    dbound = np.zeros((T, m))
    for t in range(T):
        cl = ~backward.free[t]
        if not cl.any():
            continue
        resid = prob.C[t] @ a[t] + g[t]
        resid[:n] += paux[t]
        if t < T - 1:
            resid -= prob.D[t].T @ paux[t + 1]
        dbound[t][cl] = resid[n:][cl]
    return LqrGradients(
        dC, dc, dD, dd, dx_init, dbound, degenerate=backward.degenerate
    )


def lqr_jacobian_batched(
    prob: LqrProblem,
    sol: LqrSolution,
    out_indices,
    backward: LqrBackward | None = None,
) -> list[LqrGradients]:
    """Rows of the solution Jacobian via batches of unit cotangents.

    ``out_indices`` selects components of the stacked solution trajectory
    (step-major, (y, w) within a step).  Each selected component i yields the
    gradients of tau_i, identical to ``lqr_grad_scalar`` with the unit
    cotangent e_i; seeds are evaluated independently, so rows are independent
    and a batch equals the corresponding sequence of scalar calls.
    """
    if backward is None:
        backward = lqr_backward(prob)
    T, n, m = prob.T, prob.n, prob.m
    rows = []
    for idx in out_indices:
        seed = np.zeros(T * (n + m))
        seed[idx] = 1.0
        rows.append(lqr_grad_scalar(prob, sol, seed, backward=backward))
    return rows


def lqr_sensitivity_solve(
    prob: LqrProblem,
    sol: LqrSolution,
    backward: LqrBackward,
    dC: np.ndarray | None = None,
    dc: np.ndarray | None = None,
    dD: np.ndarray | None = None,
    dd: np.ndarray | None = None,
    dx_init: np.ndarray | None = None,
    dbound: np.ndarray | None = None,
) -> np.ndarray:
    """Directional derivative of the solution under coefficient perturbations.

    Solves the differentiated frozen-active-set KKT system for one direction
    (dC, dc, dD, dd, dx_init, dbound) and returns the solution perturbation
    as a (T, n+m) array.  This is the forward-mode counterpart of
    ``lqr_grad_scalar``.
    """
    T, n, m = prob.T, prob.n, prob.m
    z = np.hstack([sol.delta_x, sol.delta_u])
    lam = lqr_costates(prob, backward, sol)

    g = np.zeros((T, n + m))
    if dC is not None:
        g += np.einsum("tij,tj->ti", dC, z)
    if dc is not None:
        g += dc
    d_off = np.zeros((T, n))
    if dD is not None:
        g[:-1] -= np.einsum("tij,ti->tj", dD[:-1], lam[1:])
        d_off[:-1] += np.einsum("tij,tj->ti", dD[:-1], z[:-1])
    if dd is not None:
        d_off[:-1] += dd[:-1]
    clamp = np.zeros((T, m))
    if dbound is not None:
        clamp[~backward.free] = dbound[~backward.free]
    a, _ = _feedforward_pass(
        prob, backward, g, d_off=d_off, x_init=dx_init, clamp_values=clamp
    )
    return a
