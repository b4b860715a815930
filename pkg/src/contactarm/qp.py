"""Dense convex quadratic programming via a primal active-set method.

Solves
    min  0.5 x'Hx + g'x
    s.t. A_eq x  = b_eq
         A_in x <= b_in

for small dense problems (n up to a few tens of variables). The active-set
method yields exact complementary slackness and is fully deterministic:
ties in blocking constraints and in multiplier selection are broken by
lowest constraint index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

_PSD_TOL = 1e-10
_JITTER = 1e-12
_FEAS_TOL = 1e-7


@dataclass
class QuadraticProgram:
    """Problem data. Empty constraint blocks may be passed as None."""

    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_in: np.ndarray = None
    b_in: np.ndarray = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.H.shape[0]
        if self.H.shape != (n, n):
            raise ValueError("H must be square")
        if self.g.shape != (n,):
            raise ValueError("g length must match H")
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        if self.A_in is None:
            self.A_in = np.zeros((0, n))
            self.b_in = np.zeros(0)
        else:
            self.A_in = np.atleast_2d(np.asarray(self.A_in, dtype=float))
            self.b_in = np.asarray(self.b_in, dtype=float).ravel()
        if self.A_eq.shape[1] != n or self.A_in.shape[1] != n:
            raise ValueError("constraint matrices must have n columns")
        if self.A_eq.shape[0] != self.b_eq.shape[0] or self.A_in.shape[0] != self.b_in.shape[0]:
            raise ValueError("constraint matrix/vector row mismatch")
        if not np.allclose(self.H, self.H.T, atol=1e-9):
            raise ValueError("H must be symmetric")
        self._psd_probe()

    def _psd_probe(self):
        Hs = 0.5 * (self.H + self.H.T)
        try:
            np.linalg.cholesky(Hs + _JITTER * np.eye(Hs.shape[0]))
        except np.linalg.LinAlgError:
            w = np.linalg.eigvalsh(Hs)
            if w.min() < -_PSD_TOL:
                raise ValueError(f"H is not positive semidefinite (min eig {w.min():.3e})")

    @property
    def n(self) -> int:
        return self.H.shape[0]


@dataclass
class QpSolution:
    x: np.ndarray
    lambda_eq: np.ndarray
    mu_in: np.ndarray
    status: str
    kkt_residual: float
    iterations: int = 0
    active_set: tuple = field(default_factory=tuple)


def kkt_residual(prob: QuadraticProgram, sol: QpSolution) -> float:
    """Max-norm KKT residual of a candidate solution.

    Covers stationarity, primal feasibility, dual feasibility and
    complementary slackness; zero only at an exact optimum.
    """
    x, lam, mu = sol.x, sol.lambda_eq, sol.mu_in
    r = 0.0
    stat = prob.H @ x + prob.g
    if prob.A_eq.shape[0]:
        stat = stat + prob.A_eq.T @ lam
        r = max(r, float(np.max(np.abs(prob.A_eq @ x - prob.b_eq))))
    if prob.A_in.shape[0]:
        stat = stat + prob.A_in.T @ mu
        slack = prob.A_in @ x - prob.b_in
        r = max(r, float(np.max(np.maximum(slack, 0.0))))
        r = max(r, float(np.max(np.maximum(-mu, 0.0))))
        r = max(r, float(np.max(np.abs(mu * slack))))
    if stat.size:
        r = max(r, float(np.max(np.abs(stat))))
    return r


def _refined_solve(K, rhs, rounds: int = 2):
    """Linear solve with iterative refinement; lstsq fallback when singular."""
    try:
        sol = np.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
        for _ in range(rounds):
            r = rhs - K @ sol
            if np.max(np.abs(r), initial=0.0) < 1e-15:
                break
            sol = sol + np.linalg.solve(K, r)
        return sol
    except np.linalg.LinAlgError:
        jittered = K + 1e-10 * np.eye(K.shape[0])
        sol, *_ = np.linalg.lstsq(jittered, rhs, rcond=None)
        return sol


def _solve_kkt(H, g_at_x, A_active):
    """Equality-constrained step: min 0.5 p'Hp + g'p s.t. A_active p = 0."""
    n = H.shape[0]
    m = A_active.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    if m:
        K[:n, n:] = A_active.T
        K[n:, :n] = A_active
    rhs = np.concatenate([-g_at_x, np.zeros(m)])
    sol = _refined_solve(K, rhs)
    return sol[:n], sol[n:]


def _polish(H, g, A_eq, b_eq, A_in, b_in, working):
    """Re-solve the KKT system of the final active set to machine precision."""
    n = H.shape[0]
    A_act = np.vstack([A_eq, A_in[working]]) if (A_eq.shape[0] or working) else np.zeros((0, n))
    b_act = np.concatenate([b_eq, b_in[working]])
    m = A_act.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    if m:
        K[:n, n:] = A_act.T
        K[n:, :n] = A_act
    sol = _refined_solve(K, np.concatenate([-g, b_act]))
    x = sol[:n]
    nu = sol[n:]
    return x, nu[: A_eq.shape[0]], nu[A_eq.shape[0]:]


def _active_set_from_feasible(H, g, A_eq, b_eq, A_in, b_in, x0, tol, max_iter):
    """Primal active-set iteration from a feasible starting point."""
    x = x0.copy()
    n_eq = A_eq.shape[0]
    n_in = A_in.shape[0]
    working: list[int] = []
    iterations = 0

    for iterations in range(1, max_iter + 1):
        A_act = np.vstack([A_eq, A_in[working]]) if (n_eq or working) else np.zeros((0, len(x)))
        grad = H @ x + g
        p, nu = _solve_kkt(H, grad, A_act)

        if np.max(np.abs(p), initial=0.0) <= max(tol, 1e-12) * max(1.0, float(np.max(np.abs(x), initial=0.0))):
            lam = nu[:n_eq]
            mu_w = nu[n_eq:]
            if mu_w.size == 0 or mu_w.min() >= -tol:
                x, lam, mu_w = _polish(H, g, A_eq, b_eq, A_in, b_in, working)
                mu = np.zeros(n_in)
                for k, idx in enumerate(working):
                    mu[idx] = max(mu_w[k], 0.0)
                return x, lam, mu, OPTIMAL, iterations
            # drop the most negative multiplier, lowest index on ties
            worst = min(range(len(mu_w)), key=lambda k: (mu_w[k], working[k]))
            working.pop(worst)
            continue

        # step length limited by the nearest blocking inactive constraint
        alpha = 1.0
        blocking = -1
        for i in range(n_in):
            if i in working:
                continue
            d = float(A_in[i] @ p)
            if d > 1e-12:
                a_i = (b_in[i] - float(A_in[i] @ x)) / d
                if a_i < alpha - 1e-15:
                    alpha = max(a_i, 0.0)
                    blocking = i
        x = x + alpha * p
        if blocking >= 0:
            working.append(blocking)
            working.sort()

    lam = np.zeros(n_eq)
    mu = np.zeros(n_in)
    return x, lam, mu, MAX_ITER, iterations


def _phase1(prob: QuadraticProgram, tol, max_iter):
    """Minimum-violation subproblem producing a feasible point, or None."""
    n = prob.n
    m = prob.A_in.shape[0]
    if prob.A_eq.shape[0]:
        x_eq, *_ = np.linalg.lstsq(prob.A_eq, prob.b_eq, rcond=None)
    else:
        x_eq = np.zeros(n)
    if m == 0:
        return x_eq
    viol = prob.A_in @ x_eq - prob.b_in
    if np.max(viol) <= 1e-9:
        return x_eq

    # variables (x, s): min 0.5*delta*|x - x_eq|^2 + 0.5*|s|^2
    # s.t. A_eq x = b_eq, A_in x - s <= b_in, -s <= 0
    delta = 1e-8
    H1 = np.zeros((n + m, n + m))
    H1[:n, :n] = delta * np.eye(n)
    H1[n:, n:] = np.eye(m)
    g1 = np.concatenate([-delta * x_eq, np.zeros(m)])
    A_eq1 = np.hstack([prob.A_eq, np.zeros((prob.A_eq.shape[0], m))]) if prob.A_eq.shape[0] else np.zeros((0, n + m))
    A_in1 = np.vstack(
        [
            np.hstack([prob.A_in, -np.eye(m)]),
            np.hstack([np.zeros((m, n)), -np.eye(m)]),
        ]
    )
    b_in1 = np.concatenate([prob.b_in, np.zeros(m)])
    s0 = np.maximum(viol, 0.0) + 1e-3
    z0 = np.concatenate([x_eq, s0])
    z, _, _, status, _ = _active_set_from_feasible(
        H1, g1, A_eq1, prob.b_eq, A_in1, b_in1, z0, tol, max_iter
    )
    x0 = z[:n]
    if status != OPTIMAL:
        return None
    if float(np.max(prob.A_in @ x0 - prob.b_in, initial=0.0)) > _FEAS_TOL:
        return None
    return x0


def solve_qp(prob: QuadraticProgram, tol: float = 1e-9, max_iter: int = 200) -> QpSolution:
    """Solve a dense convex QP.

    Returns a QpSolution whose status is one of OPTIMAL, INFEASIBLE or
    MAX_ITER. On OPTIMAL the KKT residual is at most ~tol and inequality
    multipliers are nonnegative. Deterministic for fixed inputs.
    """
    x0 = _phase1(prob, tol, max_iter)
    if x0 is None:
        empty = QpSolution(
            x=np.full(prob.n, np.nan),
            lambda_eq=np.zeros(prob.A_eq.shape[0]),
            mu_in=np.zeros(prob.A_in.shape[0]),
            status=INFEASIBLE,
            kkt_residual=np.inf,
        )
        return empty
    x, lam, mu, status, iters = _active_set_from_feasible(
        prob.H, prob.g, prob.A_eq, prob.b_eq, prob.A_in, prob.b_in, x0, tol, max_iter
    )
    sol = QpSolution(x=x, lambda_eq=lam, mu_in=mu, status=status, kkt_residual=np.inf, iterations=iters)
    sol.kkt_residual = kkt_residual(prob, sol)
    sol.active_set = tuple(i for i in range(prob.A_in.shape[0]) if mu[i] > 0.0 or
                           abs(float(prob.A_in[i] @ x - prob.b_in[i])) <= 1e-9)
    if status == OPTIMAL and sol.kkt_residual > max(tol, 1e-8) * 10:
        sol.status = MAX_ITER
    return sol
