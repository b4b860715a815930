"""Force-bounded reference tracking controllers.

The main law is a QP over (q, q_cmd, f): track the reference command while
the linearized quasi-static contact model ties the predicted state and
contact forces to the command, and inequality constraints cap the predicted
forces at the safety threshold and the per-step command motion. When the
measured force already exceeds the threshold the QP is infeasible; a relaxed
variant adds a force-minimizing objective and widens the bound to the
measured level so the controller can back out gracefully.

Null-space force-regulation laws are included as baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import estimation as est
from . import kinematics as kin
from . import qp


@dataclass
class ControllerConfig:
    f_max: float
    eps: float = 0.1
    eps_f: float = 1e-3
    dq_max: float = 0.02
    gamma_f: float = 0.01
    f_d_bounds: tuple = (0.0, None)   # None upper bound means f_max
    k_hat_max: float = 1e7            # rigid contacts enter as a large finite stiffness
    k_hat_min: float = 1e-3

    def __post_init__(self):
        if self.f_max <= 0.0:
            raise ValueError("f_max must be positive")
        if self.eps < 0.0 or self.eps_f < 0.0:
            raise ValueError("smoothing weights must be nonnegative")
        if self.dq_max <= 0.0:
            raise ValueError("dq_max must be positive")

    @property
    def f_d_interval(self):
        lo, hi = self.f_d_bounds
        return lo, (self.f_max if hi is None else hi)


@dataclass
class ControlStep:
    q_cmd_next: np.ndarray
    q_pred: np.ndarray
    f_pred: np.ndarray
    relaxed: bool = False
    qp_status: str = qp.OPTIMAL
    stalled: bool = False


def _control_qp(cfg, model, k_hat, q, q_cmd_prev, f, j_u, q_ref, f_bound, eps_f):
    """Assemble and solve the control QP.

    Variables are stacked as z = [q_next, q_cmd_next, f_next].
    """
    n_q = model.n_q
    n_c = len(f)
    n = 2 * n_q + n_c
    sl_q = slice(0, n_q)
    sl_c = slice(n_q, 2 * n_q)
    sl_f = slice(2 * n_q, n)

    H = np.zeros((n, n))
    H[sl_c, sl_c] = 2.0 * (1.0 + cfg.eps) * np.eye(n_q)
    g = np.zeros(n)
    g[sl_c] = -2.0 * (q_ref + cfg.eps * q_cmd_prev)
    if eps_f > 0.0 and n_c:
        H[sl_f, sl_f] = 2.0 * eps_f * np.eye(n_c)

    # quasi-static balance: K_q (q - q_cmd) - J_u' f = 0
    A_bal = np.zeros((n_q, n))
    A_bal[:, sl_q] = np.diag(model.k_q)
    A_bal[:, sl_c] = -np.diag(model.k_q)
    if n_c:
        A_bal[:, sl_f] = -j_u.T
    b_bal = np.zeros(n_q)
    # spring model: f + K_hat J_u q = f_prev + K_hat J_u q_prev
    if n_c:
        A_spr = np.zeros((n_c, n))
        A_spr[:, sl_q] = k_hat[:, None] * j_u
        A_spr[:, sl_f] = np.eye(n_c)
        b_spr = f + k_hat * (j_u @ q)
        A_eq = np.vstack([A_bal, A_spr])
        b_eq = np.concatenate([b_bal, b_spr])
    else:
        A_eq, b_eq = A_bal, b_bal

    rows = []
    rhs = []
    if n_c:
        F = np.zeros((n_c, n))
        F[:, sl_f] = np.eye(n_c)
        rows.append(F)
        rhs.append(f_bound)
    C = np.zeros((n_q, n))
    C[:, sl_c] = np.eye(n_q)
    rows += [C, -C]
    rhs += [q_cmd_prev + cfg.dq_max, -(q_cmd_prev - cfg.dq_max)]
    A_in = np.vstack(rows)
    b_in = np.concatenate(rhs)

    sol = qp.solve_qp(qp.QuadraticProgram(H=H, g=g, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in))
    return sol, (sl_q, sl_c, sl_f)


def contact_aware_step(cfg: ControllerConfig, model: kin.RobotModel, k_hat,
                       q, q_cmd_prev, f, j_u, q_ref) -> ControlStep:
    """One step of the force-bounded tracking QP.

    Falls back to the relaxed variant when infeasible (typically because a
    measured force already violates the bound); if even that fails the
    command is held and the step is flagged stalled.
    """
    q = np.asarray(q, dtype=float).ravel()
    q_cmd_prev = np.asarray(q_cmd_prev, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    q_ref = np.asarray(q_ref, dtype=float).ravel()
    j_u = np.atleast_2d(np.asarray(j_u, dtype=float)) if np.size(j_u) else np.zeros((0, model.n_q))
    k_hat = np.clip(np.asarray(k_hat, dtype=float).ravel(), cfg.k_hat_min, cfg.k_hat_max)
    if np.any(f < 0.0):
        raise ValueError("measured contact forces must be nonnegative")

    f_bound = np.full(len(f), cfg.f_max)
    sol, slices = _control_qp(cfg, model, k_hat, q, q_cmd_prev, f, j_u, q_ref, f_bound, 0.0)
    if sol.status == qp.OPTIMAL:
        return _pack_step(model, cfg, sol, slices, relaxed=False)
    return relaxed_step(cfg, model, k_hat, q, q_cmd_prev, f, j_u, q_ref)


def relaxed_step(cfg: ControllerConfig, model: kin.RobotModel, k_hat,
                 q, q_cmd_prev, f, j_u, q_ref) -> ControlStep:
    """Infeasibility fallback: add a force-minimizing term and admit the
    measured force level as a per-contact bound."""
    q = np.asarray(q, dtype=float).ravel()
    q_cmd_prev = np.asarray(q_cmd_prev, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    q_ref = np.asarray(q_ref, dtype=float).ravel()
    j_u = np.atleast_2d(np.asarray(j_u, dtype=float)) if np.size(j_u) else np.zeros((0, model.n_q))
    k_hat = np.clip(np.asarray(k_hat, dtype=float).ravel(), cfg.k_hat_min, cfg.k_hat_max)

    f_bound = np.maximum(f, cfg.f_max)
    # the force-minimizing term engages only when a measured force actually
    # violates the threshold; at f == f_max the relaxation is the identity
    eps_f = cfg.eps_f if np.any(f > cfg.f_max) else 0.0
    sol, slices = _control_qp(cfg, model, k_hat, q, q_cmd_prev, f, j_u, q_ref, f_bound, eps_f)
    if sol.status != qp.OPTIMAL:
        hold = ControlStep(
            q_cmd_next=q_cmd_prev.copy(), q_pred=q.copy(), f_pred=f.copy(),
            relaxed=True, qp_status=sol.status, stalled=True,
        )
        return hold
    return _pack_step(model, cfg, sol, slices, relaxed=True)


def _pack_step(model, cfg, sol, slices, relaxed) -> ControlStep:
    sl_q, sl_c, sl_f = slices
    q_cmd_next = model.clamp(sol.x[sl_c])
    return ControlStep(
        q_cmd_next=q_cmd_next,
        q_pred=sol.x[sl_q],
        f_pred=sol.x[sl_f].copy(),
        relaxed=relaxed,
        qp_status=sol.status,
    )


def nullspace_force_step(cfg: ControllerConfig, j_1, f, f_d, qdot_0, damping=1e-6):
    """Gradient force regulation plus a null-space secondary motion.

    qdot = gamma_f (K_c J_u)' (f - f_d) + (I - J1^# J1) qdot_0 with a damped
    pseudoinverse.
    """
    j_1 = np.atleast_2d(np.asarray(j_1, dtype=float))
    f = np.asarray(f, dtype=float).ravel()
    f_d = np.asarray(f_d, dtype=float).ravel()
    qdot_0 = np.asarray(qdot_0, dtype=float).ravel()
    lo, hi = cfg.f_d_interval
    if np.any(f_d < lo - 1e-12) or np.any(f_d > hi + 1e-12):
        raise ValueError("f_d outside configured bounds")
    m = j_1.shape[0]
    pinv = j_1.T @ np.linalg.inv(j_1 @ j_1.T + damping * np.eye(m))
    N = np.eye(j_1.shape[1]) - pinv @ j_1
    return cfg.gamma_f * j_1.T @ (f - f_d) + N @ qdot_0


def goal_task_reference(q, q_goal, step: float) -> np.ndarray:
    """Advance the reference toward the goal by at most `step`, idempotent there."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    q = np.asarray(q, dtype=float).ravel()
    q_goal = np.asarray(q_goal, dtype=float).ravel()
    diff = q_goal - q
    dist = float(np.linalg.norm(diff))
    if dist <= step:
        return q_goal.copy()
    return q + step * diff / dist


class ContactAwareController:
    """Closed-loop adapter: QP control law plus per-contact stiffness RLS.

    Holds one scalar estimator per contact key, started from the rigid prior,
    and feeds current estimates into every control step.
    """

    def __init__(self, cfg: ControllerConfig, model: kin.RobotModel,
                 phi0: float = -1e7, p0: float = 1e12, r_noise: float = 1e-6,
                 excitation_gate: float = 1e-6):
        self.cfg = cfg
        self.model = model
        self.bank = est.StiffnessEstimatorBank(
            phi0=phi0, p0=p0, r_noise=r_noise, excitation_gate=excitation_gate,
        )

    def step(self, q, q_cmd, f, j_u, q_ref, keys) -> ControlStep:
        k_hat = np.array([self.bank.stiffness(key, self.cfg.k_hat_max) for key in keys])
        return contact_aware_step(self.cfg, self.model, k_hat, q, q_cmd, f, j_u, q_ref)

    def observe(self, keys, dq, f_prev, f_next, j_u):
        self.bank.observe(keys, dq, f_prev, f_next, j_u)


class ReferenceTracker:
    """Baseline: pass the reference straight through as the command."""

    def step(self, q, q_cmd, f, j_u, q_ref, keys) -> ControlStep:
        q_ref = np.asarray(q_ref, dtype=float)
        return ControlStep(
            q_cmd_next=q_ref.copy(), q_pred=q_ref.copy(),
            f_pred=np.asarray(f, dtype=float).copy(),
        )
