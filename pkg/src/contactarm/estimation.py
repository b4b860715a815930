"""Online contact-stiffness identification by recursive least squares.

The linearized spring model makes each force increment a linear measurement
of the (negated) contact stiffness: z = H phi + w with z the per-contact
force change, H the normal displacement J_u dq, and phi = -K_c. The
covariance recursion uses the Joseph form so P stays symmetric positive
semidefinite regardless of rounding, and estimates are projected onto the
nonpositive orthant because stiffness cannot be negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContactSetChanged(Exception):
    """Two log rows do not share the same active contacts."""


def _as_psd_matrix(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(n)
    if arr.shape != (n, n):
        raise ValueError(f"{name} must be scalar or ({n}, {n})")
    if not np.allclose(arr, arr.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(arr).min() < -1e-10:
        raise ValueError(f"{name} must be positive semidefinite")
    return arr


@dataclass
class RlsState:
    phi_hat: np.ndarray   # estimate of -K_c, nonpositive after projection
    P: np.ndarray         # covariance
    R: np.ndarray         # measurement noise covariance
    sample_count: int = 0


def rls_init(n_c: int, phi0=-1e7, P0=1e12, R=1e-6) -> RlsState:
    """Fresh estimator; the default prior stands in for a rigid contact."""
    phi = np.asarray(phi0, dtype=float) * np.ones(n_c) if np.ndim(phi0) == 0 else np.asarray(phi0, dtype=float).ravel()
    if phi.shape != (n_c,):
        raise ValueError("phi0 length mismatch")
    return RlsState(
        phi_hat=phi.copy(),
        P=_as_psd_matrix(P0, n_c, "P0"),
        R=_as_psd_matrix(R, n_c, "R"),
    )


def rls_update(state: RlsState, z, H) -> RlsState:
    """One gain/estimate/covariance recursion step.

    K = P H' (H P H' + R)^-1, Joseph-form covariance, then projection of the
    estimate onto phi <= 0.
    """
    n = state.phi_hat.shape[0]
    z = np.asarray(z, dtype=float).ravel()
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if z.shape != (n,) or H.shape != (n, n):
        raise ValueError("measurement/regressor dimension mismatch")
    if not np.all(np.isfinite(H)):
        raise ValueError("regressor must be finite")

    S = H @ state.P @ H.T + state.R
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > 1e15:
        raise np.linalg.LinAlgError("singular innovation covariance")
    K = state.P @ H.T @ np.linalg.inv(S)
    innovation = z - H @ state.phi_hat
    phi = state.phi_hat + K @ innovation
    IKH = np.eye(n) - K @ H
    P = IKH @ state.P @ IKH.T + K @ state.R @ K.T
    P = 0.5 * (P + P.T)
    phi = np.minimum(phi, 0.0)
    return RlsState(phi_hat=phi, P=P, R=state.R.copy(), sample_count=state.sample_count + 1)


def harvest_regressor(model, prev_record, curr_record):
    """Extract (z, H) from two consecutive closed-loop log records.

    z is the per-contact force change, H the diagonal of normal
    displacements computed with the Jacobian the simulator used for the
    step. Raises ContactSetChanged when the active sets differ.
    """
    keys_prev = sorted(prev_record.forces)
    keys_curr = sorted(curr_record.forces)
    if keys_prev != keys_curr:
        raise ContactSetChanged(f"{keys_prev} -> {keys_curr}")
    dq = np.asarray(curr_record.q, dtype=float) - np.asarray(prev_record.q, dtype=float)
    z = np.array([curr_record.forces[k] - prev_record.forces[k] for k in keys_prev])
    disp = np.array([float(np.asarray(prev_record.j_u[k]) @ dq) for k in keys_prev])
    return z, np.diag(disp)


class StiffnessEstimatorBank:
    """One scalar RLS estimator per contact key, spawned on first sight."""

    def __init__(self, phi0=-1e7, p0=1e12, r_noise=1e-6, excitation_gate=1e-6):
        self.phi0 = phi0
        self.p0 = p0
        self.r_noise = r_noise
        self.excitation_gate = excitation_gate
        self.states = {}

    def state(self, key) -> RlsState:
        if key not in self.states:
            self.states[key] = rls_init(1, phi0=self.phi0, P0=self.p0, R=self.r_noise)
        return self.states[key]

    def stiffness(self, key, cap: float) -> float:
        phi = float(self.state(key).phi_hat[0])
        return min(-phi, cap)

    def observe(self, keys, dq, f_prev, f_next, j_u):
        """Per-contact scalar updates, skipping unexcited samples."""
        dq = np.asarray(dq, dtype=float).ravel()
        for i, key in enumerate(keys):
            h = float(np.asarray(j_u[i]) @ dq)
            if abs(h) < self.excitation_gate:
                continue
            z = float(f_next[i] - f_prev[i])
            self.states[key] = rls_update(self.state(key), np.array([z]), np.array([[h]]))
