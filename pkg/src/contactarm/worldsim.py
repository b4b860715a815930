"""Quasi-static ground-truth simulator.

Each step takes the commanded joint setpoint of the impedance controller and
returns the new equilibrium. Soft contacts minimize the total energy of the
joint springs plus the contact springs, linearized once at the current
configuration; hard contacts minimize the joint-spring potential subject to
zero contact velocity, with the equality multipliers acting as the contact
forces. Contacts that would pull are released and the step re-solved.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import band as bd
from . import contact as ct
from . import kinematics as kin
from . import qp


class SimulationError(RuntimeError):
    pass


@dataclass
class WorldState:
    q: np.ndarray
    contact_set: ct.ContactSet
    band: bd.BandState = None
    step_index: int = 0


@dataclass
class StepResult:
    q_next: np.ndarray
    f_next: np.ndarray
    energy: float
    status: str
    released: tuple = ()


def soft_energy(model, contact_set, q_lin, q, q_cmd, f_active=None, active=None):
    """Linearized total energy at q: joint springs plus contact springs.

    Contact spring energy is expressed through the predicted force,
    f_i(q) = f_i - K_i J_i (q - q_lin), as sum f_i(q)^2 / (2 K_i).
    """
    idx = range(contact_set.n_c) if active is None else active
    f_all = contact_set.f_c if f_active is None else f_active
    e = 0.5 * float((q_cmd - q) @ (model.k_q * (q_cmd - q)))
    for pos, i in enumerate(idx):
        f_pred = f_all[pos if f_active is not None else i] - contact_set.k_c[i] * float(
            contact_set.j_u[i] @ (q - q_lin)
        )
        e += 0.5 * f_pred**2 / contact_set.k_c[i]
    return e


def step_soft(state: WorldState, q_cmd, model: kin.RobotModel) -> StepResult:
    """One Gauss-Newton step of the soft-contact energy minimization.

    Contacts whose updated spring force would go negative are released and
    the minimization repeated without them, so the returned forces are
    feasible for the unilateral contact model.
    """
    q_cmd = np.asarray(q_cmd, dtype=float).ravel()
    cs = state.contact_set
    if np.any(~np.isfinite(cs.k_c)):
        raise SimulationError("step_soft requires finite contact stiffnesses")
    K_q = np.diag(model.k_q)
    active = list(range(cs.n_c))
    released = []
    while True:
        if active:
            J = cs.j_u[active]
            k = cs.k_c[active]
            f = cs.f_c[active]
            H = K_q + J.T @ (k[:, None] * J)
            g = -(model.k_q * q_cmd + J.T @ f + J.T @ (k * (J @ state.q)))
        else:
            H = K_q
            g = -(model.k_q * q_cmd)
        sol = qp.solve_qp(qp.QuadraticProgram(H=H, g=g))
        if sol.status != qp.OPTIMAL:
            raise SimulationError(f"soft step qp failed: {sol.status}")
        q_next = sol.x
        if not active:
            f_next_active = np.zeros(0)
            break
        raw = cs.f_c[active] - cs.k_c[active] * (cs.j_u[active] @ (q_next - state.q))
        neg = raw < 0.0
        if not neg.any():
            f_next_active = raw
            break
        for pos in np.nonzero(neg)[0][::-1]:
            released.append(active[pos])
            active.pop(pos)
    f_next = np.zeros(cs.n_c)
    for pos, i in enumerate(active):
        f_next[i] = f_next_active[pos]
    energy = soft_energy(model, cs, state.q, q_next, q_cmd, f_active=None, active=active)
    return StepResult(q_next=q_next, f_next=f_next, energy=energy,
                      status=sol.status, released=tuple(sorted(released)))


def step_hard(state: WorldState, q_cmd, model: kin.RobotModel) -> StepResult:
    """Potential-energy minimum subject to zero normal contact velocity.

    The contact forces are the (negated) equality multipliers; negative
    forces mean the contact pulls, so it is dropped and the QP re-solved.
    """
    q_cmd = np.asarray(q_cmd, dtype=float).ravel()
    cs = state.contact_set
    K_q = np.diag(model.k_q)
    active = list(range(cs.n_c))
    released = []
    while True:
        if active:
            A = cs.j_u[active]
            b = A @ state.q
            sol = qp.solve_qp(qp.QuadraticProgram(H=K_q, g=-(model.k_q * q_cmd), A_eq=A, b_eq=b))
        else:
            sol = qp.solve_qp(qp.QuadraticProgram(H=K_q, g=-(model.k_q * q_cmd)))
        if sol.status != qp.OPTIMAL:
            raise SimulationError(f"hard step qp failed: {sol.status}")
        q_next = sol.x
        if not active:
            f_active = np.zeros(0)
            break
        f_active = -sol.lambda_eq
        neg = f_active < -1e-12
        if not neg.any():
            f_active = np.maximum(f_active, 0.0)
            break
        for pos in np.nonzero(neg)[0][::-1]:
            released.append(active[pos])
            active.pop(pos)
    f_next = np.zeros(cs.n_c)
    for pos, i in enumerate(active):
        f_next[i] = f_active[pos]
    energy = 0.5 * float((q_cmd - q_next) @ (model.k_q * (q_cmd - q_next)))
    return StepResult(q_next=q_next, f_next=f_next, energy=energy,
                      status=sol.status, released=tuple(sorted(released)))


@dataclass
class SimOptions:
    activation_dist: float = 1e-3
    mode: str = "soft"              # "soft" or "hard"
    rigid_stiffness: float = 1e7    # spring stand-in for rigid walls in soft mode
    sigma: int = bd.MODE_FREE       # band interaction mode
    band_density: float = 20.0
    band_k_neighbors: int = 8


@dataclass
class _PersistentContact:
    """Contact slot with spring memory surviving momentary separation."""

    key: tuple
    link: int
    source: tuple
    p_local: np.ndarray
    n_c: np.ndarray
    stiffness: float
    f: float = 0.0
    active: bool = True
    released: bool = False


class QuasiStaticSim:
    """Owns the world state and the persistent contact registry for one run."""

    def __init__(self, model, boxes=(), band_spec: bd.BandSpec = None,
                 options: SimOptions = None):
        self.model = model
        self.boxes = list(boxes)
        self.band_spec = band_spec
        self.opt = options or SimOptions()
        self.q = None
        self.q_cmd = None
        self.step_index = 0
        self.band_state = None
        self._registry = {}

    def reset(self, q0, q_cmd0=None):
        self.q = np.asarray(q0, dtype=float).copy()
        self.q_cmd = self.q.copy() if q_cmd0 is None else np.asarray(q_cmd0, dtype=float).copy()
        self.step_index = 0
        self._registry = {}
        self._refresh_band()
        self._update_registry()
        return self

    def _refresh_band(self):
        if self.band_spec is None:
            self.band_state = None
            return
        self.band_state = bd.simplified_eb_model(
            self.model, self.q, self.opt.sigma, self.band_spec,
            density=self.opt.band_density, k_neighbors=self.opt.band_k_neighbors,
        )

    def _contact_stiffness(self, source_kind, name):
        if source_kind == ct.SOURCE_BAND:
            return self.band_spec.k_band
        box = next(b for b in self.boxes if b.name == name)
        if box.rigid:
            return np.inf if self.opt.mode == "hard" else self.opt.rigid_stiffness
        return box.stiffness

    def _update_registry(self):
        detected = {
            c.key: c
            for c in ct.detect_contacts(
                self.model, self.q, self.boxes, band=self.band_state,
                activation_dist=self.opt.activation_dist,
            )
        }
        for key, rec in self._registry.items():
            if not rec.active:
                continue
            hit = detected.get(key)
            if hit is not None:
                rec.n_c = hit.n_c  # direction re-evaluated at the step start
            elif rec.f <= 0.0:
                rec.active = False  # unloaded and separated
        for key, hit in detected.items():
            rec = self._registry.get(key)
            if rec is None:
                self._registry[key] = _PersistentContact(
                    key=key, link=hit.link, source=hit.source,
                    p_local=hit.p_local.copy(), n_c=hit.n_c.copy(),
                    stiffness=self._contact_stiffness(hit.source[0], hit.source[1]),
                )
            elif not rec.active:
                if rec.released and hit.penetration <= 0.0:
                    continue  # hysteresis: re-activate only on true penetration
                rec.active = True
                rec.released = False
                rec.f = 0.0
                rec.p_local = hit.p_local.copy()
                rec.n_c = hit.n_c.copy()

    def _active_records(self):
        return [rec for key, rec in sorted(self._registry.items()) if rec.active]

    def contact_set(self) -> ct.ContactSet:
        """Assemble the ContactSet at the current configuration.

        Box contact rows are the reduced Jacobians at the frozen material
        point; a band contact row is the negated band-length gradient, so the
        spring law reproduces the tension force k_band * stretch.
        """
        recs = self._active_records()
        n_q = self.model.n_q
        rows = np.zeros((len(recs), n_q))
        contacts = []
        for i, rec in enumerate(recs):
            if rec.source[0] == ct.SOURCE_BAND:
                rows[i] = -bd.band_length_jacobian(
                    self.model, self.q, self.opt.sigma, self.band_spec,
                    density=self.opt.band_density, k_neighbors=self.opt.band_k_neighbors,
                )
            else:
                J = kin.point_jacobian(self.model, self.q, rec.link, rec.p_local)
                rows[i] = rec.n_c @ J
            contacts.append(
                ct.ContactPoint(
                    link=rec.link, p_world=np.zeros(3), p_local=rec.p_local,
                    n_c=rec.n_c, penetration=0.0, source=rec.source,
                )
            )
        return ct.ContactSet(
            contacts=contacts,
            f_c=np.array([rec.f for rec in recs]),
            k_c=np.array([rec.stiffness for rec in recs]),
            j_u=rows if recs else np.zeros((0, n_q)),
        )

    def world_state(self, contact_set=None) -> WorldState:
        cs = self.contact_set() if contact_set is None else contact_set
        return WorldState(q=self.q.copy(), contact_set=cs, band=self.band_state,
                          step_index=self.step_index)

    def step(self, q_cmd_next, contact_set=None) -> StepResult:
        """Advance one quasi-static step under the given command."""
        cs = self.contact_set() if contact_set is None else contact_set
        state = self.world_state(contact_set=cs)
        hard = self.opt.mode == "hard" and np.any(~np.isfinite(cs.k_c))
        stepper = step_hard if hard else step_soft
        result = stepper(state, q_cmd_next, self.model)

        recs = self._active_records()
        for i, rec in enumerate(recs):
            if i in result.released:
                rec.f = 0.0
                rec.active = False
                rec.released = True
            else:
                rec.f = float(result.f_next[i])
        self.q = result.q_next.copy()
        self.q_cmd = np.asarray(q_cmd_next, dtype=float).copy()
        self.step_index += 1
        self._refresh_band()
        self._update_registry()
        return result


@dataclass
class StepRecord:
    step: int
    q: np.ndarray
    q_cmd: np.ndarray
    q_ref: np.ndarray
    forces: dict          # contact key -> force
    j_u: dict             # contact key -> Jacobian row used in the producing step
    band_length: float
    stalled: bool = False


@dataclass
class RunLog:
    n_q: int
    records: list = field(default_factory=list)
    slots: list = field(default_factory=list)  # contact keys in activation order
    stalled: bool = False

    def add(self, record: StepRecord):
        for key in record.forces:
            if key not in self.slots:
                self.slots.append(key)
        self.records.append(record)

    def force_matrix(self) -> np.ndarray:
        out = np.zeros((len(self.records), len(self.slots)))
        for r, rec in enumerate(self.records):
            for k, f in rec.forces.items():
                out[r, self.slots.index(k)] = f
        return out

    def max_force(self, from_step: int = 0) -> float:
        if not self.slots:
            return 0.0
        fm = self.force_matrix()
        return float(fm[from_step:].max()) if len(fm) > from_step else 0.0

    def to_csv(self, path):
        header = (
            ["step"]
            + [f"q_{i}" for i in range(self.n_q)]
            + [f"qcmd_{i}" for i in range(self.n_q)]
            + [f"f_{i}" for i in range(len(self.slots))]
            + ["bandL"]
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for rec in self.records:
                row = [rec.step]
                row += [repr(float(v)) for v in rec.q]
                row += [repr(float(v)) for v in rec.q_cmd]
                row += [repr(float(rec.forces.get(key, 0.0))) for key in self.slots]
                row.append(repr(float(rec.band_length)))
                writer.writerow(row)

    def slot_names(self):
        return ["%d:%s:%s" % key for key in self.slots]


def run_closed_loop(sim: QuasiStaticSim, controller, reference, n_steps: int) -> RunLog:
    """Alternate controller queries and quasi-static steps, logging each state.

    `reference(step, q)` supplies the joint reference for the next step.
    `controller.step(...)` returns an object with q_cmd_next (and optionally
    a `stalled` flag); if the controller exposes `observe`, it receives the
    realized transition for online estimation. Each record carries the
    Jacobian used for the step that produced it, which is what the
    quasi-static balance identity is stated against.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    log = RunLog(n_q=sim.model.n_q)
    cs = sim.contact_set()
    keys = [c.key for c in cs.contacts]
    log.add(
        StepRecord(
            step=0, q=sim.q.copy(), q_cmd=sim.q_cmd.copy(), q_ref=sim.q.copy(),
            forces=dict(zip(keys, cs.f_c)), j_u=dict(zip(keys, cs.j_u)),
            band_length=sim.band_state.length if sim.band_state else 0.0,
        )
    )
    for l in range(n_steps):
        q_ref = reference(l, sim.q)
        cs = sim.contact_set()
        keys = [c.key for c in cs.contacts]
        q_prev = sim.q.copy()
        f_prev = cs.f_c.copy()
        ctrl = controller.step(
            q=sim.q, q_cmd=sim.q_cmd, f=cs.f_c, j_u=cs.j_u, q_ref=q_ref, keys=keys,
        )
        result = sim.step(ctrl.q_cmd_next, contact_set=cs)
        if hasattr(controller, "observe"):
            controller.observe(
                keys=keys, dq=result.q_next - q_prev, f_prev=f_prev,
                f_next=result.f_next, j_u=cs.j_u,
            )
        log.add(
            StepRecord(
                step=l + 1, q=sim.q.copy(), q_cmd=sim.q_cmd.copy(), q_ref=q_ref,
                forces=dict(zip(keys, result.f_next)), j_u=dict(zip(keys, cs.j_u)),
                band_length=sim.band_state.length if sim.band_state else 0.0,
                stalled=bool(getattr(ctrl, "stalled", False)),
            )
        )
        if getattr(ctrl, "stalled", False):
            log.stalled = True
            break
    return log
