"""Physics-aware synchronization of a physical agent onto its virtual twin.

The twin never copies state. Between received updates it dead-reckons with
the last known applied force through the same semi-implicit integrator the
physical side uses; on each received update it measures the synchronization
error at the update's send instant (ring history lookup) and, when the error
exceeds the adaptive thresholds, applies a PD correction force held until
the next update or a short expiry, whichever comes first, so long blackouts
fall back to pure dead reckoning. An analytic error envelope derived from
Lipschitz dynamics runs alongside and the loop flags any sample exceeding it.

Units: positions m, velocities m/s, forces N, angles rad, time simulated s.
"""

from __future__ import annotations

import math
import struct
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .netsim import NetLink, PiecewiseConstant, SimClock

GRAVITY = 9.81

Vec3 = np.ndarray


def vec3(x: float = 0.0, y: float = 0.0, z: float = 0.0) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


def as_vec3(v) -> Vec3:
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {arr.shape}")
    return arr.copy()


class InvalidStep(ValueError):
    """Integration step with a non-positive dt."""


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = (angle + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class TwinState:
    """Position/velocity/acceleration plus heading of one agent at time t."""

    p: Vec3
    v: Vec3
    a: Vec3
    heading: float
    t: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", as_vec3(self.p))
        object.__setattr__(self, "v", as_vec3(self.v))
        object.__setattr__(self, "a", as_vec3(self.a))
        for name in ("p", "v", "a"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")

    @staticmethod
    def at_rest(t: float = 0.0) -> "TwinState":
        return TwinState(vec3(), vec3(), vec3(), 0.0, t)


@dataclass(frozen=True)
class PhysicalParams:
    """Plant parameters for the predictive model.

    friction maps terrain class to a Coulomb coefficient; "default" is the
    fallback. drag is a linear coefficient in N*s/m.
    """

    mass: float
    diameter: float = 0.5
    friction: Mapping[str, float] = field(default_factory=lambda: {"default": 0.0})
    drag: float = 0.0
    gravity: float = GRAVITY

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.diameter <= 0:
            raise ValueError("diameter must be positive")
        if any(mu < 0 for mu in self.friction.values()):
            raise ValueError("friction coefficients must be >= 0")

    def mu(self, terrain: str) -> float:
        if terrain in self.friction:
            return self.friction[terrain]
        return self.friction.get("default", 0.0)


def resistive_force(v: Vec3, params: PhysicalParams, terrain: str = "default") -> Vec3:
    """Coulomb + linear drag resistance; exactly zero at zero velocity."""
    speed = float(np.linalg.norm(v))
    if speed == 0.0:
        return vec3()
    coulomb = params.mu(terrain) * params.mass * params.gravity * (v / speed)
    return coulomb + params.drag * v


def predict_step(
    state: TwinState,
    f_phys: Vec3,
    params: PhysicalParams,
    terrain: str = "default",
    dt: float = 0.01,
) -> TwinState:
    """One semi-implicit integrator step of the predictive model.

    a = (f_phys - f_res) / m, v' = v + a*dt, p' = p + v'*dt. The velocity is
    updated first and the new velocity moves the position, which is what
    keeps long dead-reckoning stretches stable.
    """
    if dt <= 0:
        raise InvalidStep(f"dt must be positive, got {dt}")
    f_phys = as_vec3(f_phys)
    f_res = resistive_force(state.v, params, terrain)
    a = (f_phys - f_res) / params.mass
    v_next = state.v + a * dt
    p_next = state.p + v_next * dt
    return TwinState(p_next, v_next, a, state.heading, state.t + dt)


def sync_errors(phys: TwinState, pred: TwinState) -> tuple[Vec3, Vec3, float]:
    """(position error, velocity error, wrapped heading error in (-pi, pi])."""
    e_pos = phys.p - pred.p
    e_vel = phys.v - pred.v
    e_rot = wrap_angle(phys.heading - pred.heading)
    return e_pos, e_vel, e_rot


@dataclass
class SyncController:
    """PD gains, base gate thresholds, and the candidate gain grid.

    t_ref and cap_factor shape the adaptive threshold law; response_mass,
    accuracy_weight and energy_weight parameterize the gain-scheduling cost.
    disconnect_duration tracks the live gap length during a run.
    """

    kp: float = 40.0
    kd: float = 30.0
    eps_pos: float = 0.05
    eps_vel: float = 0.1
    gain_grid: tuple[tuple[float, float], ...] = ()
    disconnect_duration: float = 0.0
    t_ref: float = 10.0
    cap_factor: float = 4.0
    response_mass: float = 1.0
    accuracy_weight: float = 0.8
    energy_weight: float = 0.2
    heading_gain: float = 1.0
    f_corr_max: float = math.inf  # actuator saturation for the correction force
    # once the gate opens, corrections continue until the error falls below
    # this fraction of the threshold; stops the error riding the gate boundary
    gate_hysteresis: float = 0.4

    def __post_init__(self) -> None:
        if self.kp < 0 or self.kd < 0:
            raise ValueError("gains must be >= 0")
        if self.eps_pos <= 0 or self.eps_vel <= 0:
            raise ValueError("thresholds must be positive")


def adaptive_thresholds(
    ctrl: SyncController, loss_rate: float, disconnect_duration: float
) -> tuple[float, float]:
    """Relax gate thresholds with link degradation.

    eps = eps_base * (1 + disconnect/t_ref) * (1 + loss), capped at
    cap_factor times the base. Healthy links give the base thresholds back.
    """
    factor = (1.0 + max(disconnect_duration, 0.0) / ctrl.t_ref) * (1.0 + max(loss_rate, 0.0))
    factor = min(factor, ctrl.cap_factor)
    return ctrl.eps_pos * factor, ctrl.eps_vel * factor


def pd_correct(
    e_pos: Vec3,
    e_vel: Vec3,
    ctrl: SyncController,
    thresholds: tuple[float, float] | None = None,
) -> Vec3:
    """Gated PD correction force: Kp*e_pos + Kd*e_vel, or zero.

    The gate opens when either error norm exceeds its threshold (base
    thresholds unless the adaptive pair is supplied).
    """
    eps_pos, eps_vel = thresholds if thresholds is not None else (ctrl.eps_pos, ctrl.eps_vel)
    e_pos = as_vec3(e_pos)
    e_vel = as_vec3(e_vel)
    if np.linalg.norm(e_pos) <= eps_pos and np.linalg.norm(e_vel) <= eps_vel:
        return vec3()
    f = ctrl.kp * e_pos + ctrl.kd * e_vel
    norm = float(np.linalg.norm(f))
    if norm > ctrl.f_corr_max:
        f = f * (ctrl.f_corr_max / norm)
    return f


GainSample = tuple[float, Vec3, Vec3]  # (dt, e_pos, e_vel)


GAIN_ROLLOUT_STEPS = 10


def _gain_candidate_cost(
    kp: float,
    kd: float,
    window: Sequence[GainSample],
    ctrl: SyncController,
    force_scale: float,
) -> float:
    """Simulated window-ahead cost of one gain candidate.

    Each window sample seeds a short rollout of the correction loop as a
    double integrator with delayed feedback: the sample's dt is the staleness
    of the information the correction acts on, so the force at each step is
    computed from the state `lag` steps back. The rollout exposes the
    delay-induced ringing of over-stiff gains that a one-step model misses.
    """
    h = min(dt for dt, _, _ in window)
    acc = 0.0
    energy = 0.0
    for dt, e_pos, e_vel in window:
        lag = max(1, int(round(dt / h)))
        states = [(e_pos.copy(), e_vel.copy())] * lag
        e, ev = e_pos.copy(), e_vel.copy()
        for _ in range(GAIN_ROLLOUT_STEPS):
            e_old, ev_old = states[-lag]
            f = kp * e_old + kd * ev_old
            norm = float(np.linalg.norm(f))
            if norm > ctrl.f_corr_max:
                f = f * (ctrl.f_corr_max / norm)  # the plant saturates; model it
                norm = ctrl.f_corr_max
            ev = ev - (h / ctrl.response_mass) * f
            e = e + h * ev
            states.append((e, ev))
            acc += float(np.linalg.norm(e))
            energy += norm
    n = len(window) * GAIN_ROLLOUT_STEPS
    acc_term = (acc / n) / ctrl.eps_pos
    energy_term = (energy / n) / force_scale
    return ctrl.accuracy_weight * acc_term + ctrl.energy_weight * energy_term


def _gain_force_scale(ctrl: SyncController, window: Sequence[GainSample]) -> float:
    """Largest-gain response to the window's own error scale.

    Normalizing by the window keeps the energy term in [0, 1] whatever the
    error magnitude, so accuracy dominates during large transients and the
    energy penalty only differentiates candidates near the thresholds.
    """
    kp_max = max(kp for kp, _ in ctrl.gain_grid)
    kd_max = max(kd for _, kd in ctrl.gain_grid)
    n = len(window)
    mean_pos = sum(float(np.linalg.norm(e)) for _, e, _ in window) / n
    mean_vel = sum(float(np.linalg.norm(ev)) for _, _, ev in window) / n
    scale = kp_max * max(mean_pos, ctrl.eps_pos) + kd_max * max(mean_vel, ctrl.eps_vel)
    return scale if scale > 0 else 1.0


def schedule_gains(ctrl: SyncController, window: Sequence[GainSample]) -> tuple[float, float]:
    """Pick the grid candidate minimizing the one-step-ahead weighted cost.

    The cost trades predicted residual position error (normalized by the
    base position threshold) against correction energy (normalized by the
    largest grid response to the window's own error scale). Ties break to
    the lowest grid index; an empty window keeps the current gains.
    """
    if not ctrl.gain_grid:
        raise ValueError("gain grid is empty")
    if not window:
        return ctrl.kp, ctrl.kd
    force_scale = _gain_force_scale(ctrl, window)
    best_idx = 0
    best_cost = math.inf
    for idx, (kp, kd) in enumerate(ctrl.gain_grid):
        cost = _gain_candidate_cost(kp, kd, window, ctrl, force_scale)
        if cost < best_cost:
            best_cost = cost
            best_idx = idx
    return ctrl.gain_grid[best_idx]


@dataclass(frozen=True)
class SyncBoundModel:
    """Parameters of the analytic error envelope.

    lipschitz is the constant of the closed-loop dynamics; delta_bound is the
    declared sup of the control-input mismatch; e0 the initial state error.
    An optional piecewise profile refines delta over time.
    """

    lipschitz: float
    delta_bound: float
    e0: float = 0.0
    epsilon: float = math.inf
    delta_profile: PiecewiseConstant | None = None

    def __post_init__(self) -> None:
        if self.lipschitz <= 0:
            raise ValueError("lipschitz constant must be positive")
        if self.delta_bound < 0 or self.e0 < 0:
            raise ValueError("delta_bound and e0 must be >= 0")


def gronwall_bound(model: SyncBoundModel, t: float) -> float:
    """Analytic error envelope at time t >= 0.

    Constant mismatch: e0*exp(K*t) + delta*(exp(K*t) - 1). With a piecewise
    profile the convolution integral is evaluated exactly per segment:
    the segment [a, b) with value d contributes d*(exp(K*(t-a)) - exp(K*(t-b))).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    k = model.lipschitz
    if model.delta_profile is None:
        return model.e0 * math.exp(k * t) + model.delta_bound * (math.exp(k * t) - 1.0)
    total = model.e0 * math.exp(k * t)
    points = model.delta_profile.breakpoints()
    for i, (start, value) in enumerate(points):
        if start >= t:
            break
        end = min(points[i + 1][0], t) if i + 1 < len(points) else t
        a = max(start, 0.0)
        if end <= a:
            continue
        total += value * (math.exp(k * (t - a)) - math.exp(k * (t - end)))
    return total


# --- state updates on the wire -------------------------------------------------

_UPDATE = struct.Struct("<12dQ")  # t, p3, v3, heading, f3, yaw_rate, seq

STATE_UPDATE_BYTES = _UPDATE.size


@dataclass(frozen=True)
class StateUpdate:
    """Physical-side sample shipped to the twin: state, applied force, yaw rate."""

    t: float
    p: Vec3
    v: Vec3
    heading: float
    force: Vec3
    yaw_rate: float
    seq: int

    def pack(self) -> bytes:
        return _UPDATE.pack(
            self.t, *self.p, *self.v, self.heading, *self.force, self.yaw_rate, self.seq
        )

    @staticmethod
    def unpack(data: bytes) -> "StateUpdate":
        vals = _UPDATE.unpack(data)
        return StateUpdate(
            t=vals[0],
            p=vec3(*vals[1:4]),
            v=vec3(*vals[4:7]),
            heading=vals[7],
            force=vec3(*vals[8:11]),
            yaw_rate=vals[11],
            seq=vals[12],
        )


class VectorScript:
    """Piecewise-constant 3-vector of time, for scripted forces.

    Rows sharing a timestamp collapse to the last one given.
    """

    def __init__(self, segments: Iterable[tuple[float, float, float, float]]):
        segs = sorted(
            ((float(t), vec3(x, y, z)) for t, x, y, z in segments), key=lambda p: p[0]
        )
        if not segs:
            segs = [(0.0, vec3())]
        deduped: list[tuple[float, Vec3]] = []
        for t, v in segs:
            if deduped and deduped[-1][0] == t:
                deduped[-1] = (t, v)
            else:
                deduped.append((t, v))
        self._times = [t for t, _ in deduped]
        self._values = [v for _, v in deduped]

    def value_at(self, t: float) -> Vec3:
        from bisect import bisect_right

        idx = bisect_right(self._times, t) - 1
        return self._values[max(idx, 0)].copy()

    def change_times(self) -> list[float]:
        return list(self._times)


class PhysicalAgent:
    """Ground-truth agent integrating its scripted force and yaw-rate profile."""

    def __init__(
        self,
        params: PhysicalParams,
        force_script: VectorScript,
        yaw_script: PiecewiseConstant | None = None,
        terrain: str = "default",
        state: TwinState | None = None,
    ) -> None:
        self.params = params
        self.force_script = force_script
        self.yaw_script = yaw_script or PiecewiseConstant(0.0)
        self.terrain = terrain
        self.state = state or TwinState.at_rest()
        self._seq = 0

    def step(self, dt: float, t_end: float | None = None) -> None:
        """Integrate one interval; t_end pins the timestamp to the caller's
        tick grid so script breakpoints stay aligned across agent and twin."""
        t = self.state.t
        force = self.force_script.value_at(t)
        yaw_rate = self.yaw_script.value_at(t)
        new = predict_step(self.state, force, self.params, self.terrain, dt)
        heading = wrap_angle(new.heading + yaw_rate * dt)
        self.state = replace(new, heading=heading, t=t_end if t_end is not None else new.t)

    def sample(self) -> StateUpdate:
        t = self.state.t
        update = StateUpdate(
            t=t,
            p=self.state.p,
            v=self.state.v,
            heading=self.state.heading,
            force=self.force_script.value_at(t),
            yaw_rate=self.yaw_script.value_at(t),
            seq=self._seq,
        )
        self._seq += 1
        return update


class VirtualTwin:
    """Dead-reckoning twin with a bounded state history for staleness lookups."""

    def __init__(
        self,
        params: PhysicalParams,
        terrain: str = "default",
        state: TwinState | None = None,
        history_window: float = 4.0,
        tick: float = 0.01,
    ) -> None:
        self.params = params
        self.terrain = terrain
        self.state = state or TwinState.at_rest()
        self.known_force = vec3()
        self.known_yaw_rate = 0.0
        self.correction = vec3()
        self._history: deque[TwinState] = deque(maxlen=max(2, int(history_window / tick) + 2))
        self._history.append(self.state)

    def step(self, dt: float, t_end: float | None = None) -> None:
        force = self.known_force + self.correction
        new = predict_step(self.state, force, self.params, self.terrain, dt)
        heading = wrap_angle(new.heading + self.known_yaw_rate * dt)
        self.state = replace(new, heading=heading, t=t_end if t_end is not None else new.t)
        self._history.append(self.state)

    def state_at(self, t: float, tol: float = 1e-6) -> TwinState:
        """Recorded state nearest to t; exact on the shared tick grid."""
        best = min(self._history, key=lambda s: abs(s.t - t))
        return best

    def nudge_heading(self, delta: float) -> None:
        self.state = replace(self.state, heading=wrap_angle(self.state.heading + delta))
        self._history[-1] = self.state


@dataclass
class SyncReport:
    """Time series and audit counters from one synchronization run."""

    t: list[float] = field(default_factory=list)
    e_pos: list[float] = field(default_factory=list)
    e_rot: list[float] = field(default_factory=list)
    bound: list[float] = field(default_factory=list)
    kp: list[float] = field(default_factory=list)
    kd: list[float] = field(default_factory=list)
    corrected: list[int] = field(default_factory=list)
    eps_pos: list[float] = field(default_factory=list)
    eps_vel: list[float] = field(default_factory=list)
    update_errors: list[tuple[float, float, float]] = field(default_factory=list)
    bound_violations: int = 0
    max_input_mismatch: float = 0.0
    updates_sent: int = 0
    updates_received: int = 0
    corrections_applied: int = 0
    correction_energy: float = 0.0

    def integrated_error(self, t_from: float = 0.0, t_to: float = math.inf) -> float:
        total = 0.0
        for i in range(1, len(self.t)):
            if t_from <= self.t[i] <= t_to:
                total += self.e_pos[i] * (self.t[i] - self.t[i - 1])
        return total

    def steady_state_max(self, t_from: float) -> tuple[float, float]:
        """(max |e_pos|, max |e_rot|) over samples with t > t_from."""
        pairs = [(e, r) for t, e, r in zip(self.t, self.e_pos, self.e_rot) if t > t_from]
        if not pairs:
            return 0.0, 0.0
        return max(p[0] for p in pairs), max(abs(p[1]) for p in pairs)

    def rows(self) -> list[tuple]:
        return list(zip(self.t, self.e_pos, self.e_rot, self.bound, self.kp, self.kd, self.corrected))

    HEADER = ("t", "e_pos", "e_rot", "bound", "kp", "kd", "corrected")


@dataclass(frozen=True)
class SyncLoopConfig:
    """Timing and scheduling knobs of the synchronization loop."""

    duration: float = 30.0
    tick: float = 0.01
    update_period: float = 0.1
    adaptive_gains: bool = False
    gain_window: float = 2.0
    loss_window: float = 5.0
    drop_stale_updates: bool = True
    # corrections expire this many update periods after the arrival that set
    # them; during longer gaps the twin reverts to pure dead reckoning
    correction_hold_periods: float = 2.0


def run_sync_loop(
    agent: PhysicalAgent,
    twin: VirtualTwin,
    ctrl: SyncController,
    link: NetLink,
    clock: SimClock,
    config: SyncLoopConfig = SyncLoopConfig(),
    bound_model: SyncBoundModel | None = None,
) -> SyncReport:
    """Drive physical agent and twin over an impaired link; return the report.

    Each tick the agent integrates its script, the twin dead-reckons with its
    last known force plus any held correction, due updates cross the link,
    and arrivals gate PD corrections through the adaptive thresholds. The
    report records the true instantaneous error every tick alongside the
    analytic envelope and flags any sample exceeding it.
    """
    report = SyncReport()
    ticks = int(round(config.duration / config.tick))
    updates_per = max(1, int(round(config.update_period / config.tick)))
    arrivals: deque[StateUpdate] = deque()

    # both sides share the mission plan at deployment: the twin starts with
    # the scripted control inputs in effect at t0
    twin.known_force = agent.force_script.value_at(agent.state.t)
    twin.known_yaw_rate = agent.yaw_script.value_at(agent.state.t)

    def on_deliver(payload: bytes, _at: float) -> None:
        arrivals.append(StateUpdate.unpack(payload))

    link.on_deliver = on_deliver

    gain_samples: deque[GainSample] = deque()
    recent_updates: deque[float] = deque()  # arrival times for loss estimation
    last_arrival = 0.0
    last_reschedule = 0.0
    latest_update_t = -math.inf
    correcting = False

    def record(now: float) -> None:
        e_pos_true = float(np.linalg.norm(agent.state.p - twin.state.p))
        e_rot_true = wrap_angle(agent.state.heading - twin.state.heading)
        b = gronwall_bound(bound_model, now) if bound_model else math.inf
        if bound_model and e_pos_true > b + 1e-12:
            report.bound_violations += 1
        live_gap = max(0.0, now - last_arrival - config.update_period)
        loss_now = _estimate_loss(recent_updates, now, config) if now > 0 else 0.0
        eps_p, eps_v = adaptive_thresholds(ctrl, loss_now, live_gap)
        report.t.append(now)
        report.e_pos.append(e_pos_true)
        report.e_rot.append(e_rot_true)
        report.bound.append(b if math.isfinite(b) else -1.0)
        report.kp.append(ctrl.kp)
        report.kd.append(ctrl.kd)
        report.corrected.append(1 if np.any(twin.correction != 0.0) else 0)
        report.eps_pos.append(eps_p)
        report.eps_vel.append(eps_v)

    correction_expires = -math.inf

    record(0.0)
    for k in range(1, ticks + 1):
        now = k * config.tick
        if now > correction_expires and np.any(twin.correction != 0.0):
            twin.correction = vec3()
        agent.step(config.tick, t_end=now)
        twin.step(config.tick, t_end=now)

        if k % updates_per == 0:
            update = agent.sample()
            link.send(update.pack())
            report.updates_sent += 1

        clock.advance(config.tick)
        clock.advance(0.0)  # fire zero-latency deliveries sent this tick

        while arrivals:
            update = arrivals.popleft()
            report.updates_received += 1
            if config.drop_stale_updates and update.t <= latest_update_t:
                continue
            latest_update_t = update.t
            recent_updates.append(now)
            gap = now - last_arrival if report.updates_received > 1 else 0.0
            last_arrival = now

            twin_then = twin.state_at(update.t)
            e_pos = update.p - twin_then.p
            e_vel = update.v - twin_then.v
            e_rot = wrap_angle(update.heading - twin_then.heading)
            report.update_errors.append(
                (now, float(np.linalg.norm(e_pos)), float(np.linalg.norm(e_vel)))
            )
            # the sample horizon is the staleness of the information the
            # correction will act on; long horizons penalize stiff gains in
            # the rollout evaluation
            staleness = max(config.update_period, now - update.t)
            gain_samples.append((staleness, e_pos.copy(), e_vel.copy()))
            while gain_samples and len(gain_samples) > max(1, int(config.gain_window / config.update_period)):
                gain_samples.popleft()

            # escalation: a grossly out-of-band error reschedules immediately
            # so the transient is handled with freshly chosen gains
            if (
                config.adaptive_gains
                and ctrl.gain_grid
                and float(np.linalg.norm(e_pos)) > ctrl.cap_factor * ctrl.eps_pos
            ):
                ctrl.kp, ctrl.kd = schedule_gains(ctrl, list(gain_samples))
                last_reschedule = now

            loss_rate = _estimate_loss(recent_updates, now, config)
            disconnect = max(0.0, gap - config.update_period)
            ctrl.disconnect_duration = disconnect
            thresholds = adaptive_thresholds(ctrl, loss_rate, disconnect)
            if correcting:
                thresholds = (
                    thresholds[0] * ctrl.gate_hysteresis,
                    thresholds[1] * ctrl.gate_hysteresis,
                )
            f_corr = pd_correct(e_pos, e_vel, ctrl, thresholds)
            correcting = bool(np.any(f_corr != 0.0))
            twin.correction = f_corr
            correction_expires = now + config.correction_hold_periods * config.update_period
            if np.any(f_corr != 0.0):
                report.corrections_applied += 1
                report.correction_energy += float(np.linalg.norm(f_corr)) * config.update_period
            twin.nudge_heading(ctrl.heading_gain * e_rot)
            twin.known_force = update.force
            twin.known_yaw_rate = update.yaw_rate

        if config.adaptive_gains and ctrl.gain_grid and now - last_reschedule >= config.gain_window:
            if gain_samples:
                ctrl.kp, ctrl.kd = schedule_gains(ctrl, list(gain_samples))
            last_reschedule = now

        if bound_model is not None:
            mismatch = float(
                np.linalg.norm(
                    agent.force_script.value_at(now) - (twin.known_force + twin.correction)
                )
            ) / agent.params.mass
            report.max_input_mismatch = max(report.max_input_mismatch, mismatch)

        record(now)

    return report


def _estimate_loss(recent: deque[float], now: float, config: SyncLoopConfig) -> float:
    while recent and recent[0] < now - config.loss_window:
        recent.popleft()
    expected = config.loss_window / config.update_period
    if now < config.loss_window:
        expected = max(1.0, now / config.update_period)
    return min(1.0, max(0.0, 1.0 - len(recent) / expected))
