"""Policy-rate environment around the planar physics kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sawlab.core import (
    Command,
    EpisodeLog,
    EpisodeRecord,
    Observation,
    UnitQuaternion,
    observation_features,
)
from sawlab.errors import InvalidArgument, ProtocolError, SimulationBlowup
from sawlab.rewards import ContactTracker, RewardConfig, reward_terms, weigh
from sawlab.sim import physics
from sawlab.sim.commands import Push, maybe_push, sample_command
from sawlab.sim.config import DomainRandomization, SimConfig
from sawlab.sim.model import CompiledModel, RobotModel, compile_model


@dataclass
class PhysicsState:
    q: np.ndarray
    qd: np.ndarray
    acc: np.ndarray = None            # NaN-filled when stale
    anchors: np.ndarray = None
    active: np.ndarray = None
    step: int = 0

    def __post_init__(self):
        n = len(self.q)
        self.q = np.array(self.q, dtype=float)
        self.qd = np.array(self.qd, dtype=float)
        if self.acc is None:
            self.acc = np.full(n, np.nan)
        if self.anchors is None:
            self.anchors = np.zeros(0)
        if self.active is None:
            self.active = np.zeros(len(self.anchors), dtype=np.int64)

    def copy(self) -> PhysicsState:
        return PhysicsState(self.q.copy(), self.qd.copy(), self.acc.copy(), self.anchors.copy(),
                            self.active.copy(), self.step)

    @property
    def time_steps(self) -> int:
        return self.step


@dataclass
class StepInfo:
    tau_mean: np.ndarray
    contact_force: np.ndarray
    min_normal_force: float
    max_friction_excess: float
    positive_work: float
    push_impulse: float


class Simulator:
    """Compiled model plus contact/gravity parameters; stateless between calls."""

    def __init__(self, model: RobotModel, cfg: SimConfig, compiled: CompiledModel | None = None,
                 friction_scale: float = 1.0):
        self.model = model
        self.cfg = cfg
        self.compiled = compiled if compiled is not None else compile_model(model)
        c = self.compiled
        cc = cfg.contact
        self.params = np.array([cfg.gravity, cc.stiffness, cc.damping, cc.tangential_stiffness,
                                cc.tangential_damping, cc.friction * friction_scale,
                                c.joint_damping, c.limit_stiffness, c.limit_damping])
        self.arrays = (c.parent, c.dof, c.anchor, c.com, c.mass, c.inertia, c.chain, c.cp_body,
                       c.cp_local, c.kp, c.kd, c.t_max, c.q_lo, c.q_hi, int(c.push_body),
                       c.push_local)

    @property
    def ndof(self) -> int:
        return self.compiled.ndof

    def new_state(self, q, qd=None) -> PhysicsState:
        n_cp = len(self.compiled.cp_body)
        qd = np.zeros(self.ndof) if qd is None else qd
        return PhysicsState(q, qd, anchors=np.zeros(n_cp), active=np.zeros(n_cp, dtype=np.int64))

    def advance(self, state: PhysicsState, setpoints, nsub: int,
                push_force: float = 0.0, push_steps: tuple[int, int] = (0, 0)) -> StepInfo:
        """Advance ``state`` in place by ``nsub`` physics steps.

        ``push_steps`` is the half-open range of global physics-step indices
        during which ``push_force`` acts.
        """
        c = self.compiled
        sp = np.asarray(setpoints, dtype=float)
        na = len(c.kp)
        if sp.shape != (na,):
            raise InvalidArgument(f"expected {na} setpoints, got shape {sp.shape}")
        sp = np.clip(sp, c.q_lo, c.q_hi)
        tau_mean = np.zeros(na)
        cp_fn = np.zeros(len(c.cp_body))
        diag = np.zeros(physics.D_SIZE)
        diag[physics.D_MIN_FN] = np.inf
        status = physics.advance(state.q, state.qd, state.acc, sp, nsub, self.cfg.physics_dt,
                                 state.step, push_steps[0], push_steps[1], float(push_force),
                                 self.params, self.arrays, (state.anchors, state.active),
                                 tau_mean, cp_fn, diag, self.cfg.blowup_limit)
        if status:
            raise SimulationBlowup("simulation state diverged", state.step + status)
        state.step += nsub
        return StepInfo(tau_mean, cp_fn, float(diag[physics.D_MIN_FN]),
                        float(diag[physics.D_MAX_FRICTION_EXCESS]), float(diag[physics.D_POS_WORK]),
                        float(diag[physics.D_PUSH_IMPULSE]))

    def energy(self, state: PhysicsState) -> float:
        return float(physics.mechanical_energy(state.q, state.qd, self.params, self.arrays,
                                               (state.anchors, state.active)))

    def momentum(self, state: PhysicsState) -> np.ndarray:
        c = self.compiled
        return physics.linear_momentum(state.q, state.qd, c.parent, c.dof, c.anchor, c.com, c.mass)

    def contact_points(self, q) -> np.ndarray:
        c = self.compiled
        return physics.point_positions(np.asarray(q, dtype=float), c.parent, c.dof, c.anchor,
                                       c.cp_body, c.cp_local)

    def frames(self, state: PhysicsState):
        c = self.compiled
        return physics.body_frames(state.q, state.qd, c.parent, c.dof, c.anchor)


def step_physics(state: PhysicsState, motor_setpoints, external_force: float,
                 model: RobotModel | Simulator, cfg: SimConfig) -> tuple[PhysicsState, StepInfo]:
    """Pure single-substep wrapper: returns a new state one ``physics_dt`` later.

    ``external_force`` is a horizontal force (N) on the push attachment point.
    """
    sim = model if isinstance(model, Simulator) else Simulator(model, cfg)
    new = state.copy()
    new.acc[:] = np.nan
    info = sim.advance(new, motor_setpoints, 1, external_force, (new.step, new.step + 1))
    return new, info


class SawEnv:
    """Standing/walking environment at the control rate.

    Each :meth:`step` holds the PD setpoints for ``control_decimation``
    physics steps, updates the contact tracker, applies any active push, and
    scores the new state with the reward.
    """

    directions = ("+x", "-x")    # push directions the planar model supports
    supports_yaw = False         # no heading degree of freedom

    def __init__(self, model: RobotModel | None = None, sim: SimConfig | None = None,
                 reward: RewardConfig | None = None, dr: DomainRandomization | None = None,
                 seed: int = 0):
        self.model = model or RobotModel()
        self.cfg = sim or SimConfig()
        self.dr = dr or DomainRandomization.off()
        kp, kd, tmax = self.model.gains()
        if reward is None:
            reward = RewardConfig(c_h=self.model.base_height, c_feet=self.model.nominal_foot_pos(),
                                  c_arm=np.zeros(2 if self.model.with_arms else 0), t_max=tmax)
        self.reward_cfg = reward
        self.mirror = self.model.mirror_spec()
        self.nominal = self.model.nominal_pose()
        self.n_act = self.model.n_act
        self.control_dt = self.cfg.control_dt
        self.fixed_command: Command | None = None
        self.push_enabled = True
        self.tracker = ContactTracker(self.control_dt)
        self.seed = seed
        self._obs: Observation | None = None
        self.done = True
        self._window = 0
        self.command = Command()

    # --- command / push control used by benchmark protocols ---
    def set_command(self, cmd: Command, hold: bool = True) -> None:
        """Replace the current command; with ``hold`` it also survives window
        expiry and later resets."""
        self.command = cmd
        self.fixed_command = cmd if hold else None
        self._window = 10 ** 9 if hold else max(self._window, 1)

    def release_command(self) -> None:
        self.fixed_command = None
        self._window = 0

    def apply_push(self, force: float, duration: float) -> Push:
        """Start a push at the current time; replaces any active push."""
        if self.done:
            raise ProtocolError("environment is terminated; call reset()")
        push = Push(float(force), float(duration), self.time, self.model.push_height)
        self._start_push(push)
        return push

    def _start_push(self, push: Push) -> None:
        n0 = self.state.step
        n = max(1, int(round(push.duration / self.cfg.physics_dt)))
        self.push = push
        self.push_steps = (n0, n0 + n)
        self.push_started = push

    # --- episode ---
    def reset(self, seed: int | None = None) -> Observation:
        if seed is None:
            seed = self.seed
        self.seed = seed
        ss = np.random.SeedSequence(seed)
        main, noise = ss.spawn(2)
        self.rng = np.random.default_rng(main)
        self.noise_rng = np.random.default_rng(noise)
        nb = 7 + (2 if self.model.with_arms else 0)
        dr = self.dr
        if dr.enabled:
            mass_scale = self.rng.uniform(*dr.mass_scale, size=nb)
            friction = float(self.rng.uniform(*dr.friction_scale))
            gains = (self.rng.uniform(*dr.gain_scale, size=self.n_act),
                     self.rng.uniform(*dr.gain_scale, size=self.n_act))
            self.delay = int(self.rng.integers(0, dr.max_action_delay + 1))
            self.noise_std = dict(dr.obs_noise)
        else:
            mass_scale, friction, gains, self.delay, self.noise_std = None, 1.0, None, 0, {}
        self.sim = Simulator(self.model, self.cfg, compile_model(self.model, mass_scale, gains),
                             friction)

        joints = self.nominal.copy()
        if self.cfg.init_noise > 0:
            joints += self.rng.uniform(-self.cfg.init_noise, self.cfg.init_noise, size=self.n_act)
        q = np.concatenate([[0.0, 0.0, 0.0], joints])
        fp = self.sim.compiled.foot_points.ravel()
        q[1] = -self.sim.contact_points(q)[fp, 1].min()
        self.state = self.sim.new_state(q)
        self.step_count = 0
        self.time = 0.0
        self.push: Push | None = None
        self.push_steps = (0, 0)
        self.push_started: Push | None = None
        self.fallen = False
        self.truncated = False
        self.done = False
        self.prev_action = self.nominal.copy()
        self.applied = self.nominal.copy()
        self.tracker.reset((True, True), 0.0)
        if self.fixed_command is not None:
            self.command, self._window = self.fixed_command, 10 ** 9
        else:
            self.command, self._window = sample_command(self.rng, self.cfg.command)
        self._prev_vel = np.zeros(3)
        self._obs = self._observe(np.zeros(self.n_act), None, self.nominal, self.nominal)
        return self._obs

    @property
    def observation(self) -> Observation:
        return self._obs

    def features(self, obs: Observation | None = None) -> np.ndarray:
        """Policy input features (without command), with observation noise."""
        obs = obs or self._obs
        f = observation_features(obs, self.command.heading_ref)
        if self.noise_std:
            na = self.n_act
            f = f.copy()
            sp = self.noise_std.get("motor_pos", 0.0)
            sv = self.noise_std.get("motor_vel", 0.0)
            so = self.noise_std.get("orientation", 0.0)
            if sp > 0:
                f[:na] += self.noise_rng.normal(0.0, sp, na)
            if sv > 0:
                f[na:2 * na] += self.noise_rng.normal(0.0, sv, na)
            if so > 0:
                e = self.noise_rng.normal(0.0, so, 3)
                q = UnitQuaternion.from_array(f[-4:]) * UnitQuaternion.from_euler(*e)
                f[-4:] = q.normalize().as_array()
        return f

    def step(self, action) -> tuple[Observation, dict, bool]:
        if self.done:
            raise ProtocolError("step() called on a terminated environment; call reset()")
        action = np.asarray(action, dtype=float)
        if action.shape != (self.n_act,):
            raise InvalidArgument(f"action must have shape ({self.n_act},)")
        if not np.all(np.isfinite(action)):
            raise InvalidArgument("action contains non-finite values")
        c = self.sim.compiled
        action = np.clip(action, c.q_lo, c.q_hi)
        applied = self.applied if self.delay else action
        self.applied = action

        self.push_started = None
        if self.push_enabled and self.cfg.push.probability > 0 and not self._push_active():
            p = maybe_push(self.rng, self.cfg.push, self.time, self.model.push_height)
            if p is not None:
                self._start_push(p)
        self.command = self.command.advance(self.control_dt)

        self.state.acc[:] = np.nan
        force = self.push.force if self.push is not None else 0.0
        info = self.sim.advance(self.state, applied, self.cfg.control_decimation, force,
                                self.push_steps)
        self.step_count += 1
        self.time = self.step_count * self.control_dt
        if self.push is not None and self.state.step >= self.push_steps[1]:
            self.push = None

        fp = c.foot_points
        contact = (info.contact_force[fp[0]].max() > 0.0, info.contact_force[fp[1]].max() > 0.0)
        self.tracker.update(contact, self.time)
        obs = self._observe(info.tau_mean, info, self.prev_action, action)
        self.prev_action = action
        self.last_terms = reward_terms(obs, self.command, self.tracker, self.reward_cfg)
        total, breakdown = weigh(self.last_terms, self.reward_cfg)

        pitch = self.state.q[2]
        if self.state.q[1] < self.cfg.fall_height_fraction * self.model.base_height or \
                abs(pitch) > self.cfg.fall_pitch:
            self.fallen = True
        self.truncated = self.step_count >= self.cfg.max_steps
        self.done = self.fallen or self.truncated
        self._obs = obs

        if self.fixed_command is None:
            self._window -= 1
            if self._window <= 0:
                self.command, self._window = sample_command(self.rng, self.cfg.command,
                                                            self.command.heading_ref)
        return obs, breakdown, self.done

    def _push_active(self) -> bool:
        return self.push is not None and self.state.step < self.push_steps[1]

    @property
    def push_active(self) -> bool:
        return self._push_active()

    def _observe(self, tau, info, prev_action, action) -> Observation:
        q, qd = self.state.q, self.state.qd
        c = self.sim.compiled
        phi, omega, apos, avel = self.sim.frames(self.state)
        vel = np.array([qd[0], 0.0, qd[1]])
        acc = (vel - self._prev_vel) / self.control_dt if info is not None else np.zeros(3)
        self._prev_vel = vel
        w = 0.5 * self.model.hip_width
        fa = c.ankle_body
        foot_pos = np.array([[apos[fa[0], 0] - q[0], w, apos[fa[0], 1] - q[1]],
                             [apos[fa[1], 0] - q[0], -w, apos[fa[1], 1] - q[1]]])
        foot_rpy = np.array([[0.0, phi[fa[0]], 0.0], [0.0, phi[fa[1]], 0.0]])
        return Observation(
            motor_pos=q[3:].copy(),
            motor_vel=qd[3:].copy(),
            torso_orientation=UnitQuaternion.from_pitch(q[2]),
            base_pos=np.array([q[0], 0.0, q[1]]),
            base_linvel=vel,
            base_acc=acc,
            foot_pos=foot_pos,
            foot_orientation=foot_rpy,
            contact=self.tracker.contact.copy(),
            airtime=self.tracker.airtime.copy(),
            touchdown=self.tracker.touchdown.copy(),
            arm_pos=q[c.arm_dofs].copy(),
            applied_torque=np.asarray(tau, dtype=float),
            prev_action=np.asarray(prev_action, dtype=float),
            action=np.asarray(action, dtype=float),
            time=self.time,
        )

    def config_hash(self) -> str:
        import hashlib
        import json
        from dataclasses import asdict
        blob = json.dumps({"sim": asdict(self.cfg), "dr": asdict(self.dr)}, sort_keys=True,
                          default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def rollout(env: SawEnv, policy, horizon: int | None = None, seed: int = 0) -> EpisodeLog:
    """Run one episode and record every control step.

    ``policy`` needs ``reset()`` and ``act(features, command, obs) -> setpoints``.
    """
    obs0 = env.reset(seed)
    policy.reset()
    horizon = env.cfg.max_steps if horizon is None else int(horizon)
    log = EpisodeLog(dt=env.control_dt, initial=obs0, model_hash=env.model.hash(),
                     config_hash=env.config_hash(), meta={"seed": seed})
    obs = obs0
    for k in range(horizon):
        a = policy.act(env.features(obs), env.command, obs)
        cmd = env.command
        obs, breakdown, done = env.step(a)
        rec = EpisodeRecord(obs=obs, cmd=cmd.advance(env.control_dt), reward=breakdown,
                            push=env.push_started.to_dict() if env.push_started else None,
                            push_active=env.push_active or env.push_started is not None,
                            fallen=env.fallen, terminal=done or k == horizon - 1)
        log.append(rec)
        if done:
            break
    return log
