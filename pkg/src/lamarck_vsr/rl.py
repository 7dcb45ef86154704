"""DDPG lifetime learning with the modular controller as actor.

The actor is the shared per-voxel network from :mod:`lamarck_vsr.controller`;
its action gradients from every actuated voxel accumulate onto one parameter
vector. The critic is a centralised MLP over the (vx, vy, volume, touch)
blocks and actions of all actuated voxels plus the time signal, so its input
width depends on the morphology and it is never inherited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .controller import HIDDEN, SIGMOID_EPS, ControllerParams, SensorMode
from .records import LearnerRecord, Sample
from .sim import ACTUATION_MAX, ACTUATION_MIN, SimConfig, build_body, rewards_from_com

STATE_BLOCK = 4


class WidthMismatch(ValueError):
    pass


class LearningDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class RLConfig:
    episodes: int = 50
    steps_per_episode: int = 500
    update_every: int = 5
    replay_capacity: int = 25_000
    batch_size: int = 64
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    noise_std: float = 0.1
    noise_decay: float = 1.0
    critic_hidden: tuple = (128, 64)
    # "best_initial" bequeaths the best episode's starting actor, "final" the last actor
    bequest: str = "best_initial"

    def __post_init__(self):
        if self.episodes < 1 or self.steps_per_episode < 1 or self.update_every < 1:
            raise ValueError("episodes, steps_per_episode and update_every must be >= 1")
        if self.bequest not in ("best_initial", "final"):
            raise ValueError("bequest must be 'best_initial' or 'final'")


def critic_width(n_act: int) -> int:
    return n_act * (STATE_BLOCK + 1) + 2


class CriticParams:
    """Three-layer ReLU MLP producing a scalar Q value."""

    def __init__(self, layers):
        self.layers = [(np.array(w, dtype=np.float64), np.array(b, dtype=np.float64))
                       for w, b in layers]

    @classmethod
    def init(cls, n_act: int, rng: np.random.Generator, hidden=(128, 64), final_scale=3e-3):
        sizes = [critic_width(n_act), *hidden, 1]
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = final_scale if i == len(sizes) - 2 else 1.0 / math.sqrt(fan_in)
            layers.append((rng.uniform(-bound, bound, (fan_in, fan_out)),
                           rng.uniform(-bound, bound, fan_out)))
        return cls(layers)

    @classmethod
    def zeros_like(cls, other: "CriticParams"):
        return cls([(np.zeros_like(w), np.zeros_like(b)) for w, b in other.layers])

    @property
    def width(self) -> int:
        return self.layers[0][0].shape[0]

    def copy(self) -> "CriticParams":
        return CriticParams([(w.copy(), b.copy()) for w, b in self.layers])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    def set_flat(self, vec) -> None:
        i = 0
        for w, b in self.layers:
            w[...] = vec[i:i + w.size].reshape(w.shape)
            i += w.size
            b[...] = vec[i:i + b.size]
            i += b.size


def critic_input(states, actions, time):
    """Row-stack of ``[state blocks, actions, sin, cos]`` critic inputs."""
    states = np.atleast_2d(states)
    actions = np.atleast_2d(actions)
    time = np.atleast_2d(time)
    return np.concatenate([states, actions, time], axis=1)


def _critic_layers(critic: CriticParams, x):
    acts = [x]
    pre = []
    h = x
    for i, (w, b) in enumerate(critic.layers):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(critic.layers) - 1 else z
        acts.append(h)
    return pre, acts


def critic_forward(critic: CriticParams, states, actions, time):
    """Q values, shape ``(batch,)``. ``states`` rows hold the per-voxel blocks."""
    x = critic_input(states, actions, time)
    if x.shape[1] != critic.width:
        raise WidthMismatch(f"critic expects width {critic.width}, got {x.shape[1]}")
    return _critic_layers(critic, x)[1][-1][:, 0]


def critic_backward(critic: CriticParams, x, dq):
    """Gradients of ``sum(dq * Q(x))`` w.r.t. critic layers and the input rows."""
    pre, acts = _critic_layers(critic, x)
    grads = [None] * len(critic.layers)
    upstream = dq.reshape(-1, 1)
    for i in range(len(critic.layers) - 1, -1, -1):
        w, _ = critic.layers[i]
        if i < len(critic.layers) - 1:
            upstream = upstream * (pre[i] > 0.0)
        grads[i] = (acts[i].T @ upstream, upstream.sum(axis=0))
        upstream = upstream @ w.T
    return grads, upstream


def actor_forward_batch(params: np.ndarray, n_in: int, obs):
    """Shared actor over stacked voxel observations; returns actions and a backprop cache."""
    w1 = params[: n_in * HIDDEN].reshape(n_in, HIDDEN)
    b1 = params[n_in * HIDDEN: n_in * HIDDEN + HIDDEN]
    w2 = params[n_in * HIDDEN + HIDDEN: n_in * HIDDEN + 2 * HIDDEN]
    b2 = params[-1]
    zh = obs @ w1 + b1
    h = np.maximum(zh, 0.0)
    z = h @ w2 + b2
    y = np.clip(0.5 * (1.0 + np.tanh(0.5 * z)), SIGMOID_EPS, 1.0 - SIGMOID_EPS)
    return 0.6 + y, (obs, zh, h, y, w2)


def actor_param_grad(cache, upstream):
    """Gradient of ``sum(upstream * action)`` w.r.t. the flat actor vector."""
    obs, zh, h, y, w2 = cache
    dz = upstream * y * (1.0 - y)
    g_w2 = h.T @ dz
    g_b2 = dz.sum()
    dh = np.outer(dz, w2) * (zh > 0.0)
    g_w1 = obs.T @ dh
    g_b1 = dh.sum(axis=0)
    return np.concatenate([g_w1.ravel(), g_b1, g_w2, [g_b2]])


class Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        """Descent step on ``params`` (in place) along ``grad``."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class RobotView:
    """Maps per-voxel simulator observations to actor and critic inputs for one body."""

    def __init__(self, neighbors: np.ndarray, n_in: int, goal_sign: int):
        self.neighbors = neighbors
        self.n_act = neighbors.shape[0]
        self.n_in = n_in
        self.goal_sign = goal_sign
        self.own = neighbors[:, 0]

    def actor_obs(self, vox_obs, k):
        """``vox_obs`` (..., n_vox, 4) and step indices ``k`` -> (..., n_act, n_in)."""
        vox_obs = np.asarray(vox_obs)
        k = np.asarray(k)
        pad = np.concatenate([vox_obs[..., :3], np.zeros(vox_obs.shape[:-2] + (1, 3))], axis=-2)
        gathered = pad[..., self.neighbors, :]  # (..., n_act, 9, 3)
        out = np.zeros(vox_obs.shape[:-2] + (self.n_act, self.n_in))
        out[..., :27] = gathered.reshape(gathered.shape[:-2] + (27,))
        theta = 2.0 * math.pi / 25.0 * (k % 25)
        out[..., 27] = np.sin(theta)[..., None]
        out[..., 28] = np.cos(theta)[..., None]
        out[..., 29] = vox_obs[..., self.own, 3]
        if self.n_in == 31:
            out[..., 30] = self.goal_sign
        return out

    def critic_state(self, vox_obs, k):
        vox_obs = np.asarray(vox_obs)
        k = np.asarray(k)
        blocks = vox_obs[..., self.own, :].reshape(vox_obs.shape[:-2] + (self.n_act * STATE_BLOCK,))
        theta = 2.0 * math.pi / 25.0 * (k % 25)
        return blocks, np.stack([np.sin(theta), np.cos(theta)], axis=-1)


class ReplayBuffer:
    def __init__(self, capacity: int, n_vox: int, n_act: int):
        self.capacity = capacity
        self.vox = np.zeros((capacity, n_vox, 4))
        self.next_vox = np.zeros((capacity, n_vox, 4))
        self.k = np.zeros(capacity, dtype=np.int64)
        self.action = np.zeros((capacity, n_act))
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.size = 0
        self.ptr = 0

    def add(self, vox, k, action, reward, next_vox, done):
        i = self.ptr
        self.vox[i] = vox
        self.k[i] = k
        self.action[i] = action
        self.reward[i] = reward
        self.next_vox[i] = next_vox
        self.done[i] = done
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch_size):
        idx = rng.integers(0, self.size, batch_size)
        return (self.vox[idx], self.k[idx], self.action[idx], self.reward[idx],
                self.next_vox[idx], self.done[idx])


class DDPGAgent:
    """Online networks, target networks and optimiser state for one robot."""

    def __init__(self, actor: np.ndarray, n_in: int, view: RobotView, config: RLConfig,
                 rng: np.random.Generator):
        self.actor = np.array(actor, dtype=np.float64)
        self.n_in = n_in
        self.view = view
        self.config = config
        self.critic = CriticParams.init(view.n_act, rng, config.critic_hidden)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.size, config.actor_lr)
        self.critic_opt = Adam(self.critic.flat().size, config.critic_lr)

    def critic_loss_grad(self, x, target):
        """Mean squared TD error and its gradient as a flat vector."""
        q = _critic_layers(self.critic, x)[1][-1][:, 0]
        err = q - target
        grads, _ = critic_backward(self.critic, x, 2.0 * err / len(target))
        flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
        return float(np.mean(err * err)), flat

    def actor_grad(self, actor_obs, blocks, time):
        """Gradient of mean Q(s, actor(s)) w.r.t. the shared actor parameters.

        ``actor_obs`` is (batch, n_act, n_in); every voxel's action gradient is
        pushed back through the same parameter vector and summed.
        """
        batch, n_act, _ = actor_obs.shape
        flat_obs = actor_obs.reshape(batch * n_act, self.n_in)
        actions, cache = actor_forward_batch(self.actor, self.n_in, flat_obs)
        x = critic_input(blocks, actions.reshape(batch, n_act), time)
        _, dx = critic_backward(self.critic, x, np.full(batch, 1.0 / batch))
        da = dx[:, n_act * STATE_BLOCK: n_act * (STATE_BLOCK + 1)]
        return actor_param_grad(cache, da.reshape(-1))

    def td_target(self, batch):
        """Bootstrapped regression target from the target networks."""
        _, k, _, reward, next_vox, done = batch
        next_obs = self.view.actor_obs(next_vox, k + 1)
        next_blocks, next_time = self.view.critic_state(next_vox, k + 1)
        b, n_act, _ = next_obs.shape
        next_action, _ = actor_forward_batch(self.actor_target, self.n_in,
                                             next_obs.reshape(b * n_act, self.n_in))
        q_next = critic_forward(self.critic_target, next_blocks, next_action.reshape(b, n_act),
                                next_time)
        return reward + self.config.gamma * (1.0 - done) * q_next

    def update(self, batch):
        vox, k, action, _, _, _ = batch
        cfg = self.config
        view = self.view
        target = self.td_target(batch)

        blocks, time = view.critic_state(vox, k)
        x = critic_input(blocks, action, time)
        _, c_grad = self.critic_loss_grad(x, target)
        a_grad = self.actor_grad(view.actor_obs(vox, k), blocks, time)
        if not (np.all(np.isfinite(c_grad)) and np.all(np.isfinite(a_grad))):
            raise LearningDiverged("non-finite gradient in DDPG update")

        flat = self.critic.flat()
        self.critic_opt.step(flat, c_grad)
        self.critic.set_flat(flat)
        # ascend Q
        self.actor_opt.step(self.actor, -a_grad)
        self._blend_targets(cfg.tau)

    def _blend_targets(self, tau):
        self.actor_target = tau * self.actor + (1.0 - tau) * self.actor_target
        blended = tau * self.critic.flat() + (1.0 - tau) * self.critic_target.flat()
        self.critic_target.set_flat(blended)


def ddpg_update(agent: DDPGAgent, batch) -> DDPGAgent:
    agent.update(batch)
    return agent


def run_rl_learning(genome, env, initial_actor: ControllerParams, config: RLConfig,
                    rng: np.random.Generator, sim_config: SimConfig | None = None) -> LearnerRecord:
    """Learn a controller for one robot online over ``config.episodes`` episodes.

    Each record sample holds the actor parameters at the start of that episode
    and the episode's undiscounted return (goal-signed displacement).
    """
    sim_config = sim_config or SimConfig()
    sensor = initial_actor.sensor_mode
    if sensor != env.sensor_mode:
        raise ValueError("actor sensor mode does not match environment")
    n_in = initial_actor.n_inputs
    probe = build_body(genome, sim_config, env.ground)
    n_act = probe.body.n_actuators
    n_vox = len(probe.body.cells)
    view = RobotView(probe.body.neighbors, n_in, env.goal_sign)
    agent = DDPGAgent(initial_actor.values, n_in, view, config, rng)
    buffer = ReplayBuffer(config.replay_capacity, n_vox, n_act)
    heights = env.ground.heights_m(sim_config.voxel_size)
    with_goal = sensor == SensorMode.DIRECTION
    record = LearnerRecord("rl")
    noise = config.noise_std
    cfg = sim_config

    for _ in range(config.episodes):
        snapshot = agent.actor.copy()
        state = build_body(genome, sim_config, env.ground)
        body = state.body
        inv_mass = body.inv_mass
        rest = body.rest0.copy()
        vox = np.zeros((n_vox, 4))
        obs = np.zeros((n_act, n_in))
        act = np.ones(n_act)
        touched = state.touched
        com = np.zeros(config.steps_per_episode + 1)
        com[0] = K.center_of_mass_x(body.pos, body.mass)
        K.voxel_observations(body.pos, body.vel, body.corners, body.rest_area, touched, vox)
        for k in range(config.steps_per_episode):
            if n_act:
                K.assemble_observations(vox, body.neighbors, k, float(env.goal_sign), with_goal, obs)
                K.controller_forward(agent.actor, obs, act)
                if noise > 0:
                    act = np.clip(act + rng.normal(0.0, noise, n_act), ACTUATION_MIN, ACTUATION_MAX)
                K.set_rest_lengths(rest, body.rest0, body.spring_act, act)
            K.substeps(body.pos, body.vel, inv_mass, body.spring_a, body.spring_b, rest,
                       body.stiffness, body.damping, cfg.substeps_per_action, cfg.dt, cfg.gravity,
                       cfg.drag, heights, cfg.voxel_size, 0.0, cfg.ground_friction, touched)
            com[k + 1] = K.center_of_mass_x(body.pos, body.mass)
            next_vox = np.zeros((n_vox, 4))
            K.voxel_observations(body.pos, body.vel, body.corners, body.rest_area, touched, next_vox)
            reward = env.goal_sign * (com[k + 1] - com[k])
            if not np.isfinite(reward):
                raise LearningDiverged("simulation produced a non-finite reward")
            if n_act:
                done = 1.0 if k == config.steps_per_episode - 1 else 0.0
                buffer.add(vox, k, act, reward, next_vox, done)
                if (k + 1) % config.update_every == 0 and buffer.size >= config.batch_size:
                    agent.update(buffer.sample(rng, config.batch_size))
            vox = next_vox
        _, episode_return = rewards_from_com(com, env.goal_sign)
        record.samples.append(Sample(snapshot, episode_return, False))
        noise *= config.noise_decay
    record.final_theta = agent.actor.copy()
    return record


def bequest(record: LearnerRecord, config: RLConfig) -> np.ndarray:
    """Actor parameters passed to Lamarckian offspring."""
    if config.bequest == "final" and record.final_theta is not None:
        return record.final_theta.copy()
    return record.best.theta.copy()
