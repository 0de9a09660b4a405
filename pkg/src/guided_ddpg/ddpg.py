"""Actor-critic learner with optional supervision from a trajectory optimizer.

The critic regresses onto bootstrapped targets plus (weighted) optimizer
value targets; the actor ascends the target critic plus a (weighted) L2 pull
toward optimizer actions. With supervision weight zero both updates reduce
exactly to standard DDPG.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .envs import ACTION_DIM, STATE_DIM, InsertionEnvConfig
from .exceptions import ConfigurationError, InputError, NumericalError
from .nets import (
    AdamState,
    MlpParams,
    add_grads,
    adam_init,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
    mlp_init,
    soft_update,
)
from .replay import SupervisionBatch, TransitionBatch

Array = np.ndarray


@dataclass(frozen=True)
class DdpgHyper:
    """Learner hyperparameters plus the fixed feature scaling for net inputs."""

    discount: float = 0.99
    target_rate: float = 0.001
    batch_size: int = 64
    supervision_batch_size: int = 64
    supervision_decay: float = 10.0  # decay constant c; 0 disables supervision
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    actor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (64, 64)
    noise_scale: tuple[float, float] = (1.0, 1.0)
    noise_theta: float = 0.15
    noise_dt: float = 1.0
    action_bound: float = 5.0
    obs_scale: tuple[float, ...] = (50.0, 50.0, 2.0, 2.0, 0.1, 0.1)

    def __post_init__(self):
        if not (0.0 <= self.discount < 1.0):
            raise ConfigurationError(f"discount must lie in [0, 1), got {self.discount}")
        if not (0.0 < self.target_rate <= 1.0):
            raise ConfigurationError(f"target_rate must lie in (0, 1], got {self.target_rate}")
        if self.batch_size < 1 or self.supervision_batch_size < 1:
            raise ConfigurationError("batch sizes must be positive")
        if self.supervision_decay < 0.0:
            raise ConfigurationError("supervision_decay must be >= 0")
        if any(s < 0.0 for s in self.noise_scale):
            raise ConfigurationError("noise scales must be >= 0")

    @classmethod
    def for_env(cls, env: InsertionEnvConfig, **overrides) -> "DdpgHyper":
        """Derive feature scales from task geometry so net inputs are O(1)."""
        length = max(env.hole_depth + env.start_height, 1e-6)
        force = 10.0 * env.action_bound
        defaults = dict(
            action_bound=env.action_bound,
            obs_scale=(1.0 / length, 1.0 / length, 1.0, 1.0, 1.0 / force, 1.0 / force),
        )
        defaults.update(overrides)
        return cls(**defaults)


@dataclass(frozen=True)
class AgentNets:
    actor: MlpParams
    critic: MlpParams
    target_actor: MlpParams
    target_critic: MlpParams
    actor_opt: AdamState
    critic_opt: AdamState


def make_agent(hyper: DdpgHyper, seed, state_dim: int = STATE_DIM, action_dim: int = ACTION_DIM) -> AgentNets:
    """Fresh actor/critic with targets initialized as exact copies."""
    base = list(np.atleast_1d(np.asarray(seed)).ravel())
    actor = mlp_init([state_dim, *hyper.actor_hidden, action_dim], "tanh", "tanh", seed=base + [0])
    critic = mlp_init([state_dim + action_dim, *hyper.critic_hidden, 1], "tanh", "identity", seed=base + [1])
    return AgentNets(
        actor=actor,
        critic=critic,
        target_actor=actor,
        target_critic=critic,
        actor_opt=adam_init(actor, hyper.actor_lr),
        critic_opt=adam_init(critic, hyper.critic_lr),
    )


def _scaled_obs(hyper: DdpgHyper, states: Array) -> Array:
    return np.asarray(states) * np.asarray(hyper.obs_scale)


def policy_action(actor: MlpParams, hyper: DdpgHyper, states: Array) -> Array:
    """Deterministic policy output in action units (tanh-squashed to the bound)."""
    return hyper.action_bound * mlp_forward(actor, _scaled_obs(hyper, states))


def critic_value(critic: MlpParams, hyper: DdpgHyper, states: Array, actions: Array) -> Array:
    """Q estimate; returns a scalar per row (squeezed last axis)."""
    states = np.asarray(states)
    x = np.concatenate([_scaled_obs(hyper, states), np.asarray(actions) / hyper.action_bound], axis=-1)
    return mlp_forward(critic, x)[..., 0]


def critic_target(batch: TransitionBatch, nets: AgentNets, hyper: DdpgHyper) -> Array:
    """Bootstrapped targets from the target nets; terminal rows are not bootstrapped."""
    next_actions = policy_action(nets.target_actor, hyper, batch.next_states)
    next_q = critic_value(nets.target_critic, hyper, batch.next_states, next_actions)
    if not np.all(np.isfinite(next_q)):
        raise NumericalError("target critic produced non-finite values")
    return batch.rewards + hyper.discount * np.where(batch.dones, 0.0, next_q)


def critic_loss_grads(
    nets: AgentNets,
    hyper: DdpgHyper,
    batch: TransitionBatch,
    sup_batch: SupervisionBatch | None,
    supervision_weight: float,
):
    """Gradient of the critic loss; returns (loss, grads).

    Loss: mean squared Bellman error plus ``supervision_weight`` times the
    mean squared error against the optimizer's value targets.
    """
    y = critic_target(batch, nets, hyper)
    x = np.concatenate([_scaled_obs(hyper, batch.states), batch.actions / hyper.action_bound], axis=1)
    q, cache = mlp_forward_cached(nets.critic, x)
    err = q[:, 0] - y
    n = batch.states.shape[0]
    loss = float(np.mean(err**2))
    grads, _ = mlp_backward(nets.critic, x, (2.0 / n) * err[:, None], cache)

    if sup_batch is not None and supervision_weight > 0.0:
        xs = np.concatenate([_scaled_obs(hyper, sup_batch.states), sup_batch.actions / hyper.action_bound], axis=1)
        qs, cache_s = mlp_forward_cached(nets.critic, xs)
        err_s = qs[:, 0] - sup_batch.q_values
        ns = sup_batch.states.shape[0]
        loss += supervision_weight * float(np.mean(err_s**2))
        sup_grads, _ = mlp_backward(nets.critic, xs, (2.0 * supervision_weight / ns) * err_s[:, None], cache_s)
        grads = add_grads(grads, sup_grads)
    return loss, grads


def critic_update(
    nets: AgentNets,
    hyper: DdpgHyper,
    batch: TransitionBatch,
    sup_batch: SupervisionBatch | None,
    supervision_weight: float,
) -> AgentNets:
    loss, grads = critic_loss_grads(nets, hyper, batch, sup_batch, supervision_weight)
    if not np.isfinite(loss):
        raise NumericalError("critic loss is non-finite; parameters unchanged")
    critic, critic_opt = adam_step(nets.critic_opt, nets.critic, grads)
    return replace(nets, critic=critic, critic_opt=critic_opt)


def actor_objective_grads(
    nets: AgentNets,
    hyper: DdpgHyper,
    batch: TransitionBatch,
    sup_batch: SupervisionBatch | None,
    supervision_weight: float,
):
    """Gradient of the actor's minimization objective; returns (objective, grads).

    Objective: ``-mean target-critic Q at the actor's actions`` plus
    ``supervision_weight`` times the mean squared distance to the optimizer's
    actions. Gradients flow into the actor through the critic's action input
    only; critic parameters stay fixed.
    """
    xs = _scaled_obs(hyper, batch.states)
    out, actor_cache = mlp_forward_cached(nets.actor, xs)  # in [-1, 1]; action = bound * out
    n = batch.states.shape[0]

    # dQ/d(action input) of the target critic at (s, actor(s)).
    critic_in = np.concatenate([xs, out], axis=1)
    q, critic_cache = mlp_forward_cached(nets.target_critic, critic_in)
    _, input_grad = mlp_backward(nets.target_critic, critic_in, np.ones((n, 1)), critic_cache)
    dq_dout = input_grad[:, xs.shape[1] :]

    objective = -float(np.mean(q[:, 0]))
    grads, _ = mlp_backward(nets.actor, xs, (-1.0 / n) * dq_dout, actor_cache)

    if sup_batch is not None and supervision_weight > 0.0:
        xs_s = _scaled_obs(hyper, sup_batch.states)
        out_s, sup_cache = mlp_forward_cached(nets.actor, xs_s)
        diff = hyper.action_bound * out_s - sup_batch.actions
        ns = sup_batch.states.shape[0]
        objective += supervision_weight * float(np.mean(np.sum(diff**2, axis=1)))
        sup_grads, _ = mlp_backward(
            nets.actor, xs_s, (2.0 * supervision_weight * hyper.action_bound / ns) * diff, sup_cache
        )
        grads = add_grads(grads, sup_grads)
    return objective, grads


def actor_update(
    nets: AgentNets,
    hyper: DdpgHyper,
    batch: TransitionBatch,
    sup_batch: SupervisionBatch | None,
    supervision_weight: float,
) -> AgentNets:
    objective, grads = actor_objective_grads(nets, hyper, batch, sup_batch, supervision_weight)
    if not np.isfinite(objective):
        raise NumericalError("actor objective is non-finite; parameters unchanged")
    actor, actor_opt = adam_step(nets.actor_opt, nets.actor, grads)
    return replace(nets, actor=actor, actor_opt=actor_opt)


def target_update(nets: AgentNets, rate: float) -> AgentNets:
    return replace(
        nets,
        target_actor=soft_update(nets.target_actor, nets.actor, rate),
        target_critic=soft_update(nets.target_critic, nets.critic, rate),
    )


def supervision_weight(n_roll: int, c: float) -> float:
    """Decaying blend weight ``c / (n_roll + c)``."""
    if n_roll < 0:
        raise InputError(f"n_roll must be >= 0, got {n_roll}")
    if c <= 0.0:
        raise InputError(f"decay constant must be > 0, got {c}")
    return c / (n_roll + c)


class OrnsteinUhlenbeckNoise:
    """Zero-mean temporally correlated exploration noise.

    ``x += theta * (0 - x) * dt + scale * sqrt(dt) * N(0, 1)``; a zero scale
    yields the zero vector forever.
    """

    def __init__(self, dim: int, scale, theta: float = 0.15, dt: float = 1.0):
        scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (dim,)).copy()
        if np.any(scale < 0.0) or theta <= 0.0 or dt <= 0.0:
            raise ConfigurationError("noise scale must be >= 0 and theta, dt > 0")
        self.dim = dim
        self.scale = scale
        self.theta = theta
        self.dt = dt
        self._x = np.zeros(dim)

    def reset(self) -> None:
        self._x = np.zeros(self.dim)

    def sample(self, rng: np.random.Generator) -> Array:
        self._x = self._x + self.theta * (-self._x) * self.dt + self.scale * np.sqrt(self.dt) * rng.standard_normal(self.dim)
        return self._x.copy()

    @property
    def stationary_std(self) -> Array:
        return self.scale / np.sqrt(2.0 * self.theta - self.theta**2 * self.dt)
