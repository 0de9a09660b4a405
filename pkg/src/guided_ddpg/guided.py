"""Training orchestrator: alternating supervision epochs and DDPG blocks.

Each epoch first runs the trajectory optimizer to refresh the supervision
buffer, then a block of exploratory episodes during which every environment
step applies one critic update, one actor update, and one target update.
The supervision weight decays with the number of completed exploratory
episodes, and the block length grows by a fixed increment per epoch.

All randomness flows through named streams derived from the config seed, so
a full run is reproducible bit for bit.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .ddpg import (
    AgentNets,
    DdpgHyper,
    OrnsteinUhlenbeckNoise,
    actor_update,
    critic_update,
    make_agent,
    policy_action,
    supervision_weight,
    target_update,
)
from .envs import EnvState, InsertionEnvConfig, Rollout, Transition, env_reset, env_step, rollout
from .exceptions import ConfigurationError, SupervisorError
from .replay import (
    ReplayBuffer,
    supervision_batch_from_rows,
    supervision_buffer,
    transition_batch_from_rows,
    transition_buffer,
)
from .trajopt import DualState, SupervisorConfig, run_supervisor

Array = np.ndarray

# Fixed tags for the named rng streams; part of the reproducibility contract.
STREAM_NET = 0
STREAM_ENV = 1
STREAM_NOISE = 2
STREAM_REPLAY = 3
STREAM_SUPERVISOR = 4
STREAM_EVAL = 5


@dataclass
class RngStreams:
    net_seed: list
    env: np.random.Generator
    noise: np.random.Generator
    replay: np.random.Generator
    supervisor: np.random.Generator
    eval_seed: int


def rng_streams(seed: int) -> RngStreams:
    """Independent, deterministically derived generators for each concern."""
    return RngStreams(
        net_seed=[seed, STREAM_NET],
        env=np.random.default_rng([seed, STREAM_ENV]),
        noise=np.random.default_rng([seed, STREAM_NOISE]),
        replay=np.random.default_rng([seed, STREAM_REPLAY]),
        supervisor=np.random.default_rng([seed, STREAM_SUPERVISOR]),
        eval_seed=seed,
    )


@dataclass(frozen=True)
class TrainConfig:
    """Everything one training run depends on."""

    env: InsertionEnvConfig = field(default_factory=InsertionEnvConfig)
    hyper: Optional[DdpgHyper] = None  # derived from env when omitted
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    epochs: int = 100
    n_ddpg: int = 21
    n_inc: int = 15
    n_trajopt: int = 3
    r1_capacity: int = 2000
    r2_capacity: int = 1_000_000
    seed: int = 0
    eval_every: int = 25
    eval_episodes: int = 20
    success_threshold: float = 0.9
    stop_at_threshold: bool = False
    max_rollouts: Optional[int] = None
    kl_step: float = 100.0
    eta_init: float = 1.0

    def __post_init__(self):
        if self.epochs < 0 or self.n_ddpg < 0 or self.n_inc < 0 or self.n_trajopt < 0:
            raise ConfigurationError("episode/epoch counts must be non-negative")
        if self.r1_capacity < 1 or self.r2_capacity < 1:
            raise ConfigurationError("buffer capacities must be positive")
        if self.hyper is None:
            object.__setattr__(self, "hyper", DdpgHyper.for_env(self.env))


@dataclass
class EpisodeRecord:
    index: int  # global episode ordinal across all phases
    epoch: int
    phase: str  # trajopt_sample | supervised | ddpg
    n_roll: Optional[int]  # exploratory-episode counter value at episode start
    steps: int
    episode_return: float
    success: bool
    w_to: Optional[float]
    wall_clock: float


@dataclass
class EvalRecord:
    epoch: int
    n_roll: int
    success_rate: float
    mean_return: float
    mean_steps: float


@dataclass
class EpochRecord:
    epoch: int
    status: str  # ok | degraded | skipped
    detail: str
    diagnostics: list


@dataclass
class EvalMetrics:
    success_rate: float
    mean_return: float
    mean_steps: float


@dataclass
class TrainingLog:
    episodes: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    r1_pushed: int = 0
    r2_pushed: int = 0

    def episodes_by_phase(self, phase: str) -> list:
        return [e for e in self.episodes if e.phase == phase]

    def rollouts_to_threshold(self, threshold: float) -> Optional[int]:
        """Exploratory-episode count at the first evaluation meeting the threshold."""
        for ev in self.evals:
            if ev.success_rate >= threshold:
                return ev.n_roll
        return None

    def final_eval(self) -> Optional[EvalRecord]:
        return self.evals[-1] if self.evals else None

    def write_csv(self, path) -> None:
        """Deterministic log export: wall-clock timings deliberately excluded."""
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["row_type", "epoch", "phase", "episode", "n_roll", "steps",
                 "episode_return", "success", "w_to", "success_rate", "mean_return", "mean_steps"]
            )
            for e in self.episodes:
                writer.writerow(
                    ["episode", e.epoch, e.phase, e.index,
                     "" if e.n_roll is None else e.n_roll, e.steps,
                     repr(float(e.episode_return)), int(e.success),
                     "" if e.w_to is None else repr(float(e.w_to)), "", "", ""]
                )
            for ev in self.evals:
                writer.writerow(
                    ["eval", ev.epoch, "eval", "", ev.n_roll, "", "", "", "",
                     repr(float(ev.success_rate)), repr(float(ev.mean_return)), repr(float(ev.mean_steps))]
                )

    def write_timings_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "wall_clock_s"])
            for e in self.episodes:
                writer.writerow([e.index, f"{e.wall_clock:.6f}"])


def rollout_transitions(roll: Rollout) -> list:
    """Split a rollout into stored transitions (actions already clipped)."""
    return [
        Transition(roll.states[t].copy(), roll.actions[t].copy(), roll.states[t + 1].copy(),
                   float(roll.rewards[t]), bool(roll.dones[t]))
        for t in range(roll.steps)
    ]


def evaluate_policy(actor, hyper: DdpgHyper, env: InsertionEnvConfig, n_episodes: int, seed) -> EvalMetrics:
    """Run noise-free episodes; never touches buffers or parameters."""
    rng = np.random.default_rng(seed)
    successes, returns, steps = [], [], []
    for _ in range(n_episodes):
        roll = rollout(env, lambda t, s: policy_action(actor, hyper, s), rng, stop_on_success=True)
        successes.append(roll.success)
        returns.append(roll.episode_return)
        steps.append(roll.steps)
    return EvalMetrics(float(np.mean(successes)), float(np.mean(returns)), float(np.mean(steps)))


def _run_evaluation(nets: AgentNets, config: TrainConfig, log: TrainingLog, epoch: int, n_roll: int) -> EvalRecord:
    metrics = evaluate_policy(
        nets.actor, config.hyper, config.env, config.eval_episodes,
        [config.seed, STREAM_EVAL, len(log.evals)],
    )
    record = EvalRecord(epoch, n_roll, metrics.success_rate, metrics.mean_return, metrics.mean_steps)
    log.evals.append(record)
    return record


def ddpg_block(
    nets: AgentNets,
    config: TrainConfig,
    r1: ReplayBuffer,
    r2: ReplayBuffer,
    streams: RngStreams,
    noise: OrnsteinUhlenbeckNoise,
    n_roll: int,
    n_episodes: int,
    epoch: int,
    log: TrainingLog,
    t_start: float,
) -> tuple[AgentNets, int, bool]:
    """Run exploratory episodes with one update triple per environment step.

    Returns the updated nets, the new exploratory-episode count, and whether
    the stop condition (evaluation success threshold) was reached.
    """
    hyper = config.hyper
    env = config.env
    c = hyper.supervision_decay
    stop = False

    for _ in range(n_episodes):
        if config.max_rollouts is not None and n_roll >= config.max_rollouts:
            stop = True
            break
        w_to = supervision_weight(n_roll, c) if c > 0.0 else 0.0
        effective_w = w_to if len(r1) > 0 else 0.0

        noise.reset()
        state = env_reset(env, streams.env)
        episode_return = 0.0
        episode_success = False
        steps = 0
        for t in range(env.horizon):
            action = policy_action(nets.actor, hyper, state.as_vector())
            action = np.clip(action + noise.sample(streams.noise), -env.action_bound, env.action_bound)
            tr = env_step(env, state, action)
            episode_success = episode_success or tr.done  # done from the env means success
            if t == env.horizon - 1:
                tr = replace(tr, done=True)
            r2.push(tr)
            episode_return += tr.reward
            steps += 1

            batch = transition_batch_from_rows(r2.sample_rows(hyper.batch_size, streams.replay))
            sup = None
            if effective_w > 0.0:
                sup = supervision_batch_from_rows(r1.sample_rows(hyper.supervision_batch_size, streams.replay))
            nets = critic_update(nets, hyper, batch, sup, effective_w)
            nets = actor_update(nets, hyper, batch, sup, effective_w)
            nets = target_update(nets, hyper.target_rate)

            state = EnvState.from_vector(tr.next_state)
            if tr.done:
                break
        log.episodes.append(
            EpisodeRecord(len(log.episodes), epoch, "ddpg", n_roll, steps, episode_return,
                          episode_success, w_to, time.perf_counter() - t_start)
        )
        n_roll += 1

        if config.eval_every > 0 and n_roll % config.eval_every == 0:
            record = _run_evaluation(nets, config, log, epoch, n_roll)
            if config.stop_at_threshold and record.success_rate >= config.success_threshold:
                stop = True
                break
    return nets, n_roll, stop


def train(config: TrainConfig) -> tuple[AgentNets, TrainingLog]:
    """Full training run; deterministic given the config (seed included)."""
    t_start = time.perf_counter()
    streams = rng_streams(config.seed)
    hyper = config.hyper
    nets = make_agent(hyper, streams.net_seed)
    noise = OrnsteinUhlenbeckNoise(2, hyper.noise_scale, hyper.noise_theta, hyper.noise_dt)
    r1: ReplayBuffer = supervision_buffer(config.r1_capacity)
    r2: ReplayBuffer = transition_buffer(config.r2_capacity)
    log = TrainingLog()
    dual = DualState(eta=config.eta_init, epsilon=config.kl_step)

    n_roll = 0
    n_ddpg = config.n_ddpg
    for epoch in range(config.epochs):
        if config.n_trajopt > 0:
            def actor_fn(states, _nets=nets):
                return policy_action(_nets.actor, hyper, states)

            try:
                result, dual = run_supervisor(
                    config.env, actor_fn, config.n_trajopt, dual,
                    config.supervisor, hyper.discount, streams.supervisor,
                )
            except SupervisorError as exc:
                log.epochs.append(EpochRecord(epoch, "degraded", str(exc), []))
            else:
                for roll in result.sample_rollouts:
                    r2.extend(rollout_transitions(roll))
                    log.episodes.append(
                        EpisodeRecord(len(log.episodes), epoch, "trajopt_sample", None, roll.steps,
                                      roll.episode_return, roll.success, None, time.perf_counter() - t_start)
                    )
                r2.extend(rollout_transitions(result.final_rollout))
                r1.extend(result.supervision)
                log.episodes.append(
                    EpisodeRecord(len(log.episodes), epoch, "supervised", None, result.final_rollout.steps,
                                  result.final_rollout.episode_return, result.final_rollout.success, None,
                                  time.perf_counter() - t_start)
                )
                log.epochs.append(EpochRecord(epoch, "ok", "", result.diagnostics))
        else:
            log.epochs.append(EpochRecord(epoch, "skipped", "n_trajopt=0", []))

        nets, n_roll, stop = ddpg_block(
            nets, config, r1, r2, streams, noise, n_roll, n_ddpg, epoch, log, t_start
        )
        n_ddpg += config.n_inc
        if stop:
            break

    log.r1_pushed = r1.total_pushed
    log.r2_pushed = r2.total_pushed
    return nets, log
