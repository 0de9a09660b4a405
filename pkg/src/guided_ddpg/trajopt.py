"""KL-trust-region trajectory optimization over fitted linear dynamics.

The optimizer fits time-varying linear-Gaussian dynamics to a handful of
rollouts, linearizes the current actor into a Gaussian prior, and solves a
KL-constrained linear-quadratic problem by a maximum-entropy Riccati
backward pass. The trust region is enforced through a dual variable that is
adapted until the achieved KL divergence matches the requested step size;
the step size itself adapts to how well model-predicted improvements match
real rollout improvements.

Conventions: a horizon-``T`` problem has ``T+1`` states and ``T`` actions;
dynamics are ``s' = F [s; u] + f + noise``; controllers are
``u = K s + k + N(0, C)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .envs import InsertionEnvConfig, Rollout, rollout
from .exceptions import (
    InputError,
    NotPositiveDefiniteError,
    NumericalError,
    ShapeError,
    SupervisorError,
    TrustRegionError,
)
from .replay import SupervisionSample

Array = np.ndarray


# ---------------------------------------------------------------------------
# Value types


@dataclass(frozen=True)
class LinearDynamics:
    """Per-step affine model ``s_{t+1} = F_t [s; u] + f_t + N(0, Sigma_t)``."""

    F: Array  # (T, n, n+m)
    f: Array  # (T, n)
    Sigma: Array  # (T, n, n)

    @property
    def horizon(self) -> int:
        return self.F.shape[0]

    @property
    def state_dim(self) -> int:
        return self.F.shape[1]

    @property
    def action_dim(self) -> int:
        return self.F.shape[2] - self.F.shape[1]


@dataclass(frozen=True)
class LinearGaussianPolicy:
    """Time-varying controller ``u_t = K_t s_t + k_t + N(0, C_t)``."""

    K: Array  # (T, m, n)
    k: Array  # (T, m)
    C: Array  # (T, m, m)

    @property
    def horizon(self) -> int:
        return self.K.shape[0]

    @property
    def state_dim(self) -> int:
        return self.K.shape[2]

    @property
    def action_dim(self) -> int:
        return self.K.shape[1]

    def action_mean(self, t: int, state: Array) -> Array:
        return self.K[t] @ state + self.k[t]


@dataclass(frozen=True)
class TrajectoryDistribution:
    """Gaussian state marginals of a policy rolled through linear dynamics."""

    mean: Array  # (T+1, n)
    cov: Array  # (T+1, n, n)
    policy: LinearGaussianPolicy
    dynamics: LinearDynamics


@dataclass(frozen=True)
class DualState:
    """Dual variable and trust region of the KL-constrained optimization."""

    eta: float = 1.0
    epsilon: float = 100.0
    penalty: float = 1.0
    eta_min: float = 1e-8
    eta_max: float = 1e16
    epsilon_min: float = 1e-9
    epsilon_max: float = 1e9

    def __post_init__(self):
        if self.eta <= 0.0 or self.epsilon <= 0.0:
            raise InputError("eta and epsilon must be positive")


@dataclass(frozen=True)
class QuadraticCost:
    """Stage costs ``0.5 z' Czz z + cz' z + const`` with ``z = [s; u]``,
    plus a terminal state cost."""

    Czz: Array  # (T, n+m, n+m)
    cz: Array  # (T, n+m)
    const: Array  # (T,)
    Cxx_T: Array  # (n, n)
    cx_T: Array  # (n,)
    const_T: float
    state_dim: int
    action_dim: int

    @property
    def horizon(self) -> int:
        return self.Czz.shape[0]


# ---------------------------------------------------------------------------
# Model fitting


def fit_dynamics(states: Array, actions: Array, reg: float = 1e-6) -> LinearDynamics:
    """Per-step ridge regression of next state on [state; action].

    ``states`` has shape (N, T+1, n) and ``actions`` (N, T, m) over N
    rollouts of equal horizon. The residual covariance is symmetrized and
    eigenvalue-clipped to be positive semidefinite.
    """
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    if states.ndim != 3 or actions.ndim != 3 or states.shape[0] != actions.shape[0]:
        raise ShapeError("states (N,T+1,n) and actions (N,T,m) required")
    n_roll, horizon = actions.shape[0], actions.shape[1]
    if n_roll < 2:
        raise InputError(f"need >= 2 rollouts to fit dynamics, got {n_roll}")
    if states.shape[1] != horizon + 1:
        raise ShapeError("states must have one more step than actions")
    n, m = states.shape[2], actions.shape[2]

    F = np.zeros((horizon, n, n + m))
    f = np.zeros((horizon, n))
    Sigma = np.zeros((horizon, n, n))
    for t in range(horizon):
        X = np.concatenate([states[:, t, :], actions[:, t, :], np.ones((n_roll, 1))], axis=1)
        Y = states[:, t + 1, :]
        gram = X.T @ X + reg * np.eye(n + m + 1)
        try:
            beta = scipy.linalg.solve(gram, X.T @ Y, assume_a="pos")
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"dynamics fit failed at step {t}") from exc
        F[t] = beta[: n + m].T
        f[t] = beta[n + m]
        resid = Y - X @ beta
        cov = resid.T @ resid / n_roll
        cov = 0.5 * (cov + cov.T)
        evals, evecs = np.linalg.eigh(cov)
        Sigma[t] = (evecs * np.maximum(evals, 0.0)) @ evecs.T
    return LinearDynamics(F, f, Sigma)


def linearize_policy(
    policy_fn: Callable[[Array], Array],
    states: Array,
    noise_cov: Array,
    reg: float = 1e-6,
) -> LinearGaussianPolicy:
    """Affine fit of a deterministic policy around sampled states, per step.

    ``policy_fn`` maps a batch of states (B, n) to actions (B, m). The fitted
    covariance is set to ``noise_cov`` (the exploration-noise covariance),
    which keeps KL divergences against the prior finite.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 3:
        raise ShapeError("states must have shape (N, T+1, n)")
    n_roll, horizon = states.shape[0], states.shape[1] - 1
    if n_roll < 1 or horizon < 1:
        raise InputError("need at least one rollout and one step")
    n = states.shape[2]
    noise_cov = np.asarray(noise_cov, dtype=np.float64)
    m = noise_cov.shape[0]

    K = np.zeros((horizon, m, n))
    k = np.zeros((horizon, m))
    C = np.tile(noise_cov, (horizon, 1, 1))
    for t in range(horizon):
        S = states[:, t, :]
        U = np.atleast_2d(policy_fn(S))
        s_mean = S.mean(axis=0)
        u_mean = U.mean(axis=0)
        Sc = S - s_mean
        Uc = U - u_mean
        gram = Sc.T @ Sc + reg * np.eye(n)
        try:
            K[t] = scipy.linalg.solve(gram, Sc.T @ Uc, assume_a="pos").T
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"policy linearization failed at step {t}") from exc
        k[t] = u_mean - K[t] @ s_mean
    return LinearGaussianPolicy(K, k, C)


# ---------------------------------------------------------------------------
# Gaussian trajectory machinery


def _chol_or_raise(mat: Array, what: str) -> Array:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from exc


def kl_divergence(p: TrajectoryDistribution, other: LinearGaussianPolicy) -> float:
    """Sum over steps of the expected Gaussian KL between action conditionals.

    The expectation over states uses ``p``'s own marginals, so the result is
    the KL divergence between the two closed-loop trajectory distributions
    (their shared dynamics terms cancel).
    """
    pol = p.policy
    if pol.horizon != other.horizon or pol.action_dim != other.action_dim:
        raise ShapeError("policies must share horizon and dimensions")
    m = pol.action_dim
    total = 0.0
    for t in range(pol.horizon):
        c1 = pol.C[t]
        c2 = other.C[t]
        l1 = _chol_or_raise(c1, "policy covariance")
        l2 = _chol_or_raise(c2, "policy covariance")
        logdet1 = 2.0 * np.sum(np.log(np.diag(l1)))
        logdet2 = 2.0 * np.sum(np.log(np.diag(l2)))
        c2_inv_c1 = scipy.linalg.cho_solve((l2, True), c1)
        dK = pol.K[t] - other.K[t]
        d = dK @ p.mean[t] + (pol.k[t] - other.k[t])
        c2_inv_d = scipy.linalg.cho_solve((l2, True), d)
        c2_inv_dK = scipy.linalg.cho_solve((l2, True), dK)
        quad = float(d @ c2_inv_d) + float(np.trace(c2_inv_dK @ p.cov[t] @ dK.T))
        total += 0.5 * (logdet2 - logdet1 - m + float(np.trace(c2_inv_c1)) + quad)
    return float(total)


def lqg_backward(
    dynamics: LinearDynamics,
    cost: QuadraticCost,
    prior: LinearGaussianPolicy | None,
    eta: float,
    lm_reg: float = 0.0,
) -> LinearGaussianPolicy:
    """Maximum-entropy Riccati recursion on the dual surrogate cost.

    The surrogate at each step is ``cost / eta - log prior(u | s)``; with no
    prior the recursion reduces to a plain finite-horizon LQR solve of the
    quadratic cost, and the returned covariance is the inverse action
    Hessian. Raises :class:`NotPositiveDefiniteError` when that Hessian
    (plus ``lm_reg`` on its diagonal) fails its Cholesky factorization.
    """
    if eta <= 0.0:
        raise InputError(f"eta must be positive, got {eta}")
    T = dynamics.horizon
    n, m = cost.state_dim, cost.action_dim
    if cost.horizon != T or dynamics.F.shape[1] != n:
        raise ShapeError("dynamics and cost horizons/dimensions disagree")
    if prior is not None and (prior.horizon != T or prior.action_dim != m):
        raise ShapeError("prior horizon/dimensions disagree with dynamics")

    prior_inv = None
    if prior is not None:
        prior_inv = []
        for t in range(T):
            l2 = _chol_or_raise(prior.C[t], "prior covariance")
            prior_inv.append(scipy.linalg.cho_solve((l2, True), np.eye(m)))

    K = np.zeros((T, m, n))
    k = np.zeros((T, m))
    C = np.zeros((T, m, m))
    Vxx = cost.Cxx_T / eta
    vx = cost.cx_T / eta
    for t in range(T - 1, -1, -1):
        quad = cost.Czz[t] / eta
        lin = cost.cz[t] / eta
        if prior is not None:
            Ci = prior_inv[t]
            M = np.concatenate([-prior.K[t], np.eye(m)], axis=1)
            quad = quad + M.T @ Ci @ M
            lin = lin - M.T @ (Ci @ prior.k[t])

        Ft = dynamics.F[t]
        ft = dynamics.f[t]
        Q = quad + Ft.T @ Vxx @ Ft
        q = lin + Ft.T @ (Vxx @ ft + vx)

        Quu = 0.5 * (Q[n:, n:] + Q[n:, n:].T) + lm_reg * np.eye(m)
        Qux = Q[n:, :n]
        Qxx = Q[:n, :n]
        qu = q[n:]
        qx = q[:n]

        l_uu = _chol_or_raise(Quu, "action Hessian")
        K[t] = -scipy.linalg.cho_solve((l_uu, True), Qux)
        k[t] = -scipy.linalg.cho_solve((l_uu, True), qu)
        Cuu = scipy.linalg.cho_solve((l_uu, True), np.eye(m))
        C[t] = 0.5 * (Cuu + Cuu.T)

        Vxx = Qxx + Qux.T @ K[t]
        Vxx = 0.5 * (Vxx + Vxx.T)
        vx = qx + Qux.T @ k[t]
    return LinearGaussianPolicy(K, k, C)


def lqg_forward(
    dynamics: LinearDynamics,
    policy: LinearGaussianPolicy,
    init_mean: Array,
    init_cov: Array,
) -> TrajectoryDistribution:
    """Propagate Gaussian state marginals through the closed loop."""
    T = dynamics.horizon
    if policy.horizon != T:
        raise ShapeError("policy and dynamics horizons disagree")
    n = dynamics.state_dim
    mean = np.zeros((T + 1, n))
    cov = np.zeros((T + 1, n, n))
    mean[0] = np.asarray(init_mean, dtype=np.float64)
    cov[0] = np.asarray(init_cov, dtype=np.float64)
    for t in range(T):
        Kt, kt, Ct = policy.K[t], policy.k[t], policy.C[t]
        mu, S = mean[t], cov[t]
        mu_u = Kt @ mu + kt
        SKt = S @ Kt.T
        joint_cov = np.block([[S, SKt], [SKt.T, Kt @ SKt + Ct]])
        mean[t + 1] = dynamics.F[t] @ np.concatenate([mu, mu_u]) + dynamics.f[t]
        nxt = dynamics.F[t] @ joint_cov @ dynamics.F[t].T + dynamics.Sigma[t]
        cov[t + 1] = 0.5 * (nxt + nxt.T)
    return TrajectoryDistribution(mean, cov, policy, dynamics)


def expected_cost(cost: QuadraticCost, traj: TrajectoryDistribution) -> float:
    """Exact Gaussian expectation of the quadratic cost under ``traj``."""
    pol = traj.policy
    total = 0.0
    for t in range(cost.horizon):
        Kt, kt, Ct = pol.K[t], pol.k[t], pol.C[t]
        mu, S = traj.mean[t], traj.cov[t]
        mu_z = np.concatenate([mu, Kt @ mu + kt])
        SKt = S @ Kt.T
        cov_z = np.block([[S, SKt], [SKt.T, Kt @ SKt + Ct]])
        total += 0.5 * float(mu_z @ cost.Czz[t] @ mu_z + np.trace(cost.Czz[t] @ cov_z))
        total += float(cost.cz[t] @ mu_z) + float(cost.const[t])
    mu_T, S_T = traj.mean[-1], traj.cov[-1]
    total += 0.5 * float(mu_T @ cost.Cxx_T @ mu_T + np.trace(cost.Cxx_T @ S_T))
    total += float(cost.cx_T @ mu_T) + float(cost.const_T)
    return total


# ---------------------------------------------------------------------------
# Dual / trust-region adaptation


def update_eta(dual: DualState, achieved_kl: float, epsilon: float | None = None, factor: float = 10.0) -> DualState:
    """Scale the dual variable by a fixed factor toward the constraint.

    Too little divergence means the constraint is over-enforced, so eta
    shrinks; too much means it is under-enforced, so eta grows. The result
    is clamped to ``[eta_min, eta_max]``.
    """
    if achieved_kl < 0.0:
        raise InputError(f"achieved_kl must be >= 0, got {achieved_kl}")
    eps = dual.epsilon if epsilon is None else float(epsilon)
    eta = dual.eta / factor if achieved_kl < eps else dual.eta * factor
    return replace(dual, eta=float(np.clip(eta, dual.eta_min, dual.eta_max)))


def update_epsilon(
    dual: DualState,
    expected_improvement: float,
    actual_improvement: float,
    shrink_threshold: float = 0.25,
    grow_threshold: float = 0.75,
) -> DualState:
    """Adapt the trust region to the model's predictive quality.

    The region halves when the realized improvement falls far short of the
    model's prediction, grows by 1.5x when the prediction is nearly met, and
    is left alone otherwise (including when no improvement was predicted).
    """
    if not np.isfinite(expected_improvement):
        raise InputError("expected_improvement must be finite")
    if expected_improvement <= 0.0:
        return dual
    ratio = actual_improvement / expected_improvement
    if ratio < shrink_threshold:
        eps = dual.epsilon * 0.5
    elif ratio > grow_threshold:
        eps = dual.epsilon * 1.5
    else:
        return dual
    return replace(dual, epsilon=float(np.clip(eps, dual.epsilon_min, dual.epsilon_max)))


@dataclass(frozen=True)
class TrajOptResult:
    policy: LinearGaussianPolicy
    dual: DualState
    achieved_kl: float
    prior_cost: float
    new_cost: float
    converged: bool
    status: str
    iterations: int


def update_trajectory(
    dynamics: LinearDynamics,
    prior: LinearGaussianPolicy,
    dual: DualState,
    cost: QuadraticCost,
    init_mean: Array,
    init_cov: Array,
    max_dual_iterations: int = 20,
    convergence_rtol: float = 0.1,
) -> TrajOptResult:
    """Solve the KL-constrained problem by adapting the dual variable.

    Alternates backward pass, forward marginal propagation, and KL
    measurement while searching eta: a fixed-factor walk until the target
    divergence is bracketed, then geometric bisection. On convergence the
    achieved KL lies within ``convergence_rtol`` of the trust region; if the
    iteration budget runs out, the best strictly feasible controller is
    returned with a warning status, and the absence of any feasible iterate
    raises :class:`TrustRegionError`.
    """
    eps = dual.epsilon
    prior_traj = lqg_forward(dynamics, prior, init_mean, init_cov)
    prior_cost = expected_cost(cost, prior_traj)

    eta = float(np.clip(dual.eta, dual.eta_min, dual.eta_max))
    eta_floor = None  # below this, divergence exceeds the trust region
    eta_ceil = None  # above this, divergence is inside the trust region
    lm_reg = 0.0
    best = None  # (new_cost, policy, kl, eta) among feasible iterates
    iterations = 0

    while iterations < max_dual_iterations:
        iterations += 1
        try:
            policy = lqg_backward(dynamics, cost, prior, eta, lm_reg)
        except NotPositiveDefiniteError:
            lm_reg = 2.0 * lm_reg if lm_reg > 0.0 else 1e-8
            continue
        traj = lqg_forward(dynamics, policy, init_mean, init_cov)
        kl = kl_divergence(traj, prior)
        new_cost = expected_cost(cost, traj)
        if not (np.isfinite(kl) and np.isfinite(new_cost)):
            # wildly aggressive controller on a bad model: force a larger eta
            eta_floor = eta if eta_floor is None else max(eta_floor, eta)
            eta = float(np.sqrt(eta_floor * eta_ceil)) if eta_ceil is not None else min(eta * 10.0, dual.eta_max)
            continue

        if kl <= eps and (best is None or new_cost < best[0]):
            best = (new_cost, policy, kl, eta)
        if abs(kl - eps) <= convergence_rtol * eps:
            return TrajOptResult(policy, replace(dual, eta=eta), kl, prior_cost, new_cost, True, "converged", iterations)

        if kl > eps:
            eta_floor = eta if eta_floor is None else max(eta_floor, eta)
        else:
            eta_ceil = eta if eta_ceil is None else min(eta_ceil, eta)

        if eta_floor is not None and eta_ceil is not None:
            eta = float(np.sqrt(eta_floor * eta_ceil))
        else:
            dual_step = update_eta(replace(dual, eta=eta), kl, eps)
            if dual_step.eta == eta:
                break  # clamped at a bound; no further progress possible
            eta = dual_step.eta

    if best is not None:
        new_cost, policy, kl, eta = best
        return TrajOptResult(policy, replace(dual, eta=eta), kl, prior_cost, new_cost, False, "max_iterations", iterations)
    raise TrustRegionError("dual search found no controller inside the trust region")


def cost_to_go(rewards: Array, discount: float) -> Array:
    """Discounted suffix sums of a reward sequence (reward units)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.zeros_like(rewards)
    acc = 0.0
    for t in range(rewards.size - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out


# ---------------------------------------------------------------------------
# Insertion-task cost model


class SmoothedInsertionCost:
    """Quadratic expansions of the insertion stage cost for the backward pass.

    Both norms in the stage cost are smoothed as ``sqrt(|.|^2 + alpha^2)`` so
    gradients and (positive semidefinite) Hessians exist at the target and at
    zero action. The terminal state cost repeats the distance term,
    optionally reweighted.
    """

    def __init__(self, env: InsertionEnvConfig, smoothing: float = 1e-4, terminal_weight: float = 1.0):
        self.target = env.target
        self.action_weight = env.action_cost_weight
        self.smoothing = smoothing
        self.terminal_weight = terminal_weight
        self.state_dim = 6
        self.action_dim = 2

    def _norm_expansion(self, x: Array) -> tuple[float, Array, Array]:
        h = float(np.sqrt(x @ x + self.smoothing**2))
        grad = x / h
        hess = np.eye(x.size) / h - np.outer(x, x) / h**3
        return h, grad, hess

    def stage_cost(self, state: Array, action: Array) -> float:
        """Unsmoothed stage cost (matches the environment's reward sign-flipped)."""
        pos = np.asarray(state)[0:2]
        return self.action_weight * float(np.linalg.norm(action)) + float(np.linalg.norm(pos - self.target))

    def true_cost(self, states: Array, actions: Array) -> float:
        """Total rollout cost including the terminal distance term."""
        total = sum(self.stage_cost(states[t], actions[t]) for t in range(actions.shape[0]))
        total += self.terminal_weight * float(np.linalg.norm(np.asarray(states[-1])[0:2] - self.target))
        return total

    def quadratize(self, states: Array, actions: Array) -> QuadraticCost:
        """Expand the smoothed cost around a nominal trajectory.

        Expansions are converted to absolute coordinates (valid jointly with
        the affine dynamics), so stage quadratics can be compared across
        candidate policies.
        """
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        T = actions.shape[0]
        n, m = self.state_dim, self.action_dim
        Czz = np.zeros((T, n + m, n + m))
        cz = np.zeros((T, n + m))
        const = np.zeros(T)
        P = np.zeros((2, n))
        P[0, 0] = 1.0
        P[1, 1] = 1.0

        for t in range(T):
            s_bar, u_bar = states[t], actions[t]
            val_p, g_p, h_p = self._norm_expansion(P @ s_bar - self.target)
            val_u, g_u, h_u = self._norm_expansion(u_bar)

            H = np.zeros((n + m, n + m))
            H[:n, :n] = P.T @ h_p @ P
            H[n:, n:] = self.action_weight * h_u
            g = np.concatenate([P.T @ g_p, self.action_weight * g_u])
            z_bar = np.concatenate([s_bar, u_bar])
            value = val_p + self.action_weight * val_u

            Czz[t] = H
            cz[t] = g - H @ z_bar
            const[t] = value - g @ z_bar + 0.5 * float(z_bar @ H @ z_bar)

        s_T = states[-1]
        val_p, g_p, h_p = self._norm_expansion(P @ s_T - self.target)
        Cxx_T = self.terminal_weight * (P.T @ h_p @ P)
        gx = self.terminal_weight * (P.T @ g_p)
        cx_T = gx - Cxx_T @ s_T
        const_T = self.terminal_weight * val_p - float(gx @ s_T) + 0.5 * float(s_T @ Cxx_T @ s_T)
        return QuadraticCost(Czz, cz, const, Cxx_T, cx_T, float(const_T), n, m)


# ---------------------------------------------------------------------------
# Semi-supervised epoch driver


@dataclass(frozen=True)
class SupervisorConfig:
    """Knobs of one trajectory-optimization epoch."""

    samples_per_subiter: int = 5
    exploration_std: tuple[float, float] = (1.0, 1.0)
    dynamics_reg: float = 1e-6
    smoothing: float = 1e-4
    terminal_weight: float = 1.0
    max_dual_iterations: int = 20

    def __post_init__(self):
        if self.samples_per_subiter < 2:
            raise InputError("need >= 2 rollouts per sub-iteration to fit dynamics")


@dataclass
class SubiterDiagnostics:
    subiter: int
    eta: float
    epsilon: float
    achieved_kl: float
    expected_improvement: float
    actual_improvement: float
    mean_sample_cost: float
    status: str


@dataclass
class SupervisorResult:
    supervision: list
    sample_rollouts: list
    final_rollout: Rollout
    diagnostics: list


def _gaussian_controller(policy_fn, chol: Array, rng: np.random.Generator):
    def controller(t: int, state: Array) -> Array:
        return policy_fn(state[None, :])[0] + chol @ rng.standard_normal(chol.shape[0])

    return controller


def _linear_gaussian_controller(policy: LinearGaussianPolicy, rng: np.random.Generator):
    chols = [np.linalg.cholesky(policy.C[t]) for t in range(policy.horizon)]

    def controller(t: int, state: Array) -> Array:
        return policy.K[t] @ state + policy.k[t] + chols[t] @ rng.standard_normal(policy.action_dim)

    return controller


def initial_state_distribution(env: InsertionEnvConfig) -> tuple[Array, Array]:
    """Exact mean/covariance of the reset distribution (uniform lateral offset)."""
    mean = np.array([0.0, env.start_height, 0.0, 0.0, 0.0, 0.0])
    cov = np.zeros((6, 6))
    cov[0, 0] = env.reset_range**2 / 3.0
    return mean, cov


def run_supervisor(
    env: InsertionEnvConfig,
    policy_fn: Callable[[Array], Array],
    n_subiters: int,
    dual: DualState,
    cfg: SupervisorConfig,
    discount: float,
    rng: np.random.Generator,
) -> tuple[SupervisorResult, DualState]:
    """One supervision epoch: fit, optimize, and emit value-labeled samples.

    Sub-iteration zero samples the current actor (plus white exploration
    noise) and uses its linearization as the trust-region anchor; later
    sub-iterations anchor on the previous optimized controller. All sampled
    rollouts are returned for the transition buffer; the extra closing
    rollout of the final controller provides the supervision samples.

    Raises :class:`SupervisorError` when fitting or the dual search fails.
    """
    if n_subiters < 1:
        raise InputError("n_subiters must be >= 1")
    cost_model = SmoothedInsertionCost(env, cfg.smoothing, cfg.terminal_weight)
    explore_cov = np.diag(np.asarray(cfg.exploration_std, dtype=np.float64) ** 2)
    chol_explore = np.diag(np.asarray(cfg.exploration_std, dtype=np.float64))
    mu0, S0 = initial_state_distribution(env)

    sample_rollouts: list[Rollout] = []
    diagnostics: list[SubiterDiagnostics] = []
    current: LinearGaussianPolicy | None = None
    expected_improvement = None
    prev_mean_cost = None

    try:
        for it in range(n_subiters):
            if current is None:
                controller = _gaussian_controller(policy_fn, chol_explore, rng)
            else:
                controller = _linear_gaussian_controller(current, rng)
            batch = [rollout(env, controller, rng, stop_on_success=False) for _ in range(cfg.samples_per_subiter)]
            sample_rollouts.extend(batch)

            states = np.stack([r.states for r in batch])
            actions = np.stack([r.actions for r in batch])
            mean_cost = float(np.mean([cost_model.true_cost(r.states, r.actions) for r in batch]))

            actual_improvement = np.nan
            if expected_improvement is not None and prev_mean_cost is not None:
                actual_improvement = prev_mean_cost - mean_cost
                dual = update_epsilon(dual, expected_improvement, actual_improvement)

            dynamics = fit_dynamics(states, actions, cfg.dynamics_reg)
            if current is None:
                prior = linearize_policy(policy_fn, states, explore_cov)
            else:
                prior = current
            quad_cost = cost_model.quadratize(states.mean(axis=0), actions.mean(axis=0))

            result = update_trajectory(
                dynamics, prior, dual, quad_cost, mu0, S0, max_dual_iterations=cfg.max_dual_iterations
            )
            dual = result.dual
            current = result.policy
            expected_improvement = result.prior_cost - result.new_cost
            prev_mean_cost = mean_cost
            diagnostics.append(
                SubiterDiagnostics(
                    subiter=it,
                    eta=result.dual.eta,
                    epsilon=dual.epsilon,
                    achieved_kl=result.achieved_kl,
                    expected_improvement=float(expected_improvement),
                    actual_improvement=float(actual_improvement),
                    mean_sample_cost=mean_cost,
                    status=result.status,
                )
            )
    except (NumericalError, TrustRegionError) as exc:
        raise SupervisorError(f"trajectory optimization failed: {exc}") from exc

    final = rollout(env, _linear_gaussian_controller(current, rng), rng, stop_on_success=False)
    values = cost_to_go(final.rewards, discount)
    supervision = [
        SupervisionSample(final.states[t].copy(), final.actions[t].copy(), float(values[t]))
        for t in range(final.steps)
    ]
    return SupervisorResult(supervision, sample_rollouts, final, diagnostics), dual
