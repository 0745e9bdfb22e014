"""Desk-scale verification of the horizon-length variance decomposition.

In an MDP whose states are sampled i.i.d. every step (episodes never end),
training with a vanilla policy gradient and advantage targets discounted
at ``gamma = 1 - 2/(h+1)`` adds to each advantage a noise term whose
variance is ``(h + 1/h - 2)/4`` times the per-step reward variance. The
policy-gradient covariance is then an affine function of
``h + 1/h - 2``. This module builds the tabular MDP, measures both
quantities by Monte Carlo, and provides the batch-size and learning-rate
schedule helpers used alongside the scaling fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import discounted_reverse_sum


class UntrainedBaselineError(RuntimeError):
    """Policy baseline does not match the closed-form value function."""


@dataclass(frozen=True)
class IndepMDP:
    """Independent-timestep MDP: contexts drawn i.i.d., reward depends
    only on the current (context, action), episodes never terminate."""

    reward_means: np.ndarray  # (contexts, actions)
    context_probs: np.ndarray | None = None
    reward_noise_sd: float = 0.0

    def __post_init__(self):
        means = np.asarray(self.reward_means, dtype=np.float64)
        object.__setattr__(self, "reward_means", means)
        if means.ndim != 2 or not np.all(np.isfinite(means)):
            raise ValueError("reward_means must be a finite 2-d table")
        if self.context_probs is None:
            probs = np.full(means.shape[0], 1.0 / means.shape[0])
        else:
            probs = np.asarray(self.context_probs, dtype=np.float64)
            if probs.shape != (means.shape[0],) or np.any(probs < 0):
                raise ValueError("context_probs must be non-negative, one per context")
            total = probs.sum()
            if not math.isclose(total, 1.0, rel_tol=1e-9):
                raise ValueError("context_probs must sum to 1")
            probs = probs / total
        object.__setattr__(self, "context_probs", probs)
        if self.reward_noise_sd < 0:
            raise ValueError("reward_noise_sd must be >= 0")

    @property
    def n_contexts(self):
        return self.reward_means.shape[0]

    @property
    def n_actions(self):
        return self.reward_means.shape[1]


@dataclass
class SoftmaxPolicy:
    logits: np.ndarray  # (contexts, actions)
    baseline: np.ndarray | None = None  # (contexts,)

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be finite")
        if self.baseline is not None:
            self.baseline = np.asarray(self.baseline, dtype=np.float64)

    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class HorizonSweep:
    horizons: tuple
    rollout_length: int = 64
    n_rollouts: int = 10_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(float(h) for h in self.horizons))
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ValueError("horizons must be >= 1")
        if self.rollout_length < 2 * max(self.horizons):
            raise ValueError("rollout_length must be >= 2 * max(horizons)")
        if self.n_rollouts < 2:
            raise ValueError("n_rollouts must be >= 2")


def gamma_of_h(h):
    """Discount rate with the same center of mass as the interval [0, h-1]."""
    h_arr = np.asarray(h, dtype=np.float64)
    if np.any(h_arr < 1):
        raise ValueError("h must be >= 1")
    out = 1.0 - 2.0 / (h_arr + 1.0)
    return float(out) if np.ndim(h) == 0 else out


def gae_lambda1(rewards, values, gamma):
    """Value targets and advantages for full credit assignment.

    ``targets[t] = sum_{k >= t} gamma**(k-t) * rewards[k]`` (truncated at
    the sequence end) and ``advantages = targets - values``.
    """
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("rewards must be non-empty")
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must have equal length")
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must be in [0, 1]")
    targets = discounted_reverse_sum(rewards, gamma)
    return targets, targets - values


def noise_variance(h, reward_var, n_samples=100_000, seed=0):
    """Monte-Carlo vs analytic variance of the advantage noise term.

    Returns ``(mc_estimate, analytic)`` where the analytic value is
    ``(h + 1/h - 2)/4 * reward_var``: the variance of the discounted
    future-reward tail added to each advantage.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 10000")
    analytic = 0.25 * (h + 1.0 / h - 2.0) * reward_var
    gamma = gamma_of_h(h)
    if gamma == 0.0:
        return 0.0, analytic
    # Truncate where the remaining tail contributes < 1e-8 of the variance.
    t_max = int(math.ceil(math.log(1e-8) / (2.0 * math.log(gamma))))
    rng = np.random.default_rng(seed)
    sd = math.sqrt(reward_var)
    acc = np.zeros(n_samples)
    discount = gamma
    for _ in range(t_max):
        acc += discount * sd * rng.standard_normal(n_samples)
        discount *= gamma
    return float(np.var(acc, ddof=1)), analytic


def value_baseline(mdp: IndepMDP, policy: SoftmaxPolicy, gamma, rollout_length) -> np.ndarray:
    """Closed-form converged baseline: the immediate-reward value function
    plus the mean of the discounted future-reward tail (truncated to the
    rollout length, matching the estimator)."""
    probs = policy.probs()
    v0 = np.sum(probs * mdp.reward_means, axis=1)
    r_bar = float(np.sum(mdp.context_probs * v0))
    if gamma == 0.0 or rollout_length < 2:
        tail = 0.0
    else:
        tail = r_bar * gamma * (1.0 - gamma ** (rollout_length - 1)) / (1.0 - gamma)
    return v0 + tail


@dataclass(frozen=True)
class TraceEstimate:
    h: float
    gamma: float
    trace: float
    stderr: float
    n_rollouts: int


def gradient_covariance_trace(
    mdp: IndepMDP,
    policy: SoftmaxPolicy,
    h,
    sweep: HorizonSweep,
    baseline_tol: float = 1e-8,
) -> TraceEstimate:
    """Trace of the covariance of the single-step policy-gradient term.

    Each rollout contributes ``grad log pi(a_0 | s_0) * A_0`` where the
    advantage discounts the whole rollout at gamma(h). The policy baseline
    must equal the closed-form value function (see
    :func:`value_baseline`) so the advantage noise decomposition applies.
    The standard error comes from 10 consecutive rollout blocks.
    """
    gamma = gamma_of_h(h)
    expected = value_baseline(mdp, policy, gamma, sweep.rollout_length)
    if policy.baseline is None:
        raise UntrainedBaselineError("policy.baseline is unset; fit it with value_baseline")
    scale = max(1.0, float(np.max(np.abs(expected))))
    if np.max(np.abs(policy.baseline - expected)) > baseline_tol * scale:
        raise UntrainedBaselineError(
            "baseline residual exceeds tolerance; refit with value_baseline"
        )

    n, t_len = sweep.n_rollouts, sweep.rollout_length
    rng = np.random.default_rng([sweep.seed, int(round(h * 1024))])
    probs = policy.probs()
    cum_ctx = np.cumsum(mdp.context_probs)
    cum_act = np.cumsum(probs, axis=1)

    states = np.searchsorted(cum_ctx, rng.random((n, t_len)), side="right")
    states = np.minimum(states, mdp.n_contexts - 1)
    u = rng.random((n, t_len))
    actions = (u[:, :, None] > cum_act[states]).sum(axis=2)
    actions = np.minimum(actions, mdp.n_actions - 1)
    rewards = mdp.reward_means[states, actions]
    if mdp.reward_noise_sd > 0:
        rewards = rewards + mdp.reward_noise_sd * rng.standard_normal((n, t_len))

    discounts = gamma ** np.arange(t_len)
    v_hat0 = rewards @ discounts
    s0, a0 = states[:, 0], actions[:, 0]
    adv = v_hat0 - policy.baseline[s0]

    # grad log pi(a0|s0) is (onehot(a0) - pi(s0, .)) on row s0, zero elsewhere.
    grads = np.zeros((n, mdp.n_contexts, mdp.n_actions))
    rows = np.arange(n)
    grads[rows, s0] = -probs[s0]
    grads[rows, s0, a0] += 1.0
    grads *= adv[:, None, None]
    flat = grads.reshape(n, -1)

    trace = float(np.sum(np.var(flat, axis=0, ddof=1)))
    blocks = np.array_split(flat, 10)
    block_traces = [np.sum(np.var(b, axis=0, ddof=1)) for b in blocks]
    stderr = float(np.std(block_traces, ddof=1) / math.sqrt(len(block_traces)))
    return TraceEstimate(float(h), gamma, trace, stderr, n)


@dataclass(frozen=True)
class AffineFit:
    intercept: float
    slope: float
    r_squared: float


def affine_fit(points) -> AffineFit:
    """Ordinary least squares line through (x, y) points.

    Needs at least 3 points with at least 2 distinct x. For constant y the
    fit is the flat line with R squared defined as 1.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("points must be an (n, 2) array with n >= 3")
    x, y = pts[:, 0], pts[:, 1]
    if np.all(x == x[0]):
        raise ValueError("x values are degenerate (all equal)")
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return AffineFit(float(y[0]), 0.0, 1.0)
    ss_res = float(np.sum((intercept + slope * x - y) ** 2))
    return AffineFit(float(intercept), float(slope), 1.0 - ss_res / ss_tot)


@dataclass(frozen=True)
class SweepResult:
    estimates: tuple[TraceEstimate, ...]
    affine: AffineFit | None
    affine_refused_reason: str | None = None

    def noise_scale(self):
        """x coordinates h + 1/h - 2 for the affine fit."""
        return np.array([e.h + 1.0 / e.h - 2.0 for e in self.estimates])


def run_sweep(mdp: IndepMDP, policy: SoftmaxPolicy, sweep: HorizonSweep) -> SweepResult:
    """Covariance traces across a horizon sweep plus the affine fit of
    trace against h + 1/h - 2 (refused below 3 horizons)."""
    estimates = []
    for h in sweep.horizons:
        gamma = gamma_of_h(h)
        fitted = SoftmaxPolicy(
            policy.logits, value_baseline(mdp, policy, gamma, sweep.rollout_length)
        )
        estimates.append(gradient_covariance_trace(mdp, fitted, h, sweep))
    xs = np.array([e.h + 1.0 / e.h - 2.0 for e in estimates])
    ys = np.array([e.trace for e in estimates])
    if len(estimates) >= 3 and np.unique(xs).size >= 2:
        fit = affine_fit(np.column_stack([xs, ys]))
        return SweepResult(tuple(estimates), fit)
    return SweepResult(tuple(estimates), None, "affine fit needs >= 3 distinct horizons")


def default_mdp(n_contexts=4, n_actions=4, reward_noise_sd=0.5) -> IndepMDP:
    """Classification-style toy task: one rewarded action per context."""
    means = np.eye(n_contexts, n_actions)
    return IndepMDP(means, reward_noise_sd=reward_noise_sd)


def uniform_policy(mdp: IndepMDP) -> SoftmaxPolicy:
    return SoftmaxPolicy(np.zeros((mdp.n_contexts, mdp.n_actions)))


# -- schedules -------------------------------------------------------------


def batch_schedule(e_so_far, b_min):
    """Batch size (in interactions) after ``e_so_far`` interactions:
    ``max(b_min, e_so_far**0.84 / 80)``."""
    if e_so_far < 0:
        raise ValueError("e_so_far must be >= 0")
    if b_min < 1:
        raise ValueError("b_min must be >= 1")
    return max(float(b_min), float(e_so_far) ** 0.84 / 80.0)


def lr_scale(kind, factor, layers_per_block=2):
    """Learning-rate multiplier keeping the step proportional to the
    initialization scale: ``1/sqrt(factor)`` when scaling width,
    ``1/sqrt(factor**(1/L))`` when scaling depth with L layers per
    residual block."""
    if not factor > 0:
        raise ValueError("factor must be > 0")
    if kind == "width":
        return factor**-0.5
    if kind == "depth":
        if layers_per_block < 1:
            raise ValueError("layers_per_block must be >= 1")
        return factor ** (-0.5 / layers_per_block)
    raise ValueError("kind must be 'width' or 'depth'")


# -- sample-efficiency sweep (tabular training) -----------------------------


def train_to_target(
    mdp: IndepMDP,
    h,
    target_accuracy,
    lr=0.5,
    batch_rollouts=32,
    max_interactions=5_000_000,
    seed=0,
):
    """Interactions needed by vanilla policy gradient to reach a mean
    accuracy target, with advantages discounted at gamma(h).

    The rewarded action per context defines "accuracy" (evaluated in
    closed form); the baseline is refit in closed form every update.
    Returns the cumulative interaction count, or raises if the budget runs
    out before the target is reached.
    """
    gamma = gamma_of_h(h)
    t_len = max(4, int(2 * math.ceil(h)))
    rng = np.random.default_rng([seed, int(round(h * 1024))])
    policy = SoftmaxPolicy(np.zeros((mdp.n_contexts, mdp.n_actions)))
    best_action = np.argmax(mdp.reward_means, axis=1)
    cum_ctx = np.cumsum(mdp.context_probs)
    interactions = 0
    while interactions < max_interactions:
        probs = policy.probs()
        accuracy = float(
            np.sum(mdp.context_probs * probs[np.arange(mdp.n_contexts), best_action])
        )
        if accuracy >= target_accuracy:
            return interactions
        baseline = value_baseline(mdp, policy, gamma, t_len)
        cum_act = np.cumsum(probs, axis=1)
        states = np.searchsorted(cum_ctx, rng.random((batch_rollouts, t_len)), side="right")
        states = np.minimum(states, mdp.n_contexts - 1)
        u = rng.random((batch_rollouts, t_len))
        actions = (u[:, :, None] > cum_act[states]).sum(axis=2)
        actions = np.minimum(actions, mdp.n_actions - 1)
        rewards = mdp.reward_means[states, actions]
        if mdp.reward_noise_sd > 0:
            rewards = rewards + mdp.reward_noise_sd * rng.standard_normal(rewards.shape)
        targets = np.empty_like(rewards)
        for i in range(batch_rollouts):
            targets[i] = discounted_reverse_sum(np.ascontiguousarray(rewards[i]), gamma)
        adv = targets - baseline[states]
        grad = np.zeros_like(policy.logits)
        np.add.at(grad, (states.ravel(), actions.ravel()), adv.ravel())
        flat_states = states.ravel()
        np.add.at(grad, flat_states, -adv.ravel()[:, None] * probs[flat_states])
        policy = SoftmaxPolicy(policy.logits + lr * grad / (batch_rollouts * t_len))
        interactions += batch_rollouts * t_len
    raise RuntimeError(f"target accuracy {target_accuracy} not reached within budget")


def sample_efficiency_sweep(mdp, horizons, target_accuracy, seed=0, **kwargs):
    """Interactions-to-target across horizons with its affine fit in h."""
    counts = [train_to_target(mdp, h, target_accuracy, seed=seed, **kwargs) for h in horizons]
    pts = np.column_stack([np.asarray(horizons, dtype=float), np.asarray(counts, dtype=float)])
    return counts, affine_fit(pts)
