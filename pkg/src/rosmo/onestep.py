"""One-step look-ahead policy improvement and its behavior regularizer.

All target computation here runs on the frozen target network and never
records gradients.  The policy target reweights the prior by exponentiated
one-step advantages; the value target is an n-step return bootstrapped from
the target network's value head; the behavior regularizer is advantage-
filtered log-likelihood of the dataset actions under the unrolled policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Segment
from .model import NetworkWeights, dynamics, logits_to_scalar, predict, represent

ADVANTAGE_CLIP = 20.0


@dataclass
class ImprovementTargets:
    """Per-unroll-step policy targets (K+1, A) and value targets (K+1,)."""

    policy: np.ndarray
    value: np.ndarray


def _flat_predict(weights: NetworkWeights, latents: Tensor) -> tuple[np.ndarray, np.ndarray]:
    preds = predict(weights, latents)
    cfg = weights.config
    probs = ad.softmax(preds.policy_logits).data
    values = logits_to_scalar(preds.value_logits.data, cfg.bins, cfg.support)
    return probs, values


def one_step_q_all_actions(weights: NetworkWeights, latents, gamma: float) -> np.ndarray:
    """q(s, a) = r_g + gamma * v(s'_g) for every action; (B, A) from (B, L)."""
    latents = ad.as_tensor(latents)
    cfg = weights.config
    B = latents.shape[0]
    qs = np.empty((B, cfg.action_count), dtype=np.float64)
    for a in range(cfg.action_count):
        actions = np.full(B, a, dtype=np.int64)
        reward_logits, next_latent = dynamics(weights, latents, actions)
        r = logits_to_scalar(reward_logits.data, cfg.bins, cfg.support)
        _, v = _flat_predict(weights, next_latent)
        qs[:, a] = r + gamma * v
    return qs


def one_step_q(weights: NetworkWeights, state, action: int, gamma: float) -> float:
    """Scalar q for one latent state and action."""
    latents = ad.as_tensor(np.asarray(state, dtype=np.float32).reshape(1, -1))
    actions = np.array([action], dtype=np.int64)
    reward_logits, next_latent = dynamics(weights, latents, actions)
    cfg = weights.config
    r = logits_to_scalar(reward_logits.data, cfg.bins, cfg.support)
    _, v = _flat_predict(weights, next_latent)
    return float(r[0] + gamma * v[0])


def exact_policy_target(priors: np.ndarray, advantages: np.ndarray) -> np.ndarray:
    """p(a|s) proportional to prior(a|s) * exp(advantage).

    Advantages are recentered by their row max (the target is invariant to
    adding a constant) and clipped to +-ADVANTAGE_CLIP before exponentiation.
    """
    adv = advantages - advantages.max(axis=-1, keepdims=True)
    weights = priors * np.exp(np.clip(adv, -ADVANTAGE_CLIP, ADVANTAGE_CLIP))
    return weights / weights.sum(axis=-1, keepdims=True)


def sampled_policy_target(priors: np.ndarray, q_all: np.ndarray, values: np.ndarray,
                          budget: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo policy target from ``budget`` actions sampled off the prior.

    Each sample k is weighted by exp(A_k) / Z_k with
    Z_k = (1 + sum_{i != k} exp(A_i)) / N, scattered back onto the action
    simplex.  The result sums to 1 only in expectation.
    """
    if budget < 1:
        raise ValueError(f"sample budget must be >= 1, got {budget}")
    B, A = priors.shape
    cum = priors.cumsub = np.cumsum(priors, axis=-1)
    u = rng.random((B, budget))
    sampled = (u[:, :, None] > cum[:, None, :]).sum(axis=-1)  # (B, N) action indices
    sampled = np.minimum(sampled, A - 1)
    adv = np.take_along_axis(q_all, sampled, axis=1) - values[:, None]
    exp_adv = np.exp(np.clip(adv, -ADVANTAGE_CLIP, ADVANTAGE_CLIP))
    z = (1.0 + exp_adv.sum(axis=1, keepdims=True) - exp_adv) / budget
    weights = exp_adv / z
    target = np.zeros((B, A), dtype=np.float64)
    np.add.at(target, (np.arange(B)[:, None], sampled), weights / budget)
    return target


def improve_batch(weights: NetworkWeights, obs: np.ndarray, rewards: np.ndarray,
                  K: int, n: int, gamma: float, sample_budget: int | None = None,
                  rng: np.random.Generator | None = None):
    """Policy and value targets for a segment batch.

    obs: (B, K+n+1, obs_dim); rewards: (B, K+n).
    Returns policy targets (B, K+1, A), value targets (B, K+1), plus the
    per-action q table (B, K+1, A) and state values (B, K+n+1) so callers can
    reuse them for the behavior regularizer.
    """
    B, S1, D = obs.shape
    assert S1 == K + n + 1, (S1, K, n)
    cfg = weights.config
    latents = represent(weights, obs.reshape(B * S1, D))
    priors_flat, values_flat = _flat_predict(weights, latents)
    values = values_flat.reshape(B, S1)
    priors = priors_flat.reshape(B, S1, cfg.action_count)[:, :K + 1]

    head = ad._wrap(latents.data.reshape(B, S1, cfg.latent_dim)[:, :K + 1].reshape(
        B * (K + 1), cfg.latent_dim))
    q_all = one_step_q_all_actions(weights, head, gamma).reshape(B, K + 1, cfg.action_count)
    advantages = q_all - values[:, :K + 1, None]

    if sample_budget is None:
        policy = exact_policy_target(
            priors.reshape(-1, cfg.action_count),
            advantages.reshape(-1, cfg.action_count))
    else:
        if rng is None:
            raise ValueError("sampled mode needs an rng")
        policy = sampled_policy_target(
            priors.reshape(-1, cfg.action_count),
            q_all.reshape(-1, cfg.action_count),
            values[:, :K + 1].reshape(-1),
            sample_budget, rng)
    policy = policy.reshape(B, K + 1, cfg.action_count)

    value_targets = n_step_returns(rewards, values, K, n, gamma)
    return policy, value_targets, q_all, values


def n_step_returns(rewards: np.ndarray, values: np.ndarray, K: int, n: int,
                   gamma: float) -> np.ndarray:
    """z_j = sum_{m<n} gamma^m r_{j+m} + gamma^n v_{j+n} for j = 0..K."""
    B = rewards.shape[0]
    out = np.zeros((B, K + 1), dtype=np.float64)
    for j in range(K + 1):
        acc = np.zeros(B, dtype=np.float64)
        for m in range(n):
            acc += (gamma ** m) * rewards[:, j + m]
        out[:, j] = acc + (gamma ** n) * values[:, j + n]
    return out


def value_target(weights: NetworkWeights, segment: Segment, j: int, n: int,
                 gamma: float) -> float:
    """n-step return for unroll index j of one segment."""
    K_plus_n = len(segment.actions)
    if j < 0 or j + n > K_plus_n:
        raise ValueError(f"unroll index {j} with n={n} exceeds segment of {K_plus_n} steps")
    latent = represent(weights, segment.observations[j + n][None, :])
    _, v = _flat_predict(weights, latent)
    acc = 0.0
    for m in range(n):
        acc += (gamma ** m) * float(segment.rewards[j + m])
    return float(acc + (gamma ** n) * v[0])


def policy_target(weights: NetworkWeights, state, gamma: float,
                  sample_budget: int | None = None,
                  rng: np.random.Generator | None = None):
    """Improved policy target and advantages at one latent state."""
    latents = ad.as_tensor(np.asarray(state, dtype=np.float32).reshape(1, -1))
    priors, values = _flat_predict(weights, latents)
    q_all = one_step_q_all_actions(weights, latents, gamma)
    advantages = q_all - values[:, None]
    if sample_budget is None:
        target = exact_policy_target(priors, advantages)
    else:
        if rng is None:
            raise ValueError("sampled mode needs an rng")
        target = sampled_policy_target(priors, q_all, values, sample_budget, rng)
    return target[0], advantages[0]


def improve(weights: NetworkWeights, segment: Segment, K: int, n: int, gamma: float,
            sample_budget: int | None = None,
            rng: np.random.Generator | None = None) -> ImprovementTargets:
    """Targets for one segment; see ``improve_batch`` for the batched form."""
    policy, value, _, _ = improve_batch(
        weights,
        segment.observations[None, ...].astype(np.float32),
        segment.rewards[None, ...].astype(np.float32),
        K, n, gamma, sample_budget=sample_budget, rng=rng)
    return ImprovementTargets(policy=policy[0], value=value[0])


def data_action_advantages(q_all: np.ndarray, values: np.ndarray,
                           actions: np.ndarray, K: int) -> np.ndarray:
    """Advantage of each dataset action a_{t+j}, j = 0..K; (B, K+1)."""
    q_data = np.take_along_axis(
        q_all, actions[:, :K + 1, None].astype(np.int64), axis=2)[..., 0]
    return q_data - values[:, :K + 1]


def behavior_regularizer(policy_logits_per_step: list[Tensor],
                         actions: np.ndarray,
                         advantage_mask: np.ndarray) -> Tensor:
    """-(1/(K+1)) * sum_j log pi^j(a_{t+j}) * 1[A_j > 0], averaged over the batch.

    ``policy_logits_per_step`` are the K+1 unrolled online policy logits (on
    tape); the mask comes from target-network advantages of the dataset
    actions (strict Heaviside: zero advantage contributes nothing).
    """
    K1 = len(policy_logits_per_step)
    B, A = policy_logits_per_step[0].shape
    total = None
    for j, logits in enumerate(policy_logits_per_step):
        picked = ad.one_hot(actions[:, j], A).data * advantage_mask[:, j:j + 1]
        term = ad.reduce_sum(ad.mul(ad.log_softmax(logits), ad._wrap(
            picked.astype(np.float32))), axis=1)
        total = term if total is None else ad.add(total, term)
    return ad.scale(ad.reduce_mean(total), -1.0 / K1)


def heaviside_mask(advantages: np.ndarray) -> np.ndarray:
    return (advantages > 0.0).astype(np.float32)
