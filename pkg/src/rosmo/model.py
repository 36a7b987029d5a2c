"""The latent dynamics model: representation, dynamics and prediction MLPs,
categorical reward/value heads, the invertible scalar transform, and target
network management.

The three functions compose as: observation -> represent -> latent;
(latent, action) -> dynamics -> (reward logits, next latent);
latent -> predict -> (policy logits, value logits).  Scalars enter and leave
the categorical heads through ``scalar_transform`` / ``two_hot`` /
``categorical_expectation`` / ``inverse_transform``.  Hidden states are not
normalized anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .envs import ENV_SPECS

# Value/reward support half-width per env, in transformed space.  Covers the
# transformed return range: catch returns are in [-1, 1]; cartpole up to
# ~1000; mountain_car down to -1000 (transform of 1000 is ~31.7).
SUPPORT_HALF_WIDTH = {"catch": 2.0, "cartpole": 30.0, "mountain_car": 32.0}

TRANSFORM_EPS = 1e-3


@dataclass(frozen=True)
class ModelConfig:
    obs_dim: int
    action_count: int
    latent_dim: int = 32
    repr_hidden: tuple = (64, 64)
    dyn_hidden_in: int = 32
    dyn_capacity: int = 256
    pred_hidden: int = 32
    bins: int = 20
    support: float = 2.0
    dynamics_grad_scale: float = 0.5

    @classmethod
    def for_env(cls, env_id: str, dyn_capacity: int = 256, bins: int = 20) -> "ModelConfig":
        spec = ENV_SPECS[env_id]
        return cls(
            obs_dim=spec.observation_dim,
            action_count=spec.action_count,
            dyn_capacity=dyn_capacity,
            bins=bins,
            support=SUPPORT_HALF_WIDTH[env_id],
        )


# ---------------------------------------------------------------------------
# scalar transform and categorical representation


def scalar_transform(x) -> np.ndarray:
    """sign(x) * (sqrt(|x|+1) - 1 + eps*|x|); contracts large magnitudes."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * (np.sqrt(np.abs(x) + 1.0) - 1.0 + TRANSFORM_EPS * np.abs(x))


def inverse_transform(y) -> np.ndarray:
    """Exact analytic inverse of ``scalar_transform``."""
    y = np.asarray(y, dtype=np.float64)
    a = np.abs(y)
    root = (np.sqrt(1.0 + 4.0 * TRANSFORM_EPS * (a + 1.0 + TRANSFORM_EPS)) - 1.0) / (
        2.0 * TRANSFORM_EPS)
    return np.sign(y) * (root * root - 1.0)


def bin_centers(bins: int, support: float) -> np.ndarray:
    return np.linspace(-support, support, bins, dtype=np.float64)


def two_hot(x, bins: int, support: float) -> np.ndarray:
    """Linear interpolation between the two nearest bin centers.

    Input values are clipped into [-support, support]; output rows sum to 1
    and their expectation over the bin centers reproduces the clipped input.
    """
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    x = np.clip(np.asarray(x, dtype=np.float64), -support, support)
    width = 2.0 * support / (bins - 1)
    pos = (x + support) / width
    low = np.clip(np.floor(pos).astype(np.int64), 0, bins - 2)
    frac = pos - low
    out = np.zeros(x.shape + (bins,), dtype=np.float64)
    np.put_along_axis(out, low[..., None], (1.0 - frac)[..., None], axis=-1)
    np.put_along_axis(out, (low + 1)[..., None], frac[..., None], axis=-1)
    return out


def categorical_expectation(probs, bins: int, support: float) -> np.ndarray:
    centers = bin_centers(bins, support)
    return np.asarray(probs, dtype=np.float64) @ centers


def logits_to_scalar(logits: np.ndarray, bins: int, support: float) -> np.ndarray:
    """Softmax over bins, expectation over centers, then the inverse transform."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z, dtype=np.float64)
    probs = e / e.sum(axis=-1, keepdims=True)
    return inverse_transform(categorical_expectation(probs, bins, support))


# ---------------------------------------------------------------------------
# networks


@dataclass
class NetworkWeights:
    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.params.keys())

    def tensors(self, names=None) -> list[Tensor]:
        return [self.params[k] for k in (names or self.names())]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(
            config=self.config,
            params={k: Tensor(t.data.copy()) for k, t in self.params.items()},
        )

    def with_arrays(self, arrays: list[np.ndarray], names=None) -> "NetworkWeights":
        names = names or self.names()
        new = dict(self.params)
        for k, a in zip(names, arrays):
            new[k] = ad._wrap(np.ascontiguousarray(a, dtype=np.float32))
        return NetworkWeights(config=self.config, params=new)


@dataclass
class TargetWeights:
    """Frozen copy of the online weights, refreshed on a fixed interval."""

    weights: NetworkWeights
    synced_at_step: int = 0


def _layer_sizes(config: ModelConfig) -> dict[str, tuple]:
    c = config
    sizes: dict[str, tuple] = {}
    dims = [c.obs_dim, *c.repr_hidden, c.latent_dim]
    for i in range(len(dims) - 1):
        sizes[f"repr/w{i}"] = (dims[i], dims[i + 1])
        sizes[f"repr/b{i}"] = (dims[i + 1],)
    dims = [c.latent_dim + c.action_count, c.dyn_hidden_in, c.dyn_capacity, c.latent_dim]
    for i in range(len(dims) - 1):
        sizes[f"dyn/w{i}"] = (dims[i], dims[i + 1])
        sizes[f"dyn/b{i}"] = (dims[i + 1],)
    sizes["dyn/wr"] = (c.latent_dim, c.bins)
    sizes["dyn/br"] = (c.bins,)
    sizes["pred/w0"] = (c.latent_dim, c.pred_hidden)
    sizes["pred/b0"] = (c.pred_hidden,)
    sizes["pred/wp"] = (c.pred_hidden, c.action_count)
    sizes["pred/bp"] = (c.action_count,)
    sizes["pred/wv"] = (c.pred_hidden, c.bins)
    sizes["pred/bv"] = (c.bins,)
    return sizes


def init_weights(config: ModelConfig, seed: int) -> NetworkWeights:
    rng = np.random.default_rng((int(seed), 0x57E16))
    params: dict[str, Tensor] = {}
    for name, shape in _layer_sizes(config).items():
        if name.split("/")[1].startswith("b"):
            arr = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = shape[0]
            arr = (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(np.float32)
        params[name] = Tensor(arr)
    return NetworkWeights(config=config, params=params)


def _linear(params, prefix: str, i: int, x: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, params[f"{prefix}/w{i}"]), params[f"{prefix}/b{i}"])


def represent(weights: NetworkWeights, obs) -> Tensor:
    """Root latent from an observation batch (B, obs_dim) -> (B, latent)."""
    obs = ad.as_tensor(obs)
    if obs.shape[-1] != weights.config.obs_dim:
        raise ValueError(
            f"observation dim {obs.shape[-1]} != expected {weights.config.obs_dim}")
    h = ad.elu(_linear(weights.params, "repr", 0, obs))
    h = ad.elu(_linear(weights.params, "repr", 1, h))
    return _linear(weights.params, "repr", 2, h)


def dynamics(weights: NetworkWeights, state: Tensor, actions,
             grad_scale: float | None = None) -> tuple[Tensor, Tensor]:
    """(latent, action indices) -> (reward logits, next latent).

    The incoming latent's gradient is scaled (default 0.5) so deep unrolls do
    not amplify gradients through the recurrent dynamics path.
    """
    cfg = weights.config
    if grad_scale is None:
        grad_scale = cfg.dynamics_grad_scale
    state = ad.scale_gradient(state, grad_scale)
    onehot = ad.one_hot(np.asarray(actions), cfg.action_count, dtype=state.dtype)
    x = ad.concat([state, onehot], axis=-1)
    h = ad.elu(_linear(weights.params, "dyn", 0, x))
    h = ad.elu(_linear(weights.params, "dyn", 1, h))
    next_state = _linear(weights.params, "dyn", 2, h)
    reward_logits = ad.add(ad.matmul(next_state, weights.params["dyn/wr"]),
                           weights.params["dyn/br"])
    return reward_logits, next_state


@dataclass
class Predictions:
    policy_logits: Tensor
    value_logits: Tensor


def predict(weights: NetworkWeights, state: Tensor) -> Predictions:
    h = ad.elu(_linear(weights.params, "pred", 0, state))
    policy = ad.add(ad.matmul(h, weights.params["pred/wp"]), weights.params["pred/bp"])
    value = ad.add(ad.matmul(h, weights.params["pred/wv"]), weights.params["pred/bv"])
    return Predictions(policy_logits=policy, value_logits=value)


def policy_probs(weights: NetworkWeights, state: Tensor) -> np.ndarray:
    return ad.softmax(predict(weights, state).policy_logits).data


def value_scalar(weights: NetworkWeights, state: Tensor) -> np.ndarray:
    cfg = weights.config
    return logits_to_scalar(predict(weights, state).value_logits.data, cfg.bins, cfg.support)


def reward_scalar(weights: NetworkWeights, reward_logits: Tensor) -> np.ndarray:
    cfg = weights.config
    return logits_to_scalar(reward_logits.data, cfg.bins, cfg.support)


def update_target(weights: NetworkWeights, target: TargetWeights, step: int,
                  interval: int) -> TargetWeights:
    """Hard copy of the online weights when step is a sync multiple."""
    if step % interval == 0:
        return TargetWeights(weights=weights.copy(), synced_at_step=step)
    return target
