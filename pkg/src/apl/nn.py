"""Dense networks in float64 numpy: forward pass, reverse-mode gradients, Adam,
a tanh-squashed Gaussian policy head and Polyak target tracking.

Parameters of a network live in one flat vector. Layer ``i`` owns a weight
block of shape ``(w_i, w_{i+1})`` stored row-major, followed by its bias of
length ``w_{i+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")
LOG_2PI = float(np.log(2.0 * np.pi))
LOG_2 = float(np.log(2.0))


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or inf shows up in a forward or backward pass."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class MLPSpec:
    layer_widths: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def out_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_params(self) -> int:
        w = self.layer_widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    def activation(self, layer: int) -> str:
        return self.output_activation if layer == self.n_layers - 1 else self.hidden_activation


def unpack(spec: MLPSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``(W, b)`` per layer into ``params`` (no copies)."""
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    layers = []
    offset = 0
    w = spec.layer_widths
    for i in range(spec.n_layers):
        n_in, n_out = w[i], w[i + 1]
        W = params[offset:offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = params[offset:offset + n_out]
        offset += n_out
        layers.append((W, b))
    return layers


def init_params(spec: MLPSpec, rng: np.random.Generator) -> np.ndarray:
    """Fan-in uniform initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    params = np.empty(spec.n_params)
    for W, b in unpack(spec, params):
        bound = 1.0 / np.sqrt(W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return params


def _activate_(kind: str, z: np.ndarray) -> np.ndarray:
    """Apply the activation in place."""
    if kind == "relu":
        np.maximum(z, 0.0, out=z)
    elif kind == "tanh":
        np.tanh(z, out=z)
    return z


def _affine(h: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = h @ W
    z += b
    return z


def _as_batch(spec: MLPSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValueError(f"input of shape {np.shape(x)} does not match input width {spec.in_dim}")
    return x, single


def mlp_forward(spec: MLPSpec, params: np.ndarray, x) -> np.ndarray:
    """Evaluate the network on one input vector or on a batch of rows."""
    h, single = _as_batch(spec, x)
    for i, (W, b) in enumerate(unpack(spec, params)):
        h = _activate_(spec.activation(i), _affine(h, W, b))
    return h[0] if single else h


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]


def forward_with_cache(spec: MLPSpec, params: np.ndarray, x) -> tuple[np.ndarray, ForwardCache]:
    h, _ = _as_batch(spec, x)
    cache = ForwardCache(inputs=[], outputs=[])
    for i, (W, b) in enumerate(unpack(spec, params)):
        cache.inputs.append(h)
        h = _activate_(spec.activation(i), _affine(h, W, b))
        cache.outputs.append(h)
    return h, cache


def backward(spec: MLPSpec, params: np.ndarray, cache: ForwardCache, grad_out: np.ndarray,
             need_input_grad: bool = False) -> tuple[np.ndarray, np.ndarray | None]:
    """Reverse pass: gradient w.r.t. the flat parameters and optionally the input."""
    grads = np.empty_like(params)
    grad_layers = unpack(spec, grads)
    layers = unpack(spec, params)
    g = np.array(grad_out, dtype=np.float64)
    for i in reversed(range(spec.n_layers)):
        kind = spec.activation(i)
        out = cache.outputs[i]
        if kind == "relu":
            np.multiply(g, out > 0.0, out=g)
        elif kind == "tanh":
            g *= 1.0 - out * out
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient at layer {i}", layer=i)
        dW, db = grad_layers[i]
        np.matmul(cache.inputs[i].T, g, out=dW)
        np.sum(g, axis=0, out=db)
        if i > 0 or need_input_grad:
            g = g @ layers[i][0].T
    return grads, (g if need_input_grad else None)


LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def loss_gradients(spec: MLPSpec, params: np.ndarray, x, loss: LossFn) -> tuple[float, np.ndarray]:
    """Value and exact parameter gradient of ``loss(network(x))``.

    ``loss`` receives the batch of outputs and returns ``(value, d value / d outputs)``.
    """
    out, cache = forward_with_cache(spec, params, x)
    for i, h in enumerate(cache.outputs):
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"non-finite activation at layer {i}", layer=i)
    value, grad_out = loss(out)
    grads, _ = backward(spec, params, cache, np.reshape(grad_out, out.shape))
    return float(value), grads


# Loss primitives. Each returns the value and its gradient w.r.t. the first argument.

def mean_squared(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def log_mean_exp(x: np.ndarray, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Stable log(mean(exp(x))) along ``axis``; the gradient is the softmax."""
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = np.sum(e, axis=axis, keepdims=True)
    value = np.squeeze(m + np.log(s / x.shape[axis]), axis=axis)
    return value, e / s


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n: int, learning_rate: float = 3e-4, **kwargs) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, learning_rate, **kwargs)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam descent step. Inputs are left untouched."""
    if params.shape != grads.shape or grads.shape != state.first_moment.shape:
        raise ValueError("params, grads and optimizer moments must have the same length")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient passed to adam_step")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


def polyak_update(target: np.ndarray, online: np.ndarray, tau: float) -> np.ndarray:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if target.shape != online.shape:
        raise ValueError("target and online parameter vectors differ in length")
    if tau == 1.0:
        return online.copy()
    return tau * online + (1.0 - tau) * target


@dataclass
class SquashedGaussianPolicy:
    """State -> Normal(mean, std) in pre-squash space, then ``tanh`` into the action box.

    The trunk emits ``2 * act_dim`` values: the means followed by the raw log-stds.
    """

    trunk: MLPSpec
    params: np.ndarray
    action_scale: np.ndarray
    action_offset: np.ndarray
    log_std_bounds: tuple[float, float] = (-20.0, 2.0)

    def __post_init__(self):
        self.action_scale = np.asarray(self.action_scale, dtype=np.float64)
        self.action_offset = np.asarray(self.action_offset, dtype=np.float64)
        if self.trunk.out_dim != 2 * self.act_dim:
            raise ValueError("trunk output width must be twice the action dimension")
        if np.any(self.action_scale <= 0):
            raise ValueError("action_scale must be positive")

    @classmethod
    def create(cls, obs_dim: int, action_low, action_high, hidden: Sequence[int],
               rng: np.random.Generator, **kwargs) -> "SquashedGaussianPolicy":
        low = np.asarray(action_low, dtype=np.float64)
        high = np.asarray(action_high, dtype=np.float64)
        spec = MLPSpec((obs_dim, *hidden, 2 * low.size))
        return cls(spec, init_params(spec, rng), (high - low) / 2.0, (high + low) / 2.0, **kwargs)

    @property
    def act_dim(self) -> int:
        return self.action_scale.size

    @property
    def obs_dim(self) -> int:
        return self.trunk.in_dim

    def with_params(self, params: np.ndarray) -> "SquashedGaussianPolicy":
        return replace(self, params=params)


@dataclass
class PolicySample:
    action: np.ndarray        # (B, act_dim)
    log_prob: np.ndarray      # (B,)
    # kept for the reverse pass
    cache: ForwardCache = field(repr=False)
    noise: np.ndarray = field(repr=False)
    squashed: np.ndarray = field(repr=False)
    std: np.ndarray = field(repr=False)
    in_bounds: np.ndarray = field(repr=False)


def policy_forward(policy: SquashedGaussianPolicy, states, noise: np.ndarray | None) -> PolicySample:
    """Reparameterised action ``tanh(mean + std * noise) * scale + offset``.

    ``noise=None`` gives the mean action. ``log_prob`` includes the tanh and
    scale change-of-variables terms.
    """
    out, cache = forward_with_cache(policy.trunk, policy.params, states)
    k = policy.act_dim
    mean, raw_log_std = out[:, :k], out[:, k:]
    lo, hi = policy.log_std_bounds
    log_std = np.clip(raw_log_std, lo, hi)
    in_bounds = (raw_log_std >= lo) & (raw_log_std <= hi)
    std = np.exp(log_std)
    eps = np.zeros_like(mean) if noise is None else np.asarray(noise, dtype=np.float64).reshape(mean.shape)
    pre = mean + std * eps
    t = np.tanh(pre)
    # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))
    log_det = 2.0 * (LOG_2 - pre - np.logaddexp(0.0, -2.0 * pre))
    log_prob = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI - log_det - np.log(policy.action_scale), axis=1)
    action = t * policy.action_scale + policy.action_offset
    # tanh saturates to +-1 in float64 for |pre| > ~19; keep actions strictly inside the box
    action = np.clip(action, np.nextafter(policy.action_offset - policy.action_scale, np.inf),
                     np.nextafter(policy.action_offset + policy.action_scale, -np.inf))
    return PolicySample(action, log_prob, cache, eps, t, std, in_bounds)


def policy_backward(policy: SquashedGaussianPolicy, sample: PolicySample,
                    grad_action: np.ndarray | None, grad_log_prob: np.ndarray | None) -> np.ndarray:
    """Parameter gradient of a scalar whose partials w.r.t. the sampled actions and
    log-probs are ``grad_action`` (B, act_dim) and ``grad_log_prob`` (B,)."""
    t = sample.squashed
    g_pre = np.zeros_like(t)
    g_log_std = np.zeros_like(t)
    if grad_action is not None:
        g_pre += grad_action * policy.action_scale * (1.0 - t * t)
    if grad_log_prob is not None:
        glp = np.asarray(grad_log_prob, dtype=np.float64)[:, None]
        # d(-log_det)/du = 2 tanh(u); d(-log_std)/d log_std = -1
        g_pre += glp * 2.0 * t
        g_log_std -= glp
    g_log_std += g_pre * sample.std * sample.noise
    g_log_std *= sample.in_bounds
    grad_out = np.concatenate([g_pre, g_log_std], axis=1)
    grads, _ = backward(policy.trunk, policy.params, sample.cache, grad_out)
    return grads


def policy_act(policy: SquashedGaussianPolicy, state, mode: str = "sample",
               rng: np.random.Generator | None = None) -> tuple[np.ndarray, float]:
    """Single-state convenience wrapper: returns ``(action, log_prob)``."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (policy.obs_dim,):
        raise ValueError(f"state of shape {state.shape} does not match obs_dim {policy.obs_dim}")
    if mode == "mean":
        noise = None
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling needs a random generator")
        noise = rng.standard_normal((1, policy.act_dim))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    s = policy_forward(policy, state[None, :], noise)
    return s.action[0], float(s.log_prob[0])


def policy_log_prob(policy: SquashedGaussianPolicy, states, actions) -> np.ndarray:
    """Log-density of given in-box actions (inverse of the squashing map)."""
    out = mlp_forward(policy.trunk, policy.params, np.atleast_2d(states))
    k = policy.act_dim
    mean = out[:, :k]
    log_std = np.clip(out[:, k:], *policy.log_std_bounds)
    y = (np.atleast_2d(actions) - policy.action_offset) / policy.action_scale
    pre = np.arctanh(y)
    z = (pre - mean) / np.exp(log_std)
    log_det = 2.0 * (LOG_2 - pre - np.logaddexp(0.0, -2.0 * pre))
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI - log_det - np.log(policy.action_scale), axis=1)
