"""
Multilayer perceptron services
ReLU network with a linear output layer, analytic backpropagation,
MSE loss, Adam, and hard target-network copies.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from Hybridsim.exceptions import ShapeError, TrainingDivergedError

logger = logging.getLogger(__name__)

Q_NETWORK_DIMS = (6, 256, 256, 4)


@dataclass
class MlpParams:
    """
    Weights and biases of a fully connected network.

    weights[k] has shape (layer_dims[k], layer_dims[k + 1]) so that a
    batch of row vectors maps as h @ W + b.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError('weights and biases must be non-empty lists of equal length')
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f'layer {k}: weight {w.shape} and bias {b.shape} disagree')
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ShapeError(f'layer {k}: input {w.shape[0]} != previous output {self.weights[k - 1].shape[1]}')

    @property
    def layer_dims(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> List[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...]"""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> 'MlpParams':
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.parameters())


@dataclass
class MlpGradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def parameters(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


@dataclass
class AdamState:
    """First and second moment accumulators of Adam"""

    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: MlpParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> 'AdamState':
        return cls(
            m=[np.zeros_like(p) for p in params.parameters()],
            v=[np.zeros_like(p) for p in params.parameters()],
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


@dataclass
class ForwardCache:
    """Layer inputs and pre-activations recorded by forward_with_cache"""

    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)


def init_weights(dims: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases"""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ShapeError(f'invalid layer dims {dims}')
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _as_batch(net: MlpParams, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[np.newaxis, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != net.in_dim:
        raise ShapeError(f'input shape {x.shape} does not match input dimension {net.in_dim}')
    return batch, single


def forward_with_cache(net: MlpParams, x) -> Tuple[np.ndarray, ForwardCache]:
    batch, single = _as_batch(net, x)
    cache = ForwardCache()
    h = batch
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pre_activations.append(z)
        h = z if k == last else np.maximum(z, 0.0)
    return (h[0] if single else h), cache


def forward(net: MlpParams, x) -> np.ndarray:
    """Network output for one input vector or a batch of row vectors"""
    out, _ = forward_with_cache(net, x)
    return out


def backward(net: MlpParams, x, upstream_grad, cache: Optional[ForwardCache] = None) -> MlpGradients:
    """
    Gradients of sum(output * upstream_grad) with respect to every parameter.

    For a batch the per-sample gradients are summed. The ReLU subgradient
    at exactly zero is zero.
    """
    if cache is None:
        _, cache = forward_with_cache(net, x)
    g = np.asarray(upstream_grad, dtype=float)
    if g.ndim == 1:
        g = g[np.newaxis, :]
    expected = (cache.inputs[0].shape[0], net.out_dim)
    if g.shape != expected:
        raise ShapeError(f'upstream gradient shape {g.shape} does not match output {expected}')

    n_layers = len(net.weights)
    grad_w: List[Optional[np.ndarray]] = [None] * n_layers
    grad_b: List[Optional[np.ndarray]] = [None] * n_layers
    for k in reversed(range(n_layers)):
        if k != n_layers - 1:
            g = g * (cache.pre_activations[k] > 0.0)
        grad_w[k] = cache.inputs[k].T @ g
        grad_b[k] = g.sum(axis=0)
        if k:
            g = g @ net.weights[k].T
    return MlpGradients(grad_w, grad_b)


def mse_loss(pred, target, batch_size: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """
    Sum of squared errors divided by the mini-batch size M.

    Returns:
        (loss, gradient of the loss with respect to pred)
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(f'prediction {pred.shape} and target {target.shape} differ')
    m = batch_size if batch_size is not None else (pred.shape[0] if pred.ndim else 1)
    diff = pred - target
    return float(np.sum(diff ** 2) / m), 2.0 * diff / m


def clip_gradients(grads: MlpGradients, max_norm: float) -> float:
    """Scale gradients in place to a global L2 norm of at most max_norm; returns the norm before clipping"""
    norm = float(np.sqrt(sum(np.sum(g ** 2) for g in grads.parameters())))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for g in grads.parameters():
            g *= scale
    return norm


def adam_step(params: MlpParams, grads: MlpGradients, state: AdamState, lr: float) -> Tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied in place"""
    p_list, g_list = params.parameters(), grads.parameters()
    if len(p_list) != len(g_list) or len(state.m) != len(p_list):
        raise ShapeError('parameter, gradient and optimizer state lists differ in length')
    for p, g in zip(p_list, g_list):
        if p.shape != g.shape:
            raise ShapeError(f'gradient shape {g.shape} does not match parameter {p.shape}')
        if not np.isfinite(g).all():
            raise TrainingDivergedError('non-finite gradient in Adam step')

    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(p_list, g_list, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def sync_target(behavior: MlpParams, target: MlpParams) -> None:
    """Hard copy of the behavior parameters into the target network"""
    if behavior.layer_dims != target.layer_dims:
        raise ShapeError(f'cannot sync {behavior.layer_dims} into {target.layer_dims}')
    for src, dst in zip(behavior.parameters(), target.parameters()):
        np.copyto(dst, src)
