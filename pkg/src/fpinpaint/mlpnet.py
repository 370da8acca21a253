"""Small fully-connected networks: forward pass, reverse-mode gradients, Adam.

Everything is plain numpy on float64 so that a fixed seed reproduces training
bit for bit. Inputs may be a single vector or a (batch, width) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")
LOG_EPS = 1e-7


class NonFiniteError(FloatingPointError):
    """A forward/backward pass or loss produced NaN or inf."""


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return expit(z)
    return z


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return z > 0
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths including the input width, and one activation per layer."""

    widths: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.widths) < 2:
            raise ValueError("an MLP needs an input width and at least one layer")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be >= 1, got {self.widths}")
        if len(self.activations) != len(self.widths) - 1:
            raise ValueError("need exactly one activation per layer")
        bad = set(self.activations) - set(ACTIVATIONS)
        if bad:
            raise ValueError(f"unknown activations {sorted(bad)}")

    @classmethod
    def build(cls, n_in: int, hidden: Sequence[int], n_out: int, out_act: str, hidden_act: str = "relu"):
        widths = (n_in, *hidden, n_out)
        return cls(widths, (hidden_act,) * len(hidden) + (out_act,))

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Flat [W0, b0, W1, b1, ...] view (the arrays themselves, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def check(self, spec: MlpSpec) -> None:
        if len(self.weights) != len(spec.widths) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match spec")
        for i, (a, b) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            if self.weights[i].shape != (a, b) or self.biases[i].shape != (b,):
                raise ValueError(
                    f"layer {i}: expected W{(a, b)} b{(b,)}, got "
                    f"W{self.weights[i].shape} b{self.biases[i].shape}"
                )

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_lists(self) -> dict:
        return {"weights": [w.tolist() for w in self.weights], "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_lists(cls, d: dict) -> "MlpParams":
        return cls(
            [np.array(w, dtype=float).reshape(len(w), -1) for w in d["weights"]],
            [np.array(b, dtype=float) for b in d["biases"]],
        )


def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    ws, bs = [], []
    for a, b in zip(spec.widths[:-1], spec.widths[1:]):
        lim = np.sqrt(6.0 / (a + b))
        ws.append(rng.uniform(-lim, lim, size=(a, b)))
        bs.append(np.zeros(b))
    return MlpParams(ws, bs)


def forward(params: MlpParams, spec: MlpSpec, x: np.ndarray):
    """Forward pass keeping the per-layer cache needed by :func:`backward`.

    Returns ``(output, cache)``; output has the same leading shape as ``x``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != spec.n_in:
        raise ValueError(f"input width {a.shape[1]} != network input width {spec.n_in}")
    cache = [(a, None)]
    for i, (w, b, act) in enumerate(zip(params.weights, params.biases, spec.activations)):
        z = a @ w
        z += b
        if not np.isfinite(z).all():
            raise NonFiniteError(f"non-finite pre-activation in layer {i}")
        a = _activate(act, z)
        cache.append((a, z))
    return (a[0] if single else a), (cache, single)


def backward(params: MlpParams, spec: MlpSpec, cache, grad_out: np.ndarray):
    """Reverse pass. Returns ``(param_grads, grad_input)``.

    ``grad_out`` is dL/d(output) with the output's shape. Gradients are sums
    over the batch rows; scale the loss, not the gradients, to get means.
    """
    layers, single = cache
    g = np.asarray(grad_out, dtype=float)
    if single:
        g = g[None, :]
    n = len(params.weights)
    gw: list = [None] * n
    gb: list = [None] * n
    for i in range(n - 1, -1, -1):
        a, z = layers[i + 1]
        g = g * _activation_grad(spec.activations[i], z, a)
        a_prev = layers[i][0]
        gw[i] = a_prev.T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    if not np.isfinite(g).all():
        bad = next((i for i in range(n) if not np.isfinite(gw[i]).all()), 0)
        raise NonFiniteError(f"non-finite gradient in layer {bad}")
    return MlpParams(gw, gb), (g[0] if single else g)


def mlp_forward(params: MlpParams, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    return forward(params, spec, x)[0]


def mlp_gradients(
    params: MlpParams,
    spec: MlpSpec,
    x: np.ndarray,
    loss: Callable[[np.ndarray], tuple[float, np.ndarray]],
) -> tuple[float, MlpParams]:
    """Value and parameter gradients of a scalar loss of the network output.

    ``loss(out)`` returns ``(value, d value / d out)``.
    """
    out, cache = forward(params, spec, x)
    value, g = loss(out)
    if not np.isfinite(value):
        raise NonFiniteError("non-finite loss value")
    grads, _ = backward(params, spec, cache, g)
    return float(value), grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kw)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        buf = np.multiply(g, 1.0 - b1)
        m *= b1
        m += buf
        np.multiply(g, g, out=buf)
        buf *= 1.0 - b2
        v *= b2
        v += buf
        # p -= lr * (m / bc1) / (sqrt(v / bc2) + eps)
        np.sqrt(v, out=buf)
        buf *= 1.0 / np.sqrt(bc2)
        buf += state.eps
        np.divide(m, buf, out=buf)
        buf *= state.lr / bc1
        p -= buf


def bind_flat(networks: Sequence["Network"]) -> np.ndarray:
    """Move the parameters of ``networks`` into one contiguous vector.

    Each network's weight and bias arrays become views into the returned
    vector, so a single Adam update on it trains all of them.
    """
    arrays = [a for net in networks for a in net.params.arrays()]
    flat = np.concatenate([a.ravel() for a in arrays])
    offset = 0
    for net in networks:
        p = net.params
        for i in range(len(p.weights)):
            for lst in (p.weights, p.biases):
                size = lst[i].size
                lst[i] = flat[offset : offset + size].reshape(lst[i].shape)
                offset += size
    return flat


def flat_grads(grads: Sequence[MlpParams]) -> np.ndarray:
    """Concatenate gradients in the order used by :func:`bind_flat`."""
    return np.concatenate([a.ravel() for g in grads for a in g.arrays()])


def kl_gauss(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over coordinates."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar must have the same shape")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))):
        raise NonFiniteError("kl_gauss got non-finite input")
    val = 0.5 * np.sum(mu * mu + np.expm1(logvar) - logvar)
    return max(float(val), 0.0)


def kl_gauss_grad(mu: np.ndarray, logvar: np.ndarray):
    """Gradients of :func:`kl_gauss` w.r.t. mu and logvar."""
    return mu, 0.5 * np.expm1(logvar)


def reparameterize(mu, logvar, rng: np.random.Generator | None = None, eps=None):
    """z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) unless supplied."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar must have the same shape")
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    return mu + np.exp(0.5 * logvar) * eps


def log_clamped(x, eps: float = LOG_EPS):
    return np.log(np.clip(x, eps, 1.0 - eps))


def log_clamped_grad(x, eps: float = LOG_EPS):
    """d/dx of :func:`log_clamped`; zero where the clamp is active."""
    x = np.asarray(x, dtype=float)
    inside = (x > eps) & (x < 1.0 - eps)
    return np.where(inside, 1.0 / np.clip(x, eps, 1.0), 0.0)


@dataclass
class Network:
    """An MLP spec bundled with its parameters."""

    spec: MlpSpec
    params: MlpParams = field(repr=False)

    @classmethod
    def create(cls, spec: MlpSpec, rng: np.random.Generator) -> "Network":
        return cls(spec, init_params(spec, rng))

    def __call__(self, x):
        return mlp_forward(self.params, self.spec, x)

    def forward(self, x):
        return forward(self.params, self.spec, x)

    def backward(self, cache, grad_out):
        return backward(self.params, self.spec, cache, grad_out)

    def to_dict(self) -> dict:
        return {"widths": list(self.spec.widths), "activations": list(self.spec.activations), **self.params.to_lists()}

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        spec = MlpSpec(tuple(d["widths"]), tuple(d["activations"]))
        params = MlpParams.from_lists(d)
        params.check(spec)
        return cls(spec, params)
