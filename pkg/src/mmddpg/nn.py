"""Small dense-network engine: MLP forward/backward, Adam, soft target updates.

Weights are stored ``(out, in)`` so a layer computes ``x @ W.T + b`` on a
batch of row vectors. Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CacheError, ConfigError, InputError, ShapeError

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "scaled_tanh")


class Mlp:
    """Fully connected network with one hidden activation and one output head.

    ``output_activation="scaled_tanh"`` squashes outputs into
    ``[-bound, bound]``.
    """

    def __init__(self, layer_sizes, weights, biases, hidden_activation="tanh",
                 output_activation="linear", bound=1.0):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ShapeError(f"bad layer sizes {layer_sizes}")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigError([("hidden_activation", f"unknown {hidden_activation!r}")])
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError([("output_activation", f"unknown {output_activation!r}")])
        if output_activation == "scaled_tanh" and not bound > 0:
            raise ConfigError([("bound", "scaled tanh bound must be > 0")])
        if len(weights) != len(layer_sizes) - 1 or len(biases) != len(weights):
            raise ShapeError("need one weight matrix and bias per layer")
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.shape != (layer_sizes[i + 1], layer_sizes[i]):
                raise ShapeError(f"weight {i} has shape {W.shape}, expected "
                                 f"{(layer_sizes[i + 1], layer_sizes[i])}")
            if b.shape != (layer_sizes[i + 1],):
                raise ShapeError(f"bias {i} has shape {b.shape}")
        self.layer_sizes = layer_sizes
        # all parameters live in one flat buffer; weights/biases are views into it
        total = sum(W.size + b.size for W, b in zip(weights, biases))
        self.flat = np.empty(total)
        self.weights, self.biases = [], []
        off = 0
        for W, b in zip(weights, biases):
            vw = self.flat[off:off + W.size].reshape(W.shape)
            vw[...] = W
            off += W.size
            vb = self.flat[off:off + b.size]
            vb[...] = b
            off += b.size
            self.weights.append(vw)
            self.biases.append(vb)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.bound = float(bound)
        # bumped by every in-place mutation so stale caches can be detected
        self.version = 0

    @classmethod
    def init(cls, layer_sizes, rng, hidden_activation="tanh", output_activation="linear",
             bound=1.0, final_scale=1.0):
        """Uniform(+-1/sqrt(fan_in)) init; the last layer is multiplied by ``final_scale``."""
        weights, biases = [], []
        n_layers = len(layer_sizes) - 1
        for i in range(n_layers):
            fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
            lim = 1.0 / np.sqrt(fan_in)
            W = rng.uniform(-lim, lim, size=(fan_out, fan_in))
            b = rng.uniform(-lim, lim, size=fan_out)
            if i == n_layers - 1:
                W *= final_scale
                b *= final_scale
            weights.append(W)
            biases.append(b)
        return cls(layer_sizes, weights, biases, hidden_activation, output_activation, bound)

    @property
    def in_dim(self):
        return self.layer_sizes[0]

    @property
    def out_dim(self):
        return self.layer_sizes[-1]

    def parameters(self):
        """Live references ``[W0, b0, W1, b1, ...]``."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def copy(self):
        return Mlp(self.layer_sizes, self.weights, self.biases, self.hidden_activation,
                   self.output_activation, self.bound)

    def views(self, flat):
        """Split a flat vector shaped like :attr:`flat` into per-layer views."""
        out, off = [], 0
        for W, b in zip(self.weights, self.biases):
            out.append(flat[off:off + W.size].reshape(W.shape))
            off += W.size
            out.append(flat[off:off + b.size])
            off += b.size
        return out

    def touch(self):
        self.version += 1

    def __call__(self, x):
        return mlp_forward(self, x)[0]


@dataclass
class ForwardCache:
    net_id: int
    version: int
    inputs: list      # input to each layer
    pre: list         # pre-activation of each layer
    post: list        # activation output of each layer (tanh value for scaled head)
    out_shape: tuple


def _as_batch(x, in_dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != in_dim:
        raise ShapeError(f"input shape {x.shape} incompatible with in_dim={in_dim}")
    if not np.isfinite(x).all():
        raise InputError("non-finite network input")
    return x


def mlp_forward(net, inputs):
    """Return ``(outputs, cache)`` for a batch of row inputs."""
    h = _as_batch(inputs, net.in_dim)
    n_layers = len(net.weights)
    ins, pre, post = [], [], []
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        ins.append(h)
        z = h @ W.T + b
        pre.append(z)
        if i < n_layers - 1:
            h = np.maximum(z, 0.0) if net.hidden_activation == "relu" else np.tanh(z)
            post.append(h)
        elif net.output_activation == "scaled_tanh":
            t = np.tanh(z)
            post.append(t)
            h = net.bound * t
        else:
            post.append(z)
            h = z
    cache = ForwardCache(id(net), net.version, ins, pre, post, h.shape)
    return h, cache


class GradList(list):
    """Per-layer gradients that are views into one flat vector ``.flat``."""

    flat = None


def mlp_backward(net, cache, upstream, param_grads=True):
    """Gradients of ``sum(upstream * outputs)``.

    Returns ``(param_grads, input_grads)`` with ``param_grads`` ordered like
    :meth:`Mlp.parameters`. ``param_grads=False`` skips the weight gradients
    (the list is then ``None``) when only the input gradient is wanted.
    """
    if cache.net_id != id(net) or cache.version != net.version:
        raise CacheError("forward cache is stale or belongs to another network")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.out_shape:
        raise ShapeError(f"upstream gradient shape {g.shape} != output shape {cache.out_shape}")
    n_layers = len(net.weights)
    grads = None
    if param_grads:
        flat = np.empty_like(net.flat)
        grads = GradList(net.views(flat))
        grads.flat = flat
    for i in range(n_layers - 1, -1, -1):
        if i == n_layers - 1:
            if net.output_activation == "scaled_tanh":
                t = cache.post[i]
                dz = g * (net.bound * (1.0 - t * t))
            else:
                dz = g
        elif net.hidden_activation == "relu":
            dz = g * (cache.pre[i] > 0.0)
        else:
            t = cache.post[i]
            dz = g * (1.0 - t * t)
        if param_grads:
            np.matmul(dz.T, cache.inputs[i], out=grads[2 * i])
            np.sum(dz, axis=0, out=grads[2 * i + 1])
        if i > 0:
            g = dz @ net.weights[i]
        else:
            g = dz @ net.weights[0]
    return grads, g


@dataclass
class AdamState:
    first_moments: list
    second_moments: list
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_adam: float = 1e-8
    step_count: int = 0
    # flat storage backing the moment lists when built for an Mlp
    m_flat: np.ndarray = None
    v_flat: np.ndarray = None

    @classmethod
    def for_params(cls, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon_adam=1e-8):
        if isinstance(params, Mlp):
            m, v = np.zeros_like(params.flat), np.zeros_like(params.flat)
            return cls(params.views(m), params.views(v), float(learning_rate), float(beta1),
                       float(beta2), float(epsilon_adam), 0, m, v)
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   float(learning_rate), float(beta1), float(beta2), float(epsilon_adam))


def adam_step(params, grads, state):
    """Bias-corrected Adam descent step applied in place.

    ``params`` is an :class:`Mlp` or a list of arrays. For gradient ascent
    pass negated gradients.
    """
    net = params if isinstance(params, Mlp) else None
    arrays = net.parameters() if net is not None else params
    if len(arrays) != len(grads) or len(arrays) != len(state.first_moments):
        raise ShapeError("parameter, gradient and moment lists differ in length")
    for p, g, m in zip(arrays, grads, state.first_moments):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ShapeError(f"shape mismatch in adam_step: {p.shape} vs {np.shape(g)}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    gflat = getattr(grads, "flat", None)
    if net is not None and gflat is not None and state.m_flat is not None:
        kernels.adam_update(net.flat, gflat, state.m_flat, state.v_flat,
                            state.learning_rate, b1, b2, state.epsilon_adam, c1, c2)
    else:
        for p, g, m, v in zip(arrays, grads, state.first_moments, state.second_moments):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon_adam)
    if net is not None:
        net.touch()
    return params, state


def negate(grads):
    """Negated gradients, keeping the flat backing when present."""
    flat = getattr(grads, "flat", None)
    if flat is None:
        return [-g for g in grads]
    nflat = -flat
    out, off = GradList(), 0
    for g in grads:
        out.append(nflat[off:off + g.size].reshape(g.shape))
        off += g.size
    out.flat = nflat
    return out


def soft_update(target, online, tau):
    """``target <- tau * online + (1 - tau) * target`` entrywise, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigError([("tau", f"must lie in [0, 1], got {tau}")])
    if isinstance(target, Mlp) and isinstance(online, Mlp):
        if target.layer_sizes != online.layer_sizes:
            raise ShapeError("soft_update between networks of different shapes")
        pairs = [(target.flat, online.flat)]
    else:
        t_arrays = target.parameters() if isinstance(target, Mlp) else target
        o_arrays = online.parameters() if isinstance(online, Mlp) else online
        if len(t_arrays) != len(o_arrays):
            raise ShapeError("target and online parameter lists differ in length")
        for t, o in zip(t_arrays, o_arrays):
            if t.shape != o.shape:
                raise ShapeError(f"soft_update shape mismatch {t.shape} vs {o.shape}")
        pairs = list(zip(t_arrays, o_arrays))
    for t, o in pairs:
        if tau == 1.0:
            t[...] = o
        elif tau != 0.0:
            kernels.lerp_inplace(t.reshape(-1), o.reshape(-1), tau)
    if isinstance(target, Mlp):
        target.touch()
    return target


def flat_checksum(params):
    """Order-sensitive digest of parameter values, used to prove read-only access."""
    import hashlib

    arrays = params.parameters() if isinstance(params, Mlp) else params
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


@dataclass
class GradCheckReport:
    block_errors: list = field(default_factory=list)
    max_error: float = 0.0
    max_abs_analytic: float = 0.0
    max_abs_numeric: float = 0.0
    tolerance: float = 1e-5

    @property
    def passed(self):
        return self.max_error < self.tolerance


def gradient_check(params, loss_functional, tolerance=1e-5, step=1e-5, floor=1e-7):
    """Compare analytic gradients against central finite differences.

    ``loss_functional()`` must return ``(loss, grads)`` evaluated at the
    current contents of ``params`` (a list of arrays, perturbed in place and
    restored). Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    arrays = params.parameters() if isinstance(params, Mlp) else params
    _, analytic = loss_functional()
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in analytic]
    report = GradCheckReport(tolerance=tolerance)
    for p, ga in zip(arrays, analytic):
        gn = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = gn.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            if isinstance(params, Mlp):
                params.touch()
            lp = loss_functional()[0]
            flat[j] = orig - step
            if isinstance(params, Mlp):
                params.touch()
            lm = loss_functional()[0]
            flat[j] = orig
            gflat[j] = (lp - lm) / (2.0 * step)
        if isinstance(params, Mlp):
            params.touch()
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), floor)
        err = float(np.max(np.abs(ga - gn) / denom)) if p.size else 0.0
        report.block_errors.append(err)
        report.max_abs_analytic = max(report.max_abs_analytic, float(np.max(np.abs(ga), initial=0.0)))
        report.max_abs_numeric = max(report.max_abs_numeric, float(np.max(np.abs(gn), initial=0.0)))
    report.max_error = max(report.block_errors, default=0.0)
    return report
