"""Dense ReLU networks with hand-written reverse mode, Adam and target tracking.

Batches are rows: ``forward(net, x)`` accepts a vector or an ``(n, fan_in)``
matrix. ``backward`` returns the gradient of ``sum(output * output_grad)``
with respect to every parameter and to the input, summed over the batch.

The output layer is split into *head segments*, each with its own
activation: ``identity``, ``tanh`` or ``softmax`` (normalised within the
segment). An actor uses ``(("tanh", 2), ("softmax", C))``; a critic
``(("identity", 1),)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch

HEAD_KINDS = ("identity", "tanh", "softmax")
FORMAT_VERSION = 1


class Mlp:
    def __init__(self, layer_sizes: Sequence[int], head=None, rng=None):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ShapeMismatch(f"bad layer sizes {layer_sizes}")
        head = tuple((str(k), int(w)) for k, w in (head or (("identity", layer_sizes[-1]),)))
        if sum(w for _, w in head) != layer_sizes[-1]:
            raise ShapeMismatch("head segments must cover the output layer exactly")
        for kind, _ in head:
            if kind not in HEAD_KINDS:
                raise ValueError(f"unknown head activation {kind!r}")
        self.layer_sizes = layer_sizes
        self.head = head
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-limit, limit, (fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def param_count(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.param_count,):
            raise ShapeMismatch(f"expected {self.param_count} parameters, got {theta.shape}")
        i = 0
        for p in self.params():
            p[...] = theta[i:i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> "Mlp":
        twin = Mlp(self.layer_sizes, self.head)
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def congruent(self, other: "Mlp") -> bool:
        return self.layer_sizes == other.layer_sizes and self.head == other.head

    def __call__(self, x):
        return forward(self, x)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.arrays()])

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.arrays())))

    def scale(self, factor: float) -> "Gradients":
        return Gradients([w * factor for w in self.weights], [b * factor for b in self.biases])

    def clip(self, max_norm: float) -> "Gradients":
        """Rescale so that the global L2 norm is at most ``max_norm``."""
        n = self.norm()
        return self.scale(max_norm / n) if n > max_norm else self


def _as_batch(net: Mlp, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != net.n_inputs:
        raise ShapeMismatch(f"network expects {net.n_inputs} inputs, got shape {x.shape}")
    return x2, single


def _apply_head(net: Mlp, z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    start = 0
    for kind, width in net.head:
        seg = slice(start, start + width)
        if kind == "identity":
            out[:, seg] = z[:, seg]
        elif kind == "tanh":
            out[:, seg] = np.tanh(z[:, seg])
        else:
            e = np.exp(z[:, seg] - z[:, seg].max(axis=1, keepdims=True))
            out[:, seg] = e / e.sum(axis=1, keepdims=True)
        start += width
    return out


def _head_backward(net: Mlp, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    dz = np.empty_like(g)
    start = 0
    for kind, width in net.head:
        seg = slice(start, start + width)
        if kind == "identity":
            dz[:, seg] = g[:, seg]
        elif kind == "tanh":
            dz[:, seg] = g[:, seg] * (1.0 - y[:, seg] ** 2)
        else:
            p = y[:, seg]
            dz[:, seg] = p * (g[:, seg] - np.sum(g[:, seg] * p, axis=1, keepdims=True))
        start += width
    return dz


def _forward_cache(net: Mlp, x2: np.ndarray):
    acts = [x2]
    pre = []
    a = x2
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < last else _apply_head(net, z)
        acts.append(a)
    return acts, pre


def forward(net: Mlp, x) -> np.ndarray:
    x2, single = _as_batch(net, x)
    y = _forward_cache(net, x2)[0][-1]
    return y[0] if single else y


def forward_with_cache(net: Mlp, x):
    """Batch forward pass that also returns the activations ``backward`` needs.

    The cache is only valid until the network's parameters change.
    """
    x2, _ = _as_batch(net, x)
    cache = _forward_cache(net, x2)
    return cache[0][-1], cache


def backward(net: Mlp, x, output_grad, cache=None) -> tuple[Gradients, np.ndarray]:
    """Gradients of ``<forward(net, x), output_grad>``, plus the input gradient."""
    x2, single = _as_batch(net, x)
    g = np.asarray(output_grad, dtype=np.float64)
    g2 = g[None, :] if g.ndim == 1 else g
    if g2.shape != (x2.shape[0], net.n_outputs):
        raise ShapeMismatch(f"output_grad shape {g.shape} does not match output")
    acts, pre = cache if cache is not None else _forward_cache(net, x2)
    n_layers = len(net.weights)
    dws: list[np.ndarray] = [None] * n_layers
    dbs: list[np.ndarray] = [None] * n_layers
    dz = _head_backward(net, acts[-1], g2)
    for i in range(n_layers - 1, -1, -1):
        dws[i] = acts[i].T @ dz
        dbs[i] = dz.sum(axis=0)
        da = dz @ net.weights[i].T
        if i > 0:
            dz = da * (pre[i - 1] > 0)
    return Gradients(dws, dbs), (da[0] if single else da)


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, lr: float, **kw) -> "Adam":
        params = net.params()
        return cls(lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)

    def copy(self) -> "Adam":
        return Adam(self.lr, self.beta1, self.beta2, self.eps, self.step,
                    [a.copy() for a in self.m], [a.copy() for a in self.v])


Optimizer = Adam


def apply_update(net: Mlp, grads: Gradients, opt: Adam) -> tuple[Mlp, Adam]:
    """One Adam descent step on ``net`` in place. Negate ``grads`` to ascend."""
    params = net.params()
    arrays = grads.arrays()
    if len(arrays) != len(params) or any(g.shape != p.shape for g, p in zip(arrays, params)):
        raise ShapeMismatch("gradients are not congruent with the network")
    if len(opt.m) != len(params) or any(m.shape != p.shape for m, p in zip(opt.m, params)):
        raise ShapeMismatch("optimizer state is not congruent with the network")
    if not all(np.isfinite(g).all() for g in arrays):
        raise NonFiniteGradient("gradient contains NaN or inf")
    opt.step += 1
    c1 = 1.0 - opt.beta1 ** opt.step
    c2 = 1.0 - opt.beta2 ** opt.step
    for p, g, m, v in zip(params, arrays, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return net, opt


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """``target <- tau * online + (1 - tau) * target``, in place."""
    if not target.congruent(online):
        raise ShapeMismatch("target and online networks differ in shape")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    for t, o in zip(target.params(), online.params()):
        if tau == 1.0:
            t[...] = o
        else:
            t *= 1.0 - tau
            t += tau * o
    return target


# ---------------------------------------------------------------------------
# checkpoint files: one JSON header line, then raw little-endian float64 data


def _write_arrays(path: Path, meta: dict, arrays: Sequence[np.ndarray]) -> None:
    meta = dict(meta, version=FORMAT_VERSION, shapes=[list(a.shape) for a in arrays])
    with open(path, "wb") as fh:
        fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_arrays(path: Path) -> tuple[dict, list[np.ndarray]]:
    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    meta = json.loads(head)
    if meta.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    arrays, offset = [], 0
    for shape in meta["shapes"]:
        count = int(np.prod(shape))
        a = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays.append(a.astype(np.float64))
        offset += 8 * count
    if offset != len(body):
        raise ValueError(f"{path}: trailing or missing data")
    return meta, arrays


def save_mlp(path, net: Mlp) -> None:
    _write_arrays(Path(path), {"kind": "mlp", "layer_sizes": net.layer_sizes,
                               "head": [list(h) for h in net.head]}, net.params())


def load_mlp(path) -> Mlp:
    meta, arrays = _read_arrays(Path(path))
    if meta.get("kind") != "mlp":
        raise ValueError(f"{path} is not a network checkpoint")
    net = Mlp(meta["layer_sizes"], [tuple(h) for h in meta["head"]])
    net.weights = arrays[0::2]
    net.biases = arrays[1::2]
    return net


def save_adam(path, opt: Adam) -> None:
    meta = {"kind": "adam", "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
            "eps": opt.eps, "step": opt.step, "n": len(opt.m)}
    _write_arrays(Path(path), meta, list(opt.m) + list(opt.v))


def load_adam(path) -> Adam:
    meta, arrays = _read_arrays(Path(path))
    if meta.get("kind") != "adam":
        raise ValueError(f"{path} is not an optimizer checkpoint")
    n = meta["n"]
    return Adam(meta["lr"], meta["beta1"], meta["beta2"], meta["eps"], meta["step"],
                arrays[:n], arrays[n:])
