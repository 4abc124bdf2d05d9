"""A small differentiable core: MLPs over flat parameter vectors, Adam, and
a finite-difference gradient checker.

Every network is described by an ArchSpec and a single float64 parameter
vector laid out layer by layer as (weight matrix row-major, then bias). All
arithmetic runs in 64-bit with numpy's fixed reduction order, so equal seeds
give bit-identical results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, NumericalError

ACTIVATIONS = ("tanh", "relu")
HEADS = ("softmax", "linear", "sigmoid")
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ArchSpec:
    """Layer widths (input first, output last), hidden activation, head."""

    widths: tuple[int, ...]
    activation: str = "tanh"
    head: str = "softmax"

    def __post_init__(self) -> None:
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2:
            raise ConfigError("an architecture needs at least input and output widths")
        if any(w < 1 for w in widths):
            raise ConfigError("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}")
        if self.head == "softmax" and widths[-1] < 2:
            raise ConfigError("a softmax head needs an output width of at least 2")

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]


def num_params(arch: ArchSpec) -> int:
    """Total parameter count: sum over layers of (fan_in + 1) * fan_out."""
    return sum(
        (fi + 1) * fo for fi, fo in zip(arch.widths[:-1], arch.widths[1:])
    )


def _layer_slices(arch: ArchSpec):
    offset = 0
    for fi, fo in zip(arch.widths[:-1], arch.widths[1:]):
        w_sl = slice(offset, offset + fi * fo)
        b_sl = slice(offset + fi * fo, offset + fi * fo + fo)
        offset += (fi + 1) * fo
        yield w_sl, b_sl, (fi, fo)


def unflatten(arch: ArchSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into (weight, bias) pairs per layer."""
    params = _check_params(arch, params)
    return [
        (params[w_sl].reshape(shape), params[b_sl]) for w_sl, b_sl, shape in _layer_slices(arch)
    ]


def flatten_layers(arch: ArchSpec, layers) -> np.ndarray:
    """Inverse of unflatten: pack (weight, bias) pairs into a flat vector."""
    parts = []
    for (w, b), (_, _, shape) in zip(layers, _layer_slices(arch)):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.shape != shape or b.shape != (shape[1],):
            raise ConfigError("layer shapes do not match the architecture")
        parts.append(w.reshape(-1))
        parts.append(b)
    out = np.concatenate(parts)
    if out.size != num_params(arch):
        raise ConfigError("wrong number of layers for the architecture")
    return out


def init_params(arch: ArchSpec, seed) -> np.ndarray:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fi, fo in zip(arch.widths[:-1], arch.widths[1:]):
        limit = np.sqrt(6.0 / (fi + fo))
        layers.append((rng.uniform(-limit, limit, size=(fi, fo)), np.zeros(fo)))
    return flatten_layers(arch, layers)


def _check_params(arch: ArchSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != num_params(arch):
        raise ConfigError(
            f"parameter vector has {params.size} entries, arch needs {num_params(arch)}"
        )
    return params


def _check_batch(arch: ArchSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != arch.in_width:
        raise ConfigError(
            f"batch must be (B, {arch.in_width}), got {batch.shape}"
        )
    return batch


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_and_cache(arch: ArchSpec, params: np.ndarray, batch: np.ndarray):
    """Forward pass returning (output, activations list for the backward pass)."""
    params = _check_params(arch, params)
    x = _check_batch(arch, batch)
    acts = [x]
    layers = unflatten(arch, params)
    for i, (w, b) in enumerate(layers):
        z = acts[-1] @ w + b
        if i < len(layers) - 1:
            z = np.tanh(z) if arch.activation == "tanh" else np.maximum(z, 0.0)
        acts.append(z)
    out = acts[-1]
    if arch.head == "softmax":
        out = _softmax(out)
    elif arch.head == "sigmoid":
        out = _sigmoid(out)
    acts[-1] = out
    return out, acts


def forward(arch: ArchSpec, params: np.ndarray, batch: np.ndarray) -> np.ndarray:
    """Map a (B, in) batch to the (B, out) head output.

    Softmax rows are computed with max subtraction and sum to 1 within
    rounding; a sigmoid head squashes every output into (0, 1).
    """
    out, _ = forward_and_cache(arch, params, batch)
    return out


def backward_from_cache(arch, params, acts, upstream):
    """Reverse-mode pass reusing activations from forward_and_cache."""
    params = _check_params(arch, params)
    upstream = np.asarray(upstream, dtype=np.float64)
    out = acts[-1]
    if upstream.shape != out.shape:
        raise ConfigError(f"upstream must be {out.shape}, got {upstream.shape}")
    if arch.head == "softmax":
        g = out * (upstream - np.sum(upstream * out, axis=1, keepdims=True))
    elif arch.head == "sigmoid":
        g = upstream * out * (1.0 - out)
    else:
        g = upstream
    layers = unflatten(arch, params)
    param_grad = np.zeros(num_params(arch))
    slices = list(_layer_slices(arch))
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_prev = acts[i]
        w_sl, b_sl, _ = slices[i]
        param_grad[w_sl] = (a_prev.T @ g).reshape(-1)
        param_grad[b_sl] = g.sum(axis=0)
        g = g @ w.T
        if i > 0:
            a = acts[i]
            if arch.activation == "tanh":
                g = g * (1.0 - a * a)
            else:
                g = g * (a > 0.0)
    return param_grad, g


def backward(arch: ArchSpec, params, batch, upstream):
    """Exact reverse-mode gradients of ``forward``.

    Given d(loss)/d(output) in ``upstream``, returns
    (d(loss)/d(params), d(loss)/d(batch)).
    """
    out, acts = forward_and_cache(arch, params, batch)
    return backward_from_cache(arch, params, acts, upstream)


@dataclass(frozen=True)
class Net:
    """An architecture bound to a read-only parameter vector."""

    arch: ArchSpec
    params: np.ndarray

    def __post_init__(self) -> None:
        params = np.array(_check_params(self.arch, self.params), copy=True)
        if not np.all(np.isfinite(params)):
            raise NumericalError("network parameters must be finite")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        return forward(self.arch, self.params, batch)

    def with_params(self, params: np.ndarray) -> "Net":
        return Net(self.arch, params)


@dataclass
class AdamState:
    """Adam moment estimates; ``step`` never mutates, it returns new values."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n: int, lr: float = 1e-3) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), lr=float(lr))


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray):
    """One Adam update; returns (new_params, new_state)."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ConfigError("params, grad, and state must share one shape")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient in adam_step")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(
        m=m, v=v, t=t, lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps
    )
    return new_params, new_state


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of a finite-difference check of an analytic gradient."""

    passed: bool
    max_rel_error: float
    worst_index: int
    analytic_scale: float
    fd_scale: float


def grad_check_fd(loss_fn, params: np.ndarray, tolerance: float = 1e-4,
                  step: float = 1e-5) -> GradCheckReport:
    """Compare loss_fn's analytic gradient against central differences.

    ``loss_fn(params)`` must return (value, gradient). The error metric is
    max|analytic - fd| / max(|analytic|_inf, |fd|_inf, 1e-12), so a constant
    loss with zero gradient passes exactly.
    """
    params = np.asarray(params, dtype=np.float64)
    _, analytic = loss_fn(params)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != params.shape:
        raise ConfigError("analytic gradient shape must match params")
    fd = np.zeros_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + step
        hi, _ = loss_fn(bumped)
        bumped[i] = params[i] - step
        lo, _ = loss_fn(bumped)
        fd[i] = (hi - lo) / (2.0 * step)
    diff = np.abs(analytic - fd)
    scale = max(np.max(np.abs(analytic), initial=0.0),
                np.max(np.abs(fd), initial=0.0), 1e-12)
    rel = diff / scale
    worst = int(np.argmax(rel)) if rel.size else 0
    max_rel = float(rel[worst]) if rel.size else 0.0
    return GradCheckReport(
        passed=bool(max_rel < tolerance),
        max_rel_error=max_rel,
        worst_index=worst,
        analytic_scale=float(np.max(np.abs(analytic), initial=0.0)),
        fd_scale=float(np.max(np.abs(fd), initial=0.0)),
    )


def derive_seeds(seed: int, n: int) -> list[int]:
    """Deterministically derive n independent child seeds from one seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


_MODEL_FORMAT = "fha-model"
_MODEL_VERSION = 1


def save_model(path, nets: dict[str, Net], seed: int, metadata: dict | None = None) -> None:
    """Write named networks to a JSON text file.

    Parameters are serialized with Python's shortest round-trip decimal repr
    (at most 17 significant digits), so loading reconstructs the exact
    64-bit values.
    """
    doc = {
        "format": _MODEL_FORMAT,
        "version": _MODEL_VERSION,
        "seed": int(seed),
        "metadata": metadata or {},
        "nets": {
            name: {
                "widths": list(net.arch.widths),
                "activation": net.arch.activation,
                "head": net.arch.head,
                "params": [float(p) for p in net.params],
            }
            for name, net in nets.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> tuple[dict[str, Net], int, dict]:
    """Read a model file written by save_model; returns (nets, seed, metadata)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != _MODEL_FORMAT:
        raise FormatError("not a model file (missing format marker)")
    if doc.get("version") != _MODEL_VERSION:
        raise FormatError(f"unsupported model file version {doc.get('version')!r}")
    try:
        nets = {
            name: Net(
                ArchSpec(tuple(entry["widths"]), entry["activation"], entry["head"]),
                np.asarray(entry["params"], dtype=np.float64),
            )
            for name, entry in doc["nets"].items()
        }
        return nets, int(doc["seed"]), dict(doc.get("metadata", {}))
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise FormatError(f"model file contents invalid: {exc}") from exc
