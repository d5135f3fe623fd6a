"""Per-view fully connected autoencoders with hand-written backprop and Adam.

Each view ``v`` owns an encoder ``f_v`` and a decoder ``g_v``. Hidden layers
use ReLU; the last encoder layer (the latent) and the last decoder layer are
linear. Decoder widths mirror the encoder widths in reverse.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, TrainingDivergence

CHECKPOINT_FORMAT = "rcpmod-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)


@dataclass
class ViewNet:
    encoder: list[Layer]
    decoder: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.encoder[0].weight.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.encoder[-1].weight.shape[1]


@dataclass
class AutoencoderStack:
    views: list[ViewNet]

    @property
    def n_views(self) -> int:
        return len(self.views)

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (view, encoder then decoder, W then b)."""
        out = []
        for net in self.views:
            for layer in net.encoder + net.decoder:
                out.extend((layer.weight, layer.bias))
        return out

    def view_slice(self, v: int) -> slice:
        start = sum(2 * (len(n.encoder) + len(n.decoder)) for n in self.views[:v])
        net = self.views[v]
        return slice(start, start + 2 * (len(net.encoder) + len(net.decoder)))

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "AutoencoderStack":
        return AutoencoderStack([
            ViewNet([Layer(l.weight.copy(), l.bias.copy()) for l in n.encoder],
                    [Layer(l.weight.copy(), l.bias.copy()) for l in n.decoder])
            for n in self.views
        ])

    def widths(self) -> list[list[int]]:
        return [[n.input_dim] + [l.weight.shape[1] for l in n.encoder] for n in self.views]


def init_params(input_dims: list[int], widths: list[list[int]], rng: np.random.Generator) -> AutoencoderStack:
    """Xavier-uniform weights, zero biases.

    ``widths[v]`` lists the encoder layer widths for view ``v`` (latent last);
    the decoder reverses them back to ``input_dims[v]``.
    """
    if len(input_dims) != len(widths):
        raise ContractError("one width list per view is required")

    def dense(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return Layer(rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out))

    nets = []
    for d, w in zip(input_dims, widths):
        if d < 1 or not w or min(w) < 1:
            raise ContractError(f"invalid widths {w} for input dimension {d}")
        enc_sizes = [d, *w]
        dec_sizes = enc_sizes[::-1]
        enc = [dense(a, b) for a, b in zip(enc_sizes[:-1], enc_sizes[1:])]
        dec = [dense(a, b) for a, b in zip(dec_sizes[:-1], dec_sizes[1:])]
        nets.append(ViewNet(enc, dec))
    return AutoencoderStack(nets)


def mlp_forward(layers: list[Layer], x: np.ndarray):
    """Run ``x`` through ``layers``; returns the output and a cache for backprop."""
    if x.shape[1] != layers[0].weight.shape[0]:
        raise ContractError(f"input width {x.shape[1]} != layer fan_in {layers[0].weight.shape[0]}")
    inputs = []
    h = x
    last = len(layers) - 1
    for k, layer in enumerate(layers):
        inputs.append(h)
        h = h @ layer.weight + layer.bias
        if k < last:
            h = np.maximum(h, 0.0)
    return h, inputs


def mlp_backward(layers: list[Layer], inputs: list[np.ndarray], grad_out: np.ndarray):
    """Backprop through a cached forward pass.

    Returns ``(grad_input, grads)`` with ``grads`` a flat ``[dW0, db0, dW1, ...]``.
    """
    grads: list[np.ndarray] = [None] * (2 * len(layers))
    g = grad_out
    for k in range(len(layers) - 1, -1, -1):
        layer = layers[k]
        if k < len(layers) - 1:
            # inputs[k + 1] is the ReLU output of layer k
            g = g * (inputs[k + 1] > 0)
        grads[2 * k] = inputs[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ layer.weight.T
    return g, grads


def encode(view: np.ndarray, stack: AutoencoderStack, v: int) -> np.ndarray:
    return mlp_forward(stack.views[v].encoder, np.asarray(view, dtype=np.float64))[0]


def decode(latent: np.ndarray, stack: AutoencoderStack, v: int) -> np.ndarray:
    return mlp_forward(stack.views[v].decoder, np.asarray(latent, dtype=np.float64))[0]


def zero_grads(stack: AutoencoderStack) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in stack.parameters()]


def check_finite(grads: list[np.ndarray], term: str = "total") -> None:
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(term, "gradient")


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_stack(cls, stack: AutoencoderStack, lr: float = 1e-3) -> "AdamState":
        return cls(lr=lr, m=zero_grads(stack), v=zero_grads(stack))


def adam_step(stack: AutoencoderStack, grads: list[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied in place."""
    params = stack.parameters()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ContractError("gradient set is not shape-congruent with the parameters")
    if not state.m:
        state.m = zero_grads(stack)
        state.v = zero_grads(stack)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return stack, state


def params_hash(stack: AutoencoderStack) -> str:
    h = hashlib.sha256()
    for p in stack.parameters():
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(path, stack: AutoencoderStack, state: AdamState | None = None,
                    config_hash: str = "", extra: dict | None = None) -> None:
    """Write parameters and optimizer state as an ``.npz`` container.

    Layout (version 1): ``meta`` holds a JSON header with the format tag,
    version, per-view encoder widths and Adam hyperparameters; arrays ``p{k}``
    (and ``m{k}``, ``v{k}`` when optimizer state is saved) follow the order of
    :meth:`AutoencoderStack.parameters`.
    """
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "widths": stack.widths(),
        "config_hash": config_hash,
        "adam": None if state is None else {
            "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
            "eps": state.eps, "step": state.step,
        },
        "extra": extra or {},
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for k, p in enumerate(stack.parameters()):
        arrays[f"p{k}"] = p
        if state is not None and state.m:
            arrays[f"m{k}"] = state.m[k]
            arrays[f"v{k}"] = state.v[k]
    with open(Path(path), "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(stack, adam_state_or_None, meta)``."""
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ContractError(f"{path} is not an rcpmod checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {meta.get('version')}")
        widths = meta["widths"]
        stack = init_params([w[0] for w in widths], [w[1:] for w in widths], np.random.default_rng(0))
        params = stack.parameters()
        for k, p in enumerate(params):
            src = data[f"p{k}"]
            if src.shape != p.shape:
                raise ContractError(f"checkpoint tensor {k} has shape {src.shape}, expected {p.shape}")
            p[...] = src
        state = None
        if meta["adam"] is not None:
            a = meta["adam"]
            state = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"])
            if "m0" in data:
                state.m = [data[f"m{k}"].copy() for k in range(len(params))]
                state.v = [data[f"v{k}"].copy() for k in range(len(params))]
            else:
                state.m, state.v = zero_grads(stack), zero_grads(stack)
    return stack, state, meta
