"""Minimal forward pass for the toy networks used to verify rewrites.

Storage may be float16 or float32; arithmetic always runs in float32 and
rounds to the storage dtype only when values are written back (which forward
never does). Networks are flat layer chains described by a JSON sidecar.

Two attention conventions coexist on purpose:

* the `attention_gqa` layer kind uses the modern tokens-as-rows layout, and
* `mhsa_forward` implements the older weights-left algebra (tokens are
  columns, Attention(Q, K, V) = softmax(Q K^T / sqrt(d)) V with a row-wise
  softmax over the head-feature axis), which is the form whose swap
  identities the proof tests exercise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .archive import ModelArchive

LAYER_KINDS = (
    "dense",
    "conv2d",
    "batchnorm2d",
    "relu",
    "maxpool2d",
    "avgpool2d",
    "attention_gqa",
    "layernorm",
    "embedding-lookup",
)

_EPS_DEFAULT = 1e-5


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict[str, str] = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class ToyNetwork:
    """Layer chain plus a description of what the input looks like.

    input_kind is "vector", "image" (C,H,W) or "tokens" (int ids);
    input_shape are the trailing dims a sample must have.
    """

    layers: tuple[LayerSpec, ...]
    input_kind: str
    input_shape: tuple[int, ...]

    def __post_init__(self):
        if self.input_kind not in ("vector", "image", "tokens"):
            raise ValueError(f"unknown input kind {self.input_kind!r}")


def network_from_dict(doc: dict) -> ToyNetwork:
    layers = tuple(
        LayerSpec(
            kind=raw["kind"],
            params=dict(raw.get("params", {})),
            hyper=dict(raw.get("hyper", {})),
        )
        for raw in doc["layers"]
    )
    return ToyNetwork(
        layers=layers,
        input_kind=doc["input"]["kind"],
        input_shape=tuple(doc["input"]["shape"]),
    )


def network_to_dict(net: ToyNetwork) -> dict:
    return {
        "input": {"kind": net.input_kind, "shape": list(net.input_shape)},
        "layers": [
            {"kind": l.kind, "params": dict(l.params), "hyper": dict(l.hyper)}
            for l in net.layers
        ],
    }


def parse_network(text: str) -> ToyNetwork:
    return network_from_dict(json.loads(text))


def load_network(path) -> ToyNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network(fh.read())


def softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax; rows sum to one along `axis`."""
    shifted = a - np.max(a, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _fetch(archive: ModelArchive, layer: LayerSpec, role: str) -> np.ndarray:
    name = layer.params.get(role)
    if name is None:
        raise ValueError(f"layer {layer.kind} lacks required param {role!r}")
    return archive.tensors[name].f32()


def _maybe(archive: ModelArchive, layer: LayerSpec, role: str) -> np.ndarray | None:
    name = layer.params.get(role)
    return archive.tensors[name].f32() if name else None


def _conv2d(x, w, b, stride, padding):
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    k = w.shape[2]
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    # windows: (C, H', W', k, k); w: (O, C, k, k) -> (O, H', W')
    out = np.tensordot(w, windows, axes=([1, 2, 3], [0, 3, 4]))
    if b is not None:
        out = out + b[:, None, None]
    return np.ascontiguousarray(out.astype(np.float32))


def _pool2d(x, kernel, stride, reducer):
    c, h, w = x.shape
    oh = (h - kernel) // stride + 1
    ow = (w - kernel) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(1, 2))
    windows = windows[:, : oh * stride : stride, : ow * stride : stride]
    return reducer(windows, axis=(3, 4)).astype(np.float32)


def _attention_gqa(x, wq, wk, wv, wo, h_q, h_kv, head_dim, causal):
    t = x.shape[0]
    q = (x @ wq.T).reshape(t, h_q, head_dim)
    k = (x @ wk.T).reshape(t, h_kv, head_dim)
    v = (x @ wv.T).reshape(t, h_kv, head_dim)
    group = h_q // h_kv
    # query head h reads kv head h // group
    k_full = np.repeat(k, group, axis=1)
    v_full = np.repeat(v, group, axis=1)
    scores = np.einsum("thd,shd->hts", q, k_full) / np.float32(np.sqrt(head_dim))
    if causal:
        mask = np.triu(np.full((t, t), -np.inf, dtype=np.float32), k=1)
        scores = scores + mask[None, :, :]
    attn = softmax(scores, axis=-1)
    mixed = np.einsum("hts,shd->thd", attn, v_full).reshape(t, h_q * head_dim)
    return (mixed @ wo.T).astype(np.float32)


def forward(net: ToyNetwork, archive: ModelArchive, x: np.ndarray) -> np.ndarray:
    """Run one sample through the chain in float32."""
    if net.input_kind == "tokens":
        x = np.asarray(x, dtype=np.int64)
    else:
        x = np.asarray(x, dtype=np.float32)
    k = len(net.input_shape)
    if k and x.shape[-k:] != net.input_shape:
        raise ValueError(f"input shape {x.shape} does not end with {net.input_shape}")
    for layer in net.layers:
        kind = layer.kind
        if kind == "dense":
            w = _fetch(archive, layer, "weight")
            b = _maybe(archive, layer, "bias")
            x = x @ w.T
            if b is not None:
                x = x + b
        elif kind == "relu":
            x = np.maximum(x, 0.0)
        elif kind == "conv2d":
            x = _conv2d(
                x,
                _fetch(archive, layer, "weight"),
                _maybe(archive, layer, "bias"),
                int(layer.hyper.get("stride", 1)),
                int(layer.hyper.get("padding", 0)),
            )
        elif kind == "batchnorm2d":
            gamma = _fetch(archive, layer, "gamma")
            beta = _fetch(archive, layer, "beta")
            mean = _fetch(archive, layer, "running_mean")
            var = _fetch(archive, layer, "running_var")
            eps = np.float32(layer.hyper.get("eps", _EPS_DEFAULT))
            x = gamma[:, None, None] * (x - mean[:, None, None]) / np.sqrt(
                var[:, None, None] + eps
            ) + beta[:, None, None]
        elif kind == "maxpool2d":
            kern = int(layer.hyper["kernel"])
            x = _pool2d(x, kern, int(layer.hyper.get("stride", kern)), np.max)
        elif kind == "avgpool2d":
            if layer.hyper.get("global"):
                x = x.mean(axis=(1, 2)).astype(np.float32)
            else:
                kern = int(layer.hyper["kernel"])
                x = _pool2d(x, kern, int(layer.hyper.get("stride", kern)), np.mean)
        elif kind == "layernorm":
            gamma = _fetch(archive, layer, "gamma")
            beta = _fetch(archive, layer, "beta")
            eps = np.float32(layer.hyper.get("eps", _EPS_DEFAULT))
            mu = x.mean(axis=-1, keepdims=True)
            var = x.var(axis=-1, keepdims=True)
            x = gamma * (x - mu) / np.sqrt(var + eps) + beta
        elif kind == "embedding-lookup":
            table = _fetch(archive, layer, "table")
            if np.any(x < 0) or np.any(x >= table.shape[0]):
                raise ValueError("token id out of range")
            x = table[x]
        elif kind == "attention_gqa":
            x = _attention_gqa(
                x,
                _fetch(archive, layer, "wq"),
                _fetch(archive, layer, "wk"),
                _fetch(archive, layer, "wv"),
                _fetch(archive, layer, "wo"),
                int(layer.hyper["h_q"]),
                int(layer.hyper["h_kv"]),
                int(layer.hyper["head_dim"]),
                bool(layer.hyper.get("causal", False)),
            )
        x = x.astype(np.float32)
    return x


def mhsa_forward(w_heads, w_o, x: np.ndarray) -> np.ndarray:
    """Multi-head self-attention in the weights-left convention.

    x has tokens as columns: (d_model, T). Each head carries (wq, wk, wv)
    of shape (d_head, d_model); w_o is (d_model, h * d_head). Heads are
    concatenated vertically before the output projection.
    """
    x = np.asarray(x, dtype=np.float64)
    outs = []
    for wq, wk, wv in w_heads:
        q = np.asarray(wq, dtype=np.float64) @ x
        k = np.asarray(wk, dtype=np.float64) @ x
        v = np.asarray(wv, dtype=np.float64) @ x
        d_head = q.shape[0]
        scores = (q @ k.T) / np.sqrt(d_head)
        outs.append(softmax(scores, axis=-1) @ v)
    concat = np.concatenate(outs, axis=0)
    return np.asarray(w_o, dtype=np.float64) @ concat


def max_output_deviation(
    net: ToyNetwork,
    a: ModelArchive,
    b: ModelArchive,
    inputs,
) -> float:
    """Largest |forward(a) - forward(b)| over the given inputs."""
    worst = 0.0
    for x in inputs:
        ya = forward(net, a, x)
        yb = forward(net, b, x)
        worst = max(worst, float(np.max(np.abs(ya - yb))))
    return worst


def normalized_output_deviation(
    net: ToyNetwork,
    a: ModelArchive,
    b: ModelArchive,
    inputs,
) -> float:
    """Largest per-probe |forward(a) - forward(b)| / max(1, |forward(a)|).

    Dividing by the probe's own output magnitude (floored at one) keeps a
    single tolerance meaningful for networks whose activations are far from
    unit scale, where float32 reassociation noise alone scales with the
    outputs; for unit-scale outputs it coincides with the absolute form.
    """
    worst = 0.0
    for x in inputs:
        ya = forward(net, a, x)
        yb = forward(net, b, x)
        scale = max(1.0, float(np.max(np.abs(ya))))
        worst = max(worst, float(np.max(np.abs(ya - yb))) / scale)
    return worst


def random_inputs(net: ToyNetwork, count: int, seed: int):
    """Deterministic probe inputs matching the net's input contract."""
    from .rng import SeededRng, derive_seed

    out = []
    for i in range(count):
        rng = SeededRng(derive_seed(seed, f"probe/{i}"))
        if net.input_kind == "tokens":
            (t,) = net.input_shape
            # vocab bound is the embedding table's first dim, checked at lookup
            ids = [rng.bounded(_vocab_hint(net)) for _ in range(t)]
            out.append(np.asarray(ids, dtype=np.int64))
        else:
            size = 1
            for s in net.input_shape:
                size *= s
            vals = rng.gaussian_block(size).astype(np.float32).reshape(net.input_shape)
            out.append(vals)
    return out


def _vocab_hint(net: ToyNetwork) -> int:
    for layer in net.layers:
        if layer.kind == "embedding-lookup":
            v = layer.hyper.get("vocab")
            if v:
                return int(v)
    raise ValueError("token inputs need an embedding-lookup layer with a vocab hint")
