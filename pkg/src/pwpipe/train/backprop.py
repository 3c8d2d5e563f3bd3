"""Reverse-mode gradients for the fixed layer set.

No general autograd: forward_training records a tape of per-layer caches and
backward_graph walks it in reverse.  Activation gradients are accumulated by
layer name, which is what makes skip concatenations work (an encoder
activation feeds both the next conv and a decoder concat).
"""

from __future__ import annotations

import numpy as np

from ..nn import graph as graph_mod
from ..nn import ops

_BACKWARD_KINDS = (
    "conv2d",
    "conv2d_transpose",
    "leaky_relu",
    "sigmoid",
    "tanh",
    "instance_norm",
    "batch_norm",
    "concat_skip",
)


def forward_training(graph: graph_mod.ModelGraph, x: np.ndarray):
    """Forward pass that keeps everything backward needs.

    Returns (output, tape); tape entries are (LayerSpec, cache dict).
    """
    for spec in graph.layers:
        if spec.kind not in _BACKWARD_KINDS:
            raise ValueError(f"layer kind {spec.kind!r} has no backward rule")
    x = np.asarray(x)
    store = graph.weights
    acts = {"input": x}
    tape = []
    cur, cur_name = x, "input"
    for spec in graph.layers:
        cache = {"in_name": cur_name}
        name = spec.name
        if spec.kind == "conv2d":
            w = store[f"{name}.w"]
            if spec.spectral_norm:
                mat = ops.weight_matrix(w)
                u = np.asarray(store[f"{name}.u"], dtype=np.float64)
                v_raw = mat.T @ u
                sigma = float(np.linalg.norm(v_raw))
                if sigma == 0.0:
                    raise ValueError(f"layer {name!r}: zero weight under spectral norm")
                cache.update(sigma=sigma, u=u, v=v_raw / sigma, w_raw=w)
                w = w / sigma
            cache.update(x=cur, w=w)
            cur = ops.conv2d(cur, w, store[f"{name}.b"], spec.stride, spec.padding)
        elif spec.kind == "conv2d_transpose":
            cache.update(x=cur)
            cur = ops.conv2d_transpose(
                cur, store[f"{name}.w"], store[f"{name}.b"], spec.stride, spec.semantics
            )
        elif spec.kind == "leaky_relu":
            cache.update(x=cur)
            cur = ops.leaky_relu(cur, spec.alpha)
        elif spec.kind == "sigmoid":
            cur = ops.sigmoid(cur)
            cache.update(y=cur)
        elif spec.kind == "tanh":
            cur = ops.tanh(cur)
            cache.update(y=cur)
        elif spec.kind == "instance_norm":
            cache.update(x=cur)
            cur = ops.instance_norm(cur, store[f"{name}.gamma"], store[f"{name}.beta"])
        elif spec.kind == "batch_norm":
            cache.update(x=cur)
            cur = ops.batch_norm_inference(
                cur, store[f"{name}.mean"], store[f"{name}.var"],
                store[f"{name}.gamma"], store[f"{name}.beta"],
            )
        elif spec.kind == "concat_skip":
            other = acts[spec.skip_from]
            cache.update(split=cur.shape[3])
            cur = np.concatenate([cur, other], axis=3)
        acts[name] = cur
        tape.append((spec, cache))
        cur_name = name
    return cur, tape


def _acc(bucket: dict, key: str, value: np.ndarray) -> None:
    if key in bucket:
        bucket[key] = bucket[key] + value
    else:
        bucket[key] = value


def backward_graph(graph: graph_mod.ModelGraph, tape, d_out: np.ndarray):
    """Backpropagate d loss/d output through a recorded tape.

    Returns (weight gradients keyed like the weight store, d loss/d input).
    """
    store = graph.weights
    grads: dict[str, np.ndarray] = {}
    dacts: dict[str, np.ndarray] = {}
    if tape:
        dacts[tape[-1][0].name] = np.asarray(d_out)
    else:
        return grads, np.asarray(d_out)
    for spec, cache in reversed(tape):
        dy = dacts.pop(spec.name, None)
        if dy is None:
            continue
        name = spec.name
        if spec.kind == "conv2d":
            dx, dw, db = ops.conv2d_backward(dy, cache["x"], cache["w"], spec.stride, spec.padding)
            if spec.spectral_norm:
                # w_used = w / sigma with sigma = ||w^T u||, u fixed; the
                # exact gradient contracts the rank-one dsigma/dw = u v^T.
                sigma, u, v = cache["sigma"], cache["u"], cache["v"]
                w_used = cache["w"]
                coef = float(np.sum(dw * w_used))
                rank1 = np.outer(u, v).T.reshape(cache["w_raw"].shape)
                dw = (dw - coef * rank1) / sigma
            _acc(grads, f"{name}.w", dw)
            _acc(grads, f"{name}.b", db)
        elif spec.kind == "conv2d_transpose":
            dx, dw, db = ops.conv2d_transpose_backward(
                dy, cache["x"], store[f"{name}.w"], spec.stride, spec.semantics
            )
            _acc(grads, f"{name}.w", dw)
            _acc(grads, f"{name}.b", db)
        elif spec.kind == "leaky_relu":
            x = cache["x"]
            dx = dy * np.where(x >= 0, 1.0, spec.alpha)
        elif spec.kind == "sigmoid":
            y = cache["y"]
            dx = dy * y * (1.0 - y)
        elif spec.kind == "tanh":
            y = cache["y"]
            dx = dy * (1.0 - y * y)
        elif spec.kind == "instance_norm":
            dx, dgamma, dbeta = ops.instance_norm_backward(dy, cache["x"], store[f"{name}.gamma"])
            _acc(grads, f"{name}.gamma", dgamma)
            _acc(grads, f"{name}.beta", dbeta)
        elif spec.kind == "batch_norm":
            inv = 1.0 / np.sqrt(np.asarray(store[f"{name}.var"]) + 1e-5)
            xhat = (cache["x"] - store[f"{name}.mean"]) * inv
            _acc(grads, f"{name}.gamma", (dy * xhat).sum(axis=(0, 1, 2)))
            _acc(grads, f"{name}.beta", dy.sum(axis=(0, 1, 2)))
            dx = dy * store[f"{name}.gamma"] * inv
        elif spec.kind == "concat_skip":
            split = cache["split"]
            dx = dy[..., :split]
            _acc(dacts, spec.skip_from, dy[..., split:])
        else:  # pragma: no cover - forward_training rejects these
            raise ValueError(f"layer kind {spec.kind!r} has no backward rule")
        _acc(dacts, cache["in_name"], dx)
    d_input = dacts.get("input")
    if d_input is None:
        d_input = np.zeros_like(tape[0][1].get("x", d_out))
    return grads, d_input


def add_grads(total: dict, part: dict) -> dict:
    """Accumulate one gradient dict into another (in place)."""
    for k, g in part.items():
        _acc(total, k, g)
    return total
