"""Model exchange schema: load, validate and run reference forwards.

The JSON layout is {"input_shape": [...], "layers": [{"kind": ...}, ...]}
with optional "metadata". Layer kinds: dense, relu, leaky_relu, prelu, abs,
max_pointwise, maxpool2d, avgpool2d, conv2d, batchnorm_inference,
residual_add, gcn. All numerics are float64. The forward here is the direct
layer-by-layer evaluation used as the reference semantics for compiled
expressions and for witness re-checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import prod

import numpy as np

from .errors import SchemaError, ShapeError, UnsupportedLayer

KINDS = {
    "dense",
    "relu",
    "leaky_relu",
    "prelu",
    "abs",
    "max_pointwise",
    "maxpool2d",
    "avgpool2d",
    "conv2d",
    "batchnorm_inference",
    "residual_add",
    "gcn",
}

GATE_KINDS = {"relu", "leaky_relu", "prelu", "abs"}


@dataclass
class Layer:
    kind: str
    params: dict = field(default_factory=dict)

    def __getitem__(self, name: str):
        return self.params[name]


@dataclass
class NetworkModel:
    input_shape: tuple[int, ...]
    layers: list[Layer]
    metadata: dict = field(default_factory=dict)
    # per-layer output shapes, filled by validate()
    shapes: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return prod(self.input_shape)

    @property
    def output_dim(self) -> int:
        return prod(self.shapes[-1]) if self.layers else self.input_dim

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Direct evaluation on one flat input or a batch (N, input_dim)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        batch = x.reshape(1, -1) if single else x
        if batch.shape[1] != self.input_dim:
            raise ShapeError("input length does not match input_shape")
        outs = _forward_batch(self, batch)
        return outs[0] if single else outs

    def to_json(self) -> str:
        return json.dumps(model_to_dict(self))


def conv2d_output_hw(
    h: int, w: int, kh: int, kw: int, sh: int, sw: int, ph: int, pw: int
) -> tuple[int, int]:
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv/pool window exceeds padded input")
    return ho, wo


def _as_array(layer: dict, name: str, kind: str) -> np.ndarray:
    if name not in layer:
        raise SchemaError(f"{kind} layer missing field {name!r}")
    try:
        arr = np.asarray(layer[name], dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{kind} field {name!r} is not numeric") from exc
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{kind} field {name!r} has non-finite entries")
    return arr


def _layer_shape(layer: Layer, shape: tuple[int, ...], idx: int,
                 shapes: list[tuple[int, ...]],
                 input_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Validate one layer against its input shape; return its output shape."""
    kind = layer.kind
    p = layer.params
    flat = prod(shape)
    if kind == "dense":
        w = p["W"]
        if w.ndim != 2 or w.shape[1] != flat:
            raise ShapeError(f"dense W at layer {idx} wants {w.shape[1]} inputs, got {flat}")
        if p["b"].shape != (w.shape[0],):
            raise ShapeError(f"dense b at layer {idx} has wrong length")
        return (w.shape[0],)
    if kind in ("relu", "abs"):
        return shape
    if kind == "leaky_relu":
        if not 0.0 <= p["alpha"] <= 1.0:
            raise SchemaError("leaky_relu alpha must be in [0, 1]")
        return shape
    if kind == "prelu":
        alpha = p["alpha"]
        if np.any(alpha < 0):
            raise SchemaError("prelu alpha must be nonnegative")
        channels = shape[0] if len(shape) == 3 else flat
        if alpha.shape != (channels,):
            raise ShapeError(f"prelu alpha at layer {idx} wants {channels} channels")
        return shape
    if kind == "max_pointwise":
        k = p["arity"]
        if k < 2 or flat % k:
            raise ShapeError(f"max_pointwise arity {k} does not divide {flat}")
        return (flat // k,)
    if kind in ("maxpool2d", "avgpool2d"):
        if len(shape) != 3:
            raise ShapeError(f"{kind} at layer {idx} needs a [C,H,W] input")
        c, h, w_in = shape
        kh, kw = p["k"]
        sh, sw = p["stride"]
        ho, wo = conv2d_output_hw(h, w_in, kh, kw, sh, sw, 0, 0)
        return (c, ho, wo)
    if kind == "conv2d":
        if len(shape) != 3:
            raise ShapeError(f"conv2d at layer {idx} needs a [C,H,W] input")
        c, h, w_in = shape
        kern = p["kernel"]
        if kern.ndim != 4 or kern.shape[1] != c:
            raise ShapeError(f"conv2d kernel at layer {idx} wants {c} input channels")
        sh, sw = p["stride"]
        ph, pw = p["padding"]
        ho, wo = conv2d_output_hw(h, w_in, kern.shape[2], kern.shape[3], sh, sw, ph, pw)
        return (kern.shape[0], ho, wo)
    if kind == "batchnorm_inference":
        channels = shape[0] if len(shape) == 3 else flat
        for name in ("mu", "sigma", "gamma", "beta"):
            if p[name].shape != (channels,):
                raise ShapeError(f"batchnorm field {name} wants {channels} channels")
        if np.any(p["sigma"] <= 0):
            raise SchemaError("batchnorm sigma must be positive")
        return shape
    if kind == "residual_add":
        src = p["source"]
        if not -1 <= src < idx:
            raise SchemaError(f"residual_add at layer {idx} must reference an earlier layer")
        src_shape = input_shape if src == -1 else shapes[src]
        if prod(src_shape) != flat:
            raise ShapeError(f"residual_add at layer {idx} mixes sizes")
        return shape
    if kind == "gcn":
        if len(shape) != 2:
            raise ShapeError(f"gcn at layer {idx} needs a [V,F] input")
        v, f_in = shape
        w = p["W"]
        if w.shape[0] != f_in:
            raise ShapeError(f"gcn W at layer {idx} wants {f_in} input features")
        if p["b"].shape != (w.shape[1],):
            raise ShapeError(f"gcn b at layer {idx} has wrong length")
        rows, cols = p["adj_rows"], p["adj_cols"]
        if rows.size != cols.size or rows.size != p["adj_vals"].size:
            raise SchemaError("gcn adjacency triplets disagree in length")
        if rows.size and (rows.max() >= v or cols.max() >= v or rows.min() < 0 or cols.min() < 0):
            raise SchemaError("gcn adjacency index out of range")
        return (v, w.shape[1])
    raise UnsupportedLayer(kind)


def validate(model: NetworkModel) -> None:
    shape = model.input_shape
    model.shapes = []
    for idx, layer in enumerate(model.layers):
        shape = _layer_shape(layer, shape, idx, model.shapes, model.input_shape)
        model.shapes.append(shape)


def _parse_layer(raw: dict, idx: int) -> Layer:
    if "kind" not in raw:
        raise SchemaError(f"layer {idx} missing 'kind'")
    kind = raw["kind"]
    if kind not in KINDS:
        raise UnsupportedLayer(kind)
    p: dict = {}
    if kind == "dense":
        p["W"] = _as_array(raw, "W", kind)
        p["b"] = _as_array(raw, "b", kind)
    elif kind == "leaky_relu":
        if "alpha" not in raw:
            raise SchemaError("leaky_relu missing alpha")
        p["alpha"] = float(raw["alpha"])
    elif kind == "prelu":
        p["alpha"] = _as_array(raw, "alpha", kind).reshape(-1)
    elif kind == "max_pointwise":
        if "arity" not in raw:
            raise SchemaError("max_pointwise missing arity")
        p["arity"] = int(raw["arity"])
    elif kind in ("maxpool2d", "avgpool2d"):
        p["k"] = [int(v) for v in raw.get("k", ())]
        p["stride"] = [int(v) for v in raw.get("stride", ())]
        if len(p["k"]) != 2 or len(p["stride"]) != 2:
            raise SchemaError(f"{kind} needs k=[kh,kw] and stride=[sh,sw]")
    elif kind == "conv2d":
        p["kernel"] = _as_array(raw, "kernel", kind)
        p["stride"] = [int(v) for v in raw.get("stride", (1, 1))]
        p["padding"] = [int(v) for v in raw.get("padding", (0, 0))]
        if len(p["stride"]) != 2 or len(p["padding"]) != 2:
            raise SchemaError("conv2d stride/padding need two entries")
        if "b" in raw:
            p["b"] = _as_array(raw, "b", kind)
        else:
            p["b"] = np.zeros(p["kernel"].shape[0])
    elif kind == "batchnorm_inference":
        for name in ("mu", "sigma", "gamma", "beta"):
            p[name] = _as_array(raw, name, kind)
    elif kind == "residual_add":
        if "source" not in raw:
            raise SchemaError("residual_add missing source")
        p["source"] = int(raw["source"])
    elif kind == "gcn":
        adj = raw.get("adjacency")
        if not isinstance(adj, dict) or not {"rows", "cols", "vals"} <= adj.keys():
            raise SchemaError("gcn adjacency needs {rows, cols, vals}")
        p["adj_rows"] = np.asarray(adj["rows"], dtype=int)
        p["adj_cols"] = np.asarray(adj["cols"], dtype=int)
        p["adj_vals"] = np.asarray(adj["vals"], dtype=float)
        p["W"] = _as_array(raw, "W", kind)
        p["b"] = _as_array(raw, "b", kind)
    return Layer(kind, p)


def load_model(source: str | bytes | dict) -> NetworkModel:
    """Parse and validate a model description; raises SchemaError and kin."""
    if isinstance(source, (str, bytes)):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"model JSON malformed: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict) or "input_shape" not in data or "layers" not in data:
        raise SchemaError("model needs input_shape and layers")
    shape = tuple(int(v) for v in data["input_shape"])
    if not shape or any(v < 1 for v in shape):
        raise SchemaError("input_shape entries must be positive")
    layers = [_parse_layer(raw, i) for i, raw in enumerate(data["layers"])]
    model = NetworkModel(shape, layers, dict(data.get("metadata", {})))
    validate(model)
    return model


def model_to_dict(model: NetworkModel) -> dict:
    out_layers = []
    for layer in model.layers:
        p = layer.params
        if layer.kind == "dense":
            row = {"kind": "dense", "W": p["W"].tolist(), "b": p["b"].tolist()}
        elif layer.kind == "leaky_relu":
            row = {"kind": "leaky_relu", "alpha": p["alpha"]}
        elif layer.kind == "prelu":
            row = {"kind": "prelu", "alpha": p["alpha"].tolist()}
        elif layer.kind == "max_pointwise":
            row = {"kind": "max_pointwise", "arity": p["arity"]}
        elif layer.kind in ("maxpool2d", "avgpool2d"):
            row = {"kind": layer.kind, "k": p["k"], "stride": p["stride"]}
        elif layer.kind == "conv2d":
            row = {
                "kind": "conv2d",
                "kernel": p["kernel"].tolist(),
                "stride": p["stride"],
                "padding": p["padding"],
                "b": p["b"].tolist(),
            }
        elif layer.kind == "batchnorm_inference":
            row = {
                "kind": "batchnorm_inference",
                "mu": p["mu"].tolist(),
                "sigma": p["sigma"].tolist(),
                "gamma": p["gamma"].tolist(),
                "beta": p["beta"].tolist(),
            }
        elif layer.kind == "residual_add":
            row = {"kind": "residual_add", "source": p["source"]}
        elif layer.kind == "gcn":
            row = {
                "kind": "gcn",
                "adjacency": {
                    "rows": p["adj_rows"].tolist(),
                    "cols": p["adj_cols"].tolist(),
                    "vals": p["adj_vals"].tolist(),
                },
                "W": p["W"].tolist(),
                "b": p["b"].tolist(),
            }
        else:
            row = {"kind": layer.kind}
        out_layers.append(row)
    out = {"input_shape": list(model.input_shape), "layers": out_layers}
    if model.metadata:
        out["metadata"] = model.metadata
    return out


# -- reference forward ------------------------------------------------------


def _pool_windows(h: int, w: int, kh: int, kw: int, sh: int, sw: int):
    ho, wo = conv2d_output_hw(h, w, kh, kw, sh, sw, 0, 0)
    for i in range(ho):
        for j in range(wo):
            yield i, j, i * sh, j * sw


def _forward_batch(model: NetworkModel, batch: np.ndarray) -> np.ndarray:
    n = batch.shape[0]
    cur = batch
    shape = model.input_shape
    saved: list[np.ndarray] = []
    for idx, layer in enumerate(model.layers):
        p = layer.params
        kind = layer.kind
        if kind == "dense":
            cur = cur @ p["W"].T + p["b"]
        elif kind == "relu":
            cur = np.maximum(cur, 0.0)
        elif kind == "abs":
            cur = np.abs(cur)
        elif kind == "leaky_relu":
            cur = np.where(cur >= 0, cur, p["alpha"] * cur)
        elif kind == "prelu":
            if len(shape) == 3:
                alpha = np.repeat(p["alpha"], shape[1] * shape[2])
            else:
                alpha = p["alpha"]
            cur = np.where(cur >= 0, cur, alpha * cur)
        elif kind == "max_pointwise":
            k = p["arity"]
            cur = cur.reshape(n, -1, k).max(axis=2)
        elif kind in ("maxpool2d", "avgpool2d"):
            c, h, w_in = shape
            kh, kw = p["k"]
            sh, sw = p["stride"]
            grid = cur.reshape(n, c, h, w_in)
            ho, wo = conv2d_output_hw(h, w_in, kh, kw, sh, sw, 0, 0)
            out = np.empty((n, c, ho, wo))
            for i, j, r, q in _pool_windows(h, w_in, kh, kw, sh, sw):
                win = grid[:, :, r : r + kh, q : q + kw].reshape(n, c, -1)
                out[:, :, i, j] = win.max(axis=2) if kind == "maxpool2d" else win.mean(axis=2)
            cur = out.reshape(n, -1)
        elif kind == "conv2d":
            c, h, w_in = shape
            kern = p["kernel"]
            sh, sw = p["stride"]
            ph, pw = p["padding"]
            grid = cur.reshape(n, c, h, w_in)
            padded = np.pad(grid, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
            kh, kw = kern.shape[2], kern.shape[3]
            ho, wo = conv2d_output_hw(h, w_in, kh, kw, sh, sw, ph, pw)
            out = np.empty((n, kern.shape[0], ho, wo))
            for i in range(ho):
                for j in range(wo):
                    win = padded[:, :, i * sh : i * sh + kh, j * sw : j * sw + kw]
                    out[:, :, i, j] = np.einsum("ncuv,ocuv->no", win, kern) + p["b"]
            cur = out.reshape(n, -1)
        elif kind == "batchnorm_inference":
            scale = p["gamma"] / p["sigma"]
            shift = p["beta"] - p["mu"] * scale
            if len(shape) == 3:
                scale = np.repeat(scale, shape[1] * shape[2])
                shift = np.repeat(shift, shape[1] * shape[2])
            cur = cur * scale + shift
        elif kind == "residual_add":
            src = p["source"]
            cur = cur + (batch if src == -1 else saved[src])
        elif kind == "gcn":
            v, f_in = shape
            feats = cur.reshape(n, v, f_in)
            mixed = np.zeros_like(feats)
            rows, cols, vals = p["adj_rows"], p["adj_cols"], p["adj_vals"]
            for r, c_, val in zip(rows, cols, vals):
                mixed[:, r, :] += val * feats[:, c_, :]
            cur = (mixed @ p["W"] + p["b"]).reshape(n, -1)
        else:
            raise UnsupportedLayer(kind)
        shape = model.shapes[idx]
        saved.append(cur)
    return cur
