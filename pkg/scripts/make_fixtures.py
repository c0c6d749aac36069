#!/usr/bin/env python3
"""Regenerate the bundled model fixtures under fixtures/.

Deterministic (seed 2025); weights are He-ish scaled so hinges cross the
test boxes and gates actually straddle.
"""

from __future__ import annotations

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
SEED = 2025


def dense(rng, n_in, n_out, bias_scale=0.2):
    w = rng.normal(scale=1.0 / np.sqrt(n_in), size=(n_out, n_in))
    b = rng.normal(scale=bias_scale, size=n_out)
    return {"kind": "dense", "W": w.tolist(), "b": b.tolist()}


def normalized_adjacency(rng, v, p=0.4):
    a = (rng.random((v, v)) < p).astype(float)
    a = np.triu(a, 1)
    a = a + a.T + np.eye(v)  # undirected plus self loops
    deg = a.sum(axis=1)
    dinv = 1.0 / np.sqrt(deg)
    ahat = a * dinv[:, None] * dinv[None, :]
    rows, cols = np.nonzero(ahat)
    return {
        "rows": rows.tolist(),
        "cols": cols.tolist(),
        "vals": ahat[rows, cols].tolist(),
    }


def main() -> None:
    OUT.mkdir(exist_ok=True)
    rng = np.random.default_rng(SEED)

    models = {}

    models["abs1d"] = {
        "input_shape": [1],
        "layers": [{"kind": "dense", "W": [[1.0]], "b": [0.0]}, {"kind": "abs"}],
    }

    models["ffn_2_3_2"] = {
        "input_shape": [2],
        "layers": [dense(rng, 2, 3), {"kind": "relu"}, dense(rng, 3, 2)],
    }

    models["ffn_2_4_2"] = {
        "input_shape": [2],
        "layers": [dense(rng, 2, 4), {"kind": "relu"}, dense(rng, 4, 2)],
    }

    models["ffn_20_16_8_4"] = {
        "input_shape": [20],
        "layers": [
            dense(rng, 20, 16),
            {"kind": "relu"},
            dense(rng, 16, 8),
            {"kind": "relu"},
            dense(rng, 8, 4),
        ],
    }

    kern1d = rng.normal(scale=0.5, size=(1, 1, 1, 3))
    models["conv1d"] = {
        "input_shape": [1, 1, 8],
        "layers": [
            {
                "kind": "conv2d",
                "kernel": kern1d.tolist(),
                "stride": [1, 1],
                "padding": [0, 0],
                "b": rng.normal(scale=0.1, size=1).tolist(),
            },
            {"kind": "relu"},
            {"kind": "avgpool2d", "k": [1, 2], "stride": [1, 2]},
            dense(rng, 3, 2),
        ],
    }

    kern2d = rng.normal(scale=0.4, size=(2, 1, 3, 3))
    models["conv2d_1x8x8"] = {
        "input_shape": [1, 8, 8],
        "layers": [
            {
                "kind": "conv2d",
                "kernel": kern2d.tolist(),
                "stride": [1, 1],
                "padding": [1, 1],
                "b": rng.normal(scale=0.1, size=2).tolist(),
            },
            {"kind": "relu"},
            {"kind": "maxpool2d", "k": [2, 2], "stride": [2, 2]},
            dense(rng, 2 * 4 * 4, 4),
        ],
    }

    adj = normalized_adjacency(rng, 10)
    models["gcn_10"] = {
        "input_shape": [10, 3],
        "layers": [
            {
                "kind": "gcn",
                "adjacency": adj,
                "W": rng.normal(scale=0.6, size=(3, 4)).tolist(),
                "b": rng.normal(scale=0.1, size=4).tolist(),
            },
            {"kind": "relu"},
            {
                "kind": "gcn",
                "adjacency": adj,
                "W": rng.normal(scale=0.6, size=(4, 2)).tolist(),
                "b": rng.normal(scale=0.1, size=2).tolist(),
            },
        ],
    }

    models["mixed"] = {
        "input_shape": [4],
        "layers": [
            dense(rng, 4, 8),
            {"kind": "leaky_relu", "alpha": 0.05},
            {
                "kind": "batchnorm_inference",
                "mu": rng.normal(scale=0.2, size=8).tolist(),
                "sigma": rng.uniform(0.5, 1.5, size=8).tolist(),
                "gamma": rng.uniform(0.5, 1.5, size=8).tolist(),
                "beta": rng.normal(scale=0.2, size=8).tolist(),
            },
            dense(rng, 8, 8),
            {"kind": "residual_add", "source": 2},
            {"kind": "prelu", "alpha": rng.uniform(0.0, 1.5, size=8).tolist()},
            {"kind": "max_pointwise", "arity": 2},
            dense(rng, 4, 2),
        ],
    }

    for name, payload in models.items():
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(payload))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
