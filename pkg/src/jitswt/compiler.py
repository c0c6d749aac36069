"""Compile network models into guarded expression graphs.

Affine layer kinds compose matrix-wise while the running entries are affine
atoms (W~ = W Wc, b~ = W bc + b); once gates appear downstream, layers are
assembled structurally as Sum/Scale/Bias over the entry nodes. Each scalar
gate yields a GateSite whose positive branch carries the pre-activation and
whose negative branch carries (0,0), (alpha w, alpha b) or (-w, -b); pointwise
max and pooling sites carry their candidate tuples. Threshold and comparator
faces are NOT registered here; the refinement engine creates them on demand.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import ShapeError, UnsupportedLayer
from .exprs import AFFINE, ExprStore
from .model import Layer, NetworkModel, conv2d_output_hw


@dataclass(frozen=True)
class GateSite:
    """One refinement site: a two-way gate or a k-way max."""

    index: int  # position in SwtGraph.gate_sites, topological
    kind: str  # relu | leaky_relu | prelu | abs | max
    layer: int
    unit: int  # flat output channel within the layer
    out: int  # gate output node
    decision_node: int  # the Max node that a commit resolves
    z: int | None = None  # pre-activation node (two-way gates)
    choice_pos: int | None = None  # node chosen by a pos commit
    choice_neg: int | None = None  # node chosen by a neg commit
    candidates: tuple[int, ...] | None = None  # max sites

    @property
    def is_two_way(self) -> bool:
        return self.kind != "max"


@dataclass
class SwtGraph:
    """Compiled network: output roots plus gate registry and counters."""

    model: NetworkModel
    store: ExprStore
    roots: tuple[int, ...]
    gate_sites: list[GateSite]
    layer_outputs: list[list[int]]
    input_nodes: list[int]
    counts: dict[str, int]

    @property
    def input_dim(self) -> int:
        return self.model.input_dim

    @property
    def output_dim(self) -> int:
        return len(self.roots)

    def sites_by_layer(self, layer: int) -> list[GateSite]:
        return [g for g in self.gate_sites if g.layer == layer]


def layer_linear_map(
    model: NetworkModel, idx: int
) -> tuple[np.ndarray, np.ndarray]:
    """Dense (M, c) with out = M @ in + c for an affine layer at idx."""
    layer = model.layers[idx]
    in_shape = model.input_shape if idx == 0 else model.shapes[idx - 1]
    kind = layer.kind
    p = layer.params
    n_in = prod(in_shape)
    if kind == "dense":
        return p["W"], p["b"]
    if kind == "batchnorm_inference":
        scale = p["gamma"] / p["sigma"]
        shift = p["beta"] - p["mu"] * scale
        if len(in_shape) == 3:
            scale = np.repeat(scale, in_shape[1] * in_shape[2])
            shift = np.repeat(shift, in_shape[1] * in_shape[2])
        return np.diag(scale), shift
    if kind == "avgpool2d":
        c, h, w_in = in_shape
        kh, kw = p["k"]
        sh, sw = p["stride"]
        ho, wo = conv2d_output_hw(h, w_in, kh, kw, sh, sw, 0, 0)
        m = np.zeros((c * ho * wo, n_in))
        share = 1.0 / (kh * kw)
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    row = (ch * ho + i) * wo + j
                    for u in range(kh):
                        for v in range(kw):
                            col = (ch * h + i * sh + u) * w_in + j * sw + v
                            m[row, col] = share
        return m, np.zeros(c * ho * wo)
    if kind == "conv2d":
        c, h, w_in = in_shape
        kern = p["kernel"]
        sh, sw = p["stride"]
        ph, pw = p["padding"]
        kh, kw = kern.shape[2], kern.shape[3]
        ho, wo = conv2d_output_hw(h, w_in, kh, kw, sh, sw, ph, pw)
        c_out = kern.shape[0]
        m = np.zeros((c_out * ho * wo, n_in))
        bias = np.zeros(c_out * ho * wo)
        for oc in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    row = (oc * ho + i) * wo + j
                    bias[row] = p["b"][oc]
                    for ic in range(c):
                        for u in range(kh):
                            r = i * sh + u - ph
                            if not 0 <= r < h:
                                continue  # zero padding
                            for v in range(kw):
                                q = j * sw + v - pw
                                if not 0 <= q < w_in:
                                    continue
                                col = (ic * h + r) * w_in + q
                                m[row, col] += kern[oc, ic, u, v]
        return m, bias
    if kind == "gcn":
        v, f_in = in_shape
        w = p["W"]
        f_out = w.shape[1]
        m = np.zeros((v * f_out, v * f_in))
        bias = np.tile(p["b"], v)
        for r, c_, val in zip(p["adj_rows"], p["adj_cols"], p["adj_vals"]):
            # out[r, fo] += val * sum_fi in[c_, fi] * W[fi, fo]
            for fo in range(f_out):
                m[r * f_out + fo, c_ * f_in : (c_ + 1) * f_in] += val * w[:, fo]
        return m, bias
    raise UnsupportedLayer(f"{kind} has no linear map")


def _entries_as_rows(
    store: ExprStore, entries: list[int]
) -> tuple[np.ndarray, np.ndarray] | None:
    """(W, b) view when every entry is an affine atom, else None."""
    ws, bs = [], []
    for nid in entries:
        if store.kind(nid) != AFFINE:
            return None
        w, b = store.payload(nid)
        ws.append(w)
        bs.append(b)
    return np.asarray(ws, dtype=float), np.asarray(bs, dtype=float)


def _linear_comb(
    store: ExprStore, coeffs: np.ndarray, const: float, entries: list[int], dim: int
) -> int:
    children = [
        store.scale(float(c), e)
        for c, e in zip(coeffs, entries)
        if c != 0.0
    ]
    if not children:
        return store.affine(np.zeros(dim), float(const))
    node = children[0] if len(children) == 1 else store.sum_(children)
    if const != 0.0:
        node = store.bias(float(const), node)
    return node


class _Compiler:
    def __init__(
        self,
        model: NetworkModel,
        store: ExprStore,
        input_map: tuple[np.ndarray, np.ndarray] | None,
        overrides: dict[tuple[int, int], int] | None,
    ) -> None:
        self.model = model
        self.store = store
        self.overrides = overrides or {}
        self.sites: list[GateSite] = []
        self.layer_outputs: list[list[int]] = []
        self.counts = {
            "N_aff": 0,
            "N_gate2": 0,
            "T_conv": 0,
            "T_gnn": 0,
            "K_max": 0,
            "Gamma_max": 0,
            "V_max": 0,
            "residual_fanins": 0,
        }
        n = model.input_dim
        if input_map is not None:
            m, c = input_map
            m = np.asarray(m, dtype=float)
            c = np.asarray(c, dtype=float).reshape(-1)
            if m.shape[0] != n or c.size != n:
                raise ShapeError("input map must produce input_dim entries")
            self.input_nodes = [store.affine(m[i], c[i]) for i in range(n)]
        else:
            eye = np.eye(n)
            self.input_nodes = [store.affine(eye[i], 0.0) for i in range(n)]

    # -- gates ---------------------------------------------------------

    def _two_way_gate(
        self, kind: str, layer_idx: int, unit: int, z: int, alpha: float
    ) -> int:
        store = self.store
        if store.kind(z) == AFFINE:
            w, b = store.payload(z)
            w = np.asarray(w)
            if kind == "relu":
                neg = store.affine(np.zeros_like(w), 0.0)
            elif kind == "abs":
                neg = store.affine(-w, -b)
            else:
                neg = store.affine(alpha * w, alpha * b)
        else:
            if kind == "relu":
                neg = store.affine(np.zeros(store.dim(z)), 0.0)
            elif kind == "abs":
                neg = store.neg(z)
            else:
                neg = store.scale(alpha, z)
        if kind in ("leaky_relu", "prelu") and alpha > 1.0:
            # max(z, alpha z) is wrong for alpha > 1; use -max(-z, -alpha z)
            inner = store.max_([store.neg(z), store.neg(neg)])
            out = store.neg(inner)
            decision_node = inner
            choice_pos, choice_neg = store.neg(z), store.neg(neg)
        else:
            out = store.max_([z, neg])
            decision_node = out
            choice_pos, choice_neg = z, neg
        site = GateSite(
            index=len(self.sites),
            kind=kind,
            layer=layer_idx,
            unit=unit,
            out=out,
            decision_node=decision_node,
            z=z,
            choice_pos=choice_pos,
            choice_neg=choice_neg,
        )
        self.sites.append(site)
        self.counts["N_gate2"] += 1
        return out

    def _max_site(self, layer_idx: int, unit: int, cands: list[int]) -> int:
        store = self.store
        uniq = tuple(sorted(set(cands)))
        out = store.max_(uniq)
        site = GateSite(
            index=len(self.sites),
            kind="max",
            layer=layer_idx,
            unit=unit,
            out=out,
            decision_node=out,
            candidates=uniq,
        )
        self.sites.append(site)
        k = len(cands)
        self.counts["K_max"] += k
        self.counts["Gamma_max"] += k * (k - 1) // 2
        return out

    # -- layer dispatch --------------------------------------------------

    def run(self) -> SwtGraph:
        model = self.model
        store = self.store
        entries = list(self.input_nodes)
        shape = model.input_shape
        for idx, layer in enumerate(model.layers):
            kind = layer.kind
            p = layer.params
            if kind in ("dense", "batchnorm_inference", "avgpool2d", "conv2d", "gcn"):
                m, c = layer_linear_map(model, idx)
                rows = _entries_as_rows(store, entries)
                if rows is not None:
                    w_new = m @ rows[0]
                    b_new = m @ rows[1] + c
                    entries = [
                        store.affine(w_new[i], b_new[i]) for i in range(m.shape[0])
                    ]
                else:
                    dim = store.dim(entries[0])
                    entries = [
                        _linear_comb(store, m[i], c[i], entries, dim)
                        for i in range(m.shape[0])
                    ]
                if kind == "conv2d":
                    self.counts["T_conv"] += m.shape[0]
                elif kind == "gcn":
                    self.counts["T_gnn"] += m.shape[0]
                    self.counts["V_max"] = max(self.counts["V_max"], shape[0])
                else:
                    self.counts["N_aff"] += 1
            elif kind in ("relu", "abs", "leaky_relu", "prelu"):
                if kind == "leaky_relu":
                    alphas = [p["alpha"]] * len(entries)
                elif kind == "prelu":
                    if len(shape) == 3:
                        alphas = list(np.repeat(p["alpha"], shape[1] * shape[2]))
                    else:
                        alphas = list(p["alpha"])
                else:
                    alphas = [0.0] * len(entries)
                entries = [
                    self._two_way_gate(kind, idx, u, z, float(alphas[u]))
                    for u, z in enumerate(entries)
                ]
            elif kind == "max_pointwise":
                k = p["arity"]
                entries = [
                    self._max_site(idx, u, entries[u * k : (u + 1) * k])
                    for u in range(len(entries) // k)
                ]
            elif kind == "maxpool2d":
                c_ch, h, w_in = shape
                kh, kw = p["k"]
                sh, sw = p["stride"]
                ho, wo = conv2d_output_hw(h, w_in, kh, kw, sh, sw, 0, 0)
                new_entries = []
                for ch in range(c_ch):
                    for i in range(ho):
                        for j in range(wo):
                            cands = [
                                entries[(ch * h + i * sh + u) * w_in + j * sw + v]
                                for u in range(kh)
                                for v in range(kw)
                            ]
                            unit = (ch * ho + i) * wo + j
                            new_entries.append(self._max_site(idx, unit, cands))
                entries = new_entries
            elif kind == "residual_add":
                src = p["source"]
                other = (
                    self.input_nodes if src == -1 else self.layer_outputs[src]
                )
                new_entries = []
                for a, b in zip(entries, other):
                    if store.kind(a) == AFFINE and store.kind(b) == AFFINE:
                        wa, ba = store.payload(a)
                        wb, bb = store.payload(b)
                        new_entries.append(
                            store.affine(np.asarray(wa) + np.asarray(wb), ba + bb)
                        )
                    else:
                        new_entries.append(store.sum_([a, b]))
                entries = new_entries
                self.counts["N_aff"] += 1
                self.counts["residual_fanins"] += 1
            else:
                raise UnsupportedLayer(kind)
            # apply interventions addressed at (layer, flat channel)
            for (l_idx, ch), node in self.overrides.items():
                if l_idx == idx:
                    if not 0 <= ch < len(entries):
                        raise ShapeError(
                            f"override channel {ch} out of range at layer {idx}"
                        )
                    entries[ch] = node
            self.layer_outputs.append(list(entries))
            shape = model.shapes[idx]
        return SwtGraph(
            model=model,
            store=store,
            roots=tuple(entries),
            gate_sites=self.sites,
            layer_outputs=self.layer_outputs,
            input_nodes=self.input_nodes,
            counts=self.counts,
        )


def compile_model(
    model: NetworkModel,
    store: ExprStore | None = None,
    input_map: tuple[np.ndarray, np.ndarray] | None = None,
    overrides: dict[tuple[int, int], int] | None = None,
) -> SwtGraph:
    """Compile a model; optional affine input pre-map and unit overrides."""
    # `store or ...` would drop an empty store: len() == 0 makes it falsy
    return _Compiler(
        model, ExprStore() if store is None else store, input_map, overrides
    ).run()


def sign_split_plane(
    w: np.ndarray, b: float
) -> tuple[np.ndarray, float]:
    """Oriented halfspace for the ACTIVE branch of a gate with input w.x + b.

    Returns (a, d) meaning a.x <= d with a = -w, d = b, which holds exactly
    where w.x + b >= 0.  The reverse orientation (w, -b) is the inactive
    branch {w.x + b <= 0}.
    """
    return -np.asarray(w, dtype=float), float(b)


def structural_counts(graph: SwtGraph) -> dict[str, int]:
    """Raw counters plus the size-bound formulas they imply."""
    c = graph.counts
    out = dict(c)
    out["planes_bound"] = c["N_gate2"] + c["Gamma_max"]
    out["oriented_bound"] = 2 * c["N_gate2"] + 2 * c["Gamma_max"]
    out["states_bound"] = (
        1 + c["N_aff"] + c["T_conv"] + c["T_gnn"] + c["V_max"] + c["N_gate2"]
    )
    out["edges_bound"] = (
        c["N_aff"]
        + c["T_conv"]
        + c["T_gnn"]
        + c["residual_fanins"]
        + 2 * c["N_gate2"]
        + c["K_max"]
    )
    return out
