"""Property checks over compiled graphs.

Atoms lower to scalar objectives g with "holds iff min g >= 0"; conjunctions
take pointwise minima. Robustness, equivalence, equivariance, and causal
influence all reduce to sign-of-minimum or maximization runs on a shared
expression store, so one engine refines every participating network at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import ceil, prod

import numpy as np

from .analysis import ExtremumOutcome, extremum
from .bnb import Certificate, run as bnb_run
from .compiler import GateSite, SwtGraph, compile_model
from .engine import Budget, JitEngine
from .errors import (
    ArityMismatch,
    GeometryError,
    SchemaError,
    SubstitutionError,
    WrongLabel,
)
from .exprs import ExprStore
from .model import NetworkModel, load_model, model_to_dict
from .oracle import Box, InputDomain, L1Ball, L2Ball, LinfBall, Polytope

ATOM_TYPES = {
    "lower_threshold",
    "upper_threshold",
    "margin",
    "relational",
    "linear_output",
}


@dataclass
class PropertySpec:
    domain: InputDomain
    atoms: list[dict]

    def validate(self, graph: SwtGraph) -> None:
        m = graph.output_dim
        for atom in self.atoms:
            t = atom.get("type")
            if t not in ATOM_TYPES:
                raise SchemaError(f"unknown atom type {t!r}")
            a = atom.get("args", {})
            if t in ("lower_threshold", "upper_threshold"):
                if not 0 <= int(a["index"]) < m:
                    raise IndexError(f"output index {a['index']} out of range")
            elif t == "margin":
                if not 0 <= int(a["label"]) < m:
                    raise IndexError(f"label {a['label']} out of range")
            elif t == "linear_output":
                if len(a["a"]) != m:
                    raise IndexError("linear_output coefficient length mismatch")


@dataclass
class Intervention:
    layer: int
    channel: int
    policy: str  # "zero" | "affine"
    w: np.ndarray | None = None
    b: float = 0.0


def domain_from_dict(d: dict) -> InputDomain:
    kind = d["kind"]
    p = d.get("params", {})
    if kind == "box":
        return Box(tuple(p["lower"]), tuple(p["upper"]))
    if kind == "linf_ball":
        return LinfBall(tuple(p["center"]), float(p["radius"]))
    if kind == "l1_ball":
        return L1Ball(tuple(p["center"]), float(p["radius"]))
    if kind == "l2_ball":
        return L2Ball(tuple(p["center"]), float(p["radius"]))
    if kind == "polytope":
        return Polytope(np.asarray(p["a"], float), np.asarray(p["b"], float))
    raise SchemaError(f"unknown domain kind {kind!r}")


def parse_property_spec(text_or_dict) -> PropertySpec:
    d = json.loads(text_or_dict) if isinstance(text_or_dict, str) else text_or_dict
    return PropertySpec(domain_from_dict(d["domain"]), list(d["atoms"]))


def parse_intervention(text_or_dict) -> Intervention:
    d = json.loads(text_or_dict) if isinstance(text_or_dict, str) else text_or_dict
    tgt, pol = d["target"], d["policy"]
    kind = pol["kind"]
    if kind not in ("zero", "affine"):
        raise SchemaError(f"unknown intervention policy {kind!r}")
    w = np.asarray(pol["W"], dtype=float) if kind == "affine" else None
    b = float(pol.get("b", 0.0)) if kind == "affine" else 0.0
    return Intervention(int(tgt["layer"]), int(tgt["channel"]), kind, w, b)


# -- graph plumbing ---------------------------------------------------------------


def _merge_counts(graphs) -> dict[str, int]:
    out: dict[str, int] = {}
    for g in graphs:
        for k, v in g.counts.items():
            if k.endswith("_max") or k.startswith(("K_", "Gamma_", "V_")):
                out[k] = max(out.get(k, 0), v)
            else:
                out[k] = out.get(k, 0) + v
    return out


class SpecArithmetic:
    """Expression building for property objectives.

    Max nodes created here sit outside any compiled network, so they are
    recorded as synthetic k-way sites the engine can refine like pooling.
    """

    def __init__(self, store: ExprStore) -> None:
        self.store = store
        self.sites: list[GateSite] = []

    def max_(self, cands) -> int:
        uniq = tuple(sorted(set(cands)))
        out = self.store.max_(uniq)
        if len(uniq) > 1:
            self.sites.append(
                GateSite(
                    index=-1,
                    kind="max",
                    layer=-1,
                    unit=len(self.sites),
                    out=out,
                    decision_node=out,
                    candidates=uniq,
                )
            )
        return out

    def abs_max(self, diffs, eps: float) -> int:
        """eps - max_r |diffs_r|."""
        store = self.store
        cands = []
        for d in diffs:
            cands.append(d)
            cands.append(store.neg(d))
        return store.bias(eps, store.neg(self.max_(cands)))


def merge_graphs(
    base: SwtGraph, *others: SwtGraph, roots=None, extra_sites=None
) -> SwtGraph:
    """One refinable graph spanning several compilations of one store."""
    sites: list[GateSite] = []
    seen: set[int] = set()
    for g in (base, *others):
        if g.store is not base.store:
            raise SchemaError("graphs must share one expression store")
        for s in g.gate_sites:
            if s.decision_node not in seen:
                seen.add(s.decision_node)
                sites.append(s)
    for s in extra_sites or []:
        if s.decision_node not in seen:
            seen.add(s.decision_node)
            sites.append(s)
    return SwtGraph(
        base.model,
        base.store,
        tuple(roots if roots is not None else base.roots),
        sites,
        base.layer_outputs,
        base.input_nodes,
        _merge_counts([base, *others]),
    )


def linear_combination(store: ExprStore, roots, row, const: float = 0.0) -> int:
    """Node for sum_k row[k] * roots[k] + const."""
    terms = []
    for coef, node in zip(row, roots):
        c = float(coef)
        if c == 0.0:
            continue
        terms.append(node if c == 1.0 else store.scale(c, node))
    if not terms:
        dim = store.dim(roots[0])
        return store.affine(np.zeros(dim), const)
    node = terms[0] if len(terms) == 1 else store.sum_(terms)
    return store.bias(const, node) if const != 0.0 else node


def _difference_nodes(store: ExprStore, roots_a, roots_b) -> list[int]:
    """a_r - b_r nodes; identical ids cancel to literal zeros (hash-consing
    makes structurally equal subnetworks share one id)."""
    out = []
    for a, b in zip(roots_a, roots_b):
        if a == b:
            out.append(store.affine(np.zeros(store.dim(a)), 0.0))
        else:
            out.append(store.sum_([a, store.neg(b)]))
    return out


# -- objectives and generic verification --------------------------------------------


def compile_objective(spec: PropertySpec, graph: SwtGraph) -> tuple[SwtGraph, int]:
    """Lower atoms to one scalar node; holds iff its minimum is >= 0."""
    spec.validate(graph)
    store = graph.store
    arith = SpecArithmetic(store)
    extra_graphs: list[SwtGraph] = []
    gs: list[int] = []
    for atom in spec.atoms:
        t, a = atom["type"], atom.get("args", {})
        if t == "lower_threshold":
            gs.append(store.bias(-float(a["value"]), graph.roots[int(a["index"])]))
        elif t == "upper_threshold":
            gs.append(
                store.bias(float(a["value"]), store.neg(graph.roots[int(a["index"])]))
            )
        elif t == "margin":
            y = int(a["label"])
            gamma = float(a.get("gamma", 0.0))
            others = [r for i, r in enumerate(graph.roots) if i != y]
            if not others:
                raise IndexError("margin needs at least two outputs")
            node = store.sum_([graph.roots[y], store.neg(arith.max_(others))])
            gs.append(store.bias(-gamma, node) if gamma else node)
        elif t == "linear_output":
            gs.append(
                linear_combination(
                    store, graph.roots, a["a"], float(a.get("b", 0.0))
                )
            )
        elif t == "relational":
            other = load_model(json.dumps(a["model"]))
            if prod(other.shapes[-1]) != graph.output_dim:
                raise ArityMismatch("relational model output arity differs")
            gb = compile_model(other, store)
            extra_graphs.append(gb)
            diffs = _difference_nodes(store, graph.roots, gb.roots)
            gs.append(arith.abs_max(diffs, float(a["eps"])))
    if not gs:
        raise SchemaError("property needs at least one atom")
    obj = gs[0] if len(gs) == 1 else store.neg(arith.max_([store.neg(g) for g in gs]))
    merged = merge_graphs(graph, *extra_graphs, extra_sites=arith.sites)
    return merged, obj


def verify(
    graph: SwtGraph, spec: PropertySpec, budget: Budget | None = None
) -> Certificate:
    merged, obj = compile_objective(spec, graph)
    engine = JitEngine(merged, spec.domain)
    return bnb_run(engine, obj, budget)


# -- robustness -----------------------------------------------------------------


def certify_robustness(
    model: NetworkModel,
    x0,
    label: int,
    epsilon: float,
    p=np.inf,
    gamma: float = 0.0,
    budget: Budget | None = None,
) -> Certificate:
    """Sign of the margin minimum over the ell_p ball around x0."""
    x0 = np.asarray(x0, dtype=float)
    scores = model.forward(x0)
    if int(np.argmax(scores)) != label:
        raise WrongLabel(
            f"model predicts {int(np.argmax(scores))} at x0, not {label}"
        )
    if p in (np.inf, "inf", float("inf")):
        domain: InputDomain = LinfBall(tuple(x0), float(epsilon))
    elif p in (1, "1"):
        domain = L1Ball(tuple(x0), float(epsilon))
    elif p in (2, "2"):
        domain = L2Ball(tuple(x0), float(epsilon))
    else:
        raise ValueError("p must be one of 1, 2, inf")
    graph = compile_model(model)
    spec = PropertySpec(
        domain, [{"type": "margin", "args": {"label": label, "gamma": gamma}}]
    )
    return verify(graph, spec, budget)


# -- equivalence ----------------------------------------------------------------


def check_equivalence(
    model_a: NetworkModel,
    model_b: NetworkModel,
    domain: InputDomain,
    epsilon: float,
    budget: Budget | None = None,
) -> Certificate:
    """Proof iff max_x max_r |A_r(x) - B_r(x)| <= epsilon on the domain."""
    if model_a.input_dim != model_b.input_dim:
        raise ArityMismatch("input arities differ")
    if prod(model_a.shapes[-1]) != prod(model_b.shapes[-1]):
        raise ArityMismatch("output arities differ")
    store = ExprStore()
    ga = compile_model(model_a, store)
    gb = compile_model(model_b, store)
    arith = SpecArithmetic(store)
    diffs = _difference_nodes(store, ga.roots, gb.roots)
    obj = arith.abs_max(diffs, float(epsilon))
    engine = JitEngine(merge_graphs(ga, gb, extra_sites=arith.sites), domain)
    return bnb_run(engine, obj, budget)


# -- equivariance -----------------------------------------------------------------


def check_equivariance(
    model: NetworkModel,
    t_in: np.ndarray,
    t_out: np.ndarray,
    domain: InputDomain,
    epsilon: float,
    budget: Budget | None = None,
    transformed_model: NetworkModel | None = None,
    left_select: np.ndarray | None = None,
) -> Certificate:
    """Proof iff ||A F'(T x) - (A T') F(x)||_inf <= eps on the domain.

    F' defaults to F; A defaults to identity. T acts on inputs, T' on
    outputs; both must be linear.
    """
    t_in = np.asarray(t_in, dtype=float)
    t_out = np.asarray(t_out, dtype=float)
    n = model.input_dim
    if t_in.shape != (n, n):
        raise ArityMismatch(f"input transform wants shape {(n, n)}")
    store = ExprStore()
    g_plain = compile_model(model, store)
    g_shift = compile_model(
        transformed_model or model, store, input_map=(t_in, np.zeros(n))
    )
    m = g_plain.output_dim
    if t_out.shape[1] != m or t_out.shape[0] != g_shift.output_dim:
        raise ArityMismatch("output transform shape mismatch")
    a_sel = (
        np.eye(t_out.shape[0]) if left_select is None else np.asarray(left_select)
    )
    lhs = [
        linear_combination(store, g_shift.roots, row) for row in a_sel
    ]
    rhs_mat = a_sel @ t_out
    rhs = [linear_combination(store, g_plain.roots, row) for row in rhs_mat]
    arith = SpecArithmetic(store)
    diffs = _difference_nodes(store, lhs, rhs)
    obj = arith.abs_max(diffs, float(epsilon))
    engine = JitEngine(
        merge_graphs(g_plain, g_shift, extra_sites=arith.sites), domain
    )
    return bnb_run(engine, obj, budget)


SPATIAL_KINDS = {
    "conv2d",
    "maxpool2d",
    "avgpool2d",
    "relu",
    "leaky_relu",
    "prelu",
    "abs",
    "batchnorm_inference",
}


def shift_matrix(shape, sy: int, sx: int) -> np.ndarray:
    """Zero-fill translation of a flattened (c, h, w) grid."""
    c, h, w = shape
    n = c * h * w
    t = np.zeros((n, n))
    for ch in range(c):
        for i in range(h):
            si = i - sy
            if not 0 <= si < h:
                continue
            for j in range(w):
                sj = j - sx
                if 0 <= sj < w:
                    t[(ch * h + i) * w + j, (ch * h + si) * w + sj] = 1.0
    return t


def shift_geometry(model: NetworkModel, shift) -> dict:
    """Total stride and border margin for a purely spatial network."""
    sy, sx = (0, shift) if isinstance(shift, int) else tuple(shift)
    if len(model.input_shape) != 3 or len(model.shapes[-1]) != 3:
        raise GeometryError("shift equivariance needs image-shaped input and output")
    st_y = st_x = 1
    m_y, m_x = abs(sy), abs(sx)
    for layer in model.layers:
        kind = layer.kind
        if kind not in SPATIAL_KINDS:
            raise GeometryError(f"layer kind {kind!r} breaks spatial structure")
        if kind == "conv2d":
            kh, kw = layer.params["kernel"].shape[2:]
            ph, pw = layer.params["padding"]
            sh, sw = layer.params["stride"]
        elif kind in ("maxpool2d", "avgpool2d"):
            kh, kw = layer.params["k"]
            ph = pw = 0
            sh, sw = layer.params["stride"]
        else:
            continue
        m_y += max(0, (kh - 1) // 2 - ph)
        m_x += max(0, (kw - 1) // 2 - pw)
        st_y *= sh
        st_x *= sw
    if sy % st_y or sx % st_x:
        raise GeometryError(
            f"shift {(sy, sx)} is not a multiple of the total stride {(st_y, st_x)}"
        )
    return {
        "shift": (sy, sx),
        "stride": (st_y, st_x),
        "out_shift": (sy // st_y, sx // st_x),
        "margin_out": (int(ceil(m_y / st_y)), int(ceil(m_x / st_x))),
    }


def conv_shift_equivariance(
    model: NetworkModel,
    shift,
    domain: InputDomain,
    epsilon: float,
    budget: Budget | None = None,
    crop: bool = True,
) -> Certificate:
    """Translation equivariance of a spatial net, compared away from borders.

    With crop=False the borders participate too, so padding effects surface
    as counterexamples.
    """
    geo = shift_geometry(model, shift)
    sy, sx = geo["shift"]
    oy, ox = geo["out_shift"]
    my, mx = geo["margin_out"]
    t_in = shift_matrix(model.input_shape, sy, sx)
    out_shape = model.shapes[-1]
    t_out = shift_matrix(out_shape, oy, ox)
    sel = None
    if crop:
        c2, h2, w2 = out_shape
        keep = [
            (ch * h2 + i) * w2 + j
            for ch in range(c2)
            for i in range(my, h2 - my)
            for j in range(mx, w2 - mx)
        ]
        if not keep:
            raise GeometryError("crop margin leaves no interior cells to compare")
        sel = np.zeros((len(keep), c2 * h2 * w2))
        for r, idx in enumerate(keep):
            sel[r, idx] = 1.0
    return check_equivariance(
        model, t_in, t_out, domain, epsilon, budget, left_select=sel
    )


def permute_gcn(model: NetworkModel, perm) -> tuple[NetworkModel, np.ndarray, np.ndarray]:
    """Relabel graph nodes: returns (model with P A P^T, P_in, P_out)."""
    perm = np.asarray(perm, dtype=int)
    v = model.input_shape[0]
    if sorted(perm.tolist()) != list(range(v)):
        raise GeometryError("perm must be a permutation of the node indices")
    inv = np.empty(v, dtype=int)
    inv[perm] = np.arange(v)
    d = model_to_dict(model)
    for layer in d["layers"]:
        if layer["kind"] == "gcn":
            adj = layer["adjacency"]
            adj["rows"] = [int(inv[r]) for r in adj["rows"]]
            adj["cols"] = [int(inv[c]) for c in adj["cols"]]
    permuted = load_model(json.dumps(d))

    def node_perm(feats: int) -> np.ndarray:
        p = np.zeros((v * feats, v * feats))
        for i in range(v):
            for c in range(feats):
                p[i * feats + c, perm[i] * feats + c] = 1.0
        return p

    f_in = model.input_shape[1]
    f_out = model.shapes[-1][1]
    return permuted, node_perm(f_in), node_perm(f_out)


def gcn_permutation_equivariance(
    model: NetworkModel,
    perm,
    domain: InputDomain,
    epsilon: float,
    budget: Budget | None = None,
) -> Certificate:
    permuted, p_in, p_out = permute_gcn(model, perm)
    return check_equivariance(
        model, p_in, p_out, domain, epsilon, budget, transformed_model=permuted
    )


# -- causal influence ---------------------------------------------------------------


def _intervention_node(
    store: ExprStore, model: NetworkModel, iv: Intervention
) -> int:
    if not 0 <= iv.layer < len(model.layers):
        raise SubstitutionError(f"no layer {iv.layer}")
    width = prod(model.shapes[iv.layer])
    if not 0 <= iv.channel < width:
        raise SubstitutionError(
            f"channel {iv.channel} out of range for layer {iv.layer} (width {width})"
        )
    n = model.input_dim
    if iv.policy == "zero":
        return store.affine(np.zeros(n), 0.0)
    w = np.asarray(iv.w, dtype=float).reshape(-1)
    if w.size != n:
        raise SubstitutionError(
            f"affine policy wants {n} input coefficients, got {w.size}"
        )
    return store.affine(w, float(iv.b))


def imax(
    model: NetworkModel,
    intervention: Intervention,
    domain: InputDomain,
    budget: Budget | None = None,
) -> ExtremumOutcome:
    """sup over the domain of ||F(x) - F_intervened(x)||_inf."""
    store = ExprStore()
    base = compile_model(model, store)
    node = _intervention_node(store, model, intervention)
    cut = compile_model(
        model, store, overrides={(intervention.layer, intervention.channel): node}
    )
    arith = SpecArithmetic(store)
    diffs = _difference_nodes(store, base.roots, cut.roots)
    cands: list[int] = []
    for dnode in diffs:
        cands.append(dnode)
        cands.append(store.neg(dnode))
    obj = arith.max_(cands)
    merged = merge_graphs(base, cut, extra_sites=arith.sites)
    return extremum(merged, 0, domain, sense="max", budget=budget, objective=obj)


def rank_channels(
    model: NetworkModel,
    layer: int,
    domain: InputDomain,
    budget: Budget | None = None,
) -> list[tuple[int, float]]:
    """Channels of one layer sorted by descending zero-ablation influence."""
    width = prod(model.shapes[layer])
    scored = []
    for ch in range(width):
        out = imax(model, Intervention(layer, ch, "zero"), domain, budget)
        scored.append((ch, out.value if out.kind == "exact" else out.ub))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored
