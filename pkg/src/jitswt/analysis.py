"""Geometry over refined graphs: regions, Jacobians, extrema, Lipschitz.

Everything here reads a compiled graph through a JitEngine; full refinement
is attempted under the caller's budget and results degrade to sound brackets
or partial tables when it trips.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .compiler import SwtGraph, layer_linear_map
from .engine import Budget, JitEngine, Leaf
from .errors import Unsupported, UnsupportedNormPair
from .exprs import _resolve, eval_many, try_collapse_affine
from .guards import GuardLibrary
from .model import conv2d_output_hw
from .oracle import InputDomain, min_norm_in_hull

INTERIOR_TOL = 1e-7  # gate values closer than this to a hinge count as boundary
PROBE_DELTA = 1e-6


# -- region tables -------------------------------------------------------------


@dataclass
class AffineFragment:
    """F(x) = J x + b on the closed cell C(guards) ∩ domain."""

    guards: tuple[int, ...]
    jacobian: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.jacobian @ np.asarray(x, dtype=float) + self.bias


@dataclass
class RegionTable:
    fragments: list[AffineFragment]
    coverage: str  # "complete" | "partial"
    domain: InputDomain
    library: GuardLibrary

    def lookup(self, x: np.ndarray) -> AffineFragment | None:
        for frag in self.fragments:
            if all(self.library.get(g).holds(x) for g in frag.guards):
                return frag
        return None

    def to_json(self) -> str:
        return json.dumps(
            {
                "coverage": self.coverage,
                "fragments": [
                    {
                        "id": i,
                        "guards": list(f.guards),
                        "w": f.jacobian.tolist(),
                        "b": f.bias.tolist(),
                    }
                    for i, f in enumerate(self.fragments)
                ],
            }
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["id", "guards", "w", "b"])
        for i, f in enumerate(self.fragments):
            writer.writerow(
                [
                    i,
                    " ".join(map(str, f.guards)),
                    " ".join(map(str, f.jacobian.reshape(-1))),
                    " ".join(map(str, f.bias)),
                ]
            )
        return buf.getvalue()


def _leaf_fragment(engine: JitEngine, leaf: Leaf) -> AffineFragment:
    rows, offs = [], []
    for root in engine.graph.roots:
        w, b = engine.leaf_law(leaf, root)
        rows.append(w)
        offs.append(b)
    return AffineFragment(leaf.guards.ids, np.asarray(rows), np.asarray(offs))


def extract_regions(
    graph: SwtGraph,
    domain: InputDomain,
    budget: Budget | None = None,
    engine: JitEngine | None = None,
) -> RegionTable:
    """Enumerate the active affine fragments of the graph over the domain."""
    engine = engine or JitEngine(graph, domain)
    res = engine.refine_all(graph.roots, budget)
    fragments = [_leaf_fragment(engine, leaf) for leaf in res.refined]
    coverage = "complete" if res.complete else "partial"
    return RegionTable(fragments, coverage, domain, engine.library)


# -- pointwise jacobians ----------------------------------------------------------


@dataclass
class JacobianResult:
    kind: str  # "interior" | "boundary"
    jacobian: np.ndarray
    contributors: list[np.ndarray] = field(default_factory=list)


def _pointwise_decisions(graph: SwtGraph, x: np.ndarray):
    """Per-site choices at x plus the hinges within INTERIOR_TOL of x."""
    store = graph.store
    decisions: dict[int, int] = {}
    ties: list[np.ndarray] = []
    for site in graph.gate_sites:
        if site.is_two_way:
            z = float(eval_many(store, [site.z], x)[0])
            decisions[site.decision_node] = (
                site.choice_pos if z >= 0 else site.choice_neg
            )
            if abs(z) <= INTERIOR_TOL:
                wb = try_collapse_affine(store, site.z, decisions)
                if wb is not None and np.linalg.norm(wb[0]) > 0:
                    ties.append(wb[0] / np.linalg.norm(wb[0]))
        else:
            vals = eval_many(store, list(site.candidates), x)
            order = np.argsort(vals)[::-1]
            best, second = order[0], order[1]
            decisions[site.decision_node] = site.candidates[best]
            if vals[best] - vals[second] <= INTERIOR_TOL:
                wb_b = try_collapse_affine(
                    store, site.candidates[best], decisions
                )
                wb_s = try_collapse_affine(
                    store, site.candidates[second], decisions
                )
                if wb_b is not None and wb_s is not None:
                    d = wb_b[0] - wb_s[0]
                    n = np.linalg.norm(d)
                    if n > 0:
                        ties.append(d / n)
    return decisions, ties


def _jacobian_from_decisions(graph: SwtGraph, decisions) -> np.ndarray:
    rows = []
    memo: dict = {}
    for root in graph.roots:
        wb = try_collapse_affine(graph.store, root, decisions, memo)
        if wb is None:
            raise Unsupported("graph did not collapse under pointwise decisions")
        rows.append(wb[0])
    return np.asarray(rows)


def jacobian_at(
    graph: SwtGraph, x: np.ndarray, delta: float = PROBE_DELTA
) -> JacobianResult:
    """Exact Jacobian at interior points; min-norm hull element on hinges."""
    x = np.asarray(x, dtype=float)
    decisions, ties = _pointwise_decisions(graph, x)
    if not ties:
        return JacobianResult("interior", _jacobian_from_decisions(graph, decisions))
    probes = [x]
    for u in ties:
        probes.append(x + delta * u)
        probes.append(x - delta * u)
    grads: list[np.ndarray] = []
    seen = set()
    for p in probes:
        dec, _ = _pointwise_decisions(graph, p)
        j = _jacobian_from_decisions(graph, dec)
        key = tuple(np.round(j.reshape(-1), 9))
        if key not in seen:
            seen.add(key)
            grads.append(j)
    flat = np.asarray([g.reshape(-1) for g in grads])
    rep, _ = min_norm_in_hull(flat)
    return JacobianResult(
        "boundary", rep.reshape(grads[0].shape), contributors=grads
    )


# -- extrema --------------------------------------------------------------------


@dataclass
class ExtremumOutcome:
    kind: str  # "exact" | "bracket"
    value: float | None = None
    point: np.ndarray | None = None
    lb: float | None = None
    ub: float | None = None
    counters: dict[str, int] = field(default_factory=dict)


def extremum(
    graph: SwtGraph,
    output_index: int,
    domain: InputDomain,
    sense: str = "max",
    budget: Budget | None = None,
    engine: JitEngine | None = None,
    objective: int | None = None,
) -> ExtremumOutcome:
    """Best-upper-bound search for max (or min) of one output over the domain."""
    if sense not in ("max", "min"):
        raise ValueError("sense must be 'max' or 'min'")
    engine = engine or JitEngine(graph, domain)
    store = graph.store
    root = graph.roots[output_index] if objective is None else objective
    obj = root if sense == "max" else store.neg(root)
    budget = budget or Budget()

    best_val = -np.inf
    best_pt: np.ndarray | None = None
    queue: list[Leaf] = list(engine.active_leaves())

    def finish(exact: bool) -> ExtremumOutcome:
        sign = 1.0 if sense == "max" else -1.0
        if exact:
            return ExtremumOutcome(
                "exact", value=sign * best_val, point=best_pt,
                counters=engine.counters.snapshot(),
            )
        lbs = [best_val]
        ubs = [best_val]
        for l in queue:
            if l.status == "retired":
                continue
            itv = engine.leaf_envelope(l, obj)
            lbs.append(itv.lb)
            ubs.append(itv.ub)
        lo, hi = max(lbs), max(ubs)
        if sense == "min":
            lo, hi = -hi, -lo
        return ExtremumOutcome(
            "bracket", lb=lo, ub=hi, point=best_pt,
            counters=engine.counters.snapshot(),
        )

    while queue:
        queue = [l for l in queue if l.status != "retired"]
        if not queue:
            break
        queue.sort(
            key=lambda l: (-engine.leaf_envelope(l, obj).ub, l.created)
        )
        leaf = queue.pop(0)
        itv = engine.leaf_envelope(leaf, obj)
        if itv.ub <= best_val:
            continue  # cannot beat the incumbent
        sites = engine.pending_sites(leaf, [obj])
        if not sites:
            w, b = engine.leaf_law(leaf, obj)
            res = engine.oracle.affine_extremum(
                w, b, leaf.guards, engine.domain, "max"
            )
            if res.value > best_val:
                best_val = res.value
                best_pt = res.x
            continue
        if not budget.lp_ok(engine.counters):
            queue.append(leaf)
            return finish(False)
        site = sites[0]
        if site.is_two_way:
            outcome = engine.ensure_sign(site, leaf, budget)
        else:
            outcome = engine.ensure_winner(site, leaf, budget)
        if outcome[0] == "budget":
            queue.append(leaf)
            return finish(False)
        if outcome[0] == "split":
            queue.extend(outcome[1])
        else:
            queue.append(leaf)
    return finish(True)


# -- operator norms ---------------------------------------------------------------


def _norm_order(v) -> float:
    if v in (1, 2):
        return float(v)
    if v in (np.inf, "inf", "Inf", float("inf")):
        return np.inf
    if isinstance(v, str) and v in ("1", "2"):
        return float(v)
    raise ValueError(f"unsupported norm order {v!r}")


def sigma_max(j: np.ndarray, iters: int = 200, tol: float = 1e-12) -> float:
    """Largest singular value by power iteration with two restarts."""
    j = np.asarray(j, dtype=float)
    if j.size == 0:
        return 0.0
    rng = np.random.default_rng(0)
    best = 0.0
    for _ in range(2):
        v = rng.normal(size=j.shape[1])
        v /= np.linalg.norm(v)
        prev = 0.0
        for _ in range(iters):
            w = j.T @ (j @ v)
            n = float(np.linalg.norm(w))
            if n == 0.0:
                break
            v = w / n
            cur = float(np.linalg.norm(j @ v))
            if prev > 0 and abs(cur - prev) <= tol * prev:
                prev = cur
                break
            prev = cur
        best = max(best, prev)
    return best


TRACTABLE_PAIRS = {(1, 1), (np.inf, np.inf), (1, np.inf), (2, 2), (2, np.inf), (1, 2)}
HARD_PAIRS = {(np.inf, 1), (np.inf, 2), (2, 1)}


def operator_norm(j: np.ndarray, p, r) -> float:
    """||J||_{p->r} for the closed-form family."""
    p, r = _norm_order(p), _norm_order(r)
    j = np.asarray(j, dtype=float)
    if (p, r) == (1, 1):
        return float(np.max(np.sum(np.abs(j), axis=0), initial=0.0))
    if (p, r) == (np.inf, np.inf):
        return float(np.max(np.sum(np.abs(j), axis=1), initial=0.0))
    if (p, r) == (1, np.inf):
        return float(np.max(np.abs(j), initial=0.0))
    if (p, r) == (2, 2):
        return sigma_max(j)
    if (p, r) == (2, np.inf):
        return float(np.max(np.linalg.norm(j, axis=1), initial=0.0))
    if (p, r) == (1, 2):
        return float(np.max(np.linalg.norm(j, axis=0), initial=0.0))
    raise UnsupportedNormPair(f"||J||_{{{p}->{r}}} has no tractable closed form")


def _sign_vectors(n: int, limit: int = 12, samples: int = 512) -> np.ndarray:
    if n <= limit:
        out = np.array(
            [[1.0 if (i >> k) & 1 else -1.0 for k in range(n)] for i in range(2**n)]
        )
        return out
    rng = np.random.default_rng(7)
    return np.sign(rng.normal(size=(samples, n))) + 0.0


def hard_norm_bracket(j: np.ndarray, p, r) -> tuple[float, float]:
    """Sign-vector lower and containment upper bounds for the hard pairs."""
    p, r = _norm_order(p), _norm_order(r)
    j = np.asarray(j, dtype=float)
    if (p, r) == (np.inf, 1):
        s = _sign_vectors(j.shape[1])
        lo = float(np.max(np.sum(np.abs(j @ s.T), axis=0), initial=0.0))
        hi = float(np.sum(np.abs(j)))
        return lo, hi
    if (p, r) == (np.inf, 2):
        s = _sign_vectors(j.shape[1])
        lo = float(np.max(np.linalg.norm(j @ s.T, axis=0), initial=0.0))
        hi = float(np.linalg.norm(np.sum(np.abs(j), axis=1)))
        return lo, hi
    if (p, r) == (2, 1):
        s = _sign_vectors(j.shape[0])
        lo = float(np.max(np.linalg.norm(s @ j, axis=1), initial=0.0))
        hi = float(np.sum(np.linalg.norm(j, axis=1)))
        return lo, hi
    raise UnsupportedNormPair(f"{p}->{r} is not in the hard family")


# -- lipschitz ----------------------------------------------------------------------


@dataclass
class LipschitzResult:
    kind: str  # "exact" | "bracket"
    value: float | None = None
    lb: float | None = None
    ub: float | None = None
    fragments: int = 0


def _fragment_norm(j: np.ndarray, p: float, r: float | None) -> float:
    if j.shape[0] == 1:
        dual = {1: np.inf, 2: 2, np.inf: 1}[p]
        w = j[0]
        if dual == 1:
            return float(np.sum(np.abs(w)))
        if dual == 2:
            return float(np.linalg.norm(w))
        return float(np.max(np.abs(w), initial=0.0))
    return operator_norm(j, p, r)


def _site_alpha(site, model) -> float:
    layer = model.layers[site.layer]
    if site.kind == "leaky_relu":
        return float(layer.params["alpha"])
    per = np.atleast_1d(layer.params["alpha"])
    shp = model.shapes[site.layer - 1] if site.layer else model.input_shape
    if len(shp) == 3:
        per = np.repeat(per, shp[1] * shp[2])
    return float(per[site.unit])


def _gate_slope_interval(site, engine, leaf) -> tuple[float, float]:
    node, undecided = engine.site_state(leaf, site)
    if site.kind == "relu":
        neg_slope, lo, hi = 0.0, 0.0, 1.0
    elif site.kind == "abs":
        neg_slope, lo, hi = -1.0, -1.0, 1.0
    else:
        alpha = _site_alpha(site, engine.graph.model)
        neg_slope, lo, hi = alpha, min(alpha, 1.0), max(alpha, 1.0)
    if undecided:
        return lo, hi
    if node == _resolve(site.choice_pos, leaf.decisions):
        return 1.0, 1.0
    return neg_slope, neg_slope


def _interval_matmul(
    a: np.ndarray, lo: np.ndarray, hi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    ap, am = np.maximum(a, 0.0), np.minimum(a, 0.0)
    return ap @ lo + am @ hi, ap @ hi + am @ lo


def _leaf_jacobian_interval(
    engine: JitEngine, leaf: Leaf
) -> tuple[np.ndarray, np.ndarray]:
    """Sound entrywise interval for the Jacobian of any point of the leaf."""
    model = engine.graph.model
    n = model.input_dim
    lo = np.eye(n)
    hi = np.eye(n)
    saved: list[tuple[np.ndarray, np.ndarray]] = []
    sites_at = {}
    for s in engine.graph.gate_sites:
        sites_at.setdefault(s.layer, {})[s.unit] = s
    for idx, layer in enumerate(model.layers):
        kind = layer.kind
        if kind in ("dense", "batchnorm_inference", "avgpool2d", "conv2d", "gcn"):
            m, _ = layer_linear_map(model, idx)
            lo, hi = _interval_matmul(m, lo, hi)
        elif kind in ("relu", "leaky_relu", "prelu", "abs"):
            new_lo, new_hi = lo.copy(), hi.copy()
            for u in range(lo.shape[0]):
                a, b = _gate_slope_interval(sites_at[idx][u], engine, leaf)
                cands = [a * lo[u], a * hi[u], b * lo[u], b * hi[u]]
                new_lo[u] = np.min(cands, axis=0)
                new_hi[u] = np.max(cands, axis=0)
            lo, hi = new_lo, new_hi
        elif kind in ("max_pointwise", "maxpool2d"):
            rows_lo, rows_hi = [], []
            for s in sorted(sites_at[idx].values(), key=lambda s: s.unit):
                src = _entry_rows_for_site(model, idx, s)
                node, undecided = engine.site_state(leaf, s)
                pick = None
                if not undecided:
                    for c_pos, cand in enumerate(s.candidates):
                        if _resolve(cand, leaf.decisions) == node:
                            pick = c_pos
                            break
                if pick is not None and len(s.candidates) == len(src):
                    rows_lo.append(lo[src[pick]])
                    rows_hi.append(hi[src[pick]])
                else:
                    rows_lo.append(np.min([lo[i] for i in src], axis=0))
                    rows_hi.append(np.max([hi[i] for i in src], axis=0))
            lo, hi = np.asarray(rows_lo), np.asarray(rows_hi)
        elif kind == "residual_add":
            src = layer.params["source"]
            other_lo, other_hi = (
                (np.eye(n), np.eye(n)) if src == -1 else saved[src]
            )
            lo, hi = lo + other_lo, hi + other_hi
        saved.append((lo, hi))
    return lo, hi


def _entry_rows_for_site(model, idx, site) -> list[int]:
    """Flat input-entry indices feeding one pooling/max site."""
    layer = model.layers[idx]
    in_shape = model.shapes[idx - 1] if idx else model.input_shape
    if layer.kind == "max_pointwise":
        k = layer.params["arity"]
        return list(range(site.unit * k, (site.unit + 1) * k))
    c, h, w_in = in_shape
    kh, kw = layer.params["k"]
    sh, sw = layer.params["stride"]
    ho, wo = conv2d_output_hw(h, w_in, kh, kw, sh, sw, 0, 0)
    ch = site.unit // (ho * wo)
    rem = site.unit % (ho * wo)
    i, j = rem // wo, rem % wo
    return [
        (ch * h + i * sh + u) * w_in + j * sw + v
        for u in range(kh)
        for v in range(kw)
    ]


def lipschitz(
    graph: SwtGraph,
    domain: InputDomain,
    p=2,
    r=None,
    budget: Budget | None = None,
    mode: str = "exact",
    engine: JitEngine | None = None,
) -> LipschitzResult:
    """Lipschitz constant of the graph on the domain w.r.t. ||.||_p (to ||.||_r)."""
    p_ = _norm_order(p)
    r_ = _norm_order(r) if r is not None else None
    m = len(graph.roots)
    pair_hard = m > 1 and (p_, r_) in HARD_PAIRS
    if pair_hard and mode == "exact":
        raise UnsupportedNormPair(
            f"{p}->{r} requires exponential search; use mode='anytime'"
        )
    if m > 1 and r_ is None:
        raise ValueError("vector outputs need an output norm r")
    engine = engine or JitEngine(graph, domain)
    res = engine.refine_all(graph.roots, budget)
    lows, highs = [0.0], [0.0]
    for leaf in res.refined:
        frag = _leaf_fragment(engine, leaf)
        if pair_hard:
            lo, hi = hard_norm_bracket(frag.jacobian, p_, r_)
        else:
            lo = hi = _fragment_norm(frag.jacobian, p_, r_)
        lows.append(lo)
        highs.append(hi)
    for leaf in res.pending:
        jlo, jhi = _leaf_jacobian_interval(engine, leaf)
        mag = np.maximum(np.abs(jlo), np.abs(jhi))
        if pair_hard:
            _, hi = hard_norm_bracket(mag, p_, r_)
        else:
            hi = _fragment_norm(mag, p_, r_)
        highs.append(hi)
    value_lo, value_hi = max(lows), max(highs)
    if res.complete and not pair_hard:
        return LipschitzResult(
            "exact", value=value_lo, fragments=len(res.refined)
        )
    return LipschitzResult(
        "bracket", lb=value_lo, ub=value_hi, fragments=len(res.refined)
    )


# -- decision boundaries ---------------------------------------------------------


@dataclass
class BoundaryPiece:
    guards: tuple[int, ...]
    w: np.ndarray
    b: float
    vertices: np.ndarray | None = None  # (2, n) segment endpoints in 2-D

    def distance(self, x: np.ndarray) -> float:
        return float(
            abs(np.dot(self.w, x) + self.b) / np.linalg.norm(self.w)
        )


def _clip_segment_2d(
    w: np.ndarray, b: float, a_rows: np.ndarray, c_offs: np.ndarray
) -> np.ndarray | None:
    """Endpoints of {w.x + b = 0} ∩ {A x <= c} in the plane, or None."""
    nw = float(np.dot(w, w))
    p0 = -b * w / nw
    d = np.array([-w[1], w[0]]) / np.sqrt(nw)
    t_lo, t_hi = -np.inf, np.inf
    for row, off in zip(a_rows, c_offs):
        denom = float(np.dot(row, d))
        rhs = float(off - np.dot(row, p0))
        if abs(denom) <= 1e-14:
            if rhs < -1e-9:
                return None  # line entirely outside this halfspace
            continue
        t = rhs / denom
        if denom > 0:
            t_hi = min(t_hi, t)
        else:
            t_lo = max(t_lo, t)
    if not np.isfinite(t_lo) or not np.isfinite(t_hi) or t_lo > t_hi + 1e-12:
        return None
    return np.vstack([p0 + t_lo * d, p0 + t_hi * d])


def decision_boundary(
    graph: SwtGraph,
    i: int,
    j: int,
    domain: InputDomain,
    budget: Budget | None = None,
    engine: JitEngine | None = None,
) -> list[BoundaryPiece]:
    """Cell-clipped pieces of {F_i = F_j} across the refined cover."""
    if i == j:
        raise ValueError("need two distinct output indices")
    engine = engine or JitEngine(graph, domain)
    roots = [graph.roots[i], graph.roots[j]]
    res = engine.refine_all(roots, budget)
    pieces: list[BoundaryPiece] = []
    for leaf in res.refined:
        wi, bi = engine.leaf_law(leaf, roots[0])
        wj, bj = engine.leaf_law(leaf, roots[1])
        w, b = wi - wj, bi - bj
        if np.linalg.norm(w) <= 1e-14:
            continue  # constant difference never crosses inside a cell
        lo_res = engine.oracle.affine_extremum(
            w, b, leaf.guards, engine.domain, "min"
        )
        hi_res = engine.oracle.affine_extremum(
            w, b, leaf.guards, engine.domain, "max"
        )
        if lo_res.value > 1e-12 or hi_res.value < -1e-12:
            continue  # no zero crossing on this cell
        vertices = None
        if graph.input_dim == 2:
            g_rows, g_offs = engine.library.halfspace_rows(leaf.guards)
            d_rows, d_offs = engine.domain.rows()
            if g_rows.size:
                a_rows = np.vstack([g_rows, d_rows])
                c_offs = np.concatenate([g_offs, d_offs])
            else:
                a_rows, c_offs = d_rows, d_offs
            vertices = _clip_segment_2d(w, b, a_rows, c_offs)
            if vertices is None:
                continue
        pieces.append(BoundaryPiece(leaf.guards.ids, w, float(b), vertices))
    return pieces
