"""Hash-consed expression DAG over the max-plus function semiring.

Nodes are Affine(w, b), Sum(children), Max(children), Scale(c, child) and
Bias(b, child); Min is expressed as -Max(-...). Sum and Max canonicalize
children into id order (Max also deduplicates, max is idempotent; Sum keeps
multiplicity). Affine atoms intern within a 1e-9 tolerance. Constructing a
node that is equal after canonicalization returns the existing id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._util import quant_key
from .errors import ArityMismatch, ShapeError
from .guards import GuardSet
from .oracle import InputDomain, LinearOracle

AFFINE_INTERN_TOL = 1e-9

AFFINE = "affine"
SUM = "sum"
MAX = "max"
SCALE = "scale"
BIAS = "bias"


@dataclass
class BoundsInterval:
    lb: float
    ub: float
    exact_affine: tuple[np.ndarray, float] | None = None


class ExprStore:
    """Append-only node store; ids are stable ints."""

    def __init__(self) -> None:
        self._kind: list[str] = []
        self._payload: list[tuple] = []
        self._dim: list[int] = []
        self._intern: dict[tuple, int] = {}

    def __len__(self) -> int:
        return len(self._kind)

    def kind(self, nid: int) -> str:
        return self._kind[nid]

    def payload(self, nid: int) -> tuple:
        return self._payload[nid]

    def dim(self, nid: int) -> int:
        return self._dim[nid]

    def children(self, nid: int) -> tuple[int, ...]:
        k = self._kind[nid]
        if k in (SUM, MAX):
            return self._payload[nid][0]
        if k in (SCALE, BIAS):
            return (self._payload[nid][1],)
        return ()

    def _new(self, key: tuple, kind: str, payload: tuple, dim: int) -> int:
        hit = self._intern.get(key)
        if hit is not None:
            return hit
        nid = len(self._kind)
        self._kind.append(kind)
        self._payload.append(payload)
        self._dim.append(dim)
        self._intern[key] = nid
        return nid

    # -- constructors --------------------------------------------------

    def affine(self, w: np.ndarray, b: float) -> int:
        w = np.asarray(w, dtype=float)
        if w.ndim != 1:
            raise ShapeError("affine weight must be a vector")
        key = (AFFINE,) + quant_key(np.append(w, float(b)), AFFINE_INTERN_TOL)
        return self._new(key, AFFINE, (tuple(w), float(b)), w.size)

    def _nary(self, kind: str, children: tuple[int, ...]) -> int:
        if len(children) < 1:
            raise ArityMismatch(f"{kind} needs at least one child")
        dims = {self._dim[c] for c in children}
        if len(dims) != 1:
            raise ShapeError(f"{kind} children disagree on input dim")
        key = (kind, children)
        return self._new(key, kind, (children,), dims.pop())

    def sum_(self, children) -> int:
        return self._nary(SUM, tuple(sorted(children)))

    def max_(self, children) -> int:
        return self._nary(MAX, tuple(sorted(set(children))))

    def scale(self, c: float, child: int) -> int:
        c = float(c)
        if not np.isfinite(c):
            raise ValueError("non-finite scale")
        key = (SCALE, quant_key((c,), AFFINE_INTERN_TOL)[0], child)
        return self._new(key, SCALE, (c, child), self._dim[child])

    def bias(self, b: float, child: int) -> int:
        b = float(b)
        if not np.isfinite(b):
            raise ValueError("non-finite bias")
        key = (BIAS, quant_key((b,), AFFINE_INTERN_TOL)[0], child)
        return self._new(key, BIAS, (b, child), self._dim[child])

    # -- helpers ---------------------------------------------------------

    def neg(self, child: int) -> int:
        return self.scale(-1.0, child)

    def min_(self, children) -> int:
        return self.neg(self.max_(self.neg(c) for c in children))

    def reachable(self, roots) -> list[int]:
        seen: set[int] = set()
        stack = list(roots)
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            stack.extend(self.children(nid))
        return sorted(seen)

    def dump_json(self, roots) -> str:
        out = []
        for nid in self.reachable(roots):
            k = self._kind[nid]
            p = self._payload[nid]
            if k == AFFINE:
                row = {"id": nid, "kind": k, "w": list(p[0]), "b": p[1]}
            elif k in (SUM, MAX):
                row = {"id": nid, "kind": k, "children": list(p[0])}
            elif k == SCALE:
                row = {"id": nid, "kind": k, "c": p[0], "child": p[1]}
            else:
                row = {"id": nid, "kind": k, "b": p[0], "child": p[1]}
            out.append(row)
        return json.dumps({"roots": list(roots), "nodes": out})


def _resolve(node: int, decisions: dict[int, int] | None) -> int:
    while decisions and node in decisions:
        node = decisions[node]
    return node


def eval_many(
    store: ExprStore,
    roots,
    x: np.ndarray,
    decisions: dict[int, int] | None = None,
) -> np.ndarray:
    """Evaluate roots at a batch of points, shape (N, dim) -> (N, len(roots))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(1, -1) if single else x
    memo: dict[int, np.ndarray] = {}

    def visit(nid: int) -> np.ndarray:
        nid = _resolve(nid, decisions)
        hit = memo.get(nid)
        if hit is not None:
            return hit
        k = store.kind(nid)
        p = store.payload(nid)
        if k == AFFINE:
            val = pts @ np.asarray(p[0]) + p[1]
        elif k == SUM:
            val = sum(visit(c) for c in p[0])
        elif k == MAX:
            val = np.maximum.reduce([visit(c) for c in p[0]])
        elif k == SCALE:
            val = p[0] * visit(p[1])
        else:
            val = p[0] + visit(p[1])
        memo[nid] = val
        return val

    cols = [visit(r) for r in roots]
    out = np.stack(cols, axis=1)
    return out[0] if single else out


def eval_scalar(
    store: ExprStore, node: int, x: np.ndarray,
    decisions: dict[int, int] | None = None,
) -> float:
    return float(eval_many(store, [node], x, decisions)[0])


def try_collapse_affine(
    store: ExprStore,
    node: int,
    decisions: dict[int, int] | None = None,
    memo: dict[int, tuple[np.ndarray, float] | None] | None = None,
) -> tuple[np.ndarray, float] | None:
    """Accumulate (w, b) when every Max under `node` is decided; else None."""
    if memo is None:
        memo = {}
    node = _resolve(node, decisions)
    if node in memo:
        return memo[node]
    k = store.kind(node)
    p = store.payload(node)
    out: tuple[np.ndarray, float] | None
    if k == AFFINE:
        out = (np.asarray(p[0], dtype=float), p[1])
    elif k == SUM:
        parts = [try_collapse_affine(store, c, decisions, memo) for c in p[0]]
        if any(q is None for q in parts):
            out = None
        else:
            out = (
                np.sum([q[0] for q in parts], axis=0),
                float(sum(q[1] for q in parts)),
            )
    elif k == MAX:
        if len(p[0]) == 1:  # degenerate site, e.g. max(z, 1.0*z)
            out = try_collapse_affine(store, p[0][0], decisions, memo)
        else:
            out = None  # undecided after resolution
    elif k == SCALE:
        sub = try_collapse_affine(store, p[1], decisions, memo)
        out = None if sub is None else (p[0] * sub[0], p[0] * sub[1])
    else:
        sub = try_collapse_affine(store, p[1], decisions, memo)
        out = None if sub is None else (sub[0], sub[1] + p[0])
    memo[node] = out
    return out


class BoundsCache:
    """LP interval cache for affine atoms, keyed (guard-set key, affine id).

    Bound to one domain; the per-leaf structural memo lives with the leaf.
    """

    def __init__(self, domain: InputDomain) -> None:
        self.domain_key = domain.key()
        self._affine: dict[tuple, tuple[float, float]] = {}

    def affine_interval(
        self,
        skey: frozenset[int],
        affine_id: int,
        w: np.ndarray,
        b: float,
        s: GuardSet,
        domain: InputDomain,
        oracle: LinearOracle,
    ) -> tuple[float, float]:
        if domain.key() != self.domain_key:
            raise ValueError("cache bound to a different domain")
        key = (skey, affine_id)
        hit = self._affine.get(key)
        if hit is not None:
            return hit
        lo, hi, _, _ = oracle.interval(w, b, s, domain)
        self._affine[key] = (lo, hi)
        return lo, hi


def bounds(
    store: ExprStore,
    node: int,
    s: GuardSet,
    domain: InputDomain,
    oracle: LinearOracle,
    cache: BoundsCache,
    decisions: dict[int, int] | None = None,
    memo: dict[int, BoundsInterval] | None = None,
) -> BoundsInterval:
    """Sound interval for `node` on C(S) ∩ domain.

    Affine-collapsible subtrees (under `decisions`) get exact LP intervals;
    mixed subtrees use the structural rules: Sum adds, Scale is sign-aware,
    Bias shifts, Max takes componentwise maxima (upper exact, lower sound).
    """
    if memo is None:
        memo = {}
    collapse_memo: dict[int, tuple[np.ndarray, float] | None] = {}

    def visit(nid: int) -> BoundsInterval:
        nid = _resolve(nid, decisions)
        hit = memo.get(nid)
        if hit is not None:
            return hit
        wb = try_collapse_affine(store, nid, decisions, collapse_memo)
        if wb is not None:
            aff_id = store.affine(wb[0], wb[1])
            lo, hi = cache.affine_interval(
                s.key(), aff_id, wb[0], wb[1], s, domain, oracle
            )
            out = BoundsInterval(lo, hi, exact_affine=wb)
            memo[nid] = out
            return out
        k = store.kind(nid)
        p = store.payload(nid)
        if k == SUM:
            subs = [visit(c) for c in p[0]]
            out = BoundsInterval(
                float(sum(q.lb for q in subs)), float(sum(q.ub for q in subs))
            )
        elif k == MAX:
            subs = [visit(c) for c in p[0]]
            out = BoundsInterval(max(q.lb for q in subs), max(q.ub for q in subs))
        elif k == SCALE:
            sub = visit(p[1])
            c = p[0]
            if c >= 0:
                out = BoundsInterval(c * sub.lb, c * sub.ub)
            else:
                out = BoundsInterval(c * sub.ub, c * sub.lb)
        elif k == BIAS:
            sub = visit(p[1])
            out = BoundsInterval(sub.lb + p[0], sub.ub + p[0])
        else:  # AFFINE is handled by the collapse path
            raise AssertionError("unreachable")
        memo[nid] = out
        return out

    return visit(node)
