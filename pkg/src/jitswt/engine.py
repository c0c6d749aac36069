"""Leaf management and just-in-time refinement.

A Leaf pairs a GuardSet (the cell) with a copy-on-write decision overlay
mapping Max nodes to their committed replacements. The three refiners
(ensure_sign, ensure_winner, ensure_common_refine) make local progress by
committing decisions, pruning dominated candidates, or splitting on one new
face; refine_to_full drives them until every root collapses to an affine law
per leaf or the budget trips. Envelopes stay sound at every step and only
tighten.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._util import ZERO_EPS
from .compiler import GateSite, SwtGraph, sign_split_plane
from .errors import InfeasibleLeaf, NotRefined
from .exprs import (
    MAX,
    BoundsCache,
    BoundsInterval,
    _resolve,
    bounds,
    try_collapse_affine,
)
from .guards import GuardLibrary, GuardSet
from .lp import DenseSimplex
from .oracle import Counters, InputDomain, LinearOracle

TIE_TOL = 1e-7  # |z| below this straddles the hinge: split, never commit


@dataclass
class Budget:
    """Refinement work limits; None means unlimited."""

    max_splits: int | None = None
    max_new_guards: int | None = None
    max_lp_calls: int | None = None

    def can_split(self, c: Counters) -> bool:
        if self.max_splits is not None and c.splits >= self.max_splits:
            return False
        if self.max_new_guards is not None and c.new_guards >= self.max_new_guards:
            return False
        return True

    def lp_ok(self, c: Counters) -> bool:
        return self.max_lp_calls is None or c.lp_calls < self.max_lp_calls


@dataclass
class Leaf:
    """One cell of the active cover with its decision overlay."""

    id: int
    guards: GuardSet
    decisions: dict[int, int]
    created: int
    status: str = "active"  # active | fully_refined | retired
    memo: dict[int, BoundsInterval] = field(default_factory=dict)
    witness: np.ndarray | None = None


@dataclass
class RefineResult:
    complete: bool
    refined: list[Leaf]
    pending: list[Leaf]

    @property
    def leaves(self) -> list[Leaf]:
        return self.refined + self.pending


class JitEngine:
    """Owns the active leaf cover over one compiled graph and one domain."""

    def __init__(
        self,
        graph: SwtGraph,
        domain: InputDomain,
        library: GuardLibrary | None = None,
        counters: Counters | None = None,
        backend: DenseSimplex | None = None,
        tie_tol: float = TIE_TOL,
    ) -> None:
        self.graph = graph
        self.store = graph.store
        self.domain = domain
        self.library = library if library is not None else GuardLibrary()
        self.counters = counters if counters is not None else Counters()
        self.oracle = LinearOracle(
            self.library, backend or DenseSimplex(), self.counters
        )
        self.cache = BoundsCache(domain)
        self.tie_tol = tie_tol
        self.trace: list[dict] = []
        self._next_id = 0
        root = self._new_leaf(GuardSet(), {})
        self.leaves: list[Leaf] = [root]

    # -- bookkeeping -----------------------------------------------------

    def _new_leaf(self, guards: GuardSet, decisions: dict[int, int]) -> Leaf:
        leaf = Leaf(
            id=self._next_id, guards=guards, decisions=decisions,
            created=self._next_id,
        )
        self._next_id += 1
        return leaf

    def _log(self, action: str, leaf: Leaf, face: int | None = None) -> None:
        self.trace.append(
            {
                "action": action,
                "leaf": leaf.id,
                "face": face,
                "counters": self.counters.snapshot(),
            }
        )

    def dump_trace(self) -> str:
        return "\n".join(json.dumps(rec) for rec in self.trace)

    def active_leaves(self) -> list[Leaf]:
        return [l for l in self.leaves if l.status != "retired"]

    def _register_counted(self, a: np.ndarray, d: float) -> int:
        before = self.library.plane_count
        gid = self.library.register(a, d)
        if self.library.plane_count > before:
            self.counters.new_guards += 1
        return gid

    def _commit(self, leaf: Leaf, node: int, replacement: int) -> None:
        leaf.decisions[node] = replacement
        leaf.memo.clear()

    def _feasible(self, guards: GuardSet) -> np.ndarray | None:
        res = self.library.check_feasible(guards, self.domain, self.oracle)
        return res.witness if res.status == "feasible" else None

    def _split(
        self,
        leaf: Leaf,
        gid: int,
        extra_pos: dict[int, int],
        extra_neg: dict[int, int],
    ) -> list[Leaf]:
        """Split leaf on face gid; children inherit side-specific decisions."""
        rev = self.library.reverse(gid)
        children: list[Leaf] = []
        for side_gid, extra in ((gid, extra_pos), (rev, extra_neg)):
            guards = leaf.guards.add(side_gid)
            witness = self._feasible(guards)
            if witness is None:
                continue
            child = self._new_leaf(guards, {**leaf.decisions, **extra})
            child.witness = witness
            children.append(child)
        if not children:
            raise InfeasibleLeaf(
                f"both sides of face {gid} infeasible on leaf {leaf.id}"
            )
        self.counters.splits += 1
        leaf.status = "retired"
        self.leaves.remove(leaf)
        self.leaves.extend(children)
        self._log("split", leaf, gid)
        return children

    # -- bounds ----------------------------------------------------------

    def node_bounds(self, leaf: Leaf, node: int) -> BoundsInterval:
        return bounds(
            self.store, node, leaf.guards, self.domain, self.oracle,
            self.cache, leaf.decisions, leaf.memo,
        )

    def collapse(self, leaf: Leaf, node: int) -> tuple[np.ndarray, float] | None:
        return try_collapse_affine(self.store, node, leaf.decisions)

    def leaf_law(self, leaf: Leaf, node: int) -> tuple[np.ndarray, float]:
        wb = self.collapse(leaf, node)
        if wb is None:
            raise NotRefined(f"node {node} does not collapse on leaf {leaf.id}")
        return wb

    # -- site discovery ----------------------------------------------------

    def _reachable_resolved(self, leaf: Leaf, roots) -> set[int]:
        seen: set[int] = set()
        stack = [_resolve(r, leaf.decisions) for r in roots]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            for c in self.store.children(nid):
                stack.append(_resolve(c, leaf.decisions))
        return seen

    def site_state(self, leaf: Leaf, site: GateSite) -> tuple[int, bool]:
        """(resolved decision node, still undecided?)."""
        node = _resolve(site.decision_node, leaf.decisions)
        undecided = (
            self.store.kind(node) == MAX
            and len(self.store.payload(node)[0]) > 1
        )
        return node, undecided

    def pending_sites(self, leaf: Leaf, roots=None) -> list[GateSite]:
        """Undecided sites reachable from roots, in creation (topo) order."""
        roots = self.graph.roots if roots is None else roots
        reach = self._reachable_resolved(leaf, roots)
        out = []
        for site in self.graph.gate_sites:
            node, undecided = self.site_state(leaf, site)
            if undecided and node in reach:
                out.append(site)
        return out

    # -- refiners ----------------------------------------------------------

    def ensure_sign(
        self, site: GateSite, leaf: Leaf, budget: Budget | None = None
    ):
        """Decide a two-way gate: commit a sign or split on its hinge."""
        node, undecided = self.site_state(leaf, site)
        if not undecided:
            return ("committed", node)
        itv = self.node_bounds(leaf, site.z)
        if itv.ub <= -self.tie_tol:
            self._commit(leaf, node, site.choice_neg)
            self._log("commit_neg", leaf)
            return ("committed", site.choice_neg)
        if itv.lb >= self.tie_tol:
            self._commit(leaf, node, site.choice_pos)
            self._log("commit_pos", leaf)
            return ("committed", site.choice_pos)
        wb = self.collapse(leaf, site.z)
        if wb is None:
            raise NotRefined(
                f"gate {site.index}: pre-activation undecided upstream"
            )
        w, b = wb
        if float(np.max(np.abs(w), initial=0.0)) <= ZERO_EPS:
            # constant pre-activation inside the tie band: closed cells
            # agree on both branches at 0, pick by sign
            choice = site.choice_pos if b >= 0 else site.choice_neg
            self._commit(leaf, node, choice)
            self._log("commit_const", leaf)
            return ("committed", choice)
        if budget is not None and not budget.can_split(self.counters):
            return ("budget", None)
        a, d = sign_split_plane(w, b)
        gid = self._register_counted(a, d)
        children = self._split(
            leaf, gid, {node: site.choice_pos}, {node: site.choice_neg}
        )
        return ("split", children)

    def _face_dominates(
        self, leaf: Leaf, wb_hi: tuple, wb_lo: tuple
    ) -> bool:
        """True when the guard {E_hi - E_lo >= 0} is already on the leaf."""
        dw = wb_hi[0] - wb_lo[0]
        db = wb_hi[1] - wb_lo[1]
        if float(np.max(np.abs(dw), initial=0.0)) <= ZERO_EPS:
            return False  # constant differences are handled by intervals
        gid = self.library.lookup(-dw, db)
        return gid is not None and gid in leaf.guards

    def ensure_winner(
        self, site: GateSite, leaf: Leaf, budget: Budget | None = None
    ):
        """Resolve a Max site: prune dominated candidates, commit or split."""
        node, undecided = self.site_state(leaf, site)
        if not undecided:
            return ("committed", node)
        cands = list(self.store.payload(node)[0])
        laws = []
        for c in cands:
            wb = self.collapse(leaf, c)
            if wb is None:
                raise NotRefined(
                    f"max site {site.index}: candidate undecided upstream"
                )
            laws.append(wb)
        itvs = [self.node_bounds(leaf, c) for c in cands]
        k = len(cands)
        best = max(range(k), key=lambda i: itvs[i].lb)
        # dominance: interval test against the incumbent, or an order
        # witness face already present on the leaf
        alive = list(range(k))
        for i in range(k):
            if i == best or i not in alive:
                continue
            if itvs[i].ub <= itvs[best].lb:
                alive.remove(i)
                continue
            for j in alive:
                if j != i and self._face_dominates(leaf, laws[j], laws[i]):
                    alive.remove(i)
                    break
        # constant pairwise differences never straddle: settle them here
        changed = True
        while changed:
            changed = False
            for i in list(alive):
                for j in alive:
                    if i == j:
                        continue
                    dw = laws[j][0] - laws[i][0]
                    db = laws[j][1] - laws[i][1]
                    if float(np.max(np.abs(dw), initial=0.0)) <= ZERO_EPS and (
                        db > 0 or (db >= 0 and j < i)
                    ):
                        alive.remove(i)
                        changed = True
                        break
                if changed:
                    break

        def reduced(ids: list[int]) -> int:
            return ids[0] if len(ids) == 1 else self.store.max_(ids)

        if len(alive) == 1:
            choice = cands[alive[0]]
            self._commit(leaf, node, choice)
            self._log("commit_winner", leaf)
            return ("committed", choice)
        if len(alive) < k:
            new_node = reduced([cands[i] for i in alive])
            self._commit(leaf, node, new_node)
            self._log("prune", leaf)
            # fall through with the reduced candidate set
            node = new_node
        lbs = [itvs[i].lb for i in alive]
        ubs = [itvs[i].ub for i in alive]
        i_star = max(range(len(alive)), key=lambda i: lbs[i])
        if all(lbs[i_star] >= ubs[i] for i in range(len(alive)) if i != i_star):
            choice = cands[alive[i_star]]
            self._commit(leaf, node, choice)
            self._log("commit_winner", leaf)
            return ("committed", choice)
        if budget is not None and not budget.can_split(self.counters):
            return ("budget", None)
        # gap heuristic (u_p - u_q) - (l_p - l_q) = width_p - width_q:
        # widest against narrowest
        order = sorted(range(len(alive)), key=lambda i: ubs[i] - lbs[i])
        q_pos, p_pos = order[0], order[-1]
        p, q = alive[p_pos], alive[q_pos]
        dw = laws[p][0] - laws[q][0]
        db = laws[p][1] - laws[q][1]
        a, d = sign_split_plane(dw, db)  # holds where E_p - E_q >= 0
        gid = self._register_counted(a, d)
        keep_p = reduced([cands[i] for i in alive if i != q])
        keep_q = reduced([cands[i] for i in alive if i != p])
        children = self._split(leaf, gid, {node: keep_p}, {node: keep_q})
        return ("split", children)

    def ensure_common_refine(self, leaf: Leaf, faces_needed) -> list[Leaf]:
        """Insert straddling faces (most central first) until none remain."""
        result: list[Leaf] = []
        work = deque([leaf])
        while work:
            cur = work.popleft()
            todo = [
                f
                for f in faces_needed
                if f not in cur.guards
                and self.library.reverse(f) not in cur.guards
            ]
            if not todo:
                result.append(cur)
                continue
            center = self._cell_center(cur)
            face = min(
                todo,
                key=lambda f: abs(
                    float(
                        np.dot(self.library.get(f).normal, center)
                        - self.library.get(f).offset
                    )
                ),
            )
            try:
                children = self._split(cur, face, {}, {})
            except InfeasibleLeaf:
                result.append(cur)
                continue
            work.extend(children)
        return result

    def _cell_center(self, leaf: Leaf) -> np.ndarray:
        n = self.domain.dim
        eye = np.eye(n)
        center = np.empty(n)
        for i in range(n):
            nid = self.store.affine(eye[i], 0.0)
            lo, hi = self.cache.affine_interval(
                leaf.guards.key(), nid, eye[i], 0.0, leaf.guards,
                self.domain, self.oracle,
            )
            center[i] = 0.5 * (lo + hi)
        return center

    # -- full refinement ---------------------------------------------------

    def refine_to_full(
        self, leaf: Leaf, roots=None, budget: Budget | None = None
    ) -> RefineResult:
        """Drive refiners until every leaf under `leaf` is fully refined."""
        roots = self.graph.roots if roots is None else list(roots)
        work: deque[Leaf] = deque([leaf])
        refined: list[Leaf] = []
        while work:
            if budget is not None and not budget.lp_ok(self.counters):
                return RefineResult(False, refined, list(work))
            cur = work.popleft()
            sites = self.pending_sites(cur, roots)
            if not sites:
                if cur.status != "fully_refined":
                    cur.status = "fully_refined"
                    self._log("fully_refined", cur)
                refined.append(cur)
                continue
            site = sites[0]
            if site.is_two_way:
                outcome = self.ensure_sign(site, cur, budget)
            else:
                outcome = self.ensure_winner(site, cur, budget)
            tag = outcome[0]
            if tag == "budget":
                return RefineResult(False, refined, [cur] + list(work))
            if tag == "split":
                work.extend(outcome[1])
            else:
                work.appendleft(cur)
        return RefineResult(True, refined, [])

    def refine_all(
        self, roots=None, budget: Budget | None = None
    ) -> RefineResult:
        refined: list[Leaf] = []
        pending: list[Leaf] = []
        complete = True
        todo = list(self.active_leaves())
        for pos, leaf in enumerate(todo):
            if leaf.status == "fully_refined":
                refined.append(leaf)
                continue
            res = self.refine_to_full(leaf, roots, budget)
            refined.extend(res.refined)
            pending.extend(res.pending)
            if not res.complete:
                complete = False
                pending.extend(
                    l for l in todo[pos + 1 :] if l.status != "fully_refined"
                )
                refined.extend(
                    l for l in todo[pos + 1 :] if l.status == "fully_refined"
                )
                break
        return RefineResult(complete, refined, pending)

    # -- envelopes ---------------------------------------------------------

    def leaf_envelope(self, leaf: Leaf, root: int) -> BoundsInterval:
        return self.node_bounds(leaf, root)

    def envelope_at(self, root: int, x: np.ndarray) -> tuple[float, float]:
        """Anytime bounds on the root value at one point of the domain."""
        x = np.asarray(x, dtype=float)
        lo, hi = -np.inf, np.inf
        found = False
        for leaf in self.active_leaves():
            if not self.library.contains_point(leaf.guards, x):
                continue
            found = True
            wb = self.collapse(leaf, root)
            if wb is not None:
                v = float(np.dot(wb[0], x) + wb[1])
                cand_lo = cand_hi = v
            else:
                itv = self.leaf_envelope(leaf, root)
                cand_lo, cand_hi = itv.lb, itv.ub
            lo = max(lo, cand_lo)
            hi = min(hi, cand_hi)
        if not found:
            return -np.inf, np.inf
        return lo, hi
