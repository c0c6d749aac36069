"""Anytime branch-and-bound on a scalar piecewise-linear objective.

The driver asks "is g >= 0 on the domain?" and answers with a Proof
(every leaf has a certified nonnegative lower bound), a Counterexample
(an exact witness with g(x*) < 0, re-checked pointwise), or Unknown when
the budget trips first. Leaves are processed worst-gap first; safe leaves
are archived with their guard sets and bounds only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .engine import Budget, JitEngine, Leaf
from .errors import NotRefined, NumericalFailure
from .exprs import eval_many

WITNESS_RECHECK_TOL = 1e-6


@dataclass
class ArchivedLeaf:
    guards: tuple[int, ...]
    lb: float


@dataclass
class Certificate:
    """Tri-valued outcome with the evidence that backs it."""

    verdict: str  # "proof" | "counterexample" | "unknown"
    leaves: list[ArchivedLeaf] = field(default_factory=list)
    witness: np.ndarray | None = None
    witness_value: float | None = None
    lb: float | None = None
    ub: float | None = None
    counters: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        doc: dict = {
            "verdict": self.verdict,
            "leaves": [
                {"guards": list(a.guards), "lb": a.lb} for a in self.leaves
            ],
            "counters": self.counters,
        }
        if self.witness is not None:
            doc["witness"] = {
                "x": [float(v) for v in self.witness],
                "g": self.witness_value,
            }
        if self.lb is not None or self.ub is not None:
            doc["bracket"] = {"lb": self.lb, "ub": self.ub}
        return json.dumps(doc)


def minimize_on_leaf(
    engine: JitEngine, objective: int, leaf: Leaf
) -> tuple[float, np.ndarray]:
    """Exact minimum of the collapsed objective over the leaf's cell."""
    w, b = engine.leaf_law(leaf, objective)  # NotRefined when not collapsed
    res = engine.oracle.affine_extremum(
        w, b, leaf.guards, engine.domain, "min"
    )
    return res.value, res.x


def _forward_value(engine: JitEngine, objective: int, x: np.ndarray) -> float:
    return float(eval_many(engine.store, [objective], x)[0])


def run(
    engine: JitEngine,
    objective: int,
    budget: Budget | None = None,
    refine_roots=None,
) -> Certificate:
    """Decide sign(min g) over the engine's domain, anytime-sound."""
    roots = [objective] if refine_roots is None else list(refine_roots)
    safe: list[ArchivedLeaf] = []
    budget = budget or Budget()

    def leaf_gap(leaf: Leaf) -> float:
        itv = engine.leaf_envelope(leaf, objective)
        return itv.ub - itv.lb

    def unknown() -> Certificate:
        active = [l for l in engine.active_leaves()]
        lbs = [engine.leaf_envelope(l, objective).lb for l in active]
        ubs = [engine.leaf_envelope(l, objective).ub for l in active]
        lbs += [a.lb for a in safe]
        return Certificate(
            verdict="unknown",
            leaves=list(safe),
            lb=float(min(lbs)) if lbs else None,
            ub=float(min(ubs)) if ubs else None,
            counters=engine.counters.snapshot(),
        )

    queue: list[Leaf] = list(engine.active_leaves())
    while queue:
        # worst gap first; ties go to the earliest-created leaf
        queue.sort(key=lambda l: (-leaf_gap(l), l.created))
        leaf = queue.pop(0)
        if leaf.status == "retired":
            continue
        itv = engine.leaf_envelope(leaf, objective)
        if itv.lb >= 0.0:
            safe.append(ArchivedLeaf(leaf.guards.ids, float(itv.lb)))
            engine.leaves.remove(leaf)
            leaf.status = "retired"
            engine._log("archive_safe", leaf)
            continue
        if itv.ub < 0.0:
            # a violation certainly lives here: refine it out exactly
            res = engine.refine_to_full(leaf, roots, budget)
            cand = None
            for sub in res.leaves:
                try:
                    val, x = minimize_on_leaf(engine, objective, sub)
                except NotRefined:
                    continue
                if cand is None or val < cand[0]:
                    cand = (val, x)
            if cand is not None and cand[0] < 0.0:
                val, x = cand
                check = _forward_value(engine, objective, x)
                if not (check < 0.0) or abs(check - val) > max(
                    WITNESS_RECHECK_TOL, 1e-9 * abs(val)
                ):
                    raise NumericalFailure(
                        "witness failed pointwise re-check: "
                        f"lp={val} forward={check}"
                    )
                return Certificate(
                    verdict="counterexample",
                    leaves=list(safe),
                    witness=np.asarray(x, dtype=float),
                    witness_value=float(check),
                    counters=engine.counters.snapshot(),
                )
            if not res.complete:
                return unknown()
            # the pessimistic upper bound was slack; fold children back in
            queue.extend(res.leaves)
            continue
        # undecided: refine one step on this leaf
        if not budget.lp_ok(engine.counters):
            return unknown()
        sites = engine.pending_sites(leaf, roots)
        if not sites:
            # fully decided objective with a straddling interval: the exact
            # minimum settles the leaf
            val, x = minimize_on_leaf(engine, objective, leaf)
            if val < 0.0:
                check = _forward_value(engine, objective, x)
                if not (check < 0.0) or abs(check - val) > max(
                    WITNESS_RECHECK_TOL, 1e-9 * abs(val)
                ):
                    raise NumericalFailure(
                        "witness failed pointwise re-check: "
                        f"lp={val} forward={check}"
                    )
                return Certificate(
                    verdict="counterexample",
                    leaves=list(safe),
                    witness=np.asarray(x, dtype=float),
                    witness_value=float(check),
                    counters=engine.counters.snapshot(),
                )
            safe.append(ArchivedLeaf(leaf.guards.ids, float(val)))
            engine.leaves.remove(leaf)
            leaf.status = "retired"
            engine._log("archive_safe", leaf)
            continue
        site = sites[0]
        if site.is_two_way:
            outcome = engine.ensure_sign(site, leaf, budget)
        else:
            outcome = engine.ensure_winner(site, leaf, budget)
        if outcome[0] == "budget":
            return unknown()
        if outcome[0] == "split":
            queue.extend(outcome[1])
        else:
            queue.append(leaf)
    return Certificate(
        verdict="proof",
        leaves=list(safe),
        counters=engine.counters.snapshot(),
    )
