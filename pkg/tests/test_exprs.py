"""Expression DAG: interning, AC canonicalization, eval, bounds, collapse."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jitswt import (
    ArityMismatch,
    Box,
    BoundsCache,
    ExprStore,
    GuardLibrary,
    GuardSet,
    LinearOracle,
    bounds,
    eval_many,
    try_collapse_affine,
)
from jitswt.exprs import eval_scalar
from oracles import grid_points, grid_range, naive_eval


def test_abs_via_max_pointwise_value():
    store = ExprStore()
    node = store.max_([store.affine([1.0], 0.0), store.affine([-1.0], 0.0)])
    assert eval_scalar(store, node, np.array([0.3])) == pytest.approx(0.3)
    assert eval_scalar(store, node, np.array([-0.4])) == pytest.approx(0.4)


def test_scale_bias_arithmetic():
    store = ExprStore()
    node = store.scale(-2.0, store.bias(1.0, store.affine([1.0], 0.0)))
    assert eval_scalar(store, node, np.array([2.0])) == pytest.approx(-6.0)


def test_interning_returns_existing_id():
    store = ExprStore()
    a = store.affine([1.0, 2.0], 0.5)
    b = store.affine([1.0, 2.0], 0.5)
    assert a == b
    # within the 1e-9 interning tolerance collapses too
    c = store.affine([1.0 + 1e-13, 2.0], 0.5)
    assert c == a


def test_ac_canonicalization_of_children():
    store = ExprStore()
    x = store.affine([1.0, 0.0], 0.0)
    y = store.affine([0.0, 1.0], 0.0)
    assert store.sum_([x, y]) == store.sum_([y, x])
    assert store.max_([x, y]) == store.max_([y, x])
    # max is idempotent, sum keeps multiplicity
    assert store.max_([x, x, y]) == store.max_([x, y])
    assert store.sum_([x, x]) != store.sum_([x])


def test_empty_children_rejected():
    store = ExprStore()
    with pytest.raises(ArityMismatch):
        store.sum_([])
    with pytest.raises(ArityMismatch):
        store.max_([])


def _random_tree(rng, dim, depth):
    """Build matching (tuple-tree, store-node) pairs for oracle comparison."""

    def build(store, d):
        if d == 0 or rng.random() < 0.3:
            w = rng.normal(size=dim)
            b = float(rng.normal())
            return ("affine", w, b), store.affine(w, b)
        kind = rng.choice(["sum", "max", "scale", "bias"])
        if kind in ("sum", "max"):
            k = int(rng.integers(2, 4))
            pairs = [build(store, d - 1) for _ in range(k)]
            trees = [p[0] for p in pairs]
            nodes = [p[1] for p in pairs]
            if kind == "sum":
                return ("sum", trees), store.sum_(nodes)
            return ("max", trees), store.max_(nodes)
        sub_tree, sub_node = build(store, d - 1)
        if kind == "scale":
            c = float(rng.normal())
            return ("scale", c, sub_tree), store.scale(c, sub_node)
        b = float(rng.normal())
        return ("bias", b, sub_tree), store.bias(b, sub_node)

    store = ExprStore()
    tree, node = build(store, depth)
    return store, tree, node


def test_eval_matches_naive_recursive_oracle():
    rng = np.random.default_rng(17)
    store, tree, node = _random_tree(rng, dim=3, depth=5)
    pts = rng.normal(size=(100, 3))
    got = eval_many(store, [node], pts)[:, 0]
    want = np.array([naive_eval(tree, p) for p in pts])
    # identical up to summation-order noise between the two implementations
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_eval_duplicate_sum_children_counted_twice():
    store = ExprStore()
    x = store.affine([1.0], 0.0)
    node = store.sum_([x, x])
    assert eval_scalar(store, node, np.array([1.5])) == pytest.approx(3.0)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_property_eval_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    store, tree, node = _random_tree(rng, dim=2, depth=4)
    pts = rng.normal(size=(20, 2))
    got = eval_many(store, [node], pts)[:, 0]
    want = np.array([naive_eval(tree, p) for p in pts])
    assert np.allclose(got, want, atol=1e-9)


def _bounds_env(domain):
    lib = GuardLibrary()
    oracle = LinearOracle(lib)
    cache = BoundsCache(domain)
    return lib, oracle, cache


def test_affine_bounds_exact_on_box():
    store = ExprStore()
    node = store.affine([1.0, 0.0], 0.0)
    box = Box((0.0, 0.0), (1.0, 1.0))
    _, oracle, cache = _bounds_env(box)
    bi = bounds(store, node, GuardSet(), box, oracle, cache)
    assert bi.lb == pytest.approx(0.0, abs=1e-9)
    assert bi.ub == pytest.approx(1.0, abs=1e-9)
    assert bi.exact_affine is not None


def test_max_rule_sound_but_not_tight():
    # |x1| on [-1,1]^2: structural rule gives [-1,1], true range is [0,1]
    store = ExprStore()
    node = store.max_([store.affine([1.0, 0.0], 0.0), store.affine([-1.0, 0.0], 0.0)])
    box = Box((-1.0, -1.0), (1.0, 1.0))
    _, oracle, cache = _bounds_env(box)
    bi = bounds(store, node, GuardSet(), box, oracle, cache)
    assert bi.lb == pytest.approx(-1.0, abs=1e-9)
    assert bi.ub == pytest.approx(1.0, abs=1e-9)


def test_bounds_contain_grid_range_on_random_dags():
    rng = np.random.default_rng(23)
    for _ in range(50):
        store, tree, node = _random_tree(rng, dim=2, depth=4)
        lo = rng.uniform(-1.5, -0.2, size=2)
        hi = rng.uniform(0.2, 1.5, size=2)
        box = Box(tuple(lo), tuple(hi))
        _, oracle, cache = _bounds_env(box)
        bi = bounds(store, node, GuardSet(), box, oracle, cache)
        gmin, gmax = grid_range(lambda p: naive_eval(tree, p), lo, hi, steps=40)
        assert bi.lb <= gmin + 1e-9
        assert bi.ub >= gmax - 1e-9


def test_bounds_cache_avoids_repeat_lp():
    store = ExprStore()
    node = store.affine([1.0, 1.0], 0.0)
    box = Box((0.0, 0.0), (1.0, 1.0))
    _, oracle, cache = _bounds_env(box)
    bounds(store, node, GuardSet(), box, oracle, cache)
    first = oracle.counters.lp_calls
    bounds(store, node, GuardSet(), box, oracle, cache)
    assert oracle.counters.lp_calls == first


def test_collapse_committed_winner():
    store = ExprStore()
    a1 = store.affine([1.0, 0.0], 0.25)
    a2 = store.affine([0.0, 1.0], -0.5)
    m = store.max_([a1, a2])
    wb = try_collapse_affine(store, m, decisions={m: a1})
    assert wb is not None
    assert np.allclose(wb[0], [1.0, 0.0])
    assert wb[1] == pytest.approx(0.25)
    assert try_collapse_affine(store, m) is None


def test_collapse_affine_sum():
    store = ExprStore()
    s = store.sum_([store.affine([1.0, 2.0], 0.5), store.affine([3.0, -1.0], 0.25)])
    wb = try_collapse_affine(store, s)
    assert np.allclose(wb[0], [4.0, 1.0])
    assert wb[1] == pytest.approx(0.75)


def test_collapse_through_scale_and_bias():
    store = ExprStore()
    a1 = store.affine([2.0], 1.0)
    a2 = store.affine([0.0], 0.0)
    gate = store.max_([a1, a2])
    expr = store.bias(0.5, store.scale(-3.0, gate))
    wb = try_collapse_affine(store, expr, decisions={gate: a1})
    assert np.allclose(wb[0], [-6.0])
    assert wb[1] == pytest.approx(-2.5)


def test_decided_bounds_follow_choice():
    store = ExprStore()
    a1 = store.affine([1.0], 0.0)
    a2 = store.affine([0.0], 0.0)
    gate = store.max_([a1, a2])
    box = Box((-1.0,), (1.0,))
    _, oracle, cache = _bounds_env(box)
    plain = bounds(store, gate, GuardSet(), box, oracle, cache)
    assert plain.lb == pytest.approx(0.0)  # max(lb(x), lb(0)) = 0
    decided = bounds(store, gate, GuardSet(), box, oracle, cache, decisions={gate: a1})
    assert decided.lb == pytest.approx(-1.0)
    assert decided.exact_affine is not None


def test_dump_json_covers_reachable_nodes():
    import json

    store = ExprStore()
    a = store.affine([1.0], 0.0)
    node = store.max_([a, store.scale(-1.0, a)])
    payload = json.loads(store.dump_json([node]))
    kinds = {row["kind"] for row in payload["nodes"]}
    assert payload["roots"] == [node]
    assert kinds == {"affine", "scale", "max"}


def test_grid_points_helper_shape():
    pts = grid_points((0.0, 0.0), (1.0, 1.0), 5)
    assert pts.shape == (25, 2)
