"""Acceptance gate: one test per top-level requirement.

Each test prints a single PASS/FAIL line (visible with -s or on failure)
and asserts every sub-check at the stated tolerance.
"""

from __future__ import annotations

import json
import pathlib
import time
from contextlib import contextmanager

import numpy as np

from jitswt import (
    Box,
    Budget,
    Intervention,
    JitEngine,
    compile_model,
    conv_shift_equivariance,
    certify_robustness,
    extract_regions,
    gcn_permutation_equivariance,
    imax,
    jacobian_at,
    lipschitz,
    load_model,
    rank_channels,
)
from jitswt.exprs import eval_many
from oracles import finite_diff_jacobian, relu_pattern_regions

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
FIXTURE_NAMES = ["ffn_2_4_2", "ffn_20_16_8_4", "conv1d", "conv2d_1x8x8", "gcn_10"]


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[acceptance] {name}: FAIL")
        raise
    print(f"[acceptance] {name}: PASS")


def fixture(name):
    return load_model((FIXTURES / f"{name}.json").read_text())


def make_model(input_shape, layers):
    return load_model(json.dumps({"input_shape": input_shape, "layers": layers}))


def random_relu_net(rng, widths, scale=1.0):
    layers = []
    for i, (a, b) in enumerate(zip(widths, widths[1:])):
        layers.append(
            {
                "kind": "dense",
                "W": (rng.normal(size=(b, a)) * scale / np.sqrt(a)).tolist(),
                "b": (rng.normal(size=b) * 0.3).tolist(),
            }
        )
        if i < len(widths) - 2:
            layers.append({"kind": "relu"})
    return make_model([widths[0]], layers)


def forward_batch(model, xs):
    return np.stack([model.forward(x) for x in xs])


# 1 ---------------------------------------------------------------------------


def test_c01_forward_equivalence():
    with criterion("forward equivalence on bundled fixtures"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(11)
        for name in FIXTURE_NAMES:
            model = fixture(name)
            graph = compile_model(model)
            n = model.input_dim
            xs = rng.uniform(-1.0, 1.0, size=(1000, n))
            got = eval_many(graph.store, graph.roots, xs)
            want = forward_batch(model, xs)
            assert np.max(np.abs(got - want)) <= 1e-6, name

            # full refinement on a small random sub-box: per-leaf laws
            # must reproduce the forward pass exactly (box shrinks with
            # dimension to keep the straddling-gate count small)
            center = rng.uniform(-0.5, 0.5, size=n)
            hw = 0.02 if n <= 20 else 0.001
            lo, hi = center - hw, center + hw
            engine = JitEngine(graph, Box(tuple(lo), tuple(hi)))
            res = engine.refine_all(graph.roots)
            assert res.complete, name
            laws = {}
            probes = rng.uniform(lo, hi, size=(100, n))
            for x in probes:
                leaf = next(
                    l
                    for l in res.refined
                    if engine.library.contains_point(l.guards, x)
                )
                if leaf.id not in laws:
                    pairs = [engine.leaf_law(leaf, r) for r in graph.roots]
                    laws[leaf.id] = (
                        np.stack([w for w, _ in pairs]),
                        np.array([b for _, b in pairs]),
                    )
                w, b = laws[leaf.id]
                assert np.max(np.abs(w @ x + b - model.forward(x))) <= 1e-9, name
        assert time.perf_counter() - t0 < 60.0


# 2 ---------------------------------------------------------------------------


def _step_envelopes(engine, graph, xs):
    """Pointwise envelope over the current leaf cover, vectorized."""
    n_pts = xs.shape[0]
    m = len(graph.roots)
    lo = np.full((n_pts, m), -np.inf)
    hi = np.full((n_pts, m), np.inf)
    for leaf in engine.active_leaves():
        a, d = engine.library.halfspace_rows(leaf.guards)
        mask = (
            np.ones(n_pts, dtype=bool)
            if a.size == 0
            else np.all(xs @ a.T <= d + 1e-9, axis=1)
        )
        if not mask.any():
            continue
        for k, root in enumerate(graph.roots):
            wb = engine.collapse(leaf, root)
            if wb is not None:
                v = xs[mask] @ wb[0] + wb[1]
                leaf_lo = leaf_hi = v
            else:
                itv = engine.leaf_envelope(leaf, root)
                leaf_lo, leaf_hi = itv.lb, itv.ub
            lo[mask, k] = np.maximum(lo[mask, k], leaf_lo)
            hi[mask, k] = np.minimum(hi[mask, k], leaf_hi)
    return lo, hi


def test_c02_envelope_soundness_and_monotonicity():
    with criterion("anytime envelopes sound and monotone"):
        rng = np.random.default_rng(23)
        for trial in range(20):
            model = random_relu_net(rng, [2, 4, 2], scale=1.5)
            graph = compile_model(model)
            engine = JitEngine(graph, Box((-1.0, -1.0), (1.0, 1.0)))
            xs = rng.uniform(-1.0, 1.0, size=(500, 2))
            truth = forward_batch(model, xs)

            prev_lo = np.full_like(truth, -np.inf)
            prev_hi = np.full_like(truth, np.inf)
            for _ in range(500):
                lo, hi = _step_envelopes(engine, graph, xs)
                assert np.all(lo <= truth + 1e-9), trial
                assert np.all(hi >= truth - 1e-9), trial
                assert np.all(lo >= prev_lo - 1e-12), trial
                assert np.all(hi <= prev_hi + 1e-12), trial
                prev_lo, prev_hi = lo, hi
                # budget caps are cumulative, so allow one more split per step
                step = Budget(max_splits=engine.counters.splits + 1)
                res = engine.refine_all(graph.roots, step)
                if res.complete:
                    break
            else:
                raise AssertionError("refinement did not converge")
            lo, hi = _step_envelopes(engine, graph, xs)
            assert np.max(np.abs(lo - truth)) <= 1e-9
            assert np.max(np.abs(hi - truth)) <= 1e-9


# 3 ---------------------------------------------------------------------------


def test_c03_budget_accounting():
    with criterion("work counters respect the accounting bounds"):
        rng = np.random.default_rng(37)
        worst_ratio = 0.0
        for trial in range(6):
            model = random_relu_net(rng, [2, 5, 3, 2])
            graph = compile_model(model)
            engine = JitEngine(graph, Box((-1.0, -1.0), (1.0, 1.0)))
            engine.refine_all(graph.roots)
            snap = engine.counters.snapshot()
            leaves = len(engine.active_leaves())
            assert leaves <= 1 + snap["splits"], trial
            assert engine.library.plane_count <= snap["new_guards"], trial
            work = snap["splits"] + snap["new_guards"] + leaves
            ratio = snap["lp_calls"] / max(work, 1)
            worst_ratio = max(worst_ratio, ratio)
            assert ratio <= 64.0, (trial, snap)
            print(f"  run {trial}: {snap} leaves={leaves} c={ratio:.2f}")
        print(f"  worst lp-call ratio c = {worst_ratio:.2f}")


# 4 + 5 ------------------------------------------------------------------------


def _enum_nets(count=10, widths=(2, 6, 1)):
    out = []
    for seed in range(100, 100 + count):
        rng = np.random.default_rng(seed)
        w1 = rng.normal(size=(widths[1], widths[0]))
        b1 = rng.normal(size=widths[1]) * 0.4
        w2 = rng.normal(size=(widths[2], widths[1]))
        b2 = rng.normal(size=widths[2]) * 0.4
        model = make_model(
            [widths[0]],
            [
                {"kind": "dense", "W": w1.tolist(), "b": b1.tolist()},
                {"kind": "relu"},
                {"kind": "dense", "W": w2.tolist(), "b": b2.tolist()},
            ],
        )
        out.append((model, w1, b1, w2, b2))
    return out


def test_c04_region_table_matches_pattern_enumeration():
    with criterion("region tables match activation-pattern enumeration"):
        t0 = time.perf_counter()
        gx, gy = np.meshgrid(np.linspace(-1, 1, 100), np.linspace(-1, 1, 100))
        grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
        domain = Box((-1.0, -1.0), (1.0, 1.0))
        for model, w1, b1, w2, b2 in _enum_nets():
            graph = compile_model(model)
            engine = JitEngine(graph, domain)
            table = extract_regions(graph, domain, engine=engine)
            assert table.coverage == "complete"
            cells = relu_pattern_regions(
                w1, b1, w2, b2, np.full(2, -1.0), np.full(2, 1.0)
            )
            assert len(table.fragments) == len(cells)
            by_pattern = {c["pattern"]: c for c in cells}

            # per-cell laws: identify each fragment's activation pattern at
            # a strictly interior point, match against the enumeration
            seen = set()
            for frag in table.fragments:
                s = _guardset(table.library, frag.guards)
                a, d = table.library.halfspace_rows(s)
                wit = _interior_point(a, d)
                pat = tuple(int(v) for v in (w1 @ wit + b1 >= 0))
                cell = by_pattern[pat]
                assert pat not in seen
                seen.add(pat)
                assert np.max(np.abs(frag.jacobian - cell["w"])) <= 1e-9
                assert np.max(np.abs(frag.bias - cell["b"])) <= 1e-9
            assert len(seen) == len(cells)

            # value agreement across the whole grid, and every point covered
            truth = eval_many(graph.store, graph.roots, grid)[:, 0]
            covered = np.zeros(grid.shape[0], dtype=bool)
            for frag in table.fragments:
                a, d = table.library.halfspace_rows(
                    _guardset(table.library, frag.guards)
                )
                mask = (
                    np.ones(grid.shape[0], dtype=bool)
                    if a.size == 0
                    else np.all(grid @ a.T <= d + 1e-9, axis=1)
                )
                vals = grid[mask] @ frag.jacobian[0] + frag.bias[0]
                assert np.max(np.abs(vals - truth[mask]), initial=0.0) <= 1e-9
                covered |= mask
            assert covered.all()
        assert time.perf_counter() - t0 < 120.0


def _guardset(library, ids):
    from jitswt.guards import GuardSet

    s = GuardSet()
    for g in ids:
        s = s.add(g)
    return s


def _interior_point(a, d, lo=-1.0, hi=1.0):
    """Chebyshev-style center of {a x <= d} inside the box, slack maximized."""
    from scipy.optimize import linprog

    n = 2 if a.size == 0 else a.shape[1]
    if a.size == 0:
        return np.zeros(n)
    norms = np.linalg.norm(a, axis=1)
    a_ub = np.hstack([a, norms[:, None]])
    res = linprog(
        np.append(np.zeros(n), -1.0),
        A_ub=a_ub,
        b_ub=d,
        bounds=[(lo, hi)] * n + [(0.0, 1.0)],
        method="highs",
    )
    assert res.status == 0 and res.x[-1] > 1e-9
    return res.x[:-1]


def test_c05_lipschitz_exact_and_bracketed():
    with criterion("exact L2 Lipschitz constants with monotone brackets"):
        domain = Box((-1.0, -1.0), (1.0, 1.0))
        nets = _enum_nets()
        for model, w1, b1, w2, b2 in nets:
            graph = compile_model(model)
            res = lipschitz(graph, domain, p=2)
            assert res.kind == "exact"
            cells = relu_pattern_regions(
                w1, b1, w2, b2, np.full(2, -1.0), np.full(2, 1.0)
            )
            want = max(float(np.linalg.norm(c["w"])) for c in cells)
            assert abs(res.value - want) <= 1e-9

        for model, *_ in nets[:3]:
            graph = compile_model(model)
            exact = lipschitz(graph, domain, p=2).value
            prev_lo, prev_hi = -np.inf, np.inf
            for cap in (1, 4, 16, 4096):
                out = lipschitz(
                    graph, domain, p=2,
                    budget=Budget(max_splits=cap), mode="anytime",
                )
                lo = out.lb if out.kind == "bracket" else out.value
                hi = out.ub if out.kind == "bracket" else out.value
                assert lo - 1e-12 <= exact <= hi + 1e-12
                assert lo >= prev_lo - 1e-12 and hi <= prev_hi + 1e-12
                prev_lo, prev_hi = lo, hi
            assert abs(prev_lo - exact) <= 1e-9
            assert abs(prev_hi - exact) <= 1e-9


# 6 ---------------------------------------------------------------------------


def test_c06_robustness_verdicts_match_grid_oracle():
    with criterion("robustness verdicts agree with dense grid search"):
        rng = np.random.default_rng(59)
        cases = 0
        while cases < 50:
            model = random_relu_net(rng, [2, 4, 2], scale=1.5)
            graph = compile_model(model)
            for _ in range(5):
                x0 = rng.uniform(-0.8, 0.8, size=2)
                eps = float(rng.uniform(0.05, 0.6))
                label = int(np.argmax(model.forward(x0)))
                cert = certify_robustness(model, x0, label, eps)
                assert cert.verdict in ("proof", "counterexample")

                side = np.linspace(-eps, eps, 200)
                ga, gb = np.meshgrid(x0[0] + side, x0[1] + side)
                pts = np.stack([ga.ravel(), gb.ravel()], axis=1)
                outs = eval_many(graph.store, graph.roots, pts)
                others = np.delete(outs, label, axis=1)
                grid_min = float(np.min(outs[:, label] - others.max(axis=1)))

                if grid_min > 1e-4:
                    assert cert.verdict == "proof", (grid_min, eps)
                if grid_min < -1e-4:
                    assert cert.verdict == "counterexample", (grid_min, eps)
                if cert.verdict == "proof":
                    assert grid_min > -1e-6
                else:
                    w = cert.witness
                    assert np.max(np.abs(w - x0)) <= eps + 1e-9
                    out = model.forward(w)
                    assert out[label] - max(
                        v for i, v in enumerate(out) if i != label
                    ) < 0
                cases += 1


# 7 ---------------------------------------------------------------------------


def conv_net(kernel, bias, h, w, extra=None):
    layers = [
        {
            "kind": "conv2d",
            "kernel": kernel,
            "b": bias,
            "stride": [1, 1],
            "padding": [1, 1],
        },
        {"kind": "relu"},
    ]
    if extra:
        layers += extra
    return make_model([1, h, w], layers)


def test_c07_equivariance_certificates():
    with criterion("permutation and shift equivariance certificates"):
        # graph net: arbitrary node relabeling is certified exactly
        model = fixture("gcn_10")
        rng = np.random.default_rng(61)
        perm = list(rng.permutation(10))
        cert = gcn_permutation_equivariance(
            model, perm, Box((-1.0,) * 30, (1.0,) * 30), 1e-9
        )
        assert cert.verdict == "proof"

        # image nets: exact inside the cropped interior, violated at the
        # border cells whose receptive fields touch padding
        k2 = np.arange(9, dtype=float).reshape(1, 1, 3, 3) * 0.1
        m2 = conv_net(k2.tolist(), [0.3], 6, 6)
        dom = Box((-1.0,) * 36, (1.0,) * 36)
        cert = conv_shift_equivariance(m2, (1, 1), dom, 1e-9)
        assert cert.verdict == "proof"

        # without cropping, the violation shows up at cells whose receptive
        # field touches padding; a tight box around one input keeps the
        # search trivial while the witness still sits on the face
        c = np.full(36, 0.5)
        tight = Box(tuple(c - 0.01), tuple(c + 0.01))
        cert = conv_shift_equivariance(m2, (1, 1), tight, 1e-9, crop=False)
        assert cert.verdict == "counterexample"
        x = cert.witness
        shifted = np.zeros((6, 6))
        shifted[1:, 1:] = x.reshape(6, 6)[:-1, :-1]
        lhs = m2.forward(shifted.ravel()).reshape(6, 6)
        rhs = np.zeros((6, 6))
        rhs[1:, 1:] = m2.forward(x).reshape(6, 6)[:-1, :-1]
        diff = np.abs(lhs - rhs)
        assert diff.max() > 1e-9
        # interior cells agree exactly; all discrepancy sits on the border
        assert diff[1:-1, 1:-1].max() <= 1e-9
        i, j = np.unravel_index(np.argmax(diff), diff.shape)
        assert i in (0, 5) or j in (0, 5), "violation away from the padding faces"

        # 1-row images behave as the 1-D case
        k1 = [[[[0.5, -1.0, 0.25]]]]
        m1 = conv_net(k1, [0.2], 1, 8)
        dom1 = Box((-1.0,) * 8, (1.0,) * 8)
        cert = conv_shift_equivariance(m1, (0, 1), dom1, 1e-9)
        assert cert.verdict == "proof"
        cert = conv_shift_equivariance(m1, (0, 1), dom1, 1e-9, crop=False)
        assert cert.verdict == "counterexample"


# 8 ---------------------------------------------------------------------------


def test_c08_imax_exactness():
    with criterion("exact causal influence with monotone brackets"):
        rng = np.random.default_rng(73)
        side = np.linspace(-1.0, 1.0, 400)
        ga, gb = np.meshgrid(side, side)
        grid = np.stack([ga.ravel(), gb.ravel()], axis=1)
        domain = Box((-1.0, -1.0), (1.0, 1.0))

        done = 0
        while done < 10:
            model = random_relu_net(rng, [2, 4, 2], scale=1.5)
            ch = int(rng.integers(4))
            out = imax(model, Intervention(0, ch, "zero"), domain)
            assert out.kind == "exact"

            base = compile_model(model)
            zero = base.store.affine(np.zeros(2), 0.0)
            cut = compile_model(model, base.store, overrides={(0, ch): zero})
            fa = eval_many(base.store, base.roots, grid)
            fb = eval_many(cut.store, cut.roots, grid)
            grid_max = float(np.max(np.abs(fa - fb)))
            assert out.value >= grid_max - 1e-9
            assert out.value <= grid_max + 0.05
            done += 1

        # cutting a channel that never fires changes nothing
        dead = make_model(
            [2],
            [
                {"kind": "dense", "W": [[1.0, 0.0], [0.0, 1.0]], "b": [0.0, -10.0]},
                {"kind": "relu"},
                {"kind": "dense", "W": [[1.0, 1.0]], "b": [0.0]},
            ],
        )
        out = imax(dead, Intervention(0, 1, "zero"), domain)
        assert out.kind == "exact" and out.value == 0.0

        model = random_relu_net(np.random.default_rng(99), [2, 5, 2], scale=1.5)
        exact = imax(model, Intervention(0, 0, "zero"), domain).value
        prev_lo, prev_hi = -np.inf, np.inf
        for cap in (2, 8, 100000):
            out = imax(
                model, Intervention(0, 0, "zero"), domain,
                Budget(max_splits=cap),
            )
            lo = out.lb if out.kind == "bracket" else out.value
            hi = out.ub if out.kind == "bracket" else out.value
            assert lo - 1e-12 <= exact <= hi + 1e-12
            assert lo >= prev_lo - 1e-12 and hi <= prev_hi + 1e-12
            prev_lo, prev_hi = lo, hi
        assert abs(prev_lo - exact) <= 1e-9


# 9 ---------------------------------------------------------------------------


def test_c09_jacobians_match_finite_differences():
    with criterion("pointwise Jacobians match central differences"):
        rng = np.random.default_rng(83)
        for name in FIXTURE_NAMES:
            model = fixture(name)
            graph = compile_model(model)
            n = model.input_dim
            checked = 0
            attempts = 0
            while checked < 50:
                attempts += 1
                assert attempts < 2000, name
                x = rng.uniform(-1.0, 1.0, size=n)
                res = jacobian_at(graph, x)
                if res.kind != "interior":
                    continue
                fd = finite_diff_jacobian(model.forward, x)
                assert np.max(np.abs(res.jacobian - fd)) <= 1e-4, name
                checked += 1

        # |x| at the kink: the hull of {-1, +1} has min-norm element 0
        graph = compile_model(fixture("abs1d"))
        res = jacobian_at(graph, np.array([0.0]))
        assert res.kind == "boundary"
        assert np.max(np.abs(res.jacobian)) <= 1e-6


# 10 --------------------------------------------------------------------------


def toy_gcn(rng, v=4, f_in=2, hidden=2):
    a = np.eye(v)
    for i in range(v - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    deg = a.sum(axis=1)
    ahat = a / np.sqrt(np.outer(deg, deg))
    rows, cols = np.nonzero(ahat)
    adj = {
        "rows": rows.tolist(),
        "cols": cols.tolist(),
        "vals": ahat[rows, cols].tolist(),
    }
    return make_model(
        [v, f_in],
        [
            {
                "kind": "gcn",
                "W": rng.normal(size=(f_in, hidden)).tolist(),
                "b": (rng.normal(size=hidden) * 0.3).tolist(),
                "adjacency": adj,
            },
            {"kind": "relu"},
            {
                "kind": "gcn",
                "W": rng.normal(size=(hidden, 1)).tolist(),
                "b": [0.0],
                "adjacency": adj,
            },
        ],
    )


def _ablation_damage(model, channel, xs, base_labels):
    base = compile_model(model)
    zero = base.store.affine(np.zeros(model.input_dim), 0.0)
    cut = compile_model(model, base.store, overrides={(0, channel): zero})
    outs = eval_many(cut.store, cut.roots, xs)
    return float(np.mean(np.argmax(outs, axis=1) != base_labels))


def test_c10_influence_ranking_predicts_ablation_damage():
    with criterion("top influence channel ablates worse than bottom"):
        rng = np.random.default_rng(91)
        model = toy_gcn(rng)
        n = model.input_dim
        domain = Box((-1.0,) * n, (1.0,) * n)
        ranking = rank_channels(model, 0, domain)
        assert ranking[0][1] > ranking[-1][1]

        xs = rng.uniform(-1.0, 1.0, size=(400, n))
        graph = compile_model(model)
        base_labels = np.argmax(eval_many(graph.store, graph.roots, xs), axis=1)
        top = _ablation_damage(model, ranking[0][0], xs, base_labels)
        bottom = _ablation_damage(model, ranking[-1][0], xs, base_labels)
        print(f"  damage top={top:.3f} bottom={bottom:.3f}")
        assert top >= bottom


# secondary ---------------------------------------------------------------------------

BUNDLES = pathlib.Path(__file__).resolve().parent.parent / "exporter" / "bundles"
BUNDLE_NAMES = ["ffn_20_16_8_4", "cnn_1x8x8", "gcn_karate", "gcn_random_10"]


def bundle(name):
    root = BUNDLES / name
    model = load_model((root / "model.json").read_text())
    probes = json.loads((root / "probes.json").read_text())
    return model, probes


def _relu_preacts(name, xs):
    """Inputs to every relu, via truncated copies of the serialized model."""
    d = json.loads((BUNDLES / name / "model.json").read_text())
    cols = []
    for idx, layer in enumerate(d["layers"]):
        if layer["kind"] != "relu":
            continue
        trunc = {"input_shape": d["input_shape"], "layers": d["layers"][:idx]}
        cols.append(load_model(json.dumps(trunc)).forward(xs))
    return np.concatenate(cols, axis=1)


def test_s01_exporter_round_trip():
    with criterion("exporter bundles round-trip at all probes"):
        for name in BUNDLE_NAMES:
            model, probes = bundle(name)
            xs = np.asarray(probes["inputs"])
            want = np.asarray(probes["outputs"])
            assert np.max(np.abs(model.forward(xs) - want)) <= 1e-5, name
            graph = compile_model(model)
            got = eval_many(graph.store, graph.roots, xs)
            assert np.max(np.abs(got - want)) <= 1e-6, name

            # the adversarial half must be present and genuinely hinge-adjacent
            hinge = [i for i, k in enumerate(probes["kinds"]) if k == "hinge"]
            assert len(hinge) >= 24, name
            z = _relu_preacts(name, xs[hinge])
            assert np.max(np.min(np.abs(z), axis=1)) < 0.01, name


def test_s02_exported_fixture_certificates():
    with criterion("exported gcn/cnn fixtures certify equivariance"):
        model, _ = bundle("gcn_karate")
        rng = np.random.default_rng(3)
        perm = rng.permutation(34)
        dom = Box((-1.0,) * model.input_dim, (1.0,) * model.input_dim)
        cert = gcn_permutation_equivariance(model, perm, dom, 1e-9)
        assert cert.verdict == "proof"

        cnn, _ = bundle("cnn_1x8x8")
        dom = Box((-1.0,) * cnn.input_dim, (1.0,) * cnn.input_dim)
        cert = conv_shift_equivariance(cnn, (1, 1), dom, 1e-9)
        assert cert.verdict == "proof"


def test_s03_imax_determinism_on_exported_gcn():
    with criterion("imax ranking identical across reruns"):
        model, _ = bundle("gcn_random_10")
        n = model.input_dim
        width = int(np.prod(model.shapes[0]))
        # half-width picked so several gates straddle (the search must split)
        # while the trained net, whose preacts hug zero, stays tractable
        dom = Box((-0.1,) * n, (0.1,) * n)
        runs = []
        for _ in range(2):
            vals = []
            for ch in range(width):
                out = imax(model, Intervention(0, ch, "zero"), dom)
                assert out.kind == "exact"
                vals.append(out.value)
            runs.append(vals)
        # bitwise equality, not approximate: the search is deterministic
        assert runs[0] == runs[1]
        order = sorted(range(width), key=lambda c: -runs[0][c])
        assert runs[0][order[0]] > 0.0
