"""Atoms, robustness, equivalence, equivariance, and causal influence."""

import json
import pathlib

import numpy as np
import pytest

from jitswt import (
    ArityMismatch,
    Box,
    Budget,
    GeometryError,
    Intervention,
    LinfBall,
    PropertySpec,
    SubstitutionError,
    WrongLabel,
    certify_robustness,
    check_equivalence,
    compile_model,
    compile_objective,
    conv_shift_equivariance,
    eval_many,
    extract_regions,
    gcn_permutation_equivariance,
    imax,
    load_model,
    parse_intervention,
    parse_property_spec,
    permute_gcn,
    shift_geometry,
    verify,
)

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def fixture(name):
    return load_model((FIXTURES / f"{name}.json").read_text())


def make_model(input_shape, layers):
    return load_model(json.dumps({"input_shape": input_shape, "layers": layers}))


def random_relu_net(rng, widths):
    layers = []
    for i, (a, b) in enumerate(zip(widths, widths[1:])):
        layers.append(
            {
                "kind": "dense",
                "W": rng.normal(scale=1.0 / np.sqrt(a), size=(b, a)).tolist(),
                "b": rng.normal(scale=0.3, size=b).tolist(),
            }
        )
        if i < len(widths) - 2:
            layers.append({"kind": "relu"})
    return make_model([widths[0]], layers)


def box(n, lo=-1.0, hi=1.0):
    return Box((lo,) * n, (hi,) * n)


IDENTITY_1D = make_model([1], [{"kind": "dense", "W": [[1.0]], "b": [0.0]}])
TWO_CLASS = make_model(
    [2], [{"kind": "dense", "W": [[1.0, 0.0], [-1.0, 0.0]], "b": [0.0, 0.0]}]
)


# -- atom lowering -----------------------------------------------------------


def test_lower_threshold_objective():
    g = compile_model(IDENTITY_1D)
    spec = PropertySpec(
        box(1), [{"type": "lower_threshold", "args": {"index": 0, "value": 0.5}}]
    )
    merged, obj = compile_objective(spec, g)
    for x, want in [(1.0, 0.5), (0.0, -0.5), (0.5, 0.0)]:
        got = float(eval_many(g.store, [obj], np.array([x]))[0])
        assert abs(got - want) <= 1e-12


def test_margin_objective_is_score_gap():
    g = compile_model(TWO_CLASS)
    spec = PropertySpec(
        box(2), [{"type": "margin", "args": {"label": 0, "gamma": 0.0}}]
    )
    _, obj = compile_objective(spec, g)
    rng = np.random.default_rng(2)
    for x in rng.uniform(-1, 1, size=(20, 2)):
        got = float(eval_many(g.store, [obj], x)[0])
        f = TWO_CLASS.forward(x)
        assert abs(got - (f[0] - f[1])) <= 1e-12


def test_relational_self_copy_proves():
    m = fixture("ffn_2_3_2")
    g = compile_model(m)
    from jitswt import model_to_dict

    spec = PropertySpec(
        box(2),
        [{"type": "relational", "args": {"eps": 0.1, "model": model_to_dict(m)}}],
    )
    cert = verify(g, spec)
    assert cert.verdict == "proof"


def test_conjunction_takes_the_weaker_atom():
    g = compile_model(IDENTITY_1D)
    spec = PropertySpec(
        Box((0.25,), (1.0,)),
        [
            {"type": "lower_threshold", "args": {"index": 0, "value": 0.2}},
            {"type": "upper_threshold", "args": {"index": 0, "value": 0.8}},
        ],
    )
    cert = verify(g, spec)
    assert cert.verdict == "counterexample"  # x=1 violates the upper atom
    assert cert.witness is not None and cert.witness[0] > 0.8


def test_bad_atom_index_rejected():
    g = compile_model(IDENTITY_1D)
    spec = PropertySpec(
        box(1), [{"type": "lower_threshold", "args": {"index": 3, "value": 0.0}}]
    )
    with pytest.raises(IndexError):
        compile_objective(spec, g)


def test_property_spec_json_parsing():
    spec = parse_property_spec(
        json.dumps(
            {
                "domain": {
                    "kind": "linf_ball",
                    "params": {"center": [0.0, 0.0], "radius": 0.5},
                },
                "atoms": [{"type": "margin", "args": {"label": 0}}],
            }
        )
    )
    assert isinstance(spec.domain, LinfBall)
    cert = verify(compile_model(TWO_CLASS), spec)
    assert cert.verdict == "counterexample"


# -- verify on toy nets ----------------------------------------------------------


def test_margin_proof_on_separated_box():
    g = compile_model(TWO_CLASS)
    spec = PropertySpec(
        Box((0.2, -1.0), (1.0, 1.0)),
        [{"type": "margin", "args": {"label": 0}}],
    )
    cert = verify(g, spec)
    assert cert.verdict == "proof"


def test_margin_counterexample_crossing_boundary():
    g = compile_model(TWO_CLASS)
    spec = PropertySpec(box(2), [{"type": "margin", "args": {"label": 0}}])
    cert = verify(g, spec)
    assert cert.verdict == "counterexample"
    f = TWO_CLASS.forward(cert.witness)
    assert f[0] - f[1] < 0


def test_zero_budget_returns_unknown():
    rng = np.random.default_rng(3)
    m = random_relu_net(rng, [2, 5, 2])
    spec = PropertySpec(box(2), [{"type": "margin", "args": {"label": 0}}])
    cert = verify(compile_model(m), spec, budget=Budget(max_lp_calls=0))
    assert cert.verdict == "unknown"
    assert cert.lb is not None and cert.ub is not None and cert.lb <= cert.ub


# -- robustness --------------------------------------------------------------------


def test_linear_margin_robust_at_half():
    cert = certify_robustness(TWO_CLASS, [1.0, 0.0], 0, 0.5, p=np.inf)
    assert cert.verdict == "proof"


def test_linear_margin_flips_at_three_halves():
    cert = certify_robustness(TWO_CLASS, [1.0, 0.0], 0, 1.5, p=np.inf)
    assert cert.verdict == "counterexample"
    assert cert.witness[0] < 0  # crossing lives at x1 = 0
    f = TWO_CLASS.forward(cert.witness)
    assert f[0] - f[1] < 0


def test_wrong_label_rejected():
    with pytest.raises(WrongLabel):
        certify_robustness(TWO_CLASS, [1.0, 0.0], 1, 0.5)


def test_l1_ball_robustness():
    cert = certify_robustness(TWO_CLASS, [1.0, 0.0], 0, 0.9, p=1)
    assert cert.verdict == "proof"
    cert = certify_robustness(TWO_CLASS, [1.0, 0.0], 0, 1.1, p=1)
    assert cert.verdict == "counterexample"


def test_certified_radius_tracks_grid_attack():
    rng = np.random.default_rng(5)
    m = random_relu_net(rng, [2, 4, 2])
    x0 = np.array([0.3, -0.2])
    y = int(np.argmax(m.forward(x0)))
    side = np.linspace(-1, 1, 41)
    offs = np.stack(np.meshgrid(side, side), axis=-1).reshape(-1, 2)
    for eps in [0.05, 0.1, 0.2, 0.4, 0.8]:
        pts = x0 + eps * offs
        f = m.forward(pts)
        margins = f[:, y] - np.max(
            f[:, [j for j in range(2) if j != y]], axis=1
        )
        grid_min = float(np.min(margins))
        if abs(grid_min) < 1e-4:
            continue  # too close to the flip radius for a clean comparison
        cert = certify_robustness(m, x0, y, eps, p=np.inf)
        if grid_min < 0:
            assert cert.verdict == "counterexample"
        else:
            assert cert.verdict == "proof"


# -- equivalence --------------------------------------------------------------------


def test_equivalence_to_self():
    m = fixture("ffn_2_4_2")
    cert = check_equivalence(m, m, box(2), 1e-9)
    assert cert.verdict == "proof"


def test_biased_copy_is_inequivalent():
    m = fixture("ffn_2_4_2")
    d = json.loads((FIXTURES / "ffn_2_4_2.json").read_text())
    d["layers"][-1]["b"] = [b + 0.1 for b in d["layers"][-1]["b"]]
    m2 = load_model(json.dumps(d))
    cert = check_equivalence(m, m2, box(2), 0.05)
    assert cert.verdict == "counterexample"
    diff = np.max(np.abs(m.forward(cert.witness) - m2.forward(cert.witness)))
    assert diff > 0.05


def test_arity_mismatch_rejected():
    with pytest.raises(ArityMismatch):
        check_equivalence(TWO_CLASS, IDENTITY_1D, box(2), 0.1)


def test_convex_region_reconstruction_is_equivalent():
    m = fixture("abs1d")
    table = extract_regions(compile_model(m), box(1))
    rows = [f.jacobian[0].tolist() for f in table.fragments]
    offs = [float(f.bias[0]) for f in table.fragments]
    rebuilt = make_model(
        [1],
        [
            {"kind": "dense", "W": rows, "b": offs},
            {"kind": "max_pointwise", "arity": len(rows)},
        ],
    )
    cert = check_equivalence(m, rebuilt, box(1), 1e-6)
    assert cert.verdict == "proof"


# -- equivariance --------------------------------------------------------------


def gcn_perm_forward_check(model, perm, rng, samples=20):
    permuted, p_in, p_out = permute_gcn(model, perm)
    for _ in range(samples):
        x = rng.uniform(-1, 1, size=model.input_dim)
        lhs = permuted.forward(p_in @ x)
        rhs = p_out @ model.forward(x)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_gcn_permutation_forward_identity():
    rng = np.random.default_rng(7)
    m = fixture("gcn_10")
    perm = rng.permutation(10)
    gcn_perm_forward_check(m, perm, rng)


def test_gcn_permutation_certified():
    rng = np.random.default_rng(11)
    m = fixture("gcn_10")
    perm = rng.permutation(10)
    cert = gcn_permutation_equivariance(m, perm, box(m.input_dim), 1e-9)
    assert cert.verdict == "proof"


def conv1d_net(width=8, kernel=(0.25, 0.5, 0.25)):
    return make_model(
        [1, 1, width],
        [
            {
                "kind": "conv2d",
                "kernel": [[[list(kernel)]]],
                "stride": [1, 1],
                "padding": [0, 0],
                "b": [0.0],
            },
            {"kind": "relu"},
        ],
    )


def test_conv_shift_geometry():
    m = conv1d_net()
    geo = shift_geometry(m, 1)
    assert geo["stride"] == (1, 1)
    assert geo["margin_out"] == (0, 2)  # |shift| + floor((k-1)/2) on the x axis


def test_conv_shift_proof_inside_effective_domain():
    m = conv1d_net()
    cert = conv_shift_equivariance(m, 1, box(8), 1e-7)
    assert cert.verdict == "proof"


def test_conv_shift_counterexample_at_padding_face():
    m = conv1d_net()
    cert = conv_shift_equivariance(m, 1, box(8), 1e-7, crop=False)
    assert cert.verdict == "counterexample"
    x = cert.witness
    shifted = np.concatenate([[0.0], x[:-1]])
    lhs = m.forward(shifted)
    rhs = np.concatenate([[0.0], m.forward(x)[:-1]])
    assert np.max(np.abs(lhs - rhs)) > 1e-7


def test_misaligned_shift_rejected():
    m = make_model(
        [1, 1, 8],
        [
            {
                "kind": "conv2d",
                "kernel": [[[[0.5, 0.5]]]],
                "stride": [1, 2],
                "padding": [0, 0],
                "b": [0.0],
            }
        ],
    )
    with pytest.raises(GeometryError):
        shift_geometry(m, 1)
    geo = shift_geometry(m, 2)
    assert geo["out_shift"] == (0, 1)


def test_dense_net_rejected_for_shifts():
    with pytest.raises(GeometryError):
        shift_geometry(fixture("ffn_2_3_2"), 1)


# -- causal influence -----------------------------------------------------------


def test_identity_zeroing_has_unit_influence():
    out = imax(IDENTITY_1D, Intervention(0, 0, "zero"), box(1))
    assert out.kind == "exact"
    assert abs(out.value - 1.0) <= 1e-9
    assert abs(abs(out.point[0]) - 1.0) <= 1e-9


def test_dead_channel_has_zero_influence():
    m = make_model(
        [1],
        [
            {"kind": "dense", "W": [[1.0]], "b": [-5.0]},
            {"kind": "relu"},
            {"kind": "dense", "W": [[2.0]], "b": [0.3]},
        ],
    )
    out = imax(m, Intervention(1, 0, "zero"), box(1))
    assert out.kind == "exact"
    assert out.value == 0.0


def test_hidden_channel_influence_matches_grid():
    rng = np.random.default_rng(13)
    m = random_relu_net(rng, [2, 4, 2])
    iv = Intervention(1, 2, "zero")
    out = imax(m, iv, box(2))
    assert out.kind == "exact"

    d = json.loads(json.dumps({"input_shape": [2], "layers": []}))  # rebuild by hand
    w1 = np.asarray(m.layers[0].params["W"])
    b1 = np.asarray(m.layers[0].params["b"])
    w2 = np.asarray(m.layers[2].params["W"])
    b2 = np.asarray(m.layers[2].params["b"])

    def cut_forward(x):
        h = np.maximum(w1 @ x + b1, 0.0)
        h[2] = 0.0
        return w2 @ h + b2

    side = np.linspace(-1, 1, 150)
    best = 0.0
    for a in side:
        pts = np.stack([np.full_like(side, a), side], axis=1)
        f = m.forward(pts)
        g = np.stack([cut_forward(x) for x in pts])
        best = max(best, float(np.max(np.abs(f - g))))
    assert out.value >= best - 1e-9
    assert out.value <= best + 0.05  # grid resolution slack


def test_affine_policy_and_errors():
    out = imax(
        IDENTITY_1D, Intervention(0, 0, "affine", np.array([0.5]), 0.0), box(1)
    )
    assert out.kind == "exact" and abs(out.value - 0.5) <= 1e-9
    with pytest.raises(SubstitutionError):
        imax(IDENTITY_1D, Intervention(0, 5, "zero"), box(1))
    with pytest.raises(SubstitutionError):
        imax(
            IDENTITY_1D,
            Intervention(0, 0, "affine", np.array([1.0, 2.0]), 0.0),
            box(1),
        )


def test_imax_bracket_monotone_in_budget():
    rng = np.random.default_rng(17)
    m = random_relu_net(rng, [3, 8, 8, 2])
    iv = Intervention(1, 3, "zero")
    exact = imax(m, iv, box(3))
    assert exact.kind == "exact"
    prev_lo, prev_hi = -np.inf, np.inf
    for cap in [10, 100, 100000]:
        out = imax(m, iv, box(3), budget=Budget(max_lp_calls=cap))
        lo = out.value if out.kind == "exact" else out.lb
        hi = out.value if out.kind == "exact" else out.ub
        assert lo >= prev_lo - 1e-12 and hi <= prev_hi + 1e-12
        assert lo - 1e-9 <= exact.value <= hi + 1e-9
        prev_lo, prev_hi = lo, hi


def test_intervention_json_round_trip():
    iv = parse_intervention(
        json.dumps(
            {
                "target": {"layer": 1, "channel": 3},
                "policy": {"kind": "affine", "W": [1.0, 0.0], "b": 0.25},
            }
        )
    )
    assert (iv.layer, iv.channel, iv.policy) == (1, 3, "affine")
    assert iv.b == 0.25 and np.allclose(iv.w, [1.0, 0.0])
    iv2 = parse_intervention(
        {"target": {"layer": 0, "channel": 1}, "policy": {"kind": "zero"}}
    )
    assert iv2.policy == "zero" and iv2.w is None
