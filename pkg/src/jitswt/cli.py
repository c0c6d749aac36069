"""Command-line front end: compile/analyze/verify with JSON payloads.

Exit codes: 0 proof/success, 1 counterexample, 2 unknown or budget-limited
result, 10 usage errors, 11 I/O errors, 12 invalid inputs, 13 numerical
failure. Payloads go to stdout (or --out); a one-line summary goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .analysis import extract_regions, extremum, jacobian_at, lipschitz
from .compiler import compile_model, structural_counts
from .engine import Budget, JitEngine
from .errors import JitSwtError, NumericalFailure
from .exprs import ExprStore
from .model import load_model
from .oracle import Box
from .properties import (
    Intervention,
    certify_robustness,
    check_equivalence,
    conv_shift_equivariance,
    domain_from_dict,
    gcn_permutation_equivariance,
    imax as run_imax,
    parse_intervention,
    parse_property_spec,
)

EXIT_PROOF = 0
EXIT_COUNTEREXAMPLE = 1
EXIT_UNKNOWN = 2
EXIT_USAGE = 10
EXIT_IO = 11
EXIT_INVALID = 12
EXIT_NUMERICAL = 13

VERDICT_EXIT = {
    "proof": EXIT_PROOF,
    "counterexample": EXIT_COUNTEREXAMPLE,
    "unknown": EXIT_UNKNOWN,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2, which collides with the Unknown verdict
    def error(self, message):
        raise UsageError(message)


def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc


def _load(path: str):
    return load_model(_read_text(path))


def _vector(text: str) -> np.ndarray:
    """Comma-separated floats, or @file pointing at a JSON array."""
    if text.startswith("@"):
        return np.asarray(json.loads(_read_text(text[1:])), dtype=float)
    return np.asarray([float(v) for v in text.split(",")], dtype=float)


def _budget(args) -> Budget | None:
    caps = (args.max_splits, args.max_new_guards, args.max_lp_calls)
    if all(c is None for c in caps):
        return None
    for c in caps:
        if c is not None and c < 0:
            raise UsageError("budget caps must be nonnegative")
    return Budget(*caps)


def _domain(args, n: int):
    if args.domain is not None:
        text = args.domain
        if text.startswith("@"):
            text = _read_text(text[1:])
        return domain_from_dict(json.loads(text))
    if args.box is not None:
        lo, hi = args.box
        if lo > hi:
            raise UsageError("--box LO HI needs LO <= HI")
        return Box((lo,) * n, (hi,) * n)
    raise UsageError("specify a domain via --box LO HI or --domain JSON")


def _add_common(p: argparse.ArgumentParser, model=True, domain=True):
    if model:
        p.add_argument("--model", required=True, help="model JSON path")
    if domain:
        p.add_argument(
            "--box", nargs=2, type=float, metavar=("LO", "HI"),
            help="uniform box domain over all inputs",
        )
        p.add_argument(
            "--domain", help="domain JSON: {kind, params} (or @file)"
        )
    p.add_argument("--out", help="write the JSON payload here instead of stdout")
    p.add_argument("--max-splits", type=int, default=None)
    p.add_argument("--max-new-guards", type=int, default=None)
    p.add_argument("--max-lp-calls", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="rng seed for generated data")
    p.add_argument(
        "--threads", type=int, default=1,
        help="worker cap; the reference scheduler is sequential and "
        "deterministic, so any value yields the same leaf cover",
    )


def build_parser() -> _Parser:
    root = _Parser(prog="jit-swt", description=__doc__)
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="lower a model and report counters")
    _add_common(p, domain=False)

    p = sub.add_parser("regions", help="enumerate affine fragments")
    _add_common(p)
    p.add_argument("--csv", action="store_true", help="emit the table as CSV")

    p = sub.add_parser("jacobian", help="pointwise Jacobian with hinge handling")
    _add_common(p, domain=False)
    p.add_argument("--x", required=True, help="input point: v1,v2,... or @file")

    p = sub.add_parser("extremum", help="exact output range over a domain")
    _add_common(p)
    p.add_argument("--index", type=int, default=0, help="output index")
    p.add_argument("--sense", choices=["max", "min"], default="max")

    p = sub.add_parser("lipschitz", help="Lipschitz constant or bracket")
    _add_common(p)
    p.add_argument("--p", default="2", help="input norm: 1, 2 or inf")
    p.add_argument("--r", default=None, help="output norm for vector outputs")
    p.add_argument("--mode", choices=["exact", "anytime"], default="exact")

    p = sub.add_parser("verify", help="check a property spec")
    _add_common(p, domain=False)
    p.add_argument("--spec", required=True, help="PropertySpec JSON path")

    p = sub.add_parser("robust", help="local robustness certificate")
    _add_common(p, domain=False)
    p.add_argument("--x0", required=True, help="center point: v1,v2,... or @file")
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--p", default="inf", help="ball norm: 1, 2 or inf")
    p.add_argument("--gamma", type=float, default=0.0)

    p = sub.add_parser("equiv", help="epsilon-equivalence of two models")
    _add_common(p)
    p.add_argument("--other", required=True, help="second model JSON path")
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser(
        "equivariance", help="permutation (GCN) or shift (CNN) equivariance"
    )
    _add_common(p)
    p.add_argument("--perm", help="node permutation: i1,i2,... (GCN)")
    p.add_argument("--shift", help="pixel shift: s or sy,sx (CNN)")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument(
        "--no-crop", action="store_true",
        help="compare border cells too (padding effects become violations)",
    )

    p = sub.add_parser("imax", help="causal influence of one channel")
    _add_common(p)
    p.add_argument(
        "--intervention", required=True,
        help='JSON {"target":{layer,channel},"policy":{...}} (or @file)',
    )

    p = sub.add_parser("bench", help="accounting counters over net families")
    _add_common(p, model=False, domain=False)
    p.add_argument("--csv", action="store_true")
    return root


# -- output plumbing ---------------------------------------------------------


def _emit(payload: dict, args, summary: str) -> None:
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    text = json.dumps(payload, sort_keys=True, indent=2)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    print(summary, file=sys.stderr)


def _emit_raw(text: str, args, summary: str) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(summary, file=sys.stderr)


def _maybe_trace(engine: JitEngine) -> None:
    if os.environ.get("JITSWT_LOG"):
        sys.stderr.write(engine.dump_trace())


def _cert_payload(cert, command: str) -> dict:
    payload = json.loads(cert.to_json())
    payload["command"] = command
    return payload


# -- subcommand bodies ---------------------------------------------------------


def _cmd_compile(args) -> int:
    model = _load(args.model)
    graph = compile_model(model)
    payload = {
        "command": "compile",
        "model": args.model,
        "inputs": graph.input_dim,
        "outputs": graph.output_dim,
        "nodes": len(graph.store),
        "gate_sites": len(graph.gate_sites),
        "counts": graph.counts,
        "structural_bounds": structural_counts(graph),
    }
    _emit(payload, args, f"compiled {args.model}: {len(graph.store)} nodes")
    return EXIT_PROOF


def _cmd_regions(args) -> int:
    model = _load(args.model)
    graph = compile_model(model)
    domain = _domain(args, graph.input_dim)
    engine = JitEngine(graph, domain)
    table = extract_regions(graph, domain, _budget(args), engine=engine)
    _maybe_trace(engine)
    summary = (
        f"{len(table.fragments)} fragments ({table.coverage}); "
        f"counters {engine.counters.snapshot()}"
    )
    if args.csv:
        _emit_raw(table.to_csv(), args, summary)
    else:
        payload = json.loads(table.to_json())
        payload["command"] = "regions"
        payload["counters"] = engine.counters.snapshot()
        _emit(payload, args, summary)
    return EXIT_PROOF if table.coverage == "complete" else EXIT_UNKNOWN


def _cmd_jacobian(args) -> int:
    model = _load(args.model)
    graph = compile_model(model)
    x = _vector(args.x)
    if x.size != graph.input_dim:
        raise UsageError(f"--x wants {graph.input_dim} entries, got {x.size}")
    res = jacobian_at(graph, x)
    payload = {
        "command": "jacobian",
        "kind": res.kind,
        "jacobian": res.jacobian.tolist(),
        "contributors": [c.tolist() for c in res.contributors],
    }
    _emit(payload, args, f"{res.kind} Jacobian at {args.x}")
    return EXIT_PROOF


def _cmd_extremum(args) -> int:
    model = _load(args.model)
    graph = compile_model(model)
    domain = _domain(args, graph.input_dim)
    out = extremum(graph, args.index, domain, args.sense, _budget(args))
    payload = {
        "command": "extremum",
        "kind": out.kind,
        "sense": args.sense,
        "index": args.index,
        "value": out.value,
        "point": None if out.point is None else out.point.tolist(),
        "lb": out.lb,
        "ub": out.ub,
        "counters": out.counters,
    }
    if out.kind == "exact":
        _emit(payload, args, f"{args.sense} F_{args.index} = {out.value:.9g}")
        return EXIT_PROOF
    _emit(payload, args, f"bracket [{out.lb:.9g}, {out.ub:.9g}] (budget)")
    return EXIT_UNKNOWN


def _cmd_lipschitz(args) -> int:
    model = _load(args.model)
    graph = compile_model(model)
    domain = _domain(args, graph.input_dim)
    r = None if args.r is None else args.r
    engine = JitEngine(graph, domain)
    res = lipschitz(
        graph, domain, p=args.p, r=r, budget=_budget(args),
        mode=args.mode, engine=engine,
    )
    _maybe_trace(engine)
    payload = {
        "command": "lipschitz",
        "kind": res.kind,
        "p": str(args.p),
        "r": None if r is None else str(r),
        "value": res.value,
        "lb": res.lb,
        "ub": res.ub,
        "fragments": res.fragments,
        "counters": engine.counters.snapshot(),
    }
    if res.kind == "exact":
        _emit(payload, args, f"L = {res.value:.9g} over {res.fragments} fragments")
        return EXIT_PROOF
    _emit(payload, args, f"L in [{res.lb:.9g}, {res.ub:.9g}]")
    return EXIT_UNKNOWN


def _cmd_verify(args) -> int:
    model = _load(args.model)
    graph = compile_model(model)
    spec = parse_property_spec(_read_text(args.spec))
    from .properties import verify as run_verify

    cert = run_verify(graph, spec, _budget(args))
    _emit(_cert_payload(cert, "verify"), args, f"verdict: {cert.verdict}")
    return VERDICT_EXIT[cert.verdict]


def _cmd_robust(args) -> int:
    model = _load(args.model)
    x0 = _vector(args.x0)
    p = float("inf") if args.p == "inf" else int(args.p)
    cert = certify_robustness(
        model, x0, args.label, args.eps, p=p, gamma=args.gamma,
        budget=_budget(args),
    )
    payload = _cert_payload(cert, "robust")
    payload.update({"eps": args.eps, "p": str(args.p), "label": args.label})
    _emit(payload, args, f"verdict: {cert.verdict} at eps={args.eps}")
    return VERDICT_EXIT[cert.verdict]


def _cmd_equiv(args) -> int:
    model_a = _load(args.model)
    model_b = _load(args.other)
    domain = _domain(args, model_a.input_dim)
    cert = check_equivalence(model_a, model_b, domain, args.eps, _budget(args))
    payload = _cert_payload(cert, "equiv")
    payload["eps"] = args.eps
    _emit(payload, args, f"verdict: {cert.verdict} at eps={args.eps}")
    return VERDICT_EXIT[cert.verdict]


def _cmd_equivariance(args) -> int:
    model = _load(args.model)
    if (args.perm is None) == (args.shift is None):
        raise UsageError("pass exactly one of --perm or --shift")
    domain = _domain(args, model.input_dim)
    if args.perm is not None:
        perm = [int(v) for v in args.perm.split(",")]
        cert = gcn_permutation_equivariance(
            model, perm, domain, args.eps, _budget(args)
        )
        kind = "permutation"
    else:
        parts = [int(v) for v in args.shift.split(",")]
        shift = parts[0] if len(parts) == 1 else (parts[0], parts[1])
        cert = conv_shift_equivariance(
            model, shift, domain, args.eps, _budget(args), crop=not args.no_crop
        )
        kind = "shift"
    payload = _cert_payload(cert, "equivariance")
    payload.update({"transform": kind, "eps": args.eps})
    _emit(payload, args, f"{kind} equivariance: {cert.verdict}")
    return VERDICT_EXIT[cert.verdict]


def _cmd_imax(args) -> int:
    model = _load(args.model)
    text = args.intervention
    if text.startswith("@"):
        text = _read_text(text[1:])
    iv = parse_intervention(json.loads(text))
    domain = _domain(args, model.input_dim)
    out = run_imax(model, iv, domain, _budget(args))
    payload = {
        "command": "imax",
        "kind": out.kind,
        "layer": iv.layer,
        "channel": iv.channel,
        "value": out.value,
        "witness": None if out.point is None else out.point.tolist(),
        "lb": out.lb,
        "ub": out.ub,
        "counters": out.counters,
    }
    if out.kind == "exact":
        _emit(payload, args, f"Imax = {out.value:.9g}")
        return EXIT_PROOF
    _emit(payload, args, f"Imax in [{out.lb:.9g}, {out.ub:.9g}]")
    return EXIT_UNKNOWN


def _bench_families(seed: int):
    rng = np.random.default_rng(seed)

    def dense(n_in, n_out):
        return {
            "kind": "dense",
            "W": rng.normal(scale=1.0 / np.sqrt(n_in), size=(n_out, n_in)).tolist(),
            "b": rng.normal(scale=0.3, size=n_out).tolist(),
        }

    fams = []
    for widths in ([2, 4, 2], [2, 8, 2], [3, 6, 6, 2]):
        layers = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            layers.append(dense(a, b))
            if i < len(widths) - 2:
                layers.append({"kind": "relu"})
        fams.append(
            (f"ffn_{'_'.join(map(str, widths))}",
             {"input_shape": [widths[0]], "layers": layers})
        )
    fams.append(
        (
            "maxpool_6",
            {
                "input_shape": [6],
                "layers": [dense(6, 6), {"kind": "max_pointwise", "arity": 3}],
            },
        )
    )
    return fams


def _cmd_bench(args) -> int:
    rows = []
    budget = _budget(args) or Budget(max_lp_calls=20000)
    for name, spec in _bench_families(args.seed):
        model = load_model(json.dumps(spec))
        graph = compile_model(model)
        engine = JitEngine(graph, Box((-1.0,) * model.input_dim, (1.0,) * model.input_dim))
        res = engine.refine_all(budget=budget)
        snap = engine.counters.snapshot()
        bounds = structural_counts(graph)
        leaves = res.refined + res.pending
        # per-leaf guard rows are capped by the hinge-count formula; the
        # global library is not (deep gates linearize differently per leaf)
        max_guards = max((len(l.guards) for l in leaves), default=0)
        rows.append(
            {
                "family": name,
                "complete": res.complete,
                "leaves": len(leaves),
                "planes": engine.library.plane_count,
                "max_leaf_guards": max_guards,
                "planes_bound": bounds["planes_bound"],
                **snap,
            }
        )
    summary = f"{len(rows)} families benchmarked"
    if args.csv:
        import csv as _csv
        import io

        buf = io.StringIO()
        w = _csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
        _emit_raw(buf.getvalue(), args, summary)
    else:
        _emit({"command": "bench", "rows": rows}, args, summary)
    return EXIT_PROOF


COMMANDS = {
    "compile": _cmd_compile,
    "regions": _cmd_regions,
    "jacobian": _cmd_jacobian,
    "extremum": _cmd_extremum,
    "lipschitz": _cmd_lipschitz,
    "verify": _cmd_verify,
    "robust": _cmd_robust,
    "equiv": _cmd_equiv,
    "equivariance": _cmd_equivariance,
    "imax": _cmd_imax,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IOError, json.JSONDecodeError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (JitSwtError, ValueError, IndexError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
