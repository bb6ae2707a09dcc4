"""``canonmap`` command-line front end.

Exit codes: 0 definite verdict (or all checks pass), 1 usage or parse
error, 2 hypothesis violation (or a failed check), 3 classification failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .classify import (
    CheckResult,
    check_orthogonality_propagation,
    check_pure_preserving,
    check_strict_convex_preserving,
    classify_single,
)
from .jsonio import (
    SpecError,
    dumps,
    encode_matrix,
    load_map_spec,
    load_state,
    report_to_json,
    spec_digest,
)
from .maps import MapError, TableMissError
from .matcore import DEFAULT_TOL, norms, tensor
from .multipart import (
    check_product_preservation,
    check_separable_pure_preserving,
    check_separable_strict_convex,
    classify_bipartite,
    classify_multipartite,
    random_separable_state,
)
from .states import as_rng, check_lemma21, random_pure, random_state, spectral_resolution

EXIT_OK, EXIT_USAGE, EXIT_HYPOTHESIS, EXIT_FAILURE = 0, 1, 2, 3
CHECKS = ("pure", "convex", "orthogonality", "product", "lemma21", "lemma31")
GENERATE_KINDS = ("measurement", "local_measurement", "constant", "segment")


class UsageError(Exception):
    pass


def _default_seed() -> int:
    env = os.environ.get("CANONMAP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CANONMAP_SEED={env!r} is not an integer") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_spec(path):
    with open(path, "rb") as fh:
        data = fh.read()
    psi, _ = load_map_spec(data)
    return psi, spec_digest(data)


# --- classify ----------------------------------------------------------------------


def cmd_classify(args) -> int:
    psi, digest = _read_spec(args.spec)
    seed = args.seed if args.seed is not None else _default_seed()
    tol = DEFAULT_TOL if args.tol is None else replace(DEFAULT_TOL, recovery_tol=args.tol)
    start = time.perf_counter()
    if len(psi.in_dims) == 1 and len(psi.out_dims) == 1:
        report = classify_single(psi, tol, seed, args.samples)
    elif len(psi.in_dims) == 2:
        report = classify_bipartite(psi, tol, seed, args.samples)
    else:
        report = classify_multipartite(psi, tol, seed, args.samples)
    timings = {"classify": round(1000 * (time.perf_counter() - start), 3)} if args.timings else None
    doc = report_to_json(report, digest, [seed], timings_ms=timings, version=__version__)
    _emit(dumps(doc), args.out)
    return {"verdict": EXIT_OK, "out_of_scope": EXIT_HYPOTHESIS}.get(report.status, EXIT_FAILURE)


# --- verify ------------------------------------------------------------------------


def _sample_input(psi, rng):
    # maps on several factors are only defined on separable states
    if len(psi.in_dims) == 1:
        return random_state(psi.dim_in, None, rng)
    return random_separable_state(psi.in_dims, rng)


def _projection_battery(psi, n, rng) -> CheckResult:
    # spectral projectors of images recombine to a projection; non-orthogonal families never do
    for _ in range(n):
        out = psi(_sample_input(psi, rng))
        terms = [(1.0, p) for _, p in spectral_resolution(out).terms]
        verdict = check_lemma21(terms)
        if not verdict.is_projection or verdict.max_overlap > 1e-9:
            return CheckResult("lemma21", False, {"image": out.mat, "residual": verdict.idempotency_residual})
    d = psi.dim_out
    if d >= 2:
        for _ in range(n):
            a, b = random_pure(d, rng), random_pure(d, rng)
            w = rng.uniform(0.05, 1.0, size=2)
            verdict = check_lemma21([(w[0], a), (w[1], b)])
            if verdict.is_projection:
                return CheckResult("lemma21", False, {"weights": w, "q1": a.mat, "q2": b.mat})
    return CheckResult("lemma21", True, None, {"trials": 2 * n})


def _norm_battery(psi, n, rng) -> CheckResult:
    worst = 0.0
    for i in range(n):
        if i % 2:
            t = psi(_sample_input(psi, rng)).mat - psi(_sample_input(psi, rng)).mat
        else:
            k = psi.dim_out
            r = int(rng.integers(1, k + 1))
            t = (rng.normal(size=(k, r)) + 1j * rng.normal(size=(k, r))) @ (
                rng.normal(size=(r, k)) + 1j * rng.normal(size=(r, k))
            )
        tr, hs, rank = norms(t)
        if rank == 0:
            continue
        lo = tr * tr / rank - hs * hs
        hi = hs * hs - tr * tr
        worst = max(worst, lo, hi)
        if lo > 1e-10 * max(1.0, tr * tr) or hi > 1e-10 * max(1.0, tr * tr):
            return CheckResult("lemma31", False, {"matrix": t, "trace_norm": tr, "hs_norm": hs, "rank": rank})
    return CheckResult("lemma31", True, None, {"trials": n, "max_violation": worst})


def _skipped(name, why) -> CheckResult:
    return CheckResult(name, True, None, {"skipped": why})


def run_check(name, psi, samples, seed) -> CheckResult:
    rng = as_rng(seed)
    single = len(psi.in_dims) == 1
    if name == "pure":
        return check_pure_preserving(psi, samples, rng) if single else check_separable_pure_preserving(psi, samples, rng)
    if name == "convex":
        if single:
            return check_strict_convex_preserving(psi, samples, rng)
        return check_separable_strict_convex(psi, samples, rng)
    if name == "orthogonality":
        if not single:
            return _skipped(name, "defined for single-system maps only")
        return check_orthogonality_propagation(psi, rng)
    if name == "product":
        if single:
            return _skipped(name, "single tensor factor")
        return check_product_preservation(psi, None, 2 * samples, rng)
    if name == "lemma21":
        return _projection_battery(psi, samples, rng)
    if name == "lemma31":
        return _norm_battery(psi, samples, rng)
    raise UsageError(f"unknown check {name!r}")


def cmd_verify(args) -> int:
    names = [c.strip() for c in args.checks.split(",") if c.strip()] if args.checks else list(CHECKS)
    bad = [c for c in names if c not in CHECKS]
    if bad or not names:
        raise UsageError(f"unknown check(s) {bad}; choose from {', '.join(CHECKS)}")
    psi, digest = _read_spec(args.spec)
    seed = args.seed if args.seed is not None else _default_seed()
    results = [run_check(name, psi, args.samples, seed) for name in names]
    doc = report_to_json(None, digest, [seed], checks=results, version=__version__)
    doc["status"] = "pass" if all(results) else "fail"
    _emit(dumps(doc), args.out)
    return EXIT_OK if all(results) else EXIT_HYPOTHESIS


# --- generate ----------------------------------------------------------------------


def _rand_op(rng, k, m):
    for _ in range(100):
        mat = (rng.normal(size=(k, m)) + 1j * rng.normal(size=(k, m))) / np.sqrt(2)
        if np.linalg.svd(mat, compute_uv=False)[-1] > 1e-3:
            return mat
    raise RuntimeError("could not draw a well-conditioned operator")


def generate_spec(kind, dims_in, dims_out=None, seed=0, transpose=None, perm=None, constant_slots=()) -> dict:
    """Random map specification of the given kind; deterministic in ``seed``.

    ``transpose`` is ``None``, ``"all"`` or a list of 1-based output slots.
    ``perm`` is 1-based: output slot ``j`` reads input ``perm[j]``.
    """
    rng = np.random.default_rng(seed)
    dims_in = list(dims_in)
    if any(d < 2 for d in dims_in):
        raise UsageError("every input dimension must be >= 2")
    if kind == "measurement":
        if len(dims_in) != 1:
            raise UsageError("measurement maps act on one factor; use local_measurement")
        dims_out = list(dims_out or dims_in)
        if len(dims_out) != 1 or dims_out[0] < dims_in[0]:
            raise UsageError("measurement needs one output dimension >= the input dimension")
        params = {"m": encode_matrix(_rand_op(rng, dims_out[0], dims_in[0])), "transpose": transpose is not None}
    elif kind == "local_measurement":
        n = len(dims_in)
        perm = list(perm) if perm else list(range(1, n + 1))
        if sorted(perm) != list(range(1, n + 1)):
            raise UsageError(f"{perm} is not a permutation of 1..{n}")
        dims_out = list(dims_out) if dims_out else [dims_in[p - 1] for p in perm]
        if len(dims_out) != n:
            raise UsageError(f"need {n} output dimensions")
        flagged = set(range(1, n + 1)) if transpose == "all" else set(transpose or ())
        consts = set(constant_slots or ())
        if not flagged <= set(range(1, n + 1)) or not consts <= set(range(1, n + 1)):
            raise UsageError("slot indices must lie in 1..n")
        slots = []
        for j in range(1, n + 1):
            k = dims_out[j - 1]
            if j in consts:
                slots.append({"constant": encode_matrix(random_pure(k, rng).mat)})
                continue
            src = perm[j - 1]
            if k < dims_in[src - 1]:
                raise UsageError(f"output slot {j} has dim {k} < input factor {src} dim {dims_in[src - 1]}")
            slots.append({"source": src, "m": encode_matrix(_rand_op(rng, k, dims_in[src - 1])), "transpose": j in flagged})
        params = {"slots": slots}
    elif kind == "constant":
        dims_out = list(dims_out or dims_in)
        q = tensor(*[random_pure(k, rng).mat for k in dims_out])
        params = {"state": encode_matrix(q)}
    elif kind == "segment":
        if dims_in != [2]:
            raise UsageError("segment maps use the qubit partition rule and need dims_in = 2")
        dims_out = list(dims_out or [2])
        if len(dims_out) != 1:
            raise UsageError("segment output must be a single factor")
        params = {
            "q1": encode_matrix(random_pure(dims_out[0], rng).mat),
            "q2": encode_matrix(random_pure(dims_out[0], rng).mat),
            "partition_rule": "bloch",
        }
    else:
        raise UsageError(f"unknown kind {kind!r}")
    return {"kind": kind, "dims_in": dims_in, "dims_out": dims_out, "parameters": params, "seed": int(seed)}


def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    perm = args.perm
    if args.swap:
        if perm is not None or len(args.dims_in) != 2:
            raise UsageError("--swap needs exactly two input factors and no --perm")
        perm = [2, 1]
    transpose = None
    if args.transpose is not None:
        transpose = "all" if args.transpose == "all" else _int_list(args.transpose)
    spec = generate_spec(args.kind, args.dims_in, args.dims_out, seed, transpose, perm, args.constant_slots)
    _emit(dumps(spec), args.out)
    return EXIT_OK


# --- apply -------------------------------------------------------------------------


def cmd_apply(args) -> int:
    psi, _ = _read_spec(args.spec)
    with open(args.state, "rb") as fh:
        rho = load_state(fh.read())
    if rho.dim != psi.dim_in:
        raise UsageError(f"state has dimension {rho.dim}, map expects {psi.dim_in} (dims {psi.in_dims})")
    out = psi(rho)
    _emit(dumps({"dims": list(psi.out_dims), "matrix": encode_matrix(out.mat)}), args.out)
    return EXIT_OK


# --- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="canonmap", description="Classify state maps into canonical forms.")
    parser.add_argument("--version", action="version", version=f"canonmap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify a map specification")
    p.add_argument("spec")
    p.add_argument("--tol", type=float, default=None, help="reconstruction tolerance (default 1e-7)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--timings", action="store_true", help="record wall-clock timings in the report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("verify", help="run hypothesis and invariant batteries")
    p.add_argument("spec")
    p.add_argument("--checks", help=f"comma-separated subset of {','.join(CHECKS)}")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="emit a random map specification")
    p.add_argument("kind", choices=GENERATE_KINDS)
    p.add_argument("--dims-in", type=_int_list, required=True)
    p.add_argument("--dims-out", type=_int_list)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--transpose", nargs="?", const="all", help="flag all slots or a list of 1-based slots")
    p.add_argument("--swap", action="store_true")
    p.add_argument("--perm", type=_int_list, help="1-based: output slot j reads input perm[j]")
    p.add_argument("--constant-slots", type=_int_list, default=[])
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("apply", help="apply a map to a state")
    p.add_argument("spec")
    p.add_argument("state")
    p.add_argument("--out")
    p.set_defaults(func=cmd_apply)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"canonmap: spec error at {exc}", file=sys.stderr)
    except (UsageError, MapError, OSError) as exc:
        print(f"canonmap: {exc}", file=sys.stderr)
    except TableMissError as exc:
        print(f"canonmap: oracle undefined at a sampled input ({exc}); add a base map or default_output", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
