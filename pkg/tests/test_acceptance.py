"""Acceptance suite.

Each test below checks one acceptance criterion at its stated tolerance.
The end-of-session summary (see ``conftest.py``) prints one PASS/FAIL line
per criterion.
"""

import itertools
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from canonmap.classify import (
    Constant,
    Measurement,
    Segment,
    check_strict_convex_preserving,
    classify_single,
    gauge_fix,
)
from canonmap.jsonio import dumps, encode_matrix
from canonmap.maps import (
    ConstantSlot,
    MeasurementOp,
    MeasureSlot,
    SegmentSpec,
    constant_map,
    custom_map,
    identity_map,
    local_map,
    local_measurement_map,
    measurement_map,
    segment_map,
    spectral_argmax_map,
    table_map,
)
from canonmap.matcore import norms, reduction, trace_distance
from canonmap.multipart import (
    FactorContraction,
    LocalConstant,
    LocalMeasurement,
    SegmentPair,
    check_product_preservation,
    classify_bipartite,
    classify_multipartite,
)
from canonmap.states import (
    BlochVector,
    bloch_to_state,
    check_lemma21,
    is_pure,
    random_pure,
    random_state,
    state_to_bloch,
)


def rand_op(rng, k, m):
    return rng.normal(size=(k, m)) + 1j * rng.normal(size=(k, m))


def max_abs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def endpoint_error(got, want) -> float:
    """Distance between two unordered pairs of matrices."""
    straight = max(max_abs(got[0], want[0]), max_abs(got[1], want[1]))
    crossed = max(max_abs(got[0], want[1]), max_abs(got[1], want[0]))
    return min(straight, crossed)


# --- single system: measurement round trip ----------------------------------------


@pytest.mark.acceptance("single-system measurement round trip (100 configurations)")
def test_single_measurement_round_trip(acceptance_note):
    rng = np.random.default_rng(1000)
    start = time.perf_counter()
    worst_m = worst_res = 0.0
    failures = []
    for i in range(100):
        m_dim = int(rng.integers(2, 7))
        k_dim = int(rng.integers(m_dim, 7))
        flag = bool(rng.integers(2))
        m = rand_op(rng, k_dim, m_dim)
        psi = measurement_map(m, transpose=flag)
        rep = classify_single(psi, seed=i)
        if not isinstance(rep.form, Measurement) or rep.form.transpose_flag != flag:
            failures.append((i, rep.status, getattr(rep.form, "variant", None)))
            continue
        err = max_abs(rep.form.m, gauge_fix(m))
        rebuilt = rep.form.to_oracle()
        held_out = [random_state(m_dim, int(rng.integers(1, m_dim + 1)), rng) for _ in range(50)]
        res = max(trace_distance(rebuilt(r).mat, psi(r).mat) for r in held_out)
        worst_m, worst_res = max(worst_m, err), max(worst_res, res)
        if err > 1e-7 or res >= 1e-7:
            failures.append((i, err, res))
    elapsed = time.perf_counter() - start
    acceptance_note(f"max |dM| {worst_m:.1e}, max residual {worst_res:.1e}, {elapsed:.1f} s")
    assert not failures, failures
    assert elapsed < 30.0


# --- single system: degenerate forms ------------------------------------------------


@pytest.mark.acceptance("single-system degenerate forms (50 seeds)")
def test_single_degenerate_forms(acceptance_note):
    worst_q = worst_seg = 0.0
    failures = []
    for seed in range(50):
        rng = np.random.default_rng(2000 + seed)
        q = random_pure(int(rng.integers(2, 7)), rng)
        rep = classify_single(constant_map(q, (int(rng.integers(2, 7)),)), seed=seed)
        if not isinstance(rep.form, Constant):
            failures.append(("constant", seed, rep.status))
        else:
            err = max_abs(rep.form.q.mat, q.mat)
            worst_q = max(worst_q, err)
            if err > 1e-9:
                failures.append(("constant", seed, err))

        k = int(rng.integers(2, 5))
        q1, q2 = random_pure(k, rng), random_pure(k, rng)
        rep = classify_single(segment_map(SegmentSpec(q1, q2)), seed=seed)
        if not isinstance(rep.form, Segment):
            failures.append(("segment", seed, rep.status))
        else:
            err = endpoint_error((rep.form.q1.mat, rep.form.q2.mat), (q1.mat, q2.mat))
            worst_seg = max(worst_seg, err)
            if err > 1e-8:
                failures.append(("segment", seed, err))
    acceptance_note(f"constant error {worst_q:.1e}, endpoint error {worst_seg:.1e}")
    assert not failures, failures


# --- bipartite ---------------------------------------------------------------------

BIPARTITE_FORMS = (1, 2, 3, 4, 5, 6, 7, 10)
# output slot -> input factor read, or "c" for a constant slot
SLOT_LAYOUT = {2: (0, "c"), 3: ("c", 1), 4: (1, "c"), 5: ("c", 0), 6: (0, 1), 7: (1, 0)}


def _segment_pair_oracle(rng, dims):
    q1 = np.kron(random_pure(dims[0], rng).mat, random_pure(dims[1], rng).mat)
    q2 = np.kron(random_pure(dims[0], rng).mat, random_pure(dims[1], rng).mat)
    in_dims = (2, int(rng.integers(2, 4)))

    def func(rho):
        w = np.linalg.eigvalsh(rho)
        if w[-2] > 1e-9:
            return 0.5 * (q1 + q2)
        z = reduction(rho, in_dims, 0)
        return q1 if (z[0, 0] - z[1, 1]).real >= 0 else q2

    return custom_map(func, in_dims, dims), {"q1": q1, "q2": q2}


def bipartite_config(form: int, rng):
    """Return ``(oracle, expected)`` for a random instance of ``form``."""
    in_dims = tuple(int(d) for d in rng.integers(2, 4, size=2))
    if form == 1:
        out_dims = tuple(int(d) for d in rng.integers(2, 4, size=2))
        q = np.kron(random_pure(out_dims[0], rng).mat, random_pure(out_dims[1], rng).mat)
        return constant_map(q, in_dims, out_dims), {"state": q}
    if form == 10:
        return _segment_pair_oracle(rng, tuple(int(d) for d in rng.integers(2, 4, size=2)))
    slots, constants, reads = [], {}, {}
    for j, src in enumerate(SLOT_LAYOUT[form]):
        if src == "c":
            q = random_pure(int(rng.integers(2, 4)), rng)
            slots.append(ConstantSlot(q))
            constants[j] = q.mat
        else:
            d = in_dims[src]
            op = MeasurementOp(rand_op(rng, int(rng.integers(d, 4)), d), bool(rng.integers(2)))
            slots.append(MeasureSlot(src, op))
            reads[j] = (src, op)
    return local_map(slots, in_dims), {"constants": constants, "reads": reads}


def bipartite_errors(form: int, got, expected) -> list:
    """Mismatches between a recovered form and the construction; empty if none."""
    problems = []
    if got is None:
        return ["no verdict"]
    if got.form_number != form:
        return [f"form {got.form_number} != {form}"]
    if form == 1:
        err = max_abs(got.state.composite.mat, expected["state"])
        if not isinstance(got, LocalConstant) or err > 1e-7:
            problems.append(f"constant error {err:.1e}")
    elif form == 10:
        err = endpoint_error((got.q1.composite.mat, got.q2.composite.mat), (expected["q1"], expected["q2"]))
        if not isinstance(got, SegmentPair) or err > 1e-7:
            problems.append(f"endpoint error {err:.1e}")
    elif form in (6, 7):
        if not isinstance(got, LocalMeasurement):
            return [f"variant {got.variant}"]
        pi = tuple(expected["reads"][j][0] for j in range(2))
        flags = tuple(expected["reads"][j][1].conjugate_flag for j in range(2))
        if got.pi != pi or got.flags != flags:
            problems.append(f"pi/flags {got.pi}/{got.flags} != {pi}/{flags}")
        for j in range(2):
            err = max_abs(got.ops[j].m, gauge_fix(expected["reads"][j][1].m))
            if err > 1e-7:
                problems.append(f"slot {j} operator error {err:.1e}")
    else:
        if not isinstance(got, FactorContraction):
            return [f"variant {got.variant}"]
        for j, q in got.constants:
            err = max_abs(q.mat, expected["constants"][j])
            if err > 1e-7:
                problems.append(f"slot {j} constant error {err:.1e}")
        if {j for j, _ in got.constants} != set(expected["constants"]):
            problems.append("constant slots differ")
        for j, src, op in got.reads:
            want_src, want_op = expected["reads"][j]
            err = max_abs(op.m, gauge_fix(want_op.m))
            if src != want_src or op.conjugate_flag != want_op.conjugate_flag or err > 1e-7:
                problems.append(f"slot {j} read ({src}, {op.conjugate_flag}, {err:.1e})")
    return problems


def bipartite_corpus(n: int = 50, seed: int = 3000):
    rng = np.random.default_rng(seed)
    return [(form, *bipartite_config(form, rng)) for form in itertools.islice(itertools.cycle(BIPARTITE_FORMS), n)]


@pytest.mark.acceptance("bipartite ten-form round trip (50 configurations)")
def test_bipartite_round_trip(acceptance_note):
    start = time.perf_counter()
    failures = []
    for i, (form, psi, expected) in enumerate(bipartite_corpus()):
        rep = classify_bipartite(psi, seed=i)
        problems = bipartite_errors(form, rep.form, expected)
        if form == 10:
            # a two-point range is collinear: product preservation is not
            # claimed there, and the check must refuse rather than pass
            with pytest.raises(ValueError):
                check_product_preservation(psi, rep.form, 100, seed=i)
        elif not problems:
            res = check_product_preservation(psi, rep.form, 100, seed=i)
            if not res:
                problems.append(f"product preservation failed: {res.witness}")
        if problems:
            failures.append((i, form, problems))
    elapsed = time.perf_counter() - start
    acceptance_note(f"forms {sorted(set(BIPARTITE_FORMS))}, {elapsed:.1f} s")
    assert not failures, failures
    assert elapsed < 120.0


# --- tripartite ----------------------------------------------------------------------


@pytest.mark.acceptance("tripartite permutation and operator recovery (20 configurations)")
def test_tripartite_recovery(acceptance_note):
    rng = np.random.default_rng(4000)
    perms = list(itertools.permutations(range(3)))
    start = time.perf_counter()
    failures = []
    worst = 0.0
    for i in range(20):
        perm = perms[int(rng.integers(len(perms)))]
        ops = [MeasurementOp(rand_op(rng, 2, 2), bool(rng.integers(2))) for _ in range(3)]
        rep = classify_multipartite(local_measurement_map(ops, perm), seed=i)
        form = rep.form
        if not isinstance(form, LocalMeasurement):
            failures.append((i, rep.status, rep.message))
            continue
        errs = [max_abs(g.m, gauge_fix(w.m)) for g, w in zip(form.ops, ops)]
        worst = max(worst, *errs)
        if form.pi != perm or form.flags != tuple(op.conjugate_flag for op in ops) or max(errs) > 1e-7:
            failures.append((i, form.pi, perm, errs))

    # the n-partite path on two factors must agree with the bipartite classifier
    disagreements = []
    shared = [c for c in bipartite_corpus(16, seed=4100) if c[0] != 1]
    for i, (form, psi, _) in enumerate(shared):
        a, b = classify_bipartite(psi, seed=i), classify_multipartite(psi, seed=i)
        same = a.status == b.status and getattr(a.form, "variant", None) == getattr(b.form, "variant", None)
        same = same and getattr(a.form, "form_number", None) == getattr(b.form, "form_number", None)
        if same and isinstance(a.form, LocalMeasurement):
            same = a.form.pi == b.form.pi and a.form.flags == b.form.flags
            same = same and all(max_abs(x.m, y.m) <= 1e-7 for x, y in zip(a.form.ops, b.form.ops))
        if not same:
            disagreements.append((i, form, a.status, b.status))
    elapsed = time.perf_counter() - start
    acceptance_note(f"max |dM| {worst:.1e}, {len(shared)} shared oracles, {elapsed:.1f} s")
    assert not failures, failures
    assert not disagreements, disagreements
    assert elapsed < 120.0


# --- projection criterion for weighted rank-one projectors ---------------------------


@pytest.mark.acceptance("projection criterion battery (1000 trials each way)")
def test_projection_criterion_battery(acceptance_note):
    rng = np.random.default_rng(5000)
    failures = []
    min_residual = np.inf
    for trial in range(1000):
        d = int(rng.integers(2, 7))
        k = int(rng.integers(1, d + 1))
        u = np.linalg.qr(rand_op(rng, d, d))[0][:, :k]
        ortho = [(1.0, np.outer(u[:, i], u[:, i].conj())) for i in range(k)]
        v = check_lemma21(ortho)
        if not v.is_projection or v.max_weight_error > 1e-9 or v.counterexample is not None:
            failures.append(("orthonormal", trial, v))

        k = int(rng.integers(2, d + 1))
        vecs = [random_pure(d, rng).mat for _ in range(k)]
        weights = rng.uniform(0.05, 2.0, size=k)
        v = check_lemma21(list(zip(weights, vecs)))
        min_residual = min(min_residual, v.idempotency_residual)
        if v.is_projection or v.idempotency_residual <= 1e-6:
            failures.append(("generic", trial, v))
    acceptance_note(f"smallest non-orthogonal residual {min_residual:.1e}")
    assert not failures, failures


# --- trace norm versus Hilbert-Schmidt norm ---------------------------------------------


@pytest.mark.acceptance("trace-norm inequality battery (1000 matrices)")
def test_norm_inequality_battery(acceptance_note):
    rng = np.random.default_rng(6000)
    failures = []
    for trial in range(1000):
        n = int(rng.integers(1, 8))
        r = int(rng.integers(1, n + 1))
        t = rand_op(rng, n, r) @ rand_op(rng, r, n)
        t /= np.linalg.norm(t)
        tr, hs, rank = norms(t)
        if rank != r:
            failures.append(("rank", trial, rank, r))
        if not (tr * tr / rank <= hs * hs + 1e-10 and hs * hs <= tr * tr + 1e-10):
            failures.append(("bound", trial, tr, hs, rank))

    worst_low = worst_high = 0.0
    for n in range(1, 9):
        tr, hs, rank = norms(np.eye(n) / n)
        worst_low = max(worst_low, abs(tr * tr / rank - hs * hs))
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        t = np.outer(rand_op(rng, n, 1), rand_op(rng, n, 1).conj())
        t /= np.linalg.norm(t)
        tr, hs, rank = norms(t)
        worst_high = max(worst_high, abs(hs * hs - tr * tr))
    acceptance_note(f"saturation gaps {worst_low:.1e} (lower), {worst_high:.1e} (upper)")
    assert not failures, failures
    assert worst_low <= 1e-12 and worst_high <= 1e-12


# --- Bloch ball ----------------------------------------------------------------------------


def random_bloch(rng, on_sphere: bool) -> BlochVector:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    if not on_sphere:
        v *= rng.uniform(0.0, 0.999) ** (1 / 3)
    return BlochVector(*map(float, v))


@pytest.mark.acceptance("Bloch ball isomorphism (500 vectors)")
def test_bloch_isomorphism(acceptance_note):
    rng = np.random.default_rng(7000)
    vectors = [random_bloch(rng, on_sphere=bool(i % 2)) for i in range(500)]
    worst_aff = worst_trip = 0.0
    failures = []
    for i, v in enumerate(vectors):
        rho = bloch_to_state(v)
        # purity <-> unit norm, from the vector side
        unit = abs(v.norm - 1.0) <= 1e-12
        if is_pure(rho.mat) != unit:
            failures.append(("purity", i, v.norm))
        back = state_to_bloch(rho.mat).as_array()
        worst_trip = max(worst_trip, max_abs(back, v.as_array()))

        k = int(rng.integers(2, 5))
        picks = [vectors[j] for j in rng.integers(0, 500, size=k)]
        t = rng.dirichlet(np.ones(k))
        mixed_vec = BlochVector(*map(float, sum(w * p.as_array() for w, p in zip(t, picks))))
        direct = bloch_to_state(mixed_vec).mat
        combined = sum(w * bloch_to_state(p).mat for w, p in zip(t, picks))
        worst_aff = max(worst_aff, max_abs(direct, combined))

    # purity <-> unit norm, from the state side, and the state round trip
    for i in range(500):
        rho = random_pure(2, rng) if i % 2 else random_state(2, seed=rng)
        b = state_to_bloch(rho.mat)
        if (abs(b.norm - 1.0) <= 1e-12) != bool(i % 2):
            failures.append(("norm", i, b.norm))
        worst_trip = max(worst_trip, max_abs(bloch_to_state(b).mat, rho.mat))
    acceptance_note(f"affinity residual {worst_aff:.1e}, round trip {worst_trip:.1e}")
    assert not failures, failures
    assert worst_aff < 1e-12 and worst_trip <= 1e-12


# --- negative controls ------------------------------------------------------------------------

E00 = np.kron(np.diag([1.0, 0.0]), np.diag([1.0, 0.0])).astype(complex)
BELL = np.zeros((4, 4), dtype=complex)
BELL[np.ix_([0, 3], [0, 3])] = 0.5


def cli(*argv):
    env = {k: v for k, v in os.environ.items() if k != "CANONMAP_SEED"}
    proc = subprocess.run([sys.executable, "-m", "canonmap.cli", *argv], capture_output=True, env=env)
    return proc.returncode, proc.stdout


def argmax_table_spec():
    am = spectral_argmax_map(2)
    a, b = np.diag([0.9, 0.1]), np.diag([0.2, 0.8])
    entries = [{"input": encode_matrix(x), "output": encode_matrix(am(x).mat)} for x in (a, b, 0.5 * (a + b))]
    base = {"kind": "measurement", "dims_in": [2], "dims_out": [2], "parameters": {"m": encode_matrix(np.eye(2))}}
    return {"kind": "table", "dims_in": [2], "dims_out": [2], "parameters": {"entries": entries, "base": base}}


def entangled_table_spec():
    ident = np.eye(2)
    base = {
        "kind": "local_measurement",
        "dims_in": [2, 2],
        "dims_out": [2, 2],
        "parameters": {"slots": [{"source": 1, "m": encode_matrix(ident)}, {"source": 2, "m": encode_matrix(ident)}]},
    }
    entries = [{"input": encode_matrix(E00), "output": encode_matrix(BELL)}]
    return {"kind": "table", "dims_in": [2, 2], "dims_out": [2, 2], "parameters": {"entries": entries, "base": base}}


@pytest.mark.acceptance("negative controls rejected with witnesses (library and CLI exit 2)")
def test_negative_controls(tmp_path, acceptance_note):
    res = check_strict_convex_preserving(spectral_argmax_map(2))
    assert not res.passed
    assert {"rho", "sigma", "t"} <= set(res.witness)
    assert 0 < res.witness["t"] < 1

    table = table_map([(E00, BELL)], (2, 2), (2, 2), base=identity_map((2, 2)))
    res = check_product_preservation(table)
    assert not res.passed
    np.testing.assert_allclose(res.witness["input"], E00)
    np.testing.assert_allclose(res.witness["output"], BELL)
    assert res.witness["deviation"] > 1e-8

    argmax = tmp_path / "argmax.json"
    argmax.write_text(dumps(argmax_table_spec()))
    entangled = tmp_path / "entangled.json"
    entangled.write_text(dumps(entangled_table_spec()))

    codes = {}
    for name, path, check in (("argmax", argmax, "convex"), ("entangled", entangled, "product")):
        code, out = cli("classify", str(path))
        assert code == 2, (name, out)
        assert "verdict" not in json.loads(out)
        codes[f"{name} classify"] = code
        code, out = cli("verify", str(path), "--checks", check)
        assert code == 2, (name, out)
        (result,) = json.loads(out)["checks"]
        assert not result["pass"] and result.get("witness"), result
        codes[f"{name} verify"] = code
    acceptance_note(", ".join(f"{k} exit {v}" for k, v in codes.items()))


# --- determinism -------------------------------------------------------------------------------

PIPELINES = [
    ["measurement", "--dims-in", "3", "--dims-out", "4", "--seed", "7", "--transpose"],
    ["local_measurement", "--dims-in", "2,3", "--swap", "--transpose", "1", "--seed", "8"],
    ["local_measurement", "--dims-in", "2,2,2", "--perm", "3,1,2", "--seed", "9"],
    ["local_measurement", "--dims-in", "2,2", "--constant-slots", "2", "--seed", "10"],
    ["constant", "--dims-in", "3", "--seed", "11"],
    ["segment", "--dims-in", "2", "--seed", "12"],
]


@pytest.mark.acceptance("generate and classify pipelines are byte-deterministic")
def test_pipeline_determinism(tmp_path, acceptance_note):
    for n, args in enumerate(PIPELINES):
        runs = []
        for rep in range(2):
            spec = tmp_path / f"spec{n}_{rep}.json"
            code, _ = cli("generate", *args, "--out", str(spec))
            assert code == 0, args
            code, report = cli("classify", str(spec), "--seed", "3")
            assert code == 0, (args, report)
            runs.append((spec.read_bytes(), report))
        assert runs[0] == runs[1], args
    acceptance_note(f"{len(PIPELINES)} pipelines, two runs each")
