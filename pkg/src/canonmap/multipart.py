"""Separable states and classification of maps on tensor products.

A map preserving separable pure states and strict convex combinations is
probed through its restricted component maps.  The input is held at
reference pure states in every factor but one, and one output factor is read
off by partial trace.  Each restricted map is a single-system map and is
classified by :func:`canonmap.classify.classify_single`.  The resulting
table of verdicts (output slot x input slot) fixes the wiring: which output
factors are constant, which input factor each remaining one measures, and
with which operator and transpose flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as iproduct
from typing import Sequence

import numpy as np

from .classify import (
    CheckResult,
    ClassifierReport,
    Constant,
    Measurement,
    Segment,
    affine_rank,
    check_strict_convex_preserving,
    classify_single,
    probe_set,
    segment_parameter,
)
from .maps import ConstantSlot, MeasurementOp, MeasureSlot, StateMapOracle, local_map
from .matcore import DEFAULT_TOL, Tolerances, partial_trace, reduction, tensor, trace_distance
from .states import (
    DensityMatrix,
    PureState,
    StateError,
    as_rng,
    is_pure,
    purity_defect,
    random_pure,
    random_state,
)

__all__ = [
    "EntangledError",
    "HypothesisViolation",
    "ProductPureState",
    "ComponentMapPair",
    "LocalConstant",
    "SegmentPair",
    "FactorContraction",
    "LocalMeasurement",
    "product_decompose_pure",
    "is_product",
    "random_product_state",
    "random_product_pure",
    "random_separable_state",
    "separable_probe_grid",
    "restricted_map",
    "component_maps",
    "check_separable_pure_preserving",
    "check_separable_strict_convex",
    "check_product_preservation",
    "classify_bipartite",
    "classify_multipartite",
]

ENTANGLED_TOL = 1e-7
PRODUCT_TOL = 1e-8
MIXED_REDUCTION_TOL = 1e-6


class EntangledError(StateError):
    """A pure state that is not a product of pure factors."""

    def __init__(self, factor: int, second_eigenvalue: float):
        super().__init__(
            f"state is entangled: reduction on factor {factor} has second eigenvalue "
            f"{second_eigenvalue:.3e}"
        )
        self.factor = factor
        self.second_eigenvalue = second_eigenvalue


class HypothesisViolation(ValueError):
    """The oracle fails a precondition of the classification."""

    def __init__(self, check: CheckResult):
        super().__init__(f"hypothesis check {check.name!r} failed")
        self.check = check


@dataclass(frozen=True)
class ProductPureState:
    factors: tuple[PureState, ...]
    composite: PureState

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @classmethod
    def from_factors(cls, factors: Sequence) -> "ProductPureState":
        factors = tuple(f if isinstance(f, PureState) else PureState(f) for f in factors)
        comp = PureState(tensor(*[f.mat for f in factors]), tuple(f.dim for f in factors))
        return cls(factors, comp)


def product_decompose_pure(p, dims: Sequence[int]) -> ProductPureState:
    """Split a separable pure state into its pure factors.

    A pure state is a product iff every single-factor reduction is pure.
    Raises :class:`EntangledError` naming the most mixed factor when some
    reduction has second eigenvalue above 1e-7.
    """
    p = p if isinstance(p, PureState) else PureState(np.asarray(p, dtype=complex), dims)
    dims = tuple(dims)
    reds = [reduction(p.mat, dims, r) for r in range(len(dims))]
    seconds = [np.linalg.eigvalsh(0.5 * (r + r.conj().T))[-2] for r in reds]
    worst = int(np.argmax(seconds))
    if seconds[worst] > ENTANGLED_TOL:
        raise EntangledError(worst, float(seconds[worst]))
    factors = []
    for r in reds:
        w, v = np.linalg.eigh(0.5 * (r + r.conj().T))
        factors.append(PureState.from_vector(v[:, -1]))
    return ProductPureState(tuple(factors), p.with_dims(dims))


def is_product(rho, dims: Sequence[int], tol: float = PRODUCT_TOL) -> bool:
    """Whether ``rho`` equals the tensor product of its single-factor reductions."""
    rho = np.asarray(rho, dtype=complex)
    reds = [reduction(rho, dims, r) for r in range(len(dims))]
    return float(np.linalg.norm(rho - tensor(*reds))) <= tol


def random_product_pure(dims: Sequence[int], seed=None) -> DensityMatrix:
    rng = as_rng(seed)
    return DensityMatrix(tensor(*[random_pure(d, rng).mat for d in dims]), dims)


def random_product_state(dims: Sequence[int], seed=None, full_rank: bool = False) -> DensityMatrix:
    """Product of random factor states of random rank (full rank if asked)."""
    rng = as_rng(seed)
    facs = []
    for d in dims:
        rank = d if full_rank else int(rng.integers(1, d + 1))
        facs.append(random_state(d, rank, rng).mat)
    return DensityMatrix(tensor(*facs), dims)


def random_separable_state(dims: Sequence[int], seed=None, n_terms: int = 3, full_rank: bool = True) -> DensityMatrix:
    """Random mixture of ``n_terms`` random product states."""
    rng = as_rng(seed)
    weights = rng.dirichlet(np.ones(n_terms))
    mat = sum(w * random_product_state(dims, rng, full_rank).mat for w in weights)
    return DensityMatrix(mat, dims)


def separable_probe_grid(dims: Sequence[int]) -> tuple[list[str], list[np.ndarray]]:
    """All tensor products of the per-factor probe sets."""
    sets = [probe_set(d) for d in dims]
    labels, mats = [], []
    for combo in iproduct(*[range(len(s.probes)) for s in sets]):
        labels.append("|".join(s.labels[i] for s, i in zip(sets, combo)))
        mats.append(tensor(*[s.probes[i].mat for s, i in zip(sets, combo)]))
    return labels, mats


# --- component maps ------------------------------------------------------------


def restricted_map(psi: StateMapOracle, out_slot: int, in_slot: int, refs: Sequence) -> StateMapOracle:
    """``A -> Tr^{out_slot} psi(ref_0 (x) .. A .. (x) ref_{n-1})`` with ``A`` at ``in_slot``."""
    refs = [np.asarray(r, dtype=complex) for r in refs]
    in_dims, out_dims = psi.in_dims, psi.out_dims

    def func(a):
        parts = list(refs)
        parts[in_slot] = a
        return reduction(psi(tensor(*parts)).mat, out_dims, out_slot)

    return StateMapOracle(
        func,
        (in_dims[in_slot],),
        (out_dims[out_slot],),
        psi.provenance,
        description={"kind": "restricted", "out_slot": out_slot, "in_slot": in_slot},
    )


@dataclass(frozen=True)
class ComponentMapPair:
    """Reductions ``phi1(A, B) = Tr_2 psi(A (x) B)`` and ``phi2(A, B) = Tr_1 psi(A (x) B)``."""

    psi: StateMapOracle

    def phi1(self, a, b) -> DensityMatrix:
        return self._phi(a, b, 0)

    def phi2(self, a, b) -> DensityMatrix:
        return self._phi(a, b, 1)

    def _phi(self, a, b, slot):
        out = self.psi(tensor(np.asarray(a), np.asarray(b))).mat
        return DensityMatrix(partial_trace(out, self.psi.out_dims, (slot,)))


def _require_factors(psi: StateMapOracle, n: int | None = None):
    if len(psi.in_dims) != len(psi.out_dims):
        raise ValueError("input and output must have the same number of tensor factors")
    if n is not None and len(psi.in_dims) != n:
        raise ValueError(f"expected {n} tensor factors, got {len(psi.in_dims)}")
    if len(psi.in_dims) < 2:
        raise ValueError("need at least two tensor factors")
    if any(d < 2 for d in psi.in_dims):
        raise ValueError("every input factor needs dimension >= 2")


def component_maps(psi: StateMapOracle, seed=0) -> ComponentMapPair:
    """Build the two reduction maps of a bipartite oracle after validating it."""
    _require_factors(psi, 2)
    rng = as_rng(seed)
    check = check_separable_pure_preserving(psi, 100, rng)
    if not check:
        raise HypothesisViolation(check)
    pair = ComponentMapPair(psi)
    d1, d2 = psi.in_dims
    for _ in range(50):
        p, q = random_pure(d1, rng).mat, random_pure(d2, rng).mat
        full = psi(tensor(p, q)).mat
        dev = float(np.linalg.norm(full - tensor(pair.phi1(p, q).mat, pair.phi2(p, q).mat)))
        if dev > 1e-9:
            raise HypothesisViolation(
                CheckResult("component_factorization", False, {"p": p, "q": q, "deviation": dev})
            )
    return pair


# --- hypothesis batteries ---------------------------------------------------------


def check_separable_pure_preserving(psi: StateMapOracle, n: int = 50, seed=0) -> CheckResult:
    """Separable pure inputs must map to separable pure outputs."""
    rng = as_rng(seed)
    inputs = [random_product_pure(psi.in_dims, rng).mat for _ in range(n)]
    if np.prod([d * d + 1 for d in psi.in_dims]) <= 1000:
        _, grid = separable_probe_grid(psi.in_dims)
        inputs += [g for g in grid if is_pure(g)]
    inputs += [k for k in psi.known_inputs if is_pure(k) and is_product(k, psi.in_dims)]
    for rho in inputs:
        out = psi(rho).mat
        defect = purity_defect(out)
        if defect > 1e-9:
            return CheckResult("separable_pure_preserving", False, {"input": rho, "output": out, "defect": defect})
        try:
            product_decompose_pure(PureState(out, psi.out_dims), psi.out_dims)
        except EntangledError as exc:
            witness = {"input": rho, "output": out, "factor": exc.factor, "second_eigenvalue": exc.second_eigenvalue}
            return CheckResult("separable_pure_preserving", False, witness)
    return CheckResult("separable_pure_preserving", True, None, {"evaluated": len(inputs)})


def check_separable_strict_convex(psi: StateMapOracle, n: int = 50, seed=0) -> CheckResult:
    """Strict convexity on random full-rank separable endpoints."""
    dims = psi.in_dims

    def sampler(rng):
        return random_separable_state(dims, rng).mat

    res = check_strict_convex_preserving(psi, n, seed, sampler=sampler)
    return CheckResult("separable_strict_convex", res.passed, res.witness, res.detail)


def check_product_preservation(psi: StateMapOracle, form=None, n: int = 100, seed=0) -> CheckResult:
    """Product inputs (mixed factors allowed) must give product outputs.

    Known inputs of the oracle that are product states are included.  Not
    meaningful for two-point (segment) forms, which are rejected.
    """
    if isinstance(form, SegmentPair):
        raise ValueError("product preservation is not implied for collinear ranges")
    rng = as_rng(seed)
    inputs = [random_product_state(psi.in_dims, rng).mat for _ in range(n)]
    inputs += [k for k in psi.known_inputs if is_product(k, psi.in_dims)]
    worst = 0.0
    for rho in inputs:
        out = psi(rho).mat
        reds = [reduction(out, psi.out_dims, r) for r in range(len(psi.out_dims))]
        dev = float(np.linalg.norm(out - tensor(*reds)))
        worst = max(worst, dev)
        if dev > PRODUCT_TOL:
            return CheckResult("product_preservation", False, {"input": rho, "output": out, "deviation": dev})
    return CheckResult("product_preservation", True, None, {"evaluated": len(inputs), "max_deviation": worst})


# --- local canonical forms ------------------------------------------------------


@dataclass(frozen=True)
class LocalConstant:
    state: ProductPureState
    form_number: int | None = 1
    variant = "Constant"


@dataclass(frozen=True)
class SegmentPair:
    q1: ProductPureState
    q2: ProductPureState
    h_samples: tuple[tuple[str, float], ...] = ()
    form_number: int | None = 10
    variant = "SegmentPair"


@dataclass(frozen=True)
class FactorContraction:
    """Some output factors constant, the others measuring single input factors.

    ``reads`` lists ``(out_slot, in_slot, op)``.  ``non_product`` lists output
    slots whose restricted maps depend on two input factors; for those only
    sampled operators are reported in ``samples`` and no reconstruction is
    attempted.
    """

    constants: tuple[tuple[int, PureState], ...]
    reads: tuple[tuple[int, int, MeasurementOp], ...]
    non_product: tuple[int, ...] = ()
    samples: dict = field(default_factory=dict)
    residual: float | None = None
    form_number: int | None = None
    variant = "FactorContraction"

    def to_oracle(self, in_dims) -> StateMapOracle:
        if self.non_product:
            raise ValueError("non-product residual maps cannot be rebuilt")
        n = len(self.constants) + len(self.reads)
        slots = [None] * n
        for j, q in self.constants:
            slots[j] = ConstantSlot(q)
        for j, p, op in self.reads:
            slots[j] = MeasureSlot(p, op)
        return local_map(slots, in_dims)


@dataclass(frozen=True)
class LocalMeasurement:
    """``psi(rho) ~ (M_1 (x) .. (x) M_n) PT_F(Theta_pi(rho)) (..)*``.

    ``pi[j]`` is the input factor read by output slot ``j`` (0-indexed) and
    ``ops[j].conjugate_flag`` says whether that factor is transposed.
    """

    pi: tuple[int, ...]
    ops: tuple[MeasurementOp, ...]
    residual: float
    form_number: int | None = None
    variant = "LocalMeasurement"

    @property
    def flags(self) -> tuple[bool, ...]:
        return tuple(op.conjugate_flag for op in self.ops)

    def to_oracle(self, in_dims) -> StateMapOracle:
        return local_map([MeasureSlot(p, op) for p, op in zip(self.pi, self.ops)], in_dims)


# --- classification --------------------------------------------------------------


def _bipartite_label(kinds) -> int | None:
    table = {
        ("const", "const"): 1,
        (0, "const"): 2,
        ("const", 1): 3,
        (1, "const"): 4,
        ("const", 0): 5,
        (0, 1): 6,
        (1, 0): 7,
        ("both", "const"): 8,
        ("const", "both"): 9,
    }
    return table.get(tuple(kinds))


def _report(status, form, checks, calls=0, message="", **diag) -> ClassifierReport:
    return ClassifierReport(status, form, checks, calls, message, diag)


def _hypotheses(psi, samples, rng) -> list[CheckResult]:
    return [check_separable_pure_preserving(psi, samples, rng), check_separable_strict_convex(psi, samples, rng)]


def _collinear_verdict(psi, checks):
    """Constant / two-point forms from the separable probe grid, else ``None``."""
    labels, grid = separable_probe_grid(psi.in_dims)
    images = [psi(g).mat for g in grid]
    arank = affine_rank(images)
    checks.append(CheckResult("grid_affine_rank", True, None, {"affine_rank": arank}))
    if arank == 0:
        return _report("verdict", LocalConstant(product_decompose_pure(images[0], psi.out_dims)), checks)
    if arank > 1:
        return None
    ends = []
    for img in images:
        if is_pure(img) and all(np.linalg.norm(img - e) > 1e-8 for e in ends):
            ends.append(img)
    if len(ends) != 2:
        return _report("failure", None, checks, message=f"collinear range with {len(ends)} pure images")
    q1, q2 = (product_decompose_pure(e, psi.out_dims) for e in ends)
    h = []
    for label, img in zip(labels, images):
        s, res = segment_parameter(ends[0], ends[1], img)
        if res > 1e-8 or not -1e-9 <= s <= 1 + 1e-9:
            return _report("failure", None, checks, message=f"grid point {label} leaves the segment")
        h.append((label, float(min(max(s, 0.0), 1.0))))
    return _report("verdict", SegmentPair(q1, q2, tuple(h)), checks)


def _verdict_table(psi, refs, tol, rng, samples):
    n = len(psi.in_dims)
    table = [[None] * n for _ in range(len(psi.out_dims))]
    for j in range(len(psi.out_dims)):
        for p in range(n):
            table[j][p] = classify_single(restricted_map(psi, j, p, refs), tol, rng, samples)
    return table


def _slot_kinds(table):
    kinds = []
    for row in table:
        reads = [p for p, rep in enumerate(row) if isinstance(rep.form, Measurement)]
        if not reads:
            kinds.append("const")
        elif len(reads) == 1:
            kinds.append(reads[0])
        else:
            kinds.append("both" if len(row) == 2 and len(reads) == 2 else tuple(reads))
    return kinds


def _table_problem(table, checks):
    """Turn bad restricted verdicts into an out-of-scope or failure report."""
    for j, row in enumerate(table):
        for p, rep in enumerate(row):
            where = f"restricted map (output {j + 1}, input {p + 1})"
            if rep.status == "out_of_scope" or isinstance(rep.form, Segment):
                checks.append(CheckResult(f"restricted_{j + 1}_{p + 1}", False, {"verdict": rep.status}))
                return _report("out_of_scope", None, checks, message=f"{where} is not continuous-form")
            if rep.status == "failure":
                return _report("failure", None, checks, message=f"{where}: {rep.message}")
    return None


def _max_residual(psi, rebuilt, states) -> float:
    return max(trace_distance(psi(s).mat, rebuilt(s).mat) for s in states)


def _non_product_samples(psi, j, refs, tol, rng, samples):
    # operators M_P (vary input 2 at probe P in input 1) and N_Q (vice versa)
    out = {}
    for vary, fixed, key in ((1, 0, "M_P"), (0, 1, "N_Q")):
        ops = []
        probes = probe_set(psi.in_dims[fixed])
        for label, pr in zip(probes.labels, probes.pure):
            r = list(refs)
            r[fixed] = pr.mat
            rep = classify_single(restricted_map(psi, j, vary, r), tol, rng, samples, check_hypotheses=False)
            if isinstance(rep.form, Measurement):
                ops.append((label, rep.form.m, rep.form.transpose_flag))
        out[key] = ops
    return out


def _assemble(psi, table, kinds, refs, tol, rng, samples, checks, form_number):
    n = len(psi.in_dims)
    if all(isinstance(k, int) for k in kinds) and sorted(kinds) == list(range(n)):
        ops = tuple(
            MeasurementOp(table[j][p].form.m, table[j][p].form.transpose_flag) for j, p in enumerate(kinds)
        )
        form = LocalMeasurement(tuple(kinds), ops, 0.0, form_number)
        states = [random_separable_state(psi.in_dims, rng) for _ in range(samples)]
        residual = _max_residual(psi, form.to_oracle(psi.in_dims), states)
        checks.append(CheckResult("reconstruction", residual <= tol.recovery_tol, None, {"residual": residual}))
        if residual > tol.recovery_tol:
            return _report("failure", None, checks, message=f"local reconstruction residual {residual:.3e}")
        return _report("verdict", LocalMeasurement(form.pi, ops, residual, form_number), checks)

    reads_seen = [k for k in kinds if isinstance(k, int)]
    if len(set(reads_seen)) != len(reads_seen):
        return _report("failure", None, checks, message=f"two output factors read one input: {kinds}")
    if any(isinstance(k, tuple) for k in kinds):
        return _report("failure", None, checks, message=f"an output factor depends on several inputs: {kinds}")
    constants = tuple((j, table[j][0].form.q) for j, k in enumerate(kinds) if k == "const")
    reads = tuple(
        (j, k, MeasurementOp(table[j][k].form.m, table[j][k].form.transpose_flag))
        for j, k in enumerate(kinds)
        if isinstance(k, int)
    )
    non_product = tuple(j for j, k in enumerate(kinds) if k == "both")
    if non_product:
        samples_ = {j: _non_product_samples(psi, j, refs, tol, rng, samples) for j in non_product}
        form = FactorContraction(constants, reads, non_product, samples_, None, form_number)
        checks.append(CheckResult("reconstruction", True, None, {"skipped": "non-product residual map"}))
        return _report("verdict", form, checks)
    form = FactorContraction(constants, reads, (), {}, None, form_number)
    states = [random_product_state(psi.in_dims, rng) for _ in range(samples)]
    residual = _max_residual(psi, form.to_oracle(psi.in_dims), states)
    checks.append(CheckResult("reconstruction", residual <= tol.recovery_tol, None, {"residual": residual}))
    if residual > tol.recovery_tol:
        return _report("failure", None, checks, message=f"contraction reconstruction residual {residual:.3e}")
    return _report("verdict", FactorContraction(constants, reads, (), {}, residual, form_number), checks)


def _references(psi, rng):
    return [random_pure(d, rng).mat for d in psi.in_dims]


def classify_bipartite(
    psi: StateMapOracle, tol: Tolerances = DEFAULT_TOL, seed=0, samples: int = 50
) -> ClassifierReport:
    """Classify a bipartite map into one of the ten local forms.

    The collinear forms (constant, two-point) are detected on the separable
    probe grid.  Otherwise the four restricted maps
    ``phi_i(., Q0)`` and ``phi_i(P0, .)`` are classified, and their verdicts
    select the constant-factor forms, identity or swap wiring, or the
    non-product contractions.  ``form.form_number`` carries the form number
    (1-10).
    """
    _require_factors(psi, 2)
    rng = as_rng(seed)
    checks = _hypotheses(psi, samples, rng)
    if not all(checks):
        return _report("out_of_scope", None, checks, message="map violates a hypothesis of the classification")
    collinear = _collinear_verdict(psi, checks)
    if collinear is not None:
        return collinear
    refs = _references(psi, rng)
    table = _verdict_table(psi, refs, tol, rng, samples)
    problem = _table_problem(table, checks)
    if problem is not None:
        return problem
    kinds = _slot_kinds(table)
    label = _bipartite_label(kinds)
    if label is None:
        return _report("failure", None, checks, message=f"component verdicts {kinds} match no form")
    if label == 1:
        return _report("failure", None, checks, message="constant components but non-constant range")
    return _assemble(psi, table, kinds, refs, tol, rng, samples, checks, label)


def classify_multipartite(
    psi: StateMapOracle, tol: Tolerances = DEFAULT_TOL, seed=0, samples: int = 50
) -> ClassifierReport:
    """Recover the permutation and local operators of an n-partite map.

    When the image of a random full-rank product state has every reduction
    of rank >= 2, each output slot must depend on exactly one input slot and
    the slots must form a permutation.  Otherwise the verdict falls back to
    a factor contraction with constant slots.
    """
    _require_factors(psi)
    rng = as_rng(seed)
    checks = _hypotheses(psi, samples, rng)
    if not all(checks):
        return _report("out_of_scope", None, checks, message="map violates a hypothesis of the classification")
    collinear = _collinear_verdict(psi, checks)
    if collinear is not None:
        if len(psi.in_dims) != 2 and isinstance(collinear.form, (LocalConstant, SegmentPair)):
            collinear.form = _strip_label(collinear.form)
        return collinear
    probe_img = psi(random_product_state(psi.in_dims, rng, full_rank=True)).mat
    seconds = [np.linalg.eigvalsh(reduction(probe_img, psi.out_dims, r))[-2] for r in range(len(psi.out_dims))]
    full_reductions = min(seconds) > MIXED_REDUCTION_TOL
    checks.append(CheckResult("reduction_rank", True, None, {"second_eigenvalues": [float(s) for s in seconds]}))
    refs = _references(psi, rng)
    table = _verdict_table(psi, refs, tol, rng, samples)
    problem = _table_problem(table, checks)
    if problem is not None:
        return problem
    kinds = _slot_kinds(table)
    n = len(psi.in_dims)
    if full_reductions and not (all(isinstance(k, int) for k in kinds) and sorted(kinds) == list(range(n))):
        return _report("failure", None, checks, message=f"slot dependencies {kinds} do not form a permutation")
    if n > 2 and "both" in kinds:
        return _report("failure", None, checks, message=f"an output factor depends on several inputs: {kinds}")
    label = _bipartite_label(kinds) if n == 2 else None
    return _assemble(psi, table, kinds, refs, tol, rng, samples, checks, label)


def _strip_label(form):
    from dataclasses import replace

    return replace(form, form_number=None)
