"""Single-system inverse problem.

Given oracle access to a map ``psi`` on the states of one system, decide
which of the three canonical forms it takes (constant pure output,
two-point segment, or normalized injective measurement ``M rho M*`` /
``M rho^t M*``) and recover the parameters.

The measurement branch works projectively.  ``psi`` only agrees with the
linear map ``L(rho) = M rho M*`` up to the positive scalar
``c(rho) = Tr L(rho)``.  The scalars on the informationally complete probe
set are recovered from the position of ``psi(P/2 + I/2m)`` on the segment
between ``psi(P)`` and ``psi(I/m)``.  ``L`` is assembled with a
pseudoinverse and its Choi matrix checked for rank one, with and without a
preceding transpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .maps import StateMapOracle, measurement_map
from .matcore import (
    DEFAULT_TOL,
    Tolerances,
    hermitian_eig,
    numerical_rank,
    pseudoinverse,
    trace_distance,
)
from .states import (
    DensityMatrix,
    PureState,
    as_rng,
    is_pure,
    maximally_mixed,
    purity_defect,
    random_pure,
    random_state,
)

__all__ = [
    "CheckResult",
    "ProbeSet",
    "Constant",
    "Segment",
    "Measurement",
    "ClassifierReport",
    "probe_set",
    "affine_rank",
    "segment_parameter",
    "gauge_fix",
    "check_pure_preserving",
    "check_strict_convex_preserving",
    "check_orthogonality_propagation",
    "classify_single",
    "linearize",
    "choi_matrix",
]

SAME_TOL = 1e-9
FIT_TOL = 1e-8
AFFINE_TOL = 1e-8
CHOI_RANK_TOL = 1e-7


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification battery; unpacks as ``(passed, witness)``."""

    name: str
    passed: bool
    witness: dict | None = None
    detail: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.passed
        yield self.witness

    def __bool__(self):
        return self.passed


@dataclass(frozen=True)
class ProbeSet:
    """Pure states ``e_i``, ``(e_i + e_j)/sqrt2``, ``(e_i + i e_j)/sqrt2`` and ``I/m``.

    The ``m**2`` pure probes span the Hermitian matrices; the maximally
    mixed state is appended last.
    """

    dim: int
    labels: tuple[str, ...]
    probes: tuple[DensityMatrix, ...]

    @property
    def pure(self) -> tuple[DensityMatrix, ...]:
        return self.probes[:-1]

    def gram_rank(self) -> int:
        vecs = np.array([_herm_vec(p.mat) for p in self.pure])
        return numerical_rank(vecs @ vecs.T)


@lru_cache(maxsize=None)
def probe_set(dim: int) -> ProbeSet:
    labels, probes = [], []
    eye = np.eye(dim, dtype=complex)
    for i in range(dim):
        labels.append(f"e{i}")
        probes.append(PureState.from_vector(eye[i]))
    for i in range(dim):
        for j in range(i + 1, dim):
            labels.append(f"+{i}{j}")
            probes.append(PureState.from_vector(eye[i] + eye[j]))
            labels.append(f"i{i}{j}")
            probes.append(PureState.from_vector(eye[i] + 1j * eye[j]))
    labels.append("mixed")
    probes.append(maximally_mixed(dim))
    return ProbeSet(dim, tuple(labels), tuple(probes))


# --- small geometric helpers ---------------------------------------------------


def _herm_vec(mat) -> np.ndarray:
    a = np.asarray(mat, dtype=complex).reshape(-1)
    return np.concatenate([a.real, a.imag])


def affine_rank(mats, tol: float = AFFINE_TOL) -> int:
    """Dimension of the affine span of a set of matrices."""
    vecs = np.array([_herm_vec(m) for m in mats])
    if len(vecs) < 2:
        return 0
    diffs = vecs[1:] - vecs[0]
    s = np.linalg.svd(diffs, compute_uv=False)
    return int(np.sum(s > tol))


def segment_parameter(a, b, c) -> tuple[float, float]:
    """Least-squares ``s`` with ``c ~ s a + (1 - s) b`` and the fit residual."""
    a, b, c = (np.asarray(x, dtype=complex) for x in (a, b, c))
    e = a - b
    denom = np.vdot(e, e).real
    if denom == 0.0:
        return float("nan"), float(np.linalg.norm(c - a))
    s = np.vdot(e, c - b).real / denom
    return float(s), float(np.linalg.norm(c - b - s * e))


def gauge_fix(m) -> np.ndarray:
    """Scale to unit Frobenius norm and rotate the phase so that the first
    entry of (near) largest magnitude is real and positive."""
    m = np.asarray(m, dtype=complex)
    m = m / np.linalg.norm(m)
    flat = m.reshape(-1)
    mags = np.abs(flat)
    k = int(np.argmax(mags >= (1 - 1e-6) * mags.max()))
    return m * (np.conj(flat[k]) / mags[k])


def _matrix_payload(mat) -> np.ndarray:
    return np.asarray(mat, dtype=complex).copy()


class _Counting:
    """Oracle proxy that counts evaluations."""

    def __init__(self, psi: StateMapOracle):
        self.psi = psi
        self.calls = 0

    def __call__(self, rho) -> DensityMatrix:
        self.calls += 1
        return self.psi(rho)

    def __getattr__(self, name):
        return getattr(self.psi, name)


# --- hypothesis checks -------------------------------------------------------


def check_pure_preserving(psi, n: int = 50, seed=0, inputs=None) -> CheckResult:
    """Evaluate ``psi`` on ``n`` random pure states and every pure probe.

    Passes iff every output is a rank-one projection (defect <= 1e-9).  The
    witness is the first offending input.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_rng(seed)
    dim = psi.dim_in
    if inputs is None:
        inputs = [random_pure(dim, rng).mat for _ in range(n)]
        if dim <= 8:
            inputs += [p.mat for p in probe_set(dim).pure]
        inputs += [k for k in getattr(psi, "known_inputs", ()) if is_pure(k)]
    worst = 0.0
    for rho in inputs:
        out = psi(rho)
        defect = purity_defect(out.mat)
        worst = max(worst, defect)
        if defect > 1e-9:
            return CheckResult(
                "pure_preserving",
                False,
                {"input": _matrix_payload(rho), "output": out.mat.copy(), "defect": defect},
                {"evaluated": len(inputs)},
            )
    return CheckResult("pure_preserving", True, None, {"evaluated": len(inputs), "max_defect": worst})


def _in_open_segment(a, b, c) -> tuple[bool, dict]:
    if np.linalg.norm(a - b) <= SAME_TOL:
        dev = float(np.linalg.norm(c - a))
        return dev <= SAME_TOL, {"degenerate": True, "deviation": dev}
    s, res = segment_parameter(a, b, c)
    ok = res < FIT_TOL and 1e-9 < s < 1 - 1e-9
    return ok, {"s": s, "residual": res}


def _collinear_known_triples(inputs, tol=1e-12):
    """Triples ``(a, b, t)`` of known inputs with ``c = t a + (1-t) b``."""
    out = []
    for i, a in enumerate(inputs):
        for j, b in enumerate(inputs):
            if j <= i:
                continue
            for k, c in enumerate(inputs):
                if k in (i, j):
                    continue
                t, res = segment_parameter(a, b, c)
                if res <= tol and 0 < t < 1:
                    out.append((a, b, c, t))
    return out


def check_strict_convex_preserving(
    psi, n: int = 50, seed=0, sampler: Callable | None = None
) -> CheckResult:
    """Test ``psi((rho, sigma)) in (psi(rho), psi(sigma))`` on random triples.

    ``rho`` and ``sigma`` are drawn by ``sampler(rng)`` (full-rank random
    states by default) and ``t`` uniformly from (0.05, 0.95).  Equal images
    require an equal image of the mixture; otherwise the image of the mixture
    must sit on the open segment, with least-squares parameter ``s`` inside
    ``(1e-9, 1 - 1e-9)`` and fit residual below 1e-8.  Known inputs of the
    oracle that are mixtures of two other known inputs are tested too.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_rng(seed)
    dim = psi.dim_in
    if sampler is None:
        def sampler(g):
            return random_state(dim, dim, g).mat

    s_values = []
    trials = []
    for _ in range(n):
        rho, sigma = sampler(rng), sampler(rng)
        t = rng.uniform(0.05, 0.95)
        trials.append((rho, sigma, t * rho + (1 - t) * sigma, t))
    known = list(getattr(psi, "known_inputs", ()))
    if known:
        trials += _collinear_known_triples(known)
    for rho, sigma, mix, t in trials:
        a, b, c = psi(rho).mat, psi(sigma).mat, psi(mix).mat
        ok, info = _in_open_segment(a, b, c)
        if "s" in info:
            s_values.append(info["s"])
        if not ok:
            witness = {"rho": _matrix_payload(rho), "sigma": _matrix_payload(sigma), "t": float(t), **info}
            return CheckResult("strict_convex_preserving", False, witness, {"evaluated": len(trials)})
    return CheckResult(
        "strict_convex_preserving", True, None, {"evaluated": len(trials), "s_values": s_values}
    )


def _normalizer(psi, tol: Tolerances):
    """The map ``rho -> R+ psi(rho) R+* / Tr`` with ``psi(I/m) = R R*``."""
    sigma0 = psi(maximally_mixed(psi.dim_in)).mat
    w, v = hermitian_eig(sigma0, tol)
    # rank decided on psi(I/m) itself; a square root would lift noise above the cutoff
    keep = w > tol.rank_rel_tol * w[0] * len(w)
    rp = (v[:, keep] / np.sqrt(w[keep])) @ v[:, keep].conj().T

    def phi(rho):
        out = rp @ psi(rho).mat @ rp.conj().T
        return out / np.trace(out).real

    return phi


def _pair_status(f, g, tol=1e-6) -> str:
    if np.linalg.norm(f - g) <= tol:
        return "equal"
    if np.linalg.norm(f @ g) <= tol:
        return "orthogonal"
    return "other"


def check_orthogonality_propagation(
    psi, seed=0, n_pairs: int = 5, n_path: int = 20, tol: Tolerances = DEFAULT_TOL
) -> CheckResult:
    """Equal/orthogonal dichotomy along rotation paths of orthogonal pairs.

    ``psi`` is first normalized by the pseudoinverse square root of
    ``psi(I/m)``.  For random orthonormal ``y1, y2`` the pairs
    ``(a y1 + b y2, conj(b) y1 - conj(a) y2)`` are followed as ``(a, b)``
    rotates from ``(1, 0)`` to ``(0, 1)``.  The images of each pair must be
    equal or orthogonal, with the same status along the whole path.
    ``psi`` must preserve pure states.
    """
    rng = as_rng(seed)
    dim = psi.dim_in
    phi = _normalizer(psi, tol)
    statuses = []
    for _ in range(n_pairs):
        g = rng.normal(size=(dim, 2)) + 1j * rng.normal(size=(dim, 2))
        q, _ = np.linalg.qr(g)
        y1, y2 = q[:, 0], q[:, 1]
        chi = rng.uniform(0, 2 * np.pi)
        path = []
        for theta in np.linspace(0.0, np.pi / 2, n_path):
            a, b = np.cos(theta), np.exp(1j * chi) * np.sin(theta)
            x1 = a * y1 + b * y2
            x2 = np.conj(b) * y1 - np.conj(a) * y2
            f = phi(np.outer(x1, x1.conj()))
            h = phi(np.outer(x2, x2.conj()))
            path.append(_pair_status(f, h))
        statuses.append(path[0])
        if path[0] == "other" or any(p != path[0] for p in path):
            witness = {"y1": y1.copy(), "y2": y2.copy(), "chi": float(chi), "statuses": path}
            return CheckResult("orthogonality_propagation", False, witness)
    return CheckResult("orthogonality_propagation", True, None, {"statuses": statuses})


# --- canonical forms -----------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    q: PureState
    variant = "Constant"

    def to_oracle(self, in_dims) -> StateMapOracle:
        from .maps import constant_map

        return constant_map(self.q, in_dims)


@dataclass(frozen=True)
class Segment:
    """Two-point image; ``h_samples`` pairs probe labels with the weight on ``q1``."""

    q1: PureState
    q2: PureState
    h_samples: tuple[tuple[str, float], ...]
    variant = "Segment"


@dataclass(frozen=True)
class Measurement:
    """``rho -> M rho M* / Tr`` (``rho^t`` if ``transpose_flag``), ``M`` gauge-fixed."""

    m: np.ndarray
    transpose_flag: bool
    residual: float
    variant = "Measurement"

    def to_oracle(self, in_dims=None) -> StateMapOracle:
        return measurement_map(self.m, self.transpose_flag)


@dataclass
class ClassifierReport:
    """Verdict plus the evidence behind it.

    ``status`` is ``"verdict"`` (``form`` is set), ``"out_of_scope"`` (a
    hypothesis check failed) or ``"failure"`` (no form is consistent with the
    oracle; ``diagnostics`` holds the evidence).
    """

    status: str
    form: object | None
    checks: list[CheckResult]
    samples_used: int
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "verdict"


def choi_matrix(lmat: np.ndarray, m: int, k: int, transpose: bool = False) -> np.ndarray:
    """Choi matrix ``sum_ij E_ij (x) L(E_ij)`` of the linear map with matrix ``lmat``.

    ``lmat`` acts on row-major vectorized ``m x m`` inputs and produces
    row-major ``k x k`` outputs.  With ``transpose`` the map is precomposed
    with the transpose.
    """
    lten = lmat.reshape(k, k, m, m)  # [a, b, i, j] = L(E_ij)[a, b]
    axes = (3, 0, 2, 1) if transpose else (2, 0, 3, 1)
    c = lten.transpose(axes).reshape(m * k, m * k)
    return 0.5 * (c + c.conj().T)


def linearize(psi, tol: Tolerances = DEFAULT_TOL):
    """Recover ``L`` with ``psi(rho) = L(rho) / Tr L(rho)`` on the probe set.

    Returns ``(lmat, scalars)`` where ``lmat`` is ``k^2 x m^2`` and
    ``scalars[a] = Tr L(P_a) / Tr L(I/m)``.  Raises ``ValueError`` if a probe
    mixture is not consistent with any linear map.
    """
    m, k = psi.dim_in, psi.dim_out
    probes = probe_set(m)
    centre = probes.probes[-1].mat
    sigma0 = psi(centre).mat
    cols_in, cols_out, scalars = [], [], []
    for label, p in zip(probes.labels, probes.pure):
        img = psi(p).mat
        mix = psi(0.5 * p.mat + 0.5 * centre).mat
        s, res = segment_parameter(img, sigma0, mix)
        if not (res <= FIT_TOL and 0.0 < s < 1.0):
            raise ValueError(f"probe {label}: mixture image off the segment (s={s}, residual={res:.2e})")
        c = s / (1.0 - s)
        scalars.append(c)
        cols_in.append(p.mat.reshape(-1))
        cols_out.append(c * img.reshape(-1))
    x = np.array(cols_in).T
    y = np.array(cols_out).T
    return y @ pseudoinverse(x, tol), np.array(scalars)


def _rank_one(c: np.ndarray, tol: Tolerances):
    w, v = hermitian_eig(c, Tolerances(hermiticity_tol=1e-6))
    order = np.argsort(-np.abs(w), kind="stable")
    w, v = w[order], v[:, order]
    ok = w[0] > 0 and (len(w) < 2 or abs(w[1]) <= CHOI_RANK_TOL * abs(w[0]))
    return ok, w, v


def _random_mixed_inputs(dim, n, rng):
    return [random_state(dim, int(rng.integers(1, dim + 1)), rng).mat for _ in range(n)]


def classify_single(
    psi: StateMapOracle,
    tol: Tolerances = DEFAULT_TOL,
    seed=0,
    samples: int = 50,
    check_hypotheses: bool = True,
) -> ClassifierReport:
    """Classify ``psi`` into its canonical form.

    Decision order: constant (``psi(I/m)`` pure and ``psi`` constant on random
    states), then segment (probe images affinely collinear), then
    measurement (rank-one Choi matrix of the linearization with or without
    transpose).  ``M`` is gauge-fixed per :func:`gauge_fix`; the residual is
    the worst trace distance to the reconstructed map over ``samples`` fresh
    random states.
    """
    rng = as_rng(seed)
    oracle = _Counting(psi)
    m = psi.dim_in
    checks: list[CheckResult] = []

    def report(status, form=None, message="", **diag):
        return ClassifierReport(status, form, checks, oracle.calls, message, diag)

    if check_hypotheses:
        checks.append(check_pure_preserving(oracle, samples, rng))
        checks.append(check_strict_convex_preserving(oracle, samples, rng))
        if not all(checks):
            return report("out_of_scope", message="map violates a hypothesis of the classification")

    sigma0 = oracle(maximally_mixed(m)).mat
    if is_pure(sigma0):
        worst = 0.0
        for rho in _random_mixed_inputs(m, samples, rng):
            worst = max(worst, float(np.linalg.norm(oracle(rho).mat - sigma0)))
        checks.append(CheckResult("constancy", worst <= SAME_TOL, None, {"max_deviation": worst}))
        if worst > SAME_TOL:
            return report("failure", message="psi(I/m) is pure but psi is not constant", max_deviation=worst)
        return report("verdict", Constant(PureState(sigma0)))

    probes = probe_set(m)
    images = [oracle(p).mat for p in probes.probes]
    arank = affine_rank(images)
    checks.append(CheckResult("probe_affine_rank", True, None, {"affine_rank": arank}))
    if arank <= 1:
        return _segment_verdict(probes, images, report)

    try:
        lmat, scalars = linearize(oracle, tol)
    except ValueError as exc:
        return report("failure", message=str(exc))
    k = psi.dim_out
    spectra = {}
    found = None
    for flag in (False, True):
        ok, w, v = _rank_one(choi_matrix(lmat, m, k, transpose=flag), tol)
        spectra["transpose" if flag else "identity"] = w
        if ok:
            found = (flag, w, v)
            break
    if found is None:
        return report("failure", message="neither Choi matrix has rank one", choi_spectra=spectra)
    flag, w, v = found
    vec = np.sqrt(w[0]) * v[:, 0]
    mop = gauge_fix(vec.reshape(m, k).T)
    if numerical_rank(mop, tol) != m:
        return report("failure", message="recovered operator is not injective", choi_spectra=spectra)
    rebuilt = measurement_map(mop, flag)
    residual = 0.0
    for rho in _random_mixed_inputs(m, samples, rng):
        residual = max(residual, trace_distance(oracle(rho).mat, rebuilt(rho).mat))
    checks.append(CheckResult("reconstruction", residual <= tol.recovery_tol, None, {"residual": residual}))
    if residual > tol.recovery_tol:
        return report("failure", message=f"reconstruction residual {residual:.3e} too large", choi_spectra=spectra)
    return report("verdict", Measurement(mop, flag, residual), choi_spectra=spectra)


def _segment_verdict(probes: ProbeSet, images, report) -> ClassifierReport:
    ends: list[np.ndarray] = []
    for img in images:
        if is_pure(img) and all(np.linalg.norm(img - e) > 1e-8 for e in ends):
            ends.append(img)
    if len(ends) != 2:
        return report("failure", message=f"collinear image with {len(ends)} distinct pure images")
    q1, q2 = ends
    h_samples = []
    for label, img in zip(probes.labels, images):
        h, res = segment_parameter(q1, q2, img)
        if res > FIT_TOL or not -1e-9 <= h <= 1 + 1e-9:
            return report("failure", message=f"probe {label} image leaves the segment")
        h_samples.append((label, float(min(max(h, 0.0), 1.0))))
    return report("verdict", Segment(PureState(q1), PureState(q2), tuple(h_samples)))

