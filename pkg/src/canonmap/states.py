"""Quantum states: density matrices, pure states, Bloch ball, random draws."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matcore import (
    DEFAULT_TOL,
    ContractError,
    Tolerances,
    as_matrix,
    check_dims,
    hermitian_eig,
    numerical_rank,
)

__all__ = [
    "StateError",
    "DensityMatrix",
    "PureState",
    "BlochVector",
    "SpectralResolution",
    "ProjectionVerdict",
    "as_rng",
    "is_pure",
    "purity_defect",
    "maximally_mixed",
    "basis_state",
    "spectral_resolution",
    "convex_combine",
    "bloch_to_state",
    "state_to_bloch",
    "random_state",
    "random_pure",
    "random_unit_vector",
    "check_lemma21",
]

TRACE_TOL = 1e-8
PURE_TOL = 1e-9
CLUSTER_GAP = 1e-8


class StateError(ValueError):
    """Matrix is not a valid quantum state."""


def as_rng(seed) -> np.random.Generator:
    """Return a Generator for ``seed`` (int, None, SeedSequence or Generator)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class DensityMatrix:
    """Hermitian, positive semidefinite, trace-one matrix.

    Construction symmetrizes the input, clips eigenvalues in
    ``[-psd_floor, 0)`` to zero and renormalizes a trace within ``1e-8`` of
    one.  Anything further from a state raises :class:`StateError`.  The
    stored matrix is read-only.
    """

    __slots__ = ("_mat", "_dims")

    def __init__(self, mat, dims: Sequence[int] | None = None, tol: Tolerances = DEFAULT_TOL):
        if isinstance(mat, DensityMatrix):
            arr = mat.mat
        else:
            arr = as_matrix(mat, square=True)
        dev = np.max(np.abs(arr - arr.conj().T))
        if dev > tol.hermiticity_tol:
            raise StateError(f"not Hermitian (max deviation {dev:.3e})")
        arr = 0.5 * (arr + arr.conj().T)
        tr = np.trace(arr).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateError(f"trace {tr!r} differs from 1")
        w, v = np.linalg.eigh(arr)
        if w[0] < -tol.psd_floor:
            raise StateError(f"negative eigenvalue {w[0]:.3e}")
        if w[0] < 0:
            w = np.clip(w, 0.0, None)
            arr = (v * w) @ v.conj().T
            arr = 0.5 * (arr + arr.conj().T)
            tr = np.trace(arr).real
        if tr != 1.0:
            arr = arr / tr
        arr.setflags(write=False)
        self._mat = arr
        if dims is None:
            dims = (arr.shape[0],)
        self._dims = check_dims(arr, dims)

    @property
    def mat(self) -> np.ndarray:
        return self._mat

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def dim(self) -> int:
        return self._mat.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._mat if dtype is None else self._mat.astype(dtype)

    def __repr__(self):
        return f"DensityMatrix(dims={self._dims})"

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in descending order."""
        return np.linalg.eigvalsh(self._mat)[::-1]

    def rank(self, tol: Tolerances = DEFAULT_TOL) -> int:
        return numerical_rank(self._mat, tol)

    def is_pure(self) -> bool:
        return is_pure(self._mat)

    def with_dims(self, dims: Sequence[int]) -> "DensityMatrix":
        out = object.__new__(DensityMatrix)
        out._mat = self._mat
        out._dims = check_dims(self._mat, dims)
        return out


def purity_defect(mat) -> float:
    """Largest violation of the rank-one projection invariants.

    Returns ``max(lambda_2, ||P^2 - P||_F)``; a pure state scores below 1e-9.
    """
    p = np.asarray(mat, dtype=complex)
    w = np.linalg.eigvalsh(0.5 * (p + p.conj().T))
    second = w[-2] if w.size > 1 else 0.0
    idem = np.linalg.norm(p @ p - p)
    return float(max(second, idem))


def is_pure(mat, tol: float = PURE_TOL) -> bool:
    return purity_defect(mat) <= tol


def _gauge_vector(x: np.ndarray) -> np.ndarray:
    # phase convention: first entry of (near) largest magnitude is real positive
    mags = np.abs(x)
    k = int(np.argmax(mags >= (1 - 1e-6) * mags.max()))
    return x * (np.conj(x[k]) / mags[k])


class PureState(DensityMatrix):
    """Rank-one projection ``x x*`` together with its unit vector ``x``.

    The vector is gauge-fixed so that its first entry of largest magnitude is
    real and positive.
    """

    __slots__ = ("_vector",)

    def __init__(self, mat, dims: Sequence[int] | None = None, tol: Tolerances = DEFAULT_TOL):
        super().__init__(mat, dims, tol)
        defect = purity_defect(self._mat)
        if defect > PURE_TOL:
            raise StateError(f"not a pure state (defect {defect:.3e})")
        w, v = np.linalg.eigh(self._mat)
        vec = _gauge_vector(v[:, -1])
        vec.setflags(write=False)
        self._vector = vec

    @classmethod
    def from_vector(cls, x, dims: Sequence[int] | None = None) -> "PureState":
        x = np.asarray(x, dtype=complex).reshape(-1)
        nrm = np.linalg.norm(x)
        if nrm == 0:
            raise StateError("zero vector")
        x = x / nrm
        return cls(np.outer(x, x.conj()), dims)

    @property
    def vector(self) -> np.ndarray:
        return self._vector

    def __repr__(self):
        return f"PureState(dims={self._dims})"

    def with_dims(self, dims: Sequence[int]) -> "PureState":
        out = object.__new__(PureState)
        out._mat = self._mat
        out._dims = check_dims(self._mat, dims)
        out._vector = self._vector
        return out


def maximally_mixed(dim: int, dims: Sequence[int] | None = None) -> DensityMatrix:
    return DensityMatrix(np.eye(dim) / dim, dims)


def basis_state(dim: int, i: int) -> PureState:
    x = np.zeros(dim, dtype=complex)
    x[i] = 1.0
    return PureState.from_vector(x)


@dataclass(frozen=True)
class SpectralResolution:
    """``rho = sum_i weight_i * projector_i`` with orthogonal projectors.

    Degenerate eigenspaces make the projector set non-unique; any orthonormal
    basis of each eigenspace is acceptable.
    """

    terms: tuple[tuple[float, PureState], ...]

    @property
    def weights(self) -> np.ndarray:
        return np.array([t for t, _ in self.terms])

    def reconstruct(self) -> np.ndarray:
        return sum(t * p.mat for t, p in self.terms)


def spectral_resolution(rho: DensityMatrix, tol: Tolerances = DEFAULT_TOL) -> SpectralResolution:
    rho = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)
    w, v = hermitian_eig(rho.mat, tol)
    # re-orthonormalize eigenvector clusters of (near) equal eigenvalue
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or abs(w[i] - w[start]) >= CLUSTER_GAP:
            if i - start > 1:
                q, _ = np.linalg.qr(v[:, start:i])
                v[:, start:i] = q
            start = i
    cutoff = max(tol.psd_floor, 1e-12)
    terms = tuple(
        (float(w[i]), PureState.from_vector(v[:, i])) for i in range(len(w)) if w[i] > cutoff
    )
    total = sum(t for t, _ in terms)
    terms = tuple((t / total, p) for t, p in terms)
    return SpectralResolution(terms)


def convex_combine(terms, tol: Tolerances = DEFAULT_TOL) -> DensityMatrix:
    """Convex combination of ``(weight, state)`` pairs."""
    terms = list(terms)
    if not terms:
        raise ValueError("need at least one term")
    weights = np.array([float(t) for t, _ in terms])
    if np.any(weights < 0):
        raise ValueError(f"negative weight in {weights}")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
    first = terms[0][1]
    dims = first.dims if isinstance(first, DensityMatrix) else None
    mat = sum(t * np.asarray(s, dtype=complex) for t, s in terms)
    return DensityMatrix(mat, dims, tol)


# --- Bloch ball ------------------------------------------------------------


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.x**2 + self.y**2 + self.z**2 > 1 + 1e-12:
            raise ValueError(f"Bloch vector {self.as_array()} lies outside the unit ball")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def _bloch_matrix(x, y, z) -> np.ndarray:
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


def bloch_to_state(v: BlochVector) -> DensityMatrix:
    """Qubit state ``I/2 + (x X + y Y + z Z)/2``."""
    mat = _bloch_matrix(v.x, v.y, v.z)
    if abs(v.norm - 1.0) <= 1e-12:
        return PureState(mat)
    return DensityMatrix(mat)


def state_to_bloch(rho) -> BlochVector:
    m = np.asarray(rho, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"Bloch coordinates need a 2x2 state, got shape {m.shape}")
    x = 2 * m[1, 0].real
    y = 2 * m[1, 0].imag
    z = (m[0, 0] - m[1, 1]).real
    r = np.sqrt(x * x + y * y + z * z)
    if 1 < r <= 1 + 1e-12:
        x, y, z = x / r, y / r, z / r
    return BlochVector(float(x), float(y), float(z))


# --- random states ---------------------------------------------------------


def random_unit_vector(dim: int, seed=None) -> np.ndarray:
    """Complex Gaussian vector, normalized (Haar distributed)."""
    rng = as_rng(seed)
    x = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return x / np.linalg.norm(x)


def random_pure(dim: int, seed=None) -> PureState:
    return PureState.from_vector(random_unit_vector(dim, seed))


def random_state(dim: int, rank: int | None = None, seed=None) -> DensityMatrix:
    """Random state of the requested rank (full rank by default).

    Drawn as ``G G* / Tr(G G*)`` with ``G`` a complex Gaussian
    ``dim x rank`` matrix.
    """
    if rank is None:
        rank = dim
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must lie in [1, {dim}], got {rank}")
    rng = as_rng(seed)
    if rank == 1:
        return random_pure(dim, rng)
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


# --- weighted rank-one projectors -------------------------------------------


@dataclass(frozen=True)
class ProjectionVerdict:
    """Outcome of testing whether ``sum t_i Q_i`` is a projection.

    ``counterexample`` is set only if the sum is a projection while the
    weights are not all one or the projectors are not orthogonal.  That would
    contradict the projection criterion and would indicate a numerical bug.
    """

    is_projection: bool
    idempotency_residual: float
    max_weight_error: float
    max_overlap: float
    counterexample: dict | None = None


def check_lemma21(terms, tol: float = 1e-9) -> ProjectionVerdict:
    """Test the projection criterion for linearly independent rank-one projectors."""
    terms = list(terms)
    if not terms:
        raise ValueError("need at least one term")
    weights = np.array([float(t) for t, _ in terms])
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    projs = [np.asarray(q, dtype=complex) for _, q in terms]
    for q in projs:
        if not is_pure(q):
            raise ValueError("every term must be a rank-one projection")
    gram = np.array([[np.trace(a @ b).real for b in projs] for a in projs])
    if numerical_rank(gram) < len(projs):
        raise ValueError("projectors are linearly dependent")
    s = sum(t * q for t, q in zip(weights, projs))
    residual = float(np.linalg.norm(s @ s - s))
    overlaps = [np.linalg.norm(a @ b) for i, a in enumerate(projs) for b in projs[i + 1 :]]
    max_overlap = float(max(overlaps, default=0.0))
    weight_err = float(np.max(np.abs(weights - 1.0)))
    is_proj = residual <= tol
    counter = None
    if is_proj and (weight_err > tol or max_overlap > tol):
        counter = {"weights": weights.tolist(), "residual": residual, "max_overlap": max_overlap}
    return ProjectionVerdict(is_proj, residual, weight_err, max_overlap, counter)
