"""Dense complex matrix algebra used throughout the package.

Everything here is a pure function of numpy arrays.  Tensor factors are
indexed from 0; ``dims`` is always the ordered tuple of factor dimensions of
the composite space a square matrix acts on.

Transposes are always taken in the computational basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tolerances",
    "DEFAULT_TOL",
    "ShapeError",
    "ContractError",
    "Transform",
    "as_matrix",
    "check_dims",
    "tensor",
    "partial_trace",
    "reduction",
    "jacobi_eigh",
    "hermitian_eig",
    "psd_sqrt",
    "pseudoinverse",
    "numerical_rank",
    "norms",
    "trace_distance",
    "transpose",
    "partial_transpose",
    "swap",
    "permute_factors",
    "apply_transform",
    "inverse_permutation",
]


class ShapeError(ValueError):
    """Matrix side length does not match the declared tensor dimensions."""


class ContractError(ValueError):
    """Input violates an operation precondition (e.g. non-Hermitian)."""


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared by the library.

    Attributes
    ----------
    hermiticity_tol : max-entry deviation from Hermiticity accepted.
    psd_floor : eigenvalues in ``[-psd_floor, 0)`` are clipped to zero.
    rank_rel_tol : relative singular-value cutoff for numerical rank.
    recovery_tol : accepted trace distance between an oracle and the form
        reconstructed for it.
    """

    hermiticity_tol: float = 1e-8
    psd_floor: float = 1e-9
    rank_rel_tol: float = 1e-10
    recovery_tol: float = 1e-7

    def __post_init__(self):
        for name in ("hermiticity_tol", "psd_floor", "rank_rel_tol", "recovery_tol"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")


DEFAULT_TOL = Tolerances()


def as_matrix(a, square: bool = False) -> np.ndarray:
    """Coerce ``a`` to a finite 2-D complex array."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError("matrix has non-finite entries")
    return arr


def check_dims(c: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ShapeError(f"invalid factor dimensions {dims}")
    side = int(np.prod(dims))
    if c.shape != (side, side):
        raise ShapeError(f"matrix of shape {c.shape} does not match dims {dims}")
    return dims


def tensor(*mats) -> np.ndarray:
    """Kronecker product of one or more matrices, left to right."""
    if len(mats) == 1 and not isinstance(mats[0], np.ndarray) and isinstance(mats[0], (list, tuple)):
        mats = tuple(mats[0])
    if not mats:
        raise ValueError("tensor needs at least one factor")
    return reduce(np.kron, (np.asarray(m, dtype=complex) for m in mats))


def _as_tensor(c: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    return c.reshape(dims + dims)


def partial_trace(c, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every factor not listed in ``keep``.

    ``keep`` is a nonempty strictly increasing collection of factor indices.
    On a product ``A_0 (x) ... (x) A_{n-1}`` the result is
    ``prod_{i not in keep} Tr(A_i)`` times the tensor of the kept factors.
    """
    c = as_matrix(c, square=True)
    dims = check_dims(c, dims)
    keep = tuple(int(k) for k in keep)
    n = len(dims)
    if not keep:
        raise ValueError("keep must be nonempty")
    if any(b <= a for a, b in zip(keep, keep[1:])) or keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"keep must be strictly increasing indices in [0, {n}), got {keep}")
    if len(keep) == n:
        return c.copy()
    t = _as_tensor(c, dims)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise ValueError("too many tensor factors")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    side = int(np.prod([dims[k] for k in keep]))
    return res.reshape(side, side)


def reduction(c, dims: Sequence[int], r: int) -> np.ndarray:
    """Single-factor reduction: keep only factor ``r``."""
    return partial_trace(c, dims, (r,))


# --- spectral routines -----------------------------------------------------


def _hermitian_input(a, tol: Tolerances) -> np.ndarray:
    a = as_matrix(a, square=True)
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > tol.hermiticity_tol:
        raise ContractError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    return 0.5 * (a + a.conj().T)


def jacobi_eigh(a, tol: Tolerances = DEFAULT_TOL, max_sweeps: int = 100):
    """Cyclic complex Jacobi eigensolver for Hermitian matrices.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns.  Converges once the off-diagonal Frobenius mass
    drops below ``1e-13 * ||a||_F``.
    """
    a = _hermitian_input(a, tol).copy()
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = np.linalg.norm(a)
    target = 1e-13 * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # G = diag(1, conj(phase)) @ [[c, s], [-s, c]] acting on columns p, q
                g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ g
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    w = np.real(np.diag(a))
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def hermitian_eig(a, tol: Tolerances = DEFAULT_TOL, method: str = "lapack"):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    ``method="jacobi"`` uses :func:`jacobi_eigh`; the default delegates to
    LAPACK through ``numpy.linalg.eigh``.
    """
    if method == "jacobi":
        return jacobi_eigh(a, tol)
    if method != "lapack":
        raise ValueError(f"unknown method {method!r}")
    h = _hermitian_input(a, tol)
    w, v = np.linalg.eigh(h)
    return w[::-1].copy(), v[:, ::-1].copy()


def psd_sqrt(a, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    w, v = hermitian_eig(a, tol)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _rank_cutoff(s: np.ndarray, shape, tol: Tolerances) -> float:
    if s.size == 0:
        return 0.0
    return tol.rank_rel_tol * s[0] * max(shape)


def numerical_rank(a, tol: Tolerances = DEFAULT_TOL) -> int:
    a = as_matrix(a)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > _rank_cutoff(s, a.shape, tol)))


def pseudoinverse(r, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with the package's rank rule.

    Singular values at or below ``rank_rel_tol * s_max * max(shape)`` are
    treated as zero.  The zero matrix maps to the zero matrix.
    """
    r = as_matrix(r)
    u, s, vh = np.linalg.svd(r, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((r.shape[1], r.shape[0]), dtype=complex)
    k = int(np.sum(s > _rank_cutoff(s, r.shape, tol)))
    return (vh[:k].conj().T / s[:k]) @ u[:, :k].conj().T


def norms(t, tol: Tolerances = DEFAULT_TOL) -> tuple[float, float, int]:
    """Return ``(trace_norm, hilbert_schmidt_norm, rank)`` of ``t``."""
    t = as_matrix(t)
    s = np.linalg.svd(t, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0.0, 0.0, 0
    rank = int(np.sum(s > _rank_cutoff(s, t.shape, tol)))
    return float(np.sum(s)), float(np.sqrt(np.sum(s * s))), rank


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b`` for Hermitian ``a``, ``b``."""
    d = as_matrix(a) - as_matrix(b)
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))


# --- structural transforms -------------------------------------------------


def transpose(c) -> np.ndarray:
    return as_matrix(c).T.copy()


def partial_transpose(c, dims: Sequence[int], factors: Iterable[int]) -> np.ndarray:
    """Transpose exactly the listed tensor factors."""
    c = as_matrix(c, square=True)
    dims = check_dims(c, dims)
    n = len(dims)
    factors = sorted(set(int(f) for f in factors))
    if any(f < 0 or f >= n for f in factors):
        raise ValueError(f"factor indices {factors} out of range for {n} factors")
    axes = list(range(2 * n))
    for f in factors:
        axes[f], axes[n + f] = n + f, f
    return _as_tensor(c, dims).transpose(axes).reshape(c.shape).copy()


def _check_perm(perm: Sequence[int], n: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of range({n})")
    return perm


def inverse_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    perm = _check_perm(perm, len(perm))
    inv = [0] * len(perm)
    for j, p in enumerate(perm):
        inv[p] = j
    return tuple(inv)


def permute_factors(c, dims: Sequence[int], perm: Sequence[int]) -> tuple[np.ndarray, tuple[int, ...]]:
    """Factor permutation: output factor ``j`` is input factor ``perm[j]``.

    On products, ``A_0 (x) ... (x) A_{n-1}`` maps to
    ``A_{perm[0]} (x) ... (x) A_{perm[n-1]}``.  Returns the permuted matrix and
    its factor dimensions.
    """
    c = as_matrix(c, square=True)
    dims = check_dims(c, dims)
    n = len(dims)
    perm = _check_perm(perm, n)
    axes = list(perm) + [n + p for p in perm]
    new_dims = tuple(dims[p] for p in perm)
    return _as_tensor(c, dims).transpose(axes).reshape(c.shape).copy(), new_dims


def swap(c, dims: Sequence[int]) -> tuple[np.ndarray, tuple[int, ...]]:
    """Bipartite swap, ``A (x) B -> B (x) A``."""
    if len(tuple(dims)) != 2:
        raise ValueError("swap is defined for exactly two factors")
    return permute_factors(c, dims, (1, 0))


@dataclass(frozen=True)
class Transform:
    """Descriptor of a structural transform.

    ``kind`` is one of ``"transpose"``, ``"partial_transpose"`` (uses
    ``factors``), ``"swap"`` or ``"permute"`` (uses ``perm``).
    """

    kind: str
    factors: tuple[int, ...] = ()
    perm: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("transpose", "partial_transpose", "swap", "permute"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        object.__setattr__(self, "factors", tuple(int(f) for f in self.factors))
        object.__setattr__(self, "perm", tuple(int(p) for p in self.perm))

    def output_dims(self, dims: Sequence[int]) -> tuple[int, ...]:
        dims = tuple(dims)
        if self.kind == "swap":
            if len(dims) != 2:
                raise ValueError("swap is defined for exactly two factors")
            return (dims[1], dims[0])
        if self.kind == "permute":
            perm = _check_perm(self.perm, len(dims))
            return tuple(dims[p] for p in perm)
        return dims

    def input_dims(self, out_dims: Sequence[int]) -> tuple[int, ...]:
        """Dimensions ``d`` such that ``output_dims(d) == out_dims``."""
        out_dims = tuple(out_dims)
        if self.kind == "swap":
            return self.output_dims(out_dims)
        if self.kind == "permute":
            inv = inverse_permutation(self.perm)
            return tuple(out_dims[i] for i in inv)
        return out_dims


def apply_transform(c, dims: Sequence[int], spec: Transform) -> tuple[np.ndarray, tuple[int, ...]]:
    """Apply ``spec`` to ``c``; returns the matrix and its new factor dims."""
    c = as_matrix(c, square=True)
    dims = check_dims(c, dims)
    if spec.kind == "transpose":
        return c.T.copy(), dims
    if spec.kind == "partial_transpose":
        return partial_transpose(c, dims, spec.factors), dims
    if spec.kind == "swap":
        return swap(c, dims)
    return permute_factors(c, dims, spec.perm)
