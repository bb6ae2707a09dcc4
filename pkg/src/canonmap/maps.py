"""Constructors for state maps and the oracle wrapper the classifiers consume.

Every map is exposed as a :class:`StateMapOracle`: an immutable callable
from states on the input space to states on the output space.  Constructed
maps, lookup tables and user callables all share this interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .matcore import (
    DEFAULT_TOL,
    Tolerances,
    Transform,
    apply_transform,
    as_matrix,
    numerical_rank,
    partial_trace,
    partial_transpose,
    permute_factors,
    tensor,
)
from .states import DensityMatrix, PureState, is_pure

__all__ = [
    "MapError",
    "TableMissError",
    "MeasurementOp",
    "StateMapOracle",
    "SegmentSpec",
    "MeasureSlot",
    "ConstantSlot",
    "bloch_partition",
    "measurement_map",
    "constant_map",
    "segment_map",
    "local_map",
    "local_measurement_map",
    "identity_map",
    "compose",
    "table_key",
    "table_map",
    "spectral_argmax_map",
    "custom_map",
]


class MapError(ValueError):
    """Invalid map construction or dimension mismatch."""


class TableMissError(KeyError):
    """A table-backed oracle was evaluated off its table."""


def _normalized_conjugation(m: np.ndarray, rho: np.ndarray) -> np.ndarray:
    out = m @ rho @ m.conj().T
    return out / np.trace(out).real


@dataclass(frozen=True)
class MeasurementOp:
    """Injective operator ``M`` plus a flag selecting ``rho`` or ``rho^t``."""

    m: np.ndarray
    conjugate_flag: bool = False

    def __post_init__(self):
        m = as_matrix(self.m).copy()
        if numerical_rank(m) != m.shape[1]:
            raise MapError(f"measurement operator of shape {m.shape} is not injective")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "conjugate_flag", bool(self.conjugate_flag))

    @property
    def dim_in(self) -> int:
        return self.m.shape[1]

    @property
    def dim_out(self) -> int:
        return self.m.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = rho.T if self.conjugate_flag else rho
        return _normalized_conjugation(self.m, rho)


class StateMapOracle:
    """Black-box map between state spaces.

    Parameters
    ----------
    func : callable taking the input matrix and returning the output matrix.
    in_dims, out_dims : tensor factor dimensions of input and output.
    provenance : ``"constructed"``, ``"table"`` or ``"external"``.
    known_inputs : states at which the map is known to be defined.  The
        verification batteries always include them, which matters for
        table oracles whose domain is finite.
    description : JSON-friendly summary of how the map was built.
    """

    def __init__(
        self,
        func: Callable[[np.ndarray], np.ndarray],
        in_dims: Sequence[int],
        out_dims: Sequence[int],
        provenance: str = "constructed",
        known_inputs: Sequence = (),
        description: dict | None = None,
        tol: Tolerances = DEFAULT_TOL,
    ):
        if provenance not in ("constructed", "table", "external"):
            raise MapError(f"unknown provenance {provenance!r}")
        self._func = func
        self.in_dims = tuple(int(d) for d in in_dims)
        self.out_dims = tuple(int(d) for d in out_dims)
        self.provenance = provenance
        self.known_inputs = tuple(np.asarray(k, dtype=complex) for k in known_inputs)
        self.description = dict(description or {})
        self.tol = tol

    @property
    def dim_in(self) -> int:
        return int(np.prod(self.in_dims))

    @property
    def dim_out(self) -> int:
        return int(np.prod(self.out_dims))

    @property
    def n_factors(self) -> int:
        return len(self.in_dims)

    def __repr__(self):
        kind = self.description.get("kind", "map")
        return f"StateMapOracle({kind}, {self.in_dims} -> {self.out_dims}, {self.provenance})"

    def __call__(self, rho) -> DensityMatrix:
        mat = rho.mat if isinstance(rho, DensityMatrix) else as_matrix(rho, square=True)
        if mat.shape[0] != self.dim_in:
            raise MapError(f"input of side {mat.shape[0]} does not match dims {self.in_dims}")
        out = self._func(mat)
        if isinstance(out, DensityMatrix):
            out = out.mat
        out = np.asarray(out, dtype=complex)
        if out.shape != (self.dim_out, self.dim_out):
            raise MapError(f"oracle returned shape {out.shape}, expected dims {self.out_dims}")
        return DensityMatrix(out, self.out_dims, self.tol)

    evaluate = __call__


def custom_map(func, in_dims, out_dims, description=None) -> StateMapOracle:
    """Wrap an arbitrary callable as an external oracle."""
    return StateMapOracle(func, in_dims, out_dims, "external", description=description)


def _as_pure(q) -> PureState:
    # keep factor dims of an existing state; only coerce raw arrays
    return q if isinstance(q, PureState) else PureState(np.asarray(q, dtype=complex))


def measurement_map(op, transpose: bool = False, out_dims=None) -> StateMapOracle:
    """``rho -> M rho M* / Tr(M rho M*)`` (or with ``rho^t``).

    ``op`` is a :class:`MeasurementOp` or a matrix; in the latter case
    ``transpose`` sets the conjugate flag.
    """
    if not isinstance(op, MeasurementOp):
        op = MeasurementOp(op, transpose)
    out_dims = (op.dim_out,) if out_dims is None else tuple(out_dims)
    return StateMapOracle(
        op.apply,
        (op.dim_in,),
        out_dims,
        description={"kind": "measurement", "m": op.m, "transpose": op.conjugate_flag},
    )


def identity_map(dims: Sequence[int]) -> StateMapOracle:
    dims = tuple(dims)
    return StateMapOracle(lambda rho: rho, dims, dims, description={"kind": "identity"})


def constant_map(q, in_dims: Sequence[int], out_dims=None) -> StateMapOracle:
    q = _as_pure(q)
    out_dims = q.dims if out_dims is None else tuple(out_dims)
    value = q.mat
    return StateMapOracle(
        lambda rho: value, tuple(in_dims), out_dims, description={"kind": "constant", "state": value}
    )


def bloch_partition(p) -> int:
    """Default pure-state partition: class 1 iff the Bloch z-coordinate is >= 0.

    Ties at ``z = 0`` are broken by the sign of x, then y, then class 1.  For
    dimension above two the rule reads the Bloch coordinates of the leading
    2x2 block.  ``P`` and its orthogonal complement always land in different
    classes in dimension two.
    """
    p = np.asarray(p, dtype=complex)
    z = (p[0, 0] - p[1, 1]).real
    x = 2 * p[1, 0].real
    y = 2 * p[1, 0].imag
    for coord in (z, x, y):
        if coord > 1e-12:
            return 1
        if coord < -1e-12:
            return 2
    return 1


@dataclass(frozen=True)
class SegmentSpec:
    """Two distinct pure endpoints and the rule assigning pure inputs to them."""

    q1: PureState
    q2: PureState
    partition_rule: Callable[[np.ndarray], int] = field(default=bloch_partition)

    def __post_init__(self):
        object.__setattr__(self, "q1", _as_pure(self.q1))
        object.__setattr__(self, "q2", _as_pure(self.q2))
        if self.q1.mat.shape != self.q2.mat.shape:
            raise MapError("segment endpoints live on different spaces")
        if np.linalg.norm(self.q1.mat - self.q2.mat) <= 1e-6:
            raise MapError("segment endpoints must be distinct")


def _antipodal_spot_check(rule) -> None:
    rng = np.random.default_rng(2024)
    for _ in range(64):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        p = 0.5 * np.array([[1 + v[2], v[0] - 1j * v[1]], [v[0] + 1j * v[1], 1 - v[2]]])
        if rule(p) == rule(np.eye(2) - p):
            raise MapError("partition rule puts a pure state and its complement in one class")


def segment_map(spec: SegmentSpec, in_dims: Sequence[int] = (2,)) -> StateMapOracle:
    """Discontinuous map with image in the segment ``[q1, q2]``.

    A pure input goes to ``q1`` or ``q2`` according to ``spec.partition_rule``;
    every mixed input goes to the midpoint.  With a single qubit input this is
    the standard discontinuous example.  With several input factors the rule
    is applied to the first-factor reduction of pure (product) inputs, giving
    a two-point product image.

    Mixtures of two distinct pure states from the same class also land on the
    midpoint, so strict convexity holds only for segments through the interior
    of the state space and for segments joining the two classes.
    """
    in_dims = tuple(in_dims)
    if len(in_dims) == 1 and in_dims[0] != 2:
        raise MapError("single-system segment maps are defined for qubit inputs only")
    if len(in_dims) == 1:
        _antipodal_spot_check(spec.partition_rule)
    q1, q2 = spec.q1.mat, spec.q2.mat
    mid = 0.5 * (q1 + q2)
    rule = spec.partition_rule

    def func(rho):
        if not is_pure(rho):
            return mid
        first = rho if len(in_dims) == 1 else partial_trace(rho, in_dims, (0,))
        return q1 if rule(first) == 1 else q2

    return StateMapOracle(
        func,
        in_dims,
        spec.q1.dims,
        description={"kind": "segment", "q1": q1, "q2": q2},
    )


# --- local maps on tensor products ------------------------------------------


@dataclass(frozen=True)
class MeasureSlot:
    """Output slot produced by measuring input factor ``source`` with ``op``."""

    source: int
    op: MeasurementOp


@dataclass(frozen=True)
class ConstantSlot:
    """Output slot holding a fixed pure state."""

    state: PureState

    def __post_init__(self):
        object.__setattr__(self, "state", _as_pure(self.state))


def local_map(slots: Sequence, in_dims: Sequence[int]) -> StateMapOracle:
    """Map built slot by slot on a tensor product.

    Output factor ``j`` is either a local measurement of one input factor or a
    constant pure state.  Measured factors must read distinct inputs; unread
    inputs are traced out.  When every slot measures, this is
    ``(M_1 (x) ... (x) M_n) PT_F(Theta_pi(rho)) (...)*`` normalized, where
    ``pi`` lists the sources and ``F`` the slots that carry a transpose flag.
    """
    in_dims = tuple(int(d) for d in in_dims)
    slots = tuple(slots)
    n_in = len(in_dims)
    measured = [(j, s) for j, s in enumerate(slots) if isinstance(s, MeasureSlot)]
    const = [(j, s) for j, s in enumerate(slots) if isinstance(s, ConstantSlot)]
    if len(measured) + len(const) != len(slots):
        raise MapError("slots must be MeasureSlot or ConstantSlot instances")
    sources = [s.source for _, s in measured]
    if len(set(sources)) != len(sources):
        raise MapError(f"measured slots read the same input factor: {sources}")
    for j, s in measured:
        if not 0 <= s.source < n_in:
            raise MapError(f"slot {j} reads input factor {s.source}, only {n_in} exist")
        if s.op.dim_in != in_dims[s.source]:
            raise MapError(
                f"slot {j}: operator expects dim {s.op.dim_in}, input factor {s.source} has dim "
                f"{in_dims[s.source]}"
            )
    out_dims = tuple(
        s.op.dim_out if isinstance(s, MeasureSlot) else s.state.dim for s in slots
    )
    keep = sorted(sources)
    sub_perm = [keep.index(src) for src in sources]
    sub_dims = tuple(in_dims[k] for k in keep)
    flagged = [i for i, (_, s) in enumerate(measured) if s.op.conjugate_flag]
    big_m = tensor(*[s.op.m for _, s in measured]) if measured else None
    order = [j for j, _ in measured] + [j for j, _ in const]
    out_perm = [order.index(j) for j in range(len(slots))]
    block_dims = tuple(out_dims[j] for j in order)
    const_mat = tensor(*[s.state.mat for _, s in const]) if const else None

    def func(rho):
        if measured:
            red = partial_trace(rho, in_dims, keep)
            red, perm_dims = permute_factors(red, sub_dims, sub_perm)
            if flagged:
                red = partial_transpose(red, perm_dims, flagged)
            block = _normalized_conjugation(big_m, red)
            if const_mat is not None:
                block = np.kron(block, const_mat)
        else:
            block = const_mat
        out, _ = permute_factors(block, block_dims, out_perm)
        return out

    desc_slots = []
    for s in slots:
        if isinstance(s, MeasureSlot):
            desc_slots.append({"source": s.source, "m": s.op.m, "transpose": s.op.conjugate_flag})
        else:
            desc_slots.append({"constant": s.state.mat})
    return StateMapOracle(
        func, in_dims, out_dims, description={"kind": "local_measurement", "slots": desc_slots}
    )


def local_measurement_map(ops: Sequence, perm: Sequence[int] | None = None, in_dims=None) -> StateMapOracle:
    """Local measurement with wiring ``perm``: output ``j`` reads input ``perm[j]``.

    ``ops`` holds one :class:`MeasurementOp` (or bare matrix) per output slot.
    """
    ops = [op if isinstance(op, MeasurementOp) else MeasurementOp(op) for op in ops]
    n = len(ops)
    perm = tuple(range(n)) if perm is None else tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise MapError(f"{perm} is not a permutation of range({n})")
    if in_dims is None:
        dims = [0] * n
        for j, p in enumerate(perm):
            dims[p] = ops[j].dim_in
        in_dims = tuple(dims)
    return local_map([MeasureSlot(p, op) for p, op in zip(perm, ops)], in_dims)


def compose(psi: StateMapOracle, pre: Transform) -> StateMapOracle:
    """``rho -> psi(T(rho))`` for a structural transform ``T``."""
    if pre.kind == "swap" and psi.n_factors != 2:
        raise MapError("swap needs a bipartite map")
    try:
        in_dims = pre.input_dims(psi.in_dims)
    except ValueError as exc:
        raise MapError(str(exc)) from exc
    if pre.kind == "partial_transpose" and any(f >= len(in_dims) for f in pre.factors):
        raise MapError(f"partial transpose factors {pre.factors} out of range")

    def func(rho):
        t, _ = apply_transform(rho, in_dims, pre)
        return psi(t).mat

    desc = {"kind": "composed", "transform": pre.kind, "inner": psi.description}
    return StateMapOracle(
        func, in_dims, psi.out_dims, psi.provenance, psi.known_inputs, desc, psi.tol
    )


# --- table oracles -----------------------------------------------------------


def table_key(mat) -> tuple[str, ...]:
    """Canonical exact-match key: every real and imaginary part to 12 significant digits."""
    arr = np.asarray(mat, dtype=complex).reshape(-1)
    parts = np.empty(2 * arr.size)
    parts[0::2] = arr.real
    parts[1::2] = arr.imag
    parts = parts + 0.0  # fold -0.0 into 0.0
    return (str(int(np.sqrt(arr.size))),) + tuple(f"{v:.11e}" for v in parts)


def table_map(
    entries: Sequence[tuple],
    in_dims: Sequence[int],
    out_dims: Sequence[int],
    base: StateMapOracle | None = None,
    default_output=None,
) -> StateMapOracle:
    """Oracle defined by an explicit ``(input, output)`` table.

    Lookup needs an exact key match (see :func:`table_key`); there is no
    interpolation.  Off-table inputs go to ``base`` if given, else to
    ``default_output`` if given, else raise :class:`TableMissError`.
    """
    in_dims, out_dims = tuple(in_dims), tuple(out_dims)
    table = {}
    inputs = []
    for inp, out in entries:
        inp = DensityMatrix(inp, in_dims).mat
        out = DensityMatrix(out, out_dims).mat
        table[table_key(inp)] = out
        inputs.append(inp)
    default = None if default_output is None else DensityMatrix(default_output, out_dims).mat

    def func(rho):
        hit = table.get(table_key(rho))
        if hit is not None:
            return hit
        if base is not None:
            return base(rho).mat
        if default is not None:
            return default
        raise TableMissError("input state is not in the table")

    return StateMapOracle(
        func, in_dims, out_dims, "table", inputs, description={"kind": "table", "size": len(table)}
    )


def spectral_argmax_map(dim: int) -> StateMapOracle:
    """Projector onto a top eigenvector of the input.

    Pure-state preserving but not strict convex combination preserving;
    kept as a negative control for the verification batteries.
    """

    def func(rho):
        w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
        x = v[:, -1]
        return np.outer(x, x.conj())

    return StateMapOracle(func, (dim,), (dim,), description={"kind": "spectral_argmax"})

