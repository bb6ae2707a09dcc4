import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from canonmap.matcore import (
    ContractError,
    ShapeError,
    Tolerances,
    Transform,
    apply_transform,
    hermitian_eig,
    inverse_permutation,
    jacobi_eigh,
    norms,
    partial_trace,
    partial_transpose,
    permute_factors,
    pseudoinverse,
    reduction,
    swap,
    tensor,
)
from canonmap.states import random_state


def rand_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def rand_herm(rng, n):
    a = rand_complex(rng, n, n)
    return a + a.conj().T


# --- tolerances --------------------------------------------------------------


def test_tolerances_defaults():
    tol = Tolerances()
    assert tol.hermiticity_tol == 1e-8
    assert tol.psd_floor == 1e-9
    assert tol.rank_rel_tol == 1e-10
    assert tol.recovery_tol == 1e-7


@pytest.mark.parametrize("bad", [-1.0, float("nan"), float("inf")])
def test_tolerances_reject_bad_values(bad):
    with pytest.raises(ValueError):
        Tolerances(recovery_tol=bad)


# --- partial trace -----------------------------------------------------------


def test_partial_trace_over_first_factor():
    rng = np.random.default_rng(1)
    a = random_state(2, seed=rng).mat
    b = rand_complex(rng, 3, 3)
    np.testing.assert_allclose(partial_trace(np.kron(a, b), (2, 3), (1,)), b, atol=1e-12)


def test_partial_trace_over_second_factor():
    rng = np.random.default_rng(2)
    a = rand_complex(rng, 2, 2)
    b = random_state(3, seed=rng).mat
    np.testing.assert_allclose(partial_trace(np.kron(a, b), (2, 3), (0,)), a, atol=1e-12)


def test_partial_trace_keep_all_is_identity():
    c = rand_complex(np.random.default_rng(3), 4, 4)
    out = partial_trace(c, (2, 2), (0, 1))
    np.testing.assert_array_equal(out, c)
    assert out is not c


def test_partial_trace_middle_of_three():
    rng = np.random.default_rng(4)
    facs = [random_state(d, seed=rng).mat for d in (2, 3, 2)]
    np.testing.assert_allclose(partial_trace(tensor(*facs), (2, 3, 2), (1,)), facs[1], atol=1e-12)


def test_partial_trace_product_scaling():
    rng = np.random.default_rng(5)
    a, b, c = rand_complex(rng, 2, 2), rand_complex(rng, 2, 2), rand_complex(rng, 3, 3)
    expect = np.trace(b) * np.kron(a, c)
    np.testing.assert_allclose(partial_trace(tensor(a, b, c), (2, 2, 3), (0, 2)), expect, atol=1e-10)


@pytest.mark.parametrize("keep", [(), (1, 0), (0, 0), (2,)])
def test_partial_trace_rejects_bad_keep(keep):
    with pytest.raises(ValueError):
        partial_trace(np.eye(4), (2, 2), keep)


def test_partial_trace_shape_mismatch():
    with pytest.raises(ShapeError):
        partial_trace(np.eye(5), (2, 2), (0,))


def test_partial_trace_linear_and_trace_preserving():
    rng = np.random.default_rng(6)
    dims = (2, 3, 2)
    c1, c2 = rand_complex(rng, 12, 12), rand_complex(rng, 12, 12)
    alpha, beta = 0.3 - 1.2j, 2.1
    for keep in [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]:
        lhs = partial_trace(alpha * c1 + beta * c2, dims, keep)
        rhs = alpha * partial_trace(c1, dims, keep) + beta * partial_trace(c2, dims, keep)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        assert abs(np.trace(partial_trace(c1, dims, keep)) - np.trace(c1)) < 1e-12


def test_reduction_is_single_factor_trace():
    rng = np.random.default_rng(7)
    facs = [random_state(d, seed=rng).mat for d in (3, 2)]
    np.testing.assert_allclose(reduction(np.kron(*facs), (3, 2), 1), facs[1], atol=1e-12)


def test_tensor_associative():
    rng = np.random.default_rng(8)
    a, b, c = rand_complex(rng, 2, 2), rand_complex(rng, 3, 3), rand_complex(rng, 2, 2)
    np.testing.assert_allclose(np.kron(np.kron(a, b), c), np.kron(a, np.kron(b, c)))
    np.testing.assert_allclose(tensor(a, b, c), np.kron(a, np.kron(b, c)))


# --- eigensolver -------------------------------------------------------------


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_eig_diagonal(method):
    w, v = hermitian_eig(np.diag([3.0, 1.0, 2.0]), method=method)
    np.testing.assert_allclose(w, [3, 2, 1], atol=1e-14)
    np.testing.assert_allclose(np.abs(v), [[1, 0, 0], [0, 0, 1], [0, 1, 0]], atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_eig_pauli_x(method):
    w, _ = hermitian_eig(np.array([[0, 1], [1, 0]]), method=method)
    np.testing.assert_allclose(w, [1, -1], atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
@pytest.mark.parametrize("seed", range(5))
def test_eig_random_reconstruction(method, seed):
    a = rand_herm(np.random.default_rng(seed), 6)
    w, v = hermitian_eig(a, method=method)
    assert np.all(np.diff(w) <= 0)
    assert np.linalg.norm(v @ np.diag(w) @ v.conj().T - a) <= 1e-10 * np.linalg.norm(a)
    assert np.linalg.norm(v.conj().T @ v - np.eye(6)) <= 1e-10


def test_jacobi_agrees_with_lapack():
    rng = np.random.default_rng(11)
    for n in (1, 2, 5, 12):
        a = rand_herm(rng, n)
        w1, _ = jacobi_eigh(a)
        np.testing.assert_allclose(w1, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-10)


def test_jacobi_degenerate_spectrum():
    rng = np.random.default_rng(12)
    q, _ = np.linalg.qr(rand_complex(rng, 4, 4))
    a = q @ np.diag([2.0, 2.0, 1.0, 1.0]) @ q.conj().T
    w, v = jacobi_eigh(a)
    np.testing.assert_allclose(w, [2, 2, 1, 1], atol=1e-12)
    assert np.linalg.norm(v.conj().T @ v - np.eye(4)) < 1e-10


def test_eig_rejects_non_hermitian():
    with pytest.raises(ContractError):
        hermitian_eig(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ContractError):
        jacobi_eigh(np.array([[0, 1], [0, 0]]))


# --- pseudoinverse and norms ---------------------------------------------------


def penrose_residuals(r, x):
    return (
        np.linalg.norm(r @ x @ r - r),
        np.linalg.norm(x @ r @ x - x),
        np.linalg.norm((r @ x).conj().T - r @ x),
        np.linalg.norm((x @ r).conj().T - x @ r),
    )


def test_pinv_invertible():
    a = np.array([[2.0, 1.0], [1.0, 3.0 + 1j]])
    np.testing.assert_allclose(pseudoinverse(a), np.linalg.inv(a), atol=1e-10)


def test_pinv_projection():
    np.testing.assert_allclose(pseudoinverse(np.diag([1.0, 0.0])), np.diag([1.0, 0.0]))


def test_pinv_zero():
    np.testing.assert_array_equal(pseudoinverse(np.zeros((2, 3))), np.zeros((3, 2)))


def test_pinv_rank_two_rectangular():
    rng = np.random.default_rng(13)
    r = rand_complex(rng, 4, 2) @ rand_complex(rng, 2, 3)
    assert max(penrose_residuals(r, pseudoinverse(r))) < 1e-9


def test_pinv_penrose_battery():
    rng = np.random.default_rng(14)
    for _ in range(500):
        m, n = rng.integers(1, 7, size=2)
        k = int(rng.integers(1, min(m, n) + 1))
        r = rand_complex(rng, m, k) @ rand_complex(rng, k, n)
        assert max(penrose_residuals(r, pseudoinverse(r))) < 1e-9


def test_norms_rank_one_projection():
    x = np.array([1.0, 1j]) / np.sqrt(2)
    tr, hs, rank = norms(np.outer(x, x.conj()))
    assert rank == 1
    assert abs(tr - 1) < 1e-12 and abs(hs - 1) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 5])
def test_norms_maximally_mixed(n):
    tr, hs, rank = norms(np.eye(n) / n)
    assert rank == n
    assert abs(tr - 1) < 1e-12
    assert abs(hs * hs - tr * tr / rank) < 1e-12


def test_norms_zero():
    assert norms(np.zeros((3, 3))) == (0.0, 0.0, 0)


def test_norm_inequality_random():
    rng = np.random.default_rng(15)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        k = int(rng.integers(1, n + 1))
        t = rand_complex(rng, n, k) @ rand_complex(rng, k, n)
        tr, hs, rank = norms(t)
        assert tr * tr / rank <= hs * hs + 1e-10 * tr * tr
        assert hs * hs <= tr * tr + 1e-10 * tr * tr


# --- structural transforms -----------------------------------------------------


def test_swap_product():
    rng = np.random.default_rng(16)
    a, b = rand_complex(rng, 2, 2), rand_complex(rng, 3, 3)
    out, dims = swap(np.kron(a, b), (2, 3))
    assert dims == (3, 2)
    np.testing.assert_allclose(out, np.kron(b, a), atol=1e-14)


def test_swap_needs_two_factors():
    with pytest.raises(ValueError):
        swap(np.eye(8), (2, 2, 2))


def test_partial_transpose_involution():
    c = rand_complex(np.random.default_rng(17), 6, 6)
    twice = partial_transpose(partial_transpose(c, (2, 3), (1,)), (2, 3), (1,))
    np.testing.assert_allclose(twice, c, atol=1e-14)


def test_partial_transpose_acts_on_listed_factor():
    rng = np.random.default_rng(18)
    a, b = rand_complex(rng, 2, 2), rand_complex(rng, 3, 3)
    np.testing.assert_allclose(partial_transpose(np.kron(a, b), (2, 3), (1,)), np.kron(a, b.T))
    np.testing.assert_allclose(partial_transpose(np.kron(a, b), (2, 3), (0, 1)), np.kron(a, b).T)


def test_permutation_on_products():
    rng = np.random.default_rng(19)
    facs = [rand_complex(rng, d, d) for d in (2, 3, 4)]
    # output j reads input perm[j]; (2,3,1) in 1-based notation
    out, dims = permute_factors(tensor(*facs), (2, 3, 4), (1, 2, 0))
    assert dims == (3, 4, 2)
    np.testing.assert_allclose(out, tensor(facs[1], facs[2], facs[0]), atol=1e-12)


def test_permutation_rejects_non_bijection():
    with pytest.raises(ValueError):
        permute_factors(np.eye(8), (2, 2, 2), (0, 0, 1))


def test_permutation_composition_on_products():
    rng = np.random.default_rng(20)
    dims = (2, 3, 2, 3)
    for _ in range(20):
        p, s = rng.permutation(4), rng.permutation(4)
        facs = [rand_complex(rng, d, d) for d in dims]
        first, d1 = permute_factors(tensor(*facs), dims, s)
        second, d2 = permute_factors(first, d1, p)
        composed, d3 = permute_factors(tensor(*facs), dims, [s[i] for i in p])
        assert d2 == d3
        np.testing.assert_allclose(second, composed, atol=1e-12)
        back, d4 = permute_factors(first, d1, inverse_permutation(s))
        assert d4 == dims
        np.testing.assert_allclose(back, tensor(*facs), atol=1e-12)


def test_transforms_trace_and_hermiticity_preserving():
    rng = np.random.default_rng(21)
    h = rand_herm(rng, 12)
    specs = [
        Transform("transpose"),
        Transform("partial_transpose", factors=(0, 2)),
        Transform("permute", perm=(2, 0, 1)),
    ]
    for spec in specs:
        out, _ = apply_transform(h, (2, 3, 2), spec)
        assert abs(np.trace(out) - np.trace(h)) < 1e-12
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12)
    out, dims = apply_transform(rand_herm(rng, 6), (2, 3), Transform("swap"))
    assert dims == (3, 2)


def test_transform_rejects_unknown_kind():
    with pytest.raises(ValueError):
        Transform("rotate")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(2, 3), min_size=2, max_size=3))
def test_partial_trace_of_product_is_factor(seed, dims):
    rng = np.random.default_rng(seed)
    facs = [random_state(d, seed=rng).mat for d in dims]
    c = tensor(*facs)
    for r in range(len(dims)):
        np.testing.assert_allclose(reduction(c, dims, r), facs[r], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_pinv_penrose_property(seed, m, n):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, min(m, n) + 1))
    r = rand_complex(rng, m, k) @ rand_complex(rng, k, n)
    assert max(penrose_residuals(r, pseudoinverse(r))) < 1e-9
