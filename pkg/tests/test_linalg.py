import numpy as np
import pytest
import scipy.sparse as sp

from fvdg.linalg import LinearSolveError, solve_direct, solve_iterative


def _wrap(A, b):
    from fvdg.assembly import SparseSystem
    return SparseSystem(matrix=sp.csr_matrix(A), rhs=np.asarray(b, dtype=float))


def test_identity():
    b = np.array([3.0, -1.0, 2.5])
    assert np.array_equal(solve_direct(_wrap(np.eye(3), b)), b)


def test_hand_two_by_two():
    x = solve_direct(_wrap([[7.0, -1.0], [-1.0, 7.0]], [2.0, 2.0]))
    assert np.allclose(x, 1.0 / 3.0, atol=1e-15)


def test_random_diagonally_dominant_residual():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(100, 100))
    A += np.diag(np.abs(A).sum(axis=1))
    b = rng.normal(size=100)
    sys_ = _wrap(A, b)
    x = solve_direct(sys_)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-10


def test_recovers_known_solution():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(60, 60)) + 8 * np.eye(60)
    y = rng.normal(size=60)
    x = solve_direct(_wrap(A, A @ y))
    assert np.linalg.norm(x - y) / np.linalg.norm(y) <= 1e-9


def test_singular_matrix_raises():
    A = np.zeros((3, 3))
    A[0, 0] = 1.0
    with pytest.raises(LinearSolveError):
        solve_direct(_wrap(A, np.ones(3)))


def test_deterministic_repeat():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(50, 50)) + 10 * np.eye(50)
    b = rng.normal(size=50)
    x1 = solve_direct(_wrap(A, b))
    x2 = solve_direct(_wrap(A, b))
    assert np.array_equal(x1, x2)


def test_iterative_matches_direct():
    # SPD Laplacian-like FV matrix
    n = 20
    main = 4.0 * np.ones(n * n)
    A = sp.diags([main, -np.ones(n * n - 1), -np.ones(n * n - 1),
                  -np.ones(n * n - n), -np.ones(n * n - n)],
                 [0, 1, -1, n, -n], format="csr")
    rng = np.random.default_rng(4)
    b = rng.normal(size=n * n)
    sys_ = _wrap(A.toarray(), b)
    xd = solve_direct(sys_)
    xi = solve_iterative(sys_, tol=1e-12)
    assert np.linalg.norm(xd - xi) / np.linalg.norm(xd) <= 1e-8


def test_iterative_zero_rhs():
    A = np.eye(4) * 2
    assert np.array_equal(solve_iterative(_wrap(A, np.zeros(4))), np.zeros(4))


def test_iterative_zero_max_iter():
    with pytest.raises(LinearSolveError):
        solve_iterative(_wrap(np.eye(4), np.ones(4)), max_iter=0)
