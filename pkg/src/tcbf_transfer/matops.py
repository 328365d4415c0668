"""Small dense linear algebra on numpy arrays.

Everything here targets matrices of dimension <= ~200 (Lyapunov systems
are 36x36, min-snap KKT systems a few hundred rows). The routines are
written out explicitly so the numerical contracts (pivot thresholds,
residual bounds, symmetric output) are under our control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-12
SYM_TOL = 1e-12


class LinAlgError(ValueError):
    """Raised when a matrix does not meet an operation's precondition."""


class SingularMatrixError(LinAlgError):
    def __init__(self, pivot_index: int, pivot: float):
        super().__init__(f"matrix is singular: pivot {pivot_index} has magnitude {abs(pivot):.3e}")
        self.pivot_index = pivot_index
        self.pivot = pivot


class NotPositiveDefiniteError(LinAlgError):
    pass


class NotHurwitzError(LinAlgError):
    pass


@dataclass(frozen=True)
class SymEigResult:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, orthonormal

    @property
    def min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max(self) -> float:
        return float(self.eigenvalues[-1])


def inf_norm(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.abs(M).sum(axis=1).max()) if M.size else 0.0


def _as_matrix(A, name="A") -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim != 2:
        raise LinAlgError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise LinAlgError(f"{name} has non-finite entries")
    return A


def _lu_solve_once(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    M = A.copy()
    x = b.copy()
    scale = max(1.0, float(np.abs(A).max()))
    for k in range(n):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if abs(M[p, k]) <= PIVOT_TOL * scale:
            raise SingularMatrixError(k, M[p, k])
        if p != k:
            M[[k, p]] = M[[p, k]]
            x[[k, p]] = x[[p, k]]
        factors = M[k + 1:, k] / M[k, k]
        M[k + 1:, k:] -= np.outer(factors, M[k, k:])
        x[k + 1:] -= np.outer(factors, x[k]) if x.ndim == 2 else factors * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - M[k, k + 1:] @ x[k + 1:]) / M[k, k]
    return x


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    One step of iterative refinement is applied. ``b`` may be a vector or
    a matrix of right-hand sides.
    """
    A = _as_matrix(A)
    b = np.array(b, dtype=float)
    n, m = A.shape
    if n != m:
        raise LinAlgError(f"A must be square, got {A.shape}")
    if b.shape[0] != n:
        raise LinAlgError(f"b has {b.shape[0]} rows, expected {n}")
    x = _lu_solve_once(A, b)
    r = b - A @ x
    x = x + _lu_solve_once(A, r)
    return x


def inverse(A) -> np.ndarray:
    A = _as_matrix(A)
    return solve_linear(A, np.eye(A.shape[0]))


def cholesky(M) -> np.ndarray:
    """Lower-triangular L with ``L @ L.T == M``; raises on non-PD input."""
    M = _as_matrix(M, "M")
    n = M.shape[0]
    if M.shape != (n, n):
        raise LinAlgError(f"M must be square, got {M.shape}")
    if np.abs(M - M.T).max() > SYM_TOL * max(1.0, np.abs(M).max()):
        raise LinAlgError("M is not symmetric")
    L = np.zeros_like(M)
    for j in range(n):
        d = M[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0.0:
            raise NotPositiveDefiniteError(f"matrix is not positive definite (pivot {j}: {d:.3e})")
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (M[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def is_positive_definite(M) -> bool:
    try:
        cholesky(M)
    except LinAlgError:
        return False
    return True


def sym_eig(M, tol: float = 1e-12, max_sweeps: int = 100) -> SymEigResult:
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix."""
    A = _as_matrix(M, "M")
    n = A.shape[0]
    if A.shape != (n, n):
        raise LinAlgError(f"M must be square, got {A.shape}")
    if np.abs(A - A.T).max() > SYM_TOL * max(1.0, np.abs(A).max()):
        raise LinAlgError("M is not symmetric")
    A = 0.5 * (A + A.T)
    U = np.eye(n)
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                G = np.eye(n)
                G[p, p] = G[q, q] = c
                G[p, q] = s
                G[q, p] = -s
                A = G.T @ A @ G
                A[p, q] = A[q, p] = 0.0
                U = U @ G
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return SymEigResult(w[order], U[:, order])


def _small_eigen_real_parts(A: np.ndarray) -> np.ndarray | None:
    if A.shape == (1, 1):
        return np.array([A[0, 0]])
    if A.shape == (2, 2):
        tr = A[0, 0] + A[1, 1]
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        disc = tr * tr - 4.0 * det
        if disc >= 0:
            r = np.sqrt(disc)
            return np.array([(tr - r) / 2.0, (tr + r) / 2.0])
        return np.array([tr / 2.0, tr / 2.0])
    return None


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A.T @ P + P @ A = -Q`` for symmetric positive definite P.

    A must be Hurwitz; this is verified by solvability of the Kronecker
    system plus positive definiteness of the result (exact for Q > 0),
    with an analytic eigenvalue pre-check for 1x1 and 2x2 inputs.
    """
    A = _as_matrix(A)
    Q = _as_matrix(Q, "Q")
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise LinAlgError("A and Q must be square of equal size")
    cholesky(Q)
    small = _small_eigen_real_parts(A)
    if small is not None and np.any(small >= 0.0):
        raise NotHurwitzError(f"A has eigenvalue real parts {small.tolist()}")
    I = np.eye(n)
    # column-major vec: vec(A^T P) = (I kron A^T) vec P, vec(P A) = (A^T kron I) vec P
    K = np.kron(I, A.T) + np.kron(A.T, I)
    try:
        vecP = solve_linear(K, -Q.reshape(-1, order="F"))
    except SingularMatrixError as exc:
        raise NotHurwitzError("Lyapunov operator is singular; A is not Hurwitz") from exc
    P = vecP.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    if not is_positive_definite(P):
        raise NotHurwitzError("Lyapunov solution is not positive definite; A is not Hurwitz")
    return P


def lyapunov_residual(A, P, Q) -> float:
    A, P, Q = (np.asarray(X, dtype=float) for X in (A, P, Q))
    return inf_norm(A.T @ P + P @ A + Q)
