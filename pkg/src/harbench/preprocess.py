"""Z-score scaling and PCA, fitted on training vectors only."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


def fit_scaler(train: np.ndarray) -> Scaler:
    """Per-feature mean and population std; near-zero stds become 1."""
    X = np.asarray(train, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise ValueError("cannot fit scaler on an empty training set")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return Scaler(mean=mean, std=std)


def _check_dim(X: np.ndarray, dim: int) -> None:
    if X.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {X.shape[-1]}")


def apply_scaler(s: Scaler, v: np.ndarray) -> np.ndarray:
    """``(v - mean) / std``; works on one vector or an N x D matrix."""
    X = np.asarray(v, dtype=np.float64)
    _check_dim(X, s.dim)
    return (X - s.mean) / s.std


def invert_scaler(s: Scaler, z: np.ndarray) -> np.ndarray:
    Z = np.asarray(z, dtype=np.float64)
    _check_dim(Z, s.dim)
    return Z * s.std + s.mean


def _round_robin_pairs(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """n-1 (or n) rounds of disjoint index pairs covering every pair once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def jacobi_eigh(
    a: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, in round-robin rounds of
    disjoint pairs that are rotated simultaneously.  Iteration stops when the
    off-diagonal Frobenius norm drops below ``tol`` times the matrix norm.
    Returns ``(eigenvalues, eigenvectors)`` unsorted; column j of the vectors
    belongs to eigenvalue j.
    """
    A = np.array(a, dtype=np.float64, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n < 2:
        return np.diag(A).copy(), V
    norm = np.linalg.norm(A)
    if norm == 0.0:
        return np.zeros(n), V
    rounds = _round_robin_pairs(n)

    off_mask = ~np.eye(n, dtype=bool)

    def off_norm(M: np.ndarray) -> float:
        return float(np.linalg.norm(M[off_mask]))

    for _ in range(max_sweeps):
        if off_norm(A) <= tol * norm:
            break
        for p, q in rounds:
            apq = A[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            with np.errstate(over="ignore"):
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # rows
            Ap, Aq = A[p, :], A[q, :]
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            # columns
            Ap, Aq = A[:, p], A[:, q]
            A[:, p] = Ap * c - Aq * s
            A[:, q] = Ap * s + Aq * c
            Vp, Vq = V[:, p], V[:, q]
            V[:, p] = Vp * c - Vq * s
            V[:, q] = Vp * s + Vq * c
    else:
        if off_norm(A) > tol * norm:
            raise np.linalg.LinAlgError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    return np.diag(A).copy(), V


@dataclass(frozen=True)
class PcaModel:
    basis: np.ndarray  # D x d, orthonormal columns
    eigenvalues: np.ndarray  # d, nonincreasing
    retained_variance: float
    total_variance: float

    @property
    def n_components(self) -> int:
        return int(self.basis.shape[1])

    @property
    def explained_variance_ratio(self) -> float:
        if self.total_variance <= 0.0:
            return 1.0
        return float(self.eigenvalues.sum() / self.total_variance)


def fit_pca(train_scaled: np.ndarray, retained_variance: float = 0.95) -> PcaModel:
    """Principal directions of the training covariance.

    Keeps the fewest leading components whose eigenvalues reach
    ``retained_variance`` of the total.  Each direction is signed so that its
    largest-magnitude entry is positive.
    """
    X = np.asarray(train_scaled, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("PCA needs at least 2 training vectors")
    if not 0.0 < retained_variance <= 1.0:
        raise ValueError(f"retained_variance must be in (0, 1], got {retained_variance}")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (X.shape[0] - 1)
    values, vectors = jacobi_eigh(cov)
    values = np.clip(values, 0.0, None)
    order = np.argsort(-values, kind="stable")
    values, vectors = values[order], vectors[:, order]

    total = float(values.sum())
    if total <= 0.0:
        d = 1
    else:
        cumulative = np.cumsum(values) / total
        d = int(np.searchsorted(cumulative, retained_variance - 1e-12) + 1)
        d = min(d, len(values))
    basis = vectors[:, :d].copy()
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(d)])
    basis *= np.where(signs == 0, 1.0, signs)
    return PcaModel(
        basis=basis,
        eigenvalues=values[:d].copy(),
        retained_variance=float(retained_variance),
        total_variance=total,
    )


def apply_pca(m: PcaModel, v: np.ndarray) -> np.ndarray:
    X = np.asarray(v, dtype=np.float64)
    _check_dim(X, m.basis.shape[0])
    return X @ m.basis
