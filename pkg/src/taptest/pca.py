"""PCA on tap waveforms via a one-sided Jacobi SVD."""

import json
from dataclasses import dataclass

import numpy as np

RETENTION_TOL = 1e-12


class DegeneratePcaError(ValueError):
    pass


def _round_robin(q: int):
    """Rounds of disjoint column pairs covering every pair once (circle method)."""
    idx = list(range(q)) + ([-1] if q % 2 else [])
    n = len(idx)
    rounds = []
    for _ in range(n - 1):
        pairs = [(idx[i], idx[n - 1 - i]) for i in range(n // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        if pairs:
            rounds.append((np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def _jacobi_columns(W, tol=1e-15, max_sweeps=100):
    """Rotate the columns of W (in place) until mutually orthogonal; returns the rotation."""
    q = W.shape[1]
    V = np.eye(q)
    rounds = _round_robin(q)
    for _ in range(max_sweeps):
        rotated = False
        for I, J in rounds:
            wi, wj = W[:, I], W[:, J]
            alpha = np.einsum("ij,ij->j", wi, wi)
            beta = np.einsum("ij,ij->j", wj, wj)
            gamma = np.einsum("ij,ij->j", wi, wj)
            act = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not act.any():
                continue
            rotated = True
            I, J, alpha, beta, gamma = I[act], J[act], alpha[act], beta[act], gamma[act]
            with np.errstate(over="ignore"):  # huge zeta just means t -> 0
                zeta = (beta - alpha) / (2 * gamma)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1 + zeta * zeta))
            c = 1 / np.sqrt(1 + t * t)
            s = c * t
            for M in (W, V):
                mi, mj = M[:, I].copy(), M[:, J]
                M[:, I] = c * mi - s * mj
                M[:, J] = s * mi + c * mj
        if not rotated:
            break
    return V


def _orthonormal_fill(Q, dim, total):
    """Extend the orthonormal columns of Q (dim x g) to `total` columns."""
    g = Q.shape[1]
    if g == total:
        return Q
    if g == 0:
        full = np.eye(dim)
    else:
        full, _ = np.linalg.qr(Q, mode="complete")
    return np.hstack([Q, full[:, g:total]])


def thin_svd(A):
    """A = U @ diag(s) @ Vt with s non-increasing, r = min(m, n) modes.

    Householder QR shrinks A to a square triangle first; the SVD itself is
    the Jacobi iteration above.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    flip = m < n
    M = A.T if flip else A
    Q, R = np.linalg.qr(M)
    W = R.copy()
    J = _jacobi_columns(W)
    s = np.linalg.norm(W, axis=0)
    order = np.argsort(-s, kind="stable")
    s, W, J = s[order], W[:, order], J[:, order]
    # modes this small carry no direction information; rebuild them orthogonally
    good = s > s[0] * 1e-13 * max(m, n) if s[0] > 0 else np.zeros(len(s), bool)
    P = Q @ (W[:, good] / s[good])
    P = _orthonormal_fill(P, M.shape[0], len(s))
    s = np.where(good, s, 0.0)
    if flip:
        return J, s, P.T
    return P, s, J.T


def _sign_fix(U, Vt):
    """Make the largest-magnitude entry of each right singular vector positive."""
    pivots = np.argmax(np.abs(Vt), axis=1)
    sg = np.sign(Vt[np.arange(len(Vt)), pivots])
    sg[sg == 0] = 1.0
    return U * sg, Vt * sg[:, None]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    loadings: np.ndarray  # n x k
    singular_values: np.ndarray  # all modes, not only the k kept
    explained_ratio: np.ndarray
    k: int
    variance_target: float = 0.9

    @property
    def r_full(self):
        return len(self.explained_ratio)

    def to_json(self) -> str:
        return json.dumps({
            "mean": self.mean.tolist(),
            "loadings": self.loadings.tolist(),
            "singular_values": self.singular_values.tolist(),
            "explained_ratio": self.explained_ratio.tolist(),
            "k": self.k,
            "variance_target": self.variance_target,
        })

    @classmethod
    def from_dict(cls, d) -> "PcaModel":
        n = len(d["mean"])
        return cls(np.array(d["mean"], float), np.array(d["loadings"], float).reshape(n, d["k"]),
                   np.array(d["singular_values"], float), np.array(d["explained_ratio"], float),
                   int(d["k"]), float(d["variance_target"]))

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        return cls.from_dict(json.loads(text))


def retained_dim(explained_ratio, variance_target: float) -> int:
    cum = np.cumsum(explained_ratio)
    return int(np.searchsorted(cum, variance_target - RETENTION_TOL) + 1)


def pca_fit(data, variance_target: float = 0.9) -> PcaModel:
    X = np.asarray(getattr(data, "data", data), dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    if not 0 < variance_target <= 1:
        raise ValueError("variance_target must lie in (0, 1]")
    mean = X.mean(axis=0)
    B = X - mean
    U, s, Vt = thin_svd(B)
    total = np.sum(s * s)
    if total == 0 or s[0] <= 1e-12 * max(1.0, np.abs(X).max()):
        raise DegeneratePcaError("all rows identical; nothing to decompose")
    U, Vt = _sign_fix(U, Vt)
    ratio = s * s / total
    k = min(retained_dim(ratio, variance_target), len(s))
    return PcaModel(mean, Vt[:k].T.copy(), s, ratio, k, variance_target)


def pca_transform(data, model: PcaModel) -> np.ndarray:
    X = np.atleast_2d(np.asarray(getattr(data, "data", data), dtype=float))
    if X.shape[1] != len(model.mean):
        raise ValueError(f"expected {len(model.mean)} columns, got {X.shape[1]}")
    return (X - model.mean) @ model.loadings


def cumulative_energy(model: PcaModel, j: int) -> float:
    if not 1 <= j <= model.r_full:
        raise ValueError(f"j must lie in [1, {model.r_full}]")
    return float(np.sum(model.explained_ratio[:j]))


def pca_reconstruct(scores, model: PcaModel) -> np.ndarray:
    T = np.atleast_2d(np.asarray(scores, dtype=float))
    if T.shape[1] != model.k:
        raise ValueError(f"expected {model.k} score columns, got {T.shape[1]}")
    return T @ model.loadings.T + model.mean
