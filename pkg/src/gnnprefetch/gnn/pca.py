"""Two-component PCA by power iteration with deflation."""

from __future__ import annotations

import numpy as np


def _power_iteration(C: np.ndarray, v0: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    v = v0 / np.linalg.norm(v0)
    for _ in range(max_iters):
        w = C @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return v
        w /= norm
        if w @ v < 0:  # keep orientation fixed while comparing iterates
            w = -w
        if np.linalg.norm(w - v) < tol:
            return w
        v = w
    return v


def pca_2d(Z: np.ndarray, tol: float = 1e-10, max_iters: int = 1000
           ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project rows of ``Z`` onto their top two principal components.

    Returns ``(coords n x 2, explained variance (2,), components 2 x d)``.
    Each component's largest-magnitude loading is positive. Zero-variance
    input yields zero components and zero coordinates.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n, d = Z.shape
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    X = Z - Z.mean(axis=0)
    C = X.T @ X / (n - 1)
    start = np.random.default_rng(0).standard_normal(d)

    comps = np.zeros((2, d))
    variances = np.zeros(2)
    if np.allclose(C, 0.0, atol=0.0):
        return np.zeros((n, 2)), variances, comps
    for i in range(min(2, d)):
        v = _power_iteration(C, start, tol, max_iters)
        lam = float(v @ C @ v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        comps[i] = v
        variances[i] = max(lam, 0.0)
        C = C - lam * np.outer(v, v)
    return X @ comps.T, variances, comps


def pca_csv(coords: np.ndarray, kinds: list[str] | None = None) -> str:
    lines = ["node_id,pc1,pc2,kind"]
    for i, (a, b) in enumerate(coords):
        kind = kinds[i] if kinds else ""
        lines.append(f"{i},{float(a)!r},{float(b)!r},{kind}")
    return "\n".join(lines) + "\n"
