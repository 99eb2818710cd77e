"""Pairwise distances: plain Euclidean and the IMage Euclidean Distance (IMED)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GRAM_TRUNCATION = 1e-12


def pairwise_euclidean(X: np.ndarray) -> np.ndarray:
    """Condensed Euclidean distances over all unordered row pairs (i<j), row-major."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows")
    ii, jj = np.triu_indices(n, k=1)
    diff = X[ii] - X[jj]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


@dataclass(frozen=True)
class ImedKernel:
    """Gaussian pixel-coupling kernel over a width x height grid (row-major)."""

    width: int
    height: int
    sigma: float
    gram: np.ndarray

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


def imed_kernel(width: int, height: int, sigma: float = 1.0) -> ImedKernel:
    """Build the IMED gram: g_ij = exp(-dist(P_i,P_j)^2 / 2 sigma^2) / (2 pi sigma^2)."""
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    rows, cols = np.divmod(np.arange(width * height), width)
    coords = np.stack([rows, cols], axis=1).astype(np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    sqdist = np.einsum("ijk,ijk->ij", diff, diff)
    gram = np.exp(-sqdist / (2.0 * sigma**2)) / (2.0 * np.pi * sigma**2)
    gram[gram < _GRAM_TRUNCATION] = 0.0
    return ImedKernel(width=width, height=height, sigma=sigma, gram=gram)


def imed_distance(x: np.ndarray, y: np.ndarray, kernel: ImedKernel) -> float:
    """IMED between two vectorised images: sqrt((x-y)^T G (x-y))."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != kernel.n_pixels or y.size != kernel.n_pixels:
        raise ValueError("image size does not match kernel")
    diff = x - y
    val = diff @ kernel.gram @ diff
    # gram is positive definite; tiny negatives are rounding noise
    return float(np.sqrt(max(val, 0.0)))


def pairwise_imed(X: np.ndarray, kernel: ImedKernel) -> np.ndarray:
    """Condensed IMED distances over all unordered row pairs of vectorised images."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows")
    if X.shape[1] != kernel.n_pixels:
        raise ValueError("image size does not match kernel")
    out = np.empty(n * (n - 1) // 2)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            diff = X[i] - X[j]
            val = diff @ kernel.gram @ diff
            out[k] = np.sqrt(max(val, 0.0))
            k += 1
    return out
