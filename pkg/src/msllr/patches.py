"""Overlapping spatial patches, patch-similarity graphs and the manifold penalty.

A Casorati patch matrix has one column per patch.  Each column stacks the
patch channel by channel (frames for space-time data, parameters for maps),
row-major within each ``p x p`` patch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _axis_origins(n: int, p: int, s: int) -> list[int]:
    origins = list(range(0, n - p + 1, s))
    if origins[-1] + p < n:
        origins.append(n - p)
    return origins


@dataclass(frozen=True)
class PatchIndex:
    """Top-left origins of ``p x p`` patches tiling an ``(nx, ny)`` image with stride ``s``."""

    shape: tuple[int, int]
    patch_size: int
    stride: int
    origins: np.ndarray  # (Npatch, 2), row-major order
    coverage: np.ndarray  # (nx, ny) number of patches covering each pixel

    @property
    def n_patches(self) -> int:
        return self.origins.shape[0]

    def _gather_index(self) -> np.ndarray:
        # flat pixel indices of every patch, shape (Npatch, p*p)
        p = self.patch_size
        ny = self.shape[1]
        dr, dc = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
        rows = self.origins[:, 0, None] + dr.ravel()[None, :]
        cols = self.origins[:, 1, None] + dc.ravel()[None, :]
        return rows * ny + cols


def build_patch_index(nx: int, ny: int, p: int = 11, s: int = 5) -> PatchIndex:
    """Regular origins ``0, s, 2s, ...`` per axis, plus a clamped origin ``n - p`` if needed."""
    if not 1 <= p <= min(nx, ny):
        raise ValueError(f"patch size {p} does not fit a {nx}x{ny} image")
    if not 1 <= s <= p:
        raise ValueError(f"stride must lie in [1, {p}], got {s}")
    ox = _axis_origins(nx, p, s)
    oy = _axis_origins(ny, p, s)
    origins = np.array([(r, c) for r in ox for c in oy], dtype=np.intp)
    coverage = np.zeros((nx, ny), dtype=np.int64)
    for r, c in origins:
        coverage[r:r + p, c:c + p] += 1
    origins.setflags(write=False)
    coverage.setflags(write=False)
    return PatchIndex((nx, ny), p, s, origins, coverage)


def _as_channels(x, idx: PatchIndex) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[:2] != idx.shape:
        raise ValueError(f"data of shape {x.shape} does not match patch index for {idx.shape}")
    return x


def extract_patches(x, idx: PatchIndex) -> np.ndarray:
    """Casorati matrix of shape ``(p*p*C, Npatch)`` from ``(nx, ny[, C])`` data."""
    x = _as_channels(x, idx)
    c = x.shape[2]
    flat = x.reshape(-1, c)
    g = idx._gather_index()  # (Npatch, p*p)
    patches = flat[g]  # (Npatch, p*p, C)
    return np.ascontiguousarray(patches.transpose(2, 1, 0).reshape(c * g.shape[1], -1))


def patch_stack(x, idx: PatchIndex) -> np.ndarray:
    """Patches as a ``(Npatch, p*p, C)`` stack, the layout used by per-patch SVT."""
    x = _as_channels(x, idx)
    return x.reshape(-1, x.shape[2])[idx._gather_index()]


def scatter_stack(stack, idx: PatchIndex) -> np.ndarray:
    """Adjoint of ``patch_stack``: sum ``(Npatch, p*p, C)`` patches back into an ``(nx, ny, C)`` image."""
    stack = np.asarray(stack)
    g = idx._gather_index()
    if stack.shape[:2] != g.shape:
        raise ValueError(f"expected a stack of shape {g.shape + ('C',)}, got {stack.shape}")
    c = stack.shape[2]
    out = np.zeros((idx.shape[0] * idx.shape[1], c), dtype=stack.dtype)
    # patches are added one at a time in index order: fixed summation order
    for j in range(g.shape[0]):
        out[g[j]] += stack[j]
    return out.reshape(idx.shape + (c,))


def scatter_adjoint(pmat, idx: PatchIndex) -> np.ndarray:
    """Exact adjoint of ``extract_patches``; overlapping contributions are summed."""
    pmat = np.asarray(pmat)
    pp = idx.patch_size ** 2
    if pmat.ndim != 2 or pmat.shape[1] != idx.n_patches or pmat.shape[0] % pp:
        raise ValueError(f"patch matrix of shape {pmat.shape} does not match the patch index")
    c = pmat.shape[0] // pp
    stack = pmat.reshape(c, pp, -1).transpose(2, 1, 0)
    return scatter_stack(stack, idx)


@dataclass(frozen=True)
class SimilarityWeights:
    w: np.ndarray
    sigma: float


def normalize_maps(maps) -> np.ndarray:
    """Standardize T1, T2 and PD channels with foreground (PD > 0) statistics."""
    stack = maps.stack()
    fg = maps.pd > 0
    if not fg.any():
        fg = np.ones_like(fg)
    vals = stack[fg]
    mean = vals.mean(axis=0)
    std = vals.std(axis=0)
    std[std == 0] = 1.0
    return (stack - mean) / std


def pairwise_sq_distances(pmat) -> np.ndarray:
    """Squared Frobenius distances between the columns of a patch matrix."""
    pmat = np.asarray(pmat)
    gram = (pmat.conj().T @ pmat).real
    sq = np.diag(gram)
    d2 = sq[:, None] + sq[None, :] - 2.0 * gram
    d2 = np.maximum(d2, 0.0)
    np.fill_diagonal(d2, 0.0)
    return 0.5 * (d2 + d2.T)


def compute_weights(maps, idx: PatchIndex, sigma: float | str = "auto", knn: int | None = None,
                    normalize: bool = True) -> SimilarityWeights:
    """Gaussian patch similarity ``w_ij = exp(-||Q_i(M) - Q_j(M)||_F^2 / sigma^2)``.

    ``sigma="auto"`` sets ``sigma**2`` to the median nonzero pairwise squared
    distance.  ``knn`` keeps only the ``knn`` strongest weights of every node
    (symmetrized by taking the union).
    """
    data = normalize_maps(maps) if normalize else maps.stack()
    pmat = extract_patches(data, idx)
    d2 = pairwise_sq_distances(pmat)
    if sigma == "auto":
        off = d2[~np.eye(len(d2), dtype=bool)]
        off = off[off > 0]
        sigma2 = float(np.median(off)) if off.size else 1.0
        sigma = float(np.sqrt(sigma2))
    else:
        sigma = float(sigma)
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        sigma2 = sigma ** 2
    w = np.exp(-d2 / sigma2)
    np.fill_diagonal(w, 0.0)
    if knn is not None and knn < len(w) - 1:
        keep = np.zeros_like(w, dtype=bool)
        top = np.argsort(-w, axis=1, kind="stable")[:, :knn]
        keep[np.arange(len(w))[:, None], top] = True
        keep |= keep.T
        w = np.where(keep, w, 0.0)
    return SimilarityWeights(w, sigma)


def build_laplacian(w) -> np.ndarray:
    """Graph Laplacian ``diag(W 1) - W``."""
    w = w.w if isinstance(w, SimilarityWeights) else np.asarray(w, dtype=float)
    return np.diag(w.sum(axis=1)) - w


def manifold_penalty(x, lap, idx: PatchIndex) -> float:
    """Trace form ``Tr(Q(X) L Q(X)^H)`` of the patch-graph penalty.

    For ``L = D - W`` this equals ``0.5 * sum_{i != j} w_ij ||Q_i - Q_j||_F^2``
    over ordered pairs, i.e. the sum over unordered pairs.
    """
    q = extract_patches(x, idx)
    lap = np.asarray(lap)
    if lap.shape != (idx.n_patches, idx.n_patches):
        raise ValueError("Laplacian size does not match the number of patches")
    return trace_form(q, lap)


def trace_form(q, lap) -> float:
    val = np.vdot(q, q @ lap).real
    return float(max(val, 0.0))


def manifold_gradient(x, lap, idx: PatchIndex) -> np.ndarray:
    """``Q*(Q(X) L)``, the penalty's gradient up to the factor 2 of the symmetric form."""
    q = extract_patches(x, idx)
    out = scatter_adjoint(q @ lap, idx)
    return out.reshape(np.shape(x))
