"""Fingerprint dictionary, template matching and the fingerprint subspace projector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phantom import ParameterMaps
from .sequence import PulseSequence, simulate_fingerprints

MATCH_CHUNK = 4096


@dataclass(frozen=True)
class ParameterGrid:
    """Discretized (T1, T2) grid in ms; ``pairs()`` drops combinations with T1 < T2."""

    t1_values: np.ndarray
    t2_values: np.ndarray
    exclude_t1_below_t2: bool = True

    def __post_init__(self):
        for name in ("t1_values", "t2_values"):
            v = np.asarray(getattr(self, name), dtype=float).ravel()
            if v.size == 0:
                raise ValueError(f"{name} is empty")
            if np.any(v <= 0):
                raise ValueError(f"{name} must be positive")
            v = np.unique(v)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def pairs(self) -> np.ndarray:
        """(M, 2) array of retained (T1, T2) pairs in lexicographic order."""
        t1, t2 = np.meshgrid(self.t1_values, self.t2_values, indexing="ij")
        pairs = np.column_stack([t1.ravel(), t2.ravel()])
        if self.exclude_t1_below_t2:
            pairs = pairs[pairs[:, 0] >= pairs[:, 1]]
        return pairs


def build_default_grid() -> ParameterGrid:
    t1 = np.concatenate([np.arange(100, 2001, 20), np.arange(2300, 5001, 300)])
    t2 = np.concatenate([np.arange(20, 101, 5), np.arange(110, 201, 10), np.arange(300, 1901, 200)])
    return ParameterGrid(t1, t2)


@dataclass(frozen=True)
class Dictionary:
    """Simulated fingerprints ``atoms`` (M, L) and their (T1, T2) look-up table ``lut`` (M, 2)."""

    atoms: np.ndarray
    lut: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=complex)
        lut = np.asarray(self.lut, dtype=float)
        if atoms.ndim != 2 or lut.shape != (atoms.shape[0], 2):
            raise ValueError(f"atoms {atoms.shape} and lut {lut.shape} are inconsistent")
        norms = np.linalg.norm(atoms, axis=1)
        if np.any(norms == 0):
            raise ValueError("dictionary contains a zero atom")
        for a in (atoms, lut, norms):
            a.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "lut", lut)
        object.__setattr__(self, "_norms", norms)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def length(self) -> int:
        return self.atoms.shape[1]

    @property
    def norms(self) -> np.ndarray:
        return self._norms


def build_dictionary(grid: ParameterGrid, seq: PulseSequence, k_max: int | None = None) -> Dictionary:
    pairs = grid.pairs()
    atoms = simulate_fingerprints(pairs[:, 0], pairs[:, 1], seq, k_max)
    return Dictionary(atoms, pairs)


def match(x, d: Dictionary, score: str = "normalized", return_index: bool = False,
          pd_threshold: float = 0.0):
    """Template matching of every voxel time series against the dictionary.

    Parameters
    ----------
    x : (Nx, Ny, L) complex array
    d : Dictionary
    score : {"normalized", "literal"}
        ``"normalized"`` picks ``argmax |<d_k, x>| / ||d_k||``, the usual
        normalized correlation.  ``"literal"`` divides by ``||d_k||**2``
        instead, which biases the search towards low-energy atoms when the
        dictionary is not normalized.  The two agree for unit-norm atoms.

    The PD estimate is ``max(Re<d_k, x> / ||d_k||**2, 0)``; ties go to the
    lowest atom index.  Voxels whose PD estimate is 0 are reported with
    T1 = T2 = 0, the background convention of ``ParameterMaps``; the matched
    atom index is still available through ``return_index=True``.

    ``pd_threshold`` (a fraction of the largest PD estimate in ``x``) marks
    weaker voxels as background too.  Residual aliasing in empty regions
    otherwise matches to arbitrary, often long-T1 atoms.

    Returns
    -------
    ParameterMaps, or ``(ParameterMaps, (Nx, Ny) int array)`` if ``return_index``.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected (Nx, Ny, L) data, got shape {x.shape}")
    if x.shape[-1] != d.length:
        raise ValueError(f"data has {x.shape[-1]} frames, dictionary atoms have {d.length}")
    if score == "normalized":
        denom = d.norms
    elif score == "literal":
        denom = d.norms ** 2
    else:
        raise ValueError(f"unknown score {score!r}")

    nx, ny, L = x.shape
    flat = x.reshape(-1, L)
    idx = np.empty(flat.shape[0], dtype=np.intp)
    pd = np.empty(flat.shape[0])
    conj_atoms = d.atoms.conj()
    for start in range(0, flat.shape[0], MATCH_CHUNK):
        block = flat[start:start + MATCH_CHUNK]
        # <d_k, x> = sum_t conj(d_k[t]) x[t]
        ip = block @ conj_atoms.T
        k = np.argmax(np.abs(ip) / denom, axis=1)
        sel = ip[np.arange(k.size), k]
        idx[start:start + k.size] = k
        pd[start:start + k.size] = np.maximum(sel.real / d.norms[k] ** 2, 0.0)

    if not 0.0 <= pd_threshold < 1.0:
        raise ValueError("pd_threshold must lie in [0, 1)")
    if pd_threshold > 0:
        pd[pd < pd_threshold * pd.max()] = 0.0
    fg = pd > 0
    t1 = np.where(fg, d.lut[idx, 0], 0.0).reshape(nx, ny)
    t2 = np.where(fg, d.lut[idx, 1], 0.0).reshape(nx, ny)
    maps = ParameterMaps(t1, t2, pd.reshape(nx, ny))
    if return_index:
        return maps, idx.reshape(nx, ny)
    return maps


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal rows spanning (approximately) the dictionary's temporal subspace."""

    basis: np.ndarray

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def length(self) -> int:
        return self.basis.shape[1]


def compute_subspace_basis(d: Dictionary, energy_fraction: float = 0.9999,
                           rank: int | None = None) -> SubspaceBasis:
    """Truncated SVD basis of the dictionary.

    The rank is the smallest one whose squared singular values reach
    ``energy_fraction`` of the total, unless ``rank`` forces it.
    """
    if not 0 < energy_fraction <= 1:
        raise ValueError("energy_fraction must lie in (0, 1]")
    _, s, vh = np.linalg.svd(d.atoms, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ValueError("dictionary is degenerate (all zero)")
    if rank is None:
        energy = s ** 2
        numerical = int(np.sum(s > s[0] * max(d.atoms.shape) * np.finfo(float).eps))
        if energy_fraction >= 1.0:
            rank = numerical
        else:
            cum = np.cumsum(energy) / energy.sum()
            rank = min(int(np.searchsorted(cum, energy_fraction) + 1), numerical)
    if not 1 <= rank <= vh.shape[0]:
        raise ValueError(f"rank must lie in [1, {vh.shape[0]}], got {rank}")
    return SubspaceBasis(np.ascontiguousarray(vh[:rank]))


def project_fingerprints(x, basis: SubspaceBasis) -> np.ndarray:
    """Replace every voxel series by its orthogonal projection onto the basis row span."""
    x = np.asarray(x)
    if x.shape[-1] != basis.length:
        raise ValueError(f"data has {x.shape[-1]} frames, basis has {basis.length}")
    v = basis.basis
    return (x @ v.conj().T) @ v
