"""Synthetic parameter-map phantoms and noise-free MRF data synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sequence import PulseSequence, simulate_fingerprints

# label -> (T1 ms, T2 ms, PD); all (T1, T2) pairs are members of the default grid
TISSUES = {
    "fat": (380.0, 100.0, 0.9),
    "white_matter": (780.0, 65.0, 0.65),
    "gray_matter": (1200.0, 110.0, 0.8),
    "muscle": (1420.0, 40.0, 0.7),
    "blood": (1640.0, 180.0, 0.85),
    "lesion": (2000.0, 500.0, 0.75),
    "csf": (4100.0, 1900.0, 1.0),
}


@dataclass(frozen=True)
class ParameterMaps:
    """T1 and T2 maps in ms and a dimensionless PD map, all (Nx, Ny)."""

    t1: np.ndarray
    t2: np.ndarray
    pd: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.t1, self.t2, self.pd)]
        if arrs[0].ndim != 2 or any(a.shape != arrs[0].shape for a in arrs):
            raise ValueError("t1, t2 and pd must be 2-D maps of identical shape")
        for name, a in zip(("t1", "t2", "pd"), arrs):
            object.__setattr__(self, name, a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.t1.shape

    def stack(self) -> np.ndarray:
        """(Nx, Ny, 3) array with channels (T1, T2, PD)."""
        return np.stack([self.t1, self.t2, self.pd], axis=-1)

    def scaled_pd(self, c: float) -> "ParameterMaps":
        return ParameterMaps(self.t1, self.t2, self.pd * c)

    def validate(self) -> None:
        fg = self.pd > 0
        if np.any(self.pd < 0):
            raise ValueError("PD must be nonnegative")
        if np.any(self.t1[fg] < self.t2[fg]):
            raise ValueError("T1 < T2 in a voxel with nonzero PD")
        if np.any(self.t2[fg] <= 0):
            raise ValueError("nonpositive relaxation time in a voxel with nonzero PD")


def _ellipse(xx, yy, cx, cy, ax, ay, angle=0.0):
    c, s = np.cos(angle), np.sin(angle)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0


def generate_phantom(nx: int = 128, ny: int = 128, seed: int = 0) -> ParameterMaps:
    """Head-like ellipse phantom built from the ``TISSUES`` table.

    A fat shell surrounds white matter with gray-matter, CSF, blood, muscle
    and lesion inclusions.  The seed jitters the inclusion placement.
    Background voxels are ``(0, 0, 0)``.
    """
    if nx < 16 or ny < 16:
        raise ValueError(f"phantom needs at least 16x16 pixels, got {nx}x{ny}")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(-1, 1, ny), np.linspace(-1, 1, nx))
    labels = np.full((nx, ny), "", dtype=object)

    def jit(scale=0.04):
        return rng.uniform(-scale, scale)

    labels[_ellipse(xx, yy, 0, 0, 0.92, 0.78)] = "fat"
    labels[_ellipse(xx, yy, 0, 0, 0.82, 0.68)] = "white_matter"
    for sx in (-1, 1):
        labels[_ellipse(xx, yy, 0.3 * sx + jit(), -0.25 + jit(), 0.22, 0.16, 0.4 * sx)] = "gray_matter"
        labels[_ellipse(xx, yy, 0.12 * sx + jit(0.02), 0.08 + jit(0.02), 0.09, 0.28, -0.3 * sx)] = "csf"
    labels[_ellipse(xx, yy, 0.0 + jit(), 0.42 + jit(), 0.35, 0.12)] = "gray_matter"
    labels[_ellipse(xx, yy, -0.45 + jit(), 0.3 + jit(), 0.1, 0.1)] = "blood"
    labels[_ellipse(xx, yy, 0.5 + jit(), 0.25 + jit(), 0.14, 0.08, 0.7)] = "muscle"
    labels[_ellipse(xx, yy, 0.05 + jit(0.1), -0.5 + jit(0.05), 0.09, 0.07)] = "lesion"

    t1 = np.zeros((nx, ny))
    t2 = np.zeros((nx, ny))
    pd = np.zeros((nx, ny))
    for name, (a, b, c) in TISSUES.items():
        m = labels == name
        t1[m], t2[m], pd[m] = a, b, c
    return ParameterMaps(t1, t2, pd)


def synthesize_mrf_data(maps: ParameterMaps, seq: PulseSequence, k_max: int | None = None) -> np.ndarray:
    """Noise-free (Nx, Ny, L) space-time data, voxel = PD * fingerprint(T1, T2).

    Fingerprints are simulated once per distinct (T1, T2) pair.
    """
    maps.validate()
    nx, ny = maps.shape
    fg = maps.pd > 0
    out = np.zeros((nx, ny, seq.length), complex)
    if not fg.any():
        return out
    pairs = np.column_stack([maps.t1[fg], maps.t2[fg]])
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    prints = simulate_fingerprints(uniq[:, 0], uniq[:, 1], seq, k_max)
    out[fg] = maps.pd[fg, None] * prints[inverse.ravel()]
    return out


def casorati(x) -> np.ndarray:
    """(Nx*Ny, L) view of space-time data, voxels in row-major order."""
    x = np.asarray(x)
    return x.reshape(-1, x.shape[-1])
