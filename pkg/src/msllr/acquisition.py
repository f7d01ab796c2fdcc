"""Acquisition model ``b = F_u C x + n`` for Cartesian masks and non-Cartesian trajectories.

Measurement layout is ``(Nc, Ns, L)``.  For Cartesian masks ``Ns = Nx * Ny``:
the whole centered k-space grid is stored row-major and unsampled positions
are zero.  For non-Cartesian trajectories ``Ns`` is the number of samples per
frame.  Both directions use the unitary Fourier convention, so a fully
sampled single uniform coil is an isometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nufft import KERNEL_WIDTH, OVERSAMPLING, NufftPlan, check_coords

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))  # 137.5 deg, for spiral interleaves
GOLDEN_RADIAL = np.pi * (np.sqrt(5.0) - 1.0) / 2.0  # 111.25 deg, for diametric spokes


@dataclass(frozen=True)
class Trajectory:
    """Sampling pattern of every frame.

    Exactly one of ``masks`` ((Nx, Ny, L) bool, DC at ``(Nx // 2, Ny // 2)``)
    and ``coords`` ((L, Ns, 2) radians per pixel in ``[-pi, pi)``) is set.
    ``density_weights`` ((L, Ns)) only applies to non-Cartesian sampling.
    """

    shape: tuple[int, int]
    masks: np.ndarray | None = None
    coords: np.ndarray | None = None
    density_weights: np.ndarray | None = None

    def __post_init__(self):
        if (self.masks is None) == (self.coords is None):
            raise ValueError("exactly one of masks and coords must be given")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.masks is not None:
            masks = np.asarray(self.masks, dtype=bool)
            if masks.ndim != 3 or masks.shape[:2] != self.shape:
                raise ValueError(f"masks must have shape (Nx, Ny, L) with (Nx, Ny) = {self.shape}")
            object.__setattr__(self, "masks", masks)
            if self.density_weights is not None:
                raise ValueError("density weights are only defined for non-Cartesian trajectories")
        else:
            coords = np.asarray(self.coords, dtype=float)
            if coords.ndim != 3 or coords.shape[-1] != 2:
                raise ValueError("coords must have shape (L, Ns, 2)")
            for f in coords:
                check_coords(f)
            object.__setattr__(self, "coords", coords)
            if self.density_weights is not None:
                w = np.asarray(self.density_weights, dtype=float)
                if w.shape != coords.shape[:2]:
                    raise ValueError("density weights must have shape (L, Ns)")
                object.__setattr__(self, "density_weights", w)

    @property
    def kind(self) -> str:
        return "cartesian" if self.masks is not None else "noncartesian"

    @property
    def frames(self) -> int:
        return self.masks.shape[2] if self.masks is not None else self.coords.shape[0]

    @property
    def samples_per_frame(self) -> int:
        if self.masks is not None:
            return self.shape[0] * self.shape[1]
        return self.coords.shape[1]

    @property
    def undersampling_ratio(self) -> float:
        """Acquired samples per frame divided by the number of image pixels."""
        n = self.shape[0] * self.shape[1]
        if self.masks is not None:
            return float(self.masks.sum()) / (n * self.frames)
        return self.coords.shape[1] / n

    def support(self) -> np.ndarray:
        """(Ns, L) bool array of measurement positions that carry data."""
        if self.masks is not None:
            return self.masks.reshape(-1, self.frames)
        return np.ones((self.coords.shape[1], self.frames), dtype=bool)

    def with_density_weights(self, weights) -> "Trajectory":
        return Trajectory(self.shape, coords=self.coords, density_weights=weights)


def _bresenham(r0, c0, r1, c1):
    pts = []
    dr, dc = abs(r1 - r0), -abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dr + dc
    r, c = r0, c0
    while True:
        pts.append((r, c))
        if r == r1 and c == c1:
            return pts
        e2 = 2 * err
        if e2 >= dc:
            err += dc
            r += sr
        if e2 <= dr:
            err += dr
            c += sc


def _spoke_end(cr, cc, angle, nx, ny):
    dr, dc = np.cos(angle), np.sin(angle)
    t = np.inf
    for d, c, n in ((dr, cr, nx), (dc, cc, ny)):
        if d > 1e-12:
            t = min(t, (n - 1 - c) / d)
        elif d < -1e-12:
            t = min(t, -c / d)
    return int(round(cr + t * dr)), int(round(cc + t * dc))


def make_pseudo_radial_masks(nx: int, ny: int, L: int, spokes_per_frame: int, seed: int = 0) -> Trajectory:
    """Cartesian masks of Bresenham-rasterized diametric spokes through the k-space center.

    Spoke ``j`` over the whole acquisition (``j = frame * spokes + s``) sits at
    angle ``offset + j * 111.25 deg``; ``offset`` is drawn from ``seed``.
    """
    if spokes_per_frame < 1:
        raise ValueError("spokes_per_frame must be >= 1")
    if L < 1:
        raise ValueError("frame count must be >= 1")
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0, np.pi)
    cr, cc = nx // 2, ny // 2
    masks = np.zeros((nx, ny, L), dtype=bool)
    for f in range(L):
        m = masks[:, :, f]
        m[cr, cc] = True
        for s in range(spokes_per_frame):
            a = offset + (f * spokes_per_frame + s) * GOLDEN_RADIAL
            for ang in (a, a + np.pi):
                er, ec = _spoke_end(cr, cc, ang, nx, ny)
                for r, c in _bresenham(cr, cc, er, ec):
                    m[r, c] = True
    return Trajectory((nx, ny), masks=masks)


def _vds_curve(n_pix: int, inner_region: float, fov_param: float, n_fine: int = 200_000):
    """Fine sampling of a variable-density Archimedean spiral, radius in k-grid units.

    Turn spacing is 1 (Nyquist) inside radius ``inner_region / 2`` and grows
    linearly to ``n_pix / fov_param`` at the edge ``n_pix / 2``.  Returns the
    radius, angle and a cumulative sample-budget coordinate along the curve
    whose density follows ``1 / turn spacing``.
    """
    r_max = n_pix / 2.0
    r_in = min(inner_region / 2.0, r_max)
    outer = max(n_pix / fov_param, 1.0)

    def spacing(r):
        frac = np.clip((r - r_in) / max(r_max - r_in, 1e-12), 0.0, 1.0)
        return 1.0 + (outer - 1.0) * frac

    # integrate dr/dtheta = spacing(r) / 2pi on a radius grid
    r = np.linspace(0.0, r_max, n_fine)
    mid = 0.5 * (r[1:] + r[:-1])
    dtheta = 2 * np.pi / spacing(mid) * np.diff(r)
    theta = np.concatenate([[0.0], np.cumsum(dtheta)])
    ds = np.abs(np.diff(r * np.exp(1j * theta)))
    budget = np.concatenate([[0.0], np.cumsum(ds / spacing(mid))])
    return r, theta, budget


def make_vds_spiral(nx: int, ny: int, L: int, samples_per_frame: int = 876,
                    inner_region: float = 20, fov_param: float = 24) -> Trajectory:
    """Variable-density spiral, one interleaf per frame rotated by the golden angle.

    Turns are one k-grid unit apart inside the central ``inner_region``
    pixels and widen linearly to ``N / fov_param`` at the edge.  Along the
    curve the sample spacing is proportional to the local turn spacing, so
    the inner region is sampled isotropically dense and the periphery
    sparsely.  Every frame has exactly ``samples_per_frame`` samples.
    """
    if samples_per_frame < 1:
        raise ValueError("samples_per_frame must be >= 1")
    if L < 1:
        raise ValueError("frame count must be >= 1")
    if inner_region <= 0 or fov_param <= 0:
        raise ValueError("inner_region and fov_param must be positive")
    n = min(nx, ny)
    r, theta, budget = _vds_curve(n, inner_region, fov_param)
    u = np.linspace(0.0, budget[-1], samples_per_frame, endpoint=False)
    rs = np.interp(u, budget, r)
    ts = np.interp(u, budget, theta)
    # k-grid radius n/2 maps to pi; keep strictly inside the open edge
    kr = np.minimum(rs * 2 * np.pi / n, np.pi * (1 - 1e-9))
    coords = np.empty((L, samples_per_frame, 2))
    for f in range(L):
        ang = ts + f * GOLDEN_ANGLE
        coords[f, :, 0] = kr * np.cos(ang)
        coords[f, :, 1] = kr * np.sin(ang)
    return Trajectory((nx, ny), coords=coords)


def uniform_coils(nx: int, ny: int) -> np.ndarray:
    return np.ones((1, nx, ny), complex)


def make_coil_maps(nc: int, nx: int, ny: int) -> np.ndarray:
    """Smooth synthetic sensitivities of ``nc`` coils placed around the field of view."""
    if nc < 1:
        raise ValueError("need at least one coil")
    xx, yy = np.meshgrid(np.linspace(-1, 1, nx), np.linspace(-1, 1, ny), indexing="ij")
    maps = np.empty((nc, nx, ny), complex)
    for c in range(nc):
        a = 2 * np.pi * c / nc
        px, py = 1.5 * np.cos(a), 1.5 * np.sin(a)
        dist2 = (xx - px) ** 2 + (yy - py) ** 2
        maps[c] = np.exp(-dist2 / 4.0) * np.exp(1j * (a + 0.5 * (xx * np.cos(a) + yy * np.sin(a))))
    return maps


def check_coils(coils, shape) -> np.ndarray:
    coils = np.asarray(coils, dtype=complex)
    if coils.ndim != 3 or coils.shape[1:] != tuple(shape):
        raise ValueError(f"coil maps must have shape (Nc, {shape[0]}, {shape[1]}), got {coils.shape}")
    if np.any(np.all(coils.reshape(coils.shape[0], -1) == 0, axis=1)):
        raise ValueError("a coil map is identically zero")
    return coils


class AcquisitionOperator:
    """Forward/adjoint pair for one trajectory and coil set.

    Non-Cartesian frames each get a precomputed ``NufftPlan``; the adjoint
    never includes density weights (see ``adjoint_density_compensated``).
    """

    def __init__(self, traj: Trajectory, coils=None, width: int = KERNEL_WIDTH,
                 oversampling: float = OVERSAMPLING):
        self.traj = traj
        self.shape = traj.shape
        self.coils = check_coils(uniform_coils(*traj.shape) if coils is None else coils, traj.shape)
        self._plans = None
        if traj.kind == "noncartesian":
            self._plans = [NufftPlan(traj.shape, c, width, oversampling) for c in traj.coords]

    @property
    def frames(self) -> int:
        return self.traj.frames

    @property
    def measurement_shape(self) -> tuple[int, int, int]:
        return (self.coils.shape[0], self.traj.samples_per_frame, self.traj.frames)

    def _check_image(self, x):
        x = np.asarray(x)
        if x.shape != self.shape + (self.frames,):
            raise ValueError(f"expected data of shape {self.shape + (self.frames,)}, got {x.shape}")
        return x

    def _check_meas(self, b):
        b = np.asarray(b)
        if b.shape != self.measurement_shape:
            raise ValueError(f"expected measurements of shape {self.measurement_shape}, got {b.shape}")
        return b

    def forward(self, x) -> np.ndarray:
        x = self._check_image(x)
        nc = self.coils.shape[0]
        out = np.empty(self.measurement_shape, complex)
        if self._plans is None:
            coil_imgs = self.coils[:, :, :, None] * x[None]
            k = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(coil_imgs, axes=(1, 2)), axes=(1, 2), norm="ortho"),
                                axes=(1, 2))
            k *= self.traj.masks[None]
            out[:] = k.reshape(nc, -1, self.frames)
        else:
            for f, plan in enumerate(self._plans):
                out[:, :, f] = plan.forward(self.coils * x[None, :, :, f])
        return out

    def adjoint(self, b) -> np.ndarray:
        b = self._check_meas(b)
        nc = self.coils.shape[0]
        if self._plans is None:
            k = b.reshape(nc, *self.shape, self.frames) * self.traj.masks[None]
            imgs = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=(1, 2)), axes=(1, 2), norm="ortho"),
                                   axes=(1, 2))
            return np.einsum("cxy,cxyt->xyt", self.coils.conj(), imgs)
        out = np.empty(self.shape + (self.frames,), complex)
        for f, plan in enumerate(self._plans):
            out[:, :, f] = np.einsum("cxy,cxy->xy", self.coils.conj(), plan.adjoint(b[:, :, f]))
        return out

    def normal(self, x) -> np.ndarray:
        return self.adjoint(self.forward(x))

    def adjoint_density_compensated(self, b) -> np.ndarray:
        """Adjoint of density-weighted data; identical to ``adjoint`` without weights."""
        w = self.traj.density_weights
        if w is None:
            return self.adjoint(b)
        return self.adjoint(np.asarray(b) * w.T[None])


def voronoi_density_weights(traj: Trajectory) -> np.ndarray:
    """Density compensation from Voronoi cell areas, shape (L, Ns).

    Areas are in k-grid cells (``(2 pi / N)**2`` rad^2), so a fully sampled
    Cartesian grid would get unit weights.  A ring of guard points just
    outside the sampled disk bounds the outermost cells.
    """
    from scipy.spatial import ConvexHull, Voronoi

    if traj.kind != "noncartesian":
        raise ValueError("density weights only apply to non-Cartesian trajectories")
    nx, ny = traj.shape
    scale = np.array([nx, ny]) / (2 * np.pi)
    weights = np.empty(traj.coords.shape[:2])
    for f, c in enumerate(traj.coords):
        pts = c * scale
        r_out = np.hypot(pts[:, 0], pts[:, 1]).max() + 1.0
        n_guard = max(64, int(2 * np.pi * r_out))
        ang = 2 * np.pi * np.arange(n_guard) / n_guard
        guard = r_out * np.column_stack([np.cos(ang), np.sin(ang)])
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        vor = Voronoi(np.vstack([uniq, guard]))
        area = np.empty(len(uniq))
        for i in range(len(uniq)):
            region = vor.regions[vor.point_region[i]]
            area[i] = ConvexHull(vor.vertices[region]).volume
        # coincident samples share their cell
        counts = np.bincount(inv.ravel(), minlength=len(uniq))
        weights[f] = (area / counts)[inv.ravel()]
    return weights


def forward(x, traj: Trajectory, coils=None) -> np.ndarray:
    return AcquisitionOperator(traj, coils).forward(x)


def adjoint(b, traj: Trajectory, coils=None) -> np.ndarray:
    return AcquisitionOperator(traj, coils).adjoint(b)


def add_noise(b, sigma: float, seed: int = 0, support=None) -> np.ndarray:
    """Add circular complex Gaussian noise of total variance ``sigma**2`` per sample.

    ``support`` ((Ns, L) bool, broadcast over coils) restricts the noise to
    acquired positions, as needed for the zero-filled Cartesian layout.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    b = np.asarray(b, dtype=complex)
    if sigma == 0:
        return b.copy()
    rng = np.random.default_rng(seed)
    noise = (rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape)) * (sigma / np.sqrt(2))
    if support is not None:
        noise = noise * np.broadcast_to(np.asarray(support, bool), b.shape)
    return b + noise


def measurement_snr_db(clean, noisy, support=None) -> float:
    """Measurement-domain SNR ``10 log10(||b||^2 / ||n||^2)`` over acquired samples."""
    clean = np.asarray(clean)
    noise = np.asarray(noisy) - clean
    if support is not None:
        sel = np.broadcast_to(np.asarray(support, bool), clean.shape)
        clean, noise = clean[sel], noise[sel]
    p_noise = np.vdot(noise, noise).real
    if p_noise == 0:
        return float("inf")
    return float(10 * np.log10(np.vdot(clean, clean).real / p_noise))


def sigma_for_snr(b, snr_db: float, support=None) -> float:
    """Noise std giving a target measurement-domain SNR for the acquired samples of ``b``."""
    b = np.asarray(b)
    if support is not None:
        b = b[np.broadcast_to(np.asarray(support, bool), b.shape)]
    power = np.vdot(b, b).real / b.size
    return float(np.sqrt(power / 10 ** (snr_db / 10)))
