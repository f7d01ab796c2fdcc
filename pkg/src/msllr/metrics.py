"""Reconstruction quality measures and report rows."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def snr(truth, recon) -> float:
    """``-10 log10(||X - X_hat||^2 / ||X||^2)`` in dB; ``inf`` for a perfect reconstruction."""
    truth = np.asarray(truth)
    recon = np.asarray(recon)
    if truth.shape != recon.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {recon.shape}")
    ref = np.vdot(truth, truth).real
    if ref == 0:
        raise ValueError("ground truth is identically zero")
    err = np.vdot(truth - recon, truth - recon).real
    if err == 0:
        return float("inf")
    return float(-10 * np.log10(err / ref))


def nmse(truth_map, recon_map, mask=None) -> float:
    """``||m_hat - m||^2 / ||m||^2``, over all voxels or over ``mask``."""
    truth_map = np.asarray(truth_map, dtype=float)
    recon_map = np.asarray(recon_map, dtype=float)
    if truth_map.shape != recon_map.shape:
        raise ValueError(f"shape mismatch: {truth_map.shape} vs {recon_map.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        truth_map, recon_map = truth_map[mask], recon_map[mask]
    ref = np.sum(truth_map ** 2)
    if ref == 0:
        raise ValueError("ground-truth map is identically zero")
    return float(np.sum((recon_map - truth_map) ** 2) / ref)


MAP_NAMES = ("t1", "t2", "pd")


@dataclass
class EvalReport:
    snr_db: float
    nmse: dict
    metadata: dict = field(default_factory=dict)
    nmse_foreground: dict | None = None

    def rows(self) -> list[dict]:
        """One row per metric in the layout of the report CSV."""
        base = {k: self.metadata.get(k, "") for k in ("method", "L", "trajectory", "noise_sigma")}
        out = [{**base, "metric": f"nmse_{m}", "value": self.nmse[m]} for m in MAP_NAMES if m in self.nmse]
        if self.nmse_foreground:
            out += [{**base, "metric": f"nmse_fg_{m}", "value": self.nmse_foreground[m]}
                    for m in MAP_NAMES if m in self.nmse_foreground]
        out.append({**base, "metric": "snr_db", "value": self.snr_db})
        return out


def evaluate(truth_x, recon_x, truth_maps, recon_maps, metadata=None, foreground: bool = False) -> EvalReport:
    errs = {m: nmse(getattr(truth_maps, m), getattr(recon_maps, m)) for m in MAP_NAMES}
    fg = None
    if foreground:
        mask = truth_maps.pd > 0
        fg = {m: nmse(getattr(truth_maps, m), getattr(recon_maps, m), mask) for m in MAP_NAMES}
    return EvalReport(snr(truth_x, recon_x), errs, dict(metadata or {}), fg)
