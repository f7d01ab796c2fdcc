"""Compare zero-filled matching, LLR and MS-LLR on undersampled data.

A 64x64 phantom is sampled with 7 pseudo-radial spokes per frame (about 10%
of k-space).  LLR is the same solver with the graph weight set to zero.

    python3 demos/ablation.py [L]
"""

import sys
import time

from msllr import (AcquisitionOperator, build_default_grid, build_dictionary, generate_fisp_schedule,
                   generate_phantom, make_pseudo_radial_masks, nmse, reconstruct, reconstruct_llr, snr,
                   synthesize_mrf_data, zero_filled)

L = int(sys.argv[1]) if len(sys.argv) > 1 else 100
seq = generate_fisp_schedule(L, seed=0)
d = build_dictionary(build_default_grid(), seq)
maps = generate_phantom(64, 64, seed=0)
x = synthesize_mrf_data(maps, seq)
op = AcquisitionOperator(make_pseudo_radial_masks(64, 64, L, 7, seed=0))
b = op.forward(x)
print(f"L={L} sampled fraction {op.traj.undersampling_ratio:.3f}")

runs = {"zero-filled": lambda: zero_filled(b, op, d)}
runs["llr"] = lambda: (lambda r: (r.x, r.maps))(reconstruct_llr(b, op, d))
runs["ms-llr"] = lambda: (lambda r: (r.x, r.maps))(reconstruct(b, op, d))
for name, fn in runs.items():
    t0 = time.perf_counter()
    xr, est = fn()
    print(f"{name:>12}: SNR {snr(x, xr):6.2f} dB  NMSE T1 {nmse(maps.t1, est.t1):.4f}  "
          f"T2 {nmse(maps.t2, est.t2):.4f}  PD {nmse(maps.pd, est.pd):.4f}  ({time.perf_counter() - t0:.0f} s)")
