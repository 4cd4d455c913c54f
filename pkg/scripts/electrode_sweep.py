#!/usr/bin/env python3
"""Electrode-thickness design-space maps for the calibrated nominal stack.

Sweeps both electrode thicknesses over 0.2x..2x the piezo thickness,
then writes the sweep CSV and the nine metric/mode heatmaps.  The band
reaches 34 GHz so even the thinnest-electrode corner keeps three modes.
"""

import argparse
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from bawkit import FrequencyGrid, calibrate_piezo_stiffness, nominal_stack
from bawkit.sweep import (SweepConfig, export_sweep_csv, render_heatmap,
                          run_sweep)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=int, default=25)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="out/sweep")
    args = ap.parse_args()

    cal_band = FrequencyGrid(3e9, 15e9, 1201)
    stack, scale = calibrate_piezo_stiffness(nominal_stack(),
                                             target_fs=4.9e9, band=cal_band)
    print(f"calibration scale on piezo c33E: {scale:.6f}")

    ip = stack.piezo_index
    cfg = SweepConfig(base=stack, top_layer_index=ip + 1,
                      bottom_layer_index=ip - 1,
                      band=FrequencyGrid(1.5e9, 34e9, 2201),
                      grid_n=args.grid, n_modes=3)
    t0 = time.perf_counter()
    result = run_sweep(cfg, jobs=args.jobs)
    print(f"{args.grid}x{args.grid}x3 sweep in "
          f"{time.perf_counter() - t0:.1f} s, "
          f"{int(result.mask.sum())} masked cells")

    for mode in range(3):
        plane = np.where(result.mask, -np.inf, result.fom[:, :, mode])
        j, i = np.unravel_index(int(np.argmax(plane)), plane.shape)
        print(f"mode {mode}: best FOM {result.fom[j, i, mode]:.2f} at "
              f"t_bot = {result.bottom_thicknesses[j] * 1e9:.0f} nm, "
              f"t_top = {result.top_thicknesses[i] * 1e9:.0f} nm")

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_sweep_csv(result, out / "sweep.csv")
    for metric in ("fs_norm", "keff2_norm", "fom_norm"):
        for mode in range(3):
            render_heatmap(result, metric, mode,
                           out / f"heatmap_{metric}_mode{mode}.svg")
    print(f"wrote CSV and heatmaps to {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
