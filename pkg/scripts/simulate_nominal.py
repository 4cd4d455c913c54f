#!/usr/bin/env python3
"""Calibrate the bundled nominal stack and tabulate its modes.

Anchors the fundamental at 4.9 GHz with the one-scalar stiffness
calibration, prints the mode table, and writes both backend spectra plus
the mode CSV under --out.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from bawkit import (FrequencyGrid, calibrate_piezo_stiffness,
                    export_modes_csv, export_spectrum_csv, find_modes,
                    nominal_stack, spectrum)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--target-ghz", type=float, default=4.9,
                    help="fundamental to calibrate to (default 4.9)")
    ap.add_argument("--points", type=int, default=4001)
    ap.add_argument("--out", default="out/nominal")
    args = ap.parse_args()

    band = FrequencyGrid(3e9, 15e9, args.points)
    stack, scale = calibrate_piezo_stiffness(
        nominal_stack(), target_fs=args.target_ghz * 1e9, band=band)
    print(f"calibration scale on piezo c33E: {scale:.6f}")

    modes = find_modes(stack, band, max_modes=3)
    print(f"{'mode':>4} {'fs [GHz]':>10} {'fp [GHz]':>10} {'keff2 [%]':>10} "
          f"{'eta':>7} {'qm':>8} {'fom':>8}")
    for m in modes:
        print(f"{m.mode_index:>4} {m.fs / 1e9:>10.4f} {m.fp / 1e9:>10.4f} "
              f"{100 * m.keff2:>10.3f} {m.eta:>7.4f} {m.qm:>8.1f} "
              f"{m.fom:>8.2f}")

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for backend in ("bvp", "mason"):
        curve = spectrum(stack, band, backend=backend)
        export_spectrum_csv(curve, out / f"spectrum_{backend}.csv")
    export_modes_csv(modes, out / "modes.csv")
    print(f"wrote spectra and mode table to {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
