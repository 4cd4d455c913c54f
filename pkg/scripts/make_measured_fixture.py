#!/usr/bin/env python3
"""Regenerate the bundled measured-style fixture r14c5_like.s2p.

The file is forward-generated from an mBVD circuit whose values are
inverted from the target report metrics (fs = 13.3 GHz, Qs = 210,
keff2 = 5.2% with c0 = 200 fF, r0 = 1.5 ohm, rs = 2 ohm), embedded as a
series two-port in a 50-ohm system.  Running this script always produces
byte-identical output.
"""

import math
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from bawkit.mbvd import (MbvdParams, TouchstoneData, emit_touchstone,
                         mbvd_admittance, report)


def target_params() -> MbvdParams:
    fs = 13.3e9
    qs = 210.0
    keff2 = 0.052
    c0 = 200e-15
    cm = c0 * keff2 * 8.0 / math.pi ** 2
    lm = 1.0 / ((2.0 * math.pi * fs) ** 2 * cm)
    rm = 2.0 * math.pi * fs * lm / qs
    return MbvdParams(rm=rm, lm=lm, cm=cm, c0=c0, r0=1.5, rs=2.0)


def main() -> int:
    p = target_params()
    rep = report(p)
    print(f"fixture circuit: fs={rep.fs/1e9:.6f} GHz qs={rep.qs:.4f} "
          f"keff2={100*rep.keff2_mbvd:.4f}% fom={rep.fom:.4f}")

    f = np.linspace(12.5e9, 14.2e9, 341)
    y = mbvd_admittance(p, f)
    z0 = 50.0
    zd = 1.0 / y
    s11 = zd / (zd + 2.0 * z0)
    s21 = 2.0 * z0 / (zd + 2.0 * z0)
    s = np.empty((f.size, 2, 2), dtype=complex)
    s[:, 0, 0] = s11
    s[:, 1, 1] = s11
    s[:, 0, 1] = s21
    s[:, 1, 0] = s21
    data = TouchstoneData(frequencies=f, s=s, z0=z0, unit="GHZ",
                          data_format="RI")
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "bawkit" \
        / "data" / "r14c5_like.s2p"
    out.write_text(emit_touchstone(data), encoding="utf-8", newline="\n")
    print(f"wrote {out} ({f.size} points)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
