"""Mode extraction and figure-of-merit bookkeeping.

fs is a local maximum of Re(Y) (conductance peak), fp the adjacent local
minimum of |Y| above it.  Both are refined by golden-section search on a
bracket taken from the coarse scan, to a relative frequency tolerance.
Modes are indexed by ascending fs within the analyzed band; no attempt is
made to classify which physical overtone each one is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .acoustic1d import EnergyPartition, FrequencyGrid, admittance_bvp, \
    admittance_mason, field_profile, strain_energy
from .materials import ConfigError, Stack

KEFF2_DEFINITIONS = ("separation", "ieee", "approx")

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ModeSearchError(RuntimeError):
    """The requested band does not yield a clean mode list."""


@dataclass(frozen=True)
class ModeSummary:
    """One extracted mode with its coupled-resonator metrics."""

    mode_index: int
    fs: float
    fp: float
    keff2: float
    eta: float
    qm: float
    fom: float
    keff2_definition: str


def keff2(fs: float, fp: float, definition: str = "ieee") -> float:
    """Effective coupling from the fs/fp pair.

    definitions:
        separation: (fp^2 - fs^2) / fp^2
        ieee:       (pi/2) (fs/fp) tan((pi/2) (fp - fs)/fp)
        approx:     (pi^2/8) (fp^2 - fs^2) / fp^2
    """
    if not 0 < fs <= fp:
        raise ConfigError(f"need 0 < fs <= fp, got ({fs!r}, {fp!r})")
    if definition == "separation":
        return (fp * fp - fs * fs) / (fp * fp)
    if definition == "ieee":
        return (math.pi / 2.0) * (fs / fp) * math.tan(
            (math.pi / 2.0) * (fp - fs) / fp)
    if definition == "approx":
        return (math.pi ** 2 / 8.0) * (fp * fp - fs * fs) / (fp * fp)
    raise ConfigError(
        f"keff2 definition must be one of {KEFF2_DEFINITIONS}, got {definition!r}")


def qm_from_partition(partition: EnergyPartition, stack: Stack) -> float:
    """Energy-weighted harmonic mix of the per-layer quality factors.

    Qm = [sum_i (U_i/U_tot) / q_i]^-1.  With two buckets (piezo share eta)
    this reduces to 1 / (eta/q_piezo + (1 - eta)/q_metal).  Layers with the
    lossless flag contribute nothing to the sum.
    """
    if len(partition.per_layer) != len(stack.layers):
        raise ConfigError("partition does not match the stack layer count")
    if partition.total <= 0:
        raise ConfigError("partition total energy must be > 0")
    acc = 0.0
    for u_i, lay in zip(partition.per_layer, stack.layers):
        if lay.material.lossless:
            continue
        acc += (u_i / partition.total) / lay.material.q_mech
    if acc == 0.0:
        return math.inf
    return 1.0 / acc


def estimate_frequency(mode_order: int, velocity: float, thickness: float) -> float:
    """Thickness-overtone estimator f_n = n v / (2 t)."""
    if mode_order < 1:
        raise ConfigError(f"mode_order must be >= 1, got {mode_order}")
    if not velocity > 0 or not thickness > 0:
        raise ConfigError("velocity and thickness must be > 0")
    return mode_order * velocity / (2.0 * thickness)


def estimate_thickness(mode_order: int, velocity: float, frequency: float) -> float:
    """Inverse of estimate_frequency: t = n v / (2 f)."""
    if mode_order < 1:
        raise ConfigError(f"mode_order must be >= 1, got {mode_order}")
    if not velocity > 0 or not frequency > 0:
        raise ConfigError("velocity and frequency must be > 0")
    return mode_order * velocity / (2.0 * frequency)


def _golden_extremum(func, lo: float, hi: float, rel_tol: float,
                     maximize: bool) -> float:
    sign = 1.0 if maximize else -1.0
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = sign * func(c)
    fd = sign * func(d)
    while (b - a) > rel_tol * 0.5 * (a + b):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = sign * func(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = sign * func(d)
    return 0.5 * (a + b)


def _interior_extrema(values: np.ndarray, maxima: bool) -> list[int]:
    v = values
    idx = []
    for i in range(1, len(v) - 1):
        if maxima:
            if v[i] > v[i - 1] and v[i] > v[i + 1]:
                idx.append(i)
        else:
            if v[i] < v[i - 1] and v[i] < v[i + 1]:
                idx.append(i)
    return idx


def find_modes(stack: Stack, band: FrequencyGrid, max_modes: int, *,
               backend: str = "bvp", refine_tol: float = 1e-9,
               keff2_definition: str = "ieee") -> list[ModeSummary]:
    """Locate up to max_modes (fs, fp) pairs in the band and grade them.

    The band grid is the coarse scan; each conductance peak and the
    adjacent |Y| minimum above it are refined by golden-section search.
    eta and Qm are evaluated at fs.  A trailing resonance whose fp lies
    beyond the band is dropped.
    """
    if max_modes < 1:
        raise ConfigError(f"max_modes must be >= 1, got {max_modes}")
    if keff2_definition not in KEFF2_DEFINITIONS:
        raise ConfigError(
            f"keff2 definition must be one of {KEFF2_DEFINITIONS}, "
            f"got {keff2_definition!r}")
    if backend == "bvp":
        evaluate = lambda f: admittance_bvp(stack, f)  # noqa: E731
    elif backend == "mason":
        evaluate = lambda f: admittance_mason(stack, f)  # noqa: E731
    else:
        raise ConfigError(f"backend must be 'bvp' or 'mason', got {backend!r}")

    freqs = band.frequencies()
    y = evaluate(freqs)
    re = y.real
    mag = np.abs(y)

    max_idx = _interior_extrema(re, maxima=True)
    if not max_idx:
        raise ModeSearchError("no resonance found in band")
    min_idx = _interior_extrema(mag, maxima=False)

    # one extra peak past max_modes serves as the fp search boundary;
    # anything beyond that never influences the result
    max_idx = max_idx[:max_modes + 1]

    fs_list = []
    for i in max_idx:
        fs = _golden_extremum(lambda f: evaluate(f).real,
                              freqs[i - 1], freqs[i + 1], refine_tol,
                              maximize=True)
        fs_list.append((fs, i))
    fs_list.sort()

    pairs = []
    for k, (fs, i_fs) in enumerate(fs_list[:max_modes]):
        next_i = fs_list[k + 1][1] if k + 1 < len(fs_list) else len(freqs)
        j_fp = next((j for j in min_idx if i_fs < j < next_i), None)
        if j_fp is None:
            if k + 1 < len(fs_list):
                raise ModeSearchError(
                    f"no |Y| minimum found between fs = {fs:.6g} Hz and the "
                    f"next resonance; band appears malformed")
            break  # trailing mode with fp beyond the band: drop it
        fp = _golden_extremum(lambda f: abs(evaluate(f)),
                              freqs[j_fp - 1], freqs[j_fp + 1], refine_tol,
                              maximize=False)
        if not fp > fs:
            raise ModeSearchError(
                f"refined fp = {fp:.6g} Hz does not sit above fs = {fs:.6g} Hz")
        pairs.append((fs, fp))

    if not pairs:
        raise ModeSearchError("no resonance found in band")

    modes = []
    for n, (fs, fp) in enumerate(pairs[:max_modes]):
        profile = field_profile(stack, fs)
        partition = strain_energy(profile, stack)
        qm = qm_from_partition(partition, stack)
        k2 = keff2(fs, fp, keff2_definition)
        modes.append(ModeSummary(
            mode_index=n,
            fs=fs,
            fp=fp,
            keff2=k2,
            eta=partition.eta,
            qm=qm,
            fom=k2 * qm,
            keff2_definition=keff2_definition,
        ))
    return modes


def export_modes_csv(modes: list[ModeSummary], path) -> None:
    """Write mode,fs_hz,fp_hz,keff2,eta,qm,fom,keff2_def rows."""
    lines = ["mode,fs_hz,fp_hz,keff2,eta,qm,fom,keff2_def"]
    for m in modes:
        lines.append(
            f"{m.mode_index},{m.fs:.17g},{m.fp:.17g},{m.keff2:.17g},"
            f"{m.eta:.17g},{m.qm:.17g},{m.fom:.17g},{m.keff2_definition}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def calibrate_piezo_stiffness(stack: Stack, target_fs: float,
                              band: FrequencyGrid, mode_index: int = 0,
                              scale_bracket: tuple[float, float] = (0.5, 2.0),
                              rel_tol: float = 1e-10) -> tuple[Stack, float]:
    """Scale the piezo layer's c33e so one mode's fs lands on target_fs.

    Deposited-film stiffness is the least certain constant in the table;
    matching the measured fundamental with a single scalar on c33e is the
    documented way to anchor the model.  Returns (calibrated stack, scale).
    The band must contain the chosen mode for every scale in the bracket.
    """
    ip = stack.piezo_index
    base_mat = stack.layers[ip].material

    def rescaled(scale: float) -> Stack:
        mat = replace(base_mat, c33e=base_mat.c33e * scale)
        layers = list(stack.layers)
        layers[ip] = replace(layers[ip], material=mat)
        return replace(stack, layers=tuple(layers))

    def objective(scale: float) -> float:
        modes = find_modes(rescaled(scale), band, mode_index + 1)
        if len(modes) <= mode_index:
            raise ModeSearchError(
                f"mode {mode_index} not found in band at scale {scale:.4g}")
        return modes[mode_index].fs - target_fs

    lo, hi = scale_bracket
    g_lo, g_hi = objective(lo), objective(hi)
    if g_lo * g_hi > 0:
        raise ConfigError(
            f"target fs = {target_fs:.6g} Hz not reachable: scale bracket "
            f"[{lo:g}, {hi:g}] moves mode {mode_index} over "
            f"[{g_lo + target_fs:.6g}, {g_hi + target_fs:.6g}] Hz")
    scale = brentq(objective, lo, hi, xtol=rel_tol, rtol=1e-12)
    return rescaled(scale), scale
