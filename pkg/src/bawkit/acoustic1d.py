"""One-dimensional thickness-extensional admittance of layered stacks.

Two independent backends evaluate the same physics:

* ``admittance_bvp`` assembles the piecewise two-wave boundary-value
  problem (per-layer amplitudes plus the uniform electric displacement)
  and solves the resulting linear system.  Production path.
* ``admittance_mason`` chains acoustic transmission-line transforms into
  the loaded-plate closed form.  Built-in physics oracle; the two must
  agree to 1e-8 relative.

Conventions: harmonic time dependence exp(+j*omega*t); layer-local
coordinate z runs from the bottom face of each layer; v_star takes the
principal square root so forward-propagating waves decay.  The drive is
a unit voltage across the piezo layer; Y = j*omega*D*A/V, then a series
electrical resistance rs is composed as Y/(1 + rs*Y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .materials import ConfigError, DerivedConstants, Stack, derive_constants


class PhysicsError(RuntimeError):
    """The requested evaluation is physically or numerically degenerate."""


class SingularFrequencyError(PhysicsError):
    """The system is singular at a frequency (lossless resonance)."""

    def __init__(self, frequency: float, message: str | None = None):
        self.frequency = frequency
        if message is None:
            message = (f"singular system at f = {frequency!r} Hz "
                       f"(lossless resonance)")
        super().__init__(message)


@dataclass(frozen=True)
class FrequencyGrid:
    """A sweep axis: [f_min, f_max] with n_points, linear or logarithmic."""

    f_min: float
    f_max: float
    n_points: int
    spacing: str = "linear"

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ConfigError(
                f"need 0 < f_min < f_max, got ({self.f_min!r}, {self.f_max!r})")
        if self.n_points < 2:
            raise ConfigError(f"n_points must be >= 2, got {self.n_points}")
        if self.spacing not in ("linear", "logarithmic"):
            raise ConfigError(
                f"spacing must be 'linear' or 'logarithmic', got {self.spacing!r}")

    def frequencies(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(self.f_min, self.f_max, self.n_points)
        return np.geomspace(self.f_min, self.f_max, self.n_points)


@dataclass(frozen=True)
class AdmittanceCurve:
    """Complex admittance samples on an increasing frequency axis."""

    frequencies: np.ndarray
    y: np.ndarray
    provenance: str

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        y = np.asarray(self.y, dtype=complex)
        if f.ndim != 1 or y.shape != f.shape:
            raise ConfigError("frequencies and y must be 1-D and equal length")
        if f.size >= 2 and not np.all(np.diff(f) > 0):
            raise ConfigError("frequencies must be strictly increasing")
        if self.provenance not in ("simulated-bvp", "simulated-mason", "measured"):
            raise ConfigError(f"unknown provenance {self.provenance!r}")
        f.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class FieldProfile:
    """Displacement and stress through the stack at one frequency.

    Per-layer sampled arrays keep both interface endpoints so continuity
    can be checked from either side.  Amplitudes are the (a, b) wave pair
    of each layer in u(z) = a*exp(-j*k*z) + b*exp(+j*k*z).
    """

    frequency: float
    amplitudes: tuple[tuple[complex, complex], ...]
    d_field: complex
    voltage: complex
    z_layers: tuple[np.ndarray, ...]
    u_layers: tuple[np.ndarray, ...]
    t_layers: tuple[np.ndarray, ...]

    @property
    def z(self) -> np.ndarray:
        return np.concatenate(self.z_layers)

    @property
    def u(self) -> np.ndarray:
        return np.concatenate(self.u_layers)

    @property
    def t_stress(self) -> np.ndarray:
        return np.concatenate(self.t_layers)


@dataclass(frozen=True)
class EnergyPartition:
    """Time-averaged elastic strain energy per layer, in joules."""

    per_layer: tuple[float, ...]
    total: float
    eta: float


# ---------------------------------------------------------------------------
# BVP backend


def _bvp_solve(stack: Stack, dc: DerivedConstants, freqs: np.ndarray):
    """Solve the layered BVP at each frequency.

    Returns (x, u_scale) where x has shape (n, 2L+1): the scaled wave
    amplitude pair of each layer followed by the scaled electric
    displacement delta = D * t_p / (eps_star * V).
    """
    n = freqs.shape[0]
    nlay = len(stack.layers)
    m = 2 * nlay + 1
    ip = dc.piezo_index
    piezo = stack.layers[ip]
    pm = piezo.material
    omega = 2.0 * math.pi * freqs

    # Scales chosen so every nonzero entry is O(1/theta .. 1).
    u_scale = pm.e33 / pm.c33d if pm.e33 != 0.0 else 1.0
    zfac = [c / v for c, v in zip(dc.c_star, dc.v_star)]  # rho * v_star
    sref = abs(zfac[ip])
    s_lay = [z / sref * (1.0 if u_scale >= 0 else -1.0) for z in zfac]

    theta = np.empty((nlay, n), dtype=complex)
    for i, lay in enumerate(stack.layers):
        theta[i] = omega * (lay.thickness / dc.v_star[i])
    em = np.exp(-1j * theta)
    ep = np.exp(1j * theta)

    # Coefficient of delta in the scaled stress rows.
    loss_fac = 1.0 - 1j * pm.tan_delta
    hd = pm.e33 * loss_fac / (piezo.thickness * sref * abs(u_scale)) / omega \
        if pm.e33 != 0.0 else np.zeros(n, dtype=complex)

    a_mat = np.zeros((n, m, m), dtype=complex)
    rhs = np.zeros((n, m), dtype=complex)

    # Bottom boundary, layer 0 at z = 0.
    if stack.boundary_bottom == "free":
        a_mat[:, 0, 0] = -1j * s_lay[0]
        a_mat[:, 0, 1] = 1j * s_lay[0]
        if ip == 0:
            a_mat[:, 0, m - 1] = -hd
    else:  # rigid: u = 0
        a_mat[:, 0, 0] = 1.0
        a_mat[:, 0, 1] = 1.0

    # Interface continuity between layer i and i+1.
    for i in range(nlay - 1):
        ru = 1 + 2 * i
        rt = 2 + 2 * i
        ca, cb = 2 * i, 2 * i + 1
        na, nb = 2 * (i + 1), 2 * (i + 1) + 1
        a_mat[:, ru, ca] = em[i]
        a_mat[:, ru, cb] = ep[i]
        a_mat[:, ru, na] = -1.0
        a_mat[:, ru, nb] = -1.0
        a_mat[:, rt, ca] = -1j * s_lay[i] * em[i]
        a_mat[:, rt, cb] = 1j * s_lay[i] * ep[i]
        a_mat[:, rt, na] = 1j * s_lay[i + 1]
        a_mat[:, rt, nb] = -1j * s_lay[i + 1]
        if i == ip:
            a_mat[:, rt, m - 1] = -hd
        elif i + 1 == ip:
            a_mat[:, rt, m - 1] = hd

    # Top boundary, last layer at z = t.
    rtop = 2 * nlay - 1
    last = nlay - 1
    if stack.boundary_top == "free":
        a_mat[:, rtop, 2 * last] = -1j * s_lay[last] * em[last]
        a_mat[:, rtop, 2 * last + 1] = 1j * s_lay[last] * ep[last]
        if ip == last:
            a_mat[:, rtop, m - 1] = -hd
    else:
        a_mat[:, rtop, 2 * last] = em[last]
        a_mat[:, rtop, 2 * last + 1] = ep[last]

    # Unit-voltage constraint across the piezo layer.
    chi = pm.e33 * u_scale / dc.eps_star
    a_mat[:, m - 1, 2 * ip] = -chi * (em[ip] - 1.0)
    a_mat[:, m - 1, 2 * ip + 1] = -chi * (ep[ip] - 1.0)
    a_mat[:, m - 1, m - 1] = 1.0
    rhs[:, m - 1] = 1.0

    try:
        x = np.linalg.solve(a_mat, rhs[:, :, np.newaxis])[:, :, 0]
    except np.linalg.LinAlgError:
        # Identify the offending frequency for the error message.
        for i in range(n):
            try:
                np.linalg.solve(a_mat[i], rhs[i])
            except np.linalg.LinAlgError:
                raise SingularFrequencyError(float(freqs[i])) from None
        raise
    bad = ~np.all(np.isfinite(x), axis=1)
    if np.any(bad):
        raise SingularFrequencyError(float(freqs[np.argmax(bad)]))
    return x, u_scale


def _compose_rs(y_raw: np.ndarray, rs: float) -> np.ndarray:
    if rs == 0.0:
        return y_raw
    return y_raw / (1.0 + rs * y_raw)


def admittance_bvp(stack: Stack, f) -> complex | np.ndarray:
    """Electrical admittance from the layered boundary-value problem.

    Args:
        f: frequency in Hz, scalar or 1-D array; must be > 0.
    Returns:
        Complex admittance in siemens, matching the shape of f.
    """
    freqs = np.atleast_1d(np.asarray(f, dtype=float))
    if np.any(freqs <= 0):
        raise ConfigError("frequencies must be > 0")
    dc = derive_constants(stack)
    x, _ = _bvp_solve(stack, dc, freqs)
    delta = x[:, -1]
    t_p = stack.t_piezo
    d_field = delta * dc.eps_star / t_p
    y_raw = 1j * (2.0 * math.pi * freqs) * d_field * stack.area
    y = _compose_rs(y_raw, stack.rs_electrical)
    if np.isscalar(f) or np.asarray(f).ndim == 0:
        return complex(y[0])
    return y


# ---------------------------------------------------------------------------
# Closed-form (transmission-line) backend


def _chain_substack(stack, dc, omega, indices, termination):
    """Acoustic input impedance of a sub-stack, seen from the piezo face.

    Walks from the outer termination inward.  The impedance is carried as
    a projective pair (num, den) so rigid terminations need no infinities.
    indices are layer indices ordered from the piezo side outward.
    """
    n = omega.shape[0]
    if termination == "free":
        num = np.zeros(n, dtype=complex)
        den = np.ones(n, dtype=complex)
    else:
        num = np.ones(n, dtype=complex)
        den = np.zeros(n, dtype=complex)
    for i in reversed(indices):
        z_i = dc.z_acoustic[i]
        th = omega * (stack.layers[i].thickness / dc.v_star[i])
        cos_t = np.cos(th)
        sin_t = np.sin(th)
        num, den = (z_i * (num * cos_t + 1j * z_i * den * sin_t),
                    z_i * den * cos_t + 1j * num * sin_t)
        scale = np.maximum(np.abs(num), np.abs(den))
        num = num / scale
        den = den / scale
    return num, den


def admittance_mason(stack: Stack, f) -> complex | np.ndarray:
    """Electrical admittance from the loaded-plate closed form.

    Same contract as admittance_bvp; exists as an independent oracle.
    """
    freqs = np.atleast_1d(np.asarray(f, dtype=float))
    if np.any(freqs <= 0):
        raise ConfigError("frequencies must be > 0")
    dc = derive_constants(stack)
    omega = 2.0 * math.pi * freqs
    ip = dc.piezo_index
    piezo = stack.layers[ip]
    pm = piezo.material

    z_p = dc.z_acoustic[ip]
    th_p = omega * (piezo.thickness / dc.v_star[ip])
    cos_p = np.cos(th_p)
    sin_p = np.sin(th_p)
    one_m_cos = 2.0 * np.sin(0.5 * th_p) ** 2

    # Normalized loads as projective pairs; z = num / (den * z_p).
    nt, dt = _chain_substack(stack, dc, omega,
                             list(range(ip + 1, len(stack.layers))),
                             stack.boundary_top)
    nb, db = _chain_substack(stack, dc, omega,
                             list(range(ip - 1, -1, -1)),
                             stack.boundary_bottom)
    dt = dt * z_p
    db = db * z_p

    s_sum = nt * db + nb * dt
    p_prod = nt * nb
    q_prod = dt * db

    # Coupling term keeps the lossy stiffened constant: e33*h/c_star.
    kt2_c = pm.e33 * dc.h_piezo / dc.c_star[ip] if pm.e33 != 0.0 else 0.0

    with np.errstate(all="ignore"):
        numer = s_sum * sin_p + 2j * one_m_cos * q_prod
        denom = s_sum * cos_p + 1j * (q_prod + p_prod) * sin_p
        bracket = 1.0 - (kt2_c / th_p) * (numer / denom)
        y_raw = 1j * omega * dc.c0 / bracket
    bad = ~np.isfinite(y_raw)
    if np.any(bad):
        raise SingularFrequencyError(float(freqs[np.argmax(bad)]))
    y = _compose_rs(y_raw, stack.rs_electrical)
    if np.isscalar(f) or np.asarray(f).ndim == 0:
        return complex(y[0])
    return y


_BACKENDS = {"bvp": admittance_bvp, "mason": admittance_mason}


def spectrum(stack: Stack, grid: FrequencyGrid, backend: str = "bvp") -> AdmittanceCurve:
    """Admittance over a frequency grid with provenance attached."""
    if backend not in _BACKENDS:
        raise ConfigError(f"backend must be one of {sorted(_BACKENDS)}, "
                          f"got {backend!r}")
    freqs = grid.frequencies()
    y = _BACKENDS[backend](stack, freqs)
    return AdmittanceCurve(frequencies=freqs, y=y,
                           provenance=f"simulated-{backend}")


def field_profile(stack: Stack, f: float, points_per_layer: int = 64) -> FieldProfile:
    """Displacement and stress profile at one frequency (unit drive).

    points_per_layer is clamped to at least 64 samples per layer; both
    layer endpoints are included.
    """
    if points_per_layer < 64:
        points_per_layer = 64
    f = float(f)
    if f <= 0:
        raise ConfigError("frequency must be > 0")
    dc = derive_constants(stack)
    freqs = np.array([f])
    x, u_scale = _bvp_solve(stack, dc, freqs)
    x = x[0]
    ip = dc.piezo_index
    piezo = stack.layers[ip]
    pm = piezo.material
    omega = 2.0 * math.pi * f

    delta = x[-1]
    d_field = delta * dc.eps_star / piezo.thickness
    hd = (pm.e33 / pm.eps33s) * d_field if pm.e33 != 0.0 else 0.0

    amps = []
    z_layers = []
    u_layers = []
    t_layers = []
    z0 = 0.0
    for i, lay in enumerate(stack.layers):
        a = u_scale * x[2 * i]
        b = u_scale * x[2 * i + 1]
        amps.append((complex(a), complex(b)))
        k = omega / dc.v_star[i]
        z_loc = np.linspace(0.0, lay.thickness, points_per_layer)
        em = np.exp(-1j * k * z_loc)
        ep = np.exp(1j * k * z_loc)
        u = a * em + b * ep
        t_stress = dc.c_star[i] * (1j * k) * (-a * em + b * ep)
        if i == ip:
            t_stress = t_stress - hd
        z_layers.append(z0 + z_loc)
        u_layers.append(u)
        t_layers.append(t_stress)
        z0 += lay.thickness

    voltage = complex(1.0)
    return FieldProfile(
        frequency=f,
        amplitudes=tuple(amps),
        d_field=complex(d_field),
        voltage=voltage,
        z_layers=tuple(z_layers),
        u_layers=tuple(u_layers),
        t_layers=tuple(t_layers),
    )


def _two_wave_integral(a: complex, b: complex, k: complex, t: float) -> float:
    """Closed form of int_0^t |d/dz (a e^{-jkz} + b e^{jkz})|^2 dz."""
    kr = k.real
    ki = k.imag
    if ki != 0.0:
        ia = math.expm1(2.0 * ki * t) / (2.0 * ki)
        ib = -math.expm1(-2.0 * ki * t) / (2.0 * ki)
    else:
        ia = t
        ib = t
    cross_kernel = (1.0 - complex(math.cos(2.0 * kr * t),
                                  -math.sin(2.0 * kr * t))) / (2j * kr)
    icross = -2.0 * (a * b.conjugate() * cross_kernel).real
    mag_k2 = kr * kr + ki * ki
    return mag_k2 * ((abs(a) ** 2) * ia + (abs(b) ** 2) * ib + icross)


def strain_energy(profile: FieldProfile, stack: Stack) -> EnergyPartition:
    """Per-layer time-averaged elastic strain energy U_i and eta.

    U_i = (A/4) * int Re(c_eff) |u'(z)|^2 dz with the analytic two-wave
    antiderivative (no quadrature).  eta is the piezo share of the total.
    """
    if len(profile.amplitudes) != len(stack.layers):
        raise ConfigError("profile does not match the stack layer count")
    dc = derive_constants(stack)
    omega = 2.0 * math.pi * profile.frequency
    u_per = []
    for i, lay in enumerate(stack.layers):
        c_eff = lay.material.c33d if lay.role == "piezo" else lay.material.c33e
        k = complex(omega / dc.v_star[i])
        a, b = profile.amplitudes[i]
        integral = _two_wave_integral(a, b, k, lay.thickness)
        u_per.append(0.25 * stack.area * c_eff * integral)
    total = sum(u_per)
    if total == 0.0:
        raise PhysicsError("no acoustic excitation at this frequency")
    eta = u_per[dc.piezo_index] / total
    return EnergyPartition(per_layer=tuple(u_per), total=total, eta=eta)


def export_spectrum_csv(curve: AdmittanceCurve, path) -> None:
    """Write freq_hz,re_y_s,im_y_s rows with 17 significant digits."""
    lines = ["freq_hz,re_y_s,im_y_s"]
    for f, y in zip(curve.frequencies, curve.y):
        lines.append(f"{f:.17g},{y.real:.17g},{y.imag:.17g}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
