"""Physical parameters, unit conversions and model builders.

All quantities are SI internally: frequencies and rates are angular
(rad/s), energies are joules, drive amplitudes are sqrt(photons/s) at the
device input port. Configuration files use Hz, ueV and dBm; the helpers
here do the conversions.

Decay-rate conventions
----------------------
``gamma_1`` is the energy relaxation rate of the qubit population and
``gamma_phi`` the pure dephasing rate, so coherences decay at
``gamma_2 = gamma_1 / 2 + gamma_phi``. ``gamma_2`` is the half width of
the qubit line entering the input-output susceptibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

from . import hilbert

HBAR = constants.hbar
H_PLANCK = constants.h
E_CHARGE = constants.e
K_B = constants.k
TWO_PI = 2.0 * np.pi
UEV = 1e-6 * constants.e

# Reference device (single-dot amplifier working point).
REF_OMEGA_R = TWO_PI * 5.198e9
REF_KAPPA = TWO_PI * 14e6
REF_G = TWO_PI * 60e6
REF_GAMMA_1 = TWO_PI * 100e6
REF_GAP_1 = 5.32e9  # 2 t_c / h for the amplifying dot, Hz
REF_GAP_2 = 5.8e9  # 2 t_c / h for the dispersive target dot, Hz
REF_LEVER_ARM = 0.072
REF_GAIN_DB = 11.28
REF_MAX_GAIN_OFFSET = -TWO_PI * 4e6  # omega_s - omega_r at maximum gain
REF_BEAT_HW = TWO_PI * 5e3
DEFAULT_BEAT = TWO_PI * 100e3


def hz(f: float) -> float:
    """Convert a frequency in Hz to rad/s."""
    return TWO_PI * f


def uev_to_joule(x: float) -> float:
    return x * UEV


def joule_to_uev(x: float) -> float:
    return x / UEV


def gap_hz_to_tc(gap_hz: float) -> float:
    """Tunnel coupling (J) from the anticrossing gap ``2 t_c / h`` in Hz."""
    return 0.5 * H_PLANCK * gap_hz


@dataclass(frozen=True)
class CavityParams:
    omega_r: float
    kappa_in: float
    kappa_out: float
    kappa_int: float = 0.0

    def __post_init__(self):
        for name in ("kappa_in", "kappa_out", "kappa_int"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.kappa_total <= 0:
            raise ValueError("total cavity decay rate must be positive")
        if self.omega_r <= 0:
            raise ValueError("omega_r must be positive")

    @property
    def kappa_total(self) -> float:
        return self.kappa_in + self.kappa_out + self.kappa_int

    @classmethod
    def symmetric(cls, omega_r: float, kappa: float) -> "CavityParams":
        """Lossless cavity with the decay split evenly between two ports."""
        return cls(omega_r, kappa / 2, kappa / 2, 0.0)


@dataclass(frozen=True)
class DqdParams:
    """One double quantum dot (charge qubit).

    ``epsilon`` and ``t_c`` are energies in joules, ``g_c`` and the decay
    rates are angular rates, ``lever_arm`` converts gate volts to eV.
    """

    epsilon: float
    t_c: float
    g_c: float
    gamma_1: float
    gamma_phi: float = 0.0
    lever_arm: float = REF_LEVER_ARM

    def __post_init__(self):
        if self.t_c < 0:
            raise ValueError("t_c must be >= 0")
        if self.gamma_1 < 0 or self.gamma_phi < 0:
            raise ValueError("decay rates must be >= 0")

    @property
    def omega_q(self) -> float:
        return qubit_frequency(self.epsilon, self.t_c)

    @property
    def gamma_2(self) -> float:
        return 0.5 * self.gamma_1 + self.gamma_phi

    @property
    def couplings(self) -> tuple[float, float]:
        return effective_couplings(self.epsilon, self.t_c, self.g_c)


@dataclass(frozen=True)
class SystemParams:
    cavity: CavityParams
    dqds: tuple[DqdParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "dqds", tuple(self.dqds))
        if len(self.dqds) not in (1, 2):
            raise ValueError(f"expected 1 or 2 DQDs, got {len(self.dqds)}")

    def with_dqd(self, index: int, **changes) -> "SystemParams":
        dqds = list(self.dqds)
        dqds[index] = replace(dqds[index], **changes)
        return replace(self, dqds=tuple(dqds))

    def with_cavity(self, **changes) -> "SystemParams":
        return replace(self, cavity=replace(self.cavity, **changes))

    def uncoupled(self) -> "SystemParams":
        """Same system with every dot decoupled (Coulomb-blockade surrogate)."""
        return replace(self, dqds=tuple(replace(d, g_c=0.0) for d in self.dqds))


@dataclass(frozen=True)
class DriveTone:
    """Coherent tone ``~ amplitude * cos(frequency * t + phase)`` at the input port.

    The positive-frequency envelope is ``amplitude * exp(-1j * phase)``.
    """

    frequency: float
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("drive amplitude must be >= 0")

    @property
    def envelope(self) -> complex:
        return self.amplitude * np.exp(-1j * self.phase)


@dataclass(frozen=True)
class RwaModel:
    """Pump-frame, rotating-wave parameters for the mean-field engine.

    The probe enters at beat ``beat = omega_p - omega_s`` and appears in
    the pump frame as ``exp(+1j * beat * t)``.
    """

    delta_c: float
    kappa_in: float
    kappa_out: float
    kappa_int: float
    delta_q: np.ndarray
    g_t: np.ndarray
    gamma_1: np.ndarray
    gamma_2: np.ndarray
    pump_drive: complex
    probe_drive: complex
    beat: float
    omega_p: float
    g_c: np.ndarray = field(default=None)

    @property
    def kappa_total(self) -> float:
        return self.kappa_in + self.kappa_out + self.kappa_int

    @property
    def n_dqd(self) -> int:
        return len(self.delta_q)


def qubit_frequency(epsilon: float, t_c: float) -> float:
    """Charge-qubit transition frequency ``sqrt(eps^2 + 4 t_c^2) / hbar``."""
    return np.sqrt(np.square(epsilon) + 4.0 * np.square(t_c)) / HBAR


def effective_couplings(epsilon: float, t_c: float, g_c: float) -> tuple[float, float]:
    """Transverse and longitudinal parts of ``g_c sigma_z (a + a^dag)``.

    Returns ``(g_c * 2 t_c / W, g_c * eps / W)`` with ``W = sqrt(eps^2 + 4 t_c^2)``.
    """
    w = np.sqrt(np.square(epsilon) + 4.0 * np.square(t_c))
    if np.any(w == 0):
        raise ValueError("qubit eigenbasis undefined for epsilon = t_c = 0")
    return g_c * 2.0 * t_c / w, g_c * epsilon / w


def gate_to_detuning(delta_v: float, lever_arm: float = REF_LEVER_ARM) -> float:
    """Detuning energy (J) produced by a gate-voltage change (V)."""
    return lever_arm * E_CHARGE * delta_v


def power_to_amplitude(power_dbm: float, omega: float) -> float:
    """Coherent amplitude in sqrt(photons/s) for a tone of given power."""
    if np.any(np.asarray(omega) <= 0):
        raise ValueError("omega must be positive")
    watts = 10.0 ** ((np.asarray(power_dbm, dtype=float) - 30.0) / 10.0)
    return np.sqrt(watts / (HBAR * omega))


def amplitude_to_power(amplitude: float, omega: float) -> float:
    """Inverse of :func:`power_to_amplitude`, in dBm."""
    watts = HBAR * omega * np.square(amplitude)
    return 10.0 * np.log10(watts) + 30.0


def reference_system(
    two_dots: bool = False,
    gamma_phi: float = 0.0,
    gamma_1: float = REF_GAMMA_1,
) -> SystemParams:
    """Reference device: amplifying dot at eps = 0, optional dispersive second dot."""
    cavity = CavityParams.symmetric(REF_OMEGA_R, REF_KAPPA)
    dqd1 = DqdParams(0.0, gap_hz_to_tc(REF_GAP_1), REF_G, gamma_1, gamma_phi)
    dqds = [dqd1]
    if two_dots:
        dqds.append(DqdParams(0.0, gap_hz_to_tc(REF_GAP_2), REF_G, gamma_1, gamma_phi))
    return SystemParams(cavity, tuple(dqds))


def build_rwa_model(
    system: SystemParams, pump: DriveTone | None, probe: DriveTone
) -> RwaModel:
    """Reduce the system to the pump rotating frame.

    Counter-rotating and longitudinal coupling terms are dropped. Without a
    pump tone the frame rotates at the probe frequency and the beat is zero.
    """
    cav = system.cavity
    if pump is None:
        omega_p, pump_env = probe.frequency, 0.0j
    else:
        omega_p, pump_env = pump.frequency, pump.envelope
    if omega_p <= 0:
        raise ValueError("pump frequency must be positive")
    beat = omega_p - probe.frequency
    if pump is not None and pump.amplitude > 0 and beat == 0:
        raise ValueError("pump and probe at the same frequency: use a single tone")
    if abs(beat) > 0.01 * omega_p:
        raise ValueError("beat frequency must be small compared to the pump frequency")
    g_t = np.array([d.couplings[0] for d in system.dqds], dtype=float)
    sq_in = np.sqrt(cav.kappa_in)
    return RwaModel(
        delta_c=cav.omega_r - omega_p,
        kappa_in=cav.kappa_in,
        kappa_out=cav.kappa_out,
        kappa_int=cav.kappa_int,
        delta_q=np.array([d.omega_q - omega_p for d in system.dqds], dtype=float),
        g_t=np.abs(g_t),
        gamma_1=np.array([d.gamma_1 for d in system.dqds], dtype=float),
        gamma_2=np.array([d.gamma_2 for d in system.dqds], dtype=float),
        pump_drive=complex(sq_in * pump_env),
        probe_drive=complex(sq_in * probe.envelope),
        beat=beat,
        omega_p=omega_p,
        g_c=np.array([d.g_c for d in system.dqds], dtype=float),
    )


def qubit_eigenbasis(epsilon: float, t_c: float) -> np.ndarray:
    """Unitary whose columns are ``|e>, |g>`` in the charge basis ``{|R>, |L>}``."""
    h = 0.5 * epsilon * hilbert.pauli("z") + t_c * hilbert.pauli("x")
    vals, vecs = np.linalg.eigh(h)
    return vecs[:, ::-1]


@dataclass
class LabModel:
    """Lab-frame model ``H(t) = H0 + sum_k c_k cos(w_k t + phi_k) V_k`` in rad/s."""

    dims: list[int]
    H0: np.ndarray
    drives: list[tuple[float, float, float, np.ndarray]]  # (c, w, phi, V)
    collapse_ops: list[tuple[float, np.ndarray]]
    annihilation: np.ndarray
    sigma_minus: list[np.ndarray]

    def hamiltonian(self, t: float) -> np.ndarray:
        H = self.H0.copy()
        for c, w, phi, V in self.drives:
            H = H + c * np.cos(w * t + phi) * V
        return H


def build_lab_model(
    system: SystemParams,
    n_max: int,
    tones: tuple[DriveTone, ...] = (),
    max_dim: int = hilbert.MAX_DIM,
) -> LabModel:
    """Full lab-frame model with ``sigma_z (a + a^dag)`` coupling and cosine drives.

    Collapse operators: ``sqrt(kappa) a``, and per dot ``sqrt(gamma_1)``
    times the eigenbasis lowering operator and ``sqrt(gamma_phi / 2)`` times
    the eigenbasis ``sigma_z``.
    """
    dims = [n_max + 1] + [2] * len(system.dqds)
    total = int(np.prod(dims))
    if total > max_dim:
        raise ValueError(f"Hilbert space dimension {total} exceeds maximum {max_dim}")
    a = hilbert.embed(hilbert.fock_annihilation(n_max), 0, dims)
    x = a + a.conj().T
    H0 = system.cavity.omega_r * (a.conj().T @ a)
    collapse = [(system.cavity.kappa_total, a)]
    sigma_minus = []
    for j, d in enumerate(system.dqds, start=1):
        sz = hilbert.embed(hilbert.pauli("z"), j, dims)
        sx = hilbert.embed(hilbert.pauli("x"), j, dims)
        H0 = H0 + (0.5 * d.epsilon / HBAR) * sz + (d.t_c / HBAR) * sx + d.g_c * (sz @ x)
        u = qubit_eigenbasis(d.epsilon, d.t_c)
        sm = hilbert.embed(u @ hilbert.pauli("minus") @ u.conj().T, j, dims)
        sz_eig = hilbert.embed(u @ hilbert.pauli("z") @ u.conj().T, j, dims)
        sigma_minus.append(sm)
        collapse.append((d.gamma_1, sm))
        collapse.append((0.5 * d.gamma_phi, sz_eig))
    drives = [
        (2.0 * np.sqrt(system.cavity.kappa_in) * tone.amplitude, tone.frequency, tone.phase, x)
        for tone in tones
    ]
    return LabModel(dims, H0, drives, collapse, a, sigma_minus)
