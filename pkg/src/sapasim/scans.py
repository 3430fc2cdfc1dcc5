"""Measurement protocols built on the analytic and mean-field engines.

Normalization convention: ``A0`` is the transmission amplitude at the
bare cavity frequency with every dot decoupled and the pump off. Maps
report complex transmission ``t`` (output field over input field) and
``A / A0 = |t| / A0``.

Grid points are independent; maps fan rows out over a process pool whose
size is read from ``SAPASIM_WORKERS`` (default: all cores). Within a row
points run sequentially with warm starts, so the result never depends on
the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import meanfield as mf
from .metrics import MeasurementEnsemble, NoiseChain, chain_noise_std, compression_point, snr
from .model import (
    DriveTone,
    DEFAULT_BEAT,
    REF_GAIN_DB,
    REF_MAX_GAIN_OFFSET,
    SystemParams,
    build_rwa_model,
    power_to_amplitude,
)

DEFAULT_PROBE_DBM = -160.0


def worker_count() -> int:
    env = os.environ.get("SAPASIM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_jobs(fn, jobs: list) -> list:
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass(frozen=True)
class Axis:
    name: str
    unit: str
    values: np.ndarray


@dataclass
class SpectrumMap:
    """Complex transmission on a 1D grid (``axis1``) or 2D grid (``axis2`` x ``axis1``)."""

    kind: str
    axis1: Axis
    values: np.ndarray
    a0: float
    axis2: Axis | None = None
    mask: np.ndarray | None = None
    config_hash: str = ""

    def __post_init__(self):
        if self.a0 <= 0:
            raise ValueError("normalization constant must be positive")
        shape = (len(self.axis1.values),) if self.axis2 is None else (
            len(self.axis2.values), len(self.axis1.values))
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {shape}")
        if self.mask is None:
            self.mask = np.zeros(shape, dtype=bool)

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def normalized(self) -> np.ndarray:
        out = np.abs(self.values) / self.a0
        return np.where(self.mask, np.nan, out)


@dataclass
class ToneSpectrum:
    orders: np.ndarray
    frequencies: np.ndarray  # rad/s
    powers_db: np.ndarray  # relative to the probe input power

    def power_of(self, order: int) -> float:
        return float(self.powers_db[list(self.orders).index(order)])


@dataclass
class ReadoutSweepResult:
    eps2: np.ndarray
    on_amplitudes: np.ndarray  # normalized A / A0, noiseless
    off_amplitudes: np.ndarray
    on_ensembles: list[MeasurementEnsemble]
    off_ensembles: list[MeasurementEnsemble]
    far_index: int
    zero_index: int
    noise_std_on: float = 0.0
    noise_std_off: float = 0.0

    def _snr(self, ensembles) -> float:
        return abs(snr(ensembles[self.far_index], ensembles[self.zero_index]))

    @property
    def snr_on(self) -> float:
        return self._snr(self.on_ensembles)

    @property
    def snr_off(self) -> float:
        return self._snr(self.off_ensembles)

    @staticmethod
    def _contrast(amps) -> float:
        return float(np.max(amps) - np.min(amps))

    @property
    def contrast_on(self) -> float:
        return self._contrast(self.on_amplitudes)

    @property
    def contrast_off(self) -> float:
        return self._contrast(self.off_amplitudes)


def linear_response_transmission(omega_s, system: SystemParams):
    """Weak-probe input-output transmission ``b_out / b_in`` (no pump)."""
    cav = system.cavity
    w = np.asarray(omega_s, dtype=float)
    den = 1j * (cav.omega_r - w) + 0.5 * cav.kappa_total
    for d in system.dqds:
        g_t = d.couplings[0]
        if g_t:
            den = den + g_t**2 / (1j * (d.omega_q - w) + d.gamma_2)
    return np.sqrt(cav.kappa_in * cav.kappa_out) / den


def reference_amplitude(system: SystemParams) -> float:
    """``A0``: bare-cavity transmission at ``omega_r`` with all couplings off."""
    return float(abs(linear_response_transmission(system.cavity.omega_r, system.uncoupled())))


def default_probe_amplitude(system: SystemParams) -> float:
    return float(power_to_amplitude(DEFAULT_PROBE_DBM, system.cavity.omega_r))


@dataclass
class PumpedPoint:
    harmonics: mf.HarmonicDecomposition
    transmission: complex
    idler_transmission: complex
    start_state: mf.MeanFieldState
    photons: float


def pumped_point(
    system: SystemParams,
    pump: DriveTone,
    probe: DriveTone,
    init: mf.MeanFieldState | None = None,
    n_harmonics: int = 3,
    **integrator,
) -> PumpedPoint:
    """Periodic steady state for one pump/probe pair.

    ``transmission`` is ``i sqrt(kappa_out) a_{-1} / b_probe``, equal to
    :func:`linear_response_transmission` for a weak probe without pump.
    """
    model = build_rwa_model(system, pump, probe)
    traj = mf.integrate_periodic(model, init, **integrator)
    harm = mf.demodulate(traj, model.beat, n_harmonics, model.omega_p)
    scale = 1j * np.sqrt(model.kappa_out) / probe.envelope
    return PumpedPoint(
        harmonics=harm,
        transmission=complex(scale * harm.signal),
        idler_transmission=complex(1j * np.sqrt(model.kappa_out) * harm.idler / np.conj(probe.envelope)),
        start_state=traj.state(0),
        photons=float(np.mean(np.abs(traj.cavity) ** 2)),
    )


def pumped_transmission(
    system: SystemParams,
    pump_amp: float,
    omega_s: float,
    beat: float,
    probe_amp: float | None = None,
    init: mf.MeanFieldState | None = None,
    **integrator,
) -> PumpedPoint:
    if probe_amp is None:
        probe_amp = default_probe_amplitude(system)
    pump = DriveTone(omega_s + beat, pump_amp)
    probe = DriveTone(omega_s, probe_amp)
    return pumped_point(system, pump, probe, init, **integrator)


def rabi_map(system: SystemParams, probe_freqs, eps_grid, dqd_index: int = 0) -> SpectrumMap:
    """Pump-off transmission versus probe frequency and detuning of one dot."""
    probe_freqs = np.asarray(probe_freqs, dtype=float)
    eps_grid = np.asarray(eps_grid, dtype=float)
    values = np.array(
        [linear_response_transmission(probe_freqs, system.with_dqd(dqd_index, epsilon=e)) for e in eps_grid]
    )
    return SpectrumMap(
        "rabi-map",
        Axis("probe_frequency", "rad/s", probe_freqs),
        values,
        reference_amplitude(system),
        Axis("epsilon", "J", eps_grid),
    )


def _pumped_row(job):
    system, pump_amp, pairs, probe_amp, integrator = job
    out = np.zeros(len(pairs), complex)
    mask = np.zeros(len(pairs), bool)
    init = None
    for k, (omega_s, beat) in enumerate(pairs):
        try:
            pt = pumped_transmission(system, pump_amp, omega_s, beat, probe_amp, init, **integrator)
        except mf.IntegrationError:
            mask[k] = True
            init = None
            continue
        out[k] = pt.transmission
        init = pt.start_state
    return out, mask


def _pumped_map(system, pump_amp, rows, eps_grid, dqd_index, probe_amp, integrator):
    jobs = [
        (system.with_dqd(dqd_index, epsilon=float(e)), pump_amp, pairs, probe_amp, integrator)
        for e, pairs in zip(eps_grid, rows)
    ]
    results = _map_jobs(_pumped_row, jobs)
    values = np.array([r[0] for r in results])
    mask = np.array([r[1] for r in results])
    return values, mask


def gain_map(
    system: SystemParams,
    pump_amp: float,
    beat: float,
    probe_freqs,
    eps_grid,
    probe_amp: float | None = None,
    dqd_index: int = 0,
    **integrator,
) -> SpectrumMap:
    """Pump-on transmission with the pump tracking the probe at fixed beat."""
    probe_freqs = np.asarray(probe_freqs, dtype=float)
    eps_grid = np.atleast_1d(np.asarray(eps_grid, dtype=float))
    rows = [[(w, beat) for w in probe_freqs] for _ in eps_grid]
    values, mask = _pumped_map(system, pump_amp, rows, eps_grid, dqd_index, probe_amp, integrator)
    return SpectrumMap(
        "gain-map",
        Axis("probe_frequency", "rad/s", probe_freqs),
        values,
        reference_amplitude(system),
        Axis("epsilon", "J", eps_grid),
        mask,
    )


def tune_map(
    system: SystemParams,
    pump_amp: float,
    omega_s: float,
    beats,
    eps_grid,
    probe_amp: float | None = None,
    dqd_index: int = 0,
    **integrator,
) -> SpectrumMap:
    """Pump-on transmission at fixed signal frequency versus beat and detuning."""
    beats = np.asarray(beats, dtype=float)
    if np.any(beats == 0):
        raise ValueError("beat grid must exclude zero (degenerate pump and probe)")
    eps_grid = np.atleast_1d(np.asarray(eps_grid, dtype=float))
    rows = [[(omega_s, b) for b in beats] for _ in eps_grid]
    values, mask = _pumped_map(system, pump_amp, rows, eps_grid, dqd_index, probe_amp, integrator)
    return SpectrumMap(
        "tune-map",
        Axis("beat", "rad/s", beats),
        values,
        reference_amplitude(system),
        Axis("epsilon", "J", eps_grid),
        mask,
    )


def tone_spectrum(
    system: SystemParams, pump: DriveTone | None, probe: DriveTone, n_harmonics: int = 2, beat: float | None = None
) -> ToneSpectrum:
    """Output tones at ``omega_p + n * beat`` in dB relative to the probe input.

    With ``pump=None`` the pump-off spectrum is computed in a frame offset
    by ``beat`` from the probe (the pump tone itself is absent).
    """
    if pump is None:
        if beat is None:
            raise ValueError("pump-off spectrum needs a beat to define the harmonic grid")
        pump = DriveTone(probe.frequency + beat, 0.0)
    pt = pumped_point(system, pump, probe, n_harmonics=max(n_harmonics, 3))
    harm = pt.harmonics
    k_out = system.cavity.kappa_out
    orders = np.arange(-n_harmonics, n_harmonics + 1)
    amps = np.array([np.sqrt(k_out) * abs(harm.coefficients[int(n)]) for n in orders])
    powers = 20 * np.log10(np.maximum(amps, 1e-300) / probe.amplitude)
    freqs = np.array([harm.lab_frequency(int(n)) for n in orders])
    return ToneSpectrum(orders, freqs, powers)


def max_gain_point(
    system: SystemParams, pump_amp: float, beat: float, probe_freqs, probe_amp: float | None = None, **integrator
) -> tuple[float, float, float]:
    """Probe frequency of maximum pump-on amplitude: ``(omega_s, A_on, A_off)``."""
    m = gain_map(system, pump_amp, beat, probe_freqs, [system.dqds[0].epsilon], probe_amp, **integrator)
    amps = np.where(m.mask[0], -np.inf, m.amplitude[0])
    k = int(np.argmax(amps))
    w = float(m.axis1.values[k])
    return w, float(amps[k]), float(abs(linear_response_transmission(w, system)))


@dataclass(frozen=True)
class Calibration:
    pump_amplitude: float
    gain_db: float
    omega_s: float
    beat: float
    evaluations: int


def parametric_gain_at(
    system: SystemParams, pump_amp: float, omega_s: float, beat: float, probe_amp: float | None = None, **integrator
) -> float:
    on = abs(pumped_transmission(system, pump_amp, omega_s, beat, probe_amp, **integrator).transmission)
    off = abs(linear_response_transmission(omega_s, system))
    return float(20 * np.log10(on / off))


def calibrate_pump(
    system: SystemParams,
    target_db: float = REF_GAIN_DB,
    omega_s: float | None = None,
    beat: float = DEFAULT_BEAT,
    probe_amp: float | None = None,
    tol_db: float = 0.005,
    max_evaluations: int = 200,
    **integrator,
) -> Calibration:
    """Pump amplitude whose parametric gain at ``omega_s`` equals ``target_db``.

    The gain first rises with pump strength, peaks and then falls back as
    the dot saturates. The amplitude is bracketed on the rising side by a
    geometric scan and then refined by bisection.
    """
    cav = system.cavity
    if omega_s is None:
        omega_s = cav.omega_r + REF_MAX_GAIN_OFFSET
    evals = 0

    def gain(amp):
        nonlocal evals
        evals += 1
        return parametric_gain_at(system, amp, omega_s, beat, probe_amp, **integrator)

    lo, g_lo = 0.0, gain(0.0)
    hi = 0.02 * cav.kappa_total / np.sqrt(cav.kappa_in)
    g_hi = gain(hi)
    while g_hi < target_db:
        if evals >= max_evaluations or hi > 1e3 * cav.kappa_total / np.sqrt(cav.kappa_in):
            raise RuntimeError(f"gain never reaches {target_db} dB (last {g_hi:.2f} dB)")
        lo, g_lo = hi, g_hi
        hi *= 1.15
        g_hi = gain(hi)
    mid, g_mid = hi, g_hi
    while abs(g_mid - target_db) > tol_db:
        if evals >= max_evaluations:
            raise RuntimeError("pump calibration did not converge")
        mid = 0.5 * (lo + hi)
        g_mid = gain(mid)
        if g_mid < target_db:
            lo = mid
        else:
            hi = mid
    return Calibration(float(mid), float(g_mid), float(omega_s), float(beat), evals)


def compression_sweep(
    system: SystemParams,
    pump_amp: float,
    powers_dbm,
    omega_s: float | None = None,
    beat: float = DEFAULT_BEAT,
    **integrator,
) -> tuple[list[tuple[float, float]], float]:
    """Parametric gain versus probe power and the 1 dB compression point.

    The pump-off reference is the weak-probe (linear) amplitude. Raises
    ``ValueError`` if the grid does not reach the compression point.
    """
    if omega_s is None:
        omega_s = system.cavity.omega_r + REF_MAX_GAIN_OFFSET
    powers = np.sort(np.asarray(powers_dbm, dtype=float))
    off = abs(linear_response_transmission(omega_s, system))
    curve = []
    init = None
    for p in powers:
        amp = float(power_to_amplitude(p, omega_s))
        pt = pumped_transmission(system, pump_amp, omega_s, beat, amp, init, **integrator)
        init = pt.start_state
        curve.append((float(p), float(20 * np.log10(abs(pt.transmission) / off))))
    try:
        p1db = compression_point([c[0] for c in curve], [c[1] for c in curve])
    except ValueError:
        raise ValueError("probe-power grid does not bracket the 1 dB compression point: extend grid") from None
    return curve, p1db


def _readout_row(job):
    system, target, eps2_grid, pump_amp, omega_s, beat, probe_amp, integrator = job
    out = np.zeros(len(eps2_grid), complex)
    init = None
    for k, e in enumerate(eps2_grid):
        sysk = system.with_dqd(target, epsilon=float(e))
        pt = pumped_transmission(sysk, pump_amp, omega_s, beat, probe_amp, init, **integrator)
        out[k] = pt.transmission
        init = pt.start_state
    return out


def _noisy_ensemble(t_norm: complex, sigma: float, m: int, seed: int, flag: int, index: int) -> MeasurementEnsemble:
    rng = np.random.default_rng(np.random.SeedSequence([seed, flag, index]))
    noise = rng.normal(size=(m, 2)) @ np.array([1.0, 1j])
    return MeasurementEnsemble(np.abs(t_norm + sigma * noise))


def readout_sweep(
    system: SystemParams,
    sapa_index: int,
    pump_amp: float,
    eps2_grid,
    noise: NoiseChain,
    m: int = 30,
    seed: int = 0,
    beat: float = DEFAULT_BEAT,
    on_offset: float = REF_MAX_GAIN_OFFSET,
    off_offset: float = 0.0,
    probe_power_dbm: float = DEFAULT_PROBE_DBM,
    bandwidth: float = 10.0,
    decouple_sapa_off: bool = True,
    **integrator,
) -> ReadoutSweepResult:
    """Dispersive readout of one dot with the other dot as amplifier.

    Pump on: probe at ``omega_r + on_offset``, pump ``beat`` above it.
    Pump off: probe at ``omega_r + off_offset``, no pump, and (by default)
    the amplifier dot decoupled as in the ``A0`` convention, so the
    reference is a conventional readout without the amplifier. Each detuning
    point gets ``m`` repeats with complex Gaussian chain noise whose
    per-quadrature width follows :func:`chain_noise_std`.
    """
    if len(system.dqds) != 2:
        raise ValueError("readout sweep needs two dots")
    if m < 2:
        raise ValueError("need at least two repeats")
    target = 1 - sapa_index
    eps2 = np.asarray(eps2_grid, dtype=float)
    a0 = reference_amplitude(system)
    cav = system.cavity
    w_on = cav.omega_r + on_offset
    w_off = cav.omega_r + off_offset
    amp_on = float(power_to_amplitude(probe_power_dbm, w_on))
    amp_off = float(power_to_amplitude(probe_power_dbm, w_off))
    off_system = system.with_dqd(sapa_index, g_c=0.0) if decouple_sapa_off else system
    jobs = [
        (system, target, eps2, pump_amp, w_on, beat, amp_on, integrator),
        (off_system, target, eps2, 0.0, w_off, beat, amp_off, integrator),
    ]
    t_on, t_off = _map_jobs(_readout_row, jobs)
    sig_on = chain_noise_std(noise, bandwidth, w_on, True, probe_power_dbm, a0)
    sig_off = chain_noise_std(noise, bandwidth, w_off, False, probe_power_dbm, a0)
    ens_on = [_noisy_ensemble(t / a0, sig_on, m, seed, 1, k) for k, t in enumerate(t_on)]
    ens_off = [_noisy_ensemble(t / a0, sig_off, m, seed, 0, k) for k, t in enumerate(t_off)]
    return ReadoutSweepResult(
        eps2=eps2,
        on_amplitudes=np.abs(t_on) / a0,
        off_amplitudes=np.abs(t_off) / a0,
        on_ensembles=ens_on,
        off_ensembles=ens_off,
        far_index=int(np.argmax(np.abs(eps2))),
        zero_index=int(np.argmin(np.abs(eps2))),
        noise_std_on=sig_on,
        noise_std_off=sig_off,
    )
