"""Scalar figures of merit and the amplifier noise-chain model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import HBAR, K_B, power_to_amplitude


def _db_ratio(num: float, den: float) -> float:
    if num <= 0 or den <= 0:
        raise ValueError("amplitudes must be positive")
    return 20.0 * np.log10(num / den)


def parametric_gain(a_on_max: float, a_off: float) -> float:
    """Pump-on over pump-off amplitude at the same probe frequency, in dB."""
    return _db_ratio(a_on_max, a_off)


def effective_gain(a_on_max: float, a_0: float) -> float:
    """Pump-on maximum over the bare-cavity amplitude, in dB."""
    return _db_ratio(a_on_max, a_0)


def cooperativity(g: float, gamma: float, kappa: float) -> float:
    """``4 g^2 / (gamma kappa)``.

    ``gamma`` is the qubit decoherence rate in the same convention as
    ``kappa`` (a full energy-decay-type rate, i.e. ``2 * gamma_2`` when
    dephasing is relaxation limited).
    """
    if gamma <= 0 or kappa <= 0:
        raise ValueError("rates must be positive")
    return 4.0 * g**2 / (gamma * kappa)


def strong_coupling(g: float, gamma: float, kappa: float) -> bool:
    return cooperativity(g, gamma, kappa) > 1 and g > gamma / 2 and g > kappa / 2


def fwhm(x: np.ndarray, y: np.ndarray, baseline: float = 0.0) -> float:
    """Full width at half of ``(peak - baseline)``, linearly interpolated.

    ``y`` should be a power-like quantity (e.g. ``|t|^2``) with a single
    dominant peak. Raises ``ValueError`` if either half crossing is missing.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    half = baseline + 0.5 * (y[k] - baseline)
    left = np.nonzero(y[:k] < half)[0]
    right = np.nonzero(y[k:] < half)[0]
    if left.size == 0 or right.size == 0:
        raise ValueError("no half-maximum crossing on one side of the peak")
    i = left[-1]
    j = k + right[0]
    x_left = np.interp(half, [y[i], y[i + 1]], [x[i], x[i + 1]])
    x_right = np.interp(half, [y[j], y[j - 1]], [x[j], x[j - 1]])
    return float(abs(x_right - x_left))


@dataclass(frozen=True)
class MeasurementEnsemble:
    repeats: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "repeats", np.asarray(self.repeats, dtype=float))

    @property
    def mean(self) -> float:
        return float(np.mean(self.repeats))

    @property
    def std(self) -> float:
        """Unbiased (M - 1) standard deviation."""
        return float(np.std(self.repeats, ddof=1))

    def __len__(self) -> int:
        return len(self.repeats)


def snr(on: MeasurementEnsemble, off: MeasurementEnsemble) -> float:
    """``(mean_1 - mean_0) / sqrt(std_1^2 + std_0^2)`` with unbiased stds."""
    if len(on) < 2 or len(off) < 2:
        raise ValueError("need at least two repeats per ensemble")
    spread = np.hypot(on.std, off.std)
    if spread == 0:
        raise ValueError("zero combined standard deviation")
    return (on.mean - off.mean) / spread


@dataclass(frozen=True)
class NoiseChain:
    """Input-referred added noise (quanta) of the on-chip amplifier and the rest of the chain."""

    n_sapa: float = 1.5
    n_hemt: float = 10.0
    g_sapa_linear: float = 10 ** (11.28 / 10)

    def __post_init__(self):
        if min(self.n_sapa, self.n_hemt, self.g_sapa_linear) < 0:
            raise ValueError("noise-chain parameters must be >= 0")

    def output_quanta(self, sapa_on: bool) -> float:
        """Noise quanta referred to the downstream-chain input."""
        if sapa_on:
            return self.g_sapa_linear * self.n_sapa + self.n_hemt
        return self.n_hemt


def chain_noise_std(
    chain: NoiseChain,
    bandwidth: float,
    omega: float,
    sapa_on: bool,
    probe_power_dbm: float,
    a0: float,
) -> float:
    """Per-quadrature amplitude noise in units of the normalized transmission ``A / A0``.

    The output noise flux ``N_out * bandwidth`` (photons/s) is split evenly
    between quadratures and compared with the transmitted bare-cavity flux
    ``(a0 * b_probe)^2`` of a probe of the given power.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    b_probe = power_to_amplitude(probe_power_dbm, omega)
    return float(np.sqrt(0.5 * chain.output_quanta(sapa_on) * bandwidth) / (a0 * b_probe))


def added_noise_from_floor_rise(rise: float, chain: NoiseChain) -> float:
    """Invert ``N_on / N_off = (G n_sapa + n_hemt) / n_hemt`` for ``n_sapa``."""
    return (rise - 1.0) * chain.n_hemt / chain.g_sapa_linear


def snr_improvement(chain: NoiseChain) -> float:
    """Amplitude-SNR ratio with and without the amplifier, ``sqrt(G n_hemt / (G n_sapa + n_hemt))``."""
    g = chain.g_sapa_linear
    return float(np.sqrt(g * chain.n_hemt / (g * chain.n_sapa + chain.n_hemt)))


def effective_temperature(n_add: float, omega: float) -> float:
    """Noise temperature ``n_add * hbar * omega / k_B`` (K)."""
    if n_add < 0:
        raise ValueError("n_add must be >= 0")
    return n_add * HBAR * omega / K_B


def compression_point(powers_dbm, gains_db, drop_db: float = 1.0) -> float:
    """Input power where the gain first falls ``drop_db`` below its small-signal value.

    The small-signal gain is the gain at the lowest sampled power.
    """
    p = np.asarray(powers_dbm, dtype=float)
    g = np.asarray(gains_db, dtype=float)
    order = np.argsort(p)
    p, g = p[order], g[order]
    target = g[0] - drop_db
    below = np.nonzero(g <= target)[0]
    if below.size == 0:
        raise ValueError("gain never drops by the requested amount: extend the power grid")
    k = below[0]
    return float(np.interp(target, [g[k], g[k - 1]], [p[k], p[k - 1]]))
