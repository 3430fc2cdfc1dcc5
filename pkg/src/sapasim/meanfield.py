"""Semiclassical (first-order cumulant) dynamics in the pump rotating frame.

Per dot ``j``, with ``a`` the cavity amplitude and ``s_j``, ``z_j`` the
qubit coherence and inversion::

    da/dt   = -(i dc + k/2) a - i sum_j g_j s_j - i (e_p + e_s exp(i beat t))
    ds_j/dt = -(i dq_j + G2_j) s_j + i g_j z_j a
    dz_j/dt = -G1_j (z_j + 1) + 2 i g_j (conj(a) s_j - a conj(s_j))

The state is packed as a complex vector ``[a, s_1..s_N, z_1..z_N]``.
Time integration uses an explicit Dormand-Prince 5(4) pair compiled with
numba; steps are clipped so that output samples fall exactly on a uniform
grid over each beat period.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline

from .model import RwaModel


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MeanFieldState:
    a: complex
    s_minus: np.ndarray
    s_z: np.ndarray

    @classmethod
    def ground(cls, n_dqd: int) -> "MeanFieldState":
        return cls(0j, np.zeros(n_dqd, complex), -np.ones(n_dqd))

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "MeanFieldState":
        n = (len(y) - 1) // 2
        return cls(complex(y[0]), np.array(y[1 : 1 + n]), np.array(y[1 + n :].real))

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.a], self.s_minus, np.asarray(self.s_z, complex)))

    def bloch_excess(self) -> float:
        """Largest violation of ``|s|^2 <= (1 - z^2) / 4`` (negative if inside)."""
        return float(np.max(np.abs(self.s_minus) ** 2 - 0.25 * (1.0 - self.s_z**2)))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, 1 + 2 N) complex, packed as in MeanFieldState

    @property
    def cavity(self) -> np.ndarray:
        return self.states[:, 0]

    def state(self, k: int) -> MeanFieldState:
        return MeanFieldState.from_vector(self.states[k])


@dataclass(frozen=True)
class HarmonicDecomposition:
    """``<a(t)> = sum_n coefficients[n] exp(-1j n beat t)`` in the pump frame.

    Harmonic ``n`` sits at lab frequency ``omega_p + n * beat``: the signal
    is ``n = -1`` and the idler ``n = +1``.
    """

    beat: float
    coefficients: dict[int, complex]
    omega_p: float = 0.0

    @property
    def pump(self) -> complex:
        return self.coefficients[0]

    @property
    def signal(self) -> complex:
        return self.coefficients[-1]

    @property
    def idler(self) -> complex:
        return self.coefficients[1]

    @property
    def n_harmonics(self) -> int:
        return max(self.coefficients)

    @property
    def converged(self) -> bool:
        mags = np.abs(list(self.coefficients.values()))
        edge = max(abs(self.coefficients[self.n_harmonics]), abs(self.coefficients[-self.n_harmonics]))
        return bool(edge < 0.05 * mags.max())

    def lab_frequency(self, n: int) -> float:
        return self.omega_p + n * self.beat


@njit(cache=True)
def _rhs(t, y, dc, kap, eps_p, eps_s, beat, dq, gt, g1, g2, out):
    n = dq.shape[0]
    a = y[0]
    da = -(1j * dc + 0.5 * kap) * a - 1j * (eps_p + eps_s * np.exp(1j * beat * t))
    for j in range(n):
        s = y[1 + j]
        z = y[1 + n + j].real
        da -= 1j * gt[j] * s
        out[1 + j] = -(1j * dq[j] + g2[j]) * s + 1j * gt[j] * z * a
        # conj(a) s - a conj(s) = 2i Im(conj(a) s)
        out[1 + n + j] = -g1[j] * (z + 1.0) - 4.0 * gt[j] * (np.conj(a) * s).imag
    out[0] = da


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array(
    [
        [0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]
)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@njit(cache=True)
def _integrate_samples(
    y0, t0, t_end, n_samples, h0, rtol, atol, max_steps,
    dc, kap, eps_p, eps_s, beat, dq, gt, g1, g2,
):
    """Integrate from t0 to t_end; record y at n_samples uniform points in [t0, t_end)."""
    dim = y0.shape[0]
    k = np.zeros((7, dim), dtype=np.complex128)
    samples = np.zeros((n_samples, dim), dtype=np.complex128)
    y = y0.copy()
    ytmp = np.zeros(dim, dtype=np.complex128)
    ynew = np.zeros(dim, dtype=np.complex128)
    dt_sample = (t_end - t0) / n_samples
    t = t0
    h = h0
    steps = 0
    status = 0
    _rhs(t, y, dc, kap, eps_p, eps_s, beat, dq, gt, g1, g2, k[0])
    samples[0, :] = y
    for m in range(1, n_samples + 1):
        t_target = t0 + m * dt_sample
        while t < t_target:
            clipped = False
            h_try = h
            if t + h_try >= t_target:
                h_try = t_target - t
                clipped = True
            for s in range(1, 7):
                for i in range(dim):
                    acc = 0j
                    for r in range(s):
                        acc += _A[s, r] * k[r, i]
                    ytmp[i] = y[i] + h_try * acc
                _rhs(t + _C[s] * h_try, ytmp, dc, kap, eps_p, eps_s, beat, dq, gt, g1, g2, k[s])
                if s == 6:
                    for i in range(dim):
                        ynew[i] = ytmp[i]
            # k[6] evaluated at ynew (FSAL)
            err = 0.0
            for i in range(dim):
                e = 0j
                for r in range(7):
                    e += _E[r] * k[r, i]
                e *= h_try
                sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
                err += (abs(e) / sc) ** 2
            err = np.sqrt(err / dim)
            steps += 1
            if not np.isfinite(err):
                status = 1
                return samples, y, t, h, steps, status
            if err <= 1.0:
                t = t_target if clipped else t + h_try
                for i in range(dim):
                    y[i] = ynew[i]
                    k[0, i] = k[6, i]
                fac = 0.9 * err ** -0.2 if err > 0 else 5.0
                fac = min(5.0, max(0.2, fac))
                if not clipped or fac < 1.0:
                    h = h_try * fac
            else:
                fac = max(0.2, 0.9 * err ** -0.2)
                h = h_try * fac
            if steps >= max_steps:
                status = 2
                return samples, y, t, h, steps, status
        if m < n_samples:
            samples[m, :] = y
    return samples, y, t, h, steps, status


def _model_args(model: RwaModel):
    return (
        float(model.delta_c),
        float(model.kappa_total),
        complex(model.pump_drive),
        complex(model.probe_drive),
        float(model.beat),
        np.ascontiguousarray(model.delta_q, dtype=np.float64),
        np.ascontiguousarray(model.g_t, dtype=np.float64),
        np.ascontiguousarray(model.gamma_1, dtype=np.float64),
        np.ascontiguousarray(model.gamma_2, dtype=np.float64),
    )


def derivative(state: MeanFieldState, t: float, model: RwaModel) -> MeanFieldState:
    """Time derivative of the mean-field state."""
    y = state.to_vector()
    out = np.zeros_like(y)
    _rhs(t, y, *_model_args(model), out)
    return MeanFieldState.from_vector(out)


def _fastest_rate(model: RwaModel) -> float:
    return (
        abs(model.delta_c)
        + model.kappa_total
        + float(np.max(np.abs(model.delta_q) + model.gamma_2 + model.g_t, initial=0.0))
        + abs(model.beat)
    )


def integrate_span(
    model: RwaModel,
    init: MeanFieldState,
    duration: float,
    n_samples: int = 64,
    tol_rel: float = 1e-9,
    tol_abs: float = 1e-12,
    t0: float = 0.0,
    max_steps: int = 50_000_000,
) -> Trajectory:
    """Integrate over ``[t0, t0 + duration)`` and return uniform samples."""
    y0 = init.to_vector()
    h0 = 0.05 / _fastest_rate(model)
    samples, y, t, h, steps, status = _integrate_samples(
        y0, t0, t0 + duration, n_samples, h0, tol_rel, tol_abs, max_steps, *_model_args(model)
    )
    if status == 1:
        raise IntegrationError(f"non-finite state near t = {t:.6g} s")
    if status == 2:
        raise IntegrationError(f"step limit reached at t = {t:.6g} s")
    times = t0 + np.arange(n_samples) * (duration / n_samples)
    return Trajectory(times, samples)


def integrate_periodic(
    model: RwaModel,
    init: MeanFieldState | None = None,
    tol_rel: float = 1e-9,
    settle_criterion: float = 1e-6,
    max_periods: int = 200,
    samples_per_period: int = 128,
    tol_abs: float = 1e-12,
) -> Trajectory:
    """Integrate whole beat periods until ``<a(t)>`` repeats; return the last one.

    Successive periods are compared by the relative L2 distance of the
    sampled cavity amplitude. The returned trajectory has times in
    ``[0, T)`` with ``T = 2 pi / |beat|`` (shifted by an integer number of
    periods, which leaves the probe phase unchanged).
    """
    if model.beat == 0:
        raise ValueError("beat frequency must be nonzero for periodic integration")
    if tol_rel <= 0 or settle_criterion <= 0:
        raise ValueError("tolerances must be positive")
    if samples_per_period < 64:
        raise ValueError("need at least 64 samples per period")
    period = 2 * np.pi / abs(model.beat)
    state = init if init is not None else MeanFieldState.ground(model.n_dqd)
    y0 = state.to_vector()
    args = _model_args(model)
    h = 0.05 / _fastest_rate(model)
    previous = None
    residual = np.inf
    for _ in range(max_periods):
        samples, y, t, h, steps, status = _integrate_samples(
            y0, 0.0, period, samples_per_period, h, tol_rel, tol_abs, 50_000_000, *args
        )
        if status:
            raise IntegrationError(f"integration failed (status {status}) within a beat period")
        a = samples[:, 0]
        if previous is not None:
            norm = max(np.linalg.norm(a), 1e-300)
            residual = np.linalg.norm(a - previous) / norm
            if residual < settle_criterion:
                times = np.arange(samples_per_period) * (period / samples_per_period)
                return Trajectory(times, samples)
        previous = a
        y0 = y
    raise IntegrationError(
        f"no periodic steady state after {max_periods} periods (last residual {residual:.3g})"
    )


def demodulate(traj: Trajectory, beat: float, n_harmonics: int = 3, omega_p: float = 0.0) -> HarmonicDecomposition:
    """Fourier coefficients ``a_n = (1/T) int a(t) exp(+i n beat t) dt`` over one period.

    Non-uniform samples are first resampled onto a uniform grid with a
    periodic cubic spline.
    """
    times = np.asarray(traj.times, dtype=float)
    values = np.asarray(traj.cavity)
    period = 2 * np.pi / abs(beat)
    n = len(times)
    if n < 4 * n_harmonics:
        raise ValueError(f"{n} samples cannot resolve {n_harmonics} harmonics")
    grid = times[0] + np.arange(n) * (period / n)
    if not np.allclose(times, grid, rtol=0, atol=1e-9 * period):
        t_closed = np.append(times, times[0] + period)
        v_closed = np.append(values, values[0])
        spline = CubicSpline(t_closed, v_closed, bc_type="periodic")
        values = spline(grid)
    coeffs = {}
    for k in range(-n_harmonics, n_harmonics + 1):
        coeffs[k] = complex(np.mean(values * np.exp(1j * k * beat * grid)))
    return HarmonicDecomposition(beat, coeffs, omega_p)


def steady_harmonics(
    model: RwaModel,
    init: MeanFieldState | None = None,
    n_harmonics: int = 3,
    **kwargs,
) -> tuple[HarmonicDecomposition, Trajectory]:
    """Periodic steady state and its harmonic content in one call."""
    traj = integrate_periodic(model, init, **kwargs)
    return demodulate(traj, model.beat, n_harmonics, model.omega_p), traj
