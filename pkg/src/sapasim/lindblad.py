"""Master-equation oracle on a truncated Hilbert space.

Used to validate the mean-field engine at small photon number and the
rotating-wave reduction at artificially scaled frequencies. Generators are
written as ``L(t) = L0 + sum_k exp(1j w_k t) L_k`` so that both the pump
frame (``w = +-beat``) and the lab frame (``w = +-omega_drive``) fit.
Time stepping uses SciPy's DOP853, which keeps this oracle independent of
the mean-field integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import hilbert
from .meanfield import HarmonicDecomposition, Trajectory, demodulate
from .model import LabModel, RwaModel


class CutoffError(RuntimeError):
    """Fock truncation is too small for the populated photon numbers."""


@dataclass
class LindbladModel:
    L0: np.ndarray
    modulated: list[tuple[float, np.ndarray]]
    dims: list[int]
    annihilation: np.ndarray
    sigma_minus: list[np.ndarray]
    sigma_z: list[np.ndarray]
    fock_limit: float = 1e-4

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def generator(self, t: float) -> np.ndarray:
        L = self.L0.copy()
        for w, Lk in self.modulated:
            L = L + np.exp(1j * w * t) * Lk
        return L

    def rhs(self, t: float, v: np.ndarray) -> np.ndarray:
        out = self.L0 @ v
        for w, Lk in self.modulated:
            out += np.exp(1j * w * t) * (Lk @ v)
        return out

    def ground_state(self) -> np.ndarray:
        """Vacuum cavity with every qubit in ``|g>``."""
        psi = np.zeros(self.dim, complex)
        # basis index of |0> x |g> x ... : qubit ground state is index 1
        idx = 0
        for d in self.dims[1:]:
            idx = idx * d + 1
        psi[idx] = 1.0
        return np.outer(psi, psi.conj())

    def top_fock_population(self, rho: np.ndarray) -> float:
        n_levels = self.dims[0]
        rest = self.dim // n_levels
        diag = np.real(np.diag(rho)).reshape(n_levels, rest)
        return float(diag[-1].sum())


def rwa_master_equation(model: RwaModel, n_max: int, gamma_phi: np.ndarray | None = None) -> LindbladModel:
    """Pump-frame master equation matching the mean-field model term by term."""
    n = model.n_dqd
    dims = [n_max + 1] + [2] * n
    a = hilbert.embed(hilbert.fock_annihilation(n_max), 0, dims)
    ad = a.conj().T
    H = model.delta_c * (ad @ a) + model.pump_drive * ad + np.conj(model.pump_drive) * a
    collapse = [(model.kappa_total, a)]
    sms, szs = [], []
    if gamma_phi is None:
        gamma_phi = model.gamma_2 - 0.5 * model.gamma_1
    for j in range(n):
        sm = hilbert.embed(hilbert.pauli("minus"), j + 1, dims)
        sz = hilbert.embed(hilbert.pauli("z"), j + 1, dims)
        H = H + 0.5 * model.delta_q[j] * sz + model.g_t[j] * (ad @ sm + a @ sm.conj().T)
        collapse.append((model.gamma_1[j], sm))
        collapse.append((0.5 * gamma_phi[j], sz))
        sms.append(sm)
        szs.append(sz)
    H = 0.5 * (H + H.conj().T)
    L0 = hilbert.lindblad_superoperator(H, collapse)
    modulated = []
    if model.probe_drive != 0:
        modulated.append((model.beat, -1j * hilbert.commutator_superoperator(model.probe_drive * ad)))
        modulated.append((-model.beat, -1j * hilbert.commutator_superoperator(np.conj(model.probe_drive) * a)))
    return LindbladModel(L0, modulated, dims, a, sms, szs)


def lab_master_equation(lab: LabModel) -> LindbladModel:
    """Lab-frame master equation; each cosine drive splits into two exponentials."""
    L0 = hilbert.lindblad_superoperator(lab.H0, lab.collapse_ops)
    modulated = []
    for c, w, phi, V in lab.drives:
        comm = -1j * hilbert.commutator_superoperator(V)
        modulated.append((w, 0.5 * c * np.exp(1j * phi) * comm))
        modulated.append((-w, 0.5 * c * np.exp(-1j * phi) * comm))
    szs = [sm.conj().T @ sm - sm @ sm.conj().T for sm in lab.sigma_minus]
    return LindbladModel(L0, modulated, lab.dims, lab.annihilation, lab.sigma_minus, szs)


def _check_state(me: LindbladModel, rho: np.ndarray, t: float) -> None:
    p_top = me.top_fock_population(rho)
    if p_top > me.fock_limit:
        raise CutoffError(
            f"top Fock level population {p_top:.2e} at t = {t:.3g} s exceeds "
            f"{me.fock_limit:.0e}; increase n_max"
        )


def evolve(
    rho0: np.ndarray,
    me: LindbladModel,
    t_final: float,
    tol: float = 1e-9,
    t0: float = 0.0,
    t_eval: np.ndarray | None = None,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Integrate the master equation from ``t0`` to ``t_final``.

    Returns the final density matrix, or ``(final, samples)`` when
    ``t_eval`` is given (samples has shape ``(len(t_eval), D, D)``).
    """
    v0 = hilbert.vec(rho0).astype(complex)
    sol = solve_ivp(
        me.rhs, (t0, t_final), v0, method="DOP853", rtol=tol, atol=tol * 1e-3,
        t_eval=t_eval,
    )
    if not sol.success:
        raise RuntimeError(f"master equation integration failed: {sol.message}")
    final = hilbert.unvec(sol.y[:, -1]) if t_eval is None else None
    if t_eval is None:
        _check_state(me, final, t_final)
        return final
    samples = np.array([hilbert.unvec(sol.y[:, k]) for k in range(sol.y.shape[1])])
    for t, rho in zip(sol.t, samples):
        _check_state(me, rho, t)
    final = samples[-1]
    return final, samples


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    return complex(np.trace(op @ rho))


def periodic_expectation(
    me: LindbladModel,
    beat: float,
    n_harmonics: int = 3,
    rho0: np.ndarray | None = None,
    samples_per_period: int = 64,
    settle_criterion: float = 1e-6,
    max_periods: int = 50,
    tol: float = 1e-9,
    observable: np.ndarray | None = None,
    omega_p: float = 0.0,
) -> tuple[HarmonicDecomposition, Trajectory]:
    """Harmonics of ``tr(rho(t) O)`` over one converged beat period.

    ``O`` defaults to the cavity annihilation operator. The returned
    trajectory stores ``(<O>, <sigma_-^j>..., <sigma_z^j>...)`` so it can be
    compared with a mean-field trajectory directly. ``rho0`` is taken at
    ``t = 0``; for a time-dependent generator it must come from evolving a
    whole number of periods.
    """
    if beat == 0:
        raise ValueError("beat frequency must be nonzero")
    obs = me.annihilation if observable is None else observable
    period = 2 * np.pi / abs(beat)
    rho = me.ground_state() if rho0 is None else rho0
    t_eval = np.arange(samples_per_period + 1) * (period / samples_per_period)
    ops = [obs] + me.sigma_minus + me.sigma_z
    rows = [hilbert.vec(op.T) for op in ops]
    previous = None
    residual = np.inf
    for _ in range(max_periods):
        rho, samples = evolve(rho, me, period, tol=tol, t_eval=t_eval)
        vals = np.array([[r @ hilbert.vec(s) for r in rows] for s in samples[:-1]])
        if previous is not None:
            residual = np.linalg.norm(vals[:, 0] - previous) / max(np.linalg.norm(vals[:, 0]), 1e-300)
            if residual < settle_criterion:
                traj = Trajectory(t_eval[:-1], vals)
                return demodulate(traj, beat, n_harmonics, omega_p), traj
        previous = vals[:, 0]
    raise RuntimeError(f"no periodic steady state after {max_periods} periods (residual {residual:.3g})")
