"""Synthetic data shared by the fitting and acceptance tests."""

import numpy as np

from sapasim import fitting, model, scans

TWO_PI = 2 * np.pi


def truth_system():
    """Reference device with the qubit linewidth gamma_2 = 2 pi x 100 MHz."""
    return model.reference_system(gamma_phi=TWO_PI * 50e6)


def truth_params(system):
    d = system.dqds[0]
    return {
        "g_c": d.g_c,
        "gamma_2": d.gamma_2,
        "t_c": d.t_c,
        "omega_r": system.cavity.omega_r,
        "kappa": system.cavity.kappa_total,
        "scale": 1.0,
    }


def rabi_data(system, n_freq=61, n_eps=61, noise=0.0, seed=0):
    """Normalized amplitude map on the default scan grid plus a Coulomb-blockade cut."""
    w = system.cavity.omega_r + TWO_PI * np.linspace(-40e6, 40e6, n_freq)
    eps = np.array([model.uev_to_joule(e) for e in np.linspace(-20, 20, n_eps)])
    amp = scans.rabi_map(system, w, eps).normalized
    far = scans.rabi_map(system.uncoupled(), w, [0.0]).normalized[0]
    rng = np.random.default_rng(seed)
    if noise:
        amp = amp + noise * rng.normal(size=amp.shape)
        far = far + noise * rng.normal(size=far.shape)
    return w, eps, amp, far


def pipeline_fit(w, eps, amp, far, method="gauss_newton"):
    """Lorentzian on the blockade cut fixes omega_r and kappa, then the coupled fit."""
    lor = fitting.fit_lorentzian(w, far)
    init = {
        "g_c": TWO_PI * 40e6,
        "gamma_2": TWO_PI * 60e6,
        "t_c": model.gap_hz_to_tc(5.2e9),
        "omega_r": lor["omega_r"],
        "kappa": lor["kappa"],
        "scale": 1.0,
    }
    return fitting.fit_coupled(w[None, :], eps[:, None], amp, init, fixed=("omega_r", "kappa"), method=method)


ACCEPTANCE: list[str] = []


def check(number, label: str, ok: bool, detail: str) -> None:
    """Record one acceptance line, print it, and assert."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {label} | {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line
