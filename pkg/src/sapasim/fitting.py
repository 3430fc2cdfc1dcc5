"""Least-squares extraction of cavity and dot parameters from amplitude spectra.

Fits target the transmission amplitude ``|t|`` (not the complex
response). The usual order is :func:`fit_lorentzian` on a far-detuned cut
to fix ``omega_r`` and ``kappa``, then :func:`fit_coupled` for the dot
parameters with those held fixed.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.optimize import minimize as _scipy_minimize

from .model import HBAR, UEV, TWO_PI

FD_STEP = 1e-6
CONDITION_LIMIT = 1e4
SENSITIVITY_FLOOR = 1e-4


class FitConditioningWarning(UserWarning):
    """Parameter combination is poorly constrained by the data."""


@dataclass
class FitResult:
    names: list[str]
    values: np.ndarray
    stderr: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    method: str
    active_bounds: list[bool] = field(default_factory=list)
    condition_number: float = float("nan")
    sensitivity: np.ndarray | None = None  # rms residual change per 100% parameter change
    warnings: list[str] = field(default_factory=list)
    units: list[str] = field(default_factory=list)
    message: str = ""

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_rms": self.residual_rms,
            "condition_number": self.condition_number,
            "parameters": [
                {
                    "name": n,
                    "unit": self.units[k] if self.units else "",
                    "value": float(self.values[k]),
                    "stderr": float(self.stderr[k]),
                    "at_bound": bool(self.active_bounds[k]) if self.active_bounds else False,
                }
                for k, n in enumerate(self.names)
            ],
            "warnings": list(self.warnings),
            "message": self.message,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _as_bounds(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    if lo.shape != (n,) or hi.shape != (n,):
        raise ValueError("bounds must be a pair of length-n sequences")
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return lo, hi


def _guarded(objective):
    def wrapped(x):
        val = np.asarray(objective(x), dtype=float)
        if not np.all(np.isfinite(val)):
            raise FloatingPointError(f"objective is not finite at parameters {np.array2string(np.asarray(x))}")
        return val

    return wrapped


def _active(x, lo, hi) -> list[bool]:
    tol = 1e-8 * np.maximum(1.0, np.abs(x))
    return [bool((np.isfinite(l) and xi - l <= t) or (np.isfinite(h) and h - xi <= t))
            for xi, l, h, t in zip(x, lo, hi, tol)]


def minimize(
    objective: Callable[[np.ndarray], np.ndarray | float],
    init: Sequence[float],
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    method: str = "simplex",
    max_iter: int = 500,
    tol: float = 1e-12,
    names: Sequence[str] | None = None,
) -> FitResult:
    """Minimize a scalar objective or a sum of squared residuals.

    Parameters
    ----------
    objective
        Returns either a residual vector or a scalar. ``gauss_newton``
        needs residuals; ``simplex`` minimizes the sum of squares of a
        vector (or the scalar itself).
    method
        ``simplex``: bounded Nelder-Mead restarted from its own optimum
        until the restart stops improving. ``gauss_newton``: damped
        (trust-region) least squares with a forward-difference Jacobian
        of relative step 1e-6.

    Raises
    ------
    FloatingPointError
        If the objective is NaN or infinite, naming the parameter vector.
    """
    x0 = np.asarray(init, dtype=float)
    n = x0.size
    names = list(names) if names is not None else [f"x{k}" for k in range(n)]
    lo, hi = _as_bounds(bounds, n)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("initial point lies outside the bounds")
    fun = _guarded(objective)
    first = fun(x0)

    if method == "gauss_newton":
        if first.ndim == 0:
            raise ValueError("gauss_newton needs a residual-vector objective")
        sol = least_squares(
            fun, x0, bounds=(lo, hi), method="trf", diff_step=FD_STEP, x_scale="jac",
            xtol=tol, ftol=tol, gtol=tol, max_nfev=max_iter * (n + 1),
        )
        x = sol.x
        converged = bool(sol.status > 0)
        iterations = int(sol.nfev)
        message = str(sol.message)
    elif method == "simplex":
        def scalar(x):
            v = fun(x)
            return float(v) if v.ndim == 0 else float(v @ v)

        sb = None if bounds is None else list(zip(lo, hi))
        x, best = x0, scalar(x0)
        iterations, converged, message = 0, False, ""
        for _ in range(10):
            sol = _scipy_minimize(
                scalar, x, method="Nelder-Mead", bounds=sb,
                options={"xatol": tol, "fatol": tol**2, "maxiter": max_iter * n, "adaptive": n > 2},
            )
            iterations += int(sol.nit)
            message = str(sol.message)
            improved = sol.fun < best
            if improved:
                gain = best - sol.fun
                x, best = sol.x, float(sol.fun)
            converged = bool(sol.success)
            if not improved or gain <= tol * max(abs(best), tol):
                break
    else:
        raise ValueError(f"unknown method {method!r}")

    res = fun(x)
    resid = res if res.ndim else np.atleast_1d(np.sqrt(max(float(res), 0.0)))
    if res.ndim:
        stderr, cond, sens = _standard_errors(fun, x, resid)
    else:
        stderr, cond, sens = np.full(n, np.nan), np.nan, None
    return FitResult(
        names=names,
        values=np.asarray(x, dtype=float),
        stderr=stderr,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        iterations=iterations,
        converged=converged,
        method=method,
        active_bounds=_active(x, lo, hi),
        condition_number=cond,
        sensitivity=sens,
        message=message,
    )


def _jacobian(fun, x, f0):
    J = np.empty((f0.size, x.size))
    for k in range(x.size):
        h = FD_STEP * max(abs(x[k]), 1e-12)
        xk = x.copy()
        xk[k] += h
        J[:, k] = (fun(xk) - f0) / h
    return J


def _standard_errors(fun, x, resid):
    """Standard errors, condition number of the column-normalized normal
    matrix, and the rms residual change per unit relative parameter change."""
    x = np.asarray(x, dtype=float)
    J = _jacobian(fun, x, resid)
    dof = max(resid.size - x.size, 1)
    s2 = float(resid @ resid) / dof
    norms = np.linalg.norm(J, axis=0)
    sens = norms * np.abs(x) / np.sqrt(resid.size)
    if np.any(norms == 0):
        return np.full(x.size, np.inf), np.inf, sens
    Jn = J / norms
    sv = np.linalg.svd(Jn, compute_uv=False)
    cond = float((sv[0] / sv[-1]) ** 2) if sv[-1] > 0 else np.inf
    try:
        cov = np.linalg.inv(Jn.T @ Jn) / np.outer(norms, norms)
        err = np.sqrt(np.abs(np.diag(cov)) * s2)
    except np.linalg.LinAlgError:
        err = np.full(x.size, np.inf)
    return err, cond, sens


def lorentzian_amplitude(omega, omega_r: float, kappa: float, scale: float):
    """``s (kappa/2) / sqrt((omega_r - omega)^2 + (kappa/2)^2)``."""
    hw = 0.5 * kappa
    return scale * hw / np.sqrt((omega_r - np.asarray(omega)) ** 2 + hw**2)


_LORENTZ_NAMES = ["omega_r", "kappa", "scale"]
_LORENTZ_UNITS = ["rad/s", "rad/s", "1"]


def _lorentz_guess(omega, amp):
    k = int(np.argmax(amp))
    half = amp[k] / np.sqrt(2.0)
    above = omega[amp >= half]
    width = max(float(above.max() - above.min()), float(np.min(np.diff(np.sort(omega)))))
    return [float(omega[k]), width, float(amp[k])]


def _finish(result: FitResult, names, units, scale_vec) -> FitResult:
    """Undo parameter scaling and attach identifiability warnings."""
    result.names = list(names)
    result.units = list(units)
    result.values = result.values * scale_vec
    result.stderr = result.stderr * scale_vec
    notes = []
    for k, n in enumerate(names):
        rel = result.stderr[k] / max(abs(result.values[k]), 1e-300)
        if not np.isfinite(rel) or rel > 0.1:
            notes.append(f"{n} poorly determined (relative standard error {rel:.2g})")
        if result.sensitivity is not None and result.sensitivity[k] < SENSITIVITY_FLOOR:
            notes.append(f"{n} barely affects the model (sensitivity {result.sensitivity[k]:.2g})")
    if result.condition_number > CONDITION_LIMIT:
        notes.append(f"ill-conditioned fit (condition number {result.condition_number:.3g}); parameters are degenerate")
    _warn(result, notes)
    return result


def _warn(result: FitResult, notes: list[str]) -> None:
    for msg in notes:
        result.warnings.append(msg)
        warnings.warn(msg, FitConditioningWarning, stacklevel=4)


def fit_lorentzian(
    omega,
    amplitude,
    init: Sequence[float] | None = None,
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    method: str = "gauss_newton",
    max_iter: int = 500,
) -> FitResult:
    """Fit ``|t| = s (kappa/2) / sqrt((omega_r - omega)^2 + (kappa/2)^2)``.

    Parameters are ``(omega_r, kappa, scale)``; frequencies in rad/s.
    A span narrower than two linewidths is allowed but the result will
    usually carry a poorly-determined warning.
    """
    omega = np.asarray(omega, dtype=float)
    amp = np.asarray(amplitude, dtype=float)
    if omega.shape != amp.shape or omega.size < 5:
        raise ValueError("need at least 5 (omega, amplitude) points")
    p0 = np.asarray(init if init is not None else _lorentz_guess(omega, amp), dtype=float)
    s = np.where(p0 != 0, np.abs(p0), 1.0)
    if bounds is None:
        lo = np.array([omega.min() - (omega.max() - omega.min()), 0.0, 0.0])
        hi = np.array([omega.max() + (omega.max() - omega.min()), np.inf, np.inf])
    else:
        lo, hi = _as_bounds(bounds, 3)

    def resid(p):
        x = p * s
        return lorentzian_amplitude(omega, *x) - amp

    res = _finish(minimize(resid, p0 / s, (lo / s, hi / s), method, max_iter), _LORENTZ_NAMES, _LORENTZ_UNITS, s)
    span = float(omega.max() - omega.min())
    if span < 2 * res["kappa"]:
        _warn(res, [f"data span covers {span / res['kappa']:.2g} linewidths; width and scale are poorly constrained"])
    return res


COUPLED_NAMES = ("g_c", "gamma_2", "t_c", "omega_r", "kappa", "scale")
COUPLED_UNITS = ("rad/s", "rad/s", "J", "rad/s", "rad/s", "1")


def coupled_amplitude(omega, epsilon, g_c, gamma_2, t_c, omega_r, kappa, scale):
    """Normalized single-dot transmission amplitude with symmetric ports.

    Equals 1 at ``omega = omega_r`` when ``g_c = 0`` and ``scale = 1``.
    """
    omega = np.asarray(omega, dtype=float)
    eps = np.asarray(epsilon, dtype=float)
    w_energy = np.sqrt(eps**2 + 4 * t_c**2)
    omega_q = w_energy / HBAR
    g_t = g_c * 2 * t_c / w_energy
    den = 1j * (omega_r - omega) + 0.5 * kappa + g_t**2 / (1j * (omega_q - omega) + gamma_2)
    return scale * np.abs(0.5 * kappa / den)


def fit_coupled(
    omega,
    epsilon,
    amplitude,
    init: Mapping[str, float],
    bounds: Mapping[str, tuple[float, float]] | None = None,
    fixed: Sequence[str] = (),
    method: str = "gauss_newton",
    max_iter: int = 500,
) -> FitResult:
    """Fit the linear single-dot response to amplitude data.

    ``omega``, ``epsilon`` (J) and ``amplitude`` are flat arrays of equal
    length or broadcastable grids. ``init`` must give every parameter in
    :data:`COUPLED_NAMES`; names in ``fixed`` are held at their ``init``
    value and omitted from the result.
    """
    omega, epsilon, amp = (np.ravel(a).astype(float) for a in np.broadcast_arrays(omega, epsilon, amplitude))
    missing = [n for n in COUPLED_NAMES if n not in init]
    if missing:
        raise ValueError(f"init is missing {missing}")
    unknown = set(fixed) - set(COUPLED_NAMES)
    if unknown:
        raise ValueError(f"unknown fixed parameters {sorted(unknown)}")
    free = [n for n in COUPLED_NAMES if n not in fixed]
    if not free:
        raise ValueError("no free parameters")
    if len(free) == 1 and free[0] == "scale":
        return _fit_scale_only(omega, epsilon, amp, init)
    full = np.array([init[n] for n in COUPLED_NAMES], dtype=float)
    idx = [COUPLED_NAMES.index(n) for n in free]
    p0 = full[idx]
    s = np.where(p0 != 0, np.abs(p0), 1.0)
    bounds = dict(bounds or {})
    lo = np.array([bounds.get(n, (0.0, np.inf))[0] for n in free]) / s
    hi = np.array([bounds.get(n, (0.0, np.inf))[1] for n in free]) / s

    def resid(p):
        x = full.copy()
        x[idx] = p * s
        return coupled_amplitude(omega, epsilon, *x) - amp

    res = minimize(resid, p0 / s, (lo, hi), method, max_iter)
    return _finish(res, free, [COUPLED_UNITS[k] for k in idx], s)


def _fit_scale_only(omega, epsilon, amp, init) -> FitResult:
    """Closed-form linear least squares when only the scale is free."""
    x = dict(init)
    x["scale"] = 1.0
    basis = coupled_amplitude(omega, epsilon, *[x[n] for n in COUPLED_NAMES])
    scale = float(basis @ amp / (basis @ basis))
    r = scale * basis - amp
    dof = max(amp.size - 1, 1)
    err = np.sqrt((r @ r) / dof / (basis @ basis))
    return FitResult(["scale"], np.array([scale]), np.array([err]), float(np.sqrt(np.mean(r**2))),
                     1, True, "linear", [False], 1.0, [], ["1"], "closed form")


@dataclass
class SpectrumData:
    omega: np.ndarray  # rad/s
    amplitude: np.ndarray
    epsilon: np.ndarray | None = None  # J


def read_spectrum_csv(path: str | Path) -> SpectrumData:
    """Read ``frequency_hz, amplitude[, epsilon_uev]`` columns; ``#`` lines are skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [line for line in fh if line.strip() and not line.lstrip().startswith("#")]
    reader = csv.DictReader(rows)
    cols = reader.fieldnames or []
    for need in ("frequency_hz", "amplitude"):
        if need not in cols:
            raise ValueError(f"{path}: missing column {need!r} (have {cols})")
    f, a, e = [], [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            f.append(float(row["frequency_hz"]))
            a.append(float(row["amplitude"]))
            if "epsilon_uev" in cols:
                e.append(float(row["epsilon_uev"]))
        except (TypeError, ValueError):
            raise ValueError(f"{path}: bad number on data row {lineno}") from None
    if not f:
        raise ValueError(f"{path}: no data rows")
    eps = np.asarray(e) * UEV if e else None
    return SpectrumData(TWO_PI * np.asarray(f), np.asarray(a), eps)
