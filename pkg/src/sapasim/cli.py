"""Command-line entry point: ``sapasim <scenario> --config file.yaml --out result.csv``.

Every scenario writes one CSV: a ``# key: value`` header block (tool,
version, scenario, seed, config hash, the fully expanded config as JSON,
and scalar results) followed by column-labelled rows. Floats are written
with ``repr`` precision so reruns are byte-identical.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 engine
failure, 4 file I/O failure. Failures print a single JSON line prefixed
with ``error: `` on stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import fitting, metrics, scans
from . import model as m
from .config import SCENARIOS, ConfigError, ScenarioConfig, override, parse_config, validate_config

TOOL = "sapasim"
EXIT_OK, EXIT_CONFIG, EXIT_ENGINE, EXIT_IO = 0, 2, 3, 4


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class Table:
    columns: list[str]
    rows: list[tuple]
    results: dict = field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if np.isfinite(v) else ("nan" if np.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def render_csv(cfg: ScenarioConfig, table: Table) -> str:
    buf = io.StringIO()
    header = {
        "tool": TOOL,
        "version": tool_version(),
        "scenario": cfg.scenario,
        "seed": str(cfg.seed),
        "config_hash": cfg.config_hash(),
        "config": cfg.canonical_json(),
    }
    for k, v in header.items():
        buf.write(f"# {k}: {v}\n")
    for k, v in table.results.items():
        buf.write(f"# result.{k}: {_fmt(v)}\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def read_header(text: str) -> dict[str, str]:
    """``# key: value`` lines from the top of an output file."""
    out = {}
    for line in text.splitlines():
        if not line.startswith("# "):
            break
        key, _, value = line[2:].partition(": ")
        out[key] = value
    return out


def config_from_output(text: str) -> ScenarioConfig:
    """Recover the exact config that produced an output file."""
    return validate_config(json.loads(read_header(text)["config"]))


# scenario runners -----------------------------------------------------


def _pump_amplitude(cfg: ScenarioConfig, system: m.SystemParams, sapa_index: int = 0) -> tuple[float, dict]:
    """Configured pump amplitude, or the calibrated one when no power is given."""
    w_r = system.cavity.omega_r
    if cfg.pump.power_dbm is not None:
        amp = float(m.power_to_amplitude(cfg.pump.power_dbm, w_r))
        return amp, {"pump_power_dbm": cfg.pump.power_dbm, "pump_amplitude": amp}
    single = m.SystemParams(system.cavity, (system.dqds[sapa_index],))
    cal = _calibrate(cfg, single)
    return cal.pump_amplitude, {
        "pump_power_dbm": float(m.amplitude_to_power(cal.pump_amplitude, w_r)),
        "pump_amplitude": cal.pump_amplitude,
        "calibrated_gain_db": cal.gain_db,
    }


def _calibrate(cfg: ScenarioConfig, system: m.SystemParams) -> scans.Calibration:
    w_s = system.cavity.omega_r + m.hz(cfg.calibration.signal_offset_hz)
    probe = float(m.power_to_amplitude(cfg.probe.power_dbm, w_s))
    return scans.calibrate_pump(
        system, cfg.calibration.target_db, w_s, m.hz(cfg.pump.beat_hz), probe,
        tol_db=cfg.calibration.tol_db, **cfg.integrator_kwargs(),
    )


def _map_table(smap: scans.SpectrumMap, x_col: str, x_scale: float) -> Table:
    rows = []
    eps = smap.axis2.values
    for i, e in enumerate(eps):
        for j, x in enumerate(smap.axis1.values):
            t = smap.values[i, j]
            masked = bool(smap.mask[i, j])
            rows.append((x / x_scale, m.joule_to_uev(e), abs(t) / smap.a0 if not masked else np.nan,
                         t.real, t.imag, masked))
    return Table([x_col, "epsilon_uev", "a_over_a0", "t_re", "t_im", "masked"], rows,
                 {"a0": smap.a0, "masked_points": int(smap.mask.sum())})


def run_rabi_map(cfg: ScenarioConfig) -> Table:
    system = cfg.system_params()
    w = system.cavity.omega_r + m.hz(cfg.grids.probe_offset_hz.array())
    eps = m.uev_to_joule(cfg.grids.epsilon_uev.array())
    return _map_table(scans.rabi_map(system, w, eps, cfg.grids.dqd_index), "frequency_hz", m.TWO_PI)


def _probe_amp(cfg, omega):
    return float(m.power_to_amplitude(cfg.probe.power_dbm, omega))


def run_gain_map(cfg: ScenarioConfig) -> Table:
    system = cfg.system_params()
    amp, info = _pump_amplitude(cfg, system, cfg.grids.dqd_index)
    w = system.cavity.omega_r + m.hz(cfg.grids.probe_offset_hz.array())
    eps = m.uev_to_joule(cfg.grids.epsilon_uev.array())
    smap = scans.gain_map(system, amp, m.hz(cfg.pump.beat_hz), w, eps, _probe_amp(cfg, system.cavity.omega_r),
                          cfg.grids.dqd_index, **cfg.integrator_kwargs())
    table = _map_table(smap, "frequency_hz", m.TWO_PI)
    table.results.update(info)
    return table


def run_tune_map(cfg: ScenarioConfig) -> Table:
    system = cfg.system_params()
    amp, info = _pump_amplitude(cfg, system, cfg.grids.dqd_index)
    w_s = system.cavity.omega_r + m.hz(cfg.tune.signal_offset_hz)
    beats = m.hz(cfg.grids.beat_hz.array())
    eps = m.uev_to_joule(cfg.grids.epsilon_uev.array())
    smap = scans.tune_map(system, amp, w_s, beats, eps, _probe_amp(cfg, w_s), cfg.grids.dqd_index,
                          **cfg.integrator_kwargs())
    table = _map_table(smap, "beat_hz", m.TWO_PI)
    table.results.update(info)
    return table


def run_tones(cfg: ScenarioConfig) -> Table:
    system = cfg.system_params()
    amp, info = _pump_amplitude(cfg, system)
    w_s = system.cavity.omega_r + m.hz(cfg.probe.offset_hz)
    beat = m.hz(cfg.pump.beat_hz)
    probe = m.DriveTone(w_s, _probe_amp(cfg, w_s), cfg.probe.phase_rad)
    pump = m.DriveTone(w_s + beat, amp, cfg.pump.phase_rad)
    n = cfg.tones.n_harmonics
    on = scans.tone_spectrum(system, pump, probe, n)
    off = scans.tone_spectrum(system, None, probe, n, beat=beat)
    rows = [(int(k), f / m.TWO_PI, p_on, p_off)
            for k, f, p_on, p_off in zip(on.orders, on.frequencies, on.powers_db, off.powers_db)]
    info.update({
        "signal_gain_db": on.power_of(-1) - off.power_of(-1),
        "idler_frequency_hz": on.frequencies[list(on.orders).index(1)] / m.TWO_PI,
    })
    return Table(["order", "frequency_hz", "power_db_pump_on", "power_db_pump_off"], rows, info)


def run_readout(cfg: ScenarioConfig) -> Table:
    system = cfg.system_params()
    r = cfg.readout
    amp, info = _pump_amplitude(cfg, system, r.sapa_index)
    nc = cfg.noise
    chain = metrics.NoiseChain(nc.n_sapa, nc.n_hemt, 10 ** (nc.gain_db / 10))
    eps2 = m.uev_to_joule(cfg.grids.epsilon2_uev.array())
    res = scans.readout_sweep(
        system, r.sapa_index, amp, eps2, chain, m=nc.repeats, seed=cfg.seed, beat=m.hz(cfg.pump.beat_hz),
        on_offset=m.hz(r.on_offset_hz), off_offset=m.hz(r.off_offset_hz), probe_power_dbm=cfg.probe.power_dbm,
        bandwidth=nc.bandwidth_hz, decouple_sapa_off=r.decouple_sapa_off, **cfg.integrator_kwargs(),
    )
    rows = [
        (m.joule_to_uev(e), res.on_amplitudes[k], res.off_amplitudes[k], res.on_ensembles[k].mean,
         res.on_ensembles[k].std, res.off_ensembles[k].mean, res.off_ensembles[k].std)
        for k, e in enumerate(res.eps2)
    ]
    info.update({
        "snr_on": res.snr_on, "snr_off": res.snr_off, "snr_ratio": res.snr_on / res.snr_off,
        "contrast_on": res.contrast_on, "contrast_off": res.contrast_off,
        "noise_std_on": res.noise_std_on, "noise_std_off": res.noise_std_off,
    })
    return Table(["epsilon2_uev", "on_a_over_a0", "off_a_over_a0", "on_mean", "on_std", "off_mean", "off_std"],
                 rows, info)


def run_compress(cfg: ScenarioConfig) -> Table:
    system = cfg.system_params()
    amp, info = _pump_amplitude(cfg, system)
    w_s = system.cavity.omega_r + m.hz(cfg.probe.offset_hz)
    curve, p1 = scans.compression_sweep(system, amp, cfg.grids.probe_power_dbm.array(), w_s,
                                        m.hz(cfg.pump.beat_hz), **cfg.integrator_kwargs())
    info["p1db_dbm"] = p1
    return Table(["probe_power_dbm", "gain_db"], curve, info)


def run_calibrate(cfg: ScenarioConfig) -> Table:
    system = cfg.system_params()
    single = m.SystemParams(system.cavity, (system.dqds[cfg.grids.dqd_index],))
    cal = _calibrate(cfg, single)
    w_r = system.cavity.omega_r
    row = (cal.pump_amplitude, float(m.amplitude_to_power(cal.pump_amplitude, w_r)), cal.gain_db,
           cal.omega_s / m.TWO_PI, cal.evaluations)
    return Table(["pump_amplitude", "pump_power_dbm", "gain_db", "signal_frequency_hz", "evaluations"], [row])


def run_noise_budget(cfg: ScenarioConfig) -> Table:
    nc = cfg.noise
    chain = metrics.NoiseChain(nc.n_sapa, nc.n_hemt, 10 ** (nc.gain_db / 10))
    w_r = m.hz(cfg.system.cavity.frequency_hz)
    rise = chain.output_quanta(True) / chain.output_quanta(False)
    rows = [
        ("output_quanta_on", chain.output_quanta(True)),
        ("output_quanta_off", chain.output_quanta(False)),
        ("floor_rise", rise),
        ("snr_improvement", metrics.snr_improvement(chain)),
        ("effective_temperature_k", metrics.effective_temperature(nc.n_sapa, w_r)),
    ]
    if nc.floor_rise is not None:
        n_add = metrics.added_noise_from_floor_rise(nc.floor_rise, chain)
        rows.append(("n_sapa_from_floor_rise", n_add))
        rows.append(("effective_temperature_from_floor_rise_k", metrics.effective_temperature(max(n_add, 0.0), w_r)))
    return Table(["quantity", "value"], rows)


def run_fit(cfg: ScenarioConfig, base_dir: Path | None = None) -> Table:
    f = cfg.fit
    path = Path(f.input)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    data = fitting.read_spectrum_csv(path)
    if f.model == "lorentzian":
        init = None
        if f.init:
            init = [f.init.get("omega_r", 0.0) * m.TWO_PI, f.init.get("kappa", 0.0) * m.TWO_PI, f.init.get("scale", 1.0)]
        res = fitting.fit_lorentzian(data.omega, data.amplitude, init, method=f.method)
    else:
        if data.epsilon is None:
            raise ValueError("coupled fit needs an epsilon_uev column")
        init = _coupled_init(cfg, data)
        res = fitting.fit_coupled(data.omega, data.epsilon, data.amplitude, init, fixed=f.fixed, method=f.method)
    rows = []
    for k, name in enumerate(res.names):
        unit = res.units[k]
        scale = m.TWO_PI if unit == "rad/s" else (m.UEV if unit == "J" else 1.0)
        disp_unit = "Hz" if unit == "rad/s" else ("ueV" if unit == "J" else unit)
        rows.append((name, disp_unit, res.values[k] / scale, res.stderr[k] / scale, res.active_bounds[k]))
    results = {"converged": res.converged, "residual_rms": res.residual_rms, "iterations": res.iterations,
               "condition_number": res.condition_number,
               "fit_result": json.dumps(res.as_dict(), sort_keys=True, allow_nan=True)}
    return Table(["parameter", "unit", "value", "stderr", "at_bound"], rows, results)


def _coupled_init(cfg: ScenarioConfig, data: fitting.SpectrumData) -> dict:
    """Starting point: config system values, overridden by ``fit.init`` (Hz; ``t_c`` in ueV)."""
    system = cfg.system_params()
    d = system.dqds[cfg.grids.dqd_index]
    init = {"g_c": d.g_c, "gamma_2": d.gamma_2, "t_c": d.t_c, "omega_r": system.cavity.omega_r,
            "kappa": system.cavity.kappa_total, "scale": 1.0}
    for key, value in cfg.fit.init.items():
        if key not in init:
            raise ConfigError(f"unknown parameter {key!r}", "fit.init")
        if key == "t_c":
            init[key] = m.uev_to_joule(value)
        elif key == "scale":
            init[key] = value
        else:
            init[key] = m.hz(value)
    bad = set(cfg.fit.fixed) - set(fitting.COUPLED_NAMES)
    if bad:
        raise ConfigError(f"unknown parameter(s) {sorted(bad)}", "fit.fixed")
    return init


RUNNERS = {
    "rabi-map": run_rabi_map,
    "gain-map": run_gain_map,
    "tune-map": run_tune_map,
    "tones": run_tones,
    "readout": run_readout,
    "compress": run_compress,
    "calibrate-pump": run_calibrate,
    "noise-budget": run_noise_budget,
    "fit": run_fit,
}


def run(cfg: ScenarioConfig, out: str | Path | None = None, base_dir: Path | None = None) -> str:
    """Run a scenario and return the CSV text; write it to ``out`` when given."""
    runner = RUNNERS[cfg.scenario]
    table = runner(cfg, base_dir) if cfg.scenario == "fit" else runner(cfg)
    text = render_csv(cfg, table)
    target = out or cfg.output
    if target:
        if base_dir is not None and not Path(target).is_absolute() and out is None:
            target = base_dir / target
        Path(target).write_text(text, encoding="utf-8")
    return text


def _error(kind: str, message: str, **extra) -> None:
    payload = {"error": kind, "message": message, **extra}
    print("error: " + json.dumps(payload, sort_keys=True), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL, description="Cavity plus double-quantum-dot amplifier simulator.")
    parser.add_argument("--version", action="version", version=f"{TOOL} {tool_version()}")
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", help="YAML config file (defaults are used when omitted)")
        p.add_argument("--out", help="output CSV path (default: config 'output' or stdout)")
        p.add_argument("--seed", type=int, help="override the config seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            return EXIT_OK
        _error("usage", "invalid command-line arguments")
        return EXIT_CONFIG
    base_dir = None
    try:
        if args.config:
            path = Path(args.config)
            text = path.read_text(encoding="utf-8")
            base_dir = path.resolve().parent
        else:
            text = f"scenario: {args.scenario}\n"
    except OSError as exc:
        _error("io", str(exc), scenario=args.scenario)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if cfg.scenario != args.scenario:
            raise ConfigError(f"config is for {cfg.scenario!r}, command is {args.scenario!r}", "scenario")
        if args.seed is not None:
            cfg = override(cfg, seed=args.seed)
    except ConfigError as exc:
        _error("config", exc.detail, path=exc.path, scenario=args.scenario)
        return EXIT_CONFIG
    try:
        text = run(cfg, args.out, base_dir)
    except ConfigError as exc:
        _error("config", exc.detail, path=exc.path, scenario=cfg.scenario)
        return EXIT_CONFIG
    except OSError as exc:
        _error("io", str(exc), scenario=cfg.scenario)
        return EXIT_IO
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        _error("engine", str(exc), scenario=cfg.scenario)
        return EXIT_ENGINE
    if not (args.out or cfg.output):
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
