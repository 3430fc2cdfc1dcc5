import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sapasim import cli, config, model

MINIMAL = """
scenario: rabi-map
system:
  cavity: {frequency_hz: 5.198e9, kappa_in_hz: 7.0e6, kappa_out_hz: 7.0e6}
  dqds:
    - {gap_hz: 5.32e9, g_c_hz: 60.0e6, gamma_1_hz: 100.0e6}
"""


def read_rows(text):
    """Data rows of an output CSV as a structured array."""
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return np.genfromtxt(body, delimiter=",", names=True, dtype=None, encoding="utf-8")


def run_cli(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_minimal_config_echoes_cavity_frequency():
    cfg = config.parse_config(MINIMAL)
    assert cfg.system_params().cavity.omega_r / (2 * np.pi) == pytest.approx(5.198e9)
    text = cli.render_csv(cfg, cli.Table(["x"], []))
    echoed = json.loads(cli.read_header(text)["config"])
    assert echoed["system"]["cavity"]["frequency_hz"] == 5.198e9
    assert echoed["grids"]["epsilon_uev"]["num"] == 61  # defaults are injected


def test_unknown_key_rejected():
    with pytest.raises(config.ConfigError) as exc:
        config.parse_config("scenario: rabi-map\nsystem:\n  cavity: {kapa_in: 1.0}\n")
    assert exc.value.path == "system.cavity.kapa_in"
    assert "unknown key" in str(exc.value)


def test_negative_kappa_rejected_with_path():
    with pytest.raises(config.ConfigError) as exc:
        config.parse_config("scenario: rabi-map\nsystem:\n  cavity: {kappa_in_hz: -1.0}\n")
    assert exc.value.path == "system.cavity.kappa_in_hz"


def test_missing_scenario_and_bad_values():
    with pytest.raises(config.ConfigError, match="required key missing"):
        config.parse_config("seed: 3\n")
    with pytest.raises(config.ConfigError) as exc:
        config.parse_config("scenario: rabi-map\nsystem:\n  dqds:\n    - {g_c_hz: -5}\n")
    assert exc.value.path == "system.dqds[0].g_c_hz"
    with pytest.raises(config.ConfigError, match="beat"):
        config.parse_config("scenario: gain-map\npump: {beat_hz: 0}\n")
    with pytest.raises(config.ConfigError, match="mapping"):
        config.parse_config("- a\n- b\n")
    with pytest.raises(config.ConfigError, match="YAML"):
        config.parse_config("scenario: [\n")
    with pytest.raises(config.ConfigError, match="fit.input"):
        config.parse_config("scenario: fit\n")
    with pytest.raises(config.ConfigError, match="dqd_index"):
        config.parse_config("scenario: rabi-map\ngrids: {dqd_index: 1}\n")


def test_readout_defaults_to_two_dots():
    cfg = config.parse_config("scenario: readout\n")
    assert len(cfg.system.dqds) == 2
    with pytest.raises(config.ConfigError, match="two"):
        config.parse_config("scenario: readout\nsystem:\n  dqds: [{}]\n")


def test_grid_forms():
    g = config.GridConfig(values=(1.0, 2.0))
    np.testing.assert_array_equal(g.array(), [1.0, 2.0])
    with pytest.raises(ValueError):
        config.GridConfig(start=0.0, stop=1.0)
    with pytest.raises(ValueError):
        config.GridConfig(start=0.0, stop=1.0, num=3, values=(1.0,))


configs = st.fixed_dictionaries(
    {
        "scenario": st.sampled_from(config.SCENARIOS),
        "seed": st.integers(0, 2**64 - 1),
        "system": st.fixed_dictionaries(
            {
                "cavity": st.fixed_dictionaries(
                    {"frequency_hz": st.floats(1e9, 1e10), "kappa_in_hz": st.floats(1e5, 1e8)}
                ),
                "dqds": st.lists(
                    st.fixed_dictionaries({"gap_hz": st.floats(1e9, 1e10), "epsilon_uev": st.floats(-50, 50)}),
                    min_size=2, max_size=2,
                ),
            }
        ),
        "grids": st.fixed_dictionaries({"epsilon_uev": st.fixed_dictionaries(
            {"values": st.lists(st.floats(-100, 100), min_size=1, max_size=5)})}),
        "probe": st.fixed_dictionaries({"power_dbm": st.floats(-200, -100), "phase_rad": st.floats(-3, 3)}),
        "fit": st.fixed_dictionaries({"input": st.just("data.csv")}),
    }
)


@given(configs)
def test_config_round_trips_through_header(data):
    cfg = config.validate_config(data)
    text = cli.render_csv(cfg, cli.Table(["a"], [(1.0,)], {"x": 0.1}))
    back = cli.config_from_output(text)
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()
    header = cli.read_header(text)
    assert header["seed"] == str(cfg.seed)
    assert header["config_hash"] == cfg.config_hash()
    assert header["tool"] == "sapasim" and header["version"]


def test_rabi_map_far_column_normalized(tmp_path, capsys):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(
        MINIMAL + "grids:\n  epsilon_uev: {values: [-1000.0, 0.0, 1000.0]}\n"
        "  probe_offset_hz: {start: -40.0e6, stop: 40.0e6, num: 81}\n"
    )
    out = tmp_path / "r.csv"
    code, _, _ = run_cli(["rabi-map", "--config", str(cfg_path), "--out", str(out)], capsys)
    assert code == 0
    rows = read_rows(out.read_text())
    far = rows[rows["epsilon_uev"] == 1000.0]["a_over_a0"]
    assert far.max() == pytest.approx(1.0, abs=1e-6)
    center = rows[rows["epsilon_uev"] == 0.0]
    assert center["a_over_a0"][center["frequency_hz"] == 5.198e9][0] < 0.5


def test_byte_identical_reruns(tmp_path, capsys):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(
        "scenario: readout\nseed: 11\npump: {power_dbm: -118.1}\n"
        "grids:\n  epsilon2_uev: {values: [-10.0, 0.0, 10.0]}\n"
    )
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli(["readout", "--config", str(cfg_path), "--out", str(a)], capsys)[0] == 0
    assert run_cli(["readout", "--config", str(cfg_path), "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert run_cli(["readout", "--config", str(cfg_path), "--out", str(c), "--seed", "12"], capsys)[0] == 0
    assert c.read_bytes() != a.read_bytes()
    assert cli.read_header(c.read_text())["seed"] == "12"


def test_calibrate_pump_scenario(capsys):
    code, out, _ = run_cli(["calibrate-pump"], capsys)
    assert code == 0
    rows = read_rows(out)
    assert float(rows["gain_db"]) == pytest.approx(11.28, abs=0.05)
    assert float(rows["pump_amplitude"]) > 0


def test_noise_budget_scenario(capsys):
    code, out, _ = run_cli(["noise-budget"], capsys)
    assert code == 0
    values = dict(line.split(",") for line in out.splitlines() if not line.startswith("#"))
    assert float(values["snr_improvement"]) == pytest.approx(2.11, abs=0.01)
    assert float(values["output_quanta_on"]) == pytest.approx(30.1, abs=0.05)


def test_fit_scenario_from_csv(tmp_path, capsys):
    from helpers import rabi_data, truth_system

    w, eps, amp, _ = rabi_data(truth_system(), n_freq=31, n_eps=11)
    lines = ["frequency_hz,amplitude,epsilon_uev"]
    for i, e in enumerate(eps):
        for j, f in enumerate(w):
            lines.append(f"{float(f / (2 * np.pi))!r},{float(amp[i, j])!r},{float(model.joule_to_uev(e))!r}")
    (tmp_path / "data.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "fit.yaml").write_text(
        "scenario: fit\nfit:\n  input: data.csv\n  init: {g_c: 40.0e6, gamma_2: 60.0e6, t_c: 10.0}\n"
    )
    out = tmp_path / "fit.csv"
    code, _, err = run_cli(["fit", "--config", str(tmp_path / "fit.yaml"), "--out", str(out)], capsys)
    assert code == 0, err
    text = out.read_text()
    result = json.loads(cli.read_header(text)["result.fit_result"])
    values = {p["name"]: p["value"] for p in result["parameters"]}
    assert values["g_c"] / (2 * np.pi) == pytest.approx(60e6, rel=1e-6)
    assert values["gamma_2"] / (2 * np.pi) == pytest.approx(100e6, rel=1e-6)


def test_exit_codes(tmp_path, capsys):
    code, _, err = run_cli(["rabi-map", "--config", str(tmp_path / "missing.yaml")], capsys)
    assert code == cli.EXIT_IO and err.startswith("error: ")
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: rabi-map\nsystem:\n  cavity: {kapa_in: 1}\n")
    code, _, err = run_cli(["rabi-map", "--config", str(bad)], capsys)
    assert code == cli.EXIT_CONFIG
    payload = json.loads(err.removeprefix("error: "))
    assert payload["path"] == "system.cavity.kapa_in" and payload["error"] == "config"
    code, _, err = run_cli(["gain-map", "--config", str(bad)], capsys)
    assert code == cli.EXIT_CONFIG
    code, _, _ = run_cli(["no-such-scenario"], capsys)
    assert code == cli.EXIT_CONFIG
    grid = tmp_path / "g.yaml"
    grid.write_text("scenario: compress\npump: {power_dbm: -118.1}\ngrids:\n  probe_power_dbm: {values: [-180, -175]}\n")
    code, _, err = run_cli(["compress", "--config", str(grid)], capsys)
    assert code == cli.EXIT_ENGINE
    assert "extend grid" in json.loads(err.removeprefix("error: "))["message"]
    fitcfg = tmp_path / "f.yaml"
    fitcfg.write_text("scenario: fit\nfit: {input: nothere.csv}\n")
    assert run_cli(["fit", "--config", str(fitcfg)], capsys)[0] == cli.EXIT_IO
