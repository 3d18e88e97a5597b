import json

import pytest

from risradar import cli
from risradar.config import ConfigError, parse_config, parse_quantity
from risradar.experiments import read_csv
from risradar.geometry import ScenarioConfig


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParseConfig:
    def test_empty_file_gives_reference_scenario(self, tmp_path):
        scenario, sweep = parse_config(write(tmp_path, ""))
        assert scenario == ScenarioConfig()
        assert scenario.wavelength == pytest.approx(0.0107)
        assert (scenario.ris_nx, scenario.ris_ny) == (21, 21)
        assert scenario.n_symbols == 1120 and scenario.subcarrier_spacing == 120e3

    def test_power_in_dbm(self, tmp_path):
        scenario, _ = parse_config(write(tmp_path, "scenario:\n  tx_power: 30 dBm\n"))
        assert scenario.tx_power == pytest.approx(1.0)

    def test_units(self, tmp_path):
        text = """
scenario:
  carrier_frequency: 28 GHz
  subcarrier_spacing: 60 kHz
  bs_gain: 10 dB
  rcs: 1 m2
  p_tgt: 1, 2, 3 m
  v_tgt: [36 km/h, 0 mps, 5 mps]
  az_range: -60, 60 deg
  cp_duration: 1 us
  noise_psd: -170 dBm/Hz
  ris_elements: 9 x 11
  ris_spacing: 0.5 wavelength
sweep:
  powers: [20 dBm, 0 dBW]
  m_over_l: [2, 4]
  desk: true
  trials: 50
  estimators: both
"""
        s, w = parse_config(write(tmp_path, text))
        assert s.wavelength == pytest.approx(299792458.0 / 28e9)
        assert s.subcarrier_spacing == 60e3 and s.bs_gain == pytest.approx(10.0)
        assert s.p_tgt == (1.0, 2.0, 3.0) and s.v_tgt == pytest.approx((10.0, 0.0, 5.0))
        assert s.az_range == (-60.0, 60.0) and s.cp_duration == pytest.approx(1e-6)
        assert (s.ris_nx, s.ris_ny, s.ris_spacing_wavelengths) == (9, 11, 0.5)
        assert w.powers_dbm == (20.0, 30.0) and w.m_over_l == (2, 4)
        assert (w.n_subcarriers, w.n_symbols, w.trials) == (256, 280, 50)
        assert w.estimators == ("joint", "di")

    def test_noise_psd(self):
        assert parse_quantity("-174 dBm/Hz", "psd") == pytest.approx(10 ** (-17.4) * 1e-3)

    @pytest.mark.parametrize("text, match", [
        ("scenario:\n  colour: red\n", "unknown scenario key"),
        ("sweep:\n  trails: 3\n", "unknown sweep key"),
        ("extra: 1\n", "unknown top-level"),
        ("scenario:\n  tx_power: 30\n", "missing unit"),
        ("scenario:\n  subcarrier_spacing: 120\n", "missing unit"),
        ("scenario:\n  tx_power: 30 furlongs\n", "not a power unit"),
        ("scenario:\n  n_symbols: 1000\n  m_over_l: 7\n", "divisible"),
        ("scenario:\n  n_symbols: 1000\nsweep:\n  m_over_l: [2, 7]\n", "divisible"),
        ("scenario:\n  p_tgt: 1, 2 m\n", "expected 3 values"),
        ("scenario: [1, 2\n", "malformed"),
    ])
    def test_errors(self, tmp_path, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(write(tmp_path, text))


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCommands:
    def test_crb_defaults(self, tmp_path, capsys):
        code, out, _ = run(["crb", "--out", str(tmp_path / "o")], capsys)
        assert code == 0 and out.count("\n") == 1 and out.startswith("crb:")
        rows = read_csv(tmp_path / "o" / "crb.csv")
        assert [r["power_dbm"] for r in rows] == [15 + 2.5 * k for k in range(9)]
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["files"] == ["crb.csv"] and manifest["master_seed"] == 0

    def test_simulate_deterministic(self, tmp_path, capsys):
        for d in ("a", "b"):
            assert run(["simulate", "--seed", "7", "--desk", "--out", str(tmp_path / d)], capsys)[0] == 0
        for name in ("observation.bin", "observation.bin.json", "trial.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        trial = json.loads((tmp_path / "a" / "trial.json").read_text())
        assert trial["seed"] == [7, 0, 0] and set(trial["estimates"]) == {"joint", "di"}

    def test_objective_cut_two_curves(self, tmp_path, capsys):
        code, out, _ = run(["objective-cut", "--ml", "2", "--ml", "5", "--desk", "--which", "4d",
                            "--span", "5", "--step", "0.5", "--out", str(tmp_path)], capsys)
        assert code == 0
        rows = read_csv(tmp_path / "objective_cut.csv")
        assert {r["m_over_l"] for r in rows} == {2.0, 5.0}
        for ml in (2.0, 5.0):
            assert max(r["value"] for r in rows if r["m_over_l"] == ml) == pytest.approx(1.0)

    def test_manifest_rerun_is_bit_exact(self, tmp_path, capsys):
        args = ["rmse-sweep", "--desk", "--powers", "35", "--ml", "5", "--trials", "2", "--estimator", "joint"]
        assert run(args + ["--out", str(tmp_path / "a")], capsys)[0] == 0
        code, *_ = run(["rmse-sweep", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")], capsys)
        assert code == 0
        assert (tmp_path / "a" / "rmse.csv").read_bytes() == (tmp_path / "b" / "rmse.csv").read_bytes()
        rows = read_csv(tmp_path / "a" / "rmse.csv")
        assert rows[0]["m_over_l"] == 5 and rows[0]["trials"] == 2

    def test_flags_override_config(self, tmp_path, capsys):
        cfg = write(tmp_path, "sweep:\n  powers: 20, 25 dBm\n  master_seed: 3\n")
        run(["crb", "--config", str(cfg), "--powers", "30", "--out", str(tmp_path / "o")], capsys)
        assert [r["power_dbm"] for r in read_csv(tmp_path / "o" / "crb.csv")] == [30.0]
        run(["crb", "--config", str(cfg), "--out", str(tmp_path / "p")], capsys)
        assert [r["power_dbm"] for r in read_csv(tmp_path / "p" / "crb.csv")] == [20.0, 25.0]

    def test_calibrate(self, tmp_path, capsys):
        code, out, _ = run(["calibrate", "--desk", "--ml", "5", "--estimator", "joint", "--noise-trials", "10",
                            "--p-fa", "0.1", "--out", str(tmp_path)], capsys)
        assert code == 0
        (row,) = read_csv(tmp_path / "thresholds.csv")
        assert row["gamma"] > 0 and row["noise_trials"] == 10

    def test_error_exit_and_cleanup(self, tmp_path, capsys):
        out = tmp_path / "o"
        code, _, err = run(["detect-sweep", "--desk", "--noise-trials", "5", "--out", str(out)], capsys)
        assert code != 0 and "noise-only" in err
        assert not out.exists()

    def test_bad_config_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, "scenario:\n  tx_power: 30\n")
        code, _, err = run(["crb", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 1 and "missing unit" in err
