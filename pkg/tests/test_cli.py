import csv
import json
import os

import numpy as np
import pytest

from rofcascade.cli import main, parse_lambda
from rofcascade.estimators import NS
from rofcascade.fiber_channel import (
    FrequencyGrid,
    SyntheticFiberParams,
    read_channel_csv,
    synth_table,
    write_measurement_csv,
)
from rofcascade.signal_model import WirelessFrontEnd, apply_front_end, generate_pilot, read_frame_csv


def run(tmp_path, *args, out="out"):
    return main(["--out-dir", str(tmp_path / out), *args])


@pytest.fixture
def channel(tmp_path):
    assert run(tmp_path, "channel", "synth", out="ch") == 0
    return tmp_path / "ch" / "channel.csv"


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestChannel:
    def test_synth_min_magnitude(self, tmp_path):
        assert run(tmp_path, "channel", "synth", "--atten-high-db", "2.4", "--atten-low-db", "1.0") == 0
        H = read_channel_csv(tmp_path / "out" / "channel.csv")
        assert H.magnitude.min() == pytest.approx(10 ** (-2.4 / 20), rel=1e-12)
        m = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert m["command"] == "channel" and m["config"]["atten_high_db"] == 2.4
        assert m["outputs"] == [str(tmp_path / "out" / "channel.csv")]

    def test_ingest_constant_group_delay(self, tmp_path):
        grid = FrequencyGrid()
        table = synth_table(SyntheticFiberParams(0.0, 0.0, 5e-9, 0.0), grid)
        write_measurement_csv(table, tmp_path / "m.csv")
        assert run(tmp_path, "channel", "ingest", "--measurement", str(tmp_path / "m.csv")) == 0
        H = read_channel_csv(tmp_path / "out" / "channel.csv")
        assert np.allclose(H.H, np.exp(-2j * np.pi * 5e-9 * (grid.f - grid.f[0])), atol=1e-12)
        m = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert list(m["inputs"].values())[0] == __import__("hashlib").sha256(
            (tmp_path / "m.csv").read_bytes()).hexdigest()

    def test_ingest_round_trip_bit_stable(self, tmp_path):
        table = synth_table(SyntheticFiberParams(), FrequencyGrid(), ripple_gd=1e-10, seed=2)
        write_measurement_csv(table, tmp_path / "m.csv")
        for out in ("a", "b"):
            assert run(tmp_path, "channel", "ingest", "--measurement", str(tmp_path / "m.csv"), out=out) == 0
        assert (tmp_path / "a" / "channel.csv").read_bytes() == (tmp_path / "b" / "channel.csv").read_bytes()

    def test_malformed_measurement(self, tmp_path, capsys):
        (tmp_path / "m.csv").write_text("freq_hz,mag_db\n1,2\n")
        assert run(tmp_path, "channel", "ingest", "--measurement", str(tmp_path / "m.csv")) != 0
        assert "error" in capsys.readouterr().err
        assert not (tmp_path / "out" / "channel.csv").exists()
        assert not (tmp_path / "out" / "manifest.json").exists()

    def test_range_mismatch(self, tmp_path, capsys):
        table = synth_table(SyntheticFiberParams(), FrequencyGrid(f0=100e9))
        write_measurement_csv(table, tmp_path / "m.csv")
        assert run(tmp_path, "channel", "ingest", "--measurement", str(tmp_path / "m.csv")) == 1
        assert "covers" in capsys.readouterr().err


class TestSimulate:
    def test_noiseless_repeatable_and_closed_form(self, tmp_path, channel):
        args = ["simulate", "--channel", str(channel), "--r", "3", "--amplitude", "1.5",
                "--phase-rad", "0.3", "--tau-ns", "4", "--lambda", "lambda0", "--noise-var", "0"]
        assert run(tmp_path, "--seed", "5", *args, out="a") == 0
        assert run(tmp_path, "--seed", "5", *args, out="b") == 0
        a = (tmp_path / "a" / "capture.csv").read_bytes()
        assert a == (tmp_path / "b" / "capture.csv").read_bytes()
        H = read_channel_csv(channel)
        x = read_frame_csv(tmp_path / "a" / "capture.csv", H.grid)
        x0 = apply_front_end(generate_pilot(64, 5), WirelessFrontEnd(1.5 * np.exp(0.3j), 4 * NS), H.grid)
        G = 10 ** (2.4 / 20)
        assert np.allclose(x.freq, G ** 4 * H.H ** 3 * x0.freq, rtol=1e-12)

    def test_third_of_five(self, tmp_path, channel):
        assert run(tmp_path, "simulate", "--channel", str(channel), "--M", "5", "--r", "3",
                   "--lambda", "lambda2", "--amplitude", "2.4", "--noise-var", "1") == 0

    def test_r_above_M(self, tmp_path, channel, capsys):
        assert run(tmp_path, "simulate", "--channel", str(channel), "--M", "5", "--r", "6") == 1
        assert "outside" in capsys.readouterr().err
        assert not (tmp_path / "out" / "capture.csv").exists()

    def test_missing_channel(self, tmp_path, capsys):
        assert run(tmp_path, "simulate", "--channel", str(tmp_path / "nope.csv")) == 1
        assert "not found" in capsys.readouterr().err

    def test_config_file_and_override(self, tmp_path, channel):
        cfg = {"channel": str(channel), "r": 2, "amplitude": 2.0, "lam": "lambda1", "noise_var": 0.0}
        (tmp_path / "scene.json").write_text(json.dumps(cfg))
        assert run(tmp_path, "simulate", "--config", str(tmp_path / "scene.json"), "--r", "4") == 0
        m = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert m["config"]["r"] == 4 and m["config"]["amplitude"] == 2.0


class TestEstimate:
    @pytest.mark.parametrize("lam,estimator", [("lambda0", "linear"), ("lambda1", "cd"),
                                               ("lambda2", "auto")])
    def test_noiseless_on_grid(self, tmp_path, channel, lam, estimator):
        assert run(tmp_path, "--seed", "9", "simulate", "--channel", str(channel), "--r", "3",
                   "--amplitude", "2.4", "--tau-ns", "6", "--lambda", lam, "--noise-var", "0",
                   out="sim") == 0
        assert run(tmp_path, "estimate", "--config", str(tmp_path / "sim" / "manifest.json"),
                   "--capture", str(tmp_path / "sim" / "capture.csv"), "--estimator", estimator,
                   "--r-true", "3") == 0
        (row,) = read_csv(tmp_path / "out" / "result.csv")
        assert row["r_hat"] == row["r_true"] == "3"
        assert float(row["tau_hat_s"]) == pytest.approx(6e-9)

    def test_ambiguous_warns(self, tmp_path, capsys):
        grid = FrequencyGrid()
        with open(tmp_path / "flat.csv", "w") as fh:
            fh.write("freq_hz,re,im\n")
            for f in grid.absolute:
                fh.write(f"{float(f)!r},1.0,0.0\n")
        assert run(tmp_path, "simulate", "--channel", str(tmp_path / "flat.csv"), "--gain-db", "0",
                   "--noise-var", "0", out="sim") == 0
        assert run(tmp_path, "estimate", "--config", str(tmp_path / "sim" / "manifest.json"),
                   "--capture", str(tmp_path / "sim" / "capture.csv"), "--estimator", "linear") == 0
        assert "ambiguous" in capsys.readouterr().err

    def test_missing_capture(self, tmp_path, channel):
        assert run(tmp_path, "estimate", "--channel", str(channel), "--capture", "nope.csv") == 1


class TestSweep:
    def test_two_points_one_trial(self, tmp_path):
        assert run(tmp_path, "--jobs", "1", "sweep", "--trials", "1", "--amplitudes", "1.3,3.0",
                   "--lambdas", "lambda0") == 0
        rows = read_csv(tmp_path / "out" / "curve.csv")
        assert len(rows) == 2 and {r["error_rate"] for r in rows} <= {"0.0", "1.0"}
        assert len(read_csv(tmp_path / "out" / "trials.csv")) == 2
        assert (tmp_path / "out" / "timing.json").exists()

    def test_two_labelled_curves_and_manifest_replay(self, tmp_path):
        assert run(tmp_path, "--seed", "3", "--jobs", "2", "sweep", "--trials", "2",
                   "--amplitudes", "2.4", "--lambdas", "lambda1;lambda2", out="a") == 0
        rows = read_csv(tmp_path / "a" / "curve.csv")
        assert [r["lambda_label"] for r in rows] == ["lambda1", "lambda2"]
        assert run(tmp_path, "--jobs", "1", "sweep", "--config", str(tmp_path / "a" / "manifest.json"),
                   out="b") == 0
        for f in ("curve.csv", "trials.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        m = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert m["master_seed"] == 3

    def test_bad_config(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text(json.dumps({"trials": 0}))
        assert run(tmp_path, "sweep", "--config", str(tmp_path / "c.json")) == 1
        assert not os.path.exists(tmp_path / "out" / "manifest.json")


def test_parse_lambda():
    assert parse_lambda("lambda0") == 0
    assert parse_lambda("-0.1,0.2") == complex(-0.1, 0.2)
    assert parse_lambda("-0.1+0.2j") == complex(-0.1, 0.2)
    assert parse_lambda([1.0, -1.0]) == 1 - 1j


def test_no_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code != 0
