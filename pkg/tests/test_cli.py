import dataclasses

import pytest

from blendcast.cli import main
from blendcast.harness import ExperimentConfig, config_to_toml
from blendcast.pipeline import Scheme
from blendcast.trace import SynthSpec


@pytest.fixture()
def config_file(tmp_path):
    cfg = ExperimentConfig(
        rates=(8000,),
        seeds=(1,),
        schemes=(Scheme.PROPOSED, Scheme.NO_SELECTION_NO_PREDICTION),
        synth=SynthSpec(features=8, frames=100, static_fraction=0.25),
        basis_height=16,
        basis_width=16,
        epochs=30,
        out_dir=str(tmp_path / "out"),
    )
    p = tmp_path / "cfg.toml"
    p.write_text(config_to_toml(cfg), encoding="utf-8")
    return p


def test_synth_then_run(tmp_path, config_file, capsys):
    trace = tmp_path / "t.csv"
    assert main(["synth", "--config", str(config_file), "--seed", "1", "--out", str(trace)]) == 0
    assert trace.exists()
    out = tmp_path / "run_out"
    code = main(
        ["run", "--config", str(config_file), "--trace", str(trace), "--scheme", "proposed",
         "--rate", "8000", "--out", str(out)]
    )
    assert code == 0
    results = (out / "results.csv").read_text().strip().split("\n")
    assert results[0].startswith("chunk_id,scheme,rate_bits")
    assert len(results) == 2  # one chunk result
    assert (out / "frames.csv").exists()


def test_pack_unpack_round_trip(tmp_path, config_file):
    trace = tmp_path / "t.csv"
    main(["synth", "--config", str(config_file), "--seed", "2", "--out", str(trace)])
    pkt1 = tmp_path / "c1.bin"
    pkt2 = tmp_path / "c2.bin"
    for pkt in (pkt1, pkt2):
        code = main(
            ["pack", "--config", str(config_file), "--trace", str(trace), "--rate", "8000",
             "--out", str(pkt)]
        )
        assert code == 0
    assert pkt1.read_bytes() == pkt2.read_bytes()

    codes1 = tmp_path / "codes1.csv"
    codes2 = tmp_path / "codes2.csv"
    assert main(["unpack", str(pkt1), "--out", str(codes1)]) == 0
    assert main(["unpack", str(pkt2), "--out", str(codes2)]) == 0
    assert codes1.read_text() == codes2.read_text()
    assert codes1.read_text().startswith("frame,feature,code\n")


def test_sweep_emits_csv_and_svg(tmp_path, config_file):
    assert main(["sweep", "--config", str(config_file)]) == 0
    out = tmp_path / "out"
    assert (out / "sweep.csv").exists()
    assert (out / "sweep.svg").exists()


def test_frames_report_cli(tmp_path, config_file):
    code = main(
        ["frames-report", "--config", str(config_file), "--n-f", "60", "--frames", "61,80,100"]
    )
    assert code == 0
    out = tmp_path / "out"
    assert (out / "frames_nf60_seed1.csv").exists()
    assert (out / "frame_061_nf60_seed1.png").exists()


def test_train_and_render(tmp_path, config_file):
    trace = tmp_path / "t.csv"
    main(["synth", "--config", str(config_file), "--seed", "3", "--out", str(trace)])
    model = tmp_path / "model.npz"
    assert main(["train", "--config", str(config_file), "--trace", str(trace),
                 "--out", str(model)]) == 0
    assert model.exists()
    png = tmp_path / "f.png"
    assert main(["render", "--config", str(config_file), "--trace", str(trace), "--frame", "1",
                 "--out", str(png)]) == 0
    assert png.exists()


def test_show_config_round_trips(config_file, capsys):
    assert main(["show-config", "--config", str(config_file)]) == 0
    printed = capsys.readouterr().out
    assert printed == config_file.read_text()


class TestErrorExits:
    def test_insufficient_budget_exit_code(self, tmp_path, config_file, capsys):
        trace = tmp_path / "t.csv"
        main(["synth", "--config", str(config_file), "--seed", "1", "--out", str(trace)])
        code = main(
            ["pack", "--config", str(config_file), "--trace", str(trace), "--rate", "10",
             "--out", str(tmp_path / "c.bin")]
        )
        assert code == 4
        assert "error[insufficient-budget]" in capsys.readouterr().err

    def test_bad_packet_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"XXXX" + b"\x00" * 40)
        assert main(["unpack", str(bad), "--out", str(tmp_path / "c.csv")]) == 5
        assert "error[bad-magic]" in capsys.readouterr().err

    def test_trace_error_exit_code(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("frame,e_0\n0,NaN\n", encoding="utf-8")
        assert main(["render", "--trace", str(p), "--out", str(tmp_path / "x.png")]) == 3
        assert "error[non-finite-value]" in capsys.readouterr().err

    def test_window_underfull_exit_code(self, tmp_path, config_file, capsys):
        code = main(["frames-report", "--config", str(config_file), "--n-f", "2"])
        assert code == 6
        assert "error[window-underfull]" in capsys.readouterr().err

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["sweep", "--no-such-flag"])
        assert excinfo.value.code == 2

    def test_missing_trace_file(self, tmp_path, capsys):
        code = main(["render", "--trace", str(tmp_path / "missing.csv")])
        assert code == 2
        assert "error[input]" in capsys.readouterr().err
