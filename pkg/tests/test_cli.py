import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.io import wavfile

from auralkit.ambisonics import read_ir, sidecar_path
from auralkit.cli import build_parser, main
from auralkit.neural import ModelConfig
from auralkit.scene import make_shoebox, save_obj, save_scene

SUBCOMMANDS = [["simulate-lor"], ["synthesize"], ["render"], ["metrics"], ["dataset"], ["dataset", "gen"],
               ["dataset", "analyze"], ["train"], ["infer"], ["bench"]]


@pytest.fixture
def scene_file(tmp_path):
    return save_scene(make_shoebox((4.0, 3.0, 2.5)), tmp_path / "box.json")


@pytest.fixture
def minimal_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"model": ModelConfig.minimal().to_dict()}))
    return path


def run_json(capsys, argv):
    code = main([*argv, "--json"])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


@pytest.mark.parametrize("cmd", SUBCOMMANDS, ids=" ".join)
def test_help_exits_zero(cmd):
    with pytest.raises(SystemExit) as exc:
        main([*cmd, "--help"])
    assert exc.value.code == 0


def test_simulate_lor(capsys, scene_file, tmp_path):
    out = tmp_path / "lor.wav"
    code, res = run_json(capsys, ["simulate-lor", "--scene", str(scene_file), "--src", "1,1,1",
                                  "--lis", "3,2,1", "--order", "2", "-o", str(out)])
    assert code == 0 and res["arrivals"] == 25
    ir = read_ir(out)
    assert ir.channels.shape[0] == 4
    assert sidecar_path(out).exists()


def test_obj_scene_needs_its_materials(capsys, scene_file, tmp_path):
    mesh, mats = tmp_path / "box.obj", tmp_path / "materials.json"
    save_obj(make_shoebox((4.0, 3.0, 2.5)), mesh, mats)
    args = ["simulate-lor", "--scene", str(mesh), "--src", "1,1,1", "--lis", "3,2,1", "-o"]
    code, res = run_json(capsys, [*args, str(tmp_path / "obj.wav"), "--materials", str(mats)])
    assert code == 0 and res["arrivals"] == 25
    main(["simulate-lor", "--scene", str(scene_file), "--src", "1,1,1", "--lis", "3,2,1",
          "-o", str(tmp_path / "json.wav")])
    assert np.array_equal(read_ir(tmp_path / "obj.wav").channels, read_ir(tmp_path / "json.wav").channels)
    capsys.readouterr()
    assert main([*args, str(tmp_path / "x.wav")]) == 1
    assert "m0" in capsys.readouterr().err


def test_metrics_identity(capsys, scene_file, tmp_path):
    out = tmp_path / "a.wav"
    main(["simulate-lor", "--scene", str(scene_file), "--src", "1,1,1", "--lis", "3,2,1",
          "--length", "9600", "-o", str(out)])
    capsys.readouterr()
    code, rep = run_json(capsys, ["metrics", "--pred", str(out), "--target", str(out)])
    assert code == 0
    assert rep["MAE"] == 0 and rep["Mel"] == 0 and rep["Mel-T"] == 0


def test_render_selected_channels(capsys, scene_file, tmp_path):
    srir = tmp_path / "s.wav"
    main(["simulate-lor", "--scene", str(scene_file), "--src", "1,1,1", "--lis", "3,2,1", "-o", str(srir)])
    audio = tmp_path / "dry.wav"
    wavfile.write(audio, 48000, np.random.default_rng(0).standard_normal(2000).astype(np.float32))
    out = tmp_path / "wet.wav"
    capsys.readouterr()
    code, res = run_json(capsys, ["render", "--srir", str(srir), "--audio", str(audio),
                                  "--channels", "0,2", "-o", str(out)])
    assert code == 0 and res["channels"] == [0, 2]
    wet = read_ir(out).channels
    assert wet.shape[0] == 4
    assert np.any(wet[0]) and np.any(wet[2]) and not np.any(wet[1]) and not np.any(wet[3])
    dry = wavfile.read(audio)[1].astype(float)
    np.testing.assert_allclose(wet[0], np.convolve(dry, read_ir(srir).channels[0]), atol=1e-5)


def test_dataset_train_infer_pipeline(capsys, tmp_path, minimal_config, scene_file):
    ds = tmp_path / "ds"
    code, res = run_json(capsys, ["dataset", "gen", "--out", str(ds), "--scenes", "2", "--variants", "1",
                                  "--pairs", "5", "--order", "8", "--seed", "2"])
    assert code == 0 and res["entries"] == 10
    code, rep = run_json(capsys, ["dataset", "analyze", "--manifest", str(ds), "--bins", "4",
                                  "--out", str(tmp_path / "div")])
    assert code == 0 and rep["entries"] == 10
    assert (tmp_path / "div" / "pca.csv").exists()
    ckpt = tmp_path / "m.ckpt"
    code, tr = run_json(capsys, ["train", "--dataset", str(ds), "--steps", "5", "--entries", "0",
                                 "--config", str(minimal_config), "-o", str(ckpt)])
    assert code == 0 and tr["steps"] == 5 and ckpt.exists()
    out = tmp_path / "pred.wav"
    argv = ["infer", "--checkpoint", str(ckpt), "--scene", str(scene_file), "--src", "1,1,1",
            "--lis", "3,2,1", "-o", str(out), "--seed", "4"]
    code, inf = run_json(capsys, argv)
    assert code == 0 and inf["t60"] > 0
    first = read_ir(out).channels
    run_json(capsys, argv)
    np.testing.assert_array_equal(read_ir(out).channels, first)


def test_synthesize_from_saved_params(capsys, tmp_path, toy_dataset):
    e = toy_dataset.entries[0]
    out = tmp_path / "syn.wav"
    code, _ = run_json(capsys, ["synthesize", "--params", str(toy_dataset.path(e.params_path)),
                                "--lor", str(toy_dataset.path(e.lor_path)), "-o", str(out), "--seed", "3"])
    assert code == 0
    lor = toy_dataset.lor(e)
    assert len(read_ir(out)) >= len(lor)


def test_bench_box(capsys, scene_file, minimal_config):
    code, rep = run_json(capsys, ["bench", "--scene", str(scene_file), "--runs", "10", "--warmup", "1",
                                  "--config", str(minimal_config)])
    assert code == 0
    stages = {r["stage"]: r for r in rep["rows"]}
    assert set(stages) == {"GA-LoR", "DL-model", "PS", "end-to-end"}
    assert all(0 < r["mean_ms"] <= r["p95_ms"] for r in rep["rows"])
    assert rep["reference_ms"]["GA-LoR"] == 310.09 and rep["reference_ms"]["PS"] == 86.43
    assert "not a pass/fail" in rep["note"]


def test_seed_and_json_survive_subcommand_parsing():
    args = build_parser().parse_args(["--seed", "9", "--json", "metrics", "--pred", "a", "--target", "b"])
    assert args.seed == 9 and args.json
    args = build_parser().parse_args(["metrics", "--pred", "a", "--target", "b"])
    assert args.seed == 0 and not args.json


def test_exit_codes(capsys, scene_file, tmp_path):
    assert main(["metrics", "--pred", str(tmp_path / "missing.wav"), "--target", str(tmp_path / "x.wav")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["metrics", "--bogus"])
    assert exc.value.code == 2
    # a source outside the room is an out-of-domain argument
    assert main(["simulate-lor", "--scene", str(scene_file), "--src", "9,1,1", "--lis", "3,2,1",
                 "-o", str(tmp_path / "o.wav")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate-lor", "--scene", str(bad), "--src", "1,1,1", "--lis", "3,2,1",
                 "-o", str(tmp_path / "o.wav")]) == 1


def test_internal_errors_exit_70(monkeypatch, tmp_path):
    from auralkit import cli
    from auralkit.errors import InvariantError

    def boom(args, cfg):
        raise InvariantError("broken")

    monkeypatch.setattr(cli, "cmd_metrics", boom)
    assert cli.main(["metrics", "--pred", "a", "--target", "b"]) == 70


def test_module_entry_point(scene_file, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "auralkit", "simulate-lor", "--scene", str(scene_file),
                           "--src", "1,1,1", "--lis", "3,2,1", "-o", str(tmp_path / "x.wav"), "--json"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["arrivals"] == 25
    proc = subprocess.run([sys.executable, "-m", "auralkit", "nonsense"], capture_output=True, text=True)
    assert proc.returncode == 2
