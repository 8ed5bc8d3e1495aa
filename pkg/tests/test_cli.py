import json
import math

import numpy as np
import pytest

from monostereo import imgio
from monostereo.cli import main
from monostereo.frames import Video
from monostereo.scenes import load_manifest


def test_dump_config(capsys):
    assert main(["--dump-config"]) == 0
    out = capsys.readouterr().out
    assert "threshold=60.0" in out
    assert "t_start=0.9" in out


def test_no_command_is_usage_error():
    assert main([]) == 2


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_synth_writes_dataset(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--n", "2", "--out", str(out), "--seed", "5",
                 "--res", "32"]) == 0
    manifest = load_manifest(out)
    assert manifest["n_scenes"] == 2
    assert manifest["params"]["resolution"] == 32
    first = out / manifest["scenes"][0]["dir"]
    assert (first / "meta.json").exists()
    assert (first / "right_0000.png").exists()
    assert (first / "left_0000.png").exists()


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--n", "1", "--out", str(out), "--seed", "3",
                     "--res", "32"]) == 0
    ma = load_manifest(a)
    name = ma["scenes"][0]["dir"]
    assert (a / name / "right_0000.png").read_bytes() == \
        (b / name / "right_0000.png").read_bytes()


def test_filter_report(tmp_path):
    out = tmp_path / "data"
    main(["synth", "--n", "2", "--out", str(out), "--seed", "1",
          "--res", "32"])
    assert main(["filter", "--in", str(out), "--threshold", "60"]) == 0
    report = json.loads((out / "filter_report.json").read_text())
    assert report["threshold"] == 60.0
    assert len(report["scenes"]) == 2
    assert all(r["keep"] for r in report["scenes"])  # small disparities


def test_filter_missing_dataset_is_data_error(tmp_path):
    assert main(["filter", "--in", str(tmp_path / "nope")]) == 3


def test_anaglyph(tmp_path):
    rng = np.random.default_rng(0)
    left = Video(rng.random((2, 8, 8, 3)).astype(np.float32))
    right = Video(rng.random((2, 8, 8, 3)).astype(np.float32))
    ldir, rdir, odir = tmp_path / "l", tmp_path / "r", tmp_path / "o"
    imgio.save_video_png(left, ldir)
    imgio.save_video_png(right, rdir)
    assert main(["anaglyph", "--left", str(ldir), "--right", str(rdir),
                 "--out", str(odir)]) == 0
    out = imgio.load_video_png(odir)
    assert len(out) == 2
    np.testing.assert_allclose(out.frames[0, :, :, 0], left.frames[0, :, :, 0],
                               atol=0.01)
    np.testing.assert_allclose(out.frames[0, :, :, 1:], right.frames[0, :, :, 1:],
                               atol=0.01)


def test_project(tmp_path):
    rng = np.random.default_rng(1)
    eq = Video(rng.random((1, 64, 64, 3)).astype(np.float32))
    src, dst = tmp_path / "eq", tmp_path / "persp"
    imgio.save_video_png(eq, src)
    assert main(["project", "--in", str(src), "--out", str(dst),
                 "--fov", "75", "--size", "32"]) == 0
    out = imgio.load_video_png(dst, prefix="frame")
    assert out.frames.shape == (1, 32, 32, 3)
    assert "outside hemisphere" in (dst / "coverage.txt").read_text()


def test_config_file_and_env_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg"
    cfg.write_text("# comment\nthreshold=10\n")
    out = tmp_path / "data"
    main(["synth", "--n", "1", "--out", str(out), "--seed", "1",
          "--res", "32"])
    # config file applies
    assert main(["--config", str(cfg), "filter", "--in", str(out)]) == 0
    report = json.loads((out / "filter_report.json").read_text())
    assert report["threshold"] == 10.0
    # env overrides config file
    monkeypatch.setenv("MONOSTEREO_THRESHOLD", "20")
    main(["--config", str(cfg), "filter", "--in", str(out)])
    report = json.loads((out / "filter_report.json").read_text())
    assert report["threshold"] == 20.0
    # flag overrides both
    main(["--config", str(cfg), "filter", "--in", str(out),
          "--threshold", "30"])
    report = json.loads((out / "filter_report.json").read_text())
    assert report["threshold"] == 30.0


def test_malformed_config_is_usage_error(tmp_path):
    cfg = tmp_path / "cfg"
    cfg.write_text("not a key value line\n")
    assert main(["--config", str(cfg), "filter", "--in", str(tmp_path)]) == 2


def test_train_missing_data_is_data_error(tmp_path):
    assert main(["train", "base", "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "m.ckpt")]) == 3
