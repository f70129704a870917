"""Command-line surface: config parsing, exit codes, outputs, and the
no-silent-overwrite rule.  Heavy commands run at toy sizes."""

import csv
import json

import numpy as np
import pytest

from pathroute.cli import main, parse_config
from pathroute.errors import ConfigError
from pathroute.imageio import read_f32, read_image

TOY = """
# toy-scale settings
blocks = 2
paths = 2
pf_conv_layers = 1
features = 8
hidden = 8
patch = 21
channels = 3
batch = 2
stage1_iters = 4
stage2_iters = 3
log_interval = 2
ckpt_interval = 0
lr = 1e-3
count = 6
eval_count = 1
image_size = 70
sigma_eval = 25
finetune_iters = 2
penalties = 1e-6,2e-6
"""


@pytest.fixture
def toy_config(tmp_path):
    path = tmp_path / "toy.cfg"
    path.write_text(TOY, encoding="utf-8")
    return path


class TestConfigParsing:
    def test_values_and_defaults(self, toy_config):
        cfg = parse_config(toy_config)
        assert cfg["blocks"] == 2
        assert cfg["lr"] == pytest.approx(1e-3)
        assert cfg["threshold"] == pytest.approx(5e-4)  # untouched default

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("no_such_key = 1\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("blocks = banana\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("what is this\n")
        with pytest.raises(ConfigError):
            parse_config(path)


class TestSynth:
    def test_writes_pairs_and_manifest(self, toy_config, tmp_path):
        out = tmp_path / "data"
        assert main(["synth", "--config", str(toy_config), "--out", str(out)]) == 0
        rows = list(csv.reader(open(out / "manifest.csv")))
        assert rows[0] == ["index", "row", "col", "sigma", "blur", "quality"]
        assert len(rows) == 7
        deg = read_f32(out / "000000_deg.f32")
        assert deg.shape == (3, 21, 21)
        assert (out / "config.txt").read_text() == TOY

    def test_rerun_same_seed_byte_identical(self, toy_config, tmp_path):
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        main(["synth", "--config", str(toy_config), "--out", str(out1)])
        main(["synth", "--config", str(toy_config), "--out", str(out2)])
        for name in ("000003_deg.f32", "000003_cln.f32", "manifest.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_refuses_nonempty_out(self, toy_config, tmp_path):
        out = tmp_path / "data"
        out.mkdir()
        (out / "existing.txt").write_text("keep me")
        assert main(["synth", "--config", str(toy_config), "--out", str(out)]) == 2
        assert (out / "existing.txt").read_text() == "keep me"
        assert main(["synth", "--config", str(toy_config), "--out", str(out), "--force"]) == 0


class TestTrain:
    def test_stage1_then_stage2_chained(self, toy_config, tmp_path):
        s1 = tmp_path / "s1"
        assert main(["train", "--config", str(toy_config), "--out", str(s1)]) == 0
        ckpt = s1 / "final_stage1.bin"
        assert ckpt.exists()
        with open(s1 / "metrics_stage1.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iter", "stage", "loss", "mean_reward", "mean_flops", "psnr"]
        iters = [int(r[0]) for r in rows[1:]]
        assert iters == sorted(iters)

        s2 = tmp_path / "s2"
        code = main(["train", "--config", str(toy_config), "--out", str(s2),
                     "--stage", "2", "--init", str(ckpt)])
        assert code == 0
        assert (s2 / "final_stage2.bin").exists()

        # stage 2 started from the stage-1 weights
        from pathroute.trainer import load_checkpoint

        m1, _ = load_checkpoint(ckpt)
        m2, meta2 = load_checkpoint(s2 / "final_stage2.bin")
        assert meta2["stage"] == "2"

    def test_stage2_without_init_is_usage_error(self, toy_config, tmp_path):
        code = main(["train", "--config", str(toy_config), "--out", str(tmp_path / "x"),
                     "--stage", "2"])
        assert code == 2


@pytest.fixture
def trained(toy_config, tmp_path):
    out = tmp_path / "train"
    main(["train", "--config", str(toy_config), "--out", str(out)])
    return toy_config, out / "final_stage1.bin", tmp_path


class TestEval:
    def test_outputs(self, trained):
        cfgp, ckpt, tmp = trained
        out = tmp / "eval"
        assert main(["eval", "--config", str(cfgp), "--out", str(out),
                     "--init", str(ckpt)]) == 0
        rows = list(csv.reader(open(out / "report.csv")))
        assert rows[0] == ["name", "psnr", "ssim", "mean_flops", "regions"]
        assert rows[-1][0] == "summary"
        assert len(rows) == 1 + 1 + 1
        report = json.loads((out / "report.json").read_text())
        assert report["n_regions"] >= 1
        restored = read_image(out / "image000_restored.ppm")
        assert restored.shape == (3, 70, 70)

    def test_missing_init(self, trained):
        cfgp, _, tmp = trained
        assert main(["eval", "--config", str(cfgp), "--out", str(tmp / "e2")]) == 2


class TestRouteMap:
    def test_outputs(self, trained):
        cfgp, ckpt, tmp = trained
        out = tmp / "rm"
        assert main(["route-map", "--config", str(cfgp), "--out", str(out),
                     "--init", str(ckpt)]) == 0
        heat = read_image(out / "route_map.ppm")
        assert heat.shape == (3, 70, 70)
        rows = list(csv.reader(open(out / "regions.csv")))
        assert rows[0] == ["row", "col", "a1", "a2", "flops"]
        # 70x70 at patch 21, stride 11: anchors 0,11,22,33,44,49 per axis
        assert len(rows) - 1 == 36
        # colors sit on the green-red ramp
        px = heat[:, 0, 0]
        assert px[2] == 0.0 and (px[0] > 0 or px[1] > 0)

    def test_external_image(self, trained, tmp_path):
        from pathroute.imageio import write_image

        cfgp, ckpt, tmp = trained
        img = np.random.default_rng(0).random((3, 70, 70)).astype(np.float32)
        src = tmp_path / "input.ppm"
        write_image(src, img)
        cfg2 = tmp_path / "cfg2.cfg"
        cfg2.write_text(TOY + f"image = {src}\n")
        out = tmp / "rm2"
        assert main(["route-map", "--config", str(cfg2), "--out", str(out),
                     "--init", str(ckpt)]) == 0


class TestSweep:
    def test_rows_and_columns(self, trained):
        cfgp, ckpt, tmp = trained
        out = tmp / "sweep"
        assert main(["sweep", "--config", str(cfgp), "--out", str(out),
                     "--init", str(ckpt)]) == 0
        rows = list(csv.reader(open(out / "sweep.csv")))
        assert rows[0] == ["p", "psnr", "mean_flops", "regulated"]
        assert len(rows) == 3  # two penalties, regulated only
        assert [r[3] for r in rows[1:]] == ["1", "1"]

    def test_non_regulated_doubles_rows(self, trained):
        cfgp, ckpt, tmp = trained
        out = tmp / "sweep2"
        assert main(["sweep", "--config", str(cfgp), "--out", str(out),
                     "--init", str(ckpt), "--non-regulated"]) == 0
        rows = list(csv.reader(open(out / "sweep.csv")))
        assert len(rows) == 5
        assert [r[3] for r in rows[1:]] == ["1", "1", "0", "0"]


def test_missing_config_is_usage_error(tmp_path):
    assert main(["synth", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path / "o")]) in (1, 2)
