"""CLI subcommands: flows, determinism, config handling, exit codes."""

import json

import numpy as np
import pytest

from dcdeblur.cli import main
from dcdeblur.config import build_configs, dump_config, parse_config_text
from dcdeblur.data.imageio import load_image, save_image
from dcdeblur.data.synth import synthetic_sharp_image
from dcdeblur.errors import ConfigError
from dcdeblur.rng import derive_rng

NET_ARGS = ["--encoder-filters", "8,16", "--crop", "32", "--dc-window", "5"]


@pytest.fixture
def sharp_dir(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(3):
        save_image(synthetic_sharp_image(derive_rng(80, 9, i), 160), src / f"im{i}.png")
    return src


@pytest.fixture
def dataset(sharp_dir, tmp_path):
    assert main(["dataset-gen", "--sharp-dir", str(sharp_dir), "--out",
                 str(tmp_path / "ds"), "--count", "3", "--kernel-length", "5",
                 "--seed", "7"]) == 0
    return tmp_path / "ds"


@pytest.fixture
def trained(dataset, tmp_path):
    out = tmp_path / "run"
    code = main(["train", "--data", str(dataset), "--out", str(out), *NET_ARGS,
                 "--epochs", "1", "--checkpoint-every", "0", "--seed", "3"])
    assert code == 0
    return out / "final.dgc"


class TestDatasetGen:
    def test_count_and_manifest(self, dataset):
        assert len(list((dataset / "blur").iterdir())) == 3
        manifest = json.loads((dataset / "manifest.json").read_text())
        assert manifest["count"] == 3

    def test_seed_determinism(self, sharp_dir, tmp_path):
        for out in ("d1", "d2"):
            assert main(["dataset-gen", "--sharp-dir", str(sharp_dir), "--out",
                         str(tmp_path / out), "--count", "2", "--noise-variance",
                         "0.001", "--seed", "5"]) == 0
        for sub in ("blur", "sharp"):
            for p in sorted((tmp_path / "d1" / sub).iterdir()):
                assert p.read_bytes() == (tmp_path / "d2" / sub / p.name).read_bytes()

    def test_empty_sharp_dir_is_data_error(self, tmp_path):
        (tmp_path / "empty").mkdir()
        code = main(["dataset-gen", "--sharp-dir", str(tmp_path / "empty"),
                     "--out", str(tmp_path / "o"), "--count", "1"])
        assert code == 2


class TestTrain:
    def test_writes_checkpoint_and_log(self, dataset, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--data", str(dataset), "--out", str(out), *NET_ARGS,
                     "--epochs", "1", "--checkpoint-every", "0", "--seed", "3"]) == 0
        assert (out / "final.dgc").exists()
        lines = (out / "train_log.jsonl").read_text().splitlines()
        assert len(lines) == 3

    def test_lambda2_zero_kills_dark_channel_term(self, dataset, tmp_path):
        out = tmp_path / "run0"
        assert main(["train", "--data", str(dataset), "--out", str(out), *NET_ARGS,
                     "--lambda2", "0", "--epochs", "1", "--checkpoint-every", "0"]) == 0
        for line in (out / "train_log.jsonl").read_text().splitlines():
            assert json.loads(line)["g_darkchannel"] == 0.0

    def test_invalid_config_key_reports_line_number(self, dataset, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("lambda1=100\nbogus_key=1\n")
        code = main(["train", "--config", str(cfg), "--data", str(dataset),
                     "--out", str(tmp_path / "r")])
        assert code == 1
        assert "bad.cfg:2" in capsys.readouterr().err

    def test_validation_lists_every_violation(self, dataset, tmp_path, capsys):
        code = main(["train", "--data", str(dataset), "--out", str(tmp_path / "r"),
                     "--crop", "-3", "--batch", "0", "--epochs", "0"])
        assert code == 1
        err = capsys.readouterr().err
        assert "crop" in err and "batch" in err and "epochs" in err


class TestDeblur:
    def test_batch_mode_outputs_valid_images(self, trained, dataset, tmp_path):
        out = tmp_path / "restored"
        assert main(["deblur", "--checkpoint", str(trained), "--in",
                     str(dataset / "blur"), "--out", str(out), *NET_ARGS]) == 0
        files = sorted(out.iterdir())
        assert len(files) == 3
        img = load_image(files[0])
        assert img.data.min() >= 0.0 and img.data.max() <= 1.0

    def test_pad_and_crop_odd_size(self, trained, tmp_path):
        odd = tmp_path / "odd.png"
        save_image(synthetic_sharp_image(derive_rng(81, 9, 0), 70), odd)
        out = tmp_path / "odd_restored.png"
        assert main(["deblur", "--checkpoint", str(trained), "--in", str(odd),
                     "--out", str(out), *NET_ARGS]) == 0
        assert load_image(out).shape == (3, 70, 70)

    def test_bit_identical_reruns(self, trained, dataset, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(["deblur", "--checkpoint", str(trained), "--in",
                         str(dataset / "blur"), "--out", str(out), *NET_ARGS]) == 0
            outs.append(out)
        for p in sorted(outs[0].iterdir()):
            assert p.read_bytes() == (outs[1] / p.name).read_bytes()


class TestEval:
    def test_report_parses_and_means_match(self, trained, dataset, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        assert main(["eval", "--checkpoint", f"dc={trained}", "--data", str(dataset),
                     "--noise-variance", "0.001", "--report", str(report_path),
                     *NET_ARGS]) == 0
        table = capsys.readouterr().out
        assert "dc" in table and "PSNR" in table and "Noisy" in table
        payload = json.loads(report_path.read_text())
        for cond in ("Original", "Noisy"):
            rep = payload["columns"]["dc"][cond]
            rows = rep["per_image"]
            assert rep["mean_psnr"] == pytest.approx(np.mean([r["psnr"] for r in rows]))
            assert rep["mean_ssim"] == pytest.approx(np.mean([r["ssim"] for r in rows]))

    def test_deterministic_reports(self, trained, dataset, tmp_path):
        texts = []
        for name in ("e1.json", "e2.json"):
            assert main(["eval", "--checkpoint", str(trained), "--data", str(dataset),
                         "--noise-variance", "0.001", "--report",
                         str(tmp_path / name), *NET_ARGS]) == 0
            texts.append((tmp_path / name).read_text())
        assert texts[0] == texts[1]


class TestGradcheckCommand:
    def test_op_scope_passes(self, capsys):
        assert main(["gradcheck", "--scope", "op", "--seeds", "1"]) == 0
        out = capsys.readouterr().out
        assert "conv2d" in out and "ok" in out

    def test_failing_tolerance_exits_3_naming_op(self, capsys, monkeypatch):
        import dataclasses
        import dcdeblur.cli as cli
        from dcdeblur.verification import OP_CHECKS

        impossible = (dataclasses.replace(OP_CHECKS[0], tolerance=0.0),)
        monkeypatch.setattr(cli, "scope_checks", lambda scope: impossible)
        assert main(["gradcheck", "--scope", "op", "--seeds", "1"]) == 3
        captured = capsys.readouterr()
        assert "conv2d" in captured.err and "worst element" in captured.err


class TestConfigFile:
    def test_dump_reload_round_trip(self):
        cfg, spec = build_configs({"lambda2": "125.5", "encoder_filters": "8,16",
                                   "crop": "32", "dropout_blocks": "0"})
        text = dump_config(cfg, spec)
        cfg2, spec2 = build_configs(parse_config_text(text))
        assert cfg == cfg2
        assert spec == spec2

    def test_duplicate_key_rejected_with_line(self):
        with pytest.raises(ConfigError, match=":2"):
            parse_config_text("lambda1=1\nlambda1=2\n")

    def test_flag_overrides_file(self, tmp_path, dataset):
        cfg_file = tmp_path / "c.cfg"
        cfg_file.write_text("lambda2=250\nencoder_filters=8,16\ncrop=32\ndc_window=5\n")
        out = tmp_path / "ovr"
        assert main(["train", "--config", str(cfg_file), "--data", str(dataset),
                     "--out", str(out), "--lambda2", "0", "--epochs", "1",
                     "--checkpoint-every", "0"]) == 0
        for line in (out / "train_log.jsonl").read_text().splitlines():
            assert json.loads(line)["g_darkchannel"] == 0.0

    def test_help_lists_every_key(self, capsys):
        from dcdeblur.config import KEY_REGISTRY
        with pytest.raises(SystemExit):
            main(["train", "--help"])
        out = capsys.readouterr().out
        for key in KEY_REGISTRY:
            assert key in out


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        assert main(["train"]) == 1  # missing required flags

    def test_missing_data_is_two(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nowhere"),
                     "--out", str(tmp_path / "o"), *NET_ARGS,
                     "--epochs", "1"]) == 2
