"""End-to-end tests of the `bcnn` command line: exit codes, output
formats, and the train/infer/inspect round trip on a miniature config."""

import os

import numpy as np
import pytest

from bcnn.cli import main
from bcnn.model_io import save_model
from bcnn.network import LevelSpec, NetworkConfig, build_model

MICRO_INI = """\
[network]
input_channels = 4
input_size = 16
classes = 2
parallel = 1

[stem]
replication = 2

[level1]
blocks = 1
stride = 2
replication = 2
"""


@pytest.fixture(scope="module")
def micro_ini(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "micro.ini"
    path.write_text(MICRO_INI)
    return str(path)


@pytest.fixture(scope="module")
def micro_model_file(tmp_path_factory):
    cfg = NetworkConfig(input_channels=4, input_size=16, classes=2, parallel=1,
                        stem=LevelSpec(1, 1, 2, 8),
                        levels=[LevelSpec(1, 2, 2, 16)])
    model = build_model(cfg, seed=3)
    path = str(tmp_path_factory.mktemp("model") / "micro.bin")
    save_model(model, path)
    return path


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------------------
# count
# ---------------------------------------------------------------------------

class TestCount:
    def test_p1_table(self, capsys):
        code, out, _ = run(capsys, ["count", "--preset", "p1"])
        assert code == 0
        table = dict(line.split(None, 1) for line in out.splitlines())
        assert int(table["binary_params"].replace(",", "")) == 9_042_944
        assert int(table["binary_macs"].replace(",", "")) == 2_414_870_528
        assert "param_mb" not in table

    def test_normalized_adds_summary_rows(self, capsys):
        code, out, _ = run(capsys, ["count", "--preset", "p1", "--normalized"])
        assert code == 0
        table = dict(line.split(None, 1) for line in out.splitlines())
        assert float(table["param_mb"]) == pytest.approx(2.2785, abs=1e-3)
        assert float(table["normalized_mops"]) == pytest.approx(127.59, abs=0.01)
        assert float(table["decoder_share"]) == pytest.approx(0.8927, abs=1e-3)

    def test_csv_output(self, capsys):
        code, out, _ = run(capsys, ["count", "--preset", "p2", "--csv"])
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 2
        header = lines[0].split(",")
        values = lines[1].split(",")
        assert header[0] == "binary_params"
        assert len(header) == len(values) == 8
        assert int(values[0]) == 18_085_888

    def test_config_file(self, capsys, micro_ini):
        code, out, _ = run(capsys, ["count", "--config", micro_ini])
        assert code == 0
        table = dict(line.split(None, 1) for line in out.splitlines())
        # conv_a/conv_b/conv_id at 8x8 in the stem, the same at 16x16 in level1
        assert int(table["binary_params"].replace(",", "")) == 3 * 64 + 3 * 256

    def test_missing_config_is_usage_error(self, capsys):
        code, _, err = run(capsys, ["count", "--config", "/no/such/file.ini"])
        assert code == 2
        assert "not found" in err


# ---------------------------------------------------------------------------
# ufa
# ---------------------------------------------------------------------------

class TestUfa:
    def test_single_build_writes_curve(self, capsys, tmp_path):
        out_csv = str(tmp_path / "curve.csv")
        code, out, _ = run(capsys, ["ufa", "--fn", "sinewave", "--d", "0.0625",
                                    "--Q", "16", "--out", out_csv])
        assert code == 0
        assert "sup_error=" in out and f"wrote {out_csv}" in out
        lines = open(out_csv).read().splitlines()
        assert lines[0] == "x,f(x),ufa(x),abs_error"
        assert len(lines) > 10

    def test_step_target_gets_discontinuity_branch(self, capsys, tmp_path):
        out_csv = str(tmp_path / "step.csv")
        code, out, _ = run(capsys, ["ufa", "--fn", "step", "--d", "0.125",
                                    "--Q", "16", "--out", out_csv])
        assert code == 0
        # the added branch pins the value at the jump itself; the misfit
        # against the left-sided limit stays confined to the half-band
        # [x0 - d/2, x0) that the branch carved out
        rows = [l.split(",") for l in open(out_csv).read().splitlines()[1:]]
        for x, _, _, abs_err in rows:
            if not (0.5 - 0.0625 <= float(x) < 0.5):
                assert float(abs_err) <= 1.0 / 32 + 1e-9, x

    def test_sweep_is_monotone(self, capsys, tmp_path):
        out_csv = str(tmp_path / "sweep.csv")
        code, out, _ = run(capsys, ["ufa", "--fn", "ramp", "--sweep", "4",
                                    "--out", out_csv])
        assert code == 0
        lines = open(out_csv).read().splitlines()
        assert lines[0] == "d,Q,sup_error"
        errs = [float(l.split(",")[2]) for l in lines[1:]]
        assert len(errs) == 4
        assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))

    def test_bad_resolution_is_usage_error(self, capsys, tmp_path):
        code, _, err = run(capsys, ["ufa", "--d", "0.3", "--Q", "8",
                                    "--out", str(tmp_path / "x.csv")])
        assert code == 2 and "error:" in err

    def test_csv_target(self, capsys, tmp_path):
        tgt = tmp_path / "target.csv"
        xs = np.linspace(0, 1, 21)
        tgt.write_text("x,y\n" + "\n".join(f"{x},{x*x}" for x in xs))
        out_csv = str(tmp_path / "fit.csv")
        code, out, _ = run(capsys, ["ufa", "--fn", f"csv:{tgt}",
                                    "--d", "0.0625", "--Q", "16",
                                    "--out", out_csv])
        assert code == 0
        err = float(out.split("sup_error=")[1].split()[0])
        # x^2 has Lipschitz constant 2 on [0,1]: L*d/2 + 1/(2Q)
        assert err <= 2 * 0.0625 / 2 + 1 / 32 + 1e-9

    def test_unknown_target_is_usage_error(self, capsys, tmp_path):
        code, _, _ = run(capsys, ["ufa", "--fn", "nosuch",
                                  "--out", str(tmp_path / "x.csv")])
        assert code == 2


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

class TestTrain:
    def test_both_steps_smoke(self, capsys, micro_ini, tmp_path):
        out_dir = str(tmp_path / "run")
        code, out, _ = run(capsys, [
            "train", "--config", micro_ini, "--step", "both",
            "--train-n", "48", "--test-n", "16", "--epochs-override", "1",
            "--batch-size", "16", "--out", out_dir])
        assert code == 0
        assert "final eval accuracy:" in out
        for fname in ("metrics_step1.csv", "metrics_step2.csv",
                      "checkpoint_step1.bin", "checkpoint_step2.bin"):
            assert os.path.exists(os.path.join(out_dir, fname)), fname
        # 5 warmup + 1 decay epoch per step
        rows = open(os.path.join(out_dir, "metrics_step1.csv")).read().splitlines()
        assert len(rows) == 2 + 6

    def test_step2_requires_resume(self, capsys, micro_ini, tmp_path):
        code, _, err = run(capsys, [
            "train", "--config", micro_ini, "--step", "2",
            "--train-n", "32", "--test-n", "16",
            "--out", str(tmp_path / "r")])
        assert code == 2
        assert "--resume" in err

    def test_step1_then_step2_resume(self, capsys, micro_ini, tmp_path):
        out_dir = str(tmp_path / "chain")
        code, _, _ = run(capsys, [
            "train", "--config", micro_ini, "--step", "1",
            "--train-n", "48", "--test-n", "16", "--epochs-override", "1",
            "--batch-size", "16", "--out", out_dir])
        assert code == 0
        ckpt = os.path.join(out_dir, "checkpoint_step1.bin")
        code, out, _ = run(capsys, [
            "train", "--config", micro_ini, "--step", "2", "--resume", ckpt,
            "--train-n", "48", "--test-n", "16", "--epochs-override", "1",
            "--batch-size", "16", "--out", out_dir])
        assert code == 0
        assert os.path.exists(os.path.join(out_dir, "metrics_step2.csv"))

    def test_resume_with_both_rejected(self, capsys, micro_ini, tmp_path):
        code, _, err = run(capsys, [
            "train", "--config", micro_ini, "--step", "both",
            "--resume", "whatever.bin", "--train-n", "32", "--test-n", "16",
            "--out", str(tmp_path / "r")])
        assert code == 2 and "resume" in err.lower()

    def test_missing_dataset_folder(self, capsys, micro_ini, tmp_path):
        code, _, _ = run(capsys, [
            "train", "--config", micro_ini, "--dataset",
            str(tmp_path / "absent"), "--out", str(tmp_path / "r")])
        assert code == 3


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

class TestInfer:
    def test_random_is_deterministic_per_seed(self, capsys, micro_model_file):
        args = ["infer", "--model", micro_model_file, "--random", "--seed", "3"]
        code1, out1, _ = run(capsys, args)
        code2, out2, _ = run(capsys, args)
        assert code1 == code2 == 0
        assert out1 == out2
        assert out1.splitlines()[0].startswith("1. class")
        code3, out3, _ = run(capsys, ["infer", "--model", micro_model_file,
                                      "--random", "--seed", "4"])
        assert code3 == 0 and out3 != out1

    def test_engines_agree(self, capsys, micro_model_file):
        _, out_p, _ = run(capsys, ["infer", "--model", micro_model_file,
                                   "--random", "--seed", "1",
                                   "--engine", "packed"])
        _, out_f, _ = run(capsys, ["infer", "--model", micro_model_file,
                                   "--random", "--seed", "1",
                                   "--engine", "float"])
        assert out_p == out_f

    def test_needs_image_or_random(self, capsys, micro_model_file):
        code, _, err = run(capsys, ["infer", "--model", micro_model_file])
        assert code == 2 and "image" in err

    def test_png_image(self, capsys, micro_model_file, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        path = str(tmp_path / "img.png")
        Image.fromarray(arr).save(path)
        code, out, _ = run(capsys, ["infer", "--model", micro_model_file,
                                    "--image", path])
        assert code == 0
        assert len(out.splitlines()) == 2  # two classes

    def test_wrong_size_image(self, capsys, micro_model_file, tmp_path):
        from PIL import Image

        path = str(tmp_path / "small.png")
        Image.fromarray(np.zeros((8, 8, 3), dtype=np.uint8)).save(path)
        code, _, err = run(capsys, ["infer", "--model", micro_model_file,
                                    "--image", path])
        assert code == 2 and "16x16" in err

    def test_missing_image_file(self, capsys, micro_model_file):
        code, _, _ = run(capsys, ["infer", "--model", micro_model_file,
                                  "--image", "/no/such.png"])
        assert code == 3

    def test_corrupt_model_file(self, capsys, micro_model_file, tmp_path):
        raw = open(micro_model_file, "rb").read()
        bad = str(tmp_path / "bad.bin")
        open(bad, "wb").write(b"ZZZZ" + raw[4:])
        code, _, err = run(capsys, ["infer", "--model", bad, "--random"])
        assert code == 3 and "error:" in err

    def test_truncated_model_file(self, capsys, micro_model_file, tmp_path):
        raw = open(micro_model_file, "rb").read()
        bad = str(tmp_path / "short.bin")
        open(bad, "wb").write(raw[: len(raw) // 2])
        code, _, _ = run(capsys, ["infer", "--model", bad, "--random"])
        assert code == 3


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

class TestBench:
    def test_gemm_smoke(self, capsys):
        code, out, _ = run(capsys, ["bench", "--m", "8", "--k", "16",
                                    "--n", "8", "--iters", "2"])
        assert code == 0
        assert "bitwise_match True" in out

    def test_minimal_sizes(self, capsys):
        code, out, _ = run(capsys, ["bench", "--m", "1", "--k", "1",
                                    "--n", "1", "--iters", "1"])
        assert code == 0
        assert "bitwise_match True" in out

    def test_conv_shape(self, capsys):
        code, out, _ = run(capsys, ["bench", "--op", "conv", "--m", "16",
                                    "--k", "8", "--n", "4", "--iters", "1"])
        assert code == 0
        assert "bitwise_match True" in out

    def test_zero_size_rejected(self, capsys):
        code, _, _ = run(capsys, ["bench", "--m", "0", "--k", "4", "--n", "4"])
        assert code == 2


# ---------------------------------------------------------------------------
# inspect / dispatch
# ---------------------------------------------------------------------------

class TestInspect:
    def test_describes_model(self, capsys, micro_model_file):
        code, out, _ = run(capsys, ["inspect", "--model", micro_model_file])
        assert code == 0
        assert "input 4x16x16  classes 2" in out
        assert "stem  R=2 S=1 C=8" in out
        assert "level1  blocks=1 R=2 S=2 C=16" in out
        expected = os.path.getsize(micro_model_file)
        assert f"file_bytes    {expected:,} (expected {expected:,})" in out

    def test_missing_model(self, capsys):
        code, _, _ = run(capsys, ["inspect", "--model", "/no/model.bin"])
        assert code == 3


class TestDispatch:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 2

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 2
