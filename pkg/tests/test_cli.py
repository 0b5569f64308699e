"""End-to-end tests for the command line: the five subcommands, their
file outputs, and the 0/1/2/3 exit code contract."""

import json

import numpy as np
import pytest

from scoredim.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from scoredim.manifolds import load_sample


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Shared workspace: a small swirl dataset plus two tiny checkpoints
    (single noise scale and full diffusion)."""
    root = tmp_path_factory.mktemp("cli_ws")
    data = root / "swirl.txt"
    assert main(["generate", "--count", "40", "--out", str(data)]) == EXIT_OK
    fixed = root / "fixed.ckpt"
    assert main(["train", "--data", str(data), "--out", str(fixed),
                 "--iterations", "25", "--hidden", "8,8", "--batch-size", "8",
                 "--power-iters", "1"]) == EXIT_OK
    vp = root / "vp.ckpt"
    assert main(["train", "--data", str(data), "--out", str(vp),
                 "--schedule", "vp", "--iterations", "25", "--hidden", "8,8",
                 "--batch-size", "8", "--power-iters", "1"]) == EXIT_OK
    return {"root": root, "data": data, "fixed": fixed, "vp": vp}


class TestGenerate:
    def test_writes_dataset_and_summary(self, tmp_path, capsys):
        out = tmp_path / "d.txt"
        assert main(["generate", "--count", "30", "--seed", "4",
                     "--out", str(out)]) == EXIT_OK
        sample = load_sample(out)
        assert sample.count == 30 and sample.seed == 4
        line = capsys.readouterr().out
        assert f"wrote {out}:" in line
        assert "count=30" in line and "ambient=2" in line
        assert "td1:30" in line
        assert "config=" in line

    def test_csv_sidecar(self, tmp_path):
        out = tmp_path / "d.txt"
        csv = tmp_path / "d.csv"
        assert main(["generate", "--count", "5", "--out", str(out),
                     "--csv", str(csv)]) == EXIT_OK
        lines = csv.read_text().splitlines()
        assert lines[0] == "x0,x1,true_td"
        assert len(lines) == 6

    def test_refuses_overwrite_without_force(self, tmp_path, capsys):
        out = tmp_path / "d.txt"
        assert main(["generate", "--count", "5", "--out", str(out)]) == EXIT_OK
        assert main(["generate", "--count", "5", "--out", str(out)]) == EXIT_IO
        assert "--force" in capsys.readouterr().err
        assert main(["generate", "--count", "5", "--out", str(out),
                     "--force"]) == EXIT_OK

    def test_unknown_dataset_is_usage_error(self, tmp_path):
        assert main(["generate", "--dataset", "mystery",
                     "--out", str(tmp_path / "d.txt")]) == EXIT_USAGE

    def test_config_file_drives_generation(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("dataset = gaussian\ndim = 4\ncount = 12\n")
        out = tmp_path / "g.txt"
        assert main(["generate", "--config", str(cfg),
                     "--out", str(out)]) == EXIT_OK
        sample = load_sample(out)
        assert sample.ambient_dim == 4 and sample.count == 12

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("count = 12\n")
        out = tmp_path / "d.txt"
        assert main(["generate", "--config", str(cfg), "--count", "7",
                     "--out", str(out)]) == EXIT_OK
        assert load_sample(out).count == 7

    def test_bad_config_key_reported_with_location(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("banana = 7\n")
        assert main(["generate", "--config", str(cfg),
                     "--out", str(tmp_path / "d.txt")]) == EXIT_USAGE
        assert "run.cfg:1" in capsys.readouterr().err


class TestTrain:
    def test_checkpoint_log_and_summary(self, ws, tmp_path, capsys):
        out = tmp_path / "m.ckpt"
        log = tmp_path / "m.log"
        assert main(["train", "--data", str(ws["data"]), "--out", str(out),
                     "--log", str(log), "--iterations", "20",
                     "--hidden", "8,8", "--batch-size", "8",
                     "--power-iters", "1"]) == EXIT_OK
        assert out.exists()
        log_lines = log.read_text().splitlines()
        assert log_lines[0].startswith("# config ")
        assert log_lines[1] == "iteration,lr,dsm_loss,de_penalty,wallclock"
        line = capsys.readouterr().out
        assert "iterations 20" in line and "dsm" in line

    def test_missing_data_file(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path / "m.ckpt")]) == EXIT_IO

    def test_stop_and_resume_matches_straight_run(self, ws, tmp_path):
        args = ["--data", str(ws["data"]), "--hidden", "8,8",
                "--batch-size", "8", "--power-iters", "1",
                "--iterations", "16"]
        straight = tmp_path / "straight.ckpt"
        assert main(["train", *args, "--out", str(straight)]) == EXIT_OK
        part = tmp_path / "part.ckpt"
        state = tmp_path / "part.state"
        assert main(["train", *args, "--out", str(part), "--state", str(state),
                     "--stop-iter", "7"]) == EXIT_OK
        resumed = tmp_path / "resumed.ckpt"
        assert main(["train", *args, "--out", str(resumed),
                     "--resume", str(state)]) == EXIT_OK
        assert resumed.read_bytes() == straight.read_bytes()

    def test_divergence_saves_crash_checkpoint(self, ws, tmp_path, capsys):
        out = tmp_path / "m.ckpt"
        code = main(["train", "--data", str(ws["data"]), "--out", str(out),
                     "--iterations", "50", "--hidden", "8,8",
                     "--batch-size", "8", "--power-iters", "1",
                     "--base-lr", "1e5"])
        assert code == EXIT_NUMERIC
        assert not out.exists()
        assert (tmp_path / "m.ckpt.diverged").exists()
        assert "diverged" in capsys.readouterr().err


class TestEstimate:
    def test_results_csv_and_mse(self, ws, tmp_path, capsys):
        out = tmp_path / "r.csv"
        assert main(["estimate", "--data", str(ws["data"]),
                     "--model", str(ws["fixed"]), "--out", str(out),
                     "--attack-iters", "3"]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# config ")
        assert lines[1] == ("index,x0,x1,adv0,adv1,delta,"
                            "n_hat_raw,n_hat_clamped,flags")
        assert len(lines) == 2 + 40
        assert "mse=" in capsys.readouterr().out

    def test_byte_identical_reruns(self, ws, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["estimate", "--data", str(ws["data"]),
                "--model", str(ws["fixed"]), "--attack-iters", "3"]
        assert main(argv + ["--out", str(a)]) == EXIT_OK
        assert main(argv + ["--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_dimension_mismatch(self, ws, tmp_path, capsys):
        gdata = tmp_path / "g.txt"
        assert main(["generate", "--dataset", "gaussian", "--dim", "4",
                     "--count", "10", "--out", str(gdata)]) == EXIT_OK
        code = main(["estimate", "--data", str(gdata),
                     "--model", str(ws["fixed"]),
                     "--out", str(tmp_path / "r.csv")])
        assert code == EXIT_USAGE
        assert "does not match" in capsys.readouterr().err

    def test_explicit_sigma_mismatch_rejected(self, ws, tmp_path, capsys):
        argv = ["estimate", "--data", str(ws["data"]),
                "--model", str(ws["fixed"]), "--out", str(tmp_path / "r.csv"),
                "--attack-iters", "2"]
        assert main(argv + ["--sigma", "0.5"]) == EXIT_USAGE
        assert "trained with sigma" in capsys.readouterr().err
        # the schema default sigma is not an explicit request
        assert main(argv) == EXIT_OK

    def test_time_series_output(self, ws, tmp_path):
        small = tmp_path / "small.txt"
        assert main(["generate", "--count", "3", "--seed", "2",
                     "--out", str(small)]) == EXIT_OK
        out = tmp_path / "ts.csv"
        assert main(["estimate", "--data", str(small),
                     "--model", str(ws["vp"]), "--out", str(out),
                     "--times", "0,0.5,1", "--attack-iters", "2"]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[1] == ("point_index,t,sigma_t,delta,"
                            "n_hat_raw,n_hat_clamped,flags")
        assert len(lines) == 2 + 3 * 3
        assert lines[2].startswith("0,0,0.1,")  # vp noise scale at t=0

    def test_times_require_time_conditioned_model(self, ws, tmp_path):
        code = main(["estimate", "--data", str(ws["data"]),
                     "--model", str(ws["fixed"]),
                     "--out", str(tmp_path / "r.csv"), "--times", "0,1"])
        assert code == EXIT_USAGE

    def test_bad_times_lists(self, ws, tmp_path):
        argv = ["estimate", "--data", str(ws["data"]),
                "--model", str(ws["vp"]), "--out", str(tmp_path / "r.csv")]
        assert main(argv + ["--times", "0,2"]) == EXIT_USAGE
        assert main(argv + ["--times", "a,b"]) == EXIT_USAGE


class TestBaseline:
    def test_combined_csv(self, ws, tmp_path, capsys):
        out = tmp_path / "b.csv"
        assert main(["baseline", "--data", str(ws["data"]), "--out", str(out),
                     "--estimators", "mle_10,mind_10"]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[1] == "index,method,k,estimate"
        assert len(lines) == 2 + 2 * 40
        methods = {line.split(",")[1] for line in lines[2:]}
        assert methods == {"mle", "mind"}
        mind_values = {line.split(",")[3] for line in lines[2:]
                       if line.split(",")[1] == "mind"}
        assert len(mind_values) == 1  # global estimate repeated per point
        assert "mse=" in capsys.readouterr().out

    def test_requires_knn_estimator(self, ws, tmp_path):
        assert main(["baseline", "--data", str(ws["data"]),
                     "--out", str(tmp_path / "b.csv"),
                     "--estimators", "sm"]) == EXIT_USAGE

    def test_k_must_be_below_count(self, tmp_path):
        data = tmp_path / "tiny.txt"
        assert main(["generate", "--count", "8", "--out", str(data)]) == EXIT_OK
        assert main(["baseline", "--data", str(data),
                     "--out", str(tmp_path / "b.csv"),
                     "--estimators", "mle_10"]) == EXIT_USAGE


class TestTable3:
    def test_writes_json_and_csv_grid(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("count = 120\niterations = 30\nbatch_size = 8\n"
                       "power_iters = 1\nhidden = 8,8\nbenchmarks = swirl\n"
                       "estimators = sm,mle_10\ntrials = 1\n"
                       "attack_iters = 3\n")
        out_dir = tmp_path / "runs"
        assert main(["table3", "--config", str(cfg),
                     "--out-dir", str(out_dir), "--verbose"]) == EXIT_OK
        payload = json.loads((out_dir / "table3.json").read_text())
        assert payload["trials"] == 1
        assert set(payload["cells"]["swirl"]) == {"sm", "mle_10"}
        lines = (out_dir / "table3.csv").read_text().splitlines()
        assert lines[1] == "benchmark,sm,mle_10"
        assert lines[2].startswith("swirl,")
        console = capsys.readouterr().out
        assert "trial 0" in console  # --verbose progress
        assert "swirl:" in console

    def test_unknown_benchmark(self, tmp_path):
        assert main(["table3", "--benchmarks", "tesseract",
                     "--out-dir", str(tmp_path / "runs")]) == EXIT_USAGE


class TestArgumentErrors:
    def test_no_subcommand(self, capsys):
        assert main([]) == EXIT_USAGE
        assert "usage error" in capsys.readouterr().err

    def test_unknown_flag(self):
        assert main(["generate", "--out", "x", "--frobnicate"]) == EXIT_USAGE

    def test_missing_required_flag(self):
        assert main(["train", "--data", "x"]) == EXIT_USAGE
