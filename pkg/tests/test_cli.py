import csv
import subprocess
import sys

import pytest

from structact.activity_cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestEnumerate:
    def test_mini_count(self, capsys, tmp_path):
        code, out, _ = run(capsys, "enumerate", "--A", "12", "--M", "3", "--Lmin", "3",
                           "--out", str(tmp_path))
        assert code == 0 and out.strip() == "10"
        assert (tmp_path / "run_manifest.txt").is_file()

    def test_paper_defaults(self, capsys, tmp_path):
        code, out, _ = run(capsys, "enumerate", "--profile", "paper", "--out", str(tmp_path))
        assert out.strip() == "286"

    def test_list(self, capsys, tmp_path):
        _, out, _ = run(capsys, "enumerate", "--A", "7", "--M", "2", "--Lmin", "3", "--list",
                        "--out", str(tmp_path))
        assert out.split() == ["2", "3-4", "4-3"]


class TestErrors:
    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["enumerate", "--bogus"])
        assert exc.value.code != 0
        err = capsys.readouterr().err
        assert "unrecognized arguments" in err and len(err.strip().splitlines()) == 1

    def test_missing_data_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "train", "--data", str(tmp_path / "none.txt"),
                           "--out", str(tmp_path))
        assert code == 1 and "missing file" in err and len(err.strip().splitlines()) == 1

    def test_invalid_config(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("lam = -3\n")
        code, _, err = run(capsys, "enumerate", "--config", str(cfg), "--out", str(tmp_path))
        assert code == 1 and "invalid config" in err

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("speed = 3\n")
        code, _, err = run(capsys, "enumerate", "--config", str(cfg), "--out", str(tmp_path))
        assert code == 1 and "unknown key" in err

    def test_corrupt_checkpoint(self, capsys, tmp_path):
        ck = tmp_path / "x.lsnm"
        ck.write_bytes(b"garbage")
        vid = tmp_path / "v.stav"
        vid.write_bytes(b"STAV")
        code, _, err = run(capsys, "predict", "--checkpoint", str(ck), str(vid),
                           "--out", str(tmp_path))
        assert code == 1 and "bad input" in err


class TestCheckGrad:
    def test_passes_on_mini(self, capsys, tmp_path):
        code, out, _ = run(capsys, "check-grad", "--profile", "mini", "--out", str(tmp_path))
        assert code == 0 and out.startswith("max relative error")
        rows = list(csv.DictReader(open(tmp_path / "gradcheck.csv")))
        assert all(float(r["rel_error"]) < 1e-5 for r in rows)


class TestPipeline:
    def test_generate_train_eval_predict(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n_per_class = 3\nn_test_per_class = 2\nmax_outer_iters = 2\n"
                       "inner_epochs = 1\nbatch_size = 4\n")
        data, tr, ev = tmp_path / "data", tmp_path / "train", tmp_path / "eval"
        assert run(capsys, "generate", "--config", str(cfg), "--seed", "5", "--out", str(data))[0] == 0
        manifest = str(data / "manifest.txt")
        assert run(capsys, "train", "--config", str(cfg), "--data", manifest, "--out", str(tr))[0] == 0
        for name in ("checkpoint.lsnm", "loss_history.csv", "loss_history.png", "latents.csv",
                     "run_manifest.txt"):
            assert (tr / name).is_file(), name
        code, out, _ = run(capsys, "eval", "--config", str(cfg), "--data", manifest,
                           "--checkpoint", str(tr / "checkpoint.lsnm"), "--out", str(ev))
        assert code == 0 and "overall accuracy" in out
        metrics = {r["metric"]: r for r in csv.DictReader(open(ev / "metrics.csv"))}
        assert {"average_accuracy", "overall_accuracy", "boundary_recovery"} <= set(metrics)
        assert (ev / "confusion.png").stat().st_size > 0
        vid = str(data / "videos" / "test_00000.stav")
        code, out, _ = run(capsys, "predict", "--checkpoint", str(tr / "checkpoint.lsnm"), vid,
                           "--out", str(tmp_path / "pred"))
        assert code == 0 and vid in out

    def test_rerun_from_manifest_is_bit_identical(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n_per_class = 2\nn_test_per_class = 0\nmax_outer_iters = 2\ninner_epochs = 1\n")
        for tag in ("a", "b"):
            run(capsys, "generate", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / tag))
            run(capsys, "train", "--config", str(cfg), "--seed", "2",
                "--data", str(tmp_path / tag / "manifest.txt"), "--out", str(tmp_path / tag / "t"))
        for name in ("t/checkpoint.lsnm", "t/loss_history.csv", "manifest.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        ra = (tmp_path / "a" / "t" / "run_manifest.txt").read_text().splitlines()
        assert "seed = 2" in ra and "max_outer_iters = 2" in ra

    def test_pretrain(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n_per_class = 2\nn_test_per_class = 0\npretrain_epochs = 2\n")
        run(capsys, "generate", "--config", str(cfg), "--out", str(tmp_path / "d"))
        code, out, _ = run(capsys, "pretrain", "--config", str(cfg),
                           "--data", str(tmp_path / "d" / "manifest.txt"), "--out", str(tmp_path / "p"))
        assert code == 0 and (tmp_path / "p" / "pretrained.lsnm").is_file()
        code, _, _ = run(capsys, "train", "--config", str(cfg), "--init",
                         str(tmp_path / "p" / "pretrained.lsnm"), "--data",
                         str(tmp_path / "d" / "manifest.txt"), "--out", str(tmp_path / "t"))
        assert code == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "structact", "enumerate", "--A", "30", "--M", "4",
                           "--Lmin", "5", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "286"
