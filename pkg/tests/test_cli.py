import json
import os
from pathlib import Path

import numpy as np
import pytest

from p300kit.cli import main
from p300kit.data import SyntheticConfig, generate_subject, write_epochs


@pytest.fixture
def subject_file(tmp_path):
    cfg = SyntheticConfig(n_subjects=1, trials_per_subject=120,
                          p300_amplitude=2.0, seed=13)
    path = tmp_path / "subject.epo"
    write_epochs(path, generate_subject(cfg, 0))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestAnalyze:
    def test_sepconv1d_csv_total(self, capsys):
        code, out, _ = run(capsys, "analyze", "--arch", "sepconv1d",
                           "--channels", "6", "--samples", "206",
                           "--format", "csv")
        assert code == 0
        assert "TOTAL,,225,6301" in out

    def test_json_format(self, capsys):
        code, out, _ = run(capsys, "analyze", "--arch", "eegnet",
                           "--format", "json")
        assert code == 0
        payload = json.loads(out)
        assert payload["total_params"] == 1394
        assert payload["warnings"]

    def test_all_architectures(self, capsys):
        code, out, _ = run(capsys, "analyze", "--arch", "all", "--format", "csv")
        assert code == 0
        assert out.count("TOTAL,,") == 12

    def test_unknown_architecture_lists_builtins(self, capsys):
        code, _, err = run(capsys, "analyze", "--arch", "nosuch")
        assert code == 2
        assert err.startswith("error: ")
        assert "sepconv1d" in err and "\n" not in err.strip()

    def test_bn_running_stats_toggle(self, capsys):
        code, out, _ = run(capsys, "analyze", "--arch", "eegnet",
                           "--format", "csv", "--bn-running-stats")
        assert code == 0
        assert "TOTAL,,1474," in out


class TestSynth:
    def test_deterministic_outputs(self, tmp_path, capsys):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out_dir in (a, b):
            code, _, _ = run(capsys, "synth", "--out", str(out_dir),
                             "--subjects", "2", "--trials", "120", "--seed", "7")
            assert code == 0
        for name in ("subject_00.epo", "subject_01.epo"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_dry_run_no_side_effects(self, tmp_path, capsys):
        out_dir = tmp_path / "never"
        code, out, _ = run(capsys, "synth", "--out", str(out_dir),
                           "--subjects", "1", "--trials", "60",
                           "--seed", "3", "--dry-run")
        assert code == 0
        assert "command=synth" in out and "seed=3" in out
        assert not out_dir.exists()


class TestPreprocess:
    def test_writes_cleaned_copy(self, tmp_path, subject_file, capsys):
        out_dir = tmp_path / "pre"
        code, out, _ = run(capsys, "preprocess", "--inputs", subject_file,
                           "--out", str(out_dir))
        assert code == 0
        cleaned = out_dir / Path(subject_file).name
        assert cleaned.exists()
        from p300kit.data import read_epochs
        es = read_epochs(cleaned)
        # detrended output has (near-)zero mean rows at f32 resolution
        assert np.abs(es.epochs.mean(axis=2)).max() < 1e-5

    def test_missing_input_is_single_line_error(self, tmp_path, capsys):
        code, _, err = run(capsys, "preprocess", "--inputs",
                           str(tmp_path / "nope.epo"), "--out", str(tmp_path))
        assert code == 2
        assert err.startswith("error: ") and "nope.epo" in err


class TestTrain:
    def test_trains_and_writes_artifacts(self, tmp_path, subject_file, capsys):
        model_path = tmp_path / "model.npz"
        code, out, _ = run(capsys, "train", "--arch", "sepconv1d",
                           "--train", subject_file, "--filters", "2",
                           "--epochs", "5", "--patience", "5",
                           "--seed", "1", "--out", str(model_path))
        assert code == 0
        assert model_path.exists()
        saved = np.load(model_path)
        assert saved["params"].size == 161  # sepconv1d, 2 filters, 6x206
        history = (tmp_path / "model_history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_loss"
        assert len(history) == 6

    def test_analysis_only_architecture_message(self, subject_file, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--arch", "eegnet",
                           "--train", subject_file,
                           "--out", str(tmp_path / "m.npz"))
        assert code == 2
        assert "analysis-only" in err

    def test_input_shape_derived_from_data(self, tmp_path, capsys):
        cfg = SyntheticConfig(n_subjects=1, trials_per_subject=90, channels=8,
                              samples=160, p300_amplitude=2.0, seed=29)
        data = tmp_path / "wide.epo"
        write_epochs(data, generate_subject(cfg, 0))
        model_path = tmp_path / "wide.npz"
        code, _, _ = run(capsys, "train", "--arch", "fcnn",
                         "--train", str(data), "--epochs", "2",
                         "--patience", "2", "--out", str(model_path))
        assert code == 0
        saved = np.load(model_path)
        assert saved["params"].size == 2 * 8 * 160 + 5


class TestEvalWithin:
    def test_filter_sweep_csv(self, tmp_path, subject_file, capsys):
        prefix = str(tmp_path / "sweep")
        code, out, _ = run(capsys, "eval-within", "--arch", "sepconv1d",
                           "--data", subject_file,
                           "--filters", "1,2,4,8,16,32",
                           "--reps", "1", "--folds", "2",
                           "--epochs", "3", "--patience", "3",
                           "--seed", "2", "--jobs", "2", "--out", prefix)
        assert code == 0
        sweep = Path(prefix + "_sweep.csv").read_text().splitlines()
        assert sweep[0] == "filters,mean_auc,std_auc"
        assert len(sweep) == 7
        assert [int(line.split(",")[0]) for line in sweep[1:]] == [1, 2, 4, 8, 16, 32]
        for f in (1, 2, 4, 8, 16, 32):
            assert Path(f"{prefix}_f{f}.csv").exists()
            assert Path(f"{prefix}_f{f}.json").exists()

    def test_single_run_outputs(self, tmp_path, subject_file, capsys):
        prefix = str(tmp_path / "one")
        code, _, _ = run(capsys, "eval-within", "--arch", "fcnn",
                         "--data", subject_file, "--reps", "2", "--folds", "3",
                         "--epochs", "3", "--patience", "3",
                         "--seed", "5", "--out", prefix)
        assert code == 0
        lines = Path(prefix + ".csv").read_text().splitlines()
        assert lines[0] == "subject,repetition,fold,auc,epochs"
        assert len(lines) == 1 + 2 * 3
        payload = json.loads(Path(prefix + ".json").read_text())
        assert payload["n_records"] == 6
        assert "mean_train_seconds" in payload


class TestEvalCross:
    def test_three_subject_protocol(self, tmp_path, capsys):
        cfg = SyntheticConfig(n_subjects=3, trials_per_subject=90,
                              p300_amplitude=2.0, seed=21)
        paths = []
        for i in range(3):
            p = tmp_path / f"s{i}.epo"
            write_epochs(p, generate_subject(cfg, i))
            paths.append(str(p))
        prefix = str(tmp_path / "cross")
        code, _, _ = run(capsys, "eval-cross", "--arch", "sepconv1d",
                         "--data", *paths, "--filters", "2",
                         "--epochs", "3", "--patience", "3",
                         "--seed", "4", "--out", prefix)
        assert code == 0
        lines = Path(prefix + ".csv").read_text().splitlines()
        assert len(lines) == 4  # header + one fold per subject

    def test_two_subjects_rejected(self, tmp_path, capsys):
        cfg = SyntheticConfig(n_subjects=2, trials_per_subject=60, seed=22)
        paths = []
        for i in range(2):
            p = tmp_path / f"s{i}.epo"
            write_epochs(p, generate_subject(cfg, i))
            paths.append(str(p))
        code, _, err = run(capsys, "eval-cross", "--arch", "sepconv1d",
                           "--data", *paths, "--out", str(tmp_path / "x"))
        assert code == 2
        assert "3 subjects" in err


class TestReport:
    def test_aggregates_records(self, tmp_path, capsys):
        rec = tmp_path / "r_f4.csv"
        rec.write_text("subject,repetition,fold,auc,epochs\n"
                       "s,0,0,0.8,10\ns,0,1,0.9,12\n")
        code, out, _ = run(capsys, "report", "--records", str(rec))
        assert code == 0
        assert "n=2" in out and "0.8500" in out

    def test_sweep_mode_plot_csv(self, tmp_path, capsys):
        for f, auc in ((4, 0.8), (8, 0.9)):
            (tmp_path / f"r_f{f}.csv").write_text(
                "subject,repetition,fold,auc,epochs\n"
                f"s,0,0,{auc},10\n")
        out_file = tmp_path / "sweep.csv"
        code, _, _ = run(capsys, "report", "--records",
                         str(tmp_path / "r_f4.csv"), str(tmp_path / "r_f8.csv"),
                         "--sweep", "--format", "csv", "--out", str(out_file))
        assert code == 0
        lines = out_file.read_text().splitlines()
        assert lines[0] == "filters,mean_auc,std_auc"
        assert lines[1].startswith("4,") and lines[2].startswith("8,")


class TestSeedResolution:
    def test_env_fallback(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("P300_SEED", "99")
        code, out, _ = run(capsys, "synth", "--out", str(tmp_path / "x"),
                           "--subjects", "1", "--trials", "60", "--dry-run")
        assert code == 0
        assert "seed=99" in out

    def test_flag_beats_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("P300_SEED", "99")
        code, out, _ = run(capsys, "synth", "--out", str(tmp_path / "x"),
                           "--subjects", "1", "--trials", "60",
                           "--seed", "5", "--dry-run")
        assert code == 0
        assert "seed=5" in out

    def test_config_file_defaults(self, tmp_path, subject_file, capsys):
        conf = tmp_path / "run.conf"
        conf.write_text("# defaults\nseed=17\nepochs=4\npatience=4\n")
        prefix = str(tmp_path / "cfg")
        code, out, _ = run(capsys, "eval-within", "--arch", "fcnn",
                           "--data", subject_file, "--reps", "1", "--folds", "2",
                           "--config", str(conf), "--out", prefix, "--dry-run")
        assert code == 0
        assert "seed=17" in out

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        conf = tmp_path / "bad.conf"
        conf.write_text("warp=9\n")
        code, _, err = run(capsys, "synth", "--out", str(tmp_path / "x"),
                           "--subjects", "1", "--trials", "60",
                           "--config", str(conf))
        assert code == 2
        assert "warp" in err
