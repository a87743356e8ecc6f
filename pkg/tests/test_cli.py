import numpy as np
import pytest

from mlsvm.cli import main
from mlsvm.data import inject_missing, load_dataset, write_dataset
from mlsvm.imputation import mean_impute
from mlsvm.synth import make_separable_blobs


@pytest.fixture()
def clean_csv(tmp_path):
    ds = make_separable_blobs(n=160, d=3, separation=8.0, seed=0)
    p = tmp_path / "clean.csv"
    write_dataset(ds, p)
    return str(p)


@pytest.fixture()
def noisy_csv(tmp_path):
    ds = inject_missing(make_separable_blobs(n=160, d=3, separation=8.0, seed=0),
                        0.1, seed=1)
    p = tmp_path / "noisy.csv"
    write_dataset(ds, p)
    return str(p)


class TestImpute:
    def test_rem_output_complete(self, noisy_csv, tmp_path):
        out = str(tmp_path / "full.csv")
        rc = main(["impute", "--in", noisy_csv, "--out", out, "--method", "rem",
                   "--report", str(tmp_path / "rep.txt")])
        assert rc == 0
        assert "?" not in open(out).read()
        assert "iterations" in open(tmp_path / "rep.txt").read()

    def test_mean_matches_library_oracle(self, noisy_csv, tmp_path):
        out = str(tmp_path / "full.csv")
        assert main(["impute", "--in", noisy_csv, "--out", out,
                     "--method", "mean"]) == 0
        got = load_dataset(out)
        expected = mean_impute(load_dataset(noisy_csv))
        assert np.allclose(got.features, expected.features)

    def test_unreadable_path_exits_1_no_partial_output(self, tmp_path):
        out = tmp_path / "never.csv"
        rc = main(["impute", "--in", str(tmp_path / "absent.csv"),
                   "--out", str(out)])
        assert rc == 1
        assert not out.exists()


class TestTrain:
    def test_train_then_predict_training_data(self, clean_csv, tmp_path):
        model = str(tmp_path / "m.model")
        preds = str(tmp_path / "p.txt")
        assert main(["train", "--in", clean_csv, "--model", model,
                     "--method", "svm", "--ud-folds", "3", "--seed", "1",
                     "--positive-class", "1"]) == 0
        assert main(["predict", "--model", model, "--in", clean_csv,
                     "--out", preds]) == 0
        ds = load_dataset(clean_csv)
        want = np.where(ds.labels == 1, 1, -1)
        got = np.array([int(ln.split()[0]) for ln in open(preds)])
        assert (got == want).mean() >= 0.99

    def test_multilevel_report_lists_levels(self, tmp_path):
        ds = make_separable_blobs(n=900, d=3, separation=8.0, seed=2)
        data = str(tmp_path / "big.csv")
        write_dataset(ds, data)
        report = tmp_path / "report.txt"
        rc = main(["train", "--in", data, "--model", str(tmp_path / "m.model"),
                   "--method", "mlsvm", "--coarsest-max", "80", "--Qdt", "300",
                   "--ud-folds", "3", "--seed", "0", "--report", str(report)])
        assert rc == 0
        lines = report.read_text().splitlines()
        assert len(lines) >= 3    # header plus at least two levels

    def test_same_seed_byte_identical_models(self, clean_csv, tmp_path):
        m1 = str(tmp_path / "m1.model")
        m2 = str(tmp_path / "m2.model")
        args = ["train", "--in", clean_csv, "--method", "wsvm",
                "--ud-folds", "3", "--seed", "9"]
        assert main(args + ["--model", m1]) == 0
        assert main(args + ["--model", m2]) == 0
        assert open(m1).read() == open(m2).read()

    def test_worker_count_byte_identical(self, clean_csv, tmp_path):
        m1 = str(tmp_path / "m1.model")
        m2 = str(tmp_path / "m2.model")
        base = ["train", "--in", clean_csv, "--method", "svm",
                "--ud-folds", "3", "--seed", "5"]
        assert main(base + ["--model", m1, "--workers", "1"]) == 0
        assert main(base + ["--model", m2, "--workers", "4"]) == 0
        assert open(m1).read() == open(m2).read()

    def test_fixed_hyperparameters_skip_search(self, clean_csv, tmp_path):
        model = str(tmp_path / "m.model")
        rc = main(["train", "--in", clean_csv, "--model", model,
                   "--method", "svm", "--C", "5.0", "--gamma", "0.3"])
        assert rc == 0
        gamma_line = [ln for ln in open(model) if ln.startswith("gamma")][0]
        assert float(gamma_line.split()[1]) == 0.3

    def test_fixed_hyperparameters_rejected_for_multilevel(self, clean_csv, tmp_path):
        rc = main(["train", "--in", clean_csv, "--model",
                   str(tmp_path / "m.model"), "--method", "mlsvm",
                   "--C", "5.0", "--gamma", "0.3"])
        assert rc == 1


class TestEvaluate:
    def test_evaluate_writes_report(self, clean_csv, tmp_path):
        out = tmp_path / "eval.txt"
        rc = main(["evaluate", "--in", clean_csv, "--method", "svm",
                   "--imputer", "none", "--folds", "3", "--ud-folds", "3",
                   "--seed", "0", "--out", str(out)])
        assert rc == 0
        assert out.read_text().startswith("fold")

    def test_all_classes_table(self, clean_csv, tmp_path, capsys):
        rc = main(["evaluate", "--in", clean_csv, "--method", "svm",
                   "--imputer", "none", "--folds", "3", "--ud-folds", "3",
                   "--all-classes"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("class")
        assert len(out.strip().splitlines()) == 3


class TestBenchmark:
    def test_header_and_rows(self, noisy_csv, tmp_path, capsys):
        rc = main(["benchmark", "--in", noisy_csv, "--ratios", "0.05,0.10",
                   "--methods", "svm", "--imputer", "mean", "--folds", "2",
                   "--ud-folds", "3", "--seed", "0"])
        assert rc == 0
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert lines[0].split("\t")[:3] == ["dataset", "r_mv", "method"]
        assert len(lines) == 3

    def test_method_filter(self, clean_csv, capsys):
        rc = main(["benchmark", "--in", clean_csv, "--ratios", "0",
                   "--methods", "svm,wsvm", "--imputer", "none", "--folds", "2",
                   "--ud-folds", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        methods = [ln.split("\t")[2] for ln in out.strip().splitlines()[1:]]
        assert methods == ["svm", "wsvm"]

    def test_small_fold_warning_still_runs(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        x = np.vstack([rng.normal(size=(3, 2)) + 6, rng.normal(size=(27, 2)) - 6])
        from mlsvm.data import Dataset
        ds = Dataset(x, np.zeros_like(x, dtype=bool),
                     np.array([1] * 3 + [2] * 27), (1, 2))
        p = tmp_path / "tiny.csv"
        write_dataset(ds, p)
        with pytest.warns(UserWarning):
            rc = main(["benchmark", "--in", str(p), "--ratios", "0",
                       "--methods", "svm", "--imputer", "none", "--folds", "4",
                       "--ud-folds", "2"])
        assert rc == 0


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, clean_csv, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("method=svm\nud-folds=3\nseed=3\n")
        m1 = str(tmp_path / "m1.model")
        m2 = str(tmp_path / "m2.model")
        assert main(["train", "--in", clean_csv, "--model", m1,
                     "--config", str(cfg)]) == 0
        assert main(["train", "--in", clean_csv, "--model", m2,
                     "--config", str(cfg), "--seed", "4"]) == 0
        ds = load_dataset(clean_csv)   # both models valid; seeds differ
        assert open(m1).read().startswith("mlsvm-model")
        assert open(m2).read().startswith("mlsvm-model")

    def test_malformed_config_is_usage_error(self, clean_csv, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("not a pair\n")
        rc = main(["train", "--in", clean_csv, "--model",
                   str(tmp_path / "m.model"), "--config", str(cfg)])
        assert rc == 1


class TestHelp:
    @pytest.mark.parametrize("sub,flags", [
        ("train", ["--method", "--Q", "--Qdt", "--coarsest-max", "--k",
                    "--final", "--seed", "--workers"]),
        ("impute", ["--method", "--max-iters", "--stagnation-tol"]),
        ("evaluate", ["--folds", "--imputer", "--normalize-scope"]),
        ("benchmark", ["--ratios", "--methods", "--include-impute-time"]),
        ("predict", ["--model", "--out"]),
    ])
    def test_subcommand_help_documents_flags(self, sub, flags, capsys):
        with pytest.raises(SystemExit):
            main([sub, "--help"])
        text = capsys.readouterr().out
        for flag in flags:
            assert flag in text

    def test_unknown_flag_exit_code_1(self, clean_csv):
        assert main(["train", "--in", clean_csv, "--nope"]) == 1
