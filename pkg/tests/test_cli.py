import subprocess
import sys

import numpy as np
import pytest

from repreli import cli, io


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    assert cli.main(["synth", "--out-dir", str(out), "--n-ref", "120", "--n-test", "20", "--d", "6",
                     "--M", "3", "--num-classes", "3"]) == 0
    return out


def member_files(d, kind, m=3):
    return [str(d / f"{kind}_{i}.emb") for i in range(m)]


def test_synth_outputs(synth_dir):
    assert io.read_embeddings(synth_dir / "ref_0.emb").shape == (120, 6)
    assert len(io.read_labels(synth_dir / "test_labels.txt")) == 20
    assert len(io.read_labels(synth_dir / "test_ood.txt")) == 20


def test_score_csv(synth_dir, tmp_path):
    out = tmp_path / "s.csv"
    rc = cli.main(["score", "--refs", *member_files(synth_dir, "ref"), "--tests", *member_files(synth_dir, "test"),
                   "--method", "dist", "--dist-k", "3", "--out", str(out)])
    assert rc == 0
    rows = io.read_table(out)
    assert list(rows[0]) == ["point_index", "score", "polarity"]
    assert len(rows) == 20 and rows[0]["polarity"] == "lower"


def test_config_file_and_flag_precedence(synth_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("k = 5\nmetric = euclidean\n")
    args = ["score", "--refs", *member_files(synth_dir, "ref"), "--tests", *member_files(synth_dir, "test"),
            "--method", "nc", "--config", str(cfg)]
    cli.main(args + ["--out", str(tmp_path / "a.csv")])
    cli.main(args + ["--k", "12", "--out", str(tmp_path / "b.csv")])
    cli.main(args[:-2] + ["--k", "12", "--metric", "euclidean", "--out", str(tmp_path / "c.csv")])
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "b.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()


def test_vmf_pipeline(synth_dir, tmp_path):
    blob = tmp_path / "v.blob"
    refs, tests = member_files(synth_dir, "ref"), member_files(synth_dir, "test")
    assert cli.main(["fit-mixture", "--refs", *refs, "--kind", "vmf", "--normalize", "--c-mix", "2",
                     "--out", str(blob)]) == 0
    assert cli.main(["score", "--refs", *refs, "--tests", *tests, "--method", "ll", "--normalize",
                     "--models", str(blob), "--out", str(tmp_path / "ll.csv")]) == 0
    vals = [float(r["score"]) for r in io.read_table(tmp_path / "ll.csv")]
    assert np.all(np.isfinite(vals))


def test_reli_eval_rank(synth_dir, tmp_path, capsys):
    refs, tests = member_files(synth_dir, "ref"), member_files(synth_dir, "test")
    common = ["--refs", *refs, "--tests", *tests]
    reli = tmp_path / "r.csv"
    assert cli.main(["reli", *common, "--ref-labels", str(synth_dir / "ref_labels.txt"),
                     "--test-labels", str(synth_dir / "test_labels.txt"), "--reli-metric", "entropy",
                     "--head-epochs", "50", "--out", str(reli)]) == 0
    assert io.read_table(reli)[0]["metric"] == "entropy"
    for m in ("nc", "fv"):
        cli.main(["score", *common, "--method", m, "--k", "10", "--out", str(tmp_path / f"{m}.csv")])
    assert cli.main(["eval", "--scores", str(tmp_path / "nc.csv"), "--reli", str(reli), "--method", "nc"]) == 0
    assert "tau" in capsys.readouterr().out
    # the same reliability twice gives tied true rankings everywhere: an error, not a crash
    assert cli.main(["rank", "--scores", str(tmp_path / "nc.csv"), str(tmp_path / "fv.csv"),
                     "--reli", str(reli), str(reli)]) == 1


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["score", "--no-such-flag"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 2


def test_data_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.emb"
    bad.write_bytes(b"nonsense")
    assert cli.main(["score", "--refs", str(bad), str(bad), "--tests", str(bad), str(bad), "--method", "nc"]) == 1
    assert "error" in capsys.readouterr().err


def test_certify_small():
    assert cli.main(["certify", "--trials", "3"]) == 0


def test_certify_reports_failure(monkeypatch, capsys):
    from repreli.downstream import BoundCheckReport
    bad = BoundCheckReport(0, 0, 0.0, 0.0, 0.0, 1.0, lhs=1.0, rhs=0.5)
    monkeypatch.setattr(cli, "theorem2_harness", lambda cfg: [bad] * cfg.trials)
    assert cli.main(["certify", "--trials", "2"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_console_script_runs():
    r = subprocess.run([sys.executable, "-m", "repreli.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "certify" in r.stdout


def test_duplicated_ensemble_scores_saturate(tmp_path):
    rng = np.random.default_rng(0)
    r, t = rng.standard_normal((150, 4)), rng.standard_normal((10, 4))
    io.write_embeddings(r, tmp_path / "r.emb")
    io.write_embeddings(t, tmp_path / "t.emb")
    refs = [str(tmp_path / "r.emb")] * 3
    tests = [str(tmp_path / "t.emb")] * 3
    out = tmp_path / "nc.csv"
    assert cli.main(["score", "--refs", *refs, "--tests", *tests, "--method", "nc", "--k", "100",
                     "--out", str(out)]) == 0
    assert {float(row["score"]) for row in io.read_table(out)} == {1 / 3}


def test_eval_of_identical_columns_is_one(tmp_path, capsys):
    vals = [0.3, -1.0, 2.5, 0.1]
    io.write_table(tmp_path / "s.csv", ("point_index", "score", "polarity"),
                   [(i, io.fmt(v), "higher") for i, v in enumerate(vals)])
    io.write_table(tmp_path / "r.csv", ("point_index", "reliability", "metric"),
                   [(i, io.fmt(v), "brier") for i, v in enumerate(vals)])
    out = tmp_path / "e.csv"
    assert cli.main(["eval", "--scores", str(tmp_path / "s.csv"), "--reli", str(tmp_path / "r.csv"),
                     "--out", str(out)]) == 0
    assert float(io.read_table(out)[0]["tau"]) == 1.0
