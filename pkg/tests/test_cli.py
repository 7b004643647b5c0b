import csv

import numpy as np
import pytest

from obliqforest import forest as F
from obliqforest.cli import main

FAST = ["--n-tree", "15"]


def _rows(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("# config: ")
    return list(csv.reader(lines[1:]))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--n", "300", "--n-per-class", "3", "--seed", "2",
                 "--out", str(d / "d.csv")]) == 0
    assert main(["fit", "--data", str(d / "d.csv"), "--time", "time", "--status", "status",
                 "--out", str(d / "m.json"), "--seed", "1", *FAST]) == 0
    return d


def test_simulate_writes_sidecar(work):
    rows = _rows(work / "d_relevance.csv")
    assert rows[0] == ["name", "class", "relevance", "partner"]
    assert len(rows) == 1 + 15


def test_simulate_max_corr(tmp_path):
    assert main(["simulate", "--n", "500", "--max-corr", "0.15", "--out", str(tmp_path / "s.csv"),
                 "--relevance", str(tmp_path / "rel.csv")]) == 0
    assert (tmp_path / "rel.csv").exists()
    assert len(_rows(tmp_path / "s.csv")) == 501


def test_fit_summary_line(work, capsys):
    assert main(["fit", "--data", str(work / "d.csv"), "--time", "time", "--status", "status",
                 "--out", str(work / "m2.json"), *FAST]) == 0
    out = capsys.readouterr().out
    assert "n=300" in out and "p=15" in out and "n_tree=15" in out and "elapsed=" in out


def test_fit_missing_status_is_usage_error(work, capsys):
    code = main(["fit", "--data", str(work / "d.csv"), "--time", "time", "--out", "x.json"])
    assert code == 1
    assert "usage" in capsys.readouterr().err


def test_fit_bad_mtry(work, capsys):
    code = main(["fit", "--data", str(work / "d.csv"), "--time", "time", "--status", "status",
                 "--out", str(work / "x.json"), "--mtry", "0"])
    assert code == 1
    assert "mtry must be ≥ 1" in capsys.readouterr().err


def test_fit_missing_file_is_io_error(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "none.csv"), "--time", "time", "--status",
                 "status", "--out", str(tmp_path / "m.json")]) == 2


def test_fit_bad_data_is_validation_error(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("x,time,status\n1,1,7\n")
    assert main(["fit", "--data", str(tmp_path / "bad.csv"), "--time", "time", "--status",
                 "status", "--out", str(tmp_path / "m.json")]) == 1
    assert "invalid status" in capsys.readouterr().err


def test_predict_round_trip(work):
    out = work / "p.csv"
    assert main(["predict", "--model", str(work / "m.json"), "--data", str(work / "d.csv"),
                 "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0][:2] == ["row", "mortality"] and len(rows[0]) == 5
    surv = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
    assert surv.shape == (300, 3)
    assert np.all((surv >= 0) & (surv <= 1))
    assert np.all(np.diff(surv, axis=1) <= 0)


def test_predict_time_zero(work):
    out = work / "p0.csv"
    assert main(["predict", "--model", str(work / "m.json"), "--data", str(work / "d.csv"),
                 "--times", "0", "--out", str(out)]) == 0
    assert all(float(r[2]) == 1.0 for r in _rows(out)[1:])


def test_predict_column_mismatch(work, tmp_path, capsys):
    lines = (work / "d.csv").read_text().splitlines()
    body = [lines[1] + ",extra"] + [ln + ",0" for ln in lines[2:]]
    (tmp_path / "x.csv").write_text("\n".join(body) + "\n")
    assert main(["predict", "--model", str(work / "m.json"), "--data", str(tmp_path / "x.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 1
    assert "unknown columns: extra" in capsys.readouterr().err
    hdr = lines[1].split(",")
    keep = [i for i, h in enumerate(hdr) if h != "irr_1"]
    body = [",".join(ln.split(",")[i] for i in keep) for ln in lines[1:]]
    (tmp_path / "y.csv").write_text("\n".join(body) + "\n")
    assert main(["predict", "--model", str(work / "m.json"), "--data", str(tmp_path / "y.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 1
    assert "missing columns: irr_1" in capsys.readouterr().err


def test_corrupt_model(work, tmp_path):
    (tmp_path / "m.json").write_text((work / "m.json").read_text()[:100])
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--data", str(work / "d.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 1


@pytest.mark.parametrize("technique", ["negation", "permutation", "anova"])
def test_importance(work, technique):
    out = work / f"vi_{technique}.csv"
    args = ["importance", "--model", str(work / "m.json"), "--technique", technique,
            "--out", str(out)]
    if technique != "anova":
        args += ["--data", str(work / "d.csv"), "--time", "time", "--status", "status"]
    assert main(args) == 0
    rows = _rows(out)
    assert rows[0] == ["name", "vi"] and len(rows) == 16


def test_importance_needs_data(work):
    assert main(["importance", "--model", str(work / "m.json"), "--technique", "negation",
                 "--out", str(work / "v.csv")]) == 1


def test_evaluate(work):
    out = work / "ev.csv"
    assert main(["evaluate", "--model", str(work / "m.json"), "--data", str(work / "d.csv"),
                 "--time", "time", "--status", "status", "--out", str(out)]) == 0
    metrics = dict(_rows(out)[1:])
    assert {"harrell_c", "td_c", "ibs", "ipa", "t1", "t2"} <= set(metrics)
    assert 0.5 < float(metrics["harrell_c"]) <= 1


def test_threads_do_not_change_outputs(work, monkeypatch):
    base = ["fit", "--data", str(work / "d.csv"), "--time", "time", "--status", "status",
            "--seed", "9", *FAST]
    assert main(base + ["--out", str(work / "t1.json"), "--threads", "1"]) == 0
    monkeypatch.setenv("OBLIQFOREST_THREADS", "3")
    assert main(base + ["--out", str(work / "t3.json")]) == 0
    assert (work / "t1.json").read_bytes() == (work / "t3.json").read_bytes()
    a = F.load(work / "t1.json")
    assert a.params.seed == 9


def test_bad_env_threads(work, monkeypatch):
    monkeypatch.setenv("OBLIQFOREST_THREADS", "many")
    assert main(["fit", "--data", str(work / "d.csv"), "--time", "time", "--status", "status",
                 "--out", str(work / "z.json"), *FAST]) == 1


def test_repeat_runs_are_byte_identical(work):
    for k in (1, 2):
        assert main(["importance", "--model", str(work / "m.json"), "--technique", "permutation",
                     "--data", str(work / "d.csv"), "--seed", "4",
                     "--out", str(work / f"rep{k}.csv")]) == 0
    assert (work / "rep1.csv").read_bytes() == (work / "rep2.csv").read_bytes()


def test_bench_cv(work):
    out = work / "cv.csv"
    assert main(["bench", "cv", "--data", str(work / "d.csv"), "--time", "time", "--status",
                 "status", "--n-runs", "2", "--learner", "fast", "--learner", "random",
                 "--n-tree", "8", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0][:3] == ["task", "learner", "run"] and len(rows) == 5


def test_bench_vi_grid_override(work):
    out = work / "vi.csv"
    assert main(["bench", "vi", "--grid", "default", "--n", "150", "--max-corr", "0.3,0",
                 "--n-per-class", "2", "--technique", "anova", "--n-tree", "8",
                 "--out", str(out)]) == 0
    rows = _rows(out)
    cells = {(r[0], r[1]) for r in rows[1:]}
    assert cells == {("150", "0.3"), ("150", "0.0")}


def test_bootstrap_flag(work):
    assert main(["fit", "--data", str(work / "d.csv"), "--time", "time", "--status", "status",
                 "--out", str(work / "u.json"), "--bootstrap", "uniform010", *FAST]) == 0
    assert F.load(work / "u.json").params.bootstrap_mode == "uniform_0_10"
    assert main(["fit", "--data", str(work / "d.csv"), "--time", "time", "--status", "status",
                 "--out", str(work / "u.json"), "--bootstrap", "poisson"]) == 1
