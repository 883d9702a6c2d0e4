import csv
import json
from pathlib import Path

import numpy as np
import pytest

from winprop.cli import main
from winprop.datastore import Quarter, read_outcomes, read_snapshots, snapshot_path
from winprop.model import LogisticModel, load_model, save_model

QUARTERS = "2013Q1,2013Q2,2013Q4,2014Q1"


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["simulate", "--seed", "42", "--leads", "300", "--quarters", QUARTERS, "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained(data, tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    train_csv, model = d / "train.csv", d / "model.json"
    assert main(["assemble", "--target", "2014Q1", "--data", str(data), "--out", str(train_csv)]) == 0
    assert main(["train", "--train", str(train_csv), "--l2", "1.0", "--out", str(model)]) == 0
    return d


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def manifest(path):
    return json.loads(Path(f"{path}.manifest.json").read_text())


class TestSimulate:
    def test_outputs_and_manifest(self, data):
        names = sorted(p.name for p in data.iterdir())
        for q in QUARTERS.split(","):
            assert f"snapshots_{q}.csv" in names and f"outcomes_{q}.csv" in names
        assert "ground_truth.json" in names
        doc = json.loads((data / "simulate.manifest.json").read_text())
        assert doc["command"] == "simulate" and doc["config"]["seed"] == 42
        assert len(doc["outputs"]) == 9
        assert "wall_time" not in doc

    def test_repeat_is_byte_identical(self, tmp_path, monkeypatch):
        # same flags, including the output path, from two working directories
        for d in ("a", "b"):
            (tmp_path / d).mkdir()
            monkeypatch.chdir(tmp_path / d)
            assert main(["simulate", "--leads", "50", "--quarters", "2013Q1", "--out", "sim"]) == 0
        first = sorted((tmp_path / "a" / "sim").iterdir())
        assert len(first) == 4
        for f in first:
            assert f.read_bytes() == (tmp_path / "b" / "sim" / f.name).read_bytes(), f.name

    @pytest.mark.parametrize("flag", [["--leads", "0"], ["--positive-rate", "1.5"], ["--quarters", "2013Q9"], ["--seller-noise", "-1"]])
    def test_usage_errors(self, tmp_path, flag):
        assert main(["simulate", "--out", str(tmp_path), *flag]) == 2


class TestAssemble:
    def test_sources_in_manifest(self, trained):
        doc = manifest(trained / "train.csv")
        assert doc["source_quarters"] == ["2013Q1", "2013Q4"]
        assert doc["target_quarter"] == "2014Q1"
        assert doc["rows"] == len(rows(trained / "train.csv")) - 1

    def test_no_seasonality(self, data, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["assemble", "--target", "2014Q1", "--data", str(data), "--out", str(out), "--no-seasonality"]) == 0
        assert manifest(out)["source_quarters"] == ["2013Q4"]

    def test_missing_quarter(self, data, tmp_path, capsys):
        # 2015Q1 needs 2014Q1 (present) and 2014Q4 (absent)
        assert main(["assemble", "--target", "2015Q1", "--data", str(data), "--out", str(tmp_path / "u.csv")]) == 1
        assert "2014Q4" in capsys.readouterr().err

    def test_all_won_is_exit_one(self, data, tmp_path):
        src = Quarter(2013, 4)
        snaps = read_snapshots(snapshot_path(data, src))
        outs = read_outcomes(data / f"outcomes_{src}.csv")
        won = {o.lead_id for o in outs if o.status == "won"}
        (tmp_path / f"snapshots_{src}.csv").write_text(
            "".join(line for i, line in enumerate(snapshot_path(data, src).read_text().splitlines(True))
                    if i == 0 or line.split(",", 1)[0] in won)
        )
        (tmp_path / f"outcomes_{src}.csv").write_text(
            "".join(line for i, line in enumerate((data / f"outcomes_{src}.csv").read_text().splitlines(True))
                    if i == 0 or line.split(",", 1)[0] in won)
        )
        assert snaps  # source data was non-empty
        rc = main(["assemble", "--target", "2014Q1", "--data", str(tmp_path), "--no-seasonality",
                   "--out", str(tmp_path / "t.csv")])
        assert rc == 1


class TestTrain:
    def test_converged(self, trained):
        report = json.loads((trained / "model.json.report.json").read_text())
        assert report["converged"] is True
        model = load_model(trained / "model.json")
        assert model.train_meta["target_quarter"] == "2014Q1"
        assert model.train_meta["source_quarters"] == ["2013Q1", "2013Q4"]

    def test_max_iters_one(self, trained, tmp_path, capsys):
        out = tmp_path / "m.json"
        assert main(["train", "--train", str(trained / "train.csv"), "--max-iters", "1", "--out", str(out)]) == 0
        assert json.loads(Path(f"{out}.report.json").read_text())["converged"] is False
        assert "warning" in capsys.readouterr().err
        assert main(["train", "--train", str(trained / "train.csv"), "--max-iters", "1", "--strict",
                     "--out", str(out)]) == 1

    @pytest.mark.parametrize("flag", [["--l2", "-1"], ["--max-iters", "0"], ["--tol", "0"]])
    def test_usage_errors(self, trained, tmp_path, flag):
        assert main(["train", "--train", str(trained / "train.csv"), "--out", str(tmp_path / "m.json"), *flag]) == 2

    def test_config_file_defaults(self, trained, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"max_iters": 1}))
        out = tmp_path / "m.json"
        assert main(["train", "--config", str(cfg), "--train", str(trained / "train.csv"), "--out", str(out)]) == 0
        assert json.loads(Path(f"{out}.report.json").read_text())["iterations"] == 1
        # an explicit flag beats the file
        assert main(["train", "--config", str(cfg), "--max-iters", "500", "--train", str(trained / "train.csv"),
                     "--out", str(out)]) == 0
        assert json.loads(Path(f"{out}.report.json").read_text())["converged"] is True
        cfg.write_text(json.dumps({"max_iterz": 1}))
        assert main(["train", "--config", str(cfg), "--train", str(trained / "train.csv"), "--out", str(out)]) == 2


class TestScore:
    def test_scores_every_snapshot(self, data, trained):
        out = trained / "scores.csv"
        assert main(["score", "--model", str(trained / "model.json"),
                     "--snapshots", str(data / "snapshots_2014Q1.csv"), "--out", str(out)]) == 0
        table = rows(out)
        assert table[0] == ["lead_id", "week", "propensity"]
        assert len(table) - 1 == len(read_snapshots(data / "snapshots_2014Q1.csv"))
        assert all(0 < float(r[2]) < 1 for r in table[1:])

    def test_zero_weight_model(self, data, trained, tmp_path):
        m = load_model(trained / "model.json")
        zero = LogisticModel(np.zeros_like(m.weights), 0.0, m.vocab, m.train_meta)
        save_model(zero, tmp_path / "zero.json")
        out = tmp_path / "s.csv"
        assert main(["score", "--model", str(tmp_path / "zero.json"),
                     "--snapshots", str(data / "snapshots_2014Q1.csv"), "--out", str(out)]) == 0
        assert {r[2] for r in rows(out)[1:]} == {"0.5"}

    def test_empty_snapshot_file(self, data, trained, tmp_path):
        header = (data / "snapshots_2014Q1.csv").read_text().splitlines(True)[0]
        (tmp_path / "empty.csv").write_text(header)
        out = tmp_path / "s.csv"
        assert main(["score", "--model", str(trained / "model.json"), "--snapshots", str(tmp_path / "empty.csv"),
                     "--out", str(out)]) == 0
        assert out.read_text() == "lead_id,week,propensity\n"

    def test_missing_model_file(self, data, tmp_path):
        assert main(["score", "--model", str(tmp_path / "nope.json"),
                     "--snapshots", str(data / "snapshots_2014Q1.csv"), "--out", str(tmp_path / "s.csv")]) == 1


@pytest.fixture(scope="module")
def scores(data, trained):
    out = trained / "scores_eval.csv"
    assert main(["score", "--model", str(trained / "model.json"),
                 "--snapshots", str(data / "snapshots_2014Q1.csv"), "--out", str(out)]) == 0
    return out


class TestEvaluate:
    def test_model_and_seller_rows(self, data, trained, scores, tmp_path):
        out = tmp_path / "report.csv"
        assert main(["evaluate", "--scores", str(scores), "--data", str(data), "--quarter", "2014Q1",
                     "--baseline", "seller", "--curves-dir", str(tmp_path / "curves"), "--out", str(out)]) == 0
        table = rows(out)
        labels = [r[0] for r in table[1:]]
        assert labels == [str(w) for w in range(1, 14)] + ["model"] + [str(w) for w in range(1, 14)] + ["seller"]
        assert table[0][0] == "week" and len(table[0]) == 9
        assert any((tmp_path / "curves").glob("gain_model_*_week05.csv"))

    def test_segment_column_count(self, data, scores, tmp_path):
        # restrict the snapshots to two geographies
        src = (data / "snapshots_2014Q1.csv").read_text().splitlines(True)
        col = src[0].rstrip("\n").split(",").index("geography")
        keep = [src[0]] + [line for line in src[1:] if line.split(",")[col] in ("GCG", "Japan")]
        (tmp_path / "s.csv").write_text("".join(keep))
        out = tmp_path / "r.csv"
        assert main(["evaluate", "--scores", str(scores), "--snapshots", str(tmp_path / "s.csv"),
                     "--outcomes", str(data / "outcomes_2014Q1.csv"), "--segment", "geography",
                     "--out", str(out)]) == 0
        assert rows(out)[0] == ["week", "GCG", "Japan"]

    def test_week_without_positives_is_na(self, tmp_path):
        snaps = ["lead_id,quarter,week,geography,lead_age"]
        outs = ["lead_id,quarter,status,week"]
        scores = ["lead_id,week,propensity"]
        for i in range(4):
            snaps.append(f"L{i},2014Q1,1,GCG,{i}")
            snaps.append(f"L{i},2014Q1,2,GCG,{i + 7}")
            scores += [f"L{i},1,0.{9 - i}", f"L{i},2,0.{9 - i}"]
            outs.append(f"L{i},2014Q1,lost," if i % 2 else f"L{i},2014Q1,won,")
        snaps.append("L9,2014Q1,3,GCG,1")
        scores.append("L9,3,0.5")
        outs.append("L9,2014Q1,lost,")
        for name, lines in (("s.csv", snaps), ("o.csv", outs), ("p.csv", scores)):
            (tmp_path / name).write_text("\n".join(lines) + "\n")
        out = tmp_path / "r.csv"
        assert main(["evaluate", "--scores", str(tmp_path / "p.csv"), "--snapshots", str(tmp_path / "s.csv"),
                     "--outcomes", str(tmp_path / "o.csv"), "--out", str(out)]) == 0
        table = rows(out)
        # weeks 1 and 2 repeat the four-point fixture; week 3 has no win
        assert table[1][1] == table[2][1] == "0.625"
        assert table[3][1] == "NA" and table[-1] == ["average", "0.625"]

    def test_empty_join(self, data, tmp_path):
        (tmp_path / "p.csv").write_text("lead_id,week,propensity\nnobody,1,0.5\n")
        assert main(["evaluate", "--scores", str(tmp_path / "p.csv"), "--data", str(data), "--quarter", "2014Q1",
                     "--out", str(tmp_path / "r.csv")]) == 1

    def test_needs_a_data_source(self, tmp_path):
        assert main(["evaluate", "--scores", "x.csv", "--out", str(tmp_path / "r.csv")]) == 2


def test_replay_reproduces_outputs(trained, tmp_path):
    before = (trained / "model.json").read_bytes()
    assert main(["replay", f"{trained / 'model.json'}.manifest.json"]) == 0
    assert (trained / "model.json").read_bytes() == before


def test_timing_flag_adds_wall_time(data, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["assemble", "--target", "2014Q1", "--data", str(data), "--out", str(out), "--timing"]) == 0
    assert "wall_time" in manifest(out)
