import csv
import json
import time

import numpy as np
import pytest

from locus.artifact import Artifact
from locus.cli import EXIT_EMPTY, EXIT_INVALID, main
from locus.config import ConfigError, RunConfig
from locus.dataset import SyntheticSpec, generate_synthetic, write_csv
from locus.pipeline import fit_pipeline


def _strip_created(text):
    d = json.loads(text)
    d["provenance"].pop("created")
    return json.dumps(d, sort_keys=True)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli")
    assert main(["calibrate", "--out", str(path / "art.json")]) == 0
    assert main(["synth", "--seed", "77", "--n", "2000", "--out", str(path / "val.csv")]) == 0
    return path


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_calibrate_is_deterministic(workdir, tmp_path, capsys):
    assert main(["calibrate", "--out", str(tmp_path / "again.json")]) == 0
    assert "n1=" in capsys.readouterr().out
    assert _strip_created((workdir / "art.json").read_text()) == \
        _strip_created((tmp_path / "again.json").read_text())


def test_invalid_alpha_rejected_before_work(tmp_path, capsys):
    code = main(["calibrate", "--set", "alpha=1.5", "--out", str(tmp_path / "x.json")])
    assert code == EXIT_INVALID
    err = capsys.readouterr().err
    assert err.startswith("ERROR config:") and "alpha" in err
    assert not (tmp_path / "x.json").exists()


def test_score_reproduces_probes(workdir, tmp_path):
    art = Artifact.load(workdir / "art.json")
    probes = tmp_path / "probes.csv"
    with open(probes, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(art.feature_columns)
        w.writerows([[repr(v) for v in row] for row in art.probes["X"]])
    out = tmp_path / "scores.csv"
    assert main(["score", str(workdir / "art.json"), str(probes), "--out", str(out)]) == 0
    rows = _read_rows(out)
    assert tuple(rows[0]) == ("row", "U_alpha", "gamma", "accept")
    assert [float(r[1]) for r in rows[1:]] == art.probes["U_alpha"]


def test_score_empty_input(workdir, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("x0\n")
    out = tmp_path / "o.csv"
    assert main(["score", str(workdir / "art.json"), str(empty), "--out", str(out)]) == 0
    assert _read_rows(out) == [["row", "U_alpha", "gamma", "accept"]]


def test_score_extra_column(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,zzz\n1,2\n")
    assert main(["score", str(workdir / "art.json"), str(bad)]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert err.startswith("ERROR input:") and "zzz" in err


def test_flag_default_tau(workdir, tmp_path):
    out = tmp_path / "flagged.json"
    assert main(["flag", str(workdir / "art.json"), "--out", str(out)]) == 0
    art = Artifact.load(out)
    assert art.rule.lam == art.tau and art.rule.provenance == "default_tau"


def test_certify_tiny_eta_is_empty(workdir, tmp_path, capsys):
    out = tmp_path / "cert.json"
    code = main(["certify", str(workdir / "art.json"), "--validation",
                 str(workdir / "val.csv"), "--eta", "0.001", "--out", str(out),
                 "--report", str(tmp_path / "rep.json")])
    assert code == EXIT_EMPTY
    assert Artifact.load(out).rule.is_empty
    report = json.loads((tmp_path / "rep.json").read_text())
    assert report["extras"]["eps_H"] == pytest.approx(0.15917, abs=1e-4)


def test_tune_is_repeatable(workdir, tmp_path):
    lams = []
    for i in range(2):
        out = tmp_path / f"t{i}.json"
        assert main(["tune", str(workdir / "art.json"), "--validation",
                     str(workdir / "val.csv"), "--out", str(out)]) == 0
        lams.append(Artifact.load(out).rule.lam)
    assert lams[0] == lams[1]
    out = tmp_path / "alpha.json"
    assert main(["flag", str(workdir / "art.json"), "--method", "tuned-alpha",
                 "--validation", str(workdir / "val.csv"), "--out", str(out)]) == 0
    assert Artifact.load(out).rule.provenance == "tuned_alpha"


def test_inspect_and_schema_refusal(workdir, tmp_path, capsys):
    assert main(["inspect", str(workdir / "art.json")]) == 0
    assert json.loads(capsys.readouterr().out)["probes_reproduce"] is True
    d = json.loads((workdir / "art.json").read_text())
    d["schema_version"] = 99
    (tmp_path / "future.json").write_text(json.dumps(d))
    assert main(["inspect", str(tmp_path / "future.json")]) == EXIT_INVALID
    assert "schema_version" in capsys.readouterr().err


def test_benchmark_smoke(tmp_path, capsys):
    start = time.perf_counter()
    code = main(["benchmark", "--seeds", "0,1,2", "--set", "synthetic=" + json.dumps(
        SyntheticSpec(n_samples=2000).to_dict()), "--out", str(tmp_path / "res.json"),
        "--table", str(tmp_path / "table.txt")])
    assert code == 0
    assert time.perf_counter() - start < 120
    assert "locus" in (tmp_path / "table.txt").read_text()
    assert len(json.loads((tmp_path / "res.json").read_text())["runs"]) == 3


def test_benchmark_malformed_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"eta": "lots"}))
    assert main(["benchmark", "--config", str(cfg)]) == EXIT_INVALID
    assert "field 'eta'" in capsys.readouterr().err
    cfg.write_text(json.dumps({"no_such_field": 1}))
    assert main(["benchmark", "--config", str(cfg)]) == EXIT_INVALID


def test_csv_data_source(tmp_path):
    data, _ = generate_synthetic(SyntheticSpec(n_samples=800, n_features=2, seed=4))
    write_csv(data, tmp_path / "d.csv", "target")
    code = main(["calibrate", "--set", f"data_source=csv",
                 "--set", f"csv_path={tmp_path / 'd.csv'}", "--set", "target_column=target",
                 "--set", "engine=knn_empirical", "--out", str(tmp_path / "a.json")])
    assert code == 0
    assert Artifact.load(tmp_path / "a.json").feature_columns == ["x0", "x1"]


def test_config_hash_tracks_semantic_fields():
    base = RunConfig()
    assert base.hash() == RunConfig().hash()
    assert base.hash() != base.with_overrides(alpha=0.2).hash()
    assert base.hash() != base.with_overrides(engine_params={"n_draws": 5}).hash()
    with pytest.raises(ConfigError, match="alpha"):
        RunConfig(alpha=1.5)


@pytest.mark.parametrize("overrides", [
    {},
    {"engine": "knn_empirical"},
    {"aggregation": "envelope", "gamma": "scarcity", "predictor": "knn_regressor",
     "predictor_params": {"n_neighbors": 15}},
])
def test_artifact_round_trip_exact(overrides, tmp_path):
    config = RunConfig(synthetic=SyntheticSpec(n_samples=1500).to_dict(), **overrides)
    pipe = fit_pipeline(config)
    art = Artifact.from_pipeline(pipe, config)
    art.save(tmp_path / "a.json")
    back = Artifact.load(tmp_path / "a.json")
    X = np.asarray(art.probes["X"])
    assert len(X) == 16
    np.testing.assert_array_equal(back.score_raw(X), art.score_raw(X))
    assert back.check_probes()
