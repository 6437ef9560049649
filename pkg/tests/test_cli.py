import json

import pytest

from halomis import cli

from conftest import make_sample


def _run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert _run("synth", "--out", d, "--n", 200, "--pos-rate", 0.1, "--seed", 3) == 0
    assert _run("extract", "--dataset", d / "dataset.jsonl", "--backend", d / "backend.json",
                "--cache-dir", d / "cache") == 0
    return d


def _common(d):
    return ["--dataset", d / "dataset.jsonl", "--backend", d / "backend.json", "--cache-dir", d / "cache"]


def test_ingest_reports_bad_lines(tmp_path, capsys):
    p = tmp_path / "d.jsonl"
    p.write_text('{"id": "a", "prompt": "q", "response": "r", "label_hallucination": 0}\n'
                 '{"id": "b", "prompt": "q", "response": "r", "label_hallucination": 7}\n', encoding="utf-8")
    assert _run("ingest", "--dataset", p, "--out", tmp_path / "out.jsonl") == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "nothing written" in err
    assert not (tmp_path / "out.jsonl").exists()


def test_ingest_csv_with_mapping(tmp_path, capsys):
    csv_path = tmp_path / "k.csv"
    csv_path.write_text("q,a,h\nhi,hello,1\nhey,yo,0\n", encoding="utf-8")
    mapping = tmp_path / "m.json"
    mapping.write_text(json.dumps({"prompt": "q", "response": "a", "label_hallucination": "h"}))
    assert _run("ingest", "--dataset", csv_path, "--mapping", mapping, "--out", tmp_path / "o.jsonl") == 0
    assert len((tmp_path / "o.jsonl").read_text().splitlines()) == 2
    assert "2" in capsys.readouterr().out


def test_missing_api_key_fails_before_work(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("HALOMIS_CLI_TEST_KEY", raising=False)
    ds = tmp_path / "d.jsonl"
    ds.write_text(json.dumps(make_sample(0).to_record()) + "\n", encoding="utf-8")
    backend = tmp_path / "b.json"
    backend.write_text(json.dumps({"kind": "http_chat", "endpoint": "https://llm.example/v1", "model_name": "m",
                                   "auth_env": "HALOMIS_CLI_TEST_KEY"}))
    assert _run("extract", "--dataset", ds, "--backend", backend, "--cache-dir", tmp_path / "c") == 1
    assert "HALOMIS_CLI_TEST_KEY" in capsys.readouterr().err
    assert not (tmp_path / "c" / cli.CACHE_FILE).exists()


def test_second_extract_is_free(synth_dir, capsys):
    assert _run("extract", *_common(synth_dir)) == 0
    assert "with 0 backend calls" in capsys.readouterr().out


def test_unknown_pipeline_is_usage_error(synth_dir, tmp_path):
    with pytest.raises(SystemExit) as err:
        _run("evaluate", *_common(synth_dir), "--pipeline", "magic")
    assert err.value.code == 2
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"pipeline": ["magic"]}))
    assert _run("evaluate", *_common(synth_dir), "--config", cfg) == 2


def test_evaluate_without_extract_hints(synth_dir, tmp_path, capsys):
    rc = _run("evaluate", "--dataset", synth_dir / "dataset.jsonl", "--backend", synth_dir / "backend.json",
              "--cache-dir", tmp_path / "empty", "--out-dir", tmp_path / "out", "--task", "hal")
    assert rc == 1
    assert "halomis extract" in capsys.readouterr().err


def test_report_without_runs(tmp_path, capsys):
    assert _run("report", "--out-dir", tmp_path) == 0
    assert f"no runs found in {tmp_path}" in capsys.readouterr().out


def test_evaluate_and_report_deterministic(synth_dir, tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert _run("evaluate", *_common(synth_dir), "--out-dir", out, "--k", 3,
                    "--pipeline", "judge_only", "features_ml") == 0
        assert _run("report", "--out-dir", out) == 0
        outs.append(out)
    text = capsys.readouterr().out
    for f in ("results.csv", "run_config.json", "report.md", "reports/features_ml__logistic__hal.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    report = (outs[0] / "report.md").read_text()
    # both tasks, hal before omis, each with its best run
    assert report.index("| hal ") < report.index("| omis ")
    assert "judge_only" in report and "features_ml" in report
    assert "F1" in text


def test_config_precedence(synth_dir, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"task": "omis", "k": 4, "pipeline": ["judge_only"], "seed": 7}))
    out = tmp_path / "o"
    assert _run("evaluate", *_common(synth_dir), "--config", cfg, "--k", 3, "--out-dir", out) == 0
    prov = json.loads((out / "run_config.json").read_text())
    assert (prov["task"], prov["k"], prov["seed"]) == ("omis", 3, 7)
    assert sorted(p.name for p in (out / "reports").iterdir()) == ["judge_only__none__omis.json"]


def test_ablate_uses_winning_family(synth_dir, tmp_path, capsys):
    out = tmp_path / "o"
    assert _run("evaluate", *_common(synth_dir), "--out-dir", out, "--task", "hal", "--k", 3,
                "--pipeline", "features_ml", "--families", "logistic") == 0
    assert _run("ablate", *_common(synth_dir), "--out-dir", out, "--task", "hal", "--k", 3, "--kind", "group") == 0
    assert "family logistic" in capsys.readouterr().out
    rows = (out / "ablation_group_hal.csv").read_text().splitlines()
    assert len(rows) == 4
    assert _run("ablate", *_common(synth_dir), "--out-dir", out, "--task", "hal", "--kind", "correlation") == 0
    assert (out / "correlation_hal.csv").exists()
