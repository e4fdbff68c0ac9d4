import json
import subprocess
import sys

import pytest

from taglabel.cli import build_parser, main, resolve_config

SMALL = ["--seed", "5", "--duration", "40"]


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "-q", "--out", str(root / "corpus"), *SMALL]) == 0
    assert main(["featurize", "-q", str(root / "corpus"), "--out", str(root)]) == 0
    assert main(["split", "-q", str(root / "windows.jsonl"), "--out", str(root), "--seed", "5", "--holdout-size", "120"]) == 0
    return root


def test_chain_files(chain):
    assert len(list((chain / "corpus").glob("*.csv"))) == 30
    assert len(list((chain / "corpus").glob("*.json"))) == 30
    split = json.loads((chain / "split.json").read_text())
    assert len(split["parts"]["pipeline_test"]) == 120


def test_train_evaluate_infer(chain, capsys):
    models = chain / "models"
    for which in ("orientation3", "orientation2", "material_rear", "material_side"):
        rc = main(["train", which, str(chain / "windows.jsonl"), str(chain / "split.json"), "--out", str(models), "--seed", "5"])
        assert rc == 0
        assert (models / f"{which}.json").is_file()
        if which == "material_rear":
            assert "12,261" in capsys.readouterr().err
    report = json.loads((models / "material_side.report.json").read_text())
    assert report["n_params"] == 16_421

    out = chain / "report"
    rc = main(["evaluate", "-q", str(models), str(chain / "windows.jsonl"), str(chain / "split.json"), "--corpus", str(chain / "corpus"), "--out", str(out), "--seed", "5"])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert set(rep["pipeline"]) == {"3", "2"}
    assert (out / "pca_points.csv").is_file() and (out / "pca_points_2tag.csv").is_file() and (out / "box_stats.csv").is_file()

    from taglabel.experiment import load_models, pipeline_models
    from taglabel.pipeline import save_bundle

    save_bundle(models, pipeline_models(load_models(models), 2))
    rc = main(["infer", "-q", str(models), str(chain / "windows.jsonl"), "--n-tags", "2", "--out", str(chain / "inf")])
    assert rc == 0
    lines = (chain / "inf" / "predictions.jsonl").read_text().splitlines()
    assert len(lines) == len((chain / "windows.jsonl").read_text().splitlines())


def test_missing_input_is_reported(tmp_path, capsys):
    rc = main(["featurize", str(tmp_path / "nope"), "--out", str(tmp_path)])
    assert rc != 0
    assert "featurize: error" in capsys.readouterr().err


def test_malformed_model_reported(tmp_path, chain, capsys):
    (tmp_path / "pipeline3.json").write_text("{broken")
    rc = main(["infer", str(tmp_path / "pipeline3.json"), str(chain / "windows.jsonl"), "--out", str(tmp_path)])
    assert rc == 2 and "error" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[taglabel]\nseed = 17\nduration = 60\npaper_count_mode = true\n")
    parser = build_parser()
    c = resolve_config(parser.parse_args(["repro", "--config", str(cfg)]))
    assert (c.seed, c.duration, c.paper_count_mode) == (17, 60.0, True)
    assert c.read_rate == pytest.approx(5 / 3)
    c = resolve_config(parser.parse_args(["repro", "--config", str(cfg), "--seed", "3"]))
    assert c.seed == 3


def test_bad_config_value(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[taglabel]\nn_tags = 4\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_repro_is_deterministic(tmp_path):
    args = ["repro", "-q", "--no-verify-determinism", *SMALL, "--holdout-size", "120"]
    main([*args, "--out", str(tmp_path / "a")])
    main([*args, "--out", str(tmp_path / "b")])
    for rel in ["report.json", "models/orientation3.json", "models/orientation2.json", "models/material_rear.json", "models/material_side.json", "split.json", "windows.jsonl"]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    assert json.loads((tmp_path / "a" / "acceptance.json").read_text())


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "taglabel", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "repro" in res.stdout
