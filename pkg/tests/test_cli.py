import json

import pytest

from polyest.cli import main
from polyest.experiment import ExperimentConfig

TINY = ["--system", "lorentz", "--n-sc", "6", "--t-f", "1.0", "--degree-grid", "1,3",
        "--keep-every", "2"]


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path), *TINY])


@pytest.fixture
def generated(tmp_path):
    assert run(tmp_path, "generate", "--noise", "0.02") == 0
    return tmp_path


def test_pipeline_end_to_end(generated, capsys):
    assert run(generated, "fit", "--noise", "0.02") == 0
    assert run(generated, "evaluate", "--noise", "0.02") == 0
    out = capsys.readouterr().out
    assert "plars" in out and "knn" in out
    csv_lines = (generated / "report.csv").read_text().splitlines()
    assert len(csv_lines) == 1 + 2 * 4
    assert {line.split(",")[5] for line in csv_lines[1:]} == {"50", "80", "95", "99"}
    text = (generated / "report.txt").read_text()
    assert "p50" in text and "p80" in text and "p95" in text and "p99" in text


def test_every_output_echoes_config(generated):
    assert run(generated, "fit") == 0
    assert run(generated, "evaluate") == 0
    for name in ("config.json", "train.csv.meta.json", "test.csv.meta.json", "report.meta.json"):
        d = json.loads((generated / name).read_text())
        assert d["config"]["seed"] == 0 and d["config"]["n_sc"] == 6
    model = json.loads((generated / "models" / "plars.json").read_text())
    assert model["provenance"]["config"]["degree_grid"] == [1, 3]
    assert model["provenance"]["seed"] == 0
    assert (generated / "report.txt").read_text().startswith("# seed=0 config=")


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "generate") == 0 and run(b, "generate") == 0
    for name in ("train.csv", "test.csv", "scenarios.jsonl"):
        assert (a / name).read_bytes() != b"" and (a / name).read_bytes() == (b / name).read_bytes()
    names = ("train.csv", "test.csv", "scenarios.jsonl", "train.csv.meta.json", "config.json")
    first = {name: (a / name).read_bytes() for name in names}
    assert run(a, "generate") == 0
    assert all((a / name).read_bytes() == first[name] for name in names)


def test_stages_rebuild_deleted_files(generated):
    assert run(generated, "fit") == 0
    before = (generated / "models" / "plars.json").read_bytes()
    train = (generated / "train.csv").read_bytes()
    (generated / "models" / "plars.json").unlink()
    (generated / "train.csv").unlink()
    assert run(generated, "generate") == 0 and run(generated, "fit") == 0
    assert (generated / "train.csv").read_bytes() == train
    assert (generated / "models" / "plars.json").read_bytes() == before


def test_keep_every_one_smoke(generated):
    assert run(generated, "fit", "--keep-every", "1", "--method", "plars") == 0


def test_missing_model_file_exits_2(generated, capsys):
    missing = generated / "nope.json"
    assert run(generated, "evaluate", "--models", str(missing)) == 2
    assert str(missing) in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"system": "lorentz", "bogus_key": 1}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "bogus_key" in capsys.readouterr().err
    assert run(tmp_path, "generate", "--sigma-p", "-0.1") == 2
    assert "sigma_p" in capsys.readouterr().err
    assert run(tmp_path, "generate", "--method", "svm") == 2
    assert main(["generate", "--target", "x9", "--out", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2


def test_schema_mismatch_exits_2(generated, capsys):
    assert main(["fit", "--system", "etc", "--out", str(generated)]) == 2
    assert "system" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"system": "lorentz", "n_sc": 4, "t_f": 0.8, "noise": 0.5}))
    assert main(["generate", "--config", str(cfg), "--noise", "0.01", "--out", str(tmp_path)]) == 0
    echo = json.loads((tmp_path / "config.json").read_text())["config"]
    assert echo["n_sc"] == 4 and echo["noise"] == 0.01


def test_out_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("POLYEST_OUT", str(tmp_path / "env"))
    assert ExperimentConfig().resolved().out == str(tmp_path / "env")


def test_reproduce_smoke(tmp_path):
    assert main(["reproduce", "--cells", "1", "--out", str(tmp_path), *TINY]) == 0
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("cell,system,target,sigma_p,noise,algorithm,q,p_q")
    assert all(line.startswith("lorentz_x2_sp0_noise0,") for line in summary[1:])
    assert (tmp_path / "cells" / "lorentz_x2_sp0_noise0" / "report.csv").exists()
    assert "lorentz_x2" in (tmp_path / "summary.txt").read_text()


@pytest.mark.filterwarnings("ignore::polyest.dataset.ShortTrajectoryWarning")
def test_reproduce_records_failed_cells(tmp_path, capsys):
    # a one-row window span longer than the trajectory leaves nothing to fit
    code = main(["reproduce", "--out", str(tmp_path), "--system", "lorentz", "--n-sc", "4",
                 "--t-f", "0.2", "--target", "1", "--sigma-grid", "0", "--noise-grid", "0,0.05"])
    assert code == 1
    summary = (tmp_path / "summary.csv").read_text()
    assert summary.count("failed") == 2
    assert "0/2 cells ok" in capsys.readouterr().out
