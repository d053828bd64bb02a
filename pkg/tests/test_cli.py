import subprocess
import sys

import pytest
import yaml

from hetnet_alloc.channel import load_gains_csv
from hetnet_alloc.cli import main
from hetnet_alloc.config import scenario_to_dict
from hetnet_alloc.experiment import load_csv


@pytest.fixture
def config(reference, tmp_path):
    data = scenario_to_dict(reference)
    data.update(subcarriers_per_band=2, r_min=0.0)
    data["solver"]["max_iterations"] = 200
    data["experiment"] = {"sweep": "num_users", "values": [1, 2], "schemes": ["dual", "ep"], "drops": 2}
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_custom_run(config, tmp_path, capsys):
    out = tmp_path / "res" / "r.csv"
    assert main(["run", "--config", str(config), "--out", str(out), "--trace"]) == 0
    rows = load_csv(out)
    assert len(rows) == 2 * 2 * 2 and {r.scheme for r in rows} == {"dual", "ep"}
    assert (tmp_path / "res" / "r.summary.csv").exists()
    assert (tmp_path / "res" / "r.trace.csv").exists()
    assert "wrote" in capsys.readouterr().out


def test_flags_override_file(config, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(config), "--schemes", "greedy", "--drops", "1", "--seed", "5",
                 "--out", str(out)]) == 0
    rows = load_csv(out)
    assert {r.scheme for r in rows} == {"greedy"} and {r.drop for r in rows} == {0}
    assert not (tmp_path / "r.trace.csv").exists()


def test_seed_and_workers_determinism(config, tmp_path):
    outs = []
    for i, workers in enumerate(["1", "2", "1"]):
        out = tmp_path / f"r{i}.csv"
        main(["run", "--config", str(config), "--seed", "123", "--workers", workers, "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_figure_preset_with_config_scenario(config, tmp_path):
    out = tmp_path / "f6.csv"
    assert main(["run", "--experiment", "fig6", "--config", str(config), "--drops", "1", "--out", str(out)]) == 0
    rows = load_csv(out)
    # sweep from the preset; schemes from the file
    assert [r.sweep_value for r in rows] == [0, 0, 1, 1, 2, 2] and rows[0].sweep == "distance_bucket"
    assert [r.scheme for r in rows[:2]] == ["dual", "ep"]


def test_custom_needs_config(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--out", str(tmp_path / "x.csv")])


@pytest.mark.parametrize("args", [
    ["--schemes", "dual,bogus"],
    ["--drops", "0"],
    ["--seed", "-1"],
    ["--seed", str(2**64)],
    ["--experiment", "fig9"],
])
def test_bad_arguments(config, tmp_path, args):
    with pytest.raises(SystemExit):
        main(["run", "--config", str(config), "--out", str(tmp_path / "x.csv"), *args])


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "x.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_validate(config, tmp_path, capsys):
    assert main(["validate", "--config", str(config)]) == 0
    bad = yaml.safe_load(config.read_text())
    bad["subcarriers_per_band"] = 0
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(bad))
    assert main(["validate", "--config", str(path)]) == 1
    assert "subcarriers_per_band" in capsys.readouterr().out


def test_dump_gains(config, tmp_path):
    out = tmp_path / "g.csv"
    assert main(["dump-gains", "--config", str(config), "--drop", "1", "--out", str(out)]) == 0
    assert len(load_gains_csv(out).cells) == 3


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hetnet_alloc.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "run" in r.stdout
