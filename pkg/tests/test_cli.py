import csv
import json

import numpy as np
import pytest

from wncs.cli import main
from wncs.config import bundled, parse_config
from wncs.errors import DimensionMismatch, ProbabilityRange, SchemaError


def test_stability_exit_codes(capsys, tmp_path):
    out = tmp_path / "s.json"
    assert main(["stability", "--config", "builtin:shared_stable.json", "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert abs(rec["kappa"] - 0.9) < 1e-12 and rec["stabilizable"]
    assert main(["stability", "--config", "builtin:shared_unstable.json"]) == 2
    assert "kappa = 1.2" in capsys.readouterr().out


def test_stability_no_unstable_plants(capsys):
    assert main(["stability", "--config", "builtin:stable_only.json"]) == 0
    assert "kappa=0" in capsys.readouterr().out


def test_config_errors_report_path(tmp_path, capsys):
    raw = json.loads(bundled("desk_1x1.json"))
    raw["channels"]["xi_s"][0][0] = 1.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["stability", "--config", str(bad)]) == 4
    assert "channels.xi_s[0][0]" in capsys.readouterr().err
    with pytest.raises(ProbabilityRange):
        parse_config(json.dumps(raw))
    raw = json.loads(bundled("desk_1x1.json"))
    raw["plants"][0]["B"] = [[1.0], [2.0]]
    with pytest.raises(DimensionMismatch) as e:
        parse_config(json.dumps(raw))
    assert e.value.path == "plants[0].B"
    with pytest.raises(SchemaError):
        parse_config("[1, 2]")
    assert main(["stability", "--config", str(tmp_path / "missing.json")]) == 4


def test_bundled_three_loop_config():
    cfg = parse_config(bundled("three_loops.json"))
    assert cfg.net.N == 3 and cfg.net.M == 3
    assert ((cfg.net.xi_s >= 0.65) & (cfg.net.xi_s <= 1.0)).all()
    assert cfg.dqn.episodes == 1000 and cfg.dqn.capacity == 20000 and cfg.dqn.batch == 32
    assert cfg.digest == parse_config(bundled("three_loops.json")).digest


def test_validate_cost_passes_and_writes_table(tmp_path, capsys):
    out = tmp_path / "v.csv"
    code = main(["validate-cost", "--config", "builtin:three_loops.json", "--plant", "2", "--patterns", "2",
                 "--samples", "20000", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][-1] == "pass" and len(rows) == 3


def test_validate_cost_rejects_short_script(capsys):
    code = main(["validate-cost", "--config", "builtin:three_loops.json", "--script", "11,11", "--samples", "10"])
    assert code == 3


def test_vi_train_eval_round_trip(tmp_path, capsys):
    table = tmp_path / "vi.csv"
    assert main(["vi", "--config", "builtin:desk_1x1.json", "--L", "3", "--out", str(table)]) == 0
    model = tmp_path / "m.qnet"
    assert main(["train", "--config", "builtin:desk_1x1.json", "--episodes", "3", "--out", str(model)]) == 0
    assert (tmp_path / "m.qnet.curve.csv").exists()
    report = tmp_path / "r.csv"
    code = main(["eval", "--config", "builtin:desk_1x1.json", "--episodes", "20", "--T", "50",
                 "--screen-episodes", "5", "--out", str(report),
                 "--policies", "random", "greedy", "roundrobin", "persistent", f"dqn:{model}", f"vi:{table}"])
    assert code == 0
    rows = list(csv.DictReader(report.open()))
    assert [r["policy"] for r in rows][:4] == ["random", "greedy", "roundrobin", "persistent"]
    assert all(np.isfinite(float(r["mean_avg_cost"])) for r in rows)
    assert main(["eval", "--config", "builtin:three_loops.json", "--episodes", "2", "--T", "5",
                 "--policies", f"dqn:{model}"]) == 4
