from __future__ import annotations

import csv
import json

import pytest

from geomatch.cli import main, read_config
from geomatch.errors import ConfigError


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_offline_csv_and_sidecar(tmp_path, capsys):
    out = tmp_path / "off.csv"
    assert main(["offline", "--n", "500", "--reps", "3", "--seed", "2", "--out", str(out), "--assert"]) == 0
    rows = _rows(out)
    assert rows[0] == ["replicate", "kappa", "fraction", "theory_fraction", "abs_error"]
    assert len(rows) == 4
    meta = json.loads(out.with_name("off.csv.meta.json").read_text())
    assert meta["command"] == "offline" and meta["config"]["n"] == 500
    assert "passed: True" in capsys.readouterr().out


def test_offline_assert_failure_exit_code():
    assert main(["offline", "--n", "200", "--reps", "2", "--tol", "0.0", "--assert"]) == 1


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["online", "--n", "300", "--k", "4", "--reps", "2", "--trace-every", "100", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert rows[0] == ["replicate", "t_arrivals", "kappa", "rho", "free_count"]
    assert rows[1][:3] == ["0", "0", "0"]


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# metric run\nmode = metric\nn=400\nreps=2\ntrace_every=100\njson=true\n")
    assert main(["online", "--config", str(cfg), "--c", "inf", "--n", "600"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["mode"] == "metric"
    assert summary["mean_kappa_fraction"] == pytest.approx(540 / 600)


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lmax=3\n")
    assert main(["offline", "--config", str(cfg)]) == 2
    assert "lmax" in capsys.readouterr().err


def test_read_config_rejects_garbage(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("justakey\n")
    with pytest.raises(ConfigError):
        read_config(p)


def test_fluid_csv_columns(tmp_path, capsys):
    card = tmp_path / "card.csv"
    assert main(["fluid", "--k", "4", "--points", "4", "--out", str(card), "--assert", "--json"]) == 0
    assert _rows(card)[0] == ["t", "sum_f", "length_invariant", "matched_fraction", "tail_mass"]
    assert json.loads(capsys.readouterr().out)["passed"] is True
    met = tmp_path / "met.csv"
    assert main(["fluid", "--mode", "metric", "--k", "2", "--points", "3", "--out", str(met)]) == 0
    rows = _rows(met)
    assert rows[0] == ["t", "sum_f", "length_invariant", "second_moment", "cum_length", "tail_mass"]
    assert float(rows[-1][0]) == pytest.approx(0.9)


def test_compare_round_probe_and_sweep(tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--n", "1000", "--k", "4", "--reps", "3", "--t-grid", "0.5,1", "--out", str(out)]) == 0
    assert _rows(out)[0][0] == "t" and len(_rows(out)) == 3
    rp = tmp_path / "rp.csv"
    assert main(["round-probe", "--n", "1000", "--reps", "3", "--trials", "20", "--out", str(rp), "--assert"]) == 0
    assert {r[0] for r in _rows(rp)[1:]} == {"rounding", "add_vertex"}
    sw = tmp_path / "sw.csv"
    assert main(["sweep-c", "--cs", "0.5,2", "--k", "4", "--reps", "1", "--n", "200", "--out", str(sw)]) == 0
    rows = _rows(sw)
    assert [r[0] for r in rows[1:]] == ["0.5", "2.0"]
    assert all(0 < float(r[5]) <= 1 for r in rows[1:])


def test_bad_values_exit_2(capsys):
    assert main(["online", "--mode", "cardinality", "--c", "inf"]) == 2
    assert main(["compare", "--mode", "metric", "--eps", "0", "--n", "100"]) == 2
