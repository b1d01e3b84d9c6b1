import csv
import io
import json

import pytest

from dipolelab.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, build_config, main, read_config_file
from dipolelab.errors import ConfigError


def _run(tmp_path, *args, sub="out"):
    out = tmp_path / sub
    return main([*args, "--out", str(out)]), out


def _csv(path):
    raw = path.read_bytes()
    assert raw.endswith(b"\r\n")
    return list(csv.DictReader(io.StringIO(raw.decode("utf-8"))))


def test_incompressibility_default(tmp_path, capsys):
    code, out = _run(tmp_path, "incompressibility")
    assert code == EXIT_OK
    rows = _csv(out / "incompressibility.csv")
    assert [r["region"] for r in rows] == ["c_eps", "a_prime_eps", "e_prime_eps"]
    assert all(float(r["max_analytic"]) < 1e-8 for r in rows)
    doc = json.loads((out / "incompressibility.json").read_text())
    assert set(doc) == {"config", "results", "versions"}
    assert doc["config"]["eps"] == [0.05]
    assert "max|det-1|" in capsys.readouterr().out


def test_same_config_gives_identical_bytes(tmp_path):
    a = _run(tmp_path, "incompressibility", "--seed", "3", sub="a")[1]
    b = _run(tmp_path, "incompressibility", "--seed", "3", sub="b")[1]
    for name in ("incompressibility.csv", "incompressibility.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_degree_grid_and_histogram(tmp_path):
    code, out = _run(tmp_path, "degree", "--ball", "P,0.3", "--format", "json")
    assert code == EXIT_OK
    assert not (out / "degree.csv").exists()
    res = json.loads((out / "degree.json").read_text())["results"]
    assert res[0]["map"] == "limit"
    assert set(res[0]["histogram"]) == {"0", "1"}


def test_degree_csv_columns(tmp_path):
    code, out = _run(tmp_path, "degree", "--ball", "O,0.3", "--format", "csv")
    rows = _csv(out / "degree.csv")
    assert list(rows[0]) == ["map", "eps", "s", "z", "degree", "valid"]
    assert {r["degree"] for r in rows if r["valid"] == "true"} >= {"0", "-1"}


def test_cap_energies_vanish(tmp_path, capsys):
    code, out = _run(tmp_path, "energy-table", "--regions", "a_prime,e_prime", "--eps", "0.1,0.01,0.001")
    assert code == EXIT_OK
    assert "cap energies vanish: pass" in capsys.readouterr().out
    rows = _csv(out / "energy_table.csv")
    assert rows[0].keys() == {"eps", "gamma", "region", "dirichlet", "dirichlet_err", "h_energy", "h_err",
                              "expected", "deviation"}
    for region in ("a_prime_eps", "e_prime_eps"):
        vals = [float(r["dirichlet"]) for r in rows if r["region"] == region]
        assert vals == sorted(vals, reverse=True)


def test_cap_energies_vanish_for_smaller_gamma(tmp_path):
    code, _ = _run(tmp_path, "energy-table", "--regions", "a_prime,e_prime", "--eps", "0.1,0.01,0.001",
                   "--gamma", "0.25")
    assert code == EXIT_OK


def test_lemma_failures_give_exit_two(tmp_path, capsys):
    code, out = _run(tmp_path, "lemmas", "--eps", "0.1,0.01,0.001")
    assert code == EXIT_NUMERICAL
    assert "grad_integrals" in capsys.readouterr().out
    assert (out / "lemmas.csv").exists() and (out / "lemmas.json").exists()


def test_report_subset(tmp_path, capsys):
    code, out = _run(tmp_path, "report", "--criteria", "4,5")
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "criterion  4 [PASS]" in text and "criterion  5 [PASS]" in text
    assert [r["status"] for r in _csv(out / "report.csv")] == ["pass", "pass"]


@pytest.mark.parametrize("args", [
    ["incompressibility", "--gamma", "0.5"],
    ["energy-table", "--eps", "0.01,0.1"],
    ["energy-table", "--regions", "g"],
    ["degree", "--ball", "P,2"],
    ["degree", "--format", "xml"],
    ["energy-table", "--h-function", "power:1.0,0.25"],
    ["incompressibility", "--no-such-flag"],
])
def test_config_errors_exit_three(tmp_path, args):
    assert _run(tmp_path, *args)[0] == EXIT_CONFIG


def test_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\neps = 0.05\nseed = 7\nformat = json\n")
    assert read_config_file(ini) == {"eps": "0.05", "seed": "7", "format": "json"}
    out = tmp_path / "cfg"
    # flags override the file
    assert main(["--config", str(ini), "incompressibility", "--seed", "8", "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "incompressibility.json").read_text())
    assert doc["config"]["seed"] == 8 and doc["config"]["formats"] == ["json"]


@pytest.mark.parametrize("text", ["[run]\nwhatever = 1\n", "[other]\neps = 0.1\n", "no section\n"])
def test_bad_config_file(tmp_path, text):
    ini = tmp_path / "bad.ini"
    ini.write_text(text)
    with pytest.raises(ConfigError):
        read_config_file(ini)
    assert main(["--config", str(ini), "incompressibility"]) == EXIT_CONFIG


def test_build_config_defaults():
    cfg = build_config("energy-table", {})
    assert cfg.eps == (0.1, 0.01, 0.001) and cfg.formats == ("csv", "json")
    assert build_config("incompressibility", {}).eps == (0.05,)
