import csv
import json
import os
import time
from pathlib import Path

import pytest

from vtlab import cli
from vtlab.config import RunConfig, build, build_server, expand_grid, load_config, parse_config
from vtlab.core import InvalidConfig
from vtlab.experiments import CSV_HEADER, cli_run, cli_sweep, read_run_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMOKE = """
[problem]
name = "quadratic"
d = 2
x0 = "e1"

[pool]
n = 1

[method]
name = "rennala"
gamma = 0.5
S = 1

[stop]
max_steps = 10
"""


def test_toml_and_json_parse_to_same_config():
    a = parse_config(SMOKE)
    b = parse_config(json.dumps(a.to_dict()))
    assert a == b and a.digest() == b.digest()


@pytest.mark.parametrize("text, field", [
    (SMOKE.replace('name = "rennala"', 'name = "adam"'), "[method] name"),
    (SMOKE.replace("gamma = 0.5", "gamma = -1"), "[method] gamma"),
    (SMOKE.replace("n = 1", "n = 0"), "[pool] n"),
    (SMOKE.replace("max_steps = 10", "max_step = 10"), "[stop] unknown field(s): max_step"),
    (SMOKE.replace("[stop]\nmax_steps = 10", ""), "missing section [stop]"),
    (SMOKE + "\n[extras]\na = 1\n", "unknown section(s): extras"),
    ("not = [valid", "cannot parse"),
])
def test_schema_errors_name_the_field(text, field):
    with pytest.raises(InvalidConfig) as err:
        parse_config(text)
    assert field in str(err.value)


def test_expand_grid():
    assert expand_grid("pow2:-3:3") == [2.0**i for i in range(-3, 4)]
    assert expand_grid([1, 5, 10, 20, 40, 80, 100, 200, 500, 1000])[-1] == 1000
    with pytest.raises(InvalidConfig):
        expand_grid("linspace:0:1")


def test_async_theorem_stepsize_is_rejected():
    cfg = parse_config(SMOKE.replace('name = "rennala"\ngamma = 0.5', 'name = "async"\ngamma = "theorem"'))
    with pytest.raises(InvalidConfig):
        build_server(cfg, build(cfg))


def test_theorem_hyperparameters_resolve():
    cfg = load_config(CONFIGS / "theorem_rennala.json")
    server = build_server(cfg, build(cfg))
    assert server.S == 20 and server.gamma == pytest.approx(1 / build(cfg).problem.L * 0.5)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*")))
def test_shipped_configs_are_valid(path):
    cfg = load_config(path)
    assert isinstance(cfg, RunConfig)
    build_server(cfg, build(cfg))


def test_smoke_run_is_fast_and_deterministic(tmp_path):
    cfg = parse_config(SMOKE)
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    t0 = time.perf_counter()
    cli_run(cfg, a)
    assert time.perf_counter() - t0 < 1.0
    cli_run(cfg, b)
    name = "run-rennala-n1-s0.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    with open(a / name) as fh:
        assert next(csv.reader(fh)) == CSV_HEADER
    assert ",".join(CSV_HEADER) == "run_id,method,n,seed,k,virtual_time,f,grad_norm_sq,prog,delay"
    rows = read_run_csv(a / name)
    assert len(rows) == 11 and rows[-1]["k"] == "10"
    summary = json.loads((a / "run-summary.json").read_text())
    assert summary["config_hash"] == cfg.digest()


def test_missing_output_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        cli_run(parse_config(SMOKE), tmp_path / "nope")


def test_sweep_reports_best_and_boundary(tmp_path):
    text = SMOKE + '\n[sweep]\ngamma = "pow2:-3:3"\n'
    report = cli_sweep(parse_config(text), tmp_path)
    assert report["best"]["gamma"] in expand_grid("pow2:-3:3")
    assert isinstance(report["boundary"], list)
    assert (tmp_path / "run-sweep.json").exists()


def test_single_point_sweep_matches_run(tmp_path):
    text = SMOKE + "\n[sweep]\ngamma = [0.5]\n"
    cfg = parse_config(text)
    report = cli_sweep(cfg, None)
    summary = cli_run(cfg, tmp_path)
    assert report["best_score"] == summary["runs"][0]["final_f"]


# --- command line


def test_cli_run_writes_to_env_output(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "smoke.toml"
    cfg.write_text(SMOKE)
    monkeypatch.setenv("VTLAB_OUT", str(tmp_path))
    assert cli.main(["run", "--config", str(cfg), "--seed", "3"]) == 0
    assert (tmp_path / "run-rennala-n1-s3.csv").exists()
    assert "config_hash=" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(SMOKE.replace("n = 1", "n = 0"))
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "[pool] n" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "missing")]) == 2


def test_cli_report_and_collect_time(capsys):
    assert cli.main(["report", "--taus", "1,1", "--L", "1", "--delta", "1", "--sigma2", "1",
                     "--eps", "1"]) == 0
    out = capsys.readouterr().out
    data = json.loads(out[: out.index("\n}") + 2])
    assert data["values"]["async"] == 1.5
    assert cli.main(["collect-time", "--taus", "1,4", "--S", "2"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["time"] == 3.0 and res["t_prime_min"] == 3.0 and res["j_star"] == 1


def test_cli_verify_only_filters(tmp_path, capsys):
    code = cli.main(["verify", "--only", "lemma_tau", "--json", "--out", str(tmp_path)])
    ledger = json.loads(capsys.readouterr().out)
    assert [r["criterion"] for r in ledger] == ["lemma_tau"]
    assert code == (0 if ledger[0]["passed"] else 1)
    assert json.loads((tmp_path / "verify.json").read_text()) == ledger


def test_cli_verify_unknown_filter(capsys):
    assert cli.main(["verify", "--only", "no_such_check"]) == 2


def test_console_entry_point_is_declared():
    text = (Path(__file__).resolve().parent.parent / "pyproject.toml").read_text()
    assert 'vtlab = "vtlab.cli:main"' in text
    assert os.path.exists(CONFIGS / "smoke.toml")
