import json
import logging

import pytest

from artifact import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr()


def ledger(path):
    return [json.loads(line) for line in (path / "ledger.jsonl").read_text().splitlines()]


def test_game_prints_the_optimum(tmp_path, capsys):
    code, out = run(capsys, "game", "--m", "1", "--hint", "all-info", "--output-dir", str(tmp_path))
    assert code == 0
    assert "opt_value 1/4" in out.out.splitlines()
    (strategy,) = tmp_path.glob("game-*.strategy.json")
    assert json.loads(strategy.read_text())["probs"] == [[1, 0, -1, "1"]]


def test_game_with_monte_carlo_check(tmp_path, capsys):
    code, out = run(capsys, "game", "--m", "2", "--eps", "1/5", "--mc", "2000", "--output-dir", str(tmp_path))
    assert code == 0 and "Monte Carlo" in out.out


def test_float_game(tmp_path, capsys):
    code, out = run(capsys, "game", "--m", "3", "--mode", "float", "--hint", "defense-bits", "--param", "3",
                    "--output-dir", str(tmp_path))
    assert code == 0 and out.out.startswith("opt_value 0.")


def test_lp_reports_strong_duality(tmp_path, capsys):
    code, out = run(capsys, "lp", "--m", "1", "--output-dir", str(tmp_path))
    assert code == 0
    assert "primal objective 1/4" in out.out and "dual objective   1/4" in out.out
    assert len(list(tmp_path.glob("lp-*.lp"))) == 1


def test_simulate_is_deterministic_and_ignores_jobs(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    common = ["simulate", "--m", "5", "--n", "40", "--adversary", "random-abort", "--rate", "0.05", "--seed", "3"]
    run(capsys, *common, "--output-dir", str(a))
    run(capsys, *common, "--output-dir", str(b), "--jobs", "2")
    files = sorted(p.name for p in a.iterdir() if p.name != "ledger.jsonl")
    assert files == sorted(p.name for p in b.iterdir() if p.name != "ledger.jsonl")
    assert any(f.endswith(".csv") for f in files) and any(f.endswith(".jsonl") for f in files)
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert ledger(a)[0]["config_hash"] == ledger(b)[0]["config_hash"]


def test_attack_grid(tmp_path, capsys):
    code, _ = run(capsys, "attack", "--ms", "3", "--ts", "3", "--adversaries", "honest,random-abort", "--n", "20",
                  "--output-dir", str(tmp_path))
    assert code == 0
    (table,) = tmp_path.glob("attack-*.csv")
    assert len(table.read_text().splitlines()) >= 3


def test_config_file_layers_under_flags(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[fairflip]\nm = 2\neps = 1/5\n[game]\nhint = constant\n")
    code, out = run(capsys, "game", "--config", str(ini), "--output-dir", str(tmp_path))
    assert code == 0 and "opt_value 0" in out.out.splitlines()
    entry = ledger(tmp_path)[-1]
    assert entry["config"]["m"] == 2 and entry["config"]["hint"] == "constant"
    run(capsys, "game", "--config", str(ini), "--hint", "all-info", "--m", "1", "--eps", "0", "--output-dir", str(tmp_path))
    assert ledger(tmp_path)[-1]["result"]["opt_value"] == "1/4"


def test_schema_errors_name_the_field(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--m", "0", "--output-dir", str(tmp_path)])
    assert exc.value.code == 2
    assert "m: must be at least 1" in capsys.readouterr().err
    ini = tmp_path / "bad.ini"
    ini.write_text("[simulate]\nrounds = 3\n")
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--config", str(ini), "--output-dir", str(tmp_path)])
    assert exc.value.code == 2 and "rounds: unknown key" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main(["game", "--eps", "3/2", "--output-dir", str(tmp_path)])
    assert "eps:" in capsys.readouterr().err


def test_ledger_records_the_config_hash(tmp_path, capsys):
    run(capsys, "game", "--m", "1", "--output-dir", str(tmp_path))
    entry = ledger(tmp_path)[-1]
    cfg = cli.RunConfig(**entry["config"] | {"subcommand": "game", "output_dir": str(tmp_path)})
    assert entry["config_hash"] == cfg.digest
    assert all(name.split("/")[-1].startswith(f"game-{cfg.digest[:12]}") for name in entry["files"])


def test_hash_ignores_jobs_and_output_dir():
    a = cli.RunConfig("simulate", jobs=1, output_dir="x")
    b = cli.RunConfig("simulate", jobs=4, output_dir="y")
    assert a.digest == b.digest
    assert a.digest != cli.RunConfig("simulate", seed=1).digest


def test_schedule_warning(tmp_path, capsys, caplog):
    with caplog.at_level(logging.WARNING, logger="fairflip"):
        run(capsys, "simulate", "--m", "3", "--n", "2", "--output-dir", str(tmp_path))
    assert any("not 1 mod 12" in r.message for r in caplog.records)
    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="fairflip"):
        run(capsys, "simulate", "--m", "13", "--n", "2", "--output-dir", str(tmp_path))
    assert not caplog.records


def test_output_directory_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    run(capsys, "game", "--m", "1")
    assert (tmp_path / "env" / "ledger.jsonl").exists()


def test_verify_quick(tmp_path, capsys):
    code, out = run(capsys, "verify", "--quick", "--output-dir", str(tmp_path))
    assert code == 0
    lines = [l for l in out.out.splitlines() if l.startswith("[")]
    assert len(lines) == 10 and all(l.startswith("[PASS]") for l in lines)
