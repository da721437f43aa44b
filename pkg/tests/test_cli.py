import json

import pytest

from funcito.cli import OUT_ENV, ExperimentConfig, main, run
from funcito.errors import ConfigurationError
from funcito.pathspace import CadlagPath


def _config(tmp_path, **kw):
    base = dict(command="verify-ito", functional="square", levels=[6, 8, 10], seeds=4, out=str(tmp_path / "o"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_roundtrip_and_hash(tmp_path):
    cfg = _config(tmp_path, gen_kind="jumpdiff", intensity=2.0, jump_params=[0.1, 0.5], jump_law="normal", compensated=True)
    back = ExperimentConfig.from_ini(cfg.to_ini())
    assert back == cfg
    assert back.digest() == cfg.digest()
    cfg.save(tmp_path / "c.ini")
    assert ExperimentConfig.load(tmp_path / "c.ini") == cfg
    assert _config(tmp_path, seeds=5).digest() != cfg.digest()


@pytest.mark.parametrize(
    "text, key",
    [
        ("[run]\nbogus = 1\n", "run.bogus"),
        ("[run]\nseeds = many\n", "run.seeds"),
        ("[generator]\ncompensated = maybe\n", "generator.compensated"),
        ("[nowhere]\nx = 1\n", "nowhere"),
        ("[experiment]\ncommand = fly\n", "command"),
    ],
)
def test_malformed_config_names_key(text, key):
    with pytest.raises(ConfigurationError, match=key):
        ExperimentConfig.from_ini(text)


def test_malformed_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nlevels = 8,x\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "run.levels" in capsys.readouterr().err


def test_unknown_functional_exit_code(tmp_path, capsys):
    assert main(["verify-ito", "--functional", "nope", "--seeds", "2", "--out", str(tmp_path)]) == 2
    assert "nope" in capsys.readouterr().err


def test_verify_ito_square_passes_with_zero_metric(tmp_path):
    cfg = _config(tmp_path)
    rep = run(cfg)
    assert rep.passed
    assert all(m < 1e-12 for _, m in rep.tables["residual"])
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["config_hash"] == cfg.digest()
    assert report["pass"] is True
    header = (tmp_path / "o" / "residual.csv").read_text().splitlines()[0]
    assert header == "level,metric"


def test_run_is_deterministic(tmp_path):
    cfg_file = tmp_path / "c.ini"
    _config(tmp_path, functional="endpoint:g=exp", gen_kind="jumpdiff", intensity=2.0, compensated=True).save(cfg_file)
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}"
        main(["run", "--config", str(cfg_file), "--out", str(out)])
        outs.append((out / "residual.csv").read_bytes())
    assert outs[0] == outs[1]


def test_threads_do_not_change_results(tmp_path):
    a = run(_config(tmp_path, functional="endpoint:g=sin", seeds=6), threads=1, write=False)
    b = run(_config(tmp_path, functional="endpoint:g=sin", seeds=6), threads=4, write=False)
    assert a.tables == b.tables


def test_smoother_table_decreasing(tmp_path):
    rep = run(_config(tmp_path, command="smoother", levels=[4, 16, 64, 256], seeds=1, n_steps=2**12, tolerance=1.0))
    col = [m for _, m in rep.tables["smoother_sup_error"]]
    assert all(b < a for a, b in zip(col, col[1:]))
    assert rep.passes["sup_error_decreasing"]


def test_simulate_single_csv(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["simulate", "--kind", "jumpdiff", "--n-steps", "64", "--seed", "3", "--lambda", "2", "--out", str(out)]) == 0
    p = CadlagPath.from_csv(out)
    assert len(p.grid) == 65
    assert json.loads(capsys.readouterr().out)["seeds"] == [3]


def test_simulate_ensemble_manifest(tmp_path):
    out = tmp_path / "ens"
    assert main(["simulate", "--kind", "bm", "--n-steps", "32", "--seeds", "3", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1, 2] and len(manifest["files"]) == 3
    assert "config_hash" in manifest


def test_differentiate_from_csv(tmp_path, capsys):
    out = tmp_path / "p.csv"
    main(["simulate", "--kind", "bm", "--n-steps", "64", "--seed", "1", "--out", str(out)])
    capsys.readouterr()
    code = main(["differentiate", "--functional", "square", "--path", str(out), "--t", "0.25", "--kind", "dupire", "--out", str(tmp_path / "d")])
    rec = json.loads(capsys.readouterr().out)
    assert code == 0
    assert rec["value"] == pytest.approx(2 * CadlagPath.from_csv(out)(0.25), abs=1e-9)
    assert set(rec) >= {"value", "error_indicator", "raw"}


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["props", "--functional", "square", "--seeds", "3"]) == 0
    assert (tmp_path / "env" / "report.json").exists()


def test_wong_zakai_json_out(tmp_path):
    out = tmp_path / "wz.json"
    main(["wong-zakai", "--seeds", "3", "--n-steps", "1024", "--n", "4,16", "--tol", "1.0", "--out", str(out)])
    rep = json.loads(out.read_text())
    assert [row["param"] for row in rep["tables"]["wong_zakai"]] == [4.0, 16.0]
    assert (tmp_path / "wz_wong_zakai.csv").exists()


def test_io_failure_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["props", "--seeds", "2", "--out", str(blocker / "sub")]) == 3
