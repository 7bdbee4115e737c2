import json
from pathlib import Path

import numpy as np
import pytest

from gmclab import cli, gates
from gmclab.config import SUBCOMMANDS, load_config
from gmclab.ensemble import run_ensemble
from gmclab.report import ReportFile

SMALL = Path(__file__).parent / "data" / "small.yaml"


@pytest.fixture(scope="module")
def small():
    return load_config(SMALL)


def _run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_moments_zero_gamma_is_exact(tmp_path, capsys):
    code, out, _ = _run(["moments", "--config", str(SMALL), "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    rep = ReportFile.from_json((tmp_path / "moments.json").read_text())
    rows = rep.table("moments").where(gamma=0.0)
    assert rows and all(r["mean"] == 0.36 and r["mean_se"] == 0.0 for r in rows)
    meta = rep.metadata
    assert meta["config_hash"] == load_config(SMALL).hash and meta["seed"] == 5
    assert "criterion  1 normalization" in out
    assert (tmp_path / "moments" / "moments.csv").exists()


def test_reruns_are_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert _run(["truncation", "--config", str(SMALL), "--out", str(tmp_path / d)], capsys)[0] == 0
    files = sorted(p.name for p in (tmp_path / "a" / "truncation").iterdir())
    assert files
    for name in files:
        assert (tmp_path / "a" / "truncation" / name).read_bytes() == (tmp_path / "b" / "truncation" / name).read_bytes()


def test_seed_override(tmp_path, capsys):
    _run(["kl-martingale", "--config", str(SMALL), "--seed", "11", "--out", str(tmp_path)], capsys)
    assert json.loads((tmp_path / "kl-martingale.json").read_text())["metadata"]["seed"] == 11


def test_worker_count_does_not_change_values(small):
    spec = small.ensemble_spec(replicates=12)
    one = run_ensemble(spec, workers=1, chunk=5)
    two = run_ensemble(spec, workers=2, chunk=5)
    for name in ("i_eps", "j_eps", "bad", "mu", "fail", "clamped"):
        assert np.array_equal(getattr(one, name), getattr(two, name))


def test_head_matches_shorter_run(small):
    spec = small.ensemble_spec(replicates=6)
    full = run_ensemble(spec)
    short = run_ensemble(spec.with_(replicates=4))
    assert np.array_equal(full.head(4).i_eps, short.i_eps) and full.head(4).replicates == 4


def test_gate_failure_exit_code(tmp_path, capsys, monkeypatch):
    failing = gates.GateResult(9, "forced", False, 5.0, 4.0, "forced failure")
    monkeypatch.setitem(cli.RUNNERS, "sample", lambda cfg, workers: ([], [failing]))
    args = ["sample", "--config", str(SMALL), "--out", str(tmp_path)]
    assert _run(args, capsys)[0] == cli.EXIT_OK
    code, out, err = _run(args + ["--gate"], capsys)
    assert code == cli.EXIT_GATE
    assert "[FAIL]" in out
    payload = json.loads(err)
    assert payload["reason"] == "gate_failure" and payload["failures"][0]["name"] == "forced"


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("gammas: [2.5]\nnonsense: 1\n")
    code, _, err = _run(["moments", "--config", str(bad)], capsys)
    assert code == cli.EXIT_CONFIG
    payload = json.loads(err)
    assert payload["reason"] == "config_error" and len(payload["problems"]) == 2


def test_io_error_exit_codes(tmp_path, capsys):
    code, _, err = _run(["moments", "--config", str(tmp_path / "missing.yaml")], capsys)
    assert code == cli.EXIT_IO and json.loads(err)["reason"] == "io_error"
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = _run(["validate-kernel", "--config", str(SMALL), "--out", str(blocker)], capsys)
    assert code == cli.EXIT_IO


def test_env_var_sets_default_workers(monkeypatch):
    from gmclab.ensemble import default_workers
    monkeypatch.setenv("GMC_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.delenv("GMC_WORKERS")
    assert default_workers() == 1


@pytest.mark.slow
@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_every_subcommand_runs(sub, small):
    rep = cli.run(sub, small, 1)
    assert rep.tables[-1].name == "gates"
    assert rep.metadata["subcommand"] == sub


@pytest.mark.slow
def test_validate_kernel_defaults_gate_passes(tmp_path, capsys):
    code, out, _ = _run(["validate-kernel", "--out", str(tmp_path), "--gate"], capsys)
    assert code == cli.EXIT_OK, out
    rep = ReportFile.from_json((tmp_path / "validate-kernel.json").read_text())
    seps = [abs(r["deviation"]) for r in rep.table("two_point").records() if r["regime"] == "separated"]
    assert max(seps) <= 0.1
