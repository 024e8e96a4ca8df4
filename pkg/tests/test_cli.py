import csv
import hashlib
import io
import json
import math
import os

import pytest
from hypothesis import given, settings, strategies as st

from layerwalk import cli, theory, walk
from layerwalk.config import ConfigError, Grid, RunConfig


def _run_main(capsys, argv):
    code = cli.main(argv)
    return code, capsys.readouterr().out


# -- config ----------------------------------------------------------------------------

@settings(max_examples=40)
@given(st.sampled_from(["rwrs-tail", "ondiag", "green", "moddev"]), st.integers(1, 3), st.integers(1, 4),
       st.floats(0.1, 5.0), st.lists(st.integers(0, 1000), min_size=1, max_size=4, unique=True),
       st.integers(1, 10**6))
def test_config_round_trip(exp, d1, d2, alpha, seeds, n):
    cfg = RunConfig(exp, d1, d2, alpha, t_grid=Grid(2, 1, 5), n_grid=Grid(2, 1, 3), n_samples=n,
                    scenery_seeds=tuple(seeds), options={"rho": 1.2})
    back = RunConfig.loads(cfg.dumps())
    assert back == cfg and back.dumps() == cfg.dumps() and back.hash() == cfg.hash()


@pytest.mark.parametrize("obj, path", [
    ({"experiment": "nope"}, "experiment"),
    ({"experiment": "ondiag"}, "t_grid"),
    ({"experiment": "green"}, "n_grid"),
    ({"experiment": "ondiag", "t_grid": "2:3:1"}, "t_grid"),
    ({"experiment": "ondiag", "t_grid": "2:1:3", "scenery_seeds": [1, 1]}, "scenery_seeds"),
    ({"experiment": "ondiag", "t_grid": "2:1:3", "scenery_seeds": []}, "scenery_seeds"),
    ({"experiment": "ondiag", "t_grid": "2:1:3", "bogus": 1}, "bogus"),
    ({"experiment": "ondiag", "t_grid": "2:1:3", "law": "capped"}, "cap"),
    ({"experiment": "ondiag", "t_grid": "2:1:3", "n_samples": 0}, "n_samples"),
])
def test_config_errors(obj, path):
    with pytest.raises(ConfigError) as e:
        RunConfig.from_json(obj)
    assert e.value.path == path


def test_grid_values():
    assert Grid(2, 3, 5).values() == [8.0, 16.0, 32.0]
    assert Grid.parse("2:0:1:2", "g").values() == pytest.approx([1.0, math.sqrt(2), 2.0])


def test_thread_budget(monkeypatch):
    cfg = RunConfig("theory-table")
    monkeypatch.setenv("LAYERWALK_THREADS", "3")
    assert cfg.thread_budget() == 3
    assert cfg.override(threads=2).thread_budget() == 2


def test_override_options():
    cfg = RunConfig("rwrs-tail", t_grid=Grid(2, 1, 3), options={"rho": 1.2})
    cfg2 = cfg.override(**{"options.rho": 1.4, "n_samples": 7})
    assert cfg2.options["rho"] == 1.4 and cfg2.n_samples == 7 and cfg.options["rho"] == 1.2


# -- run --------------------------------------------------------------------------------

def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_ondiag_constant_reduction(tmp_path):
    # Constant(1), d1 = d2 = 1: P(X_t = 0) = p_t(0)^2
    cfg = RunConfig("ondiag", 1, 1, law="constant", value=1.0, t_grid=Grid(2, 1, 2), n_samples=20_000,
                    scenery_seeds=(1,), mode="indicator", output=str(tmp_path))
    status, summary = cli.run(cfg)
    assert status == 0
    from layerwalk.stats import EstimateSeries
    s = EstimateSeries.read_jsonl(tmp_path / "ondiag_seed1.jsonl")
    for p in s.points:
        exact = walk.kernel(1, p.t, [0]) ** 2
        assert abs(p.estimate - exact) <= 4 * p.stderr


def test_run_artifacts_and_manifest(tmp_path):
    cfg = RunConfig("rwrs-tail", 1, 3, 1.0, t_grid=Grid(2, 3, 6), n_samples=2000, scenery_seeds=(1, 2),
                    output=str(tmp_path / "a"), options={"rho": 1.1, "dat": True})
    status, summary = cli.run(cfg)
    assert status == 0
    man = json.loads((tmp_path / "a" / "MANIFEST.json").read_text())
    assert man["config_hash"] == cfg.hash() and man["version"]
    files = sorted(os.listdir(tmp_path / "a"))
    for name in files:
        if name != "MANIFEST.json":
            assert man["files"][name] == _sha(tmp_path / "a" / name)
    assert {"rwrs-tail_seed1.jsonl", "rwrs-tail_seed2.jsonl", "rwrs-tail_seed1.dat", "summary.json"} <= set(files)
    assert set(summary["per_seed"]) == {"1", "2"} and "pooled" in summary
    assert summary["theoretical_slope"] == pytest.approx(-0.1)
    dat = (tmp_path / "a" / "rwrs-tail_seed1.dat").read_text().splitlines()
    assert dat[0].startswith("#") and len(dat) == 5
    # rerun: identical JSONL bytes
    cli.run(cfg.override(output=str(tmp_path / "b")))
    for k in (1, 2):
        assert _sha(tmp_path / "a" / f"rwrs-tail_seed{k}.jsonl") == _sha(tmp_path / "b" / f"rwrs-tail_seed{k}.jsonl")


def test_jsonl_schema(tmp_path):
    cfg = RunConfig("moddev", 1, 3, 1.0, t_grid=Grid(2, 4, 6), n_samples=500, output=str(tmp_path),
                    options={"delta": 0.5})
    cli.run(cfg)
    for line in (tmp_path / "moddev_seed1.jsonl").read_text().splitlines():
        rec = json.loads(line)
        assert {"t", "estimate", "stderr", "n", "hits", "seed", "mode", "target"} <= set(rec)


def test_theory_table_run(tmp_path):
    cfg = RunConfig("theory-table", output=str(tmp_path), options={"d2s": [1, 2], "alphas": [0.5, 3.0]})
    status, summary = cli.run(cfg)
    assert status == 0 and summary["golden"]["passed"] == summary["golden"]["total"]
    rows = list(csv.DictReader(io.StringIO((tmp_path / "theory_table.csv").read_text())))
    assert len(rows) == 4
    r = [r for r in rows if r["d2"] == "1" and r["alpha"] == "0.5"][0]
    assert float(r["ondiag_exponent"]) == 1.25 and float(r["green_exponent"]) == pytest.approx(-1 / 3)
    r = [r for r in rows if r["d2"] == "2" and r["alpha"] == "3.0"][0]
    assert float(r["green_const_derived"]) == pytest.approx(1 / (4 * math.pi))


def test_oracle_run(tmp_path):
    cfg = RunConfig("oracle-prob", 1, 1, 0.5, law="capped", cap=10.0, output=str(tmp_path),
                    options={"t": 1.0, "radius": 8})
    assert cli.run(cfg)[0] == 0
    rec = json.loads((tmp_path / "oracle-prob_seed1.jsonl").read_text())
    assert {"value", "absorbed_mass", "iterations"} <= set(rec)


def test_resource_error_flushes(tmp_path):
    cfg = RunConfig("green", 1, 1, 2.0, n_grid=Grid(2, 1, 2), output=str(tmp_path))
    status, summary = cli.run(cfg)
    assert status == cli.EXIT_RESOURCE and summary["error"]["error"] == "OutOfRegime"
    assert (tmp_path / "MANIFEST.json").exists() and (tmp_path / "summary.json").exists()


# -- subcommands ------------------------------------------------------------------------

def test_bad_config_is_machine_readable(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"experiment": "ondiag", "n_samples": -1, "t_grid": "2:1:2"}')
    code, out = _run_main(capsys, ["run", str(p)])
    assert code == cli.EXIT_CONFIG
    err = json.loads(out)
    assert err["error"] == "ConfigError" and err["field"] == "n_samples"


def test_theory_subcommands(capsys):
    code, out = _run_main(capsys, ["theory", "check"])
    assert code == 0 and out.count("PASS") == len(theory.GOLDEN)
    code, out = _run_main(capsys, ["theory", "table", "--d2s", "3", "--alphas", "1"])
    assert code == 0 and out.splitlines()[0].startswith("d1,d2,alpha")


def test_scenery_dump(capsys):
    code, out = _run_main(capsys, ["scenery", "dump", "--dimension", "2", "--radius", "2", "--alpha", "0.5"])
    rows = out.splitlines()
    assert code == 0 and len(rows) == 25 and all(len(r.split(",")) == 3 for r in rows)


def test_walk_check(capsys):
    code, out = _run_main(capsys, ["walk", "check"])
    assert code == 0 and "FAIL" not in out


def test_simulate_layered(capsys):
    code, out = _run_main(capsys, ["simulate", "layered", "--t", "2", "--n", "5", "--sampler", "csrw"])
    recs = [json.loads(l) for l in out.splitlines()]
    assert code == 0 and len(recs) == 5 and set(recs[0]) == {"x1", "x2", "t"}


def test_oracle_subcommand(capsys):
    code, out = _run_main(capsys, ["oracle", "green", "--law", "capped", "--cap", "10", "--alpha", "0.5",
                                   "--d2", "2", "--radius", "3", "--end", "1,0,0"])
    assert code == 0 and json.loads(out)["value"] > 0


def test_estimate_and_fit(capsys, tmp_path):
    o = str(tmp_path)
    code, out = _run_main(capsys, ["estimate", "rwrs-tail", "--d2", "3", "--alpha", "1", "--t-grid", "2:3:7",
                                   "--n-samples", "3000", "-O", "rho=1.1", "-o", o])
    assert code == 0
    code, out = _run_main(capsys, ["fit", os.path.join(o, "rwrs-tail_seed1.jsonl"), "--theory", "-0.1",
                                   "--tolerance", "5"])
    res = json.loads(out)
    assert code == 0 and res["comparison"]["verdict"] == "PASS"


def test_diagnose_returns(capsys, tmp_path):
    code, out = _run_main(capsys, ["diagnose", "returns", "--d2", "2", "--alpha", "0.8", "--n-samples", "3",
                                   "-O", "t=50", "-O", "threshold=3", "-o", str(tmp_path)])
    assert code == 0
    recs = [json.loads(l) for l in (tmp_path / "returns_seed1.jsonl").read_text().splitlines()]
    assert len(recs) == 3 and all(len(r["returns"]) == len(r["departures"]) for r in recs)


def test_lclt_estimate(capsys, tmp_path):
    code, out = _run_main(capsys, ["estimate", "lclt", "--alpha", "3", "--n-samples", "2000", "-O", "t=16",
                                   "-o", str(tmp_path)])
    assert code == 0
    recs = [json.loads(l) for l in (tmp_path / "lclt_seed1.jsonl").read_text().splitlines()]
    assert len(recs) >= 3 and all(r["estimate"] > 0 for r in recs)


def test_missing_option(capsys, tmp_path):
    code, out = _run_main(capsys, ["estimate", "rwrs-tail", "--t-grid", "2:1:3", "-o", str(tmp_path)])
    assert code == cli.EXIT_CONFIG and json.loads(out)["field"] == "options.rho"
