import csv
import hashlib
import json

import pytest

from fslab.errors import ConfigError
from fslab.harness import experiments
from fslab.harness.cli import main
from fslab.harness.config import parse_config
from fslab.harness.io import csv_text


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=2), encoding="utf-8")
    return p


def run(tmp_path, argv, out="out"):
    d = tmp_path / out
    rc = main(argv + ["--out", str(d)])
    return rc, d


# ---------------------------------------------------------------- config


def test_defaults_validate_for_every_subcommand():
    from fslab.harness.config import SUBCOMMANDS

    for sub in SUBCOMMANDS:
        cfg = parse_config(None, sub)
        assert cfg.subcommand == sub and cfg.params


def test_error_carries_line_number():
    text = '{\n  "walks": {\n    "N": 0\n  }\n}\n'
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "walks", source="c.json")
    assert exc.value.line == 3
    assert "c.json:3:" in str(exc.value) and "walks.N" in str(exc.value)


@pytest.mark.parametrize("text,fragment", [
    ('{"walks": {"Nx": 3}}', "Nx"),
    ('{"bogus": 1}', "bogus"),
    ('{"schema": "fslab/9"}', "schema"),
    ('{"walks": ', "malformed"),
    ('{"walks": {"mode": "gibbs"}}', "mode"),
    ('{"walks": {"kernel": {"steps": {"2": 0.5, "-2": 0.5}}}}', "kernel"),
    ('{"saw": {"beta": 0.5}}', "mu_c"),
    ('{"fs-sim": {"n": 2, "x0": [1.0, 2.0]}}', "decreasing"),
])
def test_rejections(text, fragment):
    sub = "fs-sim" if "fs-sim" in text else "saw" if "saw" in text else "walks"
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text, sub)


def test_canonical_form_is_stable():
    a = parse_config('{"seed": 3, "walks": {"N": 5, "n": 1}}', "walks")
    b = parse_config('{"walks": {"n": 1, "N": 5}, "seed": 3}', "walks")
    assert a.canonical() == b.canonical()


# ---------------------------------------------------------------- seeds and workers


def test_derive_seed():
    s = experiments.derive_seed(7, "unit/a")
    assert s == int.from_bytes(hashlib.sha256(b"7/unit/a").digest()[:8], "little")
    assert s != experiments.derive_seed(7, "unit/b")
    assert s != experiments.derive_seed(8, "unit/a")


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv("FSLAB_WORKERS", raising=False)
    assert experiments.resolve_workers() == 1
    monkeypatch.setenv("FSLAB_WORKERS", "3")
    assert experiments.resolve_workers() == 3
    assert experiments.resolve_workers(2) == 2
    monkeypatch.setenv("FSLAB_WORKERS", "0")
    with pytest.raises(ValueError):
        experiments.resolve_workers()


# ---------------------------------------------------------------- serialisation


def test_csv_full_precision():
    text = csv_text(["a", "b", "c"], [[0.1, 1 / 3, True]])
    row = next(csv.reader(text.splitlines()[1:]))
    assert row == ["0.10000000000000001", "0.33333333333333331", "true"]
    assert float(row[1]) == 1 / 3


# ---------------------------------------------------------------- CLI


def test_cli_constants(tmp_path, capsys):
    rc, d = run(tmp_path, ["constants", "--beta", "0.5", "--beta", "1.0"])
    assert rc == 0
    rows = list(csv.DictReader((d / "abraham.csv").open(encoding="utf-8")))
    assert [float(r["beta"]) for r in rows] == [0.5, 1.0]
    summary = json.loads(capsys.readouterr().out)
    assert summary == json.loads((d / "summary.json").read_text())


def test_manifest_contents(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    cfg = write(tmp_path, {"seed": 11, "stack": {"beta": 0.8}})
    rc, d = run(tmp_path, ["stack", "--config", str(cfg)])
    assert rc == 0
    m = json.loads((d / "manifest.json").read_text())
    assert m["timestamp"] == "2023-11-14T22:13:20+00:00"
    assert m["seed"] == 11 and m["subcommand"] == "stack"
    canonical = json.dumps(m["config"], sort_keys=True, separators=(",", ":"))
    assert m["config_sha256"] == hashlib.sha256(canonical.encode()).hexdigest()
    assert {"fslab", "numpy", "scipy", "python", "backend"} <= set(m["versions"])
    for name, digest in m["artifacts"].items():
        assert hashlib.sha256((d / name).read_bytes()).hexdigest() == digest


def test_seed_flag_overrides_config(tmp_path):
    cfg = write(tmp_path, {"seed": 11})
    rc, d = run(tmp_path, ["saw", "--config", str(cfg), "--seed", "5"])
    assert rc == 0
    assert json.loads((d / "manifest.json").read_text())["seed"] == 5


def test_config_error_exit_code_and_no_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, {"walks": {"N": 0}})
    rc, d = run(tmp_path, ["walks", "--config", str(cfg)])
    assert rc == 2
    assert not d.exists()
    assert "config error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    rc, _ = run(tmp_path, ["walks", "--config", str(tmp_path / "nope.json")])
    assert rc == 2


def test_domain_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, {"saw": {"N": 4, "max_length": 30, "budget": 100}})
    rc, d = run(tmp_path, ["saw", "--config", str(cfg)])
    assert rc == 3
    assert "SizeError" in capsys.readouterr().err
    assert not d.exists()


def test_bad_workers(tmp_path, monkeypatch):
    assert run(tmp_path, ["saw", "--workers", "0"])[0] == 2
    monkeypatch.setenv("FSLAB_WORKERS", "-1")
    assert run(tmp_path, ["saw"])[0] == 2


@pytest.mark.parametrize("sub", ["spectrum", "wulff", "dcvp", "stack", "saw", "constants"])
def test_every_fast_subcommand_runs(tmp_path, sub):
    cfg = {"spectrum": {"R": 10.0, "h": 0.01}}
    rc, d = run(tmp_path, [sub, "--config", str(write(tmp_path, cfg))])
    assert rc == 0
    assert (d / "manifest.json").exists() and (d / "summary.json").exists()
    for f in d.glob("*.csv"):
        assert f.read_text(encoding="utf-8").splitlines()[0]


def test_walks_exact(tmp_path):
    cfg = write(tmp_path, {"walks": {"n": 2, "N": 6, "u": [2, 0], "v": [2, 0], "M": 10,
                                     "tilt": {"lam": 0.2}}})
    rc, d = run(tmp_path, ["walks", "--config", str(cfg)])
    assert rc == 0
    rows = list(csv.reader((d / "marginal.csv").open(encoding="utf-8")))
    assert len(rows) > 1


def test_parallel_runs_are_bit_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    cfg = write(tmp_path, {"seed": 4, "walks": {"N": 10, "mode": "mcmc", "sweeps": 2000,
                                                "burn_in": 100, "chains": 3, "tilt": {"lam": 0.1}}})
    outs = []
    for w in ("1", "2"):
        rc, d = run(tmp_path, ["walks", "--config", str(cfg), "--workers", w], out=f"w{w}")
        assert rc == 0
        outs.append(d)
    for f in outs[0].iterdir():
        if f.name == "manifest.json":
            a = json.loads(f.read_text())
            b = json.loads((outs[1] / f.name).read_text())
            a.pop("workers"), b.pop("workers")
            a.pop("runtime_seconds", None), b.pop("runtime_seconds", None)
            assert a == b
        else:
            assert f.read_bytes() == (outs[1] / f.name).read_bytes()


def test_seed_changes_mcmc_output(tmp_path):
    cfg = {"walks": {"N": 10, "mode": "mcmc", "sweeps": 500, "burn_in": 10, "tilt": {"lam": 0.1}}}
    p = write(tmp_path, cfg)
    _, a = run(tmp_path, ["walks", "--config", str(p), "--seed", "1"], out="a")
    _, b = run(tmp_path, ["walks", "--config", str(p), "--seed", "2"], out="b")
    assert (a / "marginal.csv").read_bytes() != (b / "marginal.csv").read_bytes()


def test_verify_fs_trend(tmp_path):
    cfg = write(tmp_path, {"verify-fs": {"lambdas": [0.1, 0.01, 0.001], "probe_boundary": False}})
    rc, d = run(tmp_path, ["verify-fs", "--config", str(cfg)])
    assert rc == 0
    summary = json.loads((d / "summary.json").read_text())
    ks = [float(r["ks"]) for r in csv.DictReader((d / "convergence.csv").open(encoding="utf-8"))
          if r.get("boundary", "zero") in ("zero", "")]
    assert summary["strictly_decreasing"] is True
    assert all(a > b for a, b in zip(ks, ks[1:]))
