import json
import subprocess
import sys
from importlib import resources

import pytest

from hubloops import cli


def bundled(name):
    return json.loads(resources.files("hubloops").joinpath("configs", name).read_text())


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def small_mc(**over):
    cfg = {"task": "mc", "lattice": {"d": 1, "l": 4}, "model": {"N": 2, "U": 4.0},
           "grids": {"beta": [1.0], "b": [0.0, 0.3]},
           "sampling": {"samples": 20000, "seed": 3, "batches": 32}}
    cfg.update(over)
    return cfg


def test_verify_chain_exits_zero(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["--config", str(write(tmp_path, bundled("verify_chain4.json"))), "--out", str(out)])
    assert code == cli.EXIT_OK
    for name in ("margins.csv", "coefficients.csv", "sectors.csv", "summary.json", "manifest.json", "run.log"):
        assert (out / name).exists()
    assert json.loads((out / "summary.json").read_text())["status"] == 0


def test_odd_side_is_a_config_error(tmp_path, capsys):
    cfg = small_mc(lattice={"d": 1, "l": 3})
    code = cli.main(["--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_CONFIG
    assert "$.lattice.l" in capsys.readouterr().err


def test_zero_samples_is_a_config_error(tmp_path, capsys):
    cfg = small_mc(sampling={"samples": 0, "seed": 1, "batches": 32})
    assert cli.main(["--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "$.sampling.samples" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["--config", str(p)]) == cli.EXIT_CONFIG


def test_threads_give_identical_csv(tmp_path):
    p = write(tmp_path, small_mc())
    assert cli.main(["--config", str(p), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert cli.main(["--config", str(p), "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    assert (tmp_path / "a" / "mc.csv").read_bytes() == (tmp_path / "b" / "mc.csv").read_bytes()


def test_manifest_reproduces_run(tmp_path):
    p = write(tmp_path, small_mc())
    assert cli.main(["--config", str(p), "--out", str(tmp_path / "a")]) == 0
    man = tmp_path / "a" / "manifest.json"
    m = json.loads(man.read_text())
    assert m["config_sha256"] == cli.config_hash(m["config"])
    assert cli.main(["--config", str(man), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "mc.csv").read_bytes() == (tmp_path / "b" / "mc.csv").read_bytes()
    m2 = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert m2["artifacts"]["mc.csv"] == m["artifacts"]["mc.csv"]


def test_seed_override_changes_estimates(tmp_path):
    p = write(tmp_path, small_mc())
    cli.main(["--config", str(p), "--out", str(tmp_path / "a")])
    cli.main(["--config", str(p), "--out", str(tmp_path / "b"), "--seed-override", "99"])
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["seed"] == 99
    assert (tmp_path / "a" / "mc.csv").read_bytes() != (tmp_path / "b" / "mc.csv").read_bytes()


def test_multimode_photon_has_no_oracle(tmp_path):
    cfg = small_mc(lattice={"d": 2, "l": 2},
                   model={"N": 1, "U": 0.0, "photon": {"L": 4.0, "kappa": 2.0, "m0": 0.5, "n_max": 2}},
                   sampling={"samples": 3200, "seed": 1, "batches": 32})
    assert cli.main(["--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == cli.EXIT_INFEASIBLE
    assert "infeasible" in json.loads((tmp_path / "o" / "summary.json").read_text())["error"]


def test_zero_acceptance_exit(tmp_path):
    cfg = small_mc(lattice={"d": 2, "l": 2}, model={"N": 3, "U": "inf"}, grids={"beta": [80.0], "b": [0.1]},
                   sampling={"samples": 64, "seed": 0, "batches": 32})
    assert cli.main(["--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == cli.EXIT_ZERO_ACCEPT


@pytest.mark.parametrize("name", ["verify_square2.json", "loops_chain4_hardcore.json", "report_square2.json",
                                  "ed_holstein_square2.json"])
def test_bundled_configs_pass(tmp_path, name):
    assert cli.main(["--config", str(write(tmp_path, bundled(name))), "--out", str(tmp_path / "o")]) == 0


def test_module_entry_point(tmp_path):
    cfg = small_mc(lattice={"d": 1, "l": 3})
    r = subprocess.run([sys.executable, "-m", "hubloops", "--config", str(write(tmp_path, cfg))],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "multiple of 2" in r.stderr


def test_docs_schema_matches_package():
    from pathlib import Path
    docs = Path(__file__).resolve().parents[1] / "docs" / "config.schema.json"
    shipped = resources.files("hubloops").joinpath("schema.json").read_text()
    assert json.loads(docs.read_text()) == json.loads(shipped)


def test_bundled_configs_validate():
    for entry in resources.files("hubloops").joinpath("configs").iterdir():
        cli.validate(json.loads(entry.read_text()))
