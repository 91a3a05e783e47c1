import csv
import hashlib
import json

import jsonschema
import numpy as np
import pytest

from acsm import cli
from acsm import gibbs_sampler as gs
from acsm import moment_engine as me
from acsm.reference import sech_moments


def write_config(path, **kw):
    cfg = {"model": kw.pop("model")}
    cfg.update(kw)
    path.write_text(json.dumps(cfg))
    return str(path)


def moment_file(path, c):
    me.write_moment_file(path, me.MomentSequence.exact(c))
    return str(path)


def pole_table(path):
    return list(csv.DictReader(l for l in open(path) if not l.startswith("#")))


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- sample


def test_sample_file_length_and_determinism(tmp_path):
    cfg = write_config(tmp_path / "c.json", model={"n_particles": 40, "temperature": 1e-5}, n_samples=100_000)
    assert cli.main(["sample", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["sample", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a" / "sample.acsm", tmp_path / "b" / "sample.acsm"
    _, header = gs.read_sample_file(a)
    assert a.stat().st_size == gs.header_size(header) + 2 * 40 * 100_000 * 8
    assert digest(a) == digest(b)
    assert header["config_digest"] and header["code_version"]


def test_zero_particles_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", model={"n_particles": 0, "temperature": 1.0})
    assert cli.main(["sample", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_yaml_config(tmp_path):
    (tmp_path / "c.yaml").write_text("model:\n  n_particles: 2\n  temperature: 0.5\nn_samples: 100\n")
    assert cli.main(["sample", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path)]) == 0


# -- moments


def test_harmonic_moments_and_schema(tmp_path):
    cfg = write_config(tmp_path / "c.json", model={"n_particles": 1, "alpha": 0.0, "beta": 0.0, "temperature": 0.5},
                       observable="custom-polynomial", expression="q1", n_samples=40_000, max_order=5)
    assert cli.main(["moments", "--config", cfg, "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "moments.json").read_text())
    jsonschema.validate(d, me.MOMENT_FILE_SCHEMA)
    c, e = np.array(d["c"]), np.array(d["stderr"])
    assert np.all(np.abs(c - 0.5) <= 3 * e)
    assert d["config_digest"] == cli.config_digest(cli.load_config(cfg))
    assert d["code_version"]


def test_order_beyond_jet_cap(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", model={"n_particles": 2, "temperature": 0.5}, n_samples=100)
    assert cli.main(["moments", "--config", cfg, "--order", "30", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "cap" in capsys.readouterr().err


def test_moments_from_sample_file(tmp_path):
    cfg = write_config(tmp_path / "c.json", model={"n_particles": 4, "temperature": 0.1}, n_samples=2000,
                       max_order=2)
    assert cli.main(["sample", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert cli.main(["moments", "--config", cfg, "--sample", str(tmp_path / "sample.acsm"),
                     "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "moments.json").read_text())
    assert "projection" in d


# -- poles


def test_two_atom_poles(tmp_path):
    c = [0.6 * 0.5 ** (2 * n) + 0.4 * 1.7 ** (2 * n) for n in range(4)]
    assert cli.main(["poles", moment_file(tmp_path / "m.json", c), "--out", str(tmp_path)]) == 0
    rows = pole_table(tmp_path / "poles.csv")
    assert len(rows) == 2
    np.testing.assert_allclose([float(r["omega"]) for r in rows], [0.5, 1.7], rtol=1e-12)
    np.testing.assert_allclose([float(r["rho"]) for r in rows], [0.6, 0.4], rtol=1e-12)
    assert json.loads((tmp_path / "isolation.json").read_text())["max_valid_order"] == 2


def test_negative_determinant_exit(tmp_path, capsys):
    path = moment_file(tmp_path / "m.json", [1.0, 1.0, 0.99, 1.0])
    assert cli.main(["poles", path, "--out", str(tmp_path)]) == cli.EXIT_GATE
    err = capsys.readouterr().err
    assert "maximum valid order 1" in err
    rep = json.loads((tmp_path / "isolation.json").read_text())
    assert rep["gate"]["failing_order"] == 1


def test_sech_order_four(tmp_path):
    path = moment_file(tmp_path / "m.json", sech_moments(1.0, 7).c)
    assert cli.main(["poles", path, "--order", "4", "--out", str(tmp_path)]) == 0
    assert len(pole_table(tmp_path / "poles.csv")) == 4
    assert cli.main(["poles", path, "--order", "4", "--all-orders", "--out", str(tmp_path)]) == 0
    assert len(pole_table(tmp_path / "poles.csv")) == 1 + 2 + 3 + 4


# -- criteria


def test_criteria_signatures(tmp_path):
    atom = moment_file(tmp_path / "a.json", np.ones(8))
    assert cli.main(["criteria", atom, "--out", str(tmp_path / "a")]) == 0
    a = json.loads((tmp_path / "a" / "criteria.json").read_text())
    assert a["akhiezer_krein"]["passing_L"] == []
    assert a["root_test"]["bounded"]
    assert a["hausdorff"]["verdicts"]["0"].startswith("unbounded")

    sech = moment_file(tmp_path / "s.json", sech_moments(1.0, 7).c)
    assert cli.main(["criteria", sech, "--out", str(tmp_path / "s")]) == 0
    s = json.loads((tmp_path / "s" / "criteria.json").read_text())
    assert s["akhiezer_krein"]["passing_L"]
    assert not s["root_test"]["bounded"]


def test_criteria_from_pole_file(tmp_path):
    path = moment_file(tmp_path / "m.json", np.ones(4))
    assert cli.main(["poles", path, "--order", "1", "--out", str(tmp_path)]) == 0
    assert cli.main(["criteria", str(tmp_path / "poles.csv"), "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "criteria.json").read_text())
    assert d["input"]["kind"] == "poles"
    assert "hausdorff" in d


@pytest.mark.parametrize("text", ['{"c": [1, 2]', '{"c": [1.0], "stderr": [0.0]}', "order,k\n1,0\n"])
def test_criteria_malformed(tmp_path, text):
    (tmp_path / "bad").write_text(text)
    assert cli.main(["criteria", str(tmp_path / "bad"), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


# -- verify


def harmonic_verify(tmp_path, **verify):
    return write_config(tmp_path / "v.json", model={"n_particles": 1, "alpha": 0.0, "beta": 0.0, "temperature": 0.5},
                        observable="custom-polynomial", expression="q1", n_samples=20_000, verify=verify)


def test_verify_harmonic(tmp_path):
    cfg = harmonic_verify(tmp_path, n_initial=2000, t_max=3.0, n_times=13, dt=1e-3)
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert all(all(v) for v in rep["truncation"]["holds"].values())
    rows = list(csv.reader(l for l in open(tmp_path / "correlation.csv") if not l.startswith("#")))
    assert rows[0][:3] == ["t", "C", "stderr"]


def test_verify_drift_violation(tmp_path, capsys):
    cfg = harmonic_verify(tmp_path, n_initial=100, t_max=1.0, n_times=3, dt=0.1, drift_bound=1e-9)
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_INTEGRATOR
    assert "suggested dt" in capsys.readouterr().err


def test_verify_misaligned_grid(tmp_path):
    cfg = harmonic_verify(tmp_path, n_initial=100, t_grid=[0.0, 0.15], dt=0.1)
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) != 0


# -- reproduce


def test_unknown_figure(tmp_path, capsys):
    assert cli.main(["reproduce", "fig9", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "unknown figure" in capsys.readouterr().err


def test_reproduce_fig2_small(tmp_path):
    assert cli.main(["reproduce", "fig2", "--samples", "4000", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "fig2.csv").read_text()
    assert text.startswith("# config_digest=")
    assert "dominant normalized residue" in text
