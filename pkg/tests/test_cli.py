import json
import os
import subprocess
import sys

import numpy as np
import pytest

from scri_scatter import cli
from scri_scatter import io as sio
from scri_scatter.config import load_config, make_profile


def _run(tmp_path, *words, config=None, name="out"):
    out = tmp_path / name
    argv = ["--out", str(out)] + (["--config", str(config)] if config else []) + list(words)
    return cli.main(argv), out


def _ini(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_chart_audit_default_passes(tmp_path):
    code, out = _run(tmp_path, "chart-audit")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["ok"] and man["summary"]["passed"]
    assert len(man["config_sha256"]) == 64
    assert {"python", "numpy", "scipy", "scri_scatter"} <= set(man["versions"])
    assert "chart_audit.json" in man["outputs"]


def test_zero_scatter_exits_zero_with_zero_output(tmp_path):
    ini = _ini(tmp_path, "[data]\nfamily = zero\n")
    code, out = _run(tmp_path, "scatter", config=ini)
    assert code == 0
    theta = sio.read_profile(str(out / "scri_plus.csv"))
    assert np.all(theta.theta == 0.0)
    man = json.loads((out / "manifest.json").read_text())
    assert man["links"]["output"] == "scri_plus.csv"


def test_scatter_round_trip_files(tmp_path):
    code, out = _run(tmp_path, "scatter")
    assert code == 0
    sigma = sio.read_sigma(str(out / "sigma0.csv"))
    assert sigma.chart == "advanced" and sigma.m == 1.0
    energies = json.loads((out / "energies.json").read_text())
    assert energies["h1_out"] > 0 and energies["sigma_energy"] > 0


def test_converge_evolve_goursat_second_order(tmp_path):
    code, out = _run(tmp_path, "converge", "evolve-goursat")
    assert code == 0
    conv = json.loads((out / "convergence.json").read_text())
    assert 1.9 <= conv["order"] <= 2.1
    assert (out / "level2_field.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    _, a = _run(tmp_path, "evolve-cauchy", name="a")
    _, b = _run(tmp_path, "evolve-cauchy", name="b")
    for name in ("scri_plus.csv", "sigma0.csv", "scri_plus.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_lab_density_writes_table(tmp_path):
    code, out = _run(tmp_path, "lab", "density")
    assert code == 0
    table = sio.read_table(str(out / "lab_density.csv"))
    assert list(table) == ["n", "norm", "bound"]
    assert np.all(np.diff(table["norm"]) < 0)


def test_out_dir_env_override(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("SCRI_SCATTER_OUT", str(target))
    code, _ = _run(tmp_path, "chart-audit")
    assert code == 0
    assert (target / "manifest.json").exists()
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("words", [["no-such-command"], ["lab", "nope"], ["converge"], ["scatter", "extra"]])
def test_unknown_command_exits_two_with_error_json(tmp_path, capsys, words):
    code, out = _run(tmp_path, *words)
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ValueError"
    assert json.loads((out / "error.json").read_text()) == err


def test_module_error_is_reported(tmp_path, capsys):
    # a u0 outside the lattice is a module error, not a crash
    ini = _ini(tmp_path, "[chart]\nu0 = -20\n")
    code, out = _run(tmp_path, "energy-audit", config=ini)
    assert code == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "FoliationOutsideDomain"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "scri_scatter", "--out", str(tmp_path / "m"), "lab", "sobolev"],
                          capture_output=True, text=True, env={**os.environ, "SCRI_SCATTER_OUT": ""})
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["ok"]


def test_config_merging_and_validation(tmp_path):
    cfg = load_config("scatter")
    assert cfg.grid.Nu == 384 and cfg.data.family == "bump"
    ini = _ini(tmp_path, "[b]\nfamily = cutoff\nc = 1\nR1 = 0.01\nR2 = 0.02\n[grid]\nNu = 200\n")
    cfg2 = load_config("scatter", str(ini), seed=5, threads=2)
    assert cfg2.grid.Nu == 200 and cfg2.seed == 5 and cfg2.threads == 2
    assert not cfg2.b.is_zero
    assert cfg.digest() != cfg2.digest()
    assert cfg.digest() == load_config("scatter").digest()
    for bad in ("[nope]\nx = 1\n", "[grid]\nl = 1\n[b]\nfamily = constant\nc = 1\n", "[grid]\ncfl = 0.9\n",
                "[data]\nsupport_lo = -500\n", "[run]\nseed = -1\n"):
        with pytest.raises(ValueError):
            load_config("scatter", str(_ini(tmp_path, bad, "bad.ini")))


def test_refined_config_doubles_resolution():
    cfg = load_config("evolve-goursat")
    r = cfg.refined(2)
    assert r.grid.Nu == 4 * cfg.grid.Nu
    assert r.grid.NR == 4 * (cfg.grid.NR - 1) + 1
    assert r.grid.dr == pytest.approx(cfg.grid.dr / 4)
    assert make_profile(r).u.size == r.grid.Nu + 1


def test_io_profile_and_sigma_round_trip(tmp_path):
    cfg = load_config("scatter")
    th = make_profile(cfg, side="minus")
    files = sio.profile_files(th, "p")
    sio.write_files(str(tmp_path), files)
    back = sio.read_profile(str(tmp_path / "p.csv"))
    assert np.array_equal(back.u, th.u) and np.array_equal(back.theta, th.theta)
    assert back.side == "minus" and back.support == th.support
    from scri_scatter.scatter import SigmaData

    rs = np.linspace(5.0, 9.0, 9)
    d = SigmaData(rs, np.sin(rs), np.cos(rs), rs / 3, 0, 1.0, "advanced")
    sio.write_files(str(tmp_path), sio.sigma_files(d, "s"))
    e = sio.read_sigma(str(tmp_path / "s.csv"))
    for k in ("rstar", "psi", "xi", "dpsi"):
        assert np.array_equal(getattr(d, k), getattr(e, k))
    assert e.chart == "advanced"
