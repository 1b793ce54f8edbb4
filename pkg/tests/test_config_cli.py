import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from quasifrac.config import (
    ParseError,
    RunConfig,
    ValidationError,
    load_config,
    parse_config,
)

REPO = Path(__file__).resolve().parents[1]
BENCH = REPO / "configs" / "benchmark.cfg"


def test_empty_config_is_all_defaults():
    cfg = parse_config("")
    assert cfg["eps"] == 0.0625
    assert cfg["theta0"] == pytest.approx(math.pi / 4)
    assert cfg["load"] == "stretch"
    assert cfg["eta"] == "auto"
    assert cfg["output_dir"] == "out"
    # every schema key is materialized
    assert len(cfg.values) == 31


def test_negative_eps_names_key():
    with pytest.raises(ValidationError) as err:
        parse_config("eps = -1")
    assert "eps" in str(err.value)


def test_unknown_key_reports_line():
    with pytest.raises(ParseError) as err:
        parse_config("eps = 0.1\n\nwibble = 3\n")
    assert "line 3" in str(err.value)
    assert "wibble" in str(err.value)


def test_bad_value_reports_line():
    with pytest.raises(ValidationError) as err:
        parse_config("# comment\nn_steps = many\n")
    assert "line 2" in str(err.value)


def test_duplicate_key_rejected():
    with pytest.raises(ParseError):
        parse_config("eps = 0.1\neps = 0.2\n")


def test_roundtrip_canonical_golden():
    cfg = load_config(BENCH)
    canon = cfg.canonical()
    golden = (REPO / "configs" / "benchmark.canonical.cfg").read_text()
    assert canon == golden
    again = parse_config(canon)
    assert again.canonical() == canon  # canonical form is a fixed point
    assert again.values == cfg.values


def test_builders():
    cfg = load_config(BENCH)
    dom = cfg.domain()
    assert dom.omega == (0.0, 0.0, 1.0, 1.0)
    load = cfg.load()
    assert load.kind == "opening" and load.center == (0.5, 0.5)
    vm = cfg.voidmod_params()
    assert vm.eta == pytest.approx(0.2)
    mat = cfg.material()
    assert mat.validate_ellipticity()


def _run_cli(args, env=None):
    e = dict(os.environ)
    if env:
        e.update(env)
    return subprocess.run([sys.executable, "-m", "quasifrac.cli", *args],
                          capture_output=True, text=True, env=e, cwd=REPO)


@pytest.fixture(scope="module")
def smoke_outputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg_text = BENCH.read_text().replace("out/benchmark", str(base / "o1"))
    cfg_text = cfg_text.replace("n_steps = 8", "n_steps = 5")
    cfg_path = base / "bench.cfg"
    cfg_path.write_text(cfg_text)
    res = _run_cli(["simulate", "--config", str(cfg_path)])
    assert res.returncode == 0, res.stderr
    return base, cfg_path


def test_cli_simulate_outputs(smoke_outputs):
    base, _ = smoke_outputs
    out = base / "o1"
    assert (out / "energies.csv").exists()
    assert (out / "trace.json").exists()
    assert (out / "balance.csv").exists()
    header = (out / "energies.csv").read_text().splitlines()[0]
    assert header == "step,t,total,elastic,crack,cracked_area,n_cracked"
    trace = json.loads((out / "trace.json").read_text())
    assert not trace["aborted"]
    assert len(trace["steps"]) == 6


def test_cli_determinism_across_threads(smoke_outputs):
    base, cfg_path = smoke_outputs
    text = cfg_path.read_text().replace(str(base / "o1"), str(base / "o2"))
    cfg2 = base / "bench2.cfg"
    cfg2.write_text(text)
    res = _run_cli(["simulate", "--config", str(cfg2)],
                   env={"FRACTURE_THREADS": "7"})
    assert res.returncode == 0, res.stderr
    for name in ("energies.csv", "trace.json"):
        assert (base / "o1" / name).read_bytes() == \
               (base / "o2" / name).read_bytes()


def test_cli_check_mesh(tmp_path, mesh16):
    path = tmp_path / "m.json"
    mesh16.save(path)
    res = _run_cli(["check-mesh", str(path)])
    assert res.returncode == 0
    assert "admissible" in res.stdout


def test_cli_voidmod_and_energy(tmp_path, mesh16):
    mesh_path = tmp_path / "m.json"
    mesh16.save(mesh_path)
    rng = np.random.default_rng(0)
    ids = rng.choice(mesh16.n_triangles, size=120, replace=False)
    ids_path = tmp_path / "ids.txt"
    ids_path.write_text("\n".join(str(int(t)) for t in ids))
    field_path = tmp_path / "u.json"
    vals = (rng.standard_normal((mesh16.n_nodes, 2)) * 0.01).tolist()
    field_path.write_text(json.dumps({"values": vals}))

    out_json = tmp_path / "mod.json"
    vtp = tmp_path / "amod.vtp"
    res = _run_cli(["voidmod", "--mesh", str(mesh_path), "--set", str(ids_path),
                    "--field", str(field_path), "--eta", "0.2",
                    "--out", str(out_json), "--vtp", str(vtp)])
    assert res.returncode == 0, res.stderr
    payload = json.loads(out_json.read_text())
    assert set(payload) == {"a_mod", "t_mod", "filled", "stats"}
    assert vtp.exists()

    res = _run_cli(["energy", "--mesh", str(mesh_path),
                    "--field", str(field_path)])
    assert res.returncode == 0, res.stderr
    assert res.stdout.splitlines()[0].startswith("step,t,total")


def test_cli_study_smoke(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("eps = 0.0625\nn_steps = 2\namplitude = 0.3\n"
                   f"output_dir = {tmp_path / 'st'}\n")
    res = _run_cli(["study", "--config", str(cfg), "--refine", "1"])
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "st" / "convergence.csv").exists()


def test_cli_rejects_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("eps = -3\n")
    res = _run_cli(["simulate", "--config", str(cfg)])
    assert res.returncode == 2
    assert "eps" in res.stderr
