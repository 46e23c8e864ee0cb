import json

import numpy as np
import pytest

from kagomesim.cli import (
    ConfigError,
    DEFAULT_CONFIG,
    apply_env_overrides,
    main,
    merge_config,
    parse_polarization,
)
from kagomesim.util import sha256_file

SMALL = {
    "lattice": {"cells_per_side": 5, "delta": 0.3},
    "sweep": {
        "theta_points": 5,
        "kappa_grid": [0.02],
        "realizations": 2,
        "delta_grid": [-0.3, 0.3],
    },
    "bloch": {"points_per_segment": 3},
}


def write_config(tmp_path, overrides=None):
    cfg = dict(SMALL)
    if overrides:
        cfg = merge_config(merge_config(DEFAULT_CONFIG, SMALL), overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_merge_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        merge_config(DEFAULT_CONFIG, {"no_such_key": 1})


def test_parse_polarization_forms():
    assert np.allclose(parse_polarization("pi").array, [0, 0, 1])
    assert np.allclose(
        parse_polarization("theta:0.5").array, [np.cos(0.5), np.sin(0.5), 0]
    )
    parse_polarization("sigma+")
    parse_polarization("sigma-")
    with pytest.raises(ConfigError):
        parse_polarization("circular")
    with pytest.raises(ConfigError):
        parse_polarization("theta:abc")


def test_env_overrides():
    env = {"KAGOMESIM_SEED": "123", "KAGOMESIM_THREADS": "2", "KAGOMESIM_OUT": "/x"}
    cfg = apply_env_overrides(DEFAULT_CONFIG, env)
    assert cfg["sweep"]["seed"] == 123
    assert cfg["threads"] == 2
    assert cfg["output_dir"] == "/x"


def test_lattice_command(tmp_path):
    out = tmp_path / "run"
    rc = main(["lattice", "--out", str(out), "--quiet"])
    assert rc == 0
    assert (out / "lattice.csv").exists()
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["command"] == "lattice"
    for entry in manifest["outputs"]:
        assert sha256_file(out / entry["path"]) == entry["sha256"]


def test_spectrum_command_with_impurity(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "impurity": {
                "anchor": "central_hexagon",
                "height_d": 0.4,
                "detuning_gamma0": 1.0,
                "linewidth_gamma0": 0.002,
                "kind": "v_type",
                "zeeman_gamma0": 2.0,
            }
        },
    )
    out = tmp_path / "run"
    rc = main(["spectrum", "--config", cfg, "--out", str(out), "--quiet"])
    assert rc == 0
    lines = (out / "spectrum.csv").read_text().splitlines()
    n_atoms = 3 * 5 * 6 // 2
    assert len(lines) == n_atoms + 2 + 1  # header + array + two impurity levels


def test_spectrum_dimension_matches_lattice(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["spectrum", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert len(lines) == 3 * 5 * 6 // 2 + 1


def test_sweep_and_disorder_commands(tmp_path):
    cfg = write_config(tmp_path)
    out1 = tmp_path / "theta"
    assert main(["sweep-theta", "--config", cfg, "--out", str(out1), "--quiet"]) == 0
    assert (out1 / "theta_track.csv").exists()
    assert (out1 / "theta_summary.json").exists()

    out2 = tmp_path / "delta"
    assert main(["sweep-delta", "--config", cfg, "--out", str(out2), "--quiet"]) == 0
    assert (out2 / "delta_sweep.csv").exists()

    out3 = tmp_path / "disorder"
    assert main(["disorder", "--config", cfg, "--out", str(out3), "--quiet"]) == 0
    summary = json.loads((out3 / "disorder_summary.json").read_text())
    assert summary["kappas"] == [0.02]


def test_disorder_zero_realizations_fails(tmp_path, capsys):
    cfg = write_config(tmp_path, {"sweep": {"realizations": 0}})
    out = tmp_path / "run"
    rc = main(["disorder", "--config", cfg, "--out", str(out), "--quiet"])
    assert rc != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"]["type"] == "ConfigError"
    assert (out / "FAILED").exists()


def test_bad_config_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = main(["lattice", "--config", str(bad), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "line" in err["error"]["message"]


def test_dynamics_scenario_command(tmp_path):
    cfg = write_config(tmp_path, {"dynamics": {"scenario": "fig5a"}})
    out = tmp_path / "dyn"
    rc = main(["dynamics", "--config", cfg, "--out", str(out), "--quiet"])
    assert rc == 0
    assert (out / "fig5a_populations.csv").exists()
    assert (out / "fig5a_sectors.csv").exists()
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["extras"]["calibration"]["reference_detuning"] == -3.06


def test_reproduce_fig2_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["reproduce", "fig2", "--config", cfg, "--out", str(out_a), "--quiet"]) == 0
    assert main(["reproduce", "fig2", "--config", cfg, "--out", str(out_b), "--quiet"]) == 0
    for name in ("spectrum_theta_4pi9.csv", "spectrum_theta_pi2.csv", "theta_track.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    # the manifests differ only in timing fields
    ma = json.loads((out_a / "run_manifest.json").read_text())
    mb = json.loads((out_b / "run_manifest.json").read_text())
    for m in (ma, mb):
        m.pop("created_utc")
        m.pop("elapsed_seconds")
        m["resolved_config"].pop("output_dir")  # differs by invocation
    assert ma == mb
