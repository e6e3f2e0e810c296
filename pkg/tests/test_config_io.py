"""Config grammar, presets, CSV emission, snapshots, CLI plumbing."""

import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest

from landau_particles import Mollifier, ParticleEnsemble, QuadratureGrid, blob_eval
from landau_particles.cli import convergence_study, main, treecode_bench
from landau_particles.config import (
    ConfigError,
    PRESETS,
    emit_config,
    parse_config,
    preset,
)
from landau_particles.output import (
    RunManifest,
    axis_slice_points,
    read_diagnostics,
    write_diagnostics,
    write_snapshot,
)
from landau_particles.simulate import run


def test_preset_bkw2d_values():
    cfg = preset("bkw2d")
    assert cfg.dim == 2
    assert cfg.gamma == 0.0
    assert cfg.prefactor == 1.0 / 16.0
    assert cfg.half_width == 4.0
    assert cfg.dt == 0.01
    assert (cfg.t_start, cfg.t_end) == (0.0, 5.0)
    assert cfg.eps_coeff == 0.64 and cfg.eps_power == 1.98


def test_preset_rosenbluth_values():
    cfg = preset("rosenbluth")
    assert cfg.dim == 3
    assert cfg.gamma == -3.0
    assert cfg.prefactor == pytest.approx(1.0 / (4.0 * math.pi))
    assert cfg.half_width == 1.0
    assert cfg.dt == 0.2


def test_preset_bkw3d_values():
    cfg = preset("bkw3d")
    assert cfg.dim == 3
    assert cfg.prefactor == 1.0 / 24.0
    assert (cfg.t_start, cfg.t_end) == (5.5, 6.0)


def test_parse_empty_config_is_error():
    with pytest.raises(ConfigError):
        parse_config("")


def test_parse_unknown_keys_listed():
    text = "[simulation]\npreset = bkw2d\nwibble = 3\n\n[kernel]\nwobble = 1\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert "wibble" in str(err.value) and "wobble" in str(err.value)
    with pytest.raises(ConfigError):
        parse_config("[nonsense]\nx = 1\n")


def test_parse_missing_required_keys_listed():
    with pytest.raises(ConfigError) as err:
        parse_config("[simulation]\ndim = 2\n")
    assert "dt" in str(err.value)


def test_parse_bad_value_reported():
    with pytest.raises(ConfigError):
        parse_config("[simulation]\npreset = bkw2d\ndt = fast\n")


def test_parse_preset_with_overrides():
    cfg = parse_config(
        "[simulation]\npreset = bkw2d\ncells_per_dim = 80\n\n[engine]\nengine = treecode\n"
    )
    assert cfg.cells_per_dim == 80
    assert cfg.engine == "treecode"
    assert cfg.gamma == 0.0  # inherited


def test_emit_parse_round_trip_all_presets():
    for name in PRESETS:
        cfg = preset(name)
        assert parse_config(emit_config(cfg)) == cfg
    modified = replace(preset("bkw2d"), cells_per_dim=47, dt=0.004, theta=0.77)
    assert parse_config(emit_config(modified)) == modified


def test_diagnostics_round_trip_bit_exact(tmp_path):
    cfg = replace(preset("bkw2d"), cells_per_dim=16, t_end=0.03, snapshot_stride=10**9)
    result = run(cfg)
    path = tmp_path / "diag.csv"
    write_diagnostics(result.records, path)
    back = read_diagnostics(path)
    assert len(back) == len(result.records)
    for a, b in zip(result.records, back):
        assert a.step == b.step and a.time == b.time
        assert a.mass == b.mass and a.energy == b.energy
        assert np.array_equal(a.momentum, b.momentum)
        assert a.entropy == b.entropy
        assert a.relative_entropy == b.relative_entropy
        assert a.dissipation == b.dissipation
        assert a.min_pair_distance == b.min_pair_distance
        assert a.escaped_count == b.escaped_count


def test_diagnostics_single_record_two_lines(tmp_path):
    cfg = replace(preset("bkw2d"), cells_per_dim=12, t_end=0.0)
    result = run(cfg)
    path = tmp_path / "one.csv"
    write_diagnostics(result.records, path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 2
    assert lines[0].startswith("step,time,mass,mom_1,mom_2,energy")


def test_deterministic_reruns_byte_identical(tmp_path):
    cfg = replace(preset("bkw2d"), cells_per_dim=14, t_end=0.05, snapshot_stride=10**9)
    blobs = []
    for tag in ("a", "b"):
        path = tmp_path / f"{tag}.csv"
        write_diagnostics(run(cfg).records, path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_snapshot_files(tmp_path):
    grid = QuadratureGrid(dim=2, half_width=2.0, cells_per_dim=6)
    mol = Mollifier(eps=0.3, dim=2)
    ens = ParticleEnsemble(np.array([[0.4, -0.2]]), np.array([1.0]))
    paths = write_snapshot(ens, grid, mol, time=0.0, outdir=tmp_path, tag="t0")
    by_name = {os.path.basename(p): p for p in paths}
    particle_lines = open(by_name["particles_t0.csv"]).read().strip().split("\n")
    assert len(particle_lines) == 2  # header + one particle
    blob_lines = open(by_name["blob_t0.csv"]).read().strip().split("\n")
    assert len(blob_lines) == grid.num_cells + 1
    # slice values equal blob_eval at the slice points to bit precision
    for axis in (0, 1):
        lines = open(by_name[f"slice_axis{axis + 1}_t0.csv"]).read().strip().split("\n")[1:]
        vals = np.array([float(ln.split(",")[1]) for ln in lines])
        expected = blob_eval(ens, mol, axis_slice_points(grid, axis))
        assert np.array_equal(vals, expected)


def test_manifest_lists_outputs(tmp_path):
    manifest = RunManifest(config_text="x = 1\n", version="0.0", wall_seconds=1.5,
                           outputs=[str(tmp_path / "a.csv")])
    path = manifest.write(tmp_path / "manifest.json")
    payload = json.loads(open(path).read())
    assert payload["outputs"] == [str(tmp_path / "a.csv")]
    assert payload["config"] == "x = 1\n"


def test_convergence_synthetic_hook_slope_two():
    rows, slopes = convergence_study(
        "bkw2d", [40, 60, 80], error_hook=lambda n: (8.0 / n) ** 2
    )
    assert slopes["rel_l2"] == pytest.approx(2.0, abs=1e-12)
    assert slopes["rel_l1"] == pytest.approx(2.0, abs=1e-12)


def test_convergence_requires_three_resolutions():
    with pytest.raises(ValueError):
        convergence_study("bkw2d", [40, 60])


def test_treecode_bench_smoke():
    rows = treecode_bench([6, 8], theta=0.5, order=4, leaf_capacity=32, repeats=1, seed=1)
    assert len(rows) == 2
    assert rows[0]["n_particles"] == 216
    assert rows[1]["rel_l2"] < 1e-3
    assert "ratio_direct" in rows[1]


def test_cli_run_end_to_end(tmp_path):
    cfg_text = (
        "[simulation]\npreset = bkw2d\ncells_per_dim = 12\nt_end = 0.02\n"
        "snapshot_stride = 1000000\n"
    )
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(cfg_text)
    outdir = tmp_path / "out"
    code = main(["run", "--config", str(cfg_path), "--out", str(outdir)])
    assert code == 0
    assert (outdir / "diagnostics.csv").exists()
    assert (outdir / "manifest.json").exists()
    assert (outdir / "config.txt").exists()
    payload = json.loads((outdir / "manifest.json").read_text())
    for rel in payload["outputs"]:
        assert os.path.exists(rel)
    # config echo reproduces the run configuration
    echoed = parse_config((outdir / "config.txt").read_text())
    assert echoed.cells_per_dim == 12


def test_cli_rejects_bad_config(tmp_path):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("[simulation]\npreset = nope\n")
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2
