import json

import numpy as np
import pytest

from pharmonic import __version__, artifacts
from pharmonic.core.exceptions import InvalidParameterError
from pharmonic.schemas import RunConfig, SolverLogEntry
from pharmonic.services import spectral


def test_config_hash_is_order_independent(run_config):
    reordered = RunConfig(command="test", params={"k": 2, "p": 3.0}, seed=0)
    assert artifacts.config_hash(run_config) == artifacts.config_hash(reordered)
    assert len(artifacts.config_hash(run_config)) == 64


def test_config_hash_tracks_parameters(run_config):
    other = RunConfig(command="test", params={"p": 3.5, "k": 2}, seed=0)
    reseeded = RunConfig(command="test", params={"p": 3.0, "k": 2}, seed=1)
    assert artifacts.config_hash(run_config) != artifacts.config_hash(other)
    assert artifacts.config_hash(run_config) != artifacts.config_hash(reseeded)


def test_meta_header(run_config):
    meta = artifacts.meta_header(run_config)
    assert meta["version"] == __version__
    assert meta["seed"] == 0
    assert meta["command"] == "test"


def test_format_value():
    assert artifacts.format_value(0.1) == "0.10000000000000001"
    assert artifacts.format_value(np.float64(2.0)) == "2"
    assert artifacts.format_value(3) == "3"
    assert artifacts.format_value(True) == "true"
    assert artifacts.format_value("x") == "x"


def test_json_round_trip(tmp_path, run_config):
    entry = SolverLogEntry(iter=1, energy=0.5, grad_norm=1e-3, delta=0.0)
    path = artifacts.write_json(tmp_path / "nested" / "out.json", {"values": np.arange(3.0), "entry": entry}, run_config)
    data = artifacts.read_json(path)
    assert data["meta"]["config_hash"] == artifacts.config_hash(run_config)
    assert data["values"] == [0.0, 1.0, 2.0]
    assert data["entry"]["grad_norm"] == 1e-3


def test_json_wraps_bare_results(run_config):
    data = json.loads(artifacts.dumps([1, 2], run_config))
    assert data["result"] == [1, 2]


def test_read_json_failures(tmp_path):
    with pytest.raises(InvalidParameterError):
        artifacts.read_json(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(InvalidParameterError):
        artifacts.read_json(broken)


def test_csv_layout(tmp_path, run_config):
    path = artifacts.write_csv(tmp_path / "table.csv", ["a", "b"], [(1, 0.1), (2, 1.0 / 3.0)], run_config)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# {")
    assert json.loads(lines[0][2:])["command"] == "test"
    assert lines[1] == "a,b"
    assert lines[2] == "1,0.10000000000000001"
    rows = artifacts.read_csv(path)
    assert float(rows[1]["b"]) == 1.0 / 3.0


def test_mesh_and_solution_files(tmp_path, run_config, coarse_disk_mesh):
    mesh_path = artifacts.write_mesh(tmp_path / "mesh.json", coarse_disk_mesh, run_config)
    restored = artifacts.read_mesh(mesh_path)
    np.testing.assert_array_equal(restored.vertices, coarse_disk_mesh.vertices)
    np.testing.assert_array_equal(restored.triangles, coarse_disk_mesh.triangles)

    values = np.sin(coarse_disk_mesh.vertices[:, 0]) / 7.0
    solution_path = artifacts.write_solution(tmp_path / "solution.csv", coarse_disk_mesh, values, run_config)
    np.testing.assert_array_equal(artifacts.read_solution(solution_path), values)


def test_read_solution_rejects_other_tables(tmp_path, run_config):
    path = artifacts.write_csv(tmp_path / "other.csv", ["a"], [(1,)], run_config)
    with pytest.raises(InvalidParameterError):
        artifacts.read_solution(path)


def test_profile_file(tmp_path, run_config):
    pair = spectral.tabulate(2.0, 1, 64)
    path = artifacts.write_profile(tmp_path / "omega.csv", pair, run_config)
    rows = artifacts.read_csv(path)
    assert list(rows[0]) == ["theta", "omega", "omega_prime", "omega_second"]
    assert len(rows) == len(pair.profile.grid)


def test_profile_resolution_floor():
    with pytest.raises(InvalidParameterError):
        spectral.tabulate(2.0, 1, 32)


def test_identical_runs_write_identical_bytes(tmp_path, run_config):
    first = artifacts.write_json(tmp_path / "a.json", {"x": 0.1}, run_config)
    second = artifacts.write_json(tmp_path / "b.json", {"x": 0.1}, RunConfig(command="test", params={"k": 2, "p": 3.0}))
    assert first.read_bytes() == second.read_bytes()
