import math

import numpy as np
import pytest

from pharmonic.core.exceptions import LocationError, MeshGenerationError
from pharmonic.schemas import PuncturedDisk
from pharmonic.services import geometry
from pharmonic.services import mesh as meshing


def test_disk_mesh_invariants(coarse_disk_mesh):
    meshing.check_mesh(coarse_disk_mesh)
    stats = meshing.mesh_statistics(coarse_disk_mesh)
    assert 300 < stats["triangles"] < 1500
    assert stats["area"] == pytest.approx(math.pi, rel=0.02)
    assert stats["h_max"] <= 0.25
    assert stats["min_angle_deg"] > 5.0
    assert coarse_disk_mesh.tags == ["outer"]


def test_disk_boundary_nodes_on_circle(coarse_disk_mesh):
    nodes = coarse_disk_mesh.boundary_nodes()
    np.testing.assert_allclose(np.linalg.norm(coarse_disk_mesh.vertices[nodes], axis=1), 1.0, atol=1e-12)
    interior = coarse_disk_mesh.interior_nodes()
    assert len(nodes) + len(interior) == len(coarse_disk_mesh.vertices)


def test_shifted_disk():
    mesh = meshing.mesh_disk(2.0, h=0.25, center=(1.0, -1.0))
    assert mesh.areas.sum() == pytest.approx(4.0 * math.pi, rel=0.02)
    radii = np.linalg.norm(mesh.vertices[mesh.boundary_nodes()] - np.array([1.0, -1.0]), axis=1)
    np.testing.assert_allclose(radii, 2.0, atol=1e-12)


def test_graded_disk_refines_toward_point():
    a = np.array([1.0, 0.0])
    mesh = meshing.mesh_disk(1.0, a=a, h=0.1)
    tri = mesh.vertices[mesh.triangles]
    centroids = tri.mean(axis=1)
    diameters = np.max(np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2), axis=1)
    near = np.linalg.norm(centroids - a, axis=1) < 0.05
    far = np.linalg.norm(centroids - a, axis=1) > 0.8
    assert diameters[near].max() < diameters[far].min()


def test_punctured_disk_mesh():
    a = np.array([0.0, 1.0])
    mesh = meshing.mesh_disk(1.0, a=a, epsilon=0.2, h=0.1)
    assert mesh.tags == ["inner-arc", "outer"]
    inner = mesh.vertices[mesh.boundary_nodes("inner-arc")]
    np.testing.assert_allclose(np.linalg.norm(inner - a, axis=1), 0.2, atol=1e-12)
    outer = mesh.vertices[mesh.boundary_nodes("outer")]
    np.testing.assert_allclose(np.linalg.norm(outer, axis=1), 1.0, atol=1e-12)
    # the two corners carry both tags
    assert len(np.intersect1d(mesh.boundary_nodes("inner-arc"), mesh.boundary_nodes("outer"))) == 2
    g = PuncturedDisk(a=a.tolist(), epsilon=0.2)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    assert np.all(geometry.signed_distance(g, centroids) < 0.0)


def test_sector_mesh():
    mesh = meshing.mesh_sector(0.5 * math.pi, 1.0, 0.1)
    meshing.check_mesh(mesh)
    assert mesh.tags == ["arc", "ray-end", "ray-start"]
    assert mesh.areas.sum() == pytest.approx(math.pi / 4, rel=0.02)
    ray = mesh.vertices[mesh.boundary_nodes("ray-start")]
    np.testing.assert_allclose(ray[:, 1], 0.0, atol=1e-12)
    arc = mesh.vertices[mesh.boundary_nodes("arc")]
    np.testing.assert_allclose(np.linalg.norm(arc, axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("kwargs", [
    {"radius": 1.0, "h": 0.0},
    {"radius": 1.0, "h": 2.0},
    {"radius": 1.0, "h": 0.1, "a": (0.5, 0.0)},
    {"radius": 1.0, "h": 0.1, "a": (1.0, 0.0), "epsilon": 1.5},
    {"radius": 1.0, "h": 0.1, "epsilon": 0.2},
])
def test_infeasible_disk_parameters(kwargs):
    with pytest.raises(MeshGenerationError) as excinfo:
        meshing.mesh_disk(**kwargs)
    assert excinfo.value.exit_code == 5


def test_infeasible_sector():
    with pytest.raises(MeshGenerationError):
        meshing.mesh_sector(7.0, 1.0, 0.1)
    with pytest.raises(MeshGenerationError):
        meshing.mesh_sector(1.0, 1.0, 1.5)


def test_check_mesh_rejects_inverted_triangle():
    mesh = meshing.Mesh2D(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 2, 1]]),
                          np.array([[0, 1], [1, 2], [2, 0]]), ["outer"] * 3)
    with pytest.raises(MeshGenerationError):
        meshing.check_mesh(mesh)


def test_descriptor_preserves_mesh(coarse_disk_mesh):
    restored = meshing.Mesh2D.from_descriptor(coarse_disk_mesh.to_descriptor())
    np.testing.assert_array_equal(restored.vertices, coarse_disk_mesh.vertices)
    np.testing.assert_array_equal(restored.triangles, coarse_disk_mesh.triangles)
    assert restored.boundary_tags == coarse_disk_mesh.boundary_tags


def test_locate_points(coarse_disk_mesh, rng):
    locator = coarse_disk_mesh.locator()
    for x in rng.uniform(-0.6, 0.6, (50, 2)):
        t, bary = locator.locate(x)
        assert np.all(bary >= -1e-12)
        assert bary.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(bary @ coarse_disk_mesh.vertices[coarse_disk_mesh.triangles[t]], x, atol=1e-12)


def test_locate_vertex_picks_lowest_triangle(coarse_disk_mesh):
    node = int(coarse_disk_mesh.interior_nodes()[0])
    t, _ = coarse_disk_mesh.locator().locate(coarse_disk_mesh.vertices[node])
    owners = np.flatnonzero(np.any(coarse_disk_mesh.triangles == node, axis=1))
    assert t == owners.min()


def test_locate_outside(coarse_disk_mesh):
    with pytest.raises(LocationError):
        coarse_disk_mesh.locator().locate([2.0, 2.0])
