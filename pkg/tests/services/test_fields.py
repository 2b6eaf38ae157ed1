import math

import numpy as np
import pytest

from pharmonic.core.exceptions import InvalidParameterError, OutOfTubeError, SingularPointError
from pharmonic.schemas import BallSpec, ChiSpec, ExtendedSpec, SeparableSpec, UnitDisk
from pharmonic.services import fields, verify


def test_coordinate_field():
    u = fields.coordinate_field(2, 2)
    assert u.value([3.0, 4.0]) == 4.0
    np.testing.assert_array_equal(u.gradient([3.0, 4.0]), [0.0, 1.0])
    with pytest.raises(InvalidParameterError):
        fields.coordinate_field(3, 2)


def test_chi_field():
    u = fields.chi_field(1, 3)
    assert u.value([2.0, 0.0, 0.0]) == pytest.approx(0.5)
    np.testing.assert_allclose(u.gradient([1.0, 0.0, 0.0]), [-1.0, 0.0, 0.0])
    with pytest.raises(SingularPointError) as excinfo:
        u.value([0.0, 0.0, 0.0])
    assert excinfo.value.exit_code == 2


def test_poisson_kernel_values():
    u = fields.ball_interior_field(3, [1.0, 0.0, 0.0])
    assert u.value([0.0, 0.0, 0.0]) == pytest.approx(0.5)
    assert u.value([0.99, 0.0, 0.0]) == pytest.approx(99.5)
    assert u.value([0.0, 1.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_exterior_kernel_values():
    u = fields.ball_exterior_field(2, [1.0, 0.0])
    assert u.value([2.0, 0.0]) == pytest.approx(1.5)
    assert u.value([0.0, 1.0]) == pytest.approx(0.0, abs=1e-15)
    # tends to 1/2 at infinity
    assert u.value([1000.0, 0.0]) == pytest.approx(0.5, abs=2e-3)


def test_kernel_rejects_point_off_sphere():
    with pytest.raises(InvalidParameterError):
        fields.ball_interior_field(2, [0.5, 0.0])


def test_tangent_ball_sandwich():
    a = np.array([1.0, 0.0, 0.0])
    inner = fields.ball_interior_field(3, a)
    outer = fields.ball_exterior_field(3, a, center=2.0 * a)
    points = verify.sample_ball(3, 200, seed=3, radius=0.95)
    assert np.all(inner.value(points) <= outer.value(points))
    # on the unit ball the exterior field is the kernel shifted by one
    np.testing.assert_allclose(outer.value(points) - inner.value(points), 1.0, rtol=1e-12)


@pytest.mark.parametrize("u", [
    fields.chi_field(2, 2),
    fields.ball_interior_field(2, [0.0, 1.0]),
    fields.ball_exterior_field(3, [1.0, 0.0, 0.0], center=[2.0, 0.0, 0.0]),
    fields.invert_field(fields.coordinate_field(1, 3, p=3.0), [0.0, 0.0, 2.0]),
    fields.fundamental_radial_field(3, 4.0),
    fields.fundamental_radial_field(2, 2.0),
    fields.punctured_disk_field([1.0, 0.0], 0.2),
    fields.separable_2d(fields.cached_pair(3.0, 2)),
    fields.separable_2d(fields.cached_pair(1.5, 3)),
    fields.separable_nd(fields.cached_pair(3.0, 2), 3),
    fields.separable_nd(fields.cached_pair(4.0, 2), 4),
    fields.separable_singular(fields.cached_pair(2.0, 2), 2),
    fields.separable_singular(fields.cached_pair(3.0, 2), 3),
], ids=lambda u: u.description)
def test_gradient_matches_differences(u):
    points = verify.sample_ball(u.n, 20, seed=5, radius=0.8, center=np.full(u.n, 0.1))
    checked = 0
    for x in points:
        if u.exclusion_distance(x) < 0.3:
            continue
        np.testing.assert_allclose(u.gradient(x), u.fd_gradient(x), rtol=1e-5, atol=1e-6)
        checked += 1
    assert checked >= 5


@pytest.mark.parametrize("base", [
    fields.ball_interior_field(2, [0.0, 1.0]),
    fields.separable_2d(fields.cached_pair(3.0, 2)),
], ids=lambda u: u.description)
def test_extension_gradient_matches_differences(unit_disk, base):
    extended = fields.extend_field(base, unit_disk)
    # both sides of the circle, inside the tube of radius 0.5
    points = verify.sample_ball(2, 60, seed=8, radius=1.45, min_radius=0.55)
    outside = 0
    for x in points:
        if extended.exclusion_distance(x) < 0.3 or abs(np.linalg.norm(x) - 1.0) < 1e-3:
            continue
        np.testing.assert_allclose(extended.gradient(x), extended.fd_gradient(x), rtol=1e-5, atol=1e-6)
        outside += np.linalg.norm(x) > 1.0
    assert outside >= 5


def test_inverted_coordinate_is_chi():
    inverted = fields.invert_field(fields.coordinate_field(1, 3), [0.0, 0.0, 0.0])
    chi = fields.chi_field(1, 3)
    points = verify.sample_ball(3, 30, seed=2, min_radius=0.2)
    np.testing.assert_allclose(inverted.value(points), chi.value(points), rtol=1e-13)


def test_inversion_is_involution():
    u = fields.ball_interior_field(3, [1.0, 0.0, 0.0])
    twice = fields.invert_field(fields.invert_field(u, [0.0, 0.0, 0.0]), [0.0, 0.0, 0.0])
    points = verify.sample_ball(3, 100, seed=4, radius=0.8, min_radius=0.1)
    np.testing.assert_allclose(twice.value(points), u.value(points), rtol=1e-12)


def test_inversion_records_singularities():
    inverted = fields.invert_field(fields.chi_field(1, 2), [1.0, 0.0])
    # the origin is its own image under inversion about (1, 0)
    assert any(np.allclose(s, [0.0, 0.0]) for s in inverted.singular_points)
    with pytest.raises(SingularPointError):
        inverted.value([1.0, 0.0])


def test_inversion_rejects_bad_power():
    with pytest.raises(InvalidParameterError):
        fields.invert_field(fields.chi_field(1, 2), [0.0, 0.0], power=0.0)


def test_separable_2d_values(pair):
    assert fields.separable_2d(pair(3.0, 1)).value([1.0, 1.0]) == pytest.approx(1.0, abs=1e-7)
    assert fields.separable_2d(pair(2.0, 2)).value([2.0, 3.0]) == pytest.approx(6.0, abs=1e-6)
    assert abs(fields.separable_2d(pair(3.0, 2)).value([1.0, 0.0])) <= 1e-12


def test_separable_nd_values(pair):
    u = fields.separable_nd(pair(3.0, 1), 3)
    assert u.value([0.3, 0.5, 0.2]) == pytest.approx(0.3, abs=1e-7)
    v = fields.separable_nd(pair(2.0, 2), 4)
    assert v.value([1.0, 2.0, 5.0, 7.0]) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(InvalidParameterError):
        fields.separable_nd(pair(2.0, 2), 2)


def test_separable_nd_keeps_away_from_axis(pair):
    u = fields.separable_nd(pair(3.0, 2), 3)
    assert u.exclusion_distance([0.0, 0.0, 1.0]) == 0.0
    assert u.exclusion_distance([0.3, 0.4, 1.0]) == pytest.approx(0.5)


def test_separable_singular_planar(pair):
    u = fields.separable_singular(pair(2.0, 1), 2)
    assert u.value([0.3, 0.4]) == pytest.approx(1.6, abs=1e-7)
    with pytest.raises(InvalidParameterError):
        fields.separable_singular(pair(3.0, 1), 2)


def test_separable_singular_is_inverted_regular(pair):
    current = pair(3.0, 2)
    singular = fields.separable_singular(current, 3)
    inverted = fields.invert_field(fields.separable_nd(current, 3), [0.0, 0.0, 0.0])
    points = verify.sample_ball(3, 50, seed=6, radius=2.0, min_radius=0.3)
    np.testing.assert_allclose(singular.value(points), inverted.value(points), rtol=1e-10, atol=1e-14)


def test_extension_is_odd_across_circle(unit_disk):
    u = fields.ball_interior_field(2, [1.0, 0.0])
    extended = fields.extend_field(u, unit_disk)
    assert extended.value([0.0, 1.2]) == pytest.approx(-u.value([0.0, 0.8]))
    assert extended.value([0.3, 0.4]) == u.value([0.3, 0.4])
    assert abs(extended.value([0.0, 1.0])) <= 1e-15


def test_extension_across_half_plane(half_plane):
    extended = fields.extend_field(fields.coordinate_field(2, 2), half_plane)
    assert extended.value([0.5, -0.3]) == pytest.approx(-0.3)
    np.testing.assert_allclose(extended.gradient([0.5, -0.3]), [0.0, 1.0])


def test_extension_outside_tube(unit_disk):
    extended = fields.extend_field(fields.coordinate_field(1, 2), unit_disk)
    with pytest.raises(OutOfTubeError):
        extended.value([0.0, 1.7])


def test_scale_field():
    u = fields.scale_field(fields.chi_field(1, 2), 3.0)
    assert u.value([1.0, 1.0]) == pytest.approx(1.5)
    np.testing.assert_allclose(u.gradient([2.0, 0.0]), 3.0 * fields.chi_field(1, 2).gradient([2.0, 0.0]))


def test_fundamental_radial_field():
    assert fields.fundamental_radial_field(2, 2.0).value([math.e, 0.0]) == pytest.approx(1.0)
    assert fields.fundamental_radial_field(3, 4.0).value([8.0, 0.0, 0.0]) == pytest.approx(2.0)


def test_punctured_disk_boundary_values():
    epsilon = 0.2
    u = fields.punctured_disk_field([1.0, 0.0], epsilon)
    outer_trace = fields.ball_exterior_field(2, [1.0, 0.0], center=[2.0, 0.0])
    assert abs(u.value([0.0, 1.0])) <= 1e-9
    assert abs(u.value([-1.0, 0.0])) <= 1e-9
    for angle in (math.pi - 0.3, math.pi, math.pi + 0.5):
        x = np.array([1.0, 0.0]) + epsilon * np.array([math.cos(angle), math.sin(angle)])
        assert u.value(x) == pytest.approx(outer_trace.value(x), abs=1e-9)


def test_punctured_disk_is_harmonic():
    u = fields.punctured_disk_field([0.0, 1.0], 0.3)
    for x in ([0.1, 0.2], [-0.4, -0.3], [0.5, 0.1]):
        assert verify.plaplace_residual(u, 2.0, x).passed


def test_punctured_disk_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        fields.punctured_disk_field([0.5, 0.0], 0.1)
    with pytest.raises(InvalidParameterError):
        fields.punctured_disk_field([1.0, 0.0], 1.0)


def test_build_field_descriptors():
    assert fields.build_field(ChiSpec(i=1, n=2)).value([2.0, 0.0]) == pytest.approx(0.5)
    ball = fields.build_field(BallSpec(kind="ball-interior", n=2, a=[1.0, 0.0]))
    assert ball.value([0.0, 0.0]) == pytest.approx(0.5)
    separable = fields.build_field(SeparableSpec(kind="separable", p=2.0, k=2, n=2, resolution=128))
    assert separable.value([2.0, 3.0]) == pytest.approx(6.0, abs=1e-5)
    extended = fields.build_field(ExtendedSpec(base=ChiSpec(i=1, n=2), geometry=UnitDisk()))
    assert extended.value([0.5, 0.0]) == pytest.approx(2.0)


def test_cached_pair_is_shared():
    assert fields.cached_pair(3.0, 2) is fields.cached_pair(3.0, 2)
