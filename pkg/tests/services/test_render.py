import numpy as np
import pytest

from pharmonic.core.exceptions import InvalidParameterError
from pharmonic.services import fields, render
from pharmonic.services.fields import ScalarField

META = {"version": "test", "config_hash": "0" * 64, "seed": 0, "command": "render"}


def test_contour_levels():
    levels = render.contour_levels(np.linspace(0.0, 10.0, 101), count=5)
    assert len(levels) == 6
    assert levels[0] == 0.0
    assert levels[-1] == pytest.approx(9.5)


def test_contour_levels_of_constant_field():
    assert render.contour_levels(np.full(10, 3.0)) is None
    with pytest.raises(InvalidParameterError):
        render.contour_levels(np.array([np.nan, np.inf]))


def test_sample_field_masks_outside_domain(unit_disk):
    X, Y, Z = render.sample_field(fields.coordinate_field(1, 2), (-1.5, 1.5, -1.5, 1.5), resolution=31, g=unit_disk)
    inside = X ** 2 + Y ** 2 < 0.99
    outside = X ** 2 + Y ** 2 > 1.01
    assert not Z.mask[inside].any()
    assert Z.mask[outside].all()
    np.testing.assert_allclose(Z[inside], X[inside])


def test_sample_field_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        render.sample_field(fields.chi_field(1, 3), (-1.0, 1.0, -1.0, 1.0))
    with pytest.raises(InvalidParameterError):
        render.sample_field(fields.chi_field(1, 2), (1.0, -1.0, -1.0, 1.0))


def test_render_field(unit_disk):
    svg = render.render_field(fields.ball_interior_field(2, [1.0, 0.0]), (-1.0, 1.0, -1.0, 1.0), META,
                              resolution=61, g=unit_disk, levels=6)
    assert svg.startswith("<?xml")
    assert "<svg" in svg
    assert '"config_hash": "' + "0" * 64 in svg
    assert svg.count("<path") >= 3
    # the singular point is marked
    assert "<circle" in svg


def test_render_constant_field():
    one = ScalarField(lambda x: np.ones(np.shape(x)[:-1]), None, n=2, description="one")
    svg = render.render_field(one, (0.0, 1.0, 0.0, 1.0), META, resolution=11)
    assert svg.count("<path") == 1


def test_render_is_deterministic():
    u = fields.chi_field(1, 2)
    window = (0.2, 1.2, -0.5, 0.5)
    assert render.render_field(u, window, META, resolution=41) == render.render_field(u, window, META, resolution=41)


def test_render_solution(coarse_disk_mesh):
    values = coarse_disk_mesh.vertices[:, 0] + coarse_disk_mesh.vertices[:, 1]
    svg = render.render_solution(coarse_disk_mesh, values, META, levels=4)
    assert "<svg" in svg
    assert svg.count("<path") >= 3
    with pytest.raises(InvalidParameterError):
        render.render_solution(coarse_disk_mesh, values[1:], META)


def test_title_is_escaped():
    one = ScalarField(lambda x: np.ones(np.shape(x)[:-1]), None, n=2, description="u < 1 & v > 0</title>")
    svg = render.render_field(one, (0.0, 1.0, 0.0, 1.0), META, resolution=11)
    assert "<title>u &lt; 1 &amp; v &gt; 0&lt;/title&gt;</title>" in svg
    assert svg.count("</title>") == 1
    assert '"command": "render"' in svg
