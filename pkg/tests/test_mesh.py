import numpy as np
import pytest

from smallbiot.geometry import interval, measures, named_shape, polygon
from smallbiot.mesh import MeshError, generate, load, refine_uniform, refinement_sequence, save, validate


def test_interval_mesh_counts():
    m = generate(interval(1.0), 0.25)
    assert (m.n_elements, m.n_nodes) == (4, 5)
    assert refine_uniform(m).n_elements == 8


@pytest.mark.parametrize("name", ["square", "sart1", "sart2", "sartc", "rectsart", "finned",
                                  "equilateral", "isoceles-right", "disk:1,64"])
def test_generated_meshes_are_valid_and_exact(name):
    shape = named_shape(name)
    m = generate(shape, 0.15 * measures(shape).diameter)
    validate(m, shape)
    # a disk is meshed as its inscribed polygon
    mm = measures(polygon(shape.polygon())) if shape.kind == "disk" else measures(shape)
    assert m.volume() == pytest.approx(mm.volume, rel=1e-10)
    assert m.boundary_measure() == pytest.approx(mm.boundary, rel=1e-10)


def test_quality_on_benign_polygon():
    m = generate(named_shape("square"), 0.1)
    assert m.min_angle() >= 20.0


def test_refinement_quadruples_and_conserves():
    shape = named_shape("sart2")
    seq = refinement_sequence(generate(shape, 0.1), 3)
    for a, b in zip(seq, seq[1:]):
        assert b.n_elements == 4 * a.n_elements
        validate(b, shape)
        assert b.volume() == pytest.approx(a.volume(), rel=1e-12)


def test_regions_inherited():
    m = generate(named_shape("square"), 0.25)
    m = m.with_regions(lambda c: (c[:, 0] > 0.5).astype(int))
    r = refine_uniform(m)
    vols = r.region_volumes()
    assert sum(vols.values()) == pytest.approx(1.0)
    assert set(vols) == {0, 1}


def test_save_load_round_trip(tmp_path):
    m = generate(named_shape("finned"), 1.0).with_regions(lambda c: (c[:, 0] < 0).astype(int))
    p = tmp_path / "m.txt"
    save(m, p)
    back = load(p)
    assert np.array_equal(back.nodes, m.nodes)
    assert np.array_equal(back.elements, m.elements)
    assert np.array_equal(back.element_region, m.element_region)


def test_load_rejects_clockwise(tmp_path):
    p = tmp_path / "cw.txt"
    p.write_text("2 3 1 3 1\n0 0\n1 0\n0 1\n0 2 1 0\n0 1\n1 2\n2 0\n")
    with pytest.raises(MeshError, match="element 0"):
        load(p)


def test_load_rejects_nonconforming_facet(tmp_path):
    p = tmp_path / "nc.txt"
    # two triangles sharing edge (1, 2) but the boundary lists it
    p.write_text("2 4 2 4 1\n0 0\n1 0\n0 1\n1 1\n0 1 2 0\n1 3 2 0\n0 1\n1 3\n3 2\n1 2\n")
    with pytest.raises(MeshError, match="facet"):
        load(p)


def test_load_reports_position(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2 3 1 3 1\n0 0\n1 x\n0 1\n0 1 2 0\n0 1\n1 2\n2 0\n")
    with pytest.raises(MeshError, match=":3"):
        load(p)


def test_transformed_mesh_scales_measures():
    m = generate(named_shape("sart1"), 0.1)
    t = m.transformed(scale=3.0, angle=0.7, shift=(1.0, -2.0))
    assert t.volume() == pytest.approx(9 * m.volume(), rel=1e-12)
    assert t.boundary_measure() == pytest.approx(3 * m.boundary_measure(), rel=1e-12)
