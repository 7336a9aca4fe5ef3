import numpy as np
import pytest

from mcwave.errors import DegeneracyError, DomainError
from mcwave.field import (Inclusion, indicators_from_values, layered_field,
                          load_field, point_field)
from mcwave.grid import build_meshes


def test_layered_field_stripes():
    mesh, _ = build_meshes(20, 2)
    fld = layered_field(mesh, 4, (1.0, 9.0))
    # 4 stripes of 5 rows each, cycling 1, 9, 1, 9 bottom-up
    assert np.all(fld.values[:5] == 1.0)
    assert np.all(fld.values[5:10] == 9.0)
    assert np.all(fld.values[10:15] == 1.0)
    assert fld.contrast == pytest.approx(9.0)


def test_layered_field_rejects_bad_values():
    mesh, _ = build_meshes(8, 2)
    with pytest.raises(DomainError):
        layered_field(mesh, 0, (1.0, 2.0))
    with pytest.raises(DomainError):
        layered_field(mesh, 4, (1.0, -2.0))


def test_point_field_rect_and_disk():
    mesh, _ = build_meshes(40, 4)
    fld = point_field(mesh, 1.0, (
        Inclusion(value=100.0, shape="rect", params=(0.0, 0.0, 0.25, 0.25)),
        Inclusion(value=100.0, shape="disk", params=(0.75, 0.75, 0.1)),
    ))
    centers = mesh.cell_centers()
    inside_rect = (centers[:, 0] < 0.25) & (centers[:, 1] < 0.25)
    assert np.all(fld.cell_values()[inside_rect] == 100.0)
    inside_disk = (centers[:, 0] - 0.75) ** 2 + (centers[:, 1] - 0.75) ** 2 <= 0.01
    assert np.all(fld.cell_values()[inside_disk] == 100.0)
    outside = ~inside_rect & ~inside_disk
    assert np.all(fld.cell_values()[outside] == 1.0)


def test_point_field_rejects_conflicting_overlap():
    mesh, _ = build_meshes(20, 2)
    with pytest.raises(DomainError):
        point_field(mesh, 1.0, (
            Inclusion(value=10.0, shape="rect", params=(0.0, 0.0, 0.5, 0.5)),
            Inclusion(value=20.0, shape="rect", params=(0.25, 0.25, 0.75, 0.75)),
        ))


def test_field_save_load_roundtrip(tmp_path):
    mesh, _ = build_meshes(10, 2)
    fld = layered_field(mesh, 5, (1.0, 7.0, 3.0))
    path = tmp_path / "field.txt"
    fld.save(path)
    back = load_field(path, mesh)
    assert np.array_equal(back.values, fld.values)


def test_load_field_shape_mismatch(tmp_path):
    mesh, _ = build_meshes(10, 2)
    path = tmp_path / "bad.txt"
    np.savetxt(path, np.ones((3, 3)))
    with pytest.raises(DomainError):
        load_field(path, mesh)


def test_indicators_partition():
    mesh, part = build_meshes(20, 2)
    fld = layered_field(mesh, 4, (1.0, 50.0))
    ind = indicators_from_values(fld, part, [
        lambda k: np.isclose(k, 1.0), lambda k: np.isclose(k, 50.0)])
    assert ind.n_continua == 2
    assert ind.is_partition()
    assert np.array_equal(ind.mask_cells(0) + ind.mask_cells(1),
                          np.ones(mesh.n_cells, dtype=np.int8))


def test_indicators_mixing_unions():
    mesh, part = build_meshes(30, 2)
    fld = layered_field(mesh, 6, (1.0, 5.0, 9.0))
    classes = [lambda k, v=v: np.isclose(k, v) for v in (1.0, 5.0, 9.0)]
    ind = indicators_from_values(fld, part, classes,
                                 mixing=((0, 1), (0, 2), (1, 2)))
    assert ind.n_continua == 3
    assert not ind.is_partition()
    # continuum 0 = union of value-1 and value-5 cells
    expect = np.isclose(fld.cell_values(), 1.0) | np.isclose(fld.cell_values(), 5.0)
    assert np.array_equal(ind.mask_cells(0).astype(bool), expect)


def test_indicators_reject_uncovered_cells():
    mesh, part = build_meshes(20, 2)
    fld = layered_field(mesh, 4, (1.0, 50.0))
    with pytest.raises(DegeneracyError):
        indicators_from_values(fld, part, [lambda k: np.isclose(k, 1.0)])


def test_indicators_reject_block_with_missing_continuum():
    mesh, part = build_meshes(20, 4)
    # two stripes only: top and bottom halves each miss one value entirely
    fld = layered_field(mesh, 2, (1.0, 50.0))
    with pytest.raises(DegeneracyError):
        indicators_from_values(fld, part, [
            lambda k: np.isclose(k, 1.0), lambda k: np.isclose(k, 50.0)])
