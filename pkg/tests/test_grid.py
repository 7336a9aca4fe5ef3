import numpy as np
import pytest

from mcwave.errors import ConfigurationError
from mcwave.grid import build_meshes, default_layers, oversample


def test_mesh_counts_and_spacing():
    mesh, part = build_meshes(20, 4)
    assert mesh.n_cells == 400
    assert mesh.n_nodes == 21 * 21
    assert mesh.h == pytest.approx(0.05)
    assert part.H == pytest.approx(0.25)
    assert part.n_blocks == 16
    assert part.nf == 5


def test_build_meshes_requires_divisibility():
    with pytest.raises(ConfigurationError):
        build_meshes(10, 3)


def test_node_coords_cover_unit_square():
    mesh, _ = build_meshes(8, 2)
    xy = mesh.node_coords()
    assert xy.min() == 0.0 and xy.max() == 1.0
    assert np.allclose(xy[1] - xy[0], [mesh.h, 0.0])


def test_block_cells_partition_the_mesh():
    mesh, part = build_meshes(12, 3)
    seen = np.concatenate([part.block_cells(b).ravel()
                           for b in range(part.n_blocks)])
    assert np.array_equal(np.sort(seen), np.arange(mesh.n_cells))
    cb = part.cell_block()
    for b in range(part.n_blocks):
        assert np.all(cb[part.block_cells(b).ravel()] == b)


def test_interior_blocks():
    _, part = build_meshes(12, 3)
    assert np.array_equal(part.interior_blocks(), [4])
    _, part2 = build_meshes(8, 2)
    assert part2.interior_blocks().size == 0


def test_default_layers_matches_log_rule():
    # ceil(-2 ln H): H=1/10 -> ceil(4.605) = 5; H=1/20 -> ceil(5.99) = 6.
    assert default_layers(0.1) == 5
    assert default_layers(0.05) == 6
    assert default_layers(0.25) == 3


def test_oversample_interior_region():
    mesh, part = build_meshes(16, 4)
    reg = oversample(part, part.block_id(1, 1), 1)
    assert reg.n_blocks_x == 3 and reg.n_blocks_y == 3
    assert sorted(reg.members)[0] == part.block_id(0, 0)
    # region nodes are the tensor grid covering blocks (0..2, 0..2)
    assert reg.n_nodes == (3 * part.nf + 1) ** 2


def test_oversample_clips_at_domain_boundary():
    mesh, part = build_meshes(16, 4)
    reg = oversample(part, part.block_id(0, 0), 2)
    # clipped to the 3x3 lower-left corner patch
    assert reg.n_blocks_x == 3 and reg.n_blocks_y == 3
    assert part.block_id(0, 0) in reg.members
    reg_full = oversample(part, part.block_id(2, 2), 10)
    assert reg_full.n_blocks_x == 4 and reg_full.n_blocks_y == 4
    assert len(reg_full.members) == part.n_blocks


def test_region_node_maps_are_consistent():
    mesh, part = build_meshes(16, 4)
    reg = oversample(part, part.block_id(1, 2), 1)
    gnodes = reg.global_nodes()
    coords = mesh.node_coords()[gnodes]
    # the region's global nodes form an axis-aligned rectangle of grid nodes
    assert np.unique(coords[:, 0]).size == reg.ncx + 1
    assert np.unique(coords[:, 1]).size == reg.ncy + 1
    # local block nodes of the center block land inside the region
    local = reg.local_block_nodes(reg.center)
    assert local.min() >= 0 and local.max() < reg.n_nodes


def test_region_boundary_nodes():
    _, part = build_meshes(16, 4)
    reg = oversample(part, part.block_id(1, 1), 1)
    bnd = reg.region_boundary_nodes()
    # perimeter of an (ncx+1) x (ncy+1) node grid
    assert bnd.size == 2 * (reg.ncx + 1) + 2 * (reg.ncy + 1) - 4
