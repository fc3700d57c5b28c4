import numpy as np
import pytest

from lppdwg.mesh import (EdgeTag, Mesh, MeshError, build_lshape, build_structured_square,
                         classify_boundary, refine_uniform, write_mesh_csv)


def _tri_set(mesh):
    pts = np.round(mesh.vertices[mesh.triangles], 12)
    return {tuple(sorted(map(tuple, t))) for t in pts}


def _side_edges(mesh, side):
    mid = mesh.edge_midpoints[mesh.boundary_edges]
    axis, value = side
    return set(mesh.boundary_edges[np.isclose(mid[:, axis], value)])


def test_square_counts():
    m = build_structured_square(8)
    assert m.n_triangles == 128 and m.n_vertices == 81
    np.testing.assert_allclose(m.h, np.sqrt(2) / 8)
    m1 = build_structured_square(1)
    assert m1.n_triangles == 2 and len(m1.interior_edges) == 1


def test_rejects_zero():
    with pytest.raises(MeshError):
        build_structured_square(0)
    with pytest.raises(MeshError):
        build_lshape(0)


@pytest.mark.parametrize("builder,area", [(build_structured_square, 1.0), (build_lshape, 0.75)])
@pytest.mark.parametrize("n", [1, 2, 4])
def test_invariants(builder, area, n):
    m = builder(n)
    assert np.all(m.areas > 0)
    assert abs(m.areas.sum() - area) < 1e-13
    inner = m.interior_edges
    t0, t1 = m.edge_tris[inner].T
    n0 = np.array([m.edge_normal(e, t) for e, t in zip(inner, t0)])
    n1 = np.array([m.edge_normal(e, t) for e, t in zip(inner, t1)])
    np.testing.assert_array_equal(n0, -n1)
    # every edge is shared by at most two triangles and the boundary is closed
    counts = np.bincount(m.tri_edges.ravel(), minlength=m.n_edges)
    assert set(counts) <= {1, 2}
    assert np.array_equal(counts == 1, m.edge_tris[:, 1] < 0)


def test_lshape_layout():
    assert build_lshape(1).n_triangles == 6
    m = build_lshape(4)
    assert m.n_triangles == 96
    np.testing.assert_allclose(m.diameters, m.diameters[0])
    c = m.centroids
    assert not np.any((c[:, 0] > 0.5) & (c[:, 1] < 0.5))


def test_euler_relation():
    m = build_structured_square(3)
    for _ in range(3):
        assert m.n_vertices - m.n_edges + m.n_triangles == 1
        m = refine_uniform(m)


def test_refine_matches_direct_build():
    fine = refine_uniform(build_structured_square(8))
    assert fine.n_triangles == 4 * 128
    assert _tri_set(fine) == _tri_set(build_structured_square(16))
    np.testing.assert_allclose(fine.diameters, np.sqrt(2) / 16)
    twice = refine_uniform(refine_uniform(build_structured_square(2)))
    assert _tri_set(twice) == _tri_set(build_structured_square(8))


def test_refine_inherits_regions_and_tags():
    m = build_structured_square(2).with_regions(lambda x, y: (x + y >= 1).astype(int))
    m = classify_boundary(m, np.array([1.0, -1.0]))
    f = refine_uniform(m)
    np.testing.assert_array_equal(f.regions, np.repeat(m.regions, 4))
    assert abs(f.areas.sum() - 1.0) < 1e-14
    g = classify_boundary(f, np.array([1.0, -1.0]))
    np.testing.assert_array_equal(f.edge_tags, g.edge_tags)


@pytest.mark.parametrize("beta,sides", [
    (np.array([1.0, 1.0]), [(0, 0.0), (1, 0.0)]),
    (np.array([1.0, -1.0]), [(0, 0.0), (1, 1.0)]),
    (lambda x, y, r: np.stack([-y, x], axis=-1), [(1, 0.0), (0, 1.0)]),
])
def test_classify_boundary(beta, sides):
    m = classify_boundary(build_structured_square(8), beta)
    inflow = set(np.flatnonzero(m.edge_tags == EdgeTag.INFLOW))
    expected = set().union(*(_side_edges(m, s) for s in sides))
    assert inflow == expected


def test_zero_beta_is_all_outflow():
    m = classify_boundary(build_structured_square(4), np.zeros(2))
    assert np.all(m.edge_tags[m.boundary_edges] == EdgeTag.OUTFLOW)


def test_clockwise_input_is_flipped():
    m = Mesh.from_triangles([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert m.areas[0] > 0


def test_degenerate_rejected():
    with pytest.raises(MeshError):
        Mesh.from_triangles([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_mesh_dump(tmp_path):
    m = classify_boundary(build_structured_square(2), np.array([1.0, 1.0]))
    write_mesh_csv(m, tmp_path)
    rows = (tmp_path / "edges.csv").read_text().splitlines()
    assert rows[0] == "id,v0,v1,t0,t1,tag" and len(rows) == m.n_edges + 1
    assert any(r.endswith(",inflow") for r in rows[1:])
    assert len((tmp_path / "triangles.csv").read_text().splitlines()) == m.n_triangles + 1
