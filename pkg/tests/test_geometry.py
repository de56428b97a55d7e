import heapq
import warnings

import numpy as np
import pytest

from spun.errors import CannotReachWarning, DegenerateShape, EmptySubmesh
from spun.geometry import (
    RegionMask,
    TriMesh,
    decimate,
    detect_boundary,
    geodesic_patch,
    normalize_area,
    sample_pointcloud,
    submesh,
    surface_area,
    synth_family,
)
from spun.geometry import primitives as pr
from spun.geometry.patch import dilate_mask, erode_mask, geodesic_distances, mask_connected
from spun.spectral import spectrum


def unit_square():
    return TriMesh(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
        [[0, 1, 2], [0, 2, 3]],
    )


class TestSurfaceArea:
    def test_unit_square(self):
        assert surface_area(unit_square()) == pytest.approx(1.0)

    def test_quadratic_scaling(self):
        m = unit_square()
        m2 = TriMesh(m.vertices * 2.0, m.faces)
        assert surface_area(m2) == pytest.approx(4.0)

    def test_zero_area_face_ignored(self):
        m = unit_square()
        # append a degenerate (collinear) face
        verts = np.vstack([m.vertices, [[2, 0, 0], [3, 0, 0], [4, 0, 0]]])
        faces = np.vstack([m.faces, [[4, 5, 6]]])
        assert surface_area(TriMesh(verts, faces)) == pytest.approx(1.0)


class TestNormalizeArea:
    def test_halves_coordinates(self):
        m = unit_square()
        big = TriMesh(m.vertices * 2.0, m.faces)  # area 4
        out = normalize_area(big, 1.0)
        assert np.allclose(out.vertices, big.vertices * 0.5)

    def test_identity_when_at_target(self):
        m = unit_square()
        out = normalize_area(m, 1.0)
        assert np.array_equal(out.vertices, m.vertices)

    def test_relative_tolerance(self):
        m = TriMesh(unit_square().vertices * 1.7321, unit_square().faces)
        out = normalize_area(m, 2.5)
        assert surface_area(out) == pytest.approx(2.5, rel=1e-12)

    def test_degenerate_raises(self):
        flat = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
        with pytest.raises(DegenerateShape):
            normalize_area(flat, 1.0)


class TestDetectBoundary:
    def test_closed_tetrahedron_all_false(self):
        assert not detect_boundary(pr.tetrahedron()).any()

    def test_single_triangle_all_true(self):
        assert detect_boundary(pr.single_triangle()).all()

    def test_grid_perimeter_count(self):
        n = 9
        flags = detect_boundary(pr.grid_mesh(n))
        assert flags.sum() == 4 * (n - 1)


class TestSubmesh:
    def test_full_mask_identity(self):
        m = pr.grid_mesh(5)
        sub, vmap = submesh(m, RegionMask(np.ones(m.n_vertices, dtype=bool)))
        assert sub.n_vertices == m.n_vertices
        assert np.array_equal(vmap, np.arange(m.n_vertices))
        assert np.array_equal(sub.faces, m.faces)

    def test_single_triangle(self):
        m = unit_square()
        flags = np.zeros(4, dtype=bool)
        flags[[0, 1, 2]] = True
        sub, vmap = submesh(m, RegionMask(flags))
        assert sub.n_faces == 1
        assert np.array_equal(vmap, [0, 1, 2])

    def test_two_vertices_raise(self):
        m = pr.single_triangle()
        flags = np.array([True, True, False])
        with pytest.raises(EmptySubmesh):
            submesh(m, flags)


def _dijkstra_reference(mesh, source):
    """Plain heapq Dijkstra over the edge graph, independent of scipy."""
    edges = {}
    for f in mesh.faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            w = float(np.linalg.norm(mesh.vertices[a] - mesh.vertices[b]))
            edges.setdefault(int(a), {})[int(b)] = w
            edges.setdefault(int(b), {})[int(a)] = w
    dist = {source: 0.0}
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, np.inf):
            continue
        for v, w in edges.get(u, {}).items():
            nd = d + w
            if nd < dist.get(v, np.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    out = np.full(mesh.n_vertices, np.inf)
    for v, d in dist.items():
        out[v] = d
    return out


class TestGeodesicPatch:
    def test_tiny_radius_is_seed_only(self, family_small):
        tmpl = family_small.template
        seed = 10
        edge_min = geodesic_distances(tmpl, seed)[0]
        shortest = np.partition(edge_min[edge_min > 0], 0)[0]
        mask = geodesic_patch(family_small, seed, shortest * 0.5)
        assert mask.count == 1 and mask.flags[seed]

    def test_huge_radius_is_everything(self, family_small):
        mask = geodesic_patch(family_small, 0, 1e9)
        assert mask.count == family_small.n_vertices

    def test_matches_reference_dijkstra_on_grid(self):
        grid = pr.grid_mesh(8)
        ref = _dijkstra_reference(grid, 0)
        expected = int((ref <= 0.5).sum())
        mask = geodesic_patch(grid, 0, 0.5)
        assert mask.count == expected

    def test_monotone_in_radius(self, family_small):
        m1 = geodesic_patch(family_small, 25, 0.2)
        m2 = geodesic_patch(family_small, 25, 0.35)
        assert (m1.flags <= m2.flags).all()


class TestDecimate:
    def test_target_vertex_count(self):
        m = pr.icosphere(3)  # 642 vertices
        out = decimate(m, 0.3)
        assert out.n_vertices <= int(np.ceil(0.7 * m.n_vertices))

    def test_tiny_drop_fraction_unchanged(self):
        m = pr.icosphere(2)
        out = decimate(m, 1e-9)
        assert out.n_vertices == m.n_vertices

    def test_sphere_area_preserved(self):
        m = pr.icosphere(3)
        out = decimate(m, 0.3)
        assert abs(surface_area(out) - surface_area(m)) / surface_area(m) < 0.05

    def test_open_patch_keeps_boundary_shape(self):
        m = pr.grid_mesh(12)
        out = decimate(m, 0.3)
        assert abs(surface_area(out) - 1.0) < 0.05


class TestSynthFamily:
    def test_involution_and_left_labels(self, family_small):
        fam = family_small
        v = fam.n_vertices
        assert np.array_equal(fam.symmetry_map[fam.symmetry_map], np.arange(v))
        assert np.array_equal(fam.left_labels, fam.template.vertices[:, 0] < 0)
        img = fam.symmetry_map[fam.left_labels]
        midline = fam.symmetry_map == np.arange(v)
        assert not fam.left_labels[img].any()
        assert not midline[img].any()

    def test_deterministic(self):
        a = synth_family(9, 2, 2, v_target=400)
        b = synth_family(9, 2, 2, v_target=400)
        assert np.array_equal(a.embeddings, b.embeddings)
        assert np.array_equal(a.template.vertices, b.template.vertices)

    def test_mirror_is_mesh_automorphism(self, family_small):
        fam = family_small
        faces = {frozenset(f) for f in fam.template.faces.tolist()}
        mirrored = {frozenset(fam.symmetry_map[list(f)]) for f in faces}
        assert faces == mirrored

    def test_pose_quasi_isometric(self, family_small):
        for i in range(family_small.identities):
            a0 = surface_area(family_small.embedding_mesh(i, 0))
            for p in range(1, family_small.poses):
                ap = surface_area(family_small.embedding_mesh(i, p))
                assert abs(ap - a0) / a0 < 0.02

    def test_pose_distance_below_identity_distance(self, family_small):
        fam = family_small
        specs = {
            (i, p): spectrum(fam.embedding_mesh(i, p, unit_area=True), k=20, bc="closed").values
            for i in range(fam.identities)
            for p in range(fam.poses)
        }
        within, across = [], []
        for i in range(fam.identities):
            for p in range(fam.poses):
                for q in range(p + 1, fam.poses):
                    within.append(np.linalg.norm(specs[i, p] - specs[i, q]))
        for i in range(fam.identities):
            for j in range(i + 1, fam.identities):
                for p in range(fam.poses):
                    for q in range(fam.poses):
                        across.append(np.linalg.norm(specs[i, p] - specs[j, q]))
        assert np.mean(within) < np.mean(across)


class TestMaskMorphology:
    def test_dilate_then_erode_superset(self, family_small):
        tmpl = family_small.template
        mask = geodesic_patch(family_small, 40, 0.3).flags
        roundtrip = erode_mask(tmpl, dilate_mask(tmpl, mask))
        assert (mask <= roundtrip).all()

    def test_erode_shrinks_dilate_grows(self, family_small):
        tmpl = family_small.template
        mask = geodesic_patch(family_small, 40, 0.3).flags
        assert dilate_mask(tmpl, mask).sum() > mask.sum()
        assert erode_mask(tmpl, mask).sum() < mask.sum()

    def test_connectivity_check(self, family_small):
        tmpl = family_small.template
        flags = np.zeros(tmpl.n_vertices, dtype=bool)
        flags[0] = True
        flags[tmpl.n_vertices // 2] = True
        assert not mask_connected(tmpl, flags)
        assert mask_connected(tmpl, geodesic_patch(family_small, 3, 0.3).flags)


class TestSamplePointcloud:
    def test_mean_position_on_square(self):
        pc = sample_pointcloud(pr.grid_mesh(6), 1000, seed=4)
        mean = pc.points.mean(axis=0)
        assert np.linalg.norm(mean - [0.5, 0.5, 0.0]) < 0.05

    def test_deterministic(self):
        a = sample_pointcloud(pr.grid_mesh(6), 200, seed=9)
        b = sample_pointcloud(pr.grid_mesh(6), 200, seed=9)
        assert np.array_equal(a.points, b.points)

    def test_closed_mesh_no_boundary_flags(self):
        pc = sample_pointcloud(pr.icosphere(2), 500, seed=1)
        assert not pc.boundary_flags.any()

    def test_open_mesh_flags_near_rim(self):
        pc = sample_pointcloud(pr.grid_mesh(10), 800, seed=2)
        flagged = pc.points[pc.boundary_flags]
        assert len(flagged) > 0
        rim_dist = np.minimum.reduce(
            [flagged[:, 0], 1 - flagged[:, 0], flagged[:, 1], 1 - flagged[:, 1]]
        )
        assert rim_dist.max() <= np.sqrt(1.0 / 800) + 1e-12
