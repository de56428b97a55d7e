import io

import numpy as np
import pytest

from spun.errors import EmptyShape, ParseError
from spun.geometry import (
    PointCloud,
    TriMesh,
    load_shape,
    read_off_scalars,
    write_off,
    write_ply_ascii,
)
from spun.geometry import primitives as pr
from spun.geometry.family import load_family, save_family, synth_family

TETRA_OFF = """OFF
4 4 0
1.0 1.0 1.0
1.0 -1.0 -1.0
-1.0 1.0 -1.0
-1.0 -1.0 1.0
3 0 1 2
3 0 3 1
3 0 2 3
3 1 3 2
"""

PLY_POINTS = """ply
format ascii 1.0
element vertex 20
property double x
property double y
property double z
element face 0
property list uchar int vertex_indices
end_header
""" + "\n".join(f"{i / 20} {i / 10} 0.0" for i in range(20))


class TestLoadShape:
    def test_off_tetrahedron(self):
        shape = load_shape(TETRA_OFF)
        assert isinstance(shape, TriMesh)
        assert shape.n_vertices == 4 and shape.n_faces == 4

    def test_ply_without_faces_is_pointcloud(self):
        shape = load_shape(PLY_POINTS)
        assert isinstance(shape, PointCloud)
        assert shape.n_points == 20

    def test_vertex_count_mismatch(self):
        bad = TETRA_OFF.replace("4 4 0", "5 4 0")
        with pytest.raises(ParseError):
            load_shape(bad)

    def test_zero_vertices(self):
        with pytest.raises(EmptyShape):
            load_shape("OFF\n0 0 0\n")

    def test_sniffs_format(self):
        assert isinstance(load_shape(TETRA_OFF.encode()), TriMesh)
        assert isinstance(load_shape(PLY_POINTS.encode()), PointCloud)

    def test_unknown_magic(self):
        with pytest.raises(ParseError):
            load_shape("STL whatever")

    def test_bad_face_index(self):
        bad = TETRA_OFF.replace("3 1 3 2", "3 1 3 9")
        with pytest.raises(ParseError):
            load_shape(bad)


class TestWriters:
    def test_off_roundtrip_bit_exact(self):
        mesh = pr.icosphere(1)
        buf = io.StringIO()
        write_off(mesh, buf)
        back = load_shape(buf.getvalue())
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.faces, mesh.faces)

    def test_ply_roundtrip(self):
        mesh = pr.grid_mesh(4)
        buf = io.StringIO()
        write_ply_ascii(mesh, buf)
        back = load_shape(buf.getvalue())
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.faces, mesh.faces)

    def test_vertex_scalar_comment_block(self):
        mesh = pr.single_triangle()
        scal = np.array([0.25, 0.5, 1.0])
        buf = io.StringIO()
        write_off(mesh, buf, vertex_scalars=scal)
        text = buf.getvalue()
        assert load_shape(text).n_vertices == 3  # comments ignored by the reader
        assert np.array_equal(read_off_scalars(text), scal)


class TestFamilyDirectory:
    def test_roundtrip(self, tmp_path):
        fam = synth_family(5, 2, 2, v_target=300)
        save_family(fam, tmp_path)
        back = load_family(tmp_path)
        assert back.identities == 2 and back.poses == 2
        assert np.array_equal(back.symmetry_map, fam.symmetry_map)
        assert np.array_equal(back.left_labels, fam.left_labels)
        assert np.array_equal(back.embeddings, fam.embeddings)

    def test_missing_symmetry_warns(self, tmp_path):
        fam = synth_family(5, 1, 1, v_target=300)
        save_family(fam, tmp_path)
        (tmp_path / "symmetry.txt").unlink()
        with pytest.warns(UserWarning, match="symmetry"):
            back = load_family(tmp_path)
        assert np.array_equal(back.symmetry_map, np.arange(fam.n_vertices))

    def test_missing_pose_raises(self, tmp_path):
        fam = synth_family(5, 2, 2, v_target=300)
        save_family(fam, tmp_path)
        (tmp_path / "id1_pose0.off").unlink()
        with pytest.raises(ValueError, match="missing"):
            load_family(tmp_path)
