"""Procedural test meshes: grids, spheres, and simple fixtures."""

import numpy as np

from .mesh import TriMesh


def single_triangle():
    return TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def tetrahedron():
    v = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]
    f = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return TriMesh(v, f)


def grid_mesh(n, side=1.0):
    """(n × n)-vertex triangulated square of edge length ``side`` in z=0.

    Each grid cell is split along the same diagonal, which makes the cotan
    stiffness coincide with the classic 5-point finite-difference stencil.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    xs = np.linspace(0.0, side, n)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(n * n)])
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = a + 1
            c = a + n
            d = c + 1
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriMesh(verts, np.array(faces))


def icosphere(subdivisions=2, radius=1.0):
    """Icosahedron subdivided ``subdivisions`` times, projected to a sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    for _ in range(subdivisions):
        edge_mid = {}
        new_faces = []
        vlist = list(verts)

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in edge_mid:
                p = vlist[a] + vlist[b]
                p = p / np.linalg.norm(p)
                edge_mid[key] = len(vlist)
                vlist.append(p)
            return edge_mid[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces)
    return TriMesh(verts * radius, faces)


def disk_mesh(n_rings=10, radius=1.0):
    """Flat unit-disk triangulation with ``n_rings`` concentric rings."""
    verts = [np.zeros(3)]
    ring_start = [0]
    for r in range(1, n_rings + 1):
        m = 6 * r
        ring_start.append(len(verts))
        ang = 2 * np.pi * np.arange(m) / m
        rr = radius * r / n_rings
        verts.extend(np.column_stack([rr * np.cos(ang), rr * np.sin(ang), np.zeros(m)]))
    faces = []
    for r in range(1, n_rings + 1):
        inner, outer = ring_start[r - 1], ring_start[r]
        n_in, n_out = 6 * (r - 1) if r > 1 else 1, 6 * r
        for j in range(n_out):
            a = outer + j
            b = outer + (j + 1) % n_out
            # nearest inner vertex by fractional position along the ring
            ji = int(np.floor(j * n_in / n_out)) % n_in if r > 1 else 0
            c = inner + ji
            faces.append([a, b, c])
            if r > 1:
                ji2 = int(np.floor((j + 1) * n_in / n_out)) % n_in
                if ji2 != ji:
                    faces.append([b, inner + ji2, c])
    return TriMesh(np.array(verts), np.array(faces))


def two_disjoint_squares(n=12, sides=(1.0, 0.7), gap=2.0):
    """Two separated flat square grids merged into one mesh (two components)."""
    a = grid_mesh(n, sides[0])
    b = grid_mesh(n, sides[1])
    bv = b.vertices + np.array([gap, 0.0, 0.0])
    verts = np.vstack([a.vertices, bv])
    faces = np.vstack([a.faces, b.faces + a.n_vertices])
    return TriMesh(verts, faces)
