"""Template-registered shape families and a synthetic deformable generator.

A family holds identities x poses embeddings over a shared template
connectivity, an exact bilateral symmetry permutation, and left-side labels.
The synthetic generator produces a mirror-symmetric "biped blob" (ellipsoid
with limb protrusions), per-identity radial warps (area-changing) and
per-pose limb bends that are quasi-isometric (area change under 2%).
"""

import hashlib
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .io import load_shape_file
from .mesh import TriMesh, normalize_area, surface_area
from .patch import geodesic_distances


@dataclass
class ShapeFamily:
    """Identities x poses embeddings sharing template connectivity."""

    template: TriMesh
    identities: int
    poses: int
    embeddings: np.ndarray  # (I, P, V, 3)
    symmetry_map: np.ndarray  # involutive vertex permutation
    left_labels: np.ndarray  # bool, template left side (x < 0)
    seed: int | None = None
    _dist: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = self.template.n_vertices
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.symmetry_map = np.asarray(self.symmetry_map, dtype=np.int64)
        self.left_labels = np.asarray(self.left_labels, dtype=bool)
        if self.embeddings.shape != (self.identities, self.poses, v, 3):
            raise ValueError("embeddings must be (I, P, V, 3)")
        if self.symmetry_map.shape != (v,) or self.left_labels.shape != (v,):
            raise ValueError("symmetry_map/left_labels must have length V")
        if not np.array_equal(self.symmetry_map[self.symmetry_map], np.arange(v)):
            raise ValueError("symmetry_map is not an involution")

    @property
    def n_vertices(self):
        return self.template.n_vertices

    def embedding_mesh(self, identity, pose, unit_area=False):
        mesh = TriMesh(self.embeddings[identity, pose], self.template.faces)
        return normalize_area(mesh, 1.0) if unit_area else mesh

    def template_distances(self):
        """Cached all-pairs graph-geodesic distances on the template."""
        if self._dist is None:
            self._dist = geodesic_distances(self.template)
        return self._dist

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(self.template.vertices.tobytes())
        h.update(self.template.faces.tobytes())
        h.update(self.embeddings.tobytes())
        h.update(self.symmetry_map.tobytes())
        return h.hexdigest()[:16]


# -- symmetric sphere template -------------------------------------------------


def _mirror_col(j, m):
    return (m // 2 - j) % m


def _symmetric_sphere(n_theta, m):
    """Lat/long sphere whose mirror x -> -x is an exact mesh automorphism.

    Requires ``m % 4 == 0`` so the alternating quad diagonals map onto each
    other under the column reflection and two columns sit exactly on x = 0.
    """
    if m % 4 != 0:
        raise ValueError("m must be a multiple of 4")
    thetas = np.pi * np.arange(1, n_theta + 1) / (n_theta + 1)
    nv = 2 + n_theta * m
    verts = np.zeros((nv, 3))
    verts[0] = (0.0, 0.0, 1.0)
    verts[1] = (0.0, 0.0, -1.0)

    def vid(i, j):
        return 2 + i * m + (j % m)

    for i, th in enumerate(thetas):
        st, ct = np.sin(th), np.cos(th)
        for j in range(m):
            jj = _mirror_col(j, m)
            phi = 2.0 * np.pi * j / m
            if j in (m // 4, 3 * m // 4):
                verts[vid(i, j)] = (0.0, st * np.sin(phi), ct)
            elif jj > j or (j < m // 4 or j > 3 * m // 4):
                # x > 0 half computed directly
                if j < m // 4 or j > 3 * m // 4:
                    verts[vid(i, j)] = (st * np.cos(phi), st * np.sin(phi), ct)
    for i in range(n_theta):
        for j in range(m):
            if m // 4 < j < 3 * m // 4:  # x < 0 half: exact mirror copy
                src = verts[vid(i, _mirror_col(j, m))]
                verts[vid(i, j)] = (-src[0], src[1], src[2])

    faces = []
    for j in range(m):  # north fan
        faces.append([0, vid(0, j + 1), vid(0, j)])
    for i in range(n_theta - 1):
        for j in range(m):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j + 1), vid(i + 1, j)
            if j % 2 == 0:
                faces += [[a, b, c], [a, c, d]]
            else:
                faces += [[a, b, d], [b, c, d]]
    for j in range(m):  # south fan
        faces.append([1, vid(n_theta - 1, j), vid(n_theta - 1, j + 1)])

    sym = np.arange(nv)
    for i in range(n_theta):
        for j in range(m):
            sym[vid(i, j)] = vid(i, _mirror_col(j, m))

    mesh = TriMesh(verts, np.array(faces))
    # orient outward (positive enclosed volume)
    vol = np.einsum(
        "ij,ij->i",
        mesh.vertices[mesh.faces[:, 0]],
        np.cross(mesh.vertices[mesh.faces[:, 1]], mesh.vertices[mesh.faces[:, 2]]),
    ).sum()
    if vol < 0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, [0, 2, 1]])
    return mesh, sym


def _bump(dirs, center, width):
    c = np.asarray(center, dtype=np.float64)
    c = c / np.linalg.norm(c)
    d = dirs @ c
    return np.exp(-((1.0 - d) ** 2) / (2.0 * width**2))


def _pair_bump(dirs, center, width):
    cx, cy, cz = center
    return _bump(dirs, (cx, cy, cz), width) + _bump(dirs, (-cx, cy, cz), width)


_HEAD = (0.0, 0.40, 1.0)
_ARM = (0.92, 0.12, 0.25)
_LEG = (0.48, 0.06, -0.88)
_BELLY = (0.0, 1.0, -0.15)


def _base_radius(dirs):
    r = np.full(len(dirs), 1.0)
    r += 0.30 * dirs[:, 2] ** 2  # prolate torso
    r += 0.40 * _bump(dirs, _HEAD, 0.07)
    r += 0.45 * _pair_bump(dirs, _ARM, 0.055)
    r += 0.40 * _pair_bump(dirs, _LEG, 0.06)
    r += 0.15 * _bump(dirs, _BELLY, 0.16)
    return r


def _identity_gain(dirs, rng):
    """Mirror-symmetric multiplicative radial warp; amplitudes per identity.

    Amplitudes are sized so identities separate clearly in spectrum space
    (well beyond the pose-induced spread), as body types do for humans.
    """
    a = rng.uniform(-1.0, 1.0, size=6)
    g = np.full(len(dirs), 1.0)
    g += 0.18 * a[0] * (dirs[:, 2] ** 2 - 1.0 / 3.0)
    g += 0.40 * a[1] * _bump(dirs, _HEAD, 0.08)
    g += 0.36 * a[2] * _pair_bump(dirs, _ARM, 0.07)
    g += 0.36 * a[3] * _pair_bump(dirs, _LEG, 0.075)
    g += 0.22 * a[4] * _bump(dirs, _BELLY, 0.18)
    g += 0.10 * a[5] * dirs[:, 1]
    g *= 1.0 + 0.12 * rng.uniform(-1.0, 1.0)
    return g


def _rotation(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    cc = 1.0 - c
    return np.array(
        [
            [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
            [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
            [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
        ]
    )


def _weighted_rotate(points, weights, axis, angle, hinge):
    """Blend between identity and a rigid rotation about ``hinge``.

    Rigid where the weight is ~1, identity where ~0; only the transition
    band distorts the metric, so small angles stay quasi-isometric.
    """
    out = points.copy()
    active = weights > 1e-4
    if not active.any():
        return out
    rel = points[active] - hinge
    ang = weights[active] * angle
    # per-point Rodrigues rotation
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    cos_a = np.cos(ang)[:, None]
    sin_a = np.sin(ang)[:, None]
    out[active] = (
        hinge
        + rel * cos_a
        + np.cross(np.broadcast_to(k, rel.shape), rel) * sin_a
        + k[None, :] * ((rel @ k)[:, None]) * (1.0 - cos_a)
    )
    return out


def _pose_params(rng):
    return {
        "arm_l": rng.uniform(-0.55, 0.55),
        "arm_r": rng.uniform(-0.55, 0.55),
        "leg_l": rng.uniform(-0.35, 0.35),
        "leg_r": rng.uniform(-0.35, 0.35),
        "twist": rng.uniform(-0.25, 0.25),
        "lean": rng.uniform(-0.18, 0.18),
    }


def _apply_pose(points, dirs, params, scale=1.0):
    p = points
    limbs = [
        ((_ARM[0], _ARM[1], _ARM[2]), (0.0, 1.0, 0.0), params["arm_r"]),
        ((-_ARM[0], _ARM[1], _ARM[2]), (0.0, 1.0, 0.0), -params["arm_l"]),
        ((_LEG[0], _LEG[1], _LEG[2]), (0.0, 1.0, 0.0), params["leg_r"]),
        ((-_LEG[0], _LEG[1], _LEG[2]), (0.0, 1.0, 0.0), -params["leg_l"]),
    ]
    for center, axis, angle in limbs:
        w = _bump(dirs, center, 0.10)
        hinge = 0.75 * np.asarray(center) / np.linalg.norm(center)
        p = _weighted_rotate(p, w, axis, scale * angle, hinge)
    tw = 0.5 * (1.0 + np.tanh(4.0 * dirs[:, 2]))
    p = _weighted_rotate(p, tw, (0.0, 0.0, 1.0), scale * params["twist"], np.zeros(3))
    p = _weighted_rotate(
        p, np.full(len(p), 1.0) * (0.5 + 0.5 * dirs[:, 2]), (0.0, 1.0, 0.0),
        scale * params["lean"], np.zeros(3),
    )
    return p


def synth_family(seed, identities, poses, v_target=700):
    """Deterministic synthetic family of bilaterally symmetric bipeds.

    Identities are smooth mirror-symmetric radial warps (area-changing);
    poses are limb bends kept quasi-isometric (per-pose area change below
    2%, enforced by shrinking bend angles when necessary).  The template is
    normalized to unit area; pose 0 is the neutral pose.
    """
    if identities < 1 or poses < 1:
        raise ValueError("need at least one identity and one pose")
    m = max(8, 4 * int(round(np.sqrt(2.0 * v_target) / 4.0)))
    n_theta = max(3, int(round((v_target - 2) / m)))
    sphere, sym = _symmetric_sphere(n_theta, m)
    dirs = sphere.vertices  # unit directions
    base = _base_radius(dirs)
    template_pts = base[:, None] * dirs
    template = TriMesh(template_pts, sphere.faces)
    tscale = np.sqrt(1.0 / surface_area(template))
    template = TriMesh(template.vertices * tscale, template.faces)

    gains = []
    for i in range(identities):
        rng = np.random.default_rng([int(seed), 11, i])
        gains.append(_identity_gain(dirs, rng))

    pose_list = []
    for p in range(poses):
        if p == 0:
            pose_list.append(None)
        else:
            rng = np.random.default_rng([int(seed), 23, p])
            pose_list.append(_pose_params(rng))

    nv = template.n_vertices
    emb = np.empty((identities, poses, nv, 3))
    for i in range(identities):
        neutral = (base * gains[i])[:, None] * dirs * tscale
        neutral_area = surface_area(TriMesh(neutral, template.faces))
        for p in range(poses):
            if pose_list[p] is None:
                emb[i, p] = neutral
                continue
            scale = 1.0
            for _ in range(12):
                pts = _apply_pose(neutral, dirs, pose_list[p], scale=scale)
                area = surface_area(TriMesh(pts, template.faces))
                if abs(area - neutral_area) / neutral_area < 0.019:
                    break
                scale *= 0.75
            emb[i, p] = pts

    left = template.vertices[:, 0] < 0.0
    return ShapeFamily(
        template=template,
        identities=identities,
        poses=poses,
        embeddings=emb,
        symmetry_map=sym,
        left_labels=left,
        seed=int(seed),
    )


# -- FAUST-style directory ingestion -------------------------------------------

_NAME_RE = re.compile(r"^id(\d+)_pose(\d+)\.off$")


def load_family(directory):
    """Load a family from a directory of registered OFF files.

    Files are named ``id<I>_pose<P>.off`` and must share connectivity.
    Optional ``symmetry.txt`` (one 0-based index per line) and ``left.txt``
    (0/1 per line) provide the symmetry permutation and left labels; when
    absent the identity permutation and ``x < 0`` of the template are used,
    with a warning.
    """
    from pathlib import Path

    directory = Path(directory)
    found = {}
    for path in sorted(directory.iterdir()):
        mm = _NAME_RE.match(path.name)
        if mm:
            found[(int(mm.group(1)), int(mm.group(2)))] = path
    if not found:
        raise ValueError(f"no id<I>_pose<P>.off files in {directory}")
    n_i = max(k[0] for k in found) + 1
    n_p = max(k[1] for k in found) + 1
    missing = [(i, p) for i in range(n_i) for p in range(n_p) if (i, p) not in found]
    if missing:
        raise ValueError(f"missing embeddings for {missing[:5]}")

    template = None
    emb = None
    for (i, p), path in sorted(found.items()):
        mesh = load_shape_file(path)
        if not isinstance(mesh, TriMesh):
            raise ValueError(f"{path.name} has no faces")
        if template is None:
            template = mesh
            emb = np.empty((n_i, n_p, mesh.n_vertices, 3))
        elif not np.array_equal(mesh.faces, template.faces):
            raise ValueError(f"{path.name} does not share template connectivity")
        emb[i, p] = mesh.vertices

    sym_path = directory / "symmetry.txt"
    if sym_path.exists():
        sym = np.loadtxt(sym_path, dtype=np.int64).reshape(-1)
    else:
        warnings.warn("symmetry.txt missing; using identity permutation")
        sym = np.arange(template.n_vertices)
    left_path = directory / "left.txt"
    if left_path.exists():
        left = np.loadtxt(left_path, dtype=np.int64).reshape(-1).astype(bool)
    else:
        left = template.vertices[:, 0] < 0.0
    return ShapeFamily(
        template=template,
        identities=n_i,
        poses=n_p,
        embeddings=emb,
        symmetry_map=sym,
        left_labels=left,
    )


def save_family(family, directory):
    """Write a family in the FAUST-style directory layout."""
    from pathlib import Path

    from .io import write_off

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(family.identities):
        for p in range(family.poses):
            write_off(family.embedding_mesh(i, p), directory / f"id{i}_pose{p}.off")
    np.savetxt(directory / "symmetry.txt", family.symmetry_map, fmt="%d")
    np.savetxt(directory / "left.txt", family.left_labels.astype(int), fmt="%d")
