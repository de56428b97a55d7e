"""Area-weighted surface sampling."""

import numpy as np

from .mesh import PointCloud, boundary_edges, face_areas, surface_area


def sample_pointcloud(mesh, n, seed, k_nn=12):
    """Uniform (area-weighted) surface samples as a point cloud.

    Boundary flags are set for samples within one mean spacing
    ``sqrt(area / n)`` of a boundary edge segment; deterministic in ``seed``.
    """
    if n < 32:
        raise ValueError("need n >= 32 samples")
    rng = np.random.default_rng(seed)
    fa = face_areas(mesh)
    probs = fa / fa.sum()
    fidx = rng.choice(len(fa), size=n, p=probs)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a = mesh.vertices[mesh.faces[fidx, 0]]
    b = mesh.vertices[mesh.faces[fidx, 1]]
    c = mesh.vertices[mesh.faces[fidx, 2]]
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c

    be = boundary_edges(mesh)
    if len(be) == 0:
        flags = np.zeros(n, dtype=bool)
    else:
        spacing = np.sqrt(surface_area(mesh) / n)
        flags = _near_segments(pts, mesh.vertices[be[:, 0]], mesh.vertices[be[:, 1]], spacing)
    return PointCloud(pts, boundary_flags=flags, k_nn=k_nn)


def _near_segments(pts, seg_a, seg_b, radius):
    """True for points within ``radius`` of any segment (a_i, b_i)."""
    d = seg_b - seg_a  # (E, 3)
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd == 0, 1.0, dd)
    flags = np.zeros(len(pts), dtype=bool)
    # chunked to bound the (N, E) distance matrix size
    step = max(1, int(2e6 / max(len(seg_a), 1)))
    for lo in range(0, len(pts), step):
        p = pts[lo:lo + step]
        w = p[:, None, :] - seg_a[None, :, :]  # (n, E, 3)
        t = np.clip(np.einsum("nej,ej->ne", w, d) / dd[None, :], 0.0, 1.0)
        proj = seg_a[None, :, :] + t[:, :, None] * d[None, :, :]
        dist2 = ((p[:, None, :] - proj) ** 2).sum(axis=2)
        flags[lo:lo + step] = dist2.min(axis=1) <= radius**2
    return flags
