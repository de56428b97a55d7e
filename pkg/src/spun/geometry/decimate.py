"""Quadric-error edge-collapse decimation.

Classic accumulated plane-quadric simplification with two safety rails:
collapses that would flip an incident face normal are rejected, and a link
condition preserves local manifoldness.  Boundary edges add perpendicular
constraint quadrics so open patches keep their outline (and hence their
Dirichlet spectrum) as well as possible.
"""

import heapq
import warnings

import numpy as np

from ..errors import CannotReachWarning
from .mesh import TriMesh, detect_boundary

BOUNDARY_PENALTY = 100.0


def _face_normal(p0, p1, p2):
    return np.cross(p1 - p0, p2 - p0)


def _plane_quadric(normal, point, weight):
    n2 = normal @ normal
    if n2 <= 0:
        return np.zeros((4, 4))
    n = normal / np.sqrt(n2)
    d = -n @ point
    p = np.append(n, d)
    return weight * np.outer(p, p)


def decimate(mesh, drop_fraction):
    """Collapse edges until the vertex count is at most (1-drop)·V.

    Collapse order is by ascending quadric cost, ties by insertion index.
    If every remaining collapse is rejected a :class:`CannotReachWarning`
    is emitted and the best-effort mesh returned.
    """
    if not 0 < drop_fraction < 1:
        raise ValueError("drop_fraction must be in (0, 1)")
    if mesh.n_vertices <= 10:
        raise ValueError("mesh too small to decimate")
    nv = mesh.n_vertices
    target = int(np.ceil((1.0 - drop_fraction) * nv))
    pos = mesh.vertices.copy()
    faces = {fid: tuple(f) for fid, f in enumerate(mesh.faces.tolist())}
    vfaces = {v: set() for v in range(nv)}
    for fid, f in faces.items():
        for v in f:
            vfaces[v].add(fid)
    alive = np.ones(nv, dtype=bool)
    boundary = detect_boundary(mesh)

    quadrics = np.zeros((nv, 4, 4))
    edge_faces = {}
    for fid, (a, b, c) in faces.items():
        n = _face_normal(pos[a], pos[b], pos[c])
        area = 0.5 * np.linalg.norm(n)
        q = _plane_quadric(n, pos[a], area)
        for v in (a, b, c):
            quadrics[v] += q
        for e in ((a, b), (b, c), (c, a)):
            edge_faces.setdefault((min(e), max(e)), []).append(fid)
    for (a, b), fids in edge_faces.items():
        if len(fids) != 1:
            continue
        fa, fb, fc = faces[fids[0]]
        n = _face_normal(pos[fa], pos[fb], pos[fc])
        edge = pos[b] - pos[a]
        cn = np.cross(edge, n)
        q = _plane_quadric(cn, pos[a], BOUNDARY_PENALTY * (edge @ edge))
        quadrics[a] += q
        quadrics[b] += q

    nbrs = {v: set() for v in range(nv)}
    for a, b in edge_faces:
        nbrs[a].add(b)
        nbrs[b].add(a)

    stamp = np.zeros(nv, dtype=np.int64)
    heap = []
    counter = 0

    def edge_cost(i, j):
        q = quadrics[i] + quadrics[j]
        a3 = q[:3, :3]
        b3 = q[:3, 3]
        p = None
        det = np.linalg.det(a3)
        scale = max(np.abs(a3).max(), 1e-30) ** 3
        if abs(det) > 1e-9 * scale:
            p = np.linalg.solve(a3, -b3)
        cands = [pos[i], pos[j], 0.5 * (pos[i] + pos[j])]
        if p is not None:
            cands.insert(0, p)
        best, best_cost = None, np.inf
        for cand in cands:
            h = np.append(cand, 1.0)
            c = float(h @ q @ h)
            if c < best_cost:
                best, best_cost = cand, c
        return max(best_cost, 0.0), best

    def push(i, j):
        nonlocal counter
        cost, p = edge_cost(i, j)
        heapq.heappush(heap, (cost, counter, i, j, stamp[i], stamp[j], p))
        counter += 1

    for a, b in sorted(edge_faces):
        push(a, b)

    def flips_normal(i, j, p):
        moved = {i, j}
        for v in (i, j):
            for fid in vfaces[v]:
                f = faces[fid]
                if i in f and j in f:
                    continue  # face vanishes
                old = _face_normal(pos[f[0]], pos[f[1]], pos[f[2]])
                newpts = [p if u in moved else pos[u] for u in f]
                new = _face_normal(*newpts)
                nn = np.linalg.norm(new)
                if nn < 1e-12 * max(np.linalg.norm(old), 1e-30) or old @ new <= 0:
                    return True
        return False

    def link_ok(i, j):
        shared = vfaces[i] & vfaces[j]
        if not shared:
            return False
        opp = {v for fid in shared for v in faces[fid] if v not in (i, j)}
        return (nbrs[i] & nbrs[j]) == opp

    n_alive = nv
    while n_alive > target and heap:
        cost, _, i, j, si, sj, p = heapq.heappop(heap)
        if not (alive[i] and alive[j]) or stamp[i] != si or stamp[j] != sj:
            continue
        if j not in nbrs[i]:
            continue
        if not link_ok(i, j) or flips_normal(i, j, p):
            continue
        # merge j into i at p
        shared = vfaces[i] & vfaces[j]
        for fid in shared:
            for v in faces[fid]:
                vfaces[v].discard(fid)
            del faces[fid]
        for fid in list(vfaces[j]):
            f = faces[fid]
            faces[fid] = tuple(i if v == j else v for v in f)
            vfaces[i].add(fid)
            vfaces[j].discard(fid)
        pos[i] = p
        quadrics[i] = quadrics[i] + quadrics[j]
        alive[j] = False
        n_alive -= 1
        affected = nbrs[j] | nbrs[i] | {i}
        affected.discard(j)
        for v in affected:
            fresh = set()
            for fid in vfaces[v]:
                for u in faces[fid]:
                    if u != v:
                        fresh.add(u)
            nbrs[v] = fresh
        nbrs[j] = set()
        stamp[list(affected)] += 1
        for u in sorted(nbrs[i]):
            push(i, u)

    if n_alive > target:
        warnings.warn(
            f"decimation stalled at {n_alive} vertices (target {target})", CannotReachWarning
        )

    keep = np.flatnonzero(alive)
    remap = np.full(nv, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    out_faces = np.array([remap[list(f)] for f in faces.values()], dtype=np.int64)
    referenced = np.zeros(len(keep), dtype=bool)
    referenced[out_faces.ravel()] = True
    if not referenced.all():
        keep2 = np.flatnonzero(referenced)
        remap2 = np.full(len(keep), -1, dtype=np.int64)
        remap2[keep2] = np.arange(len(keep2))
        return TriMesh(pos[keep][keep2], remap2[out_faces])
    return TriMesh(pos[keep], out_faces)
