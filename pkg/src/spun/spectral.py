"""Discrete Laplacians, truncated spectra, and spectral encodings.

The discretization is the community-standard cotangent stiffness with
barycentric lumped mass, which turns the generalized eigenproblem into a
symmetric standard one via the diagonal mass.  Spectra are truncated to the
first ``k`` eigenvalues (default 20).  Eigenfunctions are never exposed.

For closed shapes the leading (near-)zero eigenvalue is dropped and the
next ``k`` returned; partial shapes use homogeneous Dirichlet conditions on
their boundary.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from .errors import (
    AllBoundary,
    ConvergenceFailure,
    DegenerateTriangleWarning,
    DisconnectedGraphWarning,
    LengthMismatch,
    NegativeOffset,
    NoBoundary,
    ParseError,
)
from .geometry.mesh import PointCloud, TriMesh, vertex_areas

DEFAULT_K = 20
COT_CLAMP = 1e6
RESIDUAL_TOL = 1e-8
DENSE_LIMIT = 3000


@dataclass
class LaplacianPair:
    """Stiffness/mass pair (L, M) with provenance indices.

    ``stiffness`` is sparse symmetric PSD, ``mass`` holds the diagonal of the
    lumped mass matrix, and ``kept_vertices`` maps system rows back to the
    source shape (identity until a Dirichlet reduction removes rows).
    """

    stiffness: sparse.csr_matrix
    mass: np.ndarray
    kept_vertices: np.ndarray
    reduced: bool = False

    @property
    def n(self):
        return self.stiffness.shape[0]


@dataclass
class Spectrum:
    """Truncated non-decreasing eigenvalue sequence.

    ``bc`` records the boundary-condition convention: "dirichlet" for partial
    shapes, "closed" for watertight ones (zero mode dropped).
    """

    values: np.ndarray
    k: int = DEFAULT_K
    bc: str = "dirichlet"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.k,):
            raise LengthMismatch(f"expected {self.k} values, got {self.values.shape}")
        if self.bc not in ("dirichlet", "closed"):
            raise ValueError(f"unknown bc '{self.bc}'")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite eigenvalues")
        if self.values.min() < 0:
            raise ValueError("negative eigenvalue")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("eigenvalues not sorted")

    def to_json(self):
        return json.dumps({"k": self.k, "bc": self.bc, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text):
        try:
            obj = json.loads(text)
            return cls(np.array(obj["values"], dtype=np.float64), k=int(obj["k"]), bc=obj["bc"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ParseError(f"bad spectrum JSON: {exc}") from exc

    def __eq__(self, other):
        return (
            isinstance(other, Spectrum)
            and self.k == other.k
            and self.bc == other.bc
            and np.array_equal(self.values, other.values)
        )


@dataclass
class OffsetSeq:
    """First-difference encoding of a spectrum; entries are non-negative."""

    offsets: np.ndarray

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        if self.offsets.ndim != 1:
            raise ValueError("offsets must be 1-d")
        if self.offsets.size and self.offsets.min() < 0:
            raise NegativeOffset("offsets must be non-negative")


@dataclass
class Signature:
    """Retrieval signature: the raw eigenvalue vector (ShapeDNA-style)."""

    values: np.ndarray
    provenance: str = "computed"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.provenance not in ("computed", "predicted"):
            raise ValueError(f"unknown provenance '{self.provenance}'")


def signature_distance(a, b):
    """Euclidean distance between signatures."""
    return float(np.linalg.norm(a.values - b.values))


# -- assembly -----------------------------------------------------------------


def cotan_laplacian(mesh):
    """Cotangent stiffness + barycentric lumped mass for a triangle mesh.

    Off-diagonals are -(cot a + cot b)/2 over the faces incident to each
    edge (a single cotangent on boundary edges); diagonals make row sums
    zero.  Cotangents of near-degenerate corners are clamped to ``1e6`` in
    magnitude with a :class:`DegenerateTriangleWarning`.
    """
    v = mesh.vertices
    f = mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    clamped = 0
    for c in range(3):
        i0 = f[:, c]
        i1 = f[:, (c + 1) % 3]
        i2 = f[:, (c + 2) % 3]
        u = v[i1] - v[i0]
        w = v[i2] - v[i0]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        dot = np.einsum("ij,ij->i", u, w)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = dot / cross
        bad = ~np.isfinite(cot) | (np.abs(cot) > COT_CLAMP)
        if bad.any():
            clamped += int(bad.sum())
            cot = np.where(np.isfinite(cot), np.clip(cot, -COT_CLAMP, COT_CLAMP), 0.0)
        half = 0.5 * cot
        rows.append(i1)
        cols.append(i2)
        vals.append(half)
        rows.append(i2)
        cols.append(i1)
        vals.append(half)
    if clamped:
        warnings.warn(f"{clamped} degenerate corner(s), cotangent clamped", DegenerateTriangleWarning)
    w_mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    deg = np.asarray(w_mat.sum(axis=1)).ravel()
    stiff = sparse.diags(deg) - w_mat
    return LaplacianPair(stiff.tocsr(), vertex_areas(mesh), np.arange(n))


def pc_laplacian(pc, k_nn=12):
    """Gaussian kNN graph Laplacian scaled to Laplace-Beltrami units.

    Weights are ``exp(-d^2 / t)`` with ``t`` the mean squared kNN distance.
    ``L = degree - weights`` is rescaled by ``4 / (s2 n) * area_est`` so
    that the generalized pair (L, M) with ``M = area_est/n`` per point
    approximates the Laplace-Beltrami eigenproblem on uniform samples.
    Here ``s2`` is the kernel-weighted mean squared neighbour distance of
    the symmetrized graph, i.e. the empirical second moment of the kernel;
    in 2-d tangent planes ``(D - W) f ~ (s2/4) (-Laplace f)``.
    """
    from scipy.spatial import cKDTree

    pts = pc.points
    n = len(pts)
    if n <= k_nn:
        raise ValueError("need more points than k_nn")
    if k_nn < 4:
        raise ValueError("k_nn must be >= 4")
    tree = cKDTree(pts)
    dist, idx = tree.query(pts, k=k_nn + 1)
    dist = dist[:, 1:]
    idx = idx[:, 1:]
    d2 = dist**2
    t = float(d2.mean())
    if t <= 0:
        raise ValueError("degenerate point cloud (all points coincide)")
    rows = np.repeat(np.arange(n), k_nn)
    cols = idx.ravel()
    w = np.exp(-d2.ravel() / t)
    w_mat = sparse.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    w_mat = w_mat.maximum(w_mat.T)
    n_comp, _ = connected_components(w_mat, directed=False)
    if n_comp > 1:
        warnings.warn(f"kNN graph has {n_comp} components", DisconnectedGraphWarning)
    # area estimate: k points expected within the kth-NN radius at uniform density
    area_est = float(np.pi * d2[:, -1].mean() * n / k_nn)
    # empirical kernel second moment over the symmetrized graph
    coo = w_mat.tocoo()
    sq = ((pts[coo.row] - pts[coo.col]) ** 2).sum(axis=1)
    s2 = float((coo.data * sq).sum() / n)
    deg = np.asarray(w_mat.sum(axis=1)).ravel()
    l_raw = sparse.diags(deg) - w_mat
    scale = 4.0 * area_est / (s2 * n)
    mass = np.full(n, area_est / n)
    return LaplacianPair((scale * l_raw).tocsr(), mass, np.arange(n))


def dirichlet_reduce(lp, boundary):
    """Remove boundary rows/columns from a Laplacian pair.

    Raises
    ------
    AllBoundary
        If no interior vertex remains.
    """
    boundary = np.asarray(boundary, dtype=bool)
    if boundary.shape != (lp.n,):
        raise ValueError("boundary flag length mismatch")
    interior = ~boundary
    if not interior.any():
        raise AllBoundary("no interior vertex")
    keep = np.flatnonzero(interior)
    stiff = lp.stiffness[np.ix_(keep, keep)].tocsr()
    return LaplacianPair(stiff, lp.mass[keep], lp.kept_vertices[keep], reduced=True)


def smallest_eigs(lp, k, bc="dirichlet"):
    """The k algebraically smallest eigenvalues of ``L v = lam M v``.

    Solved as the symmetric standard problem on ``M^-1/2 L M^-1/2``: dense
    for systems up to 3000 rows, shift-invert Lanczos (sigma = -1e-8)
    above.  Residuals are verified against ``1e-8`` relative to the matrix
    norm; tiny negative eigenvalues are clamped to zero.
    """
    n = lp.n
    if n < k:
        raise ValueError(f"system dimension {n} < k={k}")
    if np.any(lp.mass <= 0):
        raise ValueError("mass diagonal must be strictly positive")
    dinv = 1.0 / np.sqrt(lp.mass)
    if n <= DENSE_LIMIT:
        a = lp.stiffness.toarray() * dinv[:, None] * dinv[None, :]
        a = 0.5 * (a + a.T)
        vals, vecs = eigh(a, subset_by_index=[0, k - 1])
        norm_a = np.abs(a).sum(axis=0).max()
    else:
        d = sparse.diags(dinv)
        a = (d @ lp.stiffness @ d).tocsc()
        a = 0.5 * (a + a.T)
        try:
            vals, vecs = eigsh(a, k=k, sigma=-1e-8, which="LM")
        except (ArpackNoConvergence, ArpackError, RuntimeError) as exc:
            raise ConvergenceFailure(f"shift-invert Lanczos failed: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        norm_a = np.abs(a).sum(axis=0).max()
    res = np.linalg.norm(a @ vecs - vecs * vals[None, :], axis=0)
    if np.any(res > RESIDUAL_TOL * max(1.0, norm_a)):
        raise ConvergenceFailure(f"residual {res.max():.3e} exceeds tolerance")
    tol = 1e-10 * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < -tol:
        raise ConvergenceFailure(f"eigenvalue {vals.min():.3e} below -{tol:.1e}")
    vals = np.maximum(vals, 0.0)
    vals.sort()
    return Spectrum(vals, k=k, bc=bc)


def assemble(shape, k_nn=None):
    """Laplacian pair for a mesh or point cloud."""
    if isinstance(shape, TriMesh):
        return cotan_laplacian(shape)
    if isinstance(shape, PointCloud):
        return pc_laplacian(shape, k_nn=shape.k_nn if k_nn is None else k_nn)
    raise TypeError(f"unsupported shape type {type(shape).__name__}")


def spectrum(shape, k=DEFAULT_K, bc="dirichlet"):
    """Truncated spectrum of a shape under the requested boundary condition.

    Dirichlet requires the shape to have boundary; "closed" solves the
    unconstrained problem, drops the leading (near-)zero eigenvalue and
    returns the next ``k``.  On point clouds the Dirichlet layer is
    thickened by one neighbour ring (a ghost layer): the graph constraint
    is soft at kernel scale and a single-point-wide rim under-enforces the
    continuum condition.
    """
    lp = assemble(shape)
    flags = shape.boundary_flags
    if bc == "dirichlet":
        if not flags.any():
            raise NoBoundary("dirichlet spectrum requested on a closed shape")
        if isinstance(shape, PointCloud):
            adj = lp.stiffness != 0
            flags = flags | (adj @ flags)
        red = dirichlet_reduce(lp, flags)
        return smallest_eigs(red, k, bc="dirichlet")
    if bc == "closed":
        s = smallest_eigs(lp, k + 1, bc="closed")
        return Spectrum(s.values[1:], k=k, bc="closed")
    raise ValueError(f"unknown bc '{bc}'")


# -- encodings ----------------------------------------------------------------


def offset_encode(s):
    """First differences of a spectrum, adjusted so decoding round-trips.

    Decoding is the sequential floating-point cumulative sum; a plain
    ``diff`` can drift by an ulp, so each offset is nudged until the
    running sum reproduces the input eigenvalue exactly.  One corner case
    is unfixable: when consecutive eigenvalues span binades, round-to-even
    can exclude the target from the reachable sums entirely (the nearest
    achievable value is then 1 ulp off, and later entries are exact again).
    Spectra decoded from offset sequences always round-trip bit-exactly.
    """
    vals = np.asarray(s.values, dtype=np.float64)
    if np.any(np.diff(vals) < 0):
        raise ValueError("input spectrum not sorted")
    off = np.empty(len(vals))
    acc = 0.0
    for i, target in enumerate(vals):
        d = max(0.0, float(target) - acc)
        best_d, best_err = d, abs((acc + d) - target)
        for _ in range(8):
            got = acc + d
            err = abs(got - target)
            if err < best_err:
                best_d, best_err = d, err
            if got == target:
                break
            nudged = np.nextafter(d, np.inf if got < target else -np.inf)
            d = max(0.0, float(nudged))
        else:
            d = best_d
        off[i] = d
        acc += d
    return OffsetSeq(off)


def offset_decode(o, bc="dirichlet"):
    """Sequential cumulative sum of offsets back to a spectrum.

    Raises
    ------
    NegativeOffset
        If any offset is negative.
    """
    off = np.asarray(o.offsets if isinstance(o, OffsetSeq) else o, dtype=np.float64)
    if off.size and off.min() < 0:
        raise NegativeOffset("negative offset")
    vals = np.empty(len(off))
    acc = 0.0
    for i, d in enumerate(off):
        acc += d
        vals[i] = acc
    return Spectrum(vals, k=len(off), bc=bc)


def shape_dna(s, provenance="computed"):
    """ShapeDNA signature: the raw eigenvalue vector."""
    return Signature(s.values.copy(), provenance=provenance)
