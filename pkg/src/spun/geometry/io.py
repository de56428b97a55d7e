"""Readers and writers for OFF and ASCII-PLY shape files.

Only positions and faces are handled; numbers are written as 64-bit decimal
text (``repr`` round-trip).  ``load_shape`` sniffs the format from the magic
line when none is given and returns a :class:`TriMesh` when faces are
present, else a :class:`PointCloud`.
"""

import io as _io

import numpy as np

from ..errors import EmptyShape, ParseError
from .mesh import PointCloud, TriMesh


def _tokens(text):
    """Whitespace tokens with comments ('#') stripped, line by line."""
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield from line.split()


def _as_text(data):
    if isinstance(data, bytes):
        return data.decode("utf-8", errors="replace")
    if isinstance(data, str):
        return data
    if hasattr(data, "read"):
        return _as_text(data.read())
    raise TypeError("expected bytes, str, or a readable stream")


def _shape_from_arrays(verts, faces):
    if len(verts) == 0:
        raise EmptyShape("file declares zero vertices")
    if len(faces) == 0:
        return PointCloud(np.asarray(verts))
    return TriMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64))


def parse_off(data):
    """Parse an OFF byte stream or string."""
    text = _as_text(data)
    toks = list(_tokens(text))
    if not toks or toks[0] != "OFF":
        raise ParseError("missing OFF magic")
    pos = 1
    try:
        nv, nf, _ne = int(toks[pos]), int(toks[pos + 1]), int(toks[pos + 2])
        pos += 3
        verts = np.array(toks[pos:pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            cnt = int(toks[pos])
            if cnt != 3:
                raise ParseError(f"only triangular faces supported, got {cnt}-gon")
            faces.append([int(toks[pos + 1]), int(toks[pos + 2]), int(toks[pos + 3])])
            pos += 1 + cnt
    except ParseError:
        raise
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed OFF: {exc}") from exc
    if pos != len(toks):
        raise ParseError("trailing tokens after declared counts")
    try:
        return _shape_from_arrays(verts, faces)
    except EmptyShape:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def parse_ply_ascii(data):
    """Parse an ASCII PLY byte stream or string (positions + faces only)."""
    text = _as_text(data)
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0] != "ply":
        raise ParseError("missing ply magic")
    nv = nf = 0
    vertex_props = []
    i = 1
    in_vertex = in_face = False
    fmt_seen = False
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise ParseError("only ascii PLY supported")
            fmt_seen = True
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            in_face = parts[1] == "face"
            if in_vertex:
                nv = int(parts[2])
            elif in_face:
                nf = int(parts[2])
            else:
                raise ParseError(f"unsupported element '{parts[1]}'")
        elif parts[0] == "property":
            if in_vertex:
                vertex_props.append(parts[-1])
        elif parts[0] == "end_header":
            break
    else:
        raise ParseError("missing end_header")
    if not fmt_seen:
        raise ParseError("missing format line")
    for ax in ("x", "y", "z"):
        if ax not in vertex_props:
            raise ParseError(f"vertex element lacks property '{ax}'")
    cols = [vertex_props.index(ax) for ax in ("x", "y", "z")]
    body = [ln for ln in lines[i:] if ln]
    if len(body) < nv + nf:
        raise ParseError(f"expected {nv + nf} body lines, got {len(body)}")
    try:
        verts = np.empty((nv, 3))
        for r in range(nv):
            vals = body[r].split()
            verts[r] = [float(vals[c]) for c in cols]
        faces = []
        for r in range(nf):
            vals = body[nv + r].split()
            cnt = int(vals[0])
            if cnt != 3:
                raise ParseError(f"only triangular faces supported, got {cnt}-gon")
            faces.append([int(vals[1]), int(vals[2]), int(vals[3])])
    except ParseError:
        raise
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed PLY body: {exc}") from exc
    try:
        return _shape_from_arrays(verts, faces)
    except EmptyShape:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def load_shape(data, fmt=None):
    """Load a shape from bytes/str/stream in OFF or ASCII-PLY format.

    Parameters
    ----------
    data : bytes | str | file-like
    fmt : {"off", "ply", None}
        Explicit format; sniffed from the magic line when None.

    Returns
    -------
    TriMesh | PointCloud
    """
    text = _as_text(data)
    if fmt is None:
        head = text.lstrip().splitlines()[0].strip() if text.strip() else ""
        if head.startswith("OFF"):
            fmt = "off"
        elif head == "ply":
            fmt = "ply"
        else:
            raise ParseError("cannot sniff format: expected 'OFF' or 'ply' magic")
    fmt = fmt.lower()
    if fmt == "off":
        return parse_off(text)
    if fmt == "ply":
        return parse_ply_ascii(text)
    raise ValueError(f"unknown format '{fmt}'")


def load_shape_file(path, fmt=None):
    with open(path, "rb") as fh:
        return load_shape(fh.read(), fmt=fmt)


def write_off(shape, path_or_stream, vertex_scalars=None):
    """Write OFF; optional per-vertex scalars go into a comment block.

    The scalar block (one ``# vscalar <f64>`` line per vertex, after the
    counts line) is ignored by standard OFF readers but lets external
    viewers colour the mesh.
    """
    verts = shape.vertices if isinstance(shape, TriMesh) else shape.points
    faces = shape.faces if isinstance(shape, TriMesh) else np.zeros((0, 3), dtype=int)
    buf = _io.StringIO()
    buf.write("OFF\n")
    buf.write(f"{len(verts)} {len(faces)} 0\n")
    if vertex_scalars is not None:
        scal = np.asarray(vertex_scalars, dtype=np.float64)
        if scal.shape != (len(verts),):
            raise ValueError("vertex_scalars length mismatch")
        for s in scal:
            buf.write(f"# vscalar {float(s)!r}\n")
    for p in verts:
        buf.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
    for f in faces:
        buf.write(f"3 {f[0]} {f[1]} {f[2]}\n")
    _write_text(path_or_stream, buf.getvalue())


def read_off_scalars(data):
    """Recover the ``# vscalar`` block written by :func:`write_off`."""
    text = _as_text(data)
    vals = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("# vscalar"):
            vals.append(float(line.split()[2]))
    return np.array(vals)


def write_ply_ascii(shape, path_or_stream):
    verts = shape.vertices if isinstance(shape, TriMesh) else shape.points
    faces = shape.faces if isinstance(shape, TriMesh) else np.zeros((0, 3), dtype=int)
    buf = _io.StringIO()
    buf.write("ply\nformat ascii 1.0\n")
    buf.write(f"element vertex {len(verts)}\n")
    buf.write("property double x\nproperty double y\nproperty double z\n")
    buf.write(f"element face {len(faces)}\n")
    buf.write("property list uchar int vertex_indices\nend_header\n")
    for p in verts:
        buf.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
    for f in faces:
        buf.write(f"3 {f[0]} {f[1]} {f[2]}\n")
    _write_text(path_or_stream, buf.getvalue())


def _write_text(path_or_stream, text):
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(text)
    else:
        with open(path_or_stream, "w") as fh:
            fh.write(text)
