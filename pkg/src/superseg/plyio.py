"""Vertex-only PLY reading and writing (ascii and binary_little_endian)."""
from __future__ import annotations

import os

import numpy as np

from .errors import PlyFormatError
from .geometry import PointCloud

_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_COLOR = ("red", "green", "blue")


def _read_header(fh, path):
    first = fh.readline().strip()
    if first != b"ply":
        raise PlyFormatError(f"{path}: malformed header: missing 'ply' magic")
    fmt = None
    elements = []  # [name, count, [(prop, dtype)]]
    while True:
        raw = fh.readline()
        if not raw:
            raise PlyFormatError(f"{path}: malformed header: no end_header")
        tok = raw.decode("ascii", errors="replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyFormatError(f"{path}: malformed header: unsupported format {' '.join(tok[1:])}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyFormatError(f"{path}: malformed header: bad element line")
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise PlyFormatError(f"{path}: malformed header: property before element")
            if tok[1] == "list":
                elements[-1][2].append((tok[-1], "list"))
            elif len(tok) == 3 and tok[1] in _TYPES:
                elements[-1][2].append((tok[2], _TYPES[tok[1]]))
            else:
                raise PlyFormatError(f"{path}: malformed header: bad property line")
        else:
            raise PlyFormatError(f"{path}: malformed header: unknown keyword {tok[0]!r}")
    if fmt is None:
        raise PlyFormatError(f"{path}: malformed header: no format line")
    if not elements or elements[0][0] != "vertex":
        raise PlyFormatError(f"{path}: malformed header: first element must be 'vertex'")
    return fmt, elements


def load_ply(path) -> tuple[PointCloud, np.ndarray | None]:
    """Read a PLY file into a PointCloud plus its optional ``label`` column.

    Colors are rescaled from 8-bit to [0, 1]. Elements after ``vertex`` are
    ignored.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise PlyFormatError(f"{path}: no such file")
    with open(path, "rb") as fh:
        fmt, elements = _read_header(fh, path)
        _, count, props = elements[0]
        names = [p for p, _ in props]
        if any(t == "list" for _, t in props):
            raise PlyFormatError(f"{path}: list properties on vertex are not supported")
        for p in ("x", "y", "z"):
            if p not in names:
                raise PlyFormatError(f"{path}: missing coordinate property {p!r}")
        for p in _COLOR:
            if p not in names:
                raise PlyFormatError(f"{path}: missing color property {p!r}")
        if count == 0:
            raise PlyFormatError(f"{path}: empty cloud")
        dtype = np.dtype([(p, "<" + t) for p, t in props])
        if fmt == "binary_little_endian":
            buf = fh.read(count * dtype.itemsize)
            if len(buf) < count * dtype.itemsize:
                raise PlyFormatError(f"{path}: element count mismatch: header declares {count} vertices")
            data = np.frombuffer(buf, dtype=dtype, count=count)
        else:
            rows = []
            for _ in range(count):
                line = fh.readline()
                if not line:
                    raise PlyFormatError(f"{path}: element count mismatch: header declares {count} vertices")
                vals = line.split()
                if len(vals) != len(props):
                    raise PlyFormatError(f"{path}: malformed vertex line {line!r}")
                rows.append(tuple(float(v) for v in vals))
            data = np.array(rows, dtype=[(p, "f8") for p in names])
    pos = np.stack([data["x"], data["y"], data["z"]], axis=1).astype(np.float64)
    col = np.stack([data[c] for c in _COLOR], axis=1).astype(np.float64) / 255.0
    if col.min() < 0 or col.max() > 1:
        raise PlyFormatError(f"{path}: color values outside [0, 255]")
    labels = data["label"].astype(np.int64) if "label" in names else None
    try:
        cloud = PointCloud(pos, col)
    except ValueError as exc:
        raise PlyFormatError(f"{path}: {exc}") from None
    return cloud, labels


def save_ply(path, positions, colors, labels=None, binary=True):
    """Write vertices; ``colors`` are floats in [0, 1] and are stored as uchar."""
    positions = np.asarray(positions, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    n = positions.shape[0]
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if labels is not None:
        fields.append(("label", "<i4"))
    data = np.empty(n, dtype=fields)
    for a, name in enumerate("xyz"):
        data[name] = positions[:, a]
    rgb = np.clip(np.rint(colors * 255.0), 0, 255).astype(np.uint8)
    for a, name in enumerate(_COLOR):
        data[name] = rgb[:, a]
    if labels is not None:
        data["label"] = np.asarray(labels, dtype=np.int64)
    ptype = {"<f4": "float", "u1": "uchar", "<i4": "int"}
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0", f"element vertex {n}"]
    header += [f"property {ptype[t]} {name}" for name, t in fields]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(data.tobytes())
        else:
            for row in data:
                vals = [repr(float(row[name])) if t == "<f4" else str(int(row[name])) for name, t in fields]
                fh.write((" ".join(vals) + "\n").encode("ascii"))
