"""Point-cloud and scored-map serialization.

Supported inputs are PLY 1.0 (ascii and binary little endian) and ``xyz``
text. Scored maps are written as PLY with per-vertex colour and a
``graspability`` float, or as CSV. Byte-level layouts are in
``docs/formats.md``.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    CloudParseError,
    GraspableError,
    InsufficientDataError,
    UnsupportedFormatError,
    ValidationError,
)

CLOUD_FORMATS = ("ply_ascii", "ply_binary_le", "xyz")
SCORED_FORMATS = ("ply_ascii", "ply_binary_le", "csv")
COLORMAPS = ("viridis_like", "grayscale")

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

# viridis sampled at 0, 1/4, 1/2, 3/4, 1
_VIRIDIS_ANCHORS = np.array(
    [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
    dtype=np.float64,
)


@dataclass(frozen=True)
class PointCloud:
    """Ordered (n, 3) float64 coordinates in meters.

    ``dropped`` counts non-finite records removed while parsing.
    """

    points: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValidationError("points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class ScoredCloud:
    points: np.ndarray
    scores: np.ndarray
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        scores = np.ascontiguousarray(self.scores, dtype=np.float64).reshape(-1)
        if scores.shape[0] != pts.shape[0]:
            raise ValidationError(
                f"{pts.shape[0]} points but {scores.shape[0]} scores"
            )
        if not np.isfinite(pts).all():
            raise ValidationError("points must be finite")
        if not (np.isfinite(scores).all() and (scores >= 0).all() and (scores <= 1).all()):
            raise ValidationError("every score must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "scores", scores)

    def __len__(self):
        return self.points.shape[0]

    def colors(self, colormap: str = "viridis_like") -> np.ndarray:
        return score_colors(self.scores, colormap)


def score_colors(scores, colormap: str = "viridis_like") -> np.ndarray:
    """Map scores in [0, 1] to (n, 3) uint8 RGB."""
    s = np.clip(np.asarray(scores, dtype=np.float64), 0.0, 1.0)
    if colormap == "grayscale":
        v = np.rint(s * 255.0).astype(np.uint8)
        return np.stack([v, v, v], axis=1)
    if colormap == "viridis_like":
        knots = np.linspace(0.0, 1.0, len(_VIRIDIS_ANCHORS))
        rgb = np.stack(
            [np.interp(s, knots, _VIRIDIS_ANCHORS[:, ch]) for ch in range(3)], axis=1
        )
        return np.rint(rgb).astype(np.uint8)
    raise ValidationError(f"unknown colormap {colormap!r}; expected one of {COLORMAPS}")


# --------------------------------------------------------------------------
# parsing


@dataclass
class _PlyProperty:
    name: str
    dtype: str | None  # None for list properties
    list_types: tuple[str, str] | None = None


@dataclass
class _PlyElement:
    name: str
    count: int
    properties: list[_PlyProperty] = field(default_factory=list)


@dataclass
class _PlyHeader:
    fmt: str
    elements: list[_PlyElement]
    body_offset: int
    body_line: int  # 1-based line number of the first body line


def _read_ply_header(data: bytes) -> _PlyHeader:
    if not (data.startswith(b"ply\n") or data.startswith(b"ply\r\n")):
        raise CloudParseError("missing 'ply' magic", line=1, offset=0)
    end = re.search(rb"(^|\n)end_header\r?\n", data)
    if end is None:
        raise CloudParseError("header has no 'end_header' line")
    try:
        header = data[: end.end()].decode("ascii")
    except UnicodeDecodeError as exc:
        raise CloudParseError("header is not ASCII", offset=exc.start) from None

    fmt = None
    elements: list[_PlyElement] = []
    lines = header.splitlines()
    for lineno, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "format":
            if len(tokens) != 3:
                raise CloudParseError("malformed format line", line=lineno)
            if tokens[2] != "1.0":
                raise UnsupportedFormatError(f"PLY version {tokens[2]} not supported")
            if tokens[1] == "binary_big_endian":
                raise UnsupportedFormatError("big-endian binary PLY is not supported")
            if tokens[1] not in ("ascii", "binary_little_endian"):
                raise CloudParseError(f"unknown PLY format {tokens[1]!r}", line=lineno)
            fmt = tokens[1]
        elif key == "element":
            if len(tokens) != 3:
                raise CloudParseError("malformed element line", line=lineno)
            try:
                count = int(tokens[2])
            except ValueError:
                raise CloudParseError("element count is not an integer", line=lineno) from None
            if count < 0:
                raise CloudParseError("negative element count", line=lineno)
            elements.append(_PlyElement(tokens[1], count))
        elif key == "property":
            if not elements:
                raise CloudParseError("property before any element", line=lineno)
            if len(tokens) == 5 and tokens[1] == "list":
                if tokens[2] not in _PLY_TYPES or tokens[3] not in _PLY_TYPES:
                    raise CloudParseError("unknown list property type", line=lineno)
                prop = _PlyProperty(tokens[4], None, (_PLY_TYPES[tokens[2]], _PLY_TYPES[tokens[3]]))
            elif len(tokens) == 3:
                if tokens[1] not in _PLY_TYPES:
                    raise CloudParseError(f"unknown property type {tokens[1]!r}", line=lineno)
                prop = _PlyProperty(tokens[2], _PLY_TYPES[tokens[1]])
            else:
                raise CloudParseError("malformed property line", line=lineno)
            elements[-1].properties.append(prop)
        elif key == "end_header":
            break
        else:
            raise CloudParseError(f"unexpected header keyword {key!r}", line=lineno)
    if fmt is None:
        raise CloudParseError("header has no format line")
    return _PlyHeader(fmt, elements, end.end(), len(lines) + 1)


def _vertex_dtype(element: _PlyElement, fields: tuple[str, ...]) -> np.dtype:
    names = [p.name for p in element.properties]
    for p in element.properties:
        if p.dtype is None:
            raise UnsupportedFormatError(f"list property {p.name!r} on vertex element")
    for name in fields:
        if name not in names:
            raise UnsupportedFormatError(f"vertex element lacks property {name!r}")
        dt = element.properties[names.index(name)].dtype
        if name in ("x", "y", "z") and dt not in ("f4", "f8"):
            raise UnsupportedFormatError(f"property {name!r} must be float or double")
    if len(set(names)) != len(names):
        raise UnsupportedFormatError("duplicate vertex property names")
    return np.dtype([(p.name, "<" + p.dtype) for p in element.properties])


def _parse_ply(data: bytes, fields=("x", "y", "z"), expect: str | None = None) -> np.ndarray:
    """Return an (n, len(fields)) float64 array of the requested vertex fields."""
    hdr = _read_ply_header(data)
    if expect is not None and hdr.fmt != expect:
        raise CloudParseError(f"header declares {hdr.fmt}, expected {expect}", line=2)
    names = [e.name for e in hdr.elements]
    if "vertex" not in names:
        raise UnsupportedFormatError("PLY has no vertex element")
    vidx = names.index("vertex")
    vertex = hdr.elements[vidx]
    dtype = _vertex_dtype(vertex, fields)

    if hdr.fmt == "binary_little_endian":
        offset = hdr.body_offset
        for elem in hdr.elements[:vidx]:
            if any(p.dtype is None for p in elem.properties):
                raise UnsupportedFormatError(
                    f"cannot skip list-bearing element {elem.name!r} before vertex"
                )
            offset += elem.count * sum(np.dtype(p.dtype).itemsize for p in elem.properties)
        need = vertex.count * dtype.itemsize
        if offset + need > len(data):
            raise CloudParseError(
                f"truncated vertex data: need {need} bytes, have {max(len(data) - offset, 0)}",
                offset=len(data),
            )
        rec = np.frombuffer(data, dtype=dtype, count=vertex.count, offset=offset)
        return np.stack([rec[f].astype(np.float64) for f in fields], axis=1).reshape(-1, len(fields))

    # ascii
    try:
        body = data[hdr.body_offset:].decode("ascii")
    except UnicodeDecodeError as exc:
        raise CloudParseError("non-ASCII byte in ascii body", offset=hdr.body_offset + exc.start) from None
    lines = body.splitlines()
    pos = 0
    for elem in hdr.elements[:vidx]:
        pos += elem.count
    if pos + vertex.count > len(lines):
        raise CloudParseError(
            f"expected {vertex.count} vertex lines, file ends early",
            line=hdr.body_line + len(lines),
        )
    cols = [[p.name for p in vertex.properties].index(f) for f in fields]
    nprops = len(vertex.properties)
    out = np.empty((vertex.count, len(fields)), dtype=np.float64)
    for row in range(vertex.count):
        tokens = lines[pos + row].split()
        if len(tokens) != nprops:
            raise CloudParseError(
                f"expected {nprops} values, got {len(tokens)}", line=hdr.body_line + pos + row
            )
        try:
            out[row] = [float(tokens[c]) for c in cols]
        except ValueError:
            raise CloudParseError("non-numeric vertex value", line=hdr.body_line + pos + row) from None
    # honour the declared width so ascii and binary agree
    for n, c in enumerate(cols):
        dt = vertex.properties[c].dtype
        if dt != "f8":
            with np.errstate(over="ignore", invalid="ignore"):
                out[:, n] = out[:, n].astype(dt).astype(np.float64)
    return out


def _parse_xyz(data: bytes) -> np.ndarray:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise CloudParseError("xyz input is not ASCII text", offset=exc.start) from None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        if len(tokens) < 3:
            raise CloudParseError(f"expected at least 3 values, got {len(tokens)}", line=lineno)
        try:
            rows.append((float(tokens[0]), float(tokens[1]), float(tokens[2])))
        except ValueError:
            raise CloudParseError("non-numeric coordinate", line=lineno) from None
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def detect_format(data: bytes) -> str:
    if data.startswith(b"ply"):
        fmt = _read_ply_header(data).fmt
        return "ply_ascii" if fmt == "ascii" else "ply_binary_le"
    return "xyz"


def parse_cloud(data: bytes, format: str | None = None, min_points: int = 3) -> PointCloud:
    """Parse ``data`` into a :class:`PointCloud`.

    ``format`` is one of ``CLOUD_FORMATS``; None sniffs the header. Points
    with a non-finite coordinate are dropped and counted in
    ``PointCloud.dropped``. Every failure surfaces as a
    :class:`~graspable.exceptions.GraspableError` subclass.
    """
    if format is None:
        format = detect_format(data)
    if format not in CLOUD_FORMATS:
        raise ValidationError(f"unknown cloud format {format!r}")
    try:
        if format == "xyz":
            pts = _parse_xyz(data)
        else:
            expect = "ascii" if format == "ply_ascii" else "binary_little_endian"
            pts = _parse_ply(data, expect=expect)
    except GraspableError:
        raise
    except Exception as exc:  # pragma: no cover - defensive net for fuzzed input
        raise CloudParseError(f"unreadable input: {exc}") from None

    finite = np.isfinite(pts).all(axis=1)
    dropped = int((~finite).sum())
    pts = pts[finite]
    if pts.shape[0] < min_points:
        raise InsufficientDataError(
            f"{pts.shape[0]} usable points after dropping {dropped} non-finite; need {min_points}"
        )
    return PointCloud(pts, dropped=dropped)


def read_cloud(path, format: str | None = None) -> PointCloud:
    with open(path, "rb") as fh:
        data = fh.read()
    if format is None and str(path).lower().endswith((".xyz", ".txt")):
        format = "xyz"
    return parse_cloud(data, format)


def parse_scored_cloud(data: bytes) -> ScoredCloud:
    """Read back a scored PLY (``graspability`` property) or scored CSV."""
    try:
        if data.startswith(b"ply"):
            arr = _parse_ply(data, fields=("x", "y", "z", "graspability"))
        else:
            arr = _parse_scored_csv(data)
        return ScoredCloud(arr[:, :3], arr[:, 3])
    except GraspableError:
        raise
    except Exception as exc:  # pragma: no cover
        raise CloudParseError(f"unreadable scored cloud: {exc}") from None


def _parse_scored_csv(data: bytes) -> np.ndarray:
    text = data.decode("ascii", errors="replace")
    lines = text.splitlines()
    if not lines or [h.strip() for h in lines[0].split(",")] != ["x", "y", "z", "g"]:
        raise CloudParseError("CSV header must be 'x,y,z,g'", line=1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise CloudParseError("expected 4 columns", line=lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise CloudParseError("non-numeric value", line=lineno) from None
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


# --------------------------------------------------------------------------
# writing


def _ply_header(fmt: str, n: int, props: list[tuple[str, str]], comment: str | None) -> bytes:
    lines = ["ply", f"format {fmt} 1.0"]
    if comment:
        lines.append(f"comment {comment}")
    lines.append(f"element vertex {n}")
    lines += [f"property {t} {name}" for t, name in props]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def _ascii_rows(columns, formats) -> bytes:
    buf = io.StringIO()
    for row in zip(*columns):
        buf.write(" ".join(f % v for f, v in zip(formats, row)))
        buf.write("\n")
    return buf.getvalue().encode("ascii")


def write_cloud(cloud: PointCloud, format: str = "ply_binary_le") -> bytes:
    """Serialize plain coordinates (doubles, so binary output is lossless)."""
    pts = cloud.points
    if format == "xyz":
        return _ascii_rows([pts[:, 0], pts[:, 1], pts[:, 2]], ["%.17g"] * 3)
    props = [("double", "x"), ("double", "y"), ("double", "z")]
    if format == "ply_binary_le":
        return _ply_header("binary_little_endian", len(pts), props, None) + pts.astype("<f8").tobytes()
    if format == "ply_ascii":
        return _ply_header("ascii", len(pts), props, None) + _ascii_rows(
            [pts[:, 0], pts[:, 1], pts[:, 2]], ["%.17g"] * 3
        )
    raise ValidationError(f"unknown cloud format {format!r}; expected one of {CLOUD_FORMATS}")


def write_scored_cloud(
    cloud: ScoredCloud, format: str = "ply_binary_le", colormap: str = "viridis_like"
) -> bytes:
    """Serialize a scored map.

    PLY carries double x/y/z, uchar red/green/blue and float graspability.
    CSV carries the header ``x,y,z,g`` and one row per point.
    """
    pts, g = cloud.points, cloud.scores
    if format == "csv":
        body = _ascii_rows([pts[:, 0], pts[:, 1], pts[:, 2], g], ["%.17g"] * 4)
        return b"x,y,z,g\n" + body.replace(b" ", b",")
    if format not in SCORED_FORMATS:
        raise ValidationError(f"unknown scored format {format!r}; expected one of {SCORED_FORMATS}")
    rgb = score_colors(g, colormap)
    props = [
        ("double", "x"), ("double", "y"), ("double", "z"),
        ("uchar", "red"), ("uchar", "green"), ("uchar", "blue"),
        ("float", "graspability"),
    ]
    comment = f"graspability colormap {colormap}"
    if format == "ply_binary_le":
        rec = np.empty(
            len(pts),
            dtype=[("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                   ("red", "u1"), ("green", "u1"), ("blue", "u1"), ("graspability", "<f4")],
        )
        rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
        rec["red"], rec["green"], rec["blue"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
        rec["graspability"] = g
        return _ply_header("binary_little_endian", len(pts), props, comment) + rec.tobytes()
    g32 = g.astype(np.float32).astype(np.float64)
    body = _ascii_rows(
        [pts[:, 0], pts[:, 1], pts[:, 2], rgb[:, 0], rgb[:, 1], rgb[:, 2], g32],
        ["%.17g"] * 3 + ["%d"] * 3 + ["%.9g"],
    )
    return _ply_header("ascii", len(pts), props, comment) + body


def write_graspable_csv(points, scores) -> bytes:
    """x,y,z,g rows; callers pass rows already sorted by descending g."""
    return write_scored_cloud(ScoredCloud(points, scores), "csv")
