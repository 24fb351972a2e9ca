"""Plain-text correspondence files and JSON helpers.

A correspondence file is line oriented; ``#`` starts a comment. The header
declares the format::

    format BEARINGS
    # f0x f0y f0z f1x f1y f1z [weight]
    0.1 0.2 0.97 ...

or, for pixel coordinates with per-view intrinsics::

    format PIXELS
    camera0 fx fy cx cy
    camera1 fx fy cx cy
    # u0 v0 u1 v1 [weight]
    312.5 240.0 300.1 251.7
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from c2p.errors import ParseError
from c2p.geometry import Correspondences

UNIT_TOL = 1e-6
FORMATS = ("BEARINGS", "PIXELS")


def _parse_floats(tokens, lineno):
    try:
        vals = [float(x) for x in tokens]
    except ValueError:
        raise ParseError("non-numeric value", [lineno]) from None
    if not all(np.isfinite(vals)):
        raise ParseError("non-finite value", [lineno])
    return vals


def _pixels_to_bearings(uv: np.ndarray, K: Sequence[float]) -> np.ndarray:
    fx, fy, cx, cy = K
    b = np.column_stack([(uv[:, 0] - cx) / fx, (uv[:, 1] - cy) / fy, np.ones(len(uv))])
    return b / np.linalg.norm(b, axis=1, keepdims=True)


def parse_correspondences(text: str) -> Correspondences:
    """Parse the text of a correspondence file.

    Raises:
        ParseError: on a missing or unknown header, malformed rows, or
            bearings that are not unit length within 1e-6. All offending
            line numbers are reported at once.
    """
    fmt: Optional[str] = None
    cameras = {}
    rows, weights, linenos = [], [], []
    bad = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key = tokens[0].lower()
        if key == "format":
            if fmt is not None or len(tokens) != 2 or tokens[1].upper() not in FORMATS:
                raise ParseError(f"bad format declaration {line!r}", [lineno])
            fmt = tokens[1].upper()
            continue
        if key in ("camera0", "camera1"):
            vals = _parse_floats(tokens[1:], lineno)
            if len(vals) != 4 or vals[0] <= 0 or vals[1] <= 0:
                raise ParseError("camera line needs positive fx fy and cx cy", [lineno])
            cameras[int(key[-1])] = vals
            continue
        if fmt is None:
            raise ParseError("data before the format header", [lineno])
        width = 6 if fmt == "BEARINGS" else 4
        try:
            vals = _parse_floats(tokens, lineno)
        except ParseError:
            bad.append(lineno)
            continue
        if len(vals) not in (width, width + 1) or (len(vals) == width + 1 and vals[-1] < 0):
            bad.append(lineno)
            continue
        rows.append(vals[:width])
        weights.append(vals[width] if len(vals) == width + 1 else 1.0)
        linenos.append(lineno)

    if fmt is None:
        raise ParseError("missing 'format BEARINGS|PIXELS' header")
    if bad:
        raise ParseError("malformed correspondence rows", bad)
    if fmt == "PIXELS" and set(cameras) != {0, 1}:
        raise ParseError("PIXELS format requires camera0 and camera1 intrinsics")

    data = np.array(rows, dtype=float).reshape(-1, 6 if fmt == "BEARINGS" else 4)
    if fmt == "BEARINGS":
        f0, f1 = data[:, :3], data[:, 3:]
        off = (np.abs(np.linalg.norm(f0, axis=1) - 1) > UNIT_TOL) | (
            np.abs(np.linalg.norm(f1, axis=1) - 1) > UNIT_TOL
        )
        if np.any(off):
            raise ParseError("bearings are not unit length", [linenos[i] for i in np.flatnonzero(off)])
    else:
        f0 = _pixels_to_bearings(data[:, :2], cameras[0])
        f1 = _pixels_to_bearings(data[:, 2:], cameras[1])
    if len(f0) == 0:
        return Correspondences(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
    return Correspondences(f0, f1, np.array(weights))


def read_correspondences(path) -> Correspondences:
    return parse_correspondences(Path(path).read_text())


def format_correspondences(corr: Correspondences, comment: Optional[str] = None) -> str:
    """Serialize as a BEARINGS file; values use round-trip precision."""
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append("format BEARINGS")
    lines.append("# f0x f0y f0z f1x f1y f1z weight")
    for a, b, w in zip(corr.f0, corr.f1, corr.weights):
        lines.append(" ".join(repr(float(v)) for v in (*a, *b, w)))
    return "\n".join(lines) + "\n"


def write_correspondences(path, corr: Correspondences, comment: Optional[str] = None) -> None:
    Path(path).write_text(format_correspondences(corr, comment))


def sidecar_path(path) -> Path:
    """Ground-truth sidecar next to a correspondence file: ``name.gt.json``."""
    p = Path(path)
    return p.with_name(p.stem + ".gt.json")


def load_schema() -> dict:
    """The JSON schema document covering every JSON output of the package."""
    return json.loads(resources.files("c2p").joinpath("schema.json").read_text())


def dump_json(obj, fh=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if fh is not None:
        fh.write(text)
    return text


def pose_from_sidecar(data: dict) -> Tuple[np.ndarray, np.ndarray]:
    return np.array(data["R"], dtype=float), np.array(data["t"], dtype=float)
