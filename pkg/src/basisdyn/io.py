"""File formats: trajectory CSV, binary snapshot matrices, basis JSON and SVG plots.

Every writer goes through `atomic_write`, so readers never observe a
half-written file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Union
from xml.sax.saxutils import escape

import numpy as np

from .ack import AckBasis
from .core import CoefficientTrajectory
from .errors import FormatError, InputError

PathLike = Union[str, os.PathLike]

MATRIX_MAGIC = b"BFDMAT1\0"
_HEADER = struct.Struct("<8sQQ")


def atomic_write(path: PathLike, data: Union[str, bytes]) -> None:
    """Write to a sibling temporary file, then rename over ``path``."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_to_csv(traj: CoefficientTrajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", *traj.labels, "loss", "error"])
    for n in range(len(traj)):
        w.writerow([str(int(traj.steps[n])), *map(_fmt, traj.coefficients[n]), _fmt(traj.loss[n]), _fmt(traj.error[n])])
    return buf.getvalue()


def emit_csv(traj: CoefficientTrajectory, path: PathLike) -> None:
    """Header ``iter,<labels>,loss,error``; floats with 17 significant digits."""
    atomic_write(path, trajectory_to_csv(traj))


def parse_csv(text: str) -> CoefficientTrajectory:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("line 1: empty file")
    header = rows[0]
    if len(header) < 3 or header[0] != "iter" or header[-2:] != ["loss", "error"]:
        raise FormatError("line 1: header must be iter,<labels>,loss,error")
    width = len(header)
    steps, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise FormatError(f"line {lineno}: expected {width} fields, got {len(row)}")
        try:
            steps.append(int(row[0]))
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    if not steps:
        raise FormatError("line 2: no data rows")
    arr = np.array(values, dtype=np.float64)
    try:
        return CoefficientTrajectory(steps, arr[:, :-2], arr[:, -2], arr[:, -1], header[1:-2])
    except InputError as exc:
        raise FormatError(f"inconsistent trajectory: {exc}") from None


def read_csv(path: PathLike) -> CoefficientTrajectory:
    return parse_csv(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# Binary matrices
# --------------------------------------------------------------------------


def matrix_to_bytes(M) -> bytes:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise InputError("only 2-d matrices can be serialized")
    return _HEADER.pack(MATRIX_MAGIC, M.shape[0], M.shape[1]) + M.astype("<f8").tobytes(order="C")


def matrix_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise FormatError(f"matrix file truncated: {len(data)} bytes, header needs {_HEADER.size}")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad magic bytes {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"matrix payload has {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)


def write_matrix(M, path: PathLike) -> None:
    atomic_write(path, matrix_to_bytes(M))


def read_matrix(path: PathLike) -> np.ndarray:
    return matrix_from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# A-CK basis files
# --------------------------------------------------------------------------


def basis_to_json(basis: AckBasis) -> str:
    # json writes floats with repr, which round-trips exactly
    doc = {
        "n_samples": basis.n_samples,
        "normalization": basis.normalization,
        "V_right": basis.V_right.tolist(),
        "singular_values": basis.singular_values.tolist(),
        "left": basis.left.tolist(),
        "right": basis.right.tolist(),
    }
    return json.dumps(doc, indent=1) + "\n"


def basis_from_json(text: str) -> AckBasis:
    try:
        doc = json.loads(text)
        N = int(doc["n_samples"])
        V = np.array(doc["V_right"], dtype=np.float64).reshape(N, -1)
        s = np.array(doc["singular_values"], dtype=np.float64)
        left = np.array(doc["left"], dtype=np.float64).reshape(-1, s.size)
        right = np.array(doc["right"], dtype=np.float64).reshape(V.shape[1], s.size)
        norm = float(doc["normalization"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed basis file: {exc}") from None
    return AckBasis(V, s, left, right, N, norm)


def write_basis(basis: AckBasis, path: PathLike) -> None:
    atomic_write(path, basis_to_json(basis))


def read_basis(path: PathLike) -> AckBasis:
    return basis_from_json(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"]


def trajectory_svg(
    traj: CoefficientTrajectory,
    log_y: bool = False,
    width: int = 640,
    height: int = 400,
    title: str = "",
) -> str:
    """One polyline per coefficient column against the iteration count."""
    if len(traj) == 0:
        raise InputError("cannot plot an empty trajectory")
    margin = 50
    x = traj.steps.astype(np.float64)
    Y = traj.coefficients.astype(np.float64)
    if log_y:
        with np.errstate(divide="ignore", invalid="ignore"):
            Y = np.log10(np.abs(Y))
        Y[~np.isfinite(Y)] = np.nan
    finite = Y[np.isfinite(Y)]
    ylo, yhi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if yhi == ylo:
        ylo, yhi = ylo - 1.0, yhi + 1.0
    xlo, xhi = float(x[0]), float(x[-1])
    if xhi == xlo:
        xhi = xlo + 1.0

    def sx(v):
        return margin + (v - xlo) / (xhi - xlo) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - ylo) / (yhi - ylo) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">iteration</text>',
        f'<text x="{margin}" y="{margin - 8}" font-size="11">{"log10 |beta|" if log_y else "beta"}: '
        f"[{ylo:.3g}, {yhi:.3g}]</text>",
    ]
    if title:
        parts.append(f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for i, label in enumerate(traj.labels):
        col = Y[:, i]
        ok = np.isfinite(col)
        if not ok.any():
            continue
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], col[ok]))
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"><title>{escape(label)}</title></polyline>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(traj: CoefficientTrajectory, path: PathLike, log_y: bool = False, title: str = "") -> None:
    atomic_write(path, trajectory_svg(traj, log_y=log_y, title=title))


def finite_or_none(x):
    """JSON-friendly float: NaN and infinities become None."""
    return float(x) if x is not None and math.isfinite(x) else None
