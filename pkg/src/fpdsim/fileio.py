"""Scene ingestion (CSV / PGM) and byte-stable writers for frames, traces and LED grids."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .circuit import Trace
from .errors import DomainError, OutputError
from .panel import Frame, Scene
from .validation import LedMatrixState


def _fmt(x: float) -> str:
    # Shortest repr that round-trips.
    return repr(float(x))


# --- scenes ---------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping # comments."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DomainError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Return (gray levels, maxval) from a P2 or P5 image."""
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise DomainError("malformed PGM header") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DomainError(f"bad PGM geometry {width}x{height} maxval {maxval}")
    if magic == b"P2":
        values = data[pos:].split()
        if len(values) != width * height:
            raise DomainError(f"PGM has {len(values)} samples, expected {width * height}")
        gray = np.array([int(v) for v in values], dtype=np.int64)
    elif magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos:pos + width * height * dtype.itemsize]
        if len(raw) != width * height * dtype.itemsize:
            raise DomainError("truncated P5 raster")
        gray = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    else:
        raise DomainError(f"unsupported image magic {magic!r}")
    if np.any(gray > maxval) or np.any(gray < 0):
        raise DomainError("PGM sample outside [0, maxval]")
    return gray.reshape(height, width), maxval


def read_csv_grid(text: str) -> np.ndarray:
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise DomainError(f"line {lineno}: non-numeric value in scene CSV") from None
        if len(rows[-1]) != len(rows[0]):
            raise DomainError(f"line {lineno}: ragged row ({len(rows[-1])} values, expected {len(rows[0])})")
    if not rows:
        raise DomainError("empty scene CSV")
    grid = np.array(rows)
    if not np.all(np.isfinite(grid)):
        raise DomainError("scene values must be finite")
    if np.any(grid < 0):
        r, c = np.argwhere(grid < 0)[0]
        raise DomainError(f"negative illuminance at row {r}, column {c}")
    return grid


def load_scene(path, lux_max: float = 1.0, shape: tuple[int, int] | None = None) -> Scene:
    """Load a lux map from CSV, or a PGM whose gray g maps to g / maxval * lux_max."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OutputError(f"cannot read scene {path}: {exc.strerror or exc}") from exc
    if data[:2] in (b"P2", b"P5"):
        if not lux_max >= 0:
            raise DomainError("lux_max must be >= 0")
        gray, maxval = read_pgm(data)
        lux = gray / maxval * lux_max
    else:
        lux = read_csv_grid(data.decode("utf-8"))
    if shape is not None and lux.shape != tuple(shape):
        raise DomainError(f"scene {path} is {lux.shape[0]}x{lux.shape[1]}, expected {shape[0]}x{shape[1]}")
    return Scene(lux)


# --- writers --------------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    """Write via a temp file in the target directory and rename into place."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if tmp and os.path.exists(tmp):
            os.unlink(tmp)
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def frame_pgm(frame: Frame) -> str:
    rows, cols = frame.shape
    lines = ["P2", f"{cols} {rows}", str((1 << frame.adc_bits) - 1)]
    lines += [" ".join(str(int(v)) for v in row) for row in frame.codes]
    return "\n".join(lines) + "\n"


def frame_csv(frame: Frame) -> str:
    lines = ["row,col,code,current,voltage"]
    rows, cols = frame.shape
    for r in range(rows):
        for c in range(cols):
            lines.append(f"{r},{c},{int(frame.codes[r, c])},{_fmt(frame.currents[r, c])},"
                         f"{_fmt(frame.voltages[r, c])}")
    return "\n".join(lines) + "\n"


def trace_csv(trace: Trace) -> str:
    lines = ["t,i_out,v_out"]
    lines += [f"{_fmt(t)},{_fmt(i)},{_fmt(v)}" for t, i, v in zip(trace.t, trace.i_out, trace.v_out)]
    return "\n".join(lines) + "\n"


def led_csv(state: LedMatrixState) -> str:
    return "\n".join(",".join("1" if x else "0" for x in row) for row in state.lit) + "\n"


def write_frame(path, frame: Frame) -> None:
    """ASCII PGM, or CSV with pre-quantization values when the suffix is .csv."""
    text = frame_csv(frame) if Path(path).suffix.lower() == ".csv" else frame_pgm(frame)
    atomic_write(path, text)


def write_trace(path, trace: Trace) -> None:
    atomic_write(path, trace_csv(trace))


def write_led(path, state: LedMatrixState) -> None:
    atomic_write(path, led_csv(state))
