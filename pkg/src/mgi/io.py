"""File formats: PGM images, MGIMEAS1 measurements, key = value configs."""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "read_pgm",
    "write_pgm",
    "write_measurement",
    "read_measurement",
    "read_measurement_header",
    "parse_config",
    "load_config",
    "MEAS_MAGIC",
]

MEAS_MAGIC = b"MGIMEAS1"
_HEADER = struct.Struct("<8sIII")


def _pgm_tokens(data):
    """Yield (token, end offset) pairs from a PGM header, skipping comments."""
    pos = 0
    while True:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InvalidInputError("truncated PGM header")
        yield data[start:pos], pos


def read_pgm(path):
    """Read a P5 (binary) or P2 (ASCII) PGM; returns floats in [0, 1], shape (h, w)."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        width, _ = next(tokens)
        height, _ = next(tokens)
        maxval, end = next(tokens)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise InvalidInputError(f"{path}: malformed PGM header") from exc
    if magic not in (b"P5", b"P2") or not 0 < maxval < 65536:
        raise InvalidInputError(f"{path}: not a supported PGM file")
    if magic == b"P2":
        vals = np.array(data[end:].split(), dtype=float)
    else:
        dtype = np.dtype(">u2" if maxval > 255 else "u1")
        body = data[end + 1 :]
        if len(body) < width * height * dtype.itemsize:
            raise InvalidInputError(f"{path}: truncated PGM pixel data")
        vals = np.frombuffer(body, dtype=dtype, count=width * height).astype(float)
    if vals.size != width * height:
        raise InvalidInputError(f"{path}: expected {width * height} pixels, found {vals.size}")
    return vals.reshape(height, width) / maxval


def write_pgm(path, image):
    """Write a 2-D image with values in [0, 1] as 8-bit P5 (values are clipped)."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise InvalidInputError("write_pgm expects a 2-D image")
    q = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(q.tobytes())


def write_measurement(path, xi, arms, rows, cols, meta=None):
    """Write MGIMEAS1: magic, three LE uint32 (arms, rows, cols), LE float64 payload.

    ``meta`` (JSON-serialisable) goes to a ``<path>.json`` sidecar.
    """
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.size != arms * rows * cols:
        raise InvalidInputError("payload length does not match header")
    if not np.all(np.isfinite(xi)):
        raise InvalidInputError("measurement contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MEAS_MAGIC, arms, rows, cols))
        fh.write(xi.astype("<f8").tobytes())
    if meta is not None:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_measurement_header(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated measurement file")
    magic, arms, rows, cols = _HEADER.unpack(head)
    if magic != MEAS_MAGIC:
        raise InvalidInputError(f"{path}: bad magic {magic!r}")
    return arms, rows, cols


def read_measurement(path):
    """Return ``(xi, (arms, rows, cols), meta)``; ``meta`` is None without a sidecar."""
    arms, rows, cols = read_measurement_header(path)
    raw = Path(path).read_bytes()[_HEADER.size :]
    n = arms * rows * cols
    if len(raw) != 8 * n:
        raise InvalidInputError(f"{path}: expected {8 * n} payload bytes, found {len(raw)}")
    xi = np.frombuffer(raw, dtype="<f8").astype(float)
    side = Path(str(path) + ".json")
    meta = json.loads(side.read_text()) if side.exists() else None
    return xi, (arms, rows, cols), meta


def parse_config(text, known=None):
    """Parse ``key = value`` lines ('#' comments).  Unknown keys are rejected.

    ``known`` maps key -> converter (e.g. ``float``); values stay strings
    for keys mapped to None.
    """
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if known is not None and key not in known:
            raise InvalidInputError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise InvalidInputError(f"line {lineno}: duplicate key {key!r}")
        conv = known.get(key) if known is not None else None
        try:
            out[key] = conv(value) if conv else value
        except ValueError as exc:
            raise InvalidInputError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    return out


def load_config(path, known=None):
    return parse_config(Path(path).read_text(encoding="utf-8"), known)
