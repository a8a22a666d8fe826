"""Frame and mask file IO: PNG (via Pillow) plus binary PGM/PPM.

The PGM/PPM codec is self-contained so golden-file exports are byte-stable:
``P5``/``P6`` magic, single-space ``width height`` line, maxval 255, then raw
row-major samples.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import BinaryMask, Frame

__all__ = [
    "read_frame",
    "write_frame",
    "write_pgm",
    "write_ppm",
    "mask_to_frame",
    "atomic_write_bytes",
]


def atomic_write_bytes(path: Path | str, payload: bytes):
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_pnm(pixels: np.ndarray) -> bytes:
    magic = b"P5" if pixels.ndim == 2 else b"P6"
    h, w = pixels.shape[:2]
    header = b"%s\n%d %d\n255\n" % (magic, w, h)
    return header + pixels.tobytes()


def _read_pnm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        if data[pos : pos + 1].isspace():
            pos += 1
        elif data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated PNM header")
    return data[start:pos], pos


def _decode_pnm(data: bytes) -> np.ndarray:
    magic, pos = _read_pnm_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    w, pos = _read_pnm_token(data, pos)
    h, pos = _read_pnm_token(data, pos)
    maxval, pos = _read_pnm_token(data, pos)
    if int(maxval) != 255:
        raise ValueError("only 8-bit PNM supported")
    pos += 1  # single whitespace after maxval
    w, h = int(w), int(h)
    channels = 1 if magic == b"P5" else 3
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * channels, offset=pos)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return raw.reshape(shape).copy()


def read_frame(path: Path | str) -> Frame:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm"):
        return Frame(_decode_pnm(path.read_bytes()))
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if img.mode in ("P", "RGBA", "CMYK") else "L")
        return Frame(np.asarray(img, dtype=np.uint8))


def write_pgm(path: Path | str, frame: Frame):
    if frame.channels != 1:
        raise ValueError("PGM stores grayscale frames only")
    atomic_write_bytes(path, _encode_pnm(frame.pixels))


def write_ppm(path: Path | str, frame: Frame):
    if frame.channels != 3:
        raise ValueError("PPM stores color frames only")
    atomic_write_bytes(path, _encode_pnm(frame.pixels))


def mask_to_frame(mask: BinaryMask) -> Frame:
    """Render a mask as a 0/255 grayscale frame (for PGM export)."""
    return Frame(mask.bits.astype(np.uint8) * 255)


def write_frame(path: Path | str, frame: Frame):
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        write_pgm(path, frame)
    elif suffix == ".ppm":
        write_ppm(path, frame)
    elif suffix == ".png":
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(frame.pixels).save(path, format="PNG")
    else:
        raise ValueError(f"unsupported frame format: {path.suffix}")
