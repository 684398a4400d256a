"""Binary PGM (P5) and PPM (P6) images, 8-bit only."""
from __future__ import annotations

import os

import numpy as np

from .errors import FormatError


def encode_pnm(pixels: np.ndarray) -> bytes:
    """uint8 [H,W] -> P5 bytes, uint8 [H,W,3] -> P6 bytes."""
    a = np.asarray(pixels)
    if a.dtype != np.uint8:
        raise FormatError(f"netpbm encoder needs uint8 pixels, got {a.dtype}")
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"cannot encode array of shape {a.shape} as PGM/PPM")
    h, w = a.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(a).tobytes()


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, i, n = [], 0, len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise FormatError("truncated netpbm header")
        tokens.append(data[start:i])
    if i >= n or not data[i:i + 1].isspace():
        raise FormatError("netpbm header must end with a single whitespace byte")
    return tokens, i + 1


def decode_pnm(data: bytes) -> np.ndarray:
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported netpbm magic {magic!r}; only binary P5/P6")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"bad netpbm header values {tokens[1:]}") from exc
    if w <= 0 or h <= 0:
        raise FormatError(f"bad netpbm size {w}x{h}")
    if maxval != 255:
        raise FormatError(f"only 8-bit netpbm (maxval 255) is supported, got {maxval}")
    ch = 1 if magic == b"P5" else 3
    need = w * h * ch
    body = data[offset:offset + need]
    if len(body) != need:
        raise FormatError(f"netpbm pixel data truncated: expected {need} bytes, got {len(body)}")
    a = np.frombuffer(body, dtype=np.uint8)
    return (a.reshape(h, w) if ch == 1 else a.reshape(h, w, 3)).copy()


def write_pnm(path: str | os.PathLike, pixels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_pnm(pixels))


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    try:
        return decode_pnm(data)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def to_uint8(x: np.ndarray) -> np.ndarray:
    """[0,1] floats -> bytes by round(x * 255)."""
    return np.clip(np.rint(np.asarray(x, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(a: np.ndarray, dtype=np.float32) -> np.ndarray:
    return (np.asarray(a, dtype=np.float64) / 255.0).astype(dtype)


def read_rgb(path) -> np.ndarray:
    """PPM -> float [3,H,W] in [0,1]; optional PNG via Pillow when available."""
    if str(path).lower().endswith(".png"):
        a = _read_png(path, "RGB")
    else:
        a = read_pnm(path)
    if a.ndim != 3:
        raise FormatError(f"{path}: expected an RGB (P6) image")
    return from_uint8(a).transpose(2, 0, 1)


def read_gray(path) -> np.ndarray:
    """PGM -> uint8 [H,W]."""
    a = _read_png(path, "L") if str(path).lower().endswith(".png") else read_pnm(path)
    if a.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel (P5) image")
    return a


def write_rgb(path, image: np.ndarray) -> None:
    write_pnm(path, to_uint8(np.asarray(image).transpose(1, 2, 0)))


def write_gray(path, values: np.ndarray) -> None:
    a = np.asarray(values)
    write_pnm(path, a if a.dtype == np.uint8 else to_uint8(a))


def _read_png(path, mode: str) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise FormatError(f"{path}: PNG support needs Pillow") from exc
    with Image.open(path) as im:
        return np.asarray(im.convert(mode), dtype=np.uint8)
