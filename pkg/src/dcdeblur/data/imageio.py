"""Minimal 8-bit RGB image IO: PNG (non-interlaced) and binary PPM (P6).

Self-contained on purpose: stdlib zlib/struct only. The PNG encoder always
writes filter-0 rows; the decoder reconstructs all five standard row
filters so externally produced files load too. Loading sniffs the file
content, not the extension.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..engine import Tensor
from ..errors import FormatError, ShapeError, TruncatedFileError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------------------
# PNG


def _png_chunk(kind: bytes, data: bytes) -> bytes:
    return (struct.pack(">I", len(data)) + kind + data
            + struct.pack(">I", zlib.crc32(kind + data)))


def encode_png(pixels: np.ndarray) -> bytes:
    """(H, W, 3) uint8 -> non-interlaced 8-bit truecolor PNG bytes."""
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ShapeError(f"encode_png expects (H,W,3) uint8, got {pixels.shape} {pixels.dtype}")
    h, w = pixels.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = bytearray()
    for row in pixels:
        raw.append(0)  # filter type 0 (None)
        raw += row.tobytes()
    return (PNG_SIGNATURE
            + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(bytes(raw)))
            + _png_chunk(b"IEND", b""))


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(raw: bytes, w: int, h: int) -> np.ndarray:
    bpp = 3
    stride = w * bpp
    if len(raw) != h * (stride + 1):
        raise FormatError(f"decompressed PNG data is {len(raw)} bytes, expected {h * (stride + 1)}")
    out = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int32)
    pos = 0
    for y in range(h):
        ftype = raw[pos]
        row = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).astype(np.int32)
        pos += stride + 1
        if ftype == 0:
            recon = row
        elif ftype == 2:
            recon = (row + prev) & 0xFF
        elif ftype in (1, 3, 4):
            recon = row.copy()
            for i in range(stride):
                left = recon[i - bpp] if i >= bpp else 0
                if ftype == 1:
                    recon[i] = (recon[i] + left) & 0xFF
                elif ftype == 3:
                    recon[i] = (recon[i] + ((left + prev[i]) >> 1)) & 0xFF
                else:
                    upleft = prev[i - bpp] if i >= bpp else 0
                    recon[i] = (recon[i] + _paeth(left, prev[i], upleft)) & 0xFF
        else:
            raise FormatError(f"unknown PNG row filter {ftype}")
        out[y] = recon
        prev = recon
    return out.reshape(h, w, bpp)


def decode_png(blob: bytes) -> np.ndarray:
    """PNG bytes -> (H, W, 3) uint8; 8-bit truecolor, no interlace."""
    if not blob.startswith(PNG_SIGNATURE):
        raise FormatError("not a PNG file")
    pos = len(PNG_SIGNATURE)
    header = None
    idat = bytearray()
    saw_end = False
    while pos < len(blob):
        if pos + 8 > len(blob):
            raise TruncatedFileError("PNG ended inside a chunk header")
        (length,) = struct.unpack(">I", blob[pos:pos + 4])
        kind = blob[pos + 4:pos + 8]
        body_end = pos + 8 + length
        if body_end + 4 > len(blob):
            raise TruncatedFileError(f"PNG ended inside chunk {kind!r}")
        body = blob[pos + 8:body_end]
        (crc,) = struct.unpack(">I", blob[body_end:body_end + 4])
        if zlib.crc32(kind + body) != crc:
            raise FormatError(f"PNG chunk {kind!r} fails its CRC")
        pos = body_end + 4
        if kind == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif kind == b"IDAT":
            idat += body
        elif kind == b"IEND":
            saw_end = True
            break
    if header is None:
        raise FormatError("PNG has no IHDR chunk")
    if not saw_end:
        raise TruncatedFileError("PNG has no IEND chunk")
    w, h, depth, color, compression, filt, interlace = header
    if depth != 8 or color != 2:
        raise FormatError(f"unsupported PNG variant: bit depth {depth}, color type {color} "
                          "(only 8-bit RGB is supported)")
    if compression != 0 or filt != 0:
        raise FormatError("unsupported PNG compression/filter method")
    if interlace != 0:
        raise FormatError("interlaced PNG is not supported")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise FormatError(f"PNG pixel data does not decompress: {exc}") from exc
    return _unfilter(raw, w, h)


# ---------------------------------------------------------------------------
# PPM (P6)


def encode_ppm(pixels: np.ndarray) -> bytes:
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ShapeError(f"encode_ppm expects (H,W,3) uint8, got {pixels.shape} {pixels.dtype}")
    h, w = pixels.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def _ppm_tokens(blob: bytes, count: int, start: int):
    """Read `count` whitespace-separated header tokens, honoring # comments."""
    tokens = []
    pos = start
    while len(tokens) < count:
        if pos >= len(blob):
            raise TruncatedFileError("PPM header ended early")
        ch = blob[pos:pos + 1]
        if ch == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            tok = bytearray()
            while pos < len(blob) and not blob[pos:pos + 1].isspace():
                tok += blob[pos:pos + 1]
                pos += 1
            tokens.append(bytes(tok))
    return tokens, pos


def decode_ppm(blob: bytes) -> np.ndarray:
    if not blob.startswith(b"P6"):
        raise FormatError("not a binary PPM (P6) file")
    try:
        (w_tok, h_tok, max_tok), pos = _ppm_tokens(blob, 3, 2)
        w, h, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError as exc:
        raise FormatError(f"malformed PPM header: {exc}") from exc
    if maxval != 255:
        raise FormatError(f"only maxval 255 PPM is supported, got {maxval}")
    pos += 1  # single whitespace byte separating header from pixel data
    need = w * h * 3
    if len(blob) - pos < need:
        raise TruncatedFileError(f"PPM pixel data is {len(blob) - pos} bytes, expected {need}")
    return np.frombuffer(blob, dtype=np.uint8, count=need, offset=pos).reshape(h, w, 3).copy()


# ---------------------------------------------------------------------------
# tensor-level API


def quantize(image: np.ndarray) -> np.ndarray:
    """[0,1] floats -> uint8 with round-half-up."""
    return np.clip(np.floor(image * 255.0 + 0.5), 0, 255).astype(np.uint8)


def load_image(path) -> Tensor:
    """Read a PNG or PPM file into a (3, H, W) tensor scaled to [0, 1]."""
    blob = Path(path).read_bytes()
    if blob.startswith(PNG_SIGNATURE):
        pixels = decode_png(blob)
    elif blob.startswith(b"P6"):
        pixels = decode_ppm(blob)
    else:
        raise FormatError(f"{path}: unsupported image format (expected PNG or PPM P6)")
    return Tensor(pixels.astype(np.float64).transpose(2, 0, 1) / 255.0)


def save_image(image: Tensor, path) -> None:
    """Write a (3, H, W) or (1, 3, H, W) tensor in [0, 1] as PNG or PPM."""
    arr = np.asarray(image.data if isinstance(image, Tensor) else image)
    if arr.ndim == 4 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"save_image expects (3,H,W), got {arr.shape}")
    pixels = quantize(arr.transpose(1, 2, 0))
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        blob = encode_ppm(pixels)
    else:
        blob = encode_png(pixels)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
