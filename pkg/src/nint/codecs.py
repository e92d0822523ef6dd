"""Minimal raster and audio codecs.

Reads binary PGM/PPM (P5/P6, 8-bit), non-interlaced 8-bit PNG (grayscale
or RGB), and 16-bit PCM mono WAV. Writes PGM/PPM for snapshots. No
external imaging dependency; PNG inflation uses stdlib zlib and WAV
parsing uses stdlib wave.
"""

from __future__ import annotations

import io
import struct
import wave
import zlib
from pathlib import Path

import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class CodecError(ValueError):
    """Raised when a file cannot be decoded as the expected format."""


# ---------------------------------------------------------------------------
# PGM / PPM (binary, 8-bit)
# ---------------------------------------------------------------------------


def _read_pnm_token(stream: io.BufferedIOBase) -> bytes:
    # Tokens are separated by whitespace; '#' starts a comment to end of line.
    token = b""
    while True:
        ch = stream.read(1)
        if ch == b"":
            if token:
                return token
            raise CodecError("truncated PNM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = stream.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_pnm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file.

    Returns uint8 array of shape (H, W) for PGM or (H, W, 3) for PPM.
    """
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic not in (b"P5", b"P6"):
            raise CodecError(f"not a binary PGM/PPM file: magic {magic!r}")
        width = int(_read_pnm_token(f))
        height = int(_read_pnm_token(f))
        maxval = int(_read_pnm_token(f))
        if width < 1 or height < 1:
            raise CodecError("zero-sized image")
        if not 0 < maxval < 256:
            raise CodecError(f"unsupported bit depth: maxval {maxval}")
        channels = 1 if magic == b"P5" else 3
        count = width * height * channels
        data = f.read(count)
        if len(data) != count:
            raise CodecError("truncated PNM pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8)
    if channels == 1:
        return pixels.reshape(height, width)
    return pixels.reshape(height, width, 3)


def write_pnm(path: str | Path, pixels: np.ndarray) -> None:
    """Write uint8 pixels as binary PGM (2D input) or PPM (HxWx3 input)."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim == 2:
        magic = b"P5"
        height, width = pixels.shape
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        magic = b"P6"
        height, width = pixels.shape[:2]
    else:
        raise CodecError(f"cannot write shape {pixels.shape} as PNM")
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (width, height))
        f.write(pixels.tobytes())


# ---------------------------------------------------------------------------
# PNG (8-bit, non-interlaced, grayscale or RGB)
# ---------------------------------------------------------------------------


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, width: int, height: int, channels: int) -> np.ndarray:
    stride = width * channels
    if len(raw) != (stride + 1) * height:
        raise CodecError("PNG pixel data has wrong length")
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int32)
    pos = 0
    for y in range(height):
        ftype = raw[pos]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).astype(np.int32)
        pos += stride + 1
        if ftype == 0:
            recon = line
        elif ftype == 1:  # Sub
            recon = line.copy()
            for x in range(channels, stride):
                recon[x] = (recon[x] + recon[x - channels]) & 0xFF
        elif ftype == 2:  # Up
            recon = (line + prev) & 0xFF
        elif ftype == 3:  # Average
            recon = line.copy()
            for x in range(stride):
                left = recon[x - channels] if x >= channels else 0
                recon[x] = (recon[x] + (left + prev[x]) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            recon = line.copy()
            for x in range(stride):
                left = int(recon[x - channels]) if x >= channels else 0
                upleft = int(prev[x - channels]) if x >= channels else 0
                recon[x] = (recon[x] + _paeth(left, int(prev[x]), upleft)) & 0xFF
        else:
            raise CodecError(f"unknown PNG filter type {ftype}")
        out[y] = recon.astype(np.uint8)
        prev = recon
    return out


def read_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit non-interlaced PNG (color type 0 or 2).

    Returns uint8 array of shape (H, W) or (H, W, 3).
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != PNG_SIGNATURE:
        raise CodecError("not a PNG file")
    pos = 8
    header = None
    idat = b""
    while pos + 8 <= len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        ctype = blob[pos + 4 : pos + 8]
        data = blob[pos + 8 : pos + 8 + length]
        pos += 12 + length  # length + type + data + crc
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", data)
        elif ctype == b"IDAT":
            idat += data
        elif ctype == b"IEND":
            break
    if header is None:
        raise CodecError("PNG missing IHDR chunk")
    width, height, depth, color, _comp, _filt, interlace = header
    if width < 1 or height < 1:
        raise CodecError("zero-sized image")
    if depth != 8:
        raise CodecError(f"unsupported bit depth: {depth}")
    if interlace != 0:
        raise CodecError("interlaced PNG not supported")
    if color == 0:
        channels = 1
    elif color == 2:
        channels = 3
    else:
        raise CodecError(f"unsupported PNG color type {color}")
    try:
        raw = zlib.decompress(idat)
    except zlib.error as exc:
        raise CodecError(f"corrupt PNG stream: {exc}") from exc
    flat = _unfilter(raw, width, height, channels)
    if channels == 1:
        return flat.reshape(height, width)
    return flat.reshape(height, width, 3)


def write_png(path: str | Path, pixels: np.ndarray) -> None:
    """Write uint8 pixels as a minimal non-interlaced PNG (filter 0 rows)."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim == 2:
        color, channels = 0, 1
        height, width = pixels.shape
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        color, channels = 2, 3
        height, width = pixels.shape[:2]
    else:
        raise CodecError(f"cannot write shape {pixels.shape} as PNG")

    def chunk(ctype: bytes, data: bytes) -> bytes:
        crc = zlib.crc32(ctype + data)
        return struct.pack(">I", len(data)) + ctype + data + struct.pack(">I", crc)

    ihdr = struct.pack(">IIBBBBB", width, height, 8, color, 0, 0, 0)
    rows = pixels.reshape(height, width * channels)
    raw = b"".join(b"\x00" + rows[y].tobytes() for y in range(height))
    with open(path, "wb") as f:
        f.write(PNG_SIGNATURE)
        f.write(chunk(b"IHDR", ihdr))
        f.write(chunk(b"IDAT", zlib.compress(raw)))
        f.write(chunk(b"IEND", b""))


def read_raster(path: str | Path) -> np.ndarray:
    """Dispatch on magic bytes: PNG or binary PNM."""
    with open(path, "rb") as f:
        head = f.read(8)
    if head[:8] == PNG_SIGNATURE:
        return read_png(path)
    if head[:2] in (b"P5", b"P6"):
        return read_pnm(path)
    raise CodecError(f"unsupported raster format in {path}")


# ---------------------------------------------------------------------------
# WAV (RIFF, PCM, mono, 16-bit little-endian)
# ---------------------------------------------------------------------------


def read_wav_mono16(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM mono WAV file.

    Returns (samples as int16 array, sample rate in Hz).
    """
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise CodecError(f"compressed WAV not supported: {w.getcomptype()}")
            if w.getnchannels() != 1:
                raise CodecError(f"expected mono WAV, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise CodecError(f"expected 16-bit samples, got {8 * w.getsampwidth()}-bit")
            nframes = w.getnframes()
            if nframes == 0:
                raise CodecError("zero-length signal")
            data = w.readframes(nframes)
            rate = w.getframerate()
    except (wave.Error, EOFError) as exc:
        raise CodecError(f"malformed WAV file: {exc}") from exc
    samples = np.frombuffer(data, dtype="<i2")
    return samples, rate


def write_wav_mono16(path: str | Path, samples: np.ndarray, rate: int) -> None:
    samples = np.ascontiguousarray(samples, dtype="<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(samples.tobytes())
