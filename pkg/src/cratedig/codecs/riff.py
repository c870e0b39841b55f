"""RIFF/WAVE parsing and PCM16 writing.

Reading accepts integer PCM (8/16/24/32-bit), IEEE float (32/64-bit) and
WAVE_FORMAT_EXTENSIBLE wrappers of either.  Writing emits the canonical
44-byte-header mono PCM16 layout only.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptStreamError

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


def _int_scale(bits: int) -> float:
    return float(2 ** (bits - 1) - 1)


def read_wav(path: Path) -> tuple[np.ndarray, int]:
    """Return (samples as float (n,) or (n, channels), sample_rate)."""
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptStreamError(f"{path.name}: missing RIFF/WAVE header")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise CorruptStreamError(f"{path.name}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _FMT_EXTENSIBLE and len(body) >= 40:
                # SubFormat GUID starts with the effective format tag.
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise CorruptStreamError(f"{path.name}: data chunk truncated")
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise CorruptStreamError(f"{path.name}: missing fmt or data chunk")
    tag, channels, rate, _, block_align, bits = fmt
    if channels <= 0 or rate <= 0:
        raise CorruptStreamError(f"{path.name}: nonsense fmt fields")

    if tag == _FMT_PCM and bits == 16:
        arr = np.frombuffer(data[:len(data) // 2 * 2], dtype="<i2").astype(np.float64)
        arr /= _int_scale(16)
    elif tag == _FMT_PCM and bits == 8:
        arr = (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 127.0
    elif tag == _FMT_PCM and bits == 24:
        b = np.frombuffer(data[:len(data) // 3 * 3], dtype=np.uint8).reshape(-1, 3)
        vals = (b[:, 0].astype(np.int32)
                | (b[:, 1].astype(np.int32) << 8)
                | (b[:, 2].astype(np.int32) << 16))
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        arr = vals.astype(np.float64) / _int_scale(24)
    elif tag == _FMT_PCM and bits == 32:
        arr = np.frombuffer(data[:len(data) // 4 * 4], dtype="<i4").astype(np.float64)
        arr /= _int_scale(32)
    elif tag == _FMT_FLOAT and bits == 32:
        arr = np.frombuffer(data[:len(data) // 4 * 4], dtype="<f4").astype(np.float64)
    elif tag == _FMT_FLOAT and bits == 64:
        arr = np.frombuffer(data[:len(data) // 8 * 8], dtype="<f8").astype(np.float64)
    else:
        raise CorruptStreamError(f"{path.name}: unsupported WAV encoding (tag={tag}, bits={bits})")

    if channels > 1:
        arr = arr[:len(arr) // channels * channels].reshape(-1, channels)
    return arr, int(rate)


def wav_pcm16_bytes(q: np.ndarray, rate: int) -> bytes:
    """Serialize int16 samples as a canonical mono PCM16 WAV."""
    payload = q.astype("<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, _FMT_PCM, 1, rate, rate * 2, 2, 16,
        b"data", len(payload),
    )
    return header + payload


def write_wav_pcm16(path: Path, q: np.ndarray, rate: int) -> None:
    path.write_bytes(wav_pcm16_bytes(q, rate))
