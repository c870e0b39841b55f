"""Compact native FLAC decoder.

Decodes the full FLAC subset: constant/verbatim/fixed/LPC subframes, Rice
residual partitions (both 4- and 5-bit parameter widths with escape codes),
stereo decorrelation modes, and per-frame CRC-8/CRC-16 plus stream MD5
verification.  Any integrity failure raises
:class:`~cratedig.errors.CorruptStreamError` and the partial decode is
discarded.

This is a straightforward bitstream decoder, not a tuned one; it exists so
libraries of FLAC files can be scanned without external codec dependencies.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from ..errors import CorruptStreamError

_SAMPLE_RATES = {
    1: 88200, 2: 176400, 3: 192000, 4: 8000, 5: 16000, 6: 22050,
    7: 24000, 8: 32000, 9: 44100, 10: 48000, 11: 96000,
}


def _crc_table(poly: int, width: int) -> list[int]:
    mask = (1 << width) - 1
    top = 1 << (width - 1)
    table = []
    for byte in range(256):
        crc = byte << (width - 8)
        for _ in range(8):
            crc = ((crc << 1) ^ poly) if crc & top else (crc << 1)
        table.append(crc & mask)
    return table


_CRC8_TABLE = _crc_table(0x07, 8)
_CRC16_TABLE = _crc_table(0x8005, 16)


def _crc8(data: bytes) -> int:
    crc = 0
    for b in data:
        crc = _CRC8_TABLE[crc ^ b]
    return crc


def _crc16(data: bytes) -> int:
    crc = 0
    for b in data:
        crc = ((crc << 8) ^ _CRC16_TABLE[((crc >> 8) ^ b) & 0xFF]) & 0xFFFF
    return crc


class _BitReader:
    """MSB-first bit reader over an in-memory byte string."""

    __slots__ = ("data", "pos", "acc", "nbits")

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos
        self.acc = 0
        self.nbits = 0

    def _refill(self, need: int) -> None:
        while self.nbits < need:
            if self.pos >= len(self.data):
                raise CorruptStreamError("unexpected end of FLAC stream")
            self.acc = (self.acc << 8) | self.data[self.pos]
            self.pos += 1
            self.nbits += 8

    def read_uint(self, n: int) -> int:
        if n == 0:
            return 0
        self._refill(n)
        self.nbits -= n
        val = (self.acc >> self.nbits) & ((1 << n) - 1)
        self.acc &= (1 << self.nbits) - 1
        return val

    def read_int(self, n: int) -> int:
        val = self.read_uint(n)
        if val >= 1 << (n - 1):
            val -= 1 << n
        return val

    def read_unary(self) -> int:
        """Count 0 bits up to the terminating 1 bit."""
        count = 0
        while True:
            if self.nbits == 0:
                self._refill(1)
            if self.acc == 0:
                count += self.nbits
                self.nbits = 0
                continue
            lead = self.nbits - self.acc.bit_length()
            count += lead
            self.nbits -= lead + 1
            self.acc &= (1 << self.nbits) - 1
            return count

    def align_to_byte(self) -> None:
        drop = self.nbits & 7
        self.nbits -= drop
        self.acc &= (1 << self.nbits) - 1

    def byte_pos(self) -> int:
        return self.pos - self.nbits // 8


def _read_rice(br: _BitReader, param: int) -> int:
    val = (br.read_unary() << param) | br.read_uint(param)
    return (val >> 1) ^ -(val & 1)


def _read_coded_number(br: _BitReader) -> int:
    """UTF-8-style frame/sample number (up to 36 bits)."""
    b0 = br.read_uint(8)
    if b0 < 0x80:
        return b0
    follow = 0
    mask = 0x40
    while b0 & mask:
        follow += 1
        mask >>= 1
    if follow == 0 or follow > 6:
        raise CorruptStreamError("bad coded number in frame header")
    val = b0 & (mask - 1)
    for _ in range(follow):
        b = br.read_uint(8)
        if (b & 0xC0) != 0x80:
            raise CorruptStreamError("bad coded number continuation")
        val = (val << 6) | (b & 0x3F)
    return val


def _decode_residual(br: _BitReader, blocksize: int, pred_order: int) -> list[int]:
    method = br.read_uint(2)
    if method > 1:
        raise CorruptStreamError("reserved residual coding method")
    pbits = 4 if method == 0 else 5
    escape = (1 << pbits) - 1
    porder = br.read_uint(4)
    nparts = 1 << porder
    if blocksize % nparts != 0:
        raise CorruptStreamError("partition order does not divide block size")
    out: list[int] = []
    for p in range(nparts):
        count = blocksize // nparts - (pred_order if p == 0 else 0)
        if count < 0:
            raise CorruptStreamError("predictor order exceeds first partition")
        param = br.read_uint(pbits)
        if param == escape:
            nb = br.read_uint(5)
            if nb == 0:
                out.extend([0] * count)
            else:
                out.extend(br.read_int(nb) for _ in range(count))
        else:
            out.extend(_read_rice(br, param) for _ in range(count))
    return out


def _restore_fixed(order: int, warm: list[int], resid: list[int]) -> list[int]:
    s = list(warm)
    if order == 0:
        return list(resid)
    for e in resid:
        if order == 1:
            s.append(e + s[-1])
        elif order == 2:
            s.append(e + 2 * s[-1] - s[-2])
        elif order == 3:
            s.append(e + 3 * s[-1] - 3 * s[-2] + s[-3])
        else:
            s.append(e + 4 * s[-1] - 6 * s[-2] + 4 * s[-3] - s[-4])
    return s


def _decode_subframe(br: _BitReader, bps: int, n: int) -> list[int]:
    if br.read_uint(1) != 0:
        raise CorruptStreamError("subframe padding bit set")
    stype = br.read_uint(6)
    wasted = 0
    if br.read_uint(1) == 1:
        wasted = 1 + br.read_unary()
    bps_eff = bps - wasted
    if bps_eff <= 0:
        raise CorruptStreamError("wasted bits exceed sample size")

    if stype == 0:
        out = [br.read_int(bps_eff)] * n
    elif stype == 1:
        out = [br.read_int(bps_eff) for _ in range(n)]
    elif 8 <= stype <= 12:
        order = stype - 8
        warm = [br.read_int(bps_eff) for _ in range(order)]
        out = _restore_fixed(order, warm, _decode_residual(br, n, order))
    elif stype >= 32:
        order = stype - 31
        warm = [br.read_int(bps_eff) for _ in range(order)]
        prec = br.read_uint(4)
        if prec == 0b1111:
            raise CorruptStreamError("invalid LPC precision")
        prec += 1
        shift = br.read_int(5)
        if shift < 0:
            raise CorruptStreamError("negative LPC shift")
        coefs = [br.read_int(prec) for _ in range(order)]
        resid = _decode_residual(br, n, order)
        out = list(warm)
        for e in resid:
            acc = 0
            for j, c in enumerate(coefs):
                acc += c * out[-1 - j]
            out.append(e + (acc >> shift))
    else:
        raise CorruptStreamError(f"reserved subframe type {stype}")

    if wasted:
        out = [v << wasted for v in out]
    return out


class _StreamInfo:
    __slots__ = ("sample_rate", "channels", "bps", "total_samples", "md5")

    def __init__(self, payload: bytes):
        if len(payload) < 34:
            raise CorruptStreamError("STREAMINFO block truncated")
        br = _BitReader(payload)
        br.read_uint(16)  # min block size
        br.read_uint(16)  # max block size
        br.read_uint(24)  # min frame size
        br.read_uint(24)  # max frame size
        self.sample_rate = br.read_uint(20)
        self.channels = br.read_uint(3) + 1
        self.bps = br.read_uint(5) + 1
        self.total_samples = br.read_uint(36)
        self.md5 = payload[18:34]
        if self.sample_rate == 0:
            raise CorruptStreamError("STREAMINFO declares zero sample rate")


def _parse_frame(br: _BitReader, info: _StreamInfo) -> list[list[int]]:
    start = br.byte_pos()
    if br.read_uint(14) != 0b11111111111110:
        raise CorruptStreamError("lost frame sync")
    br.read_uint(1)
    br.read_uint(1)  # blocking strategy
    bs_code = br.read_uint(4)
    sr_code = br.read_uint(4)
    ch_code = br.read_uint(4)
    ss_code = br.read_uint(3)
    br.read_uint(1)
    _read_coded_number(br)

    if bs_code == 0:
        raise CorruptStreamError("reserved block size code")
    elif bs_code == 1:
        blocksize = 192
    elif bs_code <= 5:
        blocksize = 576 << (bs_code - 2)
    elif bs_code == 6:
        blocksize = br.read_uint(8) + 1
    elif bs_code == 7:
        blocksize = br.read_uint(16) + 1
    else:
        blocksize = 256 << (bs_code - 8)

    if sr_code == 12:
        br.read_uint(8)
    elif sr_code in (13, 14):
        br.read_uint(16)
    elif sr_code == 15:
        raise CorruptStreamError("invalid sample rate code")

    bps_table = {0: info.bps, 1: 8, 2: 12, 4: 16, 5: 20, 6: 24, 7: 32}
    if ss_code not in bps_table:
        raise CorruptStreamError("reserved sample size code")
    bps = bps_table[ss_code]

    header_bytes = br.data[start:br.byte_pos()]
    if _crc8(header_bytes) != br.read_uint(8):
        raise CorruptStreamError("frame header CRC-8 mismatch")

    if ch_code <= 7:
        chans = [_decode_subframe(br, bps, blocksize) for _ in range(ch_code + 1)]
    elif ch_code == 8:  # left/side
        left = _decode_subframe(br, bps, blocksize)
        side = _decode_subframe(br, bps + 1, blocksize)
        chans = [left, [l - s for l, s in zip(left, side)]]
    elif ch_code == 9:  # side/right
        side = _decode_subframe(br, bps + 1, blocksize)
        right = _decode_subframe(br, bps, blocksize)
        chans = [[r + s for r, s in zip(right, side)], right]
    elif ch_code == 10:  # mid/side
        mid = _decode_subframe(br, bps, blocksize)
        side = _decode_subframe(br, bps + 1, blocksize)
        left, right = [], []
        for m, s in zip(mid, side):
            m = (m << 1) | (s & 1)
            left.append((m + s) >> 1)
            right.append((m - s) >> 1)
        chans = [left, right]
    else:
        raise CorruptStreamError(f"reserved channel assignment {ch_code}")

    br.align_to_byte()
    frame_bytes = br.data[start:br.byte_pos()]
    if _crc16(frame_bytes) != br.read_uint(16):
        raise CorruptStreamError("frame CRC-16 mismatch")
    return chans


def read_flac(path: Path) -> tuple[np.ndarray, int]:
    """Return (samples as float (n,) or (n, channels), sample_rate)."""
    data = path.read_bytes()
    if data[:4] != b"fLaC":
        raise CorruptStreamError(f"{path.name}: missing fLaC marker")

    pos = 4
    info: _StreamInfo | None = None
    while True:
        if pos + 4 > len(data):
            raise CorruptStreamError(f"{path.name}: metadata blocks run past end of file")
        head = data[pos]
        length = int.from_bytes(data[pos + 1:pos + 4], "big")
        if head & 0x7F == 0:
            info = _StreamInfo(data[pos + 4:pos + 4 + length])
        elif head & 0x7F == 127:
            raise CorruptStreamError(f"{path.name}: invalid metadata block type")
        pos += 4 + length
        if head & 0x80:
            break
    if info is None:
        raise CorruptStreamError(f"{path.name}: missing STREAMINFO block")

    br = _BitReader(data, pos)
    channels: list[list[int]] = [[] for _ in range(info.channels)]
    try:
        while br.byte_pos() < len(data):
            frame = _parse_frame(br, info)
            if len(frame) != info.channels:
                raise CorruptStreamError(f"{path.name}: channel count changed mid-stream")
            for ch, samples in zip(channels, frame):
                ch.extend(samples)
    except CorruptStreamError as exc:
        raise CorruptStreamError(f"{path.name}: {exc}") from None

    total = len(channels[0])
    if info.total_samples and total < info.total_samples:
        raise CorruptStreamError(f"{path.name}: stream truncated "
                                 f"({total} of {info.total_samples} samples)")
    if info.total_samples:
        channels = [ch[:info.total_samples] for ch in channels]

    if info.md5 != b"\x00" * 16 and info.bps % 8 == 0:
        width = info.bps // 8
        interleaved = bytearray()
        for i in range(len(channels[0])):
            for ch in channels:
                interleaved += ch[i].to_bytes(width, "little", signed=True)
        if hashlib.md5(bytes(interleaved)).digest() != info.md5:
            raise CorruptStreamError(f"{path.name}: decoded PCM fails MD5 check")

    scale = float(2 ** (info.bps - 1) - 1)
    arr = np.array(channels, dtype=np.float64).T / scale
    if info.channels == 1:
        arr = arr.reshape(-1)
    return arr, info.sample_rate
