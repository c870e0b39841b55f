"""Decoding, resampling, slicing, and WAV export."""

import struct

import numpy as np
import pytest

from conftest import SR, buf, noise, tone, write_wav
from cratedig.audio import (
    AudioBuffer,
    decode,
    export_wav,
    export_wav_bytes,
    resample,
    slice_buffer,
)
from cratedig.codecs.riff import read_wav, wav_pcm16_bytes, write_wav_pcm16
from cratedig.errors import (
    CorruptStreamError,
    InvalidRateError,
    RangeOutOfBoundsError,
    UnsupportedFormatError,
)
from flac_writer import write_flac


def test_buffer_validation():
    with pytest.raises(ValueError):
        AudioBuffer(samples=np.zeros((4, 2), dtype=np.float32), sample_rate=SR,
                    source_path=None)
    with pytest.raises(ValueError):
        AudioBuffer(samples=np.array([0.0, np.nan], dtype=np.float32),
                    sample_rate=SR, source_path=None)
    with pytest.raises(InvalidRateError):
        AudioBuffer(samples=np.zeros(4, dtype=np.float32), sample_rate=0,
                    source_path=None)
    b = buf(tone(440, 1.0))
    assert b.duration_seconds == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(ValueError):
        b.samples[0] = 1.0  # read-only


def test_wav_pcm16_round_trip(tmp_path):
    x = tone(440, 0.5)
    path = write_wav(tmp_path / "t.wav", x)
    b = decode(path)
    assert b.sample_rate == SR
    assert len(b) == len(x)
    assert np.max(np.abs(b.samples - x)) <= 1.0 / 32768


def test_wav_export_bytes_header(tmp_path):
    x = tone(220, 0.1, sr=8000)
    blob = export_wav_bytes(buf(x, 8000))
    assert blob[:4] == b"RIFF" and blob[8:12] == b"WAVE"
    n_bytes = struct.unpack("<I", blob[40:44])[0]
    assert n_bytes == 2 * len(x)
    assert len(blob) == 44 + n_bytes


@pytest.mark.parametrize("bits", [8, 16, 24, 32])
def test_wav_integer_depths(tmp_path, bits):
    rng = np.random.default_rng(bits)
    n = 2000
    scale = 2 ** (bits - 1) - 1
    q = rng.integers(-scale, scale, size=n)
    path = tmp_path / f"d{bits}.wav"
    if bits == 8:
        payload = (q + 128).astype(np.uint8).tobytes()
    else:
        width = bits // 8
        payload = b"".join(int(v).to_bytes(width, "little", signed=True) for v in q)
    header = _wav_header(len(payload), rate=16000, bits=bits, fmt=1)
    path.write_bytes(header + payload)
    samples, rate = read_wav(path)
    assert rate == 16000
    assert np.max(np.abs(samples - q / scale)) < 1e-9


@pytest.mark.parametrize("fmt_bits", [(3, 32), (3, 64)])
def test_wav_float_depths(tmp_path, fmt_bits):
    fmt, bits = fmt_bits
    x = tone(440, 0.2, sr=16000).astype(np.float64 if bits == 64 else np.float32)
    payload = x.astype(f"<f{bits // 8}").tobytes()
    path = tmp_path / f"f{bits}.wav"
    path.write_bytes(_wav_header(len(payload), rate=16000, bits=bits, fmt=fmt) + payload)
    samples, rate = read_wav(path)
    assert np.max(np.abs(samples - x)) < 1e-6


def _wav_header(data_len: int, rate: int, bits: int, fmt: int, channels: int = 1) -> bytes:
    block = channels * bits // 8
    return (b"RIFF" + struct.pack("<I", 36 + data_len) + b"WAVE"
            + b"fmt " + struct.pack("<IHHIIHH", 16, fmt, channels, rate,
                                    rate * block, block, bits)
            + b"data" + struct.pack("<I", data_len))


def test_wav_stereo_downmix(tmp_path):
    left = tone(440, 0.3)
    right = tone(880, 0.3)
    q = np.stack([np.round(left * 32767), np.round(right * 32767)], axis=1).astype(np.int16)
    path = tmp_path / "st.wav"
    payload = q.astype("<i2").tobytes()
    path.write_bytes(_wav_header(len(payload), SR, 16, 1, channels=2) + payload)
    b = decode(path)
    expected = (left + right) / 2
    assert np.max(np.abs(b.samples - expected)) < 1e-3


def test_wav_extensible_format(tmp_path):
    x = tone(300, 0.2, sr=8000)
    q = np.round(x * 32767).astype("<i2")
    payload = q.tobytes()
    pcm_guid = bytes.fromhex("0100000000001000800000aa00389b71")
    fmt_chunk = (struct.pack("<HHIIHH", 0xFFFE, 1, 8000, 16000, 2, 16)
                 + struct.pack("<HHI", 22, 16, 4) + pcm_guid)
    blob = (b"RIFF" + struct.pack("<I", 20 + len(fmt_chunk) + 8 + len(payload)) + b"WAVE"
            + b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
            + b"data" + struct.pack("<I", len(payload)) + payload)
    path = tmp_path / "ext.wav"
    path.write_bytes(blob)
    samples, rate = read_wav(path)
    assert rate == 8000
    assert np.max(np.abs(samples - q / 32767.0)) < 1e-9


def test_flac_decode_through_decode(tmp_path):
    x = tone(440, 1.0)
    q = np.round(x * 32767).astype(np.int64)
    path = write_flac(tmp_path / "t.flac", q, SR)
    b = decode(path)
    assert b.sample_rate == SR
    assert np.max(np.abs(b.samples - q / 32767.0)) < 1e-6


def test_flac_stereo_downmix(tmp_path):
    rng = np.random.default_rng(7)
    q = rng.integers(-20000, 20000, size=(4000, 2), dtype=np.int64)
    path = write_flac(tmp_path / "st.flac", q, SR, block_size=1000)
    b = decode(path)
    expected = q.mean(axis=1) / 32767.0
    assert np.max(np.abs(b.samples - expected)) < 1e-6


def test_flac_truncated_rejected(tmp_path):
    q = np.round(tone(440, 1.0) * 32767).astype(np.int64)
    path = write_flac(tmp_path / "t.flac", q, SR)
    blob = path.read_bytes()
    (tmp_path / "trunc.flac").write_bytes(blob[:len(blob) // 2])
    with pytest.raises(CorruptStreamError):
        decode(tmp_path / "trunc.flac")


def test_unsupported_formats(tmp_path):
    mp3 = tmp_path / "x.mp3"
    mp3.write_bytes(b"ID3\x04\x00\x00\x00\x00\x00\x00" + b"\x00" * 64)
    with pytest.raises(UnsupportedFormatError) as exc:
        decode(mp3)
    assert "convert" in str(exc.value).lower()
    ogg = tmp_path / "x.ogg"
    ogg.write_bytes(b"OggS" + b"\x00" * 64)
    with pytest.raises(UnsupportedFormatError):
        decode(ogg)
    other = tmp_path / "x.xyz"
    other.write_bytes(b"\x00" * 64)
    with pytest.raises(UnsupportedFormatError):
        decode(other)


def test_corrupt_wav_rejected(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFF\x10\x00\x00\x00WAVEjunk")
    with pytest.raises(CorruptStreamError):
        decode(path)
    # supported extension but wrong magic
    fake = tmp_path / "fake.wav"
    fake.write_bytes(b"not audio at all" * 4)
    with pytest.raises(CorruptStreamError):
        decode(fake)


def test_resample_identity_and_ratio():
    b = buf(tone(440, 1.0))
    same = resample(b, SR)
    assert same is b
    up = resample(b, 44100)
    assert up.sample_rate == 44100
    assert abs(len(up) - 2 * len(b)) <= 2
    assert abs(up.duration_seconds - b.duration_seconds) < 1e-3
    # a pure tone survives resampling
    t = np.arange(len(up)) / 44100
    ref = 0.5 * np.sin(2 * np.pi * 440 * t)
    core = slice(2000, len(up) - 2000)
    assert np.max(np.abs(up.samples[core] - ref[core])) < 1e-2


def test_resample_rejects_bad_rate():
    b = buf(tone(440, 0.1))
    with pytest.raises(InvalidRateError):
        resample(b, 0)


def test_slice_buffer_exact_and_tolerance():
    b = buf(noise(2.0, seed=1))
    piece = slice_buffer(b, 0.5, 1.5)
    assert len(piece) == SR
    assert np.array_equal(piece.samples, b.samples[SR // 2:SR // 2 + SR])
    # endpoint within half a sample of the duration is accepted
    full = slice_buffer(b, 0.0, b.duration_seconds + 0.4 / SR)
    assert len(full) == len(b)
    with pytest.raises(RangeOutOfBoundsError):
        slice_buffer(b, -0.1, 1.0)
    with pytest.raises(RangeOutOfBoundsError):
        slice_buffer(b, 0.0, b.duration_seconds + 0.1)
    with pytest.raises(RangeOutOfBoundsError):
        slice_buffer(b, 1.0, 1.0)


def test_pcm16_round_trip_bound():
    rng = np.random.default_rng(3)
    for trial in range(20):
        x = rng.uniform(-1, 1, size=500).astype(np.float32)
        blob = export_wav_bytes(buf(x, 8000))
        q = np.frombuffer(blob[44:], dtype="<i2")
        back = q / 32767.0
        assert np.max(np.abs(back - x)) <= 1.0 / 32768


def test_pcm16_clipping(tmp_path):
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0], dtype=np.float32)
    clipped = buf(np.clip(x, -1, 1), 8000)
    blob = export_wav_bytes(clipped)
    q = np.frombuffer(blob[44:], dtype="<i2")
    assert q[0] == -32767 and q[-1] == 32767


def test_write_wav_pcm16_helper(tmp_path):
    q = np.array([-32768, -1, 0, 1, 32767], dtype=np.int16)
    path = tmp_path / "q.wav"
    write_wav_pcm16(path, q, 8000)
    samples, rate = read_wav(path)
    assert rate == 8000
    assert np.array_equal(np.round(samples * 32767).astype(int)[1:],
                          np.asarray(q)[1:])
    blob = wav_pcm16_bytes(q, 8000)
    assert blob == path.read_bytes()
