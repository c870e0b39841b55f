"""Shared test helpers: synthetic signal generators and fixture libraries."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from cratedig.audio import AudioBuffer, export_wav

SR = 22050


def tone(hz: float, seconds: float, sr: int = SR, amp: float = 0.5,
         phase: float = 0.0) -> np.ndarray:
    t = np.arange(int(round(seconds * sr))) / sr
    return (amp * np.sin(2 * np.pi * hz * t + phase)).astype(np.float32)


def noise(seconds: float, sr: int = SR, seed: int = 0, amp: float = 0.3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (amp * rng.standard_normal(int(round(seconds * sr)))).astype(np.float32)


def buf(samples: np.ndarray, sr: int = SR) -> AudioBuffer:
    return AudioBuffer(samples=np.asarray(samples, dtype=np.float32),
                       sample_rate=sr, source_path=None)


def write_wav(path: Path, samples: np.ndarray, sr: int = SR) -> Path:
    export_wav(buf(samples, sr), path)
    return path


def tone_blocks(freqs, block_seconds: float, sr: int = SR, amp: float = 0.5) -> np.ndarray:
    """Concatenated constant-frequency blocks; timbre changes at the joins."""
    return np.concatenate([tone(f, block_seconds, sr, amp) for f in freqs])


@pytest.fixture
def library(tmp_path: Path) -> Path:
    root = tmp_path / "library"
    root.mkdir()
    return root


# One line per acceptance criterion, printed as a summary section at the end
# of the run (see tests/test_acceptance.py).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
