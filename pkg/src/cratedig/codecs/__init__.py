"""Self-contained WAV and FLAC stream codecs (no external codec libraries)."""
