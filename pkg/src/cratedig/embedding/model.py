"""Backend that runs exported encoder models.

Supported formats, chosen by file extension:

- ``.pt`` / ``.ts`` / ``.torchscript``: TorchScript modules loaded with
  ``torch.jit.load``.
- ``.onnx``: ONNX graphs run with ``onnxruntime`` (imported lazily; a
  clear error is raised when the package is missing).

Expected model signatures:

- audio model: float32 ``[1, n_samples]`` -> float32 ``[1, dim]``
- text model: int64 ``input_ids [1, n_tokens]`` (plus ``attention_mask``
  when the model accepts two inputs) -> float32 ``[1, dim]``

Text tokenization uses a ``tokenizer.json`` file via the ``tokenizers``
package.  Output vectors are normalized by the caller.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from ..errors import BackendFailureError
from . import KIND_AUDIO, KIND_TEXT, EncoderBackend

_TORCH_SUFFIXES = {".pt", ".ts", ".torchscript"}


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()[:16]


class _TorchModule:
    def __init__(self, path: Path):
        try:
            import torch
        except ImportError as exc:
            raise BackendFailureError("torch is required to load TorchScript models") from exc
        self._torch = torch
        try:
            self._module = torch.jit.load(str(path), map_location="cpu")
        except Exception as exc:
            raise BackendFailureError(f"failed to load TorchScript model {path}: {exc}") from exc
        self._module.eval()

    def run(self, *arrays: np.ndarray) -> np.ndarray:
        torch = self._torch
        tensors = []
        for a in arrays:
            arr = np.ascontiguousarray(a)
            if not arr.flags.writeable:  # torch cannot wrap read-only memory
                arr = arr.copy()
            tensors.append(torch.from_numpy(arr))
        with torch.no_grad():
            try:
                out = self._module(*tensors)
            except Exception:
                if len(tensors) <= 1:
                    raise
                out = self._module(tensors[0])
        if isinstance(out, (tuple, list)):
            out = out[0]
        return out.detach().cpu().numpy()


class _OnnxSession:
    def __init__(self, path: Path):
        try:
            import onnxruntime
        except ImportError as exc:
            raise BackendFailureError(
                "onnxruntime is required to run .onnx models; install it or "
                "export the model to TorchScript"
            ) from exc
        try:
            self._session = onnxruntime.InferenceSession(
                str(path), providers=["CPUExecutionProvider"])
        except Exception as exc:
            raise BackendFailureError(f"failed to load ONNX model {path}: {exc}") from exc
        self._input_names = [i.name for i in self._session.get_inputs()]

    def run(self, *arrays: np.ndarray) -> np.ndarray:
        feeds = dict(zip(self._input_names, arrays))
        outputs = self._session.run(None, feeds)
        return np.asarray(outputs[0])


def _load_model(path: Path):
    suffix = path.suffix.lower()
    if suffix in _TORCH_SUFFIXES:
        return _TorchModule(path)
    if suffix == ".onnx":
        return _OnnxSession(path)
    raise BackendFailureError(
        f"unknown model format {suffix!r} for {path} "
        f"(expected one of {sorted(_TORCH_SUFFIXES)} or .onnx)")


class ModelBackend(EncoderBackend):
    """Runs exported audio/text encoder models on CPU."""

    name = "model"
    thread_safe = False

    def __init__(self, audio_model: Path | str | None = None,
                 text_model: Path | str | None = None,
                 tokenizer: Path | str | None = None,
                 dim: int = 512, sample_rate: int | None = 48000,
                 max_duration: float | None = 10.0):
        super().__init__()
        if audio_model is None and text_model is None:
            raise BackendFailureError("model backend needs at least one model file")
        self.dim = int(dim)
        self.sample_rate = int(sample_rate) if sample_rate is not None else None
        self.max_duration = max_duration

        caps = set()
        digests = []
        self._audio = None
        self._text = None
        self._tokenizer = None
        if audio_model is not None:
            path = Path(audio_model)
            if not path.is_file():
                raise BackendFailureError(f"audio model not found: {path}")
            self._audio = _load_model(path)
            digests.append(_file_digest(path))
            caps.add(KIND_AUDIO)
        if text_model is not None:
            path = Path(text_model)
            if not path.is_file():
                raise BackendFailureError(f"text model not found: {path}")
            self._text = _load_model(path)
            digests.append(_file_digest(path))
            caps.add(KIND_TEXT)
            if tokenizer is not None:
                self._tokenizer = self._load_tokenizer(Path(tokenizer))
        self.capabilities = frozenset(caps)
        self.version = hashlib.sha256("\x00".join(digests).encode()).hexdigest()[:16]

    @staticmethod
    def _load_tokenizer(path: Path):
        try:
            from tokenizers import Tokenizer
        except ImportError as exc:
            raise BackendFailureError(
                "the tokenizers package is required for text models; "
                "install the 'model' extra") from exc
        if not path.is_file():
            raise BackendFailureError(f"tokenizer file not found: {path}")
        try:
            return Tokenizer.from_file(str(path))
        except Exception as exc:
            raise BackendFailureError(f"failed to load tokenizer {path}: {exc}") from exc

    def _encode_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        arr = np.asarray(samples, dtype=np.float32).reshape(1, -1)
        return self._audio.run(arr)

    def _tokenize(self, prompt: str) -> tuple[np.ndarray, np.ndarray]:
        if self._tokenizer is None:
            raise BackendFailureError(
                "text model requires a tokenizer.json (pass tokenizer=...)")
        encoding = self._tokenizer.encode(prompt)
        ids = np.asarray([encoding.ids], dtype=np.int64)
        mask = np.asarray([encoding.attention_mask], dtype=np.int64)
        return ids, mask

    def _encode_text(self, prompt: str) -> np.ndarray:
        ids, mask = self._tokenize(prompt)
        return self._text.run(ids, mask)
