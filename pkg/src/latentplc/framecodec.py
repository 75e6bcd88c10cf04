"""Deterministic frame codec: a truncated orthogonal cosine projection.

Stands in for a neural encoder/decoder so that everything downstream is
exactly reproducible. A 10 ms frame of 160 samples at 16 kHz maps to a
D-dimensional latent through D orthonormal cosine rows spread across the
band, with a per-row scale calibrated so corpus latents have unit
variance. Decoding is the transpose; frames are independent with no
crossfade.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
FRAME_LEN = 160  # 10 ms
FRAME_MS = 10.0

TRANSFORM_MAGIC = b"LTFX"
_T_HEADER = struct.Struct("<4sII")


def _cosine_rows(dim: int, frame_len: int) -> np.ndarray:
    """Orthonormal cosine rows at evenly strided frequencies.

    Row j is the DCT-II basis vector at frequency index j * frame_len/dim,
    so the D rows cover the band instead of clustering at DC.
    """
    if not 1 <= dim <= frame_len:
        raise ValueError(f"dim must be 1..{frame_len}")
    stride = frame_len // dim
    t = np.arange(frame_len, dtype=np.float64)
    rows = np.empty((dim, frame_len), dtype=np.float64)
    for j in range(dim):
        k = j * stride
        norm = np.sqrt(1.0 / frame_len) if k == 0 else np.sqrt(2.0 / frame_len)
        rows[j] = norm * np.cos(np.pi * (2.0 * t + 1.0) * k / (2.0 * frame_len))
    return rows


@dataclass
class AnalysisTransform:
    """Orthonormal analysis rows plus per-row latent scaling."""

    basis: np.ndarray  # (dim, FRAME_LEN), orthonormal rows
    scale: np.ndarray  # (dim,), positive

    @classmethod
    def create(cls, dim: int) -> "AnalysisTransform":
        return cls(basis=_cosine_rows(dim, FRAME_LEN), scale=np.ones(dim))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def calibrate(self, frames: np.ndarray) -> None:
        """Set per-row scale so the given corpus has unit-variance latents."""
        raw = frames @ self.basis.T
        std = raw.std(axis=0)
        self.scale = 1.0 / np.maximum(std, 1e-6)


def _check_frames(frames: np.ndarray) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] != FRAME_LEN:
        raise ValueError(f"frames must have {FRAME_LEN} samples, got {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise ValueError("frames contain non-finite samples")
    return frames


def encode_frame(frame: np.ndarray, t: AnalysisTransform) -> np.ndarray:
    frame = _check_frames(frame)
    return t.scale * (t.basis @ frame)


def decode_frame(latent: np.ndarray, t: AnalysisTransform) -> np.ndarray:
    latent = np.asarray(latent, dtype=np.float64)
    if not np.all(np.isfinite(latent)):
        raise ValueError("latent contains non-finite values")
    return t.basis.T @ (latent / t.scale)


def encode_frames(frames: np.ndarray, t: AnalysisTransform) -> np.ndarray:
    """Batch encode, (n, 160) -> (n, dim)."""
    frames = _check_frames(frames)
    return (frames @ t.basis.T) * t.scale


def decode_frames(latents: np.ndarray, t: AnalysisTransform) -> np.ndarray:
    """Batch decode, (n, dim) -> (n, 160)."""
    latents = np.asarray(latents, dtype=np.float64)
    return (latents / t.scale) @ t.basis


def frame_signal(samples: np.ndarray, pad_to_even: bool = False) -> np.ndarray:
    """Split a signal into 10 ms frames, zero-padding the tail.

    With pad_to_even the frame count is also padded to a multiple of two,
    matching the two-frames-per-packet stream layout.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    n_frames = max(1, -(-n // FRAME_LEN))
    if pad_to_even and n_frames % 2:
        n_frames += 1
    out = np.zeros(n_frames * FRAME_LEN, dtype=np.float64)
    out[:n] = samples
    return out.reshape(n_frames, FRAME_LEN)


def unframe(frames: np.ndarray) -> np.ndarray:
    return np.asarray(frames, dtype=np.float64).reshape(-1)


def save_transform(path, t: AnalysisTransform) -> None:
    with open(path, "wb") as f:
        f.write(_T_HEADER.pack(TRANSFORM_MAGIC, t.dim, FRAME_LEN))
        f.write(np.ascontiguousarray(t.scale, dtype="<f8").tobytes())


def load_transform(path) -> AnalysisTransform:
    with open(path, "rb") as f:
        header = f.read(_T_HEADER.size)
        if len(header) < _T_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, dim, frame_len = _T_HEADER.unpack(header)
        if magic != TRANSFORM_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if frame_len != FRAME_LEN:
            raise ValueError(f"{path}: unsupported frame length {frame_len}")
        raw = f.read(8 * dim)
        if len(raw) < 8 * dim:
            raise ValueError(f"{path}: truncated scale data")
        scale = np.frombuffer(raw, dtype="<f8").copy()
    t = AnalysisTransform.create(dim)
    t.scale = scale
    return t


def read_wav(path) -> np.ndarray:
    """Read mono 16 kHz 16-bit PCM into floats in [-1, 1]."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono, got {w.getnchannels()} channels")
        if w.getframerate() != SAMPLE_RATE:
            raise ValueError(f"{path}: expected {SAMPLE_RATE} Hz, got {w.getframerate()}")
        if w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM")
        raw = w.readframes(w.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path, samples: np.ndarray) -> None:
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(pcm.tobytes())
