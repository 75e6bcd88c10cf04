"""Synthetic speech-like corpus: voiced harmonics, shaped noise, silences.

Signals are built from whole 10 ms frames so every frame carries a
single class label. Voiced segments are harmonic complexes with slowly
drifting pitch and amplitude, unvoiced segments are band-limited noise,
silences are exact zeros. Everything is deterministic per seed.
"""

from __future__ import annotations

import numpy as np

from .conceal import SILENCE, UNVOICED, VOICED
from .framecodec import FRAME_LEN, SAMPLE_RATE


def _voiced_segment(n_samples: int, rng: np.random.Generator) -> np.ndarray:
    # Pitch sits near a multiple of the 100 Hz frame rate with a slow
    # drift, so the frame-to-frame phase advance stays small and latent
    # trajectories evolve slowly, the way codec features do.
    f0 = float(rng.choice([100.0, 200.0]))
    drift = rng.uniform(-1.5, 1.5)
    t = np.arange(n_samples) / SAMPLE_RATE
    inst_f0 = f0 + drift * np.sin(2.0 * np.pi * rng.uniform(0.3, 1.0) * t)
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    n_harmonics = max(2, int(2000.0 / f0))
    base_phase = 2.0 * np.pi * np.cumsum(inst_f0) / SAMPLE_RATE
    seg = np.zeros(n_samples)
    for h in range(1, n_harmonics + 1):
        seg += np.sin(h * (base_phase + phase0)) / h
    envelope = 0.75 + 0.25 * np.sin(
        2.0 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0.0, 2.0 * np.pi)
    )
    seg *= envelope
    peak = np.max(np.abs(seg))
    return seg * (rng.uniform(0.25, 0.5) / peak)


def _unvoiced_segment(n_samples: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(0.0, 1.0, n_samples)
    # keep only the 2-7 kHz band so the class is separable in latent space
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / SAMPLE_RATE)
    spectrum[(freqs < 2000.0) | (freqs > 7000.0)] = 0.0
    seg = np.fft.irfft(spectrum, n=n_samples)
    rms = np.sqrt(np.mean(seg**2))
    return seg * (rng.uniform(0.03, 0.07) / rms)


def generate_corpus(
    seconds: float,
    seed: int = 0,
    voiced_frac: float = 0.55,
    unvoiced_frac: float = 0.25,
    silence_frac: float = 0.20,
) -> tuple[np.ndarray, list[str]]:
    """Build a labeled signal of whole frames, even in count.

    Returns (samples, per-frame labels). Segment classes are drawn from
    the requested proportions; actual frame proportions land within a
    couple of percent for corpora of a few tens of seconds.
    """
    total = voiced_frac + unvoiced_frac + silence_frac
    if not np.isclose(total, 1.0, atol=1e-6):
        raise ValueError(f"class fractions sum to {total}, expected 1")
    n_frames = int(round(seconds * 1000.0 / 10.0))
    n_frames += n_frames % 2
    if n_frames < 2:
        raise ValueError("corpus too short")

    rng = np.random.default_rng(seed)
    classes = (VOICED, UNVOICED, SILENCE)
    # segment lengths in frames, by class; voiced runs longer like speech
    length_range = {VOICED: (12, 40), UNVOICED: (6, 20), SILENCE: (4, 16)}
    # frame budget per class keeps realized proportions on target
    budget = {
        VOICED: voiced_frac * n_frames,
        UNVOICED: unvoiced_frac * n_frames,
        SILENCE: silence_frac * n_frames,
    }

    pieces = []
    labels: list[str] = []
    while len(labels) < n_frames:
        weights = np.array([max(budget[c], 0.0) for c in classes])
        if weights.sum() == 0.0:
            weights = np.ones(3)
        cls = classes[rng.choice(3, p=weights / weights.sum())]
        lo, hi = length_range[cls]
        seg_frames = int(rng.integers(lo, hi + 1))
        seg_frames = min(seg_frames, n_frames - len(labels), max(int(budget[cls]), lo))
        n = seg_frames * FRAME_LEN
        if cls == VOICED:
            pieces.append(_voiced_segment(n, rng))
        elif cls == UNVOICED:
            pieces.append(_unvoiced_segment(n, rng))
        else:
            pieces.append(np.zeros(n))
        labels.extend([cls] * seg_frames)
        budget[cls] -= seg_frames
    samples = np.concatenate(pieces)
    return samples, labels


def labels_to_csv(labels: list[str]) -> str:
    return "\n".join(f"{i},{lab}" for i, lab in enumerate(labels)) + "\n"


def labels_from_csv(text: str) -> list[str]:
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        idx_s, _, name = line.partition(",")
        if name not in (SILENCE, VOICED, UNVOICED):
            raise ValueError(f"labels line {lineno}: unknown class {name!r}")
        if int(idx_s) != len(labels):
            raise ValueError(f"labels line {lineno}: frames out of order")
        labels.append(name)
    return labels
