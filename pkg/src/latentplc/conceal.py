"""Concealment control: history upkeep, burst limits and the zero-fill baseline.

The receiver keeps a seven-frame history of distilled code-vectors.
Received frames are re-quantized onto the distilled codebook before
entering the history; lost frames are filled by running the index
predictor autoregressively, up to 100 ms of burst after a voiced frame
or 60 ms after an unvoiced or silent one, then silence. Classes come
from an offline per-index map built by majority vote over a labeled
corpus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jitterbuffer, predictor, vq
from .kernels import nearest_rows

SILENCE = "silence"
VOICED = "voiced"
UNVOICED = "unvoiced"
CLASS_NAMES = (SILENCE, VOICED, UNVOICED)

SILENCE_RMS_THRESHOLD = 0.01
VOICED_ZCR_THRESHOLD = 0.15

BURST_LIMIT_FRAMES = {SILENCE: 6, VOICED: 10, UNVOICED: 6}

ACTION_PREDICTED = "predicted"
ACTION_SILENCE = "silence"


def classify_frame(samples: np.ndarray) -> str:
    """Coarse frame class from energy and zero-crossing rate."""
    samples = np.asarray(samples, dtype=np.float64)
    rms = float(np.sqrt(np.mean(samples**2)))
    if rms < SILENCE_RMS_THRESHOLD:
        return SILENCE
    signs = np.signbit(samples)
    zcr = float(np.mean(signs[1:] != signs[:-1]))
    return VOICED if zcr < VOICED_ZCR_THRESHOLD else UNVOICED


def classify_frames(frames: np.ndarray) -> list[str]:
    return [classify_frame(f) for f in frames]


@dataclass
class IndexClassMap:
    """Label for every distilled index, 0..255 total."""

    labels: np.ndarray  # (256,) uint8 into CLASS_NAMES

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.shape != (vq.ENTRIES,):
            raise ValueError(f"class map must label all {vq.ENTRIES} indices")
        if self.labels.max(initial=0) >= len(CLASS_NAMES):
            raise ValueError("unknown class code in map")

    def label(self, index: int) -> str:
        return CLASS_NAMES[self.labels[index]]

    def to_text(self) -> str:
        return "\n".join(
            f"{i},{CLASS_NAMES[c]}" for i, c in enumerate(self.labels)
        ) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "IndexClassMap":
        labels = np.zeros(vq.ENTRIES, dtype=np.uint8)
        seen = np.zeros(vq.ENTRIES, dtype=bool)
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            idx_s, _, name = line.partition(",")
            try:
                idx = int(idx_s)
                code = CLASS_NAMES.index(name)
            except ValueError:
                raise ValueError(f"class map line {lineno}: bad entry {line!r}") from None
            if not 0 <= idx < vq.ENTRIES:
                raise ValueError(f"class map line {lineno}: index {idx} out of range")
            labels[idx] = code
            seen[idx] = True
        if not seen.all():
            missing = int(np.flatnonzero(~seen)[0])
            raise ValueError(f"class map incomplete: index {missing} unlabeled")
        return cls(labels)


def silence_codevector(distilled: vq.DistilledCodebook) -> tuple[int, np.ndarray]:
    """The distilled entry nearest the zero latent."""
    idx = int(nearest_rows(np.zeros((1, distilled.dim)), distilled.vectors)[0])
    return idx, distilled.vectors[idx].copy()


@dataclass
class ConcealState:
    """Per-stream receiver state feeding the predictor."""

    history: np.ndarray  # (7, D), oldest to newest
    silence_index: int
    silence_vector: np.ndarray
    burst_len: int = 0
    last_class: str = SILENCE

    @classmethod
    def fresh(cls, distilled: vq.DistilledCodebook) -> "ConcealState":
        idx, vec = silence_codevector(distilled)
        return cls(
            history=np.tile(vec, (predictor.WINDOW, 1)),
            silence_index=idx,
            silence_vector=vec,
        )

    def push(self, vector: np.ndarray) -> None:
        self.history = np.roll(self.history, -1, axis=0)
        self.history[-1] = vector


def requantize_received(
    state: ConcealState,
    stage_indices,
    rvq: vq.ResidualVQ,
    distilled: vq.DistilledCodebook,
) -> tuple[int, np.ndarray]:
    """Map a received frame onto the distilled codebook and push it.

    The target is the sum of the frame's first two stage code-vectors,
    matching the distillation training distribution.
    """
    target = vq.two_stage_sum(stage_indices, rvq)
    idx = int(nearest_rows(target[np.newaxis, :], distilled.vectors)[0])
    vec = distilled.vectors[idx].copy()
    state.push(vec)
    state.burst_len = 0
    return idx, vec


def apply_fec(
    state: ConcealState, distilled_index: int, distilled: vq.DistilledCodebook
) -> np.ndarray:
    """Consume a recovered redundant index: push its code-vector, end the burst."""
    if not 0 <= distilled_index < vq.ENTRIES:
        raise ValueError(f"distilled index {distilled_index} out of range")
    vec = distilled.vectors[distilled_index].copy()
    state.push(vec)
    state.burst_len = 0
    return vec


def conceal_frame(
    state: ConcealState,
    model: predictor.PlcModel,
    distilled: vq.DistilledCodebook,
    class_map: IndexClassMap,
) -> tuple[int, np.ndarray, str, np.ndarray | None]:
    """Fill one lost frame.

    Within the burst limit of the last received frame's class (10 frames
    after voiced, 6 after unvoiced or silence) the predictor picks the
    next index autoregressively; beyond it the output stays silent until
    the burst ends. Returns (index, code-vector, action, probs), probs
    being the predictor output when it ran.
    """
    if model is None or class_map is None:
        raise ValueError("concealment needs a trained model and a class map")
    limit = BURST_LIMIT_FRAMES[state.last_class]
    if state.burst_len < limit:
        probs = predictor.forward(model, state.history)
        idx = int(np.argmax(probs))
        vec = distilled.vectors[idx].copy()
        action = ACTION_PREDICTED
    else:
        probs = None
        idx = state.silence_index
        vec = state.silence_vector.copy()
        action = ACTION_SILENCE
    state.push(vec)
    state.burst_len += 1
    return idx, vec, action, probs


def build_class_map(
    distilled: vq.DistilledCodebook,
    rvq: vq.ResidualVQ,
    latents: np.ndarray,
    labels: list[str],
) -> IndexClassMap:
    """Label each distilled index by majority vote of the frames it attracts.

    Frames are quantized through the two-stage sum onto the distilled
    codebook; indices never observed default to silence. The resulting
    codes are also attached to the codebook.
    """
    latents = np.asarray(latents, dtype=np.float64)
    if latents.shape[0] == 0:
        raise ValueError("empty corpus")
    if latents.shape[0] != len(labels):
        raise ValueError("latents and labels length mismatch")
    targets = vq.distillation_targets(rvq, latents)
    idx = nearest_rows(targets, distilled.vectors)
    votes = np.zeros((vq.ENTRIES, len(CLASS_NAMES)), dtype=np.int64)
    for i, lab in zip(idx, labels):
        votes[i, CLASS_NAMES.index(lab)] += 1
    # argmax breaks ties toward the earlier class name, silence first
    codes = np.argmax(votes, axis=1).astype(np.uint8)
    codes[votes.sum(axis=1) == 0] = CLASS_NAMES.index(SILENCE)
    class_map = IndexClassMap(codes)
    distilled.class_labels = class_map.labels.copy()
    return class_map


@dataclass
class ConcealRecord:
    frame_n: int
    action: str  # received / fec_recovered / predicted / silence
    index: int
    burst_len: int
    probs: np.ndarray | None = None


def conceal_stream(
    outcomes: list[jitterbuffer.FrameOutcome],
    model: predictor.PlcModel,
    rvq: vq.ResidualVQ,
    distilled: vq.DistilledCodebook,
    class_map: IndexClassMap,
) -> tuple[np.ndarray, list[ConcealRecord]]:
    """Run the full receiver over buffer outcomes, producing decoder latents.

    Received frames decode from all primary stages; recovered and
    concealed frames decode from distilled code-vectors. All paths feed
    the same decoder, so no post-processing is applied anywhere.
    """
    state = ConcealState.fresh(distilled)
    latents = np.zeros((len(outcomes), rvq.dim), dtype=np.float64)
    records = []
    for n, oc in enumerate(outcomes):
        if oc.kind == jitterbuffer.RECEIVED:
            latents[n] = vq.rvq_decode(oc.stage_indices, rvq)
            idx, _ = requantize_received(state, oc.stage_indices, rvq, distilled)
            state.last_class = class_map.label(idx)
            records.append(ConcealRecord(n, jitterbuffer.RECEIVED, idx, 0))
        elif oc.kind == jitterbuffer.FEC_RECOVERED:
            vec = apply_fec(state, oc.distilled_index, distilled)
            state.last_class = class_map.label(oc.distilled_index)
            latents[n] = vec
            records.append(
                ConcealRecord(n, jitterbuffer.FEC_RECOVERED, oc.distilled_index, 0)
            )
        elif oc.kind == jitterbuffer.CONCEALED:
            idx, vec, action, probs = conceal_frame(state, model, distilled, class_map)
            latents[n] = vec
            records.append(ConcealRecord(n, action, idx, state.burst_len, probs))
        else:
            raise ValueError(f"unexpected outcome kind {oc.kind!r}")
    return latents, records


def zero_fill_baseline(
    outcomes: list[jitterbuffer.FrameOutcome], rvq: vq.ResidualVQ
) -> np.ndarray:
    """No-concealment reference: lost frames carry the silent frame's encoding."""
    zero_indices = vq.rvq_encode(np.zeros(rvq.dim), rvq)
    zero_latent = vq.rvq_decode(zero_indices, rvq)
    latents = np.zeros((len(outcomes), rvq.dim), dtype=np.float64)
    for n, oc in enumerate(outcomes):
        if oc.kind == jitterbuffer.RECEIVED:
            latents[n] = vq.rvq_decode(oc.stage_indices, rvq)
        else:
            latents[n] = zero_latent
    return latents


def records_to_csv(records: list[ConcealRecord]) -> str:
    """Concealment event log: frame_n, action, index, burst_len."""
    lines = ["frame_n,action,index,burst_len"]
    for r in records:
        lines.append(f"{r.frame_n},{r.action},{r.index},{r.burst_len}")
    return "\n".join(lines) + "\n"
