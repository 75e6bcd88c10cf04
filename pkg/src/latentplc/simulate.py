"""End-to-end simulation: encode, packetize, channel, buffer, conceal, decode.

One simulation run compares three receiver conditions on the same
delay-loss trace: zero-fill (lost frames replaced by the silent frame's
encoding), concealment only (k = 0, predictor fills losses), and
concealment plus in-band FEC (redundancy at offset k). All conditions
share the sender stream and the error-free decode as SNR reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bitstream, channel, conceal, framecodec, jitterbuffer, metrics, predictor, vq

CONDITIONS = ("zero_fill", "plc", "plc_fec")


@dataclass
class SenderStream:
    """Everything the sender derives from a signal."""

    frames: np.ndarray  # (n, 160)
    latents: np.ndarray  # (n, D)
    indices: list[bitstream.FrameIndices]
    reference: np.ndarray  # error-free decoded samples


def encode_stream(
    signal: np.ndarray,
    transform: framecodec.AnalysisTransform,
    rvq: vq.ResidualVQ,
    distilled: vq.DistilledCodebook,
) -> SenderStream:
    """Frame, encode and quantize a signal into the per-frame index stream.

    Each frame carries its four stage indices plus the distilled index of
    its two-stage sum, the unit of redundancy and concealment truth.
    """
    frames = framecodec.frame_signal(signal, pad_to_even=True)
    latents = framecodec.encode_frames(frames, transform)
    stage_idx = vq.rvq_encode_batch(latents, rvq)
    sums = rvq.stages[0].vectors[stage_idx[:, 0]] + rvq.stages[1].vectors[stage_idx[:, 1]]
    dist_idx = vq.distilled_quantize(sums, distilled)
    indices = [
        bitstream.FrameIndices(tuple(int(v) for v in row), int(d))
        for row, d in zip(stage_idx, dist_idx)
    ]
    decoded_clean = framecodec.decode_frames(
        vq.rvq_decode_batch(stage_idx, rvq), transform
    )
    return SenderStream(
        frames=frames,
        latents=latents,
        indices=indices,
        reference=framecodec.unframe(decoded_clean),
    )


@dataclass
class ConditionResult:
    condition: str
    decoded: np.ndarray
    outcomes: list[jitterbuffer.FrameOutcome]
    stats: jitterbuffer.BufferStats
    kinds: list[str]
    records: list[conceal.ConcealRecord] | None
    prediction: metrics.PredictionMetrics | None


def _prediction_metrics(
    records: list[conceal.ConcealRecord], stream: SenderStream
) -> metrics.PredictionMetrics:
    predicted, truth, probs = [], [], []
    for r in records:
        if r.action == conceal.ACTION_PREDICTED:
            predicted.append(r.index)
            truth.append(stream.indices[r.frame_n].distilled_index)
            probs.append(r.probs)
    if not predicted:
        return metrics.PredictionMetrics(None, None, 0)
    return metrics.prediction_metrics(
        np.array(predicted), np.array(truth), np.array(probs)
    )


def run_condition(
    condition: str,
    stream: SenderStream,
    events: list[channel.TraceEvent],
    transform: framecodec.AnalysisTransform,
    rvq: vq.ResidualVQ,
    distilled: vq.DistilledCodebook,
    model: predictor.PlcModel | None,
    class_map: conceal.IndexClassMap | None,
    fec_offset: int,
    playout_delay_ms: float,
) -> ConditionResult:
    """Run one receiver condition over the trace."""
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    k = fec_offset if condition == "plc_fec" else 0
    packets = bitstream.attach_redundancy(stream.indices, k)
    outcomes, stats = jitterbuffer.run_buffer(packets, events, playout_delay_ms)

    if condition == "zero_fill":
        latents = conceal.zero_fill_baseline(outcomes, rvq)
        records = None
        prediction = None
        kinds = [
            jitterbuffer.RECEIVED
            if oc.kind == jitterbuffer.RECEIVED
            else jitterbuffer.ZERO_FILLED
            for oc in outcomes
        ]
    else:
        latents, records = conceal.conceal_stream(
            outcomes, model, rvq, distilled, class_map
        )
        prediction = _prediction_metrics(records, stream)
        kinds = [oc.kind for oc in outcomes]

    decoded = framecodec.unframe(framecodec.decode_frames(latents, transform))
    return ConditionResult(
        condition=condition,
        decoded=decoded,
        outcomes=outcomes,
        stats=stats,
        kinds=kinds,
        records=records,
        prediction=prediction,
    )


def run_all_conditions(
    stream: SenderStream,
    events: list[channel.TraceEvent],
    transform: framecodec.AnalysisTransform,
    rvq: vq.ResidualVQ,
    distilled: vq.DistilledCodebook,
    model: predictor.PlcModel,
    class_map: conceal.IndexClassMap,
    fec_offset: int = 6,
    playout_delay_ms: float = 100.0,
) -> dict[str, ConditionResult]:
    return {
        cond: run_condition(
            cond, stream, events, transform, rvq, distilled,
            model, class_map, fec_offset, playout_delay_ms,
        )
        for cond in CONDITIONS
    }
