"""Objective evaluation: SNR, index-prediction quality and run reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import jitterbuffer
from .framecodec import FRAME_LEN

SNR_CAP_DB = 99.0
LN_256 = float(np.log(256.0))


def snr_db(reference: np.ndarray, test: np.ndarray) -> float:
    """10*log10 of reference energy over error energy, capped at 99 dB."""
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ValueError(f"length mismatch: {reference.shape} vs {test.shape}")
    ref_energy = float(np.sum(reference**2))
    if ref_energy == 0.0:
        raise ValueError("zero-energy reference")
    err_energy = float(np.sum((reference - test) ** 2))
    if err_energy == 0.0:
        return SNR_CAP_DB
    return min(10.0 * np.log10(ref_energy / err_energy), SNR_CAP_DB)


@dataclass
class PredictionMetrics:
    top1_accuracy: float | None
    mean_nll: float | None
    count: int


def prediction_metrics(
    predicted: np.ndarray,
    true_indices: np.ndarray,
    probs: np.ndarray | None = None,
) -> PredictionMetrics:
    """Top-1 accuracy and, when distributions are given, mean NLL of the truth."""
    predicted = np.asarray(predicted, dtype=np.int64)
    true_indices = np.asarray(true_indices, dtype=np.int64)
    if predicted.shape != true_indices.shape:
        raise ValueError("predicted and true index sequences differ in length")
    n = len(predicted)
    if n == 0:
        return PredictionMetrics(None, None, 0)
    acc = float(np.mean(predicted == true_indices))
    nll = None
    if probs is not None:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape[0] != n:
            raise ValueError("probs and index sequences differ in length")
        picked = probs[np.arange(n), true_indices]
        nll = float(np.mean(-np.log(np.maximum(picked, 1e-12))))
    return PredictionMetrics(acc, nll, n)


def concealed_region_snr(
    reference: np.ndarray,
    test: np.ndarray,
    kinds: list[str],
) -> float | None:
    """SNR restricted to non-received frames plus one trailing context frame.

    Returns None when nothing was concealed or the reference is silent
    there.
    """
    mask = np.array([k != jitterbuffer.RECEIVED for k in kinds], dtype=bool)
    if not mask.any():
        return None
    with_context = mask.copy()
    with_context[1:] |= mask[:-1]
    sample_mask = np.repeat(with_context, FRAME_LEN)
    ref = reference[: len(sample_mask)][sample_mask]
    tst = test[: len(sample_mask)][sample_mask]
    if float(np.sum(ref**2)) == 0.0:
        return None
    return snr_db(ref, tst)


@dataclass
class RunReport:
    condition: str
    config_fingerprint: str
    overall_snr_db: float
    concealed_region_snr_db: float | None
    top1_accuracy: float | None
    mean_nll: float | None
    predicted_frames: int
    outcome_counts: dict[str, int]
    fec: dict | None = None
    complexity: dict | None = None
    extra: dict | None = None

    def to_json(self) -> str:
        data = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(data, sort_keys=True, indent=2) + "\n"


def assemble_report(
    condition: str,
    config_fingerprint: str,
    reference: np.ndarray,
    decoded: np.ndarray,
    stats: jitterbuffer.BufferStats,
    kinds: list[str],
    prediction: PredictionMetrics | None = None,
    fec_offset: int = 0,
    complexity: dict | None = None,
    extra: dict | None = None,
) -> RunReport:
    """Deterministic per-condition summary; identical inputs give identical bytes."""
    counts = {
        "received": stats.received,
        "fec_recovered": stats.fec_recovered,
        "concealed": stats.concealed,
        "late_drops": stats.late_drops,
    }
    if counts["received"] + counts["fec_recovered"] + counts["concealed"] != len(kinds):
        raise ValueError("outcome counts do not partition the frame count")
    fec = None
    if fec_offset > 0:
        fec = {"offset_frames": fec_offset, "recovered_frames": stats.fec_recovered}
    pm = prediction or PredictionMetrics(None, None, 0)
    return RunReport(
        condition=condition,
        config_fingerprint=config_fingerprint,
        overall_snr_db=round(snr_db(reference, decoded), 6),
        concealed_region_snr_db=_round_opt(
            concealed_region_snr(reference, decoded, kinds)
        ),
        top1_accuracy=_round_opt(pm.top1_accuracy),
        mean_nll=_round_opt(pm.mean_nll),
        predicted_frames=pm.count,
        outcome_counts=counts,
        fec=fec,
        complexity=complexity,
        extra=extra,
    )


def _round_opt(value: float | None) -> float | None:
    return None if value is None else round(value, 6)
