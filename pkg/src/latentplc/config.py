"""Run configuration and its hash-stable fingerprint."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, fields


@dataclass
class RunConfig:
    seed: int = 0
    latent_dim: int = 16
    hidden: int = 256
    stages: int = 4
    fec_offset: int = 6
    playout_delay_ms: float = 100.0
    # synthetic corpus
    corpus_seconds: float = 120.0
    voiced_frac: float = 0.55
    unvoiced_frac: float = 0.25
    silence_frac: float = 0.20
    # quantizer training
    vq_epochs: int = 30
    distill_epochs: int = 30
    ema_decay: float = 0.99
    # predictor training
    plc_iterations: int = 20000
    batch_size: int = 128
    learning_rate: float = 1e-4
    # channel
    ge_preset: str = "burst120"
    trace_seed: int = 1
    trace_file: str | None = None

    def fingerprint(self) -> str:
        """SHA-256 over the canonical JSON of all semantic parameters.

        Output locations never enter the hash, so reruns into different
        directories stay comparable.
        """
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**data)


def save_config(path, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(asdict(config), f, sort_keys=True, indent=2)
        f.write("\n")
