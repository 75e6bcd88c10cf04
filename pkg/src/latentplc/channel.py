"""Delay-loss traces: parsing, serialization and bursty synthetic generation.

Two text formats are accepted, one event per line:

    loss-only    "seq,flag"        flag 1 = lost, 0 = arrived on time
    delay-loss   "seq,arrival_ms"  arrival_ms = -1 marks a loss

Loss-only events arrive exactly at their 20 ms send tick. Synthetic
traces come from a two-state Markov (Gilbert-Elliott) channel: packets
in the bad state are lost with a configurable probability and arrivals
are delayed by a base plus folded-Gaussian jitter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PACKET_MS = 20.0


class TraceFormatError(ValueError):
    """Malformed trace text; message includes the line number."""


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    lost: bool
    arrival_ms: float | None = None

    @property
    def send_ms(self) -> float:
        return PACKET_MS * self.seq

    def __post_init__(self):
        if self.lost != (self.arrival_ms is None):
            raise ValueError("arrival_ms must be present exactly when not lost")
        if self.arrival_ms is not None and self.arrival_ms < self.send_ms:
            raise ValueError(
                f"packet {self.seq} arrives at {self.arrival_ms} ms before its "
                f"send time {self.send_ms} ms"
            )


@dataclass(frozen=True)
class GilbertElliottParams:
    p_good_to_bad: float
    p_bad_to_good: float
    loss_in_bad: float = 1.0
    jitter_std_ms: float = 0.0
    base_delay_ms: float = 0.0

    def __post_init__(self):
        for name in ("p_good_to_bad", "p_bad_to_good", "loss_in_bad"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        if self.jitter_std_ms < 0 or self.base_delay_ms < 0:
            raise ValueError("delays must be non-negative")

    def stationary_loss_rate(self) -> float:
        """Analytic long-run loss fraction of the two-state chain."""
        denom = self.p_good_to_bad + self.p_bad_to_good
        if denom == 0.0:
            return 0.0
        return self.loss_in_bad * self.p_good_to_bad / denom


def _preset(burst_ms: float, loss_rate: float, loss_in_bad: float = 0.9) -> GilbertElliottParams:
    # Mean bad-state sojourn of burst_ms at one packet per 20 ms.
    p_bg = PACKET_MS / burst_ms
    pi_bad = loss_rate / loss_in_bad
    p_gb = p_bg * pi_bad / (1.0 - pi_bad)
    return GilbertElliottParams(
        p_good_to_bad=p_gb,
        p_bad_to_good=p_bg,
        loss_in_bad=loss_in_bad,
        jitter_std_ms=8.0,
        base_delay_ms=10.0,
    )


# Named profiles: burst-length sweeps at 10% long-run loss, plus two
# call-log-style profiles with short bursts at about 8% and 10%.
PRESETS = {
    "burst120": _preset(120.0, 0.10),
    "burst320": _preset(320.0, 0.10),
    "burst1000": _preset(1000.0, 0.10),
    "profile8": _preset(40.0, 0.08),
    "profile10": _preset(40.0, 0.10),
}


def parse_trace(text: str) -> list[TraceEvent]:
    """Parse either trace format, auto-detected by the second column.

    If every second column is the literal 0 or 1 the file is read as
    loss-only, otherwise as delay-loss.
    """
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceFormatError(f"line {lineno}: expected 'seq,value', got {line!r}")
        try:
            seq = int(parts[0])
            value = parts[1].strip()
        except ValueError:
            raise TraceFormatError(f"line {lineno}: bad sequence number {parts[0]!r}") from None
        if seq < 0:
            raise TraceFormatError(f"line {lineno}: negative seq {seq}")
        rows.append((lineno, seq, value))

    loss_only = all(value in ("0", "1") for _, _, value in rows)
    events = []
    prev_seq = -1
    for lineno, seq, value in rows:
        if seq <= prev_seq:
            raise TraceFormatError(f"line {lineno}: seq {seq} not increasing")
        prev_seq = seq
        if loss_only:
            lost = value == "1"
            arrival = None if lost else PACKET_MS * seq
        else:
            try:
                arrival = float(value)
            except ValueError:
                raise TraceFormatError(f"line {lineno}: bad arrival time {value!r}") from None
            lost = arrival == -1.0
            if lost:
                arrival = None
            elif arrival < PACKET_MS * seq:
                raise TraceFormatError(
                    f"line {lineno}: arrival {arrival} ms before send time "
                    f"{PACKET_MS * seq} ms"
                )
        events.append(TraceEvent(seq=seq, lost=lost, arrival_ms=arrival))
    return events


def serialize_trace(events: list[TraceEvent], fmt: str = "delay") -> str:
    """Write events back to text; fmt is 'loss' or 'delay'."""
    lines = []
    for e in events:
        if fmt == "loss":
            lines.append(f"{e.seq},{1 if e.lost else 0}")
        elif fmt == "delay":
            lines.append(f"{e.seq},-1" if e.lost else f"{e.seq},{e.arrival_ms:g}")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    return "\n".join(lines) + "\n"


def generate_trace(
    params: GilbertElliottParams, n_packets: int, seed: int = 0
) -> list[TraceEvent]:
    """Simulate the two-state channel for n_packets, deterministic per seed."""
    if n_packets < 1:
        raise ValueError("n_packets must be >= 1")
    rng = np.random.default_rng(seed)
    events = []
    bad = False
    for seq in range(n_packets):
        lost = bad and rng.random() < params.loss_in_bad
        if lost:
            events.append(TraceEvent(seq=seq, lost=True))
        else:
            delay = params.base_delay_ms + abs(rng.normal(0.0, params.jitter_std_ms))
            events.append(TraceEvent(seq=seq, lost=False, arrival_ms=PACKET_MS * seq + delay))
        if bad:
            if rng.random() < params.p_bad_to_good:
                bad = False
        else:
            if rng.random() < params.p_good_to_bad:
                bad = True
    return events
