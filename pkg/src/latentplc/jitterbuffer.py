"""Fixed-playout-delay jitter buffer with in-band FEC lookup.

Frame n plays out at its 10 ms send tick plus the playout delay. A
buffered packet serves a frame only if it arrived at or before that
frame's playout time; arrival exactly at playout counts as timely. When
the primary packet misses, a buffered future packet carrying the frame's
redundant distilled index is used instead; otherwise the frame is handed
to concealment. Time comparisons run on a 0.1 ms integer grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .bitstream import Packet
from .channel import TraceEvent

FRAME_MS = 10.0
_TENTHS = 10  # integer time grid units per millisecond

RECEIVED = "received"
FEC_RECOVERED = "fec_recovered"
CONCEALED = "concealed"
ZERO_FILLED = "zero_filled"


def _to_grid(ms: float) -> int:
    return int(round(ms * _TENTHS))


@dataclass(frozen=True)
class FrameOutcome:
    frame_n: int
    kind: str
    stage_indices: tuple[int, int, int, int] | None = None
    distilled_index: int | None = None
    source_seq: int | None = None


@dataclass
class BufferStats:
    received: int = 0
    fec_recovered: int = 0
    concealed: int = 0
    late_drops: int = 0

    @property
    def total_frames(self) -> int:
        return self.received + self.fec_recovered + self.concealed


def check_fec_headroom(playout_delay_ms: float, k: int) -> float:
    """Delay budget left for the redundancy packet; warns when there is none.

    The packet carrying frame n's redundancy is sent 10*k ms after frame
    n, so FEC can only engage when the playout delay exceeds that plus
    the network delay.
    """
    slack = playout_delay_ms - FRAME_MS * k
    if k > 0 and slack <= 0:
        warnings.warn(
            f"playout delay {playout_delay_ms} ms <= 10*k = {FRAME_MS * k} ms: "
            "redundancy always arrives after playout",
            stacklevel=2,
        )
    return slack


class JitterBuffer:
    """Time-ordered store of arrived packets for one stream."""

    def __init__(self, playout_delay_ms: float = 100.0):
        if playout_delay_ms < 0:
            raise ValueError("playout delay must be non-negative")
        self.playout_delay_ms = playout_delay_ms
        self._delay_grid = _to_grid(playout_delay_ms)
        self._packets: dict[int, tuple[Packet, int]] = {}
        self._redundancy: dict[int, int] = {}  # frame -> carrier seq
        self._next_frame = 0
        self.stats = BufferStats()

    def _playout_grid(self, frame_n: int) -> int:
        return frame_n * int(FRAME_MS * _TENTHS) + self._delay_grid

    def push_packet(self, packet: Packet, arrival_ms: float) -> bool:
        """Admit an arrived packet; returns False for a late drop.

        A packet whose frames have all played out is useless (its
        redundancy covers even older frames) and only bumps the
        late-drop count. Duplicates replace the stored copy.
        """
        if 2 * packet.seq + 1 < self._next_frame:
            self.stats.late_drops += 1
            return False
        self._packets[packet.seq] = (packet, _to_grid(arrival_ms))
        covered = packet.redundant_frames()
        if covered is not None:
            for frame in covered:
                self._redundancy[frame] = packet.seq
        return True

    def pull_frame(self, frame_n: int) -> FrameOutcome:
        """Resolve frame n at its playout time; frames must be pulled in order."""
        if frame_n != self._next_frame:
            raise ValueError(
                f"frames must be pulled in order: expected {self._next_frame}, got {frame_n}"
            )
        self._next_frame += 1
        playout = self._playout_grid(frame_n)

        entry = self._packets.get(frame_n // 2)
        if entry is not None:
            packet, arrival = entry
            if arrival <= playout:
                self.stats.received += 1
                return FrameOutcome(
                    frame_n,
                    RECEIVED,
                    stage_indices=packet.primary[frame_n % 2],
                    source_seq=packet.seq,
                )

        carrier_seq = self._redundancy.get(frame_n)
        if carrier_seq is not None:
            entry = self._packets.get(carrier_seq)
            if entry is not None:
                packet, arrival = entry
                if arrival <= playout:
                    slot = frame_n - (packet.first_frame - packet.fec_offset_k)
                    self.stats.fec_recovered += 1
                    return FrameOutcome(
                        frame_n,
                        FEC_RECOVERED,
                        distilled_index=packet.redundant[slot],
                        source_seq=packet.seq,
                    )

        self.stats.concealed += 1
        return FrameOutcome(frame_n, CONCEALED)

    def discard_played(self) -> None:
        """Drop buffered packets whose frames and redundancy are all in the past."""
        dead = [
            seq
            for seq, (p, _) in self._packets.items()
            if 2 * seq + 1 < self._next_frame
        ]
        for seq in dead:
            covered = self._packets[seq][0].redundant_frames()
            del self._packets[seq]
            if covered is not None:
                for frame in covered:
                    if self._redundancy.get(frame) == seq:
                        del self._redundancy[frame]


def run_buffer(
    packets: list[Packet],
    events: list[TraceEvent],
    playout_delay_ms: float = 100.0,
) -> tuple[list[FrameOutcome], BufferStats]:
    """Feed a packet stream through the buffer along a delay-loss trace.

    Packets are admitted in arrival order as the playout clock advances;
    packets without a trace event are treated as lost.
    """
    by_seq = {e.seq: e for e in events}
    arrivals = sorted(
        (e.arrival_ms, p.seq, p)
        for p in packets
        if (e := by_seq.get(p.seq)) is not None and not e.lost
    )
    buf = JitterBuffer(playout_delay_ms)
    outcomes = []
    ai = 0
    n_frames = 2 * len(packets)
    for n in range(n_frames):
        playout_ms = n * FRAME_MS + playout_delay_ms
        while ai < len(arrivals) and _to_grid(arrivals[ai][0]) <= _to_grid(playout_ms):
            buf.push_packet(arrivals[ai][2], arrivals[ai][0])
            ai += 1
        outcomes.append(buf.pull_frame(n))
        if n % 50 == 0:
            buf.discard_played()
    # Anything still unadmitted arrived after the last playout: late drops.
    while ai < len(arrivals):
        buf.push_packet(arrivals[ai][2], arrivals[ai][0])
        ai += 1
    return outcomes, buf.stats


def outcomes_to_csv(outcomes: list[FrameOutcome]) -> str:
    """Per-frame outcome log: frame_n, kind, source_seq."""
    lines = ["frame_n,kind,source_seq"]
    for oc in outcomes:
        src = "" if oc.source_seq is None else str(oc.source_seq)
        lines.append(f"{oc.frame_n},{oc.kind},{src}")
    return "\n".join(lines) + "\n"
