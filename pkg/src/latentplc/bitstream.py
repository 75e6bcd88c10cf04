"""Bit-exact packet packing for two-frame payloads with piggy-backed redundancy.

Wire layout, little-endian:

    header    4 bytes   magic u8 (0xC5), seq u16, k u8 (0 = no redundancy)
    primary   8 bytes   2 frames x 4 stage indices, one byte each
    redundant 2 bytes   distilled indices of frames 2*seq-k and 2*seq-k+1,
                        present only when k > 0

A packet is 12 bytes without redundancy, 14 with. At one packet per
20 ms this is 3.2 kbps of primary indices plus 0.8 kbps of redundancy.
"""

from __future__ import annotations

from dataclasses import dataclass
import struct

MAGIC = 0xC5
HEADER_LEN = 4
PACKET_LEN = 12
PACKET_LEN_FEC = 14
PACKET_MS = 20.0
FRAMES_PER_PACKET = 2
STAGES_PER_FRAME = 4
MAX_SEQ = 0xFFFF

PRIMARY_BITS_PER_PACKET = FRAMES_PER_PACKET * STAGES_PER_FRAME * 8  # 64
REDUNDANT_BITS_PER_PACKET = FRAMES_PER_PACKET * 8  # 16
PRIMARY_KBPS = PRIMARY_BITS_PER_PACKET / PACKET_MS  # 3.2
REDUNDANT_KBPS = REDUNDANT_BITS_PER_PACKET / PACKET_MS  # 0.8

_HEADER = struct.Struct("<BHB")


class PacketFormatError(ValueError):
    """Malformed packet bytes; carries the offending byte offset."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class FrameIndices:
    """Sender-side record for one frame: four stage indices plus the
    distilled index used for redundancy and as the concealment target."""

    stage_indices: tuple[int, int, int, int]
    distilled_index: int

    def __post_init__(self):
        for i in self.stage_indices:
            if not 0 <= i <= 255:
                raise ValueError(f"stage index {i} out of range")
        if not 0 <= self.distilled_index <= 255:
            raise ValueError(f"distilled index {self.distilled_index} out of range")


@dataclass(frozen=True)
class Packet:
    seq: int
    fec_offset_k: int
    primary: tuple[tuple[int, int, int, int], tuple[int, int, int, int]]
    redundant: tuple[int, int] | None = None

    def __post_init__(self):
        if not 0 <= self.seq <= MAX_SEQ:
            raise ValueError(f"seq {self.seq} out of u16 range")
        if not 0 <= self.fec_offset_k <= 255:
            raise ValueError(f"k {self.fec_offset_k} out of u8 range")
        if self.fec_offset_k % 2:
            raise ValueError(f"k must be even, got {self.fec_offset_k}")
        if (self.fec_offset_k > 0) != (self.redundant is not None):
            raise ValueError("redundancy present iff k > 0")
        if len(self.primary) != FRAMES_PER_PACKET:
            raise ValueError("packet must carry exactly 2 frames")
        for frame in self.primary:
            if len(frame) != STAGES_PER_FRAME:
                raise ValueError("each frame carries exactly 4 stage indices")
            for i in frame:
                if not 0 <= i <= 255:
                    raise ValueError(f"stage index {i} out of range")
        if self.redundant is not None:
            for i in self.redundant:
                if not 0 <= i <= 255:
                    raise ValueError(f"redundant index {i} out of range")

    @property
    def redundancy_present(self) -> bool:
        return self.redundant is not None

    @property
    def first_frame(self) -> int:
        return 2 * self.seq

    def redundant_frames(self) -> tuple[int, int] | None:
        """Frame numbers covered by this packet's redundancy, if any."""
        if not self.redundancy_present:
            return None
        base = self.first_frame - self.fec_offset_k
        return (base, base + 1)


def pack_packet(p: Packet) -> bytes:
    out = bytearray(_HEADER.pack(MAGIC, p.seq, p.fec_offset_k))
    for frame in p.primary:
        out.extend(frame)
    if p.redundant is not None:
        out.extend(p.redundant)
    return bytes(out)


def unpack_packet(data: bytes) -> Packet:
    if len(data) < HEADER_LEN:
        raise PacketFormatError(f"truncated packet of {len(data)} bytes", 0)
    magic, seq, k = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise PacketFormatError(f"bad magic 0x{magic:02X}, expected 0x{MAGIC:02X}", 0)
    if len(data) not in (PACKET_LEN, PACKET_LEN_FEC):
        raise PacketFormatError(f"invalid packet length {len(data)}", len(data))
    expected = PACKET_LEN_FEC if k > 0 else PACKET_LEN
    if len(data) != expected:
        raise PacketFormatError(
            f"k={k} inconsistent with packet length {len(data)}", 3
        )
    if k % 2:
        raise PacketFormatError(f"odd FEC offset k={k}", 3)
    primary = (
        tuple(data[HEADER_LEN : HEADER_LEN + 4]),
        tuple(data[HEADER_LEN + 4 : HEADER_LEN + 8]),
    )
    redundant = tuple(data[HEADER_LEN + 8 : HEADER_LEN + 10]) if k > 0 else None
    return Packet(seq=seq, fec_offset_k=k, primary=primary, redundant=redundant)


def attach_redundancy(stream: list[FrameIndices], k: int) -> list[Packet]:
    """Packetize a per-frame index stream, two frames per packet.

    The packet whose first frame is 2m carries the distilled indices of
    frames 2m-k and 2m-k+1. Packets whose redundant frames predate the
    stream carry no redundancy, as does every packet when k = 0.
    """
    if k < 0 or k % 2:
        raise ValueError(f"FEC offset must be even and >= 0, got {k}")
    if k > 255:
        raise ValueError(f"FEC offset {k} exceeds the u8 header field")
    if len(stream) % FRAMES_PER_PACKET:
        raise ValueError(f"stream length {len(stream)} is not a whole packet count")
    if len(stream) // FRAMES_PER_PACKET > MAX_SEQ + 1:
        raise ValueError("stream exceeds the u16 sequence space")
    packets = []
    for seq in range(len(stream) // FRAMES_PER_PACKET):
        first = 2 * seq
        primary = (
            stream[first].stage_indices,
            stream[first + 1].stage_indices,
        )
        red_first = first - k
        if k > 0 and red_first >= 0:
            redundant = (
                stream[red_first].distilled_index,
                stream[red_first + 1].distilled_index,
            )
            packets.append(Packet(seq, k, primary, redundant))
        else:
            packets.append(Packet(seq, 0, primary, None))
    return packets


def pack_stream(packets: list[Packet]) -> bytes:
    return b"".join(pack_packet(p) for p in packets)


def unpack_stream(data: bytes) -> list[Packet]:
    """Parse a concatenation of packed packets; errors carry file offsets."""
    packets = []
    pos = 0
    while pos < len(data):
        if len(data) - pos < HEADER_LEN:
            raise PacketFormatError("truncated trailing packet", pos)
        k = data[pos + 3]
        length = PACKET_LEN_FEC if k > 0 else PACKET_LEN
        if len(data) - pos < length:
            raise PacketFormatError("truncated trailing packet", pos)
        try:
            packets.append(unpack_packet(data[pos : pos + length]))
        except PacketFormatError as e:
            raise PacketFormatError(str(e).rsplit(" (at", 1)[0], pos + e.offset) from None
        pos += length
    return packets


def dump_packet(p: Packet) -> str:
    """One-line debug dump: seq, k, indices in hex."""
    prim = " | ".join(" ".join(f"{i:02x}" for i in frame) for frame in p.primary)
    if p.redundant is not None:
        red = " ".join(f"{i:02x}" for i in p.redundant)
        lo, hi = p.redundant_frames()
        return f"seq={p.seq} k={p.fec_offset_k} primary=[{prim}] redundant=[{red}] (frames {lo},{hi})"
    return f"seq={p.seq} k={p.fec_offset_k} primary=[{prim}] no redundancy"
