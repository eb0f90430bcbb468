"""Binary frame codec: tag(1) || length(4, big-endian) || payload.

Tags:
    0x01 NAME    UTF-8 identifier
    0x02 BYTES   raw octets (nonces, fresh values)
    0x10 PAIR    two concatenated frames
    0x11 SCRYPT  symmetric encryption
    0x12 ACRYPT  asymmetric encryption
    0x13 HASH    digest
    0x14 SIG     signature (encryption under an inverse key)
    0x15 APPLY   NAME frame of the function, then argument frames
    0x7F ALERT   single status byte

Under the transparent suite the crypto payloads are structural (key frame
followed by plaintext frame); under the real suite they are opaque bytes.
See ``docs/wire-format.md`` for test vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field


class WireError(Exception):
    pass


NAME = 0x01
BYTES = 0x02
PAIR = 0x10
SCRYPT = 0x11
ACRYPT = 0x12
HASH = 0x13
SIG = 0x14
APPLY = 0x15
ALERT = 0x7F

TAG_NAMES = {
    NAME: "NAME",
    BYTES: "BYTES",
    PAIR: "PAIR",
    SCRYPT: "SCRYPT",
    ACRYPT: "ACRYPT",
    HASH: "HASH",
    SIG: "SIG",
    APPLY: "APPLY",
    ALERT: "ALERT",
}

#: Refuse frames beyond this size; protects agents from garbage lengths.
MAX_FRAME = 1 << 24

_HEADER = struct.Struct(">BI")


def pack(tag: int, payload: bytes) -> bytes:
    if tag not in TAG_NAMES:
        raise WireError(f"unknown tag 0x{tag:02x}")
    if len(payload) > MAX_FRAME:
        raise WireError(f"frame too large ({len(payload)} bytes)")
    return _HEADER.pack(tag, len(payload)) + payload


def unpack(frame: bytes) -> tuple[int, bytes]:
    tag, payload = peek(frame)
    if len(frame) != _HEADER.size + len(payload):
        raise WireError("trailing bytes after frame")
    return tag, payload


def peek(data: bytes) -> tuple[int, bytes]:
    """Read one frame from the start of ``data``; ignores what follows."""
    if len(data) < _HEADER.size:
        raise WireError("truncated frame header")
    tag, length = _HEADER.unpack_from(data)
    if tag not in TAG_NAMES:
        raise WireError(f"unknown tag 0x{tag:02x}")
    if length > MAX_FRAME:
        raise WireError(f"frame too large ({length} bytes)")
    end = _HEADER.size + length
    if len(data) < end:
        raise WireError("truncated frame payload")
    return tag, data[_HEADER.size : end]


def frame_size(data: bytes) -> int:
    if len(data) < _HEADER.size:
        raise WireError("truncated frame header")
    _, length = _HEADER.unpack_from(data)
    return _HEADER.size + length


def split_frames(payload: bytes) -> list[bytes]:
    """Split a concatenation of frames into the individual frame bytes."""
    out: list[bytes] = []
    i = 0
    while i < len(payload):
        size = frame_size(payload[i:])
        out.append(payload[i : i + size])
        i += size
    return out


def name_frame(name: str) -> bytes:
    return pack(NAME, name.encode("utf-8"))


def bytes_frame(data: bytes) -> bytes:
    return pack(BYTES, data)


def alert_frame(code: int) -> bytes:
    return pack(ALERT, bytes([code]))


def alert_code(frame: bytes) -> int | None:
    """The alert code if ``frame`` is a well-formed ALERT, else None."""
    try:
        tag, payload = unpack(frame)
    except WireError:
        return None
    if tag == ALERT and len(payload) == 1:
        return payload[0]
    return None


@dataclass
class FrameNode:
    """Structural view of a frame; crypto payloads stay opaque when the
    codec cannot see inside them (real suite)."""

    tag: int
    payload: bytes = b""
    children: list["FrameNode"] = field(default_factory=list)

    @property
    def name(self) -> str:
        if self.tag != NAME:
            raise WireError("not a NAME frame")
        return self.payload.decode("utf-8")

    def describe(self) -> str:
        label = TAG_NAMES[self.tag]
        if self.tag == NAME:
            return f"{label}({self.payload.decode('utf-8', 'replace')})"
        if self.children:
            return f"{label}[{', '.join(c.describe() for c in self.children)}]"
        return f"{label}<{self.payload.hex()}>"


def decode_tree(frame: bytes, *, opaque_crypto: bool = False) -> FrameNode:
    """Decode a frame into a tag tree.

    With ``opaque_crypto`` the SCRYPT/ACRYPT/SIG/HASH payloads are kept as
    raw bytes (the real suite's view); otherwise they are decoded
    structurally (the transparent suite's layout).
    """
    tag, payload = unpack(frame)
    if tag in (NAME, BYTES, ALERT):
        return FrameNode(tag, payload)
    if tag in (PAIR, APPLY) or (
        tag in (SCRYPT, ACRYPT, SIG, HASH) and not opaque_crypto
    ):
        kids = [decode_tree(child, opaque_crypto=opaque_crypto) for child in split_frames(payload)]
        return FrameNode(tag, payload, kids)
    return FrameNode(tag, payload)
