import pytest

from traceplay import wire


class TestFraming:
    def test_name_frame_vector(self):
        # tag 0x01, length 1 big-endian, payload "a"
        assert wire.name_frame("a") == bytes.fromhex("010000000161")

    def test_pair_frame_vector(self):
        # PAIR of NAME(a), NAME(b): 0x10, len 12, then the two name frames
        frame = wire.pack(wire.PAIR, wire.name_frame("a") + wire.name_frame("b"))
        assert frame == bytes.fromhex("100000000c010000000161010000000162")

    def test_round_trip(self):
        frame = wire.pack(wire.BYTES, b"\x00\x01\xff")
        assert wire.unpack(frame) == (wire.BYTES, b"\x00\x01\xff")

    def test_truncated_header(self):
        with pytest.raises(wire.WireError, match="truncated"):
            wire.unpack(b"\x01\x00")

    def test_truncated_payload(self):
        with pytest.raises(wire.WireError, match="truncated"):
            wire.unpack(bytes.fromhex("01000000ff61"))

    def test_trailing_bytes(self):
        with pytest.raises(wire.WireError, match="trailing"):
            wire.unpack(wire.name_frame("a") + b"x")

    def test_unknown_tag(self):
        with pytest.raises(wire.WireError, match="unknown tag"):
            wire.unpack(b"\x42\x00\x00\x00\x00")

    def test_oversize_rejected(self):
        with pytest.raises(wire.WireError, match="too large"):
            wire.pack(wire.BYTES, b"x" * (wire.MAX_FRAME + 1))

    def test_split_frames(self):
        frames = [wire.name_frame("a"), wire.bytes_frame(b"zz"), wire.name_frame("b")]
        assert wire.split_frames(b"".join(frames)) == frames

    def test_alert(self):
        frame = wire.alert_frame(0x64)
        assert frame == bytes.fromhex("7f0000000164")
        assert wire.alert_code(frame) == 0x64
        assert wire.alert_code(wire.name_frame("a")) is None
        assert wire.alert_code(b"junk") is None


class TestDecodeTree:
    def test_structural(self):
        frame = wire.pack(wire.PAIR, wire.name_frame("a") + wire.bytes_frame(b"\x01"))
        node = wire.decode_tree(frame)
        assert node.tag == wire.PAIR
        assert node.children[0].name == "a"
        assert node.children[1].payload == b"\x01"

    def test_opaque_crypto(self):
        inner = wire.pack(wire.SCRYPT, b"\xde\xad")
        node = wire.decode_tree(inner, opaque_crypto=True)
        assert node.tag == wire.SCRYPT
        assert node.children == []
        assert node.payload == b"\xde\xad"

    def test_describe(self):
        frame = wire.pack(wire.APPLY, wire.name_frame("prf") + wire.bytes_frame(b"\x01"))
        text = wire.decode_tree(frame).describe()
        assert "APPLY" in text and "prf" in text
