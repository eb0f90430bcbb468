"""Concrete cryptographic and encoding primitives over wire frames.

Two interchangeable suites realize the same primitive surface:

``transparent``
    Structural and fully deterministic given a seed: encryption embeds the
    key frame next to the plaintext frame, hashes embed their input, and
    nonces come from a seeded derivation.  This is the suite used for golden
    vectors and the symbolic/concrete agreement checks.

``real``
    X25519-based hybrid encryption (ACRYPT), AES-256-GCM with a synthetic IV
    (SCRYPT), Ed25519 signatures carrying the signed frame (SIG, so that
    verification can recover the message), and SHA-256 digests (HASH).  All
    key material derives from the shared seed so that separately spawned
    agents agree on it; encryption is deterministic per (key, plaintext),
    which this test rig prefers over semantic security.

Every party (each honest agent, and the intruder engine) instantiates its
own suite with the same seed but its own ``party`` label, so nonce streams
never collide across parties while staying reproducible.
"""

from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import wire
from .terms import Apply, Atom, Crypt, Fresh, Hash, Inv, Pair, SCrypt, Sort, Term


class SuiteError(Exception):
    pass


class DecryptError(SuiteError):
    pass


NONCE_SIZE = 16


def _sha(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


class CryptoSuite:
    """Shared frame plumbing; subclasses provide the crypto payloads."""

    name = "abstract"

    def __init__(self, seed: int, party: str):
        self.seed = seed
        self.party = party
        self._seed_bytes = seed.to_bytes(8, "big", signed=True)
        self._draws = 0

    # -- randomness -------------------------------------------------------

    def fresh_value(self, label: str) -> bytes:
        """Deterministic per (seed, party, label); 16 bytes."""
        return _sha(self._seed_bytes, self.party.encode(), b"fresh", label.encode())[
            :NONCE_SIZE
        ]

    def gen_nonce(self, label: str | None = None) -> bytes:
        """A fresh BYTES frame; unlabeled draws use a per-suite counter."""
        if label is None:
            label = f"draw:{self._draws}"
            self._draws += 1
        return wire.bytes_frame(self.fresh_value(label))

    # -- structural primitives ---------------------------------------------

    def pair(self, left: bytes, right: bytes) -> bytes:
        return wire.pack(wire.PAIR, left + right)

    def _pair_parts(self, frame: bytes) -> tuple[bytes, bytes]:
        tag, payload = wire.unpack(frame)
        if tag != wire.PAIR:
            raise SuiteError(f"unpair of a {wire.TAG_NAMES.get(tag, '?')} frame")
        parts = wire.split_frames(payload)
        if len(parts) != 2:
            raise SuiteError("malformed PAIR frame")
        return parts[0], parts[1]

    def unpair1(self, frame: bytes) -> bytes:
        return self._pair_parts(frame)[0]

    def unpair2(self, frame: bytes) -> bytes:
        return self._pair_parts(frame)[1]

    def apply(self, fn: str, args: list[bytes]) -> bytes:
        return wire.pack(wire.APPLY, wire.name_frame(fn) + b"".join(args))

    def inv_envelope(self, key_frame: bytes) -> bytes:
        return self.apply("inv", [key_frame])

    @staticmethod
    def inv_inner(frame: bytes) -> bytes | None:
        """The enclosed key frame if ``frame`` is an inv() envelope."""
        try:
            tag, payload = wire.unpack(frame)
            if tag != wire.APPLY:
                return None
            parts = wire.split_frames(payload)
        except wire.WireError:
            return None
        if len(parts) == 2 and parts[0] == wire.name_frame("inv"):
            return parts[1]
        return None

    # -- encryption dispatch ------------------------------------------------

    def crypt(self, key_frame: bytes, payload: bytes) -> bytes:
        inner = self.inv_inner(key_frame)
        if inner is not None:
            return self.sign(inner, payload)
        return self.acrypt(key_frame, payload)

    def decrypt(self, key_frame: bytes, frame: bytes) -> bytes:
        tag, _ = wire.peek(frame)
        if tag == wire.SCRYPT:
            return self.scrypt_open(key_frame, frame)
        if tag == wire.ACRYPT:
            inner = self.inv_inner(key_frame)
            if inner is None:
                raise DecryptError("asymmetric decryption needs an inv(key)")
            return self.acrypt_open(inner, frame)
        if tag == wire.SIG:
            return self.verify(key_frame, frame)
        raise DecryptError(f"cannot decrypt a {wire.TAG_NAMES.get(tag, '?')} frame")

    # -- suite-specific payloads (overridden) --------------------------------

    def scrypt(self, key_frame: bytes, payload: bytes) -> bytes:
        raise NotImplementedError

    def scrypt_open(self, key_frame: bytes, frame: bytes) -> bytes:
        raise NotImplementedError

    def acrypt(self, key_frame: bytes, payload: bytes) -> bytes:
        raise NotImplementedError

    def acrypt_open(self, key_frame: bytes, frame: bytes) -> bytes:
        raise NotImplementedError

    def sign(self, key_frame: bytes, payload: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, key_frame: bytes, frame: bytes) -> bytes:
        raise NotImplementedError

    def hash(self, payload: bytes) -> bytes:
        raise NotImplementedError

    # -- term encoding -------------------------------------------------------

    def atom_frame(self, atom: Atom) -> bytes:
        if atom.sort is Sort.NONCE:
            return wire.bytes_frame(self.fresh_value(f"atom:{atom.name}"))
        return wire.name_frame(atom.name)

    def encode(self, t: Term) -> bytes:
        """Injective (per seed) wire encoding of a symbolic term."""
        if isinstance(t, Atom):
            return self.atom_frame(t)
        if isinstance(t, Fresh):
            return wire.bytes_frame(self.fresh_value(t.name))
        if isinstance(t, Pair):
            return self.pair(self.encode(t.left), self.encode(t.right))
        if isinstance(t, Inv):
            return self.inv_envelope(self.encode(t.key))
        if isinstance(t, Crypt):
            return self.crypt(self.encode(t.key), self.encode(t.payload))
        if isinstance(t, SCrypt):
            return self.scrypt(self.encode(t.key), self.encode(t.payload))
        if isinstance(t, Hash):
            return self.hash(self.encode(t.payload))
        if isinstance(t, Apply):
            return self.apply(t.fn, [self.encode(a) for a in t.args])
        raise SuiteError(f"cannot encode {t!r}")


class TransparentSuite(CryptoSuite):
    """Structural stand-in crypto: payloads carry key and plaintext frames."""

    name = "transparent"

    def scrypt(self, key_frame: bytes, payload: bytes) -> bytes:
        return wire.pack(wire.SCRYPT, key_frame + payload)

    def scrypt_open(self, key_frame: bytes, frame: bytes) -> bytes:
        embedded, plaintext = self._crypto_parts(frame, wire.SCRYPT)
        if embedded != key_frame:
            raise DecryptError("symmetric key mismatch")
        return plaintext

    def acrypt(self, key_frame: bytes, payload: bytes) -> bytes:
        return wire.pack(wire.ACRYPT, key_frame + payload)

    def acrypt_open(self, key_frame: bytes, frame: bytes) -> bytes:
        embedded, plaintext = self._crypto_parts(frame, wire.ACRYPT)
        if embedded != key_frame:
            raise DecryptError("wrong private key for this ciphertext")
        return plaintext

    def sign(self, key_frame: bytes, payload: bytes) -> bytes:
        return wire.pack(wire.SIG, key_frame + payload)

    def verify(self, key_frame: bytes, frame: bytes) -> bytes:
        embedded, plaintext = self._crypto_parts(frame, wire.SIG)
        if embedded != key_frame:
            raise DecryptError("signature key mismatch")
        return plaintext

    def hash(self, payload: bytes) -> bytes:
        return wire.pack(wire.HASH, payload)

    def _crypto_parts(self, frame: bytes, expect_tag: int) -> tuple[bytes, bytes]:
        tag, payload = wire.unpack(frame)
        if tag != expect_tag:
            raise DecryptError(
                f"expected {wire.TAG_NAMES[expect_tag]}, got {wire.TAG_NAMES.get(tag, '?')}"
            )
        parts = wire.split_frames(payload)
        if len(parts) != 2:
            raise DecryptError("malformed crypto payload")
        return parts[0], parts[1]


class RealSuite(CryptoSuite):
    """Actual cryptography; still deterministic given the shared seed."""

    name = "real"

    # Key material is derived from the seed so that independently spawned
    # agents hold consistent keys without any distribution step.

    def _x25519_priv(self, name: str) -> X25519PrivateKey:
        return X25519PrivateKey.from_private_bytes(
            _sha(self._seed_bytes, b"x25519", name.encode())
        )

    def _x25519_pub_bytes(self, name: str) -> bytes:
        return self._x25519_priv(name).public_key().public_bytes_raw()

    def _ed25519_priv(self, name: str) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(
            _sha(self._seed_bytes, b"ed25519", name.encode())
        )

    def _sym_key(self, key_frame: bytes) -> bytes:
        return _sha(self._seed_bytes, b"symkey", key_frame)

    @staticmethod
    def _key_name(key_frame: bytes) -> str:
        tag, payload = wire.unpack(key_frame)
        if tag != wire.NAME:
            raise SuiteError("asymmetric keys must be named atoms")
        return payload.decode("utf-8")

    def scrypt(self, key_frame: bytes, payload: bytes) -> bytes:
        key = self._sym_key(key_frame)
        iv = _sha(key, b"iv", payload)[:12]
        ct = AESGCM(key).encrypt(iv, payload, None)
        return wire.pack(wire.SCRYPT, iv + ct)

    def scrypt_open(self, key_frame: bytes, frame: bytes) -> bytes:
        tag, body = wire.unpack(frame)
        if tag != wire.SCRYPT or len(body) < 12:
            raise DecryptError("malformed symmetric ciphertext")
        key = self._sym_key(key_frame)
        try:
            return AESGCM(key).decrypt(body[:12], body[12:], None)
        except InvalidTag:
            raise DecryptError("symmetric decryption failed") from None

    def acrypt(self, key_frame: bytes, payload: bytes) -> bytes:
        pub_bytes = self._x25519_pub_bytes(self._key_name(key_frame))
        eph = X25519PrivateKey.from_private_bytes(
            _sha(b"ecies-eph", self._seed_bytes, pub_bytes, _sha(payload))
        )
        shared = eph.exchange(X25519PublicKey.from_public_bytes(pub_bytes))
        key = _sha(shared, b"acrypt-key")
        ct = AESGCM(key).encrypt(b"\x00" * 12, payload, None)
        return wire.pack(wire.ACRYPT, eph.public_key().public_bytes_raw() + ct)

    def acrypt_open(self, key_frame: bytes, frame: bytes) -> bytes:
        tag, body = wire.unpack(frame)
        if tag != wire.ACRYPT or len(body) < 32:
            raise DecryptError("malformed asymmetric ciphertext")
        priv = self._x25519_priv(self._key_name(key_frame))
        shared = priv.exchange(X25519PublicKey.from_public_bytes(body[:32]))
        key = _sha(shared, b"acrypt-key")
        try:
            return AESGCM(key).decrypt(b"\x00" * 12, body[32:], None)
        except InvalidTag:
            raise DecryptError("asymmetric decryption failed") from None

    def sign(self, key_frame: bytes, payload: bytes) -> bytes:
        priv = self._ed25519_priv(self._key_name(key_frame))
        return wire.pack(wire.SIG, payload + priv.sign(payload))

    def verify(self, key_frame: bytes, frame: bytes) -> bytes:
        tag, body = wire.unpack(frame)
        if tag != wire.SIG or len(body) < 64:
            raise DecryptError("malformed signature frame")
        payload, sig = body[:-64], body[-64:]
        pub = self._ed25519_priv(self._key_name(key_frame)).public_key()
        try:
            pub.verify(sig, payload)
        except InvalidSignature:
            raise DecryptError("signature verification failed") from None
        return payload

    def hash(self, payload: bytes) -> bytes:
        return wire.pack(wire.HASH, _sha(b"digest", payload))


SUITES = {
    "transparent": TransparentSuite,
    "real": RealSuite,
}


def make_suite(kind: str, seed: int, party: str) -> CryptoSuite:
    try:
        cls = SUITES[kind]
    except KeyError:
        raise SuiteError(f"unknown suite {kind!r} (want transparent or real)") from None
    return cls(seed, party)


def primitive(op: str, args: list[bytes], suite: CryptoSuite, *, label: str | None = None) -> bytes:
    """Uniform dispatcher over the primitive operations.

    ``gen-nonce`` takes no frame arguments; a label pins the draw for
    reproducibility, otherwise a per-suite counter is used.
    """

    def arity(n: int) -> None:
        if len(args) != n:
            raise SuiteError(f"{op} expects {n} argument(s), got {len(args)}")

    if op == "pair":
        arity(2)
        return suite.pair(args[0], args[1])
    if op == "unpair1":
        arity(1)
        return suite.unpair1(args[0])
    if op == "unpair2":
        arity(1)
        return suite.unpair2(args[0])
    if op == "crypt":
        arity(2)
        return suite.crypt(args[0], args[1])
    if op == "scrypt":
        arity(2)
        return suite.scrypt(args[0], args[1])
    if op == "decrypt":
        arity(2)
        return suite.decrypt(args[0], args[1])
    if op == "hash":
        arity(1)
        return suite.hash(args[0])
    if op == "gen-nonce":
        arity(0)
        return suite.gen_nonce(label)
    if op.startswith("apply:"):
        return suite.apply(op.split(":", 1)[1], args)
    raise SuiteError(f"unknown primitive {op!r}")
