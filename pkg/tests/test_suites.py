import pytest
from hypothesis import given, settings, strategies as st

from traceplay import wire
from traceplay.suites import (
    DecryptError,
    SuiteError,
    make_suite,
    primitive,
)
from traceplay.terms import Apply, Atom, Crypt, Fresh, Hash, Inv, Pair, SCrypt, Sort

A = Atom("a", Sort.AGENT)
B = Atom("b", Sort.AGENT)
KA = Atom("ka", Sort.PUBKEY)
KB = Atom("kb", Sort.PUBKEY)
NA = Atom("na", Sort.NONCE)
SK = Atom("sk", Sort.SYMKEY)
KEYGEN = Apply("keygen", (A, NA))


@pytest.fixture(params=["transparent", "real"])
def suite(request):
    return make_suite(request.param, 7, "tester")


@pytest.fixture
def transparent():
    return make_suite("transparent", 7, "intruder")


class TestEncoding:
    def test_atom_is_name_frame(self, suite):
        assert suite.encode(A) == wire.name_frame("a")

    def test_pair_tlv_vector(self, transparent):
        # hand-computed: PAIR(12 bytes) of NAME(a), NAME(b), lengths big-endian
        assert transparent.encode(Pair(A, B)) == bytes.fromhex(
            "100000000c010000000161010000000162"
        )

    def test_nonce_atom_is_bytes_frame(self, suite):
        frame = suite.encode(NA)
        tag, payload = wire.unpack(frame)
        assert tag == wire.BYTES and len(payload) == 16

    def test_transparent_crypt_exposes_key_id(self, transparent):
        node = wire.decode_tree(transparent.encode(Crypt(KB, NA)))
        assert node.tag == wire.ACRYPT
        assert node.children[0].name == "kb"

    def test_real_crypt_is_opaque(self):
        real = make_suite("real", 7, "x")
        tag, payload = wire.unpack(real.encode(Crypt(KB, NA)))
        assert tag == wire.ACRYPT
        # no embedded key-id frame; the payload is ciphertext
        assert not payload.startswith(wire.name_frame("kb"))
        assert payload != real.encode(KB) + real.encode(NA)

    def test_fresh_uses_its_label(self, transparent):
        f = Fresh("nonce:2:13", Sort.NONCE, 2)
        assert transparent.encode(f) == wire.bytes_frame(
            transparent.fresh_value("nonce:2:13")
        )

    def test_inv_envelope(self, suite):
        node = wire.decode_tree(suite.encode(Inv(KA)))
        assert node.tag == wire.APPLY
        assert node.children[0].name == "inv"
        assert node.children[1].name == "ka"

    def test_deterministic_per_seed(self):
        one = make_suite("real", 3, "p").encode(Crypt(KB, Pair(NA, A)))
        two = make_suite("real", 3, "p").encode(Crypt(KB, Pair(NA, A)))
        assert one == two
        other_seed = make_suite("real", 4, "p").encode(Crypt(KB, Pair(NA, A)))
        assert one != other_seed


class TestPrimitives:
    def test_unpair(self, suite):
        frame = suite.encode(Pair(A, B))
        assert suite.unpair1(frame) == suite.encode(A)
        assert suite.unpair2(frame) == suite.encode(B)

    def test_unpair_wrong_tag(self, suite):
        with pytest.raises(SuiteError, match="unpair"):
            suite.unpair1(suite.encode(A))

    def test_asymmetric_round_trip(self, suite):
        ct = suite.crypt(suite.encode(KB), suite.encode(Pair(NA, A)))
        pt = suite.decrypt(suite.encode(Inv(KB)), ct)
        assert pt == suite.encode(Pair(NA, A))

    def test_asymmetric_wrong_key(self, suite):
        ct = suite.crypt(suite.encode(KB), suite.encode(NA))
        with pytest.raises(DecryptError):
            suite.decrypt(suite.encode(Inv(KA)), ct)

    def test_signature_verification_recovers(self, suite):
        sig = suite.crypt(suite.encode(Inv(KA)), suite.encode(B))
        tag, _ = wire.unpack(sig)
        assert tag == wire.SIG
        assert suite.decrypt(suite.encode(KA), sig) == suite.encode(B)

    def test_signature_wrong_key(self, suite):
        sig = suite.crypt(suite.encode(Inv(KA)), suite.encode(B))
        with pytest.raises(DecryptError):
            suite.decrypt(suite.encode(KB), sig)

    def test_symmetric_round_trip_atom_key(self, suite):
        ct = suite.scrypt(suite.encode(SK), suite.encode(B))
        assert suite.decrypt(suite.encode(SK), ct) == suite.encode(B)

    def test_symmetric_round_trip_derived_key(self, suite):
        key = suite.encode(KEYGEN)
        ct = suite.scrypt(key, suite.encode(B))
        assert suite.decrypt(key, ct) == suite.encode(B)

    def test_symmetric_wrong_key(self, suite):
        ct = suite.scrypt(suite.encode(SK), suite.encode(B))
        with pytest.raises(DecryptError):
            suite.decrypt(suite.encode(Atom("sk2", Sort.SYMKEY)), ct)

    def test_real_ciphertext_tamper_detected(self):
        real = make_suite("real", 7, "x")
        ct = bytearray(real.scrypt(real.encode(SK), real.encode(B)))
        ct[-1] ^= 0xFF
        with pytest.raises(DecryptError):
            real.decrypt(real.encode(SK), wire.pack(wire.SCRYPT, bytes(ct[5:])))

    def test_real_hash_is_digest(self):
        real = make_suite("real", 7, "x")
        tag, payload = wire.unpack(real.hash(real.encode(A)))
        assert tag == wire.HASH and len(payload) == 32

    def test_decrypt_dispatch_rejects_plain(self, suite):
        with pytest.raises(DecryptError):
            suite.decrypt(suite.encode(SK), suite.encode(A))


class TestNonceGeneration:
    def test_seed7_first_draw_golden(self):
        # frozen vector: BYTES frame of the first counter draw, seed 7
        s = make_suite("transparent", 7, "intruder")
        assert s.gen_nonce().hex() == "0200000010a53913d27d02726eae1f5fa2ad4a57a2"

    def test_labelled_draw_golden(self):
        s = make_suite("transparent", 7, "intruder")
        assert s.fresh_value("nonce:2:13").hex() == "efe3d23402db18fc2b023972706c6521"

    def test_counter_advances(self, suite):
        assert suite.gen_nonce() != suite.gen_nonce()

    def test_parties_have_distinct_streams(self):
        a = make_suite("transparent", 7, "a")
        b = make_suite("transparent", 7, "b")
        assert a.gen_nonce() != b.gen_nonce()

    def test_instances_reproduce(self):
        one = make_suite("transparent", 9, "p")
        two = make_suite("transparent", 9, "p")
        assert [one.gen_nonce() for _ in range(3)] == [two.gen_nonce() for _ in range(3)]


class TestDispatcher:
    def test_pair_and_unpair(self, suite):
        frame = primitive("pair", [suite.encode(A), suite.encode(B)], suite)
        assert primitive("unpair1", [frame], suite) == suite.encode(A)

    def test_crypt_decrypt(self, suite):
        ct = primitive("crypt", [suite.encode(KB), suite.encode(NA)], suite)
        assert primitive("decrypt", [suite.encode(Inv(KB)), ct], suite) == suite.encode(NA)

    def test_gen_nonce_label(self, suite):
        one = primitive("gen-nonce", [], suite, label="x")
        two = primitive("gen-nonce", [], suite, label="x")
        assert one == two

    def test_arity_error(self, suite):
        with pytest.raises(SuiteError, match="expects"):
            primitive("pair", [suite.encode(A)], suite)

    def test_unknown_op(self, suite):
        with pytest.raises(SuiteError, match="unknown primitive"):
            primitive("frobnicate", [], suite)

    def test_apply_namespace(self, suite):
        frame = primitive("apply:prf", [suite.encode(NA)], suite)
        tag, _ = wire.unpack(frame)
        assert tag == wire.APPLY


# --- properties -------------------------------------------------------------

_ATOMS = [A, B, KA, KB, NA, SK]


def _terms():
    base = st.sampled_from(_ATOMS)

    def extend(children):
        keys = st.one_of(st.sampled_from([KA, KB]), st.sampled_from([KA, KB]).map(Inv))
        return st.one_of(
            st.tuples(children, children).map(lambda p: Pair(*p)),
            st.tuples(keys, children).map(lambda p: Crypt(*p)),
            st.tuples(st.just(SK), children).map(lambda p: SCrypt(*p)),
            children.map(Hash),
            st.lists(children, min_size=1, max_size=2).map(
                lambda xs: Apply("prf", tuple(xs))
            ),
        )

    return st.recursive(base, extend, max_leaves=6)


@settings(max_examples=60, deadline=None)
@given(_terms(), st.sampled_from(["transparent", "real"]))
def test_encrypt_decrypt_identity(t, kind):
    suite = make_suite(kind, 11, "prop")
    payload = suite.encode(t)
    ct = suite.crypt(suite.encode(KB), payload)
    assert suite.decrypt(suite.encode(Inv(KB)), ct) == payload
    sym = suite.scrypt(suite.encode(SK), payload)
    assert suite.decrypt(suite.encode(SK), sym) == payload


@settings(max_examples=80, deadline=None)
@given(_terms(), _terms(), st.sampled_from(["transparent", "real"]))
def test_encode_injective(t1, t2, kind):
    suite = make_suite(kind, 11, "prop")
    if t1 != t2:
        assert suite.encode(t1) != suite.encode(t2)
