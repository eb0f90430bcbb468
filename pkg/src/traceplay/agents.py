"""Honest protocol agents: a role interpreter over the wire codec.

``run_role`` executes a (possibly mutated) role transition by transition.
Sends instantiate the pattern, generating fresh values for primed
variables.  Receives match the arriving frame left to right: an unprimed
variable that is already bound must equal the stored bytes (otherwise the
agent answers with an alert and stops), a primed or unbound variable is
bound to whatever arrived.

``run_tls_server`` wraps the interpreter with the renegotiation behaviour
under test: after the handshake completes, a further frame that decrypts
under the session's client-write key to a client-hello either restarts the
handshake (``allow_renegotiation=True``) or is refused with alert 0x64.

``probe_point`` drives a role and its single-point mutant with identical
traffic, corrupted at the mutated variable, to demonstrate that the
mutation removed exactly one run-time check.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from . import wire
from .model import RCV, SND, ProtocolModel, Role, Transition, MutationPoint
from .suites import CryptoSuite, DecryptError, SuiteError, make_suite
from .terms import (
    Apply,
    Atom,
    Crypt,
    Hash,
    Inv,
    Pair,
    SCrypt,
    Sort,
    Term,
    render_term,
)

# Alert vocabulary of the toy implementations (documented in
# docs/model-format.md): the abstract models have none of their own.
ALERT_DECODE = 0x01  # malformed frame, wrong shape, or undecryptable
ALERT_CHECK = 0x28  # identity / nonce / hash comparison failed
ALERT_NO_RENEGOTIATION = 0x64

COMPLETED = "completed"
PROTOCOL_ERROR = "protocol-error"
TIMEOUT = "timeout"
PEER_ALERT = "peer-alert"


class AgentError(Exception):
    pass


class ChannelTimeout(Exception):
    pass


class ChannelClosed(Exception):
    pass


class ProtocolViolation(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------


class LoopbackChannel:
    """In-process channel; create ends in pairs via :func:`loopback_pair`."""

    def __init__(self, inbox: "queue.Queue[bytes | None]", outbox: "queue.Queue[bytes | None]"):
        self._inbox = inbox
        self._outbox = outbox
        self.sent: list[bytes] = []
        self.received: list[bytes] = []

    def send_frame(self, frame: bytes) -> None:
        self.sent.append(frame)
        self._outbox.put(frame)

    def recv_frame(self, timeout: float) -> bytes:
        try:
            frame = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise ChannelTimeout(f"no frame within {timeout}s") from None
        if frame is None:
            raise ChannelClosed("peer closed")
        self.received.append(frame)
        return frame

    def close(self) -> None:
        self._outbox.put(None)


def loopback_pair() -> tuple[LoopbackChannel, LoopbackChannel]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return LoopbackChannel(b_to_a, a_to_b), LoopbackChannel(a_to_b, b_to_a)


class SocketChannel:
    """One frame per codec unit over a reliable byte stream."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send_frame(self, frame: bytes) -> None:
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise ChannelClosed(str(exc)) from None

    def recv_frame(self, timeout: float) -> bytes:
        header = self._read_exact(5, timeout)
        tag, length = struct.unpack(">BI", header)
        if tag not in wire.TAG_NAMES or length > wire.MAX_FRAME:
            raise ChannelClosed("stream out of sync")
        return header + self._read_exact(length, timeout)

    def _read_exact(self, n: int, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        chunks = b""
        while len(chunks) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ChannelTimeout(f"no frame within {timeout}s")
            self.sock.settimeout(remaining)
            try:
                data = self.sock.recv(n - len(chunks))
            except socket.timeout:
                raise ChannelTimeout(f"no frame within {timeout}s") from None
            except OSError as exc:
                raise ChannelClosed(str(exc)) from None
            if not data:
                raise ChannelClosed("connection closed")
            chunks += data
        return chunks

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def listen_channel(host: str, port: int, timeout: float = 10.0, *, on_bound=None) -> SocketChannel:
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, port))
    server.listen(1)
    if on_bound is not None:
        on_bound(server.getsockname())
    server.settimeout(timeout)
    try:
        conn, _ = server.accept()
    except socket.timeout:
        raise ChannelTimeout("no client connected") from None
    finally:
        server.close()
    return SocketChannel(conn)


def connect_channel(host: str, port: int, timeout: float = 10.0) -> SocketChannel:
    deadline = time.monotonic() + timeout
    last: Exception | None = None
    while time.monotonic() < deadline:
        try:
            sock = socket.create_connection((host, port), timeout=1.0)
            return SocketChannel(sock)
        except OSError as exc:
            last = exc
            time.sleep(0.05)
    raise ChannelClosed(f"cannot connect to {host}:{port}: {last}")


# ---------------------------------------------------------------------------
# Role interpretation
# ---------------------------------------------------------------------------


@dataclass
class RoleState:
    role: Role
    bindings: dict[Term, bytes]
    program_counter: int = 1
    session: int = 0
    rebound: set[str] = field(default_factory=set)


@dataclass
class RoleResult:
    status: str
    progress: int = 0  # completed transitions
    alert_sent: int | None = None
    alert_received: int | None = None
    finished_value: bytes | None = None
    events: list[str] = field(default_factory=list)


def initial_bindings(role: Role, suite: CryptoSuite) -> dict[Term, bytes]:
    bindings: dict[Term, bytes] = {}
    for term in role.parameters + role.knowledge:
        bindings[term] = suite.encode(term)
    return bindings


def _instantiate(term: Term, bindings: dict[Term, bytes], suite: CryptoSuite) -> bytes:
    cached = bindings.get(term)
    if cached is not None:
        return cached
    if isinstance(term, Atom):
        if term.sort is Sort.NONCE:
            raise AgentError(f"unbound nonce {term.name!r} in pattern")
        return suite.atom_frame(term)
    if isinstance(term, Pair):
        return suite.pair(
            _instantiate(term.left, bindings, suite),
            _instantiate(term.right, bindings, suite),
        )
    if isinstance(term, Crypt):
        return suite.crypt(
            _instantiate(term.key, bindings, suite),
            _instantiate(term.payload, bindings, suite),
        )
    if isinstance(term, SCrypt):
        return suite.scrypt(
            _instantiate(term.key, bindings, suite),
            _instantiate(term.payload, bindings, suite),
        )
    if isinstance(term, Inv):
        return suite.inv_envelope(_instantiate(term.key, bindings, suite))
    if isinstance(term, Hash):
        return suite.hash(_instantiate(term.payload, bindings, suite))
    if isinstance(term, Apply):
        return suite.apply(term.fn, [_instantiate(a, bindings, suite) for a in term.args])
    raise AgentError(f"cannot instantiate {term!r}")


def _generate_fresh(st: RoleState, tr: Transition, suite: CryptoSuite) -> None:
    for name in sorted(tr.primed_vars()):
        atom = _find_atom(tr.pattern, name)
        label = f"{name}:{tr.index}:s{st.session}"
        st.bindings[atom] = wire.bytes_frame(suite.fresh_value(label))


def _find_atom(pattern: Term, name: str) -> Atom:
    if isinstance(pattern, Atom) and pattern.name == name:
        return pattern
    for child in pattern.children():
        try:
            return _find_atom(child, name)
        except AgentError:
            continue
    raise AgentError(f"no atom {name!r} in pattern")


def _unresolved_primed(term: Term, primed: frozenset[str], st: RoleState) -> set[str]:
    """Primed variables in ``term`` that have not been rebound yet.

    A primed variable is bound at its first extractable occurrence; until
    then, any check computed from it cannot be evaluated and is skipped —
    which is exactly the verification a mutation removes.
    """
    out: set[str] = set()
    if isinstance(term, Atom):
        if term.name in primed and term.name not in st.rebound:
            out.add(term.name)
        return out
    for child in term.children():
        out |= _unresolved_primed(child, primed, st)
    return out


def _expect_tag(frame: bytes, tags: tuple[int, ...], what: str) -> None:
    tag, _ = wire.peek(frame)
    if tag not in tags:
        raise ProtocolViolation(ALERT_DECODE, f"expected {what}")


def _match(
    pattern: Term,
    frame: bytes,
    st: RoleState,
    primed: frozenset[str],
    role: Role,
    suite: CryptoSuite,
) -> None:
    if isinstance(pattern, Atom):
        if pattern.name in primed and pattern.name not in st.rebound:
            st.rebound.add(pattern.name)
            st.bindings[pattern] = frame
            return
        known = st.bindings.get(pattern)
        if known is None and pattern.sort is not Sort.NONCE:
            known = suite.atom_frame(pattern)
        if known is None:
            st.bindings[pattern] = frame
            return
        if known != frame:
            raise ProtocolViolation(
                ALERT_CHECK, f"value check failed for {pattern.name!r}"
            )
        st.bindings.setdefault(pattern, frame)
        return
    if isinstance(pattern, Pair):
        try:
            left, right = suite.unpair1(frame), suite.unpair2(frame)
        except SuiteError:
            raise ProtocolViolation(ALERT_DECODE, "expected a pair") from None
        _match(pattern.left, left, st, primed, role, suite)
        _match(pattern.right, right, st, primed, role, suite)
        return
    if isinstance(pattern, Crypt):
        if isinstance(pattern.key, Inv):
            _expect_tag(frame, (wire.SIG,), "a signature")
            if _unresolved_primed(pattern.key, primed, st):
                return  # verification key unknowable: accept unverified
            verify_key = _instantiate(pattern.key.key, st.bindings, suite)
            try:
                plaintext = suite.verify(verify_key, frame)
            except DecryptError as exc:
                raise ProtocolViolation(ALERT_DECODE, str(exc)) from None
        else:
            _expect_tag(frame, (wire.ACRYPT,), "an asymmetric ciphertext")
            if _unresolved_primed(pattern.key, primed, st):
                return
            if Inv(pattern.key) not in role.knowledge and Inv(pattern.key) not in st.bindings:
                raise AgentError(
                    f"role {role.name!r} lacks inv({render_term(pattern.key)})"
                )
            key_frame = _instantiate(pattern.key, st.bindings, suite)
            try:
                plaintext = suite.decrypt(suite.inv_envelope(key_frame), frame)
            except DecryptError as exc:
                raise ProtocolViolation(ALERT_DECODE, str(exc)) from None
        _match(pattern.payload, plaintext, st, primed, role, suite)
        return
    if isinstance(pattern, SCrypt):
        _expect_tag(frame, (wire.SCRYPT,), "a symmetric ciphertext")
        if _unresolved_primed(pattern.key, primed, st):
            # the decryption key depends on a value bound "fresh" here, so
            # nothing about the ciphertext can be checked: accept it
            return
        key_frame = _instantiate(pattern.key, st.bindings, suite)
        try:
            plaintext = suite.decrypt(key_frame, frame)
        except DecryptError as exc:
            raise ProtocolViolation(ALERT_DECODE, str(exc)) from None
        _match(pattern.payload, plaintext, st, primed, role, suite)
        return
    # one-way positions (hash, apply, inv): recompute and compare
    if isinstance(pattern, Hash):
        _expect_tag(frame, (wire.HASH,), "a hash")
    elif isinstance(pattern, Apply):
        _expect_tag(frame, (wire.APPLY,), "a function application")
    if _unresolved_primed(pattern, primed, st):
        return  # value declared new here; nothing to compare against
    try:
        expected = _instantiate(pattern, st.bindings, suite)
    except AgentError as exc:
        raise AgentError(f"uncheckable one-way pattern {render_term(pattern)}: {exc}")
    if expected != frame:
        raise ProtocolViolation(ALERT_CHECK, f"mismatch at {render_term(pattern)}")


def finished_value(role: Role, st: RoleState, suite: CryptoSuite) -> bytes | None:
    """The bytes of the last hash carried inside a symmetric encryption.

    For the handshake models this is the finished-message digest both sides
    must agree on; roles without such a transition yield None.
    """
    candidate: Term | None = None
    for tr in role.transitions:
        pat = tr.pattern
        sub = _find_scrypt_hash(pat)
        if sub is not None:
            candidate = sub
    if candidate is None:
        return None
    try:
        return _instantiate(candidate, st.bindings, suite)
    except AgentError:
        return None


def _find_scrypt_hash(t: Term) -> Term | None:
    found = None
    if isinstance(t, SCrypt) and isinstance(t.payload, Hash):
        found = t.payload
    for child in t.children():
        deeper = _find_scrypt_hash(child)
        if deeper is not None:
            found = deeper
    return found


def wants_start(model: ProtocolModel, role_name: str) -> bool:
    """True if the role is activated by the environment's start message.

    Honest runs self-inject it; in an attack run the intruder usually plays
    the environment and sends it over the wire.
    """
    transitions = model.live_transitions(model.role(role_name))
    if not transitions:
        return False
    first = transitions[0]
    return first.direction == RCV and first.pattern == Atom("start", Sort.TEXT)


def run_role(
    model: ProtocolModel,
    role_name: str,
    channel,
    suite: CryptoSuite,
    *,
    step_timeout: float = 5.0,
    inject_start: bool = False,
    state: RoleState | None = None,
    start_at: int = 1,
    pending: list[bytes] | None = None,
    on_event=None,
) -> RoleResult:
    role = model.role(role_name)
    st = state or RoleState(role, initial_bindings(role, suite))
    result = RoleResult(status=COMPLETED)
    queue_in: list[bytes] = list(pending or [])
    if inject_start:
        queue_in.insert(0, wire.name_frame("start"))

    def emit(event: str) -> None:
        result.events.append(event)
        if on_event is not None:
            on_event(event)

    for tr in model.live_transitions(role):
        if tr.index < start_at:
            continue
        st.rebound = set()
        if tr.direction == SND:
            _generate_fresh(st, tr, suite)
            try:
                frame = _instantiate(tr.pattern, st.bindings, suite)
            except AgentError as exc:
                raise AgentError(f"transition {tr.index}: {exc}") from None
            channel.send_frame(frame)
            emit(f"transition index={tr.index} dir=SND")
        else:
            try:
                frame = queue_in.pop(0) if queue_in else channel.recv_frame(step_timeout)
            except ChannelTimeout:
                result.status = TIMEOUT
                emit(f"timeout index={tr.index}")
                return _finalize(result, role, st, suite)
            except ChannelClosed:
                result.status = TIMEOUT
                emit(f"closed index={tr.index}")
                return _finalize(result, role, st, suite)
            code = wire.alert_code(frame)
            if code is not None:
                result.status = PEER_ALERT
                result.alert_received = code
                emit(f"alert code={code} dir=received")
                return _finalize(result, role, st, suite)
            try:
                _match(tr.pattern, frame, st, tr.primed_vars(), role, suite)
            except ProtocolViolation as exc:
                channel.send_frame(wire.alert_frame(exc.code))
                result.status = PROTOCOL_ERROR
                result.alert_sent = exc.code
                emit(f"alert code={exc.code} dir=sent reason={exc}")
                return _finalize(result, role, st, suite)
            emit(f"transition index={tr.index} dir=RCV")
        st.program_counter = tr.index + 1
        result.progress += 1

    return _finalize(result, role, st, suite)


def _finalize(result: RoleResult, role: Role, st: RoleState, suite: CryptoSuite) -> RoleResult:
    result.finished_value = finished_value(role, st, suite)
    return result


# ---------------------------------------------------------------------------
# The toy TLS server (renegotiation behaviour under test)
# ---------------------------------------------------------------------------


def _client_write_key_term(model: ProtocolModel, role: Role) -> Term:
    """The key pattern of the last symmetric receive: the client-write key."""
    candidate: Term | None = None
    for tr in model.live_transitions(role):
        if tr.direction == RCV and isinstance(tr.pattern, (SCrypt,)):
            candidate = tr.pattern.key
        elif tr.direction == RCV:
            for sub in _walk(tr.pattern):
                if isinstance(sub, SCrypt):
                    candidate = sub.key
    if candidate is None:
        raise AgentError("model has no symmetric receive; cannot renegotiate")
    return candidate


def _walk(t: Term):
    yield t
    for child in t.children():
        yield from _walk(child)


def _hello_transition(model: ProtocolModel, role: Role) -> Transition:
    for tr in model.live_transitions(role):
        if tr.direction == RCV and tr.pattern != Atom("start", Sort.TEXT):
            return tr
    raise AgentError("role has no hello transition")


def _looks_like_hello(frame: bytes, model: ProtocolModel, suite: CryptoSuite) -> bool:
    try:
        head = suite.unpair1(frame)
    except SuiteError:
        return False
    try:
        tag, payload = wire.unpack(head)
    except wire.WireError:
        return False
    if tag != wire.NAME:
        return False
    name = payload.decode("utf-8", "replace")
    return name in model.sorts and model.sorts.sort_of(name) is Sort.AGENT


def run_tls_server(
    model: ProtocolModel,
    channel,
    suite: CryptoSuite,
    *,
    allow_renegotiation: bool,
    role_name: str = "server",
    step_timeout: float = 5.0,
    renegotiation_window: float = 1.0,
    on_event=None,
) -> RoleResult:
    """Serve one abstract handshake, then handle a renegotiation attempt.

    A post-handshake frame that decrypts under the session client-write key
    to a fresh client hello restarts the handshake when allowed; otherwise
    the server answers alert 0x64 and stops.
    """
    role = model.role(role_name)
    st = RoleState(role, initial_bindings(role, suite))
    result = run_role(
        model,
        role_name,
        channel,
        suite,
        step_timeout=step_timeout,
        state=st,
        on_event=on_event,
    )
    if result.status != COMPLETED:
        return result

    def emit(event: str) -> None:
        result.events.append(event)
        if on_event is not None:
            on_event(event)

    try:
        frame = channel.recv_frame(renegotiation_window)
    except (ChannelTimeout, ChannelClosed):
        return result  # no renegotiation attempt; normal completion

    key_term = _client_write_key_term(model, role)
    try:
        key_frame = _instantiate(key_term, st.bindings, suite)
        plaintext = suite.decrypt(key_frame, frame)
    except (AgentError, SuiteError):
        channel.send_frame(wire.alert_frame(ALERT_DECODE))
        result.status = PROTOCOL_ERROR
        result.alert_sent = ALERT_DECODE
        emit(f"alert code={ALERT_DECODE} dir=sent reason=bad post-handshake frame")
        return result
    if not _looks_like_hello(plaintext, model, suite):
        channel.send_frame(wire.alert_frame(ALERT_DECODE))
        result.status = PROTOCOL_ERROR
        result.alert_sent = ALERT_DECODE
        emit(f"alert code={ALERT_DECODE} dir=sent reason=not a client hello")
        return result

    if not allow_renegotiation:
        channel.send_frame(wire.alert_frame(ALERT_NO_RENEGOTIATION))
        result.status = PROTOCOL_ERROR
        result.alert_sent = ALERT_NO_RENEGOTIATION
        emit(f"alert code={ALERT_NO_RENEGOTIATION} dir=sent reason=renegotiation refused")
        return result

    emit("renegotiation action=accepted")
    hello = _hello_transition(model, role)
    st2 = RoleState(role, initial_bindings(role, suite), session=st.session + 1)
    try:
        _match(hello.pattern, plaintext, st2, hello.primed_vars(), role, suite)
    except ProtocolViolation as exc:
        channel.send_frame(wire.alert_frame(exc.code))
        result.status = PROTOCOL_ERROR
        result.alert_sent = exc.code
        return result
    st2.program_counter = hello.index + 1
    inner = run_role(
        model,
        role_name,
        channel,
        suite,
        step_timeout=step_timeout,
        state=st2,
        start_at=hello.index + 1,
        on_event=on_event,
    )
    result.events.extend(inner.events)
    # the attack verdict only cares that no alert was raised; the restarted
    # handshake usually times out once the intruder stops talking.
    return result


# ---------------------------------------------------------------------------
# Mutant divergence probes
# ---------------------------------------------------------------------------


@dataclass
class ProbeReport:
    point: MutationPoint
    original: RoleResult
    mutant: RoleResult

    @property
    def diverges(self) -> bool:
        # the original rejects with an alert (0x28 for plain value checks,
        # 0x01 when the corruption lands in a decryption key), the mutant
        # sails past the corrupted transition without alerting
        return (
            self.original.status == PROTOCOL_ERROR
            and self.original.alert_sent is not None
            and self.mutant.alert_sent is None
            and self.mutant.progress > self.original.progress
        )


class _Driver:
    """Plays the counterpart of a role, omnisciently, over a channel."""

    def __init__(self, model: ProtocolModel, role: Role, suite: CryptoSuite):
        self.model = model
        self.role = role
        self.suite = suite
        self.bindings: dict[Term, bytes] = {}

    def value_of(self, term: Term, overrides: dict[str, bytes]) -> bytes:
        if isinstance(term, Atom):
            if term.name in overrides:
                return overrides[term.name]
            cached = self.bindings.get(term)
            if cached is not None:
                return cached
            if term.sort is Sort.NONCE:
                value = wire.bytes_frame(self.suite.fresh_value(f"drv:{term.name}"))
            else:
                value = self.suite.atom_frame(term)
            self.bindings[term] = value
            return value
        if isinstance(term, Pair):
            return self.suite.pair(
                self.value_of(term.left, overrides), self.value_of(term.right, overrides)
            )
        if isinstance(term, Crypt):
            return self.suite.crypt(
                self.value_of(term.key, overrides), self.value_of(term.payload, overrides)
            )
        if isinstance(term, SCrypt):
            return self.suite.scrypt(
                self.value_of(term.key, overrides), self.value_of(term.payload, overrides)
            )
        if isinstance(term, Inv):
            return self.suite.inv_envelope(self.value_of(term.key, overrides))
        if isinstance(term, Hash):
            return self.suite.hash(self.value_of(term.payload, overrides))
        if isinstance(term, Apply):
            return self.suite.apply(
                term.fn, [self.value_of(a, overrides) for a in term.args]
            )
        raise AgentError(f"driver cannot build {term!r}")

    def absorb(self, pattern: Term, frame: bytes) -> None:
        """Learn the role's fresh values from a frame it sent."""
        if isinstance(pattern, Atom):
            self.bindings.setdefault(pattern, frame)
            return
        if isinstance(pattern, Pair):
            self.absorb(pattern.left, self.suite.unpair1(frame))
            self.absorb(pattern.right, self.suite.unpair2(frame))
            return
        if isinstance(pattern, Crypt):
            if isinstance(pattern.key, Inv):
                plaintext = self.suite.verify(self.value_of(pattern.key.key, {}), frame)
            else:
                plaintext = self.suite.decrypt(
                    self.suite.inv_envelope(self.value_of(pattern.key, {})), frame
                )
            self.absorb(pattern.payload, plaintext)
            return
        if isinstance(pattern, SCrypt):
            plaintext = self.suite.decrypt(self.value_of(pattern.key, {}), frame)
            self.absorb(pattern.payload, plaintext)
            return
        # hash / apply positions carry nothing the driver does not know

    def drive(self, channel, upto: int, corrupt: "MutationPoint | None") -> None:
        for tr in self.model.live_transitions(self.role):
            if tr.index > upto:
                break
            if tr.direction == RCV:
                overrides: dict[str, bytes] = {}
                if corrupt is not None and tr.index == upto:
                    # computed here so the driver's learned bindings reflect
                    # the run so far and the corruption provably differs
                    overrides[corrupt.variable_name] = self.wrong_value_for(corrupt)
                # primed variables are fresh from the role's perspective, so
                # the driver invents them; its nonce defaults already do.
                channel.send_frame(self.value_of(tr.pattern, overrides))
            else:
                frame = channel.recv_frame(5.0)
                self.absorb(tr.pattern, frame)
        channel.close()

    def wrong_value_for(self, point: "MutationPoint") -> bytes:
        if point.kind == "nonce":
            return wire.bytes_frame(self.suite.fresh_value(f"probe-wrong:{point.point_id}"))
        # agent-id: any other agent's name
        current = self.value_of(Atom(point.variable_name, Sort.AGENT), {})
        for name in self.model.sorts.names(Sort.AGENT):
            frame = wire.name_frame(name)
            if frame != current and name != point.variable_name:
                return frame
        raise AgentError("model has no alternative agent identity to probe with")


def probe_point(
    model: ProtocolModel, mutant: ProtocolModel, point: MutationPoint, *, seed: int = 0
) -> ProbeReport:
    """Run the corrupted probe against both the original and the mutant role."""

    def one(m: ProtocolModel) -> RoleResult:
        role_side, driver_side = loopback_pair()
        suite_role = make_suite("transparent", seed, f"probe-role-{point.role_name}")
        suite_driver = make_suite("transparent", seed, "probe-driver")
        driver = _Driver(m, m.role(point.role_name), suite_driver)
        outcome: dict[str, RoleResult] = {}

        def runner():
            outcome["result"] = run_role(
                m, point.role_name, role_side, suite_role, step_timeout=5.0
            )

        thread = threading.Thread(target=runner, daemon=True)
        thread.start()
        try:
            driver.drive(driver_side, point.transition_index, point)
        except (ChannelTimeout, ChannelClosed, SuiteError, AgentError):
            pass
        thread.join(timeout=10.0)
        if "result" not in outcome:
            raise AgentError(f"probe of {point.point_id} did not terminate")
        return outcome["result"]

    return ProbeReport(point, original=one(model), mutant=one(mutant))
