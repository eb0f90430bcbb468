"""The platform's interface to the system under test.

Opens the real communication channels described by an environment
configuration, spawns honest agents as separate local processes, relays or
manipulates frames (send / intercept / block / redirect), records every
transiting frame in an append-only traffic log, and renders the attack
verdict from that log.

Verdicts: ``confirmed`` when the engine's finish marker is logged with no
earlier error-classified frame, ``rejected`` when any inbound frame matches
one of the configured error patterns, ``inconclusive`` otherwise.
"""

from __future__ import annotations

import re
import socket
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import wire
from .engine import ChannelClosed, ChannelTimeout, Inbound
from .agents import SocketChannel, connect_channel
from .agents import ChannelClosed as AgentChannelClosed
from .agents import ChannelTimeout as AgentChannelTimeout


class ConfigError(Exception):
    pass


class SimulatorError(Exception):
    pass


# ---------------------------------------------------------------------------
# Environment configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentSpec:
    name: str
    kind: str  # honest | intruder | external
    role: str | None = None
    model: str | None = None
    listen: str | None = None
    connect: str | None = None
    flags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ChannelSpec:
    frm: str
    to: str
    host: str
    port: int

    @property
    def name(self) -> str:
        return f"{self.frm}-{self.to}"


@dataclass(frozen=True)
class ErrorPattern:
    kind: str  # alert-code | byte-prefix
    value: str  # hex alert code or hex prefix
    description: str

    def matches(self, frame: bytes) -> bool:
        if self.kind == "alert-code":
            return wire.alert_code(frame) == int(self.value, 16)
        return frame.startswith(bytes.fromhex(self.value))


@dataclass
class EnvironmentConfig:
    agents: dict[str, AgentSpec]
    channels: list[ChannelSpec]
    errors: list[ErrorPattern]
    limits: dict[str, float]

    @property
    def intruder(self) -> str:
        for spec in self.agents.values():
            if spec.kind == "intruder":
                return spec.name
        raise ConfigError("no intruder agent configured")

    def limit(self, key: str, default: float) -> float:
        return self.limits.get(key, default)

    def classify(self, frame: bytes) -> tuple[str, str | None]:
        for pattern in self.errors:
            if pattern.matches(frame):
                return "error", pattern.description
        return "normal", None

    def channel_with(self, peer: str) -> ChannelSpec:
        me = self.intruder
        for spec in self.channels:
            if {spec.frm, spec.to} == {me, peer}:
                return spec
        raise ConfigError(f"no channel between {me!r} and {peer!r}")

    def validate(self) -> None:
        intruders = [s for s in self.agents.values() if s.kind == "intruder"]
        if len(intruders) != 1:
            raise ConfigError("exactly one intruder agent is required")
        me = intruders[0].name
        seen_addrs: set[tuple[str, int]] = set()
        for spec in self.channels:
            if me not in (spec.frm, spec.to):
                raise ConfigError(f"channel {spec.name} does not involve the intruder")
            for end in (spec.frm, spec.to):
                if end not in self.agents:
                    raise ConfigError(f"channel {spec.name} references unknown agent {end!r}")
            if (spec.host, spec.port) in seen_addrs:
                raise ConfigError(f"address {spec.host}:{spec.port} used by two channels")
            seen_addrs.add((spec.host, spec.port))
        listen_addrs = [s.listen for s in self.agents.values() if s.listen]
        if len(listen_addrs) != len(set(listen_addrs)):
            raise ConfigError("two agents bound to one address")

    def to_text(self) -> str:
        out = ["[agents]"]
        for spec in self.agents.values():
            parts = [f"kind={spec.kind}"]
            if spec.role:
                parts.append(f"role={spec.role}")
            if spec.model:
                parts.append(f"model={spec.model}")
            if spec.listen:
                parts.append(f"listen={spec.listen}")
            if spec.connect:
                parts.append(f"connect={spec.connect}")
            if spec.flags:
                parts.append(f"flags={','.join(sorted(spec.flags))}")
            out.append(f"{spec.name} = " + " ".join(parts))
        out.append("")
        out.append("[channels]")
        for ch in self.channels:
            out.append(f"{ch.frm} -> {ch.to} @ {ch.host}:{ch.port}")
        out.append("")
        out.append("[errors]")
        for pat in self.errors:
            out.append(f"{pat.kind} {pat.value} {pat.description}")
        out.append("")
        out.append("[limits]")
        for key, value in self.limits.items():
            out.append(f"{key} = {value}")
        out.append("")
        return "\n".join(out)


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"bad address {text!r} (want host:port)")
    return host, int(port)


_CHANNEL_RE = re.compile(r"^(\w+)\s*(?:->|→)\s*(\w+)\s*@\s*(\S+)$")


def parse_config(src: str) -> EnvironmentConfig:
    agents: dict[str, AgentSpec] = {}
    channels: list[ChannelSpec] = []
    errors: list[ErrorPattern] = []
    limits: dict[str, float] = {}
    section = None
    for lineno, raw in enumerate(src.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section not in ("agents", "channels", "errors", "limits"):
                raise ConfigError(f"line {lineno}: unknown section {section!r}")
            continue
        if section == "agents":
            name, _, rest = line.partition("=")
            name = name.strip()
            if not name:
                raise ConfigError(f"line {lineno}: agent entry needs a name")
            fields: dict[str, str] = {}
            for item in rest.split():
                key, _, value = item.partition("=")
                if not value:
                    raise ConfigError(f"line {lineno}: bad agent field {item!r}")
                fields[key] = value
            flags = frozenset(f for f in fields.get("flags", "").split(",") if f)
            agents[name] = AgentSpec(
                name=name,
                kind=fields.get("kind", "honest"),
                role=fields.get("role"),
                model=fields.get("model"),
                listen=fields.get("listen"),
                connect=fields.get("connect"),
                flags=flags,
            )
        elif section == "channels":
            m = _CHANNEL_RE.match(line)
            if not m:
                raise ConfigError(f"line {lineno}: expected 'from -> to @ host:port'")
            host, port = _parse_addr(m.group(3))
            channels.append(ChannelSpec(m.group(1), m.group(2), host, port))
        elif section == "errors":
            parts = line.split(None, 2)
            if len(parts) < 2 or parts[0] not in ("alert-code", "byte-prefix"):
                raise ConfigError(f"line {lineno}: expected 'alert-code|byte-prefix value [desc]'")
            value = parts[1][2:] if parts[1].startswith("0x") else parts[1]
            try:
                bytes.fromhex(value if len(value) % 2 == 0 else "0" + value)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad hex value {parts[1]!r}") from None
            desc = parts[2] if len(parts) > 2 else f"{parts[0]} {parts[1]}"
            errors.append(ErrorPattern(parts[0], value, desc))
        elif section == "limits":
            key, _, value = line.partition("=")
            try:
                limits[key.strip()] = float(value.strip())
            except ValueError:
                raise ConfigError(f"line {lineno}: bad limit {line!r}") from None
        else:
            raise ConfigError(f"line {lineno}: content outside any section")
    cfg = EnvironmentConfig(agents, channels, errors, limits)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> EnvironmentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# Traffic log
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogEvent:
    seq: int
    channel: str
    direction: str  # in | out | local
    data: bytes
    timestamp: float
    classification: str  # normal | error | finish


class TrafficLog:
    def __init__(self):
        self.events: list[LogEvent] = []
        self._lock = threading.Lock()
        self._closed = False

    def append(self, channel: str, direction: str, data: bytes, classification: str) -> LogEvent:
        with self._lock:
            if self._closed:
                raise SimulatorError("traffic log is closed")
            event = LogEvent(
                seq=len(self.events),
                channel=channel,
                direction=direction,
                data=data,
                timestamp=time.time(),
                classification=classification,
            )
            self.events.append(event)
            return event

    def close(self) -> None:
        with self._lock:
            self._closed = True

    def export_lines(self) -> list[str]:
        """Stable record format ``seq|channel|dir|hex-bytes|class`` (no timestamps)."""
        return [
            f"{e.seq}|{e.channel}|{e.direction}|{e.data.hex()}|{e.classification}"
            for e in self.events
        ]

    def export(self) -> str:
        return "\n".join(self.export_lines()) + "\n"

    @classmethod
    def parse_export(cls, text: str) -> "TrafficLog":
        log = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            parts = line.split("|")
            if len(parts) != 5:
                raise SimulatorError(f"bad log record {line!r}")
            seq, channel, direction, hexdata, classification = parts
            event = LogEvent(
                seq=int(seq),
                channel=channel,
                direction=direction,
                data=bytes.fromhex(hexdata),
                timestamp=0.0,
                classification=classification,
            )
            log.events.append(event)
        return log


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    kind: str  # confirmed | rejected | inconclusive
    pattern: ErrorPattern | None = None
    event_seq: int | None = None

    def __str__(self) -> str:
        if self.kind == "rejected" and self.pattern is not None:
            return f"rejected ({self.pattern.description})"
        return self.kind


def validate(log: TrafficLog, cfg: EnvironmentConfig) -> Verdict:
    """Judge a finished run from its traffic log alone (re-checkable offline)."""
    finish_seq: int | None = None
    first_error: LogEvent | None = None
    for event in log.events:
        if event.classification == "finish" and finish_seq is None:
            finish_seq = event.seq
        if event.classification == "error" and first_error is None:
            first_error = event
    if finish_seq is not None and (first_error is None or first_error.seq > finish_seq):
        return Verdict("confirmed")
    if first_error is not None:
        pattern = next(
            (p for p in cfg.errors if p.matches(first_error.data)), None
        )
        return Verdict("rejected", pattern=pattern, event_seq=first_error.seq)
    return Verdict("inconclusive")


# ---------------------------------------------------------------------------
# The simulator handle
# ---------------------------------------------------------------------------


class SimulatorHandle:
    """Owns the real channels; every frame crossing them is logged."""

    def __init__(self, cfg: EnvironmentConfig):
        self.cfg = cfg
        self.log = TrafficLog()
        self._channels: dict[str, SocketChannel] = {}
        self._listeners: dict[str, socket.socket] = {}
        self._finished = False

    # -- lifecycle ---------------------------------------------------------

    def open(self, *, connect_timeout: float = 5.0) -> "SimulatorHandle":
        me = self.cfg.intruder
        for spec in self.cfg.channels:
            if spec.frm == me:
                # the remote end is a listening system under test
                try:
                    self._channels[spec.name] = connect_channel(
                        spec.host, spec.port, timeout=connect_timeout
                    )
                except AgentChannelClosed as exc:
                    self.close()
                    raise SimulatorError(str(exc)) from None
            else:
                # an honest agent will connect to us
                server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                try:
                    server.bind((spec.host, spec.port))
                except OSError as exc:
                    server.close()
                    self.close()
                    raise SimulatorError(f"cannot bind {spec.host}:{spec.port}: {exc}") from None
                server.listen(1)
                self._listeners[spec.name] = server
        return self

    def await_connections(self, timeout: float = 10.0) -> None:
        for name, server in list(self._listeners.items()):
            server.settimeout(timeout)
            try:
                conn, _ = server.accept()
            except socket.timeout:
                raise SimulatorError(f"no peer connected on channel {name}") from None
            finally:
                server.close()
                del self._listeners[name]
            self._channels[name] = SocketChannel(conn)

    def close(self) -> None:
        for chan in self._channels.values():
            chan.close()
        self._channels.clear()
        for server in self._listeners.values():
            server.close()
        self._listeners.clear()

    # -- engine-facing interface --------------------------------------------

    def route(self, sender: str | None, receiver: str | None) -> str:
        me = self.cfg.intruder
        peer = receiver if sender in (me, None) else sender
        if peer is None or peer == me:
            if len(self._channels) == 1:
                return next(iter(self._channels))
            raise SimulatorError("cannot route a step without endpoints")
        return self.cfg.channel_with(peer).name

    def _chan(self, name: str) -> SocketChannel:
        try:
            return self._channels[name]
        except KeyError:
            raise SimulatorError(f"channel {name!r} is not open") from None

    def send(self, channel: str, frame: bytes) -> None:
        try:
            self._chan(channel).send_frame(frame)
        except AgentChannelClosed as exc:
            raise ChannelClosed(str(exc)) from None
        self.log.append(channel, "out", frame, "normal")

    def recv(self, channel: str, timeout: float) -> Inbound:
        try:
            frame = self._chan(channel).recv_frame(timeout)
        except AgentChannelTimeout:
            raise ChannelTimeout(f"channel {channel}") from None
        except AgentChannelClosed as exc:
            raise ChannelClosed(str(exc)) from None
        classification, detail = self.cfg.classify(frame)
        self.log.append(channel, "in", frame, classification)
        return Inbound(frame, classification, detail)

    def intercept(self, channel: str, timeout: float = 5.0) -> bytes:
        """Remove the next inbound frame without forwarding it anywhere."""
        return self.recv(channel, timeout).frame

    def block(self, channel: str, count: int, timeout: float = 5.0) -> int:
        """Silently drop the next ``count`` inbound frames; returns #dropped."""
        dropped = 0
        for _ in range(count):
            try:
                self.recv(channel, timeout)
            except (ChannelTimeout, ChannelClosed):
                break
            dropped += 1
        return dropped

    def redirect(self, from_channel: str, to_channel: str, count: int, timeout: float = 5.0) -> int:
        """Forward the next ``count`` frames between channels, unmodified."""
        moved = 0
        for _ in range(count):
            try:
                inbound = self.recv(from_channel, timeout)
            except (ChannelTimeout, ChannelClosed):
                break
            self.send(to_channel, inbound.frame)
            moved += 1
        return moved

    def drain(self, grace: float) -> list[Inbound]:
        """Collect whatever arrives on any channel within the grace window."""
        collected: list[Inbound] = []
        deadline = time.monotonic() + grace
        while time.monotonic() < deadline:
            got_any = False
            for name in list(self._channels):
                try:
                    collected.append(self.recv(name, timeout=0.05))
                    got_any = True
                except (ChannelTimeout, ChannelClosed):
                    continue
            if not got_any:
                time.sleep(0.02)
        return collected

    def log_finish(self) -> None:
        if not self._finished:
            self.log.append("-", "local", b"", "finish")
            self._finished = True


def open_channels(cfg: EnvironmentConfig, *, connect_timeout: float = 5.0) -> SimulatorHandle:
    cfg.validate()
    return SimulatorHandle(cfg).open(connect_timeout=connect_timeout)


# ---------------------------------------------------------------------------
# Agent processes
# ---------------------------------------------------------------------------

_EVENT_RE = re.compile(r"^EVENT\s+(\w[\w-]*)\s*(.*)$")


class AgentHandle:
    """A spawned honest-target process and its parsed event stream."""

    def __init__(self, spec: AgentSpec, proc: subprocess.Popen):
        self.spec = spec
        self.proc = proc
        self.events: list[dict[str, str]] = []
        self._lock = threading.Lock()
        self._ready = threading.Event()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self.proc.stdout is not None
        for raw in self.proc.stdout:
            line = raw.decode("utf-8", "replace").rstrip()
            m = _EVENT_RE.match(line)
            if not m:
                continue
            event = {"event": m.group(1)}
            for item in m.group(2).split():
                key, _, value = item.partition("=")
                event[key] = value
            with self._lock:
                self.events.append(event)
            if event["event"] == "ready":
                self._ready.set()

    def wait_ready(self, timeout: float = 10.0) -> None:
        if not self._ready.wait(timeout):
            self.stop()
            raise SimulatorError(f"agent {self.spec.name!r} did not become ready")

    def status(self) -> dict[str, str]:
        """Snapshot: latest value per event kind."""
        snapshot: dict[str, str] = {}
        with self._lock:
            for event in self.events:
                kind = event["event"]
                if kind == "transition":
                    snapshot["transition"] = event.get("index", "?")
                    snapshot["direction"] = event.get("dir", "?")
                elif kind == "status":
                    snapshot["terminal"] = event.get("terminal", "?")
                elif kind == "finished":
                    snapshot["finished"] = event.get("hex", "")
                elif kind == "alert":
                    snapshot["alert"] = event.get("code", "?")
                elif kind == "ready":
                    snapshot["ready"] = "yes"
                elif kind == "renegotiation":
                    snapshot["renegotiation"] = event.get("action", "?")
        return snapshot

    def wait(self, timeout: float = 10.0) -> int | None:
        try:
            return self.proc.wait(timeout)
        except subprocess.TimeoutExpired:
            return None

    def stop(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(2.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        self._reader.join(timeout=2.0)


def spawn_agent(
    spec: AgentSpec,
    *,
    suite: str,
    seed: int,
    limits: dict[str, float] | None = None,
    model_path: str | Path | None = None,
) -> AgentHandle:
    """Start an honest-target interpreter process for one config entry."""
    if spec.kind != "honest":
        raise SimulatorError(f"only honest agents are spawned, not {spec.kind!r}")
    model = str(model_path or spec.model or "")
    if not model:
        raise SimulatorError(f"agent {spec.name!r} has no model")
    if not spec.role:
        raise SimulatorError(f"agent {spec.name!r} has no role")
    from .model import ModelError, parse_model

    try:
        parse_model(Path(model).read_text()).role(spec.role)
    except OSError as exc:
        raise SimulatorError(f"agent {spec.name!r}: cannot read model: {exc}") from None
    except ModelError as exc:
        raise SimulatorError(f"agent {spec.name!r}: {exc}") from None
    cmd = [
        sys.executable,
        "-m",
        "traceplay.cli",
        "agent",
        "--model",
        model,
        "--role",
        spec.role,
        "--party",
        spec.name,
        "--suite",
        suite,
        "--seed",
        str(seed),
    ]
    if spec.listen:
        cmd += ["--listen", spec.listen]
    elif spec.connect:
        cmd += ["--connect", spec.connect]
    else:
        raise SimulatorError(f"agent {spec.name!r} needs listen= or connect=")
    if "tls-server" in spec.flags:
        cmd.append("--tls-server")
    if "allow-renegotiation" in spec.flags:
        cmd.append("--allow-renegotiation")
    if "inject-start" in spec.flags:
        cmd.append("--inject-start")
    limits = limits or {}
    if "step-timeout" in limits:
        cmd += ["--step-timeout", str(limits["step-timeout"])]
    if "renegotiation-window" in limits:
        cmd += ["--renegotiation-window", str(limits["renegotiation-window"])]
    proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
    return AgentHandle(spec, proc)
