"""Scenario execution: the write-once data store and the instruction loop.

Every elementary instruction falls into exactly one of four cases — send,
receive, operator, finish — and anything else is rejected when the scenario
is loaded, never mid-run.  Sends fetch the prepared frame from the store and
hand it to the simulator; receives store the inbound frame; operators fetch
their argument slots, call one primitive, and store the result; finish ends
the run.

The store is write-once: writing to an occupied slot asserts byte equality.
That single rule is also the run-time pattern matcher — a receive step whose
expected value was pre-derived puts the locally computed bytes and the
arriving bytes into the same slot, so any disagreement surfaces as a
mismatch verdict with the offending step and index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .compiler import Finish, Receive, Scenario, Send, validate_scenario
from .derivation import (
    GeneratedNonceAt,
    RApply,
    RCrypt,
    RDecrypt,
    RHash,
    RPair,
    RSCrypt,
    RUnpair1,
    RUnpair2,
    Recipe,
)
from .suites import CryptoSuite, SuiteError


class EngineError(Exception):
    pass


class StoreMismatch(Exception):
    def __init__(self, index: int):
        super().__init__(f"slot {index} already holds different bytes")
        self.index = index


class ChannelTimeout(Exception):
    pass


class ChannelClosed(Exception):
    pass


@dataclass
class Inbound:
    frame: bytes
    classification: str  # "normal" | "error"
    detail: str | None = None


class DataStore:
    """Indexed write-once storage of concrete frames, with counters."""

    def __init__(self):
        self.slots: dict[int, bytes] = {}
        self.fetches = 0
        self.stores = 0

    def fetch(self, index: int) -> bytes:
        try:
            data = self.slots[index]
        except KeyError:
            raise EngineError(f"data store has no slot {index}") from None
        self.fetches += 1
        return data

    def put(self, index: int, data: bytes) -> None:
        existing = self.slots.get(index)
        if existing is not None:
            if existing != data:
                raise StoreMismatch(index)
            return
        self.slots[index] = data
        self.stores += 1

    def peek(self, index: int) -> bytes | None:
        return self.slots.get(index)


@dataclass
class InstructionStats:
    kind: str  # send | receive | operator | finish
    step: int
    index: int | None
    fetches: int = 0
    stores: int = 0
    primitives: int = 0


@dataclass
class ExecutionReport:
    status: str  # finished | rejected | mismatch | timeout
    step: int | None = None
    index: int | None = None
    reason: str | None = None
    transcript: list[tuple] = field(default_factory=list)
    instructions: list[InstructionStats] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return self.status == "finished"


class _Counted:
    """Attribute counter deltas of the store to one instruction."""

    def __init__(self, store: DataStore, stats: InstructionStats):
        self.store = store
        self.stats = stats

    def __enter__(self):
        self._f, self._s = self.store.fetches, self.store.stores
        return self.stats

    def __exit__(self, *exc):
        self.stats.fetches += self.store.fetches - self._f
        self.stats.stores += self.store.stores - self._s
        return False


def _eval_recipe(
    index: int, recipe: Recipe, store: DataStore, suite: CryptoSuite, stats: InstructionStats
) -> None:
    stats.primitives += 1
    if isinstance(recipe, GeneratedNonceAt):
        value = suite.gen_nonce(f"nonce:{recipe.step}:{index}")
    elif isinstance(recipe, RPair):
        value = suite.pair(store.fetch(recipe.left), store.fetch(recipe.right))
    elif isinstance(recipe, RCrypt):
        value = suite.crypt(store.fetch(recipe.key), store.fetch(recipe.payload))
    elif isinstance(recipe, RSCrypt):
        value = suite.scrypt(store.fetch(recipe.key), store.fetch(recipe.payload))
    elif isinstance(recipe, RHash):
        value = suite.hash(store.fetch(recipe.payload))
    elif isinstance(recipe, RApply):
        value = suite.apply(recipe.fn, [store.fetch(a) for a in recipe.args])
    elif isinstance(recipe, RUnpair1):
        value = suite.unpair1(store.fetch(recipe.source))
    elif isinstance(recipe, RUnpair2):
        value = suite.unpair2(store.fetch(recipe.source))
    elif isinstance(recipe, RDecrypt):
        value = suite.decrypt(store.fetch(recipe.key), store.fetch(recipe.source))
    else:
        raise EngineError(f"recipe {recipe!r} is not executable")
    store.put(index, value)


def execute(
    scenario: Scenario,
    store: DataStore,
    suite: CryptoSuite,
    net,
    *,
    step_timeout: float = 5.0,
    finish_grace: float = 1.0,
) -> ExecutionReport:
    """Run a scenario against the simulator handle ``net``.

    ``net`` must provide ``route(sender, receiver)``, ``send(channel,
    frame)``, ``recv(channel, timeout) -> Inbound`` (raising ChannelTimeout),
    ``drain(grace) -> list[Inbound]`` and ``log_finish()``.
    """
    validate_scenario(scenario)
    report = ExecutionReport(status="finished")

    for index, term in scenario.initial:
        store.put(index, suite.encode(term))

    for step in scenario.steps:
        try:
            if isinstance(step.action, Send):
                for idx, recipe in step.recipes:
                    stats = InstructionStats("operator", step.number, idx)
                    with _Counted(store, stats):
                        _eval_recipe(idx, recipe, store, suite, stats)
                    report.instructions.append(stats)
                stats = InstructionStats("send", step.number, step.action.index)
                with _Counted(store, stats):
                    frame = store.fetch(step.action.index)
                channel = net.route(step.sender, step.receiver)
                net.send(channel, frame)
                report.instructions.append(stats)
                report.transcript.append(("send", step.number, step.action.index))
            elif isinstance(step.action, Receive):
                channel = net.route(step.sender, step.receiver)
                try:
                    inbound = net.recv(channel, step_timeout)
                except ChannelTimeout:
                    report.status = "timeout"
                    report.step = step.number
                    report.reason = f"no frame within {step_timeout}s"
                    return report
                if inbound.classification == "error":
                    report.status = "rejected"
                    report.step = step.number
                    report.reason = inbound.detail or "protocol error"
                    return report
                stats = InstructionStats("receive", step.number, step.action.index)
                with _Counted(store, stats):
                    store.put(step.action.index, inbound.frame)
                report.instructions.append(stats)
                report.transcript.append(("receive", step.number, step.action.index))
                for idx, recipe in step.recipes:
                    rstats = InstructionStats("operator", step.number, idx)
                    with _Counted(store, rstats):
                        _eval_recipe(idx, recipe, store, suite, rstats)
                    report.instructions.append(rstats)
            else:  # Finish
                drained = net.drain(finish_grace)
                for inbound in drained:
                    if inbound.classification == "error":
                        report.status = "rejected"
                        report.step = step.number
                        report.reason = inbound.detail or "protocol error"
                        return report
                net.log_finish()
                report.instructions.append(
                    InstructionStats("finish", step.number, None)
                )
                report.transcript.append(("finish", step.number))
                report.status = "finished"
                return report
        except StoreMismatch as exc:
            report.status = "mismatch"
            report.step = step.number
            report.index = exc.index
            report.reason = str(exc)
            return report
        except SuiteError as exc:
            report.status = "mismatch"
            report.step = step.number
            report.reason = f"primitive failed: {exc}"
            return report
        except ChannelClosed as exc:
            report.status = "timeout"
            report.step = step.number
            report.reason = f"channel closed: {exc}"
            return report

    raise EngineError("scenario ended without finish()")  # pragma: no cover
