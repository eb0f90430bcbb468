"""Attack traces and their compilation into executable scenarios.

A trace is an ordered list of abstract steps ``sender -> receiver: term``
describing the intruder's view of an attack.  Compilation walks the trace
against a protocol model's intruder knowledge: sends are derived (minting
fresh nonces where needed), receives either pre-derive the expected value
(so the engine's write-once store checks it on arrival) or allocate a
received-at slot whose decompositions feed later steps.

Scenario files follow the grammar in ``docs/scenario-format.md``: an
``iknown`` block, then one instruction per step (``!`` send / ``?`` receive)
followed by the step's recipe lines, and a terminal ``finish()``.  Recipe
lines normally define new indices; a line whose index is already occupied is
an equality assertion evaluated by the execution engine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .derivation import (
    Derivable,
    GeneratedNonceAt,
    IKnown,
    KnowledgeBase,
    RApply,
    RCrypt,
    RDecrypt,
    RHash,
    RPair,
    RSCrypt,
    RUnpair1,
    RUnpair2,
    ReceivedAt,
    Recipe,
    Underivable,
    _saturate,
    derive,
    is_derivable,
    recipe_operands,
    render_recipe,
    saturate,
)
from .model import ProtocolModel
from .terms import (
    Atom,
    Sort,
    SortTable,
    Term,
    TermError,
    parse_term,
    render_term,
)


class TraceError(Exception):
    pass


class CompileError(Exception):
    def __init__(self, message: str, step: int | None = None, missing: list[Term] | None = None):
        super().__init__(message)
        self.step = step
        self.missing = missing or []


class ScenarioError(Exception):
    pass


DEFAULT_INTRUDER = "i"


# ---------------------------------------------------------------------------
# Attack traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    sender: str
    receiver: str
    message: Term


@dataclass(frozen=True)
class AttackTrace:
    steps: tuple[TraceStep, ...]
    intruder: str


_TRACE_LINE_RE = re.compile(r"^(\w+)\s*(?:->|→)\s*(\w+)\s*:\s*(.+)$")


def parse_trace(src: str, sorts: SortTable, intruder: str = DEFAULT_INTRUDER) -> AttackTrace:
    steps: list[TraceStep] = []
    for lineno, raw in enumerate(src.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _TRACE_LINE_RE.match(line)
        if not m:
            raise TraceError(f"line {lineno}: expected 'sender -> receiver: term'")
        sender, receiver, body = m.group(1), m.group(2), m.group(3)
        for agent in (sender, receiver):
            if agent not in sorts or sorts.sort_of(agent) is not Sort.AGENT:
                raise TraceError(f"line {lineno}: unknown agent {agent!r}")
        if intruder not in (sender, receiver):
            raise TraceError(
                f"line {lineno}: neither endpoint is the intruder {intruder!r}"
            )
        try:
            message = parse_term(body, sorts, start_line=lineno)
        except TermError as exc:
            raise TraceError(f"line {lineno}: {exc}") from None
        steps.append(TraceStep(sender, receiver, message))
    if not steps:
        raise TraceError("empty attack trace")
    return AttackTrace(tuple(steps), intruder)


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    index: int
    expected: Term


@dataclass(frozen=True)
class Receive:
    index: int
    expected: Term


@dataclass(frozen=True)
class Finish:
    pass


Action = Send | Receive | Finish


@dataclass(frozen=True)
class ScenarioStep:
    number: int
    action: Action
    recipes: tuple[tuple[int, Recipe], ...]
    sender: str | None = None
    receiver: str | None = None


@dataclass(frozen=True)
class Scenario:
    initial: tuple[tuple[int, Term], ...]
    steps: tuple[ScenarioStep, ...]
    intruder: str = DEFAULT_INTRUDER

    @property
    def terminated_by_finish(self) -> bool:
        return bool(self.steps) and isinstance(self.steps[-1].action, Finish)


def validate_scenario(s: Scenario) -> None:
    """Load-time totality check: every line falls into a known case and every
    index is defined (in engine evaluation order) before it is read."""
    if not s.initial:
        raise ScenarioError("missing iknown block")
    for i, (idx, _) in enumerate(s.initial):
        if idx != i:
            raise ScenarioError(f"iknown indices must be dense from 0, found {idx}")
    defined: set[int] = {idx for idx, _ in s.initial}
    watermark = max(defined)
    if not s.terminated_by_finish:
        raise ScenarioError("scenario must end with finish()")
    for pos, step in enumerate(s.steps):
        if step.number != pos:
            raise ScenarioError(f"step numbers must be consecutive, found {step.number}")
        if isinstance(step.action, Finish):
            if pos != len(s.steps) - 1:
                raise ScenarioError("finish() must be the last step")
            if step.recipes:
                raise ScenarioError("finish() step cannot carry recipes")
            continue
        new_here: list[int] = []

        def define(idx: int) -> None:
            if idx not in defined:
                new_here.append(idx)
                defined.add(idx)

        def check_operands(idx: int, recipe: Recipe) -> None:
            for op in recipe_operands(recipe):
                if op not in defined:
                    raise ScenarioError(
                        f"step {step.number}: recipe for {idx} reads undefined index {op}"
                    )

        if isinstance(step.action, Receive):
            define(step.action.index)
            for idx, recipe in step.recipes:
                check_operands(idx, recipe)
                define(idx)
        else:  # Send
            for idx, recipe in step.recipes:
                check_operands(idx, recipe)
                define(idx)
            if step.action.index not in defined:
                raise ScenarioError(
                    f"step {step.number}: send reads undefined index {step.action.index}"
                )
        if any(idx <= watermark for idx in new_here):
            raise ScenarioError(
                f"step {step.number}: new indices must exceed all earlier ones"
            )
        if new_here:
            watermark = max(watermark, max(new_here))


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


def compile_trace(trace: AttackTrace, model: ProtocolModel) -> Scenario:
    """Compile an abstract trace into an executable scenario.

    Only nonce-sorted atoms may be auto-generated when a send is not
    derivable; a missing agent, key, or other atom aborts compilation with
    the offending terms, since generating those would mask a genuinely
    impossible attack.
    """
    kb = KnowledgeBase.from_initial(model.intruder_knowledge)
    saturate(kb)
    initial = tuple((i, kb.term_of(i)) for i in range(len(kb)))

    raw_steps: list[tuple[int, Action, list[tuple[int, Recipe, bool]], str, str]] = []
    for n, ts in enumerate(trace.steps):
        message = kb.substitute_generated(ts.message)
        if ts.sender == trace.intruder:
            saturate(kb)
            result = derive(kb, message)
            if isinstance(result, Underivable):
                non_nonce = [
                    t
                    for t in result.missing
                    if not (isinstance(t, Atom) and t.sort is Sort.NONCE)
                ]
                if non_nonce:
                    raise CompileError(
                        f"step {n}: message not derivable; missing "
                        + ", ".join(render_term(t) for t in result.missing),
                        step=n,
                        missing=result.missing,
                    )
                result = derive(kb, message, generate_nonces_at=n)
                if isinstance(result, Underivable):  # pragma: no cover - defensive
                    raise CompileError(f"step {n}: derivation failed after generating nonces")
            recipes = [(idx, rec, True) for idx, rec in result.new_entries]
            raw_steps.append((n, Send(result.root, ts.message), recipes, ts.sender, ts.receiver))
        else:
            if is_derivable(kb, message):
                result = derive(kb, message)
                assert isinstance(result, Derivable)
                recipes = [(idx, rec, True) for idx, rec in result.new_entries]
                raw_steps.append(
                    (n, Receive(result.root, ts.message), recipes, ts.sender, ts.receiver)
                )
            else:
                idx = kb.append(message, ReceivedAt(n))
                new, asserts = _saturate(kb)
                recipes = [(j, kb.entries[j].recipe, True) for j in new]
                recipes += [(j, rec, False) for j, rec in asserts]
                raw_steps.append(
                    (n, Receive(idx, ts.message), recipes, ts.sender, ts.receiver)
                )

    pruned = _prune(raw_steps)
    steps = tuple(
        ScenarioStep(n, action, tuple((j, r) for j, r in recipes), sender, receiver)
        for (n, action, recipes, sender, receiver) in pruned
    )
    steps = steps + (ScenarioStep(len(trace.steps), Finish(), ()),)
    scenario = Scenario(initial, steps, trace.intruder)
    validate_scenario(scenario)
    return scenario


def _prune(raw_steps):
    """Drop recipe lines whose result is never read.

    Works backwards so that a kept line marks its operands as needed.
    Assertion lines (index already defined elsewhere) are checks and are
    always kept, as are instruction target indices.
    """
    needed: set[int] = set()
    for _, action, _, _, _ in raw_steps:
        if isinstance(action, (Send, Receive)):
            needed.add(action.index)
    out = []
    for n, action, recipes, sender, receiver in reversed(raw_steps):
        kept: list[tuple[int, Recipe]] = []
        for idx, recipe, defines in reversed(recipes):
            if not defines:
                needed.add(idx)
                needed.update(recipe_operands(recipe))
                kept.append((idx, recipe))
            elif idx in needed:
                needed.update(recipe_operands(recipe))
                kept.append((idx, recipe))
        out.append((n, action, list(reversed(kept)), sender, receiver))
    return list(reversed(out))


# ---------------------------------------------------------------------------
# Scenario rendering
# ---------------------------------------------------------------------------


def render_scenario(s: Scenario) -> str:
    lines: list[str] = ["Step -1:"]
    for idx, term in s.initial:
        lines.append(f"{idx} = {render_term(term)} = iknown")
    for step in s.steps:
        if step.sender and step.receiver:
            lines.append(f"Step {step.number}: # {step.sender} -> {step.receiver}")
        else:
            lines.append(f"Step {step.number}:")
        if isinstance(step.action, Finish):
            lines.append("finish()")
            continue
        mark = "!" if isinstance(step.action, Send) else "?"
        lines.append(f"{mark}{step.action.index} = {render_term(step.action.expected)}")
        for idx, recipe in step.recipes:
            lines.append(f"{idx} = {render_recipe(recipe)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Scenario parsing
# ---------------------------------------------------------------------------

_STEP_RE = re.compile(r"^Step\s+(-?\d+):\s*(?:#\s*(\w+)\s*(?:->|→)\s*(\w+)\s*)?$")
_IKNOWN_RE = re.compile(r"^(\d+)\s*=\s*(.+?)\s*=\s*iknown$")
_INSTR_RE = re.compile(r"^([!?])(\d+)\s*=\s*(.+)$")
_RECIPE_RE = re.compile(r"^(\d+)\s*=\s*(.+)$")
_RECEIVED_RE = re.compile(r'^"received at step:(\d+)"$')
_GENERATED_RE = re.compile(r'^"generated nonce at step:(\d+)"$')
_OP_RE = re.compile(r"^(pair|crypt|scrypt|hash|apply|unpair1|unpair2|decrypt)\(([^)]*)\)$")


def _parse_recipe(body: str, lineno: int) -> Recipe:
    m = _RECEIVED_RE.match(body)
    if m:
        return ReceivedAt(int(m.group(1)))
    m = _GENERATED_RE.match(body)
    if m:
        return GeneratedNonceAt(int(m.group(1)))
    m = _OP_RE.match(body)
    if not m:
        raise ScenarioError(f"line {lineno}: unrecognized recipe {body!r}")
    op, argstr = m.group(1), m.group(2)
    args = [a.strip() for a in argstr.split(",") if a.strip()]

    def ints(expected: int) -> list[int]:
        if len(args) != expected or not all(a.isdigit() for a in args):
            raise ScenarioError(f"line {lineno}: {op} expects {expected} index argument(s)")
        return [int(a) for a in args]

    if op == "pair":
        return RPair(*ints(2))
    if op == "crypt":
        return RCrypt(*ints(2))
    if op == "scrypt":
        return RSCrypt(*ints(2))
    if op == "hash":
        return RHash(*ints(1))
    if op == "unpair1":
        return RUnpair1(*ints(1))
    if op == "unpair2":
        return RUnpair2(*ints(1))
    if op == "decrypt":
        return RDecrypt(*ints(2))
    # apply(fn, i, ...)
    if len(args) < 2 or not all(a.isdigit() for a in args[1:]):
        raise ScenarioError(f"line {lineno}: apply expects a function name and indices")
    return RApply(args[0], tuple(int(a) for a in args[1:]))


def infer_sorts(src: str) -> SortTable:
    """Best-effort sort table for parsing a scenario without its model.

    Key positions of crypt/scrypt/inv and function-application heads fix the
    sorts that the term constructors insist on; every other identifier is
    treated as text.  Execution only distinguishes nonce atoms from the rest,
    and compiled scenarios never place bare nonce atoms in recipe positions,
    so this default is safe for replay.
    """
    table = SortTable()
    builtin = {"pair", "crypt", "scrypt", "inv", "hash", "iknown", "Step", "finish"}
    for m in re.finditer(r"inv\(\s*(\w+)\s*\)", src):
        table.declare(m.group(1), Sort.PUBKEY)
    for m in re.finditer(r"crypt\(\s*(\w+)\s*,", src):
        name = m.group(1)
        if name not in builtin and name not in table:
            table.declare(name, Sort.PUBKEY)
    for m in re.finditer(r"scrypt\(\s*(\w+)\s*([,(])", src):
        name, nxt = m.group(1), m.group(2)
        if name in builtin:
            continue
        if nxt == "(":
            table.declare(name, Sort.FUNCTION)
        elif name not in table:
            table.declare(name, Sort.SYMKEY)
    for m in re.finditer(r"(\w+)\s*[({]", src):
        name = m.group(1)
        if name not in builtin and name not in table:
            table.declare(name, Sort.FUNCTION)
    for m in re.finditer(r"\b([A-Za-z_]\w*)\b", src):
        name = m.group(1)
        if name not in builtin and name not in table:
            table.declare(name, Sort.TEXT)
    return table


def parse_scenario(src: str, sorts: SortTable | None = None) -> Scenario:
    if sorts is None:
        sorts = infer_sorts(src)
    initial: list[tuple[int, Term]] = []
    steps: list[ScenarioStep] = []
    received_lines: list[tuple[int, int, int]] = []  # (index, step, lineno)

    current: int | None = None  # None = before Step -1; -1 = iknown block
    cur_action: Action | None = None
    cur_recipes: list[tuple[int, Recipe]] = []
    cur_route: tuple[str | None, str | None] = (None, None)

    def close_step():
        nonlocal cur_action, cur_recipes
        if current is None or current == -1:
            return
        if cur_action is None:
            raise ScenarioError(f"step {current} has no instruction")
        steps.append(
            ScenarioStep(current, cur_action, tuple(cur_recipes), cur_route[0], cur_route[1])
        )
        cur_action = None
        cur_recipes = []

    for lineno, raw in enumerate(src.splitlines(), start=1):
        line = raw.strip()
        if not line or (line.startswith("#") and not _STEP_RE.match(line)):
            continue
        m = _STEP_RE.match(line)
        if m:
            close_step()
            current = int(m.group(1))
            cur_route = (m.group(2), m.group(3))
            continue
        if current is None:
            raise ScenarioError(f"line {lineno}: content before 'Step -1:'")
        if current == -1:
            m = _IKNOWN_RE.match(line)
            if not m:
                raise ScenarioError(f"line {lineno}: expected '<idx> = <term> = iknown'")
            try:
                term = parse_term(m.group(2), sorts, start_line=lineno)
            except TermError as exc:
                raise ScenarioError(f"line {lineno}: {exc}") from None
            initial.append((int(m.group(1)), term))
            continue
        if line == "finish()":
            if cur_action is not None:
                raise ScenarioError(f"line {lineno}: finish() cannot follow an instruction")
            cur_action = Finish()
            continue
        m = _INSTR_RE.match(line)
        if m:
            if cur_action is not None:
                raise ScenarioError(f"line {lineno}: step {current} has two instructions")
            try:
                term = parse_term(m.group(3), sorts, start_line=lineno)
            except TermError as exc:
                raise ScenarioError(f"line {lineno}: {exc}") from None
            index = int(m.group(2))
            cur_action = Send(index, term) if m.group(1) == "!" else Receive(index, term)
            continue
        m = _RECIPE_RE.match(line)
        if m:
            if cur_action is None:
                raise ScenarioError(f"line {lineno}: recipe before the step's instruction")
            recipe = _parse_recipe(m.group(2).strip(), lineno)
            index = int(m.group(1))
            if isinstance(recipe, ReceivedAt):
                # redundant with the '?' instruction; validate and drop
                received_lines.append((index, recipe.step, lineno))
                continue
            cur_recipes.append((index, recipe))
            continue
        raise ScenarioError(f"line {lineno}: unrecognized line {line!r}")
    close_step()

    scenario = Scenario(tuple(initial), tuple(steps))
    validate_scenario(scenario)
    for index, at_step, lineno in received_lines:
        ok = any(
            isinstance(st.action, Receive)
            and st.action.index == index
            and st.number == at_step
            for st in steps
        )
        if not ok:
            raise ScenarioError(
                f"line {lineno}: received-at recipe for {index} does not match any "
                f"receive instruction at step {at_step}"
            )
    return scenario
