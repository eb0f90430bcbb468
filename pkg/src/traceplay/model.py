"""Protocol model files: parsing, rendering, and mutation operators.

The model format is a deliberately small role/transition language: a sort
table, one block per role (parameters, initial knowledge, numbered SND/RCV
transitions), and the intruder's initial knowledge.  A trailing apostrophe
on a variable occurrence (a *prime*) means "freshly generated here" on SND
and "bound without verification" on RCV; priming is per variable and per
transition.

The two mutation operators plant plausible implementation flaws by priming
a previously verified agent-identifier or nonce occurrence in a receive
pattern, which removes the corresponding run-time check.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .terms import (
    Atom,
    Position,
    Sort,
    SortTable,
    Term,
    TermError,
    atom_occurrences,
    parse_pattern,
    parse_term,
    render_pattern,
    render_term,
    term_at,
)


class ModelError(Exception):
    pass


class MutationError(ModelError):
    pass


SND = "SND"
RCV = "RCV"


@dataclass(frozen=True)
class Transition:
    index: int
    direction: str  # SND | RCV
    pattern: Term
    primed: frozenset[Position]
    optional: bool = False  # marked with a trailing '*' on the number

    def primed_vars(self) -> frozenset[str]:
        names = set()
        for pos in self.primed:
            sub = term_at(self.pattern, pos)
            if isinstance(sub, Atom):
                names.add(sub.name)
        return frozenset(names)


@dataclass(frozen=True)
class Role:
    name: str
    parameters: tuple[Term, ...]
    knowledge: tuple[Term, ...]
    transitions: tuple[Transition, ...]


@dataclass(frozen=True)
class Provenance:
    original: str
    kind: str
    point_id: str


@dataclass(frozen=True)
class ProtocolModel:
    name: str
    sorts: SortTable
    sort_decls: tuple[tuple[Sort, tuple[str, ...]], ...]
    roles: tuple[Role, ...]
    intruder_knowledge: tuple[Term, ...]
    client_auth: bool | None = None
    provenance: Provenance | None = None

    def role(self, name: str) -> Role:
        for r in self.roles:
            if r.name == name:
                return r
        raise ModelError(f"no role named {name!r}")

    def client_auth_enabled(self) -> bool:
        return self.client_auth is True

    def live_transitions(self, role: Role) -> list[Transition]:
        """Transitions that actually execute under the current client-auth flag."""
        if self.client_auth_enabled():
            return list(role.transitions)
        return [t for t in role.transitions if not t.optional]


@dataclass(frozen=True)
class MutationPoint:
    role_name: str
    transition_index: int
    variable_name: str
    kind: str  # "agent-id" | "nonce"

    @property
    def point_id(self) -> str:
        return f"{self.role_name}.{self.transition_index}.{self.variable_name}"

    @staticmethod
    def parse_id(point_id: str) -> tuple[str, int, str]:
        parts = point_id.split(".")
        if len(parts) != 3 or not parts[1].isdigit():
            raise MutationError(f"bad mutation point id {point_id!r} (want ROLE.N.VAR)")
        return parts[0], int(parts[1]), parts[2]


_SORT_WORDS = {s.value: s for s in Sort}

_TRANSITION_RE = re.compile(r"^(\d+)(\*?)\.\s*(SND|RCV)\s*\((.*)\)\s*$")


def _split_top(text: str) -> list[str]:
    """Split on commas that are not nested inside parentheses or braces."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    last = "".join(cur).strip()
    if last:
        parts.append(last)
    return parts


def parse_model(src: str) -> ProtocolModel:
    if not src.strip():
        raise ModelError("empty model file")

    name: str | None = None
    client_auth: bool | None = None
    sorts = SortTable()
    sort_decls: list[tuple[Sort, tuple[str, ...]]] = []
    roles: list[Role] = []
    intruder_knowledge: tuple[Term, ...] | None = None
    prov_kind_point: tuple[str, str] | None = None
    prov_original: str | None = None

    lines = src.splitlines()
    i = 0
    in_sorts = False
    while i < len(lines):
        lineno = i + 1
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("mutant:"):
                fields = body[len("mutant:") :].split()
                if len(fields) == 2:
                    prov_kind_point = (fields[0], fields[1])
            elif body.startswith("original:"):
                prov_original = body[len("original:") :].strip()
            continue
        if in_sorts:
            m = re.match(r"^([a-z]+)\s*:\s*(.*)$", line)
            if m and m.group(1) in _SORT_WORDS:
                sort = _SORT_WORDS[m.group(1)]
                names = tuple(n.strip() for n in m.group(2).split(",") if n.strip())
                if not names:
                    raise ModelError(f"line {lineno}: empty sort group")
                for n in names:
                    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", n):
                        raise ModelError(f"line {lineno}: bad identifier {n!r}")
                    try:
                        sorts.declare(n, sort)
                    except TermError as exc:
                        raise ModelError(f"line {lineno}: {exc}") from None
                sort_decls.append((sort, names))
                continue
            in_sorts = False
        if line.startswith("protocol"):
            name = line[len("protocol") :].strip()
            if not name:
                raise ModelError(f"line {lineno}: protocol needs a name")
            continue
        if line.startswith("client-auth:"):
            value = line[len("client-auth:") :].strip()
            if value not in ("on", "off"):
                raise ModelError(f"line {lineno}: client-auth must be on or off")
            client_auth = value == "on"
            continue
        if line == "sorts:":
            in_sorts = True
            continue
        if line.startswith("role "):
            m = re.match(r"^role\s+(\w+)\s*\{\s*$", line)
            if not m:
                raise ModelError(f"line {lineno}: malformed role header")
            role, i = _parse_role(m.group(1), lines, i, sorts)
            if any(r.name == role.name for r in roles):
                raise ModelError(f"line {lineno}: duplicate role {role.name!r}")
            roles.append(role)
            continue
        if line.startswith("intruder_knowledge:"):
            body = line[len("intruder_knowledge:") :].strip()
            try:
                intruder_knowledge = tuple(
                    parse_term(part, sorts, start_line=lineno) for part in _split_top(body)
                )
            except TermError as exc:
                raise ModelError(f"line {lineno}: {exc}") from None
            continue
        raise ModelError(f"line {lineno}: unrecognized line {line!r}")

    if name is None:
        raise ModelError("missing protocol declaration")
    if intruder_knowledge is None or not intruder_knowledge:
        raise ModelError("missing or empty intruder_knowledge")
    if not any(isinstance(t, Atom) and t.name == "start" for t in intruder_knowledge):
        raise ModelError("intruder_knowledge must contain the start atom")
    if not roles:
        raise ModelError("model declares no roles")

    provenance = None
    if prov_kind_point is not None:
        provenance = Provenance(
            original=prov_original or name,
            kind=prov_kind_point[0],
            point_id=prov_kind_point[1],
        )
    return ProtocolModel(
        name=name,
        sorts=sorts,
        sort_decls=tuple(sort_decls),
        roles=tuple(roles),
        intruder_knowledge=intruder_knowledge,
        client_auth=client_auth,
        provenance=provenance,
    )


def _parse_role(
    name: str, lines: list[str], i: int, sorts: SortTable
) -> tuple[Role, int]:
    parameters: tuple[Term, ...] = ()
    knowledge: tuple[Term, ...] = ()
    transitions: list[Transition] = []
    while i < len(lines):
        lineno = i + 1
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if line == "}":
            _check_numbering(name, transitions)
            return Role(name, parameters, knowledge, tuple(transitions)), i
        if line.startswith("parameters:"):
            body = line[len("parameters:") :].strip()
            parameters = _parse_term_list(body, sorts, lineno)
            continue
        if line.startswith("knowledge:"):
            body = line[len("knowledge:") :].strip()
            knowledge = _parse_term_list(body, sorts, lineno)
            continue
        m = _TRANSITION_RE.match(line)
        if m:
            index = int(m.group(1))
            optional = m.group(2) == "*"
            direction = m.group(3)
            try:
                pattern, primed = parse_pattern(m.group(4), sorts, start_line=lineno)
            except TermError as exc:
                raise ModelError(f"line {lineno}: {exc}") from None
            transitions.append(Transition(index, direction, pattern, primed, optional))
            continue
        raise ModelError(f"line {lineno}: unrecognized line in role {name!r}: {line!r}")
    raise ModelError(f"role {name!r} is not closed with '}}'")


def _parse_term_list(body: str, sorts: SortTable, lineno: int) -> tuple[Term, ...]:
    if not body:
        return ()
    try:
        return tuple(parse_term(part, sorts, start_line=lineno) for part in _split_top(body))
    except TermError as exc:
        raise ModelError(f"line {lineno}: {exc}") from None


def _check_numbering(role_name: str, transitions: list[Transition]) -> None:
    for expected, tr in enumerate(transitions, start=1):
        if tr.index != expected:
            raise ModelError(
                f"role {role_name!r}: transition {tr.index} out of order, expected {expected}"
            )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_model(m: ProtocolModel) -> str:
    out: list[str] = []
    if m.provenance is not None:
        out.append(f"# mutant: {m.provenance.kind} {m.provenance.point_id}")
        out.append(f"# original: {m.provenance.original}")
    out.append(f"protocol {m.name}")
    out.append("")
    if m.client_auth is not None:
        out.append(f"client-auth: {'on' if m.client_auth else 'off'}")
        out.append("")
    out.append("sorts:")
    for sort, names in m.sort_decls:
        out.append(f"  {sort.value}: {', '.join(names)}")
    out.append("")
    for role in m.roles:
        out.append(f"role {role.name} {{")
        if role.parameters:
            out.append(f"  parameters: {', '.join(render_term(t) for t in role.parameters)}")
        if role.knowledge:
            out.append(f"  knowledge: {', '.join(render_term(t) for t in role.knowledge)}")
        for tr in role.transitions:
            star = "*" if tr.optional else ""
            out.append(
                f"  {tr.index}{star}. {tr.direction}({render_pattern(tr.pattern, tr.primed)})"
            )
        out.append("}")
        out.append("")
    out.append(
        "intruder_knowledge: " + ", ".join(render_term(t) for t in m.intruder_knowledge)
    )
    out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Mutation operators
# ---------------------------------------------------------------------------

_MUTABLE_SORTS = {Sort.AGENT: "agent-id", Sort.NONCE: "nonce"}


def _initially_bound(role: Role) -> set[str]:
    bound: set[str] = set()
    for term in role.parameters + role.knowledge:
        for _, atom in atom_occurrences(term):
            bound.add(atom.name)
    return bound


def list_mutation_points(m: ProtocolModel) -> list[MutationPoint]:
    """Enumerate the verifiable, unprimed agent/nonce variables in receives.

    Points come out in role order, then transition order, then first
    occurrence position.  A variable only qualifies if it is bound before the
    transition runs (from knowledge, parameters, or an earlier transition):
    priming a first-time binding would not remove any check.
    """
    points: list[MutationPoint] = []
    for role in m.roles:
        bound = _initially_bound(role)
        for tr in m.live_transitions(role):
            primed_names = tr.primed_vars()
            if tr.direction == RCV:
                seen: set[str] = set()
                for _, atom in atom_occurrences(tr.pattern):
                    kind = _MUTABLE_SORTS.get(atom.sort)
                    if kind is None or atom.name in primed_names or atom.name in seen:
                        continue
                    seen.add(atom.name)
                    if atom.name not in bound:
                        continue
                    points.append(MutationPoint(role.name, tr.index, atom.name, kind))
                bound.update(a.name for _, a in atom_occurrences(tr.pattern))
            else:
                bound.update(primed_names)
    return points


def apply_mutation(m: ProtocolModel, p: MutationPoint) -> ProtocolModel:
    """Prime the occurrence named by ``p``; everything else is unchanged.

    The mutant carries a provenance header naming the original protocol, the
    point, and its kind.  The rendered mutant differs from the rendered
    original by exactly one apostrophe (comments aside).
    """
    try:
        role = m.role(p.role_name)
    except ModelError:
        raise MutationError(f"point {p.point_id}: no such role") from None
    target: Transition | None = None
    for tr in role.transitions:
        if tr.index == p.transition_index:
            target = tr
            break
    if target is None or target.direction != RCV:
        raise MutationError(f"point {p.point_id}: no RCV transition {p.transition_index}")
    if p.variable_name in target.primed_vars():
        raise MutationError(f"point {p.point_id}: occurrence already primed")
    occurrence: Position | None = None
    for pos, atom in atom_occurrences(target.pattern):
        if atom.name == p.variable_name:
            occurrence = pos
            expected_kind = _MUTABLE_SORTS.get(atom.sort)
            break
    if occurrence is None:
        raise MutationError(f"point {p.point_id}: variable not found in pattern")
    if expected_kind != p.kind:
        raise MutationError(
            f"point {p.point_id}: kind {p.kind!r} does not match the variable's sort"
        )

    new_transition = replace(target, primed=target.primed | {occurrence})
    new_role = replace(
        role,
        transitions=tuple(
            new_transition if tr.index == p.transition_index else tr
            for tr in role.transitions
        ),
    )
    provenance = Provenance(
        original=m.provenance.original if m.provenance else m.name,
        kind=p.kind,
        point_id=p.point_id,
    )
    return replace(
        m,
        roles=tuple(new_role if r.name == role.name else r for r in m.roles),
        provenance=provenance,
    )


def find_point(m: ProtocolModel, point_id: str) -> MutationPoint:
    role_name, index, var = MutationPoint.parse_id(point_id)
    for p in list_mutation_points(m):
        if (p.role_name, p.transition_index, p.variable_name) == (role_name, index, var):
            return p
    raise MutationError(f"no mutation point {point_id!r}")
