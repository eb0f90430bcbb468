"""Symbolic message algebra shared by models, traces, and scenarios.

A term is either an atom (a sorted identifier), a pair, an encryption
(asymmetric ``crypt`` or symmetric ``scrypt``), a key inverse, a hash, a
function application, or a fresh value minted at run time.  All terms are
immutable and compared structurally; there is no unification.

The concrete grammar accepts three surface forms for the same tree:

    functional   crypt(kb,pair(Na,a))
    brace        pair{x, y}
    dotted       a.b.c            (right-associated pairs)

``docs/term-grammar.md`` holds the full grammar.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class TermError(Exception):
    """Base error for term construction and parsing."""


class TermParseError(TermError):
    def __init__(self, message: str, line: int = 1, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class Sort(enum.Enum):
    AGENT = "agent"
    PUBKEY = "pubkey"
    SYMKEY = "symkey"
    NONCE = "nonce"
    TEXT = "text"
    SESSIONID = "sessionid"
    PREFS = "prefs"
    FUNCTION = "function"


#: Order in which sort groups are rendered in model files.
SORT_ORDER = [
    Sort.AGENT,
    Sort.PUBKEY,
    Sort.SYMKEY,
    Sort.NONCE,
    Sort.SESSIONID,
    Sort.PREFS,
    Sort.FUNCTION,
    Sort.TEXT,
]


class SortTable:
    """Mapping of identifiers to their unique sort.

    Every identifier appearing in a model, trace, or scenario must be
    declared here; parsing an undeclared name is an error.
    """

    def __init__(self, entries: dict[str, Sort] | None = None):
        self._entries: dict[str, Sort] = dict(entries or {})

    def declare(self, name: str, sort: Sort) -> None:
        existing = self._entries.get(name)
        if existing is not None and existing is not sort:
            raise TermError(
                f"identifier {name!r} already declared with sort {existing.value}"
            )
        self._entries[name] = sort

    def sort_of(self, name: str) -> Sort:
        try:
            return self._entries[name]
        except KeyError:
            raise TermError(f"unknown identifier {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self, sort: Sort | None = None) -> list[str]:
        if sort is None:
            return list(self._entries)
        return [n for n, s in self._entries.items() if s is sort]

    def merged(self, other: "SortTable") -> "SortTable":
        table = SortTable(self._entries)
        for name, sort in other._entries.items():
            table.declare(name, sort)
        return table

    def __eq__(self, other) -> bool:
        return isinstance(other, SortTable) and self._entries == other._entries

    def __repr__(self) -> str:
        return f"SortTable({self._entries!r})"


class Term:
    """Base class; concrete variants are frozen dataclasses below."""

    __slots__ = ()

    def children(self) -> tuple["Term", ...]:
        return ()


@dataclass(frozen=True, slots=True)
class Atom(Term):
    name: str
    sort: Sort


@dataclass(frozen=True, slots=True)
class Pair(Term):
    left: Term
    right: Term

    def children(self) -> tuple[Term, ...]:
        return (self.left, self.right)


@dataclass(frozen=True, slots=True)
class Inv(Term):
    key: Term

    def __post_init__(self):
        if not (isinstance(self.key, Atom) and self.key.sort is Sort.PUBKEY):
            raise TermError("inv() applies to public-key atoms only")

    def children(self) -> tuple[Term, ...]:
        return (self.key,)


@dataclass(frozen=True, slots=True)
class Crypt(Term):
    """Asymmetric encryption; a key of the form inv(k) denotes a signature."""

    key: Term
    payload: Term

    def __post_init__(self):
        ok = (isinstance(self.key, Atom) and self.key.sort is Sort.PUBKEY) or isinstance(
            self.key, Inv
        )
        if not ok:
            raise TermError("crypt key must be a public-key atom or inv(pubkey)")

    def children(self) -> tuple[Term, ...]:
        return (self.key, self.payload)


@dataclass(frozen=True, slots=True)
class SCrypt(Term):
    key: Term
    payload: Term

    def __post_init__(self):
        ok = (isinstance(self.key, Atom) and self.key.sort is Sort.SYMKEY) or isinstance(
            self.key, Apply
        )
        if not ok:
            raise TermError("scrypt key must be a symmetric-key atom or a function application")

    def children(self) -> tuple[Term, ...]:
        return (self.key, self.payload)


@dataclass(frozen=True, slots=True)
class Hash(Term):
    payload: Term

    def children(self) -> tuple[Term, ...]:
        return (self.payload,)


@dataclass(frozen=True, slots=True)
class Apply(Term):
    fn: str
    args: tuple[Term, ...]

    def children(self) -> tuple[Term, ...]:
        return self.args


@dataclass(frozen=True, slots=True)
class Fresh(Term):
    """A value minted during compilation or execution, never parsed from files."""

    name: str
    sort: Sort
    origin_step: int


# ---------------------------------------------------------------------------
# Positions
# ---------------------------------------------------------------------------

Position = tuple[int, ...]


def term_at(t: Term, pos: Position) -> Term:
    for i in pos:
        t = t.children()[i]
    return t


def replace_at(t: Term, pos: Position, new: Term) -> Term:
    if not pos:
        return new
    head, rest = pos[0], pos[1:]
    kids = list(t.children())
    kids[head] = replace_at(kids[head], rest, new)
    if isinstance(t, Pair):
        return Pair(kids[0], kids[1])
    if isinstance(t, Crypt):
        return Crypt(kids[0], kids[1])
    if isinstance(t, SCrypt):
        return SCrypt(kids[0], kids[1])
    if isinstance(t, Inv):
        return Inv(kids[0])
    if isinstance(t, Hash):
        return Hash(kids[0])
    if isinstance(t, Apply):
        return Apply(t.fn, tuple(kids))
    raise TermError(f"cannot replace inside {t!r}")


def iter_positions(t: Term):
    """Yield (position, subterm) pairs in document (preorder) order."""
    stack: list[tuple[Position, Term]] = [((), t)]
    while stack:
        pos, cur = stack.pop()
        yield pos, cur
        kids = cur.children()
        for i in range(len(kids) - 1, -1, -1):
            stack.append((pos + (i,), kids[i]))


def subterms(t: Term) -> frozenset[Term]:
    """The term itself and all transitive sub-positions, deduplicated."""
    return frozenset(sub for _, sub in iter_positions(t))


def atom_occurrences(t: Term) -> list[tuple[Position, Atom]]:
    """Atom occurrences in document order, with positions."""
    out = [(pos, sub) for pos, sub in iter_positions(t) if isinstance(sub, Atom)]
    out.sort(key=lambda item: item[0])
    return out


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_BUILTINS = {"pair": 2, "crypt": 2, "scrypt": 2, "inv": 1, "hash": 1}


def render_term(t: Term) -> str:
    """Emit canonical functional form; inverse of :func:`parse_term`.

    Fresh values render as their internal name for debug output; they never
    occur in files.
    """
    if isinstance(t, Atom):
        return t.name
    if isinstance(t, Fresh):
        return t.name
    if isinstance(t, Pair):
        return f"pair({render_term(t.left)},{render_term(t.right)})"
    if isinstance(t, Crypt):
        return f"crypt({render_term(t.key)},{render_term(t.payload)})"
    if isinstance(t, SCrypt):
        return f"scrypt({render_term(t.key)},{render_term(t.payload)})"
    if isinstance(t, Inv):
        return f"inv({render_term(t.key)})"
    if isinstance(t, Hash):
        return f"hash({render_term(t.payload)})"
    if isinstance(t, Apply):
        return f"{t.fn}({','.join(render_term(a) for a in t.args)})"
    raise TermError(f"cannot render {t!r}")


def render_pattern(t: Term, primed: frozenset[Position]) -> str:
    """Render a pattern with apostrophes at the primed positions."""

    def walk(sub: Term, pos: Position) -> str:
        if isinstance(sub, Atom):
            return sub.name + ("'" if pos in primed else "")
        if isinstance(sub, Pair):
            return f"pair({walk(sub.left, pos + (0,))},{walk(sub.right, pos + (1,))})"
        if isinstance(sub, Crypt):
            return f"crypt({walk(sub.key, pos + (0,))},{walk(sub.payload, pos + (1,))})"
        if isinstance(sub, SCrypt):
            return f"scrypt({walk(sub.key, pos + (0,))},{walk(sub.payload, pos + (1,))})"
        if isinstance(sub, Inv):
            return f"inv({walk(sub.key, pos + (0,))})"
        if isinstance(sub, Hash):
            return f"hash({walk(sub.payload, pos + (0,))})"
        if isinstance(sub, Apply):
            inner = ",".join(walk(a, pos + (i,)) for i, a in enumerate(sub.args))
            return f"{sub.fn}({inner})"
        raise TermError(f"cannot render {sub!r}")

    return walk(t, ())


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


@dataclass
class _Token:
    kind: str
    value: str
    line: int
    column: int


def _tokenize(src: str, start_line: int = 1) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = start_line, 1
    i = 0
    while i < len(src):
        ch = src[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(src) and (src[j].isalnum() or src[j] == "_"):
                j += 1
            tokens.append(_Token("ident", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch in "(){},.'":
            tokens.append(_Token(ch, ch, line, col))
            i += 1
            col += 1
            continue
        raise TermParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


#: A parse result: the term plus primed positions relative to its own root.
_Parsed = tuple[Term, set[Position]]


class _TermParser:
    def __init__(self, tokens: list[_Token], table: SortTable, allow_primes: bool):
        self.tokens = tokens
        self.pos = 0
        self.table = table
        self.allow_primes = allow_primes

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str) -> TermParseError:
        tok = self.peek()
        return TermParseError(message, tok.line, tok.column)

    # term := primary ('.' primary)*   (dots right-associate into pairs)
    def parse_term(self) -> _Parsed:
        parts: list[_Parsed] = [self.parse_primary()]
        while self.peek().kind == ".":
            self.advance()
            parts.append(self.parse_primary())
        if len(parts) == 1:
            return parts[0]
        term, primes = parts[-1]
        for sub, sub_primes in reversed(parts[:-1]):
            primes = {(0,) + p for p in sub_primes} | {(1,) + p for p in primes}
            term = Pair(sub, term)
        return term, primes

    def parse_primary(self) -> _Parsed:
        tok = self.peek()
        if tok.kind == "(":
            self.advance()
            inner = self.parse_term()
            if self.peek().kind != ")":
                raise self.fail("expected ')'")
            self.advance()
            return inner
        if tok.kind != "ident":
            raise self.fail(f"expected a term, found {tok.value or 'end of input'!r}")
        name_tok = self.advance()
        name = name_tok.value
        nxt = self.peek()
        if nxt.kind in "({":
            closer = ")" if nxt.kind == "(" else "}"
            self.advance()
            args: list[_Parsed] = []
            if self.peek().kind != closer:
                while True:
                    args.append(self.parse_term())
                    if self.peek().kind == ",":
                        self.advance()
                        continue
                    break
            if self.peek().kind != closer:
                raise self.fail(f"expected {closer!r} or ','")
            self.advance()
            term = self._build_call(name, [a[0] for a in args], name_tok)
            primes = {(i,) + p for i, (_, ps) in enumerate(args) for p in ps}
            return term, primes
        term = self._atom(name, name_tok)
        primes: set[Position] = set()
        if nxt.kind == "'":
            if not self.allow_primes:
                raise TermParseError("primes are not allowed here", nxt.line, nxt.column)
            self.advance()
            primes.add(())
        return term, primes

    def _atom(self, name: str, tok: _Token) -> Atom:
        try:
            sort = self.table.sort_of(name)
        except TermError as exc:
            raise TermParseError(str(exc), tok.line, tok.column) from None
        if sort is Sort.FUNCTION:
            raise TermParseError(
                f"{name!r} is a function symbol and needs arguments", tok.line, tok.column
            )
        return Atom(name, sort)

    def _build_call(self, name: str, args: list[Term], tok: _Token) -> Term:
        arity = _BUILTINS.get(name)
        if arity is not None and len(args) != arity:
            raise TermParseError(
                f"{name} takes {arity} argument(s), got {len(args)}", tok.line, tok.column
            )
        try:
            if name == "pair":
                return Pair(args[0], args[1])
            if name == "crypt":
                return Crypt(args[0], args[1])
            if name == "scrypt":
                return SCrypt(args[0], args[1])
            if name == "inv":
                return Inv(args[0])
            if name == "hash":
                return Hash(args[0])
        except TermError as exc:
            raise TermParseError(str(exc), tok.line, tok.column) from None
        if name not in self.table:
            raise TermParseError(f"unknown identifier {name!r}", tok.line, tok.column)
        if self.table.sort_of(name) is not Sort.FUNCTION:
            raise TermParseError(
                f"{name!r} is not declared as a function", tok.line, tok.column
            )
        if not args:
            raise TermParseError(f"{name}() needs at least one argument", tok.line, tok.column)
        return Apply(name, tuple(args))


def _parse(src: str, table: SortTable, allow_primes: bool, start_line: int) -> _Parsed:
    parser = _TermParser(_tokenize(src, start_line), table, allow_primes)
    result = parser.parse_term()
    tok = parser.peek()
    if tok.kind != "eof":
        raise TermParseError(f"trailing input {tok.value!r}", tok.line, tok.column)
    return result


def parse_term(src: str, table: SortTable, *, start_line: int = 1) -> Term:
    """Parse ``src`` into a canonical term under the given sort table."""
    term, _ = _parse(src, table, allow_primes=False, start_line=start_line)
    return term


def parse_pattern(
    src: str, table: SortTable, *, start_line: int = 1
) -> tuple[Term, frozenset[Position]]:
    """Parse a transition pattern, returning the term and its primed positions.

    A prime is a trailing apostrophe on a variable occurrence.  Priming is
    per variable and per transition: one primed occurrence marks the variable
    as fresh/unchecked for the whole pattern (see the model format docs).
    """
    term, primes = _parse(src, table, allow_primes=True, start_line=start_line)
    return term, frozenset(primes)
