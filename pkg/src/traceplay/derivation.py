"""Intruder knowledge bases: saturation, derivability, and recipe extraction.

A knowledge base is an indexed, append-only store of terms; each entry
carries the recipe (primitive operation over other indices) that produced
it.  ``saturate`` closes the base under decomposition (projections and
decryption with derivable keys), ``is_derivable`` decides membership of the
composition closure, and ``derive`` extracts a concrete recipe sequence for
a target, minting fresh nonce entries on request.

Index allocation is preorder (a composite gets its index before its
arguments), so a composition recipe may reference indices larger than its
own; the evaluation order that makes every entry computable is the postorder
sequence returned by ``derive``.  This matches the numbering of compiled
scenarios, where failed derivation attempts may also leave unused (never
rendered) indices behind.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .terms import (
    Apply,
    Atom,
    Crypt,
    Fresh,
    Hash,
    Inv,
    Pair,
    SCrypt,
    Sort,
    Term,
    render_term,
)


class DerivationError(Exception):
    pass


# ---------------------------------------------------------------------------
# Recipes
# ---------------------------------------------------------------------------


class Recipe:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class IKnown(Recipe):
    pass


@dataclass(frozen=True, slots=True)
class ReceivedAt(Recipe):
    step: int


@dataclass(frozen=True, slots=True)
class GeneratedNonceAt(Recipe):
    step: int


@dataclass(frozen=True, slots=True)
class RPair(Recipe):
    left: int
    right: int


@dataclass(frozen=True, slots=True)
class RCrypt(Recipe):
    key: int
    payload: int


@dataclass(frozen=True, slots=True)
class RSCrypt(Recipe):
    key: int
    payload: int


@dataclass(frozen=True, slots=True)
class RHash(Recipe):
    payload: int


@dataclass(frozen=True, slots=True)
class RApply(Recipe):
    fn: str
    args: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class RUnpair1(Recipe):
    source: int


@dataclass(frozen=True, slots=True)
class RUnpair2(Recipe):
    source: int


@dataclass(frozen=True, slots=True)
class RDecrypt(Recipe):
    key: int
    source: int


def recipe_operands(r: Recipe) -> tuple[int, ...]:
    if isinstance(r, RPair):
        return (r.left, r.right)
    if isinstance(r, (RCrypt, RSCrypt)):
        return (r.key, r.payload)
    if isinstance(r, RHash):
        return (r.payload,)
    if isinstance(r, RApply):
        return r.args
    if isinstance(r, (RUnpair1, RUnpair2)):
        return (r.source,)
    if isinstance(r, RDecrypt):
        return (r.key, r.source)
    return ()


def render_recipe(r: Recipe) -> str:
    if isinstance(r, IKnown):
        return "iknown"
    if isinstance(r, ReceivedAt):
        return f'"received at step:{r.step}"'
    if isinstance(r, GeneratedNonceAt):
        return f'"generated nonce at step:{r.step}"'
    if isinstance(r, RPair):
        return f"pair({r.left},{r.right})"
    if isinstance(r, RCrypt):
        return f"crypt({r.key},{r.payload})"
    if isinstance(r, RSCrypt):
        return f"scrypt({r.key},{r.payload})"
    if isinstance(r, RHash):
        return f"hash({r.payload})"
    if isinstance(r, RApply):
        return f"apply({r.fn},{','.join(str(a) for a in r.args)})"
    if isinstance(r, RUnpair1):
        return f"unpair1({r.source})"
    if isinstance(r, RUnpair2):
        return f"unpair2({r.source})"
    if isinstance(r, RDecrypt):
        return f"decrypt({r.key},{r.source})"
    raise DerivationError(f"cannot render recipe {r!r}")


# ---------------------------------------------------------------------------
# Knowledge base
# ---------------------------------------------------------------------------


@dataclass
class KBEntry:
    index: int
    term: Term
    recipe: Recipe | None  # None while under construction or for dead entries
    live: bool = True


@dataclass
class Derivable:
    root: int
    new_entries: list[tuple[int, Recipe]]  # in evaluation (postorder) order


@dataclass
class Underivable:
    missing: list[Term]


DerivationResult = Derivable | Underivable


class KnowledgeBase:
    def __init__(self):
        self.entries: list[KBEntry] = []
        self._by_term: dict[Term, int] = {}
        #: trace-level map from a generated nonce's source name to its index
        self.fresh_names: dict[str, int] = {}
        self._decomposed: set[int] = set()
        self._version = 0

    @classmethod
    def from_initial(cls, terms: list[Term] | tuple[Term, ...]) -> "KnowledgeBase":
        kb = cls()
        for t in terms:
            kb.append(t, IKnown())
        return kb

    @property
    def next_index(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def find(self, t: Term) -> int | None:
        return self._by_term.get(t)

    def term_of(self, index: int) -> Term:
        return self.entries[index].term

    def append(self, term: Term, recipe: Recipe | None) -> int:
        index = len(self.entries)
        self.entries.append(KBEntry(index, term, recipe))
        if term not in self._by_term:
            self._by_term[term] = index
        self._version += 1
        return index

    def reserve(self) -> int:
        """Allocate an index whose term is filled in by :meth:`resolve`."""
        index = len(self.entries)
        self.entries.append(KBEntry(index, None, None))  # type: ignore[arg-type]
        self._version += 1
        return index

    def resolve(self, index: int, term: Term, recipe: Recipe) -> None:
        entry = self.entries[index]
        entry.term = term
        entry.recipe = recipe
        if term not in self._by_term:
            self._by_term[term] = index
        # a composition of known parts yields nothing under decomposition
        self._decomposed.add(index)
        self._version += 1

    def kill(self, index: int) -> None:
        entry = self.entries[index]
        entry.live = False
        entry.recipe = None
        if entry.term is not None and self._by_term.get(entry.term) == index:
            del self._by_term[entry.term]
            # restore an earlier live entry with the same term, if any
            for other in self.entries[:index]:
                if other.live and other.term == entry.term:
                    self._by_term[entry.term] = other.index
                    break
        self._version += 1

    def substitute_generated(self, t: Term) -> Term:
        """Replace atoms naming previously generated nonces by their fresh terms."""
        if isinstance(t, Atom):
            idx = self.fresh_names.get(t.name)
            return self.term_of(idx) if idx is not None else t
        kids = t.children()
        if not kids:
            return t
        new = [self.substitute_generated(k) for k in kids]
        if isinstance(t, Pair):
            return Pair(new[0], new[1])
        if isinstance(t, Crypt):
            return Crypt(new[0], new[1])
        if isinstance(t, SCrypt):
            return SCrypt(new[0], new[1])
        if isinstance(t, Inv):
            return Inv(new[0])
        if isinstance(t, Hash):
            return Hash(new[0])
        if isinstance(t, Apply):
            return Apply(t.fn, tuple(new))
        return t

    def dump(self) -> str:
        """Debug view mirroring scenario recipe lines."""
        lines = []
        for e in self.entries:
            if not e.live:
                lines.append(f"{e.index} = (unused)")
                continue
            rec = render_recipe(e.recipe) if e.recipe is not None else "?"
            lines.append(f"{e.index} = {render_term(e.term)} = {rec}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Saturation (decomposition fixpoint)
# ---------------------------------------------------------------------------


def _saturate(kb: KnowledgeBase) -> tuple[list[int], list[tuple[int, Recipe]]]:
    """Close ``kb`` under decomposition.

    Returns the indices of new entries plus "assertion" recipes: recipe lines
    whose result term was already present, kept so a compiled scenario can
    re-derive the value into an occupied slot and have the data store check
    byte equality.  Both lists preserve discovery order (scan by index, left
    position before right).
    """
    new_indices: list[int] = []
    assertions: list[tuple[int, Recipe]] = []

    def add(term: Term, recipe: Recipe) -> None:
        existing = kb.find(term)
        if existing is not None:
            assertions.append((existing, recipe))
            return
        new_indices.append(kb.append(term, recipe))

    changed = True
    while changed:
        changed = False
        for entry in list(kb.entries):
            if not entry.live or entry.index in kb._decomposed:
                continue
            term = entry.term
            if isinstance(term, Pair):
                before = kb.next_index
                add(term.left, RUnpair1(entry.index))
                add(term.right, RUnpair2(entry.index))
                kb._decomposed.add(entry.index)
                changed = True
            elif isinstance(term, Crypt):
                # normal encryption opens with the literal inverse key;
                # a signature (inv key) opens with the public key itself.
                opener = term.key.key if isinstance(term.key, Inv) else Inv(term.key)
                key_idx = kb.find(opener)
                if key_idx is not None:
                    add(term.payload, RDecrypt(key_idx, entry.index))
                    kb._decomposed.add(entry.index)
                    changed = True
            elif isinstance(term, SCrypt):
                if is_derivable(kb, term.key):
                    key_idx = kb.find(term.key)
                    if key_idx is None:
                        result = derive(kb, term.key)
                        assert isinstance(result, Derivable)
                        new_indices.extend(i for i, _ in result.new_entries)
                        key_idx = result.root
                    add(term.payload, RDecrypt(key_idx, entry.index))
                    kb._decomposed.add(entry.index)
                    changed = True
            else:
                kb._decomposed.add(entry.index)
    return new_indices, assertions


def saturate(kb: KnowledgeBase) -> KnowledgeBase:
    """Decomposition fixpoint; mutates and returns ``kb``."""
    _saturate(kb)
    return kb


# ---------------------------------------------------------------------------
# Derivability (composition closure over a saturated base)
# ---------------------------------------------------------------------------


def is_derivable(kb: KnowledgeBase, t: Term) -> bool:
    """True iff ``t`` is in the composition closure of the (saturated) base.

    Inverses are never computable: ``inv(k)`` is derivable only if literally
    present.  Hash and function applications are one-way but freely
    composable from derivable arguments.
    """
    memo: dict[Term, bool] = {}

    def check(term: Term) -> bool:
        cached = memo.get(term)
        if cached is not None:
            return cached
        memo[term] = False  # cycle guard; terms are finite trees anyway
        if kb.find(term) is not None:
            memo[term] = True
            return True
        if isinstance(term, (Atom, Inv, Fresh)):
            return False
        result = all(check(c) for c in term.children())
        memo[term] = result
        return result

    return check(t)


def missing_parts(kb: KnowledgeBase, t: Term) -> list[Term]:
    """Maximal underivable positions of ``t`` (deduplicated, document order)."""
    out: list[Term] = []
    seen: set[Term] = set()

    def scan(term: Term) -> None:
        if is_derivable(kb, term):
            return
        if isinstance(term, (Atom, Inv, Fresh)):
            if term not in seen:
                seen.add(term)
                out.append(term)
            return
        for child in term.children():
            scan(child)

    scan(t)
    return out


# ---------------------------------------------------------------------------
# Recipe extraction
# ---------------------------------------------------------------------------


class _BuildFailure(Exception):
    pass


def derive(
    kb: KnowledgeBase, t: Term, *, generate_nonces_at: int | None = None
) -> DerivationResult:
    """Find a recipe constructing ``t`` from the base, appending new entries.

    With ``generate_nonces_at=n`` every underivable nonce atom becomes a
    fresh entry with recipe ``GeneratedNonceAt(n)``, remembered so that later
    occurrences of the same source name reuse the entry.  On failure the
    entries allocated by the aborted attempt stay in the base as dead
    (never-rendered) indices, and the result reports the maximal underivable
    positions found by a side-effect-free scan.
    """
    created: list[int] = []
    minted_names: list[str] = []
    order: list[int] = []  # postorder: every entry after its operands

    def build(term: Term) -> int:
        # names generated earlier in the derivation (or trace) stand for
        # their fresh entries; substitute before any lookup so repeated
        # subterms are properly memoized
        term = kb.substitute_generated(term)
        idx = kb.find(term)
        if idx is not None:
            return idx
        if isinstance(term, Atom):
            if generate_nonces_at is not None and term.sort is Sort.NONCE:
                fresh = Fresh(
                    f"nonce:{generate_nonces_at}:{kb.next_index}",
                    Sort.NONCE,
                    generate_nonces_at,
                )
                new = kb.append(fresh, GeneratedNonceAt(generate_nonces_at))
                kb.fresh_names[term.name] = new
                minted_names.append(term.name)
                created.append(new)
                order.append(new)
                return new
            raise _BuildFailure
        if isinstance(term, (Inv, Fresh)):
            raise _BuildFailure
        idx = kb.reserve()
        created.append(idx)
        operands = [build(c) for c in term.children()]
        # rebuild from the operands' stored terms so the entry is canonical
        # even when a nonce was minted somewhere below
        parts = [kb.term_of(op) for op in operands]
        if isinstance(term, Pair):
            canonical: Term = Pair(parts[0], parts[1])
            recipe: Recipe = RPair(*operands)
        elif isinstance(term, Crypt):
            canonical = Crypt(parts[0], parts[1])
            recipe = RCrypt(*operands)
        elif isinstance(term, SCrypt):
            canonical = SCrypt(parts[0], parts[1])
            recipe = RSCrypt(*operands)
        elif isinstance(term, Hash):
            canonical = Hash(parts[0])
            recipe = RHash(*operands)
        elif isinstance(term, Apply):
            canonical = Apply(term.fn, tuple(parts))
            recipe = RApply(term.fn, tuple(operands))
        else:
            raise DerivationError(f"cannot compose {term!r}")
        kb.resolve(idx, canonical, recipe)
        order.append(idx)
        return idx

    try:
        root = build(t)
    except _BuildFailure:
        for idx in created:
            kb.kill(idx)
        for name in minted_names:
            del kb.fresh_names[name]
        return Underivable(missing_parts(kb, t))
    return Derivable(root, [(i, kb.entries[i].recipe) for i in order])


# ---------------------------------------------------------------------------
# Symbolic evaluation (debug / self-check)
# ---------------------------------------------------------------------------


def evaluate_recipe(r: Recipe, values: dict[int, Term], *, index: int) -> Term:
    """Evaluate one recipe over already-computed symbolic values."""
    if isinstance(r, GeneratedNonceAt):
        return Fresh(f"nonce:{r.step}:{index}", Sort.NONCE, r.step)
    if isinstance(r, RPair):
        return Pair(values[r.left], values[r.right])
    if isinstance(r, RCrypt):
        return Crypt(values[r.key], values[r.payload])
    if isinstance(r, RSCrypt):
        return SCrypt(values[r.key], values[r.payload])
    if isinstance(r, RHash):
        return Hash(values[r.payload])
    if isinstance(r, RApply):
        return Apply(r.fn, tuple(values[a] for a in r.args))
    if isinstance(r, RUnpair1):
        src = values[r.source]
        if not isinstance(src, Pair):
            raise DerivationError(f"unpair1 of non-pair at {r.source}")
        return src.left
    if isinstance(r, RUnpair2):
        src = values[r.source]
        if not isinstance(src, Pair):
            raise DerivationError(f"unpair2 of non-pair at {r.source}")
        return src.right
    if isinstance(r, RDecrypt):
        src = values[r.source]
        if isinstance(src, (Crypt, SCrypt)):
            return src.payload
        raise DerivationError(f"decrypt of non-encryption at {r.source}")
    raise DerivationError(f"cannot evaluate {r!r}")
