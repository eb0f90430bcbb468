"""Independent oracles used to cross-check the package.

Deliberately separate from the implementation: a set-based analyze loop plus
a depth-budgeted composition test decide intruder derivability (membership
in the bounded closure an exhaustive enumerator would produce), and a
straightforward recipe interpreter replays scenario recipes over symbolic
terms.  Nothing here imports the derivation or compilation internals beyond
the shared term/recipe data types.
"""

from __future__ import annotations

from traceplay.derivation import (
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
from traceplay.terms import (
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
)


def analyze(terms: frozenset[Term] | set[Term], *, budget: int = 4) -> frozenset[Term]:
    """Decomposition fixpoint: projections plus decryption with knowable keys."""
    known = set(terms)
    changed = True
    while changed:
        changed = False
        for t in list(known):
            if isinstance(t, Pair):
                for part in (t.left, t.right):
                    if part not in known:
                        known.add(part)
                        changed = True
            elif isinstance(t, Crypt):
                opener = t.key.key if isinstance(t.key, Inv) else Inv(t.key)
                if _buildable(opener, frozenset(known), budget) and t.payload not in known:
                    known.add(t.payload)
                    changed = True
            elif isinstance(t, SCrypt):
                if _buildable(t.key, frozenset(known), budget) and t.payload not in known:
                    known.add(t.payload)
                    changed = True
    return frozenset(known)


def _buildable(t: Term, analyzed: frozenset[Term], budget: int) -> bool:
    if t in analyzed:
        return True
    if budget <= 0:
        return False
    if isinstance(t, (Atom, Inv, Fresh)):
        return False
    return all(_buildable(c, analyzed, budget - 1) for c in t.children())


def derivable(kb_terms, target: Term, *, depth: int = 4) -> bool:
    """Membership of ``target`` in the depth-bounded closure of ``kb_terms``.

    Equivalent to enumerating every term of depth <= ``depth`` buildable from
    the knowledge (decompose everything, then compose bottom-up) and testing
    membership, but evaluated lazily so large pair spaces stay cheap.
    """
    analyzed = analyze(frozenset(kb_terms), budget=depth)
    return _buildable(target, analyzed, depth)


def enumerate_buildable(kb_terms, depth: int) -> frozenset[Term]:
    """Materialized bounded closure; only sane for tiny knowledge sets."""
    analyzed = analyze(frozenset(kb_terms), budget=depth)
    levels = set(analyzed)
    for _ in range(depth - 1):
        new = set()
        for a in levels:
            for b in levels:
                new.add(Pair(a, b))
                try:
                    new.add(Crypt(a, b))
                except Exception:
                    pass
                try:
                    new.add(SCrypt(a, b))
                except Exception:
                    pass
            new.add(Hash(a))
        levels |= new
    return frozenset(t for t in levels if _term_depth(t) <= depth)


def _term_depth(t: Term) -> int:
    kids = t.children()
    if not kids:
        return 1
    return 1 + max(_term_depth(k) for k in kids)


# ---------------------------------------------------------------------------
# Independent recipe interpreter
# ---------------------------------------------------------------------------


def rename_fresh_equal(a: Term, b: Term) -> bool:
    """Structural equality up to a bijection between fresh values and atoms."""
    mapping: dict[Term, Term] = {}
    reverse: dict[Term, Term] = {}

    def walk(x: Term, y: Term) -> bool:
        if isinstance(x, Fresh) or isinstance(y, Fresh):
            fr, other = (x, y) if isinstance(x, Fresh) else (y, x)
            if not isinstance(other, (Atom, Fresh)):
                return False
            if fr in mapping:
                return mapping[fr] == other
            if other in reverse:
                return reverse[other] == fr
            mapping[fr] = other
            reverse[other] = fr
            return True
        if type(x) is not type(y):
            return False
        if isinstance(x, Atom):
            return x == y
        if isinstance(x, Apply) and x.fn != y.fn:
            return False
        xk, yk = x.children(), y.children()
        if len(xk) != len(yk):
            return False
        return all(walk(p, q) for p, q in zip(xk, yk))

    return walk(a, b)


def eval_recipe_line(idx: int, recipe: Recipe, values: dict[int, Term]) -> Term:
    if isinstance(recipe, GeneratedNonceAt):
        return Fresh(f"nonce:{recipe.step}:{idx}", Sort.NONCE, recipe.step)
    if isinstance(recipe, RPair):
        return Pair(values[recipe.left], values[recipe.right])
    if isinstance(recipe, RCrypt):
        return Crypt(values[recipe.key], values[recipe.payload])
    if isinstance(recipe, RSCrypt):
        return SCrypt(values[recipe.key], values[recipe.payload])
    if isinstance(recipe, RHash):
        return Hash(values[recipe.payload])
    if isinstance(recipe, RApply):
        return Apply(recipe.fn, tuple(values[a] for a in recipe.args))
    if isinstance(recipe, RUnpair1):
        return values[recipe.source].left
    if isinstance(recipe, RUnpair2):
        return values[recipe.source].right
    if isinstance(recipe, RDecrypt):
        source = values[recipe.source]
        key = values[recipe.key]
        if isinstance(source, Crypt):
            wanted = source.key.key if isinstance(source.key, Inv) else Inv(source.key)
            assert key == wanted, f"decrypt at {idx} uses the wrong key"
        elif isinstance(source, SCrypt):
            assert key == source.key, f"decrypt at {idx} uses the wrong key"
        else:
            raise AssertionError(f"decrypt of a non-encryption at {idx}")
        return source.payload
    raise AssertionError(f"unexpected recipe {recipe!r}")


def eval_scenario_symbolically(scenario) -> dict[int, Term]:
    """Replay a compiled scenario's recipes over symbolic terms.

    Received slots that no recipe defines take the step's expected term
    verbatim; slots defined by recipes are computed and, for instructions,
    checked against the expected term up to fresh-value renaming.  Writing a
    conflicting term into an occupied slot raises, mirroring the engine's
    byte-equality assertion.
    """
    from traceplay.compiler import Finish, Receive, Send

    values: dict[int, Term] = {}
    for idx, term in scenario.initial:
        values[idx] = term

    def assign(idx: int, term: Term) -> None:
        if idx in values:
            if values[idx] != term:
                raise AssertionError(
                    f"slot {idx}: {values[idx]!r} vs {term!r} (assertion failed)"
                )
            return
        values[idx] = term

    for step in scenario.steps:
        if isinstance(step.action, Finish):
            break
        target = step.action.index
        defined_by_recipe = any(idx == target for idx, _ in step.recipes)
        if isinstance(step.action, Receive) and not defined_by_recipe:
            assign(target, step.action.expected)
        for idx, recipe in step.recipes:
            assign(idx, eval_recipe_line(idx, recipe, values))
        assert target in values, f"step {step.number} leaves slot {target} undefined"
        if isinstance(step.action, Send) or defined_by_recipe:
            if not rename_fresh_equal(values[target], step.action.expected):
                raise AssertionError(
                    f"step {step.number}: slot {target} does not match the expected term"
                )
    return values
