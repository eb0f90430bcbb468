import pytest
from hypothesis import given, strategies as st

from traceplay.terms import (
    Apply,
    Atom,
    Crypt,
    Hash,
    Inv,
    Pair,
    SCrypt,
    Sort,
    SortTable,
    TermError,
    TermParseError,
    parse_pattern,
    parse_term,
    render_pattern,
    render_term,
    replace_at,
    subterms,
    term_at,
)


def atoms(table):
    return {
        name: Atom(name, table.sort_of(name))
        for name in ("a", "b", "ka", "kb", "ki", "Na", "Nb", "I", "Ni", "Sid", "Pi1", "start", "sk")
    }


class TestParse:
    def test_functional_form(self, table):
        t = parse_term("crypt(kb,pair(Na,a))", table)
        A = atoms(table)
        assert t == Crypt(A["kb"], Pair(A["Na"], A["a"]))

    def test_dotted_right_association(self, table):
        t = parse_term("I.Ni.Sid.Pi1", table)
        A = atoms(table)
        assert t == Pair(A["I"], Pair(A["Ni"], Pair(A["Sid"], A["Pi1"])))

    def test_single_atom(self, table):
        assert parse_term("a", table) == Atom("a", Sort.AGENT)

    def test_brace_form(self, table):
        assert parse_term("pair{Na, a}", table) == parse_term("pair(Na,a)", table)

    def test_parenthesized_dotted(self, table):
        assert parse_term("(I.Ni)", table) == parse_term("pair(I,Ni)", table)

    def test_mixed_nesting(self, table):
        t = parse_term("pair{crypt (kb, Na), scrypt(sk, start)}", table)
        A = atoms(table)
        assert t == Pair(Crypt(A["kb"], A["Na"]), SCrypt(A["sk"], A["start"]))

    def test_apply(self, table):
        t = parse_term("prf(Na.Nb)", table)
        assert isinstance(t, Apply) and t.fn == "prf" and len(t.args) == 1

    def test_inv(self, table):
        assert parse_term("inv(ka)", table) == Inv(Atom("ka", Sort.PUBKEY))

    def test_dot_functional_equivalence(self, table):
        assert parse_term("a.b", table) == parse_term("pair(a,b)", table)

    def test_unknown_identifier(self, table):
        with pytest.raises(TermParseError, match="unknown identifier"):
            parse_term("crypt(kb,zz)", table)

    def test_arity_error(self, table):
        with pytest.raises(TermParseError, match="argument"):
            parse_term("pair(a)", table)

    def test_syntax_error_reports_position(self, table):
        with pytest.raises(TermParseError) as exc:
            parse_term("pair(a,,b)", table)
        assert exc.value.line == 1
        assert exc.value.column > 0

    def test_prime_rejected_outside_patterns(self, table):
        with pytest.raises(TermParseError, match="primes"):
            parse_term("pair(Na',a)", table)

    def test_function_symbol_needs_args(self, table):
        with pytest.raises(TermParseError):
            parse_term("prf", table)


class TestPatterns:
    def test_prime_positions(self, table):
        term, primed = parse_pattern("crypt(kb,pair(Na',a))", table)
        assert primed == frozenset({(1, 0)})
        assert term_at(term, (1, 0)) == Atom("Na", Sort.NONCE)

    def test_prime_in_dotted_chain(self, table):
        term, primed = parse_pattern("I.Ni'.Sid", table)
        assert primed == frozenset({(1, 0)})
        assert term_at(term, (1, 0)) == Atom("Ni", Sort.NONCE)

    def test_prime_on_last_dotted_element(self, table):
        term, primed = parse_pattern("I.Ni'", table)
        assert primed == frozenset({(1,)})

    def test_render_pattern_round_trip(self, table):
        src = "crypt(kb,pair(Na',pair(Nb,b)))"
        term, primed = parse_pattern(src, table)
        assert render_pattern(term, primed) == src


class TestConstructors:
    def test_inv_requires_pubkey(self):
        with pytest.raises(TermError):
            Inv(Atom("a", Sort.AGENT))

    def test_crypt_key_sort(self, table):
        with pytest.raises(TermParseError):
            parse_term("crypt(a,b)", table)
        # inv(pubkey) keys denote signatures and are accepted
        parse_term("crypt(inv(ka),b)", table)

    def test_scrypt_key_sort(self, table):
        with pytest.raises(TermParseError):
            parse_term("scrypt(kb,a)", table)
        parse_term("scrypt(keygen(a,Na),b)", table)


class TestSubterms:
    def test_pair(self, table):
        A = atoms(table)
        t = Pair(A["a"], A["b"])
        assert subterms(t) == {t, A["a"], A["b"]}

    def test_crypt_five_nodes(self, table):
        # hand enumeration: whole, kb, pair, Na, a
        A = atoms(table)
        t = Crypt(A["kb"], Pair(A["Na"], A["a"]))
        assert subterms(t) == {t, A["kb"], Pair(A["Na"], A["a"]), A["Na"], A["a"]}
        assert len(subterms(t)) == 5

    def test_leaf(self, table):
        a = Atom("a", Sort.AGENT)
        assert subterms(a) == {a}

    def test_closed_under_subposition(self, table):
        t = parse_term("crypt(kb,pair(Na,prf(a.b)))", table)
        subs = subterms(t)
        for s in subs:
            assert subterms(s) <= subs


class TestRender:
    def test_crypt(self, table):
        t = parse_term("crypt(kb,pair(Na,a))", table)
        assert render_term(t) == "crypt(kb,pair(Na,a))"

    def test_atom(self):
        assert render_term(Atom("start", Sort.TEXT)) == "start"

    def test_right_association(self, table):
        t = parse_term("I.Ni.Sid", table)
        assert render_term(t) == "pair(I,pair(Ni,Sid))"


# --- property tests --------------------------------------------------------

_TABLE = SortTable()
for _n, _s in [
    ("a", Sort.AGENT),
    ("b", Sort.AGENT),
    ("ka", Sort.PUBKEY),
    ("kb", Sort.PUBKEY),
    ("sk", Sort.SYMKEY),
    ("na", Sort.NONCE),
    ("s", Sort.TEXT),
    ("f", Sort.FUNCTION),
]:
    _TABLE.declare(_n, _s)

_ATOM_NAMES = ["a", "b", "ka", "kb", "sk", "na", "s"]


def _terms(max_depth=4):
    base = st.sampled_from([Atom(n, _TABLE.sort_of(n)) for n in _ATOM_NAMES])

    def extend(children):
        pub = st.sampled_from([Atom("ka", Sort.PUBKEY), Atom("kb", Sort.PUBKEY)])
        keys = st.one_of(pub, pub.map(Inv))
        return st.one_of(
            st.tuples(children, children).map(lambda p: Pair(*p)),
            st.tuples(keys, children).map(lambda p: Crypt(*p)),
            st.tuples(st.just(Atom("sk", Sort.SYMKEY)), children).map(lambda p: SCrypt(*p)),
            children.map(Hash),
            st.lists(children, min_size=1, max_size=3).map(lambda xs: Apply("f", tuple(xs))),
        )

    return st.recursive(base, extend, max_leaves=12)


@given(_terms())
def test_round_trip(t):
    assert parse_term(render_term(t), _TABLE) == t


@given(st.sampled_from(_ATOM_NAMES), st.sampled_from(_ATOM_NAMES))
def test_dot_equals_pair(x, y):
    assert parse_term(f"{x}.{y}", _TABLE) == parse_term(f"pair({x},{y})", _TABLE)


def _node_count(t):
    return 1 + sum(_node_count(c) for c in t.children())


@given(_terms())
def test_subterm_cardinality(t):
    assert len(subterms(t)) <= _node_count(t)


@given(_terms())
def test_replace_at_identity(t):
    assert replace_at(t, (), t) == t
    for pos in [(0,), (1,)]:
        try:
            sub = term_at(t, pos)
        except (IndexError, TypeError):
            continue
        assert replace_at(t, pos, sub) == t
