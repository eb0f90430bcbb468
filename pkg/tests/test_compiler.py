import pytest

import oracle
from traceplay.compiler import (
    CompileError,
    Finish,
    Receive,
    ScenarioError,
    Send,
    TraceError,
    compile_trace,
    parse_scenario,
    parse_trace,
    render_scenario,
)
from traceplay.data import read_data
from traceplay.derivation import (
    GeneratedNonceAt,
    RCrypt,
    RDecrypt,
    RPair,
    RUnpair1,
    RUnpair2,
)
from traceplay.model import apply_mutation, find_point
from traceplay.terms import render_term


@pytest.fixture
def nsl_trace(nsl):
    return parse_trace(read_data("traces/nsl-fake-nonce.trace"), nsl.sorts)


@pytest.fixture
def renego_trace(tls):
    return parse_trace(read_data("traces/tls-renego.trace"), tls.sorts)


class TestParseTrace:
    def test_four_step_trace(self, nsl, nsl_trace):
        assert len(nsl_trace.steps) == 4
        assert [(s.sender, s.receiver) for s in nsl_trace.steps] == [
            ("i", "a"),
            ("a", "i"),
            ("i", "a"),
            ("a", "i"),
        ]
        assert render_term(nsl_trace.steps[0].message) == "start"

    def test_renegotiation_trace_six_steps(self, tls, renego_trace):
        assert len(renego_trace.steps) == 6
        last = render_term(renego_trace.steps[-1].message)
        assert last.startswith("scrypt(keygen(i,Ni,Nb,")
        assert "pair(i,pair(Ni,pair(sid,pi2)))" in last

    def test_unicode_arrow(self, nspk):
        trace = parse_trace("i → a: start", nspk.sorts)
        assert trace.steps[0].sender == "i"

    def test_empty_fails(self, nspk):
        with pytest.raises(TraceError, match="empty"):
            parse_trace("# nothing here\n", nspk.sorts)

    def test_unknown_agent(self, nspk):
        with pytest.raises(TraceError, match="unknown agent"):
            parse_trace("i -> z: start", nspk.sorts)

    def test_intruder_must_touch_every_step(self, nspk):
        with pytest.raises(TraceError, match="intruder"):
            parse_trace("a -> b: start", nspk.sorts)


class TestCompileGolden:
    """The four-step fake-nonce trace against an nspk mutant reproduces the
    reference scenario: iknown 0-7, !0, ?8, !11 (+13/15 generated,
    14=pair(15,2), 12=pair(13,14), 11=crypt(3,12)), ?16 (+16=crypt(4,15)),
    finish."""

    @pytest.fixture
    def scenario(self, nspk, nsl_trace):
        mutant = apply_mutation(nspk, find_point(nspk, "A.3.Na"))
        return compile_trace(nsl_trace, mutant)

    def test_iknown_block(self, scenario):
        rendered = [f"{i} = {render_term(t)}" for i, t in scenario.initial]
        assert rendered == [
            "0 = start",
            "1 = a",
            "2 = b",
            "3 = ka",
            "4 = kb",
            "5 = ki",
            "6 = inv(ki)",
            "7 = i",
        ]

    def test_instructions(self, scenario):
        acts = [s.action for s in scenario.steps]
        assert isinstance(acts[0], Send) and acts[0].index == 0
        assert render_term(acts[0].expected) == "start"
        assert isinstance(acts[1], Receive) and acts[1].index == 8
        assert render_term(acts[1].expected) == "crypt(kb,pair(Na,a))"
        assert isinstance(acts[2], Send) and acts[2].index == 11
        assert render_term(acts[2].expected) == "crypt(ka,pair(Na,pair(Nb,b)))"
        assert isinstance(acts[3], Receive) and acts[3].index == 16
        assert render_term(acts[3].expected) == "crypt(kb,Nb)"
        assert isinstance(acts[4], Finish)

    def test_recipe_multiset(self, scenario):
        all_recipes = {
            (idx, recipe) for step in scenario.steps for idx, recipe in step.recipes
        }
        assert all_recipes == {
            (13, GeneratedNonceAt(2)),
            (15, GeneratedNonceAt(2)),
            (14, RPair(15, 2)),
            (12, RPair(13, 14)),
            (11, RCrypt(3, 12)),
            (16, RCrypt(4, 15)),
        }

    def test_recipe_placement_and_order(self, scenario):
        assert [idx for idx, _ in scenario.steps[2].recipes] == [13, 15, 14, 12, 11]
        assert [idx for idx, _ in scenario.steps[3].recipes] == [16]

    def test_rendered_lines(self, scenario):
        text = render_scenario(scenario)
        assert "0 = start = iknown" in text
        assert '13 = "generated nonce at step:2"' in text
        assert "!0 = start" in text
        assert "?8 = crypt(kb,pair(Na,a))" in text
        # burned indices 9 and 10 never appear
        assert "\n9 =" not in text and "\n10 =" not in text

    def test_same_scenario_from_plain_nspk(self, nspk, nsl_trace, scenario):
        # compilation only consumes sorts and intruder knowledge
        assert compile_trace(nsl_trace, nspk) == scenario


class TestCompileBehaviour:
    def test_send_start_reuses_index_zero(self, nspk):
        trace = parse_trace("i -> a: start", nspk.sorts)
        scenario = compile_trace(trace, nspk)
        assert isinstance(scenario.steps[0].action, Send)
        assert scenario.steps[0].action.index == 0
        assert scenario.steps[0].recipes == ()
        assert isinstance(scenario.steps[1].action, Finish)

    def test_underivable_non_nonce_fails(self, nspk):
        trace = parse_trace("i -> a: inv(kb)", nspk.sorts)
        with pytest.raises(CompileError) as exc:
            compile_trace(trace, nspk)
        assert [render_term(t) for t in exc.value.missing] == ["inv(kb)"]
        assert exc.value.step == 0
        assert not oracle.derivable([t for t in nspk.intruder_knowledge], exc.value.missing[0])

    def test_missing_nonce_becomes_generated(self, tls, renego_trace):
        scenario = compile_trace(renego_trace, tls)
        generated = [
            (idx, r.step)
            for step in scenario.steps
            for idx, r in step.recipes
            if isinstance(r, GeneratedNonceAt)
        ]
        assert generated == [(17, 1), (29, 3)]  # Ni at the hello, PMS at the flight

    def test_receive_decomposition_and_echo_asserts(self, tls, renego_trace):
        scenario = compile_trace(renego_trace, tls)
        step2 = scenario.steps[2]
        assert isinstance(step2.action, Receive)
        recipes = dict(step2.recipes)
        # echo checks land in the occupied iknown slots: sid@9, pb@12, b@2, kb@4
        assert recipes[9] == RUnpair1(23)
        assert recipes[12] == RUnpair2(23)
        assert recipes[2] == RUnpair1(24)
        assert recipes[4] == RUnpair2(24)
        # the certificate is opened with the trusted key ks@8
        assert recipes[24] == RDecrypt(8, 21)

    def test_determinism(self, tls, renego_trace):
        a = render_scenario(compile_trace(renego_trace, tls))
        b = render_scenario(compile_trace(renego_trace, tls))
        assert a == b

    def test_step_alignment(self, tls, renego_trace):
        scenario = compile_trace(renego_trace, tls)
        assert len(scenario.steps) == len(renego_trace.steps) + 1
        assert isinstance(scenario.steps[-1].action, Finish)
        assert scenario.terminated_by_finish

    def test_golden_files_match_fresh_compiles(self, tls, nsl, renego_trace):
        assert read_data("scenarios/tls-renego.scen") == render_scenario(
            compile_trace(renego_trace, tls)
        )
        trace = parse_trace(read_data("traces/nsl-fake-nonce.trace"), nsl.sorts)
        mutant = apply_mutation(nsl, find_point(nsl, "A.3.Na"))
        assert read_data("scenarios/nsl-fake-nonce.scen") == render_scenario(
            compile_trace(trace, mutant)
        )

    def test_symbolic_executability(self, tls, nsl, nspk, renego_trace, nsl_trace):
        # the independent interpreter reproduces every send and checked
        # receive, and all write-once assertions hold
        oracle.eval_scenario_symbolically(compile_trace(renego_trace, tls))
        oracle.eval_scenario_symbolically(compile_trace(nsl_trace, nspk))

    def test_unused_decompositions_pruned(self, nspk):
        # the intruder can open crypt(ki, ...) but nothing uses the parts,
        # so no decomposition lines survive rendering
        trace = parse_trace("a -> i: crypt(ki,pair(Na,Nb))\ni -> a: start", nspk.sorts)
        scenario = compile_trace(trace, nspk)
        assert scenario.steps[0].recipes == ()

    def test_used_decompositions_survive(self, nspk):
        trace = parse_trace(
            "a -> i: crypt(ki,pair(Na,Nb))\ni -> a: crypt(kb,Na)", nspk.sorts
        )
        scenario = compile_trace(trace, nspk)
        kinds = [type(r).__name__ for _, r in scenario.steps[0].recipes]
        assert "RDecrypt" in kinds and "RUnpair1" in kinds


class TestScenarioFiles:
    def test_object_round_trip(self, tls, nsl, renego_trace):
        for scen, sorts in (
            (compile_trace(renego_trace, tls), tls.sorts),
            (parse_scenario(read_data("scenarios/nsl-fake-nonce.scen"), nsl.sorts), nsl.sorts),
        ):
            assert parse_scenario(render_scenario(scen), sorts) == scen

    def test_text_round_trip_on_canonical_files(self, tls, nsl):
        for name, sorts in (
            ("scenarios/tls-renego.scen", tls.sorts),
            ("scenarios/nsl-fake-nonce.scen", nsl.sorts),
        ):
            text = read_data(name)
            assert render_scenario(parse_scenario(text, sorts)) == text

    def test_parse_without_sort_table(self):
        # sorts are inferred well enough to replay the file
        text = read_data("scenarios/tls-renego.scen")
        scenario = parse_scenario(text)
        assert render_scenario(scenario) == text

    def test_paper_style_received_line_accepted(self, nspk):
        text = read_data("scenarios/nsl-fake-nonce.scen")
        # inject the redundant received-at recipe line the reference listing
        # prints; parsing validates and drops it
        patched = text.replace(
            "!11 = crypt(ka,pair(Na,pair(Nb,b)))",
            '!11 = crypt(ka,pair(Na,pair(Nb,b)))\n8 = "received at step:1"',
        )
        assert parse_scenario(patched, nspk.sorts) == parse_scenario(text, nspk.sorts)

    def test_received_line_mismatch_rejected(self, nspk):
        text = read_data("scenarios/nsl-fake-nonce.scen")
        patched = text.replace(
            "!11 = crypt(ka,pair(Na,pair(Nb,b)))",
            '!11 = crypt(ka,pair(Na,pair(Nb,b)))\n8 = "received at step:2"',
        )
        with pytest.raises(ScenarioError, match="received-at"):
            parse_scenario(patched, nspk.sorts)

    def test_undefined_operand_rejected(self, nspk):
        bad = (
            "Step -1:\n0 = start = iknown\n"
            "Step 0:\n!1 = pair(start,start)\n1 = pair(0,5)\n"
            "Step 1:\nfinish()\n"
        )
        with pytest.raises(ScenarioError, match="undefined index"):
            parse_scenario(bad, nspk.sorts)

    def test_two_instructions_rejected(self, nspk):
        bad = (
            "Step -1:\n0 = start = iknown\n"
            "Step 0:\n!0 = start\n!0 = start\n"
            "Step 1:\nfinish()\n"
        )
        with pytest.raises(ScenarioError, match="two instructions"):
            parse_scenario(bad, nspk.sorts)

    def test_missing_finish_rejected(self, nspk):
        bad = "Step -1:\n0 = start = iknown\nStep 0:\n!0 = start\n"
        with pytest.raises(ScenarioError, match="finish"):
            parse_scenario(bad, nspk.sorts)

    def test_non_dense_iknown_rejected(self, nspk):
        bad = (
            "Step -1:\n0 = start = iknown\n2 = a = iknown\n"
            "Step 0:\n!0 = start\nStep 1:\nfinish()\n"
        )
        with pytest.raises(ScenarioError, match="dense"):
            parse_scenario(bad, nspk.sorts)

    def test_stale_index_rejected(self, nspk):
        # new indices must exceed everything allocated before
        bad = (
            "Step -1:\n0 = start = iknown\n1 = a = iknown\n"
            "Step 0:\n?5 = crypt(kb,a)\n"
            "Step 1:\n!3 = pair(start,a)\n3 = pair(0,1)\n"
            "Step 2:\nfinish()\n"
        )
        with pytest.raises(ScenarioError, match="exceed"):
            parse_scenario(bad, nspk.sorts)

    def test_routing_comments_round_trip(self, tls, renego_trace):
        scenario = compile_trace(renego_trace, tls)
        text = render_scenario(scenario)
        assert "Step 1: # i -> b" in text
        parsed = parse_scenario(text, tls.sorts)
        assert parsed.steps[1].sender == "i" and parsed.steps[1].receiver == "b"
