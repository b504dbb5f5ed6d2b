import json
from pathlib import Path

import jsonschema
import pytest

from app.config import AnalysisConfig
from app.schemas import NoAttackWithinBounds, RuleStep, SearchStats, TypeFlawAttack
from app.utils.analysis import find_typeflaw
from app.utils.dsl_io import (
    TRACE_SCHEMA, convention_type, emit_trace, format_protocol, load_scenario, parse_protocol,
    parse_scenario, parse_term, parse_type, read_trace, render_trace, scenario_protocol,
)
from app.utils.errors import (
    DirectionMismatch, ProtocolError, ProtocolSyntaxError, TraceFormatError, TypeAnnotationMissing,
    UndeclaredIdentifier, UnknownRole,
)
from app.utils.protocol_model import RECV, SEND
from app.utils.terms import (
    AGENT, ATTACKER, KEY, NONCE, AsymEnc, Atom, Concat, Constant, Hash, PairType, Password,
    PencType, PublicKey, SharedKey, Signature, Substitution, SymEnc, Variable, XorType, format_term,
    numeral, xor,
)
from tests.symbols import PROTOCOLS, A, B, N_A, a, b, n_a

TOY = """
-- two messages
protocol toy

var A, B : agent
var N_A : nonce

role A:
    send A -> B : penc([1, N_A, A]; pk(B))
    recv B -> A : N_A
"""


def test_parse_term_constructors():
    assert parse_term("penc([1, n_a]; pk(B))") == AsymEnc(Concat((numeral(1), n_a)), PublicKey(B))
    assert parse_term("senc(N_A; sh(A, B))") == SymEnc(N_A, SharedKey(A, B))
    assert parse_term("sig(h(a); passwd(a, b))") == Signature(Hash(a), Password(a, b))
    assert parse_term("[#nonce, n_a]") == Concat((Constant("#nonce"), n_a))
    assert parse_term("eps") == ATTACKER


def test_parse_term_normalizes_xor():
    assert parse_term("xor(a, n_a, a)") == n_a
    assert parse_term("xor(N_A, B)") == xor(B, N_A)


def test_parse_term_naming_convention():
    assert convention_type("N_B@beta") == NONCE
    assert convention_type("K") == KEY
    assert convention_type("S") == AGENT
    assert parse_term("K") == Variable("K", KEY)
    assert parse_term("k") == Atom("k", KEY)


def test_parse_term_with_declarations():
    X = Variable("X", PencType(NONCE, KEY))
    assert parse_term("[X, a]", {"X": X}) == Concat((X, a))


def test_parse_type():
    assert parse_type("penc([agent, nonce]; key)") == PencType(PairType((AGENT, NONCE)), KEY)
    assert parse_type("xor(nonce, agent)") == XorType((AGENT, NONCE))


def test_syntax_error_carries_position():
    with pytest.raises(ProtocolSyntaxError) as info:
        parse_term("penc(a; )")
    assert info.value.line == 1
    assert info.value.column is not None


def test_parse_protocol():
    protocol = parse_protocol(TOY)
    assert protocol.name == "toy"
    assert protocol.theory == "std"
    (role,) = protocol.roles
    assert role.role_name == "A" and role.agent == A
    assert [n.sign for n in role.nodes] == [SEND, RECV]
    assert role.nodes[0].sender == A and role.nodes[0].receiver == B
    assert protocol.declarations["N_A"] == N_A


@pytest.mark.parametrize("text, error", [
    (TOY.replace("var N_A : nonce\n", ""), UndeclaredIdentifier),
    (TOY.replace("var N_A : nonce", "var N_A"), TypeAnnotationMissing),
    (TOY.replace("role A:", "role N_A:"), UnknownRole),
    (TOY.replace("send A -> B", "send B -> A"), DirectionMismatch),
    (TOY.replace("var N_A : nonce", "var N_A : nonce\nvar A : nonce"), ProtocolError),
    (TOY.replace("role A:", "role A"), ProtocolSyntaxError),
])
def test_protocol_errors(text, error):
    with pytest.raises(error):
        parse_protocol(text)


@pytest.mark.parametrize("name", PROTOCOLS)
def test_format_protocol_round_trip(protocol, name):
    original = protocol(name)
    assert parse_protocol(format_protocol(original)) == original


def test_scenario(scenario):
    bundle = scenario("nsl_two_session")
    assert bundle.name == "nsl_two_session"
    assert [s.name for s in bundle.strands] == ["alpha", "beta"]
    alpha, beta = bundle.strands
    assert alpha.agent == a
    assert beta.agent == b
    assert alpha.nodes[0].receiver == ATTACKER
    assert n_a not in bundle.initial_knowledge
    assert a in bundle.initial_knowledge and b in bundle.initial_knowledge


def test_goal_strand_and_weak_keys(scenario):
    bundle = scenario("gong_two_run")
    goal = bundle.strands[-1]
    assert goal.name == "goal"
    assert goal.nodes[0].sign == RECV
    assert goal.nodes[0].term == Password(a, b)
    assert bundle.weak_keys == frozenset({Password(a, b)})


@pytest.mark.parametrize("line, error", [
    ("strand alpha : C { A = a }", UnknownRole),
    ("strand alpha : A { M = a }", UndeclaredIdentifier),
    ("strand alpha : A { A = c }", UndeclaredIdentifier),
    ("strand alpha : A", ProtocolSyntaxError),
])
def test_scenario_errors(line, error):
    protocol = parse_protocol(TOY)
    with pytest.raises(error):
        parse_scenario(f"scenario s\natom a, b : agent\n{line}\n", protocol)


def test_scenario_options():
    text = "scenario s\natom a, b : agent\natom n_a : nonce\noption prefix\noption assoc-pairs\n" \
           "strand alpha : A { A = a, B = b, N_A = n_a }\n"
    bundle = parse_scenario(text, parse_protocol(TOY))
    assert bundle.options == frozenset({"prefix", "assoc-pairs"})


def test_scenario_protocol(corpus_text):
    assert scenario_protocol(corpus_text("woo_lam_single.scen")) == "woo_lam_pi1"
    assert scenario_protocol("scenario s\natom a : agent\n") is None


def test_scenario_without_protocol_line(tmp_path):
    path = tmp_path / "lonely.scen"
    path.write_text("scenario lonely\natom a : agent\n", encoding="utf-8")
    with pytest.raises(ProtocolError, match="no protocol"):
        load_scenario(path)
    path.write_text("scenario lonely\nprotocol missing\natom a : agent\n", encoding="utf-8")
    with pytest.raises(ProtocolError, match="not found"):
        load_scenario(path)


# ---------------------------------------------------------------- traces

def test_no_attack_trace():
    stats = SearchStats()
    stats.states_expanded = 7
    document = emit_trace(NoAttackWithinBounds(True, stats), "p", "s")
    assert document["schema"] == TRACE_SCHEMA
    assert document["verdict"] == "no-attack-within-bounds"
    assert document["substitution"] == {}
    verdict = read_trace(json.loads(json.dumps(document)))
    assert isinstance(verdict, NoAttackWithinBounds)
    assert verdict.exhausted
    assert verdict.stats.states_expanded == 7
    assert "verdict: no-attack-within-bounds" in render_trace(document)


def test_attack_trace_survives_json():
    X = Variable("X@beta", PencType(NONCE, KEY))
    sigma_value = Concat((n_a, numeral(3)))
    sigma = Substitution({X: sigma_value})
    verdict = TypeFlawAttack(sigma, [RuleStep("prefix", 2, "senc")], None, [], SearchStats(), 0, False)
    document = emit_trace(verdict, "woo_lam_pi1", "woo_lam_single")
    assert document["symbols"]["X@beta"] == {"kind": "var", "type": "penc(nonce; key)"}
    assert document["symbols"]["n_a"] == {"kind": "atom", "type": "nonce"}

    back = read_trace(json.loads(json.dumps(document)))
    assert isinstance(back, TypeFlawAttack)
    assert not back.exhausted
    assert back.substitution == sigma
    assert back.trace == [RuleStep("prefix", 2, "senc")]
    assert emit_trace(back, "woo_lam_pi1", "woo_lam_single") == document


@pytest.mark.slow
def test_trace_of_a_real_attack(scenario):
    config = AnalysisConfig().with_rules(["prefix", "assoc-pairs"])
    verdict = find_typeflaw(scenario("woo_lam_single"), config)
    document = emit_trace(verdict, "woo_lam_pi1", "woo_lam_single")
    assert document["type_flaw"]
    assert document["substitution"]["X@beta"] == "[n_b, 3]"
    text = render_trace(document)
    assert "Msg beta.1." in text
    assert read_trace(document).substitution == verdict.substitution


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(schema="other/1"),
    lambda d: d.pop("search_stats"),
    lambda d: d.update(verdict="maybe"),
    lambda d: d["substitution"].update({"Q": "a"}),
    lambda d: d["substitution"].update({"X@beta": "penc(a;"}),
])
def test_malformed_traces(mutate):
    X = Variable("X@beta", NONCE)
    document = emit_trace(TypeFlawAttack(Substitution({X: a}), [], None, [], SearchStats()))
    mutate(document)
    with pytest.raises(TraceFormatError):
        read_trace(document)


TRACE_JSON_SCHEMA = json.loads(
    (Path(__file__).resolve().parent.parent / "docs" / "trace.schema.json").read_text(encoding="utf-8"))


def test_emitted_traces_match_the_schema(scenario):
    verdicts = [
        NoAttackWithinBounds(False, SearchStats()),
        TypeFlawAttack(Substitution({Variable("X@beta", NONCE): a}), [RuleStep("un", 0, "a ~ X@beta")],
                       None, [], SearchStats()),
        find_typeflaw(scenario("coppersmith"), AnalysisConfig().with_rules(["rsa_low_exp"])),
    ]
    for verdict in verdicts:
        document = json.loads(json.dumps(emit_trace(verdict, "p", "s")))
        jsonschema.validate(instance=document, schema=TRACE_JSON_SCHEMA)


def test_format_term_of_parsed_terms():
    text = "penc([2, xor([#agent, B], [#nonce, N_A]), N_B]; pk(A))"
    assert format_term(parse_term(text)) == text
