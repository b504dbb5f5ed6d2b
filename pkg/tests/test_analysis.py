from dataclasses import replace

import pytest

from app.config import AnalysisConfig
from app.schemas import NoAttackWithinBounds, SearchStats, TypeFlawAttack, WellTypedAttackExists
from app.utils import analysis
from app.utils.analysis import (
    COMMUTATIVE_ENCRYPTION, PAIRWISE_UNIFIABLE, UNTAGGED_XOR, check_nut, examine_sequence, find_typeflaw,
    is_correctly_tagged, opaque_witnesses, prepare_config, same_message, solve_sequences, tag_for,
    tag_component_numbers, tag_name, tag_types,
)
from app.utils.dsl_io import parse_protocol, parse_scenario
from app.utils.errors import ConfigError
from app.utils.protocol_model import Constraint, ConstraintSequence
from app.utils.solver import SolveResult
from app.utils.terms import (
    AGENT, NONCE, AsymEnc, Concat, Constant, PublicKey, SencType, Variable, Xor, XorType,
    format_term, numeral,
)
from tests.symbols import PROTOCOLS, X, a, b, n_a, n_b

CLASH = """
protocol clash
var A, B : agent
var N_A : nonce
role A:
    send A -> B : penc([A, N_A]; pk(B))
    send A -> B : penc([N_A, A]; pk(B))
"""

NESTED = """
protocol nested
var A, B : agent
var N_A : nonce
role A:
    send A -> B : penc(penc(N_A; pk(A)); pk(B))
"""


def test_tag_names():
    assert tag_name(AGENT) == "#agent"
    assert tag_name(XorType((AGENT, NONCE))) == "#agent⊕nonce"
    assert tag_for(n_a) == Constant("#nonce")
    assert is_correctly_tagged(Concat((Constant("#nonce"), n_a)))
    assert not is_correctly_tagged(Concat((Constant("#agent"), n_a)))


def test_nut_untagged_xor(protocol):
    report = check_nut(protocol("nsl_xor"))
    assert not report.satisfied
    clauses = {v.clause for v in report.violations}
    assert clauses == {UNTAGGED_XOR}
    untagged = {v.witnesses[1] for v in report.violations}
    assert untagged == {"N_A", "B"}
    assert all(v.witnesses[0] == "xor(B, N_A)" for v in report.violations)


def test_nut_tagged_xor(protocol):
    report = check_nut(protocol("nsl_xor_tagged"))
    assert report.satisfied
    assert report.to_dict()["violations"] == []


def test_nut_opaque_placeholder_is_the_same_message(protocol):
    woo_lam = protocol("woo_lam_pi1")
    assert check_nut(woo_lam).satisfied
    witnesses = opaque_witnesses(woo_lam)
    (var,) = witnesses
    assert var.name == "X"
    assert format_term(witnesses[var]) == "senc([A, B, N_B, 1]; sh(A, S))"


def test_nut_pairwise_unifiable():
    report = check_nut(parse_protocol(CLASH))
    assert not report.satisfied
    (violation,) = report.violations
    assert violation.clause == PAIRWISE_UNIFIABLE
    assert violation.role == "A"


def test_commutative_encryption_advisory():
    protocol = parse_protocol(NESTED)
    assert check_nut(protocol).advisories == []
    advisories = check_nut(protocol, commutative=True).advisories
    assert [v.clause for v in advisories] == [COMMUTATIVE_ENCRYPTION]


def test_same_message():
    body = Concat((numeral(1), n_a))
    t = AsymEnc(body, PublicKey(a))
    assert same_message(t, t)
    placeholder = Variable("X", SencType(NONCE, AGENT))
    assert not same_message(AsymEnc(placeholder, PublicKey(a)), t)


def test_component_numbers():
    tagged = tag_component_numbers(parse_protocol(CLASH))
    assert tagged.name == "clash_numbered"
    first, second = (n.term for n in tagged.roles[0].nodes)
    assert format_term(first) == "penc([1, A, N_A]; pk(B))"
    assert format_term(second) == "penc([2, N_A, A]; pk(B))"
    assert check_nut(tagged).satisfied


def test_component_numbers_keep_existing_numbers(protocol):
    nsl = protocol("nsl_xor")
    numbered = tag_component_numbers(nsl)
    assert [r.nodes for r in numbered.roles] == [r.nodes for r in nsl.roles]


def test_detailed_xor_tagging_matches_the_tagged_protocol(protocol):
    tagged = tag_types(protocol("nsl_xor"), detailed_xor=True)
    expected = protocol("nsl_xor_tagged")
    assert tagged.name == expected.name
    assert tagged.roles == expected.roles
    assert check_nut(tagged).satisfied


def test_type_tags_fields():
    tagged = tag_types(parse_protocol(CLASH))
    assert tagged.name == "clash_typed"
    first = tagged.roles[0].nodes[0].term
    assert format_term(first) == "penc([[#agent, A], [#nonce, N_A]]; pk(B))"
    assert check_nut(tagged).satisfied


def test_type_tags_retype_opaque_placeholders(protocol):
    tagged = tag_types(protocol("woo_lam_pi1"))
    placeholder = tagged.declarations["X"]
    assert isinstance(placeholder.declared_type, SencType)
    assert "tag" in str(placeholder.declared_type)
    assert check_nut(tagged).satisfied


@pytest.mark.parametrize("name", PROTOCOLS)
def test_tagging_satisfies_nut(protocol, name):
    assert check_nut(tag_types(protocol(name))).satisfied


def test_xor_protocol_needs_acun():
    text = """
protocol plain_xor
var A, B : agent
var N_A : nonce
role A:
    send A -> B : penc(xor(N_A, A); pk(B))
"""
    bundle = parse_scenario("scenario s\natom a, b : agent\natom n_a : nonce\n"
                            "strand alpha : A { A = a, B = b, N_A = n_a }\n", parse_protocol(text))
    with pytest.raises(ConfigError):
        prepare_config(bundle, AnalysisConfig())


def test_prepare_config(scenario):
    nsl = scenario("nsl_tagged_two_session")
    config = prepare_config(nsl, AnalysisConfig(verify=True))
    assert config.theory == "acun"
    assert config.expect_well_typed

    woo_lam = scenario("woo_lam_single")
    config = prepare_config(woo_lam, AnalysisConfig(verify=True).with_rules(["prefix", "assoc-pairs"]))
    assert not config.expect_well_typed


def test_solve_sequences(scenario):
    rows = solve_sequences(scenario("woo_lam_single"))
    assert len(rows) == 1
    assert rows[0]["Sequence"] == 0
    assert rows[0]["Satisfiers"] == 0
    assert rows[0]["Exhausted"]


def test_std_theory_search_with_the_unity_in_the_term_set(scenario):
    bundle = scenario("coppersmith")
    (row,) = solve_sequences(bundle)
    assert row["Satisfiers"] == 0
    assert row["Exhausted"]


def test_explicit_std_theory_on_a_xor_protocol(scenario):
    bundle = scenario("nsl_two_session")
    assert prepare_config(bundle, AnalysisConfig()).theory == "acun"
    with pytest.raises(ConfigError):
        prepare_config(bundle, AnalysisConfig(theory="std"))


ILL_TYPED_ONLY = ConstraintSequence((
    Constraint(AsymEnc(Concat((X, n_a)), PublicKey(b)), frozenset({AsymEnc(Concat((n_b, n_a)), PublicKey(b))})),
))


def test_ill_typed_satisfier_is_a_type_flaw():
    outcome = examine_sequence(0, ILL_TYPED_ONLY, AnalysisConfig())
    assert outcome.kind == "type-flaw"
    assert outcome.exhausted


def test_unfinished_well_typed_search_is_not_a_type_flaw(monkeypatch):
    full_solve = analysis.solve

    def budgeted(sequence, config, weak_keys, known_dead=frozenset()):
        if config.well_typed_only:
            stats = SearchStats()
            stats.limit_hit = "max-states"
            return SolveResult([], False, stats)
        return full_solve(sequence, config, weak_keys, known_dead=known_dead)

    monkeypatch.setattr(analysis, "solve", budgeted)
    outcome = examine_sequence(0, ILL_TYPED_ONLY, AnalysisConfig())
    assert outcome.kind == "none"
    assert not outcome.exhausted
    assert outcome.stats.limit_hit == "max-states"


# ---------------------------------------------------------------- corpus verdicts

@pytest.mark.slow
def test_nsl_xor_type_flaw(scenario):
    verdict = find_typeflaw(scenario("nsl_two_session"))
    assert isinstance(verdict, TypeFlawAttack)
    assert verdict.type_flaw
    bindings = {var.name: value for var, value in verdict.substitution.items()}
    value = bindings["N_A@beta"]
    assert isinstance(value, Xor)
    assert {format_term(e) for e in value.elements} == {"b", "eps", "n_a"}
    spoofed = [m for m in verdict.messages if m.spoofed]
    assert any(m.sender == "a" and m.label.startswith("beta") for m in spoofed)


@pytest.mark.slow
def test_nsl_xor_tagged_no_attack(scenario):
    verdict = find_typeflaw(scenario("nsl_tagged_two_session"), AnalysisConfig(verify=True))
    assert isinstance(verdict, NoAttackWithinBounds)
    assert verdict.exhausted
    assert verdict.stats.ill_typed_unifiers == 0


@pytest.mark.slow
def test_woo_lam_prefix_attack(scenario):
    config = AnalysisConfig().with_rules(["prefix", "assoc-pairs"])
    verdict = find_typeflaw(scenario("woo_lam_single"), config)
    assert isinstance(verdict, TypeFlawAttack)
    bindings = {var.name: format_term(value) for var, value in verdict.substitution.items()}
    assert bindings["X@beta"] == "[n_b, 3]"


@pytest.mark.slow
def test_woo_lam_without_prefix_or_with_tags(scenario):
    plain = find_typeflaw(scenario("woo_lam_single"), AnalysisConfig().with_rules(["assoc-pairs"]))
    assert isinstance(plain, NoAttackWithinBounds) and plain.exhausted
    config = AnalysisConfig().with_rules(["prefix", "assoc-pairs"])
    tagged = find_typeflaw(scenario("woo_lam_tagged_single"), config)
    assert isinstance(tagged, NoAttackWithinBounds) and tagged.exhausted


@pytest.mark.slow
def test_woo_lam_non_subterm_steps_are_recorded(scenario):
    config = AnalysisConfig(verify=True).with_rules(["prefix", "assoc-pairs"])
    verdict = find_typeflaw(scenario("woo_lam_single"), config)
    assert verdict.stats.non_subterm_steps


@pytest.mark.slow
def test_gong_guessing_attack(scenario):
    bundle = scenario("gong_two_run")
    verdict = find_typeflaw(bundle, AnalysisConfig().with_rules(["guessing"]))
    assert isinstance(verdict, WellTypedAttackExists)
    assert not verdict.type_flaw
    assert any(step.rule == "guessing" for step in verdict.trace)
    assert isinstance(find_typeflaw(bundle), NoAttackWithinBounds)


def test_coppersmith(scenario):
    bundle = scenario("coppersmith")
    verdict = find_typeflaw(bundle, AnalysisConfig().with_rules(["rsa_low_exp"]))
    assert isinstance(verdict, WellTypedAttackExists)
    assert verdict.sequence_index == 0
    none = find_typeflaw(bundle)
    assert isinstance(none, NoAttackWithinBounds)
    assert none.exhausted


@pytest.mark.parametrize("name", [
    "coppersmith",
    "woo_lam_single",
    "woo_lam_tagged_single",
    pytest.param("gong_two_run", marks=pytest.mark.slow),
])
def test_core_rules_only_add_subterms(scenario, name):
    # verify raises on a core-rule step that adds a non-subterm
    verdict = find_typeflaw(scenario(name), AnalysisConfig(verify=True))
    assert isinstance(verdict, NoAttackWithinBounds)
    assert verdict.stats.non_subterm_steps == []


def test_parallel_search_agrees(scenario):
    bundle = scenario("coppersmith")
    config = AnalysisConfig().with_rules(["rsa_low_exp"])
    serial = find_typeflaw(bundle, config)
    parallel = find_typeflaw(bundle, replace(config, jobs=2))
    assert parallel.kind == serial.kind
    assert parallel.sequence_index == serial.sequence_index
