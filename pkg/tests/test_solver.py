import pytest

from app.config import AnalysisConfig
from app.utils.errors import RuleNotApplicable, SearchBudgetExceeded
from app.utils.protocol_model import Constraint, ConstraintSequence
from app.utils.solver import SolverState, active_constraint, apply_rule, elim, solve
from app.utils.terms import (
    ATTACKER, ATTACKER_KEY, NONCE, UNITY, AsymEnc, Concat, Password, PublicKey, Substitution, SymEnc,
    Variable, numeral, xor,
)
from tests.symbols import B, X, a, b, k, n_a, n_b


def _sequence(*constraints):
    return ConstraintSequence(tuple(Constraint(target, frozenset(knowledge)) for target, knowledge in constraints))


def _rules(result):
    return {step.rule for _, trace in result.satisfiers for step in trace}


def test_known_term():
    result = solve(_sequence((a, {a, b})))
    assert result.satisfiable
    assert result.exhausted
    assert result.satisfiers[0][0] == Substitution()


def test_unknown_term():
    result = solve(_sequence((n_a, {a, b})))
    assert not result.satisfiable
    assert result.exhausted


def test_variable_targets_are_already_solved():
    result = solve(_sequence((X, {a})))
    assert result.satisfiable
    assert result.stats.states_expanded == 1


def test_pairs_are_composed_and_split():
    result = solve(_sequence((Concat((n_a, a)), {Concat((a, n_a))})))
    assert result.satisfiable


def test_decrypt_with_the_attacker_key():
    result = solve(_sequence((n_a, {AsymEnc(Concat((numeral(1), n_a)), ATTACKER_KEY)})))
    assert result.satisfiable
    assert "pdec" in _rules(result)


def test_symmetric_decryption_needs_the_key():
    assert solve(_sequence((n_a, {SymEnc(n_a, k), k}))).satisfiable
    assert not solve(_sequence((n_a, {SymEnc(n_a, k)}))).satisfiable


def test_key_substitution_points_an_agent_at_the_attacker():
    result = solve(_sequence((n_a, {AsymEnc(n_a, PublicKey(B))})))
    assert result.satisfiable
    sigma = result.satisfiers[0][0]
    assert sigma[B] == ATTACKER
    assert "ksub" in _rules(result)


def test_unification_with_a_known_term():
    N = Variable("N", NONCE)
    result = solve(_sequence((AsymEnc(N, PublicKey(b)), {AsymEnc(n_b, PublicKey(b))})))
    sigmas = [sigma for sigma, _ in result.satisfiers]
    assert Substitution({N: n_b}) in sigmas


def test_ill_typed_unifiers_are_counted():
    result = solve(_sequence((AsymEnc(Concat((X, n_a)), PublicKey(b)),
                              {AsymEnc(Concat((n_b, n_a)), PublicKey(b))})))
    assert result.satisfiable
    assert result.stats.ill_typed_unifiers >= 1


def test_well_typed_only_skips_ill_typed_unifiers():
    sequence = _sequence((AsymEnc(Concat((X, n_a)), PublicKey(b)), {AsymEnc(Concat((n_b, n_a)), PublicKey(b))}))
    result = solve(sequence, AnalysisConfig(well_typed_only=True))
    assert not result.satisfiable


def test_xor_composition():
    config = AnalysisConfig(theory="acun")
    assert solve(_sequence((xor(a, n_a), {a, n_a})), config).satisfiable
    assert solve(_sequence((n_a, {xor(a, n_a), a})), config).satisfiable
    assert not solve(_sequence((n_a, {xor(a, n_a)})), config).satisfiable


def test_rsa_low_exponent():
    knowledge = {AsymEnc(Concat((numeral(1), n_a, a)), PublicKey(b)),
                 AsymEnc(Concat((numeral(2), n_a, b)), PublicKey(b)),
                 numeral(1), numeral(2), a, b}
    assert not solve(_sequence((n_a, knowledge))).satisfiable
    result = solve(_sequence((n_a, knowledge)), AnalysisConfig().with_rules(["rsa_low_exp"]))
    assert result.satisfiable
    assert "rsa_low_exp" in _rules(result)


def test_guessing_a_weak_password():
    password = Password(a, b)
    knowledge = {SymEnc(Concat((n_a, k)), password), SymEnc(Concat((n_a, n_b)), password)}
    config = AnalysisConfig().with_rules(["guessing"])
    assert not solve(_sequence((password, knowledge)), config).satisfiable
    result = solve(_sequence((password, knowledge)), config, weak_keys=frozenset({password}))
    assert result.satisfiable
    assert "guessing" in _rules(result)


def test_prefix_rule_is_flagged_as_non_subterm():
    knowledge = {SymEnc(Concat((a, b, n_a)), k)}
    target = SymEnc(Concat((a, b)), k)
    assert not solve(_sequence((target, knowledge))).satisfiable
    config = AnalysisConfig(verify=True).with_rules(["prefix"])
    result = solve(_sequence((target, knowledge)), config)
    assert result.satisfiable
    assert any(step["rule"] == "prefix" for step in result.stats.non_subterm_steps)


def test_prefix_attack_is_found_quickly():
    knowledge = {SymEnc(Concat((a, b, n_a)), k)}
    result = solve(_sequence((SymEnc(Concat((a, b)), k), knowledge)),
                   AnalysisConfig(max_states=500).with_rules(["prefix"]))
    assert result.satisfiable
    assert result.exhausted


def test_sdec_does_not_chase_its_own_key():
    config = AnalysisConfig().with_rules(["prefix"])
    result = solve(_sequence((k, {SymEnc(Concat((a, b, n_a)), k), SymEnc(Concat((b, n_b)), k), a, b})), config)
    assert not result.satisfiable
    assert result.exhausted

    result = solve(_sequence((n_a, {SymEnc(Concat((a, b, n_a)), k), SymEnc(k, n_b)})), config)
    assert not result.satisfiable
    assert result.exhausted


def test_unity_is_a_plain_constant_without_acun():
    result = solve(_sequence((n_a, {UNITY, a, PublicKey(b)})))
    assert not result.satisfiable
    assert result.exhausted
    assert solve(_sequence((Concat((a, UNITY)), {UNITY, a}))).satisfiable


def test_state_budget():
    sequence = _sequence((n_a, {SymEnc(n_a, k), SymEnc(k, n_b), a}))
    result = solve(sequence, AnalysisConfig(max_states=1))
    assert not result.exhausted
    assert result.stats.limit_hit == "max-states"
    with pytest.raises(SearchBudgetExceeded) as info:
        solve(sequence, AnalysisConfig(max_states=1), strict=True)
    assert info.value.partial is not None


def test_elim_drops_variables_from_the_term_set():
    state = SolverState(_sequence((n_a, {X, a})))
    after = elim(state)
    assert after.constraints[0].knowledge == frozenset({a})
    assert after.trace[-1].rule == "elim"
    assert apply_rule("elim", state)[0].constraints == after.constraints
    with pytest.raises(RuleNotApplicable):
        apply_rule("elim", after)


def test_apply_rule():
    state = SolverState(_sequence((Concat((a, b)), {a, b})))
    (composed,) = apply_rule("concat", state)
    assert [c.target for c in composed.constraints] == [a, b]
    with pytest.raises(RuleNotApplicable):
        apply_rule("prefix", state)
    with pytest.raises(RuleNotApplicable):
        apply_rule("teleport", state)
    with pytest.raises(RuleNotApplicable):
        apply_rule("pdec", state)


def test_active_constraint():
    state = SolverState(_sequence((X, {a}), (n_a, {a})))
    idx, c = active_constraint(state)
    assert idx == 1 and c.target == n_a
    assert active_constraint(SolverState(_sequence((X, {a})))) is None
