"""
NUT checking, tagging transformations and type-flaw attack search
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from app.config import AnalysisConfig
from app.schemas import (
    AttackVerdict, MessageLine, NoAttackWithinBounds, NutReport, NutViolation, RuleStep,
    SearchStats, TypeFlawAttack, WellTypedAttackExists,
)
from app.utils.errors import ConfigError
from app.utils.protocol_model import (
    SEND, ConstraintSequence, Node, Protocol, SemiBundle, Strand, constraint_sequences,
    honest_messages, rename_variables,
)
from app.utils.solver import solve
from app.utils.terms import (
    ATTACKER, ATTACKER_NAME, AsymEnc, BaseType, Concat, Constant, Hash, HashType, PairType,
    PencType, SencType, Signature, SigType, Substitution, SymEnc, Term, TypeTag, Variable, Xor,
    XorType, all_nodes, apply, children, contains_xor, format_term, is_compound, is_numeral,
    is_structural, is_tag, is_tagged_pair, is_well_typed, numeral, rebuild, substitute,
    type_of, xor_normalize,
)
from app.utils.unify_equational import mgu_combined
from app.utils.unify_std import match, unify

logger = logging.getLogger(__name__)

PAIRWISE_UNIFIABLE = "pairwise-unifiable-CT"
UNTAGGED_XOR = "untagged-xor-element"
COMMUTATIVE_ENCRYPTION = "commutative-encryption"

# weakness rules whose conclusions are subterms of their premises
SUBTERM_WEAKNESS_RULES = frozenset({"rsa_low_exp"})


# ---------------------------------------------------------------- tags

def tag_name(ty: TypeTag) -> str:
    if isinstance(ty, BaseType):
        if ty == ATTACKER_NAME:
            return "#agent"
        return f"#{ty.name}"
    if isinstance(ty, PairType):
        return "#pair"
    if isinstance(ty, PencType):
        return "#penc"
    if isinstance(ty, SencType):
        return "#senc"
    if isinstance(ty, HashType):
        return "#hash"
    if isinstance(ty, SigType):
        return "#sig"
    if isinstance(ty, XorType):
        return "#" + "⊕".join(sorted(tag_name(t)[1:] for t in ty.items))
    raise TypeError(f"not a type: {ty!r}")


def tag_for(t: Term) -> Constant:
    return Constant(tag_name(type_of(t)))


def is_correctly_tagged(t: Term) -> bool:
    return is_tagged_pair(t) and t.elements[0] == tag_for(t.elements[1])


# ---------------------------------------------------------------- NUT

def compound_terms(protocol: Protocol) -> List[Tuple[str, Term]]:
    """distinct compound terms with the first role that mentions them"""
    found: Dict[Term, str] = {}
    for role in protocol.roles:
        for node in role.nodes:
            for n in all_nodes(node.term):
                if is_compound(n) and n not in found:
                    found[n] = role.role_name
    return list(found.items())


def _opaque(var: Term) -> bool:
    return isinstance(var, Variable) and is_structural(var.declared_type)


_TYPE_CONSTRUCTOR = {PencType: AsymEnc, SencType: SymEnc, HashType: Hash, SigType: Signature, PairType: Concat}


def _placeholder_match(general: Term, specific: Term) -> Optional[Dict[Variable, Term]]:
    """specific is general with opaque placeholders filled by terms of their constructor"""
    bindable = {v for v in all_nodes(general) if _opaque(v)}
    if not bindable:
        return None
    rho = match(general, specific, bindable)
    if rho is None:
        return None
    for var, value in rho.items():
        expected = _TYPE_CONSTRUCTOR.get(type(var.declared_type))
        if var == value:
            continue
        if expected is None or not isinstance(value, expected):
            return None
    return rho


def same_message(t1: Term, t2: Term) -> bool:
    if t1 == t2:
        return True
    return _placeholder_match(t1, t2) is not None or _placeholder_match(t2, t1) is not None


def opaque_witnesses(protocol: Protocol) -> Dict[Variable, Term]:
    """for each opaque placeholder, the term another role has in its place"""
    witnesses: Dict[Variable, Term] = {}
    cts = [t for t, _ in compound_terms(protocol)]
    for general in cts:
        for specific in cts:
            if general == specific:
                continue
            rho = _placeholder_match(general, specific)
            if rho:
                for var, value in rho.items():
                    if var != value:
                        witnesses.setdefault(var, value)
    return witnesses


def _unifiable(t1: Term, t2: Term) -> bool:
    if contains_xor(t1) or contains_xor(t2):
        return bool(mgu_combined(t1, t2))
    return unify(t1, t2) is not None


def check_nut(protocol: Protocol, commutative: bool = False) -> NutReport:
    violations: List[NutViolation] = []
    advisories: List[NutViolation] = []
    cts = compound_terms(protocol)

    # clause 1: distinct compound terms never unify
    for (t1, role1), (t2, role2) in combinations(cts, 2):
        if same_message(t1, t2):
            continue
        if _unifiable(t1, rename_variables(t2, "'")):
            violations.append(NutViolation(PAIRWISE_UNIFIABLE, [format_term(t1), format_term(t2)],
                                           role1 if role1 == role2 else f"{role1}/{role2}"))

    # clause 2: every xor element is a type-tagged pair
    seen = set()
    for role in protocol.roles:
        for node in role.nodes:
            for n in all_nodes(node.term):
                if not isinstance(n, Xor) or n in seen:
                    continue
                seen.add(n)
                for element in n.elements:
                    if not is_correctly_tagged(element):
                        violations.append(NutViolation(UNTAGGED_XOR, [format_term(n), format_term(element)],
                                                       role.role_name))

    if commutative:
        for t, role in cts:
            inner = t.body if isinstance(t, (AsymEnc, SymEnc)) else None
            if type(inner) is type(t) and inner.key != t.key:
                advisories.append(NutViolation(COMMUTATIVE_ENCRYPTION, [format_term(t)], role))

    report = NutReport(violations, advisories)
    logger.info("nut: %s with %d violation(s)", protocol.name, len(violations))
    return report


# ---------------------------------------------------------------- tagging

class _Transform:
    """term rewriting shared by the tagging schemes, applied node by node"""

    def term(self, t: Term) -> Term:
        raise NotImplementedError

    def protocol(self, protocol: Protocol, suffix: str) -> Protocol:
        witnesses = opaque_witnesses(protocol)
        roles = []
        for role in protocol.roles:
            nodes = tuple(Node(n.sign, self.term(n.term), n.sender, n.receiver) for n in role.nodes)
            roles.append(Strand(role.role_name, nodes, role.agent, role.label))

        # opaque placeholders take the type of what they stand for
        retype: Dict[Variable, Variable] = {}
        for var, witness in witnesses.items():
            new_type = type_of(self.term(witness))
            if new_type != var.declared_type:
                retype[var] = Variable(var.name, new_type)
        if retype:
            roles = [Strand(r.role_name, tuple(n.mapped(lambda t: substitute(t, retype)) for n in r.nodes),
                            r.agent, r.label) for r in roles]
        declarations = {name: retype.get(var, var) for name, var in protocol.declarations.items()}
        name = protocol.name if protocol.name.endswith(suffix) else f"{protocol.name}{suffix}"
        return Protocol(name, tuple(roles), protocol.theory, declarations)


def _numbered(body: Term) -> bool:
    if isinstance(body, Concat):
        return is_numeral(body.elements[0]) or is_numeral(body.elements[-1])
    return is_numeral(body)


class _ComponentNumbers(_Transform):
    def __init__(self, protocol: Protocol):
        used = [int(c.name) for c in protocol.constants() if is_numeral(c)]
        self.next = max(used, default=0) + 1
        self.assigned: Dict[Term, int] = {}

    def _number_for(self, t: Term) -> int:
        for known, n in self.assigned.items():
            if same_message(known, t):
                return n
        n = self.next
        self.next += 1
        self.assigned[t] = n
        return n

    def term(self, t: Term) -> Term:
        if not is_compound(t):
            parts = children(t)
            return rebuild(t, tuple(self.term(c) for c in parts)) if parts else t
        if _numbered(t.body):
            return rebuild(t, (self.term(t.body),) + children(t)[1:])
        n = self._number_for(t)
        body = self.term(t.body)
        elements = body.elements if isinstance(body, Concat) else (body,)
        return rebuild(t, (Concat((numeral(n),) + tuple(elements)),) + children(t)[1:])


class _TypeTags(_Transform):
    def __init__(self, detailed_xor: bool):
        self.detailed_xor = detailed_xor

    def term(self, t: Term) -> Term:
        if self.detailed_xor:
            return self._xor_only(t)
        return self._top(t)

    # xor elements only
    def _xor_only(self, t: Term) -> Term:
        parts = children(t)
        if not parts:
            return t
        if isinstance(t, Xor):
            return xor_normalize(Xor(tuple(self._xor_element(self._xor_only(e)) for e in t.elements)))
        return rebuild(t, tuple(self._xor_only(c) for c in parts))

    def _xor_element(self, e: Term) -> Term:
        if is_tagged_pair(e):
            return e
        return Concat((tag_for(e), e))

    # full type tagging
    def _top(self, t: Term) -> Term:
        if is_compound(t):
            return self._compound(t)
        if isinstance(t, Concat):
            if is_tagged_pair(t):
                return t
            return Concat(tuple(self._field(e) for e in t.elements))
        return self._field(t)

    def _compound(self, t: Term) -> Term:
        return rebuild(t, (self._body(t.body),) + children(t)[1:])

    def _body(self, body: Term) -> Term:
        if is_tagged_pair(body):
            return body
        if isinstance(body, Concat):
            return Concat(tuple(self._field(e) for e in body.elements))
        return self._field(body)

    def _field(self, e: Term) -> Term:
        if is_tagged_pair(e) or is_numeral(e) or is_tag(e):
            return e
        if isinstance(e, Xor):
            return xor_normalize(Xor(tuple(self._xor_element(self._field(x)) for x in e.elements)))
        if isinstance(e, Concat):
            return Concat((Constant("#pair"), Concat(tuple(self._field(x) for x in e.elements))))
        if is_compound(e):
            inner = self._compound(e)
            return Concat((tag_for(inner), inner))
        return Concat((tag_for(e), e))


def tag_component_numbers(protocol: Protocol) -> Protocol:
    return _ComponentNumbers(protocol).protocol(protocol, "_numbered")


def tag_types(protocol: Protocol, detailed_xor: bool = False) -> Protocol:
    suffix = "_tagged" if detailed_xor else "_typed"
    return _TypeTags(detailed_xor).protocol(protocol, suffix)


TAG_SCHEMES = {
    "numbers": tag_component_numbers,
    "types": lambda p: tag_types(p, detailed_xor=False),
    "detailed-xor": lambda p: tag_types(p, detailed_xor=True),
}


# ---------------------------------------------------------------- attack search

@dataclass
class SequenceOutcome:
    index: int
    kind: str
    substitution: Optional[Substitution] = None
    trace: Tuple[RuleStep, ...] = ()
    exhausted: bool = True
    stats: Optional[SearchStats] = None


def examine_sequence(index: int, sequence: ConstraintSequence, config: AnalysisConfig,
                     weak_keys: FrozenSet[Term] = frozenset()) -> SequenceOutcome:
    """decide one constraint sequence: none, type-flaw or well-typed"""
    result = solve(sequence, config, weak_keys)
    stats = result.stats
    stats.sequences_checked = 1
    if not result.satisfiers:
        return SequenceOutcome(index, "none", exhausted=result.exhausted, stats=stats)

    for sigma, trace in result.satisfiers:
        if is_well_typed(sigma):
            return SequenceOutcome(index, "well-typed", sigma, trace, result.exhausted, stats)

    restricted = solve(sequence, replace(config, well_typed_only=True), weak_keys, known_dead=result.dead)
    stats.absorb(restricted.stats)
    stats.sequences_checked = 1
    if restricted.satisfiers:
        sigma, trace = restricted.satisfiers[0]
        return SequenceOutcome(index, "well-typed", sigma, trace, restricted.exhausted, stats)
    if not restricted.exhausted:
        # a type flaw needs the well-typed search to finish empty
        logger.info("analyze: sequence %d has only ill-typed satisfiers so far, %s",
                    index, restricted.stats.limit_hit)
        return SequenceOutcome(index, "none", exhausted=False, stats=stats)
    sigma, trace = result.satisfiers[0]
    return SequenceOutcome(index, "type-flaw", sigma, trace, restricted.exhausted, stats)


def _examine_packed(args) -> SequenceOutcome:
    return examine_sequence(*args)


def _party(t: Optional[Term]) -> str:
    return "*" if t is None else format_term(t)


def render_messages(bundle: SemiBundle, sigma: Substitution,
                    interleaving: Sequence[Tuple[int, int]]) -> List[MessageLine]:
    """alice-bob lines; a receive nobody with that name sent is marked spoofed"""
    lines: List[MessageLine] = []
    sent: List[Tuple[Optional[Term], Term]] = []
    for strand, node_index, node in honest_messages(bundle, sigma, interleaving):
        spoofed = False
        if node.sign == SEND:
            agent = apply(sigma, strand.agent) if strand.agent is not None else None
            sent.append((agent, node.term))
        elif node.sender is not None and node.sender != ATTACKER:
            spoofed = (node.sender, node.term) not in sent
        lines.append(MessageLine(f"{strand.name}.{node_index + 1}", node.sign,
                                 _party(node.sender), _party(node.receiver),
                                 format_term(node.term), spoofed))
    return lines


def _verdict(bundle: SemiBundle, outcome: SequenceOutcome, sequence: ConstraintSequence,
             stats: SearchStats) -> AttackVerdict:
    messages = render_messages(bundle, outcome.substitution, sequence.interleaving)
    sequence = replace(sequence, substitution=outcome.substitution)
    if outcome.kind == "type-flaw":
        return TypeFlawAttack(outcome.substitution, list(outcome.trace), sequence, messages, stats,
                              outcome.index, outcome.exhausted)
    return WellTypedAttackExists(outcome.substitution, list(outcome.trace), sequence, messages, stats,
                                 outcome.index)


def prepare_config(bundle: SemiBundle, config: AnalysisConfig) -> AnalysisConfig:
    """merge scenario options and the protocol's theory into the run configuration"""
    config = config.with_rules(bundle.options)
    if config.theory is None:
        config = replace(config, theory=bundle.protocol.theory)
    config.validate()
    if not config.acun and any(contains_xor(t) for t in bundle.protocol.terms()):
        raise ConfigError(f"{bundle.protocol.name} uses xor; run it with theory acun")
    # well-typed unifiers are only guaranteed when every rule produces subterms
    subterm_only = config.weakness_rules <= SUBTERM_WEAKNESS_RULES and not config.assoc_pairs
    if config.verify and subterm_only and check_nut(bundle.protocol).satisfied:
        config = replace(config, expect_well_typed=True)
    return config


def solve_sequences(bundle: SemiBundle, config: Optional[AnalysisConfig] = None) -> List[dict]:
    """satisfier counts per constraint sequence, without picking a verdict"""
    config = prepare_config(bundle, config or AnalysisConfig())
    rows = []
    for i, sequence in enumerate(constraint_sequences(bundle)):
        result = solve(sequence, config, bundle.weak_keys)
        rows.append({
            "Sequence": i,
            "Constraints": len(sequence),
            "Satisfiers": len(result.satisfiers),
            "Well-typed": sum(1 for sigma, _ in result.satisfiers if is_well_typed(sigma)),
            "Exhausted": result.exhausted,
        })
    return rows


def find_typeflaw(bundle: SemiBundle, config: Optional[AnalysisConfig] = None) -> AttackVerdict:
    config = prepare_config(bundle, config or AnalysisConfig())
    sequences = list(constraint_sequences(bundle))
    logger.info("analyze: %s, %d constraint sequence(s)", bundle.name, len(sequences))
    stats = SearchStats()
    exhausted = True

    if config.jobs > 1 and len(sequences) > 1:
        work = [(i, seq, config, bundle.weak_keys) for i, seq in enumerate(sequences)]
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_examine_packed, work))
    else:
        outcomes = []
        for i, seq in enumerate(sequences):
            outcome = examine_sequence(i, seq, config, bundle.weak_keys)
            outcomes.append(outcome)
            if outcome.kind != "none":
                break

    # the lowest decisive index wins
    for outcome in sorted(outcomes, key=lambda o: o.index):
        stats.absorb(outcome.stats)
        if outcome.kind != "none":
            verdict = _verdict(bundle, outcome, sequences[outcome.index], stats)
            logger.info("analyze: %s on sequence %d", verdict.kind, outcome.index)
            return verdict
        exhausted = exhausted and outcome.exhausted

    logger.info("analyze: no attack, exhausted=%s", exhausted)
    return NoAttackWithinBounds(exhausted, stats)
