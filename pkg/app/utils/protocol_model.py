"""
parametric strands, honest instantiation and constraint sequences
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

from app.utils.errors import IllTypedHonestSubstitution, UnknownVariable
from app.utils.terms import (
    AGENT, ATTACKER, ATTACKER_KEY, UNITY, Atom, Concat, PublicKey, SharedKey,
    Substitution, Term, Variable, all_nodes, apply, format_term, ill_typed_bindings,
    is_numeral, is_tag, is_well_typed, sort_terms, substitute, variables_of,
)

logger = logging.getLogger(__name__)

SEND = "+"
RECV = "-"


@dataclass(frozen=True)
class Node:
    sign: str
    term: Term
    sender: Optional[Term] = None
    receiver: Optional[Term] = None

    def mapped(self, fn) -> "Node":
        return Node(self.sign, fn(self.term),
                    fn(self.sender) if self.sender is not None else None,
                    fn(self.receiver) if self.receiver is not None else None)


@dataclass(frozen=True)
class Strand:
    role_name: str
    nodes: Tuple[Node, ...]
    agent: Optional[Term] = None
    label: Optional[str] = None

    @property
    def name(self) -> str:
        return self.label or self.role_name

    def variables(self) -> FrozenSet[Variable]:
        found: FrozenSet[Variable] = frozenset()
        for node in self.nodes:
            found = found | variables_of(node.term)
        if self.agent is not None:
            found = found | variables_of(self.agent)
        return found

    def precedes(self, i: int, j: int) -> bool:
        return i <= j


@dataclass
class Protocol:
    name: str
    roles: Tuple[Strand, ...]
    theory: str = "std"
    declarations: Dict[str, Variable] = field(default_factory=dict)

    def role(self, name: str) -> Optional[Strand]:
        return next((r for r in self.roles if r.role_name == name), None)

    def terms(self) -> Iterator[Term]:
        for role in self.roles:
            for node in role.nodes:
                yield node.term

    def constants(self) -> List[Term]:
        """numerals and tags the protocol mentions"""
        found = {n for t in self.terms() for n in all_nodes(t) if is_numeral(n) or is_tag(n)}
        return sort_terms(found)


@dataclass(frozen=True)
class Constraint:
    target: Term
    knowledge: FrozenSet[Term]
    # xor sums added by compaction, never offered to it again
    derived: FrozenSet[Term] = frozenset()
    origin: Optional[Tuple[int, int]] = None

    def __str__(self):
        return f"{format_term(self.target)} : {{{', '.join(format_term(t) for t in sort_terms(self.knowledge))}}}"


@dataclass(frozen=True)
class ConstraintSequence:
    constraints: Tuple[Constraint, ...]
    substitution: Substitution = field(default_factory=Substitution)
    interleaving: Tuple[Tuple[int, int], ...] = ()

    def __len__(self):
        return len(self.constraints)

    def apply(self, sigma: Substitution) -> "ConstraintSequence":
        return replace(self, constraints=tuple(apply_constraint(sigma, c) for c in self.constraints))

    def key(self) -> tuple:
        return tuple((c.target, c.knowledge) for c in self.constraints)


def apply_constraint(sigma: Substitution, c: Constraint) -> Constraint:
    if not sigma:
        return c
    return Constraint(apply(sigma, c.target),
                      frozenset(apply(sigma, t) for t in c.knowledge),
                      frozenset(apply(sigma, t) for t in c.derived),
                      c.origin)


@dataclass
class SemiBundle:
    protocol: Protocol
    strands: Tuple[Strand, ...]
    honest_substitutions: Tuple[Substitution, ...]
    initial_knowledge: FrozenSet[Term]
    weak_keys: FrozenSet[Term] = frozenset()
    options: FrozenSet[str] = frozenset()
    name: str = "scenario"


def instantiate_role(role: Strand, sigma: Substitution, instance: Optional[str] = None) -> Strand:
    """semi-strand for one session; unbound variables get a per-instance suffix"""
    if not is_well_typed(sigma):
        bad = ", ".join(f"{format_term(t)}/{v.name}" for v, t in ill_typed_bindings(sigma))
        raise IllTypedHonestSubstitution(f"ill-typed honest substitution for {role.role_name}: {bad}")
    known = role.variables()
    unknown = [v.name for v in sigma if v not in known]
    if unknown:
        raise UnknownVariable(f"role {role.role_name} has no variable {', '.join(unknown)}")

    label = instance or role.role_name
    fresh = {v: Variable(f"{v.name}@{label}", v.declared_type)
             for v in sorted(known, key=lambda v: v.name) if v not in sigma}
    renaming = Substitution(fresh)

    def inst(t: Term) -> Term:
        return apply(renaming, apply(sigma, t))

    nodes = tuple(node.mapped(inst) for node in role.nodes)
    agent = inst(role.agent) if role.agent is not None else None
    return Strand(role.role_name, nodes, agent, label)


def initial_knowledge(protocol: Protocol, agents: Iterable[Term], extra: Iterable[Term] = ()) -> FrozenSet[Term]:
    knowledge = {ATTACKER, ATTACKER_KEY, UNITY}
    for agent in agents:
        knowledge.add(agent)
        knowledge.add(PublicKey(agent))
        knowledge.add(SharedKey(agent, ATTACKER))
    knowledge.update(protocol.constants())
    knowledge.update(extra)
    return frozenset(knowledge)


def scenario_agents(strands: Sequence[Strand]) -> List[Term]:
    found = set()
    for strand in strands:
        for node in strand.nodes:
            for n in all_nodes(node.term):
                if isinstance(n, Atom) and n.type == AGENT:
                    found.add(n)
        if isinstance(strand.agent, Atom):
            found.add(strand.agent)
    return sort_terms(found)


def _interleavings(lengths: Sequence[int]) -> Iterator[Tuple[int, ...]]:
    """every merge of the strands, strand index order first"""
    total = sum(lengths)
    positions = [0] * len(lengths)
    order: List[int] = []

    def walk():
        if len(order) == total:
            yield tuple(order)
            return
        for i, length in enumerate(lengths):
            if positions[i] < length:
                positions[i] += 1
                order.append(i)
                yield from walk()
                order.pop()
                positions[i] -= 1

    yield from walk()


def _split_pairs(t: Term) -> List[Term]:
    if isinstance(t, Concat):
        out: List[Term] = []
        for e in t.elements:
            out.extend(_split_pairs(e))
        return out
    return [t]


def normalize_sequence(sequence: ConstraintSequence) -> ConstraintSequence:
    """concat on targets and split on term sets until no pair is left"""
    constraints: List[Constraint] = []
    changed = False
    for c in sequence.constraints:
        knowledge = frozenset(x for t in c.knowledge for x in _split_pairs(t))
        targets = _split_pairs(c.target)
        if knowledge != c.knowledge or len(targets) > 1:
            changed = True
        for target in targets:
            constraints.append(Constraint(target, knowledge, c.derived, c.origin))
    if not changed:
        return sequence
    return replace(sequence, constraints=tuple(constraints))


def constraint_sequences(bundle: SemiBundle) -> Iterator[ConstraintSequence]:
    strands = bundle.strands
    seen = set()
    count = 0
    for order in _interleavings([len(s.nodes) for s in strands]):
        knowledge = set(bundle.initial_knowledge)
        constraints: List[Constraint] = []
        cursor = [0] * len(strands)
        steps: List[Tuple[int, int]] = []
        for i in order:
            node = strands[i].nodes[cursor[i]]
            steps.append((i, cursor[i]))
            if node.sign == SEND:
                knowledge.add(node.term)
            else:
                constraints.append(Constraint(node.term, frozenset(knowledge), origin=(i, cursor[i])))
            cursor[i] += 1
        sequence = ConstraintSequence(tuple(constraints), Substitution(), tuple(steps))
        key = sequence.key()
        if key in seen:
            continue
        seen.add(key)
        count += 1
        yield sequence
    logger.debug("constraint sequences: %d distinct", count)


def honest_messages(bundle: SemiBundle, sigma: Substitution, interleaving: Sequence[Tuple[int, int]]):
    """nodes of the interleaving with the satisfying substitution applied"""
    for strand_index, node_index in interleaving:
        strand = bundle.strands[strand_index]
        node = strand.nodes[node_index]
        yield strand, node_index, node.mapped(lambda t: apply(sigma, t))


def rename_variables(t: Term, suffix: str) -> Term:
    mapping = {v: Variable(f"{v.name}{suffix}", v.declared_type) for v in variables_of(t)}
    return substitute(t, mapping)
