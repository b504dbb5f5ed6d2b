"""
protocol and scenario description language, plus attack trace documents

grammar (see docs/grammar.md):
    protocol NAME
    theory acun
    var A, B : agent
    role A:
        send A -> B : penc([1, N_A, A]; pk(B))
        recv B -> A : ...
    -- comments run to the end of the line
"""
from __future__ import annotations

import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from arpeggio import EOF, NoMatch, OneOrMore, Optional as Opt, ParserPython, PTNodeVisitor, ZeroOrMore
from arpeggio import RegExMatch as _
from arpeggio import visit_parse_tree

from app.schemas import (
    AttackVerdict, MessageLine, NoAttackWithinBounds, RuleStep, SearchStats, TypeFlawAttack,
    WellTypedAttackExists,
)
from app.utils.errors import (
    DirectionMismatch, ProtocolError, ProtocolSyntaxError, TraceFormatError, TypeAnnotationMissing,
    UndeclaredIdentifier, UnknownRole,
)
from app.utils.protocol_model import (
    RECV, SEND, ConstraintSequence, Node, Protocol, SemiBundle, Strand, initial_knowledge,
    instantiate_role, scenario_agents,
)
from app.utils.terms import (
    AGENT, ATTACKER, BASE_TYPES, EMPTY, KEY, NONCE, Atom, AsymEnc, Constant, Hash, HashType,
    PairType, Password, PencType, PublicKey, SencType, SharedKey, Signature, SigType, Substitution,
    SymEnc, Term, TypeTag, Variable, all_nodes, concat, format_term, format_type, numeral,
    sort_terms, term_key, xor, xor_type,
)

logger = logging.getLogger(__name__)

TRACE_SCHEMA = "typeflaw-trace/1"


# ---------------------------------------------------------------- grammar

def comment():
    return _(r"--[^\n]*")


def ident():
    return _(r"[A-Za-z_][A-Za-z0-9_']*(@[A-Za-z0-9_]+)?")


def tag_const():
    return _(r"#[A-Za-z0-9_?⊕]+")


def number():
    return _(r"\d+")


def term_list():
    return term, ZeroOrMore(",", term)


def pair():
    return "[", term_list, "]"


def penc():
    return "penc", "(", term, ";", term, ")"


def senc():
    return "senc", "(", term, ";", term, ")"


def sig():
    return "sig", "(", term, ";", term, ")"


def hash_():
    return "h", "(", term, ")"


def pk():
    return "pk", "(", term, ")"


def sh():
    return "sh", "(", term, ",", term, ")"


def passwd():
    return "passwd", "(", term, ",", term, ")"


def xor_():
    return "xor", "(", term_list, ")"


def term():
    return [penc, senc, sig, hash_, pk, sh, passwd, xor_, pair, tag_const, number, ident]


def base_type():
    return _(r"(agent|nonce|key|number|attacker|tag)\b")


def type_list():
    return type_expr, ZeroOrMore(",", type_expr)


def type_pair():
    return "[", type_list, "]"


def type_penc():
    return "penc", "(", type_expr, ";", type_expr, ")"


def type_senc():
    return "senc", "(", type_expr, ";", type_expr, ")"


def type_sig():
    return "sig", "(", type_expr, ";", type_expr, ")"


def type_hash():
    return "h", "(", type_expr, ")"


def type_xor():
    return "xor", "(", type_list, ")"


def type_expr():
    return [type_penc, type_senc, type_sig, type_hash, type_xor, type_pair, base_type]


def header():
    return "protocol", ident


def theory_decl():
    return "theory", ident


def var_decl():
    return "var", ident, ZeroOrMore(",", ident), Opt(":", type_expr)


def send():
    return "send", ident, "->", ident, ":", term


def recv():
    return "recv", ident, "->", ident, ":", term


def role_block():
    return "role", ident, ":", ZeroOrMore([send, recv])


def protocol_file():
    return header, Opt(theory_decl), ZeroOrMore(var_decl), OneOrMore(role_block), EOF


def scenario_header():
    return "scenario", ident


def protocol_ref():
    return "protocol", ident


def atom_decl():
    return "atom", ident, ZeroOrMore(",", ident), ":", base_type


def binding():
    return ident, "=", term


def strand_decl():
    return "strand", ident, ":", ident, "{", Opt(binding, ZeroOrMore(",", binding)), "}"


def know_decl():
    return "know", term


def weak_decl():
    return "weak", term


def goal_decl():
    return "goal", "secret", term


def option_decl():
    return "option", _(r"[a-z_][a-z_-]*")


def scenario_file():
    return (scenario_header, Opt(protocol_ref),
            ZeroOrMore([atom_decl, strand_decl, know_decl, weak_decl, goal_decl, option_decl]), EOF)


def term_only():
    return term, EOF


def type_only():
    return type_expr, EOF


@lru_cache(maxsize=None)
def _parser(root) -> ParserPython:
    return ParserPython(root, comment, autokwd=True)


def _parse_tree(root, text: str):
    try:
        return _parser(root).parse(text)
    except NoMatch as e:
        raise ProtocolSyntaxError(f"syntax error: {e}", e.line, e.col)


# ---------------------------------------------------------------- visitors

class _Name(str):
    """an identifier, kept apart from punctuation strings"""


def _of(children, kind) -> list:
    return [c for c in children if isinstance(c, kind)]


def convention_type(name: str) -> TypeTag:
    """type guessed from the identifier: N_ nonce, K key, anything else agent"""
    base = name.lstrip("_").split("@")[0].lower()
    if base.startswith("n_") or base == "n":
        return NONCE
    if base.startswith("k"):
        return KEY
    return AGENT


class _TermBuilder(PTNodeVisitor):
    def resolve(self, name: str) -> Term:
        raise NotImplementedError

    def visit_ident(self, node, children):
        return _Name(node.value)

    def visit_number(self, node, children):
        return numeral(int(node.value))

    def visit_tag_const(self, node, children):
        return Constant(node.value)

    def visit_term(self, node, children):
        value = children[0]
        return self.resolve(value) if isinstance(value, _Name) else value

    def visit_term_list(self, node, children):
        return tuple(_of(children, Term))

    def visit_pair(self, node, children):
        return concat(*_of(children, tuple)[0])

    def visit_xor_(self, node, children):
        return xor(*_of(children, tuple)[0])

    def visit_penc(self, node, children):
        return AsymEnc(*_of(children, Term))

    def visit_senc(self, node, children):
        return SymEnc(*_of(children, Term))

    def visit_sig(self, node, children):
        return Signature(*_of(children, Term))

    def visit_hash_(self, node, children):
        return Hash(*_of(children, Term))

    def visit_pk(self, node, children):
        return PublicKey(*_of(children, Term))

    def visit_sh(self, node, children):
        return SharedKey(*_of(children, Term))

    def visit_passwd(self, node, children):
        return Password(*_of(children, Term))

    # types
    def visit_base_type(self, node, children):
        return BASE_TYPES[node.value]

    def visit_type_list(self, node, children):
        return tuple(_of(children, TypeTag))

    def visit_type_pair(self, node, children):
        return PairType(_of(children, tuple)[0])

    def visit_type_penc(self, node, children):
        return PencType(*_of(children, TypeTag))

    def visit_type_senc(self, node, children):
        return SencType(*_of(children, TypeTag))

    def visit_type_sig(self, node, children):
        return SigType(*_of(children, TypeTag))

    def visit_type_hash(self, node, children):
        return HashType(*_of(children, TypeTag))

    def visit_type_xor(self, node, children):
        return xor_type(_of(children, tuple)[0])

    def visit_type_expr(self, node, children):
        return _of(children, TypeTag)[0]

    def visit_term_only(self, node, children):
        return _of(children, Term)[0]

    def visit_type_only(self, node, children):
        return _of(children, TypeTag)[0]


class _AdHocTerms(_TermBuilder):
    def __init__(self, declarations: Optional[Mapping[str, Term]] = None):
        super().__init__()
        self.declarations = dict(declarations or {})

    def resolve(self, name: str) -> Term:
        if name in self.declarations:
            return self.declarations[name]
        if name == ATTACKER.name:
            return ATTACKER
        if name[0].isupper() or name[0] == "_":
            return Variable(name, convention_type(name))
        return Atom(name, convention_type(name))


class _ProtocolBuilder(_TermBuilder):
    def __init__(self):
        super().__init__()
        self.name = ""
        self.theory = "std"
        self.declarations: Dict[str, Variable] = {}

    def resolve(self, name: str) -> Term:
        if name in self.declarations:
            return self.declarations[name]
        if name == ATTACKER.name:
            return ATTACKER
        raise UndeclaredIdentifier(name)

    def visit_header(self, node, children):
        self.name = str(_of(children, _Name)[0])

    def visit_theory_decl(self, node, children):
        self.theory = str(_of(children, _Name)[0]).lower()

    def visit_var_decl(self, node, children):
        names = _of(children, _Name)
        types = _of(children, TypeTag)
        if not types:
            raise TypeAnnotationMissing(str(names[0]))
        for name in names:
            if name in self.declarations:
                raise ProtocolError(f"variable {name} declared twice")
            self.declarations[str(name)] = Variable(str(name), types[0])

    def _node(self, sign: str, children) -> Node:
        sender, receiver = (self.resolve(n) for n in _of(children, _Name))
        return Node(sign, _of(children, Term)[-1], sender, receiver)

    def visit_send(self, node, children):
        return self._node(SEND, children)

    def visit_recv(self, node, children):
        return self._node(RECV, children)

    def visit_role_block(self, node, children):
        name = str(_of(children, _Name)[0])
        agent = self.declarations.get(name)
        if agent is None or agent.declared_type != AGENT:
            raise UnknownRole(name)
        nodes = tuple(_of(children, Node))
        for n in nodes:
            mine = n.sender if n.sign == SEND else n.receiver
            if mine != agent:
                verb = "send from" if n.sign == SEND else "receive for"
                raise DirectionMismatch(f"role {name} cannot {verb} {format_term(mine)}: {format_term(n.term)}")
        return Strand(name, nodes, agent)

    def visit_protocol_file(self, node, children):
        return Protocol(self.name, tuple(_of(children, Strand)), self.theory, dict(self.declarations))


class _ScenarioBuilder(_TermBuilder):
    def __init__(self, protocol: Protocol):
        super().__init__()
        self.protocol = protocol
        self.name = "scenario"
        self.atoms: Dict[str, Atom] = {}
        self.strands: List[Strand] = []
        self.honest: List[Substitution] = []
        self.known: List[Term] = []
        self.weak: List[Term] = []
        self.goals: List[Term] = []
        self.options: List[str] = []

    def resolve(self, name: str) -> Term:
        if name in self.atoms:
            return self.atoms[name]
        if name == ATTACKER.name:
            return ATTACKER
        raise UndeclaredIdentifier(name)

    def visit_scenario_header(self, node, children):
        self.name = str(_of(children, _Name)[0])

    def visit_protocol_ref(self, node, children):
        wanted = str(_of(children, _Name)[0])
        if wanted != self.protocol.name:
            logger.warning("scenario: written for %s, running on %s", wanted, self.protocol.name)

    def visit_atom_decl(self, node, children):
        ty = _of(children, TypeTag)[0]
        for name in _of(children, _Name):
            self.atoms[str(name)] = Atom(str(name), ty)

    def visit_binding(self, node, children):
        return str(_of(children, _Name)[0]), _of(children, Term)[0]

    def visit_strand_decl(self, node, children):
        label, role_name = (str(n) for n in _of(children, _Name))
        role = self.protocol.role(role_name)
        if role is None:
            raise UnknownRole(role_name)
        bindings = {}
        for name, value in _of(children, tuple):
            var = self.protocol.declarations.get(name)
            if var is None:
                raise UndeclaredIdentifier(name)
            bindings[var] = value
        sigma = Substitution(bindings)
        self.strands.append(instantiate_role(role, sigma, label))
        self.honest.append(sigma)

    def visit_know_decl(self, node, children):
        self.known.append(_of(children, Term)[0])

    def visit_weak_decl(self, node, children):
        self.weak.append(_of(children, Term)[0])

    def visit_goal_decl(self, node, children):
        self.goals.append(_of(children, Term)[0])

    def visit_option_decl(self, node, children):
        self.options.append(node[-1].value)

    def bundle(self) -> SemiBundle:
        strands = list(self.strands)
        honest = list(self.honest)
        for i, goal in enumerate(self.goals):
            label = "goal" if len(self.goals) == 1 else f"goal{i + 1}"
            strands.append(Strand("goal", (Node(RECV, goal),), None, label))
            honest.append(EMPTY)
        agents = set(scenario_agents(strands)) | {a for a in self.atoms.values() if a.type == AGENT}
        return SemiBundle(
            protocol=self.protocol,
            strands=tuple(strands),
            honest_substitutions=tuple(honest),
            initial_knowledge=initial_knowledge(self.protocol, sort_terms(agents), self.known),
            weak_keys=frozenset(self.weak),
            options=frozenset(self.options),
            name=self.name,
        )


# ---------------------------------------------------------------- public api

def parse_term(text: str, declarations: Optional[Mapping[str, Term]] = None) -> Term:
    """a single term; undeclared names get their type from the naming convention"""
    return visit_parse_tree(_parse_tree(term_only, text), _AdHocTerms(declarations))


def parse_type(text: str) -> TypeTag:
    return visit_parse_tree(_parse_tree(type_only, text), _AdHocTerms())


def parse_protocol(text: str) -> Protocol:
    tree = _parse_tree(protocol_file, text)
    protocol = visit_parse_tree(tree, _ProtocolBuilder())
    logger.debug("parsed protocol %s: %d roles", protocol.name, len(protocol.roles))
    return protocol


def parse_scenario(text: str, protocol: Protocol) -> SemiBundle:
    tree = _parse_tree(scenario_file, text)
    builder = _ScenarioBuilder(protocol)
    visit_parse_tree(tree, builder)
    bundle = builder.bundle()
    logger.debug("parsed scenario %s: %d strands", bundle.name, len(bundle.strands))
    return bundle


def scenario_protocol(text: str) -> Optional[str]:
    """name on the scenario's protocol line, if it has one"""
    for line in text.splitlines():
        words = line.split("--")[0].split()
        if len(words) >= 2 and words[0] == "protocol":
            return words[1]
    return None


def load_protocol(path: Union[str, Path]) -> Protocol:
    return parse_protocol(Path(path).read_text(encoding="utf-8"))


def load_scenario(path: Union[str, Path], protocol: Optional[Protocol] = None) -> SemiBundle:
    """without a protocol the one named in the file is read from the same directory"""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if protocol is None:
        name = scenario_protocol(text)
        if name is None:
            raise ProtocolError(f"{path.name}: no protocol given")
        candidate = path.with_name(f"{name}.proto")
        if not candidate.exists():
            raise ProtocolError(f"{path.name}: protocol file {candidate.name} not found")
        protocol = load_protocol(candidate)
    return parse_scenario(text, protocol)


def format_protocol(protocol: Protocol) -> str:
    lines = [f"protocol {protocol.name}"]
    if protocol.theory != "std":
        lines.append(f"theory {protocol.theory}")
    groups: Dict[TypeTag, List[str]] = {}
    for name, var in protocol.declarations.items():
        groups.setdefault(var.declared_type, []).append(name)
    for ty, names in groups.items():
        lines.append(f"var {', '.join(names)} : {format_type(ty)}")
    for role in protocol.roles:
        lines.append("")
        lines.append(f"role {role.role_name}:")
        for n in role.nodes:
            verb = "send" if n.sign == SEND else "recv"
            lines.append(f"    {verb} {format_term(n.sender)} -> {format_term(n.receiver)} : {format_term(n.term)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- traces

def _symbols(sigma: Optional[Substitution]) -> Dict[str, Dict[str, str]]:
    found = {}
    if sigma:
        for var, value in sigma.items():
            for n in [var, *all_nodes(value)]:
                if isinstance(n, (Variable, Atom)):
                    found[n] = n
    symbols = {}
    for n in sorted(found, key=term_key):
        ty = n.declared_type if isinstance(n, Variable) else n.type
        symbols[n.name] = {"kind": "var" if isinstance(n, Variable) else "atom", "type": format_type(ty)}
    return symbols


def emit_trace(verdict: AttackVerdict, protocol: str = "", scenario: str = "") -> Dict[str, Any]:
    """machine readable trace document; no clock values so equal inputs give equal files"""
    found = not isinstance(verdict, NoAttackWithinBounds)
    sigma = verdict.substitution if found else None
    sequence = None
    if found and verdict.sequence is not None:
        sequence = {"index": verdict.sequence_index,
                    "interleaving": [list(step) for step in verdict.sequence.interleaving]}
    return {
        "schema": TRACE_SCHEMA,
        "protocol": protocol,
        "scenario": scenario,
        "verdict": verdict.kind,
        "type_flaw": verdict.type_flaw,
        "exhausted": verdict.to_dict().get("exhausted", True),
        "substitution": {var.name: format_term(value) for var, value in sigma.items()} if sigma else {},
        "symbols": _symbols(sigma),
        "messages": [m.to_dict() for m in verdict.messages] if found else [],
        "sequence": sequence,
        "rule_trace": [s.to_dict() for s in verdict.trace] if found else [],
        "search_stats": verdict.stats.to_dict(),
    }


def render_trace(document: Mapping[str, Any]) -> str:
    """alice-bob rendering of a trace document"""
    lines = [f"protocol {document.get('protocol') or '-'}, scenario {document.get('scenario') or '-'}",
             f"verdict: {document['verdict']}"
             f" (type flaw: {'yes' if document['type_flaw'] else 'no'},"
             f" exhausted: {'yes' if document['exhausted'] else 'no'})"]
    if document.get("substitution"):
        bindings = ", ".join(f"{t}/{v}" for v, t in document["substitution"].items())
        lines.append(f"substitution: {{{bindings}}}")
    for m in document.get("messages", []):
        lines.append(MessageLine(**m).render())
    return "\n".join(lines) + "\n"


def read_trace(document: Mapping[str, Any]) -> AttackVerdict:
    """inverse of emit_trace"""
    try:
        if document["schema"] != TRACE_SCHEMA:
            raise TraceFormatError(f"unknown trace schema: {document['schema']}")
        stats = SearchStats.from_dict(document["search_stats"])
        kind = document["verdict"]
        if kind == NoAttackWithinBounds.kind:
            return NoAttackWithinBounds(bool(document["exhausted"]), stats)

        declarations: Dict[str, Term] = {}
        for name, entry in document.get("symbols", {}).items():
            ty = parse_type(entry["type"])
            declarations[name] = Variable(name, ty) if entry["kind"] == "var" else Atom(name, ty)
        bindings = {}
        for name, text in document["substitution"].items():
            var = declarations.get(name)
            if not isinstance(var, Variable):
                raise TraceFormatError(f"substitution binds unknown variable {name}")
            bindings[var] = parse_term(text, declarations)
        sigma = Substitution(bindings)
        trace = [RuleStep(**s) for s in document["rule_trace"]]
        messages = [MessageLine(**m) for m in document["messages"]]
        raw = document.get("sequence") or {}
        interleaving: Tuple[Tuple[int, int], ...] = tuple(tuple(s) for s in raw.get("interleaving", ()))
        sequence = ConstraintSequence((), sigma, interleaving) if raw else None
        index = raw.get("index", 0)
    except (KeyError, TypeError, ValueError) as e:
        raise TraceFormatError(f"malformed trace document: {e}")
    except ProtocolSyntaxError as e:
        raise TraceFormatError(f"malformed term in trace: {e}")

    if kind == TypeFlawAttack.kind:
        return TypeFlawAttack(sigma, trace, sequence, messages, stats, index, bool(document["exhausted"]))
    if kind == WellTypedAttackExists.kind:
        return WellTypedAttackExists(sigma, trace, sequence, messages, stats, index)
    raise TraceFormatError(f"unknown verdict: {kind}")
