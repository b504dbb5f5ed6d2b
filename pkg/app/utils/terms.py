"""
message term algebra
terms, types, subterms, substitutions and the xor (acun) normal form
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, Iterator, Mapping, Optional, Tuple

from app.utils.errors import SubstitutionConflict

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- types

class TypeTag:
    __slots__ = ()

    def __str__(self):
        return format_type(self)


@dataclass(frozen=True, slots=True)
class BaseType(TypeTag):
    name: str


@dataclass(frozen=True, slots=True)
class PairType(TypeTag):
    items: Tuple[TypeTag, ...]


@dataclass(frozen=True, slots=True)
class PencType(TypeTag):
    body: TypeTag
    key: TypeTag


@dataclass(frozen=True, slots=True)
class SencType(TypeTag):
    body: TypeTag
    key: TypeTag


@dataclass(frozen=True, slots=True)
class HashType(TypeTag):
    body: TypeTag


@dataclass(frozen=True, slots=True)
class SigType(TypeTag):
    body: TypeTag
    key: TypeTag


@dataclass(frozen=True, slots=True)
class XorType(TypeTag):
    items: Tuple[TypeTag, ...]


AGENT = BaseType("agent")
NONCE = BaseType("nonce")
KEY = BaseType("key")
NUMBER = BaseType("number")
ATTACKER_NAME = BaseType("attacker")
TAG = BaseType("tag")

BASE_TYPES = {t.name: t for t in (AGENT, NONCE, KEY, NUMBER, ATTACKER_NAME, TAG)}


def xor_type(items: Iterable[TypeTag]) -> XorType:
    return XorType(tuple(sorted(items, key=format_type)))


def format_type(ty: TypeTag) -> str:
    if isinstance(ty, BaseType):
        return ty.name
    if isinstance(ty, PairType):
        return "[" + ", ".join(format_type(t) for t in ty.items) + "]"
    if isinstance(ty, PencType):
        return f"penc({format_type(ty.body)}; {format_type(ty.key)})"
    if isinstance(ty, SencType):
        return f"senc({format_type(ty.body)}; {format_type(ty.key)})"
    if isinstance(ty, HashType):
        return f"h({format_type(ty.body)})"
    if isinstance(ty, SigType):
        return f"sig({format_type(ty.body)}; {format_type(ty.key)})"
    if isinstance(ty, XorType):
        return "xor(" + ", ".join(format_type(t) for t in ty.items) + ")"
    raise TypeError(f"not a type: {ty!r}")


def is_structural(ty: TypeTag) -> bool:
    return not isinstance(ty, BaseType)


def types_compatible(declared: TypeTag, actual: TypeTag) -> bool:
    """the attacker name may stand wherever an agent is expected"""
    if declared == actual:
        return True
    return declared == AGENT and actual == ATTACKER_NAME


# ---------------------------------------------------------------- terms

class Term:
    __slots__ = ()

    def __str__(self):
        return format_term(self)


@dataclass(frozen=True, slots=True)
class Variable(Term):
    name: str
    declared_type: TypeTag


@dataclass(frozen=True, slots=True)
class Constant(Term):
    name: str


@dataclass(frozen=True, slots=True)
class Atom(Term):
    name: str
    type: TypeTag


@dataclass(frozen=True, slots=True)
class Concat(Term):
    elements: Tuple[Term, ...]

    def __post_init__(self):
        if len(self.elements) < 2:
            raise ValueError("concatenation needs at least two elements")


@dataclass(frozen=True, slots=True)
class PublicKey(Term):
    agent: Term


@dataclass(frozen=True, slots=True)
class SharedKey(Term):
    agent1: Term
    agent2: Term


@dataclass(frozen=True, slots=True)
class Password(Term):
    agent1: Term
    agent2: Term


@dataclass(frozen=True, slots=True)
class AsymEnc(Term):
    body: Term
    key: Term


@dataclass(frozen=True, slots=True)
class SymEnc(Term):
    body: Term
    key: Term


@dataclass(frozen=True, slots=True)
class Hash(Term):
    body: Term


@dataclass(frozen=True, slots=True)
class Signature(Term):
    body: Term
    key: Term


@dataclass(frozen=True, slots=True)
class Xor(Term):
    elements: Tuple[Term, ...]


UNITY = Constant("0")
ATTACKER = Constant("eps")
ATTACKER_KEY = PublicKey(ATTACKER)

KEY_CONSTRUCTORS = (PublicKey, SharedKey, Password)
COMPOUND_CONSTRUCTORS = (AsymEnc, SymEnc, Hash, Signature)


def numeral(n: int) -> Constant:
    return Constant(str(n))


def is_numeral(t: Term) -> bool:
    return isinstance(t, Constant) and t.name.isdigit() and t != UNITY


def is_tag(t: Term) -> bool:
    return isinstance(t, Constant) and t.name.startswith("#")


def is_tagged_pair(t: Term) -> bool:
    return isinstance(t, Concat) and len(t.elements) == 2 and is_tag(t.elements[0])


def is_compound(t: Term) -> bool:
    """compound terms in the NUT sense: encryptions, hashes, signatures"""
    return isinstance(t, COMPOUND_CONSTRUCTORS)


def concat(*elements: Term) -> Term:
    if len(elements) == 1:
        return elements[0]
    return Concat(tuple(elements))


def xor(*elements: Term) -> Term:
    return xor_normalize(Xor(tuple(elements)))


def children(t: Term) -> Tuple[Term, ...]:
    if isinstance(t, (Concat, Xor)):
        return t.elements
    if isinstance(t, PublicKey):
        return (t.agent,)
    if isinstance(t, (SharedKey, Password)):
        return (t.agent1, t.agent2)
    if isinstance(t, (AsymEnc, SymEnc, Signature)):
        return (t.body, t.key)
    if isinstance(t, Hash):
        return (t.body,)
    return ()


def rebuild(t: Term, new_children: Tuple[Term, ...]) -> Term:
    """same constructor as t, new children; xor nodes are re-normalized"""
    if isinstance(t, Concat):
        return Concat(tuple(new_children))
    if isinstance(t, Xor):
        return xor_normalize(Xor(tuple(new_children)))
    if isinstance(t, PublicKey):
        return PublicKey(new_children[0])
    if isinstance(t, SharedKey):
        return SharedKey(new_children[0], new_children[1])
    if isinstance(t, Password):
        return Password(new_children[0], new_children[1])
    if isinstance(t, AsymEnc):
        return AsymEnc(new_children[0], new_children[1])
    if isinstance(t, SymEnc):
        return SymEnc(new_children[0], new_children[1])
    if isinstance(t, Signature):
        return Signature(new_children[0], new_children[1])
    if isinstance(t, Hash):
        return Hash(new_children[0])
    return t


_RANK = {
    Constant: 0, Atom: 1, Variable: 2, Concat: 3, PublicKey: 4, SharedKey: 5,
    Password: 6, AsymEnc: 7, SymEnc: 8, Hash: 9, Signature: 10, Xor: 11,
}


@lru_cache(maxsize=None)
def term_key(t: Term) -> tuple:
    """total structural order: constructor rank, then lexicographic"""
    rank = _RANK[type(t)]
    if isinstance(t, Constant):
        if t.name.isdigit():
            return (rank, 0, int(t.name), t.name)
        return (rank, 1, 0, t.name)
    if isinstance(t, Atom):
        return (rank, t.name, format_type(t.type))
    if isinstance(t, Variable):
        return (rank, t.name, format_type(t.declared_type))
    parts = children(t)
    return (rank, len(parts), tuple(term_key(c) for c in parts))


def sort_terms(terms: Iterable[Term]) -> list:
    return sorted(terms, key=term_key)


@lru_cache(maxsize=None)
def xor_normalize(t: Term) -> Term:
    if isinstance(t, (Variable, Constant, Atom)):
        return t
    if not isinstance(t, Xor):
        return rebuild(t, tuple(xor_normalize(c) for c in children(t)))
    parity: Counter = Counter()
    for element in t.elements:
        element = xor_normalize(element)
        if isinstance(element, Xor):
            parity.update(element.elements)
        elif element != UNITY:
            parity[element] += 1
    remaining = sort_terms(e for e, n in parity.items() if n % 2)
    if not remaining:
        return UNITY
    if len(remaining) == 1:
        return remaining[0]
    return Xor(tuple(remaining))


@lru_cache(maxsize=None)
def type_of(t: Term) -> TypeTag:
    if isinstance(t, Variable):
        return t.declared_type
    if isinstance(t, Atom):
        return t.type
    if isinstance(t, Constant):
        if t == ATTACKER:
            return ATTACKER_NAME
        if is_tag(t):
            return TAG
        return NUMBER
    if isinstance(t, Concat):
        return PairType(tuple(type_of(e) for e in t.elements))
    if isinstance(t, KEY_CONSTRUCTORS):
        return KEY
    if isinstance(t, AsymEnc):
        return PencType(type_of(t.body), type_of(t.key))
    if isinstance(t, SymEnc):
        return SencType(type_of(t.body), type_of(t.key))
    if isinstance(t, Signature):
        return SigType(type_of(t.body), type_of(t.key))
    if isinstance(t, Hash):
        return HashType(type_of(t.body))
    if isinstance(t, Xor):
        return xor_type(type_of(e) for e in t.elements)
    raise TypeError(f"not a term: {t!r}")


def is_subterm(t: Term, u: Term) -> bool:
    # keys are not subterms of their encryption
    if t == u:
        return True
    if isinstance(u, (Concat, Xor)):
        return any(is_subterm(t, e) for e in u.elements)
    if isinstance(u, COMPOUND_CONSTRUCTORS):
        return is_subterm(t, u.body)
    return False


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, (Concat, Xor)):
        for e in t.elements:
            yield from subterms(e)
    elif isinstance(t, COMPOUND_CONSTRUCTORS):
        yield from subterms(t.body)


def all_nodes(t: Term) -> Iterator[Term]:
    """every node including key positions"""
    yield t
    for c in children(t):
        yield from all_nodes(c)


@lru_cache(maxsize=None)
def variables_of(t: Term) -> FrozenSet[Variable]:
    if isinstance(t, Variable):
        return frozenset((t,))
    found: FrozenSet[Variable] = frozenset()
    for c in children(t):
        found = found | variables_of(c)
    return found


def contains_xor(t: Term) -> bool:
    return any(isinstance(n, Xor) or n == UNITY for n in all_nodes(t))


def is_ground(t: Term) -> bool:
    return not variables_of(t)


def substitute(t: Term, mapping: Mapping[Variable, Term]) -> Term:
    if not mapping:
        return t
    if isinstance(t, Variable):
        return mapping.get(t, t)
    if isinstance(t, (Constant, Atom)):
        return t
    parts = children(t)
    new_parts = tuple(substitute(c, mapping) for c in parts)
    if new_parts == parts:
        return t
    return rebuild(t, new_parts)


def format_term(t: Term) -> str:
    if isinstance(t, (Variable, Constant, Atom)):
        return t.name
    if isinstance(t, Concat):
        return "[" + ", ".join(format_term(e) for e in t.elements) + "]"
    if isinstance(t, PublicKey):
        return f"pk({format_term(t.agent)})"
    if isinstance(t, SharedKey):
        return f"sh({format_term(t.agent1)}, {format_term(t.agent2)})"
    if isinstance(t, Password):
        return f"passwd({format_term(t.agent1)}, {format_term(t.agent2)})"
    if isinstance(t, AsymEnc):
        return f"penc({format_term(t.body)}; {format_term(t.key)})"
    if isinstance(t, SymEnc):
        return f"senc({format_term(t.body)}; {format_term(t.key)})"
    if isinstance(t, Signature):
        return f"sig({format_term(t.body)}; {format_term(t.key)})"
    if isinstance(t, Hash):
        return f"h({format_term(t.body)})"
    if isinstance(t, Xor):
        return "xor(" + ", ".join(format_term(e) for e in t.elements) + ")"
    raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------- substitutions

class Substitution:
    """immutable map from variables to terms, kept in idempotent form by its builders"""

    __slots__ = ("_map", "_items", "_hash")

    def __init__(self, bindings: Optional[Mapping[Variable, Term]] = None):
        clean: Dict[Variable, Term] = {}
        for var, value in (bindings or {}).items():
            value = xor_normalize(value)
            if value != var:
                clean[var] = value
        self._map = clean
        self._items = tuple(sorted(clean.items(), key=lambda kv: term_key(kv[0])))
        self._hash = hash(self._items)

    # mapping protocol
    def __getitem__(self, var: Variable) -> Term:
        return self._map[var]

    def get(self, var: Variable, default=None):
        return self._map.get(var, default)

    def __contains__(self, var) -> bool:
        return var in self._map

    def __iter__(self):
        return iter(var for var, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def items(self) -> Tuple[Tuple[Variable, Term], ...]:
        return self._items

    def as_dict(self) -> Dict[Variable, Term]:
        return dict(self._map)

    @property
    def domain(self) -> FrozenSet[Variable]:
        return frozenset(self._map)

    def range_variables(self) -> FrozenSet[Variable]:
        found: FrozenSet[Variable] = frozenset()
        for _, value in self._items:
            found = found | variables_of(value)
        return found

    def __eq__(self, other) -> bool:
        return isinstance(other, Substitution) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return format_substitution(self)

    def apply(self, t: Term) -> Term:
        return apply(self, t)

    def restrict(self, keep: Iterable[Variable]) -> "Substitution":
        keep = set(keep)
        return Substitution({v: t for v, t in self._items if v in keep})

    def is_idempotent(self) -> bool:
        return not (self.domain & self.range_variables())

    @classmethod
    def closed(cls, bindings: Mapping[Variable, Term]) -> "Substitution":
        """resolve chained bindings into idempotent form"""
        current = {v: xor_normalize(t) for v, t in bindings.items() if t != v}
        for _ in range(len(current) + 1):
            changed = False
            for var, value in list(current.items()):
                resolved = substitute(value, current)
                if resolved != value:
                    current[var] = resolved
                    changed = True
            if not changed:
                break
        for var, value in current.items():
            if var in variables_of(value):
                raise SubstitutionConflict(f"cyclic binding for {var.name}")
        return cls(current)


EMPTY = Substitution()


def format_substitution(sigma: Substitution) -> str:
    return "{" + ", ".join(f"{format_term(t)}/{v.name}" for v, t in sigma.items()) + "}"


def apply(sigma: Substitution, t: Term) -> Term:
    if not sigma:
        return t
    return xor_normalize(substitute(t, sigma._map))


def _unifiable(t: Term, u: Term) -> bool:
    if t == u:
        return True
    # the unifiers build on this module
    from app.utils.unify_equational import mgu_combined
    from app.utils.unify_std import unify
    if contains_xor(t) or contains_xor(u):
        return bool(mgu_combined(t, u))
    return unify(t, u) is not None


def compose(sigma: Substitution, tau: Substitution) -> Substitution:
    """apply(compose(sigma, tau), t) == apply(tau, apply(sigma, t))"""
    if not sigma:
        return tau
    if not tau:
        return sigma
    merged: Dict[Variable, Term] = {}
    for var, value in sigma.items():
        merged[var] = apply(tau, value)
        # tau's own binding for var is dropped unless it could never agree
        if var in tau and not _unifiable(merged[var], tau[var]):
            raise SubstitutionConflict(
                f"{var.name} bound to {format_term(merged[var])} and {format_term(tau[var])}")
    for var, value in tau.items():
        if var not in sigma:
            merged[var] = value
    result = Substitution(merged)
    if not result.is_idempotent():
        raise SubstitutionConflict("composition has no idempotent form")
    return result


def is_well_typed(sigma: Substitution) -> bool:
    return all(types_compatible(var.declared_type, type_of(value)) for var, value in sigma.items())


def ill_typed_bindings(sigma: Substitution):
    return [(var, value) for var, value in sigma.items()
            if not types_compatible(var.declared_type, type_of(value))]
