"""
associative pairing

with the assoc-pairs option [a, [b, c]] and [[a, b], c] are the same flat list
[a, b, c], and a variable inside a list may stand for a whole segment of it
"""
from __future__ import annotations

import logging
from typing import Dict, Iterator, List, Sequence, Tuple

from app.utils.errors import ImpureProblem, SubstitutionConflict
from app.utils.terms import (
    Concat, Substitution, Term, Variable, children, concat, contains_xor, rebuild,
    substitute, variables_of,
)

logger = logging.getLogger(__name__)

Bindings = Dict[Variable, Term]


def flatten_pairs(t: Term) -> Term:
    """splice nested concatenations everywhere in t"""
    parts = children(t)
    if not parts:
        return t
    flat = tuple(flatten_pairs(c) for c in parts)
    if isinstance(t, Concat):
        spliced: List[Term] = []
        for element in flat:
            if isinstance(element, Concat):
                spliced.extend(element.elements)
            else:
                spliced.append(element)
        return Concat(tuple(spliced))
    return rebuild(t, flat)


def list_elements(t: Term) -> Tuple[Term, ...]:
    t = flatten_pairs(t)
    return t.elements if isinstance(t, Concat) else (t,)


def _resolve(t: Term, bindings: Bindings) -> Term:
    return flatten_pairs(substitute(t, bindings))


def _bind(var: Variable, value: Term, bindings: Bindings):
    value = flatten_pairs(value)
    if var in variables_of(value):
        return None
    step = {var: value}
    updated = {v: flatten_pairs(substitute(b, step)) for v, b in bindings.items()}
    updated[var] = value
    return updated


def _unify_lists(xs: Sequence[Term], ys: Sequence[Term], bindings: Bindings) -> Iterator[Bindings]:
    if not xs and not ys:
        yield bindings
        return
    if not xs or not ys:
        return
    x, y = xs[0], ys[0]
    if isinstance(x, Variable):
        # x takes the next k elements, leaving at least one for every remaining x
        for k in range(1, len(ys) - len(xs) + 2):
            extended = _bind(x, concat(*ys[:k]), bindings)
            if extended is not None:
                yield from _unify_lists(_expand(xs[1:], extended), _expand(ys[k:], extended), extended)
    if isinstance(y, Variable) and x != y:
        start = 2 if isinstance(x, Variable) else 1
        for k in range(start, len(xs) - len(ys) + 2):
            extended = _bind(y, concat(*xs[:k]), bindings)
            if extended is not None:
                yield from _unify_lists(_expand(xs[k:], extended), _expand(ys[1:], extended), extended)
    if not isinstance(x, Variable) and not isinstance(y, Variable):
        for extended in _unify_terms(x, y, bindings):
            yield from _unify_lists(_expand(xs[1:], extended), _expand(ys[1:], extended), extended)


def _expand(items: Sequence[Term], bindings: Bindings) -> Tuple[Term, ...]:
    out: List[Term] = []
    for item in items:
        resolved = _resolve(item, bindings)
        if isinstance(resolved, Concat):
            out.extend(resolved.elements)
        else:
            out.append(resolved)
    return tuple(out)


def _unify_terms(s: Term, t: Term, bindings: Bindings) -> Iterator[Bindings]:
    s, t = _resolve(s, bindings), _resolve(t, bindings)
    if s == t:
        yield bindings
        return
    if isinstance(s, Concat) or isinstance(t, Concat):
        if isinstance(s, Variable) or isinstance(t, Variable):
            var, value = (s, t) if isinstance(s, Variable) else (t, s)
            extended = _bind(var, value, bindings)
            if extended is not None:
                yield extended
            return
        if isinstance(s, Concat) and isinstance(t, Concat):
            yield from _unify_lists(s.elements, t.elements, bindings)
        return
    if isinstance(s, Variable) or isinstance(t, Variable):
        var, value = (s, t) if isinstance(s, Variable) else (t, s)
        extended = _bind(var, value, bindings)
        if extended is not None:
            yield extended
        return
    if type(s) is not type(t) or len(children(s)) != len(children(t)) or not children(s):
        return
    yield from _unify_sequence(children(s), children(t), bindings)


def _unify_sequence(xs: Sequence[Term], ys: Sequence[Term], bindings: Bindings) -> Iterator[Bindings]:
    if not xs:
        yield bindings
        return
    for extended in _unify_terms(xs[0], ys[0], bindings):
        yield from _unify_sequence(xs[1:], ys[1:], extended)


def mgu_assoc(t: Term, u: Term) -> List[Substitution]:
    """complete set of unifiers modulo associativity of pairing"""
    if contains_xor(t) or contains_xor(u):
        raise ImpureProblem("associative unification does not handle xor")
    found: List[Substitution] = []
    for bindings in _unify_terms(flatten_pairs(t), flatten_pairs(u), {}):
        try:
            sigma = Substitution.closed(bindings)
        except SubstitutionConflict:
            continue
        if sigma not in found:
            found.append(sigma)
    logger.debug("assoc: %d unifiers", len(found))
    return found


def equal_modulo_assoc(t: Term, u: Term) -> bool:
    return flatten_pairs(t) == flatten_pairs(u)
