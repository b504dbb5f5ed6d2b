"""
syntactic unification for the free theory
martelli-montanari transformation with strict occurs check
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import AbstractSet, Dict, List, Optional, Sequence, Tuple

from app.utils.errors import ImpureProblem
from app.utils.terms import (
    Atom, Constant, Substitution, Term, Variable, Xor, UNITY,
    children, contains_xor, substitute, variables_of,
)

logger = logging.getLogger(__name__)

Equation = Tuple[Term, Term]


@dataclass(frozen=True)
class UnifyProblem:
    equations: Tuple[Equation, ...]

    @classmethod
    def of(cls, *pairs: Equation) -> "UnifyProblem":
        return cls(tuple(pairs))


def _same_head(s: Term, t: Term) -> bool:
    if type(s) is not type(t):
        return False
    if isinstance(s, (Constant, Atom, Variable)):
        return s == t
    return len(children(s)) == len(children(t))


def mgu_syntactic(problem, rigid: AbstractSet[Variable] = frozenset()) -> Optional[Substitution]:
    """most general unifier of a pure free-theory problem, or None

    variables in rigid are treated as constants
    """
    equations = problem.equations if isinstance(problem, UnifyProblem) else tuple(problem)
    for lhs, rhs in equations:
        if contains_xor(lhs) or contains_xor(rhs):
            raise ImpureProblem("xor in a free-theory problem")

    bindings: Dict[Variable, Term] = {}
    stack: List[Equation] = list(reversed(equations))
    while stack:
        s, t = stack.pop()
        s = substitute(s, bindings)
        t = substitute(t, bindings)
        if s == t:
            continue
        if isinstance(s, Variable) and s not in rigid:
            var, value = s, t
        elif isinstance(t, Variable) and t not in rigid:
            var, value = t, s
        elif isinstance(s, Variable) or isinstance(t, Variable):
            return None
        elif _same_head(s, t):
            stack.extend(reversed(list(zip(children(s), children(t)))))
            continue
        else:
            return None
        # occurs check
        if var in variables_of(value):
            return None
        step = {var: value}
        bindings = {v: substitute(b, step) for v, b in bindings.items()}
        bindings[var] = value
    return Substitution(bindings)


def unify(t: Term, u: Term, rigid: AbstractSet[Variable] = frozenset()) -> Optional[Substitution]:
    return mgu_syntactic(UnifyProblem.of((t, u)), rigid)


def match(pattern: Term, term: Term,
          bindable: Optional[AbstractSet[Variable]] = None,
          seed: Optional[Dict[Variable, Term]] = None) -> Optional[Dict[Variable, Term]]:
    """one-way matching: rho with rho(pattern) == term

    xor nodes are compared element by element in normal-form order
    """
    rho: Dict[Variable, Term] = dict(seed or {})
    stack = [(pattern, term)]
    while stack:
        p, t = stack.pop()
        if isinstance(p, Variable) and (bindable is None or p in bindable):
            bound = rho.get(p)
            if bound is None:
                rho[p] = t
            elif bound != t:
                return None
            continue
        if p == t and not variables_of(p):
            continue
        if not _same_head(p, t):
            return None
        stack.extend(zip(children(p), children(t)))
    return rho


def match_all(patterns: Sequence[Term], terms: Sequence[Term],
              bindable: Optional[AbstractSet[Variable]] = None) -> Optional[Dict[Variable, Term]]:
    rho: Dict[Variable, Term] = {}
    for p, t in zip(patterns, terms):
        rho = match(p, t, bindable, rho)
        if rho is None:
            return None
    return rho


def has_free_clash(t: Term, u: Term) -> bool:
    """cheap necessary check: distinct free heads can never unify"""
    if isinstance(t, Variable) or isinstance(u, Variable):
        return False
    if isinstance(t, Xor) or isinstance(u, Xor) or t == UNITY or u == UNITY:
        return False
    return not _same_head(t, u)
