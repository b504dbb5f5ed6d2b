"""
constraint solver
depth-first search over the reduction rules until every constraint target is a variable
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from app.config import AnalysisConfig
from app.schemas import RuleStep, SearchStats
from app.utils.associativity import list_elements, mgu_assoc
from app.utils.errors import InvariantViolation, RuleNotApplicable, SearchBudgetExceeded, SubstitutionConflict
from app.utils.protocol_model import Constraint, ConstraintSequence, normalize_sequence
from app.utils.terms import (
    ATTACKER_KEY, EMPTY, UNITY, AsymEnc, Atom, Concat, Constant, Hash, Signature, Substitution,
    SymEnc, Term, Variable, Xor, apply, compose, concat, contains_xor, format_substitution,
    format_term, is_subterm, is_tagged_pair, is_well_typed, sort_terms, variables_of, xor,
)
from app.utils.unify_equational import freshen_parameters, mgu_combined
from app.utils.unify_std import unify

logger = logging.getLogger(__name__)

# decompositions that lose nothing; when one applies it is the only successor
SAFE_DECOMPOSITIONS = ("split", "pdec", "sig_dec")
WEAKNESS_ORDER = ("prefix", "suffix", "homomorphic", "rsa_low_exp", "guessing")


@dataclass(frozen=True)
class SolverState:
    sequence: ConstraintSequence
    trace: Tuple[RuleStep, ...] = ()

    @property
    def constraints(self) -> Tuple[Constraint, ...]:
        return self.sequence.constraints

    @property
    def sigma(self) -> Substitution:
        return self.sequence.substitution

    def key(self) -> tuple:
        return (tuple((c.target, c.knowledge, c.derived) for c in self.constraints), self.sigma)


@dataclass
class SolveResult:
    satisfiers: List[Tuple[Substitution, Tuple[RuleStep, ...]]]
    exhausted: bool
    stats: SearchStats
    dead: FrozenSet[tuple] = frozenset()

    @property
    def satisfiable(self) -> bool:
        return bool(self.satisfiers)


def active_constraint(state: SolverState) -> Optional[Tuple[int, Constraint]]:
    for i, c in enumerate(state.constraints):
        if not isinstance(c.target, Variable):
            return i, c
    return None


def elim(state: SolverState) -> SolverState:
    found = active_constraint(state)
    if found is None:
        return state
    idx, c = found
    knowledge = frozenset(t for t in c.knowledge if not isinstance(t, Variable))
    if knowledge == c.knowledge:
        return state
    constraints = list(state.constraints)
    constraints[idx] = replace(c, knowledge=knowledge)
    removed = ", ".join(format_term(t) for t in sort_terms(c.knowledge - knowledge))
    return SolverState(replace(state.sequence, constraints=tuple(constraints)),
                       state.trace + (RuleStep("elim", idx, removed),))


def _quick_clash(m: Term, t: Term, assoc: bool) -> bool:
    if isinstance(m, (Variable, Xor)) or isinstance(t, (Variable, Xor)) or UNITY in (m, t):
        return False
    if type(m) is not type(t):
        return True
    if isinstance(m, (Constant, Atom)):
        return m != t
    if isinstance(m, Concat) and not assoc:
        return len(m.elements) != len(t.elements)
    return False


class Solver:
    def __init__(self, config: Optional[AnalysisConfig] = None, weak_keys: FrozenSet[Term] = frozenset(),
                 known_dead: FrozenSet[tuple] = frozenset()):
        self.config = config or AnalysisConfig()
        self.rules = self.config.rule_set()
        self.weak_keys = frozenset(weak_keys)
        self.known_dead = known_dead
        self.stats = SearchStats()
        self.visited: Set[tuple] = set()
        self.dead: Set[tuple] = set()
        self.satisfiers: List[Tuple[Substitution, Tuple[RuleStep, ...]]] = []
        self.stopped = False

    # ------------------------------------------------------------ search

    def solve(self, sequence: ConstraintSequence, strict: bool = False) -> SolveResult:
        start = SolverState(normalize_sequence(sequence))
        self._explore(start, 0)
        exhausted = self.stats.limit_hit is None
        result = SolveResult(list(self.satisfiers), exhausted, self.stats, frozenset(self.dead))
        if exhausted:
            logger.debug("solve: exhausted after %d states, %d satisfiers",
                         self.stats.states_expanded, len(self.satisfiers))
        else:
            logger.warning("solve: %s hit after %d states", self.stats.limit_hit, self.stats.states_expanded)
            if strict:
                raise SearchBudgetExceeded(f"search stopped: {self.stats.limit_hit}", partial=result)
        return result

    def _explore(self, state: SolverState, depth: int) -> bool:
        """returns True when nothing below this state can succeed"""
        key = state.key()
        if key in self.visited:
            return key in self.dead
        if key in self.known_dead:
            return True
        self.visited.add(key)
        self.stats.states_expanded += 1
        self.stats.max_depth_reached = max(self.stats.max_depth_reached, depth)
        if self.stats.states_expanded > self.config.max_states:
            self.stats.limit_hit = "max-states"
            self.stopped = True
            return False

        if active_constraint(state) is None:
            if all(sigma != state.sigma for sigma, _ in self.satisfiers):
                logger.debug("solve: satisfier %s", format_substitution(state.sigma))
                self.satisfiers.append((state.sigma, state.trace))
            return False
        if depth >= self.config.max_depth:
            self.stats.limit_hit = self.stats.limit_hit or "max-depth"
            return False

        dead = True
        for successor in self.successors(state):
            if not self._explore(successor, depth + 1):
                dead = False
            if self.stopped:
                return False
        if dead:
            self.dead.add(key)
        return dead

    def successors(self, state: SolverState) -> List[SolverState]:
        state = elim(state)
        found = active_constraint(state)
        if found is None:
            return []
        idx, c = found
        for rule in SAFE_DECOMPOSITIONS:
            safe = self._apply(rule, state, idx, c)
            if safe:
                return safe[:1]
        out: List[SolverState] = []
        for rule in self._branching_order():
            out.extend(self._apply(rule, state, idx, c))
        return out

    def _branching_order(self) -> List[str]:
        order = ["un", "sdec"]
        if self.rules.enabled("xor_r"):
            order.append("xor_r")
        order += ["concat", "penc", "senc", "sig", "hash"]
        if self.rules.enabled("xor_l"):
            order.append("xor_l")
        order.append("ksub")
        order += [r for r in WEAKNESS_ORDER if r in self.rules.weakness]
        return order

    def _apply(self, rule: str, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
        return RULES[rule](self, state, idx, c)

    # ------------------------------------------------------------ successor plumbing

    def _successor(self, state: SolverState, idx: int, replacement: Sequence[Constraint],
                   step: RuleStep, tau: Optional[Substitution] = None) -> Optional[SolverState]:
        if self.config.verify and tau is None:
            self._check_subterm_production(step.rule, idx, state.constraints[idx], replacement)
        constraints = list(state.constraints)
        constraints[idx:idx + 1] = list(replacement)
        sequence = replace(state.sequence, constraints=tuple(constraints))
        if tau:
            try:
                sigma = compose(state.sigma, tau)
            except SubstitutionConflict:
                return None
            sequence = replace(sequence.apply(tau), substitution=sigma)
        return SolverState(normalize_sequence(sequence), state.trace + (step,))

    def _unifiers(self, m: Term, t: Term) -> List[Substitution]:
        assoc = self.config.assoc_pairs
        if _quick_clash(m, t, assoc):
            return []
        with_xor = contains_xor(m) or contains_xor(t)
        if assoc and not with_xor:
            return mgu_assoc(m, t)
        if self.config.acun:
            return mgu_combined(m, t)
        if with_xor:
            # without acun the unity 0 is an ordinary constant
            return [EMPTY] if m == t else []
        sigma = unify(m, t)
        return [sigma] if sigma is not None else []

    def _sequence_variables(self, state: SolverState) -> FrozenSet[Variable]:
        found: FrozenSet[Variable] = frozenset()
        for c in state.constraints:
            found = found | variables_of(c.target)
            for t in c.knowledge:
                found = found | variables_of(t)
        return found

    # ------------------------------------------------------------ instrumentation

    def _check_subterm_production(self, rule: str, idx: int, c: Constraint,
                                  replacement: Sequence[Constraint]):
        """every term a rule adds to a term set must be a subterm of what was there"""
        added: Set[Term] = set()
        for produced in replacement:
            added |= produced.knowledge - c.knowledge
        if not added:
            return
        pool = [c.target] + list(c.knowledge)
        exempt = set()
        if rule == "sdec":
            exempt = {t.key for t in c.knowledge if isinstance(t, SymEnc)}
        offending = [t for t in added if t not in exempt and not any(is_subterm(t, p) for p in pool)]
        if not offending:
            return
        if rule in WEAKNESS_ORDER or rule == "xor_r":
            self.stats.non_subterm_steps.append({
                "rule": rule, "constraint": idx,
                "terms": [format_term(t) for t in sort_terms(offending)],
            })
            return
        raise InvariantViolation("subterm-production",
                                 f"{rule} added {', '.join(format_term(t) for t in sort_terms(offending))}")


# ---------------------------------------------------------------- rules

def _split(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    for t in sort_terms(c.knowledge):
        if isinstance(t, Concat):
            knowledge = (c.knowledge - {t}) | set(t.elements)
            nxt = solver._successor(state, idx, [replace(c, knowledge=frozenset(knowledge))],
                                    RuleStep("split", idx, format_term(t)))
            return [nxt] if nxt else []
    return []


def _pdec(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    for t in sort_terms(c.knowledge):
        if isinstance(t, AsymEnc) and t.key == ATTACKER_KEY:
            knowledge = (c.knowledge - {t}) | {t.body}
            nxt = solver._successor(state, idx, [replace(c, knowledge=frozenset(knowledge))],
                                    RuleStep("pdec", idx, format_term(t)))
            return [nxt] if nxt else []
    return []


def _sig_dec(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    for t in sort_terms(c.knowledge):
        if isinstance(t, Signature) and t.body not in c.knowledge and not isinstance(t.body, Variable):
            nxt = solver._successor(state, idx, [replace(c, knowledge=c.knowledge | {t.body})],
                                    RuleStep("sig_dec", idx, format_term(t)))
            return [nxt] if nxt else []
    return []


def _sdec(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    out = []
    for t in sort_terms(c.knowledge):
        if not isinstance(t, SymEnc):
            continue
        # no key goal for the key being derived, no sdec of a known body
        if t.key == c.target or t.body in c.knowledge:
            continue
        rest = c.knowledge - {t}
        key_goal = Constraint(t.key, rest, c.derived, c.origin)
        opened = Constraint(c.target, rest | {t.body, t.key}, c.derived, c.origin)
        nxt = solver._successor(state, idx, [key_goal, opened], RuleStep("sdec", idx, format_term(t)))
        if nxt:
            out.append(nxt)
    return out


def _xor_r(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    sums = [t for t in c.knowledge if (isinstance(t, Xor) or is_tagged_pair(t)) and t not in c.derived]
    if not sums:
        return []
    mentioned = set(c.target.elements) if isinstance(c.target, Xor) else {c.target}
    for t in sums:
        if isinstance(t, Xor):
            mentioned.update(t.elements)
    candidates = sort_terms(set(sums) | {t for t in c.knowledge if t in mentioned})
    out = []
    seen = set()
    bound = solver.config.xor_subset_bound
    for size in range(2, min(bound, len(candidates)) + 1):
        for subset in combinations(candidates, size):
            if not any(isinstance(t, Xor) or is_tagged_pair(t) for t in subset):
                continue
            total = xor(*subset)
            if total == UNITY or total in c.knowledge or total in seen:
                continue
            seen.add(total)
            extended = replace(c, knowledge=c.knowledge | {total}, derived=c.derived | {total})
            nxt = solver._successor(state, idx, [extended], RuleStep("xor_r", idx, format_term(total)))
            if nxt:
                out.append(nxt)
    return out


def _un(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    out = []
    avoid = None
    for t in sort_terms(c.knowledge):
        for tau in solver._unifiers(c.target, t):
            solver.stats.unifiers_checked += 1
            if avoid is None:
                avoid = solver._sequence_variables(state)
            tau = freshen_parameters(tau, avoid)
            if not is_well_typed(tau):
                solver.stats.ill_typed_unifiers += 1
                if solver.config.verify and solver.config.expect_well_typed:
                    raise InvariantViolation(
                        "well-typed-unifiers",
                        f"{format_term(c.target)} ~ {format_term(t)} gave {format_substitution(tau)}")
                if solver.config.well_typed_only:
                    continue
            detail = f"{format_term(c.target)} ~ {format_term(t)} {format_substitution(tau)}"
            nxt = solver._successor(state, idx, [], RuleStep("un", idx, detail), tau)
            if nxt:
                out.append(nxt)
    return out


def _compose(kind: type, parts: Callable[[Term], List[Term]], name: str):
    def rule(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
        if not isinstance(c.target, kind):
            return []
        subgoals = [Constraint(p, c.knowledge, c.derived, c.origin) for p in parts(c.target)]
        nxt = solver._successor(state, idx, subgoals, RuleStep(name, idx, format_term(c.target)))
        return [nxt] if nxt else []
    return rule


def _xor_l(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    if not isinstance(c.target, Xor):
        return []
    first, rest = c.target.elements[0], xor(*c.target.elements[1:])
    subgoals = [Constraint(first, c.knowledge, c.derived, c.origin),
                Constraint(rest, c.knowledge, c.derived, c.origin)]
    nxt = solver._successor(state, idx, subgoals, RuleStep("xor_l", idx, format_term(c.target)))
    return [nxt] if nxt else []


def _ksub(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    out = []
    seen = set()
    for t in sort_terms(c.knowledge):
        if not isinstance(t, AsymEnc) or t.key == ATTACKER_KEY or contains_xor(t.key):
            continue
        tau = unify(t.key, ATTACKER_KEY)
        if not tau or tau in seen:
            continue
        seen.add(tau)
        if not is_well_typed(tau) and solver.config.verify:
            raise InvariantViolation("ksub-well-typed", format_substitution(tau))
        nxt = solver._successor(state, idx, [c], RuleStep("ksub", idx, format_term(t.key)), tau)
        if nxt:
            out.append(nxt)
    return out


def _body_elements(solver: Solver, body: Term) -> Tuple[Term, ...]:
    if solver.config.assoc_pairs:
        return list_elements(body)
    return body.elements if isinstance(body, Concat) else (body,)


def _add_knowledge(solver: Solver, state: SolverState, idx: int, c: Constraint, rule: str,
                   added: Set[Term]) -> List[SolverState]:
    # added terms go to derived so sdec cannot make room for them again
    new = added - c.knowledge - c.derived
    if not new:
        return []
    detail = ", ".join(format_term(t) for t in sort_terms(new))
    extended = replace(c, knowledge=c.knowledge | new, derived=c.derived | new)
    nxt = solver._successor(state, idx, [extended], RuleStep(rule, idx, detail))
    return [nxt] if nxt else []


def _prefix(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    added = set()
    for t in c.knowledge:
        if isinstance(t, SymEnc):
            elements = _body_elements(solver, t.body)
            for i in range(1, len(elements)):
                added.add(SymEnc(concat(*elements[:i]), t.key))
    return _add_knowledge(solver, state, idx, c, "prefix", added)


def _suffix(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    added = set()
    for t in c.knowledge:
        if isinstance(t, SymEnc):
            elements = _body_elements(solver, t.body)
            for i in range(1, len(elements)):
                added.add(SymEnc(concat(*elements[i:]), t.key))
    return _add_knowledge(solver, state, idx, c, "suffix", added)


def _homomorphic(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    added = set()
    for t in c.knowledge:
        if isinstance(t, SymEnc) and isinstance(t.body, Concat):
            added.update(SymEnc(e, t.key) for e in t.body.elements)
    return _add_knowledge(solver, state, idx, c, "homomorphic", added)


def _rsa_low_exp(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    triples = [t for t in sort_terms(c.knowledge)
               if isinstance(t, AsymEnc) and isinstance(t.body, Concat) and len(t.body.elements) == 3]
    added = set()
    for first, second in combinations(triples, 2):
        if first.key != second.key:
            continue
        a, x, b = first.body.elements
        cc, x2, d = second.body.elements
        if x != x2 or (a == cc and b == d):
            continue
        if all(p in c.knowledge for p in (a, b, cc, d)):
            added.add(x)
    return _add_knowledge(solver, state, idx, c, "rsa_low_exp", added)


def _guessing(solver: Solver, state: SolverState, idx: int, c: Constraint) -> List[SolverState]:
    if not solver.weak_keys:
        return []
    candidates = [t for t in sort_terms(c.knowledge)
                  if isinstance(t, SymEnc) and t.key in solver.weak_keys and isinstance(t.body, Concat)]
    added = set()
    for first, second in combinations(candidates, 2):
        if first.key != second.key or first.body == second.body:
            continue
        if len(first.body.elements) == len(second.body.elements) \
                and first.body.elements[0] == second.body.elements[0]:
            added.add(first.key)
    return _add_knowledge(solver, state, idx, c, "guessing", added)


RULES: Dict[str, Callable[[Solver, SolverState, int, Constraint], List[SolverState]]] = {
    "split": _split,
    "pdec": _pdec,
    "sig_dec": _sig_dec,
    "sdec": _sdec,
    "xor_r": _xor_r,
    "un": _un,
    "concat": _compose(Concat, lambda t: list(t.elements), "concat"),
    "penc": _compose(AsymEnc, lambda t: [t.key, t.body], "penc"),
    "senc": _compose(SymEnc, lambda t: [t.key, t.body], "senc"),
    "sig": _compose(Signature, lambda t: [t.body, t.key], "sig"),
    "hash": _compose(Hash, lambda t: [t.body], "hash"),
    "xor_l": _xor_l,
    "ksub": _ksub,
    "prefix": _prefix,
    "suffix": _suffix,
    "homomorphic": _homomorphic,
    "rsa_low_exp": _rsa_low_exp,
    "guessing": _guessing,
}


def apply_rule(rule: str, state: SolverState, config: Optional[AnalysisConfig] = None,
               weak_keys: FrozenSet[Term] = frozenset()) -> List[SolverState]:
    """successors of one rule on the active constraint"""
    if rule == "elim":
        nxt = elim(state)
        if nxt is state:
            raise RuleNotApplicable("elim: no variable in the term set")
        return [nxt]
    if rule not in RULES:
        raise RuleNotApplicable(f"unknown rule: {rule}")
    solver = Solver(config, weak_keys)
    if not solver.rules.enabled(rule) and rule != "split":
        raise RuleNotApplicable(f"{rule} is not enabled")
    found = active_constraint(state)
    if found is None:
        raise RuleNotApplicable("sequence is simple")
    idx, c = found
    results = solver._apply(rule, state, idx, c)
    if not results:
        raise RuleNotApplicable(f"{rule} does not apply to {format_term(c.target)}")
    return results


def solve(sequence: ConstraintSequence, config: Optional[AnalysisConfig] = None,
          weak_keys: FrozenSet[Term] = frozenset(), strict: bool = False,
          known_dead: FrozenSet[tuple] = frozenset()) -> SolveResult:
    return Solver(config, weak_keys, known_dead).solve(sequence, strict=strict)
