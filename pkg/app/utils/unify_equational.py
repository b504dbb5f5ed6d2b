"""
xor (acun) unification and its combination with the free theory

acun problems are linear systems over gf(2); mixed problems are purified and
recombined by guessing an identification of shared variables, a theory for
each class representative and, when needed, a linear order
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from graphlib import CycleError, TopologicalSorter
from itertools import permutations, product
from typing import AbstractSet, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.utils.associativity import mgu_assoc
from app.utils.errors import ImpureProblem, SubstitutionConflict
from app.utils.terms import (
    EMPTY, UNITY, Atom, Constant, Substitution, Term, Variable, Xor,
    apply, children, contains_xor, rebuild, substitute, term_key, type_of,
    variables_of, xor_normalize,
)
from app.utils.unify_std import match_all, mgu_syntactic

logger = logging.getLogger(__name__)

STD = "STD"
ACUN = "ACUN"

# shared-variable sets larger than this make the combination step slow
LARGE_SHARED_SET = 7

Equation = Tuple[Term, Term]


@dataclass(frozen=True)
class PureProblem:
    theory: str
    equations: Tuple[Equation, ...]


@dataclass(frozen=True)
class CombinationChoice:
    identification: Tuple[Tuple[Variable, ...], ...]
    theory_assignment: Tuple[Tuple[Variable, str], ...]
    ordering: Tuple[Variable, ...] = ()

    @property
    def representatives(self) -> Tuple[Variable, ...]:
        return tuple(cls[0] for cls in self.identification)

    def renaming(self) -> Dict[Variable, Variable]:
        return {member: cls[0] for cls in self.identification for member in cls[1:]}

    def labelled(self, theory: str) -> FrozenSet[Variable]:
        return frozenset(v for v, label in self.theory_assignment if label == theory)


class FreshVariables:
    """fresh names from a reserved namespace, skipping names already in use"""

    def __init__(self, prefix: str, avoid: Iterable[Variable] = ()):
        self.prefix = prefix
        pattern = re.compile(rf"^{re.escape(prefix)}(\d+)$")
        used = [int(m.group(1)) for v in avoid if (m := pattern.match(v.name))]
        self.base = max(used, default=0)
        self.counter = self.base

    def __call__(self, declared_type) -> Variable:
        self.counter += 1
        return Variable(f"{self.prefix}{self.counter}", declared_type)


def _theory(t: Term) -> Optional[str]:
    if isinstance(t, Xor) or t == UNITY:
        return ACUN
    if isinstance(t, (Variable, Constant, Atom)):
        return None
    return STD


def _is_leaf(t: Term) -> bool:
    return isinstance(t, (Variable, Constant, Atom))


# ---------------------------------------------------------------- purification

def purify(equations: Sequence[Equation], fresh: Optional[FreshVariables] = None
           ) -> Tuple[List[PureProblem], Dict[Variable, Term]]:
    """split a mixed problem into pure ones; alien subterms become fresh variables"""
    if fresh is None:
        avoid = set()
        for s, t in equations:
            avoid |= variables_of(s) | variables_of(t)
        fresh = FreshVariables("_W", avoid)

    std: List[Equation] = []
    acun: List[Equation] = []
    abstraction: Dict[Variable, Term] = {}

    def abstract(t: Term) -> Variable:
        w = fresh(type_of(t))
        abstraction[w] = t
        if _theory(t) == ACUN:
            acun.append((w, pure_acun(t)))
        else:
            std.append((w, pure_std(t)))
        return w

    def pure_std(t: Term) -> Term:
        if _theory(t) == ACUN:
            return abstract(t)
        if _is_leaf(t):
            return t
        return rebuild(t, tuple(pure_std(c) for c in children(t)))

    def pure_acun(t: Term) -> Term:
        if t == UNITY or _is_leaf(t):
            return t
        if isinstance(t, Xor):
            return Xor(tuple(e if _is_leaf(e) else abstract(e) for e in t.elements))
        return abstract(t)

    for s, t in equations:
        s, t = xor_normalize(s), xor_normalize(t)
        if ACUN in (_theory(s), _theory(t)):
            acun.append((pure_acun(s), pure_acun(t)))
        else:
            std.append((pure_std(s), pure_std(t)))

    problems = []
    if std:
        problems.append(PureProblem(STD, tuple(std)))
    if acun:
        problems.append(PureProblem(ACUN, tuple(acun)))
    return problems, abstraction


# ---------------------------------------------------------------- gf(2) solving

def gf2_rref(matrix: np.ndarray, n_pivot_cols: Optional[int] = None) -> Tuple[np.ndarray, List[int]]:
    """reduced row echelon form over gf(2); pivots only in the first n_pivot_cols columns"""
    R = (np.asarray(matrix, dtype=np.uint8) % 2).copy()
    m, n = R.shape
    if n_pivot_cols is None:
        n_pivot_cols = n

    pivot_cols: List[int] = []
    pivot_row = 0
    for col in range(n_pivot_cols):
        if pivot_row >= m:
            break
        found = np.nonzero(R[pivot_row:, col])[0]
        if found.size == 0:
            continue
        row = pivot_row + int(found[0])
        if row != pivot_row:
            R[[pivot_row, row]] = R[[row, pivot_row]]
        # eliminate above and below
        others = np.nonzero(R[:, col])[0]
        others = others[others != pivot_row]
        if others.size:
            R[others] ^= R[pivot_row]
        pivot_cols.append(col)
        pivot_row += 1
    return R, pivot_cols


def _xor_support(t: Term) -> List[Term]:
    if t == UNITY:
        return []
    if isinstance(t, Xor):
        elements = list(t.elements)
    else:
        elements = [t]
    for e in elements:
        if not _is_leaf(e):
            raise ImpureProblem(f"free constructor below xor: {e}")
    return elements


def _solve_column(A: np.ndarray, b: np.ndarray, allowed: Sequence[int]) -> Optional[np.ndarray]:
    """one solution of A y = b using only the allowed columns, free columns set to 0"""
    n = A.shape[1]
    y = np.zeros(n, dtype=np.uint8)
    if not b.any():
        return y
    if not allowed:
        return None
    sub = A[:, list(allowed)]
    augmented = np.concatenate([sub, b.reshape(-1, 1)], axis=1)
    R, pivots = gf2_rref(augmented, n_pivot_cols=sub.shape[1])
    # a row 0 ... 0 | 1 means no solution
    if R[len(pivots):, -1].any():
        return None
    for row, col in enumerate(pivots):
        y[allowed[col]] = R[row, -1]
    return y


def unify_acun(problem: PureProblem,
               rigid: AbstractSet[Variable] = frozenset(),
               forbidden: Optional[Mapping[Variable, AbstractSet[Term]]] = None,
               prefer: AbstractSet[Variable] = frozenset(),
               fresh: Optional[FreshVariables] = None) -> List[Substitution]:
    """most general unifier of a pure xor problem with free constants

    rigid variables count as constants; forbidden[x] lists constants that may
    not occur in the value of x (linear constant restrictions); variables in
    prefer are eliminated first
    """
    forbidden = forbidden or {}
    rows = []
    variables: set = set()
    constants: set = set()
    for s, t in problem.equations:
        support = _xor_support(xor_normalize(s)) + _xor_support(xor_normalize(t))
        rows.append(support)
        for leaf in support:
            if isinstance(leaf, Variable) and leaf not in rigid:
                variables.add(leaf)
            else:
                constants.add(leaf)

    columns = sorted(variables, key=lambda v: (v not in prefer, term_key(v)))
    basis = sorted(constants, key=term_key)
    col_index = {v: i for i, v in enumerate(columns)}
    basis_index = {c: i for i, c in enumerate(basis)}

    A = np.zeros((len(rows), len(columns)), dtype=np.uint8)
    B = np.zeros((len(rows), len(basis)), dtype=np.uint8)
    for i, support in enumerate(rows):
        for leaf in support:
            if leaf in col_index:
                A[i, col_index[leaf]] ^= 1
            else:
                B[i, basis_index[leaf]] ^= 1

    if not columns:
        return [EMPTY] if not B.any() else []

    # particular solution, one constant at a time
    Y = np.zeros((len(columns), len(basis)), dtype=np.uint8)
    for k, const in enumerate(basis):
        allowed = [j for j, v in enumerate(columns) if const not in forbidden.get(v, ())]
        y = _solve_column(A, B[:, k], allowed)
        if y is None:
            return []
        Y[:, k] = y

    # homogeneous part: one parameter per free column
    R, pivots = gf2_rref(A)
    free = [j for j in range(len(columns)) if j not in set(pivots)]
    if fresh is None:
        fresh = FreshVariables("_Z", variables | {c for c in constants if isinstance(c, Variable)})
    params: Dict[int, Term] = {}
    for f in free:
        if not Y[f].any():
            # x_f = z_f exactly, so z_f can keep the name x_f
            params[f] = columns[f]
        else:
            params[f] = fresh(columns[f].declared_type)

    bindings: Dict[Variable, Term] = {}
    pivot_row = {col: row for row, col in enumerate(pivots)}
    for j, var in enumerate(columns):
        parts: List[Term] = [basis[k] for k in np.nonzero(Y[j])[0]]
        if j in pivot_row:
            parts += [params[f] for f in free if R[pivot_row[j], f]]
        else:
            parts.append(params[j])
        value = xor_normalize(Xor(tuple(parts))) if parts else UNITY
        if value != var:
            bindings[var] = value
    return [Substitution(bindings)]


# ---------------------------------------------------------------- combination

def _partitions(items: Sequence[Variable]) -> Iterator[List[List[Variable]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def _cross_edges(sigma: Substitution, others: AbstractSet[Variable]) -> List[Tuple[Variable, Variable]]:
    """(c, x) whenever the value of x mentions the other theory's constant c"""
    return [(c, x) for x, value in sigma.items() for c in variables_of(value) if c in others]


def _topological(edges: Sequence[Tuple[Variable, Variable]], nodes: Iterable[Variable]) -> Optional[Tuple[Variable, ...]]:
    sorter: TopologicalSorter = TopologicalSorter()
    for node in sorted(nodes, key=term_key):
        sorter.add(node)
    for before, after in edges:
        sorter.add(after, before)
    try:
        return tuple(sorter.static_order())
    except CycleError:
        return None


def combine(sigma_std: Substitution, sigma_acun: Substitution, order: Sequence[Variable],
            abstraction: Mapping[Variable, Term],
            identification: Optional[Mapping[Variable, Variable]] = None,
            fresh: Optional[FreshVariables] = None) -> Substitution:
    """merge the two pure solutions into a substitution on the original variables

    values are resolved along order; a cyclic dependency raises SubstitutionConflict
    """
    merged: Dict[Variable, Term] = {}
    for var in order:
        for sigma in (sigma_std, sigma_acun):
            if var in sigma:
                merged[var] = sigma[var]
    for sigma in (sigma_std, sigma_acun):
        for var, value in sigma.items():
            merged.setdefault(var, value)
    for member, rep in (identification or {}).items():
        merged.setdefault(member, rep)
    resolved = Substitution.closed(merged)

    result = {v: t for v, t in resolved.items() if v not in abstraction}
    leaked = set()
    for value in result.values():
        leaked |= {w for w in variables_of(value) if w in abstraction}
    if leaked:
        if fresh is None:
            fresh = FreshVariables("_Z", list(merged) + list(abstraction))
        rename = {w: fresh(w.declared_type) for w in sorted(leaked, key=term_key)}
        result = {v: xor_normalize(substitute(t, rename)) for v, t in result.items()}
    return Substitution(result)


def _defined_in_std(var: Variable, equations: Sequence[Equation]) -> bool:
    for s, t in equations:
        if (s == var and not isinstance(t, Variable)) or (t == var and not isinstance(s, Variable)):
            return True
    return False


def _apply_renaming(equations: Sequence[Equation], renaming: Mapping[Variable, Term]) -> List[Equation]:
    if not renaming:
        return list(equations)
    return [(xor_normalize(substitute(s, renaming)), xor_normalize(substitute(t, renaming)))
            for s, t in equations]


def _order_signature(order: Sequence[Variable], std_reps: AbstractSet[Variable],
                     acun_reps: AbstractSet[Variable]) -> FrozenSet[Tuple[Variable, Variable]]:
    position = {v: i for i, v in enumerate(order)}
    return frozenset((x, c) for x in order for c in order
                     if position[x] < position[c] and ((x in std_reps) != (c in std_reps)))


def _solve_choice(std_eqs, acun_eqs, choice: CombinationChoice, abstraction, fresh_z) -> List[Substitution]:
    acun_reps = choice.labelled(ACUN)
    std_reps = choice.labelled(STD)
    reps = choice.representatives

    sigma_std = mgu_syntactic(std_eqs, rigid=acun_reps) if std_eqs else EMPTY
    if sigma_std is None:
        return []
    # a shared variable the free side sends to a constant is that constant on the xor side too
    constants = {v: value for v, value in sigma_std.items()
                 if v in std_reps and isinstance(value, (Atom, Constant))}
    acun_eqs = _apply_renaming(acun_eqs, constants)
    acun_problem = PureProblem(ACUN, tuple(acun_eqs))
    prefer = frozenset(abstraction)

    found: List[Substitution] = []
    acun_solutions = unify_acun(acun_problem, rigid=std_reps, prefer=prefer, fresh=fresh_z) if acun_eqs else [EMPTY]
    for sigma_acun in acun_solutions:
        edges = _cross_edges(sigma_std, acun_reps) + _cross_edges(sigma_acun, std_reps)
        nodes = set(sigma_std.domain) | set(sigma_acun.domain) | set(reps)
        order = _topological(edges, nodes)
        if order is not None:
            try:
                found.append(combine(sigma_std, sigma_acun, order, abstraction, choice.renaming(), fresh_z))
            except SubstitutionConflict:
                logger.debug("combine: rejected cyclic choice")
            continue

        # cyclic: retry with linear constant restrictions, one order per cross relation
        seen = set()
        for candidate in permutations(reps):
            signature = _order_signature(candidate, std_reps, acun_reps)
            if signature in seen:
                continue
            seen.add(signature)
            position = {v: i for i, v in enumerate(candidate)}
            if any(position[c] > position[x] for c, x in _cross_edges(sigma_std, acun_reps) if x in position):
                continue
            restricted = {x: {c for c in std_reps if position[c] > position[x]} for x in acun_reps}
            for sigma_r in (unify_acun(acun_problem, rigid=std_reps, forbidden=restricted,
                                       prefer=prefer, fresh=fresh_z) if acun_eqs else [EMPTY]):
                try:
                    found.append(combine(sigma_std, sigma_r, candidate, abstraction, choice.renaming(), fresh_z))
                except SubstitutionConflict:
                    logger.debug("combine: rejected cyclic choice")
    return found


def _canonical(sigma: Substitution, original: AbstractSet[Variable], fresh_prefix: str, base: int) -> Substitution:
    """rename parameter variables in order of first appearance"""
    rename: Dict[Variable, Variable] = {}
    counter = base
    for _, value in sigma.items():
        for node in _walk(value):
            if isinstance(node, Variable) and node not in original and node not in rename:
                counter += 1
                rename[node] = Variable(f"{fresh_prefix}{counter}", node.declared_type)
    if not rename:
        return sigma
    return Substitution({v: xor_normalize(substitute(t, rename)) for v, t in sigma.items()})


def _walk(t: Term) -> Iterator[Term]:
    yield t
    for c in children(t):
        yield from _walk(c)


def subsumes(general: Substitution, specific: Substitution, variables: Sequence[Variable]) -> bool:
    """specific == rho . general on the given variables for some rho found by matching"""
    patterns = [apply(general, v) for v in variables]
    targets = [apply(specific, v) for v in variables]
    return match_all(patterns, targets) is not None


def _minimize(unifiers: List[Substitution], variables: Sequence[Variable]) -> List[Substitution]:
    kept: List[Substitution] = []
    for i, sigma in enumerate(unifiers):
        dominated = False
        for j, other in enumerate(unifiers):
            if i == j:
                continue
            if subsumes(other, sigma, variables) and (not subsumes(sigma, other, variables) or j < i):
                dominated = True
                break
        if not dominated:
            kept.append(sigma)
    return kept


def mgu_combined(t: Term, u: Term) -> List[Substitution]:
    """complete set of unifiers of t and u modulo xor"""
    return list(_mgu_combined(xor_normalize(t), xor_normalize(u)))


@lru_cache(maxsize=8192)
def _mgu_combined(t: Term, u: Term) -> Tuple[Substitution, ...]:
    if t == u:
        return (EMPTY,)
    if not contains_xor(t) and not contains_xor(u):
        sigma = mgu_syntactic([(t, u)])
        return (sigma,) if sigma is not None else ()

    original = variables_of(t) | variables_of(u)
    fresh_w = FreshVariables("_W", original)
    fresh_z = FreshVariables("_Z", original)
    problems, abstraction = purify([(t, u)], fresh_w)
    std_eqs = next((p.equations for p in problems if p.theory == STD), ())
    acun_eqs = next((p.equations for p in problems if p.theory == ACUN), ())

    if std_eqs and mgu_syntactic(std_eqs) is None:
        return ()

    std_vars = set().union(*[variables_of(s) | variables_of(r) for s, r in std_eqs]) if std_eqs else set()
    acun_vars = set().union(*[variables_of(s) | variables_of(r) for s, r in acun_eqs]) if acun_eqs else set()
    shared = sorted(std_vars & acun_vars, key=lambda v: (v not in abstraction, term_key(v)))
    if len(shared) > LARGE_SHARED_SET:
        logger.warning("unify: %d shared variables, combination may be slow", len(shared))

    results: List[Substitution] = []
    for classes in _partitions(shared):
        identification = tuple(tuple(cls) for cls in classes)
        renaming = {m: cls[0] for cls in identification for m in cls[1:]}
        std_i = _apply_renaming(std_eqs, renaming)
        acun_i = _apply_renaming(acun_eqs, renaming)
        if std_i and mgu_syntactic(std_i) is None:
            continue
        reps = [cls[0] for cls in identification]
        forced = [r for r in reps if _defined_in_std(r, std_i)]
        open_reps = [r for r in reps if r not in forced]
        for labels in product((STD, ACUN), repeat=len(open_reps)):
            assignment = tuple(sorted(
                [(r, STD) for r in forced] + list(zip(open_reps, labels)),
                key=lambda pair: term_key(pair[0])))
            choice = CombinationChoice(identification, assignment)
            results.extend(_solve_choice(std_i, acun_i, choice, abstraction, fresh_z))

    variables = sorted(original, key=term_key)
    sound = []
    for sigma in results:
        if apply(sigma, t) != apply(sigma, u):
            logger.debug("unify: dropped unsound candidate %s", sigma)
            continue
        sigma = _canonical(sigma, original, "_Z", fresh_z.base)
        if sigma not in sound:
            sound.append(sigma)
    sound.sort(key=repr)
    return tuple(_minimize(sound, variables))


def freshen_parameters(sigma: Substitution, avoid: AbstractSet[Variable]) -> Substitution:
    """rename parameter variables of a unifier apart from the given ones"""
    params = sorted((v for v in sigma.range_variables() if v.name.startswith("_Z") and v not in sigma.domain),
                    key=term_key)
    clashes = [v for v in params if any(a.name == v.name for a in avoid)]
    if not clashes:
        return sigma
    fresh = FreshVariables("_Z", set(avoid) | set(params))
    rename = {v: fresh(v.declared_type) for v in clashes}
    return Substitution({v: xor_normalize(substitute(t, rename)) for v, t in sigma.items()})


def unify_terms(t: Term, u: Term, theory: str = "std", assoc: bool = False) -> List[Substitution]:
    """unifier set for one equation under the chosen theory"""
    if assoc:
        return mgu_assoc(t, u)
    if theory == "acun":
        return mgu_combined(t, u)
    sigma = mgu_syntactic([(t, u)])
    return [sigma] if sigma is not None else []
