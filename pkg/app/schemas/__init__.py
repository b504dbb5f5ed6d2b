"""
result schemas: reports, traces and verdicts
"""
from typing import Any, Dict, List, Optional

from app.utils.terms import Substitution, format_term


def substitution_to_dict(sigma: Optional[Substitution]) -> Dict[str, str]:
    if sigma is None:
        return {}
    return {var.name: format_term(value) for var, value in sigma.items()}


class RuleStep:
    """one applied rule instance"""

    def __init__(self, rule: str, constraint: int, detail: str = ""):
        self.rule = rule
        self.constraint = constraint
        self.detail = detail

    def __eq__(self, other):
        return isinstance(other, RuleStep) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.rule, self.constraint, self.detail))

    def __repr__(self):
        return f"{self.rule}@{self.constraint}"

    def to_dict(self):
        return {"rule": self.rule, "constraint": self.constraint, "detail": self.detail}


class SearchStats:
    """counters collected while solving"""

    def __init__(self):
        self.states_expanded = 0
        self.max_depth_reached = 0
        self.sequences_checked = 0
        self.unifiers_checked = 0
        self.ill_typed_unifiers = 0
        self.limit_hit: Optional[str] = None
        self.non_subterm_steps: List[Dict[str, Any]] = []

    def absorb(self, other: "SearchStats"):
        self.states_expanded += other.states_expanded
        self.max_depth_reached = max(self.max_depth_reached, other.max_depth_reached)
        self.sequences_checked += other.sequences_checked
        self.unifiers_checked += other.unifiers_checked
        self.ill_typed_unifiers += other.ill_typed_unifiers
        self.limit_hit = self.limit_hit or other.limit_hit
        self.non_subterm_steps.extend(other.non_subterm_steps)
        return self

    def to_dict(self):
        return {
            "states_expanded": self.states_expanded,
            "max_depth_reached": self.max_depth_reached,
            "sequences_checked": self.sequences_checked,
            "unifiers_checked": self.unifiers_checked,
            "ill_typed_unifiers": self.ill_typed_unifiers,
            "limit_hit": self.limit_hit,
            "non_subterm_steps": list(self.non_subterm_steps),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SearchStats":
        stats = cls()
        for key, value in data.items():
            if hasattr(stats, key):
                setattr(stats, key, list(value) if key == "non_subterm_steps" else value)
        return stats


class MessageLine:
    """one line of an alice-bob rendering"""

    def __init__(self, label: str, sign: str, sender: str, receiver: str, term: str,
                 spoofed: bool = False):
        self.label = label
        self.sign = sign
        self.sender = sender
        self.receiver = receiver
        self.term = term
        self.spoofed = spoofed

    def render(self) -> str:
        sender = f"i({self.sender})" if self.spoofed else self.sender
        return f"Msg {self.label}. {sender} -> {self.receiver} : {self.term}"

    def to_dict(self):
        return {
            "label": self.label,
            "sign": self.sign,
            "sender": self.sender,
            "receiver": self.receiver,
            "term": self.term,
            "spoofed": self.spoofed,
        }


class NutViolation:
    def __init__(self, clause: str, witnesses: List[str], role: Optional[str] = None):
        self.clause = clause
        self.witnesses = witnesses
        self.role = role

    def to_dict(self):
        result = {"clause": self.clause, "witnesses": list(self.witnesses)}
        if self.role:
            result["role"] = self.role
        return result


class NutReport:
    """outcome of the NUT check"""

    def __init__(self, violations: Optional[List[NutViolation]] = None,
                 advisories: Optional[List[NutViolation]] = None):
        self.violations = violations or []
        self.advisories = advisories or []

    @property
    def satisfied(self) -> bool:
        return not self.violations

    def to_dict(self):
        return {
            "satisfied": self.satisfied,
            "violations": [v.to_dict() for v in self.violations],
            "advisories": [v.to_dict() for v in self.advisories],
        }


class AttackVerdict:
    kind = "verdict"
    type_flaw = False

    def __init__(self, stats: Optional[SearchStats] = None):
        self.stats = stats or SearchStats()

    def to_dict(self):
        return {"verdict": self.kind, "type_flaw": self.type_flaw, "search_stats": self.stats.to_dict()}


class _AttackFound(AttackVerdict):
    def __init__(self, substitution: Substitution, trace: List[RuleStep], sequence=None,
                 messages: Optional[List[MessageLine]] = None, stats: Optional[SearchStats] = None,
                 sequence_index: int = 0):
        super().__init__(stats)
        self.substitution = substitution
        self.trace = trace
        self.sequence = sequence
        self.messages = messages or []
        self.sequence_index = sequence_index

    def to_dict(self):
        result = super().to_dict()
        result.update({
            "substitution": substitution_to_dict(self.substitution),
            "messages": [m.to_dict() for m in self.messages],
            "rule_trace": [s.to_dict() for s in self.trace],
            "sequence_index": self.sequence_index,
        })
        return result


class TypeFlawAttack(_AttackFound):
    """satisfiable only with ill-typed substitutions, after an exhausted well-typed search"""

    kind = "type-flaw-attack"
    type_flaw = True

    def __init__(self, substitution, trace, sequence=None, messages=None, stats=None,
                 sequence_index: int = 0, exhausted: bool = True):
        super().__init__(substitution, trace, sequence, messages, stats, sequence_index)
        self.exhausted = exhausted

    @property
    def sigma_illtyped(self) -> Substitution:
        return self.substitution

    def to_dict(self):
        result = super().to_dict()
        result["exhausted"] = self.exhausted
        return result


class WellTypedAttackExists(_AttackFound):
    """an attack exists but it is not a type flaw"""

    kind = "well-typed-attack"

    def to_dict(self):
        result = super().to_dict()
        result["exhausted"] = True
        return result


class NoAttackWithinBounds(AttackVerdict):
    kind = "no-attack-within-bounds"

    def __init__(self, exhausted: bool, stats: Optional[SearchStats] = None):
        super().__init__(stats)
        self.exhausted = exhausted

    def to_dict(self):
        result = super().to_dict()
        result["exhausted"] = self.exhausted
        return result
