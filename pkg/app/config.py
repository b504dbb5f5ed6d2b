"""
analysis configuration
values come from explicit arguments first, then TYPEFLAW_* environment variables
"""
import logging
import os
from dataclasses import dataclass, replace
from typing import FrozenSet, Iterable, Optional

from app.utils.errors import ConfigError, UnsupportedTheory

logger = logging.getLogger(__name__)

THEORIES = ("std", "acun")
# accepted names with no solver behind them
STUB_THEORIES = ("acu", "acuidem", "ag")

CORE_RULES = ("elim", "split", "pdec", "sdec", "sig_dec", "un", "concat", "penc", "senc",
              "sig", "hash", "ksub")
XOR_RULES = ("xor_r", "xor_l")
WEAKNESS_RULES = ("prefix", "suffix", "homomorphic", "rsa_low_exp", "guessing")
ASSOC_OPTION = "assoc-pairs"

DEFAULT_MAX_DEPTH = 80
DEFAULT_MAX_STATES = 50000
DEFAULT_XOR_SUBSET_BOUND = 4


@dataclass(frozen=True)
class RuleSet:
    core: FrozenSet[str]
    weakness: FrozenSet[str] = frozenset()

    def enabled(self, rule: str) -> bool:
        return rule in self.core or rule in self.weakness

    @property
    def acun(self) -> bool:
        return "xor_l" in self.core


@dataclass(frozen=True)
class AnalysisConfig:
    # None means the protocol's own theory
    theory: Optional[str] = None
    weakness_rules: FrozenSet[str] = frozenset()
    assoc_pairs: bool = False
    max_depth: int = DEFAULT_MAX_DEPTH
    max_states: int = DEFAULT_MAX_STATES
    xor_subset_bound: int = DEFAULT_XOR_SUBSET_BOUND
    verify: bool = False
    jobs: int = 1
    # restrict (un) to well-typed unifiers
    well_typed_only: bool = False
    # verify: also demand well-typed (un) unifiers
    expect_well_typed: bool = False

    @classmethod
    def from_env(cls, **overrides) -> "AnalysisConfig":
        def env_int(name: str, default: int) -> int:
            raw = os.getenv(name)
            if raw is None or raw == "":
                return default
            try:
                return int(raw)
            except ValueError:
                raise ConfigError(f"{name} must be an integer, got {raw!r}")

        values = dict(
            max_depth=env_int("TYPEFLAW_MAX_DEPTH", DEFAULT_MAX_DEPTH),
            max_states=env_int("TYPEFLAW_MAX_STATES", DEFAULT_MAX_STATES),
            xor_subset_bound=env_int("TYPEFLAW_XOR_SUBSET_BOUND", DEFAULT_XOR_SUBSET_BOUND),
            jobs=env_int("TYPEFLAW_JOBS", 1),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        config = cls(**values)
        config.validate()
        return config

    def with_rules(self, names: Iterable[str]) -> "AnalysisConfig":
        """rules given by name; assoc-pairs switches associative pairing on"""
        cleaned = [n.strip().lower() for n in names if n and n.strip()]
        assoc = self.assoc_pairs or ASSOC_OPTION in cleaned
        weakness = frozenset(n.replace("-", "_") for n in cleaned if n != ASSOC_OPTION)
        unknown = sorted(weakness - set(WEAKNESS_RULES))
        if unknown:
            raise ConfigError(f"unknown rule(s): {', '.join(unknown)}")
        return replace(self, weakness_rules=self.weakness_rules | weakness, assoc_pairs=assoc)

    def validate(self) -> None:
        if self.theory in STUB_THEORIES:
            raise UnsupportedTheory(self.theory)
        if self.theory is not None and self.theory not in THEORIES:
            raise ConfigError(f"unknown theory: {self.theory}")
        for name in ("max_depth", "max_states", "xor_subset_bound", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def acun(self) -> bool:
        return self.theory == "acun"

    def rule_set(self) -> RuleSet:
        core = set(CORE_RULES)
        if self.acun:
            core.update(XOR_RULES)
        return RuleSet(frozenset(core), frozenset(self.weakness_rules))


def log_level() -> int:
    name = os.getenv("TYPEFLAW_LOG_LEVEL", "WARNING").upper()
    return getattr(logging, name, logging.WARNING)
