"""
text tables for NUT reports, search statistics and per-sequence solve runs
"""
from typing import Iterable, List, Optional

import pandas as pd

from app.schemas import NutReport, SearchStats


def nut_frame(report: NutReport) -> pd.DataFrame:
    rows = []
    for kind, items in (("violation", report.violations), ("advisory", report.advisories)):
        for v in items:
            rows.append({
                "Kind": kind,
                "Clause": v.clause,
                "Role": v.role or "",
                "Witnesses": " | ".join(v.witnesses),
            })
    return pd.DataFrame(rows, columns=["Kind", "Clause", "Role", "Witnesses"])


def stats_frame(stats: SearchStats) -> pd.DataFrame:
    data = {
        'Metric': ['States expanded', 'Max depth reached', 'Sequences checked', 'Unifiers checked',
                   'Ill-typed unifiers', 'Limit hit', 'Non-subterm steps'],
        'Value': [
            str(stats.states_expanded),
            str(stats.max_depth_reached),
            str(stats.sequences_checked),
            str(stats.unifiers_checked),
            str(stats.ill_typed_unifiers),
            stats.limit_hit or "-",
            str(len(stats.non_subterm_steps)),
        ]
    }
    return pd.DataFrame(data)


def sequences_frame(rows: Iterable[dict]) -> pd.DataFrame:
    """one row per constraint sequence: index, constraints, satisfiers, exhausted"""
    return pd.DataFrame(list(rows), columns=["Sequence", "Constraints", "Satisfiers", "Well-typed", "Exhausted"])


def as_text(frame: pd.DataFrame, empty: Optional[str] = None) -> str:
    if frame.empty:
        return empty if empty is not None else "(none)"
    return frame.fillna('').to_string(index=False)


def as_records(frame: pd.DataFrame) -> List[dict]:
    return frame.fillna('').to_dict(orient='records')
