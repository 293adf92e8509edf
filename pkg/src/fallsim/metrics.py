"""Confusion counters, cost/wait ledgers, and the derived report figures.

All derived figures are pure functions of the raw counters so a report can be
recomputed (and is recomputed idempotently) from the ledgers at any time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .world import AgentKind


class UndefinedMetricError(ValueError):
    """A ratio was requested with an empty denominator."""


def _require(denominator: int, what: str) -> None:
    if denominator <= 0:
        raise UndefinedMetricError(f"{what} is undefined: empty denominator")


def sensitivity(tp: int, fn: int) -> float:
    """Percentage of true falls that raised an alarm."""
    _require(tp + fn, "sensitivity")
    return 100.0 * tp / (tp + fn)


def specificity(tn: int, fp: int) -> float:
    """Percentage of quiet agent-ticks that stayed quiet."""
    _require(tn + fp, "specificity")
    return 100.0 * tn / (tn + fp)


def fp_rate(fp: int, tp: int) -> float:
    """Fraction of treated cases that were phantom alarms."""
    _require(fp + tp, "fp_rate")
    return fp / (fp + tp)


def fn_rate(fn: int, tn: int) -> float:
    """Missed falls over all quiet-or-missed outcomes."""
    _require(fn + tn, "fn_rate")
    return fn / (fn + tn)


def fp_rate_as_specificity_complement(tn: int, fp: int) -> float:
    """Alternative false-alarm ratio: phantoms over all no-fall ticks.

    This is the complement of specificity; kept distinct from :func:`fp_rate`,
    which divides by treated cases instead.
    """
    _require(tn + fp, "fp_rate_as_specificity_complement")
    return fp / (tn + fp)


def fn_rate_as_sensitivity_complement(tp: int, fn: int) -> float:
    """Alternative miss ratio: missed falls over all true falls."""
    _require(tp + fn, "fn_rate_as_sensitivity_complement")
    return fn / (tp + fn)


def normalized_sc(sum_sc: int, cases: int) -> float:
    """Social cost per treated case."""
    _require(cases, "normalized_sc")
    return sum_sc / cases


def normalized_wt(sum_wt: int, cases: int) -> float:
    """Waiting time per treated case."""
    _require(cases, "normalized_wt")
    return sum_wt / cases


def avg_per_tick(count: int, ticks: int) -> float:
    _require(ticks, "avg_per_tick")
    return count / ticks


# --- display formatting -----------------------------------------------------
# Percentages and rates are truncated to the displayed precision; per-case
# figures are rounded. Both conventions are needed to hit the reference
# figures digit for digit.

def truncate(value: float, places: int) -> float:
    scaled = value * 10**places
    # Guard against float fuzz just below a representable boundary.
    return math.floor(round(scaled, 6)) / 10**places


def fmt_percent(value: float) -> str:
    return f"{truncate(value, 2):.2f}"


def fmt_rate(value: float, places: int = 4) -> str:
    return f"{truncate(value, places):.{places}f}"


def fmt_rate_rounded(value: float, places: int = 5) -> str:
    """Rounded rate display; the reference tables round the FN-rate row."""
    return f"{round(value, places):.{places}f}"


def fmt_per_case(value: float) -> str:
    return f"{round(value, 3):.3f}"


@dataclass
class ConfusionCounters:
    fp: int = 0
    fn: int = 0
    tp: int = 0
    tn: int = 0


@dataclass
class CostLedger:
    sc_by_kind: dict[AgentKind, int] = field(default_factory=dict)
    sum_wt: int = 0
    treated_cases: int = 0
    v_informal: int = 0
    v_ambulance: int = 0
    interventions: int = 0

    def add_cost(self, kind: AgentKind, ticks: int = 1) -> None:
        self.sc_by_kind[kind] = self.sc_by_kind.get(kind, 0) + ticks

    def sc(self, kind: AgentKind) -> int:
        return self.sc_by_kind.get(kind, 0)


#: Fixed column order of a serialized report row.
CSV_COLUMNS = [
    "FP",
    "FN",
    "TP",
    "TN",
    "Avg. FP/tick",
    "Avg. FN/tick",
    "FP rate",
    "FN rate",
    "Sensitivity",
    "Specificity",
    "ΣSC(MA)",
    "ΣSC(IC)",
    "ΣWT",
    "♯",
    "V(IC)",
    "V(MA)",
    "I(MA)",
    "ΣSC(MA)/♯",
    "ΣWT/♯",
]


@dataclass
class MetricsReport:
    counters: ConfusionCounters
    ledger: CostLedger
    ticks: int
    seed: int
    config: dict
    fp_rate: Optional[float] = None
    fn_rate: Optional[float] = None
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None
    fp_rate_as_specificity_complement: Optional[float] = None
    fn_rate_as_sensitivity_complement: Optional[float] = None
    avg_fp_per_tick: Optional[float] = None
    avg_fn_per_tick: Optional[float] = None
    normalized_sc_ambulance: Optional[float] = None
    normalized_wt: Optional[float] = None

    def __post_init__(self) -> None:
        self.finalize()

    def finalize(self) -> "MetricsReport":
        """(Re)compute every derived figure from the raw counters."""
        c, led = self.counters, self.ledger

        def safe(fn, *args):
            try:
                return fn(*args)
            except UndefinedMetricError:
                return None

        self.fp_rate = safe(fp_rate, c.fp, c.tp)
        self.fn_rate = safe(fn_rate, c.fn, c.tn)
        self.sensitivity = safe(sensitivity, c.tp, c.fn)
        self.specificity = safe(specificity, c.tn, c.fp)
        self.fp_rate_as_specificity_complement = safe(
            fp_rate_as_specificity_complement, c.tn, c.fp
        )
        self.fn_rate_as_sensitivity_complement = safe(
            fn_rate_as_sensitivity_complement, c.tp, c.fn
        )
        self.avg_fp_per_tick = safe(avg_per_tick, c.fp, self.ticks)
        self.avg_fn_per_tick = safe(avg_per_tick, c.fn, self.ticks)
        self.normalized_sc_ambulance = safe(
            normalized_sc, led.sc(AgentKind.AMBULANCE), led.treated_cases
        )
        self.normalized_wt = safe(normalized_wt, led.sum_wt, led.treated_cases)
        return self

    def csv_row(self) -> list[str]:
        """One table-shaped row; counts verbatim, ratios at table precision."""
        c, led = self.counters, self.ledger

        def pct(v):
            return fmt_percent(v) if v is not None else ""

        def rate(v, places=4):
            return fmt_rate(v, places) if v is not None else ""

        def per_case(v):
            return fmt_per_case(v) if v is not None else ""

        return [
            str(c.fp),
            str(c.fn),
            str(c.tp),
            str(c.tn),
            rate(self.avg_fp_per_tick),
            rate(self.avg_fn_per_tick),
            rate(self.fp_rate),
            fmt_rate_rounded(self.fn_rate, 5) if self.fn_rate is not None else "",
            pct(self.sensitivity),
            pct(self.specificity),
            str(led.sc(AgentKind.AMBULANCE)),
            str(led.sc(AgentKind.INFORMAL_CARER)),
            str(led.sum_wt),
            str(led.treated_cases),
            str(led.v_informal),
            str(led.v_ambulance),
            str(led.interventions),
            per_case(self.normalized_sc_ambulance),
            per_case(self.normalized_wt),
        ]

    def to_dict(self) -> dict:
        """Full-precision structured record (key/value, JSON-serializable)."""
        c, led = self.counters, self.ledger
        return {
            "seed": self.seed,
            "ticks": self.ticks,
            "config": self.config,
            "fp": c.fp,
            "fn": c.fn,
            "tp": c.tp,
            "tn": c.tn,
            "avg_fp_per_tick": self.avg_fp_per_tick,
            "avg_fn_per_tick": self.avg_fn_per_tick,
            "fp_rate": self.fp_rate,
            "fn_rate": self.fn_rate,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "fp_rate_as_specificity_complement": self.fp_rate_as_specificity_complement,
            "fn_rate_as_sensitivity_complement": self.fn_rate_as_sensitivity_complement,
            "sum_sc_ambulance": led.sc(AgentKind.AMBULANCE),
            "sum_sc_professional": led.sc(AgentKind.PROFESSIONAL_CARER),
            "sum_sc_informal": led.sc(AgentKind.INFORMAL_CARER),
            "sum_wt": led.sum_wt,
            "treated_cases": led.treated_cases,
            "v_informal": led.v_informal,
            "v_ambulance": led.v_ambulance,
            "interventions": led.interventions,
            "normalized_sc_ambulance": self.normalized_sc_ambulance,
            "normalized_wt": self.normalized_wt,
        }
