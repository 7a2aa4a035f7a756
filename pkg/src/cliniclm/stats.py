"""Agreement and significance statistics for blinded review sessions.

Covers percent agreement and Gwet's AC1 for two raters over two
categories, Welch's unequal-variance t-test, exact binomial tail tests
(rational arithmetic, no normal approximation), and assembly of the full
review report: identification counts and percentages per rater and
pooled, rating means and standard deviations with Welch p-values, and
dichotomized-agreement tables per measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats as sps


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class ContingencyTable2x2:
    """Counts for rater2 (rows) by rater1 (columns), High before Low:
    a = High/High, b = High/Low, c = Low/High, d = Low/Low."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise StatsError("counts must be nonnegative")
        if self.n == 0:
            raise StatsError("empty table")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d


def percent_agreement(t: ContingencyTable2x2) -> float:
    return (t.a + t.d) / t.n


def gwet_ac1(t: ContingencyTable2x2) -> float:
    """Chance-corrected agreement, two raters x two categories.

    p_a is observed agreement; chance agreement is 2*pi*(1-pi) with pi the
    mean prevalence of the High category across raters.
    """
    n = t.n
    p_a = (t.a + t.d) / n
    pi = ((t.a + t.b) / n + (t.a + t.c) / n) / 2.0
    p_e = 2.0 * pi * (1.0 - pi)
    if 1.0 - p_e == 0.0:
        raise StatsError("degenerate table: chance agreement is 1")
    return (p_a - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    tail: str  # two_sided | lower | upper
    method: str
    df: float | None = None


def welch_t(group_a: Sequence[float], group_b: Sequence[float]) -> TestResult:
    """Two-sided Welch t-test with Satterthwaite degrees of freedom."""
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise StatsError("each group needs at least 2 values")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            return TestResult(statistic=0.0, p_value=1.0, tail="two_sided", method="welch_t", df=float(a.size + b.size - 2))
        raise StatsError("both groups have zero variance")
    sa = va / a.size
    sb = vb / b.size
    se = math.sqrt(sa + sb)
    stat = (a.mean() - b.mean()) / se
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = 2.0 * float(sps.t.sf(abs(stat), df))
    return TestResult(statistic=float(stat), p_value=min(p, 1.0), tail="two_sided", method="welch_t", df=float(df))


def _binom_pmfs(n: int, p0: float) -> list[Fraction]:
    p = Fraction(p0)
    q = 1 - p
    return [Fraction(math.comb(n, k)) * p**k * q ** (n - k) for k in range(n + 1)]


def binom_cdf_exact(k: int, n: int, p0: float) -> Fraction:
    """P(X <= k) as an exact rational."""
    return sum(_binom_pmfs(n, p0)[: k + 1], Fraction(0))


def binom_test(k: int, n: int, p0: float, tail: str = "two_sided") -> TestResult:
    """Exact binomial test by summing the probability mass, no approximation.

    two_sided sums every outcome whose mass does not exceed the observed
    one (the usual minlike definition), evaluated in exact arithmetic.
    """
    if not (0 <= k <= n) or n < 1:
        raise StatsError("need 0 <= k <= n with n >= 1")
    if not (0.0 < p0 < 1.0):
        raise StatsError("p0 must be inside (0, 1)")
    if tail not in ("two_sided", "lower", "upper"):
        raise StatsError(f"unknown tail {tail!r}")
    pmfs = _binom_pmfs(n, p0)
    if tail == "lower":
        p = sum(pmfs[: k + 1], Fraction(0))
    elif tail == "upper":
        p = sum(pmfs[k:], Fraction(0))
    else:
        observed = pmfs[k]
        p = sum((m for m in pmfs if m <= observed), Fraction(0))
    return TestResult(statistic=float(k), p_value=float(min(p, Fraction(1))), tail=tail, method="binom_exact")


# -- review report -------------------------------------------------------

ORIGINS = ("AI", "Human")
MEASURES = ("readability", "relevance")


@dataclass(frozen=True)
class ItemJudgment:
    item_id: str
    origin: str  # hidden ground truth, AI or Human
    guess: str
    readability: int
    relevance: int


@dataclass(frozen=True)
class RaterRecord:
    rater_id: str
    judgments: tuple[ItemJudgment, ...]


@dataclass
class IdentificationCell:
    correct: float
    total: int

    @property
    def fraction(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def pct_str(self) -> str:
        return f"{100.0 * self.fraction:.1f}%"

    @property
    def count_str(self) -> str:
        return f"{self.correct:g}"


@dataclass
class MeasureSummary:
    ai_mean: float
    ai_sd: float
    human_mean: float
    human_sd: float
    test: TestResult


@dataclass
class AgreementSummary:
    table: ContingencyTable2x2
    percent_agreement: float
    ac1: float


@dataclass
class TuringReport:
    per_rater: dict[str, dict[str, IdentificationCell]]
    pooled: dict[str, IdentificationCell]
    identification_tests: dict[str, TestResult]
    ratings: dict[str, MeasureSummary]
    agreement: dict[str, AgreementSummary] | None
    dichotomize_threshold: int
    null_rate: float


def _check_records(records: Sequence[RaterRecord]) -> None:
    if not records:
        raise StatsError("no rater records")
    ids = [tuple(j.item_id for j in r.judgments) for r in records]
    if any(len(set(i)) != len(i) for i in ids):
        raise StatsError("duplicate item in a rater record")
    if len({frozenset(i) for i in ids}) != 1:
        raise StatsError("raters rated different item sets")
    for r in records:
        for j in r.judgments:
            if j.origin not in ORIGINS or j.guess not in ORIGINS:
                raise StatsError(f"bad origin/guess in {r.rater_id}")
            if not (1 <= j.readability <= 9 and 1 <= j.relevance <= 9):
                raise StatsError("rating outside 1..9")


def turing_report(
    records: Sequence[RaterRecord],
    *,
    dichotomize_threshold: int = 5,
    null_rate: float = 0.7,
) -> TuringReport:
    """Identification, rating, and agreement statistics for a finished session.

    Identification tests are exact lower-tail binomials against null_rate
    on pooled correct counts. Rating comparisons are Welch tests on
    per-item ratings averaged across raters. Agreement dichotomizes
    ratings at >= threshold into High/Low (reported for two-rater
    sessions).
    """
    _check_records(records)

    per_rater: dict[str, dict[str, IdentificationCell]] = {}
    pooled_correct = {"AI": 0, "Human": 0}
    pooled_total = {"AI": 0, "Human": 0}
    for r in records:
        cells: dict[str, IdentificationCell] = {}
        for origin in ORIGINS:
            items = [j for j in r.judgments if j.origin == origin]
            correct = sum(1 for j in items if j.guess == j.origin)
            cells[origin] = IdentificationCell(correct=correct, total=len(items))
            pooled_correct[origin] += correct
            pooled_total[origin] += len(items)
        cells["Total"] = IdentificationCell(
            correct=cells["AI"].correct + cells["Human"].correct,
            total=cells["AI"].total + cells["Human"].total,
        )
        per_rater[r.rater_id] = cells

    n_raters = len(records)
    pooled = {
        origin: IdentificationCell(correct=pooled_correct[origin] / n_raters, total=pooled_total[origin] // n_raters)
        for origin in ORIGINS
    }
    pooled["Total"] = IdentificationCell(
        correct=(pooled_correct["AI"] + pooled_correct["Human"]) / n_raters,
        total=(pooled_total["AI"] + pooled_total["Human"]) // n_raters,
    )

    identification_tests = {
        "AI": binom_test(pooled_correct["AI"], pooled_total["AI"], null_rate, "lower"),
        "Human": binom_test(pooled_correct["Human"], pooled_total["Human"], null_rate, "lower"),
        "Total": binom_test(
            pooled_correct["AI"] + pooled_correct["Human"],
            pooled_total["AI"] + pooled_total["Human"],
            null_rate,
            "lower",
        ),
    }

    # Per-item ratings averaged across raters, grouped by origin.
    item_origin: dict[str, str] = {j.item_id: j.origin for j in records[0].judgments}
    ratings: dict[str, MeasureSummary] = {}
    for measure in MEASURES:
        values: dict[str, list[float]] = {}
        for item_id, origin in item_origin.items():
            per_item = [getattr(j, measure) for r in records for j in r.judgments if j.item_id == item_id]
            values.setdefault(origin, []).append(float(np.mean(per_item)))
        ai = np.asarray(values.get("AI", []))
        human = np.asarray(values.get("Human", []))
        if ai.size < 2 or human.size < 2:
            raise StatsError("need at least 2 items per origin for rating comparisons")
        ratings[measure] = MeasureSummary(
            ai_mean=float(ai.mean()),
            ai_sd=float(ai.std(ddof=1)),
            human_mean=float(human.mean()),
            human_sd=float(human.std(ddof=1)),
            test=welch_t(ai, human),
        )

    agreement: dict[str, AgreementSummary] | None = None
    if n_raters == 2:
        agreement = {}
        r1, r2 = records
        by_item_1 = {j.item_id: j for j in r1.judgments}
        for measure in MEASURES:
            a = b = c = d = 0
            for j2 in r2.judgments:
                j1 = by_item_1[j2.item_id]
                high1 = getattr(j1, measure) >= dichotomize_threshold
                high2 = getattr(j2, measure) >= dichotomize_threshold
                if high2 and high1:
                    a += 1
                elif high2 and not high1:
                    b += 1
                elif not high2 and high1:
                    c += 1
                else:
                    d += 1
            table = ContingencyTable2x2(a=a, b=b, c=c, d=d)
            agreement[measure] = AgreementSummary(
                table=table,
                percent_agreement=percent_agreement(table),
                ac1=gwet_ac1(table),
            )

    return TuringReport(
        per_rater=per_rater,
        pooled=pooled,
        identification_tests=identification_tests,
        ratings=ratings,
        agreement=agreement,
        dichotomize_threshold=dichotomize_threshold,
        null_rate=null_rate,
    )


def _fmt_p(p: float) -> str:
    return "< 0.001" if p < 0.001 else f"= {p:.3f}"


def render_report(report: TuringReport) -> str:
    """Plain-text table in the identification / ratings / agreement layout."""
    lines: list[str] = []
    lines.append("a. Notes correctly identified")
    lines.append(f"{'':18s}{'AI':>18s}{'Human':>18s}{'Total':>18s}")
    for rater, cells in report.per_rater.items():
        row = [f"{cells[k].count_str} ({cells[k].pct_str})" for k in ("AI", "Human", "Total")]
        lines.append(f"{rater:18s}{row[0]:>18s}{row[1]:>18s}{row[2]:>18s}")
    pooled_row = [f"{report.pooled[k].count_str} ({report.pooled[k].pct_str})" for k in ("AI", "Human", "Total")]
    lines.append(f"{'Overall':18s}{pooled_row[0]:>18s}{pooled_row[1]:>18s}{pooled_row[2]:>18s}")
    tests = report.identification_tests
    lines.append(
        f"{'p-value':18s}{_fmt_p(tests['AI'].p_value):>18s}{_fmt_p(tests['Human'].p_value):>18s}{_fmt_p(tests['Total'].p_value):>18s}"
    )
    lines.append("")
    lines.append("b. Quality ratings (mean (sd))")
    lines.append(f"{'':18s}{'AI':>18s}{'Human':>18s}{'p-value':>18s}")
    for measure, summary in report.ratings.items():
        lines.append(
            f"{measure:18s}"
            f"{summary.ai_mean:.2f} ({summary.ai_sd:.2f})".rjust(18)
            + f"{summary.human_mean:.2f} ({summary.human_sd:.2f})".rjust(18)
            + f"{summary.test.p_value:.2f}".rjust(18)
        )
    if report.agreement:
        lines.append("")
        lines.append("c. Interrater agreement (High/Low at threshold "
                     f"{report.dichotomize_threshold})")
        for measure, summary in report.agreement.items():
            lines.append(
                f"{measure:18s}percent agreement = {summary.percent_agreement:.2f}, "
                f"AC1 = {summary.ac1:.2f}"
            )
    return "\n".join(lines)
