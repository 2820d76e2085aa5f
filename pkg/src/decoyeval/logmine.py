"""Mining interaction logs for target/control behaviour comparison.

The pipeline: derive similarity thresholds from the log's own within-topic
similarity distribution, detect decoy targets on each SERP, match controls
(similar, comparably relevant, never a target), extract one interaction
record per (SERP, doc) with zero-filled signals for unclicked docs, then
compare the two groups per measure with Welch's unequal-variance t-test.

The t-test p-value comes from the regularized incomplete beta function,
implemented here with a Lentz continued fraction so the library needs no
stats dependency.
"""

import logging
import math
from collections.abc import Sequence, Set
from dataclasses import dataclass

from .decoy import SerpPairRecord
from .model import InteractionLog, InteractionRecord, SimilaritySource
from .simsig import percentile_threshold, topic_sim_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class Thresholds:
    """Similarity cutoffs derived from a log, with the sample size used."""

    s_min: float
    s_control: float
    pair_count: int

    def __post_init__(self):
        if self.pair_count < 1:
            raise ValueError("thresholds need at least one similarity value")
        if self.s_min > self.s_control:
            raise ValueError(
                f"s_min ({self.s_min}) cannot exceed s_control ({self.s_control})"
            )


def log_doc_universe(log: InteractionLog) -> dict[str, list[str]]:
    """Per topic, the sorted distinct doc ids displayed anywhere in the log."""
    universe: dict[str, set[str]] = {}
    for session in log.sessions:
        bucket = universe.setdefault(session.topic_id, set())
        for doc in session.serp:
            bucket.add(doc.doc_id)
    return {topic: sorted(docs) for topic, docs in sorted(universe.items())}


def derive_thresholds(
    log: InteractionLog,
    source: SimilaritySource,
    s_min_pct: float = 99.0,
    s_control_pct: float = 99.5,
) -> Thresholds:
    """Pool all distinct within-topic pair similarities over the docs each
    topic displayed, then take percentiles: s_min at s_min_pct and s_control
    at s_control_pct.

    A log whose topics all show fewer than two docs has no pairs and is an
    error.
    """
    if s_min_pct >= s_control_pct:
        raise ValueError(
            f"s_min percentile ({s_min_pct}) must be below s_control percentile "
            f"({s_control_pct})"
        )
    values: list[float] = []
    for topic_id, docs in log_doc_universe(log).items():
        if len(docs) < 2:
            continue
        values.extend(topic_sim_matrix(source, docs, topic_id).pair_values().tolist())
    if not values:
        raise ValueError("no within-topic doc pairs in the log; cannot derive thresholds")
    s_min = percentile_threshold(values, s_min_pct)
    s_control = percentile_threshold(values, s_control_pct)
    logger.info(
        "derived s_min=%.6g s_control=%.6g from %d pair similarities",
        s_min, s_control, len(values),
    )
    return Thresholds(s_min=s_min, s_control=s_control, pair_count=len(values))


def extract_records(
    log: InteractionLog,
    pair_records: Sequence[SerpPairRecord],
    matched_targets: Set[str],
    controls: Set[str],
    top_n: int = 10,
) -> list[InteractionRecord]:
    """Build the target-group and control-group interaction records.

    Target group: one record per distinct (SERP, target doc) among the decoy
    pair records whose target survived control matching. Control group: one
    record per (SERP, control doc) over each SERP's top `top_n`. Unclicked
    docs get dwell 0 and usefulness 0. Target records come first, both
    groups in log order then rank order.
    """
    overlap = set(matched_targets) & set(controls)
    if overlap:
        raise ValueError(
            f"target and control sets overlap: {', '.join(sorted(overlap)[:5])}"
        )
    serps = {s.serp_id: s for s in log.sessions}
    wanted: set[tuple[str, str]] = set()
    for rec in pair_records:
        if rec.serp_id not in serps:
            raise ValueError(f"pair record references unknown SERP {rec.serp_id}")
        if rec.pair.target_doc in matched_targets:
            wanted.add((rec.serp_id, rec.pair.target_doc))

    def build(session, doc, group):
        click = session.clicks.get(doc.doc_id)
        return InteractionRecord(
            serp_id=session.serp_id,
            doc_id=doc.doc_id,
            group=group,
            is_clicked=click is not None,
            dwell_seconds=click.dwell_seconds if click else 0.0,
            usefulness=click.usefulness if click else 0,
            rank=doc.rank,
            task_id=session.task_id,
            user_id=session.user_id,
        )

    records = [
        build(session, doc, "target")
        for session in log.sessions
        for doc in session.serp[:top_n]
        if (session.serp_id, doc.doc_id) in wanted
    ]
    records.extend(
        build(session, doc, "control")
        for session in log.sessions
        for doc in session.serp[:top_n]
        if doc.doc_id in controls
    )
    logger.info(
        "extracted %d target and %d control records",
        sum(1 for r in records if r.group == "target"),
        sum(1 for r in records if r.group == "control"),
    )
    return records


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Lentz's continued fraction for the incomplete beta integral."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 301):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function, for a, b > 0."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"beta parameters must be positive, got a={a} b={b}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # The continued fraction converges fast only on one side of the mean;
    # use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) for the other.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom.

    Two equivalent beta forms exist: I_x(df/2, 1/2) with x = df/(df + t^2)
    and 1 - I_y(1/2, df/2) with y = t^2/(df + t^2). Each ratio is only
    accurate while it stays below 1/2, so pick the branch whose argument is
    the small one; otherwise tiny |t| rounds x to 1 and the p-value to 1.
    """
    if df <= 0.0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if math.isnan(t):
        raise ValueError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    t2 = t * t
    if t2 < df:
        return 1.0 - regularized_incomplete_beta(0.5, 0.5 * df, t2 / (df + t2))
    return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t2))


@dataclass(frozen=True, slots=True)
class WelchResult:
    """Welch's unequal-variance t-test for one measure, target minus control."""

    measure: str
    mean_target: float
    mean_control: float
    t: float
    df: float
    p_two_sided: float


def welch_t_test(x: Sequence[float], y: Sequence[float], measure: str = "") -> WelchResult:
    """Welch's t-test of mean(x) - mean(y) with Welch-Satterthwaite df.

    Needs at least two observations per side. Identical constant samples
    give t = 0, p = 1; zero variance with different means gives p = 0.
    """
    n1, n2 = len(x), len(y)
    if n1 < 2 or n2 < 2:
        raise ValueError(f"welch t-test needs >= 2 observations per group, got {n1} and {n2}")
    m1 = math.fsum(x) / n1
    m2 = math.fsum(y) / n2
    v1 = math.fsum((v - m1) ** 2 for v in x) / (n1 - 1)
    v2 = math.fsum((v - m2) ** 2 for v in y) / (n2 - 1)
    se2 = v1 / n1 + v2 / n2
    diff = m1 - m2
    if se2 == 0.0:
        # Both samples constant: the test degenerates.
        t = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        df = float(n1 + n2 - 2)
        p = 1.0 if diff == 0.0 else 0.0
    else:
        t = diff / math.sqrt(se2)
        df = se2 ** 2 / ((v1 / n1) ** 2 / (n1 - 1) + (v2 / n2) ** 2 / (n2 - 1))
        p = student_t_two_sided_p(t, df)
    return WelchResult(measure, m1, m2, t, df, p)


@dataclass(frozen=True, slots=True)
class GroupStats:
    """Behaviour summary of one record group."""

    group: str
    n: int
    clickthrough: float
    mean_dwell: float
    mean_usefulness: float

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("record count cannot be negative")
        if self.n and not 0.0 <= self.clickthrough <= 1.0:
            raise ValueError(f"clickthrough {self.clickthrough} outside [0, 1]")


MEASURES = ("clickthrough", "dwell_seconds", "usefulness")


@dataclass(frozen=True, slots=True)
class GroupComparison:
    """Target vs control summary with one Welch test per measure.

    `tests` is empty when either group has fewer than two records; the means
    are still reported.
    """

    target: GroupStats
    control: GroupStats
    tests: tuple[WelchResult, ...]


def _stats(group: str, values: dict[str, list[float]]) -> GroupStats:
    n = len(values["clickthrough"])
    if n == 0:
        return GroupStats(group, 0, 0.0, 0.0, 0.0)
    return GroupStats(
        group=group,
        n=n,
        clickthrough=math.fsum(values["clickthrough"]) / n,
        mean_dwell=math.fsum(values["dwell_seconds"]) / n,
        mean_usefulness=math.fsum(values["usefulness"]) / n,
    )


def group_stats(records: Sequence[InteractionRecord]) -> GroupComparison:
    """Split records by group and compare clickthrough, dwell and usefulness.

    Clickthrough treats each record as a 0/1 observation; dwell and
    usefulness are the zero-filled per-record values.
    """
    samples = {
        "target": {m: [] for m in MEASURES},
        "control": {m: [] for m in MEASURES},
    }
    for rec in records:
        bucket = samples[rec.group]
        bucket["clickthrough"].append(1.0 if rec.is_clicked else 0.0)
        bucket["dwell_seconds"].append(float(rec.dwell_seconds))
        bucket["usefulness"].append(float(rec.usefulness))
    target = _stats("target", samples["target"])
    control = _stats("control", samples["control"])
    if target.n < 2 or control.n < 2:
        logger.warning(
            "skipping t-tests: group sizes %d and %d", target.n, control.n
        )
        return GroupComparison(target, control, ())
    tests = tuple(
        welch_t_test(samples["target"][m], samples["control"][m], measure=m)
        for m in MEASURES
    )
    return GroupComparison(target, control, tests)
