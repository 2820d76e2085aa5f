"""Ranking effectiveness and decoy-vulnerability metrics.

Effectiveness: nDCG, Recall, RBP, ERR, each at a cutoff k. Vulnerability:
DEJA-VU@k = 1 - exp(d - r) where d counts deduplicated decoy pairs in the
top k and r counts highly relevant documents there (so 0 <= d <= r and the
score lives in [0, 1)). The two sides combine linearly:
LC = alpha * DEJA-VU + (1 - alpha) * effectiveness.

Per-topic evaluation is pure; aggregation uses math.fsum so topic order
never changes a mean.
"""

import bisect
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .decoy import detect_decoy_pairs_at_k
from .model import DecoyConfig, Qrels, RankedDoc, RunList, SimilaritySource

EFFECTIVENESS_METRICS = ("ndcg", "recall", "rbp", "err")
KNOWN_METRICS = ("dejavu",) + EFFECTIVENESS_METRICS + tuple(
    f"lc_{m}" for m in EFFECTIVENESS_METRICS
)


@dataclass(frozen=True)
class MetricConfig:
    """Shared knobs for all metrics at one cutoff.

    g_max is the top relevance grade (gain and ERR normalisation), phi the
    RBP persistence, alpha the LC weight on DEJA-VU, and the two floors say
    which grades count as relevant for Recall and as highly relevant for
    DEJA-VU's r.
    """

    k: int = 10
    g_max: int = 3
    phi: float = 0.8
    alpha: float = 0.5
    recall_min: int = 2
    highly_relevant_min: int = 2

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.k}")
        if self.g_max < 1:
            raise ValueError(f"g_max must be >= 1, got {self.g_max}")
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"phi must lie in (0, 1), got {self.phi}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name, floor in (("recall_min", self.recall_min),
                            ("highly_relevant_min", self.highly_relevant_min)):
            if not 0 <= floor <= self.g_max:
                raise ValueError(f"{name} must lie in [0, g_max], got {floor}")


# Largest double below 1; keeps the metric inside its documented [0, 1)
# range when 1 - exp(d - r) is no longer representable below 1 (r - d >= 38).
_MAX_BELOW_ONE = math.nextafter(1.0, 0.0)


def dejavu(decoy_pairs: int, highly_relevant: int) -> float:
    """DEJA-VU score 1 - exp(d - r) for d decoy pairs among r relevant docs.

    The value always stays strictly below 1: for r - d beyond roughly 37 the
    closed form rounds to 1.0 in doubles, so the result is capped at the
    largest double below 1 (an error under one ulp).

    >>> dejavu(2, 2)
    0.0
    >>> round(dejavu(2, 3), 3)
    0.632
    >>> round(dejavu(1, 2), 3)
    0.632
    >>> dejavu(0, 0)
    0.0
    """
    if decoy_pairs < 0:
        raise ValueError(f"decoy pair count must be >= 0, got {decoy_pairs}")
    if decoy_pairs > highly_relevant:
        raise ValueError(
            f"decoy pairs ({decoy_pairs}) cannot exceed highly relevant docs "
            f"({highly_relevant}); dedup guarantees every target is counted in r"
        )
    return min(-math.expm1(decoy_pairs - highly_relevant), _MAX_BELOW_ONE)


@dataclass(frozen=True, slots=True)
class DejavuOutcome:
    decoy_pairs: int
    highly_relevant: int
    score: float


def dejavu_at_k(
    topic_id: str,
    ranking: Sequence[RankedDoc],
    grades: Mapping[str, int],
    sims,
    decoy_cfg: DecoyConfig,
    k: int,
    highly_relevant_min: int = 2,
) -> DejavuOutcome:
    """DEJA-VU@k for one topic: count dedup decoy pairs and highly relevant
    docs in the top k, then apply 1 - exp(d - r)."""
    pairs = detect_decoy_pairs_at_k(topic_id, ranking, grades, sims, decoy_cfg, k, dedup=True)
    relevant = sum(
        1 for doc in ranking[:k] if grades.get(doc.doc_id, 0) >= highly_relevant_min
    )
    return DejavuOutcome(len(pairs), relevant, dejavu(len(pairs), relevant))


def _check_cutoff(k: int) -> None:
    if k < 1:
        raise ValueError(f"cutoff must be >= 1, got {k}")


def ndcg_at_k(
    ranking: Sequence[RankedDoc],
    grades: Mapping[str, int],
    k: int,
    g_max: int = 3,
) -> float:
    """nDCG@k with gain 2^g - 1 and discount log2(rank + 1).

    The ideal ranking is built from every judged document of the topic, not
    just retrieved ones, then truncated at k. A topic with no relevant
    judgments scores 0.
    """
    _check_cutoff(k)
    if g_max < 1:
        raise ValueError(f"g_max must be >= 1, got {g_max}")
    dcg = 0.0
    for i, doc in enumerate(ranking[:k], start=1):
        g = grades.get(doc.doc_id, 0)
        if g:
            dcg += (2.0 ** g - 1.0) / math.log2(i + 1.0)
    ideal = sorted(grades.values(), reverse=True)
    idcg = 0.0
    for i, g in enumerate(ideal[:k], start=1):
        if g <= 0:
            break
        idcg += (2.0 ** g - 1.0) / math.log2(i + 1.0)
    if idcg == 0.0:
        return 0.0
    value = dcg / idcg
    # A perfect ranking can land a few ulps above 1 because DCG and IDCG sum
    # the same terms in different orders.
    if 1.0 < value <= 1.0 + 1e-9:
        return 1.0
    return value


def recall_at_k(
    ranking: Sequence[RankedDoc],
    grades: Mapping[str, int],
    k: int,
    recall_min: int = 2,
) -> float:
    """Fraction of the topic's relevant docs (grade >= recall_min) retrieved
    in the top k. Topics with no relevant docs score 0."""
    _check_cutoff(k)
    total = sum(1 for g in grades.values() if g >= recall_min)
    if total == 0:
        return 0.0
    hits = sum(1 for doc in ranking[:k] if grades.get(doc.doc_id, 0) >= recall_min)
    return hits / total


def rbp_at_k(
    ranking: Sequence[RankedDoc],
    grades: Mapping[str, int],
    k: int,
    phi: float = 0.8,
    g_max: int = 3,
) -> float:
    """Rank-biased precision (1 - phi) * sum_i r_i * phi^(i-1), truncated at
    k, with graded utility r_i = grade_i / g_max."""
    _check_cutoff(k)
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0, 1), got {phi}")
    if g_max < 1:
        raise ValueError(f"g_max must be >= 1, got {g_max}")
    total = 0.0
    weight = 1.0 - phi
    for doc in ranking[:k]:
        g = grades.get(doc.doc_id, 0)
        if g:
            total += weight * (g / g_max)
        weight *= phi
    return total


def err_grade_map(grade: int, g_max: int = 3) -> float:
    """Relevance probability (2^g - 1) / 2^g_max used by the ERR cascade.

    >>> [err_grade_map(g) for g in range(4)]
    [0.0, 0.125, 0.375, 0.875]
    """
    if g_max < 1:
        raise ValueError(f"g_max must be >= 1, got {g_max}")
    if not 0 <= grade <= g_max:
        raise ValueError(f"grade must lie in [0, {g_max}], got {grade}")
    return (2.0 ** grade - 1.0) / (2.0 ** g_max)


def err_at_k(
    ranking: Sequence[RankedDoc],
    grades: Mapping[str, int],
    k: int,
    g_max: int = 3,
) -> float:
    """Expected reciprocal rank: sum_i (1/i) * R_i * prod_{j<i} (1 - R_j)."""
    _check_cutoff(k)
    err = 0.0
    p_continue = 1.0
    for i, doc in enumerate(ranking[:k], start=1):
        r = err_grade_map(grades.get(doc.doc_id, 0), g_max)
        err += p_continue * r / i
        p_continue *= 1.0 - r
    return err


def linear_combination(m_dejavu: float, m_eff: float, alpha: float = 0.5) -> float:
    """LC = alpha * DEJA-VU + (1 - alpha) * effectiveness, both in [0, 1]."""
    for name, v in (("dejavu", m_dejavu), ("effectiveness", m_eff), ("alpha", alpha)):
        if not 0.0 <= v <= 1.0 or math.isnan(v):
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    return alpha * m_dejavu + (1.0 - alpha) * m_eff


@dataclass(frozen=True, slots=True)
class TopicScores:
    """All requested metric values for one topic at one cutoff."""

    topic_id: str
    scores: dict[str, float]
    decoy_pairs: int = 0
    highly_relevant: int = 0

    def __post_init__(self):
        if self.decoy_pairs < 0 or self.decoy_pairs > self.highly_relevant:
            raise ValueError(
                f"topic {self.topic_id}: need 0 <= decoy pairs <= highly relevant, "
                f"got d={self.decoy_pairs} r={self.highly_relevant}"
            )
        for name, v in self.scores.items():
            if math.isnan(v) or not 0.0 <= v <= 1.0:
                raise ValueError(f"topic {self.topic_id}: {name}={v} outside [0, 1]")


def resolve_metrics(names: Sequence[str]) -> tuple[str, ...]:
    """Validate metric names and add anything an LC metric depends on.

    lc_X needs both dejavu and X; missing operands are appended in a stable
    order rather than rejected.
    """
    seen: list[str] = []
    for name in names:
        if name not in KNOWN_METRICS:
            raise ValueError(
                f"unknown metric {name!r}; known: {', '.join(KNOWN_METRICS)}"
            )
        if name not in seen:
            seen.append(name)
    for name in list(seen):
        if name.startswith("lc_"):
            for dep in ("dejavu", name[3:]):
                if dep not in seen:
                    seen.append(dep)
    if not seen:
        raise ValueError("at least one metric is required")
    return tuple(seen)


def evaluate_topic(
    topic_id: str,
    ranking: Sequence[RankedDoc],
    grades: Mapping[str, int],
    sims,
    decoy_cfg: DecoyConfig,
    cfg: MetricConfig,
    metrics: Sequence[str],
) -> TopicScores:
    """Compute the requested metrics for one topic at cfg.k.

    `metrics` must already be dependency-closed (see resolve_metrics).
    `sims` may be None when no dejavu-family metric is requested.
    """
    metrics = tuple(metrics)
    d = r = 0
    # Base metrics first, whatever the requested column order; LC metrics
    # then read from this pool.
    computed: dict[str, float] = {}
    for name in metrics:
        if name == "dejavu":
            outcome = dejavu_at_k(
                topic_id, ranking, grades, sims, decoy_cfg, cfg.k,
                highly_relevant_min=cfg.highly_relevant_min,
            )
            d, r = outcome.decoy_pairs, outcome.highly_relevant
            computed[name] = outcome.score
        elif name == "ndcg":
            computed[name] = ndcg_at_k(ranking, grades, cfg.k, g_max=cfg.g_max)
        elif name == "recall":
            computed[name] = recall_at_k(ranking, grades, cfg.k, recall_min=cfg.recall_min)
        elif name == "rbp":
            computed[name] = rbp_at_k(ranking, grades, cfg.k, phi=cfg.phi, g_max=cfg.g_max)
        elif name == "err":
            computed[name] = err_at_k(ranking, grades, cfg.k, g_max=cfg.g_max)
        elif not name.startswith("lc_"):
            raise ValueError(f"unknown metric {name!r}")
    scores: dict[str, float] = {}
    for name in metrics:
        if name.startswith("lc_"):
            base = name[3:]
            if "dejavu" not in computed or base not in computed:
                raise ValueError(f"{name} requires dejavu and {base}; call resolve_metrics")
            scores[name] = linear_combination(computed["dejavu"], computed[base], cfg.alpha)
        else:
            scores[name] = computed[name]
    return TopicScores(topic_id, scores, decoy_pairs=d, highly_relevant=r)


@dataclass(frozen=True, slots=True)
class AggregateScores:
    """Per-metric means over a topic set, plus mean pair and relevant counts."""

    n_topics: int
    scores: dict[str, float]
    decoy_pairs: float
    highly_relevant: float


def aggregate(topics: Sequence[TopicScores]) -> AggregateScores:
    """Arithmetic mean of every metric across topics.

    Sums use math.fsum, so permuting the topics cannot change the result.
    """
    if not topics:
        raise ValueError("cannot aggregate an empty topic list")
    names = list(topics[0].scores)
    for t in topics:
        if list(t.scores) != names:
            raise ValueError(
                f"inconsistent metric sets across topics: {names} vs {list(t.scores)}"
            )
    n = len(topics)
    means = {m: math.fsum(t.scores[m] for t in topics) / n for m in names}
    return AggregateScores(
        n_topics=n,
        scores=means,
        decoy_pairs=math.fsum(t.decoy_pairs for t in topics) / n,
        highly_relevant=math.fsum(t.highly_relevant for t in topics) / n,
    )


@dataclass(frozen=True, slots=True)
class RunEvaluation:
    """One run evaluated at one cutoff: per-topic rows plus their mean."""

    run_tag: str
    k: int
    metric_names: tuple[str, ...]
    topics: list[TopicScores]
    mean: AggregateScores


def evaluate_run(
    run: RunList,
    qrels: Qrels,
    source: SimilaritySource | None,
    decoy_cfg: DecoyConfig,
    cfg: MetricConfig,
    metrics: Sequence[str],
    cutoffs: Sequence[int],
    max_workers: int = 1,
) -> list[RunEvaluation]:
    """Evaluate a run at each cutoff over every judged topic.

    Topics come from the qrels (sorted); a judged topic missing from the run
    scores as an empty ranking. Evaluation is per-topic pure, so topics may
    be scored on a thread pool; results are merged in topic order and do not
    depend on max_workers.
    """
    metrics = resolve_metrics(metrics)
    cutoffs = sorted(set(cutoffs))
    if not cutoffs:
        raise ValueError("at least one cutoff is required")
    needs_sims = "dejavu" in metrics
    if needs_sims and source is None:
        raise ValueError("dejavu requires a similarity source")
    topic_ids = sorted(qrels.judgments)

    def score_topic(topic_id: str) -> list[TopicScores]:
        ranking = run.rankings.get(topic_id, [])
        grades = qrels.grades_for(topic_id)
        view = source.topic_view(topic_id) if needs_sims and ranking else None
        out = []
        for k in cutoffs:
            kcfg = MetricConfig(
                k=k, g_max=cfg.g_max, phi=cfg.phi, alpha=cfg.alpha,
                recall_min=cfg.recall_min, highly_relevant_min=cfg.highly_relevant_min,
            )
            out.append(evaluate_topic(topic_id, ranking, grades, view, decoy_cfg, kcfg, metrics))
        return out

    if max_workers > 1 and len(topic_ids) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_topic = list(pool.map(score_topic, topic_ids))
    else:
        per_topic = [score_topic(t) for t in topic_ids]

    results = []
    for idx, k in enumerate(cutoffs):
        rows = [scores[idx] for scores in per_topic]
        results.append(RunEvaluation(run.run_tag, k, metrics, rows, aggregate(rows)))
    return results


@dataclass(frozen=True, slots=True)
class SweepRow:
    """Means across topics at one cutoff of a sweep."""

    k: int
    decoy_pairs: float
    ndcg: float
    recall: float
    dejavu: float


def sweep(
    run: RunList,
    qrels: Qrels,
    source: SimilaritySource,
    decoy_cfg: DecoyConfig,
    cfg: MetricConfig,
    k_start: int,
    k_end: int,
    k_step: int,
) -> list[SweepRow]:
    """Mean decoy count, nDCG, Recall and DEJA-VU at each cutoff in
    range(k_start, k_end + 1, k_step).

    One detection pass per topic covers every cutoff: pairs found in the
    k_end prefix are bucketed by the rank where both members are visible,
    and per-rank prefix sums give the gain, relevant and highly relevant
    counts. A single row with k_start == k_end matches evaluate_topic
    exactly.
    """
    if k_start < 1 or k_end < k_start or k_step < 1:
        raise ValueError(
            f"need 1 <= k_start <= k_end and k_step >= 1, got "
            f"start={k_start} end={k_end} step={k_step}"
        )
    ks = list(range(k_start, k_end + 1, k_step))
    topic_ids = sorted(qrels.judgments)
    if not topic_ids:
        raise ValueError("qrels contain no topics")

    # Per cutoff, accumulate the per-topic values to average at the end.
    acc_d: list[list[float]] = [[] for _ in ks]
    acc_ndcg: list[list[float]] = [[] for _ in ks]
    acc_recall: list[list[float]] = [[] for _ in ks]
    acc_dejavu: list[list[float]] = [[] for _ in ks]

    for topic_id in topic_ids:
        ranking = run.rankings.get(topic_id, [])
        grades = qrels.grades_for(topic_id)
        n = len(ranking)
        doc_grades = [grades.get(doc.doc_id, 0) for doc in ranking]

        cum_gain = [0.0] * (n + 1)
        cum_rel = [0] * (n + 1)
        cum_hr = [0] * (n + 1)
        for i, g in enumerate(doc_grades, start=1):
            cum_gain[i] = cum_gain[i - 1] + (
                (2.0 ** g - 1.0) / math.log2(i + 1.0) if g else 0.0
            )
            cum_rel[i] = cum_rel[i - 1] + (1 if g >= cfg.recall_min else 0)
            cum_hr[i] = cum_hr[i - 1] + (1 if g >= cfg.highly_relevant_min else 0)
        ideal = [g for g in sorted(grades.values(), reverse=True) if g > 0]
        cum_ideal = [0.0] * (len(ideal) + 1)
        for i, g in enumerate(ideal, start=1):
            cum_ideal[i] = cum_ideal[i - 1] + (2.0 ** g - 1.0) / math.log2(i + 1.0)
        total_rel = sum(1 for g in grades.values() if g >= cfg.recall_min)

        # Rank at which each distinct target first has a visible decoy.
        first_k: dict[str, int] = {}
        if n:
            view = source.topic_view(topic_id)
            pairs = detect_decoy_pairs_at_k(
                topic_id, ranking, grades, view, decoy_cfg, k_end, dedup=False
            )
            for p in pairs:
                depth = max(p.target_rank, p.decoy_rank)
                cur = first_k.get(p.target_doc)
                if cur is None or depth < cur:
                    first_k[p.target_doc] = depth
        appear = sorted(first_k.values())

        for col, k in enumerate(ks):
            cut = min(k, n)
            d = bisect.bisect_right(appear, k)
            r = cum_hr[cut]
            idcg = cum_ideal[min(k, len(ideal))]
            acc_d[col].append(float(d))
            nd = cum_gain[cut] / idcg if idcg > 0.0 else 0.0
            if 1.0 < nd <= 1.0 + 1e-9:
                nd = 1.0
            acc_ndcg[col].append(nd)
            acc_recall[col].append(cum_rel[cut] / total_rel if total_rel else 0.0)
            acc_dejavu[col].append(dejavu(d, r))

    n_topics = len(topic_ids)
    return [
        SweepRow(
            k=k,
            decoy_pairs=math.fsum(acc_d[col]) / n_topics,
            ndcg=math.fsum(acc_ndcg[col]) / n_topics,
            recall=math.fsum(acc_recall[col]) / n_topics,
            dejavu=math.fsum(acc_dejavu[col]) / n_topics,
        )
        for col, k in enumerate(ks)
    ]
