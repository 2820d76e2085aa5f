"""Core domain types shared by every other module.

Pure data: constructors validate their invariants and raise ValueError with a
message naming the violated invariant. All types are immutable after
construction (frozen dataclasses, or conventionally-immutable containers) and
safe to share across concurrent workers.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

# Cosine of unit-noise vectors can exceed 1.0 by a few ulps; values within
# this tolerance of +/-1 are clamped, larger excursions are rejected.
SIMILARITY_EPS = 1e-6


class CoverageError(LookupError):
    """A required document vector or pair similarity is absent from the source."""

    def __init__(self, message: str, missing: list = None):
        super().__init__(message)
        self.missing = missing or []


def clamp_similarity(value: float, context: str = "similarity") -> float:
    """Clamp a similarity to [-1, 1] if within SIMILARITY_EPS of the bound.

    Values further outside the interval are errors, not noise.
    """
    if -1.0 <= value <= 1.0:
        return value
    if 1.0 < value <= 1.0 + SIMILARITY_EPS:
        return 1.0
    if -1.0 - SIMILARITY_EPS <= value < -1.0:
        return -1.0
    raise ValueError(f"{context} {value} outside [-1, 1] by more than {SIMILARITY_EPS}")


class Grade(int):
    """Integer relevance grade, 0 <= value <= g_max of the owning qrels.

    Behaves as a plain int; the upper bound is enforced by Qrels, which knows
    its own scale.
    """

    def __new__(cls, value):
        v = super().__new__(cls, value)
        if v < 0:
            raise ValueError(f"grade must be a non-negative integer, got {value!r}")
        return v


@dataclass(frozen=True, slots=True)
class RankedDoc:
    """One entry of a ranked list: document id, dense 1-based rank, score.

    `source_rank` preserves the rank column as it appeared on disk, for
    diagnostics; `rank` is always the re-normalized dense rank.
    """

    doc_id: str
    rank: int
    score: float
    source_rank: int | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")


@dataclass(frozen=True)
class Qrels:
    """Per-topic graded relevance judgments on a 0..g_max scale."""

    g_max: int
    judgments: Mapping[str, Mapping[str, int]]

    def __post_init__(self):
        if self.g_max < 0:
            raise ValueError(f"g_max must be non-negative, got {self.g_max}")
        for topic_id, docs in self.judgments.items():
            for doc_id, grade in docs.items():
                if not isinstance(grade, int):
                    raise ValueError(
                        f"grade for topic {topic_id} doc {doc_id} must be an integer, "
                        f"got {grade!r}"
                    )
                if not 0 <= grade <= self.g_max:
                    raise ValueError(
                        f"grade {grade} for topic {topic_id} doc {doc_id} "
                        f"outside [0, {self.g_max}]"
                    )

    def grades_for(self, topic_id: str) -> Mapping[str, int]:
        """Judgments for one topic; empty mapping when the topic is unjudged."""
        return self.judgments.get(topic_id, {})


@dataclass(frozen=True)
class RunList:
    """A system's ranked output: one ordered list of RankedDoc per topic.

    Within a topic, ranks must be dense 1..n and doc ids unique. Parsers
    guarantee this by re-normalizing ranks in score order.
    """

    run_tag: str
    rankings: Mapping[str, list[RankedDoc]]

    def __post_init__(self):
        for topic_id, docs in self.rankings.items():
            ranks = [d.rank for d in docs]
            if ranks != list(range(1, len(docs) + 1)):
                raise ValueError(
                    f"ranks for topic {topic_id} are not dense 1..{len(docs)}"
                )
            ids = {d.doc_id for d in docs}
            if len(ids) != len(docs):
                raise ValueError(f"duplicate doc ids in topic {topic_id}")


@dataclass(frozen=True)
class MinGradeGap:
    """Quality condition: grade(target) - grade(decoy) >= gamma."""

    gamma: int = 2

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError(f"grade gap must be >= 1, got {self.gamma}")

    def admits(self, target_grade: int, decoy_grade: int) -> bool:
        return target_grade - decoy_grade >= self.gamma


@dataclass(frozen=True)
class GradeBand:
    """Quality condition: grade(target) >= target_min and grade(decoy) <= decoy_max.

    The band must be disjoint (decoy_max < target_min), so a pair can never
    qualify in both directions.
    """

    target_min: int = 2
    decoy_max: int = 1

    def __post_init__(self):
        if self.decoy_max >= self.target_min:
            raise ValueError(
                f"decoy_max ({self.decoy_max}) must be < target_min ({self.target_min})"
            )

    def admits(self, target_grade: int, decoy_grade: int) -> bool:
        return target_grade >= self.target_min and decoy_grade <= self.decoy_max


@dataclass(frozen=True)
class DecoyConfig:
    """Parameters of decoy-pair detection.

    Defaults encode the ranked-run regime: similarity in [0.6, 0.95), grade
    band target >= 2 / decoy <= 1, rank window 5, exclusive upper similarity
    bound. Log mining uses an inclusive upper bound and a minimum grade gap
    instead (see logmine / the mine command). When `s_min_percentile` is set,
    s_min is derived from the pooled within-topic pair similarities before
    detection rather than taken from `s_min`.
    """

    s_min: float = 0.6
    s_max: float = 0.95
    quality: MinGradeGap | GradeBand = field(default_factory=GradeBand)
    delta_rank: int = 5
    s_max_inclusive: bool = False
    s_min_percentile: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.s_min < self.s_max <= 1.0:
            raise ValueError(
                f"similarity band must satisfy 0 <= s_min < s_max <= 1, "
                f"got [{self.s_min}, {self.s_max}]"
            )
        if self.delta_rank < 1:
            raise ValueError(f"delta_rank must be >= 1, got {self.delta_rank}")
        if self.s_min_percentile is not None and not 0.0 < self.s_min_percentile < 100.0:
            raise ValueError(
                f"s_min_percentile must lie in (0, 100), got {self.s_min_percentile}"
            )

    def in_band(self, similarity: float) -> bool:
        if similarity < self.s_min:
            return False
        return similarity <= self.s_max if self.s_max_inclusive else similarity < self.s_max


@dataclass(frozen=True, slots=True)
class DecoyPair:
    """A (target, decoy) document pair admitted by some DecoyConfig.

    The band/quality/rank-window conditions are guaranteed by the detector
    that produced the pair; the constructor only checks field sanity.
    """

    topic_id: str
    target_doc: str
    decoy_doc: str
    similarity: float
    target_rank: int
    decoy_rank: int
    target_grade: int
    decoy_grade: int

    def __post_init__(self):
        if self.target_rank < 1 or self.decoy_rank < 1:
            raise ValueError(
                f"ranks must be >= 1, got ({self.target_rank}, {self.decoy_rank})"
            )
        if self.target_grade < 0 or self.decoy_grade < 0:
            raise ValueError("grades must be non-negative")
        object.__setattr__(
            self, "similarity", clamp_similarity(self.similarity, "pair similarity")
        )


class VectorStore:
    """Similarity source backed by one dense vector per document.

    All vectors share one dimension; zero-norm vectors are rejected. Cosine
    similarity is topic-independent, so every topic view answers from the same
    unit-normalized matrix.
    """

    def __init__(self, vectors: Mapping[str, np.ndarray]):
        if not vectors:
            raise ValueError("vector store requires at least one vector")
        self._index: dict[str, int] = {}
        rows = []
        dim = None
        first_doc = None
        for doc_id, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"vector for doc {doc_id} is not 1-dimensional")
            if dim is None:
                dim, first_doc = arr.shape[0], doc_id
            elif arr.shape[0] != dim:
                raise ValueError(
                    f"vector dimension mismatch: doc {first_doc} has {dim}, "
                    f"doc {doc_id} has {arr.shape[0]}"
                )
            norm = float(np.linalg.norm(arr))
            if norm == 0.0:
                raise ValueError(f"zero-norm vector for doc {doc_id}")
            self._index[doc_id] = len(rows)
            rows.append(arr / norm)
        self._unit = np.vstack(rows)
        self.dim = dim

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._index

    def unit_vector(self, doc_id: str) -> np.ndarray:
        try:
            return self._unit[self._index[doc_id]]
        except KeyError:
            raise CoverageError(f"no vector for doc {doc_id}", [doc_id]) from None

    def unit_matrix(self, doc_ids: list[str]) -> np.ndarray:
        """Unit-normalized vectors for `doc_ids`, stacked in order."""
        missing = [d for d in doc_ids if d not in self._index]
        if missing:
            raise CoverageError(
                f"no vector for {len(missing)} doc(s): {', '.join(sorted(missing)[:10])}",
                missing,
            )
        return self._unit[[self._index[d] for d in doc_ids]]

    def sim(self, doc_a: str, doc_b: str) -> float:
        raw = float(np.dot(self.unit_vector(doc_a), self.unit_vector(doc_b)))
        return clamp_similarity(raw, f"cosine({doc_a}, {doc_b})")

    def topic_view(self, topic_id: str) -> "VectorStore":
        return self


class PairStore:
    """Similarity source backed by precomputed per-topic pair similarities.

    Keys are unordered document pairs within a topic; lookups are symmetric.
    """

    def __init__(self, sims: Mapping[tuple[str, str, str], float]):
        self._sims: dict[tuple[str, str, str], float] = {}
        for (topic_id, doc_a, doc_b), value in sims.items():
            key = self._key(topic_id, doc_a, doc_b)
            clamped = clamp_similarity(
                value, f"similarity({topic_id}: {doc_a}, {doc_b})"
            )
            known = self._sims.get(key)
            if known is not None and known != clamped:
                raise ValueError(
                    f"conflicting similarities for pair ({doc_a}, {doc_b}) "
                    f"in topic {topic_id}: {known} vs {clamped}"
                )
            self._sims[key] = clamped

    @staticmethod
    def _key(topic_id: str, doc_a: str, doc_b: str) -> tuple[str, str, str]:
        return (topic_id, doc_a, doc_b) if doc_a <= doc_b else (topic_id, doc_b, doc_a)

    def __len__(self) -> int:
        return len(self._sims)

    def has_pair(self, topic_id: str, doc_a: str, doc_b: str) -> bool:
        return self._key(topic_id, doc_a, doc_b) in self._sims

    def sim(self, topic_id: str, doc_a: str, doc_b: str) -> float:
        try:
            return self._sims[self._key(topic_id, doc_a, doc_b)]
        except KeyError:
            raise CoverageError(
                f"no similarity for pair ({doc_a}, {doc_b}) in topic {topic_id}",
                [(topic_id, doc_a, doc_b)],
            ) from None

    def topic_view(self, topic_id: str) -> "PairStoreTopicView":
        return PairStoreTopicView(self, topic_id)


@dataclass(frozen=True)
class PairStoreTopicView:
    """A PairStore scoped to one topic, exposing the two-document sim() shape."""

    store: PairStore
    topic_id: str

    def sim(self, doc_a: str, doc_b: str) -> float:
        return self.store.sim(self.topic_id, doc_a, doc_b)


SimilaritySource = VectorStore | PairStore


@dataclass(frozen=True, slots=True)
class Click:
    """Interaction with one clicked document: dwell seconds and usefulness grade."""

    dwell_seconds: float
    usefulness: int

    def __post_init__(self):
        if self.dwell_seconds < 0:
            raise ValueError(f"dwell_seconds must be >= 0, got {self.dwell_seconds}")
        if self.usefulness < 0:
            raise ValueError(f"usefulness must be >= 0, got {self.usefulness}")


@dataclass(frozen=True)
class SerpInteraction:
    """One SERP impression: the ranked page plus the clicks it received."""

    serp_id: str
    session_id: str
    user_id: str
    task_id: str
    topic_id: str
    serp: list[RankedDoc]
    clicks: Mapping[str, Click]

    def __post_init__(self):
        ranks = [d.rank for d in self.serp]
        if ranks != list(range(1, len(self.serp) + 1)):
            raise ValueError(f"SERP {self.serp_id} ranks are not dense 1..{len(self.serp)}")
        shown = {d.doc_id for d in self.serp}
        if len(shown) != len(self.serp):
            raise ValueError(f"duplicate doc ids in SERP {self.serp_id}")
        for doc_id in self.clicks:
            if doc_id not in shown:
                raise ValueError(
                    f"click on doc {doc_id} absent from SERP {self.serp_id}"
                )


@dataclass(frozen=True)
class InteractionLog:
    """A search log: the SERP interactions of one study, in file order."""

    sessions: list[SerpInteraction]

    def topic_ids(self) -> list[str]:
        """Distinct topic ids, sorted."""
        return sorted({s.topic_id for s in self.sessions})


@dataclass(frozen=True, slots=True)
class InteractionRecord:
    """One (SERP, document) behavioral observation used by the group analysis.

    Unclicked documents are zero-filled: is_clicked False forces dwell and
    usefulness to 0.
    """

    serp_id: str
    doc_id: str
    group: str
    is_clicked: bool
    dwell_seconds: float
    usefulness: int
    rank: int
    task_id: str
    user_id: str

    def __post_init__(self):
        if self.group not in ("target", "control"):
            raise ValueError(f"group must be 'target' or 'control', got {self.group!r}")
        if not self.is_clicked and (self.dwell_seconds != 0 or self.usefulness != 0):
            raise ValueError(
                "unclicked record must have dwell_seconds = 0 and usefulness = 0"
            )
        if self.dwell_seconds < 0:
            raise ValueError(f"dwell_seconds must be >= 0, got {self.dwell_seconds}")
        if self.usefulness < 0:
            raise ValueError(f"usefulness must be >= 0, got {self.usefulness}")
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
