"""Parsers and writers for every on-disk format the toolkit consumes.

All parsers are single-pass and total: they either return a fully valid model
value or raise ParseError carrying line-precise diagnostics, never a partially
populated value. Input is UTF-8; LF and CRLF line endings are both accepted.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (
    Click,
    InteractionLog,
    InteractionRecord,
    PairStore,
    Qrels,
    RankedDoc,
    RunList,
    SerpInteraction,
    VectorStore,
)

logger = logging.getLogger(__name__)

PathLike = str | Path


@dataclass(frozen=True, slots=True)
class ParseDiagnostic:
    """One parse problem, pinned to a 1-based line of a file."""

    file: str
    line: int
    message: str

    def __post_init__(self):
        if self.line < 1:
            raise ValueError(f"diagnostic line must be >= 1, got {self.line}")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}: {self.message}"


class ParseError(Exception):
    """Raised when a file cannot be parsed; carries every diagnostic found."""

    def __init__(self, path: PathLike, diagnostics: list[ParseDiagnostic]):
        self.path = str(path)
        self.diagnostics = list(diagnostics)
        shown = "\n".join(str(d) for d in self.diagnostics[:10])
        if len(self.diagnostics) > 10:
            shown += f"\n... and {len(self.diagnostics) - 10} more"
        super().__init__(f"{len(self.diagnostics)} parse error(s) in {self.path}:\n{shown}")


def parse_run(path: PathLike) -> RunList:
    """Parse a TREC-layout run file: `topic_id Q0 doc_id rank score run_tag`.

    Ordering authority is the score column (descending, ties broken by
    ascending doc_id); ranks are then re-normalized to 1..n. The on-disk rank
    column is kept as RankedDoc.source_rank for diagnostics only.
    """
    diags: list[ParseDiagnostic] = []
    name = str(path)
    # per topic: (negated score, doc_id, source rank) so plain tuple sort
    # yields score-descending with doc_id ascending tie-break
    topics: dict[str, list[tuple[float, str, int]]] = {}
    first_line: dict[tuple[str, str], int] = {}
    run_tag = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                diags.append(ParseDiagnostic(name, lineno, f"expected 6 fields, got {len(parts)}"))
                continue
            topic_id, q0, doc_id, rank_s, score_s, tag = parts
            if q0.lower() != "q0":
                diags.append(ParseDiagnostic(name, lineno, f"expected literal Q0, got {q0!r}"))
                continue
            try:
                source_rank = int(rank_s)
            except ValueError:
                diags.append(ParseDiagnostic(name, lineno, f"non-numeric rank {rank_s!r}"))
                continue
            try:
                score = float(score_s)
            except ValueError:
                diags.append(ParseDiagnostic(name, lineno, f"non-numeric score {score_s!r}"))
                continue
            if math.isnan(score):
                diags.append(ParseDiagnostic(name, lineno, "score is NaN"))
                continue
            key = (topic_id, doc_id)
            seen = first_line.get(key)
            if seen is not None:
                diags.append(ParseDiagnostic(
                    name, lineno,
                    f"duplicate (topic, doc) ({topic_id}, {doc_id}), first on line {seen}",
                ))
                continue
            first_line[key] = lineno
            if run_tag is None:
                run_tag = tag
            topics.setdefault(topic_id, []).append((-score, doc_id, source_rank))
    if diags:
        raise ParseError(path, diags)
    if not topics:
        raise ParseError(path, [ParseDiagnostic(name, 1, "run file has no ranked lines")])
    rankings: dict[str, list[RankedDoc]] = {}
    for topic_id, rows in topics.items():
        rows.sort()
        rankings[topic_id] = [
            RankedDoc(doc_id, i + 1, -neg_score, source_rank)
            for i, (neg_score, doc_id, source_rank) in enumerate(rows)
        ]
    return RunList(run_tag or "", rankings)


def write_run(run: RunList, path: PathLike) -> None:
    """Write a RunList back to the TREC run layout, one doc per line.

    Scores are printed with repr so that write -> parse round-trips exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for topic_id, docs in run.rankings.items():
            for d in docs:
                fh.write(f"{topic_id} Q0 {d.doc_id} {d.rank} {d.score!r} {run.run_tag}\n")


def parse_qrels(path: PathLike, g_max: int) -> Qrels:
    """Parse a qrels file: `topic_id iteration doc_id grade`.

    Grades outside [0, g_max] are rejected. A duplicate (topic, doc) judgment
    with a conflicting grade is an error; an identical duplicate is accepted
    with a warning.
    """
    diags: list[ParseDiagnostic] = []
    name = str(path)
    judgments: dict[str, dict[str, int]] = {}
    first_line: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                diags.append(ParseDiagnostic(name, lineno, f"expected 4 fields, got {len(parts)}"))
                continue
            topic_id, _iteration, doc_id, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError:
                diags.append(ParseDiagnostic(name, lineno, f"non-integer grade {grade_s!r}"))
                continue
            if not 0 <= grade <= g_max:
                diags.append(ParseDiagnostic(
                    name, lineno, f"grade out of range: {grade} not in [0, {g_max}]"
                ))
                continue
            key = (topic_id, doc_id)
            seen = first_line.get(key)
            if seen is not None:
                if judgments[topic_id][doc_id] != grade:
                    diags.append(ParseDiagnostic(
                        name, lineno,
                        f"conflicting grade for ({topic_id}, {doc_id}): "
                        f"{judgments[topic_id][doc_id]} on line {seen}, {grade} here",
                    ))
                else:
                    logger.warning(
                        "%s:%d: duplicate judgment for (%s, %s) with equal grade %d",
                        name, lineno, topic_id, doc_id, grade,
                    )
                continue
            first_line[key] = lineno
            judgments.setdefault(topic_id, {})[doc_id] = grade
    if diags:
        raise ParseError(path, diags)
    return Qrels(g_max, judgments)


def parse_vectors(path: PathLike) -> VectorStore:
    """Parse line-delimited `{"doc_id": ..., "vec": [...]}` records.

    Vectors are read as 64-bit floats regardless of on-disk precision; all
    records must share one dimension and have nonzero norm.
    """
    diags: list[ParseDiagnostic] = []
    name = str(path)
    vectors: dict[str, np.ndarray] = {}
    dim = None
    dim_line = None
    doc_line: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                diags.append(ParseDiagnostic(name, lineno, f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(rec, dict) or "doc_id" not in rec or "vec" not in rec:
                diags.append(ParseDiagnostic(name, lineno, "record must have doc_id and vec fields"))
                continue
            doc_id = rec["doc_id"]
            if not isinstance(doc_id, str):
                diags.append(ParseDiagnostic(name, lineno, f"doc_id must be a string, got {doc_id!r}"))
                continue
            try:
                vec = np.asarray(rec["vec"], dtype=np.float64)
            except (TypeError, ValueError):
                diags.append(ParseDiagnostic(name, lineno, "vec must be an array of numbers"))
                continue
            if vec.ndim != 1 or vec.shape[0] == 0:
                diags.append(ParseDiagnostic(name, lineno, "vec must be a non-empty flat array"))
                continue
            if doc_id in doc_line:
                diags.append(ParseDiagnostic(
                    name, lineno,
                    f"duplicate vector for doc {doc_id}, first on line {doc_line[doc_id]}",
                ))
                continue
            if dim is None:
                dim, dim_line = vec.shape[0], lineno
            elif vec.shape[0] != dim:
                diags.append(ParseDiagnostic(
                    name, lineno,
                    f"dimension mismatch: {vec.shape[0]} here vs {dim} on line {dim_line}",
                ))
                continue
            if not np.any(vec):
                diags.append(ParseDiagnostic(name, lineno, f"zero-norm vector for doc {doc_id}"))
                continue
            doc_line[doc_id] = lineno
            vectors[doc_id] = vec
    if not diags and not vectors:
        diags.append(ParseDiagnostic(name, 1, "no vector records in file"))
    if diags:
        raise ParseError(path, diags)
    return VectorStore(vectors)


def parse_pair_sims(path: PathLike) -> PairStore:
    """Parse a TSV of precomputed similarities: topic, doc_a, doc_b, similarity.

    Pairs are unordered within a topic; re-declaring a pair with a different
    value is an error, an identical re-declaration is accepted.
    """
    diags: list[ParseDiagnostic] = []
    name = str(path)
    sims: dict[tuple[str, str, str], float] = {}
    first_line: dict[tuple[str, str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            row = line.rstrip("\n")
            if not row.strip():
                continue
            parts = row.split("\t")
            if len(parts) != 4:
                diags.append(ParseDiagnostic(
                    name, lineno, f"expected 4 tab-separated fields, got {len(parts)}"
                ))
                continue
            topic_id, doc_a, doc_b, sim_s = parts
            try:
                sim = float(sim_s)
            except ValueError:
                diags.append(ParseDiagnostic(name, lineno, f"non-numeric similarity {sim_s!r}"))
                continue
            if not -1.0 - 1e-6 <= sim <= 1.0 + 1e-6:
                diags.append(ParseDiagnostic(
                    name, lineno, f"similarity {sim} outside [-1, 1]"
                ))
                continue
            key = (topic_id, doc_a, doc_b) if doc_a <= doc_b else (topic_id, doc_b, doc_a)
            seen = first_line.get(key)
            if seen is not None:
                if sims[key] != sim:
                    diags.append(ParseDiagnostic(
                        name, lineno,
                        f"conflicting similarity for ({doc_a}, {doc_b}) in topic {topic_id}: "
                        f"{sims[key]} on line {seen}, {sim} here",
                    ))
                continue
            first_line[key] = lineno
            sims[key] = sim
    if diags:
        raise ParseError(path, diags)
    return PairStore(sims)


def parse_interaction_log(path: PathLike) -> InteractionLog:
    """Parse a line-delimited SERP interaction log.

    Each record is an object with serp_id, session_id, user_id, task_id,
    topic_id, serp (ordered array of {doc_id, rank}) and clicks (array of
    {doc_id, dwell_seconds, usefulness}). SERP ranks are re-normalized to the
    array order; clicked docs must appear on the SERP.
    """
    diags: list[ParseDiagnostic] = []
    name = str(path)
    sessions: list[SerpInteraction] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                diags.append(ParseDiagnostic(name, lineno, f"invalid JSON: {exc.msg}"))
                continue
            problem = _interaction_problem(rec)
            if problem is not None:
                diags.append(ParseDiagnostic(name, lineno, problem))
                continue
            serp_id = str(rec["serp_id"])
            serp = []
            shown = set()
            for i, entry in enumerate(rec["serp"]):
                doc_id = str(entry["doc_id"])
                if doc_id in shown:
                    diags.append(ParseDiagnostic(
                        name, lineno, f"SERP {serp_id}: duplicate doc {doc_id}"
                    ))
                    break
                shown.add(doc_id)
                serp.append(RankedDoc(doc_id, i + 1, 0.0, int(entry["rank"])))
            else:
                clicks: dict[str, Click] = {}
                click_problem = None
                for c in rec["clicks"]:
                    doc_id = str(c["doc_id"])
                    if doc_id not in shown:
                        click_problem = f"SERP {serp_id}: click on doc {doc_id} absent from SERP"
                        break
                    dwell = float(c["dwell_seconds"])
                    if dwell < 0:
                        click_problem = f"SERP {serp_id}: negative dwell {dwell} on doc {doc_id}"
                        break
                    usefulness = int(c["usefulness"])
                    if usefulness < 0:
                        click_problem = f"SERP {serp_id}: negative usefulness on doc {doc_id}"
                        break
                    clicks[doc_id] = Click(dwell, usefulness)
                if click_problem is not None:
                    diags.append(ParseDiagnostic(name, lineno, click_problem))
                    continue
                sessions.append(SerpInteraction(
                    serp_id=serp_id,
                    session_id=str(rec["session_id"]),
                    user_id=str(rec["user_id"]),
                    task_id=str(rec["task_id"]),
                    topic_id=str(rec["topic_id"]),
                    serp=serp,
                    clicks=clicks,
                ))
    if diags:
        raise ParseError(path, diags)
    return InteractionLog(sessions)


def _interaction_problem(rec) -> str | None:
    """Shape check for one interaction record; returns a message or None."""
    if not isinstance(rec, dict):
        return "record must be an object"
    for field_name in ("serp_id", "session_id", "user_id", "task_id", "topic_id"):
        if field_name not in rec:
            return f"missing field {field_name}"
    if not isinstance(rec.get("serp"), list):
        return "serp must be an array of {doc_id, rank}"
    for entry in rec["serp"]:
        if not isinstance(entry, dict) or "doc_id" not in entry or "rank" not in entry:
            return "serp entries must have doc_id and rank"
    if not isinstance(rec.get("clicks"), list):
        return "clicks must be an array of {doc_id, dwell_seconds, usefulness}"
    for c in rec["clicks"]:
        if not isinstance(c, dict) or not {"doc_id", "dwell_seconds", "usefulness"} <= c.keys():
            return "click entries must have doc_id, dwell_seconds and usefulness"
        if not isinstance(c["dwell_seconds"], (int, float)):
            return "dwell_seconds must be a number"
        if not isinstance(c["usefulness"], int):
            return "usefulness must be an integer"
    return None


def parse_records(path: PathLike) -> list[InteractionRecord]:
    """Parse line-delimited InteractionRecord objects, as written by the
    report module. Field names match InteractionRecord exactly."""
    diags: list[ParseDiagnostic] = []
    name = str(path)
    records: list[InteractionRecord] = []
    fields = {
        "serp_id", "doc_id", "group", "is_clicked", "dwell_seconds",
        "usefulness", "rank", "task_id", "user_id",
    }
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                diags.append(ParseDiagnostic(name, lineno, f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(rec, dict) or set(rec) != fields:
                diags.append(ParseDiagnostic(name, lineno, "record fields do not match InteractionRecord"))
                continue
            try:
                records.append(InteractionRecord(
                    serp_id=str(rec["serp_id"]),
                    doc_id=str(rec["doc_id"]),
                    group=str(rec["group"]),
                    is_clicked=bool(rec["is_clicked"]),
                    dwell_seconds=float(rec["dwell_seconds"]),
                    usefulness=int(rec["usefulness"]),
                    rank=int(rec["rank"]),
                    task_id=str(rec["task_id"]),
                    user_id=str(rec["user_id"]),
                ))
            except (ValueError, TypeError) as exc:
                diags.append(ParseDiagnostic(name, lineno, str(exc)))
    if diags:
        raise ParseError(path, diags)
    return records
