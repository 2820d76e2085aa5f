"""Command-line interface.

Four subcommands: `eval` scores a run (effectiveness + decoy vulnerability),
`decoys` lists detected pairs, `sweep` tables metrics across cutoffs, and
`mine` runs the log-mining pipeline end to end into an output directory.

Exit codes: 0 success, 1 input/validation error (diagnostics on stderr),
2 similarity coverage error (a needed doc or pair is absent).
"""

import argparse
import os
import sys
from pathlib import Path

from . import ingest
from .decoy import detect_decoy_pairs_at_k, identify_controls, identify_targets
from .logmine import derive_thresholds, extract_records, group_stats, log_doc_universe
from .metrics import (
    KNOWN_METRICS,
    MetricConfig,
    evaluate_run,
    sweep,
)
from .model import CoverageError, DecoyConfig, GradeBand, MinGradeGap
from .report import (
    FORMATS,
    emit_comparison,
    emit_pairs,
    emit_records,
    emit_scores,
    emit_serp_pairs,
    emit_sweep,
    emit_thresholds,
)


class _Parser(argparse.ArgumentParser):
    # Usage errors are input errors: exit 1, reserving 2 for coverage gaps.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_source_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--qrels", required=True, metavar="PATH",
                   help="graded relevance judgments (topic iter doc grade)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--vectors", metavar="PATH",
                     help="JSONL doc embeddings; similarity is cosine")
    src.add_argument("--pair-sims", metavar="PATH",
                     help="TSV precomputed similarities (topic doc_a doc_b sim)")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run", required=True, metavar="PATH",
                   help="ranked run in TREC format")
    _add_source_flags(p)


def _add_band_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--s-min", type=float, default=0.6, metavar="R",
                   help="similarity band lower bound (inclusive)")
    p.add_argument("--s-max", type=float, default=0.95, metavar="R",
                   help="similarity band upper bound (exclusive)")
    p.add_argument("--delta-rank", type=int, default=5, metavar="N",
                   help="max rank distance between target and decoy")
    quality = p.add_mutually_exclusive_group()
    quality.add_argument("--rel-band", default="2,1", metavar="T,D",
                         help="quality rule: target grade >= T and decoy grade <= D")
    quality.add_argument("--rel-gap", type=int, default=None, metavar="G",
                         help="quality rule: target grade - decoy grade >= G "
                              "(replaces --rel-band)")


def _add_metric_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phi", type=float, default=0.8, metavar="R",
                   help="RBP persistence")
    p.add_argument("--alpha", type=float, default=0.5, metavar="R",
                   help="LC weight on the vulnerability side")
    p.add_argument("--g-max", type=int, default=3, metavar="N",
                   help="top relevance grade")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=FORMATS, default="tsv",
                   help="table output format")
    p.add_argument("--out", default=None, metavar="PATH",
                   help="output file (standard output when omitted)")
    p.add_argument("--threads", type=int, default=0, metavar="N",
                   help="worker thread cap, 0 means one per core; "
                        "results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="decoyeval",
        description="Evaluate ranked retrieval for effectiveness and "
                    "decoy-effect vulnerability, and mine SERP logs for "
                    "decoy/control interactions.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_eval = sub.add_parser(
        "eval", help="score a run per topic and on average",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_run_flags(p_eval)
    p_eval.add_argument("--cutoffs", default="10,20", metavar="LIST",
                        help="comma-separated cutoffs")
    p_eval.add_argument("--metrics", default="dejavu,ndcg,recall", metavar="LIST",
                        help="comma-separated metrics from: " + ", ".join(KNOWN_METRICS)
                             + " (lc metrics may be spelled lc/ndcg)")
    _add_band_flags(p_eval)
    _add_metric_flags(p_eval)
    _add_output_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_decoys = sub.add_parser(
        "decoys", help="list detected decoy pairs",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_run_flags(p_decoys)
    p_decoys.add_argument("--k", type=int, default=10, metavar="N",
                          help="ranking prefix to scan")
    p_decoys.add_argument("--no-dedup", action="store_true", default=False,
                          help="keep every decoy per target instead of the "
                               "single most similar one")
    _add_band_flags(p_decoys)
    _add_metric_flags(p_decoys)
    _add_output_flags(p_decoys)
    p_decoys.set_defaults(func=cmd_decoys)

    p_sweep = sub.add_parser(
        "sweep", help="mean metrics across a range of cutoffs",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--k-start", type=int, default=10, metavar="N",
                         help="first cutoff")
    p_sweep.add_argument("--k-end", type=int, default=1000, metavar="N",
                         help="last cutoff (inclusive)")
    p_sweep.add_argument("--k-step", type=int, default=10, metavar="N",
                         help="cutoff increment")
    _add_band_flags(p_sweep)
    _add_metric_flags(p_sweep)
    _add_output_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_mine = sub.add_parser(
        "mine", help="mine an interaction log for decoy/control records",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p_mine.add_argument("--logs", required=True, metavar="PATH",
                        help="JSONL interaction log")
    _add_source_flags(p_mine)
    p_mine.add_argument("--s-max", type=float, default=0.95, metavar="R",
                        help="similarity band upper bound (inclusive here)")
    p_mine.add_argument("--rel-gap", type=int, default=2, metavar="G",
                        help="min target-minus-decoy grade gap")
    p_mine.add_argument("--delta-rank", type=int, default=5, metavar="N",
                        help="max rank distance between target and decoy")
    p_mine.add_argument("--s-min-pct", type=float, default=99.0, metavar="P",
                        help="percentile for the band lower bound")
    p_mine.add_argument("--s-control-pct", type=float, default=99.5, metavar="P",
                        help="percentile for the control-matching threshold")
    p_mine.add_argument("--rel-window", type=int, default=2, metavar="W",
                        help="max |grade(control) - grade(target)|")
    p_mine.add_argument("--top-n", type=int, default=10, metavar="N",
                        help="SERP prefix scanned for pairs and controls")
    p_mine.add_argument("--g-max", type=int, default=4, metavar="N",
                        help="top relevance grade in the qrels")
    p_mine.add_argument("--format", choices=FORMATS, default="tsv",
                        help="format for the pair table")
    p_mine.add_argument("--out", required=True, metavar="DIR",
                        help="output directory")
    p_mine.set_defaults(func=cmd_mine)

    return parser


def _parse_cutoffs(text: str) -> list[int]:
    try:
        cutoffs = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"--cutoffs expects comma-separated integers, got {text!r}") from None
    if not cutoffs:
        raise ValueError("--cutoffs is empty")
    return cutoffs


def _parse_metrics(text: str) -> list[str]:
    names = [part.strip().replace("/", "_") for part in text.split(",") if part.strip()]
    if not names:
        raise ValueError("--metrics is empty")
    return names


def _quality_rule(args):
    if args.rel_gap is not None:
        return MinGradeGap(args.rel_gap)
    try:
        t, d = (int(part) for part in args.rel_band.split(","))
    except ValueError:
        raise ValueError(
            f"--rel-band expects two integers T,D, got {args.rel_band!r}"
        ) from None
    return GradeBand(target_min=t, decoy_max=d)


def _decoy_config(args) -> DecoyConfig:
    return DecoyConfig(
        s_min=args.s_min,
        s_max=args.s_max,
        quality=_quality_rule(args),
        delta_rank=args.delta_rank,
        s_max_inclusive=False,
    )


def _load_source(args):
    if args.vectors is not None:
        return ingest.parse_vectors(Path(args.vectors))
    return ingest.parse_pair_sims(Path(args.pair_sims))


def _effective_threads(n: int) -> int:
    if n < 0:
        raise ValueError(f"--threads cannot be negative, got {n}")
    return n if n > 0 else (os.cpu_count() or 1)


def cmd_eval(args) -> int:
    run = ingest.parse_run(Path(args.run))
    qrels = ingest.parse_qrels(Path(args.qrels), g_max=args.g_max)
    source = _load_source(args)
    cutoffs = _parse_cutoffs(args.cutoffs)
    metrics = _parse_metrics(args.metrics)
    cfg = MetricConfig(k=cutoffs[0], g_max=args.g_max, phi=args.phi, alpha=args.alpha)
    evaluations = evaluate_run(
        run, qrels, source, _decoy_config(args), cfg, metrics, cutoffs,
        max_workers=_effective_threads(args.threads),
    )
    emit_scores(evaluations, args.format, args.out)
    return 0


def cmd_decoys(args) -> int:
    run = ingest.parse_run(Path(args.run))
    qrels = ingest.parse_qrels(Path(args.qrels), g_max=args.g_max)
    source = _load_source(args)
    cfg = _decoy_config(args)
    pairs = []
    for topic_id in sorted(run.rankings):
        ranking = run.rankings[topic_id]
        grades = qrels.grades_for(topic_id)
        view = source.topic_view(topic_id)
        pairs.extend(
            detect_decoy_pairs_at_k(
                topic_id, ranking, grades, view, cfg, args.k,
                dedup=not args.no_dedup,
            )
        )
    emit_pairs(pairs, args.format, args.out)
    return 0


def cmd_sweep(args) -> int:
    run = ingest.parse_run(Path(args.run))
    qrels = ingest.parse_qrels(Path(args.qrels), g_max=args.g_max)
    source = _load_source(args)
    cfg = MetricConfig(g_max=args.g_max, phi=args.phi, alpha=args.alpha)
    rows = sweep(
        run, qrels, source, _decoy_config(args), cfg,
        args.k_start, args.k_end, args.k_step,
    )
    emit_sweep(rows, args.format, args.out)
    return 0


def cmd_mine(args) -> int:
    log = ingest.parse_interaction_log(Path(args.logs))
    qrels = ingest.parse_qrels(Path(args.qrels), g_max=args.g_max)
    source = _load_source(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    universe = log_doc_universe(log)
    thresholds = None
    pair_records: list = []
    targets: set[str] = set()
    controls: set[str] = set()
    matched: set[str] = set()
    records: list = []
    if any(len(docs) >= 2 for docs in universe.values()):
        thresholds = derive_thresholds(log, source, args.s_min_pct, args.s_control_pct)
        cfg = DecoyConfig(
            s_min=thresholds.s_min,
            s_max=args.s_max,
            quality=MinGradeGap(args.rel_gap),
            delta_rank=args.delta_rank,
            s_max_inclusive=True,
        )
        pair_records, targets = identify_targets(log, qrels, source, cfg, top_n=args.top_n)
        controls, matched = identify_controls(
            universe, qrels, targets, source, thresholds.s_control,
            rel_window=args.rel_window,
        )
        records = extract_records(log, pair_records, matched, controls, top_n=args.top_n)

    emit_thresholds(thresholds, out_dir / "thresholds.json")
    emit_serp_pairs(pair_records, args.format, out_dir / f"decoy_pairs.{args.format}")
    for name, docs in (("targets", targets),
                       ("controls", controls),
                       ("targets_matched", matched)):
        with open(out_dir / f"{name}.txt", "w", encoding="utf-8") as fh:
            for doc_id in sorted(docs):
                fh.write(doc_id + "\n")
    # Records stay jsonl regardless of --format so they re-parse losslessly.
    emit_records(records, "jsonl", out_dir / "records.jsonl")
    emit_comparison(group_stats(records), out_dir / "group_stats.json")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        # argparse exits itself on usage errors and --help; fold that into
        # the return-code contract so embedders never see SystemExit.
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        return args.func(args)
    except ingest.ParseError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except CoverageError as exc:
        print(f"similarity coverage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
