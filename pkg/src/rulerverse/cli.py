"""Single entry point wiring the pipeline into reproducible, resumable runs.

Every subcommand writes into out/<run_id>/ and embeds the run's config
fingerprint in each artifact; re-running with an unchanged config is
idempotent because judge completions are served from the on-disk cache and
artifact files are rewritten atomically with deterministic content.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import corpus as corpus_mod
from . import metrics, report, ruler, translate, verse
from .corpus import (
    AnnotationRecord,
    CandidateSet,
    Corpus,
    SampleManifest,
    VERSE_CHANNEL,
)
from .errors import EmptyRun, EvalError, MixedFingerprint, UnclassifiedQuestion
from .judge import Judge, JudgeConfig
from .metrics import RatingVector
from .ruler import ItemFailure, PromptOptions

log = logging.getLogger(__name__)

FINGERPRINT_FIELDS = (
    "corpus", "stories", "candidates", "annotations", "rubric", "questions",
    "manifest", "shots_bank",
    "backend", "model", "endpoint", "script", "temperature",
    "cot", "k_shot", "no_rubric", "no_reference", "reference_index",
    "seed", "mapping",
)


def config_fingerprint(args: argparse.Namespace) -> str:
    payload = {}
    for name in FINGERPRINT_FIELDS:
        value = getattr(args, name, None)
        if isinstance(value, list):
            value = sorted(str(v) for v in value)
        elif isinstance(value, Path):
            value = str(value)
        payload[name] = value
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


# -- artifact files: first line is a meta record, then one record per line --

def write_artifact(path: Path, meta: dict, records: Iterable[dict]) -> None:
    rows = [{"_meta": meta}]
    rows.extend(records)
    corpus_mod.write_jsonl(path, rows)


def read_artifact(path: Path) -> tuple[dict, list[dict]]:
    meta: dict = {}
    records: list[dict] = []
    for _, record in corpus_mod.read_jsonl(path):
        if "_meta" in record:
            meta = record["_meta"]
        else:
            records.append(record)
    return meta, records


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    tmp.replace(path)


def write_csv_with_fingerprint(path: Path, fingerprint: str, body: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(f"# fingerprint={fingerprint}\n{body}", encoding="utf-8")
    tmp.replace(path)


# -- shared construction --

class RunContext:
    """Resolved paths, judge, and options for one subcommand invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.fingerprint = config_fingerprint(args)
        self.run_id = args.run_id or self.fingerprint[:12]
        # writers create it on demand; read-only subcommands never touch disk
        self.out_dir = Path(args.out) / self.run_id

    def load_corpus(self) -> Corpus:
        if not self.args.corpus:
            raise EvalError("--corpus is required for this subcommand")
        return corpus_mod.load_corpus(self.args.corpus, self.args.stories)

    def load_candidates(self, corpus: Corpus) -> list[CandidateSet]:
        paths = self.args.candidates or []
        if not paths:
            raise EvalError("--candidates is required for this subcommand")
        return [corpus_mod.load_candidates(p, corpus) for p in paths]

    def judge(self) -> Judge:
        args = self.args
        cache_dir = args.cache_dir or str(Path(args.out) / "judge_cache")
        config = JudgeConfig(
            backend=args.backend,
            model_id=args.model,
            endpoint=args.endpoint or "",
            api_key_env=args.api_key_env,
            script_path=args.script,
            temperature=args.temperature,
            max_retries=args.max_retries,
            timeout=args.timeout,
            cache_dir=cache_dir,
            concurrency_limit=args.jobs or 4,
        )
        return Judge(config)

    def options(self) -> PromptOptions:
        args = self.args
        return PromptOptions(
            use_cot=args.cot,
            k_shot=args.k_shot,
            include_reference=not args.no_reference,
            include_rubric=not args.no_rubric,
            reference_index=args.reference_index,
        )

    def rubric(self) -> ruler.RubricSet:
        if self.args.rubric:
            return ruler.load_rubric(self.args.rubric)
        return ruler.bundled_rubric()

    def manifest(self) -> SampleManifest | None:
        if not self.args.manifest:
            return None
        data = json.loads(Path(self.args.manifest).read_text(encoding="utf-8"))
        return SampleManifest.from_dict(data)

    def meta(self, judge: Judge | None = None, options: PromptOptions | None = None) -> dict:
        meta: dict[str, Any] = {"fingerprint": self.fingerprint, "run_id": self.run_id}
        if judge is not None:
            meta["model_id"] = judge.config.model_id
        if options is not None:
            meta["options"] = options.fingerprint()
        return meta

    def write_summary(
        self,
        name: str,
        judge: Judge | None,
        items_total: int,
        failures: Sequence[ItemFailure],
        extra: dict | None = None,
    ) -> dict:
        summary: dict[str, Any] = {
            "subcommand": name,
            "fingerprint": self.fingerprint,
            "run_id": self.run_id,
            "items_total": items_total,
            "items_failed": len(failures),
            "failures": [f.to_dict() for f in failures],
        }
        if judge is not None:
            summary.update(judge.stats)
        if extra:
            summary.update(extra)
        write_json(self.out_dir / f"{name}_summary.json", summary)
        return summary


# -- subcommands --

def cmd_validate(ctx: RunContext) -> int:
    corpus = ctx.load_corpus()
    result: dict[str, Any] = {
        "stories": corpus.n_stories,
        "paragraphs": corpus.n_paragraphs,
    }
    if ctx.args.candidates:
        coverage = {}
        for path in ctx.args.candidates:
            cands = corpus_mod.load_candidates(path, corpus)
            coverage[cands.system_id] = round(cands.coverage(corpus), 6)
        result["candidates"] = coverage
    if ctx.args.annotations:
        records = corpus_mod.load_annotations(ctx.args.annotations, corpus)
        result["annotations"] = len(records)
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_sample(ctx: RunContext) -> int:
    corpus = ctx.load_corpus()
    story_ids = ctx.args.sample_stories or corpus.story_ids()
    questions = None
    if ctx.args.questions:
        _, records = read_artifact(Path(ctx.args.questions))
        questions = [verse.question_from_record(r) for r in records]
    systems = ctx.args.systems or None
    manifest = corpus_mod.sample_items(
        corpus,
        story_ids,
        n_per_story=ctx.args.n_per_story,
        q_per_item=ctx.args.q_per_item,
        seed=ctx.args.seed,
        questions=questions,
        systems=systems,
    )
    payload = {"fingerprint": ctx.fingerprint, **manifest.to_dict()}
    write_json(ctx.out_dir / "manifest.json", payload)
    print(
        json.dumps(
            {"items": manifest.n_items, "questions": manifest.n_questions}, sort_keys=True
        )
    )
    return 0


def cmd_translate(ctx: RunContext) -> int:
    corpus = ctx.load_corpus()
    spec = translate.TranslationPromptSpec(
        n_shots=ctx.args.shots,
        include_summary=not ctx.args.no_summary,
        granularity=ctx.args.granularity,
        bank_story_ids=tuple(ctx.args.bank_stories or ()),
        require_dialogue_mix=not ctx.args.no_dialogue_mix,
    )
    judge = ctx.judge()
    result = translate.translate_corpus(
        corpus, spec, judge, system_id=ctx.args.system_id, jobs=ctx.args.jobs
    )
    result.candidates.provenance["fingerprint"] = ctx.fingerprint
    out_path = ctx.out_dir / f"candidates_{_sanitize(result.candidates.system_id)}.jsonl"
    corpus_mod.save_candidates(result.candidates, out_path)
    ctx.write_summary(
        "translate", judge, corpus.n_paragraphs, result.failures,
        extra={"system_id": result.candidates.system_id, "output": str(out_path)},
    )
    return 0


def cmd_ruler(ctx: RunContext) -> int:
    corpus = ctx.load_corpus()
    candidate_sets = ctx.load_candidates(corpus)
    manifest = ctx.manifest()
    if manifest is not None:
        candidate_sets = [c.subset(manifest.keys()) for c in candidate_sets]
    rubric = ctx.rubric()
    options = ctx.options()
    judge = ctx.judge()
    shots: list[ruler.ScoredExample] = []
    if ctx.args.shots_bank:
        shots = ruler.load_example_bank(ctx.args.shots_bank)

    all_cards: list[ruler.RubricScorecard] = []
    failures: list[ItemFailure] = []
    total = 0
    for cands in candidate_sets:
        total += len(cands.translations)
        result = ruler.score_candidate(
            corpus, cands, rubric, options, judge, shots=shots, jobs=ctx.args.jobs
        )
        all_cards.extend(result.scorecards)
        failures.extend(result.failures)

    options_fp = options.fingerprint()
    records = [
        ruler.scorecard_to_record(card, options_fp, judge.config.model_id)
        for card in sorted(all_cards, key=lambda c: (c.system_id, c.story_id, c.index))
    ]
    write_artifact(ctx.out_dir / "scorecards.jsonl", ctx.meta(judge, options), records)
    audit = ruler.audit_honorifics(all_cards, corpus)
    write_json(
        ctx.out_dir / "honorifics_audit.json",
        {"fingerprint": ctx.fingerprint, **audit.to_dict()},
    )
    ctx.write_summary("ruler", judge, total, failures)
    return 0


def _restrict_pairs(corpus: Corpus, manifest: SampleManifest | None):
    pairs = list(corpus.pairs())
    if manifest is None:
        return pairs
    wanted = set(manifest.keys())
    return [p for p in pairs if (p.story_id, p.index) in wanted]


def cmd_verse_gen(ctx: RunContext) -> int:
    corpus = ctx.load_corpus()
    manifest = ctx.manifest()
    pairs = _restrict_pairs(corpus, manifest)
    judge = ctx.judge()

    def work(pair):
        summary = corpus.story(pair.story_id).summary
        try:
            return verse.generate_questions(pair, summary, ctx.args.n_questions, judge)
        except EvalError as exc:
            return ItemFailure(
                system_id="", story_id=pair.story_id, index=pair.index,
                stage="verse:gen", error=type(exc).__name__, message=str(exc),
            )

    workers = ctx.args.jobs or judge.config.concurrency_limit
    if workers <= 1 or len(pairs) <= 1:
        outcomes = [work(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, pairs))

    questions: list[verse.VerseQuestion] = []
    failures: list[ItemFailure] = []
    for outcome in outcomes:
        if isinstance(outcome, ItemFailure):
            failures.append(outcome)
        else:
            questions.extend(outcome)
    questions.sort(key=lambda q: (q.story_id, q.index, q.question_id))
    write_artifact(
        ctx.out_dir / "questions.jsonl",
        ctx.meta(judge),
        [verse.question_to_record(q) for q in questions],
    )
    ctx.write_summary(
        "verse_gen", judge, len(pairs), failures, extra={"questions": len(questions)}
    )
    return 0


def _questions_path(ctx: RunContext) -> Path:
    if ctx.args.questions:
        return Path(ctx.args.questions)
    return ctx.out_dir / "questions.jsonl"


def cmd_verse_classify(ctx: RunContext) -> int:
    path = _questions_path(ctx)
    meta, records = read_artifact(path)
    questions = [verse.question_from_record(r) for r in records]
    judge = ctx.judge()

    def work(q: verse.VerseQuestion):
        if q.category is not None:
            return q
        try:
            q.category = verse.classify_question(q, judge)
            return q
        except EvalError as exc:
            return ItemFailure(
                system_id="", story_id=q.story_id, index=q.index,
                stage="verse:classify", error=type(exc).__name__,
                message=f"{q.question_id}: {exc}",
            )

    workers = ctx.args.jobs or judge.config.concurrency_limit
    if workers <= 1 or len(questions) <= 1:
        outcomes = [work(q) for q in questions]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, questions))

    classified: list[verse.VerseQuestion] = []
    failures: list[ItemFailure] = []
    for outcome in outcomes:
        if isinstance(outcome, ItemFailure):
            failures.append(outcome)
        else:
            classified.append(outcome)
    meta = meta or ctx.meta(judge)
    write_artifact(path, meta, [verse.question_to_record(q) for q in classified])
    ctx.write_summary(
        "verse_classify", judge, len(questions), failures,
        extra={"classified": len(classified)},
    )
    return 0


def cmd_verse_grade(ctx: RunContext) -> int:
    corpus = ctx.load_corpus()
    candidate_sets = ctx.load_candidates(corpus)
    manifest = ctx.manifest()
    if manifest is not None:
        candidate_sets = [c.subset(manifest.keys()) for c in candidate_sets]
    q_meta, records = read_artifact(_questions_path(ctx))
    questions = [verse.question_from_record(r) for r in records]
    unclassified = [q.question_id for q in questions if q.category is None]
    if unclassified:
        raise UnclassifiedQuestion(
            f"{len(unclassified)} questions lack categories; run `verse classify` first"
        )
    if manifest is not None:
        allowed = {qid for item in manifest.items for qid in item.question_ids}
        if allowed:
            questions = [q for q in questions if q.question_id in allowed]
    options = ctx.options()
    judge = ctx.judge()

    jobs: list[tuple[CandidateSet, verse.VerseQuestion]] = []
    for cands in candidate_sets:
        for q in questions:
            if (q.story_id, q.index) in cands.translations:
                jobs.append((cands, q))

    def work(item: tuple[CandidateSet, verse.VerseQuestion]):
        cands, q = item
        pair = corpus.pair(q.story_id, q.index)
        try:
            return verse.grade_question(
                q, pair, cands.translations[(q.story_id, q.index)], options, judge,
                system_id=cands.system_id,
                summary=corpus.story(q.story_id).summary,
            )
        except EvalError as exc:
            return ItemFailure(
                system_id=cands.system_id, story_id=q.story_id, index=q.index,
                stage="verse:grade", error=type(exc).__name__,
                message=f"{q.question_id}: {exc}",
            )

    workers = ctx.args.jobs or judge.config.concurrency_limit
    if workers <= 1 or len(jobs) <= 1:
        outcomes = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, jobs))

    grades: list[verse.VerseGrade] = []
    failures: list[ItemFailure] = []
    for outcome in outcomes:
        if isinstance(outcome, ItemFailure):
            failures.append(outcome)
        else:
            grades.append(outcome)
    grades.sort(key=lambda g: (g.system_id, g.question_id))
    options_fp = options.fingerprint()
    write_artifact(
        ctx.out_dir / "grades.jsonl",
        ctx.meta(judge, options),
        [verse.grade_to_record(g, options_fp, judge.config.model_id) for g in grades],
    )
    ctx.write_summary(
        "verse_grade", judge, len(jobs), failures, extra={"grades": len(grades)}
    )
    return 0


def _vectors_by_channel(
    records: Sequence[AnnotationRecord],
) -> dict[str, list[RatingVector]]:
    by_channel: dict[str, dict[str, dict[str, int]]] = {}
    for record in records:
        by_channel.setdefault(record.channel, {}).setdefault(record.rater_id, {})[
            record.item_id()
        ] = record.score
    out: dict[str, list[RatingVector]] = {}
    for channel in sorted(by_channel):
        raters = []
        for rater_id in sorted(by_channel[channel]):
            scores = by_channel[channel][rater_id]
            ids = tuple(sorted(scores))
            raters.append(
                RatingVector(ids=ids, scores=tuple(scores[i] for i in ids), rater_id=rater_id)
            )
        out[channel] = raters
    return out


def cmd_agree(ctx: RunContext) -> int:
    corpus = ctx.load_corpus()
    if not ctx.args.annotations:
        raise EvalError("--annotations is required for `agree`")
    human = _vectors_by_channel(corpus_mod.load_annotations(ctx.args.annotations, corpus))
    model: dict[str, list[RatingVector]] = {}
    if ctx.args.model_annotations:
        model = _vectors_by_channel(
            corpus_mod.load_annotations(ctx.args.model_annotations, corpus)
        )
    level = ctx.args.level

    agreement_reports: dict[str, metrics.AgreementReport] = {}
    for channel, raters in human.items():
        label_set = list(range(1, 4)) if channel == VERSE_CHANNEL else list(range(1, 6))
        agreement = metrics.compute_agreement(raters, level=level)
        agreement_reports[channel] = agreement
        payload: dict[str, Any] = {
            "fingerprint": ctx.fingerprint,
            "channel": channel,
            "level": level,
            "inter_annotator": agreement.to_dict(),
        }
        classification = metrics.pairwise_classification(raters, label_set)
        payload["classification"] = {
            "mean_accuracy": classification.mean_accuracy,
            "mean_per_label_f1": {str(k): v for k, v in classification.mean_per_label_f1.items()},
        }
        for rater_a, rater_b, rep in classification.per_pair:
            name = f"confusion_{channel}_{_sanitize(rater_a)}_vs_{_sanitize(rater_b)}.csv"
            write_csv_with_fingerprint(
                ctx.out_dir / name, ctx.fingerprint, report.confusion_to_csv(rep)
            )
        if channel in model:
            versus = metrics.cross_pairwise_classification(raters, model[channel], label_set)
            cross_tau = metrics.cross_pairwise_agreement(raters, model[channel], metrics.kendall_tau_b)
            cross_rho = metrics.cross_pairwise_agreement(raters, model[channel], metrics.spearman_rho)
            cross_mse = metrics.cross_pairwise_agreement(raters, model[channel], metrics.mse)
            payload["human_vs_model"] = {
                "tau": cross_tau.mean,
                "rho": cross_rho.mean,
                "mse": cross_mse.mean,
                "mean_accuracy": versus.mean_accuracy,
                "mean_per_label_f1": {str(k): v for k, v in versus.mean_per_label_f1.items()},
            }
            for rater_a, rater_b, rep in versus.per_pair:
                name = f"confusion_{channel}_{_sanitize(rater_a)}_vs_{_sanitize(rater_b)}.csv"
                write_csv_with_fingerprint(
                    ctx.out_dir / name, ctx.fingerprint, report.confusion_to_csv(rep)
                )
        write_json(ctx.out_dir / f"agreement_{channel}.json", payload)

    write_csv_with_fingerprint(
        ctx.out_dir / "agreement.csv", ctx.fingerprint, report.agreement_to_csv(agreement_reports)
    )
    ctx.write_summary(
        "agree", None, sum(len(r) for r in human.values()), [],
        extra={"channels": sorted(human)},
    )
    return 0


def _check_fingerprints(metas: dict[str, dict]) -> str:
    prints = {name: meta.get("fingerprint") for name, meta in metas.items() if meta}
    distinct = {fp for fp in prints.values() if fp}
    if len(distinct) > 1:
        raise MixedFingerprint(f"input artifacts disagree: {prints}")
    return next(iter(distinct), "")


def cmd_report(ctx: RunContext) -> int:
    scorecards_path = Path(ctx.args.scorecards) if ctx.args.scorecards else ctx.out_dir / "scorecards.jsonl"
    grades_path = Path(ctx.args.grades) if ctx.args.grades else ctx.out_dir / "grades.jsonl"
    questions_path = _questions_path(ctx)

    metas: dict[str, dict] = {}
    scorecards: list[ruler.RubricScorecard] = []
    grades: list[verse.VerseGrade] = []
    questions: list[verse.VerseQuestion] = []
    if scorecards_path.exists():
        meta, records = read_artifact(scorecards_path)
        metas["scorecards"] = meta
        scorecards = [ruler.scorecard_from_record(r) for r in records]
    if questions_path.exists():
        meta, records = read_artifact(questions_path)
        metas["questions"] = meta
        questions = [verse.question_from_record(r) for r in records]
    if grades_path.exists():
        meta, records = read_artifact(grades_path)
        metas["grades"] = meta
        grades = [verse.grade_from_record(r) for r in records]

    if not scorecards and not grades:
        raise EmptyRun("no completed scores found; run `ruler` or `verse grade` first")
    fingerprint = _check_fingerprints(metas) or ctx.fingerprint

    table = report.aggregate_table(scorecards, grades, questions, mapping=ctx.args.mapping)
    if ctx.args.baseline:
        with open(ctx.args.baseline, newline="", encoding="utf-8") as f:
            report.append_baseline_columns(table, list(csv.DictReader(f)))
    # failed items are excluded from every cell; surface their counts as footnotes
    for stage in ("ruler", "verse_gen", "verse_classify", "verse_grade"):
        summary_path = ctx.out_dir / f"{stage}_summary.json"
        if summary_path.exists():
            stage_summary = json.loads(summary_path.read_text(encoding="utf-8"))
            table.notes[f"{stage}_failed"] = stage_summary.get("items_failed", 0)

    write_csv_with_fingerprint(
        ctx.out_dir / "aggregate.csv", fingerprint, report.table_to_csv(table)
    )
    write_json(
        ctx.out_dir / "aggregate.json",
        {"fingerprint": fingerprint, **report.table_to_dict(table)},
    )

    axis_min = ctx.args.axis_min
    if grades:
        series = []
        for system in table.systems:
            cells = table.verse_categories[system]
            if all(cell.value is None for cell in cells.values()):
                continue
            values = [
                cells[c].value if cells[c].value is not None else axis_min
                for c in verse.CATEGORIES
            ]
            series.append((system, values))
        if series:
            svg = report.radar_svg(list(verse.CATEGORIES), series, axis_min=axis_min)
            (ctx.out_dir / "radar_scores.svg").write_bytes(svg)
    if questions:
        share_series = []
        for story_id in sorted({q.story_id for q in questions}):
            story_questions = [q for q in questions if q.story_id == story_id]
            aggregates = verse.aggregate_categories(story_questions, [])
            share_series.append(
                (story_id, [aggregates[c].question_share for c in verse.CATEGORIES])
            )
        svg = report.radar_svg(list(verse.CATEGORIES), share_series, axis_min=0.0)
        (ctx.out_dir / "radar_question_shares.svg").write_bytes(svg)
    if ctx.args.radar_per_story and grades:
        for story_id in sorted({q.story_id for q in questions}):
            story_questions = [q for q in questions if q.story_id == story_id]
            story_qids = {q.question_id for q in story_questions}
            series = []
            for system in table.systems:
                story_grades = [
                    g for g in grades
                    if g.system_id == system and g.question_id in story_qids
                ]
                if not story_grades:
                    continue
                aggregates = verse.aggregate_categories(
                    story_questions, story_grades, ctx.args.mapping
                )
                series.append(
                    (
                        system,
                        [
                            aggregates[c].mean_score_percent
                            if aggregates[c].mean_score_percent is not None
                            else axis_min
                            for c in verse.CATEGORIES
                        ],
                    )
                )
            if series:
                svg = report.radar_svg(list(verse.CATEGORIES), series, axis_min=axis_min)
                name = f"radar_scores_{_sanitize(story_id)}.svg"
                (ctx.out_dir / name).write_bytes(svg)

    notes = {
        "n_scorecards": len(scorecards),
        "n_grades": len(grades),
        "n_questions": len(questions),
    }
    write_json(ctx.out_dir / "report_manifest.json", {"fingerprint": fingerprint, **notes})
    return 0


# -- parser --

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file mirroring flags; flags override it")
    parser.add_argument("--corpus", help="paragraph file (JSONL)")
    parser.add_argument("--stories", help="story metadata file (JSONL)")
    parser.add_argument("--candidates", nargs="*", help="candidate files, one per system")
    parser.add_argument("--annotations", help="annotation records file")
    parser.add_argument("--rubric", help="rubric data file (default: bundled example)")
    parser.add_argument("--questions", help="question bank file")
    parser.add_argument("--manifest", help="sample manifest restricting items")
    parser.add_argument("--shots-bank", help="worked-example bank for k-shot prompts")
    parser.add_argument("--backend", choices=["live", "mock"], default="mock")
    parser.add_argument("--model", default="mock-judge")
    parser.add_argument("--endpoint", help="chat-completions URL for the live backend")
    parser.add_argument("--api-key-env", default="JUDGE_API_KEY")
    parser.add_argument("--script", help="mock script path")
    parser.add_argument("--temperature", type=float, default=0.0)
    parser.add_argument("--max-retries", type=int, default=3)
    parser.add_argument("--timeout", type=float, default=60.0)
    parser.add_argument("--k-shot", type=int, choices=list(ruler.K_SHOT_CHOICES), default=0)
    parser.add_argument("--cot", action="store_true", help="reason-then-score prompting")
    parser.add_argument("--no-rubric", action="store_true", help="omit the rubric block")
    parser.add_argument("--no-reference", action="store_true", help="omit the reference block")
    parser.add_argument("--reference-index", type=int, default=0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, help="worker bound (default: judge limit)")
    parser.add_argument("--out", default="out", help="output root directory")
    parser.add_argument("--run-id", help="default: config fingerprint prefix")
    parser.add_argument("--cache-dir", help="judge cache (default: <out>/judge_cache)")
    parser.add_argument("--mapping", choices=list(report.MAPPINGS), default="minmax")


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="rulerverse",
        description="Two-step literary translation evaluation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    leaves: list[argparse.ArgumentParser] = []

    def leaf(name: str, parent: Any = sub, **kwargs) -> argparse.ArgumentParser:
        p = parent.add_parser(name, **kwargs)
        _add_common(p)
        leaves.append(p)
        return p

    leaf("validate", help="check corpus, candidate, and annotation files")

    p_sample = leaf("sample", help="draw a seeded evaluation sample")
    p_sample.add_argument("--sample-stories", nargs="*", help="story ids (default: all)")
    p_sample.add_argument("--n-per-story", type=int, required=True)
    p_sample.add_argument("--q-per-item", type=int, default=0)
    p_sample.add_argument("--systems", nargs="*", help="assign each item one system id")

    p_translate = leaf("translate", help="generate candidate translations")
    p_translate.add_argument("--shots", type=int, default=5)
    p_translate.add_argument("--no-summary", action="store_true")
    p_translate.add_argument("--granularity", choices=list(translate.GRANULARITIES), default="paragraph")
    p_translate.add_argument("--bank-stories", nargs="*", help="few-shot source stories")
    p_translate.add_argument("--no-dialogue-mix", action="store_true")
    p_translate.add_argument("--system-id", help="default: judge model id")

    leaf("ruler", help="rubric-score candidates on the four criteria")

    p_verse = sub.add_parser("verse", help="verification-question pipeline")
    verse_sub = p_verse.add_subparsers(dest="verse_command", required=True)
    p_gen = leaf("gen", parent=verse_sub, help="generate questions per paragraph")
    p_gen.add_argument("--n-questions", type=int, default=verse.DEFAULT_N_QUESTIONS)
    leaf("classify", parent=verse_sub, help="assign each question a category")
    leaf("grade", parent=verse_sub, help="grade candidates against questions")

    p_agree = leaf("agree", help="agreement and classification reports")
    p_agree.add_argument("--model-annotations", help="model scores in annotation format")
    p_agree.add_argument("--level", choices=list(metrics.ALPHA_LEVELS), default="ordinal")

    p_report = leaf("report", help="aggregate tables and radar charts")
    p_report.add_argument("--scorecards", help="default: <out>/<run>/scorecards.jsonl")
    p_report.add_argument("--grades", help="default: <out>/<run>/grades.jsonl")
    p_report.add_argument("--baseline", help="CSV of external metric scores to append")
    p_report.add_argument("--axis-min", type=float, default=0.0)
    p_report.add_argument("--radar-per-story", action="store_true")

    return parser, leaves


def _apply_config_file(argv: list[str], parser: argparse.ArgumentParser, leaves: list[argparse.ArgumentParser]) -> None:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    data = json.loads(Path(known.config).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise EvalError("config file must hold a JSON object of flag values")
    valid = set()
    for p in leaves:
        valid.update(a.dest for a in p._actions)
    unknown = sorted(set(data) - valid)
    if unknown:
        raise EvalError(f"unknown config keys: {unknown}")
    for p in leaves:
        p.set_defaults(**{k: v for k, v in data.items() if k in {a.dest for a in p._actions}})


COMMANDS = {
    "validate": cmd_validate,
    "sample": cmd_sample,
    "translate": cmd_translate,
    "ruler": cmd_ruler,
    "agree": cmd_agree,
    "report": cmd_report,
}

VERSE_COMMANDS = {
    "gen": cmd_verse_gen,
    "classify": cmd_verse_classify,
    "grade": cmd_verse_grade,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser, leaves = build_parser()
    try:
        _apply_config_file(argv, parser, leaves)
        args = parser.parse_args(argv)
        ctx = RunContext(args)
        if args.command == "verse":
            handler = VERSE_COMMANDS[args.verse_command]
        else:
            handler = COMMANDS[args.command]
        return handler(ctx)
    except EvalError as exc:
        print(json.dumps(exc.payload(), sort_keys=True), file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
