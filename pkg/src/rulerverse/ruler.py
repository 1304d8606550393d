"""Rubric-based Likert scoring of candidate translations on four criteria.

Each paragraph costs one judge call per criterion.  Prompts are assembled from
fixed, individually toggleable sections so that flipping one option changes
exactly one block of the prompt, and the judge is always instructed to finish
with a "Score: N" line, which keeps parsing deterministic.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import CandidateSet, Corpus, ParagraphPair, read_jsonl
from .errors import (
    CorpusFormatError,
    EmptyCandidate,
    EvalError,
    InsufficientShots,
    MissingReference,
    OutOfRange,
    Unparsable,
)
from .judge import Judge, JudgeRequest

log = logging.getLogger(__name__)

K_SHOT_CHOICES = (0, 5, 10, 15, 20)


class Criterion(Enum):
    HONORIFICS = "honorifics"
    LEXICAL_CHOICE = "lexical"
    SYNTAX_GRAMMAR = "syntax"
    CONTENT_ACCURACY = "content"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]


_DISPLAY_NAMES = {
    Criterion.HONORIFICS: "Honorifics",
    Criterion.LEXICAL_CHOICE: "Lexical Choice",
    Criterion.SYNTAX_GRAMMAR: "Syntax and Grammar",
    Criterion.CONTENT_ACCURACY: "Content Accuracy",
}

CRITERIA = tuple(Criterion)


@dataclass(frozen=True)
class CriterionRubric:
    preamble: str
    levels: dict[int, str]

    def __post_init__(self):
        if set(self.levels) != {1, 2, 3, 4, 5}:
            raise CorpusFormatError(
                f"rubric needs descriptors for levels 1..5, got {sorted(self.levels)}"
            )


@dataclass(frozen=True)
class RubricSet:
    criteria: dict[Criterion, CriterionRubric]

    def __post_init__(self):
        missing = [c.value for c in CRITERIA if c not in self.criteria]
        if missing:
            raise CorpusFormatError(f"rubric missing criteria: {missing}")


def load_rubric(path: Path | str) -> RubricSet:
    """Read a rubric data file: {"criteria": {channel: {preamble, levels}}}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return _rubric_from_dict(data, str(path))


def bundled_rubric() -> RubricSet:
    """The complete English example rubric shipped with the package."""
    text = resources.files("rulerverse").joinpath("data/rubric_en.json").read_text("utf-8")
    return _rubric_from_dict(json.loads(text), "bundled rubric")


def _rubric_from_dict(data: dict, where: str) -> RubricSet:
    raw = data.get("criteria")
    if not isinstance(raw, dict):
        raise CorpusFormatError(f"{where}: rubric file needs a 'criteria' object")
    criteria: dict[Criterion, CriterionRubric] = {}
    for criterion in CRITERIA:
        entry = raw.get(criterion.value)
        if entry is None:
            continue
        levels = {int(k): str(v) for k, v in entry.get("levels", {}).items()}
        criteria[criterion] = CriterionRubric(
            preamble=str(entry.get("preamble", "")), levels=levels
        )
    return RubricSet(criteria=criteria)


@dataclass(frozen=True)
class PromptOptions:
    """Toggles for the judge prompt; defaults are the plain zero-shot setup."""

    use_cot: bool = False
    k_shot: int = 0
    include_reference: bool = True
    include_rubric: bool = True
    reference_index: int = 0

    def __post_init__(self):
        if self.k_shot not in K_SHOT_CHOICES:
            raise ValueError(f"k_shot must be one of {K_SHOT_CHOICES}, got {self.k_shot}")
        if self.reference_index < 0:
            raise ValueError("reference_index must be >= 0")

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "use_cot": self.use_cot,
                "k_shot": self.k_shot,
                "include_reference": self.include_reference,
                "include_rubric": self.include_rubric,
                "reference_index": self.reference_index,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class ScoredExample:
    """One worked few-shot example for a single criterion."""

    story_id: str
    criterion: Criterion
    source_text: str
    candidate_text: str
    score: int
    reference_text: str = ""


def load_example_bank(path: Path | str) -> list[ScoredExample]:
    bank: list[ScoredExample] = []
    for lineno, record in read_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            criterion = Criterion(record["criterion"])
        except (KeyError, ValueError):
            raise CorpusFormatError(f"{where}: bad or missing criterion") from None
        score = record.get("score")
        if not isinstance(score, int) or not 1 <= score <= 5:
            raise CorpusFormatError(f"{where}: score must be an integer in 1..5")
        bank.append(
            ScoredExample(
                story_id=str(record.get("story_id", "")),
                criterion=criterion,
                source_text=str(record["source_text"]),
                candidate_text=str(record["candidate_text"]),
                score=score,
                reference_text=str(record.get("reference_text", "")),
            )
        )
    return bank


SYSTEM_TEXT = "You are an expert evaluator of literary translation quality."

_SECTION_SEP = "\n\n"


def _format_shot(example: ScoredExample) -> str:
    parts = [f"Source: {example.source_text}"]
    if example.reference_text:
        parts.append(f"Reference: {example.reference_text}")
    parts.append(f"Candidate: {example.candidate_text}")
    parts.append(f"Score: {example.score}")
    return "\n".join(parts)


def select_shots(
    shots: Sequence[ScoredExample], criterion: Criterion, story_id: str, k: int
) -> list[ScoredExample]:
    """First k bank entries for the criterion, never from the story under evaluation."""
    usable = [s for s in shots if s.criterion is criterion and s.story_id != story_id]
    if len(usable) < k:
        raise InsufficientShots(
            f"{criterion.value}: bank holds {len(usable)} usable examples, need {k}"
        )
    return usable[:k]


def ruler_prompt_sections(
    criterion: Criterion,
    pair: ParagraphPair,
    candidate_text: str,
    rubric: RubricSet,
    summary: str,
    options: PromptOptions,
    shots: Sequence[ScoredExample] = (),
) -> list[tuple[str, str]]:
    """Prompt blocks in fixed order; each toggle adds or removes exactly one."""
    if not candidate_text.strip():
        raise EmptyCandidate(f"empty candidate for ({pair.story_id!r}, {pair.index})")

    sections: list[tuple[str, str]] = [
        (
            "Task",
            "Evaluate the candidate translation of the passage below on one "
            f"criterion: {criterion.display_name}. Rate it on a scale of 1 "
            "(worst) to 5 (best).",
        )
    ]
    if options.include_rubric:
        cr = rubric.criteria[criterion]
        lines = [cr.preamble] if cr.preamble else []
        lines += [f"{level}: {cr.levels[level]}" for level in range(1, 6)]
        sections.append(("Rubric", "\n".join(lines)))
    sections.append(("Story summary", summary.strip() or "(none provided)"))
    if options.k_shot > 0:
        chosen = select_shots(shots, criterion, pair.story_id, options.k_shot)
        blocks = [
            f"Example {i + 1}:\n{_format_shot(s)}" for i, s in enumerate(chosen)
        ]
        sections.append(("Worked examples", "\n\n".join(blocks)))
    sections.append(("Source passage", pair.source_text))
    if options.include_reference:
        if options.reference_index >= len(pair.references):
            raise MissingReference(
                f"({pair.story_id!r}, {pair.index}) has {len(pair.references)} "
                f"references, index {options.reference_index} requested"
            )
        sections.append(("Reference translation", pair.references[options.reference_index]))
    sections.append(("Candidate translation", candidate_text))
    if options.use_cot:
        sections.append(
            (
                "Output format",
                "Explain your reasoning briefly, then end your response with a "
                'final line of the form "Score: N" where N is an integer from 1 to 5.',
            )
        )
    else:
        sections.append(
            (
                "Output format",
                'Respond with a single line of the form "Score: N" where N is '
                "an integer from 1 to 5. Do not add any other text.",
            )
        )
    return sections


def build_ruler_prompt(
    criterion: Criterion,
    pair: ParagraphPair,
    candidate_text: str,
    rubric: RubricSet,
    summary: str,
    options: PromptOptions,
    shots: Sequence[ScoredExample] = (),
) -> JudgeRequest:
    sections = ruler_prompt_sections(
        criterion, pair, candidate_text, rubric, summary, options, shots
    )
    user_text = _SECTION_SEP.join(f"### {name}\n{body}" for name, body in sections)
    return JudgeRequest(system_text=SYSTEM_TEXT, user_text=user_text)


_SCORE_LINE = re.compile(r"^\s*Score:\s*([+-]?\d+)\s*$", re.MULTILINE)


def parse_score(response_text: str, lo: int, hi: int) -> int:
    """Pull the final "Score: N" line out of a judge response."""
    matches = _SCORE_LINE.findall(response_text)
    if not matches:
        raise Unparsable(f"no score line in response: {response_text[:80]!r}")
    value = int(matches[-1])
    if not lo <= value <= hi:
        raise OutOfRange(value, lo, hi)
    return value


def parse_likert_score(response_text: str, use_cot: bool = False) -> int:
    """Extract the 1..5 score; the last conforming line wins either way.

    The instructed format puts the score on the final line for both the
    score-only and the reason-then-score prompt, so use_cot does not change
    parsing; it is accepted to mirror the prompt contract.
    """
    del use_cot
    return parse_score(response_text, 1, 5)


@dataclass
class RubricScorecard:
    system_id: str
    story_id: str
    index: int
    scores: dict[Criterion, int]
    rationales: dict[Criterion, str] = field(default_factory=dict)
    raw_responses: dict[Criterion, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ItemFailure:
    system_id: str
    story_id: str
    index: int
    stage: str
    error: str
    message: str

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "story_id": self.story_id,
            "index": self.index,
            "stage": self.stage,
            "error": self.error,
            "message": self.message,
        }


@dataclass
class RulerRunResult:
    scorecards: list[RubricScorecard]
    failures: list[ItemFailure]

    def summary(self) -> dict:
        return {
            "items_ok": len(self.scorecards),
            "items_failed": len(self.failures),
            "failures": [f.to_dict() for f in self.failures],
        }


def _strip_score_line(text: str) -> str:
    lines = text.splitlines()
    kept = [ln for ln in lines if not _SCORE_LINE.match(ln)]
    return "\n".join(kept).strip()


def _score_one(
    pair: ParagraphPair,
    candidate_text: str,
    system_id: str,
    rubric: RubricSet,
    summary: str,
    options: PromptOptions,
    judge: Judge,
    shots: Sequence[ScoredExample],
) -> RubricScorecard | ItemFailure:
    scores: dict[Criterion, int] = {}
    rationales: dict[Criterion, str] = {}
    raw: dict[Criterion, str] = {}
    for criterion in CRITERIA:
        try:
            request = build_ruler_prompt(
                criterion, pair, candidate_text, rubric, summary, options, shots
            )
            response = judge.complete(request)
            scores[criterion] = parse_likert_score(response.text, options.use_cot)
            raw[criterion] = response.text
            if options.use_cot:
                rationales[criterion] = _strip_score_line(response.text)
        except EvalError as exc:
            return ItemFailure(
                system_id=system_id,
                story_id=pair.story_id,
                index=pair.index,
                stage=f"ruler:{criterion.value}",
                error=type(exc).__name__,
                message=str(exc),
            )
    return RubricScorecard(
        system_id=system_id,
        story_id=pair.story_id,
        index=pair.index,
        scores=scores,
        rationales=rationales,
        raw_responses=raw,
    )


def score_candidate(
    corpus: Corpus,
    candidates: CandidateSet,
    rubric: RubricSet,
    options: PromptOptions,
    judge: Judge,
    shots: Sequence[ScoredExample] = (),
    jobs: int | None = None,
) -> RulerRunResult:
    """Score every covered paragraph on all four criteria.

    Judge failures are recorded per item and the run continues; scorecards come
    back in corpus order regardless of worker completion order.
    """
    pairs = [p for p in corpus.pairs() if (p.story_id, p.index) in candidates.translations]
    workers = jobs if jobs is not None else judge.config.concurrency_limit

    def work(pair: ParagraphPair) -> RubricScorecard | ItemFailure:
        return _score_one(
            pair,
            candidates.translations[(pair.story_id, pair.index)],
            candidates.system_id,
            rubric,
            corpus.story(pair.story_id).summary,
            options,
            judge,
            shots,
        )

    if workers <= 1 or len(pairs) <= 1:
        outcomes = [work(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, pairs))

    result = RulerRunResult(scorecards=[], failures=[])
    for outcome in outcomes:
        if isinstance(outcome, ItemFailure):
            result.failures.append(outcome)
        else:
            result.scorecards.append(outcome)
    if result.failures:
        log.warning("ruler run: %d of %d items failed", len(result.failures), len(pairs))
    return result


@dataclass
class HonorificsAudit:
    """Judge compliance with the no-dialogue default on tagged paragraphs."""

    checked: int
    compliant: int
    untagged: int
    violations: list[dict]

    def to_dict(self) -> dict:
        return {
            "checked": self.checked,
            "compliant": self.compliant,
            "untagged": self.untagged,
            "violations": list(self.violations),
        }


def audit_honorifics(scorecards: Iterable[RubricScorecard], corpus: Corpus) -> HonorificsAudit:
    """Flag non-dialogue paragraphs whose honorifics score is not 5."""
    checked = compliant = untagged = 0
    violations: list[dict] = []
    for card in scorecards:
        pair = corpus.pair(card.story_id, card.index)
        if pair.has_dialogue is None:
            untagged += 1
            continue
        if pair.has_dialogue:
            continue
        checked += 1
        score = card.scores[Criterion.HONORIFICS]
        if score == 5:
            compliant += 1
        else:
            violations.append(
                {
                    "system_id": card.system_id,
                    "story_id": card.story_id,
                    "index": card.index,
                    "score": score,
                }
            )
    return HonorificsAudit(
        checked=checked, compliant=compliant, untagged=untagged, violations=violations
    )


# -- scorecard records (one per (system_id, story_id, index)) --

def scorecard_to_record(card: RubricScorecard, options_fp: str, model_id: str) -> dict:
    return {
        "system_id": card.system_id,
        "story_id": card.story_id,
        "index": card.index,
        "scores": {c.value: card.scores[c] for c in CRITERIA},
        "options": options_fp,
        "model_id": model_id,
    }


def scorecard_from_record(record: dict) -> RubricScorecard:
    return RubricScorecard(
        system_id=record["system_id"],
        story_id=record["story_id"],
        index=record["index"],
        scores={Criterion(k): v for k, v in record["scores"].items()},
    )
