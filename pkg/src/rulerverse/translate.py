"""Candidate generation with few-shot plus story-summary prompting.

Translation runs at the backend's own default temperature rather than the
evaluation default of 0.0, and example pairs never come from the story being
translated.  Sentence granularity exists only to diversify outputs; paragraph
mode is the normal path.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .corpus import CandidateSet, Corpus, ParagraphPair
from .errors import EvalError, InsufficientBank
from .judge import Judge, JudgeRequest
from .ruler import ItemFailure

log = logging.getLogger(__name__)

GRANULARITIES = ("paragraph", "sentence")

SYSTEM_TEXT = "You are a skilled literary translator."


@dataclass(frozen=True)
class TranslationPromptSpec:
    n_shots: int = 5
    include_summary: bool = True
    granularity: str = "paragraph"
    bank_story_ids: tuple[str, ...] = ()
    # the example pool should offer both dialogue and narrative paragraphs;
    # disable for corpora without has_dialogue metadata
    require_dialogue_mix: bool = True

    def __post_init__(self):
        if self.n_shots < 0:
            raise ValueError("n_shots must be >= 0")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "n_shots": self.n_shots,
                "include_summary": self.include_summary,
                "granularity": self.granularity,
                "bank_story_ids": list(self.bank_story_ids),
                "require_dialogue_mix": self.require_dialogue_mix,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def select_shot_pairs(
    corpus: Corpus, spec: TranslationPromptSpec, exclude_story: str
) -> list[ParagraphPair]:
    """Deterministic example pairs: corpus order over the bank stories, with a
    dialogue and a narrative paragraph swapped in when the mix is required."""
    pool = [
        p
        for sid in spec.bank_story_ids
        if sid != exclude_story
        for p in corpus.story(sid).paragraphs
    ]
    if len(pool) < spec.n_shots:
        raise InsufficientBank(
            f"bank offers {len(pool)} paragraphs outside story {exclude_story!r}, "
            f"need {spec.n_shots}"
        )
    chosen = pool[: spec.n_shots]
    if spec.require_dialogue_mix and spec.n_shots >= 2:
        for wanted in (True, False):
            if any(p.has_dialogue is wanted for p in chosen):
                continue
            replacement = next((p for p in pool if p.has_dialogue is wanted), None)
            if replacement is None:
                raise InsufficientBank(
                    f"bank has no paragraph tagged has_dialogue={wanted}"
                )
            chosen[-1 if wanted is False else 0] = replacement
    return chosen


def build_translation_prompt(
    source_text: str,
    shots: list[ParagraphPair],
    summary: str,
    include_summary: bool,
) -> JudgeRequest:
    sections: list[tuple[str, str]] = [
        (
            "Task",
            "Translate the source passage into the target language of the "
            "examples, preserving literary style, tone, and register. Output "
            "only the translation.",
        )
    ]
    if include_summary and summary.strip():
        sections.append(("Story summary", summary.strip()))
    if shots:
        blocks = [
            f"Example {i + 1}:\nSource: {p.source_text}\nTranslation: {p.references[0]}"
            for i, p in enumerate(shots)
        ]
        sections.append(("Examples", "\n\n".join(blocks)))
    sections.append(("Source passage", source_text))
    user_text = "\n\n".join(f"### {name}\n{body}" for name, body in sections)
    return JudgeRequest(system_text=SYSTEM_TEXT, user_text=user_text)


_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    """Naive split on terminal punctuation; good enough for diversity runs."""
    parts = [s.strip() for s in _SENTENCE_END.split(text)]
    return [s for s in parts if s]


@dataclass
class TranslateRunResult:
    candidates: CandidateSet
    failures: list[ItemFailure]


def translate_corpus(
    corpus: Corpus,
    spec: TranslationPromptSpec,
    judge: Judge,
    system_id: str | None = None,
    jobs: int | None = None,
) -> TranslateRunResult:
    """Produce one candidate per paragraph; per-item judge failures are isolated.

    The judge is rebound to temperature=None so the backend applies its own
    default sampling; evaluation judges keep using 0.0.
    """
    translator = judge.with_temperature(None)
    system = system_id or judge.config.model_id
    pairs = list(corpus.pairs())
    workers = jobs if jobs is not None else judge.config.concurrency_limit

    def work(pair: ParagraphPair) -> tuple[ParagraphPair, str | ItemFailure]:
        summary = corpus.story(pair.story_id).summary
        try:
            shots = (
                select_shot_pairs(corpus, spec, exclude_story=pair.story_id)
                if spec.n_shots > 0
                else []
            )
            if spec.granularity == "sentence":
                rendered = []
                for sentence in split_sentences(pair.source_text):
                    request = build_translation_prompt(
                        sentence, shots, summary, spec.include_summary
                    )
                    rendered.append(translator.complete(request).text.strip())
                text = " ".join(rendered)
            else:
                request = build_translation_prompt(
                    pair.source_text, shots, summary, spec.include_summary
                )
                text = translator.complete(request).text.strip()
            return pair, text
        except EvalError as exc:
            return pair, ItemFailure(
                system_id=system,
                story_id=pair.story_id,
                index=pair.index,
                stage="translate",
                error=type(exc).__name__,
                message=str(exc),
            )

    if workers <= 1 or len(pairs) <= 1:
        outcomes = [work(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, pairs))

    translations: dict[tuple[str, int], str] = {}
    failures: list[ItemFailure] = []
    for pair, outcome in outcomes:
        if isinstance(outcome, ItemFailure):
            failures.append(outcome)
        else:
            translations[(pair.story_id, pair.index)] = outcome

    provenance = {
        "model_id": judge.config.model_id,
        "spec_fingerprint": spec.fingerprint(),
        "temperature": "backend-default",
    }
    candidates = CandidateSet(system_id=system, translations=translations, provenance=provenance)
    if failures:
        log.warning("translate run: %d of %d paragraphs failed", len(failures), len(pairs))
    return TranslateRunResult(candidates=candidates, failures=failures)
