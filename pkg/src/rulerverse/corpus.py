"""Load, validate, sample, and serialize paragraph-aligned story corpora.

File formats (all UTF-8, line-delimited JSON):
  paragraphs: {"story_id", "index", "source_text", "references": [...], "has_dialogue"?}
  stories:    {"story_id", "title", "author", "summary"}
  candidates: {"system_id", "story_id", "index", "text"}
              (optional first line {"_provenance": {...}})
  annotations:{"rater_id", "channel", "story_id", "index", "system_id",
               "question_id"?, "score"}
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import (
    CorpusFormatError,
    DanglingAnnotation,
    DuplicateItem,
    EmptyText,
    NonContiguousIndex,
    OutOfRange,
    SamplingError,
    UnknownItem,
)

log = logging.getLogger(__name__)

RULER_CHANNELS = ("honorifics", "lexical", "syntax", "content")
VERSE_CHANNEL = "verse"
CHANNELS = RULER_CHANNELS + (VERSE_CHANNEL,)


@dataclass(frozen=True)
class ParagraphPair:
    """One aligned source paragraph with at least one reference translation."""

    story_id: str
    index: int
    source_text: str
    references: tuple[str, ...]
    has_dialogue: bool | None = None


@dataclass
class Story:
    story_id: str
    title: str = ""
    author: str = ""
    summary: str = ""
    paragraphs: list[ParagraphPair] = field(default_factory=list)


@dataclass
class Corpus:
    """Validated, read-only collection of stories; safe to share across workers."""

    stories: dict[str, Story]

    def __post_init__(self):
        self._by_key: dict[tuple[str, int], ParagraphPair] = {
            (p.story_id, p.index): p
            for story in self.stories.values()
            for p in story.paragraphs
        }

    @property
    def n_stories(self) -> int:
        return len(self.stories)

    @property
    def n_paragraphs(self) -> int:
        return len(self._by_key)

    def story_ids(self) -> list[str]:
        return list(self.stories)

    def story(self, story_id: str) -> Story:
        try:
            return self.stories[story_id]
        except KeyError:
            raise UnknownItem(f"unknown story_id {story_id!r}") from None

    def pair(self, story_id: str, index: int) -> ParagraphPair:
        try:
            return self._by_key[(story_id, index)]
        except KeyError:
            raise UnknownItem(f"no paragraph ({story_id!r}, {index})") from None

    def has_pair(self, story_id: str, index: int) -> bool:
        return (story_id, index) in self._by_key

    def pairs(self) -> Iterator[ParagraphPair]:
        """All paragraphs in story order, then index order."""
        for story in self.stories.values():
            yield from story.paragraphs


@dataclass
class CandidateSet:
    """One translation system's candidate texts, keyed by (story_id, index)."""

    system_id: str
    translations: dict[tuple[str, int], str]
    provenance: dict[str, Any] = field(default_factory=dict)

    def coverage(self, corpus: Corpus) -> float:
        if corpus.n_paragraphs == 0:
            return 0.0
        return len(self.translations) / corpus.n_paragraphs

    def subset(self, keys: Iterable[tuple[str, int]]) -> "CandidateSet":
        wanted = set(keys)
        return CandidateSet(
            system_id=self.system_id,
            translations={k: v for k, v in self.translations.items() if k in wanted},
            provenance=dict(self.provenance),
        )


@dataclass(frozen=True)
class AnnotationRecord:
    rater_id: str
    channel: str
    score: int
    system_id: str
    story_id: str | None = None
    index: int | None = None
    question_id: str | None = None

    def item_id(self) -> str:
        """Stable item key used to align raters for agreement statistics."""
        if self.channel == VERSE_CHANNEL:
            return f"{self.question_id}::{self.system_id}"
        return f"{self.story_id}::{self.index}::{self.system_id}"


# -- line-delimited record helpers --

def read_jsonl(path: Path | str) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) pairs, skipping blank lines."""
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                record = json.loads(s)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{lineno}: record must be a JSON object")
            yield lineno, record


def write_jsonl(path: Path | str, records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    tmp.replace(path)


def _require(record: dict, key: str, where: str) -> Any:
    if key not in record:
        raise CorpusFormatError(f"{where}: missing field {key!r}")
    return record[key]


def _nonempty_text(value: Any, what: str, where: str) -> str:
    if not isinstance(value, str):
        raise CorpusFormatError(f"{where}: {what} must be a string")
    if not value.strip():
        raise EmptyText(f"{where}: {what} is empty")
    return value


# -- loading --

def load_corpus(paragraphs_path: Path | str, stories_path: Path | str | None = None) -> Corpus:
    """Load and validate a paragraph file plus optional story metadata file."""
    by_story: dict[str, list[ParagraphPair]] = {}
    seen: set[tuple[str, int]] = set()
    for lineno, record in read_jsonl(paragraphs_path):
        where = f"{paragraphs_path}:{lineno}"
        story_id = _require(record, "story_id", where)
        if not isinstance(story_id, str) or not story_id:
            raise CorpusFormatError(f"{where}: story_id must be a nonempty string")
        index = _require(record, "index", where)
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            raise CorpusFormatError(f"{where}: index must be a non-negative integer")
        source = _nonempty_text(_require(record, "source_text", where), "source_text", where)
        refs = _require(record, "references", where)
        if not isinstance(refs, list) or len(refs) == 0:
            raise CorpusFormatError(f"{where}: references must be a nonempty list")
        references = tuple(
            _nonempty_text(r, f"references[{i}]", where) for i, r in enumerate(refs)
        )
        has_dialogue = record.get("has_dialogue")
        if has_dialogue is not None and not isinstance(has_dialogue, bool):
            raise CorpusFormatError(f"{where}: has_dialogue must be a boolean")
        key = (story_id, index)
        if key in seen:
            raise DuplicateItem(f"{where}: duplicate paragraph ({story_id!r}, {index})")
        seen.add(key)
        by_story.setdefault(story_id, []).append(
            ParagraphPair(story_id, index, source, references, has_dialogue)
        )

    stories: dict[str, Story] = {}
    for story_id, paras in by_story.items():
        paras.sort(key=lambda p: p.index)
        for expected, p in enumerate(paras):
            if p.index != expected:
                raise NonContiguousIndex(
                    f"story {story_id!r}: expected index {expected}, found {p.index}"
                )
        stories[story_id] = Story(story_id=story_id, paragraphs=paras)

    if stories_path is not None:
        for lineno, record in read_jsonl(stories_path):
            where = f"{stories_path}:{lineno}"
            story_id = _require(record, "story_id", where)
            if story_id not in stories:
                raise UnknownItem(f"{where}: metadata for unknown story {story_id!r}")
            if "summary" not in record:
                raise CorpusFormatError(f"{where}: summary field must be present")
            story = stories[story_id]
            story.title = str(record.get("title", ""))
            story.author = str(record.get("author", ""))
            story.summary = str(record.get("summary", ""))

    corpus = Corpus(stories=stories)
    log.info("loaded corpus: %d stories, %d paragraphs", corpus.n_stories, corpus.n_paragraphs)
    return corpus


def save_corpus(corpus: Corpus, paragraphs_path: Path | str, stories_path: Path | str | None = None) -> None:
    """Serialize a corpus back to the file formats load_corpus reads."""
    records = []
    for pair in corpus.pairs():
        record = {
            "story_id": pair.story_id,
            "index": pair.index,
            "source_text": pair.source_text,
            "references": list(pair.references),
        }
        if pair.has_dialogue is not None:
            record["has_dialogue"] = pair.has_dialogue
        records.append(record)
    write_jsonl(paragraphs_path, records)
    if stories_path is not None:
        write_jsonl(
            stories_path,
            [
                {
                    "story_id": s.story_id,
                    "title": s.title,
                    "author": s.author,
                    "summary": s.summary,
                }
                for s in corpus.stories.values()
            ],
        )


def load_candidates(path: Path | str, corpus: Corpus) -> CandidateSet:
    """Load one system's candidate file; every key must resolve to a corpus pair."""
    system_id: str | None = None
    translations: dict[tuple[str, int], str] = {}
    provenance: dict[str, Any] = {}
    for lineno, record in read_jsonl(path):
        where = f"{path}:{lineno}"
        if "_provenance" in record:
            provenance = dict(record["_provenance"])
            continue
        sid = _require(record, "system_id", where)
        if system_id is None:
            system_id = sid
        elif sid != system_id:
            raise CorpusFormatError(
                f"{where}: mixed system ids in one candidate file ({system_id!r} vs {sid!r})"
            )
        story_id = _require(record, "story_id", where)
        index = _require(record, "index", where)
        if not corpus.has_pair(story_id, index):
            raise UnknownItem(f"{where}: candidate for unknown paragraph ({story_id!r}, {index})")
        text = _nonempty_text(_require(record, "text", where), "text", where)
        key = (story_id, index)
        if key in translations:
            raise DuplicateItem(f"{where}: duplicate candidate for ({story_id!r}, {index})")
        translations[key] = text
    if system_id is None:
        raise CorpusFormatError(f"{path}: no candidate records found")
    cands = CandidateSet(system_id=system_id, translations=translations, provenance=provenance)
    log.info(
        "loaded candidates for %s: %d items, coverage %.3f",
        system_id, len(translations), cands.coverage(corpus),
    )
    return cands


def save_candidates(cands: CandidateSet, path: Path | str) -> None:
    records: list[dict] = []
    if cands.provenance:
        records.append({"_provenance": cands.provenance})
    for (story_id, index), text in sorted(cands.translations.items()):
        records.append(
            {"system_id": cands.system_id, "story_id": story_id, "index": index, "text": text}
        )
    write_jsonl(path, records)


def load_annotations(
    path: Path | str,
    corpus: Corpus,
    known_systems: Iterable[str] | None = None,
    known_questions: Iterable[str] | None = None,
) -> list[AnnotationRecord]:
    """Load annotation records, rejecting dangling or out-of-range entries."""
    systems = set(known_systems) if known_systems is not None else None
    questions = set(known_questions) if known_questions is not None else None
    records: list[AnnotationRecord] = []
    seen: set[tuple[str, str, str]] = set()
    for lineno, record in read_jsonl(path):
        where = f"{path}:{lineno}"
        rater_id = str(_require(record, "rater_id", where))
        channel = _require(record, "channel", where)
        if channel not in CHANNELS:
            raise CorpusFormatError(f"{where}: unknown channel {channel!r}")
        score = _require(record, "score", where)
        if not isinstance(score, int) or isinstance(score, bool):
            raise CorpusFormatError(f"{where}: score must be an integer")
        lo, hi = (1, 3) if channel == VERSE_CHANNEL else (1, 5)
        if not lo <= score <= hi:
            raise OutOfRange(score, lo, hi)
        system_id = str(_require(record, "system_id", where))
        if systems is not None and system_id not in systems:
            raise DanglingAnnotation(f"{where}: unknown system {system_id!r}")
        if channel == VERSE_CHANNEL:
            question_id = _require(record, "question_id", where)
            if questions is not None and question_id not in questions:
                raise DanglingAnnotation(f"{where}: unknown question {question_id!r}")
            ann = AnnotationRecord(
                rater_id=rater_id, channel=channel, score=score,
                system_id=system_id, question_id=question_id,
            )
        else:
            story_id = _require(record, "story_id", where)
            index = _require(record, "index", where)
            if not corpus.has_pair(story_id, index):
                raise DanglingAnnotation(
                    f"{where}: annotation for unknown paragraph ({story_id!r}, {index})"
                )
            ann = AnnotationRecord(
                rater_id=rater_id, channel=channel, score=score,
                system_id=system_id, story_id=story_id, index=index,
            )
        dedup = (ann.rater_id, ann.channel, ann.item_id())
        if dedup in seen:
            raise DuplicateItem(f"{where}: duplicate annotation for {dedup}")
        seen.add(dedup)
        records.append(ann)
    return records


# -- seeded sampling --

def stable_rank(seed: int, key: str) -> int:
    """Deterministic 64-bit rank independent of platform and interpreter."""
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).hexdigest()
    return int(digest[:16], 16)


@dataclass(frozen=True)
class SampleItem:
    story_id: str
    index: int
    system_id: str | None = None
    question_ids: tuple[str, ...] = ()


@dataclass
class SampleManifest:
    seed: int
    n_per_story: int
    q_per_item: int
    items: list[SampleItem]

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_questions(self) -> int:
        return sum(len(it.question_ids) for it in self.items)

    def keys(self) -> list[tuple[str, int]]:
        return [(it.story_id, it.index) for it in self.items]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_per_story": self.n_per_story,
            "q_per_item": self.q_per_item,
            "items": [
                {
                    "story_id": it.story_id,
                    "index": it.index,
                    "system_id": it.system_id,
                    "question_ids": list(it.question_ids),
                }
                for it in self.items
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SampleManifest":
        return cls(
            seed=data["seed"],
            n_per_story=data["n_per_story"],
            q_per_item=data["q_per_item"],
            items=[
                SampleItem(
                    story_id=d["story_id"],
                    index=d["index"],
                    system_id=d.get("system_id"),
                    question_ids=tuple(d.get("question_ids", ())),
                )
                for d in data["items"]
            ],
        )


def sample_items(
    corpus: Corpus,
    story_ids: Iterable[str],
    n_per_story: int,
    q_per_item: int,
    seed: int,
    questions: Iterable[Any] | None = None,
    systems: Iterable[str] | None = None,
) -> SampleManifest:
    """Draw a reproducible evaluation sample.

    Paragraphs are ranked by sha256(f"{seed}:{story_id}:{index}") and the
    n_per_story smallest ranks are taken per story, so the manifest is a pure
    function of (corpus, arguments, seed) on any machine.  When q_per_item > 0
    a question bank must be supplied; q_per_item question ids are drawn per
    selected paragraph the same way.  When `systems` is given, each item is
    deterministically assigned one system id.
    """
    story_ids = list(story_ids)
    for sid in story_ids:
        corpus.story(sid)

    q_by_key: dict[tuple[str, int], list[str]] = {}
    if q_per_item > 0:
        if questions is None:
            raise SamplingError("q_per_item > 0 requires a question bank")
        for q in questions:
            q_by_key.setdefault((q.story_id, q.index), []).append(q.question_id)

    system_list = list(systems) if systems is not None else None
    items: list[SampleItem] = []
    for sid in story_ids:
        paras = corpus.story(sid).paragraphs
        if len(paras) < n_per_story:
            raise SamplingError(
                f"story {sid!r} has {len(paras)} paragraphs, need {n_per_story}"
            )
        chosen = sorted(paras, key=lambda p: stable_rank(seed, f"{p.story_id}:{p.index}"))
        chosen = sorted(chosen[:n_per_story], key=lambda p: p.index)
        for p in chosen:
            qids: tuple[str, ...] = ()
            if q_per_item > 0:
                pool = q_by_key.get((p.story_id, p.index), [])
                if len(pool) < q_per_item:
                    raise SamplingError(
                        f"paragraph ({p.story_id!r}, {p.index}) has {len(pool)} "
                        f"questions, need {q_per_item}"
                    )
                picked = sorted(pool, key=lambda qid: stable_rank(seed, qid))[:q_per_item]
                qids = tuple(sorted(picked))
            system_id = None
            if system_list:
                pick = stable_rank(seed, f"{p.story_id}:{p.index}:system") % len(system_list)
                system_id = system_list[pick]
            items.append(SampleItem(p.story_id, p.index, system_id, qids))
    return SampleManifest(seed=seed, n_per_story=n_per_story, q_per_item=q_per_item, items=items)
