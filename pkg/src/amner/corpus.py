"""Tagged-corpus handling: parsing, validation, scheme conversion, stats.

Three annotation standards are supported:

* ``stanford`` -- one entity-type tag per token, no boundary markers.
  Adjacent same-type entities are indistinguishable.
* ``iob1`` -- ``I-X`` marks entity tokens; ``B-X`` is used only when an
  entity immediately follows another entity of the same type.
* ``iob2`` -- every entity opens with ``B-X``; continuation tokens are
  ``I-X``.

File format: UTF-8, one token per line as ``surface<TAB>tag``, a blank
line ends a sentence, lines starting with ``#`` are comments.  Stanford
tags are stored internally with an ``I`` position marker because the
format carries no boundary information.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

OUTSIDE = "O"


class TagScheme(enum.Enum):
    STANFORD = "stanford"
    IOB1 = "iob1"
    IOB2 = "iob2"

    @classmethod
    def from_name(cls, name: str) -> "TagScheme":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown tagging scheme {name!r}; expected one of "
                f"{[s.value for s in cls]}"
            ) from None


class CorpusFormatError(ValueError):
    """Malformed corpus or table file; carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Tag:
    """A position marker (B, I or O) plus an entity type for B/I."""

    position: str
    etype: str | None = None

    def __post_init__(self):
        if self.position not in ("B", "I", "O"):
            raise ValueError(f"bad tag position {self.position!r}")
        if self.position == "O":
            if self.etype is not None:
                raise ValueError("O tag must not carry an entity type")
        else:
            if not self.etype:
                raise ValueError(f"{self.position} tag needs an entity type")
            if self.etype == OUTSIDE:
                raise ValueError(f"entity type may not be the reserved marker {OUTSIDE!r}")


O_TAG = Tag("O")


@dataclass(frozen=True)
class Token:
    surface: str
    tag: Tag

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if "\t" in self.surface or "\n" in self.surface or "\r" in self.surface:
            raise ValueError("token surface may not contain tabs or line breaks")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("sentence must contain at least one token")
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def tags(self) -> tuple[Tag, ...]:
        return tuple(t.tag for t in self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Half-open token range [start, end) carrying an entity type."""

    start: int
    end: int
    etype: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad span bounds ({self.start}, {self.end})")
        if not self.etype or self.etype == OUTSIDE:
            raise ValueError(f"bad span entity type {self.etype!r}")

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class TagViolation:
    index: int
    message: str


def tag_to_str(tag: Tag, scheme: TagScheme) -> str:
    if tag.position == "O":
        return OUTSIDE
    if scheme is TagScheme.STANFORD:
        if tag.position == "B":
            raise ValueError("B positions are not representable in the stanford scheme")
        return tag.etype  # type: ignore[return-value]
    return f"{tag.position}-{tag.etype}"


def tag_from_str(text: str, scheme: TagScheme) -> Tag:
    if text == OUTSIDE:
        return O_TAG
    if scheme is TagScheme.STANFORD:
        if not text or any(c.isspace() for c in text):
            raise ValueError(f"bad stanford tag {text!r}")
        return Tag("I", text)
    if len(text) > 2 and text[1] == "-" and text[0] in ("B", "I"):
        return Tag(text[0], text[2:])
    raise ValueError(f"bad {scheme.value} tag {text!r}; expected O, B-TYPE or I-TYPE")


def parse_corpus(text: str | bytes, scheme: TagScheme) -> list[Sentence]:
    """Parse ``surface<TAB>tag`` lines into sentences.

    A blank line ends the current sentence; ``#``-prefixed lines are
    comments.  Raises :class:`CorpusFormatError` with the offending
    1-based line number on malformed input.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusFormatError(f"invalid UTF-8: {exc}") from exc
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if line.startswith("#"):
            continue
        if not line.strip():
            if tokens:
                sentences.append(Sentence(tuple(tokens)))
                tokens = []
            continue
        columns = line.split("\t")
        if len(columns) != 2:
            raise CorpusFormatError(
                f"expected 2 tab-separated columns, got {len(columns)}", lineno
            )
        surface, tag_text = columns
        if not surface:
            raise CorpusFormatError("empty token surface", lineno)
        try:
            tag = tag_from_str(tag_text, scheme)
        except ValueError as exc:
            raise CorpusFormatError(str(exc), lineno) from exc
        tokens.append(Token(surface, tag))
    if tokens:
        sentences.append(Sentence(tuple(tokens)))
    return sentences


def write_corpus(sentences: Sequence[Sentence], scheme: TagScheme) -> str:
    """Render sentences in the two-column format; inverse of parse_corpus.

    Every sentence must validate under ``scheme``.  Surfaces starting
    with ``#`` are rejected because they would be re-read as comments.
    """
    pieces: list[str] = []
    for s_idx, sentence in enumerate(sentences):
        violations = validate_tags(sentence, scheme)
        if violations:
            v = violations[0]
            raise ValueError(
                f"sentence {s_idx}, token {v.index}: tag sequence invalid "
                f"under {scheme.value}: {v.message}"
            )
        for t_idx, token in enumerate(sentence.tokens):
            if token.surface.startswith("#"):
                raise ValueError(
                    f"sentence {s_idx}, token {t_idx}: surface starts with '#', "
                    "which the format reserves for comments"
                )
            try:
                tag_text = tag_to_str(token.tag, scheme)
            except ValueError as exc:
                raise ValueError(f"sentence {s_idx}, token {t_idx}: {exc}") from exc
            pieces.append(f"{token.surface}\t{tag_text}\n")
        pieces.append("\n")
    return "".join(pieces)


def load_corpus(path, scheme: TagScheme) -> list[Sentence]:
    with open(path, "rb") as handle:
        return parse_corpus(handle.read(), scheme)


def save_corpus(path, sentences: Sequence[Sentence], scheme: TagScheme) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(write_corpus(sentences, scheme))


def validate_tags(sentence: Sentence, scheme: TagScheme) -> list[TagViolation]:
    """Check sequence-level tag legality; an empty list means valid.

    iob2: every I-X must directly follow B-X or I-X of the same type.
    iob1: I may appear anywhere; B-X is legal only directly after I-X or
    B-X of the same type.  stanford: any type tag is legal anywhere.
    """
    violations: list[TagViolation] = []
    if scheme is TagScheme.STANFORD:
        return violations
    prev: Tag = O_TAG
    for idx, token in enumerate(sentence.tokens):
        tag = token.tag
        if scheme is TagScheme.IOB2:
            if tag.position == "I":
                if prev.position == "O" or prev.etype != tag.etype:
                    violations.append(
                        TagViolation(idx, f"I-{tag.etype} may only follow B-{tag.etype} or I-{tag.etype}")
                    )
        else:  # IOB1
            if tag.position == "B":
                if prev.position == "O" or prev.etype != tag.etype:
                    violations.append(
                        TagViolation(idx, f"B-{tag.etype} may only follow I-{tag.etype} or B-{tag.etype}")
                    )
        prev = tag
    return violations


def _check_valid(sentence: Sentence, scheme: TagScheme) -> None:
    violations = validate_tags(sentence, scheme)
    if violations:
        v = violations[0]
        raise ValueError(f"invalid tag sequence under {scheme.value} at token {v.index}: {v.message}")


def extract_spans(sentence: Sentence, scheme: TagScheme) -> list[EntitySpan]:
    """Return the maximal entity spans of a valid sentence, sorted by start.

    Under stanford, maximal same-type runs form one span each; under the
    IOB schemes, B tags open spans per the scheme's convention.
    """
    _check_valid(sentence, scheme)
    spans: list[EntitySpan] = []
    start: int | None = None
    etype: str | None = None

    def close(end: int) -> None:
        nonlocal start, etype
        if start is not None:
            spans.append(EntitySpan(start, end, etype))  # type: ignore[arg-type]
            start, etype = None, None

    for idx, token in enumerate(sentence.tokens):
        tag = token.tag
        if tag.position == "O":
            close(idx)
            continue
        if scheme is TagScheme.STANFORD:
            opens = etype != tag.etype
        elif scheme is TagScheme.IOB2:
            opens = tag.position == "B"
        else:  # IOB1: B always opens; I opens unless it continues a same-type run
            opens = tag.position == "B" or etype != tag.etype
        if opens:
            close(idx)
            start, etype = idx, tag.etype
    close(len(sentence))
    return spans


def spans_to_tags(spans: Sequence[EntitySpan], length: int, scheme: TagScheme) -> list[Tag]:
    """Render disjoint spans as a per-token tag list of the given length."""
    ordered = sorted(spans)
    for span in ordered:
        if span.end > length:
            raise ValueError(f"span {span} exceeds sentence length {length}")
    for left, right in zip(ordered, ordered[1:]):
        if left.overlaps(right):
            raise ValueError(f"overlapping spans {left} and {right}")
    tags: list[Tag] = [O_TAG] * length
    prev_end: tuple[int, str] | None = None  # (end, etype) of the previous span
    for span in ordered:
        if scheme is TagScheme.IOB2:
            first = "B"
        elif scheme is TagScheme.IOB1:
            adjacent_same = prev_end == (span.start, span.etype)
            first = "B" if adjacent_same else "I"
        else:
            first = "I"
        tags[span.start] = Tag(first, span.etype)
        for idx in range(span.start + 1, span.end):
            tags[idx] = Tag("I", span.etype)
        prev_end = (span.end, span.etype)
    return tags


def _retag(sentence: Sentence, tags: Sequence[Tag]) -> Sentence:
    return Sentence(tuple(Token(tok.surface, tag) for tok, tag in zip(sentence.tokens, tags)))


def convert_scheme(
    sentences: Sequence[Sentence], from_scheme: TagScheme, to_scheme: TagScheme
) -> list[Sentence]:
    """Re-express a corpus in another scheme via span extraction.

    iob1 <-> iob2 is lossless.  stanford input merges adjacent same-type
    entities into one span (the boundary is not recoverable); converting
    into stanford likewise collapses adjacent same-type entities.
    """
    out: list[Sentence] = []
    for sentence in sentences:
        spans = extract_spans(sentence, from_scheme)
        out.append(_retag(sentence, spans_to_tags(spans, len(sentence), to_scheme)))
    return out


def count_adjacent_same_type(sentences: Sequence[Sentence], scheme: TagScheme) -> int:
    """Entity boundaries that a conversion into stanford would erase."""
    lost = 0
    for sentence in sentences:
        spans = extract_spans(sentence, scheme)
        for left, right in zip(spans, spans[1:]):
            if left.end == right.start and left.etype == right.etype:
                lost += 1
    return lost


def count_multi_token_runs(sentences: Sequence[Sentence]) -> int:
    """Stanford runs of >= 2 tokens, each emitted as a single entity.

    Any of these could in truth be several adjacent same-type entities;
    the stanford format cannot tell them apart.
    """
    runs = 0
    for sentence in sentences:
        for span in extract_spans(sentence, TagScheme.STANFORD):
            if span.end - span.start >= 2:
                runs += 1
    return runs


# ---------------------------------------------------------------------------
# Transliteration


@dataclass(frozen=True)
class TranslitTable:
    """Character-to-Latin mapping; many-to-one collapses variants."""

    mapping: dict[str, str]

    def __post_init__(self):
        for char, latin in self.mapping.items():
            if len(char) != 1:
                raise ValueError(f"table key {char!r} is not a single character")
            if not latin:
                raise ValueError(f"empty replacement for {char!r} would drop characters")


@dataclass(frozen=True)
class TranslitResult:
    text: str
    mapped: int
    unmapped: int


def load_translit_table(text: str | bytes) -> TranslitTable:
    """Parse a ``char<TAB>latin`` table; ``#`` comments and blanks allowed."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusFormatError(f"invalid UTF-8: {exc}") from exc
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 2:
            raise CorpusFormatError(
                f"expected 2 tab-separated columns, got {len(columns)}", lineno
            )
        char, latin = columns
        if len(char) != 1:
            raise CorpusFormatError(f"first column {char!r} is not a single character", lineno)
        if not latin:
            raise CorpusFormatError("empty replacement string", lineno)
        if char in mapping and mapping[char] != latin:
            raise CorpusFormatError(f"conflicting duplicate entry for {char!r}", lineno)
        mapping[char] = latin
    return TranslitTable(mapping)


def transliterate(text: str, table: TranslitTable) -> TranslitResult:
    """Replace each mapped character by its Latin string.

    Unmapped characters pass through unchanged; both kinds are counted
    so no character is ever silently dropped.
    """
    parts: list[str] = []
    mapped = unmapped = 0
    for char in text:
        latin = table.mapping.get(char)
        if latin is None:
            parts.append(char)
            unmapped += 1
        else:
            parts.append(latin)
            mapped += 1
    return TranslitResult("".join(parts), mapped, unmapped)


def transliterate_corpus(
    sentences: Sequence[Sentence], table: TranslitTable
) -> tuple[list[Sentence], int, int]:
    """Transliterate every token surface; returns (corpus, mapped, unmapped)."""
    out: list[Sentence] = []
    mapped = unmapped = 0
    for sentence in sentences:
        tokens = []
        for token in sentence.tokens:
            result = transliterate(token.surface, table)
            mapped += result.mapped
            unmapped += result.unmapped
            tokens.append(Token(result.text, token.tag))
        out.append(Sentence(tuple(tokens)))
    return out, mapped, unmapped


# ---------------------------------------------------------------------------
# Corpus statistics


@dataclass(frozen=True)
class CorpusStats:
    sentence_count: int
    total_tokens: int
    type_counts: dict[str, int]  # entity type -> token count (B and I alike)
    outside_count: int

    def percent(self, count: int) -> float:
        return 100.0 * count / self.total_tokens if self.total_tokens else 0.0


def corpus_stats(sentences: Sequence[Sentence], scheme: TagScheme) -> CorpusStats:
    """Per-type token counts over a valid corpus; a B/I token counts toward its type."""
    type_counts: dict[str, int] = {}
    outside = 0
    total = 0
    for s_idx, sentence in enumerate(sentences):
        violations = validate_tags(sentence, scheme)
        if violations:
            v = violations[0]
            raise ValueError(
                f"sentence {s_idx}, token {v.index}: invalid under {scheme.value}: {v.message}"
            )
        for token in sentence.tokens:
            total += 1
            if token.tag.position == "O":
                outside += 1
            else:
                etype = token.tag.etype
                type_counts[etype] = type_counts.get(etype, 0) + 1
    ordered = dict(sorted(type_counts.items()))
    return CorpusStats(len(sentences), total, ordered, outside)


def render_stats(stats: CorpusStats, fmt: str = "text") -> str:
    """Line-oriented report; ``kv`` gives machine-readable key/value pairs."""
    lines: list[str] = []
    if fmt == "kv":
        lines.append(f"sentences {stats.sentence_count}")
        lines.append(f"tokens.total {stats.total_tokens}")
        for etype, count in stats.type_counts.items():
            lines.append(f"tokens.{etype} {count}")
            lines.append(f"percent.{etype} {stats.percent(count):.2f}")
        lines.append(f"tokens.{OUTSIDE} {stats.outside_count}")
        lines.append(f"percent.{OUTSIDE} {stats.percent(stats.outside_count):.2f}")
    elif fmt == "text":
        lines.append(f"sentences: {stats.sentence_count}")
        lines.append(f"tokens:    {stats.total_tokens}")
        width = max([len(OUTSIDE)] + [len(t) for t in stats.type_counts])
        for etype, count in stats.type_counts.items():
            lines.append(f"  {etype:<{width}}  {count:>9,}  {stats.percent(count):6.2f}%")
        lines.append(
            f"  {OUTSIDE:<{width}}  {stats.outside_count:>9,}  "
            f"{stats.percent(stats.outside_count):6.2f}%"
        )
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return "\n".join(lines) + "\n"
