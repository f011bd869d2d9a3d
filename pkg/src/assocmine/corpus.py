"""Corpus loading and document segmentation.

Articles arrive as JSONL (one object per line). Each article body is split
into paragraphs, sentences and tokens; those units are the co-occurrence
windows every downstream stage counts over, so the rules here are fixed and
fully deterministic:

* paragraphs: maximal runs of non-blank lines (one or more blank lines
  separate paragraphs);
* sentences: split after ``.``, ``!`` or ``?`` when followed by whitespace
  plus an uppercase letter, or by end of paragraph; a configurable
  abbreviation list ("Inc.", "U.S.", ...) suppresses splits;
* tokens: maximal alphanumeric runs, with punctuation runs emitted as
  separate PUNCT tokens; ``norm`` is the casefolded text.

All spans are byte offsets into the UTF-8 encoding of the body, half-open,
and always fall on UTF-8 boundaries.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import re
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import CorpusError
from .stopwords import ENGLISH_STOPWORDS

logger = logging.getLogger(__name__)

DEFAULT_ABBREVIATIONS = frozenset(
    {
        "inc.", "corp.", "co.", "ltd.", "mr.", "mrs.", "ms.", "dr.",
        "jr.", "sr.", "st.", "u.s.", "u.k.", "vs.", "etc.", "e.g.",
        "i.e.", "no.",
    }
)

_SENTENCE_TERMINATORS = ".!?"

# Word tokens are alphanumeric runs (underscore counts as punctuation);
# punctuation tokens are runs of everything else that is not whitespace.
_TOKEN_RE = re.compile(r"(?P<word>[^\W_]+)|(?P<punct>(?:[^\w\s]|_)+)")


class PosHint(str, Enum):
    """Coarse token class standing in for real part-of-speech tags."""

    CONTENT = "CONTENT"
    STOP = "STOP"
    NUM = "NUM"
    PUNCT = "PUNCT"


@dataclass(frozen=True)
class Article:
    id: str
    source: str = ""
    published_at: dt.date | None = None
    title: str = ""
    body: str = ""

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "published_at": self.published_at.isoformat() if self.published_at else None,
            "title": self.title,
            "body": self.body,
        }


@dataclass(frozen=True)
class Token:
    text: str
    norm: str
    start: int
    end: int
    is_stopword: bool
    pos_hint: PosHint
    sentence_index: int = -1


@dataclass(frozen=True)
class Sentence:
    start: int
    end: int
    paragraph_index: int


@dataclass
class AnnotatedDoc:
    article_id: str
    body: str
    body_bytes: bytes
    paragraphs: list[tuple[int, int]]
    sentences: list[Sentence]
    tokens: list[Token]

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    @property
    def n_paragraphs(self) -> int:
        return len(self.paragraphs)

    def text_at(self, start: int, end: int) -> str:
        """Decode the body slice for a byte span."""
        return self.body_bytes[start:end].decode("utf-8")


@dataclass
class LoadSummary:
    loaded: int = 0
    skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)


def _parse_article(obj: object) -> Article:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    raw_id = obj.get("id")
    if not isinstance(raw_id, str) or not raw_id:
        raise ValueError("missing or empty 'id'")
    fields: dict[str, str] = {}
    for key in ("source", "title", "body"):
        value = obj.get(key, "")
        if not isinstance(value, str):
            raise ValueError(f"field '{key}' is not a string")
        fields[key] = value
    published = None
    raw_date = obj.get("published_at")
    if isinstance(raw_date, str):
        try:
            published = dt.date.fromisoformat(raw_date)
        except ValueError:
            logger.warning("article %s: unparsable published_at %r, treating as absent", raw_id, raw_date)
    return Article(id=raw_id, source=fields["source"], published_at=published,
                   title=fields["title"], body=fields["body"])


def load_corpus(path: str | Path, summary: LoadSummary | None = None) -> Iterator[Article]:
    """Stream articles from a JSONL file in file order.

    Malformed lines are logged with their line number, recorded in
    ``summary`` and skipped. Duplicate article ids and unreadable paths are
    fatal (:class:`CorpusError`).
    """
    if summary is None:
        summary = LoadSummary()
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    seen: dict[str, int] = {}
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                article = _parse_article(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                logger.warning("%s:%d skipped malformed line: %s", path, line_no, exc)
                summary.skipped += 1
                summary.errors.append((line_no, str(exc)))
                continue
            if article.id in seen:
                raise CorpusError(
                    f"duplicate article id {article.id!r} at lines {seen[article.id]} and {line_no}"
                )
            seen[article.id] = line_no
            summary.loaded += 1
            yield article


def read_corpus(path: str | Path) -> tuple[list[Article], LoadSummary]:
    """Load a whole corpus eagerly and report ``loaded=N skipped=M`` on stderr."""
    summary = LoadSummary()
    articles = list(load_corpus(path, summary))
    print(f"loaded={summary.loaded} skipped={summary.skipped}", file=sys.stderr)
    return articles, summary


def _classify_word(text: str, norm: str) -> tuple[bool, PosHint]:
    if norm in ENGLISH_STOPWORDS:
        return True, PosHint.STOP
    if norm.isdigit():
        return False, PosHint.NUM
    return False, PosHint.CONTENT


def _raw_tokens(text: str) -> Iterator[tuple[str, str, int, int, bool, PosHint]]:
    """Yield (text, norm, char_start, char_end, is_stopword, pos_hint)."""
    for match in _TOKEN_RE.finditer(text):
        token_text = match.group()
        norm = token_text.casefold()
        if match.lastgroup == "word":
            is_stop, hint = _classify_word(token_text, norm)
        else:
            is_stop, hint = False, PosHint.PUNCT
        yield token_text, norm, match.start(), match.end(), is_stop, hint


def tokenize(text: str) -> list[Token]:
    """Tokenize free text with the corpus rules (byte-offset spans)."""
    to_byte = _char_to_byte(text)
    return [
        Token(text=t, norm=n, start=to_byte(s), end=to_byte(e), is_stopword=stop, pos_hint=hint)
        for t, n, s, e, stop, hint in _raw_tokens(text)
    ]


def token_norms(text: str) -> list[str]:
    """Normalized token sequence of a text, punctuation runs included."""
    return [n for _, n, _, _, _, _ in _raw_tokens(text)]


def _char_to_byte(text: str):
    """Return a char-offset -> byte-offset mapping function."""
    if text.isascii():
        return lambda i: i
    offsets = [0] * (len(text) + 1)
    total = 0
    for i, ch in enumerate(text):
        offsets[i] = total
        total += len(ch.encode("utf-8"))
    offsets[len(text)] = total
    return lambda i: offsets[i]


def _paragraph_spans(body: str) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    pos = 0
    start: int | None = None
    end = 0
    for line in body.splitlines(keepends=True):
        if line.strip():
            if start is None:
                start = pos
            end = pos + len(line)
        elif start is not None:
            spans.append((start, end))
            start = None
        pos += len(line)
    if start is not None:
        spans.append((start, end))
    trimmed = []
    for s, e in spans:
        while s < e and body[s].isspace():
            s += 1
        while e > s and body[e - 1].isspace():
            e -= 1
        if s < e:
            trimmed.append((s, e))
    return trimmed


def _is_abbreviation(body: str, dot_index: int, para_start: int, abbreviations: frozenset[str]) -> bool:
    start = dot_index
    while start > para_start and not body[start - 1].isspace():
        start -= 1
    return body[start : dot_index + 1].casefold() in abbreviations


def _sentence_spans(body: str, para: tuple[int, int], abbreviations: frozenset[str]) -> list[tuple[int, int]]:
    ps, pe = para
    boundaries: list[int] = []
    for i in range(ps, pe):
        ch = body[i]
        if ch not in _SENTENCE_TERMINATORS:
            continue
        k = i + 1
        while k < pe and body[k].isspace():
            k += 1
        at_end = k >= pe
        followed_by_upper = k > i + 1 and k < pe and body[k].isupper()
        if not (at_end or followed_by_upper):
            continue
        if ch == "." and _is_abbreviation(body, i, ps, abbreviations):
            continue
        boundaries.append(i + 1)
    spans = []
    prev = ps
    for b in boundaries + [pe]:
        s, e = prev, b
        while s < e and body[s].isspace():
            s += 1
        while e > s and body[e - 1].isspace():
            e -= 1
        if s < e:
            spans.append((s, e))
        prev = b
    return spans


def segment(article: Article, abbreviations: Iterable[str] | None = None) -> AnnotatedDoc:
    """Split an article body into paragraphs, sentences and tokens.

    Pure and deterministic: identical bodies produce identical structures.
    An empty body yields a doc with no paragraphs, sentences or tokens.
    """
    abbrevs = (
        frozenset(a.casefold() for a in abbreviations)
        if abbreviations is not None
        else DEFAULT_ABBREVIATIONS
    )
    body = article.body
    paragraphs = _paragraph_spans(body)
    sentences: list[tuple[int, int, int]] = []  # (start, end, paragraph_index)
    for p_idx, para in enumerate(paragraphs):
        for s, e in _sentence_spans(body, para, abbrevs):
            sentences.append((s, e, p_idx))

    tokens: list[Token] = []
    to_byte = _char_to_byte(body)
    sent_idx = 0
    for text, norm, cs, ce, stop, hint in _raw_tokens(body):
        while sent_idx < len(sentences) and sentences[sent_idx][1] <= cs:
            sent_idx += 1
        if sent_idx >= len(sentences) or not (
            sentences[sent_idx][0] <= cs and ce <= sentences[sent_idx][1]
        ):
            raise CorpusError(
                f"article {article.id}: token at {cs}..{ce} falls outside every sentence"
            )
        tokens.append(
            Token(text=text, norm=norm, start=to_byte(cs), end=to_byte(ce),
                  is_stopword=stop, pos_hint=hint, sentence_index=sent_idx)
        )

    return AnnotatedDoc(
        article_id=article.id,
        body=body,
        body_bytes=body.encode("utf-8"),
        paragraphs=[(to_byte(s), to_byte(e)) for s, e in paragraphs],
        sentences=[Sentence(to_byte(s), to_byte(e), p) for s, e, p in sentences],
        tokens=tokens,
    )


def is_utf8_boundary(data: bytes, offset: int) -> bool:
    """True when ``offset`` does not land inside a multi-byte sequence."""
    if offset <= 0 or offset >= len(data):
        return 0 <= offset <= len(data)
    return (data[offset] & 0xC0) != 0x80
