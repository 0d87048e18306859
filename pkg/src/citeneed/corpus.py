"""Wiki-markup parsing, sentence extraction and dataset construction.

Supported markup subset:

* inline citations: ``<ref>...</ref>``, ``<ref name=.../>`` and
  ``<ref name=...>...</ref>``
* citation-needed templates: ``{{citation needed}}``, ``{{cn}}``,
  ``{{fact}}`` (case-insensitive, with or without ``|param`` arguments)
* headings ``== Heading ==`` (levels 2 to 6)
* wikilinks ``[[target]]`` / ``[[target|label]]`` are rendered as their
  label, bold/italic quotes are removed and any other ``{{template}}`` is
  dropped.

Paragraphs are separated by blank lines.  Everything before the first
heading is the lead section.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .numerics import make_rng

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MIN_TOKENS = 3
QUALITY_CLASSES = ("featured", "other")
DATASETS = ("FA", "LQN", "RND")
REASONS = (
    "quotation",
    "statistics",
    "controversial",
    "opinion",
    "life",
    "scientific",
    "historical",
    "other",
)
LEAD_HEADING = ""

DEFAULT_ABBREVIATIONS = frozenset(
    """mr mrs ms dr prof st jr sr gen col lt sgt capt cpt maj adm rev hon gov sen rep
    pres mt ft no vol vols pp ed eds fig figs approx est inc ltd co corp bros dept univ
    vs etc e.g i.e cf al ca jan feb mar apr jun jul aug sep sept oct nov dec u.s u.k""".split()
)


class ParseError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class SchemaVersionError(ValueError):
    def __init__(self, found, expected=SCHEMA_VERSION):
        super().__init__(f"unsupported schema_version {found!r} (expected {expected})")
        self.found = found
        self.expected = expected


@dataclass(frozen=True)
class Statement:
    article_id: str
    section_heading: str
    is_lead: bool
    text: str
    tokens: tuple[str, ...]
    has_inline_citation: bool = False
    has_citation_needed_tag: bool = False


@dataclass
class Paragraph:
    statements: list[Statement]

    @property
    def has_any_citation(self) -> bool:
        return any(s.has_inline_citation for s in self.statements)


@dataclass
class Section:
    heading: str
    paragraphs: list[Paragraph] = field(default_factory=list)


@dataclass
class RawArticle:
    article_id: str
    title: str
    quality_class: str
    sections: list[Section]
    warnings: list[str] = field(default_factory=list)

    def statements(self) -> list[Statement]:
        return [s for sec in self.sections for p in sec.paragraphs for s in p.statements]

    @property
    def has_citation_needed(self) -> bool:
        return any(s.has_citation_needed_tag for s in self.statements())


@dataclass(frozen=True)
class LabeledInstance:
    statement: Statement
    label: str
    dataset: str


@dataclass(frozen=True)
class ReasonInstance:
    statement: Statement
    reason: str
    topic: str | None = None


# --------------------------------------------------------------------------
# tokenization and segmentation

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase; words are runs of Unicode word characters, every other
    non-space character is its own token."""
    text = unicodedata.normalize("NFC", text).lower()
    return tuple(_TOKEN_RE.findall(text))


_TERMINATORS = ".!?"
_CLOSERS = "\"'”’)]»"


def _sentence_spans(text: str, abbreviations=DEFAULT_ABBREVIATIONS) -> list[tuple[int, int]]:
    spans = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch in _TERMINATORS:
            j = i + 1
            while j < n and text[j] in _TERMINATORS:
                j += 1
            while j < n and text[j] in _CLOSERS:
                j += 1
            if j == n or text[j].isspace():
                k = j
                while k < n and text[k].isspace():
                    k += 1
                if k < n and text[k].islower():
                    i = j
                    continue
                if ch == "." and j == i + 1 and _is_abbreviation(text, start, i, abbreviations):
                    i = j
                    continue
                if text[start:j].strip():
                    spans.append((start, j))
                start = k
                i = k
                continue
            i = j
            continue
        i += 1
    if text[start:].strip():
        spans.append((start, n))
    return [_strip_span(text, a, b) for a, b in spans]


def _strip_span(text, a, b):
    while a < b and text[a].isspace():
        a += 1
    while b > a and text[b - 1].isspace():
        b -= 1
    return a, b


def _is_abbreviation(text: str, start: int, dot: int, abbreviations) -> bool:
    k = dot
    while k > start and not text[k - 1].isspace():
        k -= 1
    word = text[k:dot].lower().lstrip("(\"'“‘[")
    return word in abbreviations


def segment_sentences(paragraph_text: str, abbreviations=DEFAULT_ABBREVIATIONS) -> list[str]:
    """Split on ``.``, ``!`` and ``?`` followed by whitespace (or the end).

    A period does not end a sentence when the word before it is in the
    abbreviation guard list, and no terminator does when the next word
    starts lowercase.  Pass ``abbreviations=()`` to disable the guard.
    """
    return [paragraph_text[a:b] for a, b in _sentence_spans(paragraph_text, abbreviations)]


# --------------------------------------------------------------------------
# markup parsing

_HEADING_RE = re.compile(r"^(={2,6})\s*(.*?)\s*\1\s*$")
_REF_SELF_CLOSING = re.compile(r"<ref\b[^>]*/\s*>", re.IGNORECASE)
_REF_PAIR = re.compile(r"<ref\b[^>]*>.*?</ref\s*>", re.IGNORECASE | re.DOTALL)
_REF_OPEN = re.compile(r"<ref\b[^>]*>", re.IGNORECASE)
_REF_STRAY = re.compile(r"</?ref\b[^>]*>?", re.IGNORECASE)
_CN_NAMES = {"citation needed", "cn", "fact", "citation-needed", "citationneeded"}
_LINK_RE = re.compile(r"\[\[([^\[\]|]*)(?:\|([^\[\]]*))?\]\]")
_EMPHASIS_RE = re.compile(r"'{2,}")
_COMMENT_RE = re.compile(r"<!--.*?-->", re.DOTALL)

REF_MARK = "\ue000"
CN_MARK = "\ue001"


def _replace_templates(text: str, warnings: list[str]) -> str:
    """Replace citation-needed templates with CN_MARK and drop the others.

    Nested templates are handled with a depth counter; an unclosed ``{{``
    is dropped with a warning.
    """
    out = []
    i = 0
    n = len(text)
    while i < n:
        if text.startswith("{{", i):
            depth = 0
            j = i
            while j < n:
                if text.startswith("{{", j):
                    depth += 1
                    j += 2
                elif text.startswith("}}", j):
                    depth -= 1
                    j += 2
                    if depth == 0:
                        break
                else:
                    j += 1
            if depth != 0:
                warnings.append(f"unclosed template at offset {i}")
                i += 2
                continue
            name = text[i + 2 : j - 2].split("|", 1)[0].strip().lower()
            if name in _CN_NAMES:
                out.append(CN_MARK)
            i = j
        elif text.startswith("}}", i):
            warnings.append(f"unbalanced '}}}}' at offset {i}")
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def _replace_refs(text: str, warnings: list[str]) -> str:
    text = _REF_SELF_CLOSING.sub(REF_MARK, text)
    text = _REF_PAIR.sub(REF_MARK, text)
    opening = _REF_OPEN.search(text)
    if opening:
        # unclosed <ref>: its content runs to the end of the paragraph
        warnings.append(f"unclosed ref at offset {opening.start()}")
        text = text[: opening.start()]
    stray = _REF_STRAY.findall(text)
    if stray:
        warnings.append(f"dropped {len(stray)} unbalanced ref marker(s)")
        text = _REF_STRAY.sub("", text)
    return text


def _render_inline(text: str) -> str:
    text = _LINK_RE.sub(lambda m: m.group(2) if m.group(2) is not None else m.group(1), text)
    text = _EMPHASIS_RE.sub("", text)
    return text


def _strip_heading(raw: str) -> str:
    return re.sub(r"\s+", " ", _EMPHASIS_RE.sub("", _render_inline(raw))).strip()


def _parse_paragraph(raw: str, article_id: str, heading: str, is_lead: bool, warnings: list[str]) -> Paragraph:
    text = _COMMENT_RE.sub("", raw)
    text = _replace_refs(text, warnings)
    text = _replace_templates(text, warnings)
    text = _render_inline(text)

    # pull markers out, remembering where they sat in the clean text
    clean_chars = []
    markers = []
    for ch in text:
        if ch == REF_MARK or ch == CN_MARK:
            markers.append((len(clean_chars), ch))
        else:
            clean_chars.append(ch)
    clean = "".join(clean_chars)
    spans = _sentence_spans(clean)

    flags = [[False, False] for _ in spans]
    for offset, kind in markers:
        if not spans:
            break
        # a marker belongs to the last sentence starting before it
        owner = 0
        for si, (a, _) in enumerate(spans):
            if a < offset:
                owner = si
        flags[owner][0 if kind == REF_MARK else 1] = True

    statements = []
    for (a, b), (ref, cn) in zip(spans, flags):
        sentence = re.sub(r"\s+", " ", clean[a:b]).strip()
        tokens = tokenize(sentence)
        if len(tokens) < MIN_TOKENS:
            continue
        statements.append(
            Statement(
                article_id=article_id,
                section_heading=heading,
                is_lead=is_lead,
                text=sentence,
                tokens=tokens,
                has_inline_citation=ref,
                has_citation_needed_tag=cn,
            )
        )
    return Paragraph(statements)


def parse_article(markup: str, article_id: str, quality: str = "other", title: str = "") -> RawArticle:
    """Parse one article.  Recoverable problems are logged and kept in
    ``RawArticle.warnings``."""
    if not markup or not markup.strip():
        raise ParseError("empty article")
    if not article_id:
        raise ParseError("article_id must be non-empty")
    if quality not in QUALITY_CLASSES:
        raise ParseError(f"unknown quality class {quality!r}")
    warnings: list[str] = []
    sections = [Section(LEAD_HEADING)]
    buf: list[str] = []

    def flush():
        if buf:
            raw = " ".join(buf)
            sec = sections[-1]
            para = _parse_paragraph(raw, article_id, sec.heading, len(sections) == 1, warnings)
            if para.statements:
                sec.paragraphs.append(para)
            buf.clear()

    for line in markup.replace("\r\n", "\n").split("\n"):
        m = _HEADING_RE.match(line.strip())
        if m:
            flush()
            sections.append(Section(_strip_heading(m.group(2))))
        elif not line.strip():
            flush()
        else:
            buf.append(line.strip())
    flush()
    for w in warnings:
        log.warning("%s: %s", article_id, w)
    return RawArticle(article_id, title or article_id, quality, sections, warnings)


def render_article(article: RawArticle) -> str:
    """Inverse of :func:`parse_article` for the supported marker subset."""
    blocks = []
    for i, sec in enumerate(article.sections):
        if i > 0:
            blocks.append(f"== {sec.heading} ==")
        for para in sec.paragraphs:
            parts = []
            for s in para.statements:
                marks = ("<ref>cite</ref>" if s.has_inline_citation else "") + (
                    "{{citation needed}}" if s.has_citation_needed_tag else ""
                )
                parts.append(s.text + marks)
            blocks.append(" ".join(parts))
    return "\n\n".join(blocks) + "\n"


def parse_articles(records: Iterable[dict], workers: int = 1) -> list[RawArticle]:
    """Parse article records (``article_id``, ``markup``, optional ``title``
    and ``quality``); output is ordered by article_id whatever ``workers`` is."""
    records = list(records)
    ids = [r["article_id"] for r in records]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate article_id in input")

    def one(r):
        return parse_article(r["markup"], r["article_id"], r.get("quality", "other"), r.get("title", ""))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parsed = list(pool.map(one, records))
    else:
        parsed = [one(r) for r in records]
    return sorted(parsed, key=lambda a: a.article_id)


def read_articles(path) -> list[dict]:
    """Articles dump: JSONL with article_id, title, quality, markup."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            for key in ("article_id", "markup"):
                if key not in rec:
                    raise ParseError(f"{path}:{ln}: missing field {key!r}")
            out.append(rec)
    return out


# --------------------------------------------------------------------------
# dataset construction


def _candidates(articles: Sequence[RawArticle]):
    """Yield (statement, paragraph_has_citation) in deterministic order."""
    for art in sorted(articles, key=lambda a: a.article_id):
        for sec in art.sections:
            for para in sec.paragraphs:
                cited = para.has_any_citation
                for s in para.statements:
                    yield s, cited


def _is_negative(s: Statement, paragraph_cited: bool) -> bool:
    return not s.has_inline_citation and not s.has_citation_needed_tag and not paragraph_cited


def _sample(pool: list, n: int, rng, what: str) -> list:
    if n > len(pool):
        raise InsufficientDataError(f"requested {n} {what} instances but only {len(pool)} eligible")
    order = rng.permutation(len(pool))[:n]
    return [pool[i] for i in order]


def _build(articles, n_pos, n_neg, seed, dataset, positive_rule) -> list[LabeledInstance]:
    if n_pos < 0 or n_neg < 0:
        raise ValueError("counts must be non-negative")
    pos, neg = [], []
    for s, cited in _candidates(articles):
        if s.has_inline_citation and s.has_citation_needed_tag:
            continue
        if positive_rule(s):
            pos.append(s)
        elif _is_negative(s, cited):
            neg.append(s)
    rng = make_rng(seed)
    chosen_pos = _sample(pos, n_pos, rng, "positive")
    chosen_neg = _sample(neg, n_neg, rng, "negative")
    out = [LabeledInstance(s, "positive", dataset) for s in chosen_pos]
    out += [LabeledInstance(s, "negative", dataset) for s in chosen_neg]
    return [out[i] for i in rng.permutation(len(out))]


def build_fa_dataset(articles: Sequence[RawArticle], n_pos: int, n_neg: int, seed: int) -> list[LabeledInstance]:
    bad = [a.article_id for a in articles if a.quality_class != "featured"]
    if bad:
        raise ValueError(f"FA dataset needs featured articles; got non-featured {bad[:3]}")
    return _build(articles, n_pos, n_neg, seed, "FA", lambda s: s.has_inline_citation)


def build_lqn_dataset(articles: Sequence[RawArticle], n_pos: int, n_neg: int, seed: int) -> list[LabeledInstance]:
    tagged = [a for a in articles if a.has_citation_needed]
    return _build(tagged, n_pos, n_neg, seed, "LQN", lambda s: s.has_citation_needed_tag)


def build_rnd_dataset(articles: Sequence[RawArticle], n_total: int = 20000, seed: int = 0) -> list[LabeledInstance]:
    if n_total % 2:
        raise ValueError("n_total must be even")
    half = n_total // 2
    return _build(articles, half, half, seed, "RND", lambda s: s.has_inline_citation)


# --------------------------------------------------------------------------
# JSONL corpus files


def _statement_record(s: Statement) -> dict:
    return {
        "article_id": s.article_id,
        "section": s.section_heading,
        "is_lead": s.is_lead,
        "text": s.text,
        "tokens": list(s.tokens),
    }


def instance_to_record(inst) -> dict:
    rec = {"schema_version": SCHEMA_VERSION}
    rec.update(_statement_record(inst.statement))
    if isinstance(inst, ReasonInstance):
        rec["label"] = "positive"
        rec["dataset"] = "FA"
        rec["reason"] = inst.reason
        if inst.topic is not None:
            rec["topic"] = inst.topic
    else:
        rec["label"] = inst.label
        rec["dataset"] = inst.dataset
    return rec


def record_to_instance(rec: dict):
    version = rec.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(version)
    label = rec["label"]
    dataset = rec["dataset"]
    if label not in ("positive", "negative"):
        raise ValueError(f"bad label {label!r}")
    if dataset not in DATASETS:
        raise ValueError(f"bad dataset {dataset!r}")
    positive = label == "positive"
    stmt = Statement(
        article_id=rec["article_id"],
        section_heading=rec["section"],
        is_lead=bool(rec["is_lead"]),
        text=rec["text"],
        tokens=tuple(rec["tokens"]),
        has_inline_citation=positive and dataset != "LQN",
        has_citation_needed_tag=positive and dataset == "LQN",
    )
    if "reason" in rec:
        if rec["reason"] not in REASONS:
            raise ValueError(f"unknown reason {rec['reason']!r}")
        return ReasonInstance(stmt, rec["reason"], rec.get("topic"))
    return LabeledInstance(stmt, label, dataset)


def write_corpus(instances: Iterable, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False, sort_keys=False))
            fh.write("\n")


def read_corpus(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{ln}: invalid JSON ({exc})") from None
            try:
                out.append(record_to_instance(rec))
            except KeyError as exc:
                raise ValueError(f"{path}:{ln}: missing field {exc}") from None
    return out


def validate_dataset(instances: Sequence[LabeledInstance]) -> list[str]:
    """Return a list of invariant violations (empty when the dataset is sound)."""
    problems = []
    seen = set()
    for i, inst in enumerate(instances):
        s = inst.statement
        key = (s.article_id, s.section_heading, s.text)
        if key in seen:
            problems.append(f"#{i}: duplicate statement")
        seen.add(key)
        if s.has_inline_citation and s.has_citation_needed_tag:
            problems.append(f"#{i}: both citation and citation-needed flags")
        if inst.label == "positive":
            ok = s.has_citation_needed_tag if inst.dataset == "LQN" else s.has_inline_citation
            if not ok:
                problems.append(f"#{i}: positive without the required marker")
        elif s.has_inline_citation or s.has_citation_needed_tag:
            problems.append(f"#{i}: negative carries a marker")
    return problems


def with_reason(inst: LabeledInstance, reason: str, topic: str | None = None) -> ReasonInstance:
    if reason not in REASONS:
        raise ValueError(f"unknown reason {reason!r}")
    return ReasonInstance(replace(inst.statement), reason, topic)
